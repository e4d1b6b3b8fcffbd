//! Order-book message parsing, replay and the derived inputs to calibration.
//!
//! Input lines have the form `timestamp_sec,kind,order_id,size,price_ticks,side`
//! with kind one of `S, M, C, EV, EH, H` and side `B` or `A`. The side of an
//! execution is the side of the resting order it hits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::calibration::{ImbalanceSample, LevelStats, MidMove};
use crate::error::{Error, Result};
use crate::hawkes::EventTimes;
use crate::units::TRADING_DAY_SECONDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn code(self) -> &'static str {
        match self {
            Side::Bid => "B",
            Side::Ask => "A",
        }
    }

    fn index(self) -> usize {
        match self {
            Side::Bid => 0,
            Side::Ask => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Submit,
    Modify,
    Cancel,
    ExecuteVisible,
    ExecuteHidden,
    Halt,
}

impl EventKind {
    pub fn code(self) -> &'static str {
        match self {
            EventKind::Submit => "S",
            EventKind::Modify => "M",
            EventKind::Cancel => "C",
            EventKind::ExecuteVisible => "EV",
            EventKind::ExecuteHidden => "EH",
            EventKind::Halt => "H",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "S" => EventKind::Submit,
            "M" => EventKind::Modify,
            "C" => EventKind::Cancel,
            "EV" => EventKind::ExecuteVisible,
            "EH" => EventKind::ExecuteHidden,
            "H" => EventKind::Halt,
            _ => return None,
        })
    }
}

/// One order-book message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BookEvent {
    /// Seconds from session open.
    pub timestamp: f64,
    pub kind: EventKind,
    pub order_id: u64,
    /// Shares; for `M` the new total size, for `C` the cancelled amount.
    pub size: u64,
    pub price: i64,
    pub side: Side,
}

impl BookEvent {
    /// Hidden executions and halts do not enter any statistic.
    pub fn excluded(&self) -> bool {
        matches!(self.kind, EventKind::ExecuteHidden | EventKind::Halt)
    }
}

impl fmt::Display for BookEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.timestamp,
            self.kind.code(),
            self.order_id,
            self.size,
            self.price,
            self.side.code()
        )
    }
}

/// Parses one line; blank lines, `#` comments and a header return `None`.
pub fn parse_line(line: &str, line_no: usize) -> Result<Option<BookEvent>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("timestamp") {
        return Ok(None);
    }
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(err(format!("expected 6 fields, found {}", fields.len())));
    }
    let timestamp: f64 = fields[0]
        .parse()
        .map_err(|_| err(format!("bad timestamp `{}`", fields[0])))?;
    if !timestamp.is_finite() {
        return Err(err(format!("bad timestamp `{}`", fields[0])));
    }
    let kind = EventKind::parse(fields[1]).ok_or_else(|| err(format!("unknown kind `{}`", fields[1])))?;
    let halt = kind == EventKind::Halt;
    let int_field = |i: usize, name: &str| -> Result<i64> {
        if halt && fields[i].is_empty() {
            return Ok(0);
        }
        fields[i]
            .parse::<i64>()
            .map_err(|_| err(format!("bad {name} `{}`", fields[i])))
    };
    let order_id = int_field(2, "order id")?;
    let size = int_field(3, "size")?;
    let price = int_field(4, "price")?;
    if order_id < 0 {
        return Err(err(format!("negative order id {order_id}")));
    }
    if size < 0 || (size == 0 && !halt && kind != EventKind::Modify) {
        return Err(err(format!("size must be positive, got {size}")));
    }
    let side = match fields[5] {
        "B" => Side::Bid,
        "A" => Side::Ask,
        "" if halt => Side::Bid,
        other => return Err(err(format!("unknown side `{other}`"))),
    };
    Ok(Some(BookEvent {
        timestamp,
        kind,
        order_id: order_id as u64,
        size: size as u64,
        price,
        side,
    }))
}

/// Streams events from a reader, checking that timestamps never decrease.
pub struct EventReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    previous: f64,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            previous: f64::NEG_INFINITY,
        }
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<BookEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            match parse_line(&line, self.line_no) {
                Ok(None) => continue,
                Ok(Some(ev)) => {
                    if ev.timestamp < self.previous {
                        return Some(Err(Error::OutOfOrder {
                            line: self.line_no,
                            timestamp: ev.timestamp,
                            previous: self.previous,
                        }));
                    }
                    self.previous = ev.timestamp;
                    return Some(Ok(ev));
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Parses a whole stream into memory.
pub fn parse_stream<R: BufRead>(reader: R) -> Result<Vec<BookEvent>> {
    EventReader::new(reader).collect()
}

pub fn parse_str(text: &str) -> Result<Vec<BookEvent>> {
    parse_stream(text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Order {
    side: Side,
    price: i64,
    size: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PriceLevel {
    shares: u64,
    orders: u64,
}

/// Reconstructed limit-order book.
#[derive(Debug, Clone, Default)]
pub struct BookState {
    ladders: [BTreeMap<i64, PriceLevel>; 2],
    orders: HashMap<u64, Order>,
}

impl BookState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<i64> {
        self.ladders[0].keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.ladders[1].keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<i64> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    /// `(best bid + best ask) / 2` in ticks, when both sides are populated.
    pub fn mid(&self) -> Option<f64> {
        Some((self.best_bid()? + self.best_ask()?) as f64 / 2.0)
    }

    /// Shares resting at `price` on `side`.
    pub fn depth(&self, side: Side, price: i64) -> u64 {
        self.ladders[side.index()]
            .get(&price)
            .map_or(0, |l| l.shares)
    }

    pub fn order_count(&self) -> usize {
        self.orders.len()
    }

    /// Level of `price` counted from the same-side best (best = 1).
    pub fn level_of(&self, side: Side, price: i64) -> usize {
        level_from(self.best(side), side, price)
    }

    fn add(&mut self, id: u64, order: Order) {
        let lvl = self.ladders[order.side.index()].entry(order.price).or_default();
        lvl.shares += order.size;
        lvl.orders += 1;
        self.orders.insert(id, order);
    }

    /// Removes `amount` shares from the order, deleting it when exhausted.
    /// Returns the shares actually removed.
    fn reduce(&mut self, id: u64, amount: u64) -> u64 {
        let Some(order) = self.orders.get_mut(&id) else {
            return 0;
        };
        let taken = amount.min(order.size);
        order.size -= taken;
        let (side, price, gone) = (order.side, order.price, order.size == 0);
        let ladder = &mut self.ladders[side.index()];
        if let Some(lvl) = ladder.get_mut(&price) {
            lvl.shares -= taken;
            if gone {
                lvl.orders -= 1;
            }
            if lvl.orders == 0 {
                ladder.remove(&price);
            }
        }
        if gone {
            self.orders.remove(&id);
        }
        taken
    }

    /// Orders resting at each of the first `levels` tick distances from the best.
    fn orders_by_level(&self, side: Side, levels: usize, out: &mut [u64]) {
        out.iter_mut().for_each(|v| *v = 0);
        let Some(best) = self.best(side) else {
            return;
        };
        let span = levels as i64 - 1;
        let ladder = &self.ladders[side.index()];
        let range = match side {
            Side::Bid => ladder.range(best - span..=best),
            Side::Ask => ladder.range(best..=best + span),
        };
        for (&price, lvl) in range {
            out[level_from(Some(best), side, price) - 1] = lvl.orders;
        }
    }
}

fn level_from(best: Option<i64>, side: Side, price: i64) -> usize {
    let Some(best) = best else {
        return 1;
    };
    let distance = match side {
        Side::Bid => best - price,
        Side::Ask => price - best,
    };
    (distance.max(0) + 1) as usize
}

/// `[start, end)` in seconds from session open over which statistics are taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionWindow {
    pub start: f64,
    pub end: f64,
}

impl Default for SessionWindow {
    fn default() -> Self {
        Self {
            start: 0.0,
            end: TRADING_DAY_SECONDS,
        }
    }
}

impl SessionWindow {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// How the imbalance attached to a sampling window is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceMemory {
    /// Sells minus buys since session start.
    #[default]
    Cumulative,
    /// Sells minus buys over the preceding window only.
    PerWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub session: SessionWindow,
    /// Sampling window, seconds.
    pub window: f64,
    pub memory: ImbalanceMemory,
    /// Deepest level for which statistics are kept.
    pub max_levels: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            session: SessionWindow::default(),
            window: 1.0,
            memory: ImbalanceMemory::Cumulative,
            max_levels: 10,
        }
    }
}

impl ReplayConfig {
    fn validate(&self) -> Result<()> {
        if !(self.session.end > self.session.start) {
            return Err(Error::Config(format!(
                "empty session [{}, {})",
                self.session.start, self.session.end
            )));
        }
        if !(self.window > 0.0) {
            return Err(Error::Config(format!("window must be positive, got {}", self.window)));
        }
        if self.max_levels == 0 {
            return Err(Error::Config("max_levels must be positive".into()));
        }
        Ok(())
    }

    fn n_windows(&self) -> usize {
        (self.session.length() / self.window - 1e-9).ceil().max(0.0) as usize
    }
}

/// Aggressor direction of a market order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Buy,
    Sell,
}

/// Same-timestamp visible executions against one side, merged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketOrder {
    pub time: f64,
    pub direction: Direction,
    pub size: u64,
    /// Deepest level reached, counted from the best at the start of the sweep.
    pub deepest_level: usize,
    pub executions: usize,
}

/// Per-level event counts over the session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelCounts {
    pub side: Side,
    pub level: usize,
    pub submissions: u64,
    pub cancellations: u64,
    /// One per market order touching the level.
    pub executions: u64,
}

/// Anomalies met during replay; none of them are fatal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReplayDiagnostics {
    pub events: usize,
    pub excluded: usize,
    pub orphans: usize,
    pub duplicate_ids: usize,
    pub oversized: usize,
    pub crossed: usize,
}

/// Everything calibration needs from one replayed stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedStreams {
    pub session: SessionWindow,
    pub market_orders: Vec<MarketOrder>,
    pub bid_levels: Vec<LevelStats>,
    pub ask_levels: Vec<LevelStats>,
    pub level_counts: Vec<LevelCounts>,
    pub imbalance: Vec<ImbalanceSample>,
    pub n_windows: usize,
    /// Sum of `|mid change|` over windows with a change, ticks.
    pub total_mid_change: f64,
    pub diagnostics: ReplayDiagnostics,
}

/// Average mid-price move and market-order size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowScalars {
    /// Mean `|mid change|`, ticks.
    pub z_bar: f64,
    /// Mean market-order size, shares.
    pub l_bar: f64,
    pub n_market_orders: usize,
    pub n_mid_changes: usize,
}

impl DerivedStreams {
    /// Market-order times for one direction, relative to session start.
    pub fn times(&self, direction: Direction) -> Vec<f64> {
        self.market_orders
            .iter()
            .filter(|m| m.direction == direction)
            .map(|m| m.time - self.session.start)
            .collect()
    }

    /// Market-order arrivals of one direction on `[0, session length]`.
    pub fn event_times(&self, direction: Direction) -> Result<EventTimes> {
        EventTimes::new(self.times(direction), self.session.length())
    }

    pub fn levels(&self, side: Side) -> &[LevelStats] {
        match side {
            Side::Bid => &self.bid_levels,
            Side::Ask => &self.ask_levels,
        }
    }

    pub fn flow_scalars(&self) -> Result<FlowScalars> {
        if self.market_orders.is_empty() {
            return Err(Error::InsufficientData("no visible executions".into()));
        }
        if self.imbalance.is_empty() {
            return Err(Error::InsufficientData("no mid-price changes".into()));
        }
        let n = self.market_orders.len();
        let shares: u64 = self.market_orders.iter().map(|m| m.size).sum();
        Ok(FlowScalars {
            z_bar: self.total_mid_change / self.imbalance.len() as f64,
            l_bar: shares as f64 / n as f64,
            n_market_orders: n,
            n_mid_changes: self.imbalance.len(),
        })
    }
}

#[derive(Debug, Clone)]
struct Sweep {
    time: f64,
    start_best: Option<i64>,
    size: u64,
    executions: usize,
    deepest: usize,
    touched: Vec<usize>,
    event_indices: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct LevelAccumulator {
    submissions: Vec<u64>,
    submitted_shares: Vec<f64>,
    cancellations: Vec<u64>,
    executions: Vec<u64>,
    /// Integral of the number of resting orders, order-seconds.
    resting: Vec<f64>,
}

impl LevelAccumulator {
    fn new(levels: usize) -> Self {
        Self {
            submissions: vec![0; levels],
            submitted_shares: vec![0.0; levels],
            cancellations: vec![0; levels],
            executions: vec![0; levels],
            resting: vec![0.0; levels],
        }
    }
}

/// Incremental replay; feed events in order with [`Replayer::push`].
pub struct Replayer {
    config: ReplayConfig,
    book: BookState,
    levels: [LevelAccumulator; 2],
    scratch: Vec<u64>,
    integrated_to: f64,
    previous_time: f64,
    sweeps: [Option<Sweep>; 2],
    market_orders: Vec<MarketOrder>,
    sells: u64,
    buys: u64,
    window_sells: u64,
    window_buys: u64,
    opened: bool,
    next_window: usize,
    n_windows: usize,
    mid_prev: Option<f64>,
    delta_at_open: f64,
    imbalance: Vec<ImbalanceSample>,
    total_mid_change: f64,
    diagnostics: ReplayDiagnostics,
    tags: Option<Vec<Option<usize>>>,
}

impl Replayer {
    pub fn new(config: ReplayConfig) -> Result<Self> {
        config.validate()?;
        let l = config.max_levels;
        Ok(Self {
            config,
            book: BookState::new(),
            levels: [LevelAccumulator::new(l), LevelAccumulator::new(l)],
            scratch: vec![0; l],
            integrated_to: config.session.start,
            previous_time: f64::NEG_INFINITY,
            sweeps: [None, None],
            market_orders: Vec::new(),
            sells: 0,
            buys: 0,
            window_sells: 0,
            window_buys: 0,
            opened: false,
            next_window: 0,
            n_windows: config.n_windows(),
            mid_prev: None,
            delta_at_open: 0.0,
            imbalance: Vec::new(),
            total_mid_change: 0.0,
            diagnostics: ReplayDiagnostics::default(),
            tags: None,
        })
    }

    /// Also records a level tag for every pushed event.
    pub fn with_tags(mut self) -> Self {
        self.tags = Some(Vec::new());
        self
    }

    pub fn book(&self) -> &BookState {
        &self.book
    }

    pub fn push(&mut self, ev: &BookEvent) -> Result<()> {
        if ev.timestamp < self.previous_time {
            return Err(Error::OutOfOrder {
                line: self.diagnostics.events + 1,
                timestamp: ev.timestamp,
                previous: self.previous_time,
            });
        }
        let t = ev.timestamp;
        self.previous_time = t;
        let index = self.diagnostics.events;
        self.diagnostics.events += 1;
        if let Some(tags) = self.tags.as_mut() {
            tags.push(None);
        }

        for side in [Side::Bid, Side::Ask] {
            if self.sweeps[side.index()].as_ref().is_some_and(|s| s.time < t) {
                self.finish_sweep(side);
            }
        }
        self.advance_windows(t);
        self.integrate_to(t);

        if ev.excluded() {
            self.diagnostics.excluded += 1;
            return Ok(());
        }
        let in_session = self.config.session.contains(t);
        match ev.kind {
            EventKind::Submit => {
                if self.book.orders.contains_key(&ev.order_id) {
                    self.diagnostics.duplicate_ids += 1;
                    return Ok(());
                }
                let level = self.book.level_of(ev.side, ev.price);
                self.tag(index, level);
                if in_session {
                    self.count_submission(ev.side, level, ev.size);
                }
                self.book.add(
                    ev.order_id,
                    Order {
                        side: ev.side,
                        price: ev.price,
                        size: ev.size,
                    },
                );
            }
            EventKind::Cancel => {
                let Some(order) = self.book.orders.get(&ev.order_id).copied() else {
                    self.diagnostics.orphans += 1;
                    return Ok(());
                };
                let level = self.book.level_of(order.side, order.price);
                self.tag(index, level);
                if in_session {
                    self.count_cancellation(order.side, level);
                }
                if ev.size > order.size {
                    self.diagnostics.oversized += 1;
                }
                self.book.reduce(ev.order_id, ev.size);
            }
            EventKind::Modify => {
                let Some(order) = self.book.orders.get(&ev.order_id).copied() else {
                    self.diagnostics.orphans += 1;
                    return Ok(());
                };
                let old_level = self.book.level_of(order.side, order.price);
                self.book.reduce(ev.order_id, order.size);
                let new_level = if ev.size > 0 {
                    let lvl = self.book.level_of(order.side, ev.price);
                    self.book.add(
                        ev.order_id,
                        Order {
                            side: order.side,
                            price: ev.price,
                            size: ev.size,
                        },
                    );
                    lvl
                } else {
                    old_level
                };
                self.tag(index, new_level);
                if in_session {
                    if ev.size < order.size {
                        self.count_cancellation(order.side, old_level);
                    } else if ev.size > order.size {
                        self.count_submission(order.side, new_level, ev.size - order.size);
                    }
                }
            }
            EventKind::ExecuteVisible => {
                let Some(order) = self.book.orders.get(&ev.order_id).copied() else {
                    self.diagnostics.orphans += 1;
                    return Ok(());
                };
                let side = order.side;
                let sweep = self.sweeps[side.index()].get_or_insert_with(|| Sweep {
                    time: t,
                    start_best: self.book.best(side),
                    size: 0,
                    executions: 0,
                    deepest: 1,
                    touched: Vec::new(),
                    event_indices: Vec::new(),
                });
                let level = level_from(sweep.start_best, side, order.price);
                sweep.deepest = sweep.deepest.max(level);
                if !sweep.touched.contains(&level) {
                    sweep.touched.push(level);
                }
                sweep.executions += 1;
                sweep.event_indices.push(index);
                if ev.size > order.size {
                    self.diagnostics.oversized += 1;
                }
                sweep.size += self.book.reduce(ev.order_id, ev.size);
            }
            EventKind::ExecuteHidden | EventKind::Halt => unreachable!(),
        }
        if let (Some(b), Some(a)) = (self.book.best_bid(), self.book.best_ask()) {
            if b >= a {
                self.diagnostics.crossed += 1;
            }
        }
        // A book built at the session open gives the first window its baseline.
        if self.opened && self.mid_prev.is_none() {
            self.mid_prev = self.book.mid();
        }
        Ok(())
    }

    fn tag(&mut self, index: usize, level: usize) {
        if let Some(tags) = self.tags.as_mut() {
            tags[index] = Some(level);
        }
    }

    fn count_submission(&mut self, side: Side, level: usize, size: u64) {
        if level <= self.config.max_levels {
            let acc = &mut self.levels[side.index()];
            acc.submissions[level - 1] += 1;
            acc.submitted_shares[level - 1] += size as f64;
        }
    }

    fn count_cancellation(&mut self, side: Side, level: usize) {
        if level <= self.config.max_levels {
            self.levels[side.index()].cancellations[level - 1] += 1;
        }
    }

    fn finish_sweep(&mut self, side: Side) {
        let Some(sweep) = self.sweeps[side.index()].take() else {
            return;
        };
        if let Some(tags) = self.tags.as_mut() {
            for &i in &sweep.event_indices {
                tags[i] = Some(sweep.deepest);
            }
        }
        if !self.config.session.contains(sweep.time) || sweep.size == 0 {
            return;
        }
        let acc = &mut self.levels[side.index()];
        for &lvl in &sweep.touched {
            if lvl <= self.config.max_levels {
                acc.executions[lvl - 1] += 1;
            }
        }
        let direction = match side {
            Side::Bid => Direction::Sell,
            Side::Ask => Direction::Buy,
        };
        match direction {
            Direction::Sell => {
                self.sells += 1;
                self.window_sells += 1;
            }
            Direction::Buy => {
                self.buys += 1;
                self.window_buys += 1;
            }
        }
        self.market_orders.push(MarketOrder {
            time: sweep.time,
            direction,
            size: sweep.size,
            deepest_level: sweep.deepest,
            executions: sweep.executions,
        });
    }

    fn window_end(&self, k: usize) -> f64 {
        let s = self.config.session;
        (s.start + (k + 1) as f64 * self.config.window).min(s.end)
    }

    /// Closes every sampling window that ends at or before `t`.
    fn advance_windows(&mut self, t: f64) {
        if !self.opened {
            if t < self.config.session.start {
                return;
            }
            self.opened = true;
            self.mid_prev = self.book.mid();
            self.delta_at_open = 0.0;
            self.window_sells = 0;
            self.window_buys = 0;
        }
        while self.next_window < self.n_windows && self.window_end(self.next_window) <= t {
            let k = self.next_window;
            let mid = self.book.mid();
            if let (Some(now), Some(prev)) = (mid, self.mid_prev) {
                if now != prev {
                    self.total_mid_change += (now - prev).abs();
                    self.imbalance.push(ImbalanceSample {
                        window: k,
                        delta: self.delta_at_open,
                        mid_move: if now < prev { MidMove::Down } else { MidMove::Up },
                    });
                }
            }
            if mid.is_some() {
                self.mid_prev = mid;
            }
            self.delta_at_open = match self.config.memory {
                ImbalanceMemory::Cumulative => self.sells as f64 - self.buys as f64,
                ImbalanceMemory::PerWindow => self.window_sells as f64 - self.window_buys as f64,
            };
            self.window_sells = 0;
            self.window_buys = 0;
            self.next_window += 1;
        }
    }

    /// Accumulates resting-order time per level up to `t`, within the session.
    fn integrate_to(&mut self, t: f64) {
        let s = self.config.session;
        let upto = t.min(s.end);
        if upto <= self.integrated_to {
            return;
        }
        let dt = upto - self.integrated_to;
        for side in [Side::Bid, Side::Ask] {
            self.book
                .orders_by_level(side, self.config.max_levels, &mut self.scratch);
            let acc = &mut self.levels[side.index()];
            for (r, &n) in acc.resting.iter_mut().zip(&self.scratch) {
                *r += n as f64 * dt;
            }
        }
        self.integrated_to = upto;
    }

    /// Level tags of all pushed events; `None` for events that carry none.
    pub fn tags(&self) -> Option<&[Option<usize>]> {
        self.tags.as_deref()
    }

    pub fn finish(mut self) -> DerivedStreams {
        self.finish_sweep(Side::Bid);
        self.finish_sweep(Side::Ask);
        let end = self.config.session.end;
        self.advance_windows(end.max(self.previous_time));
        self.integrate_to(end);
        let length = self.config.session.length();
        let stats = |acc: &LevelAccumulator| -> Vec<LevelStats> {
            (0..self.config.max_levels)
                .map(|i| LevelStats {
                    level: i + 1,
                    mu_plus: acc.submissions[i] as f64 / length,
                    mu_minus: if acc.resting[i] > 0.0 {
                        acc.cancellations[i] as f64 / acc.resting[i]
                    } else {
                        0.0
                    },
                    mean_size: if acc.submissions[i] > 0 {
                        acc.submitted_shares[i] / acc.submissions[i] as f64
                    } else {
                        0.0
                    },
                    offset: (i + 1) as f64,
                })
                .collect()
        };
        let mut level_counts = Vec::new();
        for side in [Side::Bid, Side::Ask] {
            let acc = &self.levels[side.index()];
            for i in 0..self.config.max_levels {
                level_counts.push(LevelCounts {
                    side,
                    level: i + 1,
                    submissions: acc.submissions[i],
                    cancellations: acc.cancellations[i],
                    executions: acc.executions[i],
                });
            }
        }
        DerivedStreams {
            session: self.config.session,
            market_orders: self.market_orders,
            bid_levels: stats(&self.levels[0]),
            ask_levels: stats(&self.levels[1]),
            level_counts,
            imbalance: self.imbalance,
            n_windows: self.n_windows,
            total_mid_change: self.total_mid_change,
            diagnostics: self.diagnostics,
        }
    }
}

/// Replays events from the start of the session.
pub fn replay<'a>(
    events: impl IntoIterator<Item = &'a BookEvent>,
    config: ReplayConfig,
) -> Result<DerivedStreams> {
    let mut r = Replayer::new(config)?;
    for ev in events {
        r.push(ev)?;
    }
    Ok(r.finish())
}

/// Parses and replays a reader without holding the whole stream in memory.
pub fn replay_reader<R: BufRead>(reader: R, config: ReplayConfig) -> Result<DerivedStreams> {
    let mut r = Replayer::new(config)?;
    for ev in EventReader::new(reader) {
        r.push(&ev?)?;
    }
    Ok(r.finish())
}

/// Level of every event at the time it occurred; executions carry the
/// deepest level of their sweep.
pub fn classify_levels(events: &[BookEvent], config: ReplayConfig) -> Result<Vec<Option<usize>>> {
    let mut r = Replayer::new(config)?.with_tags();
    for ev in events {
        r.push(ev)?;
    }
    r.finish_sweep(Side::Bid);
    r.finish_sweep(Side::Ask);
    Ok(r.tags.unwrap_or_default())
}

pub fn write_level_stats<W: Write>(w: &mut W, streams: &DerivedStreams) -> Result<()> {
    writeln!(w, "side\tlevel\tmu_plus\tmu_minus\tmean_size\tq\toffset")?;
    for side in [Side::Bid, Side::Ask] {
        for l in streams.levels(side) {
            let q = l.q().map_or_else(|| "nan".to_string(), |q| q.to_string());
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                side.code(),
                l.level,
                l.mu_plus,
                l.mu_minus,
                l.mean_size,
                q,
                l.offset
            )?;
        }
    }
    Ok(())
}

pub fn write_level_counts<W: Write>(w: &mut W, streams: &DerivedStreams) -> Result<()> {
    writeln!(w, "side\tlevel\tsubmissions\tcancellations\texecutions")?;
    for c in &streams.level_counts {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            c.side.code(),
            c.level,
            c.submissions,
            c.cancellations,
            c.executions
        )?;
    }
    Ok(())
}

pub fn write_imbalance<W: Write>(w: &mut W, samples: &[ImbalanceSample]) -> Result<()> {
    writeln!(w, "window\tdelta\tmove")?;
    for s in samples {
        let m = match s.mid_move {
            MidMove::Down => "down",
            MidMove::Up => "up",
        };
        writeln!(w, "{}\t{}\t{}", s.window, s.delta, m)?;
    }
    Ok(())
}

pub fn write_market_orders<W: Write>(w: &mut W, orders: &[MarketOrder]) -> Result<()> {
    writeln!(w, "time\tdirection\tsize\tdeepest_level\texecutions")?;
    for m in orders {
        let d = match m.direction {
            Direction::Buy => "buy",
            Direction::Sell => "sell",
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            m.time, d, m.size, m.deepest_level, m.executions
        )?;
    }
    Ok(())
}

pub fn write_event_times<W: Write>(w: &mut W, times: &[f64]) -> Result<()> {
    writeln!(w, "time")?;
    for t in times {
        writeln!(w, "{t}")?;
    }
    Ok(())
}
