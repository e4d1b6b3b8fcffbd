//! Synthetic order-book streams from the queueing, Hawkes and logistic
//! mid-price model, with ground truth for end-to-end checks.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::calibration::{logistic, MidMove};
use crate::error::{ensure, Error, Result};
use crate::hawkes::{simulate_with_exogenous, HawkesParameters, TaggedEvent};
use crate::lob::{BookEvent, Direction, EventKind, ImbalanceMemory, Side};
use crate::strategy::TradingSchedule;

/// Limit-order flow at one level (both sides use the same flow).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelFlow {
    /// Submissions per second.
    pub mu_plus: f64,
    /// Cancellation rate per resting order, 1/second.
    pub mu_minus: f64,
    /// Mean order size, shares.
    pub mean_size: f64,
}

impl LevelFlow {
    /// Stationary expected shares, `V mu+ / mu-`.
    pub fn expected_depth(&self) -> f64 {
        self.mean_size * self.mu_plus / self.mu_minus
    }
}

/// Law of the mid-price monitoring epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorLaw {
    #[default]
    Poisson,
    /// Epochs at `k / rate`, matching one-second window sampling.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    /// Market sells (hitting bids); `None` disables them.
    pub sell: Option<HawkesParameters>,
    /// Market buys (lifting asks).
    pub buy: Option<HawkesParameters>,
    /// Mean market-order size, shares.
    pub market_order_size: f64,
    /// Flow per level, best first.
    pub levels: Vec<LevelFlow>,
    /// Monitoring epochs per second; zero disables mid changes.
    pub monitor_rate: f64,
    #[serde(default)]
    pub monitor_law: MonitorLaw,
    pub b0: f64,
    pub b1: f64,
    #[serde(default)]
    pub memory: ImbalanceMemory,
    pub tick_size: f64,
    /// Best bid at the open, ticks; the best ask is one tick higher.
    pub initial_bid: i64,
    pub session_length: f64,
    pub seed: u64,
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        for p in [self.sell, self.buy].into_iter().flatten() {
            p.validate()?;
        }
        ensure(!self.levels.is_empty(), "levels", || "at least one level".into())?;
        for l in &self.levels {
            ensure(
                l.mu_plus >= 0.0 && l.mu_minus >= 0.0 && l.mu_plus.is_finite() && l.mu_minus.is_finite(),
                "levels",
                || format!("rates must be nonnegative: {l:?}"),
            )?;
            ensure(l.mean_size >= 1.0, "levels", || {
                format!("mean size must be at least one share: {l:?}")
            })?;
        }
        ensure(self.market_order_size >= 1.0, "market_order_size", || {
            format!("must be at least one share, got {}", self.market_order_size)
        })?;
        ensure(
            self.monitor_rate.is_finite() && self.monitor_rate >= 0.0,
            "monitor_rate",
            || format!("must be nonnegative, got {}", self.monitor_rate),
        )?;
        ensure(self.tick_size > 0.0, "tick_size", || "must be positive".into())?;
        ensure(
            self.session_length.is_finite() && self.session_length > 0.0,
            "session_length",
            || format!("must be positive, got {}", self.session_length),
        )?;
        Ok(())
    }
}

/// What the generator actually did, for comparison with estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    /// Level of each emitted event: submissions and cancels carry their
    /// order's level, executions the deepest level of their sweep, modifies none.
    pub levels: Vec<Option<usize>>,
    /// Executed market orders `[sell, buy]`, trader orders included.
    pub market_orders: [u64; 2],
    pub trader_orders: u64,
    pub trader_shares: u64,
    pub mid_moves: Vec<(f64, MidMove, f64)>,
    /// Best bid at the open and at the close, ticks.
    pub initial_bid: i64,
    pub final_bid: i64,
    /// Time-averaged shares per level, `[bid, ask]`.
    pub mean_depth: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedStream {
    pub events: Vec<BookEvent>,
    pub truth: GroundTruth,
}

const STREAM_SELL: u64 = 1;
const STREAM_BUY: u64 = 2;
const STREAM_MONITOR: u64 = 3;
const STREAM_MOVES: u64 = 4;
const STREAM_MARKET_SIZES: u64 = 5;
const STREAM_LEVELS: u64 = 16;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn exp_sample<R: Rng>(rate: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        Exp::new(rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

/// `1 + Geometric(1/mean)`, which has the requested mean.
fn size_sample<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 1.0 {
        return 1;
    }
    1 + Geometric::new(1.0 / mean).expect("valid probability").sample(rng)
}

#[derive(Debug, Clone, Copy)]
struct SimOrder {
    side: Side,
    level: usize,
    size: u64,
}

struct LevelProcess {
    rng: ChaCha8Rng,
    next: f64,
}

struct Engine<'a> {
    spec: &'a MarketSpec,
    bid: i64,
    orders: HashMap<u64, SimOrder>,
    queues: [Vec<VecDeque<u64>>; 2],
    shares: [Vec<u64>; 2],
    depth_integral: Vec<[f64; 2]>,
    last_time: f64,
    cancels: BinaryHeap<Reverse<(u64, u64)>>,
    next_id: u64,
    events: Vec<BookEvent>,
    levels: Vec<Option<usize>>,
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Bid => 0,
        Side::Ask => 1,
    }
}

impl Engine<'_> {
    fn price(&self, side: Side, level: usize) -> i64 {
        match side {
            Side::Bid => self.bid - (level as i64 - 1),
            Side::Ask => self.bid + 1 + (level as i64 - 1),
        }
    }

    fn emit(&mut self, ev: BookEvent, level: Option<usize>) {
        self.events.push(ev);
        self.levels.push(level);
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.last_time;
        if dt > 0.0 {
            for (i, acc) in self.depth_integral.iter_mut().enumerate() {
                acc[0] += self.shares[0][i] as f64 * dt;
                acc[1] += self.shares[1][i] as f64 * dt;
            }
            self.last_time = t;
        }
    }

    fn submit(&mut self, t: f64, side: Side, level: usize, size: u64, lifetime: f64) {
        let id = self.next_id;
        self.next_id += 1;
        self.orders.insert(id, SimOrder { side, level, size });
        let s = side_index(side);
        self.queues[s][level - 1].push_back(id);
        self.shares[s][level - 1] += size;
        if lifetime.is_finite() {
            self.cancels.push(Reverse(((t + lifetime).to_bits(), id)));
        }
        let price = self.price(side, level);
        self.emit(
            BookEvent {
                timestamp: t,
                kind: EventKind::Submit,
                order_id: id,
                size,
                price,
                side,
            },
            Some(level),
        );
    }

    fn remove(&mut self, id: u64) -> Option<SimOrder> {
        let order = self.orders.remove(&id)?;
        let s = side_index(order.side);
        let q = &mut self.queues[s][order.level - 1];
        if let Some(pos) = q.iter().position(|&x| x == id) {
            q.remove(pos);
        }
        self.shares[s][order.level - 1] -= order.size;
        Some(order)
    }

    fn cancel(&mut self, t: f64, id: u64) {
        let Some(order) = self.remove(id) else {
            return;
        };
        let price = self.price(order.side, order.level);
        self.emit(
            BookEvent {
                timestamp: t,
                kind: EventKind::Cancel,
                order_id: id,
                size: order.size,
                price,
                side: order.side,
            },
            Some(order.level),
        );
    }

    /// Executes FIFO from the best level outward; returns shares filled.
    fn market_order(&mut self, t: f64, direction: Direction, size: u64) -> u64 {
        let side = match direction {
            Direction::Sell => Side::Bid,
            Direction::Buy => Side::Ask,
        };
        let s = side_index(side);
        let first = self.events.len();
        let mut remaining = size;
        let mut deepest = 0;
        for level in 1..=self.spec.levels.len() {
            while remaining > 0 {
                let Some(&id) = self.queues[s][level - 1].front() else {
                    break;
                };
                let order = self.orders.get_mut(&id).expect("queued order exists");
                let take = remaining.min(order.size);
                order.size -= take;
                remaining -= take;
                self.shares[s][level - 1] -= take;
                if order.size == 0 {
                    self.orders.remove(&id);
                    self.queues[s][level - 1].pop_front();
                }
                deepest = level;
                let price = self.price(side, level);
                self.emit(
                    BookEvent {
                        timestamp: t,
                        kind: EventKind::ExecuteVisible,
                        order_id: id,
                        size: take,
                        price,
                        side,
                    },
                    None,
                );
            }
            if remaining == 0 {
                break;
            }
        }
        for tag in &mut self.levels[first..] {
            *tag = Some(deepest);
        }
        size - remaining
    }

    /// Moves the whole ladder one tick; the side moving away from the
    /// spread goes first so the book never crosses.
    fn shift(&mut self, t: f64, mid_move: MidMove) {
        let (order, step) = match mid_move {
            MidMove::Down => ([Side::Bid, Side::Ask], -1),
            MidMove::Up => ([Side::Ask, Side::Bid], 1),
        };
        for side in order {
            let s = side_index(side);
            for level in 1..=self.spec.levels.len() {
                let price = self.price(side, level) + step;
                for i in 0..self.queues[s][level - 1].len() {
                    let id = self.queues[s][level - 1][i];
                    let size = self.orders[&id].size;
                    self.events.push(BookEvent {
                        timestamp: t,
                        kind: EventKind::Modify,
                        order_id: id,
                        size,
                        price,
                        side,
                    });
                    self.levels.push(None);
                }
            }
        }
        self.bid += step;
    }
}

fn market_order_times(
    spec: &MarketSpec,
    trader: Option<(&dyn Fn(f64) -> f64, f64)>,
) -> Result<Vec<(f64, Direction, bool)>> {
    let horizon = spec.session_length;
    let mut all: Vec<(f64, Direction, bool)> = Vec::new();
    let mut rng = rng_for(spec.seed, STREAM_SELL);
    let (extra, extra_max): (&dyn Fn(f64) -> f64, f64) = trader.unwrap_or((&|_| 0.0, 0.0));
    let sells: Vec<TaggedEvent> = match spec.sell {
        Some(p) => simulate_with_exogenous(&p, extra, extra_max, horizon, &mut rng)?,
        None if extra_max > 0.0 => {
            // Pure trader flow by thinning.
            let mut out = Vec::new();
            let mut t = 0.0;
            loop {
                t += exp_sample(extra_max, &mut rng);
                if t > horizon {
                    break;
                }
                if rng.random::<f64>() * extra_max < extra(t) {
                    out.push(TaggedEvent {
                        time: t,
                        exogenous: true,
                    });
                }
            }
            out
        }
        None => Vec::new(),
    };
    all.extend(sells.into_iter().map(|e| (e.time, Direction::Sell, e.exogenous)));
    if let Some(p) = spec.buy {
        let mut rng = rng_for(spec.seed, STREAM_BUY);
        let buys = simulate_with_exogenous(&p, &|_| 0.0, 0.0, horizon, &mut rng)?;
        all.extend(buys.into_iter().map(|e| (e.time, Direction::Buy, false)));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(all)
}

fn run(
    spec: &MarketSpec,
    trader: Option<(&dyn Fn(f64) -> f64, f64)>,
    trader_size: u64,
) -> Result<GeneratedStream> {
    spec.validate()?;
    let n_levels = spec.levels.len();
    let horizon = spec.session_length;
    let mut engine = Engine {
        spec,
        bid: spec.initial_bid,
        orders: HashMap::new(),
        queues: [vec![VecDeque::new(); n_levels], vec![VecDeque::new(); n_levels]],
        shares: [vec![0; n_levels], vec![0; n_levels]],
        depth_integral: vec![[0.0; 2]; n_levels],
        last_time: 0.0,
        cancels: BinaryHeap::new(),
        next_id: 1,
        events: Vec::new(),
        levels: Vec::new(),
    };

    // One process per (side, level) drives submissions, sizes and lifetimes.
    let mut processes: Vec<LevelProcess> = Vec::with_capacity(2 * n_levels);
    for s in 0..2 {
        for (i, flow) in spec.levels.iter().enumerate() {
            let mut rng = rng_for(spec.seed, STREAM_LEVELS + (2 * i + s) as u64);
            let side = if s == 0 { Side::Bid } else { Side::Ask };
            // Opening snapshot at the stationary mean queue length.
            let n0 = if flow.mu_minus > 0.0 {
                (flow.mu_plus / flow.mu_minus).round() as usize
            } else {
                0
            };
            for _ in 0..n0 {
                let size = size_sample(flow.mean_size, &mut rng);
                let life = exp_sample(flow.mu_minus, &mut rng);
                engine.submit(0.0, side, i + 1, size, life);
            }
            let next = exp_sample(flow.mu_plus, &mut rng);
            processes.push(LevelProcess { rng, next });
        }
    }

    let market = market_order_times(spec, trader)?;
    let mut market_idx = 0;
    let mut size_rng = rng_for(spec.seed, STREAM_MARKET_SIZES);
    let mut monitor_rng = rng_for(spec.seed, STREAM_MONITOR);
    let mut move_rng = rng_for(spec.seed, STREAM_MOVES);
    let next_epoch = |k: u64, last: f64, rng: &mut ChaCha8Rng| -> f64 {
        if spec.monitor_rate <= 0.0 {
            return f64::INFINITY;
        }
        match spec.monitor_law {
            MonitorLaw::Grid => k as f64 / spec.monitor_rate,
            MonitorLaw::Poisson => last + exp_sample(spec.monitor_rate, rng),
        }
    };
    let mut epoch_k = 1;
    let mut epoch = next_epoch(epoch_k, 0.0, &mut monitor_rng);

    let mut executed = [0u64; 2];
    let mut window_counts = [0u64; 2];
    let mut trader_orders = 0;
    let mut trader_shares = 0;
    let mut mid_moves = Vec::new();

    loop {
        let (p_idx, p_time) = processes
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.next))
            .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let c_time = engine
            .cancels
            .peek()
            .map_or(f64::INFINITY, |Reverse((bits, _))| f64::from_bits(*bits));
        let m_time = market.get(market_idx).map_or(f64::INFINITY, |m| m.0);
        let t = epoch.min(c_time).min(m_time).min(p_time);
        if !(t < horizon) {
            break;
        }
        engine.advance(t);
        if t == epoch {
            let delta = match spec.memory {
                ImbalanceMemory::Cumulative => executed[0] as f64 - executed[1] as f64,
                ImbalanceMemory::PerWindow => window_counts[0] as f64 - window_counts[1] as f64,
            };
            window_counts = [0, 0];
            let down = move_rng.random::<f64>() < logistic(spec.b0 + spec.b1 * delta);
            let mid_move = if down { MidMove::Down } else { MidMove::Up };
            engine.shift(t, mid_move);
            mid_moves.push((t, mid_move, delta));
            epoch_k += 1;
            epoch = next_epoch(epoch_k, t, &mut monitor_rng);
        } else if t == c_time {
            let Reverse((_, id)) = engine.cancels.pop().expect("peeked");
            engine.cancel(t, id);
        } else if t == m_time {
            let (_, direction, is_trader) = market[market_idx];
            market_idx += 1;
            let size = if is_trader {
                trader_size
            } else {
                size_sample(spec.market_order_size, &mut size_rng)
            };
            let filled = engine.market_order(t, direction, size);
            if filled > 0 {
                let d = match direction {
                    Direction::Sell => 0,
                    Direction::Buy => 1,
                };
                executed[d] += 1;
                window_counts[d] += 1;
                if is_trader {
                    trader_orders += 1;
                    trader_shares += filled;
                }
            }
        } else {
            let s = p_idx / n_levels;
            let level = p_idx % n_levels + 1;
            let side = if s == 0 { Side::Bid } else { Side::Ask };
            let flow = spec.levels[level - 1];
            let p = &mut processes[p_idx];
            let size = size_sample(flow.mean_size, &mut p.rng);
            let life = exp_sample(flow.mu_minus, &mut p.rng);
            p.next = t + exp_sample(flow.mu_plus, &mut p.rng);
            engine.submit(t, side, level, size, life);
        }
    }
    engine.advance(horizon);
    let mean_depth = engine
        .depth_integral
        .iter()
        .map(|a| [a[0] / horizon, a[1] / horizon])
        .collect();
    Ok(GeneratedStream {
        truth: GroundTruth {
            levels: engine.levels,
            market_orders: executed,
            trader_orders,
            trader_shares,
            mid_moves,
            initial_bid: spec.initial_bid,
            final_bid: engine.bid,
            mean_depth,
        },
        events: engine.events,
    })
}

/// Generates a replayable stream; identical specs give identical output.
pub fn generate(spec: &MarketSpec) -> Result<GeneratedStream> {
    run(spec, None, 0)
}

/// Regenerates `spec` with an additional trader sell flow at `xi_t / L`
/// orders per second, each of `mean_order_size` shares. The trader orders
/// excite the sell flow and enter the imbalance like any other order.
pub fn inject_strategy(
    spec: &MarketSpec,
    schedule: &TradingSchedule,
    mean_order_size: f64,
) -> Result<GeneratedStream> {
    ensure(mean_order_size >= 1.0, "mean_order_size", || {
        format!("must be at least one share, got {mean_order_size}")
    })?;
    if schedule.initial_block != 0.0 || schedule.terminal_block != 0.0 {
        return Err(Error::InvalidParameter {
            name: "schedule",
            reason: "block trades cannot be injected as a rate".into(),
        });
    }
    if (schedule.horizon - spec.session_length).abs() > 1e-9 * spec.session_length {
        log::warn!(
            "schedule horizon {} differs from session length {}",
            schedule.horizon,
            spec.session_length
        );
    }
    let mut peak: f64 = 0.0;
    for &t in &schedule.grid {
        let r = schedule.rate(t)?;
        if r < 0.0 {
            return Err(Error::InvalidParameter {
                name: "schedule",
                reason: format!("negative rate {r} at t = {t}"),
            });
        }
        peak = peak.max(r);
    }
    let horizon = schedule.horizon;
    let rate = |t: f64| {
        if t <= horizon {
            schedule.rate_at(t) / mean_order_size
        } else {
            0.0
        }
    };
    let bound = 1.01 * peak / mean_order_size;
    if bound == 0.0 {
        return generate(spec);
    }
    run(spec, Some((&rate, bound)), mean_order_size.round() as u64)
}

/// Writes events in the order-book line format with a header.
pub fn write_stream<W: Write>(w: &mut W, events: &[BookEvent]) -> Result<()> {
    writeln!(w, "timestamp,kind,order_id,size,price_ticks,side")?;
    for e in events {
        writeln!(w, "{e}")?;
    }
    Ok(())
}
