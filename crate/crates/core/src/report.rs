//! Batch reporting: per-stock calibration, strategy tables, ALL/INS/TMP cost
//! comparison, distribution summaries and plot data.
//!
//! Every output is a tab-separated table with a header row. Rows are ordered
//! by stock position in the config, so identical inputs give identical files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    assemble_parameters, estimate_eta, fit_logistic, logistic, permanent_impact, EtaFit, GammaRule,
    LambdaVariant, LogisticFit, MidMove,
};
use crate::cost::{execution_cost, temporary_impact_path, CostBreakdown};
use crate::error::{Error, Result};
use crate::hawkes::{fit_mle, resilience_from_ratio, FitOptions};
use crate::lob::{
    replay_reader, write_level_counts, write_level_stats, DerivedStreams, Direction,
    ImbalanceMemory, ReplayConfig, SessionWindow, Side,
};
use crate::simulator::{generate, inject_strategy, write_stream, MarketSpec};
use crate::strategy::{LiquidationProblem, TradingSchedule};
use crate::units::{half_life_days, recovery_pct_per_day, rho_from_half_life_days, to_basis_points};

pub const PARAMETERS_FILE: &str = "parameters.tsv";
pub const ERRORS_FILE: &str = "errors.tsv";
pub const COMPARISON_FILE: &str = "comparison.tsv";
pub const STRATEGY_FILE: &str = "strategy.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";

/// Book side whose depth curve prices the liquidation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSide {
    /// Sell orders walk down the bid ladder.
    #[default]
    Bid,
    Ask,
}

impl From<DepthSide> for Side {
    fn from(s: DepthSide) -> Side {
        match s {
            DepthSide::Bid => Side::Bid,
            DepthSide::Ask => Side::Ask,
        }
    }
}

fn default_tick() -> f64 {
    0.01
}
fn default_session_end() -> f64 {
    crate::units::TRADING_DAY_SECONDS
}
fn default_window() -> f64 {
    1.0
}
fn default_levels() -> usize {
    10
}
fn default_grid() -> usize {
    513
}
fn default_participation() -> f64 {
    0.05
}

/// One stock entry (`[[stock]]`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StockConfig {
    pub id: String,
    /// Event file; relative paths resolve against the config's directory.
    pub input: Option<PathBuf>,
    pub tick_size: Option<f64>,
    pub reference_price: f64,
    /// Shares to liquidate; otherwise `participation * adv`.
    pub x0: Option<f64>,
    /// Average daily volume, shares.
    pub adv: Option<f64>,
    /// Inline impact record in bps/share; overrides calibrated values.
    pub eta_bps: Option<f64>,
    pub lambda_bps: Option<f64>,
    pub gamma_bps: Option<f64>,
    pub rho: Option<f64>,
    pub half_life_days: Option<f64>,
    /// Best-level depth, shares, for the TMP block warning.
    pub best_depth: Option<f64>,
}

/// Twap injection for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionConfig {
    pub x0: f64,
    pub mean_order_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_tick")]
    pub tick_size: f64,
    #[serde(default)]
    pub session_start: f64,
    #[serde(default = "default_session_end")]
    pub session_end: f64,
    /// Liquidation horizon, seconds; defaults to the session length.
    pub horizon: Option<f64>,
    /// Imbalance sampling window, seconds; the monitor rate is its inverse.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_levels")]
    pub max_levels: usize,
    #[serde(default)]
    pub memory: ImbalanceMemory,
    #[serde(default)]
    pub depth_side: DepthSide,
    #[serde(default)]
    pub lambda_variant: LambdaVariant,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    #[serde(default = "default_participation")]
    pub participation: f64,
    #[serde(default)]
    pub include_tmp: bool,
    #[serde(default, rename = "stock")]
    pub stocks: Vec<StockConfig>,
    pub simulate: Option<MarketSpec>,
    pub inject: Option<InjectionConfig>,
    /// Directory relative inputs resolve against; set by [`ReportConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl ReportConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ReportConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.session_end > self.session_start) {
            return bad(format!(
                "session [{}, {}) is empty",
                self.session_start, self.session_end
            ));
        }
        if !(self.window > 0.0) {
            return bad(format!("window must be positive, got {}", self.window));
        }
        if !(self.tick_size > 0.0) {
            return bad(format!("tick_size must be positive, got {}", self.tick_size));
        }
        if self.grid_points < 3 {
            return bad("grid_points must be at least 3".into());
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.stocks {
            if !seen.insert(s.id.as_str()) {
                return bad(format!("duplicate stock id `{}`", s.id));
            }
            if !(s.reference_price > 0.0) {
                return bad(format!("stock `{}`: reference_price must be positive", s.id));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(self.session_end - self.session_start)
    }

    /// Monitor rate implied by the sampling window.
    pub fn monitor_rate(&self) -> f64 {
        1.0 / self.window
    }

    pub fn replay_config(&self) -> ReplayConfig {
        ReplayConfig {
            session: SessionWindow {
                start: self.session_start,
                end: self.session_end,
            },
            window: self.window,
            memory: self.memory,
            max_levels: self.max_levels,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn tick(&self, stock: &StockConfig) -> f64 {
        stock.tick_size.unwrap_or(self.tick_size)
    }
}

/// One calibrated stock; impact coefficients in bps/share unless suffixed `_ticks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecord {
    pub stock: String,
    pub eta_ticks: f64,
    pub eta_bps: f64,
    pub lambda_ticks: f64,
    pub lambda_bps: f64,
    pub gamma_bps: f64,
    pub rho: f64,
    pub half_life_days: f64,
    pub recovery_pct_day: f64,
    pub impact_ratio: f64,
    pub nu: f64,
    pub a: f64,
    pub b: f64,
    pub branching: f64,
    pub b0: f64,
    pub b1: f64,
    pub delta_bar: f64,
    pub big_lambda: f64,
    pub z_bar: f64,
    pub l_bar: f64,
    pub eta_r2: f64,
    pub best_depth: f64,
    pub tick_size: f64,
    pub reference_price: f64,
    pub n_sell_orders: usize,
    pub n_mid_changes: usize,
}

impl ParameterRecord {
    /// Builds a record from inline values; calibration-only fields are NaN.
    pub fn from_inline(stock: &StockConfig, cfg: &ReportConfig) -> Result<Option<Self>> {
        let (Some(eta), Some(lambda)) = (stock.eta_bps, stock.lambda_bps) else {
            return Ok(None);
        };
        let rho = match (stock.rho, stock.half_life_days) {
            (Some(r), _) => r,
            (None, Some(h)) => rho_from_half_life_days(h),
            (None, None) => {
                return Err(Error::Config(format!(
                    "stock `{}`: inline record needs rho or half_life_days",
                    stock.id
                )))
            }
        };
        let gamma = stock.gamma_bps.unwrap_or(lambda / cfg.monitor_rate());
        let tick = cfg.tick(stock);
        let per_tick = to_basis_points(1.0, tick, stock.reference_price);
        Ok(Some(ParameterRecord {
            stock: stock.id.clone(),
            eta_ticks: eta / per_tick,
            eta_bps: eta,
            lambda_ticks: lambda / per_tick,
            lambda_bps: lambda,
            gamma_bps: gamma,
            rho,
            half_life_days: half_life_days(rho),
            recovery_pct_day: recovery_pct_per_day(rho),
            impact_ratio: lambda / eta,
            nu: f64::NAN,
            a: f64::NAN,
            b: f64::NAN,
            branching: f64::NAN,
            b0: f64::NAN,
            b1: f64::NAN,
            delta_bar: f64::NAN,
            big_lambda: f64::NAN,
            z_bar: f64::NAN,
            l_bar: f64::NAN,
            eta_r2: f64::NAN,
            best_depth: stock.best_depth.unwrap_or(f64::NAN),
            tick_size: tick,
            reference_price: stock.reference_price,
            n_sell_orders: 0,
            n_mid_changes: 0,
        }))
    }

    pub fn impact_parameters(&self) -> Result<crate::strategy::ImpactParameters> {
        assemble_parameters(self.eta_bps, self.lambda_bps, self.rho, GammaRule::Fixed(self.gamma_bps))
    }
}

/// Intermediate results kept for plot data.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub record: ParameterRecord,
    pub streams: DerivedStreams,
    pub eta: EtaFit,
    pub logistic: LogisticFit,
}

/// Runs replay, depth regression, logistic fit and Hawkes MLE on one event stream.
pub fn calibrate_streams(
    stock: &StockConfig,
    cfg: &ReportConfig,
    streams: DerivedStreams,
) -> Result<Calibration> {
    let tick = cfg.tick(stock);
    let price = stock.reference_price;
    let side: Side = cfg.depth_side.into();
    let eta = estimate_eta(streams.levels(side))?;
    if eta.eta <= 0.0 {
        return Err(Error::Degenerate(format!("depth slope {} is not positive", eta.eta)));
    }
    let logistic_fit = fit_logistic(&streams.imbalance)?;
    let flow = streams.flow_scalars()?;
    let mu = cfg.monitor_rate();
    let permanent = permanent_impact(&logistic_fit, flow.z_bar, flow.l_bar, mu, cfg.lambda_variant)?;
    let sells = streams.event_times(Direction::Sell)?;
    let hawkes = fit_mle(&sells, None, &FitOptions::default())?;
    let horizon = streams.session.length();
    let rho = resilience_from_ratio(hawkes.params.branching_ratio(), horizon)?;
    let eta_bps = to_basis_points(eta.eta, tick, price);
    let lambda_bps = to_basis_points(permanent.lambda, tick, price);
    let params = assemble_parameters(eta_bps, lambda_bps, rho, GammaRule::FromLambda { mu })?;
    let best_depth = streams
        .levels(side)
        .iter()
        .find(|l| l.level == 1)
        .and_then(|l| l.q())
        .unwrap_or(f64::NAN);
    let record = ParameterRecord {
        stock: stock.id.clone(),
        eta_ticks: eta.eta,
        eta_bps,
        lambda_ticks: permanent.lambda,
        lambda_bps,
        gamma_bps: params.gamma,
        rho,
        half_life_days: half_life_days(rho),
        recovery_pct_day: recovery_pct_per_day(rho),
        impact_ratio: lambda_bps / eta_bps,
        nu: hawkes.params.nu,
        a: hawkes.params.a,
        b: hawkes.params.b,
        branching: hawkes.params.branching_ratio(),
        b0: logistic_fit.b0,
        b1: logistic_fit.b1,
        delta_bar: logistic_fit.delta_bar,
        big_lambda: permanent.big_lambda,
        z_bar: flow.z_bar,
        l_bar: flow.l_bar,
        eta_r2: eta.r_squared,
        best_depth,
        tick_size: tick,
        reference_price: price,
        n_sell_orders: sells.len(),
        n_mid_changes: flow.n_mid_changes,
    };
    Ok(Calibration {
        record,
        streams,
        eta,
        logistic: logistic_fit,
    })
}

pub fn calibrate_stock(stock: &StockConfig, cfg: &ReportConfig) -> Result<Calibration> {
    let input = stock
        .input
        .as_ref()
        .ok_or_else(|| Error::Config(format!("stock `{}` has no input file", stock.id)))?;
    let path = cfg.resolve(input);
    let file = File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let streams = replay_reader(BufReader::new(file), cfg.replay_config())?;
    calibrate_streams(stock, cfg, streams)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub records: Vec<ParameterRecord>,
    /// `(stock, message)` for each failed stock.
    pub failures: Vec<(String, String)>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn tsv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().delimiter(b'\t').from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_records(path: &Path, records: &[ParameterRecord]) -> Result<()> {
    let mut w = tsv_writer(path)?;
    if records.is_empty() {
        // Header only.
        let header = "stock\teta_ticks\teta_bps\tlambda_ticks\tlambda_bps\tgamma_bps\trho\thalf_life_days\trecovery_pct_day\timpact_ratio\tnu\ta\tb\tbranching\tb0\tb1\tdelta_bar\tbig_lambda\tz_bar\tl_bar\teta_r2\tbest_depth\ttick_size\treference_price\tn_sell_orders\tn_mid_changes";
        w.write_record(header.split('\t')).map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ParameterRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}

/// Binned empirical down-move frequencies next to the fitted curve.
pub fn write_logistic_plot<W: Write>(w: &mut W, cal: &Calibration, bins: usize) -> Result<()> {
    writeln!(w, "delta\tn\tempirical_down\tfitted_down")?;
    let samples = &cal.streams.imbalance;
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.delta), hi.max(s.delta)));
    if samples.is_empty() || bins == 0 {
        return Ok(());
    }
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut n = vec![0usize; bins];
    let mut downs = vec![0usize; bins];
    for s in samples {
        let i = (((s.delta - lo) / width) as usize).min(bins - 1);
        n[i] += 1;
        if s.mid_move == MidMove::Down {
            downs[i] += 1;
        }
    }
    for i in 0..bins {
        if n[i] == 0 {
            continue;
        }
        let center = lo + (i as f64 + 0.5) * width;
        let fitted = logistic(cal.logistic.b0 + cal.logistic.b1 * center);
        writeln!(w, "{center}\t{}\t{}\t{fitted}", n[i], downs[i] as f64 / n[i] as f64)?;
    }
    Ok(())
}

/// Calibrates every stock with an input file, in parallel.
///
/// Writes `parameters.tsv`, `errors.tsv` and per-stock level tables and
/// logistic plot data under `out_dir/<stock>/`. Fails only when every stock fails.
pub fn cmd_calibrate(cfg: &ReportConfig, out_dir: &Path) -> Result<CalibrationReport> {
    let stocks: Vec<&StockConfig> = cfg.stocks.iter().filter(|s| s.input.is_some()).collect();
    if stocks.is_empty() {
        log::warn!("no stocks with input files; writing empty outputs");
    }
    let results: Vec<Result<Calibration>> =
        stocks.par_iter().map(|s| calibrate_stock(s, cfg)).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (stock, result) in stocks.iter().zip(results) {
        match result {
            Ok(cal) => {
                let dir = out_dir.join(&stock.id);
                let mut w = create(&dir.join("levels.tsv"))?;
                write_level_stats(&mut w, &cal.streams)?;
                w.flush()?;
                let mut w = create(&dir.join("counts.tsv"))?;
                write_level_counts(&mut w, &cal.streams)?;
                w.flush()?;
                let mut w = create(&dir.join("logistic_plot.tsv"))?;
                write_logistic_plot(&mut w, &cal, 20)?;
                w.flush()?;
                records.push(cal.record);
            }
            Err(e) => {
                log::warn!("{}: {e}", stock.id);
                failures.push((stock.id.clone(), e.to_string()));
            }
        }
    }
    write_records(&out_dir.join(PARAMETERS_FILE), &records)?;
    let mut w = create(&out_dir.join(ERRORS_FILE))?;
    writeln!(w, "stock\terror")?;
    for (s, e) in &failures {
        writeln!(w, "{s}\t{}", e.replace(['\t', '\n'], " "))?;
    }
    w.flush()?;
    if records.is_empty() && !failures.is_empty() {
        return Err(Error::InsufficientData(format!("all {} stocks failed", failures.len())));
    }
    Ok(CalibrationReport { records, failures })
}

/// Costs of the three strategies for one record.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub stock: String,
    pub x0: f64,
    pub all: CostBreakdown,
    pub ins: CostBreakdown,
    pub tmp: CostBreakdown,
    /// `100 (C_INS - C_ALL) / C_INS`.
    pub improvement: f64,
    pub tmp_block: f64,
    /// Block size exceeds the best-level depth.
    pub tmp_liquidity_warning: bool,
}

pub struct Schedules {
    pub all: TradingSchedule,
    pub ins: TradingSchedule,
    pub tmp: TradingSchedule,
}

pub fn compare(
    record: &ParameterRecord,
    x0: f64,
    horizon: f64,
    grid_points: usize,
) -> Result<(Comparison, Schedules)> {
    let params = record.impact_parameters()?;
    let s0 = record.reference_price;
    let problem = LiquidationProblem::new(x0, horizon, params)?;
    let all = TradingSchedule::optimal(&problem, grid_points)?;
    let ins = TradingSchedule::twap(x0, horizon, grid_points)?;
    let tmp = TradingSchedule::obizhaeva_wang(x0, params.rho, horizon, grid_points)?;
    let c_all = execution_cost(&all, &params, s0)?;
    let c_ins = execution_cost(&ins, &params, s0)?;
    let c_tmp = execution_cost(&tmp, &params, s0)?;
    let improvement = if c_ins.total > 0.0 {
        100.0 * (c_ins.total - c_all.total) / c_ins.total
    } else {
        0.0
    };
    let tmp_block = tmp.initial_block;
    let tmp_liquidity_warning = record.best_depth.is_finite() && tmp_block > record.best_depth;
    if tmp_liquidity_warning {
        log::warn!(
            "{}: TMP block of {tmp_block:.0} shares is {:.1} times the best-level depth",
            record.stock,
            tmp_block / record.best_depth
        );
    }
    Ok((
        Comparison {
            stock: record.stock.clone(),
            x0,
            all: c_all,
            ins: c_ins,
            tmp: c_tmp,
            improvement,
            tmp_block,
            tmp_liquidity_warning,
        },
        Schedules { all, ins, tmp },
    ))
}

/// Trading paths of the three strategies on a common grid, with `Y_t` for ALL.
pub fn write_paths<W: Write>(
    w: &mut W,
    s: &Schedules,
    record: &ParameterRecord,
    grid_points: usize,
) -> Result<()> {
    let grid = crate::quadrature::uniform_grid(0.0, s.all.horizon, grid_points);
    let y = temporary_impact_path(&s.all, record.gamma_bps, record.rho, &grid)?;
    writeln!(
        w,
        "t\trate_all\tholdings_all\timpact_all\trate_ins\tholdings_ins\trate_tmp\tholdings_tmp"
    )?;
    for (i, &t) in grid.iter().enumerate() {
        writeln!(
            w,
            "{t}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.all.rate(t)?,
            s.all.holdings(t)?,
            y.values[i],
            s.ins.rate(t)?,
            s.ins.holdings(t)?,
            s.tmp.rate(t)?,
            s.tmp.holdings(t)?,
        )?;
    }
    Ok(())
}

/// Resolves the impact record of each stock: inline values first, then `records`.
pub fn stock_records(cfg: &ReportConfig, records: &[ParameterRecord]) -> Result<Vec<ParameterRecord>> {
    let mut out = Vec::new();
    for stock in &cfg.stocks {
        if let Some(r) = ParameterRecord::from_inline(stock, cfg)? {
            out.push(r);
        } else if let Some(r) = records.iter().find(|r| r.stock == stock.id) {
            out.push(r.clone());
        } else {
            log::warn!("{}: no impact record", stock.id);
        }
    }
    if cfg.stocks.is_empty() {
        out.extend(records.iter().cloned());
    }
    Ok(out)
}

fn x0_for(cfg: &ReportConfig, id: &str) -> Result<f64> {
    let stock = cfg.stocks.iter().find(|s| s.id == id);
    match stock.map(|s| (s.x0, s.adv)) {
        Some((Some(x0), _)) => Ok(x0),
        Some((None, Some(adv))) => Ok(cfg.participation * adv),
        _ => Err(Error::Config(format!("stock `{id}`: set x0 or adv"))),
    }
}

/// Writes `comparison.tsv` and `paths/<stock>.tsv`. TMP columns appear only
/// when `cfg.include_tmp` is set.
pub fn cmd_compare(
    cfg: &ReportConfig,
    records: &[ParameterRecord],
    out_dir: &Path,
) -> Result<Vec<Comparison>> {
    let records = stock_records(cfg, records)?;
    let horizon = cfg.horizon();
    let results: Vec<Result<(Comparison, Schedules)>> = records
        .par_iter()
        .map(|r| compare(r, x0_for(cfg, &r.stock)?, horizon, cfg.grid_points))
        .collect();
    let mut w = create(&out_dir.join(COMPARISON_FILE))?;
    write!(w, "stock\tx0\tcost_all_pct\tcost_ins_pct\timprovement_pct")?;
    if cfg.include_tmp {
        write!(w, "\tcost_tmp_pct\ttmp_block\ttmp_liquidity_warning")?;
    }
    writeln!(w)?;
    let mut out = Vec::new();
    let mut failures = 0;
    for (record, result) in records.iter().zip(results) {
        let (c, s) = match result {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{}: {e}", record.stock);
                failures += 1;
                continue;
            }
        };
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            c.stock, c.x0, c.all.pct_of_notional, c.ins.pct_of_notional, c.improvement
        )?;
        if cfg.include_tmp {
            write!(w, "\t{}\t{}\t{}", c.tmp.pct_of_notional, c.tmp_block, c.tmp_liquidity_warning)?;
        }
        writeln!(w)?;
        let mut pw = create(&out_dir.join("paths").join(format!("{}.tsv", c.stock)))?;
        write_paths(&mut pw, &s, record, cfg.grid_points)?;
        pw.flush()?;
        out.push(c);
    }
    w.flush()?;
    if out.is_empty() && failures > 0 {
        return Err(Error::InsufficientData("every comparison failed".into()));
    }
    Ok(out)
}

/// Optimal schedule table per stock (`schedules/<stock>.tsv`) and its cost
/// breakdown (`strategy.tsv`).
pub fn cmd_strategize(
    cfg: &ReportConfig,
    records: &[ParameterRecord],
    out_dir: &Path,
) -> Result<Vec<(String, CostBreakdown)>> {
    let records = stock_records(cfg, records)?;
    let horizon = cfg.horizon();
    let mut w = create(&out_dir.join(STRATEGY_FILE))?;
    writeln!(
        w,
        "stock\tx0\tinstantaneous\ttransient\tpermanent\ttotal\tpct_of_notional\tunit"
    )?;
    let mut out = Vec::new();
    for r in &records {
        let x0 = x0_for(cfg, &r.stock)?;
        let params = r.impact_parameters()?;
        let problem = LiquidationProblem::new(x0, horizon, params)?;
        let schedule = TradingSchedule::optimal(&problem, cfg.grid_points)?;
        let cost = execution_cost(&schedule, &params, r.reference_price)?;
        let y = temporary_impact_path(&schedule, params.gamma, params.rho, &schedule.grid)?;
        let mut sw = create(&out_dir.join("schedules").join(format!("{}.tsv", r.stock)))?;
        writeln!(sw, "t\trate\tholdings\timpact")?;
        for (row, y) in schedule.table().iter().zip(&y.values) {
            writeln!(sw, "{}\t{}\t{}\t{y}", row.t, row.rate, row.holdings)?;
        }
        sw.flush()?;
        writeln!(
            w,
            "{}\t{x0}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.stock,
            cost.instantaneous,
            cost.transient,
            cost.permanent,
            cost.total,
            cost.pct_of_notional,
            cost.unit
        )?;
        out.push((r.stock.clone(), cost));
    }
    w.flush()?;
    Ok(out)
}

/// Distribution summary of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
    /// Sample standard deviation (`n - 1`); zero for a single value.
    pub sd: f64,
}

/// Interpolation rule for quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileMethod {
    /// Linear interpolation between order statistics placed at `(k - 1/2) / n`,
    /// clamped to the sample range. Reproduces the published quartiles.
    #[default]
    Hazen,
    /// Linear interpolation at position `p (n - 1)`.
    Inclusive,
}

/// Percentile `p` in [0, 1] of sorted, non-empty data.
pub fn percentile(sorted: &[f64], p: f64, method: PercentileMethod) -> f64 {
    let n = sorted.len();
    let pos = match method {
        PercentileMethod::Hazen => (p * n as f64 - 0.5).clamp(0.0, (n - 1) as f64),
        PercentileMethod::Inclusive => p * (n - 1) as f64,
    };
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64], method: PercentileMethod) -> Result<SummaryStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::InsufficientData("no finite values to summarize".into()));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        n,
        min: v[0],
        q1: percentile(&v, 0.25, method),
        median: percentile(&v, 0.5, method),
        mean,
        q3: percentile(&v, 0.75, method),
        max: v[n - 1],
        sd,
    })
}

/// Reads a tab-separated table with a header and returns its numeric columns.
pub fn read_numeric_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut columns: Vec<Option<Vec<f64>>> = vec![Some(Vec::new()); headers.len()];
    for row in r.records() {
        let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (col, field) in columns.iter_mut().zip(row.iter()) {
            if let Some(values) = col {
                match field.trim().parse::<f64>() {
                    Ok(x) => values.push(x),
                    Err(_) => *col = None,
                }
            }
        }
    }
    Ok(headers
        .into_iter()
        .zip(columns)
        .filter_map(|(h, c)| c.map(|c| (h, c)))
        .collect())
}

/// Summarizes the selected numeric columns (all when `columns` is empty) of
/// each table and writes `summary.tsv`.
pub fn cmd_summary(
    tables: &[PathBuf],
    columns: &[String],
    method: PercentileMethod,
    out_dir: &Path,
) -> Result<Vec<(String, SummaryStats)>> {
    let mut out = Vec::new();
    for path in tables {
        for (name, values) in read_numeric_columns(path)? {
            if !columns.is_empty() && !columns.contains(&name) {
                continue;
            }
            out.push((name, summarize(&values, method)?));
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("no numeric columns to summarize".into()));
    }
    let mut w = create(&out_dir.join(SUMMARY_FILE))?;
    writeln!(w, "column\tn\tmin\tq1\tmedian\tmean\tq3\tmax\tsd")?;
    for (name, s) in &out {
        writeln!(
            w,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.n, s.min, s.q1, s.median, s.mean, s.q3, s.max, s.sd
        )?;
    }
    w.flush()?;
    Ok(out)
}

/// Generates the `[simulate]` stream (with the optional TWAP injection) into
/// `simulated.csv` plus a ground-truth table.
pub fn cmd_simulate(cfg: &ReportConfig, seed: Option<u64>, out_dir: &Path) -> Result<PathBuf> {
    let mut spec = cfg
        .simulate
        .clone()
        .ok_or_else(|| Error::Config("missing [simulate] table".into()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let g = match &cfg.inject {
        Some(inj) => {
            let schedule = TradingSchedule::twap(inj.x0, spec.session_length, cfg.grid_points)?;
            inject_strategy(&spec, &schedule, inj.mean_order_size)?
        }
        None => generate(&spec)?,
    };
    let path = out_dir.join("simulated.csv");
    let mut w = create(&path)?;
    write_stream(&mut w, &g.events)?;
    w.flush()?;
    let mut w = create(&out_dir.join("simulated_truth.tsv"))?;
    writeln!(w, "key\tvalue")?;
    writeln!(w, "events\t{}", g.events.len())?;
    writeln!(w, "sell_orders\t{}", g.truth.market_orders[0])?;
    writeln!(w, "buy_orders\t{}", g.truth.market_orders[1])?;
    writeln!(w, "trader_orders\t{}", g.truth.trader_orders)?;
    writeln!(w, "trader_shares\t{}", g.truth.trader_shares)?;
    writeln!(w, "mid_moves\t{}", g.truth.mid_moves.len())?;
    writeln!(w, "initial_bid\t{}", g.truth.initial_bid)?;
    writeln!(w, "final_bid\t{}", g.truth.final_bid)?;
    for (i, d) in g.truth.mean_depth.iter().enumerate() {
        writeln!(w, "mean_depth_bid_{}\t{}", i + 1, d[0])?;
        writeln!(w, "mean_depth_ask_{}\t{}", i + 1, d[1])?;
    }
    w.flush()?;
    Ok(path)
}
