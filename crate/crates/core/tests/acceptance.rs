//! Acceptance criteria 1-9. Each test prints one `criterion N: PASS|FAIL` line
//! (run with `--nocapture` to see them all) and fails when any check fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transient_impact::calibration::{
    estimate_eta, fit_logistic, permanent_impact, LambdaVariant, LevelStats, LogisticFit,
};
use transient_impact::cost::execution_cost;
use transient_impact::hawkes::{
    fit_mle, gradient, log_likelihood, log_likelihood_direct, resilience_from_ratio, simulate,
    EventTimes, FitOptions, HawkesParameters,
};
use transient_impact::lob::{replay, Direction, ImbalanceMemory, ReplayConfig, SessionWindow, Side};
use transient_impact::report::{self, ParameterRecord, ReportConfig, StockConfig};
use transient_impact::simulator::{generate, LevelFlow, MarketSpec, MonitorLaw};
use transient_impact::strategy::{ow_block_size, ow_limit_path, optimal_path};
use transient_impact::units::{half_life_days, to_basis_points};
use transient_impact::verify::stationarity_residual;
use transient_impact::{ImpactParameters, LiquidationProblem, RateFn, TradingSchedule};

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

fn verdict(n: usize, checks: &[Check]) {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    if failed.is_empty() {
        println!("criterion {n}: PASS");
    } else {
        let why: Vec<String> = failed.iter().map(|c| format!("{} ({})", c.name, c.detail)).collect();
        println!("criterion {n}: FAIL: {}", why.join("; "));
    }
    for c in checks {
        println!("  [{}] {}: {}", if c.pass { "ok" } else { "x" }, c.name, c.detail);
    }
    assert!(failed.is_empty(), "criterion {n} failed");
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random problem with `rho T` in [0.01, 5] and `k T` at most 60.
fn random_problem(rng: &mut ChaCha8Rng) -> LiquidationProblem {
    let horizon = rng.random_range(1_000.0..20_000.0);
    let rho_t = log_uniform(rng, 0.01, 5.0);
    let k_t = log_uniform(rng, rho_t * 1.001, 60.0f64.max(rho_t * 1.01));
    let rho = rho_t / horizon;
    let k = k_t / horizon;
    let ratio = (k * k - rho * rho) / rho;
    let eta = log_uniform(rng, 1e-4, 1e-1);
    let lambda = log_uniform(rng, 1e-4, 1e-1);
    let params = ImpactParameters::new(eta, ratio * eta, lambda, rho).unwrap();
    let x0 = log_uniform(rng, 1e3, 1e6);
    LiquidationProblem::new(x0, horizon, params).unwrap()
}

#[test]
fn criterion_1_theorem_consistency() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_end, mut worst_sym, mut worst_res, mut min_rate) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    let mut start_ok = true;
    for _ in 0..100 {
        let p = random_problem(&mut rng);
        let s = TradingSchedule::optimal(&p, 4097).unwrap();
        let (x0, tt) = (p.x0, p.horizon);
        start_ok &= (s.holdings(0.0).unwrap() - x0).abs() <= 1e-9 * x0;
        worst_end = worst_end.max(s.holdings(tt).unwrap().abs() / x0);
        for i in 0..=200 {
            let t = (tt * i as f64 / 200.0).min(tt);
            let (a, b) = (s.rate(t).unwrap(), s.rate(tt - t).unwrap());
            min_rate = min_rate.min(a);
            worst_sym = worst_sym.max((a - b).abs() / a.abs().max(b.abs()));
        }
        worst_res = worst_res.max(stationarity_residual(&s, &p.params, 4097).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        &[
            check("X_0 = x0", start_ok, "100 sets".into()),
            check("X_T = 0", worst_end <= 1e-9, format!("max |X_T|/x0 = {worst_end:.2e}")),
            check("positivity", min_rate > 0.0, format!("min rate {min_rate:.3e}")),
            check("symmetry", worst_sym <= 1e-10, format!("max rel asymmetry {worst_sym:.2e}")),
            check("stationarity", worst_res < 1e-6, format!("max residual {worst_res:.2e}")),
            check("runtime", secs < 10.0, format!("{secs:.2} s")),
        ],
    );
}

#[test]
fn criterion_2_limits() {
    let (x0, tt, eta, rho) = (1e5, 19_800.0, 0.01, 5e-5);
    let twap = ImpactParameters::new(eta, 1e-8 * eta * rho, 0.0, rho).unwrap();
    let p = LiquidationProblem::new(x0, tt, twap).unwrap();
    let mut twap_dist = 0.0f64;
    for i in 0..=1000 {
        let t = tt * i as f64 / 1000.0;
        twap_dist = twap_dist.max((optimal_path(&p, t).unwrap() - x0 * (1.0 - t / tt)).abs());
    }
    let ow = ImpactParameters::new(eta, 1e6 * eta, 0.0, rho).unwrap();
    let p = LiquidationProblem::new(x0, tt, ow).unwrap();
    let mut ow_dist = 0.0f64;
    for i in 1..1000 {
        let t = tt * i as f64 / 1000.0;
        ow_dist = ow_dist.max((optimal_path(&p, t).unwrap() - ow_limit_path(x0, rho, tt, t).unwrap()).abs());
    }
    let block = ow_block_size(x0, rho, tt);
    verdict(
        2,
        &[
            check(
                "gamma -> 0 gives TWAP",
                twap_dist < 1e-6 * x0,
                format!("sup distance {:.2e} x0", twap_dist / x0),
            ),
            check(
                "gamma/eta = 1e6 gives OW",
                ow_dist < 1e-3 * x0,
                format!("interior sup distance {:.2e} x0", ow_dist / x0),
            ),
            check(
                "OW block x0/(rho T + 2)",
                (block - x0 / (rho * tt + 2.0)).abs() < 1e-9 * x0,
                format!("{block:.3}"),
            ),
        ],
    );
}

#[test]
fn criterion_3_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let problems = [
        LiquidationProblem::new(
            199_400.0,
            19_800.0,
            ImpactParameters::new(0.00226, 0.0032, 0.0032, 2.0354e-5).unwrap(),
        )
        .unwrap(),
        LiquidationProblem::new(1e5, 5_000.0, ImpactParameters::new(0.01, 0.02, 0.0, 1e-3).unwrap())
            .unwrap(),
    ];
    let (mut cases, mut violations, mut worst_gap) = (0, 0, f64::INFINITY);
    for i in 0..50 {
        let p = &problems[i % problems.len()];
        let s = TradingSchedule::optimal(p, 2049).unwrap();
        let c_all = execution_cost(&s, &p.params, 50.0).unwrap().total;
        let tt = p.horizon;
        let scale = p.x0 / tt;
        let coeffs: Vec<(f64, f64)> = (0..4)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        // Zero-mean modes keep the liquidation constraint.
        let v: RateFn = Arc::new(move |t: f64| {
            coeffs
                .iter()
                .enumerate()
                .map(|(j, (a, b))| {
                    let w = 2.0 * PI * (j + 1) as f64 * t / tt;
                    scale * (a * w.sin() + b * w.cos())
                })
                .sum()
        });
        for eps in [1e-3, 1e-2, 1e-1, 0.5] {
            let c = execution_cost(&s.perturbed(eps, v.clone()), &p.params, 50.0).unwrap().total;
            cases += 1;
            if c < c_all {
                violations += 1;
            }
            worst_gap = worst_gap.min((c - c_all) / c_all);
        }
    }
    let mut strict = true;
    for p in &problems {
        let all = TradingSchedule::optimal(p, 2049).unwrap();
        let ins = TradingSchedule::twap(p.x0, p.horizon, 2049).unwrap();
        strict &= execution_cost(&all, &p.params, 50.0).unwrap().total
            < execution_cost(&ins, &p.params, 50.0).unwrap().total;
    }
    verdict(
        3,
        &[
            check(
                "C(ALL) <= C(ALL + eps v)",
                violations == 0,
                format!("{violations}/{cases} violations, min relative gap {worst_gap:.2e}"),
            ),
            check("C(ALL) < C(INS) for gamma > 0", strict, "INTC and a moderate record".into()),
        ],
    );
}

const INTC_LEVELS: [(f64, f64, f64); 10] = [
    (8.151, 1.008, 108.665),
    (2.146, 0.242, 133.250),
    (0.965, 0.205, 417.150),
    (0.704, 0.247, 776.340),
    (0.423, 0.101, 113.832),
    (0.291, 0.094, 94.858),
    (0.201, 0.126, 118.644),
    (0.219, 0.101, 102.234),
    (0.213, 0.055, 109.862),
    (0.137, 0.111, 106.525),
];

/// Truncation to `digits` decimals, the precision of the published tables.
fn truncate(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s + 1e-9).floor() / s
}

#[test]
fn criterion_4_intc_goldens() {
    let levels: Vec<LevelStats> = INTC_LEVELS
        .iter()
        .enumerate()
        .map(|(i, &(mu_plus, mu_minus, mean_size))| LevelStats {
            level: i + 1,
            mu_plus,
            mu_minus,
            mean_size,
            offset: (i + 1) as f64,
        })
        .collect();
    let eta = estimate_eta(&levels).unwrap().eta;
    let fit = LogisticFit::from_coefficients(0.0697, 0.7624);
    let lambda = permanent_impact(&fit, 0.5, 115.0, 1.0, LambdaVariant::Exact).unwrap();
    let rho_table = resilience_from_ratio(0.7985, 19_800.0).unwrap();
    let rho_raw = resilience_from_ratio(8.647 / 10.829, 19_800.0).unwrap();
    let hl = half_life_days(2.0354e-5);
    let eta_bps = to_basis_points(0.0011, 0.01, 48.625);
    let lambda_bps = to_basis_points(0.0016, 0.01, 48.625);
    verdict(
        4,
        &[
            check("eta", (eta / 0.0011 - 1.0).abs() <= 0.1, format!("{eta:.5} ticks/share")),
            check(
                "delta bar",
                (fit.delta_bar + 0.0915).abs() <= 2e-4,
                format!("{:.5}", fit.delta_bar),
            ),
            check(
                "Lambda",
                (0.180..=0.184).contains(&lambda.big_lambda),
                format!("{:.5} ticks", lambda.big_lambda),
            ),
            check(
                "rho (A/B = 0.7985)",
                format!("{rho_table:.5e}") == "2.03535e-5" && (rho_table / 2.0354e-5 - 1.0).abs() < 5e-5,
                format!("{rho_table:.6e} /s"),
            ),
            check(
                "rho (raw A, B)",
                (rho_raw / 2.0354e-5 - 1.0).abs() < 1e-4,
                format!("{rho_raw:.6e} /s"),
            ),
            check("half-life", (hl - 1.720).abs() < 5e-4, format!("{hl:.4} days")),
            check(
                "eta bps",
                (truncate(eta_bps, 5) - 0.00226).abs() < 1e-12,
                format!("{eta_bps:.6}"),
            ),
            check(
                "lambda bps",
                (truncate(lambda_bps, 4) - 0.0032).abs() < 1e-12,
                format!("{lambda_bps:.6}"),
            ),
        ],
    );
}

#[test]
fn criterion_5_hawkes_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_ll, mut worst_grad) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let b = rng.random_range(0.5..5.0);
        let truth = HawkesParameters::new(rng.random_range(0.2..1.0), rng.random_range(0.1..0.8) * b, b).unwrap();
        let sim = simulate(&truth, 20_000.0, 100 + i).unwrap();
        let times: Vec<f64> = sim.times.iter().copied().take(1000).collect();
        assert_eq!(times.len(), 1000);
        let horizon = times[999] + 1.0;
        let ev = EventTimes::new(times, horizon).unwrap();
        let at = HawkesParameters::new(
            truth.nu * rng.random_range(0.7..1.3),
            truth.a * rng.random_range(0.7..1.3),
            truth.b * rng.random_range(0.9..1.3),
        )
        .unwrap();
        let fast = log_likelihood(&at, &ev).unwrap();
        let slow = log_likelihood_direct(&at, &ev).unwrap();
        worst_ll = worst_ll.max((fast - slow).abs() / slow.abs());
        let g = gradient(&at, &ev).unwrap();
        let x = [at.nu, at.a, at.b];
        for j in 0..3 {
            let h = 1e-5 * x[j];
            let eval = |d: f64| {
                let mut y = x;
                y[j] += d;
                log_likelihood(&HawkesParameters::new(y[0], y[1], y[2]).unwrap(), &ev).unwrap()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let denom = g[j].abs().max(1e-3 * fast.abs() / x[j]);
            worst_grad = worst_grad.max((g[j] - fd).abs() / denom);
        }
    }
    verdict(
        5,
        &[
            check("recursive = direct", worst_ll <= 1e-9, format!("max rel {worst_ll:.2e}")),
            check("gradient = finite differences", worst_grad <= 1e-5, format!("max rel {worst_grad:.2e}")),
        ],
    );
}

fn oracle_book(levels: Vec<LevelFlow>, session: f64, seed: u64) -> MarketSpec {
    MarketSpec {
        sell: None,
        buy: None,
        market_order_size: 1.0,
        levels,
        monitor_rate: 0.0,
        monitor_law: MonitorLaw::Grid,
        b0: 0.0,
        b1: 0.0,
        memory: ImbalanceMemory::Cumulative,
        tick_size: 0.01,
        initial_bid: 10_000,
        session_length: session,
        seed,
    }
}

fn replay_spec(spec: &MarketSpec) -> transient_impact::DerivedStreams {
    let g = generate(spec).unwrap();
    let cfg = ReplayConfig {
        session: SessionWindow {
            start: 0.0,
            end: spec.session_length,
        },
        memory: spec.memory,
        max_levels: spec.levels.len(),
        ..ReplayConfig::default()
    };
    replay(&g.events, cfg).unwrap()
}

#[test]
fn criterion_6_simulate_then_recover() {
    let start = Instant::now();
    let mut checks = Vec::new();

    // Hawkes: deep single-level book so every market order executes.
    let truth = HawkesParameters::new(0.2, 8.6, 10.8).unwrap();
    let spec = MarketSpec {
        sell: Some(truth),
        buy: Some(truth),
        ..oracle_book(
            vec![LevelFlow {
                mu_plus: 2.0,
                mu_minus: 0.05,
                mean_size: 10.0,
            }],
            54_000.0,
            61,
        )
    };
    let d = replay_spec(&spec);
    let sells = d.event_times(Direction::Sell).unwrap();
    let fit = fit_mle(&sells, None, &FitOptions::default()).unwrap().params;
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let worst = rel(fit.nu, truth.nu).max(rel(fit.a, truth.a)).max(rel(fit.b, truth.b));
    checks.push(check(
        "Hawkes within 5%",
        worst <= 0.05 && sells.len() >= 50_000,
        format!(
            "n = {}, (nu, A, B) = ({:.4}, {:.3}, {:.3})",
            sells.len(),
            fit.nu,
            fit.a,
            fit.b
        ),
    ));

    // Linear book: q_1 = 500, q_i = 1000, so O_i = 0.5 + 0.001 Q_i.
    let mut levels = vec![LevelFlow {
        mu_plus: 1.0,
        mu_minus: 0.2,
        mean_size: 100.0,
    }];
    levels.extend((0..7).map(|_| LevelFlow {
        mu_plus: 2.0,
        mu_minus: 0.2,
        mean_size: 100.0,
    }));
    let d = replay_spec(&oracle_book(levels, 20_000.0, 62));
    let eta: Vec<f64> = [Side::Bid, Side::Ask]
        .iter()
        .map(|&s| estimate_eta(d.levels(s)).unwrap().eta)
        .collect();
    checks.push(check(
        "eta within 5%",
        eta.iter().all(|e| rel(*e, 0.001) <= 0.05),
        format!("bid {:.6}, ask {:.6}", eta[0], eta[1]),
    ));

    // Logistic: one-second grid monitor with per-window imbalance.
    let (b0, b1) = (0.0697, 0.7624);
    let flow = HawkesParameters::new(0.5, 0.5, 1.0).unwrap();
    let spec = MarketSpec {
        sell: Some(flow),
        buy: Some(flow),
        market_order_size: 5.0,
        monitor_rate: 1.0,
        b0,
        b1,
        memory: ImbalanceMemory::PerWindow,
        ..oracle_book(
            vec![
                LevelFlow {
                    mu_plus: 3.0,
                    mu_minus: 0.1,
                    mean_size: 100.0,
                },
                LevelFlow {
                    mu_plus: 1.0,
                    mu_minus: 0.1,
                    mean_size: 100.0,
                },
            ],
            10_000.0,
            63,
        )
    };
    let d = replay_spec(&spec);
    let fit = fit_logistic(&d.imbalance).unwrap();
    checks.push(check(
        "logistic within 2 SE",
        (fit.b0 - b0).abs() <= 2.0 * fit.se_b0 && (fit.b1 - b1).abs() <= 2.0 * fit.se_b1,
        format!(
            "B0 {:.4} +- {:.4}, B1 {:.4} +- {:.4}, n = {}",
            fit.b0, fit.se_b0, fit.b1, fit.se_b1, fit.n_samples
        ),
    ));
    let secs = start.elapsed().as_secs_f64();
    checks.push(check("runtime", secs < 120.0, format!("{secs:.1} s")));
    verdict(6, &checks);
}

fn intc_record() -> ParameterRecord {
    let stock = StockConfig {
        id: "INTC".into(),
        reference_price: 48.625,
        x0: Some(199_400.0),
        eta_bps: Some(0.00226),
        lambda_bps: Some(0.0032),
        rho: Some(2.0354e-5),
        ..StockConfig::default()
    };
    ParameterRecord::from_inline(&stock, &ReportConfig::default())
        .unwrap()
        .unwrap()
}

#[test]
fn criterion_7_cost_comparison() {
    let (c, _) = report::compare(&intc_record(), 199_400.0, 19_800.0, 4097).unwrap();
    let (all, ins, tmp) = (c.all.pct_of_notional, c.ins.pct_of_notional, c.tmp.pct_of_notional);
    let ratio = c.ins.total / c.all.total;
    verdict(
        7,
        &[
            check(
                "improvement 7.479 +- 0.5",
                (c.improvement - 7.479).abs() <= 0.5,
                format!("{:.3}%", c.improvement),
            ),
            check(
                "C_ALL < C_INS < C_TMP",
                all < ins && ins < tmp,
                format!("ALL {all:.3e}%, INS {ins:.3e}%, TMP {tmp:.3e}% of notional"),
            ),
            check("C_INS/C_ALL 1.081 +- 0.02", (ratio - 1.081).abs() <= 0.02, format!("{ratio:.4}")),
        ],
    );
}

#[test]
fn criterion_8_summary_tables() {
    let dir = tempfile::tempdir().unwrap();
    let stats = report::cmd_summary(
        &[data("per_stock_results.tsv")],
        &[],
        report::PercentileMethod::default(),
        dir.path(),
    ).unwrap();
    let get = |name: &str| stats.iter().find(|(n, _)| n == name).unwrap().1;
    let (inst, perm, hl, cost) = (
        get("instantaneous"),
        get("permanent"),
        get("half_life_days"),
        get("cost_improvement"),
    );
    let near = |x: f64, target: f64, tol: f64| (x - target).abs() <= tol;
    verdict(
        8,
        &[
            check("n = 100", cost.n == 100, format!("{}", cost.n)),
            check("instantaneous mean 0.022", near(inst.mean, 0.022, 1e-3), format!("{:.5}", inst.mean)),
            check("permanent mean 0.008", near(perm.mean, 0.008, 1e-3), format!("{:.5}", perm.mean)),
            check("half-life mean 0.608", near(hl.mean, 0.608, 1e-3), format!("{:.5}", hl.mean)),
            check("improvement max 8.760", near(cost.max, 8.760, 5e-4), format!("{:.3}", cost.max)),
            check("improvement min 1.839", near(cost.min, 1.839, 5e-4), format!("{:.3}", cost.min)),
            check("improvement mean 3.149", near(cost.mean, 3.149, 5e-4), format!("{:.5}", cost.mean)),
            check("improvement sd 1.068", near(cost.sd, 1.068, 5e-4), format!("{:.5}", cost.sd)),
        ],
    );
}

#[test]
fn criterion_9_pipeline_determinism() {
    let cfg = ReportConfig::load(&data("fixture.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = report::cmd_calibrate(&cfg, &a).unwrap();
    report::cmd_calibrate(&cfg, &b).unwrap();
    let files = [
        "parameters.tsv",
        "errors.tsv",
        "SIM/levels.tsv",
        "SIM/counts.tsv",
        "SIM/logistic_plot.tsv",
    ];
    let mut identical = true;
    for f in files {
        identical &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    }
    verdict(
        9,
        &[
            check("one record", ra.records.len() == 1, format!("{} records", ra.records.len())),
            check("byte-identical outputs", identical, format!("{} files compared", files.len())),
        ],
    );
}
