//! Acceptance checks. Prints one PASS/FAIL line per criterion; with
//! `--strict` the process also exits non-zero if any criterion fails.
//!
//! cargo test -p uwbbounds --release --test acceptance [-- --strict]

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng as _;
use uwbbounds_cli::oracle_suite::run_oracle_suite;
use uwbbounds_cli::{parse_config, run_sweep, ResultRow, RunOptions};
use uwbbounds_core::bounds::{
    distance_distribution, estimate_overlap, estimate_theta, lower_bound, lower_bound_with, upper_bound,
    upper_bound_with, H1Choice, LogEstimate, LowerBoundOptions, Scenario,
};
use uwbbounds_core::mc::{estimator, substream, StreamContext, StreamKey, DEFAULT_LEVEL};
use uwbbounds_core::model::{leading_ones, Amplitudes, ChannelRealization, Preset, ScenarioConfig};
use uwbbounds_core::exact::exact_lower_bound;
use uwbbounds_core::BoundKind;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn desk() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    Preset::Desk.apply(&mut cfg);
    cfg
}

fn c1_oracle() -> Outcome {
    let outcomes = run_oracle_suite(50, 0);
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.index).collect();
    let quad = outcomes
        .iter()
        .flat_map(|o| &o.checks)
        .filter(|c| c.mode == "quadrature")
        .count();
    let max_dim = outcomes.iter().map(|o| o.dim).max().unwrap_or(0);
    let max_nodes = outcomes.iter().map(|o| o.nodes).max().unwrap_or(0);
    outcome(
        failed.is_empty() && max_dim <= 4 && max_nodes <= 3,
        format!(
            "{} instances (I<=3, MN<=4), {quad} also by quadrature (1e-4 rel), MC within 3 SE; failed {failed:?}",
            outcomes.len()
        ),
    )
}

fn c2_analytic() -> Outcome {
    let mut worst_theta = 0f64;
    let mut worst_rate = 0f64;
    for (eta, amp, noise_var, h) in [
        (0.5, 1.0, 1.0, 1.0),
        (0.5, 2.0, 0.5, -0.7),
        (0.2, 0.3, 0.1, 1.5),
        (0.9, 1.7, 3.0, 0.2),
        (0.05, 4.0, 0.05, -1.9),
    ] {
        let cfg = ScenarioConfig {
            num_nodes: 1,
            codeword_len: 1,
            taps: 1,
            duty_cycles: vec![eta],
            interferer_distances_m: vec![],
            noise_var_w: noise_var,
            captured_energy_fraction: 1.0,
            total_path_count: 1,
            samples_theta: 2,
            samples_pd: 2,
            samples_upper: 2,
            ..ScenarioConfig::default()
        };
        let s = Scenario::with_amplitudes(cfg, Amplitudes::new(vec![amp]).unwrap()).unwrap();
        let h1 = H1Choice::Fixed(ChannelRealization::new(vec![h]).unwrap());
        let ctx = StreamContext::new(0);
        let theta = estimate_theta(&s, &h1, &ctx).unwrap().log_mean.exp();
        let expect_theta = 1.0 / (4.0 * std::f64::consts::PI * noise_var).sqrt();
        worst_theta = worst_theta.max((theta - expect_theta).abs() / expect_theta);
        let rate = lower_bound_with(&s, &h1, &ctx, LowerBoundOptions::default()).unwrap().rate;
        let p = 2.0 * eta * (1.0 - eta);
        let expect = -(1.0 - p + p * (-(amp * h).powi(2) / (4.0 * noise_var)).exp()).log2();
        worst_rate = worst_rate.max((rate - expect).abs());
    }
    outcome(
        worst_theta <= 1e-9 && worst_rate <= 1e-9,
        format!("max rel theta error {worst_theta:.1e}, max C_l error {worst_rate:.1e} bits (tol 1e-9)"),
    )
}

fn c3_distances() -> Outcome {
    let mut worst = 0f64;
    for len in 1..=10usize {
        for eta in [0.1, 0.25, 0.5] {
            let weight = |word: u32| {
                (0..len)
                    .map(|n| if word >> n & 1 == 1 { eta } else { 1.0 - eta })
                    .product::<f64>()
            };
            let probs: Vec<f64> = (0..1u32 << len).map(weight).collect();
            let mut exact = vec![0.0; len + 1];
            for (v, pv) in probs.iter().enumerate() {
                for (w, pw) in probs.iter().enumerate() {
                    exact[(v ^ w).count_ones() as usize] += pv * pw;
                }
            }
            let fast = distance_distribution(len, eta).unwrap();
            for (a, b) in fast.probs.iter().zip(&exact) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("N<=10, eta in {{0.1,0.25,0.5}}: max abs error {worst:.1e} (tol 1e-12)"))
}

/// Relative gap `|1 - b/a|` and the combined relative 95% half-width.
fn gap(a: &LogEstimate, b: &LogEstimate) -> (f64, f64) {
    let ratio = (b.log_mean - a.log_mean).exp();
    let (ra, rb) = (a.relative_ci(DEFAULT_LEVEL).unwrap(), b.relative_ci(DEFAULT_LEVEL).unwrap());
    ((1.0 - ratio).abs(), ra + rb * ratio)
}

fn c4_invariance() -> Outcome {
    let s = Scenario::new(desk()).unwrap();
    let budget = s.config().samples_pd;
    let (ca, cb) = (StreamContext::new(1), StreamContext::new(2));
    let (ha, hb) = (H1Choice::Fixed(s.fixed_h1(&ca)), H1Choice::Fixed(s.fixed_h1(&cb)));
    let ta = estimate_theta(&s, &ha, &ca).unwrap();
    let tb = estimate_theta(&s, &hb, &cb).unwrap();
    let (g, ci) = gap(&ta, &tb);
    let mut ok = g <= ci && ha != hb;
    let mut detail = format!("(a) theta gap {g:.4} vs CI {ci:.4}");

    let len = s.config().codeword_len;
    let ctx = StreamContext::new(3);
    let h1 = s.h1_choice(&ctx);
    let silent = vec![0u8; len];
    for d in [1usize, 3] {
        let mut spread = vec![0u8; len];
        for k in 0..d {
            spread[len - 1 - 7 * k] = 1;
        }
        let a = estimate_overlap(&s, &h1, &leading_ones(d, len), &silent, &ctx, estimator::PD, 0, budget).unwrap();
        let b = estimate_overlap(&s, &h1, &spread, &silent, &ctx, estimator::PD, 1, budget).unwrap();
        let (g, ci) = gap(&a, &b);
        ok &= g <= ci;
        detail += &format!("; (b) d={d} p(d) gap {g:.4} vs CI {ci:.4}");
    }
    outcome(ok, format!("desk preset, {budget} samples: {detail}"))
}

fn c5_ordering() -> Outcome {
    let mut rng = substream(StreamKey {
        seed: 5,
        estimator_id: 0,
        stratum: 0,
        index: 0,
    });
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..20 {
        let mut cfg = desk();
        cfg.link_distance_m = rng.random_range(2.0..10.0);
        cfg.interferer_distances_m = vec![rng.random_range(1.0..100.0)];
        cfg.duty_cycles = vec![rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
        let s = Scenario::new(cfg).unwrap();
        let ctx = StreamContext::new(k);
        let lo = lower_bound(&s, &ctx).unwrap();
        let up = upper_bound(&s, &ctx).unwrap();
        let excess = lo.rate - up.rate - lo.ci_halfwidth - up.ci_halfwidth;
        worst = worst.max(excess);
        if excess > 0.0 {
            let exact = exact_lower_bound(&s, &s.fixed_h1(&ctx), LowerBoundOptions::default()).unwrap();
            violations.push(format!(
                "#{k} C_l={:.4}+-{:.1e} (exact {:.4}) C_u={:.4}+-{:.1e}",
                lo.rate, lo.ci_halfwidth, exact.rate, up.rate, up.ci_halfwidth
            ));
        }
    }
    outcome(
        violations.is_empty(),
        format!(
            "20 random desk scenarios, {} with C_l > C_u + CI (max excess {worst:.4} bits){}{}",
            violations.len(),
            if violations.is_empty() { "" } else { ": " },
            violations.join(", ")
        ),
    )
}

fn c6_gaussian() -> Outcome {
    let mut cfg = desk();
    cfg.link_distance_m = 5.0;
    cfg.interferer_distances_m = vec![10.0];
    cfg.duty_cycles = vec![0.5, 0.3];
    let with = Scenario::new(cfg.clone()).unwrap();
    // Average interference power per tap, added to the noise floor.
    let a2 = with.amplitudes().get(1);
    let extra = cfg.duty_cycles[1] * a2 * a2 * with.tap_covariance().trace() / cfg.taps as f64;
    let ctx = StreamContext::new(0);
    let h1 = H1Choice::Fixed(with.fixed_h1(&ctx));
    let gaussian = ScenarioConfig {
        num_nodes: 1,
        duty_cycles: vec![0.5],
        interferer_distances_m: vec![],
        noise_var_w: cfg.noise_var_w + extra,
        ..cfg
    };
    let s = Scenario::new(gaussian).unwrap();
    let lo = lower_bound_with(&s, &h1, &ctx, LowerBoundOptions::default()).unwrap();
    let up = upper_bound_with(&s, &h1, &ctx).unwrap();
    let diff = (lo.rate - up.rate).abs();
    let ci = lo.ci_halfwidth + up.ci_halfwidth;
    let moderate = up.rate > 0.2 && up.rate < 0.8;
    outcome(
        diff <= ci && moderate,
        format!(
            "desk, l=5 m d=10 m eta2=0.3 as white noise, raised by {:.2}x: C_l={:.4}+-{:.1e} C_u={:.4}+-{:.1e}, |diff| {diff:.4} vs CI {ci:.1e}",
            s.config().noise_var_w / cfg.noise_var_w,
            lo.rate,
            lo.ci_halfwidth,
            up.rate,
            up.ci_halfwidth
        ),
    )
}

const FIGURE_D: [f64; 10] = [1.0, 2.0, 3.0, 5.0, 8.0, 10.0, 20.0, 30.0, 50.0, 100.0];
const FIGURE_ETA2: [f64; 3] = [0.1, 0.3, 0.5];

/// Exact single-interferer evaluation: the strong-interference points are
/// dominated by rare interferer patterns that Monte-Carlo draws miss.
fn figure_rows() -> Vec<ResultRow> {
    let text = format!(
        r#"{{"lower_method": "exact", "bounds": "lower",
            "sweep": {{"l": [3, 8], "d": {FIGURE_D:?}, "eta2": {FIGURE_ETA2:?}}}}}"#
    );
    let spec = parse_config(&text, Some(Preset::Desk)).unwrap();
    assert_eq!(spec.base.duty_cycles[0], 0.5);
    run_sweep(&spec, RunOptions::default()).unwrap()
}

fn at(rows: &[ResultRow], l: f64, d: f64, eta2: f64) -> &ResultRow {
    rows.iter()
        .find(|r| r.bound == BoundKind::Lower && r.l_m == l && r.d_m == Some(d) && r.eta2 == Some(eta2))
        .unwrap()
}

fn within(a: &ResultRow, b: &ResultRow) -> bool {
    (a.rate_bits_per_symbol - b.rate_bits_per_symbol).abs() <= a.ci_halfwidth + b.ci_halfwidth
}

fn c7a(rows: &[ResultRow]) -> Outcome {
    let reference = FIGURE_ETA2.map(|e| at(rows, 3.0, 100.0, e).rate_bits_per_symbol);
    let mut worst = 0f64;
    let mut detail = Vec::new();
    for (e, r100) in FIGURE_ETA2.iter().zip(reference) {
        let rates: Vec<f64> = FIGURE_D.iter().map(|d| at(rows, 3.0, *d, *e).rate_bits_per_symbol).collect();
        let spread = (rates.iter().cloned().fold(f64::MIN, f64::max) - rates.iter().cloned().fold(f64::MAX, f64::min)) / r100;
        worst = worst.max(spread);
        detail.push(format!("eta2={e}: {:.1}%", 100.0 * spread));
    }
    outcome(worst < 0.1, format!("l=3 m spread / rate(100 m) < 10%: {}", detail.join(", ")))
}

fn c7b(rows: &[ResultRow]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for e in FIGURE_ETA2 {
        let (r30, r100) = (at(rows, 8.0, 30.0, e), at(rows, 8.0, 100.0, e));
        let far = within(r30, r100);
        let below: Vec<&ResultRow> = FIGURE_D.iter().filter(|d| **d <= 30.0).map(|d| at(rows, 8.0, *d, e)).collect();
        let decreasing = below
            .windows(2)
            .all(|w| w[0].rate_bits_per_symbol <= w[1].rate_bits_per_symbol + w[0].ci_halfwidth + w[1].ci_halfwidth);
        let near: Vec<&ResultRow> = [1.0, 2.0, 3.0, 5.0].iter().map(|d| at(rows, 8.0, *d, e)).collect();
        let flat = near.iter().enumerate().all(|(i, a)| near[i + 1..].iter().all(|b| within(a, b)));
        ok &= far && decreasing && flat;
        detail.push(format!(
            "eta2={e}: d30~d100 {} ({:.5} vs {:.5}), decreasing below 30 m {}, flat d<=5 m {}",
            far,
            r30.rate_bits_per_symbol,
            r100.rate_bits_per_symbol,
            decreasing,
            flat
        ));
    }
    outcome(ok, format!("l=8 m: {}", detail.join("; ")))
}

fn c7c(rows: &[ResultRow]) -> Outcome {
    let mut worst = f64::INFINITY;
    for r in rows.iter().filter(|r| r.bound == BoundKind::Lower) {
        let reference = at(rows, r.l_m, 100.0, r.eta2.unwrap()).rate_bits_per_symbol;
        worst = worst.min(r.rate_bits_per_symbol / reference);
    }
    outcome(worst >= 0.5, format!("min rate(d)/rate(100 m) = {worst:.3} (>= 0.5)"))
}

fn c8_ci() -> Outcome {
    let mut cfg = ScenarioConfig::default();
    Preset::Paper.apply(&mut cfg);
    cfg.link_distance_m = 5.0;
    cfg.interferer_distances_m = vec![10.0];
    cfg.duty_cycles = vec![0.5, 0.3];
    let s = Scenario::new(cfg).unwrap();
    let est = lower_bound(&s, &StreamContext::new(0)).unwrap();
    let d = est.lower.unwrap();
    outcome(
        d.theta_rel_ci < 0.1 && d.ratio_sum_rel_ci < 0.5,
        format!(
            "paper preset l=5 m d=10 m eta2=0.3: C_l={:.4}+-{:.4}, theta rel CI {:.2}% (<10%), P(err) aggregate rel CI {:.2}% (<50%), normality PPCC theta {:.4}, ln J {:.4}",
            est.rate,
            est.ci_halfwidth,
            100.0 * d.theta_rel_ci,
            100.0 * d.ratio_sum_rel_ci,
            d.theta_normality,
            d.aggregate_log_normality
        ),
    )
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"sweep": {"l": [3, 8], "d": [1, 10, 100], "eta2": [0.1, 0.5]}}"#).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_uwbbounds"))
            .env("UWBBOUNDS_THREADS", threads)
            .args(["run", "--preset", "desk", "--seed", "11", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(std::fs::read(out).unwrap());
    }
    let same = outputs[0] == outputs[1];
    outcome(same, format!("desk sweep of 12 points, UWBBOUNDS_THREADS=1 vs 4: {} bytes, identical {same}", outputs[0].len()))
}

fn timed(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let passed = o.passed && elapsed <= limit;
    println!(
        "{} {name}: {} [{:.1} s, limit {} s]",
        if passed { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    passed
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut results = vec![
        timed("1 closed form vs oracle", min(5), c1_oracle),
        timed("2 analytic regression", min(1), c2_analytic),
        timed("3 distance distribution", min(1), c3_distances),
        timed("4 overlap invariance", min(15), c4_invariance),
        timed("5 bound ordering", min(30), c5_ordering),
        timed("6 gaussian-interference coincidence", min(30), c6_gaussian),
    ];
    let start = Instant::now();
    let rows = figure_rows();
    let sweep = start.elapsed();
    let figure_limit = min(120).saturating_sub(sweep);
    println!("     figure sweep: desk preset, eta1=0.5, exact evaluation (CI 0), {:.1} s", sweep.as_secs_f64());
    results.push(timed("7a figure shape l=3 m", figure_limit, || c7a(&rows)));
    results.push(timed("7b figure shape l=8 m", figure_limit, || c7b(&rows)));
    results.push(timed("7c rate drop at most 50%", figure_limit, || c7c(&rows)));
    results.push(timed("8 CI methodology", min(120), c8_ci));
    results.push(timed("9 determinism", min(10), c9_determinism));
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    // Cargo stops at the first failing test binary, so failures only set the
    // exit code on request and the rest of the workspace suite still runs.
    let strict = std::env::args().any(|a| a == "--strict");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
