//! Rate bounds.
//!
//! The lower bound comes from random coding with a threshold decoder: with
//! `theta = E[J([0, U], [0, V], h_1)]` and `p(d) = E[J([e_d, U], [0, V], h_1)]`
//! (expectations over independent interferer codewords `U`, `V`),
//!
//! ```text
//! C_l = -(1/N) log2( sum_d P(|u - v| = d) p(d) / theta )
//! ```
//!
//! Each `p(d)` is its own stratum with its own substreams, and `p(0)` is the
//! `theta` estimate itself. Within a distance, draws are further stratified
//! on the pulse count of the first interferer (see [`estimate_overlap`]). The upper bound is the mutual information of the
//! intended link when the receiver is told the interferer symbols, so only
//! white noise remains.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::exact::exact_lower_bound;
use crate::gaussian::{low_rank_log_pdf, Component};
use rayon::prelude::*;

use crate::mc::{
    estimator, gaussian_ci, log_add_exp, log_sum_exp, normal_ppcc, par_samples, substream,
    t_quantile, LogAccumulator, SampleStats, StreamContext, DEFAULT_LEVEL,
};
use crate::model::{
    leading_ones, sample_channel, Amplitudes, ChannelRealization, H1Mode, LowerMethod, ScenarioConfig,
    TapCovariance,
};

/// A validated scenario with its derived amplitudes and tap covariance.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    amplitudes: Amplitudes,
    tap_cov: TapCovariance,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let amplitudes = config.amplitudes()?;
        let tap_cov = config.tap_covariance()?;
        Ok(Self {
            config,
            amplitudes,
            tap_cov,
        })
    }

    /// Scenario with explicit amplitudes, bypassing the path-loss model.
    pub fn with_amplitudes(config: ScenarioConfig, amplitudes: Amplitudes) -> Result<Self> {
        config.validate()?;
        if amplitudes.len() != config.num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} nodes",
                amplitudes.len(),
                config.num_nodes
            )));
        }
        let tap_cov = config.tap_covariance()?;
        Ok(Self {
            config,
            amplitudes,
            tap_cov,
        })
    }

    /// Scenario with an explicit tap covariance.
    pub fn with_tap_covariance(mut self, tap_cov: TapCovariance) -> Result<Self> {
        if tap_cov.dim() != self.config.taps {
            return Err(Error::DimensionMismatch("tap covariance does not match taps".into()));
        }
        self.tap_cov = tap_cov;
        Ok(self)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn amplitudes(&self) -> &Amplitudes {
        &self.amplitudes
    }

    pub fn tap_covariance(&self) -> &TapCovariance {
        &self.tap_cov
    }

    /// The seeded `h_1` shared by every point of a run.
    pub fn fixed_h1(&self, ctx: &StreamContext) -> ChannelRealization {
        let mut rng = substream(ctx.shared_key(estimator::CHANNEL, 0, 0));
        sample_channel(&self.tap_cov, &mut rng)
    }

    /// `h_1` choice implied by the configured mode.
    pub fn h1_choice(&self, ctx: &StreamContext) -> H1Choice {
        match self.config.h1_mode {
            H1Mode::FixedDraw => H1Choice::Fixed(self.fixed_h1(ctx)),
            H1Mode::Averaged => H1Choice::Averaged,
        }
    }
}

/// Where each Monte-Carlo sample takes `h_1` from.
#[derive(Debug, Clone, PartialEq)]
pub enum H1Choice {
    Fixed(ChannelRealization),
    Averaged,
}

impl H1Choice {
    fn get<R: Rng + ?Sized>(&self, tap_cov: &TapCovariance, rng: &mut R) -> ChannelRealization {
        match self {
            H1Choice::Fixed(h) => h.clone(),
            H1Choice::Averaged => sample_channel(tap_cov, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Lower,
    Upper,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        }
    }
}

/// `P(|v - w| = d)` for two independent random codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceDistribution {
    pub probs: Vec<f64>,
}

impl DistanceDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn distance_distribution(len: usize, eta: f64) -> Result<DistanceDistribution> {
    if len < 1 {
        return Err(invalid("codeword_len", "must be at least 1"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid("duty_cycle", format!("{eta} is outside (0, 1)")));
    }
    let ln_differ = (2.0 * eta * (1.0 - eta)).ln();
    let ln_agree = (eta * eta + (1.0 - eta) * (1.0 - eta)).ln();
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=len).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    let probs = (0..=len)
        .map(|d| {
            let ln_binom = ln_fact[len] - ln_fact[d] - ln_fact[len - d];
            (ln_binom + d as f64 * ln_differ + (len - d) as f64 * ln_agree).exp()
        })
        .collect();
    Ok(DistanceDistribution { probs })
}

/// Pilot draws per pulse-count stratum before the remaining budget is
/// allocated.
const PILOT: usize = 2;

/// Draws that share one pulse count of the first interferer's two rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStratum {
    /// `|U_2| + |V_2|`, or `None` when every row is drawn i.i.d.
    pub weight: Option<usize>,
    /// `ln` of the stratum probability.
    pub log_prob: f64,
    /// Per-draw `ln J`, in draw order.
    pub log_samples: Vec<f64>,
}

/// Monte-Carlo estimate of `E[J]`, kept in the log domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEstimate {
    pub log_mean: f64,
    /// Standard error of `log_mean` (delta method).
    pub log_std_error: f64,
    /// Welch-Satterthwaite degrees of freedom of the variance estimate.
    pub dof: f64,
    pub samples: usize,
    pub strata: Vec<WeightStratum>,
}

impl LogEstimate {
    fn from_strata(strata: Vec<WeightStratum>) -> Result<Self> {
        let mut means = Vec::with_capacity(strata.len());
        let mut var_terms = Vec::with_capacity(strata.len());
        let mut samples = 0;
        for st in &strata {
            let acc = LogAccumulator::from_log_samples(&st.log_samples)?;
            samples += acc.count();
            means.push(st.log_prob + acc.log_mean()?);
            if acc.count() >= 2 {
                let n = acc.count() as f64;
                var_terms.push((2.0 * st.log_prob + acc.log_variance()? - n.ln(), n - 1.0));
            }
        }
        let log_mean = log_sum_exp(&means);
        let logs: Vec<f64> = var_terms.iter().map(|(v, _)| *v).collect();
        let log_var = log_sum_exp(&logs);
        let log_std_error = (0.5 * (log_var - 2.0 * log_mean)).exp();
        let denom: f64 = var_terms
            .iter()
            .map(|(v, df)| (2.0 * (v - log_var)).exp() / df)
            .sum();
        let dof = if log_var.is_finite() && denom > 0.0 {
            1.0 / denom
        } else {
            (samples.max(2) - 1) as f64
        };
        Ok(Self {
            log_mean,
            log_std_error,
            dof,
            samples,
            strata,
        })
    }

    pub fn count(&self) -> usize {
        self.samples
    }

    /// Variance of the estimator relative to its squared mean.
    pub fn relative_variance(&self) -> f64 {
        self.log_std_error * self.log_std_error
    }

    /// Half-width of the Student-t interval on the mean, relative to the mean.
    pub fn relative_ci(&self, level: f64) -> Result<f64> {
        if self.log_std_error == 0.0 {
            return Ok(0.0);
        }
        Ok(t_quantile(level, self.dof)? * self.log_std_error)
    }

    /// Every draw's `ln J`, stratum by stratum.
    pub fn log_samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.strata.iter().flat_map(|s| s.log_samples.iter().copied())
    }

    /// Draws standardized within their stratum, on the raw or the log scale;
    /// strata with fewer than three draws or no spread are left out.
    pub fn standardized_residuals(&self, log_scale: bool) -> Vec<f64> {
        let mut out = Vec::new();
        for st in self.strata.iter().filter(|s| s.log_samples.len() >= 3) {
            let top = st.log_samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let values: Vec<f64> = if log_scale {
                st.log_samples.clone()
            } else {
                st.log_samples.iter().map(|l| (l - top).exp()).collect()
            };
            if let Ok(stats) = SampleStats::from_slice(&values) {
                if stats.variance > 0.0 {
                    let sd = stats.variance.sqrt();
                    out.extend(values.iter().map(|v| (v - stats.mean) / sd));
                }
            }
        }
        out
    }

    /// Normality statistic of the within-stratum residuals; `NaN` when there
    /// is nothing to test (deterministic estimate).
    pub fn normality(&self, log_scale: bool) -> f64 {
        normal_ppcc(&self.standardized_residuals(log_scale)).unwrap_or(f64::NAN)
    }
}

/// Draws `J([tx_v, U], [tx_w, V], h_1)`; draw `k` of pulse-count stratum `s`
/// comes from substream `(estimator_id, (stratum << 32) | (s + 1), k)`, plain
/// draws from `(estimator_id, stratum << 32, k)`.
struct OverlapSampler<'a> {
    scenario: &'a Scenario,
    h1: &'a H1Choice,
    tx_v: &'a [u8],
    tx_w: &'a [u8],
    ctx: &'a StreamContext,
    estimator_id: u32,
    stratum: u64,
    draws: Vec<Bernoulli>,
}

impl<'a> OverlapSampler<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        scenario: &'a Scenario,
        h1: &'a H1Choice,
        tx_v: &'a [u8],
        tx_w: &'a [u8],
        ctx: &'a StreamContext,
        estimator_id: u32,
        stratum: u64,
    ) -> Result<Self> {
        let cfg = &scenario.config;
        let len = cfg.codeword_len;
        if tx_v.len() != len || tx_w.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "transmitter rows must have length {len}"
            )));
        }
        let draws = cfg.duty_cycles[1..]
            .iter()
            .map(|&eta| Bernoulli::new(eta).map_err(|e| invalid("duty_cycles", e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self {
            scenario,
            h1,
            tx_v,
            tx_w,
            ctx,
            estimator_id,
            stratum,
            draws,
        })
    }

    fn interferers(&self) -> usize {
        self.scenario.config.num_nodes - 1
    }

    fn draw(&self, weight: Option<usize>, k: usize) -> Result<f64> {
        let cfg = &self.scenario.config;
        let (len, taps) = (cfg.codeword_len, cfg.taps);
        let amps = &self.scenario.amplitudes;
        let tap_cov = &self.scenario.tap_cov;
        let interferers = self.interferers();
        let sub = (self.stratum << 32) | weight.map_or(0, |s| s as u64 + 1);
        let mut rng = substream(self.ctx.key(self.estimator_id, sub, k as u64));
        let h = self.h1.get(tap_cov, &mut rng);
        // rows r and r + I - 1 belong to interferer r; row 0 and I - 1 form the
        // stratified pair
        let mut rows = vec![vec![0u8; len]; 2 * interferers];
        for (r, row) in rows.iter_mut().enumerate() {
            if weight.is_some() && r % interferers == 0 {
                continue;
            }
            for b in row.iter_mut() {
                *b = u8::from(self.draws[r % interferers].sample(&mut rng));
            }
        }
        if let Some(s) = weight {
            for slot in rand::seq::index::sample(&mut rng, 2 * len, s) {
                let (r, n) = if slot < len { (0, slot) } else { (interferers, slot - len) };
                rows[r][n] = 1;
            }
        }
        let mut x = vec![0.0; len * taps];
        for n in 0..len {
            let diff = self.tx_v[n] as f64 - self.tx_w[n] as f64;
            if diff != 0.0 {
                for (t, &ht) in h.taps.iter().enumerate() {
                    x[n * taps + t] = diff * amps.get(0) * ht;
                }
            }
        }
        let comps: Vec<Component<'_>> = rows
            .iter()
            .enumerate()
            .map(|(r, symbols)| Component {
                amplitude: amps.get(1 + r % interferers),
                symbols,
            })
            .collect();
        low_rank_log_pdf(&x, 2.0 * cfg.noise_var_w, &comps, tap_cov)
    }

    fn draw_all(&self, jobs: &[(Option<usize>, usize)]) -> Result<Vec<f64>> {
        jobs.par_iter().map(|&(w, k)| self.draw(w, k)).collect()
    }
}

/// Plain log-samples of `J([tx_v, U], [tx_w, V], h_1)` over i.i.d.
/// interferer codewords `U`, `V` (and `h_1` when averaged).
#[allow(clippy::too_many_arguments)]
pub fn overlap_samples(
    scenario: &Scenario,
    h1: &H1Choice,
    tx_v: &[u8],
    tx_w: &[u8],
    ctx: &StreamContext,
    estimator_id: u32,
    stratum: u64,
    samples: usize,
) -> Result<Vec<f64>> {
    if samples < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: samples });
    }
    let sampler = OverlapSampler::new(scenario, h1, tx_v, tx_w, ctx, estimator_id, stratum)?;
    let jobs: Vec<(Option<usize>, usize)> = (0..samples).map(|k| (None, k)).collect();
    sampler.draw_all(&jobs)
}

/// `ln` of the binomial law of `|U_2| + |V_2|` over `2N` slots.
fn pair_weight_law(len: usize, eta: f64) -> Vec<f64> {
    let slots = 2 * len;
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=slots).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    (0..=slots)
        .map(|s| {
            ln_fact[slots] - ln_fact[s] - ln_fact[slots - s]
                + s as f64 * eta.ln()
                + (slots - s) as f64 * (1.0 - eta).ln()
        })
        .collect()
}

/// Estimate `E[J([tx_v, U], [tx_w, V], h_1)]` with `budget` draws.
///
/// With an active interferer and enough budget the draws are stratified on
/// the pulse count of the first interferer's two rows: given the count, the
/// pulses sit uniformly on the `2N` slots. Each stratum gets a pilot (a single
/// draw for the two one-configuration strata), and the rest of the budget is
/// split half by Neyman allocation on the pilot spread, half in proportion to
/// the stratum probability. This keeps rare low-count configurations, which
/// dominate the mean under strong sparse interference, from being missed.
/// Otherwise the draws are plain i.i.d.
#[allow(clippy::too_many_arguments)]
pub fn estimate_overlap(
    scenario: &Scenario,
    h1: &H1Choice,
    tx_v: &[u8],
    tx_w: &[u8],
    ctx: &StreamContext,
    estimator_id: u32,
    stratum: u64,
    budget: usize,
) -> Result<LogEstimate> {
    if budget < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: budget });
    }
    let sampler = OverlapSampler::new(scenario, h1, tx_v, tx_w, ctx, estimator_id, stratum)?;
    let len = scenario.config.codeword_len;
    let slots = 2 * len;
    let pilot: Vec<usize> = (0..=slots)
        .map(|s| if s == 0 || s == slots { 1 } else { PILOT })
        .collect();
    let pilot_total: usize = pilot.iter().sum();
    let active = sampler.interferers() > 0 && scenario.amplitudes.get(1) > 0.0;
    if !active || budget < 2 * pilot_total {
        let jobs: Vec<(Option<usize>, usize)> = (0..budget).map(|k| (None, k)).collect();
        return LogEstimate::from_strata(vec![WeightStratum {
            weight: None,
            log_prob: 0.0,
            log_samples: sampler.draw_all(&jobs)?,
        }]);
    }

    let log_probs = pair_weight_law(len, scenario.config.duty_cycles[1]);
    let jobs: Vec<(Option<usize>, usize)> = (0..=slots)
        .flat_map(|s| (0..pilot[s]).map(move |k| (Some(s), k)))
        .collect();
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); slots + 1];
    for (&(s, _), v) in jobs.iter().zip(sampler.draw_all(&jobs)?) {
        samples[s.expect("stratified job")].push(v);
    }

    // allocation over the strata with more than one configuration
    let inner = 1..slots;
    let spread: Vec<f64> = inner
        .clone()
        .map(|s| -> Result<f64> {
            let acc = LogAccumulator::from_log_samples(&samples[s])?;
            Ok(log_probs[s] + 0.5 * acc.log_variance()?)
        })
        .collect::<Result<_>>()?;
    let prop: Vec<f64> = inner.clone().map(|s| log_probs[s]).collect();
    let normalize = |v: &[f64]| -> Vec<f64> {
        let total = log_sum_exp(v);
        v.iter().map(|x| (x - total).exp()).collect()
    };
    let prop = normalize(&prop);
    let neyman = if spread.iter().any(|x| x.is_finite()) {
        normalize(&spread)
    } else {
        prop.clone()
    };
    let remaining = budget - pilot_total;
    let shares: Vec<f64> = neyman
        .iter()
        .zip(&prop)
        .map(|(a, b)| remaining as f64 * 0.5 * (a + b))
        .collect();
    let mut extra: Vec<usize> = shares.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    let short = remaining - extra.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        extra[i] += 1;
    }

    let jobs: Vec<(Option<usize>, usize)> = inner
        .clone()
        .zip(&extra)
        .flat_map(|(s, &n)| (pilot[s]..pilot[s] + n).map(move |k| (Some(s), k)))
        .collect();
    for (&(s, _), v) in jobs.iter().zip(sampler.draw_all(&jobs)?) {
        samples[s.expect("stratified job")].push(v);
    }
    LogEstimate::from_strata(
        samples
            .into_iter()
            .enumerate()
            .map(|(s, log_samples)| WeightStratum {
                weight: Some(s),
                log_prob: log_probs[s],
                log_samples,
            })
            .collect(),
    )
}

/// `theta`, estimated with `samples_theta` draws.
pub fn estimate_theta(scenario: &Scenario, h1: &H1Choice, ctx: &StreamContext) -> Result<LogEstimate> {
    let silent = vec![0u8; scenario.config.codeword_len];
    estimate_overlap(
        scenario,
        h1,
        &silent,
        &silent,
        ctx,
        estimator::THETA,
        0,
        scenario.config.samples_theta,
    )
}

/// `p(d)` with transmitter rows `e_d` (leading ones) and `e_0`; `p(0)` reuses
/// the `theta` draws exactly.
pub fn estimate_pd(
    scenario: &Scenario,
    h1: &H1Choice,
    d: usize,
    ctx: &StreamContext,
) -> Result<LogEstimate> {
    let len = scenario.config.codeword_len;
    if d > len {
        return Err(invalid("d", format!("{d} exceeds codeword length {len}")));
    }
    if d == 0 {
        return estimate_theta(scenario, h1, ctx);
    }
    estimate_overlap(
        scenario,
        h1,
        &leading_ones(d, len),
        &vec![0u8; len],
        ctx,
        estimator::PD,
        d as u64,
        scenario.config.samples_pd,
    )
}

/// Knobs for [`lower_bound_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundOptions {
    /// Skip the least likely distance strata while their total probability
    /// stays below this mass. Zero evaluates every stratum.
    pub tail_mass: f64,
    pub level: f64,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        Self {
            tail_mass: 0.0,
            level: DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumSummary {
    pub d: usize,
    pub prob: f64,
    pub log_pd: f64,
    pub log_std_error: f64,
    pub samples: usize,
}

/// Intermediate quantities of a lower-bound estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerDiagnostics {
    pub codeword_len: usize,
    pub log_theta: f64,
    pub theta_log_std_error: f64,
    /// Relative half-width of the confidence interval on `theta`.
    pub theta_rel_ci: f64,
    pub strata: Vec<StratumSummary>,
    /// `ln sum_d P(d) p(d) / theta`.
    pub log_ratio_sum: f64,
    /// Standard error of `log_ratio_sum` (delta method).
    pub log_ratio_sum_std_error: f64,
    /// Relative half-width of the log-normal interval
    /// `Q exp(+-t se)` on `Q = sum_d P(d) p(d) / theta`; this is also the
    /// relative interval on the error-probability bound.
    pub ratio_sum_rel_ci: f64,
    /// Degrees of freedom behind the `t` quantile.
    pub dof: f64,
    /// Normal probability-plot correlation of the `theta` draws.
    pub theta_normality: f64,
    /// Normal probability-plot correlation of the `ln J` draws pooled over
    /// all distances.
    pub aggregate_log_normality: f64,
    /// Probability mass of skipped distances.
    pub neglected_mass: f64,
    /// Rate before clamping at zero.
    pub unclamped_rate: f64,
}

impl LowerDiagnostics {
    /// `log2` of the union/Markov bound on the error probability at code rate
    /// `rate` (bits per symbol).
    pub fn log2_error_bound(&self, rate: f64) -> f64 {
        rate * self.codeword_len as f64 + self.log_ratio_sum / LN_2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEstimate {
    pub kind: BoundKind,
    /// Bits per symbol.
    pub rate: f64,
    pub ci_halfwidth: f64,
    pub samples_used: usize,
    pub lower: Option<LowerDiagnostics>,
}

/// Lower bound with the configured `h_1` mode and default options.
pub fn lower_bound(scenario: &Scenario, ctx: &StreamContext) -> Result<BoundEstimate> {
    lower_bound_with(scenario, &scenario.h1_choice(ctx), ctx, LowerBoundOptions::default())
}

/// Distances left out because their total probability stays below
/// `tail_mass`, least likely first, and the mass they carry.
pub(crate) fn skipped_distances(dist: &DistanceDistribution, tail_mass: f64) -> (Vec<bool>, f64) {
    let len = dist.len() - 1;
    let mut order: Vec<usize> = (1..=len).collect();
    order.sort_by(|a, b| dist.probs[*a].total_cmp(&dist.probs[*b]).then(a.cmp(b)));
    let mut skipped = vec![false; len + 1];
    let mut neglected_mass = 0.0;
    for d in order {
        if neglected_mass + dist.probs[d] > tail_mass {
            break;
        }
        neglected_mass += dist.probs[d];
        skipped[d] = true;
    }
    (skipped, neglected_mass)
}

/// Lower bound for an explicit `h_1` choice. Single-interferer scenarios
/// configured with [`LowerMethod::Exact`] are evaluated without sampling.
pub fn lower_bound_with(
    scenario: &Scenario,
    h1: &H1Choice,
    ctx: &StreamContext,
    opts: LowerBoundOptions,
) -> Result<BoundEstimate> {
    let cfg = &scenario.config;
    if cfg.lower_method == LowerMethod::Exact && cfg.num_nodes == 2 {
        return match h1 {
            H1Choice::Fixed(h) => exact_lower_bound(scenario, h, opts),
            H1Choice::Averaged => Err(invalid("lower_method", "exact evaluation needs a fixed h_1")),
        };
    }
    let len = cfg.codeword_len;
    let dist = distance_distribution(len, cfg.duty_cycles[0])?;
    let (skipped, neglected_mass) = skipped_distances(&dist, opts.tail_mass);

    let theta = estimate_theta(scenario, h1, ctx)?;
    let strata: Vec<(usize, LogEstimate)> = (1..=len)
        .filter(|&d| !skipped[d])
        .map(|d| estimate_pd(scenario, h1, d, ctx).map(|e| (d, e)))
        .collect::<Result<_>>()?;

    let ln_p0 = dist.probs[0].ln();
    let weighted: Vec<f64> = strata
        .iter()
        .map(|(d, e)| dist.probs[*d].ln() + e.log_mean)
        .collect();
    let log_s1 = log_sum_exp(&weighted);
    let log_ratio_sum = log_add_exp(ln_p0, log_s1 - theta.log_mean);

    // Var(S1) = sum_d P(d)^2 p(d)^2 se_d^2, with se_d relative
    let var_terms: Vec<f64> = strata
        .iter()
        .map(|(d, e)| 2.0 * (dist.probs[*d].ln() + e.log_mean + e.log_std_error.ln()))
        .collect();
    let s1_rel_var = if strata.is_empty() {
        0.0
    } else {
        (log_sum_exp(&var_terms) - 2.0 * log_s1).exp()
    };
    let share = (log_s1 - theta.log_mean - log_ratio_sum).exp();
    let log_ratio_sum_std_error = share * (s1_rel_var + theta.relative_variance()).sqrt();

    let dof = strata.iter().map(|(_, e)| e.dof).fold(theta.dof, f64::min);
    let t = t_quantile(opts.level, dof)?;
    let unclamped_rate = -log_ratio_sum / (len as f64 * LN_2);
    let ci_halfwidth = t * log_ratio_sum_std_error / (len as f64 * LN_2);

    let mut pooled = theta.standardized_residuals(true);
    for (_, e) in &strata {
        pooled.extend(e.standardized_residuals(true));
    }

    let samples_used = theta.count() + strata.iter().map(|(_, e)| e.count()).sum::<usize>();
    let diagnostics = LowerDiagnostics {
        codeword_len: len,
        log_theta: theta.log_mean,
        theta_log_std_error: theta.log_std_error,
        theta_rel_ci: theta.relative_ci(opts.level)?,
        strata: strata
            .iter()
            .map(|(d, e)| StratumSummary {
                d: *d,
                prob: dist.probs[*d],
                log_pd: e.log_mean,
                log_std_error: e.log_std_error,
                samples: e.count(),
            })
            .collect(),
        log_ratio_sum,
        log_ratio_sum_std_error,
        ratio_sum_rel_ci: (t * log_ratio_sum_std_error).sinh(),
        dof,
        theta_normality: theta.normality(false),
        aggregate_log_normality: normal_ppcc(&pooled).unwrap_or(f64::NAN),
        neglected_mass,
        unclamped_rate,
    };
    Ok(BoundEstimate {
        kind: BoundKind::Lower,
        rate: unclamped_rate.max(0.0),
        ci_halfwidth,
        samples_used,
        lower: Some(diagnostics),
    })
}

/// Upper bound with the configured `h_1` mode.
pub fn upper_bound(scenario: &Scenario, ctx: &StreamContext) -> Result<BoundEstimate> {
    upper_bound_with(scenario, &scenario.h1_choice(ctx), ctx)
}

/// Mutual information between `u_1` and the interference-free output,
/// `E[-log2 sum_v P(U_1 = v) e^{E_v}]` with
/// `E_v = -sum_m ((z_m - (v - U_1) A_1 h_m)^2 - z_m^2) / (2 s^2)`, evaluated as
/// `H(U_1) - E[-log2 P(U_1 | R)]` so that each sample is at most `H(U_1)`.
pub fn upper_bound_with(scenario: &Scenario, h1: &H1Choice, ctx: &StreamContext) -> Result<BoundEstimate> {
    let cfg = &scenario.config;
    let eta = cfg.duty_cycles[0];
    let a1 = scenario.amplitudes.get(0);
    let noise_var = cfg.noise_var_w;
    let sigma = noise_var.sqrt();
    let prior = [(1.0 - eta).ln(), eta.ln()];
    let entropy = -(eta * eta.log2() + (1.0 - eta) * (1.0 - eta).log2());
    let n = cfg.samples_upper;

    // The sent symbol is averaged out exactly: with the same `z` and `h`, each
    // sample is `sum_u P(u) (H(U_1) + log2 P(u) - log2 sum_v P(v) e^{E_v})`,
    // where the entropy terms cancel and every summand is at most `H(U_1)`.
    let values = par_samples(n, |k| {
        let mut rng = substream(ctx.key(estimator::UPPER, 0, k));
        let h = h1.get(&scenario.tap_cov, &mut rng);
        let z: Vec<f64> = (0..h.len()).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let conditional = |sent: usize| {
            let exponents: Vec<f64> = (0..2)
                .map(|v| {
                    let shift = (v as f64 - sent as f64) * a1;
                    let e: f64 = z
                        .iter()
                        .zip(&h.taps)
                        .map(|(zm, hm)| {
                            let r = zm - shift * hm;
                            r * r - zm * zm
                        })
                        .sum();
                    prior[v] - e / (2.0 * noise_var)
                })
                .collect();
            (log_sum_exp(&exponents) - prior[sent]) / LN_2
        };
        entropy - (1.0 - eta) * conditional(0) - eta * conditional(1)
    });
    let stats = SampleStats::from_slice(&values)?;
    Ok(BoundEstimate {
        kind: BoundKind::Upper,
        rate: stats.mean,
        ci_halfwidth: gaussian_ci(stats.mean, stats.variance, stats.count, DEFAULT_LEVEL)?,
        samples_used: n,
        lower: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorProbabilityBound {
    pub log2_bound: f64,
    /// `min(1, 2^log2_bound)`.
    pub probability: f64,
    /// Relative half-width of the interval on the unclipped bound.
    pub rel_ci: f64,
}

impl ErrorProbabilityBound {
    pub fn from_diagnostics(diag: &LowerDiagnostics, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(invalid("rate", format!("{rate} must be non-negative")));
        }
        let log2_bound = diag.log2_error_bound(rate);
        Ok(Self {
            log2_bound,
            probability: log2_bound.exp2().min(1.0),
            rel_ci: diag.ratio_sum_rel_ci,
        })
    }
}

/// Union/Markov bound on the packet error probability at code rate `rate`.
pub fn error_probability_bound(
    scenario: &Scenario,
    ctx: &StreamContext,
    rate: f64,
) -> Result<ErrorProbabilityBound> {
    let est = lower_bound(scenario, ctx)?;
    let diag = est.lower.as_ref().expect("lower bound carries diagnostics");
    ErrorProbabilityBound::from_diagnostics(diag, rate)
}
