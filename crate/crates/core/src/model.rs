//! Physical model of the link: scenario parameters, path loss, pulse
//! amplitudes, the tap covariance and the discrete vector channel
//!
//! ```text
//! r[n] = u_1[n] A_1 h_1 + sum_{i>=2} u_i[n] A_i h_i + z[n]
//! ```
//!
//! Interferers are symbol-synchronous with the receiver (zero timing
//! offset), every channel is drawn once per packet from `N(0, T)` and every
//! node transmits at its amplitude cap `A_i = sqrt(P_rcv(l_i) / eta_i)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// How the intended link's channel `h_1` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H1Mode {
    /// One seeded realization reused for every estimate of a run.
    FixedDraw,
    /// A fresh realization for every Monte-Carlo sample.
    Averaged,
}

/// How the lower bound evaluates `theta` and `p(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerMethod {
    /// Stratified Monte-Carlo with confidence intervals.
    MonteCarlo,
    /// Finite-sum evaluation; single interferer with a fixed `h_1` only.
    Exact,
}

/// Named parameter profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// N = 80 symbols, M = 5 taps, 14% captured energy.
    Paper,
    /// N = 40 symbols, M = 3 taps; captured energy follows the linear profile.
    Desk,
}

/// All physical and simulation parameters of one channel scenario.
///
/// Node 1 (index 0 here) is the intended transmitter; nodes 2..I are
/// interferers, so `duty_cycles` has `num_nodes` entries and
/// `interferer_distances_m` has `num_nodes - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_nodes: usize,
    pub codeword_len: usize,
    pub taps: usize,
    pub duty_cycles: Vec<f64>,
    pub tx_power_w: f64,
    pub pathloss_b: f64,
    pub pathloss_alpha: f64,
    pub link_distance_m: f64,
    pub interferer_distances_m: Vec<f64>,
    pub noise_var_w: f64,
    pub captured_energy_fraction: f64,
    pub total_path_count: usize,
    pub samples_theta: usize,
    pub samples_pd: usize,
    pub samples_upper: usize,
    pub rng_seed: u64,
    pub h1_mode: H1Mode,
    pub lower_method: LowerMethod,
}

/// Number of paths of the linear-decay power profile whose first five taps
/// hold 14% of the energy: `(10L - 20) / (L (L + 1)) = 0.14` gives L ~ 68.
pub const DEFAULT_TOTAL_PATH_COUNT: usize = 68;

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_nodes: 2,
            codeword_len: 80,
            taps: 5,
            duty_cycles: vec![0.5, 0.5],
            tx_power_w: 1e-4,
            pathloss_b: 10f64.powf(-5.5),
            pathloss_alpha: 3.3,
            link_distance_m: 5.0,
            interferer_distances_m: vec![10.0],
            noise_var_w: 1e-13,
            captured_energy_fraction: 0.14,
            total_path_count: DEFAULT_TOTAL_PATH_COUNT,
            samples_theta: 2000,
            samples_pd: 2000,
            samples_upper: 100_000,
            rng_seed: 0,
            h1_mode: H1Mode::FixedDraw,
            lower_method: LowerMethod::MonteCarlo,
        }
    }
}

impl Preset {
    pub fn apply(self, cfg: &mut ScenarioConfig) {
        match self {
            Preset::Paper => {
                cfg.codeword_len = 80;
                cfg.taps = 5;
                cfg.captured_energy_fraction = 0.14;
            }
            Preset::Desk => {
                cfg.codeword_len = 40;
                cfg.taps = 3;
                cfg.captured_energy_fraction =
                    linear_profile_fraction(3, cfg.total_path_count.max(3));
            }
        }
    }
}

/// Fraction of a linear-decay profile over `total` paths held by the first
/// `taps` paths.
pub fn linear_profile_fraction(taps: usize, total: usize) -> f64 {
    let head: usize = (0..taps.min(total)).map(|m| total - m).sum();
    head as f64 / (total * (total + 1) / 2) as f64
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 1 {
            return Err(invalid("num_nodes", "must be at least 1"));
        }
        if self.codeword_len < 1 {
            return Err(invalid("codeword_len", "must be at least 1"));
        }
        if self.taps < 1 {
            return Err(invalid("taps", "must be at least 1"));
        }
        if self.duty_cycles.len() != self.num_nodes {
            return Err(invalid(
                "duty_cycles",
                format!("expected {} entries, got {}", self.num_nodes, self.duty_cycles.len()),
            ));
        }
        if let Some(eta) = self.duty_cycles.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(invalid("duty_cycles", format!("{eta} is outside (0, 1)")));
        }
        if self.interferer_distances_m.len() + 1 != self.num_nodes {
            return Err(invalid(
                "interferer_distances_m",
                format!(
                    "expected {} entries, got {}",
                    self.num_nodes - 1,
                    self.interferer_distances_m.len()
                ),
            ));
        }
        positive("tx_power_w", self.tx_power_w)?;
        positive("pathloss_b", self.pathloss_b)?;
        positive("pathloss_alpha", self.pathloss_alpha)?;
        positive("link_distance_m", self.link_distance_m)?;
        for &d in &self.interferer_distances_m {
            positive("interferer_distances_m", d)?;
        }
        positive("noise_var_w", self.noise_var_w)?;
        let rho = self.captured_energy_fraction;
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(invalid("captured_energy_fraction", format!("{rho} is outside (0, 1]")));
        }
        if self.taps > self.total_path_count {
            return Err(invalid(
                "total_path_count",
                format!("{} is smaller than taps = {}", self.total_path_count, self.taps),
            ));
        }
        for (name, n) in [
            ("samples_theta", self.samples_theta),
            ("samples_pd", self.samples_pd),
            ("samples_upper", self.samples_upper),
        ] {
            if n < 2 {
                return Err(invalid(name, format!("budget {n} is below 2")));
            }
        }
        if self.lower_method == LowerMethod::Exact {
            if self.num_nodes > 2 {
                return Err(invalid("lower_method", "exact evaluation supports at most one interferer"));
            }
            if self.h1_mode != H1Mode::FixedDraw {
                return Err(invalid("lower_method", "exact evaluation needs h1_mode fixed_draw"));
            }
        }
        Ok(())
    }

    /// Distance from each node to the receiver, intended transmitter first.
    pub fn distances(&self) -> Vec<f64> {
        std::iter::once(self.link_distance_m)
            .chain(self.interferer_distances_m.iter().copied())
            .collect()
    }

    pub fn amplitudes(&self) -> Result<Amplitudes> {
        self.distances()
            .iter()
            .zip(&self.duty_cycles)
            .map(|(&l, &eta)| {
                let p = received_power(self.tx_power_w, self.pathloss_b, self.pathloss_alpha, l)?;
                pulse_amplitude(p, eta)
            })
            .collect::<Result<Vec<_>>>()
            .map(Amplitudes)
    }

    pub fn tap_covariance(&self) -> Result<TapCovariance> {
        build_tap_covariance(self.taps, self.captured_energy_fraction, self.total_path_count)
    }
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{x} is not strictly positive")))
    }
}

/// Average received power `P_trans * b * dist^-alpha`.
pub fn received_power(p_trans: f64, b: f64, alpha: f64, dist: f64) -> Result<f64> {
    positive("tx_power_w", p_trans)?;
    positive("pathloss_b", b)?;
    positive("pathloss_alpha", alpha)?;
    positive("distance", dist)?;
    Ok(p_trans * b * dist.powf(-alpha))
}

/// Largest pulse amplitude allowed by the average-power constraint.
pub fn pulse_amplitude(p_rcv: f64, eta: f64) -> Result<f64> {
    positive("received_power", p_rcv)?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid("duty_cycle", format!("{eta} is outside (0, 1)")));
    }
    Ok((p_rcv / eta).sqrt())
}

/// Received pulse amplitude per node, intended transmitter first.
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitudes(pub Vec<f64>);

impl Amplitudes {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(invalid("amplitudes", "entries must be finite and non-negative"));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Covariance `T` of a channel tap vector, with a square-root factor
/// `T = L L^T` computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct TapCovariance {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl TapCovariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        if m == 0 || matrix.ncols() != m {
            return Err(Error::DimensionMismatch("tap covariance must be square and non-empty".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(invalid("tap_covariance", "non-finite entry"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(invalid("tap_covariance", "matrix is not symmetric"));
        }
        let is_diagonal = (0..m).all(|i| (0..m).all(|j| i == j || matrix[(i, j)] == 0.0));
        let factor = if is_diagonal {
            if matrix.diagonal().iter().any(|&x| x < 0.0) {
                return Err(invalid("tap_covariance", "negative diagonal entry"));
            }
            DMatrix::from_diagonal(&matrix.diagonal().map(f64::sqrt))
        } else {
            let eig = SymmetricEigen::new(matrix.clone());
            if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
                return Err(invalid("tap_covariance", "matrix is not positive semi-definite"));
            }
            let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&roots)
        };
        let gram = factor.transpose() * &factor;
        Ok(Self {
            matrix,
            factor,
            gram,
        })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `L` with `T = L L^T`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `L^T L`, the tap-space block of every low-rank Gram matrix.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Diagonal tap covariance for a power profile that decays linearly over
/// `total_paths` paths, keeping the first `taps` and scaling them so the
/// trace equals `captured`.
pub fn build_tap_covariance(taps: usize, captured: f64, total_paths: usize) -> Result<TapCovariance> {
    if taps < 1 {
        return Err(invalid("taps", "must be at least 1"));
    }
    if taps > total_paths {
        return Err(invalid(
            "total_path_count",
            format!("{total_paths} is smaller than taps = {taps}"),
        ));
    }
    if !(captured > 0.0 && captured <= 1.0) {
        return Err(invalid("captured_energy_fraction", format!("{captured} is outside (0, 1]")));
    }
    let weights: Vec<f64> = (0..taps).map(|m| (total_paths - m) as f64).collect();
    let total: f64 = weights.iter().sum();
    let entries: Vec<f64> = weights.iter().map(|w| captured * w / total).collect();
    TapCovariance::diagonal(&entries)
}

/// One draw of a channel tap vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.iter().any(|x| !x.is_finite()) {
            return Err(invalid("channel", "non-finite tap"));
        }
        Ok(Self { taps })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|x| x * x).sum()
    }
}

pub fn sample_channel<R: Rng + ?Sized>(cov: &TapCovariance, rng: &mut R) -> ChannelRealization {
    let m = cov.dim();
    let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let l = cov.factor();
    let taps = (0..m)
        .map(|r| (0..m).map(|c| l[(r, c)] * g[c]).sum())
        .collect();
    ChannelRealization { taps }
}

/// `n` i.i.d. on-off symbols with `P(1) = eta`.
pub fn sample_symbols<R: Rng + ?Sized>(eta: f64, n: usize, rng: &mut R) -> Result<Vec<u8>> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid("duty_cycle", format!("{eta} is outside (0, 1)")));
    }
    let dist = Bernoulli::new(eta).map_err(|e| invalid("duty_cycle", e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng) as u8).collect())
}

/// Binary symbol matrix, one row per node and one column per symbol slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodewordMatrix {
    nodes: usize,
    len: usize,
    bits: Vec<u8>,
}

impl CodewordMatrix {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let nodes = rows.len();
        if nodes == 0 {
            return Err(Error::DimensionMismatch("codeword matrix needs at least one row".into()));
        }
        let len = rows[0].len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::DimensionMismatch("codeword rows differ in length".into()));
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(invalid("codeword", "symbols must be 0 or 1"));
        }
        Ok(Self {
            nodes,
            len,
            bits: rows.concat(),
        })
    }

    pub fn zeros(nodes: usize, len: usize) -> Self {
        Self {
            nodes,
            len,
            bits: vec![0; nodes * len],
        }
    }

    /// Draw every row from its node's duty cycle.
    pub fn sample<R: Rng + ?Sized>(duty_cycles: &[f64], len: usize, rng: &mut R) -> Result<Self> {
        let rows = duty_cycles
            .iter()
            .map(|&eta| sample_symbols(eta, len, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.len..(i + 1) * self.len]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.bits[i * self.len..(i + 1) * self.len]
    }
}

/// Codeword with `d` leading ones followed by zeros.
pub fn leading_ones(d: usize, len: usize) -> Vec<u8> {
    (0..len).map(|n| u8::from(n < d)).collect()
}

/// Channel output `R` as an `M x N` matrix (column `n` is `r[n]`).
pub fn simulate_output<R: Rng + ?Sized>(
    symbols: &CodewordMatrix,
    amplitudes: &Amplitudes,
    channels: &[ChannelRealization],
    noise_var: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let nodes = symbols.nodes();
    if amplitudes.len() != nodes || channels.len() != nodes {
        return Err(Error::DimensionMismatch(format!(
            "{nodes} symbol rows, {} amplitudes, {} channels",
            amplitudes.len(),
            channels.len()
        )));
    }
    let m = channels[0].len();
    if channels.iter().any(|h| h.len() != m) {
        return Err(Error::DimensionMismatch("channels differ in tap count".into()));
    }
    if !(noise_var >= 0.0) {
        return Err(invalid("noise_var_w", "must be non-negative"));
    }
    let sigma = noise_var.sqrt();
    let n = symbols.len();
    let mut out = DMatrix::zeros(m, n);
    for col in 0..n {
        for tap in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            out[(tap, col)] = sigma * z;
        }
        for (i, channel) in channels.iter().enumerate().take(nodes) {
            if symbols.row(i)[col] == 1 {
                let a = amplitudes.get(i);
                for tap in 0..m {
                    out[(tap, col)] += a * channel.taps[tap];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const B: f64 = 3.162_277_660_168_379e-6; // 10^-5.5

    #[test]
    fn received_power_examples() {
        assert_relative_eq!(received_power(1e-4, B, 3.3, 1.0).unwrap(), 10f64.powf(-9.5), max_relative = 1e-14);
        let p3 = received_power(1e-4, B, 3.3, 3.0).unwrap();
        let via_logs = (1e-4f64.ln() + B.ln() - 3.3 * 3f64.ln()).exp();
        assert_relative_eq!(p3, via_logs, max_relative = 1e-12);
        // the rounded reference figure is 8.41e-12; the exact value is 8.4236e-12
        assert_relative_eq!(p3, 8.41e-12, max_relative = 2e-3);
        assert_relative_eq!(received_power(1e-4, B, 3.3, 100.0).unwrap(), 8.3e-17, max_relative = 5e-3);
        assert!(received_power(0.0, B, 3.3, 1.0).is_err());
        assert!(received_power(1e-4, B, 3.3, -1.0).is_err());
    }

    #[test]
    fn amplitude_examples() {
        assert_relative_eq!(pulse_amplitude(4e-12, 0.5).unwrap(), 8e-12f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(pulse_amplitude(2.0, 1.0 - 1e-12).unwrap(), 2f64.sqrt(), max_relative = 1e-11);
        let p3 = received_power(1e-4, B, 3.3, 3.0).unwrap();
        assert_relative_eq!(pulse_amplitude(p3, 0.5).unwrap(), 4.101e-6, max_relative = 1e-3);
        assert!(pulse_amplitude(1.0, 1.0).is_err());
        assert!(pulse_amplitude(1.0, 0.0).is_err());
    }

    #[test]
    fn tap_covariance_examples() {
        let t = build_tap_covariance(1, 1.0, 1).unwrap();
        assert_eq!(t.matrix()[(0, 0)], 1.0);
        let t = build_tap_covariance(2, 1.0, 2).unwrap();
        assert_relative_eq!(t.matrix()[(0, 0)], 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(t.matrix()[(1, 1)], 1.0 / 3.0, max_relative = 1e-15);
        let t = build_tap_covariance(5, 0.14, 68).unwrap();
        for m in 0..5 {
            assert_relative_eq!(t.matrix()[(m, m)], 0.14 * (68 - m) as f64 / 330.0, max_relative = 1e-14);
        }
        assert_relative_eq!(t.trace(), 0.14, max_relative = 1e-14);
        assert!(build_tap_covariance(6, 0.5, 5).is_err());
    }

    #[test]
    fn default_path_count_matches_five_tap_fraction() {
        // (10L - 20) / (L (L + 1)) = 0.14 has its root between 68 and 69
        let f = |l: f64| (10.0 * l - 20.0) / (l * (l + 1.0)) - 0.14;
        assert!(f(68.0) > 0.0 && f(69.0) < 0.0);
        assert!((linear_profile_fraction(5, 68) - 0.14).abs() < 1e-3);
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let t = TapCovariance::diagonal(&[0.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_channel(&t, &mut rng).taps, vec![0.0; 3]);
    }

    #[test]
    fn channel_moments_converge() {
        let t = build_tap_covariance(3, 0.5, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let h = sample_channel(&t, &mut rng);
            for m in 0..3 {
                sum[m] += h.taps[m];
                sq[m] += h.taps[m] * h.taps[m];
            }
        }
        for m in 0..3 {
            let tmm = t.matrix()[(m, m)];
            let mean = sum[m] / n as f64;
            assert!(mean.abs() < 4.0 * (tmm / n as f64).sqrt());
            let var = sq[m] / n as f64 - mean * mean;
            assert!((var / tmm - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn correlated_covariance_factor() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let t = TapCovariance::new(m.clone()).unwrap();
        let l = t.factor();
        assert!((l * l.transpose() - m).amax() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(TapCovariance::new(bad).is_err());
    }

    #[test]
    fn symbol_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_symbols(1e-12, 100, &mut rng).unwrap().iter().all(|&u| u == 0));
        for (eta, tol) in [(0.5, 0.005), (0.1, 0.004)] {
            let s = sample_symbols(eta, 100_000, &mut rng).unwrap();
            let mean = s.iter().map(|&u| u as f64).sum::<f64>() / s.len() as f64;
            assert!((mean - eta).abs() < tol, "eta {eta}: mean {mean}");
        }
        assert!(sample_symbols(1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn noiseless_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = vec![ChannelRealization::new(vec![0.3, -1.2]).unwrap(); 2];
        let a = Amplitudes::new(vec![2.0, 5.0]).unwrap();
        let silent = CodewordMatrix::zeros(2, 4);
        assert_eq!(simulate_output(&silent, &a, &h, 0.0, &mut rng).unwrap(), DMatrix::zeros(2, 4));

        let single = CodewordMatrix::from_rows(vec![vec![1; 4]]).unwrap();
        let a1 = Amplitudes::new(vec![2.0]).unwrap();
        let r = simulate_output(&single, &a1, &h[..1], 0.0, &mut rng).unwrap();
        for col in 0..4 {
            assert_eq!(r[(0, col)], 0.6);
            assert_eq!(r[(1, col)], -2.4);
        }
        assert!(simulate_output(&single, &a, &h, 0.0, &mut rng).is_err());
    }

    #[test]
    fn output_mean_matches_deterministic_part() {
        let h = vec![
            ChannelRealization::new(vec![0.5, -0.25]).unwrap(),
            ChannelRealization::new(vec![1.0, 0.75]).unwrap(),
        ];
        let a = Amplitudes::new(vec![1.0, 2.0]).unwrap();
        let u = CodewordMatrix::from_rows(vec![vec![1, 0, 1], vec![1, 1, 0]]).unwrap();
        let noise_var = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mut acc = DMatrix::zeros(2, 3);
        for _ in 0..draws {
            acc += simulate_output(&u, &a, &h, noise_var, &mut rng).unwrap();
        }
        acc /= draws as f64;
        let expected = simulate_output(&u, &a, &h, 0.0, &mut rng).unwrap();
        let tol = 4.0 * noise_var.sqrt() / 100.0;
        assert!((acc - expected).amax() < tol);
    }

    #[test]
    fn scenario_defaults_validate() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let amps = cfg.amplitudes().unwrap();
        for (a, (l, eta)) in amps.0.iter().zip(cfg.distances().iter().zip(&cfg.duty_cycles)) {
            let p = received_power(cfg.tx_power_w, cfg.pathloss_b, cfg.pathloss_alpha, *l).unwrap();
            assert!((a * a - p / eta).abs() <= 1e-9 * p / eta);
        }
        let mut bad = cfg.clone();
        bad.duty_cycles = vec![0.5, 1.5];
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { name: "duty_cycles", .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn trace_and_monotone_profile(taps in 1usize..20, extra in 0usize..100, rho in 0.001f64..=1.0) {
                let t = build_tap_covariance(taps, rho, taps + extra).unwrap();
                prop_assert!((t.trace() - rho).abs() < 1e-12);
                for m in 1..taps {
                    prop_assert!(t.matrix()[(m, m)] < t.matrix()[(m - 1, m - 1)]);
                }
            }

            #[test]
            fn power_monotone_and_homogeneous(p in 1e-6f64..1.0, c in 0.1f64..10.0, d in 0.5f64..200.0, dd in 0.01f64..10.0) {
                let base = received_power(p, B, 3.3, d).unwrap();
                prop_assert!(received_power(p, B, 3.3, d + dd).unwrap() < base);
                let scaled = received_power(c * p, B, 3.3, d).unwrap();
                prop_assert!((scaled - c * base).abs() <= 1e-12 * scaled);
            }

            #[test]
            fn amplitude_power_accounting(p in 1e-15f64..1.0, eta in 0.001f64..0.999) {
                let a = pulse_amplitude(p, eta).unwrap();
                prop_assert!((a * a * eta - p).abs() <= 1e-12 * p);
            }

            #[test]
            fn output_affine_in_amplitude(c in 0.0f64..5.0, seed in 0u64..1000) {
                let h = vec![
                    ChannelRealization::new(vec![0.4, -0.1]).unwrap(),
                    ChannelRealization::new(vec![-0.7, 0.9]).unwrap(),
                ];
                let u = CodewordMatrix::from_rows(vec![vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
                let run = |a2: f64| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    simulate_output(&u, &Amplitudes::new(vec![1.0, a2]).unwrap(), &h, 0.1, &mut rng).unwrap()
                };
                let r0 = run(0.0);
                let r1 = run(1.0);
                let rc = run(c);
                prop_assert!(((&rc - &r0) - (&r1 - &r0) * c).amax() < 1e-12);
            }
        }
    }
}
