//! Closed-form output distribution of the vector channel once the unknown
//! interferer channels are integrated out, and the overlap integral
//! `J(V, W, h_1) = int P(Y | V, h_1) P(Y | W, h_1) dY`.
//!
//! With every `h_i ~ N(0, T)` constant over the packet, `vec(R)` given the
//! symbol matrix `V` and `h_1` is Gaussian:
//!
//! ```text
//! mean = A_1 (v_1 (x) h_1)
//! cov  = s^2 I + sum_{i>=2} A_i^2 (v_i v_i^T (x) T)
//! ```
//!
//! and `J` is the Gaussian product integral `N(mean_V - mean_W; 0, cov_V + cov_W)`.
//! Both covariances are a scaled identity plus a rank `<= (I-1) M` term, so
//! densities are evaluated through the capacitance matrix of the low-rank
//! part (Woodbury identity and matrix-determinant lemma). Vectors are laid
//! out symbol-major: entry `n * M + m` is tap `m` of symbol `n`, which is the
//! column-major storage of an `M x N` output matrix.

pub mod oracle;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::model::{Amplitudes, ChannelRealization, CodewordMatrix, TapCovariance};

/// One low-rank covariance term `a^2 (s s^T (x) T)`.
#[derive(Debug, Clone, Copy)]
pub struct Component<'a> {
    pub amplitude: f64,
    pub symbols: &'a [u8],
}

impl Component<'_> {
    fn is_silent(&self) -> bool {
        self.amplitude == 0.0 || self.symbols.iter().all(|&s| s == 0)
    }
}

/// A natural-log density value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogDensity(pub f64);

impl LogDensity {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }
}

/// `P(R = . | V, h_1)` in structured form.
#[derive(Debug, Clone)]
pub struct OutputDistribution {
    taps: usize,
    len: usize,
    mean: Vec<f64>,
    noise_var: f64,
    amplitudes: Vec<f64>,
    symbols: Vec<Vec<u8>>,
    tap_cov: TapCovariance,
}

impl OutputDistribution {
    pub fn dim(&self) -> usize {
        self.taps * self.len
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn components(&self) -> Vec<Component<'_>> {
        self.amplitudes
            .iter()
            .zip(&self.symbols)
            .map(|(&amplitude, s)| Component {
                amplitude,
                symbols: s,
            })
            .collect()
    }

    /// Interference rank bound `(#interferers) * M`.
    pub fn interference_rank(&self) -> usize {
        self.components().iter().filter(|c| !c.is_silent()).count() * self.taps
    }

    /// Materialized `MN x MN` covariance.
    pub fn covariance_dense(&self) -> DMatrix<f64> {
        dense_covariance(self.taps, self.len, self.noise_var, &self.components(), &self.tap_cov)
    }
}

fn check_shapes(
    v: &CodewordMatrix,
    h1: &ChannelRealization,
    amps: &Amplitudes,
    tap_cov: &TapCovariance,
    noise_var: f64,
) -> Result<()> {
    if amps.len() != v.nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} symbol rows but {} amplitudes",
            v.nodes(),
            amps.len()
        )));
    }
    if h1.len() != tap_cov.dim() {
        return Err(Error::DimensionMismatch(format!(
            "h_1 has {} taps but T is {}x{}",
            h1.len(),
            tap_cov.dim(),
            tap_cov.dim()
        )));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(invalid("noise_var_w", "must be strictly positive"));
    }
    Ok(())
}

/// `A_1 (v (x) h_1)` for transmitter row `v`.
pub fn transmitter_mean(amplitude: f64, row: &[u8], h1: &ChannelRealization) -> Vec<f64> {
    let m = h1.len();
    let mut out = vec![0.0; row.len() * m];
    for (n, &s) in row.iter().enumerate() {
        if s == 1 {
            for (k, &h) in h1.taps.iter().enumerate() {
                out[n * m + k] = amplitude * h;
            }
        }
    }
    out
}

pub fn output_moments(
    v: &CodewordMatrix,
    h1: &ChannelRealization,
    amps: &Amplitudes,
    tap_cov: &TapCovariance,
    noise_var: f64,
) -> Result<OutputDistribution> {
    check_shapes(v, h1, amps, tap_cov, noise_var)?;
    Ok(OutputDistribution {
        taps: tap_cov.dim(),
        len: v.len(),
        mean: transmitter_mean(amps.get(0), v.row(0), h1),
        noise_var,
        amplitudes: amps.0[1..].to_vec(),
        symbols: (1..v.nodes()).map(|i| v.row(i).to_vec()).collect(),
        tap_cov: tap_cov.clone(),
    })
}

/// `ln N(y; mean, dist.cov)` for an `M x N` output matrix.
pub fn log_density(dist: &OutputDistribution, y: &DMatrix<f64>) -> Result<LogDensity> {
    let x = centered(dist, y)?;
    low_rank_log_pdf(&x, dist.noise_var, &dist.components(), &dist.tap_cov).map(LogDensity)
}

/// Same value as [`log_density`] through a dense Cholesky factorization.
pub fn log_density_dense(dist: &OutputDistribution, y: &DMatrix<f64>) -> Result<LogDensity> {
    let x = centered(dist, y)?;
    dense_log_pdf(&x, &dist.covariance_dense()).map(LogDensity)
}

fn centered(dist: &OutputDistribution, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    if y.nrows() != dist.taps || y.ncols() != dist.len {
        return Err(Error::DimensionMismatch(format!(
            "output is {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            dist.taps,
            dist.len
        )));
    }
    Ok(y.as_slice().iter().zip(&dist.mean).map(|(a, b)| a - b).collect())
}

/// `ln J(V, W, h_1)`.
pub fn overlap_j(
    v: &CodewordMatrix,
    w: &CodewordMatrix,
    h1: &ChannelRealization,
    amps: &Amplitudes,
    tap_cov: &TapCovariance,
    noise_var: f64,
) -> Result<LogDensity> {
    if v.nodes() != w.nodes() || v.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "V is {}x{} but W is {}x{}",
            v.nodes(),
            v.len(),
            w.nodes(),
            w.len()
        )));
    }
    let dv = output_moments(v, h1, amps, tap_cov, noise_var)?;
    let dw = output_moments(w, h1, amps, tap_cov, noise_var)?;
    overlap_of(&dv, &dw)
}

/// `ln int p(y) q(y) dy` for two output distributions over the same space.
pub fn overlap_of(p: &OutputDistribution, q: &OutputDistribution) -> Result<LogDensity> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch("distributions differ in dimension".into()));
    }
    let x: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let mut comps = p.components();
    comps.extend(q.components());
    // canonical order makes J(V, W) and J(W, V) bit-identical
    comps.sort_by(|a, b| a.amplitude.total_cmp(&b.amplitude).then_with(|| a.symbols.cmp(b.symbols)));
    low_rank_log_pdf(&x, p.noise_var + q.noise_var, &comps, &p.tap_cov).map(LogDensity)
}

/// `ln N(x; 0, s^2 I + sum_k a_k^2 (s_k s_k^T (x) T))` with `x` symbol-major.
///
/// Cost is `O(MN K + (K M)^3)` for `K` active components.
pub fn low_rank_log_pdf(
    x: &[f64],
    noise_var: f64,
    components: &[Component<'_>],
    tap_cov: &TapCovariance,
) -> Result<f64> {
    let m = tap_cov.dim();
    if m == 0 || !x.len().is_multiple_of(m) {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} is not a multiple of {m} taps",
            x.len()
        )));
    }
    let len = x.len() / m;
    if components.iter().any(|c| c.symbols.len() != len) {
        return Err(Error::DimensionMismatch("component length differs from codeword length".into()));
    }
    let active: Vec<&Component<'_>> = components.iter().filter(|c| !c.is_silent()).collect();
    let dim = x.len() as f64;
    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
    let base = dim * (2.0 * PI * noise_var).ln();
    if active.is_empty() {
        return Ok(-0.5 * (base + norm_sq / noise_var));
    }

    let k = active.len();
    let l = tap_cov.factor();
    let gram = tap_cov.gram();
    let mut cap = DMatrix::<f64>::identity(k * m, k * m);
    for (p, cp) in active.iter().enumerate() {
        for (q, cq) in active.iter().enumerate().skip(p) {
            let overlap = cp.symbols.iter().zip(cq.symbols).filter(|(a, b)| **a == 1 && **b == 1).count();
            if overlap == 0 {
                continue;
            }
            let scale = cp.amplitude * cq.amplitude * overlap as f64 / noise_var;
            for r in 0..m {
                for c in 0..m {
                    let v = scale * gram[(r, c)];
                    cap[(p * m + r, q * m + c)] += v;
                    if p != q {
                        cap[(q * m + c, p * m + r)] += v;
                    }
                }
            }
        }
    }

    let mut proj = DVector::<f64>::zeros(k * m);
    let mut folded = vec![0.0; m];
    for (p, cp) in active.iter().enumerate() {
        folded.iter_mut().for_each(|f| *f = 0.0);
        for (n, &s) in cp.symbols.iter().enumerate() {
            if s == 1 {
                for (f, v) in folded.iter_mut().zip(&x[n * m..(n + 1) * m]) {
                    *f += v;
                }
            }
        }
        for c in 0..m {
            let dot: f64 = (0..m).map(|r| l[(r, c)] * folded[r]).sum();
            proj[p * m + c] = cp.amplitude * dot;
        }
    }

    let chol = cap.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let log_det_cap: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let solved = chol.solve(&proj);
    let quad = (norm_sq - proj.dot(&solved) / noise_var) / noise_var;
    Ok(-0.5 * (base + log_det_cap + quad))
}

/// Dense `MN x MN` covariance of the same form as [`low_rank_log_pdf`].
pub fn dense_covariance(
    taps: usize,
    len: usize,
    noise_var: f64,
    components: &[Component<'_>],
    tap_cov: &TapCovariance,
) -> DMatrix<f64> {
    let dim = taps * len;
    let t = tap_cov.matrix();
    let mut cov = DMatrix::<f64>::identity(dim, dim) * noise_var;
    for c in components {
        let a2 = c.amplitude * c.amplitude;
        for n1 in 0..len {
            for n2 in 0..len {
                if c.symbols[n1] == 1 && c.symbols[n2] == 1 {
                    for r in 0..taps {
                        for q in 0..taps {
                            cov[(n1 * taps + r, n2 * taps + q)] += a2 * t[(r, q)];
                        }
                    }
                }
            }
        }
    }
    cov
}

/// `ln N(x; 0, cov)` by Cholesky.
pub fn dense_log_pdf(x: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    if cov.nrows() != x.len() || cov.ncols() != x.len() {
        return Err(Error::DimensionMismatch("covariance does not match vector".into()));
    }
    let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let white = chol
        .l()
        .solve_lower_triangular(&DVector::from_column_slice(x))
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(-0.5 * (x.len() as f64 * (2.0 * PI).ln() + log_det + white.norm_squared()))
}
