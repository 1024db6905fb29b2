//! Brute-force estimate of `J(V, W, h_1)` that never uses the closed-form
//! marginal. `P(Y | V, h_1)` is built from the conditional white-noise
//! likelihood by integrating the interferer channels numerically, either with
//! a tensor Gauss-Hermite rule (quadrature mode) or by sampling (Monte-Carlo
//! mode).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mc::{estimator, log_sum_exp, par_samples, substream, SampleStats, StreamKey};
use crate::model::{
    simulate_output, Amplitudes, ChannelRealization, CodewordMatrix, TapCovariance,
};

/// Largest `M * N` the oracle accepts.
pub const MAX_DIM: usize = 4;
/// Largest `M * N` for quadrature mode.
pub const MAX_QUADRATURE_DIM: usize = 2;
/// Largest node count `I`.
pub const MAX_NODES: usize = 3;
/// Largest number of active interferer channel coordinates per side in
/// quadrature mode.
pub const MAX_QUADRATURE_CHANNEL_DIM: usize = 2;
/// Truncation of the output grid, in noise standard deviations.
pub const GRID_SIGMAS: f64 = 8.0;
/// Minimum number of output grid points per dimension.
pub const MIN_GRID_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Deterministic; `M * N <= 2`.
    Quadrature,
    /// `outer` output draws from `P(. | V)`, each scored with `inner` draws of
    /// the interferer channels under `W`.
    MonteCarlo { outer: usize, inner: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    /// Zero in quadrature mode.
    pub std_error: f64,
}

struct Instance<'a> {
    v: &'a CodewordMatrix,
    w: &'a CodewordMatrix,
    h1: &'a ChannelRealization,
    amps: &'a Amplitudes,
    tap_cov: &'a TapCovariance,
    noise_var: f64,
}

impl Instance<'_> {
    fn taps(&self) -> usize {
        self.tap_cov.dim()
    }

    fn dim(&self) -> usize {
        self.taps() * self.v.len()
    }

    /// Interferers whose channel actually enters the output under `s`.
    fn active(&self, s: &CodewordMatrix) -> Vec<usize> {
        (1..s.nodes())
            .filter(|&i| self.amps.get(i) != 0.0 && s.row(i).contains(&1))
            .collect()
    }

    /// Noise-free output for symbol matrix `s` when active interferer `k`
    /// has standardized channel `g[k*M..(k+1)*M]`.
    fn mean_given(&self, s: &CodewordMatrix, active: &[usize], g: &[f64]) -> Vec<f64> {
        let m = self.taps();
        let l = self.tap_cov.factor();
        let mut out = vec![0.0; self.dim()];
        let mut add = |row: &[u8], amp: f64, h: &[f64]| {
            for (n, &b) in row.iter().enumerate() {
                if b == 1 {
                    for t in 0..m {
                        out[n * m + t] += amp * h[t];
                    }
                }
            }
        };
        add(s.row(0), self.amps.get(0), &self.h1.taps);
        for (k, &i) in active.iter().enumerate() {
            let gi = &g[k * m..(k + 1) * m];
            let h: Vec<f64> = (0..m).map(|r| (0..m).map(|c| l[(r, c)] * gi[c]).sum()).collect();
            add(s.row(i), self.amps.get(i), &h);
        }
        out
    }
}

fn guard(inst: &Instance<'_>) -> Result<()> {
    if inst.v.nodes() != inst.w.nodes() || inst.v.len() != inst.w.len() {
        return Err(Error::DimensionMismatch("V and W differ in shape".into()));
    }
    if inst.amps.len() != inst.v.nodes() || inst.h1.len() != inst.taps() {
        return Err(Error::DimensionMismatch("amplitudes or h_1 do not match".into()));
    }
    if inst.dim() > MAX_DIM {
        return Err(Error::OracleGuard(format!("M*N = {} exceeds {MAX_DIM}", inst.dim())));
    }
    if inst.v.nodes() > MAX_NODES {
        return Err(Error::OracleGuard(format!("I = {} exceeds {MAX_NODES}", inst.v.nodes())));
    }
    if !(inst.noise_var > 0.0) {
        return Err(Error::OracleGuard("noise variance must be positive".into()));
    }
    Ok(())
}

/// Estimate `J(V, W, h_1)`. In Monte-Carlo mode the generator seeds a family
/// of per-sample substreams, so the result does not depend on thread count.
#[allow(clippy::too_many_arguments)]
pub fn oracle_j<R: Rng + ?Sized>(
    v: &CodewordMatrix,
    w: &CodewordMatrix,
    h1: &ChannelRealization,
    amps: &Amplitudes,
    tap_cov: &TapCovariance,
    noise_var: f64,
    mode: OracleMode,
    rng: &mut R,
) -> Result<OracleEstimate> {
    let inst = Instance {
        v,
        w,
        h1,
        amps,
        tap_cov,
        noise_var,
    };
    guard(&inst)?;
    match mode {
        OracleMode::Quadrature => quadrature(&inst),
        OracleMode::MonteCarlo { outer, inner } => {
            if outer < 2 || inner < 1 {
                return Err(Error::InsufficientSamples { needed: 2, got: outer });
            }
            monte_carlo(&inst, outer, inner, rng.next_u64())
        }
    }
}

/// Probabilists' Gauss-Hermite rule: nodes and weights for `E[f(Z)]`,
/// `Z ~ N(0, 1)`, via the Golub-Welsch eigenproblem.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    if order == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let jacobi = DMatrix::from_fn(order, order, |r, c| {
        if r + 1 == c || c + 1 == r {
            (r.max(c) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Tensor rule over `dim` standard-normal coordinates; negligible weights
/// are dropped.
fn tensor_rule(dim: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, wts) = gauss_hermite(order);
    let mut nodes = vec![(Vec::with_capacity(dim), 1.0)];
    for _ in 0..dim {
        nodes = nodes
            .into_iter()
            .flat_map(|(p, pw)| {
                x.iter().zip(&wts).map(move |(&xi, &wi)| {
                    let mut q = p.clone();
                    q.push(xi);
                    (q, pw * wi)
                })
            })
            .collect();
    }
    let max_w = nodes.iter().map(|n| n.1).fold(0.0, f64::max);
    nodes.retain(|n| n.1 > 1e-18 * max_w);
    nodes
}

fn order_for(dim: usize) -> usize {
    match dim {
        0 => 1,
        1 => 64,
        _ => 32,
    }
}

fn normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    (-(y - mean) * (y - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Mixture representation of `P(. | S, h_1)`: component means and weights.
fn mixture(inst: &Instance<'_>, s: &CodewordMatrix) -> Result<Vec<(Vec<f64>, f64)>> {
    let active = inst.active(s);
    let dim = active.len() * inst.taps();
    if dim > MAX_QUADRATURE_CHANNEL_DIM {
        return Err(Error::OracleGuard(format!(
            "{dim} active channel coordinates exceed the quadrature limit {MAX_QUADRATURE_CHANNEL_DIM}"
        )));
    }
    Ok(tensor_rule(dim, order_for(dim))
        .into_iter()
        .map(|(g, wt)| (inst.mean_given(s, &active, &g), wt))
        .collect())
}

fn quadrature(inst: &Instance<'_>) -> Result<OracleEstimate> {
    if inst.dim() > MAX_QUADRATURE_DIM {
        return Err(Error::OracleGuard(format!(
            "quadrature mode needs M*N <= {MAX_QUADRATURE_DIM}, got {}",
            inst.dim()
        )));
    }
    let mv = mixture(inst, inst.v)?;
    let mw = mixture(inst, inst.w)?;
    let sigma = inst.noise_var.sqrt();

    // per output coordinate: G_c[k, l] = int phi(y; mv_k) phi(y; mw_l) dy
    let mut prod = DMatrix::<f64>::from_element(mv.len(), mw.len(), 1.0);
    for c in 0..inst.dim() {
        let all = mv.iter().chain(&mw).map(|(mu, _)| mu[c]);
        let lo = all.clone().fold(f64::INFINITY, f64::min) - GRID_SIGMAS * sigma;
        let hi = all.fold(f64::NEG_INFINITY, f64::max) + GRID_SIGMAS * sigma;
        let points = MIN_GRID_POINTS.max(((hi - lo) / (0.01 * sigma)).ceil() as usize + 1);
        let step = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|j| lo + j as f64 * step).collect();
        let trap = |j: usize| if j == 0 || j == points - 1 { 0.5 * step } else { step };
        let fv = DMatrix::from_fn(mv.len(), points, |k, j| {
            trap(j) * normal_pdf(grid[j], mv[k].0[c], inst.noise_var)
        });
        let fw = DMatrix::from_fn(points, mw.len(), |j, l| normal_pdf(grid[j], mw[l].0[c], inst.noise_var));
        prod.component_mul_assign(&(fv * fw));
    }
    let mut total = 0.0;
    for (k, (_, wk)) in mv.iter().enumerate() {
        for (l, (_, wl)) in mw.iter().enumerate() {
            total += wk * wl * prod[(k, l)];
        }
    }
    Ok(OracleEstimate {
        value: total,
        std_error: 0.0,
    })
}

fn monte_carlo(inst: &Instance<'_>, outer: usize, inner: usize, seed: u64) -> Result<OracleEstimate> {
    let m = inst.taps();
    let active_w = inst.active(inst.w);
    let dim_w = active_w.len() * m;
    let nodes = inst.v.nodes();
    let log_samples = par_samples(outer, |k| -> Result<f64> {
        let mut rng = substream(StreamKey {
            seed,
            estimator_id: estimator::ORACLE,
            stratum: 0,
            index: k,
        });
        // Y ~ P(. | V, h_1) straight from the channel model
        let mut channels = vec![inst.h1.clone()];
        for _ in 1..nodes {
            let g: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            channels.push(ChannelRealization::new(apply_factor(inst.tap_cov, &g))?);
        }
        let y = simulate_output(inst.v, inst.amps, &channels, inst.noise_var, &mut rng)?;
        let y = y.as_slice();
        let draws = if dim_w == 0 { 1 } else { inner };
        let logs: Vec<f64> = (0..draws)
            .map(|_| {
                let g: Vec<f64> = (0..dim_w).map(|_| rng.sample(StandardNormal)).collect();
                let mu = inst.mean_given(inst.w, &active_w, &g);
                y.iter()
                    .zip(&mu)
                    .map(|(yi, mi)| normal_pdf(*yi, *mi, inst.noise_var).ln())
                    .sum::<f64>()
            })
            .collect();
        Ok(log_sum_exp(&logs) - (draws as f64).ln())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let values: Vec<f64> = log_samples.iter().map(|l| l.exp()).collect();
    let stats = SampleStats::from_slice(&values)?;
    Ok(OracleEstimate {
        value: stats.mean,
        std_error: stats.std_error(),
    })
}

fn apply_factor(tap_cov: &TapCovariance, g: &[f64]) -> Vec<f64> {
    let l = tap_cov.factor();
    let m = g.len();
    (0..m).map(|r| (0..m).map(|c| l[(r, c)] * g[c]).sum()).collect()
}
