//! Random small instances on which the closed-form overlap is checked against
//! the brute-force oracle.

use rand::Rng;
use uwbbounds_core::gaussian::oracle::{oracle_j, OracleMode, MAX_QUADRATURE_CHANNEL_DIM};
use uwbbounds_core::gaussian::overlap_j;
use uwbbounds_core::mc::{estimator, substream, StreamKey};
use uwbbounds_core::model::{Amplitudes, ChannelRealization, CodewordMatrix, TapCovariance};

/// Largest `M * N` drawn.
pub const MAX_DIM: usize = 4;
/// Largest `M * N` also checked in quadrature mode.
pub const MAX_QUADRATURE_DIM: usize = 2;
pub const QUADRATURE_TOLERANCE: f64 = 1e-4;
pub const MC_SIGMAS: f64 = 3.0;
pub const MC_OUTER: usize = 4000;
pub const MC_INNER: usize = 200;

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub v: CodewordMatrix,
    pub w: CodewordMatrix,
    pub h1: ChannelRealization,
    pub amps: Amplitudes,
    pub tap_cov: TapCovariance,
    pub noise_var: f64,
}

impl OracleCase {
    pub fn taps(&self) -> usize {
        self.tap_cov.dim()
    }

    pub fn dim(&self) -> usize {
        self.taps() * self.v.len()
    }

    fn active_dim(&self, s: &CodewordMatrix) -> usize {
        (1..s.nodes())
            .filter(|&i| self.amps.get(i) > 0.0 && s.row(i).contains(&1))
            .count()
            * self.taps()
    }

    /// Whether the quadrature oracle applies.
    pub fn quadrature_eligible(&self) -> bool {
        self.dim() <= MAX_QUADRATURE_DIM
            && self.active_dim(&self.v) <= MAX_QUADRATURE_CHANNEL_DIM
            && self.active_dim(&self.w) <= MAX_QUADRATURE_CHANNEL_DIM
    }

    pub fn closed_form(&self) -> f64 {
        overlap_j(&self.v, &self.w, &self.h1, &self.amps, &self.tap_cov, self.noise_var)
            .expect("valid instance")
            .exp()
    }
}

/// `I <= 3`, `M * N <= 4`, diagonal or correlated `T`, interferer SNR
/// `a^2 tr(T) / s^2` in `[0.05, 1]`.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R) -> OracleCase {
    let nodes = rng.random_range(1..=3);
    let taps = rng.random_range(1..=MAX_DIM);
    let len = rng.random_range(1..=MAX_DIM / taps);
    let noise_var = rng.random_range(0.3..2.0);
    let tap_cov = if rng.random_bool(0.5) {
        let diag: Vec<f64> = (0..taps).map(|_| rng.random_range(0.2..1.0)).collect();
        TapCovariance::diagonal(&diag).expect("positive diagonal")
    } else {
        let b = nalgebra::DMatrix::from_fn(taps, taps, |_, _| rng.random_range(-1.0..1.0));
        let m = (&b * b.transpose()) / taps as f64 + nalgebra::DMatrix::identity(taps, taps) * 0.1;
        TapCovariance::new(m).expect("positive definite")
    };
    let h1 = ChannelRealization::new((0..taps).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("finite taps");
    let amps: Vec<f64> = (0..nodes)
        .map(|i| {
            if i == 0 {
                rng.random_range(0.3..2.0)
            } else {
                (rng.random_range(0.05..1.0) * noise_var / tap_cov.trace()).sqrt()
            }
        })
        .collect();
    let mut rows = || -> Vec<Vec<u8>> {
        (0..nodes)
            .map(|_| (0..len).map(|_| rng.random_range(0..2u8)).collect())
            .collect()
    };
    let v = CodewordMatrix::from_rows(rows()).expect("rectangular");
    let w = CodewordMatrix::from_rows(rows()).expect("rectangular");
    OracleCase {
        v,
        w,
        h1,
        amps: Amplitudes::new(amps).expect("non-negative"),
        tap_cov,
        noise_var,
    }
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub mode: &'static str,
    pub oracle: f64,
    pub std_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub index: usize,
    pub nodes: usize,
    pub dim: usize,
    pub closed_form: f64,
    pub checks: Vec<OracleCheck>,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Every case is checked by the Monte-Carlo oracle (within `MC_SIGMAS`
/// standard errors) and, when eligible, by quadrature (within
/// `QUADRATURE_TOLERANCE` relative).
pub fn run_oracle_suite(instances: usize, seed: u64) -> Vec<OracleOutcome> {
    let mut gen = substream(StreamKey {
        seed,
        estimator_id: estimator::ORACLE,
        stratum: 0,
        index: 0,
    });
    (0..instances)
        .map(|index| {
            let case = random_case(&mut gen);
            let closed = case.closed_form();
            let mut rng = substream(StreamKey {
                seed,
                estimator_id: estimator::ORACLE,
                stratum: 1,
                index: index as u64,
            });
            let mut run = |mode| {
                oracle_j(&case.v, &case.w, &case.h1, &case.amps, &case.tap_cov, case.noise_var, mode, &mut rng)
                    .expect("instance within oracle limits")
            };
            let mc = run(OracleMode::MonteCarlo {
                outer: MC_OUTER,
                inner: MC_INNER,
            });
            let mut checks = vec![OracleCheck {
                mode: "monte-carlo",
                oracle: mc.value,
                std_error: mc.std_error,
                passed: (mc.value - closed).abs() <= MC_SIGMAS * mc.std_error,
            }];
            if case.quadrature_eligible() {
                let q = run(OracleMode::Quadrature);
                checks.push(OracleCheck {
                    mode: "quadrature",
                    oracle: q.value,
                    std_error: 0.0,
                    passed: (q.value - closed).abs() <= QUADRATURE_TOLERANCE * closed,
                });
            }
            OracleOutcome {
                index,
                nodes: case.v.nodes(),
                dim: case.dim(),
                closed_form: closed,
                checks,
            }
        })
        .collect()
}
