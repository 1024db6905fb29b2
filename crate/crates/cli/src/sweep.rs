//! Sweep evaluation. Every sweep point gets its own stream context (the run
//! seed mixed with the point index); upper-bound rows depend only on the link
//! distance and `eta1`, so they are computed once per such group and keyed by
//! the group index.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use uwbbounds_core::{lower_bound, upper_bound, BoundEstimate, BoundKind, Scenario, ScenarioConfig, StreamContext};

use crate::config::SweepSpec;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub config: ScenarioConfig,
}

impl SweepPoint {
    fn interferer_distance(&self) -> Option<f64> {
        self.config.interferer_distances_m.first().copied()
    }

    fn interferer_duty_cycle(&self) -> Option<f64> {
        self.config.duty_cycles.get(1).copied()
    }

    fn describe(&self) -> String {
        let mut s = format!("l={} eta1={}", self.config.link_distance_m, self.config.duty_cycles[0]);
        if let (Some(d), Some(e)) = (self.interferer_distance(), self.interferer_duty_cycle()) {
            s.push_str(&format!(" d={d} eta2={e}"));
        }
        s
    }
}

impl SweepSpec {
    /// Cartesian product of the swept values; the first declared variable
    /// varies slowest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut configs = vec![self.base.clone()];
        for (var, values) in &self.sweep.0 {
            configs = configs
                .into_iter()
                .flat_map(|cfg| {
                    values.iter().map(move |&v| {
                        let mut c = cfg.clone();
                        var.apply(&mut c, v);
                        c
                    })
                })
                .collect();
        }
        configs
            .into_iter()
            .enumerate()
            .map(|(index, config)| SweepPoint { index, config })
            .collect()
    }
}

/// One CSV line. Empty `d_m`/`eta2` mean "not applicable" (no interferer, or
/// an upper-bound row, which does not depend on them).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub l_m: f64,
    pub d_m: Option<f64>,
    pub eta1: f64,
    pub eta2: Option<f64>,
    #[serde(serialize_with = "kind_name")]
    pub bound: BoundKind,
    pub rate_bits_per_symbol: f64,
    pub ci_halfwidth: f64,
    pub samples: usize,
    pub seed: u64,
    pub wall_s: Option<f64>,
}

fn kind_name<S: serde::Serializer>(kind: &BoundKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(kind.as_str())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Fill `wall_s`; off by default so that reruns are byte-identical.
    pub record_timing: bool,
    /// Print one line per finished job to standard error.
    pub progress: bool,
}

#[derive(Debug)]
pub struct SweepFailure {
    /// Rows that precede the failing job in output order.
    pub completed: Vec<ResultRow>,
    pub error: CliError,
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Lower { point: usize },
    Upper { point: usize, group: usize },
}

fn jobs(spec: &SweepSpec, points: &[SweepPoint]) -> Vec<Job> {
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut out = Vec::new();
    for p in points {
        if spec.bounds.lower() {
            out.push(Job::Lower { point: p.index });
        }
        let key = (p.config.link_distance_m.to_bits(), p.config.duty_cycles[0].to_bits());
        if spec.bounds.upper() && !groups.contains(&key) {
            out.push(Job::Upper {
                point: p.index,
                group: groups.len(),
            });
            groups.push(key);
        }
    }
    out
}

pub fn run_sweep(spec: &SweepSpec, opts: RunOptions) -> Result<Vec<ResultRow>, SweepFailure> {
    let points = spec.points();
    let jobs = jobs(spec, &points);
    let seed = spec.seed();
    let total = jobs.len();

    let results: Vec<Result<ResultRow, CliError>> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, job)| {
            let start = Instant::now();
            let (point, kind, ctx_index) = match *job {
                Job::Lower { point } => (&points[point], BoundKind::Lower, point),
                Job::Upper { point, group } => (&points[point], BoundKind::Upper, group),
            };
            let ctx = StreamContext::new(seed).at_point(ctx_index as u64);
            let estimate: Result<BoundEstimate, _> = Scenario::new(point.config.clone()).and_then(|s| match kind {
                BoundKind::Lower => lower_bound(&s, &ctx),
                BoundKind::Upper => upper_bound(&s, &ctx),
            });
            let elapsed = start.elapsed().as_secs_f64();
            let label = format!("{} {}", kind.as_str(), point.describe());
            let est = estimate.map_err(|source| CliError::Estimator {
                context: label.clone(),
                source,
            });
            if opts.progress {
                match &est {
                    Ok(e) => eprintln!(
                        "[{}/{total}] {label}: rate={:.6} +- {:.6} bits/symbol ({elapsed:.2} s)",
                        k + 1,
                        e.rate,
                        e.ci_halfwidth
                    ),
                    Err(err) => eprintln!("[{}/{total}] {label}: FAILED ({err})", k + 1),
                }
            }
            let est = est?;
            let upper = kind == BoundKind::Upper;
            Ok(ResultRow {
                l_m: point.config.link_distance_m,
                d_m: if upper { None } else { point.interferer_distance() },
                eta1: point.config.duty_cycles[0],
                eta2: if upper { None } else { point.interferer_duty_cycle() },
                bound: kind,
                rate_bits_per_symbol: est.rate,
                ci_halfwidth: est.ci_halfwidth,
                samples: est.samples_used,
                seed,
                wall_s: opts.record_timing.then_some(elapsed),
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(error) => {
                return Err(SweepFailure {
                    completed: rows,
                    error,
                })
            }
        }
    }
    Ok(rows)
}

/// Header plus one line per row, in the given order.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "l_m",
        "d_m",
        "eta1",
        "eta2",
        "bound",
        "rate_bits_per_symbol",
        "ci_halfwidth",
        "samples",
        "seed",
        "wall_s",
    ])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
