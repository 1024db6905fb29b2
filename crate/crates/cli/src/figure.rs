//! Rates normalized by the rate at a reference interferer distance, per
//! `(l, eta1, eta2)` group.

use serde::Serialize;
use thiserror::Error;
use uwbbounds_core::BoundKind;

use crate::sweep::ResultRow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub l_m: f64,
    pub d_m: f64,
    pub eta1: f64,
    pub eta2: Option<f64>,
    pub rate_bits_per_symbol: f64,
    pub ci_halfwidth: f64,
    pub rate_ratio: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("no lower-bound row at d = {reference} m for l = {l_m}, eta1 = {eta1}, eta2 = {eta2:?}")]
pub struct MissingReference {
    pub reference: f64,
    pub l_m: f64,
    pub eta1: f64,
    pub eta2: Option<f64>,
}

fn group(r: &ResultRow) -> (u64, u64, Option<u64>) {
    (r.l_m.to_bits(), r.eta1.to_bits(), r.eta2.map(f64::to_bits))
}

/// Lower-bound rows in input order with `rate_ratio = rate / rate(d = reference)`.
/// A zero reference rate gives a NaN ratio.
pub fn emit_figure_data(rows: &[ResultRow], reference: f64) -> Result<Vec<FigureRow>, MissingReference> {
    let lower: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.bound == BoundKind::Lower && r.d_m.is_some())
        .collect();
    lower
        .iter()
        .map(|r| {
            let base = lower
                .iter()
                .find(|q| group(q) == group(r) && q.d_m == Some(reference))
                .ok_or(MissingReference {
                    reference,
                    l_m: r.l_m,
                    eta1: r.eta1,
                    eta2: r.eta2,
                })?;
            let ratio = if base.rate_bits_per_symbol > 0.0 {
                r.rate_bits_per_symbol / base.rate_bits_per_symbol
            } else {
                f64::NAN
            };
            Ok(FigureRow {
                l_m: r.l_m,
                d_m: r.d_m.unwrap_or_default(),
                eta1: r.eta1,
                eta2: r.eta2,
                rate_bits_per_symbol: r.rate_bits_per_symbol,
                ci_halfwidth: r.ci_halfwidth,
                rate_ratio: ratio,
            })
        })
        .collect()
}

pub fn write_figure_csv<W: std::io::Write>(rows: &[FigureRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(l: f64, d: f64, eta2: f64, rate: f64) -> ResultRow {
        ResultRow {
            l_m: l,
            d_m: Some(d),
            eta1: 0.5,
            eta2: Some(eta2),
            bound: BoundKind::Lower,
            rate_bits_per_symbol: rate,
            ci_halfwidth: 0.01,
            samples: 10,
            seed: 0,
            wall_s: None,
        }
    }

    #[test]
    fn ratio_is_one_at_reference_and_scale_free() {
        let rows = vec![row(5.0, 1.0, 0.3, 0.4), row(5.0, 100.0, 0.3, 0.5), row(8.0, 100.0, 0.3, 0.2)];
        let fig = emit_figure_data(&rows, 100.0).unwrap();
        assert_eq!(fig[1].rate_ratio, 1.0);
        assert_eq!(fig[2].rate_ratio, 1.0);
        assert!((fig[0].rate_ratio - 0.8).abs() < 1e-15);
        let scaled: Vec<ResultRow> = rows
            .iter()
            .map(|r| ResultRow { rate_bits_per_symbol: r.rate_bits_per_symbol * 3.0, ..r.clone() })
            .collect();
        let fig2 = emit_figure_data(&scaled, 100.0).unwrap();
        for (a, b) in fig.iter().zip(&fig2) {
            assert!((a.rate_ratio - b.rate_ratio).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_reference() {
        let rows = vec![row(5.0, 1.0, 0.3, 0.4), row(5.0, 100.0, 0.1, 0.5)];
        assert!(emit_figure_data(&rows, 100.0).is_err());
    }
}
