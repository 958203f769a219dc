//! Per-term significance summaries and text exports.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::effect::EffectPoint;
use crate::fit::GamFit;

#[derive(Debug, Clone, PartialEq)]
pub struct TermSummary {
    pub name: String,
    pub edf: f64,
    /// Wald statistic divided by its reference rank.
    pub f: f64,
    pub rank: usize,
    pub p_value: f64,
}

/// Wald-type F statistics using a rank-`round(edf)` pseudo-inverse of the
/// term's posterior covariance block, referred to `F(rank, n - edf)`.
pub fn term_summaries(fit: &GamFit) -> Vec<TermSummary> {
    let cov = fit.covariance();
    let resid_df = fit.n() as f64 - fit.edf;
    fit.terms
        .iter()
        .map(|t| {
            let cols = t.columns.clone();
            if cols.is_empty() {
                return TermSummary {
                    name: t.name.clone(),
                    edf: 0.0,
                    f: 0.0,
                    rank: 0,
                    p_value: 1.0,
                };
            }
            let block: DMatrix<f64> = cov
                .view((cols.start, cols.start), (cols.len(), cols.len()))
                .into_owned();
            let beta: DVector<f64> = fit.coefficients.rows(cols.start, cols.len()).into_owned();
            let rank = (t.edf.round() as usize).clamp(1, cols.len());
            let stat = pinv_quadratic(&block, &beta, rank);
            let f = stat / rank as f64;
            let p_value = if resid_df > 0.0 && f.is_finite() {
                FisherSnedecor::new(rank as f64, resid_df)
                    .map(|d| d.sf(f))
                    .unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            TermSummary {
                name: t.name.clone(),
                edf: t.edf,
                f,
                rank,
                p_value,
            }
        })
        .collect()
}

fn pinv_quadratic(v: &DMatrix<f64>, beta: &DVector<f64>, rank: usize) -> f64 {
    let eig = SymmetricEigen::new(v.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    order
        .iter()
        .take(rank)
        .filter(|&&i| eig.eigenvalues[i] > 0.0)
        .map(|&i| {
            let proj = eig.eigenvectors.column(i).dot(beta);
            proj * proj / eig.eigenvalues[i]
        })
        .sum()
}

/// Significance marks: `.` p<0.1, `*` p<0.05, `**` p<0.01, `***` p<0.001.
pub fn stars(p: f64) -> &'static str {
    if p.is_nan() {
        ""
    } else if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

/// TSV with header `term\tedf\tF\tp\tsig`.
pub fn write_term_table<W: Write>(mut out: W, rows: &[TermSummary]) -> io::Result<()> {
    writeln!(out, "term\tedf\tF\tp\tsig")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.6e}\t{}",
            r.name,
            r.edf,
            r.f,
            r.p_value,
            stars(r.p_value)
        )?;
    }
    Ok(())
}

/// CSV with header `grid,effect,se`.
pub fn write_curve_csv<W: Write>(mut out: W, points: &[EffectPoint]) -> io::Result<()> {
    writeln!(out, "grid,effect,se")?;
    for p in points {
        writeln!(out, "{:.6},{:.8},{:.8}", p.x, p.effect, p.se)?;
    }
    Ok(())
}
