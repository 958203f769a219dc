use nalgebra::DVector;

use crate::error::Result;
use crate::fit::GamFit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectPoint {
    pub x: f64,
    pub effect: f64,
    pub se: f64,
}

/// Contribution of one term to the linear predictor over `grid`, with
/// posterior standard errors. Other terms are additive, so holding them at
/// their means only shifts the curve by a constant and is left out here.
pub fn partial_effect(fit: &GamFit, term: &str, grid: &[f64]) -> Result<Vec<EffectPoint>> {
    let t = fit.term(term)?;
    let cols = t.columns.clone();
    let beta = fit.coefficients.rows(cols.start, cols.len());
    let cov = fit.covariance();
    let block = cov.view((cols.start, cols.start), (cols.len(), cols.len()));
    Ok(grid
        .iter()
        .map(|&x| {
            let row: DVector<f64> = t.row(x);
            let effect = row.dot(&beta);
            let var = (row.transpose() * block * &row)[0];
            EffectPoint {
                x,
                effect,
                se: var.max(0.0).sqrt(),
            }
        })
        .collect())
}

/// Evenly spaced grid over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
