//! Analysis of deviance between nested fits.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{GamError, Result};
use crate::fit::GamFit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelComparison {
    /// `D_base - D_extended`; positive when the extended model fits better.
    pub delta_deviance: f64,
    /// `edf_extended - edf_base`; may be fractional or negative.
    pub delta_edf: f64,
    pub chi_square: f64,
    /// `None` when the extended model has fewer edf but lower deviance.
    pub p_value: Option<f64>,
    pub delta_r2_adj_percent: f64,
    pub delta_gcv: f64,
}

impl ModelComparison {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p < alpha)
    }
}

pub fn compare_models(base: &GamFit, extended: &GamFit) -> Result<ModelComparison> {
    if base.response != extended.response {
        return Err(GamError::ResponseMismatch);
    }
    let delta_deviance = base.deviance - extended.deviance;
    let delta_edf = extended.edf - base.edf;
    let chi_square = delta_deviance / extended.dispersion;
    let p_value = chi_square_p(chi_square, delta_edf);
    Ok(ModelComparison {
        delta_deviance,
        delta_edf,
        chi_square,
        p_value,
        delta_r2_adj_percent: 100.0 * (extended.r2_adj - base.r2_adj),
        delta_gcv: extended.gcv - base.gcv,
    })
}

/// Upper-tail chi-square probability with fractional degrees of freedom.
pub fn chi_square_p(statistic: f64, df: f64) -> Option<f64> {
    if df <= 0.0 {
        return if statistic <= 0.0 { Some(1.0) } else { None };
    }
    if statistic <= 0.0 {
        return Some(1.0);
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    Some(dist.sf(statistic))
}
