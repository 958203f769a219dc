//! Penalized IRLS for the gamma family with log link, with smoothing
//! parameters chosen by coordinate-wise golden-section search on GCV.
//!
//! For gamma/log the IRLS weights `1 / (V(mu) g'(mu)^2)` are identically one,
//! so `X'X` is computed once per design and each iteration only needs `X'z`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::basis::{distinct_count, CenteredSmooth, SmoothSpec, DEFAULT_MAX_KNOTS};
use crate::error::{GamError, Result};
use crate::frame::Frame;

const ETA_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub enum TermSpec {
    Smooth(SmoothSpec),
    Linear(String),
}

impl TermSpec {
    pub fn smooth(covariate: impl Into<String>) -> Self {
        TermSpec::Smooth(SmoothSpec::new(covariate))
    }

    pub fn linear(covariate: impl Into<String>) -> Self {
        TermSpec::Linear(covariate.into())
    }

    pub fn covariate(&self) -> &str {
        match self {
            TermSpec::Smooth(s) => &s.covariate,
            TermSpec::Linear(name) => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSelection {
    Gcv,
    /// One value per smooth term, in term order.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub selection: LambdaSelection,
    pub log10_lambda_bounds: (f64, f64),
    pub max_iterations: usize,
    pub deviance_tol: f64,
    pub gcv_tol: f64,
    pub golden_tol: f64,
    /// Half-width in log10 units of the search bracket after the first sweep.
    pub local_bracket: f64,
    pub max_outer: usize,
    pub max_knots: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            selection: LambdaSelection::Gcv,
            log10_lambda_bounds: (-6.0, 6.0),
            max_iterations: 200,
            deviance_tol: 1e-8,
            gcv_tol: 1e-6,
            golden_tol: 1e-2,
            local_bracket: 1.5,
            max_outer: 10,
            max_knots: DEFAULT_MAX_KNOTS,
        }
    }
}

impl FitOptions {
    pub fn fixed(lambdas: Vec<f64>) -> Self {
        Self {
            selection: LambdaSelection::Fixed(lambdas),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub enum TermBasis {
    Smooth(CenteredSmooth),
    /// Centred linear column `x - mean`.
    Linear { mean: f64 },
    /// Constant covariate; contributes nothing.
    Dropped,
}

#[derive(Debug, Clone)]
pub struct FittedTerm {
    pub name: String,
    pub basis: TermBasis,
    pub columns: Range<usize>,
    pub lambda: Option<f64>,
    pub edf: f64,
}

impl FittedTerm {
    pub fn is_smooth(&self) -> bool {
        matches!(self.basis, TermBasis::Smooth(_))
    }

    /// Design row of this term at covariate value `x`.
    pub fn row(&self, x: f64) -> DVector<f64> {
        match &self.basis {
            TermBasis::Smooth(s) => s.row(x),
            TermBasis::Linear { mean } => DVector::from_element(1, x - mean),
            TermBasis::Dropped => DVector::zeros(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GamFit {
    pub terms: Vec<FittedTerm>,
    pub coefficients: DVector<f64>,
    pub response: Vec<f64>,
    pub fitted: Vec<f64>,
    pub deviance: f64,
    /// Total effective degrees of freedom, intercept included.
    pub edf: f64,
    pub gcv: f64,
    pub dispersion: f64,
    pub r2_adj: f64,
    pub iterations: usize,
    pub covariate_means: Vec<(String, f64)>,
    /// `(X'X + S_lambda)^-1`.
    pub(crate) unscaled_covariance: DMatrix<f64>,
}

impl GamFit {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn term(&self, name: &str) -> Result<&FittedTerm> {
        self.terms
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| GamError::UnknownTerm(name.to_string()))
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.terms.iter().filter_map(|t| t.lambda).collect()
    }

    /// Bayesian posterior covariance `(X'X + S_lambda)^-1 * dispersion`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.unscaled_covariance * self.dispersion
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }
}

/// Gamma deviance `2 * sum((y - mu)/mu - ln(y/mu))`.
pub fn gamma_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| (y - m) / m - (y / m).ln())
        .sum::<f64>()
}

/// Pearson statistic `sum(((y - mu)/mu)^2)` for the gamma variance function.
pub fn gamma_pearson(y: &[f64], mu: &[f64]) -> f64 {
    y.iter()
        .zip(mu)
        .map(|(&y, &m)| ((y - m) / m).powi(2))
        .sum()
}

/// `n * D / (n - tau)^2`.
pub fn gcv_formula(n: usize, deviance: f64, edf: f64) -> Result<f64> {
    let n_f = n as f64;
    if edf >= n_f {
        return Err(GamError::OverParameterized { edf, n });
    }
    Ok(n_f * deviance / (n_f - edf).powi(2))
}

/// GCV score of a converged fit.
pub fn gcv_score(fit: &GamFit) -> Result<f64> {
    gcv_formula(fit.n(), fit.deviance, fit.edf)
}

pub(crate) fn adjusted_r2(y: &[f64], mu: &[f64], edf: f64) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let rss: f64 = y.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
    let tss: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    1.0 - (rss / (n - edf)) / (tss / (n - 1.0))
}

struct Design {
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
    /// Per smooth term: column range and diagonal penalty.
    penalties: Vec<(Range<usize>, DVector<f64>)>,
}

struct Evaluation {
    beta: DVector<f64>,
    mu: Vec<f64>,
    deviance: f64,
    edf: f64,
    gcv: f64,
    iterations: usize,
}

struct Problem<'a> {
    y: &'a [f64],
    design: Design,
    opts: &'a FitOptions,
}

impl Problem<'_> {
    fn penalty_diag(&self, lambdas: &[f64]) -> DVector<f64> {
        let mut d = DVector::zeros(self.design.x.ncols());
        for ((cols, s), &lambda) in self.design.penalties.iter().zip(lambdas) {
            for (i, c) in cols.clone().enumerate() {
                d[c] = lambda * s[i];
            }
        }
        d
    }

    fn system(&self, pen: &DVector<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mut a = self.design.xtx.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += pen[i];
        }
        a.cholesky().ok_or(GamError::Singular)
    }

    /// Linear predictor, mean, deviance and penalized deviance at `beta`.
    fn state(&self, beta: &DVector<f64>, pen: &DVector<f64>) -> (DVector<f64>, Vec<f64>, f64, f64) {
        let eta = &self.design.x * beta;
        let mu: Vec<f64> = eta
            .iter()
            .map(|&e| e.clamp(-ETA_LIMIT, ETA_LIMIT).exp())
            .collect();
        let dev = gamma_deviance(self.y, &mu);
        let quad: f64 = beta.iter().zip(pen.iter()).map(|(b, p)| p * b * b).sum();
        (eta, mu, dev, dev + quad)
    }

    /// PIRLS at fixed smoothing parameters.
    fn solve(&self, lambdas: &[f64], start: Option<&DVector<f64>>) -> Result<Evaluation> {
        let pen = self.penalty_diag(lambdas);
        let chol = self.system(&pen)?;
        let x = &self.design.x;
        let mut beta = match start {
            Some(b) => b.clone(),
            None => {
                let z = DVector::from_iterator(self.y.len(), self.y.iter().map(|v| v.ln()));
                chol.solve(&x.tr_mul(&z))
            }
        };
        let (mut eta, mut mu, mut dev, mut pdev) = self.state(&beta, &pen);
        let mut trace = vec![dev];
        for iter in 1..=self.opts.max_iterations {
            // Unit working weights: z = eta + (y - mu) / mu.
            let z = DVector::from_iterator(
                self.y.len(),
                eta.iter()
                    .zip(self.y)
                    .zip(&mu)
                    .map(|((&e, &y), &m)| e + (y - m) / m),
            );
            let proposal = chol.solve(&x.tr_mul(&z));
            let mut step = 1.0;
            let (mut cand, mut cand_eta, mut cand_mu, mut cand_dev, mut cand_pdev);
            loop {
                cand = &beta + (&proposal - &beta) * step;
                (cand_eta, cand_mu, cand_dev, cand_pdev) = self.state(&cand, &pen);
                if cand_pdev.is_finite() && cand_pdev <= pdev * (1.0 + 1e-12) || step < 1e-6 {
                    break;
                }
                step *= 0.5;
            }
            let dev_change = (cand_dev - dev).abs() / (cand_dev.abs() + 0.1);
            let beta_change = (&cand - &beta).amax() / (1.0 + cand.amax());
            beta = cand;
            eta = cand_eta;
            dev = cand_dev;
            pdev = cand_pdev;
            mu = cand_mu;
            trace.push(dev);
            if dev_change < self.opts.deviance_tol && beta_change < 1e-9 {
                let inv_diag = cholesky_inverse_diag(&chol);
                let edf = x.ncols() as f64
                    - inv_diag
                        .iter()
                        .zip(pen.iter())
                        .map(|(a, p)| a * p)
                        .sum::<f64>();
                let gcv = gcv_formula(self.y.len(), dev, edf).unwrap_or(f64::INFINITY);
                return Ok(Evaluation {
                    beta,
                    mu,
                    deviance: dev,
                    edf,
                    gcv,
                    iterations: iter,
                });
            }
        }
        Err(GamError::NotConverged {
            iterations: self.opts.max_iterations,
            trace,
        })
    }

    fn select(&self) -> Result<(Vec<f64>, Evaluation)> {
        let m = self.design.penalties.len();
        match &self.opts.selection {
            LambdaSelection::Fixed(l) => {
                if l.len() != m {
                    return Err(GamError::LambdaCount {
                        expected: m,
                        found: l.len(),
                    });
                }
                Ok((l.clone(), self.solve(l, None)?))
            }
            LambdaSelection::Gcv => self.select_gcv(),
        }
    }

    fn select_gcv(&self) -> Result<(Vec<f64>, Evaluation)> {
        let m = self.design.penalties.len();
        let (lo, hi) = self.opts.log10_lambda_bounds;
        let mut rho = vec![0.0f64.clamp(lo, hi); m];
        let to_lambda = |rho: &[f64]| rho.iter().map(|r| 10f64.powf(*r)).collect::<Vec<_>>();
        let mut best = self.solve(&to_lambda(&rho), None)?;
        if m == 0 {
            return Ok((Vec::new(), best));
        }
        for round in 0..self.opts.max_outer {
            let before = best.gcv;
            for j in 0..m {
                let start = best.beta.clone();
                let mut eval_at = |r: f64| -> Result<Evaluation> {
                    let mut trial = rho.clone();
                    trial[j] = r;
                    self.solve(&to_lambda(&trial), Some(&start))
                };
                let (a, b) = if round == 0 {
                    (lo, hi)
                } else {
                    let w = self.opts.local_bracket;
                    ((rho[j] - w).max(lo), (rho[j] + w).min(hi))
                };
                let (r, e) = golden_section(&mut eval_at, a, b, self.opts.golden_tol)?;
                if e.gcv < best.gcv {
                    rho[j] = r;
                    best = e;
                }
            }
            if (before - best.gcv).abs() <= self.opts.gcv_tol * best.gcv.abs() {
                break;
            }
        }
        Ok((to_lambda(&rho), best))
    }
}

/// Minimizes GCV over `[lo, hi]`; endpoints are evaluated explicitly.
fn golden_section<F>(f: &mut F, lo: f64, hi: f64, tol: f64) -> Result<(f64, Evaluation)>
where
    F: FnMut(f64) -> Result<Evaluation>,
{
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a) > tol {
        if fc.gcv <= fd.gcv {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc.gcv <= fd.gcv { (c, fc) } else { (d, fd) };
    for end in [lo, hi] {
        let e = f(end)?;
        if e.gcv < best.1.gcv {
            best = (end, e);
        }
    }
    Ok(best)
}

/// Diagonal of `(L L')^-1` as squared column norms of `L^-1`.
fn cholesky_inverse_diag(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> DVector<f64> {
    let l = chol.l();
    let p = l.nrows();
    let mut out = DVector::zeros(p);
    let mut col = vec![0.0; p];
    for j in 0..p {
        // Column j of L^-1 is zero above row j.
        col[j] = 1.0 / l[(j, j)];
        let mut sq = col[j] * col[j];
        for i in j + 1..p {
            let mut s = 0.0;
            for k in j..i {
                s += l[(i, k)] * col[k];
            }
            col[i] = -s / l[(i, i)];
            sq += col[i] * col[i];
        }
        out[j] = sq;
    }
    out
}

fn build_terms(
    n: usize,
    terms: &[TermSpec],
    data: &Frame,
    max_knots: usize,
) -> Result<(Vec<FittedTerm>, Design)> {
    let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::from_element(n, 1, 1.0)];
    let mut fitted = Vec::with_capacity(terms.len());
    let mut penalties = Vec::new();
    let mut next = 1;
    for spec in terms {
        let name = spec.covariate().to_string();
        let x = data.column(&name)?;
        if x.len() != n {
            return Err(GamError::LengthMismatch {
                name,
                expected: n,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GamError::NonFiniteCovariate(name));
        }
        let distinct = distinct_count(x);
        let basis = if distinct < 2 {
            log::warn!("covariate `{name}` is constant; term dropped");
            TermBasis::Dropped
        } else {
            match spec {
                TermSpec::Smooth(s) if distinct >= 3 => {
                    TermBasis::Smooth(CenteredSmooth::new(x, s, max_knots)?)
                }
                TermSpec::Smooth(_) => {
                    log::warn!("covariate `{name}` has 2 distinct values; fitted as linear");
                    TermBasis::Linear {
                        mean: x.iter().sum::<f64>() / n as f64,
                    }
                }
                TermSpec::Linear(_) => TermBasis::Linear {
                    mean: x.iter().sum::<f64>() / n as f64,
                },
            }
        };
        let block = match &basis {
            TermBasis::Smooth(s) => s.design(x),
            TermBasis::Linear { mean } => {
                DMatrix::from_iterator(n, 1, x.iter().map(|v| v - mean))
            }
            TermBasis::Dropped => DMatrix::zeros(n, 0),
        };
        let cols = next..next + block.ncols();
        next = cols.end;
        if let TermBasis::Smooth(s) = &basis {
            penalties.push((cols.clone(), s.penalty_diag().clone()));
        }
        blocks.push(block);
        fitted.push(FittedTerm {
            name,
            basis,
            columns: cols,
            lambda: None,
            edf: 0.0,
        });
    }
    let p = next;
    let mut x = DMatrix::zeros(n, p);
    let mut col = 0;
    for b in &blocks {
        x.view_mut((0, col), (n, b.ncols())).copy_from(b);
        col += b.ncols();
    }
    let xtx = x.tr_mul(&x);
    Ok((fitted, Design { x, xtx, penalties }))
}

/// Fits a gamma/log-link GAM with the given terms.
pub fn fit_gam(
    response: &[f64],
    terms: &[TermSpec],
    data: &Frame,
    opts: &FitOptions,
) -> Result<GamFit> {
    let n = response.len();
    if n == 0 {
        return Err(GamError::Empty);
    }
    if let Some((row, &value)) = response
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(GamError::NonPositiveResponse { row, value });
    }
    let (mut fitted_terms, design) = build_terms(n, terms, data, opts.max_knots)?;
    let problem = Problem {
        y: response,
        design,
        opts,
    };
    let (lambdas, eval) = problem.select()?;

    let pen = problem.penalty_diag(&lambdas);
    let chol = problem.system(&pen)?;
    let inv = chol.inverse();
    let mut smooth_idx = 0;
    for term in fitted_terms.iter_mut() {
        term.edf = term
            .columns
            .clone()
            .map(|c| 1.0 - inv[(c, c)] * pen[c])
            .sum();
        if term.is_smooth() {
            term.lambda = Some(lambdas[smooth_idx]);
            smooth_idx += 1;
        }
    }
    let edf = eval.edf;
    let gcv = gcv_formula(n, eval.deviance, edf)?;
    let dispersion = gamma_pearson(response, &eval.mu) / (n as f64 - edf);
    let r2_adj = adjusted_r2(response, &eval.mu, edf);
    let covariate_means = terms
        .iter()
        .map(|t| {
            let name = t.covariate();
            Ok((name.to_string(), data.mean(name)?))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GamFit {
        terms: fitted_terms,
        coefficients: eval.beta,
        response: response.to_vec(),
        fitted: eval.mu,
        deviance: eval.deviance,
        edf,
        gcv,
        dispersion,
        r2_adj,
        iterations: eval.iterations,
        covariate_means,
        unscaled_covariance: inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviance_hand_value() {
        assert_eq!(gamma_deviance(&[1.0, 2.0], &[2.0, 1.0]), 1.0);
    }

    #[test]
    fn deviance_zero_iff_saturated() {
        let y = [0.3, 1.7, 250.0];
        assert_eq!(gamma_deviance(&y, &y), 0.0);
        assert!(gamma_deviance(&y, &[0.3, 1.7, 251.0]) > 0.0);
    }

    #[test]
    fn gcv_formula_value() {
        let g = gcv_formula(100, 50.0, 10.0).unwrap();
        assert!((g - 0.617284).abs() < 1e-6);
        assert!(gcv_formula(10, 1.0, 10.0).is_err());
    }

    #[test]
    fn rejects_non_positive_response() {
        let data = Frame::new().with("x", vec![1.0, 2.0, 3.0]);
        let err = fit_gam(&[1.0, 0.0, 2.0], &[TermSpec::linear("x")], &data, &FitOptions::default());
        assert!(matches!(err, Err(GamError::NonPositiveResponse { row: 1, .. })));
    }

    #[test]
    fn intercept_only_matches_mean() {
        let y = [1.0, 2.0, 3.0, 6.0];
        let fit = fit_gam(&y, &[], &Frame::new(), &FitOptions::default()).unwrap();
        assert!((fit.intercept() - 3.0f64.ln()).abs() < 1e-10);
        assert!((fit.edf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_covariate_is_dropped() {
        let y = [1.0, 2.0, 3.0, 6.0, 2.5];
        let data = Frame::new().with("c", vec![4.0; 5]);
        let fit = fit_gam(&y, &[TermSpec::smooth("c")], &data, &FitOptions::default()).unwrap();
        assert_eq!(fit.terms[0].edf, 0.0);
        assert!(matches!(fit.terms[0].basis, TermBasis::Dropped));
    }
}
