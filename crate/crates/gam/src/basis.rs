//! One-dimensional thin plate regression spline smooths.
//!
//! The radial part uses the order-2 kernel `|r|^3 / 12` evaluated against a
//! knot set, truncated to its `k` leading eigenvectors, and constrained to be
//! orthogonal to the polynomial null space `{1, x}`. The resulting rank-`k`
//! basis is then centred (sum-to-zero over the data) and rotated so that its
//! penalty is diagonal, which keeps very large smoothing parameters well
//! conditioned.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GamError, Result};

/// Upper bound on knots fed to the eigen-truncation.
pub const DEFAULT_MAX_KNOTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSpec {
    pub covariate: String,
    pub k: usize,
    pub penalty_order: usize,
}

impl SmoothSpec {
    pub fn new(covariate: impl Into<String>) -> Self {
        Self {
            covariate: covariate.into(),
            k: 10,
            penalty_order: 2,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

/// Uncentred rank-`k` thin plate basis: `k - 2` radial columns followed by `1` and `x`.
#[derive(Debug, Clone)]
pub struct ThinPlateBasis {
    x_min: f64,
    x_range: f64,
    knots: Vec<f64>,
    /// knots x (k - 2): eigenvectors times the null-space constraint.
    radial_map: DMatrix<f64>,
    /// (k - 2) x (k - 2) radial penalty.
    radial_penalty: DMatrix<f64>,
}

impl ThinPlateBasis {
    pub fn new(x: &[f64], k: usize, max_knots: usize) -> Result<Self> {
        if k < 3 {
            return Err(GamError::RankTooSmall(k));
        }
        let mut uniq: Vec<f64> = x.to_vec();
        uniq.sort_by(|a, b| a.partial_cmp(b).expect("finite covariate"));
        uniq.dedup();
        let x_min = uniq[0];
        let x_range = uniq[uniq.len() - 1] - x_min;
        let x_range = if x_range > 0.0 { x_range } else { 1.0 };
        let knots: Vec<f64> = subsample(&uniq, max_knots.max(k))
            .into_iter()
            .map(|v| (v - x_min) / x_range)
            .collect();
        let m = knots.len();
        if m < k {
            return Err(GamError::RankTooSmall(m));
        }

        let e = DMatrix::from_fn(m, m, |i, j| tps_kernel(knots[i] - knots[j]));
        let eig = SymmetricEigen::new(e);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .partial_cmp(&eig.eigenvalues[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        let order = &order[..k];
        let uk = DMatrix::from_fn(m, k, |i, j| eig.eigenvectors[(i, order[j])]);
        let dk = DVector::from_fn(k, |j, _| eig.eigenvalues[order[j]]);

        // Null space constraint T' U_k delta = 0.
        let t = DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { knots[i] });
        let c = uk.transpose() * t;
        let zk = orthogonal_complement(&c);

        let radial_map = &uk * &zk;
        let mut radial_penalty = zk.transpose() * DMatrix::from_diagonal(&dk) * &zk;
        symmetrize(&mut radial_penalty);
        let radial_penalty = clamp_psd(radial_penalty);

        Ok(Self {
            x_min,
            x_range,
            knots,
            radial_map,
            radial_penalty,
        })
    }

    pub fn rank(&self) -> usize {
        self.radial_map.ncols() + 2
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Basis row for a single covariate value.
    pub fn row(&self, x: f64) -> DVector<f64> {
        let xs = (x - self.x_min) / self.x_range;
        let kernel = DVector::from_iterator(
            self.knots.len(),
            self.knots.iter().map(|&kn| tps_kernel(xs - kn)),
        );
        let radial = self.radial_map.tr_mul(&kernel);
        let q = radial.len();
        let mut out = DVector::zeros(q + 2);
        out.rows_mut(0, q).copy_from(&radial);
        out[q] = 1.0;
        out[q + 1] = xs;
        out
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.len(), self.rank());
        for (i, &xi) in x.iter().enumerate() {
            out.row_mut(i).copy_from(&self.row(xi).transpose());
        }
        out
    }

    /// Full k x k penalty; the trailing two null-space rows/columns are zero.
    pub fn penalty(&self) -> DMatrix<f64> {
        let q = self.radial_penalty.nrows();
        let mut s = DMatrix::zeros(q + 2, q + 2);
        s.view_mut((0, 0), (q, q)).copy_from(&self.radial_penalty);
        s
    }
}

/// Basis, penalty and identifiability constraint of a smooth evaluated on data.
#[derive(Debug, Clone)]
pub struct SmoothBasis {
    pub design: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    /// Column sums of `design`; the fitted coefficients satisfy `constraint' beta = 0`.
    pub constraint: DVector<f64>,
}

/// Raw (uncentred) thin plate basis on `x`, with its penalty and centring constraint.
pub fn build_smooth(x: &[f64], spec: &SmoothSpec) -> Result<SmoothBasis> {
    let k = checked_rank(x, spec)?;
    let tp = ThinPlateBasis::new(x, k, DEFAULT_MAX_KNOTS)?;
    let design = tp.design(x);
    let constraint = column_sums(&design);
    Ok(SmoothBasis {
        penalty: tp.penalty(),
        design,
        constraint,
    })
}

/// Validates the spec and lowers `k` to the number of distinct values when needed.
pub(crate) fn checked_rank(x: &[f64], spec: &SmoothSpec) -> Result<usize> {
    if spec.penalty_order != 2 {
        return Err(GamError::UnsupportedPenaltyOrder(spec.penalty_order));
    }
    if spec.k < 3 {
        return Err(GamError::RankTooSmall(spec.k));
    }
    let distinct = distinct_count(x);
    if distinct < spec.k {
        log::warn!(
            "smooth of `{}`: only {} distinct values, reducing k from {} to {}",
            spec.covariate,
            distinct,
            spec.k,
            distinct
        );
        if distinct < 3 {
            return Err(GamError::RankTooSmall(distinct));
        }
        return Ok(distinct);
    }
    Ok(spec.k)
}

/// Centred smooth in its natural parameterization: one unpenalized (linear)
/// column first, then columns with diagonal penalty entries.
#[derive(Debug, Clone)]
pub struct CenteredSmooth {
    basis: ThinPlateBasis,
    /// k x (k - 1): centring followed by penalty eigen-rotation.
    transform: DMatrix<f64>,
    penalty_diag: DVector<f64>,
}

impl CenteredSmooth {
    pub fn new(x: &[f64], spec: &SmoothSpec, max_knots: usize) -> Result<Self> {
        let k = checked_rank(x, spec)?;
        let basis = ThinPlateBasis::new(x, k, max_knots)?;
        let raw = basis.design(x);
        let sums = column_sums(&raw);
        let zc = orthogonal_complement(&DMatrix::from_column_slice(sums.len(), 1, sums.as_slice()));
        let mut sc = zc.transpose() * basis.penalty() * &zc;
        symmetrize(&mut sc);

        let eig = SymmetricEigen::new(sc);
        let dim = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        let rot = DMatrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, order[j])]);
        let mut penalty_diag = DVector::from_fn(dim, |j, _| eig.eigenvalues[order[j]].max(0.0));
        // Exactly one null direction (the centred linear function).
        penalty_diag[0] = 0.0;

        let transform = zc * rot;
        let design = &raw * &transform;
        let data_scale = (design.transpose() * &design).norm();
        let pen_scale = penalty_diag.norm();
        if pen_scale > 0.0 {
            penalty_diag *= data_scale / pen_scale;
        }
        Ok(Self {
            basis,
            transform,
            penalty_diag,
        })
    }

    pub fn ncols(&self) -> usize {
        self.transform.ncols()
    }

    pub fn penalty_diag(&self) -> &DVector<f64> {
        &self.penalty_diag
    }

    pub fn row(&self, x: f64) -> DVector<f64> {
        self.transform.tr_mul(&self.basis.row(x))
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        self.basis.design(x) * &self.transform
    }

    pub fn penalty(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.penalty_diag)
    }
}

fn tps_kernel(r: f64) -> f64 {
    let r = r.abs();
    r * r * r / 12.0
}

fn subsample(sorted: &[f64], max: usize) -> Vec<f64> {
    if sorted.len() <= max {
        return sorted.to_vec();
    }
    let last = sorted.len() - 1;
    (0..max)
        .map(|i| sorted[(i * last + (max - 1) / 2) / (max - 1)])
        .collect()
}

pub(crate) fn distinct_count(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v.len()
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn clamp_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return m;
    }
    let d = eig.eigenvalues.map(|v| v.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

/// Orthonormal basis (as columns) of the complement of `c`'s column space.
pub(crate) fn orthogonal_complement(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let push = |mut v: DVector<f64>, basis: &mut Vec<DVector<f64>>| -> bool {
        for _ in 0..2 {
            for b in basis.iter() {
                let p = b.dot(&v);
                v.axpy(-p, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
            true
        } else {
            false
        }
    };
    let mut constraint_rank = 0;
    for j in 0..c.ncols() {
        let col = c.column(j).into_owned();
        let scale = col.norm().max(f64::MIN_POSITIVE);
        if push(col / scale, &mut basis) {
            constraint_rank += 1;
        }
    }
    let mut complement = Vec::with_capacity(n - constraint_rank);
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let e = DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        if push(e, &mut basis) {
            complement.push(basis[basis.len() - 1].clone());
        }
    }
    DMatrix::from_columns(&complement)
}
