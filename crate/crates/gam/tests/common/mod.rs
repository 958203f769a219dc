#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gamma draw with mean `mu` and shape `shape`.
pub fn gamma_noise<R: Rng>(rng: &mut R, mu: f64, shape: f64) -> f64 {
    Gamma::new(shape, mu / shape).unwrap().sample(rng)
}

pub struct GlmOracle {
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub deviance: f64,
    pub pearson: f64,
}

/// Plain gamma/log GLM by Fisher scoring; columns exclude the intercept.
pub fn glm_oracle(y: &[f64], columns: &[Vec<f64>]) -> GlmOracle {
    let n = y.len();
    let p = columns.len() + 1;
    let row = |i: usize| -> Vec<f64> {
        let mut r = vec![1.0];
        r.extend(columns.iter().map(|c| c[i]));
        r
    };
    let mut beta = vec![0.0; p];
    beta[0] = (y.iter().sum::<f64>() / n as f64).ln();
    for _ in 0..500 {
        let mut xtx = vec![vec![0.0; p]; p];
        let mut xtz = vec![0.0; p];
        for i in 0..n {
            let r = row(i);
            let eta: f64 = r.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = eta.exp();
            let z = eta + (y[i] - mu) / mu;
            for a in 0..p {
                xtz[a] += r[a] * z;
                for b in 0..p {
                    xtx[a][b] += r[a] * r[b];
                }
            }
        }
        let next = gauss_solve(xtx, xtz);
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        if change < 1e-14 {
            break;
        }
    }
    let mu: Vec<f64> = (0..n)
        .map(|i| row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let deviance = 2.0
        * y.iter()
            .zip(&mu)
            .map(|(&y, &m)| (y - m) / m - (y / m).ln())
            .sum::<f64>();
    let pearson = y.iter().zip(&mu).map(|(&y, &m)| ((y - m) / m).powi(2)).sum();
    GlmOracle {
        beta,
        mu,
        deviance,
        pearson,
    }
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}
