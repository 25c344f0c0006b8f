//! Least-squares conditional expectations on Brownian levels.
//!
//! Features are built from the normalised level `x = W_t / √t`. Polynomial
//! bases use probabilists' Hermite polynomials, which are orthogonal under
//! the law of `x`, so the Gram matrix stays close to diagonal. Gram sums are
//! accumulated over fixed-size path chunks and combined pairwise, which
//! makes every fit independent of the worker count.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::paths::PathBundle;

/// Gram matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionBasis {
    /// All Hermite products of total degree `<= degree`.
    Polynomial { degree: usize },
    /// Per coordinate: `1, x, (x - κ)_+` for each knot `κ` (in units of `√t`).
    PiecewiseLinear { knots: Vec<f64> },
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis::Polynomial { degree: 4 }
    }
}

fn hermite(x: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = x;
    }
    for k in 2..=degree {
        out[k] = x * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
}

fn exponents(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| e.iter().sum::<usize>());
    out
}

/// Feature map for one node.
#[derive(Debug, Clone)]
struct Features {
    basis: RegressionBasis,
    dim: usize,
    scale: f64,
    exps: Vec<Vec<usize>>,
    constant_only: bool,
}

impl Features {
    fn new(basis: &RegressionBasis, dim: usize, t: f64) -> Self {
        let exps = match basis {
            RegressionBasis::Polynomial { degree } => exponents(dim, *degree),
            RegressionBasis::PiecewiseLinear { .. } => Vec::new(),
        };
        Self {
            basis: basis.clone(),
            dim,
            scale: if t > 0.0 { 1.0 / t.sqrt() } else { 0.0 },
            exps,
            constant_only: t <= 0.0,
        }
    }

    fn len(&self) -> usize {
        if self.constant_only {
            return 1;
        }
        match &self.basis {
            RegressionBasis::Polynomial { .. } => self.exps.len(),
            RegressionBasis::PiecewiseLinear { knots } => 1 + self.dim * (1 + knots.len()),
        }
    }

    fn fill(&self, w: &[f64], out: &mut [f64]) {
        if self.constant_only {
            out[0] = 1.0;
            return;
        }
        match &self.basis {
            RegressionBasis::Polynomial { degree } => {
                let mut h = vec![0.0; (degree + 1) * self.dim];
                for k in 0..self.dim {
                    hermite(w[k] * self.scale, *degree, &mut h[k * (degree + 1)..(k + 1) * (degree + 1)]);
                }
                for (j, e) in self.exps.iter().enumerate() {
                    out[j] = e
                        .iter()
                        .enumerate()
                        .map(|(k, &p)| h[k * (degree + 1) + p])
                        .product();
                }
            }
            RegressionBasis::PiecewiseLinear { knots } => {
                out[0] = 1.0;
                let mut j = 1;
                for &wk in &w[..self.dim] {
                    let x = wk * self.scale;
                    out[j] = x;
                    j += 1;
                    for &kn in knots {
                        out[j] = (x - kn).max(0.0);
                        j += 1;
                    }
                }
            }
        }
    }
}

/// A fitted regression at one node for one target.
#[derive(Debug, Clone)]
pub struct Fit {
    features: Features,
    coefficients: DVector<f64>,
    gram_inverse: DMatrix<f64>,
    residual_variance: f64,
}

impl Fit {
    /// Fitted conditional expectation at level `w`.
    pub fn eval(&self, w: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.features.len()];
        self.features.fill(w, &mut phi);
        phi.iter().zip(self.coefficients.iter()).map(|(a, b)| a * b).sum()
    }

    /// Standard error of the fitted value at `w`, `sqrt(s² φᵀ (XᵀX)⁻¹ φ)`.
    pub fn std_error(&self, w: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.features.len()];
        self.features.fill(w, &mut phi);
        let v = DVector::from_vec(phi);
        (self.residual_variance * v.dot(&(&self.gram_inverse * &v))).max(0.0).sqrt()
    }

    pub fn coefficients(&self) -> &[f64] {
        self.coefficients.as_slice()
    }

    pub fn residual_variance(&self) -> f64 {
        self.residual_variance
    }
}

fn chunk_ranges(paths: usize) -> Vec<(usize, usize)> {
    (0..paths.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(paths)))
        .collect()
}

fn pairwise_reduce(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Regresses each target (one value per path) on the level at `node`. All
/// targets share one Gram matrix.
pub fn fit_node(bundle: &PathBundle, basis: &RegressionBasis, node: usize, targets: &[&[f64]]) -> Result<Vec<Fit>> {
    let paths = bundle.paths();
    if targets.iter().any(|t| t.len() != paths) {
        return Err(domain("regression target length differs from the path count"));
    }
    let features = Features::new(basis, bundle.dim(), bundle.grid().time(node));
    let p = features.len();
    if paths <= p {
        return Err(Error::BasisDegenerate {
            node,
            condition: f64::INFINITY,
        });
    }
    let q = targets.len();
    // Per chunk: Gram (p*p) followed by Xᵀy for each target (q*p).
    let parts: Vec<Vec<f64>> = chunk_ranges(paths)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = vec![0.0; p * p + q * p];
            let mut phi = vec![0.0; p];
            for m in lo..hi {
                features.fill(bundle.level(m, node), &mut phi);
                for a in 0..p {
                    for b in a..p {
                        acc[a * p + b] += phi[a] * phi[b];
                    }
                }
                for (j, t) in targets.iter().enumerate() {
                    let y = t[m];
                    for a in 0..p {
                        acc[p * p + j * p + a] += phi[a] * y;
                    }
                }
            }
            acc
        })
        .collect();
    let acc = pairwise_reduce(parts);
    let mut gram = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            gram[(a, b)] = acc[a * p + b];
            gram[(b, a)] = acc[a * p + b];
        }
    }
    let eig = SymmetricEigen::new(gram);
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::BasisDegenerate { node, condition });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let gram_inverse = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let coefficient_sets: Vec<DVector<f64>> = (0..q)
        .map(|j| &gram_inverse * DVector::from_column_slice(&acc[p * p + j * p..p * p + (j + 1) * p]))
        .collect();
    // Residual sums of squares, same chunking and reduction.
    let rss_parts: Vec<Vec<f64>> = chunk_ranges(paths)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut rss = vec![0.0; q];
            let mut phi = vec![0.0; p];
            for m in lo..hi {
                features.fill(bundle.level(m, node), &mut phi);
                for (j, t) in targets.iter().enumerate() {
                    let fitted: f64 = phi.iter().zip(coefficient_sets[j].iter()).map(|(a, b)| a * b).sum();
                    let r = t[m] - fitted;
                    rss[j] += r * r;
                }
            }
            rss
        })
        .collect();
    let rss = pairwise_reduce(rss_parts);
    Ok(coefficient_sets
        .into_iter()
        .zip(rss)
        .map(|(coefficients, r)| Fit {
            features: features.clone(),
            coefficients,
            gram_inverse: gram_inverse.clone(),
            residual_variance: r / (paths - p) as f64,
        })
        .collect())
}
