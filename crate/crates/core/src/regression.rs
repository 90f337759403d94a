//! Least-squares conditional expectation estimators.
//!
//! Conditional expectations E[V | X_k] along the backward induction are
//! approximated by regressing the per-particle targets on basis functions of
//! the state. Polynomial bases use ridge-regularized normal equations;
//! indicator bases reduce to per-bin means and are solved exactly (empty
//! bins are dropped deterministically, so the design always has full rank).
//!
//! Gram assembly is a parallel reduction over fixed-size particle chunks with
//! a sequential combine in chunk order, so fitted values are bit-identical
//! regardless of thread count.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: usize = 4096;

/// Basis family for the regression step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// Multivariate monomials with total degree ≤ `degree`.
    Polynomial { degree: usize },
    /// Per-coordinate equal-width bins over the cloud's bounding box.
    IndicatorBins { bins_per_coord: usize },
    /// One bin per distinct state value: the saturating limit of indicator
    /// bins, exact on enumerable path sets such as the Rademacher tree.
    IndicatorDistinct,
}

/// Regression basis description: kind plus ridge parameter (applied to
/// polynomial designs; indicator designs are exact per-bin means).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    #[serde(flatten)]
    pub kind: BasisKind,
    pub ridge: f64,
}

impl RegressionBasis {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            kind: BasisKind::Polynomial { degree },
            ridge: 1e-8,
        }
    }

    pub fn indicator_bins(bins_per_coord: usize) -> Self {
        Self {
            kind: BasisKind::IndicatorBins { bins_per_coord },
            ridge: 0.0,
        }
    }

    pub fn indicator_distinct() -> Self {
        Self {
            kind: BasisKind::IndicatorDistinct,
            ridge: 0.0,
        }
    }
}

/// Multi-indices of total degree ≤ degree over `dim` variables, in a fixed
/// deterministic order (graded lexicographic).
fn monomial_exponents(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    for d in 1..=degree {
        let mut level = Vec::new();
        enumerate_exponents(dim, d, &mut vec![0; dim], 0, &mut level);
        out.extend(level);
    }
    out
}

fn enumerate_exponents(dim: usize, total: usize, cur: &mut Vec<usize>, idx: usize, out: &mut Vec<Vec<usize>>) {
    if idx == dim - 1 {
        cur[idx] = total;
        out.push(cur.clone());
        cur[idx] = 0;
        return;
    }
    for e in (0..=total).rev() {
        cur[idx] = e;
        enumerate_exponents(dim, total - e, cur, idx + 1, out);
    }
    cur[idx] = 0;
}

/// A basis instantiated on a concrete particle cloud.
enum FittedBasisKind {
    Polynomial { exps: Vec<Vec<usize>> },
    Bins { assign: Vec<usize>, n_bins: usize },
}

/// Fitted regression: maps per-particle targets to fitted values at the same
/// particles. The design is built once per time step and reused for every
/// target column.
pub struct StepRegression {
    kind: FittedBasisKind,
    n: usize,
    dim: usize,
    /// Cholesky factor of the ridge-shifted Gram matrix (polynomial only).
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    /// Per-bin counts (indicator only).
    bin_counts: Vec<usize>,
    states: Vec<f64>,
}

impl StepRegression {
    /// Builds the design for `n` states of dimension `dim` (flat row-major).
    pub fn build(basis: &RegressionBasis, states: &[f64], dim: usize) -> Result<Self> {
        assert!(dim > 0 && states.len() % dim == 0);
        let n = states.len() / dim;
        match &basis.kind {
            BasisKind::Polynomial { degree } => {
                let exps = monomial_exponents(dim, *degree);
                let p = exps.len();
                if n < p {
                    return Err(Error::RegressionRankDeficient(format!(
                        "{n} particles for {p} basis functions"
                    )));
                }
                // Gram = Φ'Φ assembled chunkwise; deterministic combine order.
                let n_chunks = n.div_ceil(CHUNK);
                let partials: Vec<DMatrix<f64>> = (0..n_chunks)
                    .into_par_iter()
                    .map(|c| {
                        let lo = c * CHUNK;
                        let hi = ((c + 1) * CHUNK).min(n);
                        let mut g = DMatrix::zeros(p, p);
                        let mut row = vec![0.0; p];
                        for i in lo..hi {
                            eval_monomials(&exps, &states[i * dim..(i + 1) * dim], &mut row);
                            for a in 0..p {
                                for b in a..p {
                                    g[(a, b)] += row[a] * row[b];
                                }
                            }
                        }
                        g
                    })
                    .collect();
                let mut gram = DMatrix::zeros(p, p);
                for g in partials {
                    gram += g;
                }
                for a in 0..p {
                    for b in 0..a {
                        gram[(a, b)] = gram[(b, a)];
                    }
                }
                let ridge = basis.ridge.max(0.0);
                for a in 0..p {
                    gram[(a, a)] += ridge;
                }
                let chol = gram.clone().cholesky().ok_or_else(|| {
                    Error::RegressionRankDeficient(
                        "Gram matrix not positive definite after ridge".into(),
                    )
                })?;
                Ok(Self {
                    kind: FittedBasisKind::Polynomial { exps },
                    n,
                    dim,
                    chol: Some(chol),
                    bin_counts: Vec::new(),
                    states: states.to_vec(),
                })
            }
            BasisKind::IndicatorBins { bins_per_coord } => {
                let nb = *bins_per_coord;
                if nb == 0 {
                    return Err(Error::InvalidArgument("bins_per_coord must be positive".into()));
                }
                // Bounding box of the cloud, padded so the max lands inside.
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for i in 0..n {
                    for j in 0..dim {
                        let v = states[i * dim + j];
                        lo[j] = lo[j].min(v);
                        hi[j] = hi[j].max(v);
                    }
                }
                let mut raw = vec![0usize; n];
                for i in 0..n {
                    let mut idx = 0usize;
                    for j in 0..dim {
                        let w = (hi[j] - lo[j]).max(1e-300);
                        let b = (((states[i * dim + j] - lo[j]) / w * nb as f64) as usize).min(nb - 1);
                        idx = idx * nb + b;
                    }
                    raw[i] = idx;
                }
                Ok(Self::from_assignment(raw, states, n, dim))
            }
            BasisKind::IndicatorDistinct => {
                // Group by exact state value; first-occurrence order.
                let mut map = std::collections::HashMap::new();
                let mut raw = vec![0usize; n];
                let mut next = 0usize;
                for i in 0..n {
                    let key: Vec<u64> = states[i * dim..(i + 1) * dim]
                        .iter()
                        .map(|v| v.to_bits())
                        .collect();
                    let id = *map.entry(key).or_insert_with(|| {
                        let id = next;
                        next += 1;
                        id
                    });
                    raw[i] = id;
                }
                Ok(Self::from_assignment(raw, states, n, dim))
            }
        }
    }

    fn from_assignment(raw: Vec<usize>, states: &[f64], n: usize, dim: usize) -> Self {
        // Compress to occupied bins, deterministically by raw index.
        let mut occupied: Vec<usize> = raw.clone();
        occupied.sort_unstable();
        occupied.dedup();
        let remap: std::collections::HashMap<usize, usize> =
            occupied.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let assign: Vec<usize> = raw.iter().map(|b| remap[b]).collect();
        let n_bins = occupied.len();
        let mut bin_counts = vec![0usize; n_bins];
        for &a in &assign {
            bin_counts[a] += 1;
        }
        Self {
            kind: FittedBasisKind::Bins { assign, n_bins },
            n,
            dim,
            chol: None,
            bin_counts,
            states: states.to_vec(),
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    /// Fits one target column and returns the fitted value per particle.
    pub fn fit_column(&self, targets: &[f64]) -> Vec<f64> {
        assert_eq!(targets.len(), self.n);
        match &self.kind {
            FittedBasisKind::Polynomial { exps } => {
                let p = exps.len();
                let n_chunks = self.n.div_ceil(CHUNK);
                let partials: Vec<DVector<f64>> = (0..n_chunks)
                    .into_par_iter()
                    .map(|c| {
                        let lo = c * CHUNK;
                        let hi = ((c + 1) * CHUNK).min(self.n);
                        let mut v = DVector::zeros(p);
                        let mut row = vec![0.0; p];
                        for i in lo..hi {
                            eval_monomials(exps, &self.states[i * self.dim..(i + 1) * self.dim], &mut row);
                            for a in 0..p {
                                v[a] += row[a] * targets[i];
                            }
                        }
                        v
                    })
                    .collect();
                let mut xty = DVector::zeros(p);
                for v in partials {
                    xty += v;
                }
                let beta = self.chol.as_ref().unwrap().solve(&xty);
                let mut out = vec![0.0; self.n];
                out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                    let lo = c * CHUNK;
                    let mut row = vec![0.0; p];
                    for (k, o) in chunk.iter_mut().enumerate() {
                        let i = lo + k;
                        eval_monomials(exps, &self.states[i * self.dim..(i + 1) * self.dim], &mut row);
                        *o = row.iter().zip(beta.iter()).map(|(r, b)| r * b).sum();
                    }
                });
                out
            }
            FittedBasisKind::Bins { assign, n_bins } => {
                let mut sums = vec![0.0; *n_bins];
                for (i, &a) in assign.iter().enumerate() {
                    sums[a] += targets[i];
                }
                let means: Vec<f64> = sums
                    .iter()
                    .zip(&self.bin_counts)
                    .map(|(s, &c)| s / c as f64)
                    .collect();
                assign.iter().map(|&a| means[a]).collect()
            }
        }
    }
}

fn eval_monomials(exps: &[Vec<usize>], x: &[f64], out: &mut [f64]) {
    for (k, e) in exps.iter().enumerate() {
        let mut v = 1.0;
        for (j, &p) in e.iter().enumerate() {
            for _ in 0..p {
                v *= x[j];
            }
        }
        out[k] = v;
    }
}
