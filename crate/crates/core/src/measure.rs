//! Empirical probability measures with finite second moment.
//!
//! A measure is a weighted particle cloud in R^k. The Wasserstein-2 metric ρ
//! is available three ways: exactly in one dimension via the quantile
//! coupling, exactly in any dimension for small uniform clouds via optimal
//! assignment, and as the synchronous-coupling upper bound for index-paired
//! clouds. The mean-field solvers use the synchronous bound (particles share
//! Brownian paths, so index pairing is canonical); exact transport is kept
//! for tests.

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::sync::OnceLock;

/// Weighted particle cloud with finite second moment.
#[derive(Debug, Default)]
pub struct EmpiricalMeasure {
    points: Vec<f64>, // n × dim, row-major
    weights: Vec<f64>,
    dim: usize,
    mean_cache: OnceLock<Vec<f64>>,
}

impl Clone for EmpiricalMeasure {
    fn clone(&self) -> Self {
        Self {
            points: self.points.clone(),
            weights: self.weights.clone(),
            dim: self.dim,
            mean_cache: OnceLock::new(),
        }
    }
}

/// One sample of a joint (Y, Z) law; `z_part` is the d×l matrix flattened
/// row-major, the fixed bit-exact layout used everywhere in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLawSample {
    pub y_part: Vec<f64>,
    pub z_part: Vec<f64>,
}

impl JointLawSample {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.y_part.len() + self.z_part.len());
        out.extend_from_slice(&self.y_part);
        out.extend_from_slice(&self.z_part);
        out
    }
}

impl EmpiricalMeasure {
    /// Builds a measure from flat row-major points; `weights = None` means
    /// uniform. Weights must be nonnegative and sum to 1 within 1e−12.
    pub fn new(points: Vec<f64>, dim: usize, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim.max(1),
                got: points.len(),
            });
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::InvalidArgument("measure needs at least one particle".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("measure points must be finite".into()));
        }
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::CountMismatch { left: n, right: w.len() });
                }
                if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                    return Err(Error::InvalidArgument("weights must be nonnegative".into()));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "weights sum to {s}, expected 1 within 1e-12"
                    )));
                }
                w
            }
        };
        Ok(Self {
            points,
            weights,
            dim,
            mean_cache: OnceLock::new(),
        })
    }

    /// Uniform cloud from per-particle rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Self::new(flat, dim, None)
    }

    /// Dirac mass at a single point.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        let dim = point.len();
        Self::new(point, dim, None)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - w0).abs() <= 1e-12)
    }

    /// Weighted mean, cached after first use.
    pub fn mean(&self) -> &[f64] {
        self.mean_cache.get_or_init(|| {
            let mut m = vec![0.0; self.dim];
            for i in 0..self.len() {
                let w = self.weights[i];
                for (mj, pj) in m.iter_mut().zip(self.point(i)) {
                    *mj += w * pj;
                }
            }
            m
        })
    }

    /// Mean of one coordinate.
    pub fn mean_coord(&self, j: usize) -> f64 {
        self.mean()[j]
    }

    /// ‖μ‖₂ = sqrt(Σ wᵢ |xᵢ|²).
    pub fn second_moment_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            let w = self.weights[i];
            s += w * self.point(i).iter().map(|p| p * p).sum::<f64>();
        }
        s.sqrt()
    }

    /// Exact ρ between one-dimensional measures via the monotone (quantile)
    /// coupling on the merged weight grid.
    pub fn wasserstein2_1d(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim });
        }
        if other.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: other.dim });
        }
        let sorted = |m: &EmpiricalMeasure| {
            let mut v: Vec<(f64, f64)> = (0..m.len()).map(|i| (m.points[i], m.weights[i])).collect();
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            v
        };
        let a = sorted(self);
        let b = sorted(other);
        let (mut i, mut j) = (0usize, 0usize);
        let (mut ra, mut rb) = (a[0].1, b[0].1); // remaining mass in current atoms
        let mut cost = 0.0;
        loop {
            // Skip exhausted atoms (zero-weight particles are legal).
            while ra <= 0.0 && i + 1 < a.len() {
                i += 1;
                ra = a[i].1;
            }
            while rb <= 0.0 && j + 1 < b.len() {
                j += 1;
                rb = b[j].1;
            }
            if (ra <= 0.0 && i + 1 == a.len()) || (rb <= 0.0 && j + 1 == b.len()) {
                break;
            }
            let m = ra.min(rb);
            let d = a[i].0 - b[j].0;
            cost += m * d * d;
            ra -= m;
            rb -= m;
        }
        Ok(cost.max(0.0).sqrt())
    }

    /// Exact ρ by optimal assignment on the squared-distance cost, for
    /// uniform clouds of equal size n ≤ 64 in any dimension.
    pub fn wasserstein2_exact(&self, other: &EmpiricalMeasure) -> Result<f64> {
        const MAX_N: usize = 64;
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        if self.len() != other.len() {
            return Err(Error::CountMismatch { left: self.len(), right: other.len() });
        }
        if self.len() > MAX_N {
            return Err(Error::TooLarge { max: MAX_N, got: self.len() });
        }
        if !self.is_uniform() || !other.is_uniform() {
            return Err(Error::NonUniformWeights);
        }
        let n = self.len();
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d2: f64 = self
                    .point(i)
                    .iter()
                    .zip(other.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                cost[i * n + j] = d2;
            }
        }
        let total = assignment_cost(&cost, n);
        Ok((total / n as f64).max(0.0).sqrt())
    }

    /// Synchronous-coupling cost sqrt(Σ wᵢ |xᵢ − yᵢ|²) for index-paired
    /// clouds; an upper bound of ρ.
    pub fn wasserstein2_upper(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        if self.len() != other.len() {
            return Err(Error::CountMismatch { left: self.len(), right: other.len() });
        }
        for i in 0..self.len() {
            if (self.weights[i] - other.weights[i]).abs() > 1e-12 {
                return Err(Error::WeightMismatch { index: i });
            }
        }
        let mut s = 0.0;
        for i in 0..self.len() {
            let d2: f64 = self
                .point(i)
                .iter()
                .zip(other.point(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            s += self.weights[i] * d2;
        }
        Ok(s.max(0.0).sqrt())
    }

    /// CSV serialization: one particle per row, coordinates then weight.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},weight", header.join(","))?;
        for i in 0..self.len() {
            let coords: Vec<String> = self.point(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{}", coords.join(","), self.weights[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty csv".into()))??;
        let dim = header.split(',').count() - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::InvalidArgument(format!(
                    "csv row has {} fields, expected {}",
                    fields.len(),
                    dim + 1
                )));
            }
            for f in &fields[..dim] {
                points.push(f.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("bad csv number {f:?}: {e}"))
                })?);
            }
            weights.push(fields[dim].trim().parse::<f64>().map_err(|e| {
                Error::InvalidArgument(format!("bad csv weight: {e}"))
            })?);
        }
        Self::new(points, dim, Some(weights))
    }
}

/// Minimal-cost perfect matching on an n×n cost matrix (row-major), by the
/// shortest-augmenting-path form of the Hungarian algorithm. O(n³).
pub fn assignment_cost(cost: &[f64], n: usize) -> f64 {
    assert_eq!(cost.len(), n * n);
    // Potentials and matching arrays are 1-indexed with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut match_col = vec![0usize; n + 1]; // row matched to each column
    for row in 1..=n {
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prev_col = vec![0usize; n + 1];
        let mut used = vec![false; n + 1];
        let mut j0 = 0usize;
        match_col[0] = row;
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < min_to[j] {
                    min_to[j] = cur;
                    prev_col[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        // Augment along the found path.
        while j0 != 0 {
            let j1 = prev_col[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
        }
    }
    let mut total = 0.0;
    for j in 1..=n {
        total += cost[(match_col[j] - 1) * n + (j - 1)];
    }
    total
}
