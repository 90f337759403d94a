//! Uniform time grids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform partition of `[t0, t_end]` into `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0 < t_end) || n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid requires t0 < t_end and n_steps > 0, got [{t0}, {t_end}] with {n_steps} steps"
            )));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// Step size h.
    #[inline]
    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Node time t_k.
    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        self.t0 + self.h() * k as f64
    }

    /// Number of grid nodes, `n_steps + 1`.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    /// Sub-grid starting at node `k`, keeping the original node times.
    pub fn tail(&self, k: usize) -> Result<Self> {
        if k >= self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "tail start {k} must be an interior node of a {}-step grid",
                self.n_steps
            )));
        }
        Ok(Self {
            t0: self.t(k),
            t_end: self.t_end,
            n_steps: self.n_steps - k,
        })
    }

    /// Index of the grid node closest to `t`.
    pub fn snap(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.h()).round();
        (k.max(0.0) as usize).min(self.n_steps)
    }

    /// Grids are compatible when node times agree to rounding.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
            && (self.t_end - other.t_end).abs() <= 1e-12 * (1.0 + self.t_end.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_and_tail() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.n_nodes(), 5);
        assert_eq!(g.t(2), 0.5);
        let tail = g.tail(2).unwrap();
        assert_eq!(tail.n_steps, 2);
        assert_eq!(tail.t(0), 0.5);
        assert!((tail.h() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn snap_rounds_to_nearest_node() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert_eq!(g.snap(0.0), 0);
        assert_eq!(g.snap(0.26), 3);
        assert_eq!(g.snap(2.0), 10);
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }
}
