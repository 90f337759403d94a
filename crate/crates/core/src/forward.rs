//! Particle Euler-Maruyama simulation of forward McKean-Vlasov SDEs.
//!
//! `simulate_mckean` evolves the interacting system
//! `X_{k+1} = X_k + b(t_k, X_k, μ_k) h + σ(t_k, X_k, μ_k) ΔW_k`,
//! where `μ_k` is the empirical law of all particles at step k, and returns
//! the realized law flow. `simulate_decoupled` evolves the same scheme with
//! the law flow frozen, which is the discrete analogue of the decoupled
//! equation X^{t,x,η}. Particle updates within a step are independent and run
//! in parallel; the law snapshot is rebuilt between steps, so results do not
//! depend on scheduling.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::measure::EmpiricalMeasure;
use crate::rng::{normal, NoiseSource, SubStream};
use rayon::prelude::*;
use std::sync::Arc;

pub type CoeffFn = Arc<dyn Fn(f64, &[f64], &EmpiricalMeasure) -> Vec<f64> + Send + Sync>;

/// Drift and diffusion of a forward MVSDE. `sigma` returns the m×l matrix
/// row-major.
#[derive(Clone)]
pub struct ForwardCoefficients {
    pub b: CoeffFn,
    pub sigma: CoeffFn,
    pub lipschitz_hint: Option<f64>,
    pub measure_dependent: bool,
    pub dim_state: usize,
    pub dim_noise: usize,
}

impl ForwardCoefficients {
    pub fn new(
        b: CoeffFn,
        sigma: CoeffFn,
        dim_state: usize,
        dim_noise: usize,
        measure_dependent: bool,
        lipschitz_hint: Option<f64>,
    ) -> Result<Self> {
        let c = Self {
            b,
            sigma,
            lipschitz_hint,
            measure_dependent,
            dim_state,
            dim_noise,
        };
        if !measure_dependent {
            c.spot_check_measure_free()?;
        }
        Ok(c)
    }

    /// Coefficients declared measure-free must ignore the μ argument; checked
    /// by evaluating against δ_0 and against a spread-out cloud.
    fn spot_check_measure_free(&self) -> Result<()> {
        let m = self.dim_state;
        let dirac = EmpiricalMeasure::dirac(vec![0.0; m]).unwrap();
        let mut pts = vec![0.0; 3 * m];
        for (i, p) in pts.iter_mut().enumerate() {
            *p = (i as f64) - 1.0;
        }
        let cloud = EmpiricalMeasure::new(pts, m, None).unwrap();
        for probe in [-1.0, 0.3, 2.0] {
            let x = vec![probe; m];
            let t = 0.37;
            if (self.b)(t, &x, &dirac) != (self.b)(t, &x, &cloud)
                || (self.sigma)(t, &x, &dirac) != (self.sigma)(t, &x, &cloud)
            {
                return Err(Error::InvalidArgument(
                    "coefficients flagged measure-independent but depend on μ".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sampler families for initial conditions; descriptions of a law, never raw
/// samples. The draw is a pure function of (seed, substream, particle).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSampler {
    Constant { value: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    TwoPoint { a: Vec<f64>, b: Vec<f64>, p: f64 },
}

impl InitialSampler {
    pub fn dim(&self) -> usize {
        match self {
            InitialSampler::Constant { value } => value.len(),
            InitialSampler::Gaussian { mean, .. } => mean.len(),
            InitialSampler::Uniform { lo, .. } => lo.len(),
            InitialSampler::TwoPoint { a, .. } => a.len(),
        }
    }

    pub fn sample(&self, seed: u64, stream: SubStream, particle: usize) -> Vec<f64> {
        let p = particle as u64;
        match self {
            InitialSampler::Constant { value } => value.clone(),
            InitialSampler::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .enumerate()
                .map(|(j, (m, s))| m + s * normal(seed, stream, p, 0, j as u64))
                .collect(),
            InitialSampler::Uniform { lo, hi } => lo
                .iter()
                .zip(hi)
                .enumerate()
                .map(|(j, (l, h))| {
                    l + (h - l) * crate::rng::uniform(seed, stream, p, 0, j as u64)
                })
                .collect(),
            InitialSampler::TwoPoint { a, b, p: prob } => {
                let u = crate::rng::uniform(seed, stream, p, 0, 0);
                if u < *prob {
                    a.clone()
                } else {
                    b.clone()
                }
            }
        }
    }
}

/// Per-particle discrete paths: `n_particles × (n_steps+1)` states in R^m.
#[derive(Debug, Clone)]
pub struct PathBundle {
    values: Vec<f64>,
    pub n_particles: usize,
    pub n_nodes: usize,
    pub dim: usize,
}

impl PathBundle {
    pub fn zeros(n_particles: usize, n_nodes: usize, dim: usize) -> Self {
        Self {
            values: vec![0.0; n_particles * n_nodes * dim],
            n_particles,
            n_nodes,
            dim,
        }
    }

    #[inline]
    pub fn state(&self, particle: usize, node: usize) -> &[f64] {
        let o = (particle * self.n_nodes + node) * self.dim;
        &self.values[o..o + self.dim]
    }

    #[inline]
    pub fn state_mut(&mut self, particle: usize, node: usize) -> &mut [f64] {
        let o = (particle * self.n_nodes + node) * self.dim;
        &mut self.values[o..o + self.dim]
    }

    /// Empirical (uniform) law of the cloud at a node.
    pub fn law_at(&self, node: usize) -> EmpiricalMeasure {
        let mut pts = Vec::with_capacity(self.n_particles * self.dim);
        for p in 0..self.n_particles {
            pts.extend_from_slice(self.state(p, node));
        }
        EmpiricalMeasure::new(pts, self.dim, None).expect("bundle states are finite")
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }
}

/// Time-indexed sequence of empirical measures.
#[derive(Debug, Clone)]
pub struct LawFlow {
    pub grid: TimeGrid,
    pub laws: Vec<EmpiricalMeasure>,
}

impl LawFlow {
    pub fn new(grid: TimeGrid, laws: Vec<EmpiricalMeasure>) -> Result<Self> {
        if laws.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "law flow has {} laws for a grid with {} nodes",
                laws.len(),
                grid.n_nodes()
            )));
        }
        let n = laws[0].len();
        if laws.iter().any(|l| l.len() != n) {
            return Err(Error::InvalidArgument(
                "all laws in a flow must share the particle count".into(),
            ));
        }
        Ok(Self { grid, laws })
    }

    pub fn law(&self, node: usize) -> &EmpiricalMeasure {
        &self.laws[node]
    }

    /// Flow restricted to nodes k.. of the grid.
    pub fn tail(&self, k: usize) -> Result<Self> {
        let grid = self.grid.tail(k)?;
        Ok(Self {
            grid,
            laws: self.laws[k..].to_vec(),
        })
    }

    /// Sup over nodes of the synchronous-coupling distance to another flow.
    pub fn sup_sync_distance(&self, other: &LawFlow) -> Result<f64> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch("law flows on different grids".into()));
        }
        let mut sup = 0.0f64;
        for (a, b) in self.laws.iter().zip(&other.laws) {
            sup = sup.max(a.wasserstein2_upper(b)?);
        }
        Ok(sup)
    }
}

fn check_finite(state: &[f64], particle: usize, step: usize) -> Result<()> {
    if state.iter().any(|v| !v.is_finite()) {
        Err(Error::NonFinite { particle, step })
    } else {
        Ok(())
    }
}

fn euler_step(
    coeffs: &ForwardCoefficients,
    t: f64,
    state: &[f64],
    law: &EmpiricalMeasure,
    dw: &[f64],
    h: f64,
    out: &mut [f64],
) {
    let m = coeffs.dim_state;
    let l = coeffs.dim_noise;
    let drift = (coeffs.b)(t, state, law);
    let diff = (coeffs.sigma)(t, state, law);
    debug_assert_eq!(drift.len(), m);
    debug_assert_eq!(diff.len(), m * l);
    for i in 0..m {
        let mut v = state[i] + drift[i] * h;
        for j in 0..l {
            v += diff[i * l + j] * dw[j];
        }
        out[i] = v;
    }
}

/// Simulates the interacting particle system and returns the paths together
/// with the realized law flow.
pub fn simulate_mckean(
    coeffs: &ForwardCoefficients,
    grid: &TimeGrid,
    initial: &InitialSampler,
    seed: u64,
    n_particles: usize,
    noise: &dyn NoiseSource,
) -> Result<(PathBundle, LawFlow)> {
    if n_particles < 2 {
        return Err(Error::InvalidArgument(
            "mean-field simulation needs at least 2 particles".into(),
        ));
    }
    if initial.dim() != coeffs.dim_state {
        return Err(Error::DimensionMismatch {
            expected: coeffs.dim_state,
            got: initial.dim(),
        });
    }
    let m = coeffs.dim_state;
    let l = coeffs.dim_noise;
    let h = grid.h();
    let sqrt_h = h.sqrt();
    let mut bundle = PathBundle::zeros(n_particles, grid.n_nodes(), m);
    for p in 0..n_particles {
        let x0 = initial.sample(seed, SubStream::InitialDraw, p);
        bundle.state_mut(p, 0).copy_from_slice(&x0);
        check_finite(bundle.state(p, 0), p, 0)?;
    }
    let mut laws = Vec::with_capacity(grid.n_nodes());
    for k in 0..grid.n_steps {
        let law = bundle.law_at(k);
        let t = grid.t(k);
        let next: Vec<Vec<f64>> = (0..n_particles)
            .into_par_iter()
            .map(|p| {
                let mut dw = vec![0.0; l];
                noise.standard_increment(p, k, &mut dw);
                for d in dw.iter_mut() {
                    *d *= sqrt_h;
                }
                let mut out = vec![0.0; m];
                euler_step(coeffs, t, bundle.state(p, k), &law, &dw, h, &mut out);
                out
            })
            .collect();
        laws.push(law);
        for (p, state) in next.into_iter().enumerate() {
            check_finite(&state, p, k + 1)?;
            bundle.state_mut(p, k + 1).copy_from_slice(&state);
        }
    }
    laws.push(bundle.law_at(grid.n_steps));
    let flow = LawFlow::new(*grid, laws)?;
    Ok((bundle, flow))
}

/// Simulates the decoupled system X^{t,x,η}: every particle starts at `x0`
/// and the measure argument is read from the frozen flow.
pub fn simulate_decoupled(
    coeffs: &ForwardCoefficients,
    grid: &TimeGrid,
    x0: &[f64],
    frozen_flow: &LawFlow,
    n_particles: usize,
    noise: &dyn NoiseSource,
) -> Result<PathBundle> {
    if !frozen_flow.grid.matches(grid) {
        return Err(Error::GridMismatch(
            "frozen law flow grid differs from simulation grid".into(),
        ));
    }
    if x0.len() != coeffs.dim_state {
        return Err(Error::DimensionMismatch {
            expected: coeffs.dim_state,
            got: x0.len(),
        });
    }
    let m = coeffs.dim_state;
    let l = coeffs.dim_noise;
    let h = grid.h();
    let sqrt_h = h.sqrt();
    let mut bundle = PathBundle::zeros(n_particles, grid.n_nodes(), m);
    for p in 0..n_particles {
        bundle.state_mut(p, 0).copy_from_slice(x0);
    }
    for k in 0..grid.n_steps {
        let law = frozen_flow.law(k);
        let t = grid.t(k);
        let next: Vec<Vec<f64>> = (0..n_particles)
            .into_par_iter()
            .map(|p| {
                let mut dw = vec![0.0; l];
                noise.standard_increment(p, k, &mut dw);
                for d in dw.iter_mut() {
                    *d *= sqrt_h;
                }
                let mut out = vec![0.0; m];
                euler_step(coeffs, t, bundle.state(p, k), law, &dw, h, &mut out);
                out
            })
            .collect();
        for (p, state) in next.into_iter().enumerate() {
            check_finite(&state, p, k + 1)?;
            bundle.state_mut(p, k + 1).copy_from_slice(&state);
        }
    }
    Ok(bundle)
}

/// Report of [`law_stability_probe`].
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// sup over grid nodes of the synchronous ρ between the two law flows.
    pub lhs: f64,
    /// synchronous ρ between the initial clouds.
    pub rhs: f64,
    /// lhs / rhs; 0 when both vanish, None when rhs = 0 < lhs.
    pub ratio: Option<f64>,
}

/// Empirical check of the law-stability estimate: two initial conditions,
/// shared Brownian driver and shared initial-draw substream (so parameter
/// shifts of the sampler are pathwise shifts of η), compare the law flows.
pub fn law_stability_probe(
    coeffs: &ForwardCoefficients,
    grid: &TimeGrid,
    eta1: &InitialSampler,
    eta2: &InitialSampler,
    seed: u64,
    n_particles: usize,
    noise: &dyn NoiseSource,
) -> Result<StabilityReport> {
    let (_, flow1) = simulate_mckean(coeffs, grid, eta1, seed, n_particles, noise)?;
    let (_, flow2) = simulate_mckean(coeffs, grid, eta2, seed, n_particles, noise)?;
    let rhs = flow1.law(0).wasserstein2_upper(flow2.law(0))?;
    let lhs = flow1.sup_sync_distance(&flow2)?;
    let ratio = if rhs > 0.0 {
        Some(lhs / rhs)
    } else if lhs == 0.0 {
        Some(0.0)
    } else {
        None
    };
    Ok(StabilityReport { lhs, rhs, ratio })
}
