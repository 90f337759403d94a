//! Regression-based backward induction for the penalized multivalued
//! backward equation, the mean-field Picard loop, and the ε-sweep toward the
//! multivalued limit.
//!
//! One backward step from node k+1 to node k, with step h:
//!
//! 1. `Z_k = (1/h)·Regress[Y_{k+1} ΔW_kᵀ | basis(X_k)]`, evaluated per particle;
//! 2. `P_k = Regress[Y_{k+1} | basis(X_k)] + h·G(t_k, X_k, pred, Z_k, θ_k)`,
//!    with the driver evaluated explicitly at the regressed Y-predictor;
//! 3. `Y_k = (I + h·A_ε)^{-1}(P_k)`, computed in closed form through
//!    `(ε·P + h·J_{ε+h}(P))/(ε+h)` — the stiff monotone term is exact, so no
//!    step-size restriction h < ε arises;
//! 4. `ΔK_k = h·A_ε(Y_k)`, which equals `P_k − Y_k` up to rounding.
//!
//! The driver's measure argument θ_k is the empirical law of index-paired
//! `(X_k, Y-predictor_k, Z_k)` triples, frozen from the previous Picard
//! iterate; the first pass freezes θ at the Dirac mass at zero.

use crate::error::{Error, Result};
use crate::forward::{LawFlow, PathBundle};
use crate::grid::TimeGrid;
use crate::measure::EmpiricalMeasure;
use crate::monotone::MonotoneOperator;
use crate::regression::{RegressionBasis, StepRegression};
use crate::rng::NoiseSource;
use rayon::prelude::*;
use std::sync::Arc;

pub type DriverFn =
    Arc<dyn Fn(f64, &[f64], &[f64], &[f64], &EmpiricalMeasure) -> Vec<f64> + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&[f64], &EmpiricalMeasure) -> Vec<f64> + Send + Sync>;

/// Driver G(t, x, y, z, θ) of the backward equation; `z` is the d×l matrix
/// row-major and θ an empirical measure over (x, y, z) triples.
#[derive(Clone)]
pub struct Driver {
    pub h_fn: DriverFn,
    pub lipschitz_hint: Option<f64>,
    pub measure_dependent: bool,
}

impl Driver {
    pub fn new(h_fn: DriverFn, measure_dependent: bool, lipschitz_hint: Option<f64>) -> Self {
        Self {
            h_fn,
            lipschitz_hint,
            measure_dependent,
        }
    }

    /// Spot check that a driver flagged measure-independent ignores θ.
    pub fn spot_check_measure_free(&self, dim_x: usize, dim_y: usize, dim_z: usize) -> Result<()> {
        if self.measure_dependent {
            return Ok(());
        }
        let dim = dim_x + dim_y + dim_z;
        let dirac = EmpiricalMeasure::dirac(vec![0.0; dim]).unwrap();
        let mut pts = vec![0.0; 2 * dim];
        for (i, p) in pts.iter_mut().enumerate() {
            *p = 0.5 * i as f64 - 0.3;
        }
        let cloud = EmpiricalMeasure::new(pts, dim, None).unwrap();
        let x = vec![0.4; dim_x];
        let y = vec![-0.2; dim_y];
        let z = vec![0.7; dim_z];
        if (self.h_fn)(0.3, &x, &y, &z, &dirac) != (self.h_fn)(0.3, &x, &y, &z, &cloud) {
            return Err(Error::InvalidArgument(
                "driver flagged measure-independent but depends on θ".into(),
            ));
        }
        Ok(())
    }
}

/// Terminal condition Φ(x, μ) with range in the closure of the operator
/// domain.
#[derive(Clone)]
pub struct TerminalCondition {
    pub phi: TerminalFn,
}

impl TerminalCondition {
    pub fn new(phi: TerminalFn) -> Self {
        Self { phi }
    }

    /// Largest distance of Φ(x_i, μ) from cl D(A) over the sample points.
    pub fn domain_gap(
        &self,
        op: &MonotoneOperator,
        xs: &PathBundle,
        node: usize,
        mu: &EmpiricalMeasure,
    ) -> f64 {
        let mut gap = 0.0f64;
        for i in 0..xs.n_particles {
            let v = (self.phi)(xs.state(i, node), mu);
            let proj = op.project_domain_closure(&v);
            let d: f64 = v
                .iter()
                .zip(&proj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            gap = gap.max(d);
        }
        gap
    }
}

/// Strictly decreasing positive penalization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizationSchedule {
    pub eps_list: Vec<f64>,
}

impl PenalizationSchedule {
    pub fn new(eps_list: Vec<f64>) -> Result<Self> {
        if eps_list.is_empty() {
            return Err(Error::InvalidArgument("empty penalization schedule".into()));
        }
        for w in eps_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidArgument(
                    "penalization schedule must be strictly decreasing".into(),
                ));
            }
        }
        if eps_list.iter().any(|&e| e <= 0.0) {
            return Err(Error::InvalidArgument(
                "penalization parameters must be positive".into(),
            ));
        }
        Ok(Self { eps_list })
    }
}

impl Default for PenalizationSchedule {
    fn default() -> Self {
        Self {
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
        }
    }
}

/// Distance used for the Picard convergence functional. Particles share
/// their Brownian paths, so index pairing is canonical and the synchronous
/// bound is the quantity the contraction estimates control; exact transport
/// is available for small clouds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardMetric {
    Synchronous,
    Exact,
}

/// Stopping parameters of the mean-field Picard loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardParams {
    pub max_iters: usize,
    pub tol: f64,
    pub metric: PicardMetric,
}

impl Default for PicardParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-10,
            metric: PicardMetric::Synchronous,
        }
    }
}

/// Sup over grid nodes of the chosen distance between two flows.
fn flow_residual(a: &LawFlow, b: &LawFlow, metric: PicardMetric) -> Result<f64> {
    match metric {
        PicardMetric::Synchronous => a.sup_sync_distance(b),
        PicardMetric::Exact => {
            let mut sup = 0.0f64;
            for (la, lb) in a.laws.iter().zip(&b.laws) {
                sup = sup.max(la.wasserstein2_exact(lb)?);
            }
            Ok(sup)
        }
    }
}

/// Solver diagnostics.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct Diagnostics {
    pub picard_iters: usize,
    pub picard_residuals: Vec<f64>,
    pub sup_norm_y: f64,
    pub l2_norm_z: f64,
    pub k_total_variation: f64,
    /// Largest distance of the terminal values from cl D(A).
    pub terminal_domain_gap: f64,
}

/// Discrete solution of one penalized backward pass.
///
/// Layouts: `y` is `N × (n+1) × d`, `z` is `N × n × (d·l)` (no Z at the
/// terminal node), `k` is the cumulative reflection process with
/// `k[·][0] = 0` and `k[i][j] = Σ_{s<j} ΔK_s`, so `k[·][n]` is K_T.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    y: Vec<f64>,
    z: Vec<f64>,
    k: Vec<f64>,
    pub eps: f64,
    pub diagnostics: Diagnostics,
    pub grid: TimeGrid,
    pub n_particles: usize,
    pub dim_y: usize,
    pub dim_z: usize,
    /// Realized flow of (X, Y-predictor, Z) triples, built only when the
    /// driver is measure dependent (it is the Picard iterate).
    pub joint_flow: Option<LawFlow>,
}

impl BackwardSolution {
    #[inline]
    pub fn y(&self, particle: usize, node: usize) -> &[f64] {
        let o = (particle * (self.grid.n_steps + 1) + node) * self.dim_y;
        &self.y[o..o + self.dim_y]
    }

    #[inline]
    pub fn z(&self, particle: usize, step: usize) -> &[f64] {
        let o = (particle * self.grid.n_steps + step) * self.dim_z;
        &self.z[o..o + self.dim_z]
    }

    #[inline]
    pub fn k(&self, particle: usize, node: usize) -> &[f64] {
        let o = (particle * (self.grid.n_steps + 1) + node) * self.dim_y;
        &self.k[o..o + self.dim_y]
    }

    /// Mean over particles of Y at a node.
    pub fn y_mean(&self, node: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim_y];
        for i in 0..self.n_particles {
            for (mj, vj) in m.iter_mut().zip(self.y(i, node)) {
                *mj += vj;
            }
        }
        for mj in m.iter_mut() {
            *mj /= self.n_particles as f64;
        }
        m
    }

    /// sqrt(mean over particles of sup over nodes |Y_self − Y_other|²).
    pub fn l2_sup_distance(&self, other: &BackwardSolution) -> Result<f64> {
        if self.n_particles != other.n_particles {
            return Err(Error::CountMismatch {
                left: self.n_particles,
                right: other.n_particles,
            });
        }
        let n_nodes = self.grid.n_steps + 1;
        let mut acc = 0.0;
        for i in 0..self.n_particles {
            let mut sup = 0.0f64;
            for kk in 0..n_nodes {
                let d2: f64 = self
                    .y(i, kk)
                    .iter()
                    .zip(other.y(i, kk))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                sup = sup.max(d2);
            }
            acc += sup;
        }
        Ok((acc / self.n_particles as f64).sqrt())
    }
}

/// Shared inputs of one backward solve.
pub struct BackwardInputs<'a> {
    pub operator: &'a MonotoneOperator,
    pub x_paths: &'a PathBundle,
    pub x_flow: &'a LawFlow,
    pub driver: &'a Driver,
    pub terminal: &'a TerminalCondition,
    pub basis: &'a RegressionBasis,
    pub noise: &'a dyn NoiseSource,
    pub dim_y: usize,
}

impl<'a> BackwardInputs<'a> {
    fn validate(&self) -> Result<()> {
        self.operator.require_interior()?;
        if self.operator.dim() != self.dim_y {
            return Err(Error::DimensionMismatch {
                expected: self.dim_y,
                got: self.operator.dim(),
            });
        }
        if self.x_paths.n_nodes != self.x_flow.grid.n_nodes() {
            return Err(Error::GridMismatch(
                "path bundle and law flow disagree on node count".into(),
            ));
        }
        self.driver.spot_check_measure_free(
            self.x_paths.dim,
            self.dim_y,
            self.dim_y * self.noise.dim(),
        )?;
        Ok(())
    }

    fn joint_dim(&self) -> usize {
        self.x_paths.dim + self.dim_y + self.dim_y * self.noise.dim()
    }

    /// Dirac mass at zero over the joint (x, y, z) space: the θ used by the
    /// first Picard pass and by measure-independent drivers.
    fn delta_theta(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::dirac(vec![0.0; self.joint_dim()]).unwrap()
    }

    /// Law flow of Diracs at zero, the initial Picard iterate.
    fn delta_flow(&self) -> LawFlow {
        let laws = (0..self.x_flow.grid.n_nodes())
            .map(|_| self.delta_theta())
            .collect();
        LawFlow::new(self.x_flow.grid, laws).unwrap()
    }
}

/// One penalized backward pass with the measure argument frozen.
///
/// `yz_flow` must be supplied when the driver is measure dependent; it is
/// the (X, Y, Z) law flow of the previous Picard iterate.
pub fn solve_penalized_backward(
    eps: f64,
    inputs: &BackwardInputs,
    yz_flow: Option<&LawFlow>,
) -> Result<BackwardSolution> {
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    inputs.validate()?;
    if inputs.driver.measure_dependent && yz_flow.is_none() {
        return Err(Error::MissingLawFlow);
    }
    if let Some(f) = yz_flow {
        if !f.grid.matches(&inputs.x_flow.grid) {
            return Err(Error::GridMismatch("frozen (Y,Z) flow grid differs".into()));
        }
    }

    let grid = inputs.x_flow.grid;
    let n = grid.n_steps;
    let h = grid.h();
    let sqrt_h = h.sqrt();
    let np = inputs.x_paths.n_particles;
    let m = inputs.x_paths.dim;
    let d = inputs.dim_y;
    let l = inputs.noise.dim();
    let dz = d * l;
    let op = inputs.operator;
    let build_flow = inputs.driver.measure_dependent;

    let mut y = vec![0.0; np * (n + 1) * d];
    let mut z = vec![0.0; np * n * dz];
    let mut dk = vec![0.0; np * n * d];
    let mut joint_laws: Vec<EmpiricalMeasure> = Vec::new();

    // Terminal values: Y_n = Φ(X_n, μ_n), bit-exact.
    let mu_terminal = inputs.x_flow.law(n);
    for i in 0..np {
        let v = (inputs.terminal.phi)(inputs.x_paths.state(i, n), mu_terminal);
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                particle: i,
                step: n,
            });
        }
        y[(i * (n + 1) + n) * d..(i * (n + 1) + n) * d + d].copy_from_slice(&v);
    }
    let terminal_domain_gap = inputs.terminal.domain_gap(op, inputs.x_paths, n, mu_terminal);

    let delta = inputs.delta_theta();

    for step in (0..n).rev() {
        let t = grid.t(step);
        let mut states = Vec::with_capacity(np * m);
        for i in 0..np {
            states.extend_from_slice(inputs.x_paths.state(i, step));
        }
        let reg = StepRegression::build(inputs.basis, &states, m)?;

        // ΔW of this step, regenerated from the counter stream.
        let dws: Vec<f64> = (0..np)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut dw = vec![0.0; l];
                inputs.noise.standard_increment(i, step, &mut dw);
                dw.iter().map(|v| v * sqrt_h).collect::<Vec<f64>>()
            })
            .collect();

        // Regress Z targets Y_{k+1}·ΔWᵀ and the Y-predictor.
        let mut z_fit = vec![0.0; np * dz];
        for a in 0..d {
            for b in 0..l {
                let targets: Vec<f64> = (0..np)
                    .map(|i| y[(i * (n + 1) + step + 1) * d + a] * dws[i * l + b])
                    .collect();
                let fitted = reg.fit_column(&targets);
                for i in 0..np {
                    z_fit[i * dz + a * l + b] = fitted[i] / h;
                }
            }
        }
        let mut pred = vec![0.0; np * d];
        for a in 0..d {
            let targets: Vec<f64> = (0..np)
                .map(|i| y[(i * (n + 1) + step + 1) * d + a])
                .collect();
            let fitted = reg.fit_column(&targets);
            for i in 0..np {
                pred[i * d + a] = fitted[i];
            }
        }

        let theta = match yz_flow {
            Some(f) if inputs.driver.measure_dependent => f.law(step),
            _ => &delta,
        };

        // Driver (explicit), implicit monotone step, K increment.
        let results: Vec<(Vec<f64>, Vec<f64>)> = (0..np)
            .into_par_iter()
            .map(|i| {
                let xi = inputs.x_paths.state(i, step);
                let pi = &pred[i * d..(i + 1) * d];
                let zi = &z_fit[i * dz..(i + 1) * dz];
                let g = (inputs.driver.h_fn)(t, xi, pi, zi, theta);
                let p_impl: Vec<f64> = pi.iter().zip(&g).map(|(a, b)| a + h * b).collect();
                let yk = op.resolvent_of_yosida(eps, h, &p_impl);
                let a_eps = op.yosida(eps, &yk);
                let dki: Vec<f64> = a_eps.iter().map(|v| h * v).collect();
                (yk, dki)
            })
            .collect();
        for (i, (yk, dki)) in results.into_iter().enumerate() {
            if yk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { particle: i, step });
            }
            y[(i * (n + 1) + step) * d..(i * (n + 1) + step) * d + d].copy_from_slice(&yk);
            dk[(i * n + step) * d..(i * n + step) * d + d].copy_from_slice(&dki);
        }
        for i in 0..np {
            z[(i * n + step) * dz..(i * n + step) * dz + dz]
                .copy_from_slice(&z_fit[i * dz..(i + 1) * dz]);
        }

        if build_flow {
            let mut pts = Vec::with_capacity(np * inputs.joint_dim());
            for i in 0..np {
                pts.extend_from_slice(inputs.x_paths.state(i, step));
                pts.extend_from_slice(&pred[i * d..(i + 1) * d]);
                pts.extend_from_slice(&z_fit[i * dz..(i + 1) * dz]);
            }
            joint_laws.push(EmpiricalMeasure::new(pts, inputs.joint_dim(), None)?);
        }
    }

    // Cumulative K with K_0 = 0.
    let mut k = vec![0.0; np * (n + 1) * d];
    for i in 0..np {
        for step in 0..n {
            for a in 0..d {
                k[(i * (n + 1) + step + 1) * d + a] =
                    k[(i * (n + 1) + step) * d + a] + dk[(i * n + step) * d + a];
            }
        }
    }

    let joint_flow = if build_flow {
        joint_laws.reverse(); // built backward in time
        // Terminal node: (X_n, Y_n, 0).
        let mut pts = Vec::with_capacity(np * inputs.joint_dim());
        for i in 0..np {
            pts.extend_from_slice(inputs.x_paths.state(i, n));
            pts.extend_from_slice(&y[(i * (n + 1) + n) * d..(i * (n + 1) + n) * d + d]);
            pts.extend(std::iter::repeat(0.0).take(dz));
        }
        joint_laws.push(EmpiricalMeasure::new(pts, inputs.joint_dim(), None)?);
        Some(LawFlow::new(grid, joint_laws)?)
    } else {
        None
    };

    // Norm diagnostics.
    let mut sup_y = 0.0f64;
    let mut z_acc = 0.0;
    let mut ktv_acc = 0.0;
    for i in 0..np {
        for node in 0..=n {
            let s: f64 = y[(i * (n + 1) + node) * d..(i * (n + 1) + node) * d + d]
                .iter()
                .map(|v| v * v)
                .sum();
            sup_y = sup_y.max(s.sqrt());
        }
        for step in 0..n {
            let s: f64 = z[(i * n + step) * dz..(i * n + step) * dz + dz]
                .iter()
                .map(|v| v * v)
                .sum();
            z_acc += h * s;
            let kn: f64 = dk[(i * n + step) * d..(i * n + step) * d + d]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            ktv_acc += kn;
        }
    }

    Ok(BackwardSolution {
        y,
        z,
        k,
        eps,
        diagnostics: Diagnostics {
            picard_iters: 1,
            picard_residuals: Vec::new(),
            sup_norm_y: sup_y,
            l2_norm_z: (z_acc / np as f64).sqrt(),
            k_total_variation: ktv_acc / np as f64,
            terminal_domain_gap,
        },
        grid,
        n_particles: np,
        dim_y: d,
        dim_z: dz,
        joint_flow,
    })
}

/// Full solve of the law-coupled equation: Picard iteration over the frozen
/// (X, Y, Z) flow, initialized from a pass with θ frozen at the Dirac mass
/// at zero.
///
/// Stops when the sup over grid nodes of the synchronous ρ between
/// successive flows drops below `picard.tol`; fails with `PicardDiverged`
/// when the residual exceeds the initial one for three consecutive
/// iterations.
pub fn solve_bmmvsde(
    eps: f64,
    inputs: &BackwardInputs,
    picard: &PicardParams,
) -> Result<BackwardSolution> {
    if !inputs.driver.measure_dependent {
        // Degenerate mean field: the pass against δ is already the fixed
        // point; a second pass would repeat it bitwise.
        let mut sol = solve_penalized_backward(eps, inputs, None)?;
        sol.diagnostics.picard_iters = 1;
        sol.diagnostics.picard_residuals = vec![0.0];
        return Ok(sol);
    }
    let mut prev_flow = inputs.delta_flow();
    let mut residuals = Vec::new();
    let mut best: Option<BackwardSolution> = None;
    let mut rising = 0usize;
    let mut initial_residual = f64::INFINITY;
    for iter in 1..=picard.max_iters {
        let sol = solve_penalized_backward(eps, inputs, Some(&prev_flow))?;
        let flow = sol
            .joint_flow
            .clone()
            .expect("measure-dependent pass returns its flow");
        // The Dirac seed has a single atom; pair every particle with it.
        // Distance to the Dirac seed is coupling-free, so iteration 1 needs
        // no metric choice.
        let residual = if iter == 1 {
            sup_distance_to_dirac(&flow, &prev_flow)?
        } else {
            flow_residual(&flow, &prev_flow, picard.metric)?
        };
        residuals.push(residual);
        if iter == 1 {
            initial_residual = residual;
        }
        let done = residual <= picard.tol;
        if iter > 1 && residual > initial_residual {
            rising += 1;
            if rising >= 3 {
                return Err(Error::PicardDiverged {
                    iters: iter,
                    residual,
                });
            }
        } else {
            rising = 0;
        }
        prev_flow = flow;
        best = Some(sol);
        if done {
            break;
        }
    }
    let mut sol = best.expect("at least one Picard iteration ran");
    sol.diagnostics.picard_iters = residuals.len();
    sol.diagnostics.picard_residuals = residuals;
    Ok(sol)
}

/// Synchronous distance of a flow to a flow of Dirac masses (the Picard
/// seed): every particle is paired with the single Dirac atom.
fn sup_distance_to_dirac(flow: &LawFlow, dirac_flow: &LawFlow) -> Result<f64> {
    let mut sup = 0.0f64;
    for (law, dirac) in flow.laws.iter().zip(&dirac_flow.laws) {
        let atom = dirac.point(0);
        let mut acc = 0.0;
        for i in 0..law.len() {
            let d2: f64 = law
                .point(i)
                .iter()
                .zip(atom)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            acc += law.weight(i) * d2;
        }
        sup = sup.max(acc.sqrt());
    }
    Ok(sup)
}

/// Result of an ε-sweep on shared noise.
#[derive(Debug)]
pub struct SweepReport {
    pub eps_list: Vec<f64>,
    pub solutions: Vec<BackwardSolution>,
    /// D_j = sqrt(mean_i sup_k |Y^{ε_j} − Y^{ε_{j+1}}|²), one per consecutive
    /// pair of schedule entries.
    pub pair_distances: Vec<f64>,
    /// log-log slope of D against the larger ε of each pair.
    pub fitted_rate: Option<f64>,
    /// Mean over particles of Y_0 at the smallest ε.
    pub extrapolated_y0: Vec<f64>,
}

/// Runs the solver once per schedule entry on the same forward paths and
/// driver noise, and fits the convergence rate of the pairwise distances.
pub fn epsilon_sweep(
    schedule: &PenalizationSchedule,
    inputs: &BackwardInputs,
    picard: &PicardParams,
) -> Result<SweepReport> {
    let mut solutions = Vec::with_capacity(schedule.eps_list.len());
    for &eps in &schedule.eps_list {
        solutions.push(solve_bmmvsde(eps, inputs, picard)?);
    }
    let mut pair_distances = Vec::new();
    for w in solutions.windows(2) {
        pair_distances.push(w[0].l2_sup_distance(&w[1])?);
    }
    let fitted_rate = fit_loglog_slope(&schedule.eps_list, &pair_distances);
    let extrapolated_y0 = solutions.last().expect("schedule is nonempty").y_mean(0);
    Ok(SweepReport {
        eps_list: schedule.eps_list.clone(),
        solutions,
        pair_distances,
        fitted_rate,
        extrapolated_y0,
    })
}

/// Least-squares slope of ln D against ln ε (larger ε of each pair); None
/// with fewer than two finite points.
pub fn fit_loglog_slope(eps_list: &[f64], distances: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps_list
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&e, &d)| (e.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Report of the Skorokhod-condition verification.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SkorokhodReport {
    /// max over particles, steps, probes of −⟨Y_k − x, ΔK_k − y·h⟩, clipped
    /// below at 0.
    pub max_violation: f64,
    /// (particle, step, probe index) attaining the max.
    pub worst: (usize, usize, usize),
    /// max over particles and non-terminal nodes of dist(Y_k, cl D(A)); the
    /// terminal node is excluded because Y_T = ξ is data, not a scheme
    /// output.
    pub domain_violation: f64,
}

/// Verifies the variational inequality ⟨Y_t − x, dK_t − y·dt⟩ ≥ 0 against a
/// list of graph probes.
pub fn verify_skorokhod(
    solution: &BackwardSolution,
    op: &MonotoneOperator,
    probes: &[crate::monotone::GraphPoint],
) -> SkorokhodReport {
    let n = solution.grid.n_steps;
    let h = solution.grid.h();
    let d = solution.dim_y;
    let mut max_violation = 0.0f64;
    let mut worst = (0, 0, 0);
    let mut domain_violation = 0.0f64;
    for i in 0..solution.n_particles {
        for step in 0..n {
            let yk = solution.y(i, step);
            let dk: Vec<f64> = (0..d)
                .map(|a| solution.k(i, step + 1)[a] - solution.k(i, step)[a])
                .collect();
            for (pi, probe) in probes.iter().enumerate() {
                let mut inner = 0.0;
                for a in 0..d {
                    inner += (yk[a] - probe.x[a]) * (dk[a] - probe.y[a] * h);
                }
                let v = (-inner).max(0.0);
                if v > max_violation {
                    max_violation = v;
                    worst = (i, step, pi);
                }
            }
            let proj = op.project_domain_closure(yk);
            let dist: f64 = yk
                .iter()
                .zip(&proj)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            domain_violation = domain_violation.max(dist);
        }
    }
    SkorokhodReport {
        max_violation,
        worst,
        domain_violation,
    }
}

/// One row of the terminal-continuity table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ContinuityRow {
    pub scale: f64,
    /// mean_i sup_k |ΔY|² / mean_i |Δξ|²; None for scale 0 (ΔY ≡ 0 is then
    /// reported through `delta_y_sup_mean`).
    pub ratio: Option<f64>,
    pub delta_y_sup_mean: f64,
    pub delta_xi_mean: f64,
}

/// Solves with Φ and Φ + s·g on shared noise for each scale s and reports
/// the continuity ratios R(s).
pub fn terminal_continuity_probe(
    eps: f64,
    inputs: &BackwardInputs,
    picard: &PicardParams,
    g: &TerminalFn,
    scales: &[f64],
) -> Result<Vec<ContinuityRow>> {
    let base = solve_bmmvsde(eps, inputs, picard)?;
    let n = inputs.x_flow.grid.n_steps;
    let mu_terminal = inputs.x_flow.law(n);
    let mut rows = Vec::new();
    for &s in scales {
        if s == 0.0 {
            rows.push(ContinuityRow {
                scale: 0.0,
                ratio: None,
                delta_y_sup_mean: 0.0,
                delta_xi_mean: 0.0,
            });
            continue;
        }
        let phi = inputs.terminal.phi.clone();
        let gg = g.clone();
        let shifted = TerminalCondition::new(Arc::new(move |x: &[f64], mu: &EmpiricalMeasure| {
            let mut v = phi(x, mu);
            let w = gg(x, mu);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi += s * wi;
            }
            v
        }));
        let shifted_inputs = BackwardInputs {
            terminal: &shifted,
            ..*inputs
        };
        let sol = solve_bmmvsde(eps, &shifted_inputs, picard)?;
        let dy = base.l2_sup_distance(&sol)?;
        let mut dxi = 0.0;
        for i in 0..inputs.x_paths.n_particles {
            let w = (g)(inputs.x_paths.state(i, n), mu_terminal);
            dxi += w.iter().map(|v| (s * v) * (s * v)).sum::<f64>();
        }
        dxi /= inputs.x_paths.n_particles as f64;
        rows.push(ContinuityRow {
            scale: s,
            ratio: if dxi > 0.0 { Some(dy * dy / dxi) } else { None },
            delta_y_sup_mean: dy * dy,
            delta_xi_mean: dxi,
        });
    }
    Ok(rows)
}

/// Exact backward induction on the Rademacher tree: conditional expectations
/// by enumeration over path blocks, with the identical resolvent step as the
/// regression solver. This is the equality oracle for regression
/// correctness; it runs the same Picard protocol for measure-dependent
/// drivers.
pub fn tree_oracle(
    depth: usize,
    inputs: &BackwardInputs,
    eps: f64,
    picard: &PicardParams,
) -> Result<BackwardSolution> {
    const MAX_DEPTH: usize = 12;
    if depth > MAX_DEPTH {
        return Err(Error::DepthTooLarge {
            depth,
            max: MAX_DEPTH,
        });
    }
    if inputs.x_paths.dim != 1 || inputs.dim_y != 1 || inputs.noise.dim() != 1 {
        return Err(Error::InvalidArgument(
            "tree oracle requires scalar state, value and noise".into(),
        ));
    }
    let np = 1usize << depth;
    if inputs.x_paths.n_particles != np || inputs.x_flow.grid.n_steps != depth {
        return Err(Error::GridMismatch(format!(
            "tree oracle expects {np} paths over {depth} steps"
        )));
    }
    if !inputs.driver.measure_dependent {
        return tree_pass(depth, inputs, eps, None);
    }
    let mut prev_flow = inputs.delta_flow();
    let mut residuals = Vec::new();
    let mut sol = None;
    for iter in 1..=picard.max_iters {
        let s = tree_pass(depth, inputs, eps, Some(&prev_flow))?;
        let flow = s.joint_flow.clone().unwrap();
        let residual = if iter == 1 {
            sup_distance_to_dirac(&flow, &prev_flow)?
        } else {
            flow_residual(&flow, &prev_flow, picard.metric)?
        };
        residuals.push(residual);
        prev_flow = flow;
        let done = residual <= picard.tol;
        sol = Some(s);
        if done {
            break;
        }
    }
    let mut sol = sol.expect("at least one tree pass ran");
    sol.diagnostics.picard_iters = residuals.len();
    sol.diagnostics.picard_residuals = residuals;
    Ok(sol)
}

/// One tree pass with frozen θ. Paths sharing the first k signs occupy a
/// contiguous index block of size 2^(depth−k) ([`crate::rng::TreeNoise`]'s
/// enumeration order), so conditional expectations are block means.
fn tree_pass(
    depth: usize,
    inputs: &BackwardInputs,
    eps: f64,
    yz_flow: Option<&LawFlow>,
) -> Result<BackwardSolution> {
    let grid = inputs.x_flow.grid;
    let n = grid.n_steps;
    let h = grid.h();
    let sqrt_h = h.sqrt();
    let np = 1usize << depth;
    let op = inputs.operator;
    let build_flow = inputs.driver.measure_dependent;

    let mut y = vec![0.0; np * (n + 1)];
    let mut z = vec![0.0; np * n];
    let mut dk = vec![0.0; np * n];
    let mut joint_laws = Vec::new();

    let mu_terminal = inputs.x_flow.law(n);
    for i in 0..np {
        y[i * (n + 1) + n] = (inputs.terminal.phi)(inputs.x_paths.state(i, n), mu_terminal)[0];
    }
    let terminal_domain_gap = inputs.terminal.domain_gap(op, inputs.x_paths, n, mu_terminal);
    let delta = inputs.delta_theta();

    for step in (0..n).rev() {
        let t = grid.t(step);
        let block = 1usize << (depth - step);
        let n_blocks = np / block;
        // Block means of Y_{k+1} and of Y_{k+1}·ΔW.
        let mut pred_block = vec![0.0; n_blocks];
        let mut z_block = vec![0.0; n_blocks];
        for b in 0..n_blocks {
            let mut sy = 0.0;
            let mut syw = 0.0;
            for i in b * block..(b + 1) * block {
                let mut w = [0.0];
                inputs.noise.standard_increment(i, step, &mut w);
                let dw = w[0] * sqrt_h;
                sy += y[i * (n + 1) + step + 1];
                syw += y[i * (n + 1) + step + 1] * dw;
            }
            pred_block[b] = sy / block as f64;
            z_block[b] = syw / block as f64 / h;
        }
        let theta = match yz_flow {
            Some(f) if inputs.driver.measure_dependent => f.law(step),
            _ => &delta,
        };
        for i in 0..np {
            let b = i / block;
            let xi = inputs.x_paths.state(i, step);
            let g = (inputs.driver.h_fn)(t, xi, &[pred_block[b]], &[z_block[b]], theta);
            let p = pred_block[b] + h * g[0];
            let yk = op.resolvent_of_yosida(eps, h, &[p]);
            let a_eps = op.yosida(eps, &yk);
            y[i * (n + 1) + step] = yk[0];
            z[i * n + step] = z_block[b];
            dk[i * n + step] = h * a_eps[0];
        }
        if build_flow {
            let mut pts = Vec::with_capacity(np * 3);
            for i in 0..np {
                let b = i / block;
                pts.push(inputs.x_paths.state(i, step)[0]);
                pts.push(pred_block[b]);
                pts.push(z_block[b]);
            }
            joint_laws.push(EmpiricalMeasure::new(pts, 3, None)?);
        }
    }

    let mut k = vec![0.0; np * (n + 1)];
    for i in 0..np {
        for step in 0..n {
            k[i * (n + 1) + step + 1] = k[i * (n + 1) + step] + dk[i * n + step];
        }
    }

    let joint_flow = if build_flow {
        joint_laws.reverse();
        let mut pts = Vec::with_capacity(np * 3);
        for i in 0..np {
            pts.push(inputs.x_paths.state(i, n)[0]);
            pts.push(y[i * (n + 1) + n]);
            pts.push(0.0);
        }
        joint_laws.push(EmpiricalMeasure::new(pts, 3, None)?);
        Some(LawFlow::new(grid, joint_laws)?)
    } else {
        None
    };

    let mut sup_y = 0.0f64;
    let mut z_acc = 0.0;
    let mut ktv = 0.0;
    for i in 0..np {
        for node in 0..=n {
            sup_y = sup_y.max(y[i * (n + 1) + node].abs());
        }
        for step in 0..n {
            z_acc += h * z[i * n + step] * z[i * n + step];
            ktv += dk[i * n + step].abs();
        }
    }

    Ok(BackwardSolution {
        y,
        z,
        k,
        eps,
        diagnostics: Diagnostics {
            picard_iters: 1,
            picard_residuals: Vec::new(),
            sup_norm_y: sup_y,
            l2_norm_z: (z_acc / np as f64).sqrt(),
            k_total_variation: ktv / np as f64,
            terminal_domain_gap,
        },
        grid,
        n_particles: np,
        dim_y: 1,
        dim_z: 1,
        joint_flow,
    })
}
