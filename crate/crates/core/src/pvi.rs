//! The value function u(t, x, μ) of the decoupled forward-backward system,
//! and a finite-difference oracle for the penalized PDE in the
//! measure-independent one-dimensional case.
//!
//! `evaluate_u` runs the full pipeline: simulate the interacting system
//! started from the initial law, freeze its law flow (and, for measure
//! dependent drivers, its backward (X, Y, Z) flow), simulate the decoupled
//! system from the query point on shared noise, solve the backward equation
//! and average Y at the query node. The function accepts only law
//! descriptions, never raw samples, so its output depends on η only through
//! the law of η.
//!
//! `fd_solve_penalized_pde` discretizes
//! `∂_t u + b ∂_x u + ½σ² ∂²_x u + H(t, x, u, ∂_x u·σ) = A_ε(u)`
//! by backward Euler in time with central differences and operator
//! splitting: an implicit diffusion/driver half-step solved by tridiagonal
//! elimination, then the identical closed-form resolvent step used by the
//! probabilistic solver.

use crate::backward::{
    solve_bmmvsde, solve_penalized_backward, BackwardInputs, Driver, PicardParams,
    TerminalCondition,
};
use crate::error::{Error, Result};
use crate::forward::{simulate_decoupled, simulate_mckean, ForwardCoefficients, InitialSampler, LawFlow};
use crate::grid::TimeGrid;
use crate::measure::EmpiricalMeasure;
use crate::monotone::MonotoneOperator;
use crate::regression::RegressionBasis;
use crate::rng::BrownianDriver;

/// A point query of the value function.
#[derive(Debug, Clone)]
pub struct ValueQuery {
    pub t: f64,
    pub x: Vec<f64>,
    pub initial: InitialSampler,
}

/// Everything needed to evaluate u: coefficients, operator, solver
/// parameters and the experiment seed.
pub struct UPipeline {
    pub forward: ForwardCoefficients,
    pub driver: Driver,
    pub terminal: TerminalCondition,
    pub operator: MonotoneOperator,
    pub basis: RegressionBasis,
    pub grid: TimeGrid,
    pub n_particles: usize,
    pub eps: f64,
    pub picard: PicardParams,
    pub seed: u64,
    pub dim_y: usize,
}

/// Monte Carlo estimate of u at a query point.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValueEstimate {
    pub value: Vec<f64>,
    /// Standard error of the final conditional-expectation step; the
    /// 1-Lipschitz resolvent makes this a conservative delta-method bound.
    pub std_error: f64,
    /// Query time snapped to the nearest grid node.
    pub snapped_t: f64,
    pub snapped_node: usize,
}

/// The frozen η-system objects shared by several queries.
pub struct FrozenSystem {
    pub eta_flow: LawFlow,
    pub yz_flow: Option<LawFlow>,
    pub noise: BrownianDriver,
    pub sub_grid: TimeGrid,
    pub start_node: usize,
}

/// Simulates the η system from the (snapped) query time and, for measure
/// dependent drivers, solves its backward equation to freeze the (X, Y, Z)
/// flow.
pub fn freeze_eta_system(t: f64, initial: &InitialSampler, pipe: &UPipeline) -> Result<FrozenSystem> {
    let k0 = pipe.grid.snap(t);
    if k0 >= pipe.grid.n_steps {
        return Err(Error::InvalidArgument(
            "query time snaps to the terminal node; evaluate_u handles that case directly".into(),
        ));
    }
    let sub_grid = pipe.grid.tail(k0)?;
    let noise = BrownianDriver::new(pipe.seed, pipe.n_particles, pipe.forward.dim_noise)
        .offset(0, k0);
    let (eta_paths, eta_flow) = simulate_mckean(
        &pipe.forward,
        &sub_grid,
        initial,
        pipe.seed,
        pipe.n_particles,
        &noise,
    )?;
    let yz_flow = if pipe.driver.measure_dependent {
        let inputs = BackwardInputs {
            operator: &pipe.operator,
            x_paths: &eta_paths,
            x_flow: &eta_flow,
            driver: &pipe.driver,
            terminal: &pipe.terminal,
            basis: &pipe.basis,
            noise: &noise,
            dim_y: pipe.dim_y,
        };
        let sol = solve_bmmvsde(pipe.eps, &inputs, &pipe.picard)?;
        sol.joint_flow
    } else {
        None
    };
    Ok(FrozenSystem {
        eta_flow,
        yz_flow,
        noise,
        sub_grid,
        start_node: k0,
    })
}

/// Evaluates u at one query against an already frozen η system.
pub fn evaluate_u_with_frozen(
    query_x: &[f64],
    frozen: &FrozenSystem,
    pipe: &UPipeline,
) -> Result<ValueEstimate> {
    let dec_paths = simulate_decoupled(
        &pipe.forward,
        &frozen.sub_grid,
        query_x,
        &frozen.eta_flow,
        pipe.n_particles,
        &frozen.noise,
    )?;
    let inputs = BackwardInputs {
        operator: &pipe.operator,
        x_paths: &dec_paths,
        x_flow: &frozen.eta_flow,
        driver: &pipe.driver,
        terminal: &pipe.terminal,
        basis: &pipe.basis,
        noise: &frozen.noise,
        dim_y: pipe.dim_y,
    };
    let sol = solve_penalized_backward(pipe.eps, &inputs, frozen.yz_flow.as_ref())?;
    let value = sol.y_mean(0);
    // Standard error of the last conditional-expectation targets Y_1.
    let n = pipe.n_particles as f64;
    let mut var_sum = 0.0;
    for a in 0..pipe.dim_y {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for i in 0..pipe.n_particles {
            let v = sol.y(i, 1)[a];
            s += v;
            s2 += v * v;
        }
        let mean = s / n;
        var_sum += (s2 / n - mean * mean).max(0.0);
    }
    Ok(ValueEstimate {
        value,
        std_error: (var_sum / n).sqrt(),
        snapped_t: frozen.sub_grid.t0,
        snapped_node: frozen.start_node,
    })
}

/// Evaluates u(t, x, μ) = Y_t^{t,x,μ} by the full forward-backward pipeline.
pub fn evaluate_u(query: &ValueQuery, pipe: &UPipeline) -> Result<ValueEstimate> {
    let k0 = pipe.grid.snap(query.t);
    if k0 == pipe.grid.n_steps {
        // At the terminal time u = Φ(x, L_η) exactly.
        let mut pts = Vec::with_capacity(pipe.n_particles * query.initial.dim());
        for p in 0..pipe.n_particles {
            pts.extend(query.initial.sample(pipe.seed, crate::rng::SubStream::InitialDraw, p));
        }
        let mu = EmpiricalMeasure::new(pts, query.initial.dim(), None)?;
        return Ok(ValueEstimate {
            value: (pipe.terminal.phi)(&query.x, &mu),
            std_error: 0.0,
            snapped_t: pipe.grid.t_end,
            snapped_node: k0,
        });
    }
    let frozen = freeze_eta_system(query.t, &query.initial, pipe)?;
    evaluate_u_with_frozen(&query.x, &frozen, pipe)
}

/// Spatial grid of the finite-difference solver.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FdGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub boundary: FdBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdBoundary {
    /// u(t, x_b) = Φ(x_b): terminal values pinned at the spatial boundary.
    DirichletFromTerminal,
    /// Boundary values linearly extrapolated from the interior of the
    /// previous time level.
    OneSidedExtrapolation,
}

/// Grid function u_ε(t_k, x_i) on the full space-time lattice.
#[derive(Debug, Clone)]
pub struct FdSolution {
    pub grid: TimeGrid,
    pub fd: FdGrid,
    u: Vec<f64>, // (n_steps+1) × (n_x+1), row = time node
}

impl FdSolution {
    #[inline]
    pub fn at(&self, node: usize, ix: usize) -> f64 {
        self.u[node * (self.fd.n_x + 1) + ix]
    }

    /// Linear interpolation in x at a time node.
    pub fn value_at(&self, node: usize, x: f64) -> f64 {
        let dx = (self.fd.x_hi - self.fd.x_lo) / self.fd.n_x as f64;
        let s = ((x - self.fd.x_lo) / dx).clamp(0.0, self.fd.n_x as f64);
        let i = (s.floor() as usize).min(self.fd.n_x - 1);
        let w = s - i as f64;
        self.at(node, i) * (1.0 - w) + self.at(node, i + 1) * w
    }
}

/// Thomas elimination for a tridiagonal system; `sub`/`sup` have length
/// n−1, `diag` and `rhs` length n. Overwrites rhs with the solution.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    debug_assert!(sub.len() == n - 1 && sup.len() == n - 1 && diag.len() == n);
    let mut c = vec![0.0; n - 1];
    let mut denom = diag[0];
    c[0] = sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / denom;
        }
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Implicit finite-difference solution of the ε-penalized PDE.
///
/// Preconditions: scalar state, noise and value (m = l = d = 1) and
/// measure-independent coefficients and driver. `terminal_mu` is the law
/// argument handed to Φ (irrelevant for measure-independent terminals).
pub fn fd_solve_penalized_pde(
    eps: f64,
    forward: &ForwardCoefficients,
    driver: &Driver,
    op: &MonotoneOperator,
    terminal: &TerminalCondition,
    terminal_mu: &EmpiricalMeasure,
    fd: &FdGrid,
    grid: &TimeGrid,
) -> Result<FdSolution> {
    if forward.dim_state != 1 || forward.dim_noise != 1 || op.dim() != 1 {
        return Err(Error::InvalidArgument(
            "finite-difference oracle requires m = l = d = 1".into(),
        ));
    }
    if forward.measure_dependent || driver.measure_dependent {
        return Err(Error::InvalidArgument(
            "finite-difference oracle requires measure-independent coefficients".into(),
        ));
    }
    if fd.n_x < 16 {
        return Err(Error::InvalidArgument("fd grid needs n_x >= 16".into()));
    }
    op.require_interior()?;
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let nx = fd.n_x;
    let nt = grid.n_steps;
    let h = grid.h();
    let dx = (fd.x_hi - fd.x_lo) / nx as f64;
    let xs: Vec<f64> = (0..=nx).map(|i| fd.x_lo + dx * i as f64).collect();
    let dummy = EmpiricalMeasure::dirac(vec![0.0]).unwrap();

    let mut u = vec![0.0; (nt + 1) * (nx + 1)];
    for (i, &x) in xs.iter().enumerate() {
        u[nt * (nx + 1) + i] = (terminal.phi)(&[x], terminal_mu)[0];
    }

    let mut sub = vec![0.0; nx - 2 + 1];
    let mut diag = vec![0.0; nx + 1];
    let mut sup = vec![0.0; nx - 2 + 1];
    let mut rhs = vec![0.0; nx + 1];
    // Interior system excludes the two boundary rows; re-sized per use below.
    for step in (0..nt).rev() {
        let t = grid.t(step);
        let prev = step + 1;
        // Boundary values for this level.
        let (bc_lo, bc_hi) = match fd.boundary {
            FdBoundary::DirichletFromTerminal => (
                (terminal.phi)(&[xs[0]], terminal_mu)[0],
                (terminal.phi)(&[xs[nx]], terminal_mu)[0],
            ),
            FdBoundary::OneSidedExtrapolation => (
                2.0 * u[prev * (nx + 1) + 1] - u[prev * (nx + 1) + 2],
                2.0 * u[prev * (nx + 1) + nx - 1] - u[prev * (nx + 1) + nx - 2],
            ),
        };
        // Assemble the interior rows i = 1..nx-1.
        let m = nx - 1;
        sub.resize(m - 1, 0.0);
        sup.resize(m - 1, 0.0);
        diag.resize(m, 0.0);
        rhs.resize(m, 0.0);
        for i in 1..nx {
            let x = xs[i];
            let b = (forward.b)(t, &[x], &dummy)[0];
            let s = (forward.sigma)(t, &[x], &dummy)[0];
            let up = u[prev * (nx + 1) + i];
            let dudx = (u[prev * (nx + 1) + i + 1] - u[prev * (nx + 1) + i - 1]) / (2.0 * dx);
            let hval = (driver.h_fn)(t, &[x], &[up], &[dudx * s], &dummy)[0];
            let adv = h * b / (2.0 * dx);
            let dif = h * s * s / (2.0 * dx * dx);
            let row = i - 1;
            if row > 0 {
                sub[row - 1] = adv - dif;
            }
            diag[row] = 1.0 + 2.0 * dif;
            if row < m - 1 {
                sup[row] = -adv - dif;
            }
            rhs[row] = up + h * hval;
            // Fold the Dirichlet boundary values into the first/last rows.
            if i == 1 {
                rhs[row] -= (adv - dif) * bc_lo;
            }
            if i == nx - 1 {
                rhs[row] -= (-adv - dif) * bc_hi;
            }
        }
        solve_tridiagonal(&sub, &diag, &sup, &mut rhs);
        // Resolvent step, identical formula as the probabilistic solver.
        u[step * (nx + 1)] = op.resolvent_of_yosida(eps, h, &[bc_lo])[0];
        u[step * (nx + 1) + nx] = op.resolvent_of_yosida(eps, h, &[bc_hi])[0];
        for i in 1..nx {
            u[step * (nx + 1) + i] = op.resolvent_of_yosida(eps, h, &[rhs[i - 1]])[0];
        }
    }
    Ok(FdSolution {
        grid: *grid,
        fd: fd.clone(),
        u,
    })
}

/// Sup difference at the initial time between a solve and one at doubled
/// resolution (both in space and time), evaluated on the coarse x-nodes.
/// The self-convergence diagnostic behind `GridTooCoarse`.
pub fn fd_doubling_gap(
    eps: f64,
    forward: &ForwardCoefficients,
    driver: &Driver,
    op: &MonotoneOperator,
    terminal: &TerminalCondition,
    terminal_mu: &EmpiricalMeasure,
    fd: &FdGrid,
    grid: &TimeGrid,
) -> Result<f64> {
    let coarse = fd_solve_penalized_pde(eps, forward, driver, op, terminal, terminal_mu, fd, grid)?;
    let fine_fd = FdGrid {
        n_x: fd.n_x * 2,
        ..fd.clone()
    };
    let fine_grid = TimeGrid::new(grid.t0, grid.t_end, grid.n_steps * 2)?;
    let fine = fd_solve_penalized_pde(
        eps, forward, driver, op, terminal, terminal_mu, &fine_fd, &fine_grid,
    )?;
    let mut gap = 0.0f64;
    for i in 0..=fd.n_x {
        gap = gap.max((coarse.at(0, i) - fine.at(0, 2 * i)).abs());
    }
    Ok(gap)
}

/// One row of the probabilistic-vs-FD comparison table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareRow {
    pub x: f64,
    pub u_prob: f64,
    pub std_error: f64,
    pub u_fd: f64,
    pub abs_diff: f64,
}

/// Comparison of the two solvers over a set of query points.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub sup_error: f64,
    /// 3 × the largest Monte Carlo standard error among the queries.
    pub statistical_budget: f64,
    /// FD self-convergence gap under grid doubling.
    pub discretization_budget: f64,
}

/// Evaluates u probabilistically and by finite differences on a shared
/// one-dimensional measure-independent configuration.
pub fn compare_probabilistic_vs_fd(
    pipe: &UPipeline,
    initial: &InitialSampler,
    fd: &FdGrid,
    query_xs: &[f64],
) -> Result<CompareReport> {
    let frozen = freeze_eta_system(pipe.grid.t0, initial, pipe)?;
    let terminal_mu = frozen.eta_flow.law(frozen.sub_grid.n_steps).clone();
    let fd_sol = fd_solve_penalized_pde(
        pipe.eps,
        &pipe.forward,
        &pipe.driver,
        &pipe.operator,
        &pipe.terminal,
        &terminal_mu,
        fd,
        &pipe.grid,
    )?;
    let disc = fd_doubling_gap(
        pipe.eps,
        &pipe.forward,
        &pipe.driver,
        &pipe.operator,
        &pipe.terminal,
        &terminal_mu,
        fd,
        &pipe.grid,
    )?;
    let mut rows = Vec::with_capacity(query_xs.len());
    let mut sup = 0.0f64;
    let mut stat = 0.0f64;
    for &x in query_xs {
        let est = evaluate_u_with_frozen(&[x], &frozen, pipe)?;
        let u_fd = fd_sol.value_at(0, x);
        let diff = (est.value[0] - u_fd).abs();
        sup = sup.max(diff);
        stat = stat.max(3.0 * est.std_error);
        rows.push(CompareRow {
            x,
            u_prob: est.value[0],
            std_error: est.std_error,
            u_fd,
            abs_diff: diff,
        });
    }
    Ok(CompareReport {
        rows,
        sup_error: sup,
        statistical_budget: stat,
        discretization_budget: disc,
    })
}
