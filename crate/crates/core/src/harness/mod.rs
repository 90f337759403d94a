//! Experiment harness: configuration, presets, reproducible runs and the
//! operator validation suite.
//!
//! Every run resolves its configuration, hashes it, executes the requested
//! pipeline and materializes deterministic artifacts (`config.toml`,
//! `paths.csv`, `solution.csv`, `summary.json`, plots). All randomness flows
//! from the single config seed through named substreams, so identical
//! (config, seed) produce byte-identical artifacts at any thread count.

pub mod config;
pub mod output;
pub mod presets;

pub use config::ExperimentConfig;

use crate::backward::{
    epsilon_sweep, solve_bmmvsde, verify_skorokhod, BackwardInputs, BackwardSolution,
    PenalizationSchedule, PicardParams, SkorokhodReport, TerminalFn,
};
use crate::error::{Error, Result};
use crate::forward::simulate_mckean;
use crate::measure::EmpiricalMeasure;
use crate::monotone::{GraphPoint, MinimalSection, MonotoneOperator};
use crate::pvi::{compare_probabilistic_vs_fd, FdGrid, UPipeline};
use crate::rng::{uniform, BrownianDriver, SubStream};
use std::path::Path;
use std::sync::Arc;

/// What a CLI invocation asks the harness to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Forward + backward solve (ε-sweep when a schedule is configured).
    Solve,
    /// Forward + backward ε-sweep; requires a schedule.
    SweepEpsilon,
    /// Probabilistic vs finite-difference comparison; requires `pvi`.
    ComparePde,
    /// Terminal-continuity ratio table.
    ProbeContinuity,
}

/// In-memory artifacts of a run; written to the output directory when the
/// config names one.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// (file name, content) pairs, summary.json included.
    pub files: Vec<(String, String)>,
    pub summary: serde_json::Value,
}

impl RunArtifacts {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

fn picard_params(cfg: &ExperimentConfig) -> PicardParams {
    PicardParams {
        max_iters: cfg.picard.max_iters,
        tol: cfg.picard.tol,
        metric: cfg.picard.metric,
    }
}

fn smallest_eps(cfg: &ExperimentConfig) -> f64 {
    match (&cfg.penalization.schedule, cfg.penalization.eps) {
        (Some(s), _) => *s.last().expect("schedule validated nonempty"),
        (None, Some(e)) => e,
        (None, None) => unreachable!("config validated"),
    }
}

/// Builds the value-function pipeline from a config.
pub fn build_pipeline(cfg: &ExperimentConfig) -> Result<UPipeline> {
    Ok(UPipeline {
        forward: presets::build_forward(&cfg.forward)?,
        driver: presets::build_driver(&cfg.driver),
        terminal: presets::build_terminal(&cfg.terminal),
        operator: presets::build_operator(&cfg.operator)?,
        basis: cfg.basis.clone(),
        grid: cfg.grid,
        n_particles: cfg.particles,
        eps: smallest_eps(cfg),
        picard: picard_params(cfg),
        seed: cfg.seed,
        dim_y: 1,
    })
}

/// Standard error of the final conditional-expectation step of a solution
/// (standard deviation of the Y values one node after the start, divided by
/// √N; conservative for the 1-Lipschitz resolvent).
fn y0_std_error(sol: &BackwardSolution) -> f64 {
    if sol.grid.n_steps == 0 {
        return 0.0;
    }
    let n = sol.n_particles as f64;
    let mut var_sum = 0.0;
    for a in 0..sol.dim_y {
        let mut s = 0.0;
        let mut s2 = 0.0;
        for i in 0..sol.n_particles {
            let v = sol.y(i, 1)[a];
            s += v;
            s2 += v * v;
        }
        let mean = s / n;
        var_sum += (s2 / n - mean * mean).max(0.0);
    }
    (var_sum / n).sqrt()
}

#[derive(serde::Serialize)]
struct SolveSummary {
    config_hash: String,
    mode: &'static str,
    eps: f64,
    u0: Vec<f64>,
    u0_std_error: f64,
    diagnostics: crate::backward::Diagnostics,
    skorokhod: SkorokhodReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair_distances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_rate: Option<f64>,
}

/// Executes a run and, when the config names an output directory, writes the
/// artifacts there. Exit-status semantics live in [`Error::exit_status`].
pub fn run(cfg: &ExperimentConfig, mode: RunMode) -> Result<RunArtifacts> {
    cfg.validate()?;
    let artifacts = match mode {
        RunMode::Solve | RunMode::SweepEpsilon => run_solve(cfg, mode)?,
        RunMode::ComparePde => run_compare(cfg)?,
        RunMode::ProbeContinuity => run_probe(cfg)?,
    };
    if let Some(dir) = &cfg.outputs {
        let dir = Path::new(dir);
        for (name, content) in &artifacts.files {
            output::write_string(&dir.join(name), content)?;
        }
    }
    Ok(artifacts)
}

fn run_solve(cfg: &ExperimentConfig, mode: RunMode) -> Result<RunArtifacts> {
    let forward = presets::build_forward(&cfg.forward)?;
    let operator = presets::build_operator(&cfg.operator)?;
    let driver = presets::build_driver(&cfg.driver);
    let terminal = presets::build_terminal(&cfg.terminal);
    let picard = picard_params(cfg);
    let noise = BrownianDriver::new(cfg.seed, cfg.particles, forward.dim_noise);
    let (paths, flow) = simulate_mckean(
        &forward,
        &cfg.grid,
        &cfg.initial,
        cfg.seed,
        cfg.particles,
        &noise,
    )?;
    let inputs = BackwardInputs {
        operator: &operator,
        x_paths: &paths,
        x_flow: &flow,
        driver: &driver,
        terminal: &terminal,
        basis: &cfg.basis,
        noise: &noise,
        dim_y: 1,
    };
    let schedule = match (&cfg.penalization.schedule, mode) {
        (Some(s), _) => Some(PenalizationSchedule::new(s.clone())?),
        (None, RunMode::SweepEpsilon) => {
            return Err(Error::Config(
                "sweep-epsilon requires penalization.schedule".into(),
            ))
        }
        (None, _) => None,
    };
    let probes = default_probes(&operator, 20)?;
    let (sol, sweep_summary) = match schedule {
        Some(schedule) => {
            let report = epsilon_sweep(&schedule, &inputs, &picard)?;
            let sol = report
                .solutions
                .into_iter()
                .last()
                .expect("nonempty schedule");
            (
                sol,
                Some((report.eps_list, report.pair_distances, report.fitted_rate)),
            )
        }
        None => {
            let eps = cfg.penalization.eps.expect("config validated");
            (solve_bmmvsde(eps, &inputs, &picard)?, None)
        }
    };
    let skorokhod = verify_skorokhod(&sol, &operator, &probes);
    let summary = SolveSummary {
        config_hash: cfg.content_hash(),
        mode: "run",
        eps: sol.eps,
        u0: sol.y_mean(0),
        u0_std_error: y0_std_error(&sol),
        diagnostics: sol.diagnostics.clone(),
        skorokhod,
        schedule: sweep_summary.as_ref().map(|(e, _, _)| e.clone()),
        pair_distances: sweep_summary.as_ref().map(|(_, d, _)| d.clone()),
        eps_rate: sweep_summary.as_ref().and_then(|(_, _, r)| *r),
    };
    let summary_value = serde_json::to_value(&summary).expect("summary serializes");
    let mut files = vec![
        ("config.toml".to_string(), cfg.to_toml_string()),
        (
            "paths.csv".to_string(),
            output::paths_csv(&paths, &cfg.grid, cfg.output_options.paths_limit),
        ),
        (
            "solution.csv".to_string(),
            output::solution_csv(&sol, cfg.output_options.paths_limit),
        ),
        ("summary.json".to_string(), to_pretty_json(&summary_value)),
    ];
    if cfg.output_options.plot {
        let n = sol.grid.n_steps;
        let mut mean_path = Vec::with_capacity(n + 1);
        let mut mean_k = Vec::with_capacity(n + 1);
        for node in 0..=n {
            let my = mean_over(&sol, node, |s, i, k| s.y(i, k)[0]);
            let mk = mean_over(&sol, node, |s, i, k| s.k(i, k)[0]);
            mean_path.push((sol.grid.t(node), my));
            mean_k.push((sol.grid.t(node), mk));
        }
        let svg = output::svg_plot(
            "mean Y and K over particles",
            "t",
            "value",
            &[
                output::Series {
                    label: "mean Y",
                    color: "steelblue",
                    points: mean_path,
                },
                output::Series {
                    label: "mean K",
                    color: "firebrick",
                    points: mean_k,
                },
            ],
        );
        files.push(("plot.svg".to_string(), svg));
    }
    Ok(RunArtifacts {
        files,
        summary: summary_value,
    })
}

fn mean_over(
    sol: &BackwardSolution,
    node: usize,
    f: impl Fn(&BackwardSolution, usize, usize) -> f64,
) -> f64 {
    let mut s = 0.0;
    for i in 0..sol.n_particles {
        s += f(sol, i, node);
    }
    s / sol.n_particles as f64
}

#[derive(serde::Serialize)]
struct CompareSummary {
    config_hash: String,
    mode: &'static str,
    eps: f64,
    sup_error: f64,
    statistical_budget: f64,
    discretization_budget: f64,
    rows: Vec<crate::pvi::CompareRow>,
}

fn run_compare(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let pvi_spec = cfg
        .pvi
        .as_ref()
        .ok_or_else(|| Error::Config("compare-pde requires a [pvi] table".into()))?;
    let pipe = build_pipeline(cfg)?;
    let fd = FdGrid {
        x_lo: pvi_spec.fd_x_lo,
        x_hi: pvi_spec.fd_x_hi,
        n_x: pvi_spec.fd_n_x,
        boundary: pvi_spec.fd_boundary,
    };
    let report = compare_probabilistic_vs_fd(&pipe, &cfg.initial, &fd, &pvi_spec.query_xs)?;
    let mut csv = String::from("x,u_prob,stderr,u_fd,abs_diff\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.x, r.u_prob, r.std_error, r.u_fd, r.abs_diff
        ));
    }
    let svg = output::svg_plot(
        "probabilistic vs finite-difference value function",
        "x",
        "u",
        &[
            output::Series {
                label: "u_prob",
                color: "steelblue",
                points: report.rows.iter().map(|r| (r.x, r.u_prob)).collect(),
            },
            output::Series {
                label: "u_fd",
                color: "firebrick",
                points: report.rows.iter().map(|r| (r.x, r.u_fd)).collect(),
            },
        ],
    );
    let summary = CompareSummary {
        config_hash: cfg.content_hash(),
        mode: "compare-pde",
        eps: pipe.eps,
        sup_error: report.sup_error,
        statistical_budget: report.statistical_budget,
        discretization_budget: report.discretization_budget,
        rows: report.rows,
    };
    let summary_value = serde_json::to_value(&summary).expect("summary serializes");
    Ok(RunArtifacts {
        files: vec![
            ("config.toml".to_string(), cfg.to_toml_string()),
            ("compare.csv".to_string(), csv),
            ("plot.svg".to_string(), svg),
            ("summary.json".to_string(), to_pretty_json(&summary_value)),
        ],
        summary: summary_value,
    })
}

#[derive(serde::Serialize)]
struct ProbeSummary {
    config_hash: String,
    mode: &'static str,
    eps: f64,
    rows: Vec<crate::backward::ContinuityRow>,
}

fn run_probe(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let forward = presets::build_forward(&cfg.forward)?;
    let operator = presets::build_operator(&cfg.operator)?;
    let driver = presets::build_driver(&cfg.driver);
    let terminal = presets::build_terminal(&cfg.terminal);
    let picard = picard_params(cfg);
    let scales = cfg
        .probe
        .as_ref()
        .map(|p| p.scales.clone())
        .unwrap_or_else(|| vec![0.1, 0.01, 0.001]);
    let noise = BrownianDriver::new(cfg.seed, cfg.particles, forward.dim_noise);
    let (paths, flow) = simulate_mckean(
        &forward,
        &cfg.grid,
        &cfg.initial,
        cfg.seed,
        cfg.particles,
        &noise,
    )?;
    let inputs = BackwardInputs {
        operator: &operator,
        x_paths: &paths,
        x_flow: &flow,
        driver: &driver,
        terminal: &terminal,
        basis: &cfg.basis,
        noise: &noise,
        dim_y: 1,
    };
    // Bounded perturbation direction g ≡ 1.
    let g: TerminalFn = Arc::new(|_: &[f64], _: &EmpiricalMeasure| vec![1.0]);
    let eps = smallest_eps(cfg);
    let rows = crate::backward::terminal_continuity_probe(eps, &inputs, &picard, &g, &scales)?;
    let mut csv = String::from("scale,ratio,delta_y_sup_mean,delta_xi_mean\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.scale,
            r.ratio.map_or(String::new(), |v| format!("{v}")),
            r.delta_y_sup_mean,
            r.delta_xi_mean
        ));
    }
    let summary = ProbeSummary {
        config_hash: cfg.content_hash(),
        mode: "probe-continuity",
        eps,
        rows,
    };
    let summary_value = serde_json::to_value(&summary).expect("summary serializes");
    Ok(RunArtifacts {
        files: vec![
            ("config.toml".to_string(), cfg.to_toml_string()),
            ("continuity.csv".to_string(), csv),
            ("summary.json".to_string(), to_pretty_json(&summary_value)),
        ],
        summary: summary_value,
    })
}

fn to_pretty_json(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

// ---- operator validation ---------------------------------------------------

/// Outcome of one property check over the sample sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct KindReport {
    pub kind: String,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub kinds: Vec<KindReport>,
    pub pass: bool,
}

impl ValidationReport {
    /// Names of the invariants that failed, prefixed by operator kind.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in &self.kinds {
            for c in &k.checks {
                if !c.pass {
                    out.push(format!("{}::{}", k.kind, c.name));
                }
            }
        }
        out
    }
}

/// The operator kinds shipped with the library, as validated instances.
pub fn shipped_operators() -> Vec<(String, MonotoneOperator)> {
    vec![
        ("zero".into(), MonotoneOperator::zero(1)),
        (
            "linear_monotone(I)".into(),
            MonotoneOperator::scaled_identity(1, 1.0).unwrap(),
        ),
        ("subdiff_abs".into(), MonotoneOperator::subdiff_abs()),
        (
            "normal_cone_interval[-1,1]".into(),
            MonotoneOperator::normal_cone_interval(-1.0, 1.0).unwrap(),
        ),
        (
            "normal_cone_interval[0,inf)".into(),
            MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap(),
        ),
        ("subdiff_hinge".into(), MonotoneOperator::subdiff_hinge()),
        (
            "sum(0.5I + subdiff_abs)".into(),
            MonotoneOperator::sum(
                MonotoneOperator::scaled_identity(1, 0.5).unwrap(),
                MonotoneOperator::subdiff_abs(),
            )
            .unwrap(),
        ),
        (
            "normal_cone_box[-1,1]^2".into(),
            MonotoneOperator::normal_cone_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        ),
    ]
}

/// Runs the full property suite over the shipped operator kinds.
pub fn validate_operators(samples: usize, seed: u64) -> ValidationReport {
    validate_operators_on(&shipped_operators(), samples, seed)
}

/// Runs the property suite over caller-provided operators (also used to
/// exercise broken fixtures).
pub fn validate_operators_on(
    ops: &[(String, MonotoneOperator)],
    samples: usize,
    seed: u64,
) -> ValidationReport {
    let mut kinds = Vec::new();
    for (op_idx, (name, op)) in ops.iter().enumerate() {
        let d = op.dim();
        let mut ne = 0.0f64; // nonexpansiveness excess
        let mut lip = 0.0f64; // 1/ε-Lipschitz excess
        let mut mono = 0.0f64; // monotonicity excess (cancellation-adjusted)
        let mut graph = 0.0f64; // dist(A_ε(x), A(J_ε(x)))
        let mut yoy = 0.0f64; // resolvent-of-Yosida defining equation
        for i in 0..samples as u64 {
            let u = |slot: u64| uniform(seed, SubStream::Perturbation, op_idx as u64, i, slot);
            let mut x = vec![0.0; d];
            let mut xp = vec![0.0; d];
            for j in 0..d {
                x[j] = 20.0 * u(2 * j as u64) - 10.0;
                xp[j] = 20.0 * u(2 * j as u64 + 1) - 10.0;
            }
            let eps = 1e-3 + (1.0 - 1e-3) * u(100);
            let lam = 1e-3 + (1.0 - 1e-3) * u(101);
            let jx = op.resolvent(eps, &x);
            let jxp = op.resolvent(eps, &xp);
            let dx = dist(&x, &xp);
            ne = ne.max(dist(&jx, &jxp) - dx);
            let ax = op.yosida(eps, &x);
            let axp = op.yosida(eps, &xp);
            lip = lip.max(dist(&ax, &axp) - dx / eps);
            let inner: f64 = ax
                .iter()
                .zip(&axp)
                .zip(x.iter().zip(&xp))
                .map(|((a, ap), (v, vp))| (a - ap) * (v - vp))
                .sum();
            let cancel = if op.yosida_has_cancellation() {
                8.0 * f64::EPSILON * (norm_slice(&x) + norm_slice(&xp)) / eps * dx
            } else {
                0.0
            };
            mono = mono.max(-inner - cancel);
            graph = graph.max(op.graph_distance(&jx, &ax));
            // Resolvent of the Yosida approximation solves its defining
            // equation, composed from public operations.
            let yy = op.resolvent_of_yosida(eps, lam, &x);
            let ayy = op.yosida(eps, &yy);
            let res: f64 = yy
                .iter()
                .zip(&ayy)
                .zip(&x)
                .map(|((a, b), c)| (a + lam * b - c) * (a + lam * b - c))
                .sum::<f64>()
                .sqrt();
            yoy = yoy.max(res);
        }
        // Certificate inequality on the standard (ε, x) grid.
        let cert_residual = match op.coercivity_certificate() {
            Ok(cert) => {
                let eps_grid: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
                let xs: Vec<Vec<f64>> = (0..201)
                    .map(|k| {
                        (0..d)
                            .map(|j| -10.0 + 0.1 * ((k * (j + 1)) % 201) as f64)
                            .collect()
                    })
                    .collect();
                (-op.certificate_slack(&cert, &eps_grid, &xs)).max(0.0)
            }
            Err(_) => f64::INFINITY,
        };
        let checks = vec![
            check("nonexpansive", ne, 1e-9),
            check("lipschitz_one_over_eps", lip, 1e-9),
            check("monotonicity", mono, 1e-12),
            check("graph_membership", graph, 1e-9),
            check("resolvent_identity", yoy, 1e-9),
            check("coercivity_certificate", cert_residual, 1e-9),
        ];
        let pass = checks.iter().all(|c| c.pass);
        kinds.push(KindReport {
            kind: name.clone(),
            checks,
            pass,
        });
    }
    let pass = kinds.iter().all(|k| k.pass);
    ValidationReport {
        samples,
        seed,
        kinds,
        pass,
    }
}

fn check(name: &'static str, max_residual: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        max_residual,
        tol,
        pass: max_residual <= tol,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn norm_slice(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Deterministic graph probes for Skorokhod verification: interior points
/// with their minimal sections, plus boundary normals for cone-type kinds.
pub fn default_probes(op: &MonotoneOperator, count: usize) -> Result<Vec<GraphPoint>> {
    let d = op.dim();
    let mut probes = Vec::new();
    // Interior sweep: project a coarse line into the domain and pair with
    // the minimal section.
    let sweep = [-3.0, -1.5, -0.5, 0.0, 0.5, 1.5, 3.0];
    for &s in &sweep {
        let x = op.project_domain_closure(&vec![s; d]);
        if let MinimalSection::Point(y) = op.minimal_section(&x) {
            if y.iter().all(|v| v.is_finite()) && op.graph_contains(&x, &y, 1e-9) {
                probes.push(GraphPoint { x, y });
            }
        }
    }
    // Boundary normals for interval-type kinds (1D).
    if d == 1 {
        let lo = op.project_domain_closure(&[-1e12])[0];
        let hi = op.project_domain_closure(&[1e12])[0];
        for &mag in &[0.5, 1.0, 2.0, 4.0] {
            if lo.is_finite() && lo > -1e11 && op.graph_contains(&[lo], &[-mag], 1e-9) {
                probes.push(GraphPoint {
                    x: vec![lo],
                    y: vec![-mag],
                });
            }
            if hi.is_finite() && hi < 1e11 && op.graph_contains(&[hi], &[mag], 1e-9) {
                probes.push(GraphPoint {
                    x: vec![hi],
                    y: vec![mag],
                });
            }
        }
    }
    // Pad with scaled interior probes until the requested count.
    let base = probes.clone();
    let mut scale = 2.0;
    while probes.len() < count && !base.is_empty() {
        for p in &base {
            if probes.len() >= count {
                break;
            }
            let x: Vec<f64> = p.x.iter().map(|v| v * scale).collect();
            let x = op.project_domain_closure(&x);
            if let MinimalSection::Point(y) = op.minimal_section(&x) {
                if y.iter().all(|v| v.is_finite()) && op.graph_contains(&x, &y, 1e-9) {
                    probes.push(GraphPoint { x, y });
                }
            }
        }
        scale *= 1.5;
        if scale > 1e4 {
            break;
        }
    }
    probes.truncate(count);
    if probes.is_empty() {
        return Err(Error::DegenerateDomain(
            "no graph probes could be constructed".into(),
        ));
    }
    Ok(probes)
}
