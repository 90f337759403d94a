//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured quantities (visible under `--nocapture`). Tolerances are
//! pinned in code; runtime bounds are asserted per criterion.

use bmmv::backward::{
    epsilon_sweep, fit_loglog_slope, solve_bmmvsde, solve_penalized_backward, tree_oracle,
    verify_skorokhod, BackwardInputs, Driver, PenalizationSchedule, PicardParams,
    TerminalCondition, TerminalFn,
};
use bmmv::forward::{simulate_mckean, ForwardCoefficients, InitialSampler};
use bmmv::grid::TimeGrid;
use bmmv::harness::{self, presets, ExperimentConfig, RunMode};
use bmmv::measure::EmpiricalMeasure;
use bmmv::monotone::MonotoneOperator;
use bmmv::pvi::{fd_solve_penalized_pde, FdBoundary, FdGrid};
use bmmv::regression::RegressionBasis;
use bmmv::rng::{uniform, BrownianDriver, SubStream, TreeNoise};
use std::sync::Arc;
use std::time::Instant;

fn report(criterion: &str, elapsed: f64, budget: f64, detail: &str) {
    println!("ACCEPTANCE {criterion}: PASS ({elapsed:.2}s < {budget:.0}s) — {detail}");
    assert!(
        elapsed < budget,
        "{criterion}: runtime {elapsed:.2}s exceeds budget {budget}s"
    );
}

// ---------------------------------------------------------------------------
// 1. Operator suite: 10^4 random (x, x', ε) over all shipped kinds.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_01_operator_suite() {
    let t = Instant::now();
    let rep = harness::validate_operators(10_000, 42);
    assert!(rep.pass, "failed invariants: {:?}", rep.failures());
    let worst = rep
        .kinds
        .iter()
        .flat_map(|k| k.checks.iter())
        .map(|c| c.max_residual / c.tol)
        .fold(0.0f64, f64::max);
    report(
        "1 operator-suite",
        t.elapsed().as_secs_f64(),
        5.0,
        &format!(
            "{} kinds × 6 invariants over 10^4 samples, worst residual at {:.1e} of tolerance",
            rep.kinds.len(),
            worst
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Wasserstein correctness: quantile vs exact assignment; synchronous
//    upper bound dominates exact transport.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_02_wasserstein() {
    let t = Instant::now();
    let u = |case: u64, slot: u64| uniform(777, SubStream::Perturbation, case, 0, slot);
    let mut max_gap = 0.0f64;
    for case in 0..1000u64 {
        // Mixed weights via replication: weighted atoms with multiplicities
        // k/n against the equivalent uniform replicated cloud.
        let n = 2 + (u(case, 0) * 7.0) as usize; // total replicas ≤ 8
        let mut atoms_a = Vec::new();
        let mut weights_a = Vec::new();
        let mut flat_a = Vec::new();
        let mut left = n;
        while left > 0 {
            let k = 1 + (u(case, 100 + left as u64) * (left as f64 - 0.5)) as usize;
            let k = k.min(left);
            let v = 10.0 * u(case, 200 + left as u64) - 5.0;
            atoms_a.push(v);
            weights_a.push(k as f64 / n as f64);
            flat_a.extend(std::iter::repeat(v).take(k));
            left -= k;
        }
        let wsum: f64 = weights_a.iter().sum();
        let last = weights_a.len() - 1;
        weights_a[last] += 1.0 - wsum;
        let pts_b: Vec<f64> = (0..n).map(|i| 10.0 * u(case, 300 + i as u64) - 5.0).collect();
        let weighted = EmpiricalMeasure::new(atoms_a, 1, Some(weights_a)).unwrap();
        let replicated = EmpiricalMeasure::new(flat_a, 1, None).unwrap();
        let other = EmpiricalMeasure::new(pts_b, 1, None).unwrap();
        let quantile = weighted.wasserstein2_1d(&other).unwrap();
        let exact = replicated.wasserstein2_exact(&other).unwrap();
        max_gap = max_gap.max((quantile - exact).abs());
        assert!(
            (quantile - exact).abs() <= 1e-10,
            "case {case}: quantile {quantile} vs assignment {exact}"
        );
    }
    // Multi-dimensional synchronous upper bound vs exact transport.
    let mut checked = 0usize;
    for case in 0..400u64 {
        let n = 2 + (u(case, 1) * 14.0) as usize; // ≤ 16
        let dim = 1 + (u(case, 2) * 3.0) as usize;
        let pa: Vec<f64> = (0..n * dim).map(|i| 4.0 * u(case, 1000 + i as u64) - 2.0).collect();
        let pb: Vec<f64> = (0..n * dim).map(|i| 4.0 * u(case, 2000 + i as u64) - 2.0).collect();
        let a = EmpiricalMeasure::new(pa, dim, None).unwrap();
        let b = EmpiricalMeasure::new(pb, dim, None).unwrap();
        let upper = a.wasserstein2_upper(&b).unwrap();
        let exact = a.wasserstein2_exact(&b).unwrap();
        assert!(upper >= exact - 1e-10, "case {case}: {upper} < {exact}");
        checked += 1;
    }
    report(
        "2 wasserstein",
        t.elapsed().as_secs_f64(),
        10.0,
        &format!(
            "10^3 weighted 1D instances (max gap {max_gap:.1e}), {checked} multi-d upper-bound instances"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Forward mean-field ODE: terminal value e and Euler self-convergence.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_03_forward_mean_field_ode() {
    let t = Instant::now();
    let coeffs = ForwardCoefficients::new(
        Arc::new(|_, _, mu: &EmpiricalMeasure| vec![mu.mean_coord(0)]),
        Arc::new(|_, _, _| vec![0.0]),
        1,
        1,
        true,
        Some(1.0),
    )
    .unwrap();
    let init = InitialSampler::Constant { value: vec![1.0] };
    let run = |steps: usize| {
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let driver = BrownianDriver::new(1, 2, 1);
        let (paths, _) = simulate_mckean(&coeffs, &grid, &init, 1, 2, &driver).unwrap();
        paths.state(0, steps)[0]
    };
    let e = std::f64::consts::E;
    let terminal = run(1000);
    assert!(
        (terminal - e).abs() <= 3e-3,
        "terminal {terminal} vs e {e}"
    );
    let errs: Vec<f64> = [100usize, 200, 400].iter().map(|&s| (run(s) - e).abs()).collect();
    let slope = (errs[0] / errs[2]).ln() / 4.0f64.ln();
    assert!(
        (slope - 1.0).abs() <= 0.3,
        "self-convergence slope {slope}, errors {errs:?}"
    );
    report(
        "3 forward-mean-field-ode",
        t.elapsed().as_secs_f64(),
        30.0,
        &format!("|X_T − e| = {:.2e} at h=1e-3, Euler slope {slope:.3}", (terminal - e).abs()),
    );
}

// ---------------------------------------------------------------------------
// 4. Tree-oracle equality across every shipped preset combination.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_04_tree_oracle_equality() {
    let t = Instant::now();
    let operators: Vec<(&str, MonotoneOperator)> = vec![
        ("zero", MonotoneOperator::zero(1)),
        ("linear(I)", MonotoneOperator::scaled_identity(1, 1.0).unwrap()),
        ("subdiff_abs", MonotoneOperator::subdiff_abs()),
        ("subdiff_hinge", MonotoneOperator::subdiff_hinge()),
        (
            "nc[0,inf)",
            MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap(),
        ),
        (
            "nc[-1,1]",
            MonotoneOperator::normal_cone_interval(-1.0, 1.0).unwrap(),
        ),
        (
            "sum(0.5I+abs)",
            MonotoneOperator::sum(
                MonotoneOperator::scaled_identity(1, 0.5).unwrap(),
                MonotoneOperator::subdiff_abs(),
            )
            .unwrap(),
        ),
    ];
    let drivers: Vec<(&str, Driver)> = vec![
        ("zero", Driver::new(Arc::new(|_, _, _, _, _| vec![0.0]), false, Some(0.0))),
        (
            "linear",
            Driver::new(
                Arc::new(|_, _, y: &[f64], z: &[f64], _: &EmpiricalMeasure| {
                    vec![-0.4 * y[0] + 0.2 * z[0] + 0.1]
                }),
                false,
                Some(0.6),
            ),
        ),
        (
            "mean_y",
            Driver::new(
                Arc::new(|_, _, _, _, theta: &EmpiricalMeasure| vec![0.8 * theta.mean_coord(1)]),
                true,
                Some(0.8),
            ),
        ),
    ];
    let terminals: Vec<(&str, TerminalCondition)> = vec![
        (
            "identity",
            TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0]])),
        ),
        (
            "one",
            TerminalCondition::new(Arc::new(|_: &[f64], _: &EmpiricalMeasure| vec![1.0])),
        ),
        (
            "square",
            TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0] * x[0]])),
        ),
        (
            "relu",
            TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| {
                vec![x[0].max(0.0)]
            })),
        ),
    ];
    let forward = ForwardCoefficients::new(
        Arc::new(|_, _, _| vec![0.0]),
        Arc::new(|_, _, _| vec![1.0]),
        1,
        1,
        false,
        None,
    )
    .unwrap();
    let basis = RegressionBasis::indicator_distinct();
    let picard = PicardParams {
        max_iters: 80,
        tol: 1e-12,
        ..PicardParams::default()
    };
    let mut combos = 0usize;
    let mut worst = 0.0f64;
    for depth in 2..=6usize {
        let grid = TimeGrid::new(0.0, 0.5, depth).unwrap();
        let tree = TreeNoise { depth };
        let np = 1usize << depth;
        let init = InitialSampler::Constant { value: vec![0.1] };
        let (paths, flow) = simulate_mckean(&forward, &grid, &init, 0, np, &tree).unwrap();
        for (op_name, op) in &operators {
            for (dr_name, driver) in &drivers {
                for (tm_name, terminal) in &terminals {
                    let inputs = BackwardInputs {
                        operator: op,
                        x_paths: &paths,
                        x_flow: &flow,
                        driver,
                        terminal,
                        basis: &basis,
                        noise: &tree,
                        dim_y: 1,
                    };
                    let eps = 0.05;
                    let oracle = tree_oracle(depth, &inputs, eps, &picard).unwrap();
                    let sol = solve_bmmvsde(eps, &inputs, &picard).unwrap();
                    let mut gap = 0.0f64;
                    for i in 0..np {
                        for node in 0..=depth {
                            gap = gap.max((oracle.y(i, node)[0] - sol.y(i, node)[0]).abs());
                            gap = gap.max((oracle.k(i, node)[0] - sol.k(i, node)[0]).abs());
                        }
                        for step in 0..depth {
                            gap = gap.max((oracle.z(i, step)[0] - sol.z(i, step)[0]).abs());
                        }
                    }
                    assert!(
                        gap <= 1e-9,
                        "depth {depth}, ({op_name}, {dr_name}, {tm_name}): gap {gap:.2e}"
                    );
                    worst = worst.max(gap);
                    combos += 1;
                }
            }
        }
    }
    report(
        "4 tree-oracle",
        t.elapsed().as_secs_f64(),
        30.0,
        &format!("{combos} (operator, driver, terminal, depth) combinations, worst gap {worst:.1e}"),
    );
}

// ---------------------------------------------------------------------------
// 5. Deterministic monotone backward ODE: Y_0 = e^{-1}.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_05_monotone_backward_ode() {
    let t = Instant::now();
    let cfg = presets::preset_config("penalized-ode").unwrap();
    let artifacts = harness::run(&cfg, RunMode::Solve).unwrap();
    let y0 = artifacts.summary["u0"][0].as_f64().unwrap();
    let target = (-1.0f64).exp();
    assert!(
        (y0 - target).abs() <= 5e-3,
        "Y_0 = {y0} vs e^-1 = {target}"
    );
    report(
        "5 monotone-backward-ode",
        t.elapsed().as_secs_f64(),
        5.0,
        &format!("Y_0 = {y0:.6} vs e^-1 = {target:.6} (|err| = {:.2e})", (y0 - target).abs()),
    );
}

// ---------------------------------------------------------------------------
// 6. Mean-field backward ODE: Y_0 = e, Picard residuals strictly decreasing.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_06_mean_field_backward_ode() {
    let t = Instant::now();
    let cfg = presets::preset_config("mean-field-ode").unwrap();
    let artifacts = harness::run(&cfg, RunMode::Solve).unwrap();
    let y0 = artifacts.summary["u0"][0].as_f64().unwrap();
    let e = std::f64::consts::E;
    assert!((y0 - e).abs() <= 5e-3, "Y_0 = {y0} vs e = {e}");
    let residuals: Vec<f64> = artifacts.summary["diagnostics"]["picard_residuals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(residuals.len() >= 4, "residuals {residuals:?}");
    for w in residuals[1..residuals.len() - 1].windows(2) {
        assert!(
            w[1] < w[0],
            "Picard residuals not strictly decreasing after iteration 2: {residuals:?}"
        );
    }
    report(
        "6 mean-field-backward-ode",
        t.elapsed().as_secs_f64(),
        30.0,
        &format!(
            "Y_0 = {y0:.6} vs e = {e:.6}, {} Picard iterations, residuals strictly decreasing",
            residuals.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Penalization rate: fitted slope ≥ 0.4 on three seeds for the active
//    constraint; inactive constraint indistinguishable from A = Zero.
// ---------------------------------------------------------------------------

struct SweepSetup {
    paths: bmmv::forward::PathBundle,
    flow: bmmv::forward::LawFlow,
    noise: BrownianDriver,
}

fn brownian_cloud(seed: u64, n: usize, steps: usize) -> SweepSetup {
    let forward = ForwardCoefficients::new(
        Arc::new(|_, _, _| vec![0.0]),
        Arc::new(|_, _, _| vec![1.0]),
        1,
        1,
        false,
        None,
    )
    .unwrap();
    let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
    let noise = BrownianDriver::new(seed, n, 1);
    let init = InitialSampler::Constant { value: vec![0.0] };
    let (paths, flow) = simulate_mckean(&forward, &grid, &init, seed, n, &noise).unwrap();
    SweepSetup { paths, flow, noise }
}

#[test]
fn acceptance_07_penalization_rate() {
    let t = Instant::now();
    let n = 10_000;
    let steps = 400;
    let schedule = PenalizationSchedule::new(vec![0.2, 0.1, 0.05, 0.025]).unwrap();
    let basis = RegressionBasis::polynomial(2);
    let driver = Driver::new(Arc::new(|_, _, _, _, _| vec![0.0]), false, Some(0.0));
    let picard = PicardParams::default();
    let active_op = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
    let identity = TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0]]));

    let mut slopes = Vec::new();
    for &seed in &[101u64, 202, 303] {
        let setup = brownian_cloud(seed, n, steps);
        let inputs = BackwardInputs {
            operator: &active_op,
            x_paths: &setup.paths,
            x_flow: &setup.flow,
            driver: &driver,
            terminal: &identity,
            basis: &basis,
            noise: &setup.noise,
            dim_y: 1,
        };
        let rep = epsilon_sweep(&schedule, &inputs, &picard).unwrap();
        let slope = rep.fitted_rate.expect("positive distances");
        assert!(
            slope >= 0.4,
            "seed {seed}: fitted slope {slope} < 0.4 (distances {:?})",
            rep.pair_distances
        );
        slopes.push(slope);
    }

    // Inactive constraint: Φ = 1 + x² keeps Y in the interior; the sweep is
    // statistically indistinguishable from the A = Zero run on shared noise.
    let setup = brownian_cloud(101, n, steps);
    let one_plus_sq = TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| {
        vec![1.0 + x[0] * x[0]]
    }));
    let inputs_unc = BackwardInputs {
        operator: &active_op,
        x_paths: &setup.paths,
        x_flow: &setup.flow,
        driver: &driver,
        terminal: &one_plus_sq,
        basis: &basis,
        noise: &setup.noise,
        dim_y: 1,
    };
    let rep_unc = epsilon_sweep(&schedule, &inputs_unc, &picard).unwrap();
    let zero_op = MonotoneOperator::zero(1);
    let inputs_zero = BackwardInputs {
        operator: &zero_op,
        ..inputs_unc
    };
    let zero_sol = solve_penalized_backward(0.025, &inputs_zero, None).unwrap();
    let d_ref = rep_unc.solutions.last().unwrap().l2_sup_distance(&zero_sol).unwrap();
    let h = 1.0 / steps as f64;
    let sup_y = rep_unc.solutions.last().unwrap().diagnostics.sup_norm_y;
    let noise_floor = 3.0 * (d_ref + 1e-10 * (1.0 + sup_y));
    for (j, d) in rep_unc.pair_distances.iter().enumerate() {
        assert!(
            *d <= noise_floor,
            "inactive pair {j}: distance {d} above noise floor {noise_floor}"
        );
    }
    for sol in &rep_unc.solutions {
        let ktv = sol.diagnostics.k_total_variation;
        assert!(ktv <= 1e-6 + 10.0 * h, "K total variation {ktv}");
    }
    report(
        "7 penalization-rate",
        t.elapsed().as_secs_f64(),
        180.0,
        &format!(
            "active slopes {slopes:.3?} (all ≥ 0.4); inactive distances ≤ {noise_floor:.1e}, K TV ≤ {:.3e}",
            1e-6 + 10.0 * h
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Skorokhod inequality on the active constraint.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_08_skorokhod() {
    let t = Instant::now();
    let n = 10_000;
    let steps = 400;
    let h = 1.0 / steps as f64;
    let schedule = PenalizationSchedule::new(vec![0.2, 0.1, 0.05, 0.025]).unwrap();
    let basis = RegressionBasis::polynomial(2);
    let driver = Driver::new(Arc::new(|_, _, _, _, _| vec![0.0]), false, Some(0.0));
    let op = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
    let terminal = TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0]]));
    let setup = brownian_cloud(404, n, steps);
    let inputs = BackwardInputs {
        operator: &op,
        x_paths: &setup.paths,
        x_flow: &setup.flow,
        driver: &driver,
        terminal: &terminal,
        basis: &basis,
        noise: &setup.noise,
        dim_y: 1,
    };
    let rep = epsilon_sweep(&schedule, &inputs, &PicardParams::default()).unwrap();
    let probes = harness::default_probes(&op, 20).unwrap();
    assert_eq!(probes.len(), 20);
    let reports: Vec<_> = rep
        .solutions
        .iter()
        .map(|s| verify_skorokhod(s, &op, &probes))
        .collect();
    let smallest = reports.last().unwrap();
    let bound = 1e-6 + 10.0 * h;
    assert!(
        smallest.max_violation <= bound,
        "violation {} > {bound}",
        smallest.max_violation
    );
    // Domain violation shrinks along the schedule, within a 2× noise factor,
    // and net over the sweep.
    let dv: Vec<f64> = reports.iter().map(|r| r.domain_violation).collect();
    for w in dv.windows(2) {
        assert!(w[1] <= 2.0 * w[0], "domain violations not shrinking: {dv:?}");
    }
    assert!(dv.last().unwrap() < dv.first().unwrap(), "domain violations {dv:?}");
    report(
        "8 skorokhod",
        t.elapsed().as_secs_f64(),
        60.0,
        &format!(
            "max violation {:.2e} ≤ {bound:.2e} over 20 probes; domain violations {dv:.3?} decreasing",
            smallest.max_violation
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Terminal continuity: stable ratios on shared noise; exact tree ratio.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_09_terminal_continuity() {
    let t = Instant::now();
    let n = 10_000;
    let steps = 200;
    let basis = RegressionBasis::polynomial(2);
    let driver = Driver::new(Arc::new(|_, _, _, _, _| vec![0.0]), false, Some(0.0));
    let op = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
    let terminal = TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0]]));
    let setup = brownian_cloud(505, n, steps);
    let inputs = BackwardInputs {
        operator: &op,
        x_paths: &setup.paths,
        x_flow: &setup.flow,
        driver: &driver,
        terminal: &terminal,
        basis: &basis,
        noise: &setup.noise,
        dim_y: 1,
    };
    let g: TerminalFn = Arc::new(|_: &[f64], _: &EmpiricalMeasure| vec![1.0]);
    let rows = bmmv::backward::terminal_continuity_probe(
        0.025,
        &inputs,
        &PicardParams::default(),
        &g,
        &[0.1, 0.01, 0.001],
    )
    .unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio.unwrap()).collect();
    let rmax = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        rmax / rmin <= 1.5,
        "R(s) varies by more than 50%: {ratios:?}"
    );

    // Tree oracle with constant shift: R = 1 to 1e-9.
    let depth = 5;
    let grid = TimeGrid::new(0.0, 1.0, depth).unwrap();
    let tree = TreeNoise { depth };
    let forward = ForwardCoefficients::new(
        Arc::new(|_, _, _| vec![0.0]),
        Arc::new(|_, _, _| vec![1.0]),
        1,
        1,
        false,
        None,
    )
    .unwrap();
    let init = InitialSampler::Constant { value: vec![0.0] };
    let (paths, flow) = simulate_mckean(&forward, &grid, &init, 0, 1 << depth, &tree).unwrap();
    let zero_op = MonotoneOperator::zero(1);
    let dbasis = RegressionBasis::indicator_distinct();
    let tree_inputs = BackwardInputs {
        operator: &zero_op,
        x_paths: &paths,
        x_flow: &flow,
        driver: &driver,
        terminal: &terminal,
        basis: &dbasis,
        noise: &tree,
        dim_y: 1,
    };
    let tree_rows = bmmv::backward::terminal_continuity_probe(
        0.1,
        &tree_inputs,
        &PicardParams::default(),
        &g,
        &[0.25],
    )
    .unwrap();
    let r_tree = tree_rows[0].ratio.unwrap();
    assert!((r_tree - 1.0).abs() <= 1e-9, "tree ratio {r_tree}");
    report(
        "9 terminal-continuity",
        t.elapsed().as_secs_f64(),
        60.0,
        &format!("R(s) = {ratios:.4?} (spread {:.2}%), tree ratio |R−1| = {:.1e}",
            100.0 * (rmax / rmin - 1.0), (r_tree - 1.0).abs()),
    );
}

// ---------------------------------------------------------------------------
// 10. PVI cross-validation: heat moment and constrained configuration.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_10_pvi_cross_validation() {
    let t = Instant::now();
    // Heat moment, probabilistic side.
    let heat = presets::preset_config("heat-moment").unwrap();
    let pipe = harness::build_pipeline(&heat).unwrap();
    let est = bmmv::pvi::evaluate_u(
        &bmmv::pvi::ValueQuery {
            t: 0.0,
            x: vec![0.0],
            initial: heat.initial.clone(),
        },
        &pipe,
    )
    .unwrap();
    let tol = (3.0 * est.std_error).max(5e-2);
    assert!(
        (est.value[0] - 1.0).abs() <= tol,
        "probabilistic u(0,0) = {} ± {}",
        est.value[0],
        est.std_error
    );
    // Heat moment, FD side.
    let fd = FdGrid {
        x_lo: -6.0,
        x_hi: 6.0,
        n_x: 400,
        boundary: FdBoundary::DirichletFromTerminal,
    };
    let grid = TimeGrid::new(0.0, 1.0, 400).unwrap();
    let mu = EmpiricalMeasure::dirac(vec![0.0]).unwrap();
    let fd_sol = fd_solve_penalized_pde(
        0.1,
        &pipe.forward,
        &pipe.driver,
        &pipe.operator,
        &pipe.terminal,
        &mu,
        &fd,
        &grid,
    )
    .unwrap();
    let u_fd = fd_sol.value_at(0, 0.0);
    assert!((u_fd - 1.0).abs() <= 2e-3, "fd u(0,0) = {u_fd}");

    // Constrained configuration: 11 query points, N = 1e5, h = 1/100,
    // ε = 0.025.
    let cfg = presets::preset_config("compare-constrained").unwrap();
    let artifacts = harness::run(&cfg, RunMode::ComparePde).unwrap();
    let sup = artifacts.summary["sup_error"].as_f64().unwrap();
    assert_eq!(artifacts.summary["rows"].as_array().unwrap().len(), 11);
    assert!(sup <= 5e-2, "constrained sup error {sup}");
    report(
        "10 pvi-cross-validation",
        t.elapsed().as_secs_f64(),
        300.0,
        &format!(
            "heat: prob {:.4}±{:.4}, fd {:.5}; constrained sup over 11 queries {:.3e} ≤ 5e-2",
            est.value[0], est.std_error, u_fd, sup
        ),
    );
}

// ---------------------------------------------------------------------------
// 11. Reproducibility: byte-identical artifacts at 1 thread and max threads.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_11_reproducibility() {
    let t = Instant::now();
    let cases: Vec<(ExperimentConfig, RunMode)> = vec![
        (
            presets::preset_config("constrained-sweep")
                .unwrap()
                .with_overrides(&["particles=2000".into(), "grid.n_steps=50".into()])
                .unwrap(),
            RunMode::SweepEpsilon,
        ),
        (
            presets::preset_config("heat-moment")
                .unwrap()
                .with_overrides(&["particles=4000".into(), "grid.n_steps=25".into()])
                .unwrap(),
            RunMode::Solve,
        ),
        (
            presets::preset_config("mean-field-ode")
                .unwrap()
                .with_overrides(&["grid.n_steps=100".into()])
                .unwrap(),
            RunMode::Solve,
        ),
    ];
    let mut checked_files = 0usize;
    for (cfg, mode) in &cases {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = single.install(|| harness::run(cfg, *mode)).unwrap();
        let many = rayon::ThreadPoolBuilder::new().build().unwrap();
        let b = many.install(|| harness::run(cfg, *mode)).unwrap();
        assert_eq!(a.files.len(), b.files.len());
        for ((name_a, content_a), (name_b, content_b)) in a.files.iter().zip(&b.files) {
            assert_eq!(name_a, name_b);
            assert!(
                content_a.as_bytes() == content_b.as_bytes(),
                "{name_a} differs between thread counts"
            );
            checked_files += 1;
        }
    }
    report(
        "11 reproducibility",
        t.elapsed().as_secs_f64(),
        120.0,
        &format!(
            "{} presets × ({}) files byte-identical at 1 vs max threads",
            cases.len(),
            checked_files
        ),
    );
}
