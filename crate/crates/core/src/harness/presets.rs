//! Registries turning config specs into coefficient closures and operators,
//! plus the named experiment presets.

use super::config::{
    DriverSpec, ExperimentConfig, ForwardSpec, OperatorSpec, PenalizationSpec, PicardSpec,
    PviSpec, TerminalSpec,
};
use crate::backward::{Driver, TerminalCondition};
use crate::error::Result;
use crate::forward::{ForwardCoefficients, InitialSampler};
use crate::grid::TimeGrid;
use crate::measure::EmpiricalMeasure;
use crate::monotone::MonotoneOperator;
use crate::pvi::FdBoundary;
use crate::regression::RegressionBasis;
use std::sync::Arc;

pub fn build_forward(spec: &ForwardSpec) -> Result<ForwardCoefficients> {
    match spec {
        ForwardSpec::Zero => ForwardCoefficients::new(
            Arc::new(|_, _, _| vec![0.0]),
            Arc::new(|_, _, _| vec![0.0]),
            1,
            1,
            false,
            Some(0.0),
        ),
        ForwardSpec::Brownian { sigma } => {
            let s = *sigma;
            ForwardCoefficients::new(
                Arc::new(|_, _, _| vec![0.0]),
                Arc::new(move |_, _, _| vec![s]),
                1,
                1,
                false,
                Some(0.0),
            )
        }
        ForwardSpec::MeanOde => ForwardCoefficients::new(
            Arc::new(|_, _, mu: &EmpiricalMeasure| vec![mu.mean_coord(0)]),
            Arc::new(|_, _, _| vec![0.0]),
            1,
            1,
            true,
            Some(1.0),
        ),
        ForwardSpec::Affine {
            b0,
            b_x,
            b_mean,
            s0,
            s_x,
        } => {
            let (b0, b_x, b_mean, s0, s_x) = (*b0, *b_x, *b_mean, *s0, *s_x);
            let measure_dependent = b_mean != 0.0;
            ForwardCoefficients::new(
                Arc::new(move |_, x: &[f64], mu: &EmpiricalMeasure| {
                    let m = if measure_dependent { mu.mean_coord(0) } else { 0.0 };
                    vec![b0 + b_x * x[0] + b_mean * m]
                }),
                Arc::new(move |_, x: &[f64], _| vec![s0 + s_x * x[0]]),
                1,
                1,
                measure_dependent,
                Some(b_x.abs().max(s_x.abs()).max(b_mean.abs())),
            )
        }
    }
}

pub fn build_operator(spec: &OperatorSpec) -> Result<MonotoneOperator> {
    match spec {
        OperatorSpec::Zero => Ok(MonotoneOperator::zero(1)),
        OperatorSpec::Linear { scale } => MonotoneOperator::scaled_identity(1, *scale),
        OperatorSpec::SubdiffAbs => Ok(MonotoneOperator::subdiff_abs()),
        OperatorSpec::SubdiffHinge => Ok(MonotoneOperator::subdiff_hinge()),
        OperatorSpec::NormalConeInterval { lo, hi } => {
            MonotoneOperator::normal_cone_interval(*lo, *hi)
        }
        OperatorSpec::NormalConeBox { lo, hi } => {
            MonotoneOperator::normal_cone_box(lo.clone(), hi.clone())
        }
        OperatorSpec::Sum { scale, inner } => {
            let inner_op = build_operator(inner)?;
            let dim = inner_op.dim();
            MonotoneOperator::sum(MonotoneOperator::scaled_identity(dim, *scale)?, inner_op)
        }
    }
}

/// Joint-law layout used by the shipped drivers: (x, y, z) with scalar
/// state, value and noise, so the Y marginal is coordinate 1.
pub fn build_driver(spec: &DriverSpec) -> Driver {
    match spec {
        DriverSpec::Zero => Driver::new(Arc::new(|_, _, _, _, _| vec![0.0]), false, Some(0.0)),
        DriverSpec::Linear { c_y, c_z, c_const } => {
            let (cy, cz, cc) = (*c_y, *c_z, *c_const);
            Driver::new(
                Arc::new(move |_, _, y: &[f64], z: &[f64], _| vec![cy * y[0] + cz * z[0] + cc]),
                false,
                Some(cy.abs() + cz.abs()),
            )
        }
        DriverSpec::MeanY { scale } => {
            let s = *scale;
            Driver::new(
                Arc::new(move |_, _, _, _, theta: &EmpiricalMeasure| {
                    vec![s * theta.mean_coord(1)]
                }),
                true,
                Some(s.abs()),
            )
        }
    }
}

pub fn build_terminal(spec: &TerminalSpec) -> TerminalCondition {
    match spec {
        TerminalSpec::Identity => {
            TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0]]))
        }
        TerminalSpec::Constant { value } => {
            let v = *value;
            TerminalCondition::new(Arc::new(move |_: &[f64], _: &EmpiricalMeasure| vec![v]))
        }
        TerminalSpec::Square => {
            TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0] * x[0]]))
        }
        TerminalSpec::OnePlusSquare => TerminalCondition::new(Arc::new(
            |x: &[f64], _: &EmpiricalMeasure| vec![1.0 + x[0] * x[0]],
        )),
        TerminalSpec::Relu => {
            TerminalCondition::new(Arc::new(|x: &[f64], _: &EmpiricalMeasure| vec![x[0].max(0.0)]))
        }
        TerminalSpec::Call { strike } => {
            let k = *strike;
            TerminalCondition::new(Arc::new(move |x: &[f64], _: &EmpiricalMeasure| {
                vec![(x[0] - k).max(0.0)]
            }))
        }
    }
}

pub fn preset_names() -> Vec<&'static str> {
    vec![
        "heat-moment",
        "constrained-sweep",
        "unconstrained-sweep",
        "mean-field-ode",
        "penalized-ode",
        "compare-constrained",
    ]
}

/// Named experiment presets; the deterministic starting points of the CLI.
pub fn preset_config(name: &str) -> Option<ExperimentConfig> {
    let base_picard = PicardSpec::default();
    let cfg = match name {
        // u(0,0) = 1 for the heat-equation second moment.
        "heat-moment" => ExperimentConfig {
            seed: 20_240_601,
            particles: 100_000,
            outputs: None,
            grid: TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 100,
            },
            forward: ForwardSpec::Brownian { sigma: 1.0 },
            initial: InitialSampler::Constant { value: vec![0.0] },
            operator: OperatorSpec::Zero,
            driver: DriverSpec::Zero,
            terminal: TerminalSpec::Square,
            basis: RegressionBasis::polynomial(2),
            penalization: PenalizationSpec {
                eps: Some(0.1),
                schedule: None,
            },
            picard: base_picard,
            pvi: Some(PviSpec {
                query_t: 0.0,
                query_xs: vec![0.0],
                fd_x_lo: -6.0,
                fd_x_hi: 6.0,
                fd_n_x: 400,
                fd_boundary: FdBoundary::DirichletFromTerminal,
            }),
            probe: None,
            output_options: Default::default(),
        },
        // Active constraint: Φ(x) = x against the normal cone of [0, ∞).
        "constrained-sweep" => ExperimentConfig {
            seed: 7_312_024,
            particles: 10_000,
            outputs: None,
            grid: TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 400,
            },
            forward: ForwardSpec::Brownian { sigma: 1.0 },
            initial: InitialSampler::Constant { value: vec![0.0] },
            operator: OperatorSpec::NormalConeInterval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            driver: DriverSpec::Zero,
            terminal: TerminalSpec::Identity,
            basis: RegressionBasis::polynomial(2),
            penalization: PenalizationSpec {
                eps: None,
                schedule: Some(vec![0.2, 0.1, 0.05, 0.025]),
            },
            picard: base_picard,
            pvi: None,
            probe: Some(super::config::ProbeSpec {
                scales: vec![0.1, 0.01, 0.001],
            }),
            output_options: Default::default(),
        },
        // Solution stays in the interior: penalization inactive.
        "unconstrained-sweep" => ExperimentConfig {
            seed: 9_182_736,
            particles: 10_000,
            outputs: None,
            grid: TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 400,
            },
            forward: ForwardSpec::Brownian { sigma: 1.0 },
            initial: InitialSampler::Constant { value: vec![0.0] },
            operator: OperatorSpec::NormalConeInterval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            driver: DriverSpec::Zero,
            terminal: TerminalSpec::OnePlusSquare,
            basis: RegressionBasis::polynomial(2),
            penalization: PenalizationSpec {
                eps: None,
                schedule: Some(vec![0.2, 0.1, 0.05, 0.025]),
            },
            picard: base_picard,
            pvi: None,
            probe: None,
            output_options: Default::default(),
        },
        // Mean-field backward ODE: Y_0 = e.
        "mean-field-ode" => ExperimentConfig {
            seed: 5_551_212,
            particles: 256,
            outputs: None,
            grid: TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 1000,
            },
            forward: ForwardSpec::Zero,
            initial: InitialSampler::Constant { value: vec![0.0] },
            operator: OperatorSpec::Zero,
            driver: DriverSpec::MeanY { scale: 1.0 },
            terminal: TerminalSpec::Constant { value: 1.0 },
            basis: RegressionBasis::polynomial(0),
            penalization: PenalizationSpec {
                eps: Some(1e-3),
                schedule: None,
            },
            picard: PicardSpec {
                max_iters: 60,
                tol: 1e-12,
                metric: crate::backward::PicardMetric::Synchronous,
            },
            pvi: None,
            probe: None,
            output_options: Default::default(),
        },
        // Deterministic monotone backward ODE: Y_0 = e^{-1}.
        "penalized-ode" => ExperimentConfig {
            seed: 4_442_223,
            particles: 2,
            outputs: None,
            grid: TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 1000,
            },
            forward: ForwardSpec::Zero,
            initial: InitialSampler::Constant { value: vec![0.0] },
            operator: OperatorSpec::Linear { scale: 1.0 },
            driver: DriverSpec::Zero,
            terminal: TerminalSpec::Constant { value: 1.0 },
            basis: RegressionBasis::polynomial(0),
            penalization: PenalizationSpec {
                eps: Some(1e-3),
                schedule: None,
            },
            picard: base_picard,
            pvi: None,
            probe: None,
            output_options: Default::default(),
        },
        // Constrained PVI cross-validation against the FD oracle.
        "compare-constrained" => ExperimentConfig {
            seed: 31_415_926,
            particles: 100_000,
            outputs: None,
            grid: TimeGrid {
                t0: 0.0,
                t_end: 1.0,
                n_steps: 100,
            },
            forward: ForwardSpec::Brownian { sigma: 1.0 },
            initial: InitialSampler::Constant { value: vec![0.0] },
            operator: OperatorSpec::NormalConeInterval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            driver: DriverSpec::Zero,
            terminal: TerminalSpec::Identity,
            basis: RegressionBasis::polynomial(5),
            penalization: PenalizationSpec {
                eps: Some(0.025),
                schedule: None,
            },
            picard: base_picard,
            pvi: Some(PviSpec {
                query_t: 0.0,
                query_xs: (-5..=5).map(|i| 0.2 * i as f64).collect(),
                fd_x_lo: -6.0,
                fd_x_hi: 6.0,
                fd_n_x: 400,
                fd_boundary: FdBoundary::DirichletFromTerminal,
            }),
            probe: None,
            output_options: Default::default(),
        },
        _ => return None,
    };
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_build() {
        for name in preset_names() {
            let cfg = preset_config(name).unwrap();
            cfg.validate().unwrap();
            build_forward(&cfg.forward).unwrap();
            build_operator(&cfg.operator).unwrap();
            let _ = build_driver(&cfg.driver);
            let _ = build_terminal(&cfg.terminal);
        }
        assert!(preset_config("no-such-preset").is_none());
    }

    #[test]
    fn sum_spec_builds_composite() {
        let spec = OperatorSpec::Sum {
            scale: 0.5,
            inner: Box::new(OperatorSpec::SubdiffAbs),
        };
        let op = build_operator(&spec).unwrap();
        assert_eq!(op.kind_name(), "sum");
    }
}
