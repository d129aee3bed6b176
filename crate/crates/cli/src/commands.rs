//! The subcommands, each producing a [`RunReport`].

use std::collections::BTreeMap;

use ltransport::derivation::{Derivation, DerivationOperator};
use ltransport::frame::special_frame_from_family;
use ltransport::linalg::{self, Vector};
use ltransport::transport::richardson_estimate;
use ltransport::{
    change_frame_coeffs, change_frame_matrix, check_axioms, coefficients_from_matrix, holonomy, leibniz_residual,
    metric_drift, solve_fundamental, special_frame, Error, FrameChange, Interval, Matrix, ScalarFunction, Section,
    TransportMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{CliError, Stage};
use crate::model::{from_matrix, Engine, Model};
use crate::report::{Check, DerivativeRow, FrameRow, FrameTable, HolonomyEntry, RunReport, TransportEntry};
use crate::scenario::Scenario;

/// Bounds for the derivation-operator properties in `check`.
pub const LINEARITY_BOUND: f64 = 1e-12;
pub const LEIBNIZ_BOUND: f64 = 1e-9;
pub const ANNIHILATION_BOUND: f64 = 1e-7;
/// Bounds for the special-frame verification in `frame`.
pub const SPECIAL_MATRIX_BOUND: f64 = 1e-8;
pub const SPECIAL_COEFF_BOUND: f64 = 1e-6;
pub const CONSTRUCTION_AGREEMENT_BOUND: f64 = 1e-9;
/// Bound on the coefficient round trip in `roundtrip`.
pub const ROUNDTRIP_BOUND: f64 = 5e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Transport {
        s: Option<f64>,
        t: Option<f64>,
        oracle: bool,
    },
    Check,
    Holonomy {
        reverse: bool,
    },
    Frame {
        s0: Option<f64>,
    },
    Derive,
    Roundtrip,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Transport { .. } => "transport",
            Command::Check => "check",
            Command::Holonomy { .. } => "holonomy",
            Command::Frame { .. } => "frame",
            Command::Derive => "derive",
            Command::Roundtrip => "roundtrip",
        }
    }

    fn arguments(&self) -> BTreeMap<String, serde_json::Value> {
        let mut args = BTreeMap::new();
        match self {
            Command::Transport { s, t, oracle } => {
                if let Some(s) = s {
                    args.insert("s".into(), json!(s));
                }
                if let Some(t) = t {
                    args.insert("t".into(), json!(t));
                }
                args.insert("oracle".into(), json!(oracle));
            }
            Command::Holonomy { reverse } => {
                args.insert("reverse".into(), json!(reverse));
            }
            Command::Frame { s0: Some(s0) } => {
                args.insert("s0".into(), json!(s0));
            }
            _ => {}
        }
        args
    }

    pub fn run(&self, scenario: &Scenario) -> Result<RunReport, CliError> {
        let mut report = RunReport::new(self.name(), self.arguments(), scenario);
        match self {
            Command::Transport { s, t, oracle } => transport(scenario, *s, *t, *oracle, &mut report)?,
            Command::Check => check(scenario, &mut report)?,
            Command::Holonomy { reverse } => run_holonomy(scenario, *reverse, &mut report)?,
            Command::Frame { s0 } => frame(scenario, *s0, &mut report)?,
            Command::Derive => derive(scenario, &mut report)?,
            Command::Roundtrip => roundtrip(scenario, &mut report)?,
        }
        Ok(report)
    }
}

fn transport(
    scenario: &Scenario,
    s: Option<f64>,
    t: Option<f64>,
    oracle: bool,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let pairs = match (s, t) {
        (Some(s), Some(t)) => {
            for (flag, v) in [("--s", s), ("--t", t)] {
                if !scenario.contains(v) {
                    return Err(CliError::schema(
                        flag,
                        format!("{v} lies outside the scenario interval"),
                    ));
                }
            }
            vec![[s, t]]
        }
        (None, None) if scenario.outputs.pairs.is_empty() => vec![[scenario.lo(), scenario.hi()]],
        (None, None) => scenario.outputs.pairs.clone(),
        (Some(_), None) => return Err(CliError::schema("--t", "required together with --s")),
        (None, Some(_)) => return Err(CliError::schema("--s", "required together with --t")),
    };
    let model = Model::build(scenario)?;
    let fine = if oracle {
        Some(Model::build_with_step(scenario, scenario.solver.step / 10.0)?)
    } else {
        None
    };
    let mut worst = 0.0_f64;
    for [s, t] in pairs {
        let h = model.engine.source().matrix(t, s).stage("transport")?;
        let images = scenario
            .outputs
            .vectors
            .iter()
            .map(|v| (&h * Vector::from_column_slice(v)).iter().copied().collect())
            .collect();
        let oracle_discrepancy = match &fine {
            Some(f) => {
                let d = linalg::norm_inf(&(&h - f.engine.source().matrix(t, s).stage("oracle")?));
                worst = worst.max(d);
                Some(d)
            }
            None => None,
        };
        report.transports.push(TransportEntry {
            s,
            t,
            matrix: from_matrix(&h),
            images,
            oracle_discrepancy,
        });
    }
    if oracle {
        report.push(Check::bounded("oracle_discrepancy", worst, scenario.solver.tolerance));
    }
    Ok(())
}

fn random_poly_section(rng: &mut ChaCha8Rng, n: usize, interval: Interval) -> Section {
    let coeffs = (0..n)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    Section::polynomial(coeffs, interval)
}

/// The section `s ↦ H(s, s_u) u`, differentiated numerically.
fn transported(model: &Model, u: Vector, from: f64) -> Section {
    let engine = model.engine.clone();
    let n = model.dim;
    Section::new(n, model.interval, move |s| {
        engine
            .source()
            .matrix(s, from)
            .map(|h| h * &u)
            .unwrap_or_else(|_| Vector::from_element(n, f64::NAN))
    })
    .with_frame(model.coefficients.frame_id().clone())
}

fn check(scenario: &Scenario, report: &mut RunReport) -> Result<(), CliError> {
    let settings = &scenario.solver;
    let tol = settings.tolerance;
    let model = Model::build(scenario)?;
    let axioms = check_axioms(model.engine.source(), settings.samples, settings.seed).stage("axiom check")?;
    report.push(Check::bounded(
        "composition_residual",
        axioms.max_composition_residual,
        tol,
    ));
    report.push(Check::bounded("identity_residual", axioms.max_identity_residual, tol));
    report.push(Check::bounded("inverse_residual", axioms.max_inverse_residual, tol));
    if let Engine::Ode(coarse) = &model.engine {
        let fine = solve_fundamental(
            &model.coefficients,
            model.interval.lo(),
            model.interval,
            settings.step / 2.0,
        )
        .stage("integration")?;
        let estimate = richardson_estimate(coarse, &fine).stage("integration")?;
        report.push(Check::bounded("integration_error_estimate", estimate, tol));
    }

    let d = DerivationOperator::new(model.coefficients.clone());
    let n = model.dim;
    let grid = scenario.outputs.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let s1 = random_poly_section(&mut rng, n, model.interval);
    let s2 = random_poly_section(&mut rng, n, model.interval);
    let (l1, l2) = (rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
    let linearity =
        ltransport::derivation::linearity_residual(&d, l1, &s1, l2, &s2, grid).stage("derivation linearity")?;
    report.push(Check::bounded("derivation_linearity", linearity, LINEARITY_BOUND));

    let f = ScalarFunction::polynomial((0..4).map(|_| rng.random_range(-1.0..=1.0)).collect());
    let leibniz = leibniz_residual(&d, &f, &s1, grid).stage("derivation leibniz")?;
    report.push(Check::bounded("derivation_leibniz", leibniz, LEIBNIZ_BOUND));

    let u = Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..=1.0)));
    let section = transported(&model, u, model.interval.lo());
    let mut annihilation = 0.0_f64;
    for s in model.interval.linspace(grid) {
        annihilation = annihilation.max(linalg::vec_norm_inf(
            &d.apply(&section, s).stage("derivation annihilation")?,
        ));
    }
    report.push(Check::bounded(
        "derivation_annihilation",
        annihilation,
        ANNIHILATION_BOUND,
    ));
    Ok(())
}

fn run_holonomy(scenario: &Scenario, reverse: bool, report: &mut RunReport) -> Result<(), CliError> {
    let model = Model::build(scenario)?;
    let Some((field, path)) = &model.connection else {
        return Err(CliError::schema(
            "coefficients.kind",
            "holonomy needs a christoffel coefficient source",
        ));
    };
    let lp = if reverse { path.reversed() } else { path.clone() };
    let step = scenario.solver.step;
    let open_loop = |e: Error| match e {
        Error::OpenLoop { gap } => CliError::schema("coefficients.path", format!("path is not closed (gap {gap:e})")),
        source => CliError::Numeric {
            stage: "holonomy",
            source,
        },
    };
    let result = holonomy(field, &lp, step).map_err(open_loop)?;
    let fine = holonomy(field, &lp, step / 10.0).map_err(open_loop)?;
    report.push(Check::bounded(
        "integration_discrepancy",
        linalg::norm_inf(&(&result.matrix - &fine.matrix)),
        scenario.solver.tolerance,
    ));
    if field.has_metric() {
        let n = model.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.solver.seed);
        let mut draw = || Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..=1.0)));
        let (u, v) = (draw(), draw());
        let drift = metric_drift(field, &lp, step, &u, &v, scenario.outputs.grid).stage("metric drift")?;
        report.push(Check::bounded("metric_drift", drift, scenario.solver.tolerance));
    }
    report.holonomy = Some(HolonomyEntry {
        reversed: reverse,
        matrix: from_matrix(&result.matrix),
        defect_norm: result.defect_norm,
        orthonormal_matrix: from_matrix(&result.orthonormal_matrix),
        angle: result.angle,
    });
    Ok(())
}

fn frame(scenario: &Scenario, s0: Option<f64>, report: &mut RunReport) -> Result<(), CliError> {
    let s0 = s0.unwrap_or(scenario.lo());
    if !scenario.contains(s0) {
        return Err(CliError::schema(
            "--s0",
            format!("{s0} lies outside the scenario interval"),
        ));
    }
    let model = Model::build(scenario)?;
    let n = model.dim;
    let anchor = Matrix::identity(n, n);
    let change: FrameChange = match (&model.engine, &model.frames) {
        (Engine::Ode(sol), _) => {
            let sf = special_frame(sol, s0, &anchor).stage("special frame")?;
            let agreement = sf
                .cross_check(scenario.outputs.grid)
                .stage("special frame cross-check")?;
            report.push(Check::bounded(
                "construction_agreement",
                agreement,
                CONSTRUCTION_AGREEMENT_BOUND,
            ));
            sf.frame_change()
        }
        (Engine::Frames(_), Some(family)) => special_frame_from_family(family, s0, &anchor).stage("special frame")?,
        (Engine::Frames(_), None) => unreachable!("frame engines always carry their family"),
    };
    let grid = model.interval.linspace(scenario.outputs.grid);
    let mut rows = Vec::with_capacity(grid.len());
    for &s in &grid {
        rows.push(FrameRow {
            s,
            frame: from_matrix(&change.eval(s).stage("special frame")?),
        });
    }
    let frame_id = model.coefficients.frame_id().clone();
    let mut matrix_residual = 0.0_f64;
    for &t in &grid {
        for &s in &grid {
            let h = TransportMatrix::new(
                model.engine.source().matrix(t, s).stage("transport")?,
                t,
                s,
                frame_id.clone(),
            )
            .stage("transport")?;
            let hp = change_frame_matrix(&h, &change).stage("frame change")?;
            matrix_residual = matrix_residual.max(linalg::identity_defect(&hp.matrix));
        }
    }
    report.push(Check::bounded(
        "special_matrix_residual",
        matrix_residual,
        SPECIAL_MATRIX_BOUND,
    ));
    let gamma_prime = change_frame_coeffs(&model.coefficients, &change).stage("frame change")?;
    let mut coeff_residual = 0.0_f64;
    for &s in &grid {
        coeff_residual = coeff_residual.max(linalg::norm_inf(&gamma_prime.eval(s).stage("frame change")?));
    }
    report.push(Check::bounded(
        "special_coefficient_residual",
        coeff_residual,
        SPECIAL_COEFF_BOUND,
    ));
    report.frame = Some(FrameTable { s0, rows });
    Ok(())
}

fn derive(scenario: &Scenario, report: &mut RunReport) -> Result<(), CliError> {
    let model = Model::build(scenario)?;
    let n = model.dim;
    let vectors: Vec<Vector> = if scenario.outputs.vectors.is_empty() {
        (0..n)
            .map(|j| Vector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))
            .collect()
    } else {
        scenario
            .outputs
            .vectors
            .iter()
            .map(|v| Vector::from_column_slice(v))
            .collect()
    };
    let d = DerivationOperator::new(model.coefficients.clone());
    let eps = scenario.solver.fd_step;
    let mut worst = 0.0_f64;
    for (k, v) in vectors.iter().enumerate() {
        let section = Section::constant(v.clone(), model.interval);
        for s in model.interval.linspace(scenario.outputs.grid) {
            let explicit = d.apply(&section, s).stage("derivation")?;
            // One-sided quotient, taken backwards at the right end.
            let e = if s + eps <= model.interval.hi() { eps } else { -eps };
            let pulled = model.engine.source().matrix(s, s + e).stage("transport")? * section.value(s + e);
            let limit = (pulled - section.value(s)) / e;
            worst = worst.max(linalg::vec_norm_inf(&(&limit - &explicit)));
            report.derivatives.push(DerivativeRow {
                s,
                vector: k,
                explicit: explicit.iter().copied().collect(),
                limit: limit.iter().copied().collect(),
            });
        }
    }
    report.push(Check::info("limit_discrepancy", worst));
    Ok(())
}

fn roundtrip(scenario: &Scenario, report: &mut RunReport) -> Result<(), CliError> {
    let model = Model::build(scenario)?;
    let h = scenario.solver.fd_step;
    if 2.0 * h >= model.interval.length() {
        return Err(CliError::schema(
            "solver.fd_step",
            "must be smaller than half the interval",
        ));
    }
    let inner = Interval::new(model.interval.lo() + h, model.interval.hi() - h).stage("roundtrip")?;
    let mut worst = 0.0_f64;
    for s in inner.linspace(scenario.outputs.grid) {
        let extracted = coefficients_from_matrix(model.engine.source(), s, h).stage("coefficient extraction")?;
        let exact = model.coefficients.eval(s).stage("coefficient extraction")?;
        worst = worst.max(linalg::norm_inf(&(extracted - exact)));
    }
    report.push(Check::bounded("roundtrip_error", worst, ROUNDTRIP_BOUND));
    Ok(())
}
