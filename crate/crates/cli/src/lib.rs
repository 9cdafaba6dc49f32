//! Scenario runner for `conjulab-core`: certified constants, pointwise
//! solves, verification reports and parameter sweeps, all driven by one JSON
//! scenario file.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use conjulab_core::operators::{correspondence_lip_constant, epsilon_threshold, franks_constant};
use conjulab_core::stability_lab::{self as lab, BudgetSummary, ResidualReport};
use conjulab_core::{Error, ErrorBudget, LipMap, PerturbationTuple, SpaceFamily, System, Vector};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Built, Config, MapDesc, OperatorDesc, Scenario, SweepAxis, VectorDesc, VerifierName};

/// Scenarios shipped with the binary.
pub const BUNDLED: &str = include_str!("../scenarios/bundled.json");

pub fn bundled_config() -> Config {
    Config::parse(BUNDLED).expect("bundled scenarios are valid")
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{id}: {source}")]
    Scenario {
        id: String,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    fn within(self, id: &str) -> Self {
        match self {
            e @ CliError::Scenario { .. } => e,
            e => CliError::Scenario {
                id: id.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// 2 for configuration and admissibility problems, 3 for infeasible budgets.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::BudgetInfeasible(_)) => 3,
            CliError::Scenario { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Constants,
    Solve,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Overrides every scenario's sample seed.
    pub seed: Option<u64>,
}

/// Lines emitted by a command, plus the number of failed reports.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub lines: Vec<String>,
    pub failures: usize,
}

impl Output {
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRow {
    pub scenario: String,
    pub operator: String,
    pub a: f64,
    pub t: f64,
    pub b: f64,
    pub inv_norm: f64,
    pub n0: usize,
    pub delta: f64,
    pub eps: f64,
    #[serde(rename = "C")]
    pub franks: f64,
    pub corr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRow {
    pub scenario: String,
    pub x: VectorDesc,
    pub h: VectorDesc,
    pub h_error: f64,
    pub h_inverse: VectorDesc,
    pub h_inverse_error: f64,
    pub forward_budget: BudgetSummary,
    pub inverse_budget: BudgetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub axis: String,
    pub value: f64,
    pub max_residual: f64,
    pub certified_bound: f64,
    pub wall_time_ms: f64,
    /// Largest observed ratio of successive iterate differences.
    pub contraction_ratio: Option<f64>,
    pub franks_sup: f64,
    pub franks_bound: f64,
    pub k: usize,
    pub m: usize,
}

pub const SWEEP_HEADER: &str =
    "scenario,axis,value,max_residual,certified_bound,wall_time_ms,contraction_ratio,franks_sup,franks_bound,K,m";

impl SweepRow {
    pub fn csv(&self) -> String {
        let ratio = self.contraction_ratio.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.axis,
            self.value,
            self.max_residual,
            self.certified_bound,
            self.wall_time_ms,
            ratio,
            self.franks_sup,
            self.franks_bound,
            self.k,
            self.m
        )
    }
}

impl From<&Vector> for VectorDesc {
    fn from(v: &Vector) -> Self {
        match v.family() {
            SpaceFamily::Dense(_) => VectorDesc::Dense(v.entries().into_iter().map(|(_, x)| x).collect()),
            SpaceFamily::Sparse => VectorDesc::Sparse(v.entries().into_iter().map(|(i, x)| (i.to_string(), x)).collect()),
        }
    }
}

fn json<S: Serialize>(row: &S) -> String {
    serde_json::to_string(row).expect("report rows serialize")
}

fn with_seed(config: &Config, seed: Option<u64>) -> Config {
    let mut config = config.clone();
    if let Some(seed) = seed {
        for s in &mut config.scenarios {
            s.samples.seed = seed;
        }
    }
    config
}

/// Runs `cmd` on every scenario (ordered by id) and writes `report.jsonl` or
/// `sweep.csv` into `opts.out` when given.
pub fn run(cmd: Command, config: &Config, opts: &RunOptions) -> Result<Output, CliError> {
    config.validate()?;
    let config = with_seed(config, opts.seed);
    let scenarios = config.sorted();
    let output = match cmd {
        Command::Constants => {
            let rows = scenarios.iter().map(|s| constants(s).map_err(|e| e.within(&s.id))).collect::<Result<Vec<_>, _>>()?;
            Output {
                lines: rows.iter().map(json).collect(),
                failures: 0,
            }
        }
        Command::Solve => {
            let built = build_all(&scenarios)?;
            let rows = scenarios
                .par_iter()
                .zip(&built)
                .map(|(s, b)| solve(s, b).map_err(|e| e.within(&s.id)))
                .collect::<Result<Vec<_>, _>>()?;
            Output {
                lines: rows.iter().flatten().map(json).collect(),
                failures: 0,
            }
        }
        Command::Verify => {
            let reports = verify_all(&scenarios)?;
            Output {
                failures: reports.iter().filter(|r| !r.pass).count(),
                lines: reports.iter().map(json).collect(),
            }
        }
        Command::Sweep => {
            let rows = sweep_all(&scenarios)?;
            let mut lines = vec![SWEEP_HEADER.to_string()];
            lines.extend(rows.iter().map(SweepRow::csv));
            Output { lines, failures: 0 }
        }
    };
    if let Some(dir) = &opts.out {
        fs::create_dir_all(dir)?;
        if cmd == Command::Sweep {
            let mut text = String::new();
            for line in &output.lines {
                let _ = writeln!(text, "{line}");
            }
            fs::write(dir.join("sweep.csv"), text)?;
        } else {
            let mut file = OpenOptions::new().create(true).append(true).open(dir.join("report.jsonl"))?;
            for line in &output.lines {
                writeln!(file, "{line}")?;
            }
        }
    }
    Ok(output)
}

/// Validates and builds every scenario before any computation starts.
fn build_all(scenarios: &[&Scenario]) -> Result<Vec<Built>, CliError> {
    scenarios
        .iter()
        .map(|s| {
            let built = s.build().map_err(|e| e.within(&s.id))?;
            info!(
                "{}: {} operator, p = {}, ε = {:.6}, C = {:.6}",
                s.id,
                built.op.kind(),
                built.system.p(),
                built.system.eps,
                built.system.franks_constant()
            );
            Ok(built)
        })
        .collect()
}

pub fn constants(s: &Scenario) -> Result<ConstantsRow, CliError> {
    let (op, cert) = s.build_operator()?;
    Ok(ConstantsRow {
        scenario: s.id.clone(),
        operator: op.kind().to_string(),
        a: cert.a,
        t: cert.t,
        b: cert.b,
        inv_norm: cert.inv_norm,
        n0: cert.n0,
        delta: s.delta,
        eps: epsilon_threshold(&cert, s.delta)?,
        franks: franks_constant(&cert),
        corr: correspondence_lip_constant(&cert, s.delta)?,
    })
}

fn sample_points(s: &Scenario, b: &Built) -> Vec<Vector> {
    lab::generate_samples(b.op.family(), &s.samples, lab::sample_window(&b.op))
}

pub fn solve(s: &Scenario, b: &Built) -> Result<Vec<SolveRow>, CliError> {
    let sys = &b.system;
    let tau = s.budget.tau;
    let points = if s.points.is_empty() {
        sample_points(s, b)
    } else {
        s.points.iter().map(|v| v.build(b.op.family())).collect::<Result<_, _>>()?
    };
    let forward = sys.forward_budget(tau)?;
    let inverse = sys.inverse_budget(tau)?;
    points
        .par_iter()
        .map(|x| {
            let u = sys.solve_forward_defect(x, 0, &forward)?;
            let v = sys.solve_inverse_defect(x, 0, &inverse)?;
            let worst = u.certified_error.max(v.certified_error);
            if worst > tau {
                return Err(Error::BudgetInfeasible(format!("certified error {worst} exceeds τ = {tau}")).into());
            }
            Ok(SolveRow {
                scenario: s.id.clone(),
                x: x.into(),
                h: (&(x + &u.u)).into(),
                h_error: u.certified_error,
                h_inverse: (&(x + &v.v)).into(),
                h_inverse_error: v.certified_error,
                forward_budget: (&forward).into(),
                inverse_budget: (&inverse).into(),
            })
        })
        .collect()
}

pub fn verify_all(scenarios: &[&Scenario]) -> Result<Vec<ResidualReport>, CliError> {
    let built = build_all(scenarios)?;
    let per_scenario = scenarios
        .par_iter()
        .zip(&built)
        .map(|(s, b)| verify(s, b).map_err(|e| e.within(&s.id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_scenario.into_iter().flatten().collect())
}

/// All configured verifiers of one scenario.
pub fn verify(s: &Scenario, b: &Built) -> Result<Vec<ResidualReport>, CliError> {
    let samples = sample_points(s, b);
    let mut out = Vec::new();
    for v in s.verifier_list() {
        debug!("{}: running {v:?}", s.id);
        for report in run_verifier(s, b, v, &samples)? {
            out.push(report.with_scenario(&s.id, s.samples.seed));
        }
    }
    Ok(out)
}

fn manual_report(
    sys: &System,
    verifier: &str,
    residuals: Vec<f64>,
    bound: f64,
    budget: Option<&ErrorBudget>,
    started: Instant,
) -> ResidualReport {
    let max_residual = residuals.iter().copied().fold(0.0, lab::worst);
    ResidualReport {
        scenario: String::new(),
        verifier: verifier.to_string(),
        mode: sys.mode,
        p: sys.p(),
        seed: 0,
        budget: budget.map(Into::into),
        samples: residuals.len(),
        pass: residuals.iter().all(|r| r.is_finite()) && max_residual <= bound,
        max_residual,
        bound,
        residuals,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        extra: BTreeMap::new(),
        notes: Vec::new(),
    }
}

fn shift_fixed_point(s: &Scenario, b: &Built) -> Result<lab::FixedPointVector<f64>, CliError> {
    let split = match s.operator {
        OperatorDesc::Shift { m0, .. } => m0,
        _ => return Err(CliError::Config(format!("{}: fixed points need a shift operator", s.id))),
    };
    let y = Vector::basis(SpaceFamily::Sparse, split);
    Ok(lab::fixed_point_vector(&b.op, &b.cert, &y, s.z_window)?)
}

pub fn run_verifier(s: &Scenario, b: &Built, v: VerifierName, samples: &[Vector]) -> Result<Vec<ResidualReport>, CliError> {
    let sys = &b.system;
    let tau = s.budget.tau;
    Ok(match v {
        VerifierName::Conjugacy => vec![lab::verify_conjugacy(sys, samples, tau)?],
        VerifierName::InversePair => vec![lab::verify_inverse_pair(sys, samples, tau)?],
        VerifierName::Franks => vec![lab::verify_franks_bound(sys, samples, tau)?],
        VerifierName::Correspondence => {
            let other = b.alt.as_ref().ok_or_else(|| {
                CliError::Config(format!("{}: correspondence needs perturbations_alt", s.id))
            })?;
            vec![lab::verify_correspondence_lip(sys, other, samples, tau)?]
        }
        VerifierName::SeriesRoundTrip => {
            let points = lab::generate_torus_points(b.op.family(), sys.p(), &s.samples, lab::sample_window(&b.op));
            let k = sys.forward_budget(tau)?.k;
            let orbit_tol = sys.inverse_budget(tau)?.orbit_tol;
            vec![
                lab::verify_series_round_trip(&b.op, &b.cert, &sys.tuple, &points, k, None)?,
                lab::verify_series_round_trip(&b.op, &b.cert, &sys.tuple, &points, k, Some(orbit_tol))?,
            ]
        }
        VerifierName::Doubling => {
            let budget = sys.forward_budget(tau)?;
            vec![lab::doubling_check(sys, samples, budget.k, budget.m)?]
        }
        VerifierName::Contraction => {
            let started = Instant::now();
            let budget = sys.forward_budget(tau)?;
            let ratios = lab::contraction_ratios(sys, samples, &budget)?;
            let mut report = manual_report(sys, "contraction", ratios, sys.delta + 0.05, Some(&budget), started);
            report.extra.insert("contraction_factor".into(), sys.contraction());
            report
                .notes
                .push("residuals are per-level ratios of successive iterate differences".into());
            vec![report]
        }
        VerifierName::FixedPoint => {
            let started = Instant::now();
            let fp = shift_fixed_point(s, b)?;
            let mut report = manual_report(sys, "fixed_point", vec![fp.residual], fp.residual_bound, None, started);
            report.extra.insert("K".into(), fp.k as f64);
            report.extra.insert("z_norm".into(), fp.z.sup_norm());
            vec![report]
        }
        VerifierName::Nonuniqueness => {
            let fp = shift_fixed_point(s, b)?;
            s.lambda
                .iter()
                .map(|&l| lab::nonuniqueness_family(sys, &fp, l, samples, tau))
                .collect::<Result<_, _>>()?
        }
        VerifierName::Uniqueness => {
            let inner = tau * 1e-3;
            let offset = match &s.witness_offset {
                Some(v) => v.build(b.op.family())?,
                None => Vector::zero(b.op.family()),
            };
            let g = |x: &Vector| match sys.conjugacy_h(x, inner) {
                Ok(h) => &h + &offset,
                Err(_) => x.map_entries(|_| f64::NAN),
            };
            vec![lab::uniqueness_witness_check(sys, &g, samples, tau)?]
        }
    })
}

pub fn sweep_all(scenarios: &[&Scenario]) -> Result<Vec<SweepRow>, CliError> {
    let targets: Vec<&Scenario> = scenarios.iter().copied().filter(|s| s.sweep.is_some()).collect();
    // validate every sweep point before computing any of them
    let plans = targets
        .iter()
        .map(|s| sweep_plan(s).map_err(|e| e.within(&s.id)))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = targets
        .par_iter()
        .zip(&plans)
        .map(|(s, plan)| {
            plan.iter()
                .map(|(value, sys, budget)| sweep_row(s, *value, sys, budget).map_err(|e| e.within(&s.id)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// `(axis value, system, budget)` for every point of a sweep.
fn sweep_plan(s: &Scenario) -> Result<Vec<(f64, System, ErrorBudget)>, CliError> {
    let sweep = s.sweep.as_ref().expect("caller filters sweep scenarios");
    let tau = s.budget.tau;
    let base = s.build()?.system;
    sweep
        .values
        .iter()
        .map(|&value| {
            let sys = match sweep.axis {
                SweepAxis::P => s.build_with_p(Some(value as usize))?.system,
                SweepAxis::EpsFraction => rescaled(&base, value)?,
                SweepAxis::K | SweepAxis::M => base.clone(),
            };
            let budget = match sweep.axis {
                SweepAxis::P | SweepAxis::EpsFraction => sys.forward_budget(tau)?,
                SweepAxis::K | SweepAxis::M => {
                    let planned = sys.forward_budget(tau)?;
                    let (k, m) = if sweep.axis == SweepAxis::K {
                        (value as usize, planned.m)
                    } else {
                        (planned.k, value as usize)
                    };
                    ErrorBudget::for_depths(&sys.cert, sys.contraction(), sys.tuple.max_sup(), k, m)
                }
            };
            Ok((value, sys, budget))
        })
        .collect()
}

/// The same tuple scaled so that `max Lip = fraction·ε`.
fn rescaled(sys: &System, fraction: f64) -> Result<System, CliError> {
    let lip = sys.tuple.max_lip();
    if !(lip > 0.0) {
        return Err(CliError::Config("eps_fraction sweeps need a tuple with positive Lipschitz bound".into()));
    }
    let factor = fraction * sys.eps / lip;
    let maps = sys
        .tuple
        .maps()
        .iter()
        .map(|m| LipMap::scale(factor, m.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let tuple = PerturbationTuple::new(maps)?;
    Ok(System::new(sys.op.clone(), sys.cert, tuple, sys.delta, sys.mode)?.with_limits(sys.limits))
}

/// Conjugacy residuals of `x ↦ x + u₀(x)` computed at a fixed budget, each
/// against `Π·err(x) + err(Tᵖx)` plus round-off, where `Π` bounds the
/// Lipschitz constant of the perturbed composition.
fn sweep_row(s: &Scenario, value: f64, sys: &System, budget: &ErrorBudget) -> Result<SweepRow, CliError> {
    let started = Instant::now();
    let samples = lab::generate_samples(sys.op.family(), &s.samples, lab::sample_window(&sys.op));
    let p = sys.p();
    let norm = sys.op.norm();
    let lip: f64 = sys.tuple.maps().iter().map(|l| norm + l.lip_bound()).product();
    let rows = samples
        .par_iter()
        .map(|x| {
            let a = sys.solve_forward_defect(x, 0, budget)?;
            let tpx = sys.op.power(x, p as i64)?;
            let b = sys.solve_forward_defect(&tpx, 0, budget)?;
            let lhs = lab::compose_perturbed(sys, &(x + &a.u));
            let residual = lhs.distance(&(&tpx + &b.u));
            let scale = tpx.sup_norm() + sys.defect_bound();
            let roundoff = 1e3 * f64::EPSILON * (1.0 + scale) * (1.0 + lip);
            Ok((residual, lip * a.certified_error + b.certified_error + roundoff, a.u.sup_norm()))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let ratios = lab::contraction_ratios(sys, &samples, budget)?;
    let max = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, lab::worst);
    Ok(SweepRow {
        scenario: s.id.clone(),
        axis: s.sweep.as_ref().map_or("", |w| w.axis.name()).to_string(),
        value,
        max_residual: max(|r| r.0),
        certified_bound: max(|r| r.1),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        contraction_ratio: ratios.iter().copied().reduce(lab::worst),
        franks_sup: max(|r| r.2),
        franks_bound: sys.defect_bound(),
        k: budget.k,
        m: budget.m,
    })
}
