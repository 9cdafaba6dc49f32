//! Scenario files: `{"schema": 1, "scenarios": [...]}`.

use std::collections::BTreeMap;

use conjulab_core::conjugacy::BudgetLimits;
use conjulab_core::operators::{
    certify_constants, make_block_operator, make_diagonal_operator, make_weighted_shift, RateChoice,
};
use conjulab_core::stability_lab::SampleSpec;
use conjulab_core::{Certificate, LipMap, Matrix, Mode, PerturbationTuple, SpaceFamily, SplitOperator, System, Vector};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorDesc {
    Diagonal {
        weights: Vec<f64>,
    },
    Block {
        #[serde(rename = "P")]
        basis: Vec<Vec<f64>>,
        #[serde(rename = "A_M")]
        stable: Vec<Vec<f64>>,
        #[serde(rename = "A_N")]
        unstable: Vec<Vec<f64>>,
    },
    Shift {
        lambda_minus: f64,
        lambda_plus: f64,
        m0: i64,
    },
}

/// Constant vectors: a list for `ℝⁿ`, an `{"index": value}` object for sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorDesc {
    Dense(Vec<f64>),
    Sparse(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapDesc {
    Zero,
    Const {
        c: VectorDesc,
    },
    Sine {
        i: i64,
        #[serde(default)]
        target: Option<i64>,
        #[serde(rename = "A")]
        amplitude: f64,
        w: f64,
    },
    ClampLinear {
        #[serde(rename = "B")]
        matrix: Vec<Vec<f64>>,
        #[serde(rename = "R")]
        radius: f64,
        #[serde(default)]
        offset: i64,
    },
    Sum {
        args: Vec<MapDesc>,
    },
    Scale {
        alpha: f64,
        arg: Box<MapDesc>,
    },
    /// `f(x + g(x))` for `args = [f, g]`.
    Compose {
        args: Vec<MapDesc>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateDesc {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetDesc {
    pub tau: f64,
    #[serde(rename = "max_K", default = "default_max_k")]
    pub max_k: usize,
    #[serde(default = "default_max_m")]
    pub max_m: usize,
}

fn default_max_k() -> usize {
    BudgetLimits::default().max_k
}

fn default_max_m() -> usize {
    BudgetLimits::default().max_m
}

impl Default for BudgetDesc {
    fn default() -> Self {
        Self {
            tau: 1e-8,
            max_k: default_max_k(),
            max_m: default_max_m(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EpsFraction,
    P,
    #[serde(rename = "K")]
    K,
    M,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::EpsFraction => "eps_fraction",
            SweepAxis::P => "p",
            SweepAxis::K => "K",
            SweepAxis::M => "m",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDesc {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierName {
    Conjugacy,
    InversePair,
    Franks,
    Correspondence,
    SeriesRoundTrip,
    Doubling,
    Contraction,
    FixedPoint,
    Nonuniqueness,
    Uniqueness,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub operator: OperatorDesc,
    /// Tuple length; a single listed map is repeated `p` times.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub perturbations: Vec<MapDesc>,
    #[serde(default)]
    pub perturbations_alt: Option<Vec<MapDesc>>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub delta: f64,
    #[serde(default)]
    pub t: Option<RateDesc>,
    #[serde(default)]
    pub budget: BudgetDesc,
    #[serde(default)]
    pub samples: SampleSpec,
    /// Points for `solve`; sample points are used when empty.
    #[serde(default)]
    pub points: Vec<VectorDesc>,
    #[serde(default)]
    pub verifiers: Option<Vec<VerifierName>>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// Window `K` of the fixed-point vector of a shift.
    #[serde(default = "default_z_window")]
    pub z_window: usize,
    #[serde(default)]
    pub sweep: Option<SweepDesc>,
    /// Candidate `g = h + offset` for the uniqueness witness check.
    #[serde(default)]
    pub witness_offset: Option<VectorDesc>,
}

fn default_mode() -> Mode {
    Mode::A
}

fn default_z_window() -> usize {
    40
}

pub const DEFAULT_VERIFIERS: [VerifierName; 3] =
    [VerifierName::Conjugacy, VerifierName::InversePair, VerifierName::Franks];

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Config = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.scenarios {
            if s.id.is_empty() {
                return Err(CliError::Config("scenario id must not be empty".into()));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(CliError::Config(format!("duplicate scenario id `{}`", s.id)));
            }
            if !(s.budget.tau > 0.0 && s.budget.tau.is_finite()) {
                return Err(CliError::Config(format!("{}: budget.tau must be positive", s.id)));
            }
            if s.samples.radius < 0.0 || !s.samples.radius.is_finite() {
                return Err(CliError::Config(format!("{}: samples.radius must be finite and ≥ 0", s.id)));
            }
            if let Some(sweep) = &s.sweep {
                if sweep.values.is_empty() {
                    return Err(CliError::Config(format!("{}: sweep.values is empty", s.id)));
                }
                let integral = matches!(sweep.axis, SweepAxis::P | SweepAxis::K | SweepAxis::M);
                if integral && sweep.values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0)) {
                    return Err(CliError::Config(format!(
                        "{}: sweep over {} needs positive integers",
                        s.id,
                        sweep.axis.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Scenarios ordered by id.
    pub fn sorted(&self) -> Vec<&Scenario> {
        let mut v: Vec<&Scenario> = self.scenarios.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    Ok(Matrix::from_rows(rows)?)
}

impl OperatorDesc {
    pub fn build(&self) -> Result<SplitOperator, CliError> {
        Ok(match self {
            OperatorDesc::Diagonal { weights } => make_diagonal_operator(weights)?,
            OperatorDesc::Block { basis, stable, unstable } => {
                make_block_operator(&matrix(basis)?, &matrix(stable)?, &matrix(unstable)?)?
            }
            OperatorDesc::Shift {
                lambda_minus,
                lambda_plus,
                m0,
            } => make_weighted_shift(*lambda_minus, *lambda_plus, *m0)?,
        })
    }
}

impl VectorDesc {
    pub fn build(&self, family: SpaceFamily) -> Result<Vector, CliError> {
        match (self, family) {
            (VectorDesc::Dense(v), SpaceFamily::Dense(n)) if v.len() == n => Ok(Vector::dense(v.iter().copied())),
            (VectorDesc::Sparse(m), SpaceFamily::Sparse) => {
                let entries = m
                    .iter()
                    .map(|(k, &v)| {
                        k.trim()
                            .parse::<i64>()
                            .map(|i| (i, v))
                            .map_err(|_| CliError::Config(format!("sparse index `{k}` is not an integer")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Vector::sparse(entries))
            }
            (VectorDesc::Dense(v), SpaceFamily::Dense(n)) => Err(CliError::Config(format!(
                "vector has {} entries, operator acts on ℝ^{n}",
                v.len()
            ))),
            (_, family) => Err(CliError::Config(format!("vector does not match {family}"))),
        }
    }
}

impl MapDesc {
    pub fn build(&self, family: SpaceFamily) -> Result<LipMap, CliError> {
        Ok(match self {
            MapDesc::Zero => LipMap::zero(family),
            MapDesc::Const { c } => LipMap::constant(c.build(family)?)?,
            MapDesc::Sine {
                i,
                target,
                amplitude,
                w,
            } => LipMap::sine(family, *i, target.unwrap_or(*i), *amplitude, *w)?,
            MapDesc::ClampLinear { matrix: b, radius, offset } => {
                LipMap::clamp_linear(family, matrix(b)?, *radius, *offset)?
            }
            MapDesc::Sum { args } => {
                LipMap::sum(args.iter().map(|a| a.build(family)).collect::<Result<_, _>>()?)?
            }
            MapDesc::Scale { alpha, arg } => LipMap::scale(*alpha, arg.build(family)?)?,
            MapDesc::Compose { args } => match args.as_slice() {
                [f, g] => LipMap::compose(f.build(family)?, g.build(family)?)?,
                _ => return Err(CliError::Config("compose takes exactly two args [f, g]".into())),
            },
        })
    }
}

/// Everything a command needs about one scenario.
#[derive(Debug, Clone)]
pub struct Built {
    pub op: SplitOperator,
    pub cert: Certificate,
    pub rate: RateChoice<f64>,
    pub system: System,
    pub alt: Option<System>,
}

impl Scenario {
    pub fn rate(&self) -> RateChoice<f64> {
        match self.t {
            Some(RateDesc::Fixed(t)) => RateChoice::Fixed(t),
            _ => RateChoice::Auto,
        }
    }

    pub fn limits(&self) -> BudgetLimits {
        BudgetLimits {
            max_k: self.budget.max_k,
            max_m: self.budget.max_m,
        }
    }

    /// Operator and certificate only.
    pub fn build_operator(&self) -> Result<(SplitOperator, Certificate), CliError> {
        let op = self.operator.build()?;
        let cert = certify_constants(&op, self.rate())?;
        Ok((op, cert))
    }

    /// Builds a tuple from map descriptors, repeating a single map `p` times.
    pub fn tuple_from(&self, maps: &[MapDesc], family: SpaceFamily, p: Option<usize>) -> Result<PerturbationTuple, CliError> {
        let p = p.or(self.p);
        let maps: Vec<LipMap> = maps.iter().map(|m| m.build(family)).collect::<Result<_, _>>()?;
        let maps = match (p, maps.len()) {
            (Some(p), _) if p == 0 => return Err(CliError::Config(format!("{}: p must be positive", self.id))),
            (None, 0) => vec![LipMap::zero(family)],
            (Some(p), 0) => vec![LipMap::zero(family); p],
            (Some(p), 1) => vec![maps[0].clone(); p],
            (Some(p), n) if n != p => {
                return Err(CliError::Config(format!("{}: p = {p} but {n} perturbations given", self.id)))
            }
            _ => maps,
        };
        Ok(PerturbationTuple::new(maps)?)
    }

    pub fn build(&self) -> Result<Built, CliError> {
        self.build_with_p(None)
    }

    /// Builds the scenario with `p` overriding the configured tuple length.
    pub fn build_with_p(&self, p: Option<usize>) -> Result<Built, CliError> {
        let (op, cert) = self.build_operator()?;
        let family = op.family();
        let tuple = self.tuple_from(&self.perturbations, family, p)?;
        let system = System::new(op.clone(), cert, tuple, self.delta, self.mode)?.with_limits(self.limits());
        let alt = match &self.perturbations_alt {
            None => None,
            Some(maps) => {
                let tuple = self.tuple_from(maps, family, p.or(Some(system.p())))?;
                Some(System::new(op.clone(), cert, tuple, self.delta, self.mode)?.with_limits(self.limits()))
            }
        };
        Ok(Built {
            op,
            cert,
            rate: self.rate(),
            system,
            alt,
        })
    }

    pub fn verifier_list(&self) -> Vec<VerifierName> {
        self.verifiers.clone().unwrap_or_else(|| DEFAULT_VERIFIERS.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_scenario() {
        let text = r#"{"schema": 1, "scenarios": [
            {"id": "d", "operator": {"kind": "diagonal", "weights": [0.5, 2]}, "delta": 0.5,
             "perturbations": [{"kind": "const", "c": [0.1, 0.1]}]}
        ]}"#;
        let config = Config::parse(text).unwrap();
        let built = config.scenarios[0].build().unwrap();
        assert_eq!(built.system.p(), 1);
        assert_eq!(built.system.mode, Mode::A);
        assert!((built.system.tuple.max_sup() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn repeats_single_map() {
        let text = r#"{"schema": 1, "scenarios": [
            {"id": "s", "operator": {"kind": "shift", "lambda_minus": 2, "lambda_plus": 0.5, "m0": 0},
             "delta": 0.5, "p": 3, "t": 0.5,
             "perturbations": [{"kind": "scale", "alpha": 0.5, "arg": {"kind": "const", "c": {"0": 0.1}}}]}
        ]}"#;
        let built = Config::parse(text).unwrap().scenarios[0].build().unwrap();
        assert_eq!(built.system.p(), 3);
        assert!((built.system.tuple.max_sup() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_schema_and_fields() {
        assert!(matches!(Config::parse(r#"{"schema": 2, "scenarios": []}"#), Err(CliError::Config(_))));
        let unknown = r#"{"schema": 1, "scenarios": [
            {"id": "d", "operator": {"kind": "diagonal", "weights": [0.5, 2]}, "delta": 0.5, "bogus": 1}]}"#;
        assert!(matches!(Config::parse(unknown), Err(CliError::Config(_))));
        let dup = r#"{"schema": 1, "scenarios": [
            {"id": "d", "operator": {"kind": "diagonal", "weights": [0.5, 2]}, "delta": 0.5},
            {"id": "d", "operator": {"kind": "diagonal", "weights": [0.5, 2]}, "delta": 0.5}]}"#;
        assert!(matches!(Config::parse(dup), Err(CliError::Config(_))));
    }

    #[test]
    fn auto_rate_tag() {
        let text = r#"{"schema": 1, "scenarios": [
            {"id": "d", "operator": {"kind": "diagonal", "weights": [0.5, 2]}, "delta": 0.5, "t": "auto"}]}"#;
        let s = &Config::parse(text).unwrap().scenarios[0];
        assert_eq!(s.rate(), RateChoice::Auto);
    }

    #[test]
    fn wrong_vector_family() {
        let text = r#"{"schema": 1, "scenarios": [
            {"id": "d", "operator": {"kind": "diagonal", "weights": [0.5, 2]}, "delta": 0.5,
             "perturbations": [{"kind": "const", "c": [0.1]}]}]}"#;
        let s = &Config::parse(text).unwrap().scenarios[0];
        assert!(matches!(s.build(), Err(CliError::Config(_))));
    }
}
