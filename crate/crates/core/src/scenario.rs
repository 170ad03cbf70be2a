//! JSON scenarios: set, field, controls, schedule, tolerances, and an optional
//! optimal control problem.
//!
//! Numbers are JSON decimals parsed to the nearest binary double.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ControlPath, ControlSetFamily};
use crate::convergence::{Provenance, Reference};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{certify_constants, CertificationReport, Matrix, PenaltySchedule, SetConstants, Shape, SublevelSet, Vector};
use crate::grid;
use crate::model::{AffineField, Model, Potential};
use crate::ocp::endpoint::EndpointSet;
use crate::ocp::transcription::EndpointCost;
use crate::ocp::{MayerProblem, ReferencePair, SolveMode};
use crate::oracle::MultiplierPath;
use crate::sets::Primitive;

fn validation(field: &str, message: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

fn matrix(field: &str, rows: &[Vec<f64>], n: usize, m: usize) -> Result<Matrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(validation(field, format!("expected a {n}x{m} matrix")));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "params", rename_all = "lowercase")]
pub enum ShapeSpec {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Ellipse { center: Vec<f64>, semi_axes: Vec<f64> },
    Custom { a: Vec<Vec<f64>>, b: Vec<f64>, c: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbar_psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    #[serde(flatten)]
    pub shape: ShapeSpec,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSpec>,
    /// `[lo, hi]` corners of a box containing `C`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[Vec<f64>; 2]>,
}

impl SetSpec {
    pub fn build(&self) -> Result<SublevelSet> {
        let eta = self.eta.ok_or_else(|| validation("set.eta", "missing"))?;
        let shape = match &self.shape {
            ShapeSpec::Interval { lo, hi } => Shape::Interval { lo: *lo, hi: *hi },
            ShapeSpec::Ball { center, radius } => {
                Shape::Ball { center: Vector::from_column_slice(center), radius: *radius }
            }
            ShapeSpec::Ellipse { center, semi_axes } => Shape::Ellipse {
                center: Vector::from_column_slice(center),
                semi_axes: Vector::from_column_slice(semi_axes),
            },
            ShapeSpec::Custom { a, b, c } => {
                Shape::Custom { a: matrix("set.params.a", a, b.len(), b.len())?, b: Vector::from_column_slice(b), c: *c }
            }
        };
        let k = self.constants.clone().unwrap_or_default();
        let constants = SetConstants {
            mbar_psi: k.mbar_psi,
            m_psi: k.m_psi,
            rho: k.rho,
            bbox: self.bbox.as_ref().map(|[lo, hi]| (Vector::from_column_slice(lo), Vector::from_column_slice(hi))),
        };
        SublevelSet::new(shape, eta, constants)
    }
}

/// `f(x, u) = A x + B u + c`; `a` and `b` default to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant { c: Vec<f64> },
    Linear { a: Vec<Vec<f64>>, c: Vec<f64> },
    ControlAffine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<Vec<f64>>>,
        b: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
}

/// `Phi(x) = 1/2 x^T Q x + r^T x`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Zero,
    Quadratic { q: Vec<Vec<f64>>, r: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSetSpec {
    Constant(Primitive),
    Segments { segments: Vec<(f64, Primitive)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSpec {
    Constant {
        constant: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nodes: Option<usize>,
    },
    Nodes(ControlPath),
}

impl PathSpec {
    pub fn build(&self, default_nodes: usize) -> Result<ControlPath> {
        match self {
            PathSpec::Constant { constant, nodes } => {
                let n = nodes.unwrap_or(default_nodes);
                if n < 2 || constant.is_empty() {
                    return Err(validation("control.default", "need two nodes and a nonempty value"));
                }
                Ok(ControlPath::constant(constant, n))
            }
            PathSpec::Nodes(p) => ControlPath::new(p.grid.clone(), p.nodes.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub dim: usize,
    #[serde(rename = "U")]
    pub set: ControlSetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<PathSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Explicit { gammas: Vec<f64> },
    Geometric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma0: Option<f64>,
        count: usize,
    },
}

/// Every tolerance the workflows use; each field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    pub invariance: f64,
    pub bounds: f64,
    pub containment: f64,
    pub sweep: f64,
    pub state_sup: f64,
    pub oracle_step: f64,
    pub oracle_gap: f64,
    pub oracle_xi: f64,
    pub kkt: f64,
    pub cont: f64,
    pub gradient: f64,
    pub nc: f64,
    pub nontriviality: f64,
    pub consistency: f64,
    pub certify_samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            atol: 1e-10,
            rtol: 1e-10,
            invariance: 1e-8,
            bounds: 1e-6,
            containment: 1e-8,
            sweep: 0.05,
            state_sup: 0.01,
            oracle_step: 1e-4,
            oracle_gap: 5e-3,
            oracle_xi: 5e-3,
            kkt: 1e-6,
            cont: 1e-3,
            gradient: 1e-5,
            nc: 1e-3,
            nontriviality: 1e-12,
            consistency: 1e-3,
            certify_samples: 4096,
        }
    }
}

impl Tolerances {
    /// Overrides one field by name (as in `--tol.sweep 0.01`).
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let mut v = serde_json::to_value(&*self)?;
        let map = v.as_object_mut().unwrap();
        if !map.contains_key(name) {
            return Err(validation(&format!("tol.{name}"), "unknown tolerance"));
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(validation(&format!("tol.{name}"), "must be positive and finite"));
        }
        let entry = if map[name].is_u64() && value.fract() == 0.0 { serde_json::json!(value as u64) } else { serde_json::json!(value) };
        map.insert(name.to_string(), entry);
        *self = serde_json::from_value(v).map_err(|e| validation(&format!("tol.{name}"), e.to_string()))?;
        Ok(())
    }
}

/// Closed-form reference solutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticSpec {
    /// 1-D constant field pushing into an end of the interval.
    #[serde(rename = "constant_push_1d")]
    ConstantPush1d,
    /// The start point never moves: `f` is normal to `C` there (or zero).
    Stationary,
    /// Constant field, zero potential, never touching the boundary.
    FreeFlight,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub x0: Vec<f64>,
    pub control: PathSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub mode: SolveMode,
    pub g: CostSpec,
    pub c0: Vec<Primitive>,
    pub c1: Vec<Primitive>,
    pub delta: f64,
    pub delta_o: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Continuation schedule for `solve`; the scenario schedule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
}

fn default_nodes() -> usize {
    101
}

impl ProblemSpec {
    pub fn build(&self, n: usize) -> Result<MayerProblem> {
        let vec_or_zero = |v: &Option<Vec<f64>>, field: &str| -> Result<Vec<f64>> {
            match v {
                Some(v) if v.len() != n => Err(validation(field, "must have the state dimension")),
                Some(v) => Ok(v.clone()),
                None => Ok(vec![0.0; n]),
            }
        };
        let cost = EndpointCost {
            a0: vec_or_zero(&self.g.a0, "problem.g.a0")?,
            a1: vec_or_zero(&self.g.a1, "problem.g.a1")?,
            w0: self.g.w0.unwrap_or(0.0),
            t0: vec_or_zero(&self.g.t0, "problem.g.t0")?,
            w1: self.g.w1.unwrap_or(0.0),
            t1: vec_or_zero(&self.g.t1, "problem.g.t1")?,
        };
        if self.c0.is_empty() || self.c1.is_empty() {
            return Err(validation("problem.c0/c1", "need at least one primitive (use whole for R^n)"));
        }
        let reference = match &self.reference {
            Some(r) => Some(ReferencePair { x0: r.x0.clone(), control: r.control.build(self.nodes)? }),
            None => None,
        };
        Ok(MayerProblem {
            cost,
            c0: EndpointSet::new(self.c0.clone(), false),
            c1: EndpointSet::new(self.c1.clone(), false),
            delta: self.delta,
            delta_o: self.delta_o,
            reference,
            mode: self.mode,
            nodes: self.nodes,
        })
    }
}

/// A scenario file as written on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub set: SetSpec,
    pub field: FieldSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub mbar: Option<f64>,
    pub control: ControlSpec,
    pub x0: Vec<f64>,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic_reference: Option<AnalyticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
}

/// A validated scenario with its built objects.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub model: Model,
    pub x0: Vector,
    pub control: ControlPath,
    pub schedule: PenaltySchedule,
    pub problem: Option<MayerProblem>,
    /// Schedule used by `solve`.
    pub solve_schedule: Option<PenaltySchedule>,
    pub certification: CertificationReport,
}

/// Control nodes of the default path when the file gives only a constant.
pub const DEFAULT_NODES: usize = 101;

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec) -> Result<Scenario> {
        let set = spec.set.build()?;
        let n = set.dim();
        let mbar = spec.mbar.ok_or_else(|| validation("mbar", "missing"))?;
        let m = spec.control.dim;
        if m == 0 {
            return Err(validation("control.dim", "must be positive"));
        }
        let vector = |v: &[f64], field: &str, len: usize| -> Result<Vector> {
            if v.len() != len {
                return Err(validation(field, format!("expected {len} entries")));
            }
            Ok(Vector::from_column_slice(v))
        };
        let field = match &spec.field {
            FieldSpec::Constant { c } => AffineField::constant(vector(c, "field.c", n)?, m),
            FieldSpec::Linear { a, c } => AffineField {
                a: matrix("field.a", a, n, n)?,
                b: Matrix::zeros(n, m),
                c: vector(c, "field.c", n)?,
            },
            FieldSpec::ControlAffine { a, b, c } => AffineField {
                a: match a {
                    Some(a) => matrix("field.a", a, n, n)?,
                    None => Matrix::zeros(n, n),
                },
                b: matrix("field.b", b, n, m)?,
                c: vector(c, "field.c", n)?,
            },
        };
        let potential = match &spec.potential {
            PotentialSpec::Zero => Potential::zero(n),
            PotentialSpec::Quadratic { q, r } => {
                let q = matrix("potential.q", q, n, n)?;
                if (&q - q.transpose()).amax() > 1e-12 {
                    return Err(validation("potential.q", "must be symmetric"));
                }
                Potential { q, r: vector(r, "potential.r", n)? }
            }
        };
        let controls = match &spec.control.set {
            ControlSetSpec::Constant(p) => ControlSetFamily::constant(p.clone()),
            ControlSetSpec::Segments { segments } => ControlSetFamily { segments: segments.clone() },
        };
        let model = Model::new(set, field, potential, controls, mbar)?;
        let certification = certify_constants(&model.set, spec.tolerances.certify_samples)?;
        let (bound, at) = model.sampled_field_bound(4096);
        if bound > mbar * (1.0 + 1e-12) {
            return Err(validation("mbar", format!("sampled |f_Phi| = {bound} at {at:?} exceeds Mbar = {mbar}")));
        }
        let x0 = vector(&spec.x0, "x0", n)?;
        if model.set.psi(&x0) > model.set.boundary_tol {
            return Err(validation("x0", "start point lies outside C"));
        }
        let control = match &spec.control.default {
            Some(p) => p.build(DEFAULT_NODES)?,
            None => ControlPath::constant(&vec![0.0; m], DEFAULT_NODES),
        };
        if control.dim() != m {
            return Err(validation("control.default", "dimension differs from control.dim"));
        }
        if !model.controls.contains_path(&control, 1e-12) {
            return Err(validation("control.default", "path leaves U"));
        }
        let schedule = match &spec.schedule {
            ScheduleSpec::Explicit { gammas } => PenaltySchedule::new(gammas.clone(), mbar, model.set.eta)?,
            ScheduleSpec::Geometric { gamma0, count } => PenaltySchedule::geometric(mbar, model.set.eta, *gamma0, *count)?,
        };
        let problem = match &spec.problem {
            Some(p) => {
                let p = p.build(n)?;
                p.validate(&model)?;
                Some(p)
            }
            None => None,
        };
        let solve_schedule = match spec.problem.as_ref().map(|p| p.gammas.clone()) {
            Some(Some(g)) => Some(PenaltySchedule::new(g, mbar, model.set.eta)?),
            Some(None) => Some(schedule.clone()),
            None => None,
        };
        let out = Scenario { model, x0, control, schedule, problem, solve_schedule, certification, spec };
        if let Some(a) = &out.spec.analytic_reference {
            out.check_analytic(a)?;
        }
        Ok(out)
    }

    pub fn from_json_str(text: &str) -> Result<Scenario> {
        let spec: ScenarioSpec = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        Scenario::from_spec(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).unwrap()
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.spec.tolerances
    }

    fn check_analytic(&self, a: &AnalyticSpec) -> Result<()> {
        let const_path = self.control.nodes.windows(2).all(|w| w[0] == w[1]);
        let field_const = self.model.field.a.amax() == 0.0 && self.model.potential.is_zero() && const_path;
        let set = &self.model.set;
        match a {
            AnalyticSpec::ConstantPush1d => {
                if set.dim() != 1 || !matches!(set.shape, Shape::Interval { .. }) || !field_const {
                    return Err(validation("analytic_reference", "constant_push_1d needs an interval and a constant field"));
                }
            }
            AnalyticSpec::Stationary => {
                let f = self.model.f_phi(&self.x0, &self.control.eval(0.0));
                let g = set.grad_psi(&self.x0);
                let normal = set.on_boundary(&self.x0) && (&f - g.clone() * (f.dot(&g) / g.norm_squared())).norm() < 1e-12 && f.dot(&g) >= 0.0;
                if !field_const || !(f.norm() == 0.0 || normal) {
                    return Err(validation("analytic_reference", "stationary needs f(x0) to vanish or point along the outward normal"));
                }
            }
            AnalyticSpec::FreeFlight => {
                if !field_const {
                    return Err(validation("analytic_reference", "free_flight needs a constant field"));
                }
            }
        }
        Ok(())
    }

    /// The closed-form solution on a uniform grid of `n_out` nodes, if the
    /// scenario declares one.
    pub fn analytic_reference(&self, n_out: usize) -> Result<Option<Reference>> {
        let Some(kind) = &self.spec.analytic_reference else {
            return Ok(None);
        };
        let set = &self.model.set;
        let out = grid::uniform(n_out);
        let f = self.model.f_phi(&self.x0, &self.control.eval(0.0));
        let n = set.dim();
        let mut states = Vec::with_capacity(n_out);
        let mut velocities = Vec::with_capacity(n_out);
        let mut xi = Vec::with_capacity(n_out);
        let mut mask = Vec::with_capacity(n_out);
        match kind {
            AnalyticSpec::ConstantPush1d => {
                let Shape::Interval { lo, hi } = set.shape else { unreachable!() };
                let c = f[0];
                let x0 = self.x0[0];
                let end = if c > 0.0 { hi } else { lo };
                let hit = if c == 0.0 { f64::INFINITY } else { (end - x0) / c };
                let xi_c = if c == 0.0 { 0.0 } else { c / set.grad_psi(&Vector::from_element(1, end))[0] };
                for &t in &out {
                    let on = t >= hit;
                    states.push(vec![if on { end } else { x0 + c * t }]);
                    velocities.push(vec![if on { 0.0 } else { c }]);
                    xi.push(if on { xi_c } else { 0.0 });
                    mask.push(on);
                }
            }
            AnalyticSpec::Stationary => {
                let g = set.grad_psi(&self.x0);
                let on = set.on_boundary(&self.x0);
                let value = if on { f.dot(&g) / g.norm_squared() } else { 0.0 };
                for _ in &out {
                    states.push(self.x0.as_slice().to_vec());
                    velocities.push(vec![0.0; n]);
                    xi.push(value);
                    mask.push(on);
                }
            }
            AnalyticSpec::FreeFlight => {
                for &t in &out {
                    let x = &self.x0 + &f * t;
                    if set.psi(&x) > 0.0 {
                        return Err(validation("analytic_reference", "free flight leaves C"));
                    }
                    states.push(x.as_slice().to_vec());
                    velocities.push(f.as_slice().to_vec());
                    xi.push(0.0);
                    mask.push(false);
                }
            }
        }
        Ok(Some(Reference {
            provenance: Provenance::Analytic,
            trajectory: Trajectory { grid: out.clone(), states, velocities },
            multiplier: MultiplierPath { grid: out, xi, support_mask: mask },
        }))
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SLIDE: &str = r#"{
        "name": "slide",
        "set": {"shape": "interval", "params": {"lo": -1.0, "hi": 1.0}, "eta": 0.9},
        "field": {"kind": "constant", "c": [2.0]},
        "mbar": 2.0,
        "control": {"dim": 1, "U": {"kind": "box", "lo": [-1.0], "hi": [1.0]}},
        "x0": [0.0],
        "schedule": {"gammas": [10.0, 100.0]},
        "analytic_reference": {"kind": "constant_push_1d"}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Scenario::from_json_str(SLIDE).unwrap();
        assert_eq!(s.model.state_dim(), 1);
        assert_eq!(s.schedule.gammas, vec![10.0, 100.0]);
        let again = Scenario::from_json_str(&s.to_json()).unwrap();
        assert_eq!(again.spec, s.spec);
    }

    #[test]
    fn missing_eta_names_field() {
        let text = SLIDE.replace(r#", "eta": 0.9"#, "");
        match Scenario::from_json_str(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "set.eta"),
            other => panic!("{other:?}"),
        }
        let text = SLIDE.replace(r#""mbar": 2.0,"#, "");
        assert!(matches!(Scenario::from_json_str(&text), Err(Error::Validation { field, .. }) if field == "mbar"));
    }

    #[test]
    fn bad_eta_fails_certification() {
        // boundary gradient of the unit interval is 2, so eta = 1.2 breaks 2 eta < 2
        let text = SLIDE.replace(r#""eta": 0.9"#, r#""eta": 1.2"#);
        assert!(matches!(Scenario::from_json_str(&text), Err(Error::CertificationFailure { .. })));
    }

    #[test]
    fn syntax_error_has_position() {
        match Scenario::from_json_str("{\n  \"name\": ,\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn analytic_slide() {
        let s = Scenario::from_json_str(SLIDE).unwrap();
        let r = s.analytic_reference(2001).unwrap().unwrap();
        assert_eq!(r.trajectory.states[1000], vec![1.0]);
        assert_eq!(r.trajectory.states[500], vec![0.5]);
        assert_eq!(r.multiplier.xi[999], 0.0);
        assert_eq!(r.multiplier.xi[1000], 1.0);
    }

    #[test]
    fn tolerance_override() {
        let mut t = Tolerances::default();
        t.set("sweep", 0.01).unwrap();
        assert_eq!(t.sweep, 0.01);
        assert!(t.set("nope", 1.0).is_err());
        t.set("certify_samples", 1000.0).unwrap();
        assert_eq!(t.certify_samples, 1000);
        assert!(t.set("certify_samples", 10.5).is_err());
    }

    #[test]
    fn shipped_corpus_loads() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let s = load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(s.certification.passed());
            assert!(s.problem.is_some());
            let again = Scenario::from_json_str(&s.to_json()).unwrap();
            assert_eq!(again.spec, s.spec);
            names.push(s.spec.name.clone());
        }
        assert!(names.len() >= 6);
    }
}
