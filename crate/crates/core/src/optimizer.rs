//! Derivative-free search over setting angles.
//!
//! A coarse grid over the free angles picks a start point, then a compass
//! pattern search refines it, halving the step until it drops below
//! [`MIN_STEP`].

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::angle::normalize;
use crate::error::{Error, Result};
use crate::estimation::{Quadrature, MIN_QUADRATURE_NODES};
use crate::inequalities::{CorrelationSource, ProbabilitySource};
use crate::models::Model;
use crate::parallel::{map_blocks, Workers};

/// Default grid resolution.
pub const DEFAULT_GRID_STEP: f64 = PI / 24.0;
/// Default cap on grid points; the grid is coarsened to stay below it.
pub const DEFAULT_MAX_GRID_POINTS: u64 = 10_000_000;
/// Refinement stops once the step is below this.
pub const MIN_STEP: f64 = 1e-7;
const MAX_ITERATIONS: u64 = 1_000_000;

/// The eight setting angles, in octuple order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "a'")]
    A2,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "b'")]
    B2,
    #[serde(rename = "a_r")]
    Ar,
    #[serde(rename = "a'_r")]
    A2r,
    #[serde(rename = "b_r")]
    Br,
    #[serde(rename = "b'_r")]
    B2r,
}

impl Var {
    pub const ALL: [Var; 8] = [
        Var::A,
        Var::A2,
        Var::B,
        Var::B2,
        Var::Ar,
        Var::A2r,
        Var::Br,
        Var::B2r,
    ];
    pub const ACTUAL: [Var; 4] = [Var::A, Var::A2, Var::B, Var::B2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["a", "a'", "b", "b'", "a_r", "a'_r", "b_r", "b'_r"][self.index()]
    }

    pub fn is_retarded(self) -> bool {
        self.index() >= 4
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Var::ALL
            .into_iter()
            .find(|v| v.name() == s || (s.len() > 1 && v.name().replace('\'', "2") == s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown setting variable {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `E(x,y|x,y)` in every term.
    Chsh,
    RetardedChsh,
    /// Every term conditioned on one retarded pair `(a_r, b_r)`.
    SameRetardedChsh,
    RetardedCh,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Chsh => "chsh",
            ObjectiveKind::RetardedChsh => "retarded_chsh",
            ObjectiveKind::SameRetardedChsh => "same_retarded_chsh",
            ObjectiveKind::RetardedCh => "retarded_ch",
        }
    }

    /// Retarded variables the expression depends on when not tied.
    fn retarded_vars(self) -> &'static [Var] {
        match self {
            ObjectiveKind::Chsh => &[],
            ObjectiveKind::SameRetardedChsh => &[Var::Ar, Var::Br],
            ObjectiveKind::RetardedChsh | ObjectiveKind::RetardedCh => {
                &[Var::Ar, Var::A2r, Var::Br, Var::B2r]
            }
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "chsh" => Ok(ObjectiveKind::Chsh),
            "retarded_chsh" => Ok(ObjectiveKind::RetardedChsh),
            "same_retarded_chsh" => Ok(ObjectiveKind::SameRetardedChsh),
            "retarded_ch" => Ok(ObjectiveKind::RetardedCh),
            other => Err(Error::UnsupportedObjective(format!(
                "unknown inequality {other:?}"
            ))),
        }
    }
}

/// How retarded settings relate to the actual ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetardedPattern {
    /// Retarded angles held at their given values.
    Fixed,
    /// Retarded angles follow the actual ones as the inequality defines.
    TiedToActual,
    /// Retarded angles listed among the free variables are searched too.
    Free,
}

impl FromStr for RetardedPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fixed" => Ok(RetardedPattern::Fixed),
            "tied" | "tied-to-actual" => Ok(RetardedPattern::TiedToActual),
            "free" => Ok(RetardedPattern::Free),
            other => Err(Error::InvalidArgument(format!(
                "unknown retarded pattern {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    fn better(self, x: f64, than: f64) -> bool {
        match self {
            Direction::Minimize => x < than,
            Direction::Maximize => x > than,
        }
    }
}

/// How the objective is computed. Monte Carlo is rejected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    #[default]
    ClosedForm,
    Quadrature {
        nodes: usize,
    },
    MonteCarlo,
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_max_grid_points() -> u64 {
    DEFAULT_MAX_GRID_POINTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub model: Model,
    pub kind: ObjectiveKind,
    pub pattern: RetardedPattern,
    #[serde(default)]
    pub direction: Direction,
    pub free: Vec<Var>,
    /// Values of the variables that are not free (0 when absent).
    #[serde(default)]
    pub values: BTreeMap<Var, f64>,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_max_grid_points")]
    pub max_grid_points: u64,
}

impl ObjectiveSpec {
    /// Minimize over all four actual settings with default search knobs.
    pub fn new(model: Model, kind: ObjectiveKind, pattern: RetardedPattern) -> Self {
        ObjectiveSpec {
            model,
            kind,
            pattern,
            direction: Direction::Minimize,
            free: Var::ACTUAL.to_vec(),
            values: BTreeMap::new(),
            evaluation: Evaluation::ClosedForm,
            grid_step: DEFAULT_GRID_STEP,
            max_grid_points: DEFAULT_MAX_GRID_POINTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unsupported = |m: String| Err(Error::UnsupportedObjective(m));
        if self.evaluation == Evaluation::MonteCarlo {
            return unsupported(
                "Monte Carlo objectives cannot be optimized; use closed_form or quadrature".into(),
            );
        }
        if let Evaluation::Quadrature { nodes } = self.evaluation {
            self.model.require_lhv()?;
            if nodes < MIN_QUADRATURE_NODES {
                return Err(Error::InvalidArgument(format!(
                    "quadrature needs at least {MIN_QUADRATURE_NODES} nodes"
                )));
            }
        }
        if self.free.is_empty() {
            return Err(Error::InvalidArgument("no free variables".into()));
        }
        let mut seen = [false; 8];
        for v in &self.free {
            if std::mem::replace(&mut seen[v.index()], true) {
                return Err(Error::InvalidArgument(format!("variable {v} listed twice")));
            }
        }
        match (self.kind, self.pattern) {
            (ObjectiveKind::Chsh, RetardedPattern::TiedToActual) => {}
            (ObjectiveKind::Chsh, _) => return unsupported("chsh ties every retarded setting to its actual one".into()),
            (ObjectiveKind::RetardedChsh | ObjectiveKind::RetardedCh, RetardedPattern::TiedToActual) => {
                return unsupported(format!(
                    "{} mixes retarded settings across terms; tied-to-actual is defined for chsh and same_retarded_chsh",
                    self.kind.name()
                ))
            }
            _ => {}
        }
        for v in self.free.iter().filter(|v| v.is_retarded()) {
            let allowed =
                self.pattern == RetardedPattern::Free && self.kind.retarded_vars().contains(v);
            if !allowed {
                return Err(Error::InvalidArgument(format!(
                    "{v} cannot be free for {} with this retarded pattern",
                    self.kind.name()
                )));
            }
        }
        if !(self.grid_step.is_finite() && self.grid_step > 0.0 && self.grid_step <= PI) {
            return Err(Error::InvalidArgument(format!(
                "grid step must be in (0, pi], got {}",
                self.grid_step
            )));
        }
        if self.max_grid_points < 2 {
            return Err(Error::InvalidArgument(
                "max_grid_points must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Full octuple from a point, applying the retarded pattern.
    pub fn complete(&self, point: &[f64; 8]) -> [f64; 8] {
        let mut x = *point;
        if self.pattern == RetardedPattern::TiedToActual {
            for i in 0..4 {
                x[4 + i] = x[i];
            }
            if self.kind == ObjectiveKind::SameRetardedChsh {
                x[Var::A2r.index()] = x[Var::A.index()];
                x[Var::B2r.index()] = x[Var::B.index()];
            }
        } else if self.kind == ObjectiveKind::SameRetardedChsh {
            x[Var::A2r.index()] = x[Var::Ar.index()];
            x[Var::B2r.index()] = x[Var::Br.index()];
        }
        x
    }

    fn start_point(&self) -> [f64; 8] {
        let mut x = [0.0; 8];
        for (v, val) in &self.values {
            x[v.index()] = *val;
        }
        x
    }

    /// Objective value at a full assignment of the eight angles.
    pub fn evaluate(&self, point: &[f64; 8]) -> Result<f64> {
        match self.evaluation {
            Evaluation::ClosedForm => expression(
                &crate::inequalities::ClosedForm(self.model),
                self.kind,
                &self.complete(point),
            ),
            Evaluation::Quadrature { nodes } => {
                let q = Quadrature {
                    model: self.model.require_lhv()?,
                    nodes,
                };
                expression(&q, self.kind, &self.complete(point))
            }
            Evaluation::MonteCarlo => {
                Err(Error::UnsupportedObjective("Monte Carlo objective".into()))
            }
        }
    }
}

/// The inequality expression without report bookkeeping; terms are summed
/// in the same order as the report functions.
fn expression<S>(src: &S, kind: ObjectiveKind, x: &[f64; 8]) -> Result<f64>
where
    S: CorrelationSource<Key = f64> + ProbabilitySource<Key = f64>,
{
    let [a, a2, b, b2, ar, a2r, br, b2r] = x;
    let e =
        |p: &f64, q: &f64, pr: &f64, qr: &f64| src.correlation(p, q, pr, qr).map(|c| c.estimate);
    Ok(match kind {
        ObjectiveKind::Chsh => {
            e(a2, b2, a2, b2)? + e(a2, b, a2, b)? + e(a, b2, a, b2)? - e(a, b, a, b)?
        }
        ObjectiveKind::RetardedChsh | ObjectiveKind::SameRetardedChsh => {
            e(a2, b2, a2r, b2r)? + e(a2, b, ar, b2r)? + e(a, b2, a2r, br)? - e(a, b, ar, br)?
        }
        ObjectiveKind::RetardedCh => {
            src.p12(a2, b2, a2r, b2r)?.p + src.p12(a2, b, ar, b2r)?.p + src.p12(a, b2, a2r, br)?.p
                - src.p12(a, b, ar, br)?.p
                - src.p1(a2, b2r)?.p
                - src.p2(b2, a2r)?.p
        }
    })
}

/// One entry of the search trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Optimum {
    /// All eight angles after applying the retarded pattern.
    pub settings: BTreeMap<Var, f64>,
    pub free: Vec<Var>,
    pub value: f64,
    pub evaluations: u64,
    pub grid_points: u64,
    pub grid_step: f64,
    /// Best value after the grid (iteration 0) and after every improving
    /// refinement step.
    pub trace: Vec<TracePoint>,
    /// Whether all angles were shifted so that `a = 0`.
    pub canonical: bool,
}

impl Optimum {
    pub fn angles(&self) -> [f64; 8] {
        Var::ALL.map(|v| self.settings[&v])
    }

    pub fn get(&self, v: Var) -> f64 {
        self.settings[&v]
    }
}

/// Points per free dimension: `2π / grid_step`, reduced until the grid fits
/// in `max_points`.
pub fn grid_points_per_dim(grid_step: f64, dims: usize, max_points: u64) -> u64 {
    let mut m = (TAU / grid_step).round().max(1.0) as u64;
    while m > 1
        && m.checked_pow(dims as u32)
            .is_none_or(|total| total > max_points)
    {
        m -= 1;
    }
    m
}

/// Grid search then compass refinement. See the module docs.
pub fn optimize(spec: &ObjectiveSpec, workers: Workers) -> Result<Optimum> {
    spec.validate()?;
    let dims = spec.free.len();
    let base = spec.start_point();
    let per_dim = grid_points_per_dim(spec.grid_step, dims, spec.max_grid_points);
    let step = TAU / per_dim as f64;
    let total = per_dim.pow(dims as u32);

    let point_at = |mut index: u64| {
        let mut x = base;
        for v in &spec.free {
            x[v.index()] = (index % per_dim) as f64 * step;
            index /= per_dim;
        }
        x
    };
    // Best point per block, first index wins ties; blocks are reduced in order.
    let best_per_block = map_blocks(total, workers, |_, range| -> Result<Option<(f64, u64)>> {
        let mut best: Option<(f64, u64)> = None;
        for i in range {
            let v = spec.evaluate(&point_at(i))?;
            if best.is_none_or(|(b, _)| spec.direction.better(v, b)) {
                best = Some((v, i));
            }
        }
        Ok(best)
    });
    let mut best: Option<(f64, u64)> = None;
    for b in best_per_block {
        if let Some((v, i)) = b? {
            if best.is_none_or(|(bv, _)| spec.direction.better(v, bv)) {
                best = Some((v, i));
            }
        }
    }
    let (mut value, index) = best.ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
    if !value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "objective is not finite on the grid ({value})"
        )));
    }
    let mut x = point_at(index);
    let mut evaluations = total;
    let mut trace = vec![TracePoint {
        iteration: 0,
        best: value,
    }];

    // Compass search: poll ±h along every free axis, move to the best
    // improving neighbour, otherwise halve h.
    let mut h = step;
    let mut iteration = 0;
    while h >= MIN_STEP && iteration < MAX_ITERATIONS {
        iteration += 1;
        let mut improved: Option<([f64; 8], f64)> = None;
        for v in &spec.free {
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[v.index()] += sign * h;
                let fy = spec.evaluate(&y)?;
                evaluations += 1;
                let incumbent = improved.map_or(value, |(_, f)| f);
                if spec.direction.better(fy, incumbent) {
                    improved = Some((y, fy));
                }
            }
        }
        match improved {
            Some((y, fy)) => {
                x = y;
                value = fy;
                trace.push(TracePoint {
                    iteration,
                    best: value,
                });
            }
            None => h *= 0.5,
        }
    }

    // Shift out the global rotation when every actual angle moved freely
    // and the retarded ones follow or are free too.
    let all_actual_free = Var::ACTUAL.iter().all(|v| spec.free.contains(v));
    let rotation_free = all_actual_free
        && match spec.pattern {
            RetardedPattern::TiedToActual => true,
            RetardedPattern::Free => spec
                .kind
                .retarded_vars()
                .iter()
                .all(|v| spec.free.contains(v)),
            RetardedPattern::Fixed => spec.kind.retarded_vars().is_empty(),
        };
    let full = spec.complete(&x);
    let settings_arr = if rotation_free {
        let shift = full[Var::A.index()];
        full.map(|t| normalize(t - shift))
    } else {
        full.map(normalize)
    };
    let reported = spec.evaluate(&settings_arr)?;
    evaluations += 1;
    Ok(Optimum {
        settings: Var::ALL
            .iter()
            .map(|&v| (v, settings_arr[v.index()]))
            .collect(),
        free: spec.free.clone(),
        value: reported,
        evaluations,
        grid_points: total,
        grid_step: step,
        trace,
        canonical: rotation_free,
    })
}
