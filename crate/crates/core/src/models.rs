//! Local hidden-variable models and the quantum singlet reference.
//!
//! Deterministic models give outcomes `A(a, b_r, λ)` and `B(b, a_r, λ)`: each
//! end sees its own actual setting and only the *retarded* value of the far
//! setting. The singlet model here reproduces `−cos(a − b)` whenever the
//! retarded settings equal the actual ones at both ends.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A ±1 measurement result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn from_sign(plus: bool) -> Self {
        if plus {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn is_plus(self) -> bool {
        self == Outcome::Plus
    }

    /// Probability of `+1` for a deterministic outcome.
    pub fn plus_probability(self) -> f64 {
        if self.is_plus() {
            1.0
        } else {
            0.0
        }
    }
}

impl TryFrom<i64> for Outcome {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, String> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(format!("outcome must be +1 or -1, got {other}")),
        }
    }
}

/// Actual and retarded angles for one correlation cell `E(a, b | a_r, b_r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub a: f64,
    pub b: f64,
    pub a_r: f64,
    pub b_r: f64,
}

impl Settings {
    pub fn new(a: f64, b: f64, a_r: f64, b_r: f64) -> Self {
        Settings { a, b, a_r, b_r }
    }

    /// Retarded settings equal to the actual ones.
    pub fn unretarded(a: f64, b: f64) -> Self {
        Settings {
            a,
            b,
            a_r: a,
            b_r: b,
        }
    }

    pub fn shifted(self, by: f64) -> Self {
        Settings {
            a: self.a + by,
            b: self.b + by,
            a_r: self.a_r + by,
            b_r: self.b_r + by,
        }
    }
}

/// Hidden-variable space: an interval `[lo, hi)` with uniform density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HiddenSpace {
    lo: f64,
    hi: f64,
}

impl HiddenSpace {
    /// `λ ∈ [0, 2π)` with density `1/(2π)`.
    pub const CIRCLE: HiddenSpace = HiddenSpace { lo: 0.0, hi: TAU };

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "empty hidden space [{lo}, {hi})"
            )));
        }
        Ok(HiddenSpace { lo, hi })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn is_circle(&self) -> bool {
        *self == Self::CIRCLE
    }

    pub fn density(&self, lambda: f64) -> f64 {
        if (self.lo..self.hi).contains(&lambda) {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let x = self.lo + u * (self.hi - self.lo);
        // guard against rounding up to the open end
        if x >= self.hi {
            self.lo
        } else {
            x
        }
    }

    /// Midpoint-rule nodes, each carrying the weight `ρ(λ)·Δλ`.
    pub fn midpoint_nodes(&self, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = (self.hi - self.lo) / n as f64;
        (0..n).map(move |i| {
            let x = self.lo + (i as f64 + 0.5) * h;
            (x, self.density(x) * h)
        })
    }
}

/// Deterministic local hidden-variable model.
///
/// Outcome functions see the far setting only through its retarded value.
pub trait DeterministicLhv: Send + Sync {
    fn name(&self) -> &str;

    fn hidden(&self) -> HiddenSpace;

    fn outcome_a(&self, a: f64, b_r: f64, lambda: f64) -> Outcome;

    fn outcome_b(&self, b: f64, a_r: f64, lambda: f64) -> Outcome;

    /// Exact correlation, when the model has one.
    fn closed_form_e(&self, _settings: &Settings) -> Option<f64> {
        None
    }
}

/// Stochastic local model: probabilities of a `+1` outcome at each end.
pub trait StochasticLhv: Send + Sync {
    fn hidden(&self) -> HiddenSpace;

    fn p1(&self, a: f64, b_r: f64, lambda: f64) -> f64;

    fn p2(&self, b: f64, a_r: f64, lambda: f64) -> f64;
}

/// A deterministic model viewed as a stochastic one with `p = (1 + outcome)/2`.
#[derive(Clone, Copy, Debug)]
pub struct Lifted<'a, M: ?Sized>(pub &'a M);

impl<M: DeterministicLhv + ?Sized> StochasticLhv for Lifted<'_, M> {
    fn hidden(&self) -> HiddenSpace {
        self.0.hidden()
    }

    fn p1(&self, a: f64, b_r: f64, lambda: f64) -> f64 {
        self.0.outcome_a(a, b_r, lambda).plus_probability()
    }

    fn p2(&self, b: f64, a_r: f64, lambda: f64) -> f64 {
        self.0.outcome_b(b, a_r, lambda).plus_probability()
    }
}

/// Half-circle offsets `(θ_L, θ_R)` of the singlet model; kept as reals.
pub fn hardy_thetas(a: f64, b: f64, a_r: f64, b_r: f64) -> (f64, f64) {
    let theta_l = -FRAC_PI_4 * (1.0 + (a - b_r).cos());
    let theta_r = FRAC_PI_4 * (1.0 + (a_r - b).cos());
    (theta_l, theta_r)
}

/// `true` iff `λ ∈ [θ, θ + π)` modulo 2π.
fn in_half_circle(lambda: f64, theta: f64) -> bool {
    (lambda - theta).rem_euclid(TAU) < PI
}

pub fn hardy_outcome_a(a: f64, b_r: f64, lambda: f64) -> Outcome {
    let theta_l = -FRAC_PI_4 * (1.0 + (a - b_r).cos());
    Outcome::from_sign(in_half_circle(lambda, theta_l))
}

pub fn hardy_outcome_b(b: f64, a_r: f64, lambda: f64) -> Outcome {
    let theta_r = FRAC_PI_4 * (1.0 + (a_r - b).cos());
    Outcome::from_sign(in_half_circle(lambda, theta_r))
}

/// `E(a, b | a_r, b_r) = −½(cos(a − b_r) + cos(a_r − b))`.
pub fn hardy_closed_form_e(a: f64, b: f64, a_r: f64, b_r: f64) -> f64 {
    -0.5 * ((a - b_r).cos() + (a_r - b).cos())
}

/// The same correlation through the half-circle overlap, `1 − 2|θ_R − θ_L|/π`.
pub fn hardy_overlap_e(a: f64, b: f64, a_r: f64, b_r: f64) -> f64 {
    let (theta_l, theta_r) = hardy_thetas(a, b, a_r, b_r);
    1.0 - 2.0 * (theta_r - theta_l).abs() / PI
}

/// Local singlet model on the circle with half-circle result functions.
#[derive(Clone, Copy, Debug, Default)]
pub struct HardySinglet;

impl DeterministicLhv for HardySinglet {
    fn name(&self) -> &str {
        HARDY_SINGLET
    }

    fn hidden(&self) -> HiddenSpace {
        HiddenSpace::CIRCLE
    }

    fn outcome_a(&self, a: f64, b_r: f64, lambda: f64) -> Outcome {
        hardy_outcome_a(a, b_r, lambda)
    }

    fn outcome_b(&self, b: f64, a_r: f64, lambda: f64) -> Outcome {
        hardy_outcome_b(b, a_r, lambda)
    }

    fn closed_form_e(&self, s: &Settings) -> Option<f64> {
        Some(hardy_closed_form_e(s.a, s.b, s.a_r, s.b_r))
    }
}

/// Singlet correlation for spin measurements in the xy-plane.
pub fn quantum_e(a: f64, b: f64) -> f64 {
    -(a - b).cos()
}

/// Joint outcome distribution of the singlet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointProbs {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl JointProbs {
    pub fn total(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    pub fn correlation(&self) -> f64 {
        self.pp + self.mm - self.pm - self.mp
    }
}

pub fn quantum_joint_probs(a: f64, b: f64) -> JointProbs {
    let c = (a - b).cos();
    let same = (1.0 - c) / 4.0;
    let diff = (1.0 + c) / 4.0;
    JointProbs {
        pp: same,
        pm: diff,
        mp: diff,
        mm: same,
    }
}

pub fn quantum_sample_pair<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (Outcome, Outcome) {
    PairSampler::quantum(a, b).sample(rng).0.into_pair()
}

pub const HARDY_SINGLET: &str = "hardy-singlet";
pub const QUANTUM_SINGLET: &str = "quantum-singlet";

/// Models addressable by name from configs and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    HardySinglet,
    QuantumSinglet,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::HardySinglet, Model::QuantumSinglet];

    pub fn name(self) -> &'static str {
        match self {
            Model::HardySinglet => HARDY_SINGLET,
            Model::QuantumSinglet => QUANTUM_SINGLET,
        }
    }

    /// Local models expose λ functions; the quantum reference does not.
    pub fn is_local(self) -> bool {
        self.as_lhv().is_some()
    }

    pub fn as_lhv(self) -> Option<&'static dyn DeterministicLhv> {
        match self {
            Model::HardySinglet => Some(&HardySinglet),
            Model::QuantumSinglet => None,
        }
    }

    pub fn require_lhv(self) -> Result<&'static dyn DeterministicLhv> {
        self.as_lhv()
            .ok_or_else(|| Error::UnsupportedModel(self.name().to_string()))
    }

    /// Closed-form correlation. The quantum reference ignores the retarded
    /// settings.
    pub fn correlation(self, s: &Settings) -> f64 {
        match self {
            Model::HardySinglet => hardy_closed_form_e(s.a, s.b, s.a_r, s.b_r),
            Model::QuantumSinglet => quantum_e(s.a, s.b),
        }
    }

    /// Closed-form probability of `+1` at both ends.
    pub fn joint_plus(self, s: &Settings) -> f64 {
        match self {
            Model::HardySinglet => (1.0 + self.correlation(s)) / 4.0,
            Model::QuantumSinglet => quantum_joint_probs(s.a, s.b).pp,
        }
    }

    /// Single-end probability of `+1`; both models have uniform marginals.
    pub fn marginal_plus(self) -> f64 {
        0.5
    }

    pub fn sampler(self, s: &Settings) -> PairSampler {
        match self {
            Model::HardySinglet => PairSampler::hardy(s),
            Model::QuantumSinglet => PairSampler::quantum(s.a, s.b),
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            HARDY_SINGLET | "hardy" => Ok(Model::HardySinglet),
            QUANTUM_SINGLET | "quantum" => Ok(Model::QuantumSinglet),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One sampled trial: both outcomes plus λ for local models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledPair {
    pub a: Outcome,
    pub b: Outcome,
}

impl SampledPair {
    pub fn product(self) -> i8 {
        self.a.value() * self.b.value()
    }

    pub fn into_pair(self) -> (Outcome, Outcome) {
        (self.a, self.b)
    }
}

/// Per-cell sampler with the setting-dependent constants precomputed.
#[derive(Clone, Copy, Debug)]
pub enum PairSampler {
    Hardy {
        theta_l: f64,
        theta_r: f64,
    },
    /// Cumulative thresholds for (++), (+−), (−+); (−−) takes the rest.
    Quantum {
        cumulative: [f64; 3],
    },
}

impl PairSampler {
    pub fn hardy(s: &Settings) -> Self {
        let (theta_l, theta_r) = hardy_thetas(s.a, s.b, s.a_r, s.b_r);
        PairSampler::Hardy { theta_l, theta_r }
    }

    pub fn quantum(a: f64, b: f64) -> Self {
        let p = quantum_joint_probs(a, b);
        PairSampler::Quantum {
            cumulative: [p.pp, p.pp + p.pm, p.pp + p.pm + p.mp],
        }
    }

    /// Draws one trial; returns λ for local models.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (SampledPair, Option<f64>) {
        match *self {
            PairSampler::Hardy { theta_l, theta_r } => {
                let lambda = HiddenSpace::CIRCLE.sample(rng);
                let pair = SampledPair {
                    a: Outcome::from_sign(in_half_circle(lambda, theta_l)),
                    b: Outcome::from_sign(in_half_circle(lambda, theta_r)),
                };
                (pair, Some(lambda))
            }
            PairSampler::Quantum { cumulative } => {
                let u: f64 = rng.random();
                let (a, b) = if u < cumulative[0] {
                    (true, true)
                } else if u < cumulative[1] {
                    (true, false)
                } else if u < cumulative[2] {
                    (false, true)
                } else {
                    (false, false)
                };
                let pair = SampledPair {
                    a: Outcome::from_sign(a),
                    b: Outcome::from_sign(b),
                };
                (pair, None)
            }
        }
    }
}
