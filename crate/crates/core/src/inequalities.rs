//! CHSH and Clauser–Horne expressions with retarded settings.
//!
//! Evaluators read correlations from a [`CorrelationSource`] (or joint
//! probabilities from a [`ProbabilitySource`]) keyed either by angle (analytic
//! sources) or by label id (tables estimated from trial logs), and produce an
//! [`InequalityReport`] with a verdict.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::{Model, Settings};

/// Slack for floating-point rounding when comparing a value against a bound.
pub const ROUNDING_SLACK: f64 = 1e-9;

/// Number of combined standard errors tolerated before calling a violation.
pub const SIGMA_BAND: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Analytic,
    MonteCarlo,
}

/// One correlation cell `E(a, b | a_r, b_r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub estimate: f64,
    pub standard_error: f64,
    pub count: Option<u64>,
}

impl CellValue {
    pub fn exact(estimate: f64) -> Self {
        CellValue {
            estimate,
            standard_error: 0.0,
            count: None,
        }
    }
}

/// Anything that can supply `E(a, b | a_r, b_r)`.
pub trait CorrelationSource {
    type Key: Clone + fmt::Display + Serialize;

    fn origin(&self) -> Origin;

    fn correlation(
        &self,
        a: &Self::Key,
        b: &Self::Key,
        a_r: &Self::Key,
        b_r: &Self::Key,
    ) -> Result<CellValue>;
}

/// A probability estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbValue {
    pub p: f64,
    pub standard_error: f64,
}

impl ProbValue {
    pub fn exact(p: f64) -> Self {
        ProbValue {
            p,
            standard_error: 0.0,
        }
    }
}

/// Joint and single-end probabilities of a `+1` outcome.
///
/// The single-end probabilities receive the far retarded setting; sources
/// following the retarded-independent convention ignore it.
pub trait ProbabilitySource {
    type Key: Clone + fmt::Display + Serialize;

    fn origin(&self) -> Origin;

    fn p12(
        &self,
        a: &Self::Key,
        b: &Self::Key,
        a_r: &Self::Key,
        b_r: &Self::Key,
    ) -> Result<ProbValue>;

    fn p1(&self, a: &Self::Key, b_r: &Self::Key) -> Result<ProbValue>;

    fn p2(&self, b: &Self::Key, a_r: &Self::Key) -> Result<ProbValue>;
}

/// Measurement settings `a, a', b, b'` and their retarded counterparts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Octuple<K> {
    pub a: K,
    #[serde(rename = "a'")]
    pub a2: K,
    pub b: K,
    #[serde(rename = "b'")]
    pub b2: K,
    pub a_r: K,
    #[serde(rename = "a'_r")]
    pub a2_r: K,
    pub b_r: K,
    #[serde(rename = "b'_r")]
    pub b2_r: K,
}

impl<K: Clone> Octuple<K> {
    /// Retarded settings fixed at `(a, b)` for every term.
    pub fn same_retarded(a: K, a2: K, b: K, b2: K) -> Self {
        Octuple {
            a_r: a.clone(),
            a2_r: a.clone(),
            b_r: b.clone(),
            b2_r: b.clone(),
            a,
            a2,
            b,
            b2,
        }
    }

    /// Each retarded setting equal to its own actual setting.
    pub fn tied(a: K, a2: K, b: K, b2: K) -> Self {
        Octuple {
            a_r: a.clone(),
            a2_r: a2.clone(),
            b_r: b.clone(),
            b2_r: b2.clone(),
            a,
            a2,
            b,
            b2,
        }
    }

    pub fn to_array(&self) -> [K; 8] {
        [
            self.a.clone(),
            self.a2.clone(),
            self.b.clone(),
            self.b2.clone(),
            self.a_r.clone(),
            self.a2_r.clone(),
            self.b_r.clone(),
            self.b2_r.clone(),
        ]
    }

    pub fn from_array([a, a2, b, b2, a_r, a2_r, b_r, b2_r]: [K; 8]) -> Self {
        Octuple {
            a,
            a2,
            b,
            b2,
            a_r,
            a2_r,
            b_r,
            b2_r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Upper,
}

/// Result of evaluating one inequality.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub verdict: Verdict,
    /// Signed distance beyond the nearest bound in combined-SE units
    /// (negative inside the bounds, infinite for exact inputs).
    #[serde(serialize_with = "serialize_extended_f64")]
    pub margin_sigma: f64,
    pub combined_se: f64,
    /// The bound the value lies beyond, if any.
    pub beyond: Option<Bound>,
    pub origin: Origin,
    pub inputs: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_independent: Option<bool>,
}

fn serialize_extended_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

impl InequalityReport {
    pub fn new(
        name: &str,
        value: f64,
        (lower, upper): (f64, f64),
        combined_se: f64,
        origin: Origin,
        inputs: serde_json::Value,
    ) -> Self {
        let distance = (value - upper).max(lower - value);
        let beyond = if value > upper {
            Some(Bound::Upper)
        } else if value < lower {
            Some(Bound::Lower)
        } else {
            None
        };
        let tol = SIGMA_BAND * combined_se;
        let verdict = if distance <= ROUNDING_SLACK {
            Verdict::Satisfied
        } else if distance <= tol + ROUNDING_SLACK {
            Verdict::Inconclusive
        } else {
            Verdict::Violated
        };
        let margin_sigma = if combined_se > 0.0 {
            distance / combined_se
        } else if distance > 0.0 {
            f64::INFINITY
        } else if distance < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        InequalityReport {
            name: name.to_string(),
            value,
            lower,
            upper,
            verdict,
            margin_sigma,
            combined_se,
            beyond,
            origin,
            inputs,
            weights_independent: None,
        }
    }

    pub fn is_violated(&self) -> bool {
        self.verdict == Verdict::Violated
    }
}

pub const CHSH_BOUNDS: (f64, f64) = (-2.0, 2.0);
pub const CH_BOUNDS: (f64, f64) = (-1.0, 0.0);

fn checked_cell<S: CorrelationSource>(
    src: &S,
    a: &S::Key,
    b: &S::Key,
    a_r: &S::Key,
    b_r: &S::Key,
) -> Result<CellValue> {
    let cell = src.correlation(a, b, a_r, b_r)?;
    if !(cell.estimate.abs() <= 1.0 + ROUNDING_SLACK) || !(cell.standard_error >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation ({a},{b}|{a_r},{b_r}) = {} ± {} is not a valid estimate",
            cell.estimate, cell.standard_error
        )));
    }
    Ok(cell)
}

fn signed_sum(terms: &[(f64, CellValue)]) -> (f64, f64) {
    let value = terms.iter().map(|(s, c)| s * c.estimate).sum();
    let var: f64 = terms.iter().map(|(_, c)| c.standard_error.powi(2)).sum();
    (value, var.sqrt())
}

fn inputs_json<K: Serialize>(inputs: &K) -> serde_json::Value {
    serde_json::to_value(inputs).unwrap_or(serde_json::Value::Null)
}

/// `E(a',b'|a'_r,b'_r) + E(a',b|a_r,b'_r) + E(a,b'|a'_r,b_r) − E(a,b|a_r,b_r)`,
/// bounded by ±2 for local models.
pub fn retarded_chsh<S: CorrelationSource>(
    src: &S,
    o: &Octuple<S::Key>,
) -> Result<InequalityReport> {
    chsh_terms(src, o, "retarded_chsh")
}

fn chsh_terms<S: CorrelationSource>(
    src: &S,
    o: &Octuple<S::Key>,
    name: &str,
) -> Result<InequalityReport> {
    let terms = [
        (1.0, checked_cell(src, &o.a2, &o.b2, &o.a2_r, &o.b2_r)?),
        (1.0, checked_cell(src, &o.a2, &o.b, &o.a_r, &o.b2_r)?),
        (1.0, checked_cell(src, &o.a, &o.b2, &o.a2_r, &o.b_r)?),
        (-1.0, checked_cell(src, &o.a, &o.b, &o.a_r, &o.b_r)?),
    ];
    let (value, se) = signed_sum(&terms);
    Ok(InequalityReport::new(
        name,
        value,
        CHSH_BOUNDS,
        se,
        src.origin(),
        inputs_json(o),
    ))
}

/// Retarded CHSH with every term conditioned on retarded settings `(a, b)`.
pub fn same_retarded_chsh<S: CorrelationSource>(
    src: &S,
    a: &S::Key,
    a2: &S::Key,
    b: &S::Key,
    b2: &S::Key,
) -> Result<InequalityReport> {
    let o = Octuple::same_retarded(a.clone(), a2.clone(), b.clone(), b2.clone());
    chsh_terms(src, &o, "same_retarded_chsh")
}

/// Ordinary CHSH where each term has retarded settings equal to its actual
/// ones, `E(x,y|x,y)`.
pub fn standard_chsh<S: CorrelationSource>(
    src: &S,
    a: &S::Key,
    a2: &S::Key,
    b: &S::Key,
    b2: &S::Key,
) -> Result<InequalityReport> {
    let terms = [
        (1.0, checked_cell(src, a2, b2, a2, b2)?),
        (1.0, checked_cell(src, a2, b, a2, b)?),
        (1.0, checked_cell(src, a, b2, a, b2)?),
        (-1.0, checked_cell(src, a, b, a, b)?),
    ];
    let (value, se) = signed_sum(&terms);
    Ok(InequalityReport::new(
        "chsh",
        value,
        CHSH_BOUNDS,
        se,
        src.origin(),
        inputs_json(&Octuple::tied(a.clone(), a2.clone(), b.clone(), b2.clone())),
    ))
}

/// Both retarded settings equal to the actual ones: `2·E(a,b|a,b)`.
pub fn both_equal_reduction<S: CorrelationSource>(
    src: &S,
    a: &S::Key,
    b: &S::Key,
) -> Result<InequalityReport> {
    let cell = checked_cell(src, a, b, a, b)?;
    #[derive(Serialize)]
    struct Inputs<'k, K> {
        a: &'k K,
        b: &'k K,
        a_r: &'k K,
        b_r: &'k K,
    }
    Ok(InequalityReport::new(
        "both_equal_reduction",
        2.0 * cell.estimate,
        CHSH_BOUNDS,
        2.0 * cell.standard_error,
        src.origin(),
        inputs_json(&Inputs {
            a,
            b,
            a_r: a,
            b_r: b,
        }),
    ))
}

/// Retarded CHSH with `a' = a` and `a_r = a'_r = a`.
pub fn one_end_equal_chsh<S: CorrelationSource>(
    src: &S,
    a: &S::Key,
    b: &S::Key,
    b2: &S::Key,
    b_r: &S::Key,
    b2_r: &S::Key,
) -> Result<InequalityReport> {
    let o = Octuple {
        a: a.clone(),
        a2: a.clone(),
        b: b.clone(),
        b2: b2.clone(),
        a_r: a.clone(),
        a2_r: a.clone(),
        b_r: b_r.clone(),
        b2_r: b2_r.clone(),
    };
    chsh_terms(src, &o, "one_end_equal_chsh")
}

/// A weight `p(a_r, b_r)` on one retarded pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetardedWeight<K> {
    pub a_r: K,
    pub b_r: K,
    pub weight: f64,
}

/// CHSH on `E_av(x, y) = Σ p(a_r, b_r)·E(x, y | a_r, b_r)`.
///
/// The bound only applies when the weights do not depend on the actual
/// settings; the caller asserts this and the flag is carried in the report.
pub fn averaged_chsh<S: CorrelationSource>(
    src: &S,
    weights: &[RetardedWeight<S::Key>],
    a: &S::Key,
    a2: &S::Key,
    b: &S::Key,
    b2: &S::Key,
    weights_independent: bool,
) -> Result<InequalityReport> {
    if weights.iter().any(|w| !(w.weight >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().map(|w| w.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSum(total));
    }
    let averaged = |x: &S::Key, y: &S::Key| -> Result<CellValue> {
        let mut e = 0.0;
        let mut var = 0.0;
        for w in weights {
            let c = checked_cell(src, x, y, &w.a_r, &w.b_r)?;
            e += w.weight * c.estimate;
            var += (w.weight * c.standard_error).powi(2);
        }
        Ok(CellValue {
            estimate: e,
            standard_error: var.sqrt(),
            count: None,
        })
    };
    let terms = [
        (1.0, averaged(a2, b2)?),
        (1.0, averaged(a2, b)?),
        (1.0, averaged(a, b2)?),
        (-1.0, averaged(a, b)?),
    ];
    let (value, se) = signed_sum(&terms);

    #[derive(Serialize)]
    struct Inputs<'k, K> {
        a: &'k K,
        #[serde(rename = "a'")]
        a2: &'k K,
        b: &'k K,
        #[serde(rename = "b'")]
        b2: &'k K,
        weights: &'k [RetardedWeight<K>],
    }
    let mut report = InequalityReport::new(
        "averaged_chsh",
        value,
        CHSH_BOUNDS,
        se,
        src.origin(),
        inputs_json(&Inputs {
            a,
            a2,
            b,
            b2,
            weights,
        }),
    );
    report.weights_independent = Some(weights_independent);
    Ok(report)
}

fn checked_prob(v: ProbValue, what: impl FnOnce() -> String) -> Result<ProbValue> {
    if !(v.p >= -ROUNDING_SLACK && v.p <= 1.0 + ROUNDING_SLACK) || !(v.standard_error >= 0.0) {
        return Err(Error::ProbabilityRange {
            what: what(),
            value: v.p,
        });
    }
    Ok(v)
}

/// Retarded Clauser–Horne expression, bounded by `[−1, 0]` for local models:
/// `p12(a',b'|a'_r,b'_r) + p12(a',b|a_r,b'_r) + p12(a,b'|a'_r,b_r)
///  − p12(a,b|a_r,b_r) − p1(a') − p2(b')`.
///
/// The subtracted single-end terms are the primed settings: with the product
/// `xy` carrying the minus sign, `x'y' + x'y + xy' − xy − x' − y'` is the
/// combination bounded by `[−1, 0]` on the unit cube (see [`ch_expression`]).
/// Single-end probabilities receive the far retarded setting of their own
/// product term (`b'_r` for `a'`, `a'_r` for `b'`).
pub fn retarded_ch<S: ProbabilitySource>(src: &S, o: &Octuple<S::Key>) -> Result<InequalityReport> {
    let joint = |a: &S::Key, b: &S::Key, ar: &S::Key, br: &S::Key| {
        checked_prob(src.p12(a, b, ar, br)?, || format!("p12({a},{b}|{ar},{br})"))
    };
    let terms = [
        (1.0, joint(&o.a2, &o.b2, &o.a2_r, &o.b2_r)?),
        (1.0, joint(&o.a2, &o.b, &o.a_r, &o.b2_r)?),
        (1.0, joint(&o.a, &o.b2, &o.a2_r, &o.b_r)?),
        (-1.0, joint(&o.a, &o.b, &o.a_r, &o.b_r)?),
        (
            -1.0,
            checked_prob(src.p1(&o.a2, &o.b2_r)?, || format!("p1({})", o.a2))?,
        ),
        (
            -1.0,
            checked_prob(src.p2(&o.b2, &o.a2_r)?, || format!("p2({})", o.b2))?,
        ),
    ];
    let value = terms.iter().map(|(s, p)| s * p.p).sum();
    let se = terms
        .iter()
        .map(|(_, p)| p.standard_error.powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(InequalityReport::new(
        "retarded_ch",
        value,
        CH_BOUNDS,
        se,
        src.origin(),
        inputs_json(o),
    ))
}

/// Correlations given directly as a table keyed by setting ids.
#[derive(Clone, Debug, Default)]
pub struct CorrelationInput {
    pub cells: BTreeMap<[String; 4], CellValue>,
    pub origin: Option<Origin>,
}

impl CorrelationInput {
    pub fn new(origin: Origin) -> Self {
        CorrelationInput {
            cells: BTreeMap::new(),
            origin: Some(origin),
        }
    }

    pub fn insert(&mut self, a: &str, b: &str, a_r: &str, b_r: &str, cell: CellValue) {
        self.cells
            .insert([a.into(), b.into(), a_r.into(), b_r.into()], cell);
    }
}

impl CorrelationSource for CorrelationInput {
    type Key = String;

    fn origin(&self) -> Origin {
        self.origin.unwrap_or(Origin::Analytic)
    }

    fn correlation(&self, a: &String, b: &String, a_r: &String, b_r: &String) -> Result<CellValue> {
        let key = [a.clone(), b.clone(), a_r.clone(), b_r.clone()];
        self.cells
            .get(&key)
            .copied()
            .ok_or_else(|| Error::MissingCell(format!("({a},{b}|{a_r},{b_r})")))
    }
}

/// Closed-form correlations and probabilities of a registered model, keyed by
/// angle.
#[derive(Clone, Copy, Debug)]
pub struct ClosedForm(pub Model);

impl CorrelationSource for ClosedForm {
    type Key = f64;

    fn origin(&self) -> Origin {
        Origin::Analytic
    }

    fn correlation(&self, a: &f64, b: &f64, a_r: &f64, b_r: &f64) -> Result<CellValue> {
        Ok(CellValue::exact(
            self.0.correlation(&Settings::new(*a, *b, *a_r, *b_r)),
        ))
    }
}

impl ProbabilitySource for ClosedForm {
    type Key = f64;

    fn origin(&self) -> Origin {
        Origin::Analytic
    }

    fn p12(&self, a: &f64, b: &f64, a_r: &f64, b_r: &f64) -> Result<ProbValue> {
        Ok(ProbValue::exact(
            self.0.joint_plus(&Settings::new(*a, *b, *a_r, *b_r)),
        ))
    }

    fn p1(&self, _a: &f64, _b_r: &f64) -> Result<ProbValue> {
        Ok(ProbValue::exact(self.0.marginal_plus()))
    }

    fn p2(&self, _b: &f64, _a_r: &f64) -> Result<ProbValue> {
        Ok(ProbValue::exact(self.0.marginal_plus()))
    }
}

/// Exact correlations from an arbitrary function `E(a, b, a_r, b_r)`.
#[derive(Clone, Copy)]
pub struct FnCorrelation<F>(pub F);

impl<F: Fn(f64, f64, f64, f64) -> f64> CorrelationSource for FnCorrelation<F> {
    type Key = f64;

    fn origin(&self) -> Origin {
        Origin::Analytic
    }

    fn correlation(&self, a: &f64, b: &f64, a_r: &f64, b_r: &f64) -> Result<CellValue> {
        Ok(CellValue::exact((self.0)(*a, *b, *a_r, *b_r)))
    }
}

/// `X'Y' + X'Y + XY' − XY`.
pub fn chsh_expression(x: f64, x2: f64, y: f64, y2: f64) -> f64 {
    x2 * y2 + x2 * y + x * y2 - x * y
}

/// `x'y' + x'y + xy' − xy − x' − y'`, which lies in `[−1, 0]` on `[0, 1]⁴`.
pub fn ch_expression(x: f64, x2: f64, y: f64, y2: f64) -> f64 {
    x2 * y2 + x2 * y + x * y2 - x * y - x2 - y2
}

/// `x'y' + x'y + xy' − xy − x − y`: the same products with the unprimed
/// single terms subtracted. Not bounded by `[−1, 0]`; `(0, 1, 0, 1)` gives 1.
pub fn ch_expression_unprimed(x: f64, x2: f64, y: f64, y2: f64) -> f64 {
    x2 * y2 + x2 * y + x * y2 - x * y - x - y
}

/// Outcome of an identity check, with the first counterexample found as
/// `(x, x', y, y')`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub passed: bool,
    pub cases: u64,
    pub counterexample: Option<[f64; 4]>,
}

/// Enumerates all `(X, X', Y, Y') ∈ {−1, +1}⁴` and checks the CHSH
/// expression is `±2`.
pub fn chsh_identity_check() -> IdentityCheck {
    let mut counterexample = None;
    let mut cases = 0;
    for bits in 0u8..16 {
        let v = |i: u8| if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
        let (x, x2, y, y2) = (v(0), v(1), v(2), v(3));
        cases += 1;
        let s = chsh_expression(x, x2, y, y2);
        if s != 2.0 && s != -2.0 && counterexample.is_none() {
            counterexample = Some([x, x2, y, y2]);
        }
    }
    IdentityCheck {
        name: "chsh_identity",
        passed: counterexample.is_none(),
        cases,
        counterexample,
    }
}

/// Draws `samples` uniform points of `[0, 1]⁴` and checks the CH expression
/// lies in `[−1, 0]`. Corners are always included.
pub fn ch_identity_check(samples: u64, seed: u64) -> IdentityCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counterexample = None;
    let check = |p: [f64; 4], ce: &mut Option<[f64; 4]>| {
        let v = ch_expression(p[0], p[1], p[2], p[3]);
        if !(-1.0..=0.0).contains(&v) && ce.is_none() {
            *ce = Some(p);
        }
    };
    for bits in 0u8..16 {
        let v = |i: u8| (bits >> i & 1) as f64;
        check([v(0), v(1), v(2), v(3)], &mut counterexample);
    }
    for _ in 0..samples {
        let p: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        check(p, &mut counterexample);
    }
    IdentityCheck {
        name: "ch_identity",
        passed: counterexample.is_none(),
        cases: samples + 16,
        counterexample,
    }
}
