//! Correlation and CH-probability estimation: closed form, λ-quadrature and
//! seeded Monte Carlo, plus correlation tables built from trial logs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inequalities::{CellValue, CorrelationSource, Origin, ProbValue, ProbabilitySource};
use crate::models::{DeterministicLhv, Lifted, Model, Outcome, Settings, StochasticLhv};
use crate::parallel::{map_blocks, stream_rng, Workers};
use crate::spacetime::LabelId;

/// Fewest quadrature nodes accepted.
pub const MIN_QUADRATURE_NODES: usize = 1_000;

/// Default minimum number of trials before a cell may feed an inequality.
pub const DEFAULT_MIN_COUNT: u64 = 100;

fn check_nodes(nodes: usize) -> Result<()> {
    if nodes < MIN_QUADRATURE_NODES {
        return Err(Error::InvalidArgument(format!(
            "quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {nodes}"
        )));
    }
    Ok(())
}

/// Midpoint rule for `∫ A(a, b_r, λ) B(b, a_r, λ) ρ(λ) dλ`.
pub fn quadrature_e_lhv(
    model: &(impl DeterministicLhv + ?Sized),
    s: &Settings,
    nodes: usize,
) -> Result<f64> {
    check_nodes(nodes)?;
    let hidden = model.hidden();
    Ok(hidden
        .midpoint_nodes(nodes)
        .map(|(l, w)| {
            let p = model.outcome_a(s.a, s.b_r, l).value() * model.outcome_b(s.b, s.a_r, l).value();
            w * p as f64
        })
        .sum())
}

/// λ-quadrature for a registered model; the quantum reference is rejected.
pub fn quadrature_e(model: Model, s: &Settings, nodes: usize) -> Result<f64> {
    quadrature_e_lhv(model.require_lhv()?, s, nodes)
}

/// `∫ p1(a, b_r|λ) p2(b, a_r|λ) ρ(λ) dλ`.
pub fn quadrature_p12(
    model: &(impl StochasticLhv + ?Sized),
    s: &Settings,
    nodes: usize,
) -> Result<f64> {
    check_nodes(nodes)?;
    Ok(model
        .hidden()
        .midpoint_nodes(nodes)
        .map(|(l, w)| w * model.p1(s.a, s.b_r, l) * model.p2(s.b, s.a_r, l))
        .sum())
}

/// `(∫ p1(a, b_r|λ) ρ dλ, ∫ p2(b, a_r|λ) ρ dλ)`.
pub fn quadrature_marginals(
    model: &(impl StochasticLhv + ?Sized),
    s: &Settings,
    nodes: usize,
) -> Result<(f64, f64)> {
    check_nodes(nodes)?;
    Ok(model
        .hidden()
        .midpoint_nodes(nodes)
        .fold((0.0, 0.0), |(x, y), (l, w)| {
            (
                x + w * model.p1(s.a, s.b_r, l),
                y + w * model.p2(s.b, s.a_r, l),
            )
        }))
}

/// Correlations and probabilities by λ-quadrature, keyed by angle.
#[derive(Clone, Copy)]
pub struct Quadrature<'m> {
    pub model: &'m dyn DeterministicLhv,
    pub nodes: usize,
}

impl CorrelationSource for Quadrature<'_> {
    type Key = f64;

    fn origin(&self) -> Origin {
        Origin::Analytic
    }

    fn correlation(&self, a: &f64, b: &f64, a_r: &f64, b_r: &f64) -> Result<CellValue> {
        quadrature_e_lhv(self.model, &Settings::new(*a, *b, *a_r, *b_r), self.nodes)
            .map(CellValue::exact)
    }
}

impl ProbabilitySource for Quadrature<'_> {
    type Key = f64;

    fn origin(&self) -> Origin {
        Origin::Analytic
    }

    fn p12(&self, a: &f64, b: &f64, a_r: &f64, b_r: &f64) -> Result<ProbValue> {
        quadrature_p12(
            &Lifted(self.model),
            &Settings::new(*a, *b, *a_r, *b_r),
            self.nodes,
        )
        .map(ProbValue::exact)
    }

    fn p1(&self, a: &f64, b_r: &f64) -> Result<ProbValue> {
        let s = Settings::new(*a, 0.0, 0.0, *b_r);
        quadrature_marginals(&Lifted(self.model), &s, self.nodes).map(|m| ProbValue::exact(m.0))
    }

    fn p2(&self, b: &f64, a_r: &f64) -> Result<ProbValue> {
        let s = Settings::new(0.0, *b, *a_r, 0.0);
        quadrature_marginals(&Lifted(self.model), &s, self.nodes).map(|m| ProbValue::exact(m.1))
    }
}

/// A Monte Carlo correlation estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub count: u64,
}

impl McEstimate {
    fn from_sum(sum: i64, count: u64) -> Self {
        let estimate = sum as f64 / count as f64;
        McEstimate {
            estimate,
            standard_error: correlation_se(estimate, count),
            count,
        }
    }
}

/// `sqrt((1 − Ê²)/N)` for a mean of ±1 products.
pub fn correlation_se(estimate: f64, count: u64) -> f64 {
    ((1.0 - estimate * estimate).max(0.0) / count as f64).sqrt()
}

/// `sqrt(p(1 − p)/n)`.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    ((p * (1.0 - p)).max(0.0) / n as f64).sqrt()
}

/// Mean product of `n` sampled outcome pairs. Bit-identical for a given
/// `(seed, n)` whatever the worker count.
pub fn mc_e(model: Model, s: &Settings, n: u64, seed: u64, workers: Workers) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Monte Carlo needs at least one sample".into(),
        ));
    }
    let sampler = model.sampler(s);
    let sums = map_blocks(n, workers, |block, range| {
        let mut rng = stream_rng(seed, block);
        range
            .map(|_| sampler.sample(&mut rng).0.product() as i64)
            .sum::<i64>()
    });
    Ok(McEstimate::from_sum(sums.into_iter().sum(), n))
}

/// Monte Carlo for any deterministic local model, sampling λ from its space.
pub fn mc_e_lhv(
    model: &(impl DeterministicLhv + ?Sized),
    s: &Settings,
    n: u64,
    seed: u64,
    workers: Workers,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Monte Carlo needs at least one sample".into(),
        ));
    }
    let hidden = model.hidden();
    let sums = map_blocks(n, workers, |block, range| {
        let mut rng = stream_rng(seed, block);
        range
            .map(|_| {
                let l = hidden.sample(&mut rng);
                (model.outcome_a(s.a, s.b_r, l).value() * model.outcome_b(s.b, s.a_r, l).value())
                    as i64
            })
            .sum::<i64>()
    });
    Ok(McEstimate::from_sum(sums.into_iter().sum(), n))
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Monte Carlo correlations with `n` samples per cell. Each cell gets its own
/// seed derived from the base seed and the cell's angles.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarlo {
    pub model: Model,
    pub n: u64,
    pub seed: u64,
    pub workers: Workers,
}

impl MonteCarlo {
    pub fn cell_seed(&self, s: &Settings) -> u64 {
        [s.a, s.b, s.a_r, s.b_r]
            .iter()
            .fold(splitmix(self.seed), |h, x| splitmix(h ^ x.to_bits()))
    }
}

impl CorrelationSource for MonteCarlo {
    type Key = f64;

    fn origin(&self) -> Origin {
        Origin::MonteCarlo
    }

    fn correlation(&self, a: &f64, b: &f64, a_r: &f64, b_r: &f64) -> Result<CellValue> {
        let s = Settings::new(*a, *b, *a_r, *b_r);
        let est = mc_e(self.model, &s, self.n, self.cell_seed(&s), self.workers)?;
        Ok(CellValue {
            estimate: est.estimate,
            standard_error: est.standard_error,
            count: Some(est.count),
        })
    }
}

/// One experimental run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub t1: f64,
    pub t2: f64,
    /// Station 1 labels (index into [`TrialLog::labels1`]).
    pub a: LabelId,
    pub a_r: LabelId,
    /// Station 2 labels (index into [`TrialLog::labels2`]).
    pub b: LabelId,
    pub b_r: LabelId,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
    pub lambda: Option<f64>,
}

impl TrialRecord {
    pub fn product(&self) -> i8 {
        self.outcome_a.value() * self.outcome_b.value()
    }
}

/// A sequence of trials plus the label ids of each station.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialLog {
    pub labels1: Vec<String>,
    pub labels2: Vec<String>,
    pub records: Vec<TrialRecord>,
}

const TRIAL_HEADER: [&str; 10] = [
    "trial_id", "t1", "t2", "a", "b", "a_r", "b_r", "A", "B", "lambda",
];

fn intern(labels: &mut Vec<String>, id: &str) -> Result<LabelId> {
    if let Some(i) = labels.iter().position(|l| l == id) {
        return Ok(LabelId(i as u16));
    }
    let i = u16::try_from(labels.len())
        .map_err(|_| Error::InvalidArgument("too many labels".into()))?;
    labels.push(id.to_string());
    Ok(LabelId(i))
}

impl TrialLog {
    pub fn new(labels1: Vec<String>, labels2: Vec<String>) -> Self {
        TrialLog {
            labels1,
            labels2,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label1(&self, id: LabelId) -> &str {
        &self.labels1[id.0 as usize]
    }

    pub fn label2(&self, id: LabelId) -> &str {
        &self.labels2[id.0 as usize]
    }

    fn find1(&self, id: &str) -> Option<LabelId> {
        self.labels1
            .iter()
            .position(|l| l == id)
            .map(|i| LabelId(i as u16))
    }

    fn find2(&self, id: &str) -> Option<LabelId> {
        self.labels2
            .iter()
            .position(|l| l == id)
            .map(|i| LabelId(i as u16))
    }

    /// Writes `trial_id,t1,t2,a,b,a_r,b_r,A,B,lambda`; lambda is blank for
    /// nonlocal models.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRIAL_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.trial_id.to_string(),
                r.t1.to_string(),
                r.t2.to_string(),
                self.label1(r.a).to_string(),
                self.label2(r.b).to_string(),
                self.label1(r.a_r).to_string(),
                self.label2(r.b_r).to_string(),
                r.outcome_a.value().to_string(),
                r.outcome_b.value().to_string(),
                r.lambda.map(|l| l.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let bad = |row: usize, message: String| Error::MalformedRow {
            path: "trial log".into(),
            row,
            message,
        };
        if header.iter().ne(TRIAL_HEADER) {
            return Err(bad(
                0,
                format!("expected header {}", TRIAL_HEADER.join(",")),
            ));
        }
        let mut log = TrialLog::default();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(row, format!("{}: {e}", TRIAL_HEADER[k])))
            };
            let outcome = |k: usize| -> Result<Outcome> {
                let v = rec[k]
                    .trim()
                    .parse::<i64>()
                    .map_err(|e| bad(row, e.to_string()))?;
                Outcome::try_from(v).map_err(|e| bad(row, e))
            };
            let trial_id = rec[0]
                .trim()
                .parse::<u64>()
                .map_err(|e| bad(row, e.to_string()))?;
            let lambda = match rec[9].trim() {
                "" => None,
                _ => Some(num(9)?),
            };
            let record = TrialRecord {
                trial_id,
                t1: num(1)?,
                t2: num(2)?,
                a: intern(&mut log.labels1, &rec[3])?,
                b: intern(&mut log.labels2, &rec[4])?,
                a_r: intern(&mut log.labels1, &rec[5])?,
                b_r: intern(&mut log.labels2, &rec[6])?,
                outcome_a: outcome(7)?,
                outcome_b: outcome(8)?,
                lambda,
            };
            log.records.push(record);
        }
        Ok(log)
    }
}

/// Label ids of one correlation cell `(a, b | a_r, b_r)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub a: String,
    pub b: String,
    pub a_r: String,
    pub b_r: String,
}

impl CellKey {
    pub fn new(a: &str, b: &str, a_r: &str, b_r: &str) -> Self {
        CellKey {
            a: a.into(),
            b: b.into(),
            a_r: a_r.into(),
            b_r: b_r.into(),
        }
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{}|{},{})", self.a, self.b, self.a_r, self.b_r)
    }
}

/// Per-cell statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellStats {
    pub sum_products: i64,
    pub count: u64,
    pub estimate: f64,
    pub standard_error: f64,
    /// Outcome counts `(++, +−, −+, −−)` when built from a log.
    pub outcome_counts: Option<[u64; 4]>,
}

impl CellStats {
    fn from_counts(counts: [u64; 4]) -> Self {
        let count: u64 = counts.iter().sum();
        let sum_products =
            counts[0] as i64 + counts[3] as i64 - counts[1] as i64 - counts[2] as i64;
        let estimate = sum_products as f64 / count as f64;
        CellStats {
            sum_products,
            count,
            estimate,
            standard_error: correlation_se(estimate, count),
            outcome_counts: Some(counts),
        }
    }

    pub fn is_sufficient(&self, min_count: u64) -> bool {
        self.count >= min_count
    }
}

/// Correlation estimates keyed by label-id quadruple.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTable {
    pub cells: BTreeMap<CellKey, CellStats>,
    pub min_count: u64,
}

const TABLE_HEADER: [&str; 8] = ["a", "b", "a_r", "b_r", "E", "SE", "count", "sufficient"];

fn outcome_slot(x: Outcome, y: Outcome) -> usize {
    match (x, y) {
        (Outcome::Plus, Outcome::Plus) => 0,
        (Outcome::Plus, Outcome::Minus) => 1,
        (Outcome::Minus, Outcome::Plus) => 2,
        (Outcome::Minus, Outcome::Minus) => 3,
    }
}

/// Groups trials by `(a, b, a_r, b_r)` and computes `Ê` and its SE per cell.
/// Cells with fewer than `min_count` trials are kept but flagged.
pub fn build_table(log: &TrialLog, min_count: u64) -> CorrelationTable {
    let mut counts: HashMap<[LabelId; 4], [u64; 4]> = HashMap::new();
    for r in &log.records {
        counts.entry([r.a, r.b, r.a_r, r.b_r]).or_default()
            [outcome_slot(r.outcome_a, r.outcome_b)] += 1;
    }
    let cells = counts
        .into_iter()
        .map(|([a, b, ar, br], c)| {
            let key = CellKey::new(log.label1(a), log.label2(b), log.label1(ar), log.label2(br));
            (key, CellStats::from_counts(c))
        })
        .collect();
    CorrelationTable { cells, min_count }
}

impl CorrelationTable {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: &CellKey) -> Option<&CellStats> {
        self.cells.get(key)
    }

    /// Writes `a,b,a_r,b_r,E,SE,count,sufficient`. Floats are written in
    /// shortest round-trip form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TABLE_HEADER)?;
        for (k, c) in &self.cells {
            w.write_record([
                k.a.clone(),
                k.b.clone(),
                k.a_r.clone(),
                k.b_r.clone(),
                c.estimate.to_string(),
                c.standard_error.to_string(),
                c.count.to_string(),
                c.is_sufficient(self.min_count).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`CorrelationTable::write_csv`]. Sufficiency
    /// is re-derived from `min_count`.
    pub fn read_csv<R: Read>(reader: R, min_count: u64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            a: String,
            b: String,
            a_r: String,
            b_r: String,
            #[serde(rename = "E")]
            e: f64,
            #[serde(rename = "SE")]
            se: f64,
            count: u64,
            #[allow(dead_code)]
            sufficient: bool,
        }
        let bad = |row: usize, message: String| Error::MalformedRow {
            path: "correlation table".into(),
            row,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        if rdr.headers()?.iter().ne(TABLE_HEADER) {
            return Err(bad(
                0,
                format!("expected header {}", TABLE_HEADER.join(",")),
            ));
        }
        let mut cells = BTreeMap::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| bad(i + 1, e.to_string()))?;
            if !(row.e.abs() <= 1.0) || !(row.se >= 0.0) {
                return Err(bad(
                    i + 1,
                    format!("invalid estimate {} ± {}", row.e, row.se),
                ));
            }
            let stats = CellStats {
                sum_products: (row.e * row.count as f64).round() as i64,
                count: row.count,
                estimate: row.e,
                standard_error: row.se,
                outcome_counts: None,
            };
            let key = CellKey::new(&row.a, &row.b, &row.a_r, &row.b_r);
            if cells.insert(key.clone(), stats).is_some() {
                return Err(bad(i + 1, format!("duplicate cell {key}")));
            }
        }
        Ok(CorrelationTable { cells, min_count })
    }
}

impl CorrelationSource for CorrelationTable {
    type Key = String;

    fn origin(&self) -> Origin {
        Origin::MonteCarlo
    }

    fn correlation(&self, a: &String, b: &String, a_r: &String, b_r: &String) -> Result<CellValue> {
        let key = CellKey::new(a, b, a_r, b_r);
        let cell = self
            .cells
            .get(&key)
            .ok_or_else(|| Error::MissingCell(key.to_string()))?;
        if !cell.is_sufficient(self.min_count) {
            return Err(Error::InsufficientCell {
                key: key.to_string(),
                count: cell.count,
                min_count: self.min_count,
            });
        }
        Ok(CellValue {
            estimate: cell.estimate,
            standard_error: cell.standard_error,
            count: Some(cell.count),
        })
    }
}

/// Counts needed for CH probabilities: `++` per cell and `+` per local
/// setting at each end.
#[derive(Clone, Debug)]
pub struct ChCounts<'l> {
    log: &'l TrialLog,
    cells: HashMap<[LabelId; 4], (u64, u64)>,
    plus1: HashMap<LabelId, (u64, u64)>,
    plus2: HashMap<LabelId, (u64, u64)>,
    pub min_count: u64,
}

/// Estimated CH probabilities for one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChEstimate {
    pub p12: ProbValue,
    pub p1: ProbValue,
    pub p2: ProbValue,
}

impl<'l> ChCounts<'l> {
    pub fn new(log: &'l TrialLog, min_count: u64) -> Self {
        let mut cells: HashMap<[LabelId; 4], (u64, u64)> = HashMap::new();
        let mut plus1: HashMap<LabelId, (u64, u64)> = HashMap::new();
        let mut plus2: HashMap<LabelId, (u64, u64)> = HashMap::new();
        for r in &log.records {
            let c = cells.entry([r.a, r.b, r.a_r, r.b_r]).or_default();
            c.0 += (r.outcome_a.is_plus() && r.outcome_b.is_plus()) as u64;
            c.1 += 1;
            let m = plus1.entry(r.a).or_default();
            m.0 += r.outcome_a.is_plus() as u64;
            m.1 += 1;
            let m = plus2.entry(r.b).or_default();
            m.0 += r.outcome_b.is_plus() as u64;
            m.1 += 1;
        }
        ChCounts {
            log,
            cells,
            plus1,
            plus2,
            min_count,
        }
    }

    fn key(&self, a: &str, b: &str, a_r: &str, b_r: &str) -> Option<[LabelId; 4]> {
        Some([
            self.log.find1(a)?,
            self.log.find2(b)?,
            self.log.find1(a_r)?,
            self.log.find2(b_r)?,
        ])
    }

    fn fraction((hits, n): (u64, u64)) -> ProbValue {
        let p = hits as f64 / n as f64;
        ProbValue {
            p,
            standard_error: binomial_se(p, n),
        }
    }

    fn marginal(
        &self,
        map: &HashMap<LabelId, (u64, u64)>,
        id: Option<LabelId>,
        name: &str,
    ) -> Result<ProbValue> {
        let counts = id
            .and_then(|i| map.get(&i).copied())
            .ok_or_else(|| Error::MissingCell(format!("marginal {name}")))?;
        Ok(Self::fraction(counts))
    }
}

impl ProbabilitySource for ChCounts<'_> {
    type Key = String;

    fn origin(&self) -> Origin {
        Origin::MonteCarlo
    }

    fn p12(&self, a: &String, b: &String, a_r: &String, b_r: &String) -> Result<ProbValue> {
        let name = CellKey::new(a, b, a_r, b_r).to_string();
        let counts = self
            .key(a, b, a_r, b_r)
            .and_then(|k| self.cells.get(&k).copied())
            .ok_or_else(|| Error::MissingCell(name.clone()))?;
        if counts.1 < self.min_count {
            return Err(Error::InsufficientCell {
                key: name,
                count: counts.1,
                min_count: self.min_count,
            });
        }
        Ok(Self::fraction(counts))
    }

    fn p1(&self, a: &String, _b_r: &String) -> Result<ProbValue> {
        self.marginal(&self.plus1, self.log.find1(a), a)
    }

    fn p2(&self, b: &String, _a_r: &String) -> Result<ProbValue> {
        self.marginal(&self.plus2, self.log.find2(b), b)
    }
}

/// `p̂12` for one cell and the retarded-independent marginals `p̂1(a)`,
/// `p̂2(b)`, with binomial standard errors.
pub fn estimate_ch_probs(
    log: &TrialLog,
    a: &str,
    b: &str,
    a_r: &str,
    b_r: &str,
) -> Result<ChEstimate> {
    let counts = ChCounts::new(log, 0);
    let (a, b, a_r, b_r) = (
        a.to_string(),
        b.to_string(),
        a_r.to_string(),
        b_r.to_string(),
    );
    Ok(ChEstimate {
        p12: counts.p12(&a, &b, &a_r, &b_r)?,
        p1: counts.p1(&a, &b_r)?,
        p2: counts.p2(&b, &a_r)?,
    })
}
