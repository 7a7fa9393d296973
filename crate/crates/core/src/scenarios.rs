//! End-to-end runs: schedules, trials with retarded settings, tables and
//! inequality reports.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{RetardedDefinition, ScenarioConfig, ScheduleKind, StationConfig};
use crate::error::{Error, Result};
use crate::estimation::{build_table, ChCounts, CorrelationTable, TrialLog, TrialRecord};
use crate::inequalities::{
    averaged_chsh, retarded_ch, retarded_chsh, same_retarded_chsh, standard_chsh, InequalityReport,
    Octuple, RetardedWeight,
};
use crate::models::{PairSampler, Settings};
use crate::parallel::{map_blocks, stream_rng, Workers};
use crate::spacetime::{
    classify_trial, read_station_interventions, BaseTimeline, EqualityClass, Geometry, LabelId,
    Palette, SettingSchedule, Station,
};

/// Source tag of generated random-switch interventions.
pub const RANDOM_SWITCH_TAG: &str = "random_switch";

/// Significance level of the independence test.
pub const INDEPENDENCE_LEVEL: f64 = 0.999;

/// Where a schedule starts and how far it must reach.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    pub station: Station,
    /// Timeline start.
    pub start: f64,
    /// Last time the schedule will be queried.
    pub horizon: f64,
    /// Delay applied to generated interventions.
    pub delay: f64,
}

/// Builds one station's schedule. Random switching draws from its own
/// stream of `seed`, distinct from the trial streams.
pub fn make_schedule(
    kind: &ScheduleKind,
    palette: Arc<Palette>,
    params: ScheduleParams,
    seed: u64,
) -> Result<SettingSchedule> {
    let station = params.station;
    match kind {
        ScheduleKind::Periodic {
            period,
            phase,
            cycle,
        } => {
            if !(period.is_finite() && *period > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "period must be positive, got {period}"
                )));
            }
            let cycle = cycle
                .iter()
                .map(|id| palette.lookup(id))
                .collect::<Result<Vec<_>>>()?;
            let base = BaseTimeline::Periodic {
                start: params.start,
                dwell: *period,
                phase: *phase,
                cycle,
            };
            SettingSchedule::new(station, palette, base)
        }
        ScheduleKind::RandomSwitch { rate, initial } => {
            let exp = Exp::new(*rate)
                .ok()
                .filter(|_| rate.is_finite() && *rate > 0.0)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("switch rate must be positive, got {rate}"))
                })?;
            let initial = palette.lookup(initial)?;
            let n_labels = palette.len();
            let mut rng = stream_rng(seed, u64::MAX - station.index() as u64);
            let mut decisions = Vec::new();
            let mut t = params.start;
            loop {
                t += exp.sample(&mut rng);
                if t + params.delay > params.horizon {
                    break;
                }
                let label = LabelId(rng.random_range(0..n_labels) as u16);
                decisions.push((t, params.delay, label));
            }
            SettingSchedule::new(
                station,
                palette,
                BaseTimeline::constant(params.start, initial),
            )?
            .with_generated(decisions, RANDOM_SWITCH_TAG)
        }
        ScheduleKind::Stream { path, initial } => {
            let initial = palette.lookup(initial)?;
            let interventions = read_station_interventions(path, &palette, station)?;
            SettingSchedule::new(
                station,
                palette,
                BaseTimeline::constant(params.start, initial),
            )?
            .with_interventions(interventions)
        }
    }
}

fn station_schedule(
    cfg: &ScenarioConfig,
    which: Station,
    sc: &StationConfig,
) -> Result<SettingSchedule> {
    let palette = Arc::new(Palette::new(sc.labels.iter().cloned())?);
    let params = ScheduleParams {
        station: which,
        start: cfg.geometry.t0(),
        horizon: cfg.end(),
        delay: cfg.intervention_delay,
    };
    make_schedule(&sc.schedule, palette, params, cfg.seed)
}

/// Retarded labels `(a_r, b_r)` for a trial measured at `(t1, t2)`.
fn retarded_ids(
    s: &[SettingSchedule; 2],
    geom: &Geometry,
    def: RetardedDefinition,
    t1: f64,
    t2: f64,
) -> Result<(LabelId, LabelId)> {
    match def {
        RetardedDefinition::Simple => Ok((
            s[0].simple_retarded_id(t2, geom)?,
            s[1].simple_retarded_id(t1, geom)?,
        )),
        RetardedDefinition::Predictive => Ok((
            s[0].predictive_retarded_id(t1, t2, geom)?,
            s[1].predictive_retarded_id(t2, t1, geom)?,
        )),
    }
}

/// Chi-squared test of actual pair `(a, b)` against retarded pair `(a_r, b_r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndependenceTest {
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    pub critical_value: f64,
    pub level: f64,
    pub p_value: f64,
    pub independent: bool,
}

/// Pearson chi-squared test on a contingency table of counts. Empty rows
/// and columns are dropped. `None` when fewer than two rows or columns remain.
pub fn chi_squared_independence(table: &[Vec<u64>], level: f64) -> Option<IndependenceTest> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let width = rows.first().map_or(0, |r| r.len());
    let col_sums: Vec<u64> = (0..width)
        .map(|j| rows.iter().map(|r| r[j]).sum())
        .collect();
    let cols: Vec<usize> = (0..width).filter(|&j| col_sums[j] > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let total: u64 = col_sums.iter().sum();
    let mut statistic = 0.0;
    for r in &rows {
        let row_sum: u64 = r.iter().sum();
        for &j in &cols {
            let expected = row_sum as f64 * col_sums[j] as f64 / total as f64;
            statistic += (r[j] as f64 - expected).powi(2) / expected;
        }
    }
    let df = ((rows.len() - 1) * (cols.len() - 1)) as u64;
    let dist = ChiSquared::new(df as f64).ok()?;
    let critical_value = dist.inverse_cdf(level);
    Some(IndependenceTest {
        statistic,
        degrees_of_freedom: df,
        critical_value,
        level,
        p_value: dist.sf(statistic),
        independent: statistic < critical_value,
    })
}

/// An inequality that could not be evaluated from the run's data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbsentReport {
    pub name: String,
    pub inputs: serde_json::Value,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportSet {
    pub reports: Vec<InequalityReport>,
    pub absent: Vec<AbsentReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationSummary {
    pub n_trials: u64,
    pub counts: BTreeMap<EqualityClass, u64>,
    pub fractions: BTreeMap<EqualityClass, f64>,
    /// Empirical `p̂(a_r, b_r)`.
    pub retarded_weights: Vec<RetardedWeight<String>>,
    pub independence: Option<IndependenceTest>,
}

impl ClassificationSummary {
    pub fn fraction(&self, class: EqualityClass) -> f64 {
        self.fractions.get(&class).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub log: TrialLog,
    pub table: CorrelationTable,
    pub reports: ReportSet,
    pub classification: ClassificationSummary,
    pub schedules: [SettingSchedule; 2],
}

/// Runs the configured experiment.
pub fn run_scenario(config: &ScenarioConfig, workers: Workers) -> Result<ScenarioResult> {
    config.validate()?;
    let geom = config.geometry;
    let schedules = [
        station_schedule(config, Station::One, &config.stations[0])?,
        station_schedule(config, Station::Two, &config.stations[1])?,
    ];
    let p1 = schedules[0].palette().clone();
    let p2 = schedules[1].palette().clone();
    let (n1, n2) = (p1.len(), p2.len());

    // One sampler per (a, b, a_r, b_r) label combination.
    let cell = |a: LabelId, b: LabelId, ar: LabelId, br: LabelId| {
        ((a.0 as usize * n2 + b.0 as usize) * n1 + ar.0 as usize) * n2 + br.0 as usize
    };
    let mut samplers = Vec::with_capacity(n1 * n1 * n2 * n2);
    for a in p1.labels() {
        for b in p2.labels() {
            for ar in p1.labels() {
                for br in p2.labels() {
                    let s = Settings::new(a.angle(), b.angle(), ar.angle(), br.angle());
                    samplers.push(config.model.sampler(&s));
                }
            }
        }
    }

    let blocks = map_blocks(
        config.n_trials,
        workers,
        |block, range| -> Result<Vec<TrialRecord>> {
            let mut rng = stream_rng(config.seed, block);
            let mut out = Vec::with_capacity((range.end - range.start) as usize);
            for k in range {
                let t = config.start + k as f64 * config.spacing;
                let a = schedules[0].value_id_at(t)?;
                let b = schedules[1].value_id_at(t)?;
                let (a_r, b_r) = retarded_ids(&schedules, &geom, config.definition, t, t)?;
                let sampler: &PairSampler = &samplers[cell(a, b, a_r, b_r)];
                let (pair, lambda) = sampler.sample(&mut rng);
                out.push(TrialRecord {
                    trial_id: k,
                    t1: t,
                    t2: t,
                    a,
                    a_r,
                    b,
                    b_r,
                    outcome_a: pair.a,
                    outcome_b: pair.b,
                    lambda,
                });
            }
            Ok(out)
        },
    );
    let mut log = TrialLog::new(
        p1.labels().iter().map(|l| l.id().to_string()).collect(),
        p2.labels().iter().map(|l| l.id().to_string()).collect(),
    );
    log.records.reserve(config.n_trials as usize);
    for block in blocks {
        log.records.extend(block?);
    }

    let table = build_table(&log, config.min_count);
    let classification = classify(&log, &p1, &p2);
    let reports = evaluate(config, &log, &table, &classification)?;
    Ok(ScenarioResult {
        log,
        table,
        reports,
        classification,
        schedules,
    })
}

fn classify(log: &TrialLog, p1: &Palette, p2: &Palette) -> ClassificationSummary {
    let n = log.len() as u64;
    let mut counts: BTreeMap<EqualityClass, u64> =
        EqualityClass::ALL.iter().map(|&c| (c, 0)).collect();
    let mut pairs: HashMap<(LabelId, LabelId), u64> = HashMap::new();
    let (n1, n2) = (p1.len(), p2.len());
    let mut contingency = vec![vec![0u64; n1 * n2]; n1 * n2];
    for r in &log.records {
        let class = classify_trial(p1.get(r.a), p1.get(r.a_r), p2.get(r.b), p2.get(r.b_r));
        *counts.entry(class).or_default() += 1;
        *pairs.entry((r.a_r, r.b_r)).or_default() += 1;
        contingency[r.a.0 as usize * n2 + r.b.0 as usize]
            [r.a_r.0 as usize * n2 + r.b_r.0 as usize] += 1;
    }
    let fractions = counts
        .iter()
        .map(|(&c, &k)| (c, k as f64 / n as f64))
        .collect();
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort();
    let retarded_weights = pairs
        .into_iter()
        .map(|((ar, br), k)| RetardedWeight {
            a_r: log.label1(ar).to_string(),
            b_r: log.label2(br).to_string(),
            weight: k as f64 / n as f64,
        })
        .collect();
    ClassificationSummary {
        n_trials: n,
        counts,
        fractions,
        retarded_weights,
        independence: chi_squared_independence(&contingency, INDEPENDENCE_LEVEL),
    }
}

/// Adds `attempt` to the reports, or records it as absent when the data
/// lack the cells it needs.
fn collect(
    set: &mut ReportSet,
    name: &str,
    inputs: serde_json::Value,
    attempt: Result<InequalityReport>,
) -> Result<()> {
    match attempt {
        Ok(r) => set.reports.push(r),
        Err(e) if e.is_insufficient_data() => set.absent.push(AbsentReport {
            name: name.to_string(),
            inputs,
            reason: e.to_string(),
        }),
        Err(e) => return Err(e),
    }
    Ok(())
}

fn evaluate(
    config: &ScenarioConfig,
    log: &TrialLog,
    table: &CorrelationTable,
    classification: &ClassificationSummary,
) -> Result<ReportSet> {
    let [a, a2, b, b2] = config.quartet.clone();
    let mut set = ReportSet {
        reports: Vec::new(),
        absent: Vec::new(),
    };
    let tied = serde_json::to_value(Octuple::tied(a.clone(), a2.clone(), b.clone(), b2.clone()))?;
    collect(
        &mut set,
        "chsh",
        tied,
        standard_chsh(table, &a, &a2, &b, &b2),
    )?;
    let same = serde_json::to_value(Octuple::same_retarded(
        a.clone(),
        a2.clone(),
        b.clone(),
        b2.clone(),
    ))?;
    collect(
        &mut set,
        "same_retarded_chsh",
        same,
        same_retarded_chsh(table, &a, &a2, &b, &b2),
    )?;

    let probs = ChCounts::new(log, config.min_count);
    for a_r in &log.labels1 {
        for a2_r in &log.labels1 {
            for b_r in &log.labels2 {
                for b2_r in &log.labels2 {
                    let o = Octuple {
                        a: a.clone(),
                        a2: a2.clone(),
                        b: b.clone(),
                        b2: b2.clone(),
                        a_r: a_r.clone(),
                        a2_r: a2_r.clone(),
                        b_r: b_r.clone(),
                        b2_r: b2_r.clone(),
                    };
                    let inputs = serde_json::to_value(&o)?;
                    collect(
                        &mut set,
                        "retarded_chsh",
                        inputs.clone(),
                        retarded_chsh(table, &o),
                    )?;
                    collect(&mut set, "retarded_ch", inputs, retarded_ch(&probs, &o))?;
                }
            }
        }
    }

    let independent = classification.independence.is_some_and(|t| t.independent);
    let weights = &classification.retarded_weights;
    let inputs = serde_json::json!({ "a": a, "a'": a2, "b": b, "b'": b2, "weights": weights });
    collect(
        &mut set,
        "averaged_chsh",
        inputs,
        averaged_chsh(table, weights, &a, &a2, &b, &b2, independent),
    )?;
    Ok(set)
}

impl ScenarioResult {
    pub fn any_violated(&self) -> bool {
        self.reports
            .reports
            .iter()
            .any(InequalityReport::is_violated)
    }

    /// Recomputes every trial's actual and retarded labels from the
    /// schedules and geometry; returns the number of trials that disagree.
    pub fn audit(&self, geom: &Geometry, def: RetardedDefinition) -> Result<u64> {
        let [s1, s2] = &self.schedules;
        let mut mismatches = 0;
        for r in &self.log.records {
            let (a_r, b_r) = match def {
                RetardedDefinition::Simple => (
                    s1.simple_retarded(r.t2, geom)?,
                    s2.simple_retarded(r.t1, geom)?,
                ),
                RetardedDefinition::Predictive => (
                    s1.predictive_retarded(r.t1, r.t2, geom)?,
                    s2.predictive_retarded(r.t2, r.t1, geom)?,
                ),
            };
            let same = s1.value_at(r.t1)?.id() == self.log.label1(r.a)
                && s2.value_at(r.t2)?.id() == self.log.label2(r.b)
                && a_r.id() == self.log.label1(r.a_r)
                && b_r.id() == self.log.label2(r.b_r);
            mismatches += u64::from(!same);
        }
        Ok(mismatches)
    }

    /// Writes `trials.csv`, `table.csv`, `reports.json` and
    /// `classification.json` into `dir`, creating it if needed.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.log
            .write_csv(BufWriter::new(File::create(dir.join("trials.csv"))?))?;
        self.table
            .write_csv(BufWriter::new(File::create(dir.join("table.csv"))?))?;
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(dir.join("reports.json"))?),
            &self.reports,
        )?;
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(dir.join("classification.json"))?),
            &self.classification,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::Verdict;
    use crate::models::Model;
    use crate::spacetime::SettingLabel;
    use std::f64::consts::FRAC_PI_2;
    use std::io::Write;
    use std::path::PathBuf;

    fn palette(ids: &[(&str, f64)]) -> Arc<Palette> {
        Arc::new(Palette::new(ids.iter().map(|(id, a)| SettingLabel::new(*id, *a))).unwrap())
    }

    fn params(station: Station) -> ScheduleParams {
        ScheduleParams {
            station,
            start: 0.0,
            horizon: 100.0,
            delay: 0.0,
        }
    }

    #[test]
    fn periodic_schedule_alternates() {
        let kind = ScheduleKind::Periodic {
            period: 1.0,
            phase: 0.0,
            cycle: vec!["a".into(), "a'".into()],
        };
        let s = make_schedule(
            &kind,
            palette(&[("a", FRAC_PI_2), ("a'", 0.0)]),
            params(Station::One),
            0,
        )
        .unwrap();
        assert_eq!(s.value_at(0.5).unwrap().id(), "a");
        assert_eq!(s.value_at(1.5).unwrap().id(), "a'");
        assert_eq!(s.value_at(2.0).unwrap().id(), "a");
    }

    #[test]
    fn random_switch_rejects_zero_rate() {
        let kind = ScheduleKind::RandomSwitch {
            rate: 0.0,
            initial: "a".into(),
        };
        assert!(make_schedule(&kind, palette(&[("a", 0.0)]), params(Station::One), 0).is_err());
    }

    #[test]
    fn random_switch_is_seeded_and_spans_horizon() {
        let kind = ScheduleKind::RandomSwitch {
            rate: 4.0,
            initial: "a".into(),
        };
        let pal = palette(&[("a", 0.0), ("a'", 1.0)]);
        let p = ScheduleParams {
            delay: 0.5,
            ..params(Station::One)
        };
        let s = make_schedule(&kind, pal.clone(), p, 3).unwrap();
        let again = make_schedule(&kind, pal.clone(), p, 3).unwrap();
        let other = make_schedule(&kind, pal, p, 4).unwrap();
        let ivs: Vec<_> = s.interventions().collect();
        assert_eq!(ivs, again.interventions().collect::<Vec<_>>());
        assert_ne!(ivs, other.interventions().collect::<Vec<_>>());
        // ~ rate · horizon events, all within the horizon with the configured delay.
        assert!((300..500).contains(&ivs.len()), "{}", ivs.len());
        assert!(ivs.iter().all(|iv| (iv.delay - 0.5).abs() < 1e-12
            && iv.effect_time() <= 100.0
            && iv.decision_time > 0.0));
    }

    #[test]
    fn stream_schedule_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iv.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(
            f,
            "station,decision_time,delay,label,source_tag\n1,3,0,a',ext\n2,1,0,b,ext"
        )
        .unwrap();
        drop(f);
        let kind = ScheduleKind::Stream {
            path: path.clone(),
            initial: "a".into(),
        };
        let s = make_schedule(
            &kind,
            palette(&[("a", 0.0), ("a'", 1.0)]),
            params(Station::One),
            0,
        )
        .unwrap();
        assert_eq!(s.intervention_count(), 1);
        assert_eq!(s.value_at(2.9).unwrap().id(), "a");
        assert_eq!(s.value_at(3.0).unwrap().id(), "a'");

        let missing = ScheduleKind::Stream {
            path: PathBuf::from("/nonexistent/iv.csv"),
            initial: "a".into(),
        };
        assert!(make_schedule(&missing, palette(&[("a", 0.0)]), params(Station::One), 0).is_err());
    }

    #[test]
    fn chi_squared_matches_hand_computation() {
        // 2x2 with a clear association.
        let t = vec![vec![30, 10], vec![10, 30]];
        let test = chi_squared_independence(&t, 0.999).unwrap();
        // expected 20 everywhere: 4 · 100/20 = 20
        assert!((test.statistic - 20.0).abs() < 1e-12);
        assert_eq!(test.degrees_of_freedom, 1);
        assert!((test.critical_value - 10.827566).abs() < 1e-5);
        assert!(!test.independent);
        let flat = chi_squared_independence(&[vec![5, 5], vec![5, 5]], 0.999).unwrap();
        assert_eq!(flat.statistic, 0.0);
        assert!(flat.independent);
        assert!(chi_squared_independence(&[vec![5, 0], vec![0, 0]], 0.999).is_none());
    }

    fn small_config(text: &str) -> ScenarioConfig {
        ScenarioConfig::parse(text, Path::new(".")).unwrap()
    }

    const ASPECT: &str = "
[geometry]
separation = 2
signal_speed = 1
t0 = -10
[model]
name = hardy
[station1]
labels = a:pi/2, a':0
schedule = periodic
period = 1
[station2]
labels = b:-pi/4, b':pi/4
schedule = periodic
period = 1
phase = 0.5
[run]
n_trials = 4000
spacing = 0.25
start = 0.125
seed = 5
";

    #[test]
    fn aspect_periodic_all_both_equal() {
        let cfg = small_config(ASPECT);
        let res = run_scenario(&cfg, Workers::Serial).unwrap();
        assert_eq!(res.classification.fraction(EqualityClass::BothEqual), 1.0);
        let total: f64 = res.classification.fractions.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(res.audit(&cfg.geometry, cfg.definition).unwrap(), 0);
        // Only tied cells exist. With retarded settings equal to the actual
        // ones the local model reproduces -cos(a-b), so the standard CHSH is
        // violated while the mixed retarded combinations are absent.
        let chsh = res
            .reports
            .reports
            .iter()
            .find(|r| r.name == "chsh")
            .unwrap();
        assert_eq!(chsh.verdict, Verdict::Violated);
        assert!(
            (chsh.value + 2.0 * std::f64::consts::SQRT_2).abs() < 0.2,
            "{}",
            chsh.value
        );
        assert!(res.any_violated());
        assert!(res.reports.absent.iter().any(|r| r.name == "retarded_chsh"));
    }

    #[test]
    fn delay_control_predictive_all_both_equal() {
        let text = ASPECT
            .replace(
                "schedule = periodic\nperiod = 1\n[station2]",
                "schedule = random_switch\nrate = 3\n[station2]",
            )
            .replace(
                "schedule = periodic\nperiod = 1\nphase = 0.5",
                "schedule = random_switch\nrate = 3",
            )
            .replace(
                "seed = 5",
                "seed = 5\nintervention_delay = 3\ndefinition = predictive",
            );
        let cfg = small_config(&text);
        let res = run_scenario(&cfg, Workers::Serial).unwrap();
        assert!(res.schedules[0].intervention_count() > 1000);
        assert_eq!(res.classification.fraction(EqualityClass::BothEqual), 1.0);
        assert_eq!(res.audit(&cfg.geometry, cfg.definition).unwrap(), 0);

        // Same schedules with no delay: simple retarded settings mostly differ.
        let fast = text
            .replace("intervention_delay = 3", "intervention_delay = 0")
            .replace("definition = predictive", "definition = simple");
        let res = run_scenario(&small_config(&fast), Workers::Serial).unwrap();
        assert!(res.classification.fraction(EqualityClass::BothEqual) < 0.5);
    }

    #[test]
    fn random_switching_runs_are_reproducible_and_worker_independent() {
        let text = ASPECT
            .replace(
                "schedule = periodic\nperiod = 1\n[station2]",
                "schedule = random_switch\nrate = 6\n[station2]",
            )
            .replace(
                "schedule = periodic\nperiod = 1\nphase = 0.5",
                "schedule = random_switch\nrate = 6",
            )
            .replace("n_trials = 4000", "n_trials = 70000");
        let cfg = small_config(&text);
        let x = run_scenario(&cfg, Workers::Serial).unwrap();
        let y = run_scenario(&cfg, Workers::Threads(3)).unwrap();
        assert_eq!(x.log, y.log);
        assert_eq!(x.table, y.table);
        assert_eq!(x.audit(&cfg.geometry, cfg.definition).unwrap(), 0);
        let total: u64 = x.classification.counts.values().sum();
        assert_eq!(total, 70000);
        let w: f64 = x
            .classification
            .retarded_weights
            .iter()
            .map(|w| w.weight)
            .sum();
        assert!((w - 1.0).abs() < 1e-9);
        assert!(x.reports.reports.iter().any(|r| r.name == "averaged_chsh"));
        // Local model: no retarded CHSH report is violated.
        assert!(x
            .reports
            .reports
            .iter()
            .filter(|r| r.name == "retarded_chsh")
            .all(|r| r.verdict != Verdict::Violated));
    }

    #[test]
    fn writes_all_outputs() {
        let cfg = small_config(ASPECT);
        let res = run_scenario(&cfg, Workers::Serial).unwrap();
        let dir = tempfile::tempdir().unwrap();
        res.write_outputs(dir.path()).unwrap();
        for f in [
            "trials.csv",
            "table.csv",
            "reports.json",
            "classification.json",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let json: serde_json::Value =
            serde_json::from_reader(File::open(dir.path().join("classification.json")).unwrap())
                .unwrap();
        assert_eq!(json["fractions"]["both-equal"], 1.0);
        assert_eq!(cfg.model, Model::HardySinglet);
    }
}
