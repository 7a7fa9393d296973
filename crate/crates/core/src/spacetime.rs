//! Two-station geometry, setting timelines and retarded settings.
//!
//! A [`SettingSchedule`] is a piecewise-constant, right-continuous timeline of
//! setting labels for one station: a deterministic base timeline overridden by
//! timestamped [`Intervention`]s. Retarded settings are read off the far
//! station's schedule at light-cone delay `L/c`, either directly ("simple") or
//! as the value predicted from information available at the cutoff, ignoring
//! interventions decided after it ("predictive").

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};

/// Tolerance used when comparing the angles of two labels with the same id.
pub const ANGLE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Station {
    One,
    Two,
}

impl Station {
    pub fn index(self) -> usize {
        match self {
            Station::One => 0,
            Station::Two => 1,
        }
    }
}

impl TryFrom<u8> for Station {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Station::One),
            2 => Ok(Station::Two),
            other => Err(format!("station must be 1 or 2, got {other}")),
        }
    }
}

impl From<Station> for u8 {
    fn from(s: Station) -> u8 {
        match s {
            Station::One => 1,
            Station::Two => 2,
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// A named measurement setting. The angle is stored in `[0, 2π)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SettingLabel {
    id: String,
    angle: f64,
}

impl SettingLabel {
    pub fn new(id: impl Into<String>, angle: f64) -> Self {
        SettingLabel {
            id: id.into(),
            angle: angle::normalize(angle),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// Same id and angles equal within [`ANGLE_EPS`] (circularly).
    pub fn same_as(&self, other: &SettingLabel) -> bool {
        self.id == other.id && circular_distance(self.angle, other.angle) <= ANGLE_EPS
    }
}

/// Label identity is by id.
impl PartialEq for SettingLabel {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for SettingLabel {}

impl fmt::Display for SettingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn circular_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Index of a label inside a [`Palette`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelId(pub u16);

/// The set of labels a station can take. Ids are unique.
#[derive(Clone, Debug, Default)]
pub struct Palette {
    labels: Vec<SettingLabel>,
    by_id: HashMap<String, LabelId>,
}

impl Palette {
    pub fn new(labels: impl IntoIterator<Item = SettingLabel>) -> Result<Self> {
        let mut palette = Palette::default();
        for label in labels {
            palette.intern(label)?;
        }
        Ok(palette)
    }

    /// Adds `label` if its id is new; returns the existing id if an equal
    /// label is already present, and an error if the angles disagree.
    pub fn intern(&mut self, label: SettingLabel) -> Result<LabelId> {
        if let Some(&id) = self.by_id.get(label.id()) {
            let existing = &self.labels[id.0 as usize];
            if !existing.same_as(&label) {
                return Err(Error::ConflictingLabel {
                    id: label.id,
                    first: existing.angle,
                    second: label.angle,
                });
            }
            return Ok(id);
        }
        let id = u16::try_from(self.labels.len())
            .map(LabelId)
            .map_err(|_| Error::InvalidArgument("too many labels in palette".into()))?;
        self.by_id.insert(label.id.clone(), id);
        self.labels.push(label);
        Ok(id)
    }

    pub fn lookup(&self, id: &str) -> Result<LabelId> {
        self.by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(id.to_string()))
    }

    /// Resolves a full label, checking that the angle matches the palette.
    pub fn resolve(&self, label: &SettingLabel) -> Result<LabelId> {
        let id = self.lookup(label.id())?;
        let existing = self.get(id);
        if !existing.same_as(label) {
            return Err(Error::ConflictingLabel {
                id: label.id.clone(),
                first: existing.angle,
                second: label.angle,
            });
        }
        Ok(id)
    }

    pub fn get(&self, id: LabelId) -> &SettingLabel {
        &self.labels[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[SettingLabel] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.labels.len()).map(|i| LabelId(i as u16))
    }
}

/// Station separation, signal speed and the hidden-variable start time.
///
/// Measurement times are passed per trial; [`Geometry::check_times`] enforces
/// that `t0` precedes both retarded times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    separation: f64,
    signal_speed: f64,
    t0: f64,
}

impl Geometry {
    pub fn new(separation: f64, signal_speed: f64, t0: f64) -> Result<Self> {
        if !(separation.is_finite() && separation > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "separation must be positive, got {separation}"
            )));
        }
        if !(signal_speed.is_finite() && signal_speed > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "signal speed must be positive, got {signal_speed}"
            )));
        }
        if t0.is_nan() {
            return Err(Error::InvalidGeometry("t0 is NaN".into()));
        }
        Ok(Geometry {
            separation,
            signal_speed,
            t0,
        })
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn signal_speed(&self) -> f64 {
        self.signal_speed
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Light travel time `L/c` between the stations.
    pub fn light_delay(&self) -> f64 {
        self.separation / self.signal_speed
    }

    pub fn check_times(&self, t1: f64, t2: f64) -> Result<()> {
        let delay = self.light_delay();
        if !(self.t0 < t1 - delay && self.t0 < t2 - delay) {
            return Err(Error::InvalidGeometry(format!(
                "t0 = {} must precede both retarded times ({}, {})",
                self.t0,
                t1 - delay,
                t2 - delay
            )));
        }
        Ok(())
    }
}

/// An externally sourced change of one station's setting.
#[derive(Clone, Debug, PartialEq)]
pub struct Intervention {
    pub station: Station,
    pub decision_time: f64,
    pub delay: f64,
    pub new_label: SettingLabel,
    pub source_tag: String,
}

impl Intervention {
    pub fn effect_time(&self) -> f64 {
        self.decision_time + self.delay
    }
}

/// Deterministic part of a schedule.
#[derive(Clone, Debug)]
pub enum BaseTimeline {
    /// `initial` from `start`, then each `(switch_time, label)` in order.
    Steps {
        start: f64,
        initial: LabelId,
        switches: Vec<(f64, LabelId)>,
    },
    /// Cycles through `cycle`, holding each label for `dwell`; the label
    /// `cycle[0]` starts at `phase` (and at `phase + k·dwell·len`).
    Periodic {
        start: f64,
        dwell: f64,
        phase: f64,
        cycle: Vec<LabelId>,
    },
}

impl BaseTimeline {
    pub fn constant(start: f64, label: LabelId) -> Self {
        BaseTimeline::Steps {
            start,
            initial: label,
            switches: Vec::new(),
        }
    }

    pub fn start(&self) -> f64 {
        match self {
            BaseTimeline::Steps { start, .. } | BaseTimeline::Periodic { start, .. } => *start,
        }
    }

    fn validate(&self, palette: &Palette) -> Result<()> {
        let in_palette = |id: LabelId| {
            if (id.0 as usize) < palette.len() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "label index {} not in palette",
                    id.0
                )))
            }
        };
        match self {
            BaseTimeline::Steps {
                start,
                initial,
                switches,
            } => {
                if start.is_nan() {
                    return Err(Error::InvalidArgument("timeline start is NaN".into()));
                }
                in_palette(*initial)?;
                let mut prev = *start;
                for (i, &(t, id)) in switches.iter().enumerate() {
                    in_palette(id)?;
                    let ok = if i == 0 { t >= prev } else { t > prev };
                    if !ok || !t.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "switch times must be strictly increasing from the start; got {t} after {prev}"
                        )));
                    }
                    prev = t;
                }
            }
            BaseTimeline::Periodic {
                start,
                dwell,
                phase,
                cycle,
            } => {
                if start.is_nan() || !phase.is_finite() {
                    return Err(Error::InvalidArgument(
                        "periodic start/phase must be numbers".into(),
                    ));
                }
                if !(dwell.is_finite() && *dwell > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "periodic dwell must be positive, got {dwell}"
                    )));
                }
                if cycle.is_empty() {
                    return Err(Error::InvalidArgument("periodic cycle is empty".into()));
                }
                for &id in cycle {
                    in_palette(id)?;
                }
            }
        }
        Ok(())
    }

    /// The most recent switch at or before `t` and the label it set.
    /// `t` must not precede the start.
    fn last_switch(&self, t: f64) -> (f64, LabelId) {
        match self {
            BaseTimeline::Steps {
                start,
                initial,
                switches,
            } => {
                let idx = switches.partition_point(|&(s, _)| s <= t);
                if idx == 0 {
                    (*start, *initial)
                } else {
                    switches[idx - 1]
                }
            }
            BaseTimeline::Periodic {
                start,
                dwell,
                phase,
                cycle,
            } => {
                let k = ((t - phase) / dwell).floor();
                let idx = (k as i64).rem_euclid(cycle.len() as i64) as usize;
                let switch_time = (phase + k * dwell).max(*start);
                (switch_time, cycle[idx])
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Override {
    effect: f64,
    decision: f64,
    label: LabelId,
    tag: u32,
}

/// Effective setting timeline of one station.
#[derive(Clone, Debug)]
pub struct SettingSchedule {
    station: Station,
    palette: Arc<Palette>,
    base: BaseTimeline,
    // sorted by effect time; equal effect times keep insertion order
    overrides: Vec<Override>,
    tags: Vec<String>,
}

impl SettingSchedule {
    pub fn new(station: Station, palette: Arc<Palette>, base: BaseTimeline) -> Result<Self> {
        base.validate(&palette)?;
        Ok(SettingSchedule {
            station,
            palette,
            base,
            overrides: Vec::new(),
            tags: Vec::new(),
        })
    }

    pub fn with_interventions(
        mut self,
        interventions: impl IntoIterator<Item = Intervention>,
    ) -> Result<Self> {
        for iv in interventions {
            if iv.station != self.station {
                return Err(Error::InvalidArgument(format!(
                    "intervention for station {} added to schedule of station {}",
                    iv.station, self.station
                )));
            }
            let label = self.palette.resolve(&iv.new_label)?;
            self.push_override(iv.decision_time, iv.delay, label, &iv.source_tag)?;
        }
        self.sort_overrides();
        Ok(self)
    }

    /// Adds interventions given by palette index, all sharing one source tag.
    pub fn with_generated(
        mut self,
        items: impl IntoIterator<Item = (f64, f64, LabelId)>,
        source_tag: &str,
    ) -> Result<Self> {
        for (decision, delay, label) in items {
            if (label.0 as usize) >= self.palette.len() {
                return Err(Error::InvalidArgument(format!(
                    "label index {} not in palette",
                    label.0
                )));
            }
            self.push_override(decision, delay, label, source_tag)?;
        }
        self.sort_overrides();
        Ok(self)
    }

    fn push_override(
        &mut self,
        decision: f64,
        delay: f64,
        label: LabelId,
        tag: &str,
    ) -> Result<()> {
        if !decision.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "decision time {decision} is not finite"
            )));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "intervention delay must be >= 0, got {delay}"
            )));
        }
        let tag = match self.tags.iter().rposition(|t| t == tag) {
            Some(i) => i as u32,
            None => {
                self.tags.push(tag.to_string());
                (self.tags.len() - 1) as u32
            }
        };
        self.overrides.push(Override {
            effect: decision + delay,
            decision,
            label,
            tag,
        });
        Ok(())
    }

    fn sort_overrides(&mut self) {
        self.overrides.sort_by(|x, y| x.effect.total_cmp(&y.effect));
    }

    pub fn station(&self) -> Station {
        self.station
    }

    pub fn palette(&self) -> &Arc<Palette> {
        &self.palette
    }

    pub fn base(&self) -> &BaseTimeline {
        &self.base
    }

    pub fn start(&self) -> f64 {
        self.base.start()
    }

    pub fn intervention_count(&self) -> usize {
        self.overrides.len()
    }

    /// The interventions in effect-time order.
    pub fn interventions(&self) -> impl Iterator<Item = Intervention> + '_ {
        self.overrides.iter().map(|o| Intervention {
            station: self.station,
            decision_time: o.decision,
            delay: o.effect - o.decision,
            new_label: self.palette.get(o.label).clone(),
            source_tag: self.tags[o.tag as usize].clone(),
        })
    }

    /// Label at `t` of the timeline made of the base plus the interventions
    /// decided at or before `cutoff` (all of them when `cutoff` is `None`).
    fn resolve(&self, t: f64, cutoff: Option<f64>) -> Result<LabelId> {
        let start = self.base.start();
        if t.is_nan() || t < start {
            return Err(Error::UndefinedTime { t, start });
        }
        let (base_time, base_label) = self.base.last_switch(t);
        let end = self.overrides.partition_point(|o| o.effect <= t);
        // Interventions win ties with a base switch at the same instant.
        for o in self.overrides[..end].iter().rev() {
            if o.effect < base_time {
                break;
            }
            if cutoff.is_none_or(|c| o.decision <= c) {
                return Ok(o.label);
            }
        }
        Ok(base_label)
    }

    pub fn value_id_at(&self, t: f64) -> Result<LabelId> {
        self.resolve(t, None)
    }

    /// Setting in force at `t` (right-continuous).
    pub fn value_at(&self, t: f64) -> Result<&SettingLabel> {
        Ok(self.palette.get(self.value_id_at(t)?))
    }

    pub fn simple_retarded_id(&self, t_meas: f64, geom: &Geometry) -> Result<LabelId> {
        self.value_id_at(t_meas - geom.light_delay())
    }

    /// This station's setting as seen from the far station measuring at
    /// `t_meas`: the value at `t_meas − L/c`.
    pub fn simple_retarded(&self, t_meas: f64, geom: &Geometry) -> Result<&SettingLabel> {
        Ok(self.palette.get(self.simple_retarded_id(t_meas, geom)?))
    }

    pub fn predictive_retarded_id(
        &self,
        t_target: f64,
        t_observer_meas: f64,
        geom: &Geometry,
    ) -> Result<LabelId> {
        let cutoff = t_observer_meas - geom.light_delay();
        let start = self.base.start();
        if cutoff.is_nan() || cutoff < start {
            return Err(Error::UndefinedTime { t: cutoff, start });
        }
        if t_target < cutoff {
            return Err(Error::InvalidArgument(format!(
                "target time {t_target} precedes the light-cone cutoff {cutoff}"
            )));
        }
        self.resolve(t_target, Some(cutoff))
    }

    /// The value this station's setting is predicted to take at `t_target`,
    /// using only interventions decided no later than `t_observer_meas − L/c`.
    pub fn predictive_retarded(
        &self,
        t_target: f64,
        t_observer_meas: f64,
        geom: &Geometry,
    ) -> Result<&SettingLabel> {
        Ok(self
            .palette
            .get(self.predictive_retarded_id(t_target, t_observer_meas, geom)?))
    }
}

/// Which ends of a trial have retarded setting equal to the actual one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualityClass {
    BothEqual,
    #[serde(rename = "only-1-equal")]
    Only1Equal,
    #[serde(rename = "only-2-equal")]
    Only2Equal,
    NeitherEqual,
}

impl EqualityClass {
    pub const ALL: [EqualityClass; 4] = [
        EqualityClass::BothEqual,
        EqualityClass::Only1Equal,
        EqualityClass::Only2Equal,
        EqualityClass::NeitherEqual,
    ];

    pub fn from_flags(first_equal: bool, second_equal: bool) -> Self {
        match (first_equal, second_equal) {
            (true, true) => EqualityClass::BothEqual,
            (true, false) => EqualityClass::Only1Equal,
            (false, true) => EqualityClass::Only2Equal,
            (false, false) => EqualityClass::NeitherEqual,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EqualityClass::BothEqual => "both-equal",
            EqualityClass::Only1Equal => "only-1-equal",
            EqualityClass::Only2Equal => "only-2-equal",
            EqualityClass::NeitherEqual => "neither-equal",
        }
    }
}

/// Compares `a` with `a_r` and `b` with `b_r` by id.
pub fn classify_trial(
    a: &SettingLabel,
    a_r: &SettingLabel,
    b: &SettingLabel,
    b_r: &SettingLabel,
) -> EqualityClass {
    EqualityClass::from_flags(a == a_r, b == b_r)
}

#[derive(Debug, Deserialize)]
struct InterventionRow {
    station: u8,
    decision_time: f64,
    delay: f64,
    label: String,
    source_tag: String,
}

const INTERVENTION_HEADER: [&str; 5] = ["station", "decision_time", "delay", "label", "source_tag"];

/// Reads an intervention stream (`station,decision_time,delay,label,source_tag`
/// with a header row). Labels are resolved against `palette`.
pub fn read_interventions(path: &Path, palette: &Palette) -> Result<Vec<Intervention>> {
    let file = std::fs::File::open(path)?;
    read_interventions_from(file, palette, path)
}

pub fn read_interventions_from<R: Read>(
    reader: R,
    palette: &Palette,
    path: &Path,
) -> Result<Vec<Intervention>> {
    read_rows(reader, palette, path, None)
}

/// Reads only the rows for `station`; other rows are checked for format but
/// their labels are not resolved, so one file can serve both stations.
pub fn read_station_interventions(
    path: &Path,
    palette: &Palette,
    station: Station,
) -> Result<Vec<Intervention>> {
    let file = std::fs::File::open(path)?;
    read_rows(file, palette, path, Some(station))
}

fn read_rows<R: Read>(
    reader: R,
    palette: &Palette,
    path: &Path,
    only: Option<Station>,
) -> Result<Vec<Intervention>> {
    let malformed = |row: usize, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(INTERVENTION_HEADER) {
        return Err(malformed(
            0,
            format!("expected header {}", INTERVENTION_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<InterventionRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| malformed(row, e.to_string()))?;
        let station = Station::try_from(rec.station).map_err(|e| malformed(row, e))?;
        if !rec.decision_time.is_finite() {
            return Err(malformed(row, "decision_time must be finite".into()));
        }
        if !(rec.delay.is_finite() && rec.delay >= 0.0) {
            return Err(malformed(
                row,
                format!("delay must be >= 0, got {}", rec.delay),
            ));
        }
        if only.is_some_and(|s| s != station) {
            continue;
        }
        let id = palette
            .lookup(&rec.label)
            .map_err(|e| malformed(row, e.to_string()))?;
        out.push(Intervention {
            station,
            decision_time: rec.decision_time,
            delay: rec.delay,
            new_label: palette.get(id).clone(),
            source_tag: rec.source_tag,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn palette() -> Arc<Palette> {
        Arc::new(
            Palette::new([
                SettingLabel::new("a", std::f64::consts::FRAC_PI_2),
                SettingLabel::new("a'", 0.0),
            ])
            .unwrap(),
        )
    }

    const A: LabelId = LabelId(0);
    const A2: LabelId = LabelId(1);

    fn constant(label: LabelId) -> SettingSchedule {
        SettingSchedule::new(
            Station::One,
            palette(),
            BaseTimeline::constant(-100.0, label),
        )
        .unwrap()
    }

    fn switching(at: f64) -> SettingSchedule {
        SettingSchedule::new(
            Station::One,
            palette(),
            BaseTimeline::Steps {
                start: -100.0,
                initial: A,
                switches: vec![(at, A2)],
            },
        )
        .unwrap()
    }

    fn iv(decision: f64, delay: f64, label: &str) -> Intervention {
        let p = palette();
        Intervention {
            station: Station::One,
            decision_time: decision,
            delay,
            new_label: p.get(p.lookup(label).unwrap()).clone(),
            source_tag: "test".into(),
        }
    }

    #[test]
    fn value_at_examples() {
        assert_eq!(constant(A).value_at(7.0).unwrap().id(), "a");
        assert_eq!(switching(5.0).value_at(5.0).unwrap().id(), "a'");
        assert_eq!(switching(5.0).value_at(4.999).unwrap().id(), "a");

        let s = constant(A)
            .with_interventions([iv(4.0, 1.0, "a'")])
            .unwrap();
        assert_eq!(s.value_at(4.5).unwrap().id(), "a");
        assert_eq!(s.value_at(5.0).unwrap().id(), "a'");
    }

    #[test]
    fn value_before_start_is_an_error() {
        let err = constant(A).value_at(-100.5).unwrap_err();
        assert!(matches!(err, Error::UndefinedTime { .. }));
        assert!(constant(A).value_at(-100.0).is_ok());
    }

    #[test]
    fn intervention_overrides_until_next_base_switch() {
        let s = switching(5.0)
            .with_interventions([iv(2.0, 0.0, "a'")])
            .unwrap();
        assert_eq!(s.value_at(1.0).unwrap().id(), "a");
        assert_eq!(s.value_at(3.0).unwrap().id(), "a'");
        // base switch to a' at 5; another intervention back to a at 6
        let s = s.with_interventions([iv(6.0, 0.0, "a")]).unwrap();
        assert_eq!(s.value_at(5.5).unwrap().id(), "a'");
        assert_eq!(s.value_at(6.0).unwrap().id(), "a");

        // a later base switch ends an intervention
        let back = SettingSchedule::new(
            Station::One,
            palette(),
            BaseTimeline::Steps {
                start: 0.0,
                initial: A,
                switches: vec![(5.0, A2), (8.0, A)],
            },
        )
        .unwrap()
        .with_interventions([iv(6.0, 0.0, "a")])
        .unwrap();
        assert_eq!(back.value_at(6.5).unwrap().id(), "a");
        assert_eq!(back.value_at(8.5).unwrap().id(), "a");
    }

    #[test]
    fn intervention_wins_tie_with_base_switch() {
        let s = switching(5.0)
            .with_interventions([iv(4.0, 1.0, "a")])
            .unwrap();
        assert_eq!(s.value_at(5.0).unwrap().id(), "a");
    }

    #[test]
    fn simple_retarded_examples() {
        let geom = Geometry::new(2.0, 1.0, -50.0).unwrap();
        assert_eq!(constant(A).simple_retarded(3.3, &geom).unwrap().id(), "a");
        assert_eq!(
            switching(5.0).simple_retarded(6.0, &geom).unwrap().id(),
            "a"
        );
        assert_eq!(
            switching(5.0).simple_retarded(7.0, &geom).unwrap().id(),
            "a'"
        );
    }

    #[test]
    fn periodic_retarded_equals_actual_at_full_period() {
        // dwell 1, two labels: the timeline repeats every 2 time units
        let s = SettingSchedule::new(
            Station::One,
            palette(),
            BaseTimeline::Periodic {
                start: -10.0,
                dwell: 1.0,
                phase: 0.0,
                cycle: vec![A, A2],
            },
        )
        .unwrap();
        let geom = Geometry::new(2.0, 1.0, -10.0).unwrap();
        for k in 0..64 {
            let t = 0.125 + 0.25 * k as f64;
            assert_eq!(s.simple_retarded(t, &geom).unwrap(), s.value_at(t).unwrap());
        }
        assert_eq!(s.value_at(0.5).unwrap().id(), "a");
        assert_eq!(s.value_at(1.5).unwrap().id(), "a'");
        assert_eq!(s.value_at(1.0).unwrap().id(), "a'");
        assert_eq!(s.value_at(-0.5).unwrap().id(), "a'");
    }

    #[test]
    fn predictive_retarded_examples() {
        let geom = Geometry::new(2.0, 1.0, -50.0).unwrap();

        // deterministic evolution is predicted exactly
        let s = switching(5.0);
        assert_eq!(
            s.predictive_retarded(6.0, 6.0, &geom).unwrap(),
            s.value_at(6.0).unwrap()
        );

        // decision at 5.5 is after the cutoff 4.0 and is ignored
        let s = constant(A)
            .with_interventions([iv(5.5, 0.0, "a'")])
            .unwrap();
        assert_eq!(s.predictive_retarded(6.0, 6.0, &geom).unwrap().id(), "a");
        assert_eq!(s.value_at(6.0).unwrap().id(), "a'");

        // only interventions, t1 = t2: the two definitions coincide
        let s = constant(A)
            .with_interventions([iv(1.0, 0.0, "a'"), iv(3.0, 0.0, "a"), iv(3.5, 0.0, "a'")])
            .unwrap();
        for t in [0.5, 2.5, 3.2, 4.0, 5.4, 5.6, 9.0] {
            assert_eq!(
                s.predictive_retarded(t, t, &geom).unwrap(),
                s.simple_retarded(t, &geom).unwrap(),
                "t = {t}"
            );
        }
    }

    #[test]
    fn predictive_retarded_rejects_bad_times() {
        let geom = Geometry::new(2.0, 1.0, -50.0).unwrap();
        let s = constant(A);
        assert!(matches!(
            s.predictive_retarded(1.0, -99.0, &geom),
            Err(Error::UndefinedTime { .. })
        ));
        assert!(matches!(
            s.predictive_retarded(1.0, 10.0, &geom),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn classify_examples() {
        let p = palette();
        let a = p.get(A);
        let a2 = p.get(A2);
        let b = SettingLabel::new("b", -std::f64::consts::FRAC_PI_4);
        let b2 = SettingLabel::new("b'", std::f64::consts::FRAC_PI_4);
        assert_eq!(classify_trial(a, a, &b, &b), EqualityClass::BothEqual);
        assert_eq!(classify_trial(a, a, &b, &b2), EqualityClass::Only1Equal);
        assert_eq!(classify_trial(a, a2, &b, &b), EqualityClass::Only2Equal);
        assert_eq!(classify_trial(a, a2, &b, &b2), EqualityClass::NeitherEqual);
    }

    #[test]
    fn geometry_validation() {
        assert!(Geometry::new(0.0, 1.0, 0.0).is_err());
        assert!(Geometry::new(1.0, -1.0, 0.0).is_err());
        let g = Geometry::new(2.0, 1.0, 0.0).unwrap();
        assert!(g.check_times(2.5, 2.5).is_ok());
        assert!(g.check_times(2.0, 3.0).is_err());
    }

    #[test]
    fn labels_and_palette() {
        let l = SettingLabel::new("b", -std::f64::consts::FRAC_PI_4);
        assert!((l.angle() - 1.75 * std::f64::consts::PI).abs() < 1e-15);
        let mut p = Palette::new([l.clone()]).unwrap();
        assert_eq!(
            p.intern(SettingLabel::new("b", 1.75 * std::f64::consts::PI))
                .unwrap(),
            LabelId(0)
        );
        assert!(matches!(
            p.intern(SettingLabel::new("b", 0.3)),
            Err(Error::ConflictingLabel { .. })
        ));
        assert!(p.lookup("nope").is_err());
    }

    #[test]
    fn rejects_non_increasing_switches_and_negative_delay() {
        let bad = SettingSchedule::new(
            Station::One,
            palette(),
            BaseTimeline::Steps {
                start: 0.0,
                initial: A,
                switches: vec![(2.0, A2), (2.0, A)],
            },
        );
        assert!(bad.is_err());
        assert!(constant(A)
            .with_interventions([iv(1.0, -0.5, "a'")])
            .is_err());
        let mut other = iv(1.0, 0.0, "a'");
        other.station = Station::Two;
        assert!(constant(A).with_interventions([other]).is_err());
    }

    #[test]
    fn intervention_csv() {
        let text =
            "station,decision_time,delay,label,source_tag\n1,3,0,a',rng\n1, 4.5 ,0.25,a,person\n";
        let p = palette();
        let ivs = read_interventions_from(text.as_bytes(), &p, Path::new("mem")).unwrap();
        assert_eq!(ivs.len(), 2);
        assert_eq!(ivs[1].effect_time(), 4.75);
        assert_eq!(ivs[1].source_tag, "person");

        for bad in [
            "station,decision_time,delay,label\n1,3,0,a'\n",
            "station,decision_time,delay,label,source_tag\n3,3,0,a',x\n",
            "station,decision_time,delay,label,source_tag\n1,3,-1,a',x\n",
            "station,decision_time,delay,label,source_tag\n1,3,0,zz,x\n",
            "station,decision_time,delay,label,source_tag\n1,abc,0,a,x\n",
        ] {
            let err = read_interventions_from(bad.as_bytes(), &p, Path::new("mem")).unwrap_err();
            assert!(matches!(err, Error::MalformedRow { .. }), "{bad}: {err}");
        }
    }

    fn arb_schedule() -> impl Strategy<Value = SettingSchedule> {
        let switches = prop::collection::vec((0.01f64..5.0, 0u16..2), 0..8);
        let ivs = prop::collection::vec((0.0f64..40.0, 0.0f64..3.0, 0u16..2), 0..12);
        (switches, ivs).prop_map(|(gaps, ivs)| {
            let mut t = 0.0;
            let switches = gaps
                .into_iter()
                .map(|(g, l)| {
                    t += g;
                    (t, LabelId(l))
                })
                .collect();
            SettingSchedule::new(
                Station::One,
                palette(),
                BaseTimeline::Steps {
                    start: -20.0,
                    initial: A,
                    switches,
                },
            )
            .unwrap()
            .with_generated(ivs.into_iter().map(|(d, w, l)| (d, w, LabelId(l))), "p")
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn simple_retarded_is_shifted_value(s in arb_schedule(), t in 0.0f64..50.0, l in 0.1f64..10.0) {
            let g = Geometry::new(l, 1.0, -30.0).unwrap();
            prop_assert_eq!(s.simple_retarded_id(t, &g).unwrap(), s.value_id_at(t - l).unwrap());
        }

        #[test]
        fn right_continuity_at_events(s in arb_schedule()) {
            let mut times: Vec<f64> = s.interventions().map(|i| i.effect_time()).collect();
            if let BaseTimeline::Steps { switches, .. } = s.base() {
                times.extend(switches.iter().map(|x| x.0));
            }
            times.sort_by(f64::total_cmp);
            times.dedup();
            let gap = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            prop_assume!(gap > 1e-9);
            let eps = (gap / 4.0).min(1e-3);
            for &ts in &times {
                // value just after the event equals value at the event
                prop_assert_eq!(s.value_id_at(ts).unwrap(), s.value_id_at(ts + eps).unwrap());
            }
        }

        #[test]
        fn predictive_without_interventions_is_value(
            gaps in prop::collection::vec(0.01f64..5.0, 0..8),
            t_target in 0.0f64..30.0,
            back in 0.0f64..10.0,
        ) {
            let mut t = 0.0;
            let switches = gaps.iter().enumerate().map(|(i, g)| { t += g; (t, LabelId((i % 2) as u16 ^ 1)) }).collect();
            let s = SettingSchedule::new(Station::One, palette(), BaseTimeline::Steps { start: -20.0, initial: A, switches }).unwrap();
            let g = Geometry::new(1.0, 1.0, -30.0).unwrap();
            // observer measures such that the cutoff is `back` before the target
            let t_obs = t_target - back + 1.0;
            prop_assert_eq!(s.predictive_retarded_id(t_target, t_obs, &g).unwrap(), s.value_id_at(t_target).unwrap());
        }

        #[test]
        fn interventions_only_definitions_coincide(
            ivs in prop::collection::vec((0.0f64..40.0, 0u16..2), 0..16),
            t in 0.0f64..45.0,
            l in 0.1f64..5.0,
        ) {
            let s = constant(A).with_generated(ivs.into_iter().map(|(d, lab)| (d, 0.0, LabelId(lab))), "p").unwrap();
            let g = Geometry::new(l, 1.0, -30.0).unwrap();
            prop_assert_eq!(s.predictive_retarded_id(t, t, &g).unwrap(), s.simple_retarded_id(t, &g).unwrap());
        }

        #[test]
        fn long_delays_make_retarded_equal_actual(
            s in arb_schedule(),
            t in 0.0f64..50.0,
            skew in -1.0f64..1.0,
        ) {
            // rebuild with every delay beyond L/c + |t1 - t2|
            let l = 1.5;
            let g = Geometry::new(l, 1.0, -30.0).unwrap();
            let (t1, t2) = (t, t + skew);
            let need = l + skew.abs();
            let ivs: Vec<_> = s.interventions().map(|mut i| { i.delay += need + 0.01; i }).collect();
            let s = SettingSchedule::new(Station::One, s.palette().clone(), s.base().clone()).unwrap().with_interventions(ivs).unwrap();
            prop_assert_eq!(s.predictive_retarded_id(t1, t2, &g).unwrap(), s.value_id_at(t1).unwrap());
        }
    }
}
