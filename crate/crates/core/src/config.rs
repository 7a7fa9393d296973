//! Scenario configuration files.
//!
//! Flat `key = value` lines grouped in sections; `#` starts a comment.
//!
//! ```text
//! [geometry]
//! separation = 1          # L, length units
//! signal_speed = 1        # c
//! t0 = -10                # hidden-variable start; schedules begin here
//!
//! [model]
//! name = hardy-singlet    # or quantum-singlet
//!
//! [station1]              # same keys for [station2]
//! labels = a:pi/2, a':0   # id:angle, angle in radians or as a multiple of pi
//! schedule = periodic     # periodic | random_switch | stream
//! period = 1              # periodic: time each label is held
//! phase = 0               # periodic: time at which cycle[0] starts
//! cycle = a, a'           # periodic: label order (default: labels order)
//! rate = 8                # random_switch: decisions per unit time
//! stream = interventions.csv  # stream: path, relative to the config file
//! initial = a             # random_switch/stream: constant base label
//!
//! [run]
//! n_trials = 100000
//! spacing = 0.25          # time between trials
//! start = 0.125           # time of the first trial
//! intervention_delay = 0  # delay applied to random_switch interventions
//! definition = simple     # simple | predictive
//! seed = 1
//! min_count = 100
//! quartet = a, a', b, b'  # labels used as a, a', b, b' (default: first two per station)
//! ```
//!
//! Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::angle::parse_angle;
use crate::error::{Error, Result};
use crate::estimation::DEFAULT_MIN_COUNT;
use crate::models::Model;
use crate::spacetime::{Geometry, SettingLabel};

/// Which notion of retarded setting a run records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetardedDefinition {
    Simple,
    Predictive,
}

impl FromStr for RetardedDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "simple" => Ok(RetardedDefinition::Simple),
            "predictive" => Ok(RetardedDefinition::Predictive),
            other => Err(Error::InvalidArgument(format!(
                "retarded definition must be simple or predictive, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for RetardedDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetardedDefinition::Simple => "simple",
            RetardedDefinition::Predictive => "predictive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleKind {
    /// Deterministic cycle, each label held for `period`.
    Periodic {
        period: f64,
        phase: f64,
        cycle: Vec<String>,
    },
    /// Constant base plus interventions at exponential intervals.
    RandomSwitch { rate: f64, initial: String },
    /// Constant base plus interventions read from a CSV file.
    Stream { path: PathBuf, initial: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationConfig {
    pub labels: Vec<SettingLabel>,
    pub schedule: ScheduleKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    pub model: Model,
    pub stations: [StationConfig; 2],
    pub intervention_delay: f64,
    pub definition: RetardedDefinition,
    pub n_trials: u64,
    pub spacing: f64,
    pub start: f64,
    pub seed: u64,
    pub min_count: u64,
    /// Label ids used as `a, a', b, b'`.
    pub quartet: [String; 4],
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Key/value entries of one section.
struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn require(&mut self, key: &str) -> Result<(String, usize)> {
        self.take(key).ok_or_else(|| Error::Config {
            line: self.line,
            message: format!("[{}] is missing required key {key:?}", self.name),
        })
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| Error::Config {
                line,
                message: format!("bad value for {key}: {e}"),
            }),
        }
    }

    fn parse_required<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let line = self.line;
        self.parse(key)?.ok_or_else(|| Error::Config {
            line,
            message: format!("[{}] is missing required key {key:?}", self.name),
        })
    }

    fn finish(self) -> Result<()> {
        if let Some((k, e)) = self.entries.iter().find(|(_, e)| !e.used) {
            return Err(Error::Config {
                line: e.line,
                message: format!("unknown key {k:?} in [{}]", self.name),
            });
        }
        Ok(())
    }
}

const SECTIONS: [&str; 5] = ["geometry", "model", "station1", "station2", "run"];

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            if sections.contains_key(&name) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate section [{name}]"),
                });
            }
            sections.insert(
                name.clone(),
                Section {
                    name: name.clone(),
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected key = value, got {content:?}"),
            });
        };
        let Some(section) = current.as_ref().and_then(|c| sections.get_mut(c)) else {
            return Err(Error::Config {
                line,
                message: "key outside of any section".into(),
            });
        };
        let key = key.trim().to_string();
        let entry = Entry {
            value: value.trim().to_string(),
            line,
            used: false,
        };
        if section.entries.insert(key.clone(), entry).is_some() {
            return Err(Error::Config {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
    }
    Ok(sections)
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_labels(value: &str, line: usize) -> Result<Vec<SettingLabel>> {
    let mut out = Vec::new();
    for item in list(value) {
        let (id, angle) = item.split_once(':').ok_or_else(|| Error::Config {
            line,
            message: format!("label {item:?} must be written id:angle"),
        })?;
        let angle = parse_angle(angle).map_err(|e| Error::Config {
            line,
            message: e.to_string(),
        })?;
        let id = id.trim();
        if id.is_empty() || out.iter().any(|l: &SettingLabel| l.id() == id) {
            return Err(Error::Config {
                line,
                message: format!("label ids must be unique and non-empty ({id:?})"),
            });
        }
        out.push(SettingLabel::new(id, angle));
    }
    if out.is_empty() {
        return Err(Error::Config {
            line,
            message: "a station needs at least one label".into(),
        });
    }
    Ok(out)
}

fn station(mut sec: Section, base_dir: &Path) -> Result<StationConfig> {
    let (labels, line) = sec.require("labels")?;
    let labels = parse_labels(&labels, line)?;
    let known = |id: &str, line: usize| -> Result<String> {
        if labels.iter().any(|l| l.id() == id) {
            Ok(id.to_string())
        } else {
            Err(Error::Config {
                line,
                message: format!("label {id:?} is not declared in labels"),
            })
        }
    };
    let (kind, kind_line) = sec.require("schedule")?;
    let initial = match sec.take("initial") {
        Some((v, line)) => known(&v, line)?,
        None => labels[0].id().to_string(),
    };
    let schedule = match kind.as_str() {
        "periodic" => {
            let period: f64 = sec.parse_required("period")?;
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::Config {
                    line: kind_line,
                    message: format!("period must be positive, got {period}"),
                });
            }
            let phase = sec.parse::<f64>("phase")?.unwrap_or(0.0);
            let cycle = match sec.take("cycle") {
                Some((v, line)) => list(&v)
                    .iter()
                    .map(|id| known(id, line))
                    .collect::<Result<Vec<_>>>()?,
                None => labels.iter().map(|l| l.id().to_string()).collect(),
            };
            ScheduleKind::Periodic {
                period,
                phase,
                cycle,
            }
        }
        "random_switch" => {
            let rate: f64 = sec.parse_required("rate")?;
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::Config {
                    line: kind_line,
                    message: format!("random_switch rate must be positive, got {rate}"),
                });
            }
            ScheduleKind::RandomSwitch { rate, initial }
        }
        "stream" => {
            let (path, _) = sec.require("stream")?;
            let path = PathBuf::from(path);
            let path = if path.is_relative() {
                base_dir.join(path)
            } else {
                path
            };
            ScheduleKind::Stream { path, initial }
        }
        other => {
            return Err(Error::Config {
                line: kind_line,
                message: format!(
                    "schedule must be periodic, random_switch or stream, got {other:?}"
                ),
            })
        }
    };
    sec.finish()?;
    Ok(StationConfig { labels, schedule })
}

impl ScenarioConfig {
    /// Parses config text; relative stream paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut sections = split_sections(text)?;
        let mut take = |name: &str| {
            sections.remove(name).ok_or_else(|| Error::Config {
                line: 0,
                message: format!("missing section [{name}]"),
            })
        };

        let mut geo = take("geometry")?;
        let geometry = Geometry::new(
            geo.parse_required("separation")?,
            geo.parse_required("signal_speed")?,
            geo.parse_required("t0")?,
        )?;
        geo.finish()?;

        let mut model_sec = take("model")?;
        let model: Model = model_sec.parse_required("name")?;
        model_sec.finish()?;

        let s1 = station(take("station1")?, base_dir)?;
        let s2 = station(take("station2")?, base_dir)?;

        let mut run = take("run")?;
        let n_trials: u64 = run.parse_required("n_trials")?;
        let spacing: f64 = run.parse_required("spacing")?;
        let start: f64 = run.parse::<f64>("start")?.unwrap_or(0.0);
        let intervention_delay = run.parse::<f64>("intervention_delay")?.unwrap_or(0.0);
        let definition = run
            .parse::<RetardedDefinition>("definition")?
            .unwrap_or(RetardedDefinition::Simple);
        let seed = run.parse::<u64>("seed")?.unwrap_or(0);
        let min_count = run.parse::<u64>("min_count")?.unwrap_or(DEFAULT_MIN_COUNT);
        let quartet = match run.take("quartet") {
            Some((v, line)) => {
                let q = list(&v);
                let ok = q.len() == 4
                    && s1.labels.iter().any(|l| l.id() == q[0])
                    && s1.labels.iter().any(|l| l.id() == q[1])
                    && s2.labels.iter().any(|l| l.id() == q[2])
                    && s2.labels.iter().any(|l| l.id() == q[3]);
                if !ok {
                    return Err(Error::Config {
                        line,
                        message: "quartet must list a, a' from station1 and b, b' from station2"
                            .into(),
                    });
                }
                [q[0].clone(), q[1].clone(), q[2].clone(), q[3].clone()]
            }
            None => {
                let pick = |s: &StationConfig, i: usize| {
                    s.labels[i.min(s.labels.len() - 1)].id().to_string()
                };
                [pick(&s1, 0), pick(&s1, 1), pick(&s2, 0), pick(&s2, 1)]
            }
        };
        let run_line = run.line;
        run.finish()?;

        let config = ScenarioConfig {
            geometry,
            model,
            stations: [s1, s2],
            intervention_delay,
            definition,
            n_trials,
            spacing,
            start,
            seed,
            min_count,
            quartet,
        };
        config.validate().map_err(|e| Error::Config {
            line: run_line,
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !self.start.is_finite() {
            return Err(Error::InvalidArgument("start must be finite".into()));
        }
        if !(self.intervention_delay.is_finite() && self.intervention_delay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "intervention_delay must be >= 0, got {}",
                self.intervention_delay
            )));
        }
        self.geometry.check_times(self.start, self.start)
    }

    /// Time of the last trial.
    pub fn end(&self) -> f64 {
        self.start + (self.n_trials - 1) as f64 * self.spacing
    }
}
