//! The JSON experiment document shared by every subcommand.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "tasks": [{"id": 1, "wcet": 1, "rel_deadline": 4, "period": 4,
//!              "exec_model": {"deterministic": {"c": 1}}}],
//!   "scheduler": {"policy": "cbs", "horizon": 20},
//!   "reservations": {"1": {"budget": 1, "period": 4}},
//!   "plant": {"model": {"A": [[0, 1], [2, -1]], "B": [[0], [1]]}, "period": 0.5},
//!   "control_task": {"exec": {"uniform": {"lo": 1, "hi": 10}}, "budget": 4,
//!                    "res_period": 10, "period": 20, "tick": 0.025,
//!                    "moc": {"kind": "cs", "max_delay": 4}},
//!   "sweep": {"n_systems": 20}
//! }
//! ```
//!
//! Every section is optional; a subcommand complains about the ones it
//! needs. Errors name the offending field by its path in the document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::MissConstraint;
use crate::control::{c2d, dlqr, ContinuousLti, CostWeights, DiscreteLti};
use crate::error::{Error, Result};
use crate::experiment::SweepConfig;
use crate::linalg::{self, Matrix};
use crate::moc::{CoSimConfig, CoSimSetup, MocKind, ServedTask};
use crate::sim::policy::MissDetection;
use crate::sim::{SchedulerConfig, SchedulerKind};
use crate::taskmodel::{ExecTimeModel, ReservationSpec, TaskId, TaskSpec, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Edf,
    FixedPriority,
    Cbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    pub policy: Policy,
    pub horizon: Tick,
    /// Fixed priorities, larger is more urgent.
    #[serde(default)]
    pub priorities: BTreeMap<TaskId, i64>,
    #[serde(default)]
    pub miss_detection: MissDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// State feedback `u = −K x`.
    #[default]
    Lqr,
    /// Observer-based output feedback.
    Lqg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseWeights {
    #[serde(with = "linalg::rows")]
    pub process: Matrix,
    #[serde(with = "linalg::rows")]
    pub measurement: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub model: ContinuousLti,
    /// Sample period in plant time units. Defaults to the control task's
    /// `period * tick` when that section is present.
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub weights: Option<CostWeights>,
    #[serde(default)]
    pub noise: Option<NoiseWeights>,
    #[serde(default)]
    pub controller: ControllerKind,
    /// Dropout probabilities at which `ρ(Ã)` is tabulated.
    #[serde(default)]
    pub mu_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlTaskSection {
    pub exec: ExecTimeModel,
    pub budget: Tick,
    pub res_period: Tick,
    pub period: Tick,
    /// Length of one tick in plant time units.
    pub tick: f64,
    pub moc: MocKind,
}

impl ControlTaskSection {
    pub fn served(&self) -> ServedTask {
        ServedTask {
            exec: self.exec.clone(),
            budget: self.budget,
            res_period: self.res_period,
            period: self.period,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub scheduler: Option<SchedulerSection>,
    #[serde(default)]
    pub reservations: BTreeMap<TaskId, ReservationSpec>,
    #[serde(default)]
    pub constraint: Option<MissConstraint>,
    #[serde(default)]
    pub plant: Option<PlantSection>,
    #[serde(default)]
    pub control_task: Option<ControlTaskSection>,
    #[serde(default)]
    pub cosim: Option<CoSimConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn missing(section: &str) -> Error {
    Error::config(section, "section is required by this command")
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<document>".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Task set and scheduler ready for [`crate::simulate`].
    pub fn simulation(&self) -> Result<(Vec<TaskSpec>, SchedulerConfig)> {
        let sec = self.scheduler.as_ref().ok_or_else(|| missing("scheduler"))?;
        if self.tasks.is_empty() {
            return Err(missing("tasks"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            t.validate(&format!("tasks[{i}]"))?;
        }
        let kind = match sec.policy {
            Policy::Edf => SchedulerKind::Edf,
            Policy::FixedPriority => SchedulerKind::FixedPriority {
                priorities: sec.priorities.clone(),
            },
            Policy::Cbs => SchedulerKind::CbsEdf {
                reservations: self.reservations.clone(),
            },
        };
        let sched = SchedulerConfig {
            kind,
            horizon: sec.horizon,
            miss_detection: sec.miss_detection,
        };
        sched.validate(&self.tasks).map_err(|e| match e {
            // Reservations live at the top level of the document.
            Error::Config { field, reason } => {
                Error::config(field.replace("scheduler.reservations", "reservations"), reason)
            }
            other => other,
        })?;
        Ok((self.tasks.clone(), sched))
    }

    pub fn plant(&self) -> Result<&PlantSection> {
        self.plant.as_ref().ok_or_else(|| missing("plant"))
    }

    pub fn control_task(&self) -> Result<&ControlTaskSection> {
        let c = self.control_task.as_ref().ok_or_else(|| missing("control_task"))?;
        c.served().validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::config(format!("control_task.{field}"), reason),
            other => other,
        })?;
        c.moc.validate("control_task.moc")?;
        if !(c.tick > 0.0 && c.tick.is_finite()) {
            return Err(Error::config("control_task.tick", "must be positive"));
        }
        Ok(c)
    }

    /// Sample period of the controller design.
    pub fn sample_period(&self) -> Result<f64> {
        let p = self.plant()?;
        match (p.period, &self.control_task) {
            (Some(t), _) if t > 0.0 && t.is_finite() => Ok(t),
            (Some(_), _) => Err(Error::config("plant.period", "must be positive")),
            (None, Some(c)) => Ok(c.period as f64 * c.tick),
            (None, None) => Err(Error::config(
                "plant.period",
                "needed when there is no control_task section",
            )),
        }
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let p = self.plant()?;
        let w = p
            .weights
            .clone()
            .unwrap_or_else(|| CostWeights::identity(p.model.state_dim(), p.model.input_dim()));
        w.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::config(format!("plant.{field}"), reason),
            other => other,
        })?;
        Ok(w)
    }

    /// Discretized plant and its LQR gain.
    pub fn design(&self) -> Result<(DiscreteLti, Matrix)> {
        let p = self.plant()?;
        let d = c2d(&p.model, self.sample_period()?)?;
        let k = dlqr(&d.a, &d.b, &self.weights()?)?.k;
        Ok((d, k))
    }

    pub fn cosim_setup(&self) -> Result<CoSimSetup> {
        let c = self.control_task()?;
        let p = self.plant()?;
        let d = c2d(&p.model, c.period as f64 * c.tick)?;
        let k = dlqr(&d.a, &d.b, &self.weights()?)?.k;
        Ok(CoSimSetup {
            plant: p.model.clone(),
            gain: k,
            tick: c.tick,
            moc: c.moc,
            task: c.served(),
        })
    }

    pub fn cosim_config(&self, seed: Option<u64>) -> CoSimConfig {
        let mut c = self.cosim.clone().unwrap_or_default();
        if let Some(s) = seed.or(self.seed) {
            c.seed = s;
        }
        c
    }

    pub fn sweep_config(&self, seed: Option<u64>) -> Result<SweepConfig> {
        let mut s = self.sweep.clone().unwrap_or_default();
        if let Some(v) = seed.or(self.seed) {
            s.seed = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OVERLOAD: &str = r#"{
        "tasks": [
            {"id": 1, "wcet": 2, "rel_deadline": 4, "period": 4,
             "exec_model": {"scripted": {"script": [2, 2, 2], "fallback": {"deterministic": {"c": 1}}}}},
            {"id": 2, "wcet": 2, "rel_deadline": 5, "period": 5, "exec_model": {"deterministic": {"c": 2}}},
            {"id": 3, "wcet": 2, "rel_deadline": 6, "period": 6, "exec_model": {"deterministic": {"c": 2}}}
        ],
        "scheduler": {"policy": "cbs", "horizon": 20},
        "reservations": {"1": {"budget": 1, "period": 4}, "2": {"budget": 2, "period": 5},
                         "3": {"budget": 2, "period": 6}}
    }"#;

    #[test]
    fn parses_a_cbs_document() {
        let c = Config::from_json(OVERLOAD).unwrap();
        let (tasks, sched) = c.simulation().unwrap();
        let trace = crate::simulate(&tasks, &sched, 0).unwrap();
        assert_eq!(trace.count(2, crate::EventKind::DeadlineMiss), 0);
    }

    #[test]
    fn parse_errors_carry_the_path() {
        let bad = OVERLOAD.replace(r#""budget": 2, "period": 5"#, r#""budget": "two", "period": 5"#);
        match Config::from_json(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "reservations.2.budget"),
            other => panic!("{other:?}"),
        }
        let bad = OVERLOAD.replace(r#""horizon": 20"#, r#""horizon": 20, "speed": 3"#);
        match Config::from_json(&bad) {
            Err(Error::Config { field, reason }) => {
                assert_eq!(field, "scheduler.speed");
                assert!(reason.contains("unknown field"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let bad = OVERLOAD.replace(r#""3": {"budget": 2, "period": 6}"#, r#""4": {"budget": 2, "period": 6}"#);
        match Config::from_json(&bad).unwrap().simulation() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "reservations.3"),
            other => panic!("{other:?}"),
        }
        match Config::default().plant() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "plant"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn control_sections() {
        let c = Config::from_json(
            r#"{
            "plant": {"model": {"A": [[0, 1], [2, -1]], "B": [[0], [1]]}},
            "control_task": {"exec": {"uniform": {"lo": 1, "hi": 10}}, "budget": 4,
                             "res_period": 10, "period": 20, "tick": 0.025,
                             "moc": {"kind": "cs", "max_delay": 4}}
        }"#,
        )
        .unwrap();
        assert!((c.sample_period().unwrap() - 0.5).abs() < 1e-15);
        let (_, k) = c.design().unwrap();
        assert_eq!(k.shape(), (1, 2));
        assert_eq!(c.cosim_setup().unwrap().moc, MocKind::Cs { max_delay: 4 });
        assert_eq!(c.cosim_config(Some(9)).seed, 9);
    }
}
