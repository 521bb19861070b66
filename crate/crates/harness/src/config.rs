use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use stackdyn::dynamics::RunConfig;
use stackdyn::equilibria::{ClassifyConfig, FieldKind, FindConfig};
use stackdyn::games::GameSpec;
use stackdyn::JointPoint;

use crate::error::{HarnessError, HarnessResult};

pub const SPEC_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Run,
    Classify,
    Find,
    SpectrumTrace,
    Lockin,
    Sweep,
}

impl Task {
    /// Config sections the task cannot run without.
    pub fn required_sections(self) -> &'static [&'static str] {
        match self {
            Task::Run | Task::SpectrumTrace => &["dynamics"],
            Task::Classify => &["classify"],
            Task::Find => &["find"],
            Task::Lockin => &["dynamics", "lockin"],
            Task::Sweep => &["dynamics", "sweep"],
        }
    }
}

/// Optional reference quantities reported alongside a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<JointPoint>,
    /// Level for the "iterations to threshold" metric: both covariance gaps
    /// for covariance games, else the distance to `target`, else `‖ω‖`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyTask {
    pub points: Vec<JointPoint>,
    #[serde(flatten)]
    pub config: ClassifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindTask {
    #[serde(flatten)]
    pub field: FieldKind,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(flatten)]
    pub config: FindConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockInTask {
    pub target: JointPoint,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub n0: u64,
    pub n_bar: u64,
    pub q0: f64,
    pub replicas: usize,
}

/// One sweep dimension: each value is a JSON merge patch applied to the base
/// config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl SweepAxis {
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => self.values[i].to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTask {
    pub axes: Vec<SweepAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTask {
    #[serde(flatten)]
    pub field: FieldKind,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub resolution: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub spec_version: String,
    pub game: GameSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<RunConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub find: Option<FindTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lockin: Option<LockInTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldTask>,
}

fn default_version() -> String {
    SPEC_VERSION.to_string()
}

/// Reads a config file into raw JSON.
pub fn read_value(path: &Path) -> HarnessResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("invalid JSON in {}: {e}", path.display())))
}

/// Checks that `sections` are present, then parses and validates.
pub fn parse_config(value: &Value, sections: &[&str]) -> HarnessResult<ExperimentConfig> {
    let obj = value.as_object().ok_or_else(|| HarnessError::config("config must be a JSON object"))?;
    for key in std::iter::once(&"game").chain(sections) {
        if obj.get(*key).is_none_or(Value::is_null) {
            return Err(HarnessError::missing(key));
        }
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value.clone()).map_err(|e| HarnessError::config(format!("config schema: {e}")))?;
    cfg.validate(sections)?;
    Ok(cfg)
}

/// Parses a config for `stackdyn run`: the task and its sections are required.
pub fn parse_run_config(value: &Value) -> HarnessResult<ExperimentConfig> {
    let task = value.get("task").ok_or_else(|| HarnessError::missing("task"))?;
    let task: Task = serde_json::from_value(task.clone())
        .map_err(|e| HarnessError::Config { field: Some("task".into()), message: format!("invalid task: {e}") })?;
    parse_config(value, task.required_sections())
}

impl ExperimentConfig {
    pub fn validate(&self, sections: &[&str]) -> HarnessResult<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(HarnessError::Config {
                field: Some("spec_version".into()),
                message: format!("unsupported spec_version \"{}\" (expected \"{SPEC_VERSION}\")", self.spec_version),
            });
        }
        self.game.validate()?;
        let dims = self.game.build()?.dims();
        if let Some(d) = &self.dynamics {
            d.validate(dims)?;
        }
        if let Some(t) = &self.metrics.target {
            t.check_dims(dims, "metrics.target")?;
        }
        if let Some(th) = self.metrics.threshold {
            if !(th > 0.0) {
                return Err(HarnessError::config("metrics.threshold must be positive"));
            }
        }
        if self.task == Some(Task::SpectrumTrace) && sections.contains(&"dynamics") {
            let spectra = self.dynamics.as_ref().and_then(|d| d.spectra_every);
            if spectra.is_none_or(|s| s == 0) {
                return Err(HarnessError::missing("dynamics.spectra_every"));
            }
        }
        if let Some(c) = &self.classify {
            for p in &c.points {
                p.check_dims(dims, "classify.points")?;
            }
        }
        if let Some(l) = &self.lockin {
            l.target.check_dims(dims, "lockin.target")?;
            if l.epsilons.is_empty() {
                return Err(HarnessError::config("lockin.epsilons must be nonempty"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.axes.is_empty() || s.axes.iter().any(|a| a.values.is_empty()) {
                return Err(HarnessError::config("sweep grid must be nonempty"));
            }
            for a in &s.axes {
                if a.labels.as_ref().is_some_and(|l| l.len() != a.values.len()) {
                    return Err(HarnessError::config(format!("sweep axis \"{}\": labels and values differ in length", a.name)));
                }
            }
        }
        if let Some(f) = &self.field {
            if f.resolution.iter().any(|&r| r < 2) {
                return Err(HarnessError::config("field.resolution must be at least 2 per axis"));
            }
            if (0..2).any(|i| !(f.lower[i] < f.upper[i])) {
                return Err(HarnessError::config("field box needs lower < upper"));
            }
        }
        Ok(())
    }

    /// Base seed: the override, else the config seed, else the noise seed.
    pub fn base_seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.seed)
            .or_else(|| self.dynamics.as_ref().map(|d| d.noise.seed))
            .unwrap_or(0)
    }

    pub fn out_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("stackdyn-out"))
    }
}

/// RFC 7386 JSON merge patch.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    match patch {
        Value::Object(p) => {
            if !target.is_object() {
                *target = Value::Object(Default::default());
            }
            let t = target.as_object_mut().expect("just made an object");
            for (k, v) in p {
                if v.is_null() {
                    t.remove(k);
                } else {
                    merge_patch(t.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        _ => *target = patch.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn duopoly() -> Value {
        json!({
            "spec_version": "1",
            "game": {"game": "duopoly", "A": 100.0, "c1": 5.0, "c2": 2.0},
            "task": "run",
            "dynamics": {
                "rule": "sim_grad",
                "schedules": {"leader": {"kind": "polynomial", "gamma": 1.0, "p": 1.0},
                              "follower": {"kind": "polynomial", "gamma": 1.0, "p": 1.0}},
                "x0": {"x1": [10.0], "x2": [10.0]},
                "max_iters": 10
            }
        })
    }

    #[test]
    fn parses_minimal_run() {
        let c = parse_run_config(&duopoly()).unwrap();
        assert_eq!(c.task, Some(Task::Run));
        assert_eq!(c.base_seed(None), 0);
        assert_eq!(c.base_seed(Some(4)), 4);
    }

    #[test]
    fn missing_game_is_named() {
        let mut v = duopoly();
        v.as_object_mut().unwrap().remove("game");
        let e = parse_run_config(&v).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.report().field.as_deref(), Some("game"));
    }

    #[test]
    fn missing_task_section_is_named() {
        let mut v = duopoly();
        v["task"] = json!("lockin");
        let e = parse_run_config(&v).unwrap_err();
        assert_eq!(e.report().field.as_deref(), Some("lockin"));
    }

    #[test]
    fn unknown_version_rejected() {
        let mut v = duopoly();
        v["spec_version"] = json!("9");
        assert_eq!(parse_run_config(&v).unwrap_err().report().field.as_deref(), Some("spec_version"));
    }

    #[test]
    fn spectrum_trace_needs_cadence() {
        let mut v = duopoly();
        v["task"] = json!("spectrum_trace");
        let e = parse_run_config(&v).unwrap_err();
        assert_eq!(e.report().field.as_deref(), Some("dynamics.spectra_every"));
    }

    #[test]
    fn merge_patch_semantics() {
        let mut t = json!({"a": {"b": 1, "c": 2}, "d": 3});
        merge_patch(&mut t, &json!({"a": {"b": null, "e": 4}, "d": [1]}));
        assert_eq!(t, json!({"a": {"c": 2, "e": 4}, "d": [1]}));
    }

    #[test]
    fn round_trips() {
        let c = parse_run_config(&duopoly()).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
