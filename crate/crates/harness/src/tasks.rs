use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stackdyn::dynamics::{lockin_curve, run_with, LockInEstimate, LockInSpec, TerminalReason, Trajectory, TrajectorySummary};
use stackdyn::equilibria::{check_corollary1, classify, find_critical_points, Classification, FieldKind, Region};
use stackdyn::games::CovarianceGan;
use stackdyn::oracle::omega;
use stackdyn::{rng, GameOracle, JointPoint};

use crate::artifacts::{csv_field, opt_num, write_atomic, write_json};
use crate::config::{merge_patch, parse_config, ExperimentConfig, LockInTask, MetricsConfig, Task};
use crate::error::{HarnessError, HarnessResult};
use crate::field::{emit_vector_field, VectorFieldGrid};

/// What a command wrote, and whether it hit a numerical failure on the way.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub numerical_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub terminal_reason: TerminalReason,
    pub iterations: u64,
    pub final_grad_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_to_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// First iterate at which the threshold metric fell below `threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_iteration: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub game: String,
    pub seed: u64,
    pub summary: TrajectorySummary,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyArtifact {
    pub game: String,
    pub points: Vec<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundPoint {
    pub x: JointPoint,
    pub residual_sim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_stack: Option<f64>,
    pub classification: Classification,
    /// Corollary 1 verdict where its preconditions hold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corollary1: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindCounts {
    pub total: usize,
    pub dne: usize,
    pub dse: usize,
    pub non_nash_attractors: usize,
    pub non_nash_attractor_dse: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindArtifact {
    pub game: String,
    pub field: FieldKind,
    pub region: Region,
    pub seed: u64,
    pub points: Vec<FoundPoint>,
    pub counts: FindCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockInArtifact {
    pub game: String,
    pub seed: u64,
    pub lockin: LockInTask,
    pub estimates: Vec<LockInEstimate>,
}

/// Tracks the "iterations to threshold" metric over a run.
struct HitTracker<'a> {
    oracle: &'a dyn GameOracle,
    covariance: Option<&'a CovarianceGan>,
    metrics: &'a MetricsConfig,
    hit: Option<u64>,
}

impl HitTracker<'_> {
    fn level(&self, x: &JointPoint) -> f64 {
        if let Some(c) = self.covariance {
            c.generator_gap(x).max(c.discriminator_gap(x))
        } else if let Some(t) = &self.metrics.target {
            self.oracle.canonicalize(x.offset(t, -1.0)).norm()
        } else {
            omega(self.oracle, x).map(|w| w.norm()).unwrap_or(f64::INFINITY)
        }
    }

    fn observe(&mut self, k: u64, x: &JointPoint) {
        if self.hit.is_none() && self.metrics.threshold.is_some_and(|th| self.level(x) < th) {
            self.hit = Some(k);
        }
    }
}

/// Runs the dynamics of `cfg` as sweep cell `cell`: the noise stream is
/// `(seed, 0, cell)`, so cell 0 is the plain run.
pub fn simulate(cfg: &ExperimentConfig, seed: u64, cell: u64) -> HarnessResult<(Trajectory, RunMetrics)> {
    let mut dynamics = cfg.dynamics.clone().ok_or_else(|| HarnessError::missing("dynamics"))?;
    dynamics.noise.seed = seed;
    let oracle = cfg.game.build()?;
    let covariance = cfg.game.covariance().transpose()?;
    let mut tracker = HitTracker {
        oracle: oracle.as_ref(),
        covariance: covariance.as_ref(),
        metrics: &cfg.metrics,
        hit: None,
    };
    let mut stream = rng::stream(seed, 0, cell);
    let traj = run_with(&dynamics, oracle.as_ref(), &mut stream, |k, x| tracker.observe(k, x))?;
    let x = traj.final_x();
    let metrics = RunMetrics {
        terminal_reason: traj.terminal_reason,
        iterations: traj.iterations,
        final_grad_norm: traj.last().grad_norm,
        distance_to_target: cfg.metrics.target.as_ref().map(|t| oracle.canonicalize(x.offset(t, -1.0)).norm()),
        generator_gap: covariance.as_ref().map(|c| c.generator_gap(x)),
        discriminator_gap: covariance.as_ref().map(|c| c.discriminator_gap(x)),
        threshold: cfg.metrics.threshold,
        hit_iteration: tracker.hit,
    };
    Ok((traj, metrics))
}

fn write_run(dir: &Path, cfg: &ExperimentConfig, seed: u64, traj: &Trajectory, metrics: &RunMetrics) -> HarnessResult<Vec<PathBuf>> {
    let mut written = vec![dir.join("trajectory.csv"), dir.join("summary.json")];
    write_atomic(&written[0], traj.to_csv().as_bytes())?;
    write_json(
        &written[1],
        &RunArtifact {
            game: cfg.game.name().to_string(),
            seed,
            summary: traj.summary(),
            metrics: metrics.clone(),
        },
    )?;
    if !traj.spectra.is_empty() {
        let p = dir.join("spectra.csv");
        write_atomic(&p, traj.spectra_csv().as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

fn numerical(traj: &Trajectory) -> Option<String> {
    (traj.terminal_reason == TerminalReason::NumericalFailure)
        .then(|| traj.message.clone().unwrap_or_else(|| "numerical failure".into()))
}

pub fn task_run(cfg: &ExperimentConfig, seed: u64, out: &Path) -> HarnessResult<Outcome> {
    let (traj, metrics) = simulate(cfg, seed, 0)?;
    let artifacts = write_run(out, cfg, seed, &traj, &metrics)?;
    info!("run finished: {:?} after {} iterations", traj.terminal_reason, traj.iterations);
    Ok(Outcome {
        artifacts,
        numerical_failure: numerical(&traj),
    })
}

pub fn task_classify(cfg: &ExperimentConfig, out: &Path) -> HarnessResult<Outcome> {
    let task = cfg.classify.as_ref().ok_or_else(|| HarnessError::missing("classify"))?;
    let oracle = cfg.game.build()?;
    let points = task
        .points
        .iter()
        .map(|x| classify(oracle.as_ref(), x, &task.config))
        .collect::<stackdyn::Result<Vec<_>>>()?;
    let path = out.join("classification.json");
    write_json(&path, &ClassifyArtifact { game: cfg.game.name().into(), points })?;
    Ok(Outcome { artifacts: vec![path], numerical_failure: None })
}

/// Multi-start search plus classification of every point found.
pub fn find_points(cfg: &ExperimentConfig, seed: u64) -> HarnessResult<FindArtifact> {
    let task = cfg.find.as_ref().ok_or_else(|| HarnessError::missing("find"))?;
    let oracle = cfg.game.build()?;
    let region = Region::new(task.lower.clone(), task.upper.clone())?;
    let mut find_cfg = task.config;
    find_cfg.seed = seed;
    let found = find_critical_points(oracle.as_ref(), task.field, &region, &find_cfg)?;
    let mut counts = FindCounts::default();
    let mut points = Vec::with_capacity(found.len());
    for p in found {
        let c = classify(oracle.as_ref(), &p.x, &task.classify)?;
        let corollary1 = check_corollary1(oracle.as_ref(), &p.x, &task.classify).ok();
        counts.total += 1;
        counts.dne += c.is_dne as usize;
        counts.dse += c.is_dse as usize;
        counts.non_nash_attractors += c.non_nash_attractor as usize;
        counts.non_nash_attractor_dse += (c.non_nash_attractor && c.is_dse) as usize;
        points.push(FoundPoint {
            x: p.x,
            residual_sim: p.residual_sim,
            residual_stack: p.residual_stack,
            classification: c,
            corollary1,
        });
    }
    Ok(FindArtifact {
        game: cfg.game.name().into(),
        field: task.field,
        region,
        seed,
        points,
        counts,
    })
}

pub fn task_find(cfg: &ExperimentConfig, seed: u64, out: &Path) -> HarnessResult<Outcome> {
    let artifact = find_points(cfg, seed)?;
    let path = out.join("critical_points.json");
    write_json(&path, &artifact)?;
    Ok(Outcome { artifacts: vec![path], numerical_failure: None })
}

pub fn lockin_estimates(cfg: &ExperimentConfig, seed: u64) -> HarnessResult<Vec<LockInEstimate>> {
    let task = cfg.lockin.as_ref().ok_or_else(|| HarnessError::missing("lockin"))?;
    let mut dynamics = cfg.dynamics.clone().ok_or_else(|| HarnessError::missing("dynamics"))?;
    dynamics.noise.seed = seed;
    let spec = LockInSpec {
        target: task.target.clone(),
        epsilon: task.epsilons[0],
        n0: task.n0,
        n_bar: task.n_bar,
        q0: task.q0,
        replicas: task.replicas,
    };
    let oracle = cfg.game.build()?;
    Ok(lockin_curve(&dynamics, oracle.as_ref(), &spec, &task.epsilons)?)
}

pub fn task_lockin(cfg: &ExperimentConfig, seed: u64, out: &Path) -> HarnessResult<Outcome> {
    let estimates = lockin_estimates(cfg, seed)?;
    let path = out.join("lockin.json");
    write_json(
        &path,
        &LockInArtifact {
            game: cfg.game.name().into(),
            seed,
            lockin: cfg.lockin.clone().expect("checked by lockin_estimates"),
            estimates,
        },
    )?;
    Ok(Outcome { artifacts: vec![path], numerical_failure: None })
}

/// Executes the task named in the config.
pub fn execute(value: &Value, cfg: &ExperimentConfig, seed: u64, out: &Path) -> HarnessResult<Outcome> {
    match cfg.task.ok_or_else(|| HarnessError::missing("task"))? {
        Task::Run | Task::SpectrumTrace => task_run(cfg, seed, out),
        Task::Classify => task_classify(cfg, out),
        Task::Find => task_find(cfg, seed, out),
        Task::Lockin => task_lockin(cfg, seed, out),
        Task::Sweep => sweep(value, seed, out),
    }
}

pub fn vector_field(cfg: &ExperimentConfig) -> HarnessResult<VectorFieldGrid> {
    let task = cfg.field.as_ref().ok_or_else(|| HarnessError::missing("field"))?;
    let oracle = cfg.game.build()?;
    Ok(emit_vector_field(
        oracle.as_ref(),
        task.field,
        task.lower,
        task.upper,
        task.resolution,
        cfg.game.periodic(),
    )?)
}

pub fn task_field(cfg: &ExperimentConfig, out: &Path) -> HarnessResult<Outcome> {
    let grid = vector_field(cfg)?;
    let path = out.join("field.csv");
    write_atomic(&path, grid.to_csv().as_bytes())?;
    Ok(Outcome { artifacts: vec![path], numerical_failure: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    fn status(&self) -> &'static str {
        match (&self.error, &self.metrics) {
            (Some(_), _) => "error",
            (None, Some(m)) if m.terminal_reason == TerminalReason::NumericalFailure => "numerical_failure",
            _ => "ok",
        }
    }
}

pub fn sweep_csv(axes: &[String], rows: &[SweepRow]) -> String {
    let mut out = String::from("cell");
    for a in axes {
        out.push(',');
        out.push_str(&csv_field(a));
    }
    out.push_str(
        ",status,terminal_reason,iterations,final_grad_norm,distance_to_target,hit_iteration,generator_gap,discriminator_gap,error\n",
    );
    for r in rows {
        out.push_str(&r.cell.to_string());
        for l in &r.labels {
            out.push(',');
            out.push_str(&csv_field(l));
        }
        out.push(',');
        out.push_str(r.status());
        match &r.metrics {
            Some(m) => out.push_str(&format!(
                ",{},{},{},{},{},{},{}",
                serde_json::to_value(m.terminal_reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                m.iterations,
                m.final_grad_norm,
                opt_num(m.distance_to_target),
                opt_num(m.hit_iteration),
                opt_num(m.generator_gap),
                opt_num(m.discriminator_gap),
            )),
            None => out.push_str(",,,,,,,"),
        }
        out.push(',');
        out.push_str(&csv_field(r.error.as_deref().unwrap_or("")));
        out.push('\n');
    }
    out
}

/// Cartesian product of the axes, last axis fastest.
fn grid_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut cells = vec![vec![]];
    for &n in sizes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                (0..n).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    cells
}

fn run_cell(base: &Value, patches: &[&Value], seed: u64, cell: usize, dir: &Path) -> HarnessResult<RunMetrics> {
    let mut value = base.clone();
    for p in patches {
        merge_patch(&mut value, p);
    }
    let cfg = parse_config(&value, &["dynamics"])?;
    let (traj, metrics) = simulate(&cfg, seed, cell as u64)?;
    write_run(dir, &cfg, seed, &traj, &metrics)?;
    Ok(metrics)
}

/// Runs every cell of the grid concurrently. Cell `i` writes its trajectory
/// under `cells/cell_<i>/` and uses noise stream `(seed, 0, i)`; failures
/// are recorded in the cell's row.
pub fn sweep(value: &Value, seed: u64, out: &Path) -> HarnessResult<Outcome> {
    let cfg = parse_config(value, &["sweep"])?;
    let axes = cfg.sweep.clone().expect("section checked").axes;
    let mut base = value.clone();
    let obj = base.as_object_mut().expect("parsed as an object");
    obj.remove("sweep");
    obj.insert("task".into(), Value::String("run".into()));

    let cells = grid_indices(&axes.iter().map(|a| a.values.len()).collect::<Vec<_>>());
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .enumerate()
        .map(|(i, idx)| {
            let patches: Vec<&Value> = idx.iter().zip(&axes).map(|(&j, a)| &a.values[j]).collect();
            let labels = idx.iter().zip(&axes).map(|(&j, a)| a.label(j)).collect();
            let dir = out.join("cells").join(format!("cell_{i:03}"));
            match run_cell(&base, &patches, seed, i, &dir) {
                Ok(m) => SweepRow { cell: i, labels, metrics: Some(m), error: None },
                Err(e) => SweepRow { cell: i, labels, metrics: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let path = out.join("sweep.csv");
    let names: Vec<String> = axes.iter().map(|a| a.name.clone()).collect();
    write_atomic(&path, sweep_csv(&names, &rows).as_bytes())?;
    let json = out.join("sweep.json");
    write_json(&json, &rows)?;
    Ok(Outcome { artifacts: vec![path, json], numerical_failure: None })
}
