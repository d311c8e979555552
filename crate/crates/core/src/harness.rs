//! Experiment configuration and orchestration.
//!
//! A config is TOML with one table per concern; unknown keys are rejected.
//! Every `(algorithm, α, seed)` triple is an independent horizon run; runs
//! execute on a bounded rayon pool and write only their own files, and the
//! aggregate tables are written after all runs return.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{self, AlgorithmConfig, AlgorithmKind};
use crate::graph::{GraphError, InterferenceGraph, NodeId};
use crate::sca::{StopCriteria, TrajectoryRecord};
use crate::scheduler::{
    dominates, export_cdf, run_horizon, scheduling_weights, slot_rng, HorizonResult, Scenario,
    ThroughputState, UtilityConfig, DEFAULT_THROUGHPUT_FLOOR,
};
use crate::schedule::ScheduleSet;
use crate::wireless::{gradient_check, sample_instance, weighted_sum_rate, GradientCheck, InstanceParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Run(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologyConfig {
    Ring { size: usize },
    Complete { size: usize },
    Star { size: usize },
    Custom { nodes: Vec<NodeId>, edges: Vec<(NodeId, NodeId)> },
}

impl TopologyConfig {
    pub fn build(&self) -> Result<InterferenceGraph, GraphError> {
        match self {
            TopologyConfig::Ring { size } => InterferenceGraph::ring(*size),
            TopologyConfig::Complete { size } => InterferenceGraph::complete(*size),
            TopologyConfig::Star { size } => InterferenceGraph::star(*size),
            TopologyConfig::Custom { nodes, edges } => InterferenceGraph::new(nodes, edges),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub rounds: usize,
    pub tol: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { rounds: 10, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    pub alphas: Vec<f64>,
    /// Per-user QoS weights; empty means all ones.
    #[serde(default)]
    pub qos: Vec<f64>,
    #[serde(default = "default_floor")]
    pub throughput_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_THROUGHPUT_FLOOR
}

fn default_init_fraction() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithms: Vec<AlgorithmKind>,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    /// Worker cap; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Starting power per channel as a fraction of `P_b/|K|`.
    #[serde(default = "default_init_fraction")]
    pub init_power_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub topology: TopologyConfig,
    pub instance: InstanceParams,
    /// `tau0` is the surrogate constant; `eps0`/`gamma` only affect GXGP-CM.
    pub schedule: ScheduleSet<f64>,
    pub stop: StopCriteria<f64>,
    #[serde(default)]
    pub baseline: BaselineConfig,
    pub utility: UtilitySection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        Ok(toml::to_string(self)?)
    }

    pub fn num_users(&self) -> usize {
        self.graph().map_or(0, |g| g.len()) * self.instance.users_per_bs
    }

    pub fn graph(&self) -> Result<InterferenceGraph, GraphError> {
        self.topology.build()
    }

    pub fn scenario(&self) -> Result<Scenario, HarnessError> {
        Ok(Scenario {
            graph: self.graph().map_err(|e| HarnessError::Invalid(vec![format!("topology: {e}")]))?,
            params: self.instance.clone(),
        })
    }

    pub fn algorithm_config(&self, kind: AlgorithmKind) -> AlgorithmConfig<f64> {
        AlgorithmConfig {
            kind,
            schedule: self.schedule,
            stop: self.stop,
            node_tau: None,
            init_power_fraction: self.run.init_power_fraction,
            sc_rounds: self.baseline.rounds,
            sc_tol: self.baseline.tol,
        }
    }

    pub fn utility(&self, alpha: f64) -> UtilityConfig<f64> {
        let users = self.num_users();
        if self.utility.qos.is_empty() {
            UtilityConfig::uniform(alpha, users)
        } else {
            UtilityConfig {
                alpha,
                qos: self.utility.qos.clone(),
            }
        }
    }

    /// Every problem at once, each naming its field.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        let graph = self.graph();
        match &graph {
            Err(e) => errs.push(format!("topology: {e}")),
            Ok(g) if g.node_ids().iter().enumerate().any(|(i, &id)| id != i) => {
                errs.push("topology.nodes: base-station ids must be 0..|B| in order".into())
            }
            Ok(_) => {}
        }
        let ip = &self.instance;
        if ip.users_per_bs == 0 {
            errs.push("instance.users_per_bs: must be at least 1".into());
        }
        if ip.channels == 0 {
            errs.push("instance.channels: must be at least 1".into());
        }
        for (name, v) in [
            ("instance.noise", ip.noise),
            ("instance.power_budget", ip.power_budget),
            ("instance.signal_scale", ip.signal_scale),
            ("instance.interference_scale", ip.interference_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name}: must be positive, got {v}"));
            }
        }
        let report = self.schedule.validate();
        for c in report.checks.iter().filter(|c| !c.passed) {
            errs.push(format!("schedule: violates {} (value {})", c.name, c.value));
        }
        if self.stop.max_iters == 0 {
            errs.push("stop.max_iters: must be at least 1".into());
        }
        if self.utility.alphas.is_empty() {
            errs.push("utility.alphas: empty".into());
        }
        for &a in &self.utility.alphas {
            if !(a <= 1.0) {
                errs.push(format!("utility.alphas: {a} exceeds 1"));
            }
        }
        if !self.utility.qos.is_empty() {
            if self.utility.qos.len() != self.num_users() {
                errs.push(format!(
                    "utility.qos: {} entries for {} users",
                    self.utility.qos.len(),
                    self.num_users()
                ));
            }
            if self.utility.qos.iter().any(|&c| !(c > 0.0)) {
                errs.push("utility.qos: weights must be positive".into());
            }
        }
        if !(self.utility.throughput_floor > 0.0) {
            errs.push("utility.throughput_floor: must be positive".into());
        }
        if self.run.algorithms.is_empty() {
            errs.push("run.algorithms: empty".into());
        }
        if self.run.seeds.is_empty() {
            errs.push("run.seeds: empty".into());
        }
        if self.run.horizon == 0 {
            errs.push("run.horizon: must be at least 1".into());
        }
        if !(self.run.init_power_fraction > 0.0 && self.run.init_power_fraction <= 1.0) {
            errs.push("run.init_power_fraction: must lie in (0, 1]".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errs))
        }
    }
}

/// Outcome of one horizon run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: AlgorithmKind,
    pub alpha: f64,
    pub seed: u64,
    pub outcome: Result<HorizonResult<f64>, String>,
}

impl RunRecord {
    pub fn stem(&self) -> String {
        run_stem(self.algorithm, self.alpha, self.seed)
    }

    pub fn utility(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.utility)
    }
}

fn run_stem(kind: AlgorithmKind, alpha: f64, seed: u64) -> String {
    format!("{}_alpha{}_seed{}", kind.tag(), alpha, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceRow {
    pub alpha: f64,
    pub algorithm: AlgorithmKind,
    pub baseline: AlgorithmKind,
    pub seeds: usize,
    /// Fraction of paired seeds with strictly higher utility.
    pub utility_wins: f64,
    /// Fraction of paired seeds whose throughput CDF lies weakly to the right.
    pub cdf_dominance: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    pub alphas: Vec<f64>,
    pub algorithms: Vec<AlgorithmKind>,
    pub dominance: Vec<DominanceRow>,
    pub elapsed: Duration,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.outcome.is_err())
    }

    pub fn run(&self, kind: AlgorithmKind, alpha: f64, seed: u64) -> Option<&RunRecord> {
        self.runs
            .iter()
            .find(|r| r.algorithm == kind && r.alpha == alpha && r.seed == seed)
    }

    /// Median utility over the successful seeds.
    pub fn median_utility(&self, kind: AlgorithmKind, alpha: f64) -> Option<f64> {
        median(
            self.runs
                .iter()
                .filter(|r| r.algorithm == kind && r.alpha == alpha)
                .filter_map(RunRecord::utility)
                .collect(),
        )
    }

    /// Rows = algorithms, columns = α, cells = median utility.
    pub fn table(&self) -> String {
        let mut s = format!("{:<10}", "algorithm");
        for a in &self.alphas {
            let _ = write!(s, "{:>14}", format!("alpha={a}"));
        }
        s.push('\n');
        for &k in &self.algorithms {
            let _ = write!(s, "{:<10}", k.tag());
            for &a in &self.alphas {
                match self.median_utility(k, a) {
                    Some(u) => {
                        let _ = write!(s, "{u:>14.4}");
                    }
                    None => {
                        let _ = write!(s, "{:>14}", "failed");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "median total utility")?;
        write!(f, "{}", self.table())?;
        for d in &self.dominance {
            writeln!(
                f,
                "alpha={} {} vs {}: utility higher on {:.0}% of {} seeds, CDF to the right on {:.0}%",
                d.alpha,
                d.algorithm,
                d.baseline,
                100.0 * d.utility_wins,
                d.seeds,
                100.0 * d.cdf_dominance
            )?;
        }
        Ok(())
    }
}

fn dominance_rows(runs: &[RunRecord], alphas: &[f64], algorithms: &[AlgorithmKind], seeds: &[u64]) -> Vec<DominanceRow> {
    let find = |k, a, s| {
        runs.iter()
            .find(|r| r.algorithm == k && r.alpha == a && r.seed == s)
            .and_then(|r| r.outcome.as_ref().ok())
    };
    let mut rows = Vec::new();
    for &alpha in alphas {
        for &alg in algorithms.iter().filter(|k| k.is_distributed()) {
            for &base in algorithms.iter().filter(|k| !k.is_distributed()) {
                let pairs: Vec<_> = seeds
                    .iter()
                    .filter_map(|&s| Some((find(alg, alpha, s)?, find(base, alpha, s)?)))
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                let n = pairs.len() as f64;
                rows.push(DominanceRow {
                    alpha,
                    algorithm: alg,
                    baseline: base,
                    seeds: pairs.len(),
                    utility_wins: pairs.iter().filter(|(a, b)| a.utility > b.utility).count() as f64 / n,
                    cdf_dominance: pairs
                        .iter()
                        .filter(|(a, b)| dominates(a.throughputs(), b.throughputs()))
                        .count() as f64
                        / n,
                });
            }
        }
    }
    rows
}

fn write_run_files(dir: &Path, rec: &RunRecord) -> Result<(), HarnessError> {
    let Ok(res) = &rec.outcome else { return Ok(()) };
    let stem = rec.stem();
    let path = dir.join("runs").join(format!("{stem}_throughput.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["user", "throughput", "rate_sum"])?;
    for (i, (t, s)) in res.throughputs().iter().zip(&res.rate_sums).enumerate() {
        w.write_record([i.to_string(), t.to_string(), s.to_string()])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("runs").join(format!("{stem}_slots.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["slot", "iterations", "peak_consensus", "final_consensus", "weighted_rate"])?;
    for s in &res.summary.slots {
        w.write_record([
            s.slot.to_string(),
            s.iterations.to_string(),
            s.peak_consensus.to_string(),
            s.final_consensus.to_string(),
            s.weighted_rate.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("cdf").join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["throughput", "fraction"])?;
    for (v, f) in export_cdf(res.throughputs()).map_err(|e| HarnessError::Run(e.to_string()))? {
        w.write_record([v.to_string(), f.to_string()])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

fn write_aggregates(dir: &Path, report: &ExperimentReport, seeds: &[u64]) -> Result<(), HarnessError> {
    let path = dir.join("utilities.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["algorithm", "alpha", "seed", "total_utility", "mean_iterations", "status"])?;
    for r in &report.runs {
        let (u, it, status) = match &r.outcome {
            Ok(h) => (h.utility.to_string(), h.summary.mean_iterations().to_string(), "ok".to_string()),
            Err(e) => (String::new(), String::new(), format!("error: {e}")),
        };
        w.write_record([r.algorithm.tag().to_string(), r.alpha.to_string(), r.seed.to_string(), u, it, status])?;
    }
    w.flush().map_err(io_err(&path))?;

    // Pooled CDF over all seeds per (algorithm, α).
    for &k in &report.algorithms {
        for &a in &report.alphas {
            let pooled: Vec<f64> = seeds
                .iter()
                .filter_map(|&s| report.run(k, a, s)?.outcome.as_ref().ok())
                .flat_map(|h| h.throughputs().iter().copied())
                .collect();
            let Ok(cdf) = export_cdf(&pooled) else { continue };
            let path = dir.join("cdf").join(format!("{}_alpha{}_pooled.csv", k.tag(), a));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["throughput", "fraction"])?;
            for (v, f) in cdf {
                w.write_record([v.to_string(), f.to_string()])?;
            }
            w.flush().map_err(io_err(&path))?;
        }
    }

    let path = dir.join("dominance.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["alpha", "algorithm", "baseline", "seeds", "utility_wins", "cdf_dominance"])?;
    for d in &report.dominance {
        w.write_record([
            d.alpha.to_string(),
            d.algorithm.tag().to_string(),
            d.baseline.tag().to_string(),
            d.seeds.to_string(),
            d.utility_wins.to_string(),
            d.cdf_dominance.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("table.txt");
    fs::write(&path, report.to_string()).map_err(io_err(&path))?;

    let errors: String = report
        .failures()
        .map(|r| format!("{}: {}\n", r.stem(), r.outcome.as_ref().err().map_or("", String::as_str)))
        .collect();
    let path = dir.join("errors.log");
    if errors.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    } else {
        fs::write(&path, errors).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Run every `(algorithm, α, seed)` triple and write the results under `out`.
/// Run failures are recorded, not returned; see [`ExperimentReport::failures`].
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    for sub in ["runs", "cdf"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut jobs = Vec::new();
    for &k in &cfg.run.algorithms {
        for &a in &cfg.utility.alphas {
            for &s in &cfg.run.seeds {
                jobs.push((k, a, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Run(e.to_string()))?;
    let start = Instant::now();
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(algorithm, alpha, seed)| {
                let outcome = run_horizon(
                    &scenario,
                    &cfg.algorithm_config(algorithm),
                    cfg.run.horizon,
                    &cfg.utility(alpha),
                    cfg.utility.throughput_floor,
                    seed,
                )
                .map_err(|e| e.to_string());
                let rec = RunRecord {
                    algorithm,
                    alpha,
                    seed,
                    outcome,
                };
                if let Err(e) = write_run_files(out, &rec) {
                    return RunRecord {
                        outcome: Err(format!("writing results: {e}")),
                        ..rec
                    };
                }
                rec
            })
            .collect()
    });
    let report = ExperimentReport {
        dominance: dominance_rows(&runs, &cfg.utility.alphas, &cfg.run.algorithms, &cfg.run.seeds),
        runs,
        alphas: cfg.utility.alphas.clone(),
        algorithms: cfg.run.algorithms.clone(),
        elapsed: start.elapsed(),
    };
    write_aggregates(out, &report, &cfg.run.seeds)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    pub slot: usize,
    pub trajectory: TrajectoryRecord<f64>,
    pub weighted_sum_rate: f64,
    pub gradient_check: GradientCheck,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tr = &self.trajectory;
        writeln!(f, "{} seed {} slot {}", self.algorithm, self.seed, self.slot)?;
        writeln!(f, "iterations: {}", tr.iterations())?;
        if let Some(last) = tr.last() {
            writeln!(f, "final objective: {:.10}", last.objective)?;
            writeln!(f, "final consensus residual: {:.3e}", last.consensus_max())?;
            writeln!(f, "final stationarity residual: {:.3e}", last.stationarity)?;
        }
        writeln!(f, "peak consensus residual: {:.3e}", tr.peak_consensus())?;
        writeln!(f, "weighted sum rate: {:.10}", self.weighted_sum_rate)?;
        let g = &self.gradient_check;
        writeln!(
            f,
            "gradient check over {} points: max rel. err. rm {:.2e}, cm {:.2e}, g {:.2e}",
            g.points, g.max_rel_rm, g.max_rel_cm, g.max_rel_g
        )
    }
}

/// One-shot solve of slot `slot` of seed `seed`, weighted as at a fresh
/// throughput state under the first configured α.
pub fn diagnose(
    cfg: &ExperimentConfig,
    kind: AlgorithmKind,
    seed: u64,
    slot: usize,
    out: &Path,
) -> Result<Diagnosis, HarnessError> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let u = cfg.utility(cfg.utility.alphas[0]);
    let weights = scheduling_weights(
        &ThroughputState::new(cfg.num_users(), cfg.utility.throughput_floor),
        &u,
    );
    let inst = sample_instance::<f64, _>(&scenario.graph, &scenario.params, &mut slot_rng(seed, slot))
        .and_then(|i| i.with_weights(&weights))
        .map_err(|e| HarnessError::Run(e.to_string()))?;
    let run = algorithms::run(&inst, &cfg.algorithm_config(kind)).map_err(|e| HarnessError::Run(e.to_string()))?;
    let check = gradient_check(&inst, 100, &mut ChaCha8Rng::seed_from_u64(seed ^ slot as u64));

    fs::create_dir_all(out).map_err(io_err(out))?;
    let stem = format!("diagnose_{}_seed{}_slot{}", kind.tag(), seed, slot);
    let traj = out.join(format!("{stem}_trajectory.csv"));
    let file = fs::File::create(&traj).map_err(io_err(&traj))?;
    run.trajectory.write_csv(file)?;
    let mut diag = Diagnosis {
        algorithm: kind,
        seed,
        slot,
        weighted_sum_rate: weighted_sum_rate(&inst, &run.allocation),
        trajectory: run.trajectory,
        gradient_check: check,
        files: vec![traj],
    };
    let report = out.join(format!("{stem}_report.txt"));
    fs::write(&report, diag.to_string()).map_err(io_err(&report))?;
    diag.files.push(report);
    Ok(diag)
}
