//! Replicated benchmark experiments: design, truth, fits, hold-out RRMSE.
//!
//! Replicate `r` of an experiment with master seed `s` uses
//! `derive_seed(s, r, k)` for `k` = 0 (design), 1 (levels), 2 (test set)
//! and 3 (optimizer starts). Problems with random underlying variables draw
//! them from the design seed, so every row can be rerun from its own seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{KernelConfig, KernelFamily, LatentDim};
use crate::doe::{training_design, uniform_test_set, LhdOptions};
use crate::domain::{Dataset, MixedPoint};
use crate::error::{Error, Result};
use crate::fit::{fit, FitOptions, FittedModel};
use crate::functions::BenchmarkProblem;
use crate::seeds::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    LV1,
    LV2,
    UC,
    MC,
    AddUC,
    /// Gaussian kernel on the quantitative inputs plus the underlying
    /// numerical variables behind the factor levels.
    BNGP,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] =
        [ModelKind::LV1, ModelKind::LV2, ModelKind::UC, ModelKind::MC, ModelKind::AddUC, ModelKind::BNGP];

    pub fn kernel_config(self) -> KernelConfig {
        KernelConfig::new(match self {
            ModelKind::LV1 => KernelFamily::Lv(LatentDim::One),
            ModelKind::LV2 => KernelFamily::Lv(LatentDim::Two),
            ModelKind::UC => KernelFamily::Uc,
            ModelKind::MC => KernelFamily::Mc,
            ModelKind::AddUC => KernelFamily::AddUc,
            ModelKind::BNGP => KernelFamily::NumericOnly,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LV1 => "LV1",
            ModelKind::LV2 => "LV2",
            ModelKind::UC => "UC",
            ModelKind::MC => "MC",
            ModelKind::AddUC => "AddUC",
            ModelKind::BNGP => "BNGP",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model `{s}` (expected one of LV1, LV2, UC, MC, AddUC, BNGP)")))
    }
}

fn default_n_test() -> usize {
    10_000
}

fn default_replicates() -> usize {
    30
}

fn default_starts() -> usize {
    200
}

fn default_budget() -> usize {
    LhdOptions::default().budget
}

/// One experiment: a problem, a model list and a training size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub models: Vec<ModelKind>,
    pub n: usize,
    #[serde(rename = "N", default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub lhd_budget: usize,
    /// Record wall-clock fit times. Off by default so results files are
    /// reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(problem: impl Into<String>, models: Vec<ModelKind>, n: usize) -> Self {
        Self {
            problem: problem.into(),
            models,
            n,
            n_test: default_n_test(),
            replicates: default_replicates(),
            n_starts: default_starts(),
            seed: 0,
            lhd_budget: default_budget(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if self.n_test < 2 {
            return Err(Error::Config("N must be at least 2".into()));
        }
        if self.n_starts < 1 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        let problem = BenchmarkProblem::by_name(&self.problem, 0)?;
        if self.models.contains(&ModelKind::BNGP) && problem.numeric_view().is_none() {
            return Err(Error::Config(format!("problem `{}` has no underlying variables for BNGP", self.problem)));
        }
        Ok(())
    }
}

/// Grid axes; every listed value replaces the base setting in turn.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub problem: Vec<String>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub n_starts: Vec<usize>,
}

/// A configuration file: a base experiment, an optional grid and output paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: Grid,
    /// Results CSV path, relative to the config file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Optional JSON summary path.
    #[serde(default)]
    pub summary: Option<PathBuf>,
    /// Directory for latent-coordinate CSVs of LV fits.
    #[serde(default)]
    pub latent_dir: Option<PathBuf>,
}

impl ExperimentPlan {
    pub const KEYS: [&'static str; 13] = [
        "problem",
        "models",
        "n",
        "N",
        "replicates",
        "n_starts",
        "seed",
        "lhd_budget",
        "timing",
        "grid",
        "output",
        "summary",
        "latent_dir",
    ];

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(k) = table.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Every configuration of the grid, problem-major.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let problems = if self.grid.problem.is_empty() { vec![self.base.problem.clone()] } else { self.grid.problem.clone() };
        let ns = if self.grid.n.is_empty() { vec![self.base.n] } else { self.grid.n.clone() };
        let starts = if self.grid.n_starts.is_empty() { vec![self.base.n_starts] } else { self.grid.n_starts.clone() };
        let mut out = Vec::new();
        for p in &problems {
            for n in &ns {
                for s in &starts {
                    out.push(ExperimentConfig { problem: p.clone(), n: *n, n_starts: *s, ..self.base.clone() });
                }
            }
        }
        out
    }
}

/// Seeds of one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    pub design: u64,
    pub level: u64,
    pub test: u64,
    pub start: u64,
}

impl ReplicateSeeds {
    pub fn derive(master: u64, replicate: usize) -> Self {
        let r = replicate as u64;
        Self {
            design: derive_seed(master, r, 0),
            level: derive_seed(master, r, 1),
            test: derive_seed(master, r, 2),
            start: derive_seed(master, r, 3),
        }
    }
}

/// One results row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub problem: String,
    pub model: ModelKind,
    pub replicate: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_test: usize,
    pub rrmse: Option<f64>,
    pub nll: Option<f64>,
    pub fit_seconds: Option<f64>,
    pub jitter: Option<f64>,
    pub seeds: ReplicateSeeds,
    pub error: Option<String>,
}

/// Relative root mean squared error of `pred` against `truth`.
pub fn rrmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.len() < 2 {
        return Err(Error::Degenerate("RRMSE needs at least two test points".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let num: f64 = pred.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum();
    let den: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(den > 0.0) {
        return Err(Error::Degenerate("test responses are constant".into()));
    }
    Ok((num / den).sqrt())
}

/// The problem instance and training data of a replicate with the given seeds.
pub fn training_data(problem: &str, n: usize, seeds: ReplicateSeeds, lhd: &LhdOptions) -> Result<(BenchmarkProblem, Dataset)> {
    let problem = BenchmarkProblem::by_name(problem, seeds.design)?;
    let schema = problem.schema().clone();
    let design = training_design(n, &schema, seeds.design, seeds.level, lhd);
    let pts = design.native_points(&schema)?;
    let y = problem.evaluate_batch(&pts)?;
    let train = Dataset::new(schema, pts, y)?;
    Ok((problem, train))
}

/// Training and test data of one replicate, shared by every model.
#[derive(Clone, Debug)]
pub struct ReplicateData {
    pub problem: BenchmarkProblem,
    pub seeds: ReplicateSeeds,
    pub train: Dataset,
    pub test_points: Vec<MixedPoint>,
    pub test_y: Vec<f64>,
}

impl ReplicateData {
    pub fn build(problem: &str, n: usize, n_test: usize, seeds: ReplicateSeeds, lhd: &LhdOptions) -> Result<Self> {
        let (problem, train) = training_data(problem, n, seeds, lhd)?;
        let schema = problem.schema();
        let test_points = uniform_test_set(n_test, &schema, seeds.test).native_points(&schema)?;
        let test_y = problem.evaluate_batch(&test_points)?;
        Ok(Self { problem, seeds, train, test_points, test_y })
    }

    /// Fits `model` and returns it with its hold-out RRMSE.
    pub fn fit_and_score(&self, model: ModelKind, n_starts: usize) -> Result<(FittedModel, f64)> {
        let opts = FitOptions::new(n_starts, self.seeds.start);
        let config = model.kernel_config();
        if model == ModelKind::BNGP {
            let view = self.problem.numeric_view().ok_or_else(|| {
                Error::UnsupportedKernel(format!("problem `{}` has no underlying variables", self.problem.name()))
            })?;
            let pts = self.train.points().iter().map(|p| view.map_point(p)).collect::<Result<Vec<_>>>()?;
            let data = Dataset::new(view.schema().clone(), pts, self.train.y().to_vec())?;
            let fitted = fit(&data, &config, &opts)?;
            let test = self.test_points.iter().map(|p| view.map_point(p)).collect::<Result<Vec<_>>>()?;
            let pred = fitted.predict_means(&test)?;
            let e = rrmse(&pred, &self.test_y)?;
            Ok((fitted, e))
        } else {
            let fitted = fit(&self.train, &config, &opts)?;
            let pred = fitted.predict_means(&self.test_points)?;
            let e = rrmse(&pred, &self.test_y)?;
            Ok((fitted, e))
        }
    }
}

/// Records of one replicate together with the fitted models (in model order).
pub struct ReplicateOutcome {
    pub records: Vec<ResultRecord>,
    pub models: Vec<(ModelKind, Option<FittedModel>)>,
}

/// Runs replicate `replicate` of `config`. Fit failures become error rows.
pub fn run_replicate(config: &ExperimentConfig, replicate: usize) -> ReplicateOutcome {
    let seeds = ReplicateSeeds::derive(config.seed, replicate);
    let record = |model: ModelKind| ResultRecord {
        problem: config.problem.clone(),
        model,
        replicate,
        n: config.n,
        n_test: config.n_test,
        rrmse: None,
        nll: None,
        fit_seconds: None,
        jitter: None,
        seeds,
        error: None,
    };
    let lhd = LhdOptions { budget: config.lhd_budget, jitter: false };
    let data = match ReplicateData::build(&config.problem, config.n, config.n_test, seeds, &lhd) {
        Ok(d) => d,
        Err(e) => {
            return ReplicateOutcome {
                records: config.models.iter().map(|m| ResultRecord { error: Some(e.to_string()), ..record(*m) }).collect(),
                models: config.models.iter().map(|m| (*m, None)).collect(),
            }
        }
    };
    let mut records = Vec::new();
    let mut models = Vec::new();
    for &m in &config.models {
        let start = Instant::now();
        let out = data.fit_and_score(m, config.n_starts);
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok((fitted, e)) => {
                records.push(ResultRecord {
                    rrmse: Some(e),
                    nll: Some(fitted.nll()),
                    fit_seconds: config.timing.then_some(secs),
                    jitter: Some(fitted.jitter()),
                    ..record(m)
                });
                models.push((m, Some(fitted)));
            }
            Err(err) => {
                records.push(ResultRecord { error: Some(err.to_string()), ..record(m) });
                models.push((m, None));
            }
        }
    }
    ReplicateOutcome { records, models }
}

fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        (&a.problem, a.model, a.replicate, a.n).cmp(&(&b.problem, b.model, b.replicate, b.n))
    });
}

/// Runs every replicate (in parallel) and returns rows sorted by problem, model, replicate and n.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let per_rep: Vec<Vec<ResultRecord>> =
        (0..config.replicates).into_par_iter().map(|r| run_replicate(config, r).records).collect();
    let mut records: Vec<ResultRecord> = per_rep.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}

/// Runs every configuration of a plan, writing latent CSVs for LV fits when requested.
pub fn run_plan(plan: &ExperimentPlan, base_dir: &Path) -> Result<Vec<ResultRecord>> {
    let configs = plan.expand();
    for c in &configs {
        c.validate()?;
    }
    let latent_dir = plan.latent_dir.as_ref().map(|d| base_dir.join(d));
    if let Some(d) = &latent_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut all = Vec::new();
    for c in &configs {
        let outcomes: Vec<Result<Vec<ResultRecord>>> = (0..c.replicates)
            .into_par_iter()
            .map(|r| {
                let out = run_replicate(c, r);
                if let Some(d) = &latent_dir {
                    for (m, fitted) in &out.models {
                        if let (ModelKind::LV1 | ModelKind::LV2, Some(f)) = (m, fitted) {
                            let name = format!("{}_{}_n{}_s{}_r{}.csv", c.problem.replace(':', "-"), m, c.n, c.n_starts, r);
                            export_latent(f, &d.join(name))?;
                        }
                    }
                }
                Ok(out.records)
            })
            .collect();
        for o in outcomes {
            all.extend(o?);
        }
    }
    sort_records(&mut all);
    Ok(all)
}

pub const RESULTS_HEADER: [&str; 14] = [
    "problem",
    "model",
    "replicate",
    "n",
    "N",
    "rrmse",
    "nll",
    "fit_seconds",
    "jitter",
    "design_seed",
    "level_seed",
    "test_seed",
    "start_seed",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_results<W: Write>(records: &[ResultRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RESULTS_HEADER)?;
    for r in records {
        wtr.write_record([
            r.problem.clone(),
            r.model.to_string(),
            r.replicate.to_string(),
            r.n.to_string(),
            r.n_test.to_string(),
            opt(r.rrmse),
            opt(r.nll),
            opt(r.fit_seconds),
            opt(r.jitter),
            r.seeds.design.to_string(),
            r.seeds.level.to_string(),
            r.seeds.test.to_string(),
            r.seeds.start.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `factor,level,label,z1,z2` for every level of every factor of an LV model.
pub fn write_latent<W: Write>(model: &FittedModel, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["factor", "level", "label", "z1", "z2"])?;
    for (j, f) in model.schema().qualitative.iter().enumerate() {
        for (l, z) in model.latent_coordinates(j)?.iter().enumerate() {
            wtr.write_record([f.name.clone(), (l + 1).to_string(), f.levels[l].clone(), z[0].to_string(), z[1].to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_latent(model: &FittedModel, path: &Path) -> Result<()> {
    // Fail before creating the file for non-LV models.
    model.latent_coordinates(0).map(|_| ()).or_else(|e| match e {
        Error::UnsupportedKernel(_) => Err(e),
        _ => Ok(()),
    })?;
    write_latent(model, std::fs::File::create(path)?)
}

/// Linear interpolation between order statistics (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Degenerate("quantile of an empty set".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// RRMSE quartiles of one (problem, model, n) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub model: ModelKind,
    pub n: usize,
    pub count: usize,
    pub failures: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

/// Per-group median and quartiles; rows with errors are excluded and counted.
pub fn summarize(records: &[ResultRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(Error::Degenerate("no records to summarize".into()));
    }
    let mut groups: BTreeMap<(String, ModelKind, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.problem.clone(), r.model, r.n)).or_default();
        match r.rrmse {
            Some(e) if r.error.is_none() => g.0.push(e),
            _ => g.1 += 1,
        }
    }
    Ok(groups
        .into_iter()
        .map(|((problem, model, n), (vals, failures))| Summary {
            problem,
            model,
            n,
            count: vals.len(),
            failures,
            median: quantile(&vals, 0.5).ok(),
            q25: quantile(&vals, 0.25).ok(),
            q75: quantile(&vals, 0.75).ok(),
        })
        .collect())
}

/// Writes summaries as pretty JSON.
pub fn write_summary<W: Write>(summaries: &[Summary], w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, summaries)?;
    Ok(())
}
