use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lvgp::doe::{training_design, LhdOptions};
use lvgp::harness::{self, training_data, ExperimentPlan, ModelKind, ReplicateSeeds};
use lvgp::{io, BenchmarkProblem, Dataset, FitOptions};

#[derive(Parser)]
#[command(name = "lvgp", version, about = "Latent variable Gaussian process surrogates for mixed inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a maximin Latin hypercube training design for a benchmark problem.
    ///
    /// Without --n, prints the problem's inputs and levels.
    Doe {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Design CSV (unit-cube coordinates, 1-based levels). Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Swap proposals for the maximin search.
        #[arg(long, default_value_t = 10_000)]
        budget: usize,
        /// Write native-unit points with responses instead of the unit design.
        #[arg(long)]
        evaluate: bool,
    },
    /// Fit a model and save it.
    ///
    /// Either --problem and --n (training data generated as replicate 0 of
    /// `bench` with the same seed) or --schema and --data.
    Fit {
        #[arg(long, conflicts_with_all = ["schema", "data"])]
        problem: Option<String>,
        #[arg(long, requires = "problem")]
        n: Option<usize>,
        #[arg(long, requires = "data")]
        schema: Option<PathBuf>,
        #[arg(long, requires = "schema")]
        data: Option<PathBuf>,
        /// LV1, LV2, UC, MC, AddUC or BNGP.
        #[arg(long, default_value = "LV2")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        starts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the estimated latent coordinates of an LV model.
    Latent {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict at the points of a CSV file (header row; inputs then factors).
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a replicated benchmark described by a TOML file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV; overrides `output` in the config. Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn describe(problem: &BenchmarkProblem) -> String {
    let mut s = format!("problem {} (recommended n = {})\n", problem.name(), problem.recommended_n());
    for q in &problem.schema().quantitative {
        s.push_str(&format!("  {} in [{}, {}]\n", q.name, q.lower, q.upper));
    }
    for f in &problem.schema().qualitative {
        s.push_str(&format!("  {} levels: {}\n", f.name, f.levels.join(", ")));
    }
    s
}

fn doe(problem: &str, n: Option<usize>, seed: u64, out: Option<&Path>, budget: usize, evaluate: bool) -> Result<()> {
    let seeds = ReplicateSeeds::derive(seed, 0);
    let lhd = LhdOptions { budget, jitter: false };
    let Some(n) = n else {
        let problem = BenchmarkProblem::by_name(problem, seeds.design)?;
        sink(out)?.write_all(describe(&problem).as_bytes())?;
        return Ok(());
    };
    if n == 0 {
        bail!("--n must be positive");
    }
    if evaluate {
        let (_, data) = training_data(problem, n, seeds, &lhd)?;
        io::write_dataset(&data, sink(out)?)?;
    } else {
        let problem = BenchmarkProblem::by_name(problem, seeds.design)?;
        let design = training_design(n, problem.schema(), seeds.design, seeds.level, &lhd);
        io::write_design(&design, problem.schema(), sink(out)?)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    problem: Option<&str>,
    n: Option<usize>,
    schema: Option<&Path>,
    data: Option<&Path>,
    model: &str,
    seed: u64,
    starts: usize,
    out: &Path,
) -> Result<()> {
    let kind: ModelKind = model.parse()?;
    let (train, seeds) = match (problem, schema, data) {
        (Some(p), _, _) => {
            let n = n.context("--problem needs --n")?;
            let seeds = ReplicateSeeds::derive(seed, 0);
            let (problem, train) = training_data(p, n, seeds, &LhdOptions::default())?;
            if kind == ModelKind::BNGP {
                let view = problem.numeric_view().with_context(|| format!("problem `{p}` has no underlying variables"))?;
                let pts = train.points().iter().map(|w| view.map_point(w)).collect::<lvgp::Result<Vec<_>>>()?;
                (Dataset::new(view.schema().clone(), pts, train.y().to_vec())?, seeds)
            } else {
                (train, seeds)
            }
        }
        (None, Some(s), Some(d)) => {
            if kind == ModelKind::BNGP {
                bail!("BNGP needs a benchmark problem; fit the numeric inputs with a schema without factors instead");
            }
            let schema = io::load_schema(s)?;
            (io::read_dataset_file(&schema, d)?, ReplicateSeeds::derive(seed, 0))
        }
        _ => bail!("give either --problem and --n or --schema and --data"),
    };
    let config = kind.kernel_config();
    let model = lvgp::fit(&train, &config, &FitOptions::new(starts, seeds.start))?;
    io::save_model(&model, out)?;
    let d = model.diagnostics().context("fit diagnostics missing")?;
    eprintln!(
        "{kind}: nll = {}, jitter = {}, {} of {} starts failed",
        model.nll(),
        model.jitter(),
        d.failed_starts(),
        d.n_starts
    );
    Ok(())
}

fn latent(model: &Path, out: Option<&Path>) -> Result<()> {
    let model = io::load_model(model).with_context(|| format!("loading {}", model.display()))?;
    model.latent_coordinates(0)?;
    harness::write_latent(&model, sink(out)?)?;
    Ok(())
}

fn predict(model: &Path, input: &Path, out: Option<&Path>) -> Result<()> {
    let model = io::load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let points = io::read_points(model.schema(), BufReader::new(f))?;
    let preds = model.predict_batch(&points)?;
    io::write_predictions(&preds, sink(out)?)?;
    Ok(())
}

fn bench(config: &Path, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let plan = ExperimentPlan::from_toml(&text)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let records = harness::run_plan(&plan, base)?;
    let out = out.map(Path::to_path_buf).or_else(|| plan.output.as_ref().map(|p| base.join(p)));
    harness::write_results(&records, sink(out.as_deref())?)?;
    if let Some(s) = &plan.summary {
        let summaries = harness::summarize(&records)?;
        harness::write_summary(&summaries, BufWriter::new(File::create(base.join(s))?))?;
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} fits failed; see the error column", records.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Doe { problem, n, seed, out, budget, evaluate } => doe(&problem, n, seed, out.as_deref(), budget, evaluate),
        Command::Fit { problem, n, schema, data, model, seed, starts, out } => fit(
            problem.as_deref(),
            n,
            schema.as_deref(),
            data.as_deref(),
            &model,
            seed,
            starts,
            &out,
        ),
        Command::Latent { model, out } => latent(&model, out.as_deref()),
        Command::Predict { model, input, out } => predict(&model, &input, out.as_deref()),
        Command::Bench { config, out } => bench(&config, out.as_deref()),
    }
}
