mod analyze;
mod config;
mod experiment;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};
use experiment::{run_replicates, Setup};
use output::{float, table_string, write_run, write_table, write_weights};

#[derive(Parser)]
#[command(name = "wesim", version, about = "Replicated weighted-ensemble experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of an experiment (each particle count of a sweep).
    Run(Common),
    /// Print coarse-model constants for a benchmark problem.
    Analyze(AnalyzeArgs),
    /// Record weight-sum trajectories across replicates.
    CollapseDemo(Common),
    /// Collect finished sweep summaries into a constant-versus-N table.
    EmitFigureData(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, env = "WESIM_OUT", default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// geometric:a=25, ou:a=3,dt=0.01, ising:side=4,beta=0.25,above=0.75 or microbin:<file.json>
    model: Option<String>,
    /// Derive the model from an experiment file instead.
    #[arg(long, conflicts_with = "model")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the table to this directory.
    #[arg(long, env = "WESIM_OUT")]
    out: Option<PathBuf>,
    /// Write the estimated microbin model as JSON.
    #[arg(long)]
    save_model: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(r) = self.replicates {
            config.replicates = r;
        }
        if self.threads == Some(0) {
            return Err(ConfigError("flag `--threads`: must be at least 1".into()));
        }
        config.validate()?;
        Ok(config)
    }
}

fn expand_sweep(config: &ExperimentConfig) -> Vec<ExperimentConfig> {
    match &config.sweep {
        Some(ns) => ns.iter().map(|&n| config.with_particles(n)).collect(),
        None => vec![config.clone()],
    }
}

fn run(args: &Common) -> Result<()> {
    let config = args.load()?;
    for c in expand_sweep(&config) {
        let reps = run_replicates(&c, args.threads, false)?;
        let (written, summary) = write_run(&args.out, &c, &reps)?;
        println!(
            "{}: mean {} relative constant {} -> {}",
            c.id,
            float(summary.mean),
            output::maybe(summary.relative_constant),
            written.results.display()
        );
    }
    Ok(())
}

fn collapse_demo(args: &Common) -> Result<()> {
    let config = args.load()?;
    for c in expand_sweep(&config) {
        let reps = run_replicates(&c, args.threads, true)?;
        write_run(&args.out, &c, &reps)?;
        let (long, summary) = write_weights(&args.out, &c, &reps)?;
        let finals: Vec<f64> = reps.iter().map(|r| r.final_weight_sum).collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!(
            "{}: mean final weight sum {} -> {}, {}",
            c.id,
            float(mean),
            long.display(),
            summary.display()
        );
    }
    Ok(())
}

/// Reads the `relative_constant` column of a summary file.
fn read_constant(path: &Path) -> Result<Option<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let column = headers
        .iter()
        .position(|h| h == "relative_constant")
        .with_context(|| format!("{}: no relative_constant column", path.display()))?;
    let record = reader
        .records()
        .next()
        .with_context(|| format!("{}: empty summary", path.display()))??;
    let cell = &record[column];
    if cell == output::MISSING {
        Ok(None)
    } else {
        Ok(Some(cell.parse().with_context(|| format!("{}: bad constant `{cell}`", path.display()))?))
    }
}

fn emit_figure_data(args: &Common) -> Result<()> {
    let config = args.load()?;
    let Some(sweep) = &config.sweep else {
        bail!(ConfigError("field `sweep`: emit-figure-data needs a particle sweep".into()));
    };
    let mut ns = sweep.clone();
    ns.sort_unstable();
    ns.dedup();
    let paths: Vec<(usize, PathBuf)> = ns
        .iter()
        .map(|&n| (n, args.out.join(format!("{}_summary.csv", config.with_particles(n).id))))
        .collect();
    let missing: Vec<String> = paths
        .iter()
        .filter(|(_, p)| !p.exists())
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing sweep runs (use `wesim run` first): {}", missing.join(", "));
    }
    let (_, mcmc, optimal) = Setup::new(&config)?.theory(&config)?;
    let mut rows = Vec::new();
    for (n, path) in &paths {
        rows.push(vec![
            n.to_string(),
            output::maybe(read_constant(path)?),
            float(mcmc),
            float(optimal),
        ]);
    }
    let target = args.out.join(format!("{}_figure.csv", config.id));
    write_table(
        &target,
        &["particles", "empirical_constant", "mcmc_constant", "optimal_constant"],
        &rows,
    )?;
    println!("{}", target.display());
    Ok(())
}

fn analyze_command(args: &AnalyzeArgs) -> Result<()> {
    let spec = match (&args.model, &args.config) {
        (Some(m), None) => analyze::ModelSpec::parse(m)?,
        (None, Some(path)) => {
            let mut config = ExperimentConfig::load(path)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            analyze::ModelSpec::parse(&model_of(&config))?
        }
        _ => bail!(ConfigError("analyze needs a model or `--config`".into())),
    };
    let result = analyze::analyze(&spec)?;
    let rows = vec![result.row.cells(), result.row.independence().cells()];
    print!("{}", table_string(&analyze::HEADER, &rows)?);
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        write_table(&out.join(format!("analyze_{}.csv", spec.name)), &analyze::HEADER, &rows)?;
    }
    if let Some(path) = &args.save_model {
        match &result.microbin {
            Some(m) => analyze::save_model(path, m)?,
            None => bail!(ConfigError("`--save-model` applies to ising and microbin models".into())),
        }
    }
    Ok(())
}

fn model_of(config: &ExperimentConfig) -> String {
    use config::{KernelConfig, ObservableConfig};
    match (&config.kernel, &config.observable) {
        (KernelConfig::Geometric, ObservableConfig::Tail { threshold }) => format!("geometric:a={threshold}"),
        (KernelConfig::Ar1 { dt }, ObservableConfig::Tail { threshold }) => format!("ou:a={threshold},dt={dt}"),
        (KernelConfig::Ising { side, beta, updates_per_step }, obs) => {
            let level = match obs {
                ObservableConfig::MagnetizationAbove { level } => format!("above={level}"),
                ObservableConfig::MagnetizationBelow { level } => format!("below={level}"),
                ObservableConfig::Tail { .. } => "tail".into(),
            };
            format!(
                "ising:side={side},beta={beta},{level},samples={},seed={},updates={updates_per_step}",
                config.analysis.microbin_samples, config.seed
            )
        }
        _ => "mismatched".into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze_command(a),
        Command::CollapseDemo(a) => collapse_demo(a),
        Command::EmitFigureData(a) => emit_figure_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
