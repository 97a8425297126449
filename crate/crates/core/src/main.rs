use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use recurdist::config::Config;
use recurdist::pipelines::{default_preset, preset, Job, Table, PRESETS};
use recurdist::pricing::HedgeKind;
use recurdist::{Error, Result};

#[derive(Parser)]
#[command(name = "recurdist", version, about = "Laws of path sums by backward recursion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Law of X_N - X_0 for CIR, CEV or stochastic variance models
    Density(Common),
    /// Integrated variance laws
    Iv(Common),
    /// GARCH variance, integrated variance and total return laws
    GarchReturn(Common),
    /// Hedging-error laws of a written call under variance gamma
    Hedge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<HedgeKind>,
        #[arg(long)]
        strike: Option<f64>,
    },
    /// Arithmetic Asian call ladder, engine against simulation
    Asian(Common),
    /// Critical values and power of the skewness test
    Skewtest(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    preset: Option<String>,
    /// Text config, or a manifest `.json` from an earlier run to repeat it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out.csv")]
    out: PathBuf,
    /// Simulation seed (default 1, or the manifest's)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// `mc:<paths>` adds simulated CDF and histogram columns
    #[arg(long)]
    overlay: Option<String>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a Job,
    seed: u64,
    version: &'a str,
    wall_seconds: f64,
    outputs: Vec<String>,
}

fn usage(msg: String) -> Error {
    Error::Parameter(msg)
}

#[derive(serde::Deserialize)]
struct PastRun {
    command: String,
    config: Job,
    seed: u64,
}

/// The job and seed recorded in a manifest.
fn replay(path: &Path, command: &str) -> Result<(Job, u64)> {
    let past: PastRun = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if past.command != command {
        return Err(usage(format!("manifest is for `{}`, not `{command}`", past.command)));
    }
    Ok((past.config, past.seed))
}

fn resolve(command: &str, common: &Common) -> Result<Job> {
    let cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let name = match (&common.preset, cfg.top_str("preset")) {
        (Some(n), _) => n.clone(),
        (None, Some((_, n))) => n,
        (None, None) => default_preset(command).expect("every command has a default").to_string(),
    };
    let runs = PRESETS.iter().find(|p| p.0 == name).map(|p| p.1);
    if let Some(other) = runs.filter(|c| *c != command) {
        return Err(usage(format!("preset `{name}` belongs to the `{other}` command")));
    }
    let skip = ["preset"];
    Ok(match preset(&name)? {
        Job::Density(j) => Job::Density(cfg.apply(&j, &skip)?),
        Job::Garch(j) => Job::Garch(cfg.apply(&j, &skip)?),
        Job::Hedge(j) => Job::Hedge(cfg.apply(&j, &skip)?),
        Job::Asian(j) => Job::Asian(cfg.apply(&j, &skip)?),
        Job::Skew(j) => Job::Skew(cfg.apply(&j, &skip)?),
    })
}

fn overlay_paths(spec: &str) -> Result<usize> {
    spec.strip_prefix("mc:")
        .and_then(|n| n.parse().ok())
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("overlay must look like mc:<paths>, got `{spec}`")))
}

/// `out.csv` with suffix `iv` becomes `out.iv.csv`.
fn output_path(out: &Path, suffix: &str, format: Format) -> PathBuf {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let name = if suffix.is_empty() { format!("{stem}.{ext}") } else { format!("{stem}.{suffix}.{ext}") };
    out.with_file_name(name)
}

fn write_table(path: &Path, t: &Table, format: Format) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        Format::Csv => t.write_csv(f),
        Format::Json => t.write_json(f),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    let (name, common, hedge_pick) = match &cli.command {
        Command::Density(c) => ("density", c, None),
        Command::Iv(c) => ("iv", c, None),
        Command::GarchReturn(c) => ("garch-return", c, None),
        Command::Hedge { common, strategy, strike } => ("hedge", common, Some((*strategy, *strike))),
        Command::Asian(c) => ("asian", c, None),
        Command::Skewtest(c) => ("skewtest", c, None),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot size the worker pool: {e}")))?;
    }
    let replayed = match &common.config {
        Some(p) if p.extension().is_some_and(|e| e == "json") => Some(replay(p, name)?),
        _ => None,
    };
    let seed = common.seed.or(replayed.as_ref().map(|r| r.1)).unwrap_or(1);
    let mut job = match replayed {
        Some((job, _)) => job,
        None => resolve(name, common)?,
    };
    if let Some(o) = &common.overlay {
        let paths = overlay_paths(o)?;
        match &mut job {
            Job::Density(j) => j.mc_paths = paths,
            Job::Garch(j) => j.mc_paths = paths,
            Job::Hedge(j) => j.mc_paths = paths,
            Job::Asian(j) => j.mc_paths = paths,
            Job::Skew(j) => j.size_paths = paths,
        }
    }
    if let (Job::Hedge(j), Some((strategy, strike))) = (&mut job, hedge_pick) {
        if let Some(s) = strategy {
            j.strategies = vec![s];
        }
        if let Some(k) = strike {
            j.strikes = vec![k];
        }
    }
    let (tables, converged) = match &job {
        Job::Density(j) => j.run(seed).map(|r| (r.tables(), r.converged()))?,
        Job::Garch(j) => j.run(seed).map(|r| (r.tables(), r.converged()))?,
        Job::Hedge(j) => j.run(seed).map(|r| (r.tables(), r.converged()))?,
        Job::Asian(j) => j.run(seed).map(|r| (r.tables(), r.converged()))?,
        Job::Skew(j) => j.run(seed).map(|r| (r.tables(), r.converged()))?,
    };
    let mut outputs = Vec::new();
    for (suffix, t) in &tables {
        let path = output_path(&common.out, suffix, common.format);
        write_table(&path, t, common.format)?;
        outputs.push(path.display().to_string());
    }
    let manifest = Manifest {
        command: name,
        config: &job,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    let mpath = output_path(&common.out, "manifest", Format::Json);
    serde_json::to_writer_pretty(std::fs::File::create(&mpath)?, &manifest)?;
    println!("wrote {} table(s) and {}", tables.len(), mpath.display());
    Ok(converged)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a recursion did not converge to the boundary tolerance");
            ExitCode::from(3)
        }
        Err(e @ (Error::Parameter(_) | Error::Config { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
