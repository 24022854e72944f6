//! `tcplab` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tcplab::harness::{
    compare_report, load_outputs, render_outputs, report::render_tables, run_experiment, write_compare,
    write_outputs, ExperimentConfig, ExperimentResult,
};
use tcplab::ingest::{generate_synthetic, load_subject, save_subject, DatasetSchema, SynthConfig};

const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Parser)]
#[command(name = "tcplab", version, about = "Test case prioritization experiments over CI histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a subject CSV and list every violation.
    Validate {
        csv: PathBuf,
        /// Extra feature columns that must be present.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Generate a synthetic subject from a TOML config.
    Synth {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment and write per-cycle results, summaries and tables.
    Run {
        /// Experiment config (alternatively `--config`).
        path: Option<PathBuf>,
        #[arg(long, conflicts_with = "path")]
        config: Option<PathBuf>,
        /// Output directory; overrides the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root for runs that name no output directory.
        #[arg(long, env = "TCPLAB_OUT", default_value = "tcplab-out")]
        out_root: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Merge the results of several runs and compare them.
    Compare {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render tables from a run directory's CSVs.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Master seed, applied to every seeded component.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-key override, e.g. `--set sl.n_trees=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<tcplab::Error>()) {
        Some(err) if err.is_data_error() || matches!(err, tcplab::Error::Config(_)) => 2,
        _ => 3,
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Validate { csv, columns } => validate(&csv, columns),
        Command::Synth { config, out, common } => synth(&config, &out, &common).map(|_| ExitCode::SUCCESS),
        Command::Run {
            path,
            config,
            out,
            out_root,
            jobs,
            common,
        } => {
            let Some(path) = path.or(config) else {
                bail!(tcplab::Error::Config("run needs a config path".into()));
            };
            run(&path, out, &out_root, jobs, &common).map(|_| ExitCode::SUCCESS)
        }
        Command::Compare { dirs, out } => compare(&dirs, &out).map(|_| ExitCode::SUCCESS),
        Command::Report { dir } => report(&dir).map(|_| ExitCode::SUCCESS),
    }
}

fn validate(csv: &Path, columns: Vec<String>) -> Result<ExitCode> {
    let schema = DatasetSchema { extra_columns: columns };
    let subject = load_subject(csv, &schema).with_context(|| format!("reading {}", csv.display()))?;
    let violations = subject.validate();
    for v in &violations {
        println!("{v}");
    }
    println!("{} violations", violations.len());
    Ok(if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn synth(config: &Path, out: &Path, common: &Common) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut doc: toml::Table = toml::from_str(&text).map_err(|e| tcplab::Error::Config(e.to_string()))?;
    for o in &common.overrides {
        tcplab::harness::apply_override(&mut doc, o)?;
    }
    let mut cfg: SynthConfig = doc.try_into().map_err(|e: toml::de::Error| tcplab::Error::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let subject = generate_synthetic(&cfg)?;
    save_subject(&subject, out)?;
    let records: usize = subject.cycles.iter().map(|c| c.len()).sum();
    println!("wrote {} cycles, {records} records to {}", subject.cycles.len(), out.display());
    Ok(())
}

fn run(path: &Path, out: Option<PathBuf>, out_root: &Path, jobs: usize, common: &Common) -> Result<()> {
    let mut cfg = ExperimentConfig::load(path, &common.overrides)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| out_root.join(&cfg.name));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(RESOLVED_CONFIG), cfg.to_toml()?)?;

    let result = run_experiment(&cfg, jobs)?;
    write_outputs(&dir, &result)?;
    for s in &result.skipped {
        eprintln!("skipped: {s}");
    }
    print_tables(&dir)?;
    println!("results in {}", dir.display());
    Ok(())
}

fn print_tables(dir: &Path) -> Result<()> {
    let tables = dir.join("tables.txt");
    print!("{}", fs::read_to_string(&tables).with_context(|| format!("reading {}", tables.display()))?);
    Ok(())
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn compare(dirs: &[PathBuf], out: &Path) -> Result<()> {
    let mut merged = ExperimentResult::default();
    for dir in dirs {
        let mut res = load_outputs(dir).with_context(|| format!("loading {}", dir.display()))?;
        let label = dir_label(dir);
        for r in &mut res.records {
            r.protocol = format!("{label}/{}", r.protocol);
            for row in &mut r.rows {
                row.protocol = r.protocol.clone();
            }
        }
        merged.records.append(&mut res.records);
        merged.early_stop.append(&mut res.early_stop);
        merged.skipped.append(&mut res.skipped);
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = compare_report(&merged.records)?;
    write_compare(out, &report)?;
    let tables = render_tables(&report, &merged);
    fs::write(out.join("tables.txt"), &tables)?;
    print!("{tables}");
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let res = load_outputs(dir).with_context(|| format!("loading {}", dir.display()))?;
    render_outputs(dir, &res)?;
    print_tables(dir)
}
