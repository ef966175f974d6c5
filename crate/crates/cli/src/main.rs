use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forest_risk::harness::{run_horf_study, run_toy_study, ExperimentConfig};
use forest_risk::report::{
    holdout_csv, holdout_markdown, parse_holdout_csv, parse_toy_csv, refit_holdout_csv, toy_csv,
    toy_markdown, write_report, ReportFormat, HOLDOUT_HEADER,
};
use forest_risk::Error;

#[derive(Parser)]
#[command(
    name = "forest-risk",
    version,
    about = "Approximation and estimation error studies of random forests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional purely random forest study.
    Toy(Common),
    /// Hold-out random forest study on the Friedman1 function.
    Horf(Common),
    /// Refit the coefficients of a raw hold-out CSV.
    Fit(FileArgs),
    /// Render a Markdown table from a toy or hold-out CSV.
    Report(FileArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dimension of the hold-out study.
    #[arg(long, value_parser = parse_p)]
    p: Option<usize>,
    /// Comma-separated leaf counts, e.g. 32,64,128,256.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct FileArgs {
    /// CSV written by `toy` or `horf`.
    input: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn parse_p(s: &str) -> Result<usize, String> {
    match s {
        "5" => Ok(5),
        "10" => Ok(10),
        _ => Err(format!("p must be 5 or 10, got {s}")),
    }
}

enum Study {
    Toy,
    HoldOut,
}

fn load_config(c: &Common, study: Study) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(p) = c.p {
        cfg.holdout.p = p;
    }
    if let Some(k) = &c.k_grid {
        match study {
            Study::Toy => cfg.toy.k_grid = k.clone(),
            Study::HoldOut => cfg.holdout.k_grid = k.clone(),
        }
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn configure_threads(c: &Common) -> Result<(), Error> {
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn write_config(cfg: &ExperimentConfig) -> Result<(), Error> {
    let dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

fn out_dir(c: &Common, input: &Path) -> PathBuf {
    c.out
        .clone()
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Toy(c) => {
            configure_threads(&c)?;
            let cfg = load_config(&c, Study::Toy)?;
            cfg.toy.validate()?;
            let rows = run_toy_study(&cfg.toy, cfg.seeds())?;
            write_config(&cfg)?;
            let dir = Path::new(&cfg.out_dir);
            let md = toy_markdown(&rows)?;
            print!("{md}");
            announce(&[
                write_report(dir, "toy", ReportFormat::Csv, &toy_csv(&rows)?)?,
                write_report(dir, "toy", ReportFormat::Markdown, &md)?,
            ]);
        }
        Command::Horf(c) => {
            configure_threads(&c)?;
            let cfg = load_config(&c, Study::HoldOut)?;
            cfg.holdout.validate()?;
            let rows = run_horf_study(&cfg.holdout, cfg.seeds())?;
            write_config(&cfg)?;
            let dir = Path::new(&cfg.out_dir);
            let md = holdout_markdown(&rows)?;
            print!("{md}");
            announce(&[
                write_report(dir, "horf", ReportFormat::Csv, &holdout_csv(&rows)?)?,
                write_report(dir, "horf", ReportFormat::Markdown, &md)?,
            ]);
        }
        Command::Fit(a) => {
            let text = fs::read_to_string(&a.input)?;
            let rows = refit_holdout_csv(&text)?;
            let dir = out_dir(&a.common, &a.input);
            for r in &rows {
                println!(
                    "{},{},C={},r={},slope={},intercept={}",
                    r.condition,
                    r.kind.label(),
                    r.approx_fit.c,
                    r.approx_fit.r,
                    r.estimation_fit.slope,
                    r.estimation_fit.intercept
                );
            }
            announce(&[write_report(
                &dir,
                "horf_refit",
                ReportFormat::Csv,
                &holdout_csv(&rows)?,
            )?]);
        }
        Command::Report(a) => {
            let text = fs::read_to_string(&a.input)?;
            let dir = out_dir(&a.common, &a.input);
            let holdout = text
                .lines()
                .next()
                .is_some_and(|h| h == HOLDOUT_HEADER.join(","));
            let (stem, md) = if holdout {
                ("horf", holdout_markdown(&parse_holdout_csv(&text)?)?)
            } else {
                ("toy", toy_markdown(&parse_toy_csv(&text)?)?)
            };
            print!("{md}");
            announce(&[write_report(&dir, stem, ReportFormat::Markdown, &md)?]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if matches!(e.root(), Error::Io(_)) {
                ExitCode::from(1)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
