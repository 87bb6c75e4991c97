use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use shelving_core::classify::{error_report, gaussian_peak_fit};
use shelving_core::harness::{exit_code, run_scenario, sweep_detection_time, with_threads, ExperimentConfig};
use shelving_core::mc::Simulator;
use shelving_core::rng::{derive_seed, domain};
use shelving_core::{Error, Label};

#[derive(Parser)]
#[command(name = "shelving", version, about = "Simulate and analyse shelved trapped-ion state detection")]
struct Cli {
    /// JSON experiment configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate labelled trials for every configured protocol and write subbin counts.
    Simulate {
        /// Detection time in ms (default: each protocol's own).
        #[arg(long)]
        time: Option<f64>,
        /// Also write the raw photon time tags as a binary dump.
        #[arg(long)]
        tags: bool,
    },
    /// Sweep the detection time and write the error table.
    Sweep,
    /// Run a named reproduction scenario.
    Scenario {
        /// fig3-peakfit, fig4-shelving, fig5-rap, fig6-apd, fig7-emccd or table2-summary.
        name: String,
    },
    /// Fit Gaussian peaks plus a constant offset to an `x,y` CSV; prints JSON.
    FitPeaks {
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        peaks: usize,
    },
    /// Error report for a CSV with `prediction` and `label` columns; prints JSON.
    Report { input: PathBuf },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, time_ms: Option<f64>, tags: bool) -> anyhow::Result<()> {
    for (i, protocol) in cfg.protocols.iter().enumerate() {
        let protocol = match time_ms {
            Some(ms) => protocol.clone().with_detection_time(ms * 1e-3),
            None => protocol.clone(),
        };
        let sim = Simulator::new(protocol.clone(), &cfg.atomic)?;
        let seed = derive_seed(cfg.seed, domain::SCENARIO, 900 + i as u64);
        let data = sim.run_batch(cfg.trials_per_class, cfg.trials_per_class, cfg.schedule, seed);
        std::fs::create_dir_all(&cfg.output_dir)?;
        let path = cfg.output_dir.join(format!("simulate_{}.csv", protocol.kind));
        data.write_csv(BufWriter::new(File::create(&path)?))?;
        eprintln!("wrote {}", path.display());
        if tags {
            let path = cfg.output_dir.join(format!("simulate_{}.tags", protocol.kind));
            data.write_tag_dump(BufWriter::new(File::create(&path)?))?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Numeric rows of a CSV, skipping a non-numeric header line.
fn read_xy(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() >= 2 => {
                x.push(v[0]);
                y.push(v[1]);
            }
            Err(_) if n == 0 => continue,
            _ => return Err(Error::Parse(format!("line {}: expected two numbers", n + 1)).into()),
        }
    }
    Ok((x, y))
}

fn read_predictions(path: &Path) -> anyhow::Result<(Vec<Label>, Vec<Label>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Parse(format!("missing `{name}` column")))
    };
    let (pi, li) = (col("prediction")?, col("label")?);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| fields.get(i).copied().ok_or_else(|| Error::Parse(format!("short row `{line}`")));
        pred.push(get(pi)?.parse()?);
        truth.push(get(li)?.parse()?);
    }
    Ok((pred, truth))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate { time, tags } => simulate(&cfg, *time, *tags),
        Command::Sweep => {
            let res = sweep_detection_time(&cfg)?;
            write_file(&cfg.output_dir, "sweep.csv", &res.to_csv())?;
            write_file(&cfg.output_dir, "sweep.json", &res.to_json()?)
        }
        Command::Scenario { name } => {
            let artifacts = run_scenario(name, &cfg)?;
            artifacts.write_to(&cfg.output_dir)?;
            for (file, _) in &artifacts.files {
                eprintln!("wrote {}", cfg.output_dir.join(file).display());
            }
            print!("{}", artifacts.summary);
            Ok(())
        }
        Command::FitPeaks { input, peaks } => {
            let (x, y) = read_xy(input)?;
            let fit = gaussian_peak_fit(&x, &y, *peaks)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(())
        }
        Command::Report { input } => {
            let (pred, truth) = read_predictions(input)?;
            let report = error_report(&pred, &truth)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = with_threads(cli.threads, || run(&cli)).map_err(anyhow::Error::from).and_then(|r| r);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<Error>().map_or(1, exit_code);
            ExitCode::from(code as u8)
        }
    }
}
