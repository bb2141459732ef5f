use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{debug, info};

use twinwatch::anomaly::{events_to_json_lines, DetectorConfig};
use twinwatch::incubator::{simulate_run, Fault, FaultSchedule, RunConfig};
use twinwatch::pipeline::{detect_rows, estimate, read_estimates, write_estimates, EstimateConfig, SimulationMeta};
use twinwatch::telemetry::{read_csv, write_csv};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "twinwatch", version, about = "Simulate, filter and monitor a thermal incubator twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the closed-loop plant and write telemetry with ground truth.
    Simulate {
        /// Run configuration (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: usize,
        /// Fault as param:xFACTOR:START-END, e.g. gbr:x10:600-660. Repeatable.
        #[arg(long = "fault", value_parser = parse_fault)]
        faults: Vec<Fault>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Kalman-filter a telemetry CSV into a per-step estimate table.
    Estimate {
        #[arg(long)]
        telemetry: PathBuf,
        /// Run configuration or bare system (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Scan an estimate table for anomalies and write JSON-lines events.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DetectorConfig::default().confidence)]
        confidence: f64,
        #[arg(long, default_value_t = DetectorConfig::default().window_m)]
        window_m: usize,
        #[arg(long, default_value_t = DetectorConfig::default().window_n)]
        window_n: usize,
        #[arg(long, default_value_t = DetectorConfig::default().recovery_n)]
        recovery_n: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    s.parse().map_err(|e: twinwatch::Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<twinwatch::Error> for Failure {
    fn from(e: twinwatch::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Writes via a sibling temporary file so a failed run leaves nothing behind.
fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Failure::Data(format!("{}: {e}", path.display())));
    }
    Ok(())
}

fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let cfg = match path {
        Some(p) => {
            let text = read_text(p)?;
            serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(
    config: Option<&Path>,
    steps: usize,
    faults: Vec<Fault>,
    seed: u64,
    output: &Path,
) -> Result<(), Failure> {
    let cfg = load_run_config(config)?;
    let faults = FaultSchedule::new(faults).map_err(|e| Failure::Usage(e.to_string()))?;
    let run = simulate_run(&cfg, &faults, steps, seed)?;

    let mut csv = Vec::new();
    write_csv(&run.telemetry, &mut csv)?;
    let meta = SimulationMeta {
        config: cfg,
        faults,
        seed,
        steps,
    };
    let mut meta_json = serde_json::to_vec_pretty(&meta).map_err(|e| Failure::Data(e.to_string()))?;
    meta_json.push(b'\n');

    write_file(output, &csv)?;
    write_file(&sidecar_path(output), &meta_json)?;
    info!("wrote {} records to {}", run.telemetry.len(), output.display());
    Ok(())
}

fn cmd_estimate(telemetry: &Path, config: Option<&Path>, output: &Path) -> Result<(), Failure> {
    let cfg = match config {
        Some(p) => EstimateConfig::from_json_str(&read_text(p)?)
            .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        None => EstimateConfig::Incubator(RunConfig::default()),
    };
    let file = fs::File::open(telemetry).map_err(|e| Failure::Data(format!("{}: {e}", telemetry.display())))?;
    let records = read_csv(file).map_err(|e| Failure::Data(format!("{}: {e}", telemetry.display())))?;
    debug!("read {} telemetry records", records.len());
    let rows = estimate(&records, &cfg)?;

    let mut out = Vec::new();
    write_estimates(&rows, &mut out)?;
    write_file(output, &out)?;
    info!("wrote {} estimate rows to {}", rows.len(), output.display());
    Ok(())
}

fn cmd_detect(input: &Path, detector: DetectorConfig, output: &Path) -> Result<(), Failure> {
    detector.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let file = fs::File::open(input).map_err(|e| Failure::Data(format!("{}: {e}", input.display())))?;
    let rows = read_estimates(file).map_err(|e| Failure::Data(format!("{}: {e}", input.display())))?;
    let events = detect_rows(&rows, &detector)?;
    write_file(output, events_to_json_lines(&events)?.as_bytes())?;
    info!("{} anomaly events written to {}", events.len(), output.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            config,
            steps,
            faults,
            seed,
            output,
        } => cmd_simulate(config.as_deref(), steps, faults, seed, &output),
        Command::Estimate {
            telemetry,
            config,
            output,
        } => cmd_estimate(&telemetry, config.as_deref(), &output),
        Command::Detect {
            input,
            confidence,
            window_m,
            window_n,
            recovery_n,
            output,
        } => {
            let detector = DetectorConfig {
                confidence,
                window_m,
                window_n,
                recovery_n,
            };
            cmd_detect(&input, detector, &output)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TWINWATCH_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
