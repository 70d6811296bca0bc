use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use pps_bridge::{BridgeServer, LiveSession};
use pps_core::{Field, RfConfig};
use pps_sim::scenario::read_main_config;
use pps_sim::{compute_metrics, read_log, LogWriter, MetricsOptions, Scenario, Simulation};

#[derive(Parser)]
#[command(name = "ppsctl", version, about = "Peripersonal-space reaching controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write the tick log as CSV.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pace ticks against the wall clock.
        #[arg(long)]
        realtime: bool,
        /// Serve live state and accept commands on this port.
        #[arg(long)]
        serve: Option<u16>,
        /// Override the scenario duration, s.
        #[arg(long)]
        duration: Option<f64>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a tick log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        /// Activation threshold used for per-part trigger detection.
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
    },
    /// Calibrate the nominal receptive field and print its threshold distances.
    CalibrateRf {
        /// Main config holding the receptive-field section; defaults are used otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Cmd::Run {
            scenario,
            out,
            realtime,
            serve,
            duration,
            seed,
        } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(d) = duration {
                sc.duration = d;
            }
            if let Some(s) = seed {
                sc.seed = s;
            }
            sc.validate()?;
            let sim = Simulation::new(sc)?;
            let mut writer = LogWriter::new(BufWriter::new(File::create(&out)?))?;
            let wall = match serve {
                Some(port) => serve_run(sim, port, realtime, &mut writer)?,
                None => local_run(sim, realtime, &mut writer)?,
            };
            writer.finish()?;
            let rows = read_log(BufReader::new(File::open(&out)?))?;
            println!("{}", compute_metrics(&rows, Some(&wall), &MetricsOptions::default()));
        }
        Cmd::Metrics { log, threshold } => {
            let rows = read_log(BufReader::new(File::open(&log)?))?;
            if rows.is_empty() {
                return Err("log has no rows".into());
            }
            let opts = MetricsOptions {
                threshold,
                ..MetricsOptions::default()
            };
            println!("{}", compute_metrics(&rows, None, &opts));
        }
        Cmd::CalibrateRf { config } => {
            let rf_cfg = match config {
                Some(path) => read_main_config(&path)?.receptive_field,
                None => RfConfig::default(),
            };
            let started = Instant::now();
            let rf = Field::from_config(&rf_cfg)?;
            let threshold = rf_cfg.calibration_point[1];
            println!("sigma = {:.5} m", rf.sigma().unwrap_or(f64::NAN));
            for theta in [-0.5, 0.0, 1.0] {
                match rf.crossing_distance(threshold, theta) {
                    Some(d) => println!("theta = {theta:+.1}: activation {threshold} at {d:.4} m"),
                    None => println!("theta = {theta:+.1}: never reaches {threshold}"),
                }
            }
            println!("elapsed {:.1} ms", started.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(())
}

fn local_run<W: std::io::Write>(
    mut sim: Simulation,
    realtime: bool,
    writer: &mut LogWriter<W>,
) -> Result<Vec<Duration>, Box<dyn std::error::Error>> {
    let period = Duration::from_secs_f64(sim.period());
    let start = Instant::now();
    let mut wall = Vec::new();
    while !sim.is_finished() {
        let rec = sim.step()?;
        wall.push(rec.compute);
        writer.write(&rec)?;
        if realtime {
            let due = start + period * (rec.tick as u32 + 1);
            std::thread::sleep(due.saturating_duration_since(Instant::now()));
        }
    }
    Ok(wall)
}

fn serve_run<W: std::io::Write>(
    sim: Simulation,
    port: u16,
    realtime: bool,
    writer: &mut LogWriter<W>,
) -> Result<Vec<Duration>, Box<dyn std::error::Error>> {
    let server = BridgeServer::bind(("0.0.0.0", port))?;
    eprintln!("serving on ws://{}", server.local_addr());
    let mut session = LiveSession::new(sim, server);
    let mut wall = Vec::new();
    session.run(realtime, |rec| {
        wall.push(rec.compute);
        writer.write(rec)?;
        Ok(())
    })?;
    Ok(wall)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
