use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cxlsim::harness::{
    calibrate_check, emit_report, load_config, run_experiment_traced, Format, SimConfig, Suite, Traces,
};
use cxlsim::interconnect::{Profile, PROFILE_NAMES};
use cxlsim::SimError;

const EXIT_USAGE: u8 = 1;
const EXIT_CALIBRATION: u8 = 2;
const EXIT_FAULT: u8 = 3;

#[derive(Parser)]
#[command(name = "cxlsim", version, about = "CXL host/NIC simulator experiment harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one or more suites (or `all`); each gets its own output files.
    Run {
        #[arg(required = true)]
        suites: Vec<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["csv", "json"])]
        format: Option<String>,
        /// Write the coherence message log to <out>/<suite>.coherence.tsv.
        #[arg(long)]
        trace_coherence: bool,
        /// Write NIC engine events to <out>/<suite>.nic.tsv.
        #[arg(long)]
        trace_nic: bool,
    },
    /// Compare a calibrated profile against the published measurements.
    CalibrateCheck {
        #[arg(long)]
        profile: String,
        /// Overrides to apply on top of the profile; its `profile` key must match.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    ListProfiles,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.cmd {
        Cmd::ListProfiles => {
            for name in PROFILE_NAMES {
                match Profile::named(name) {
                    Ok(p) => println!("{name}\t{}\t{} MHz", device_name(&p), p.latency.device_mhz),
                    Err(e) => return fail(&e),
                }
            }
            ExitCode::SUCCESS
        }
        Cmd::CalibrateCheck { profile, config } => {
            let cfg = match config {
                None => SimConfig::for_profile(&profile),
                Some(path) => load_config(&path).and_then(|c| {
                    if c.profile.name == profile {
                        Ok(c)
                    } else {
                        Err(SimError::Config(format!("config is for `{}`, not `{profile}`", c.profile.name)))
                    }
                }),
            };
            let table = match cfg.and_then(|c| calibrate_check(&c)) {
                Ok(t) => t,
                Err(e) => return fail(&e),
            };
            println!("{table}");
            if table.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CALIBRATION)
            }
        }
        Cmd::Run { suites, config, seed, out, format, trace_coherence, trace_nic } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            if let Some(f) = format {
                cfg.output.format = f.parse().expect("clap restricts the values");
            }
            let suites: Vec<Suite> = if suites.iter().any(|s| s == "all") {
                Suite::ALL.to_vec()
            } else {
                match suites.iter().map(|s| s.parse()).collect::<Result<_, _>>() {
                    Ok(v) => v,
                    Err(e) => return fail(&e),
                }
            };
            run(&cfg, &suites, trace_coherence, trace_nic)
        }
    }
}

fn device_name(p: &Profile) -> &'static str {
    match p.device {
        cxlsim::interconnect::DeviceKind::Cxl => "cxl-nic",
        cxlsim::interconnect::DeviceKind::Pcie => "pcie-nic",
    }
}

/// Runs suites on their own threads; the first failure decides the exit code.
fn run(cfg: &SimConfig, suites: &[Suite], trace_coherence: bool, trace_nic: bool) -> ExitCode {
    let results: Vec<Result<Vec<PathBuf>, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            suites.iter().map(|&suite| s.spawn(move || run_one(cfg, suite, trace_coherence, trace_nic))).collect();
        handles.into_iter().map(|h| h.join().expect("suite thread panicked")).collect()
    });
    let mut code = ExitCode::SUCCESS;
    for r in results {
        match r {
            Ok(files) => {
                for f in files {
                    println!("wrote {}", f.display());
                }
            }
            Err(e) => {
                if code == ExitCode::SUCCESS {
                    code = fail(&e);
                } else {
                    eprintln!("error: {e}");
                }
            }
        }
    }
    code
}

fn run_one(cfg: &SimConfig, suite: Suite, trace_coherence: bool, trace_nic: bool) -> Result<Vec<PathBuf>, SimError> {
    let mut traces = Traces::enabled(trace_coherence, trace_nic);
    let report = run_experiment_traced(suite, cfg, &mut traces)?;
    let ext = match cfg.output.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let dir = &cfg.output.dir;
    let mut files = emit_report(&report, cfg.output.format, &dir.join(format!("{suite}.{ext}")))?;
    for (kind, text) in [("coherence", traces.coherence), ("nic", traces.nic)] {
        if let Some(text) = text {
            let p = dir.join(format!("{suite}.{kind}.tsv"));
            std::fs::write(&p, text)
                .map_err(|e| SimError::Io { path: p.display().to_string(), what: e.to_string() })?;
            files.push(p);
        }
    }
    Ok(files)
}

fn fail(e: &SimError) -> ExitCode {
    eprintln!("error: {e}");
    let mut root = e;
    while let SimError::Context { source, .. } = root {
        root = source;
    }
    match root {
        SimError::Config(_) | SimError::UnknownProfile(_) | SimError::Io { .. } => ExitCode::from(EXIT_USAGE),
        _ => ExitCode::from(EXIT_FAULT),
    }
}
