use clap::{Parser, Subcommand};
use mumimo::simrun::{emit_artifacts, parse_config, run_scenario, summarize, ScenarioConfig, ToggleEvent};
use mumimo::{selftest, SimError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mumimo", version, about = "2x2 uplink MU-MIMO link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        /// `on`, `off` or `toggle:<frame>`.
        #[arg(long = "mu-mimo", value_name = "MODE")]
        mu_mimo: Option<String>,
        #[arg(long = "fixed-point")]
        fixed_point: bool,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn apply_mu_mimo(cfg: &mut ScenarioConfig, mode: &str) -> Result<(), SimError> {
    match mode {
        "on" | "off" => {
            cfg.mu_mimo_initial = mode == "on";
            cfg.mu_mimo_toggle_events.clear();
        }
        other => {
            let frame = other
                .strip_prefix("toggle:")
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| SimError::Validation {
                    field: "--mu-mimo".into(),
                    msg: format!("`{other}` is not on, off or toggle:<frame>"),
                })?;
            cfg.mu_mimo_toggle_events = vec![ToggleEvent { frame, enabled: !cfg.mu_mimo_initial }];
        }
    }
    Ok(())
}

fn run(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    frames: Option<usize>,
    mu_mimo: Option<String>,
    fixed_point: bool,
) -> Result<(), SimError> {
    let text = std::fs::read_to_string(&config)?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(n) = frames {
        cfg.duration_frames = n;
        cfg.mu_mimo_toggle_events.retain(|e| e.frame < n);
        cfg.constellation_frames.retain(|&f| f < n);
    }
    if let Some(m) = mu_mimo {
        apply_mu_mimo(&mut cfg, &m)?;
    }
    if fixed_point {
        cfg.fixed_point = Some(cfg.fixed_format);
    }
    cfg.validate()?;
    let metrics = run_scenario(&cfg)?;
    emit_artifacts(&metrics, &cfg.output_dir)?;
    let report = summarize(&metrics);
    println!("output\t{}", cfg.output_dir.display());
    for g in &report.regimes {
        let bits: Vec<String> = g.mean_bits_per_frame.iter().map(|b| format!("{b:.0}")).collect();
        println!(
            "regime\tframes={}..{}\tmu_mimo={}\tmean_bits_per_frame={}",
            g.start_frame,
            g.end_frame,
            if g.mu_mimo { "on" } else { "off" },
            bits.join(",")
        );
    }
    Ok(())
}

fn error_line(kind: &str, msg: &str) -> String {
    format!("error\t{kind}\t{}", msg.replace(['\n', '\t'], " "))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprintln!("{}", error_line("usage", e.to_string().lines().next().unwrap_or("")));
            return ExitCode::from(2);
        }
        Err(e) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match cli.command {
        Command::Run { config, seed, out, frames, mu_mimo, fixed_point } => {
            match run(config, seed, out, frames, mu_mimo, fixed_point) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{}", error_line(e.kind(), &e.to_string()));
                    ExitCode::FAILURE
                }
            }
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{}\t{}\t{}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}", error_line("selftest", &failed.join(",")));
                ExitCode::FAILURE
            }
        }
    }
}
