//! Command-line front end: CRB evaluation, single optimization runs,
//! parameter sweeps with CSV emission, and the validation report.
//!
//! Exit codes: 0 all points converged / all suites passed, 2 some runs did
//! not converge or a suite failed, 1 usage or config errors.

use clap::{Parser, Subcommand, ValueEnum};
use nfcrb::geometry::build_channels;
use nfcrb::harness::{self, RunRecord, SweepSpec, SweepVar, ValidationOptions};
use nfcrb::optimizer::{PddOptions, RunStatus, StarsProfile};
use nfcrb::{C64, CMat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nfcrb", version, about = "Near-field fluid-antenna ISAC transmit design")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form CRB of an undesigned probe (isotropic covariance,
    /// balanced surface, center position).
    Crb {
        /// Config file path or preset name (desk, paper).
        #[arg(long)]
        config: String,
        /// Overrides the config RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One full optimizer run; emits a single-row CSV.
    Optimize {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimizer runs across a SINR-threshold or power sweep.
    Sweep {
        #[arg(long)]
        config: String,
        /// Which dB knob to sweep.
        #[arg(long, value_enum)]
        var: VarArg,
        /// Comma-separated dB values, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Fixed-position baseline: force a single antenna position.
        #[arg(long)]
        fpa: bool,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Fill the wall_ms column with measured times (reruns then differ).
        #[arg(long)]
        timing: bool,
    },
    /// Runs every property suite and reports pass/fail per suite.
    Validate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VarArg {
    Sinr,
    Power,
}

impl From<VarArg> for SweepVar {
    fn from(v: VarArg) -> SweepVar {
        match v {
            VarArg::Sinr => SweepVar::SinrDb,
            VarArg::Power => SweepVar::PowerDb,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not usage errors
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> nfcrb::error::Result<ExitCode> {
    match cli.cmd {
        Cmd::Crb { config, seed } => {
            let mut cfg = harness::load_config(&config)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let channels = build_channels(&cfg)?;
            let m = cfg.num_bs_antennas;
            let rx = CMat::identity(m, m) * C64::new(cfg.power_budget / m as f64, 0.0);
            let stars = StarsProfile::balanced(cfg.num_stars_elements);
            let crb = nfcrb::fisher::crb_for_position(&channels, &stars, &rx, 0, &cfg)?;
            println!("rcrb_range_m  {:.6e}", crb.rcrb_range);
            println!("rcrb_angle_rad {:.6e}", crb.rcrb_angle);
            println!("trace_crb     {:.6e}", crb.trace());
            println!("rayleigh_m    {:.1}", cfg.rayleigh_distance());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Optimize { config, out, seed } => {
            let mut cfg = harness::load_config(&config)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let opts = PddOptions { seed: cfg.rng_seed, ..PddOptions::default() };
            let record = harness::run_point(&cfg, &opts, "none", 0.0, true)?;
            print_records(std::slice::from_ref(&record));
            harness::write_csv(std::slice::from_ref(&record), &out)?;
            harness::write_plot_data(
                std::slice::from_ref(&record),
                &harness::plot_companion_path(&out),
            )?;
            Ok(exit_for(std::slice::from_ref(&record)))
        }
        Cmd::Sweep { config, var, values, out, fpa, repeats, seed, timing } => {
            let cfg = harness::load_config(&config)?;
            let spec = SweepSpec {
                variable: var.into(),
                values,
                fpa,
                repeats,
                seed: seed.unwrap_or(cfg.rng_seed),
                timing,
            };
            let records = harness::run_sweep(&cfg, &spec)?;
            print_records(&records);
            harness::write_csv(&records, &out)?;
            harness::write_plot_data(&records, &harness::plot_companion_path(&out))?;
            Ok(exit_for(&records))
        }
        Cmd::Validate { config, seed } => {
            let cfg = harness::load_config(&config)?;
            let mut opts = ValidationOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            let report = harness::run_validation(&cfg, &opts)?;
            for s in &report.suites {
                println!("{:<24} {:<12} {}", s.name, s.outcome.to_string(), s.detail);
            }
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn print_records(records: &[RunRecord]) {
    for r in records {
        let crb = r
            .trace_crb
            .map(|t| format!("trace_crb {t:.6e}"))
            .unwrap_or_else(|| "no CRB".into());
        let margin = r
            .min_sinr_margin_db
            .map(|m| format!(", min margin {m:.2} dB"))
            .unwrap_or_default();
        println!(
            "{}={} seed={}: {} ({} outer / {} inner, violation {:.2e}){}{}",
            r.sweep_var,
            r.value,
            r.seed,
            r.status,
            r.outer_iters,
            r.inner_iters,
            r.final_violation,
            if crb.is_empty() { String::new() } else { format!(", {crb}") },
            margin,
        );
        if let (Some(rr), Some(ra)) = (r.rcrb_range_m, r.rcrb_angle_rad) {
            println!("  rcrb: {rr:.6e} m / {ra:.6e} rad");
        }
    }
}

fn exit_for(records: &[RunRecord]) -> ExitCode {
    if records.iter().all(|r| r.status == RunStatus::Converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
