use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ma_isac::baselines::parse_methods;
use ma_isac::checks::{run_suite, Suite};
use ma_isac::harness::{format_summary, parse_snr_range, run_sweep, ExperimentPlan};
use ma_isac::{Preset, SimConfig};

#[derive(Parser)]
#[command(name = "ma-isac", version, about = "Near-field movable-antenna sensing and channel estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep writing one CSV row per (point, trial, method).
    Simulate {
        /// TOML file overriding preset keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value = "nomp_lsrc,omp_lsrc,omp2d,omp3d")]
        methods: String,
        /// `start:step:stop`, a comma list, or `inf` for noiseless.
        #[arg(long, default_value = "-10:5:30")]
        snr: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// Slots per frame (N_T) values, comma separated.
        #[arg(long, value_delimiter = ',')]
        nt: Vec<usize>,
        /// Pilot subcarrier counts (K_c), comma separated.
        #[arg(long, value_delimiter = ',')]
        kc: Vec<usize>,
        /// Write runtime_ms as 0 for byte-reproducible output.
        #[arg(long)]
        no_timing: bool,
    },
    /// Runs a verification suite and prints one line per check.
    Check {
        #[arg(long)]
        suite: Suite,
    },
}

fn run(cli: Cli) -> ma_isac::Result<bool> {
    match cli.command {
        Command::Simulate { config, preset, methods, snr, trials, seed, out, nt, kc, no_timing } => {
            let base = SimConfig::preset(preset);
            let base = match config {
                Some(path) => SimConfig::load(&path, &base)?,
                None => base,
            };
            let mut plan = ExperimentPlan::new(base, out);
            plan.methods = parse_methods(&methods)?;
            plan.snr_db = parse_snr_range(&snr)?;
            plan.trials = trials;
            plan.master_seed = seed;
            plan.slots_per_frame = nt;
            plan.pilot_subcarriers = kc;
            plan.record_timing = !no_timing;
            let report = run_sweep(&plan)?;
            println!(
                "{} trials run, {} already present; {} rows in {}",
                report.executed,
                report.skipped,
                report.records.len(),
                plan.output.display()
            );
            print!("{}", format_summary(&report.summary));
            Ok(true)
        }
        Command::Check { suite } => {
            let outcomes = run_suite(suite);
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
