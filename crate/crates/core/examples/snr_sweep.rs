//! Monte-Carlo SNR sweep through the library API. Writes the per-trial CSV
//! and prints the per-point means. Re-running with the same output resumes.
//!
//! ```text
//! cargo run --release --example snr_sweep -- [out.csv] [trials]
//! ```

use ma_isac::baselines::Method;
use ma_isac::harness::{format_summary, parse_snr_range, run_sweep, ExperimentPlan};
use ma_isac::{Preset, SimConfig};

fn main() -> ma_isac::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "snr_sweep.csv".into());
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);

    let mut plan = ExperimentPlan::new(SimConfig::preset(Preset::Desk), out);
    plan.snr_db = parse_snr_range("0:10:20")?;
    plan.trials = trials;
    plan.methods = vec![Method::NompLsrc, Method::Omp2d];
    plan.master_seed = 42;
    let report = run_sweep(&plan)?;
    println!("{} trials run, {} skipped, {} rows in {}", report.executed, report.skipped, report.records.len(), plan.output.display());
    print!("{}", format_summary(&report.summary));
    Ok(())
}
