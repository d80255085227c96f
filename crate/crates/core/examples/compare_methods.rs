//! Runs all four estimation chains on the same random trials and prints
//! their mean scores.
//!
//! ```text
//! cargo run --release --example compare_methods -- [trials] [snr_db|inf]
//! ```

use ma_isac::baselines::{Method, Pipeline};
use ma_isac::harness::{generate_trial, run_methods, summarize, format_summary, trial_seed};
use ma_isac::{Preset, SimConfig};

fn main() -> ma_isac::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let snr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let mut cfg = SimConfig::preset(Preset::Desk);
    cfg.system.snr_db = snr.is_finite().then_some(snr);
    let pipeline = Pipeline::new(&cfg)?;
    let mut records = Vec::new();
    for t in 0..trials {
        let data = generate_trial(&pipeline, trial_seed(7, 0, t))?;
        records.extend(run_methods(&pipeline, &data, &Method::ALL, t, true));
    }
    print!("{}", format_summary(&summarize(&records)));
    Ok(())
}
