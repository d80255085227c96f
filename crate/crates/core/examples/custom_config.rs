//! Overriding preset parameters from TOML and inspecting the derived
//! quantities. Keys are top-level; unknown keys and invalid values are
//! rejected at load time.

use ma_isac::{Preset, SimConfig};

fn main() -> ma_isac::Result<()> {
    let base = SimConfig::preset(Preset::Desk);
    let text = r#"
slots_per_frame = 16
pilot_subcarriers = 16
snr_db = 10.0
newton_iters = 5
alpha_th_deg = 15.0
"#;
    let cfg = SimConfig::from_toml_str_with_base(text, &base)?;
    let s = &cfg.system;
    println!("N_T {} -> port CR {:.3}; K_c {} -> subcarrier CR {:.3}", s.slots_per_frame, s.cr_ports(), s.pilot_subcarriers, s.cr_subcarriers());
    println!("measurements per frame {}, SNR {:?} dB, Newton steps {}", s.total_measurements(), s.snr_db, cfg.estimator.newton_iters);
    println!("resolved config:\n{}", toml::to_string(&cfg).expect("serializable"));

    let bad = SimConfig::from_toml_str_with_base("slots_per_frame = 1000\n", &base);
    println!("oversized N_T rejected: {}", bad.unwrap_err());
    let typo = SimConfig::from_toml_str_with_base("slots = 16\n", &base);
    println!("misspelled key rejected: {}", typo.unwrap_err());
    Ok(())
}
