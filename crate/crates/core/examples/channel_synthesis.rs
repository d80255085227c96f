//! Draws a random scene, synthesizes its port-by-subcarrier channel and the
//! pilot measurement collected by the movable antenna.
//!
//! ```text
//! cargo run --release --example channel_synthesis -- [desk|paper] [seed]
//! ```

use ma_isac::geometry::{simulate_measurement, synthesize_channel};
use ma_isac::{PortGrid, Preset, Scene, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ma_isac::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().as_deref().unwrap_or("desk").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SimConfig::preset(preset);
    let sys = &cfg.system;
    let grid = PortGrid::from_config(sys)?;

    println!("preset {preset:?}: {} ports, {} subregions of {} ports", grid.num_ports(), grid.num_subregions(), sys.ports_per_subregion());
    println!("wavelength {:.4} m, port spacing {:.4} m, Rayleigh distance {:.3} m", sys.wavelength(), sys.port_spacing_m(), sys.rayleigh_distance());
    for (q, c) in grid.centers().iter().enumerate() {
        println!("  subregion {q} center (x {:+.3}, z {:+.3}) m", c.x, c.z);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(sys.num_paths, cfg.estimator.tau_max_s, &mut rng);
    for (l, s) in scene.scatterers.iter().enumerate() {
        let p = s.position;
        println!(
            "  path {l}: r {:.2} m, theta {:.1} deg, phi {:.1} deg, delay {:.1} ns, |g| {:.3}",
            p.r,
            p.theta.to_degrees(),
            p.phi.to_degrees(),
            s.delay_s * 1e9,
            s.gain.norm()
        );
    }

    let channel = synthesize_channel(&scene.scatterers, &grid, sys)?;
    let m = simulate_measurement(&channel, &grid, sys, seed)?;
    println!("channel {}x{}, mean |h|^2 {:.3}", channel.num_ports(), channel.num_subcarriers(), channel.h.norm_squared() / channel.h.len() as f64);
    println!(
        "measurement: {} blocks of {}x{}, noise power {:.3e}, fingerprint {}",
        m.num_subregions(),
        m.pilots[0].nrows(),
        m.num_pilots(),
        m.noise_power,
        &m.fingerprint()[..16]
    );
    Ok(())
}
