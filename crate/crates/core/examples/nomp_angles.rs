//! Per-subregion angle estimation for one off-grid scatterer: grid-only
//! detection against Newton-refined detection.
//!
//! ```text
//! cargo run --release --example nomp_angles -- [snr_db|inf]
//! ```

use ma_isac::baselines::Pipeline;
use ma_isac::harness::observe_scene;
use ma_isac::{Preset, Scatterer, Scene, SimConfig, Spherical, C64};

fn main() -> ma_isac::Result<()> {
    let snr: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(f64::INFINITY);
    let mut cfg = SimConfig::preset(Preset::Desk);
    cfg.system.num_paths = 1;
    cfg.estimator.l_pre = 1;
    cfg.system.snr_db = snr.is_finite().then_some(snr);
    let pipeline = Pipeline::new(&cfg)?;

    let truth = Spherical::new(4.0, 1.37, 1.91);
    let scene = Scene::new(vec![Scatterer { position: truth, gain: C64::new(0.6, 0.8), delay_s: 40e-9 }]);
    let data = observe_scene(&pipeline, scene, 3)?;

    let coarse = pipeline.angle_table(&data.measurement, 0)?;
    let refined = pipeline.angle_table(&data.measurement, cfg.estimator.newton_iters)?;
    let half_cell = 0.5 * pipeline.angular.theta_step();
    println!("half grid cell {:.4} rad; errors in rad (theta, phi)", half_cell);
    for (q, center) in pipeline.grid.centers().iter().enumerate() {
        let local = Spherical::from_cartesian(&(truth.to_cartesian() - center));
        let err = |t: &ma_isac::nomp::AngleEstimateTable| (t.theta[(0, q)] - local.theta, t.phi[(0, q)] - local.phi);
        let (ct, cp) = err(&coarse);
        let (rt, rp) = err(&refined);
        println!("subregion {q}: grid-only ({ct:+.2e}, {cp:+.2e})  refined ({rt:+.2e}, {rp:+.2e})");
    }
    Ok(())
}
