//! Localizes scatterers by clustering per-subregion bearings and
//! intersecting the resulting rays, first from exact bearings and then from
//! angles estimated on a noisy measurement.
//!
//! ```text
//! cargo run --release --example lsrc_localization -- [snr_db]
//! ```

use ma_isac::baselines::Pipeline;
use ma_isac::harness::observe_scene;
use ma_isac::lsrc::run_lsrc;
use ma_isac::nomp::AngleEstimateTable;
use ma_isac::{Preset, Scatterer, Scene, SimConfig, Spherical, C64};

fn main() -> ma_isac::Result<()> {
    let snr: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let mut cfg = SimConfig::preset(Preset::Desk);
    cfg.system.num_paths = 2;
    cfg.estimator.l_pre = 2;
    cfg.system.snr_db = Some(snr);
    let pipeline = Pipeline::new(&cfg)?;
    let alpha = cfg.estimator.alpha_th_rad();
    let truth = [Spherical::new(3.0, 1.2, 1.4), Spherical::new(5.0, 2.0, 1.9)];

    // Exact bearings from every subregion center.
    let columns: Vec<Vec<(f64, f64)>> = pipeline
        .grid
        .centers()
        .iter()
        .map(|c| {
            truth
                .iter()
                .map(|p| {
                    let local = Spherical::from_cartesian(&(p.to_cartesian() - c));
                    (local.theta, local.phi)
                })
                .collect()
        })
        .collect();
    let exact = run_lsrc(&AngleEstimateTable::from_columns(&columns), &pipeline.grid, alpha);
    println!("exact bearings: {} clusters", exact.num_clusters);
    report(&exact.estimates, &truth);

    let scene = Scene::new(
        truth
            .iter()
            .zip([C64::new(1.0, 0.0), C64::new(0.0, 0.8)])
            .map(|(&position, gain)| Scatterer { position, gain, delay_s: 30e-9 })
            .collect(),
    );
    let data = observe_scene(&pipeline, scene, 5)?;
    let table = pipeline.angle_table(&data.measurement, cfg.estimator.newton_iters)?;
    let noisy = run_lsrc(&table, &pipeline.grid, alpha);
    println!("estimated bearings at {snr} dB: {} clusters, {} rejected", noisy.num_clusters, noisy.rejected.len());
    report(&noisy.estimates, &truth);
    Ok(())
}

fn report(estimates: &[ma_isac::lsrc::ScattererEstimate], truth: &[Spherical]) {
    for e in estimates {
        let nearest = truth
            .iter()
            .map(|t| (t.to_cartesian() - e.cartesian).norm())
            .fold(f64::INFINITY, f64::min);
        let s = e.spherical;
        println!(
            "  r {:.3} m, theta {:.2} deg, phi {:.2} deg; {:.3e} m from nearest true scatterer",
            s.r,
            s.theta.to_degrees(),
            s.phi.to_degrees(),
            nearest
        );
    }
}
