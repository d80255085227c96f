//! Sensing-assisted channel estimation.
//!
//! Given localized scatterers, the stacked pilots are projected onto the
//! steering vectors at the estimated positions, each path's delay is found
//! by an exhaustive search over a uniform delay grid, weak paths are pruned,
//! and the full port-by-subcarrier channel is rebuilt from the survivors.

use nalgebra::{DMatrix, DVector};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::geometry::{delay_response, steering_vector, steering_vector_at, subcarrier_frequencies, ChannelMatrix, Measurement, PortGrid};
use crate::linalg::least_squares;
use crate::lsrc::ScattererEstimate;
use crate::C64;

/// All subregion blocks stacked in subregion order.
///
/// Row `i` of `y` is port `ports[i]`; `ports` is the concatenation of the
/// per-subregion visited lists (each ascending), not a globally sorted list.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMeasurement {
    pub y: DMatrix<C64>,
    pub ports: Vec<usize>,
    pub pilot_set: Vec<usize>,
}

pub fn stack_measurements(measurement: &Measurement) -> Result<StackedMeasurement> {
    let kc = measurement.num_pilots();
    let mut rows = 0;
    for (q, (y, idx)) in measurement.pilots.iter().zip(&measurement.visited).enumerate() {
        if y.ncols() != kc {
            return Err(Error::Measurement(format!(
                "subregion {q} has {} pilot columns, expected {kc}",
                y.ncols()
            )));
        }
        if y.nrows() != idx.len() {
            return Err(Error::Measurement(format!(
                "subregion {q} has {} rows but {} visited ports",
                y.nrows(),
                idx.len()
            )));
        }
        rows += y.nrows();
    }
    let mut stacked = DMatrix::zeros(rows, kc);
    let mut offset = 0;
    for y in &measurement.pilots {
        stacked.rows_mut(offset, y.nrows()).copy_from(y);
        offset += y.nrows();
    }
    Ok(StackedMeasurement {
        y: stacked,
        ports: measurement.visited.concat(),
        pilot_set: measurement.pilot_set.clone(),
    })
}

/// Samples `d * tau_max / G_tau`, `d = 1..=G_tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayGrid {
    pub tau_max_s: f64,
    pub g_tau: usize,
}

impl DelayGrid {
    pub fn new(tau_max_s: f64, g_tau: usize) -> Result<Self> {
        if !(tau_max_s > 0.0) || g_tau == 0 {
            return Err(Error::Config("delay grid needs tau_max > 0 and G_tau >= 1".into()));
        }
        Ok(DelayGrid { tau_max_s, g_tau })
    }

    pub fn spacing(&self) -> f64 {
        self.tau_max_s / self.g_tau as f64
    }

    /// Delay of the 1-based sample `d`.
    pub fn sample(&self, d: usize) -> f64 {
        d as f64 * self.tau_max_s / self.g_tau as f64
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.g_tau).map(|d| self.sample(d))
    }
}

/// Least-squares path coefficients `X_sam` for steering vectors at the
/// estimated positions (full-aperture model, rows restricted to the stacked
/// ports).
#[derive(Debug, Clone)]
pub struct ProjectedGains {
    pub x: DMatrix<C64>,
    pub rank_deficient: bool,
}

pub fn project_gains(
    stacked: &StackedMeasurement,
    estimates: &[ScattererEstimate],
    grid: &PortGrid,
    wavelength: f64,
) -> Result<ProjectedGains> {
    if estimates.is_empty() {
        return Err(Error::Domain("gain projection needs at least one scatterer".into()));
    }
    let positions: Vec<_> = stacked.ports.iter().map(|&n| grid.port(n)).collect();
    let columns = estimates
        .iter()
        .map(|e| steering_vector_at(&e.spherical, &positions, wavelength))
        .collect::<Result<Vec<_>>>()?;
    let psi = DMatrix::from_columns(&columns);
    let ls = least_squares(&psi, &stacked.y);
    Ok(ProjectedGains { x: ls.x, rank_deficient: ls.rank_deficient })
}

/// Best delay-grid fit of one coefficient row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayFit {
    /// 1-based grid index.
    pub index: usize,
    pub delay_s: f64,
    pub gain: C64,
    /// Squared fit error at the chosen delay.
    pub error: f64,
}

/// Squared error and scalar least-squares gain of `x` against `f`.
fn fit_error(x: &DVector<C64>, f: &DVector<C64>) -> (f64, C64) {
    let gain = f.dotc(x) / C64::new(f.norm_squared(), 0.0);
    ((x - f * gain).norm_squared(), gain)
}

/// Exhaustive search of the delay grid for the row `x ~ gain * f_sam(tau)`,
/// where `f_sam` is the delay response at the pilot frequencies. The gain at
/// each candidate is `f^H x / ||f||^2`. Ties go to the smaller delay.
pub fn estimate_delay_gain(x: &DVector<C64>, delays: &DelayGrid, pilot_freqs: &[f64]) -> DelayFit {
    let mut best: Option<DelayFit> = None;
    for d in 1..=delays.g_tau {
        let tau = delays.sample(d);
        let f = delay_response(tau, pilot_freqs);
        let (error, gain) = fit_error(x, &f);
        if best.is_none_or(|b| error < b.error) {
            best = Some(DelayFit { index: d, delay_s: tau, gain, error });
        }
    }
    best.expect("delay grid is non-empty")
}

/// Squared fit error of `x` at every delay sample, in grid order.
pub fn delay_error_profile(x: &DVector<C64>, delays: &DelayGrid, pilot_freqs: &[f64]) -> Vec<f64> {
    delays
        .samples()
        .map(|tau| fit_error(x, &delay_response(tau, pilot_freqs)).0)
        .collect()
}

/// Pilot subcarrier baseband frequencies.
pub fn pilot_frequencies(config: &SystemConfig, pilot_set: &[usize]) -> Vec<f64> {
    let all = subcarrier_frequencies(config);
    pilot_set.iter().map(|&j| all[j]).collect()
}

#[derive(Debug, Clone)]
pub struct RefinedChannel {
    pub channel: ChannelMatrix,
    /// Scatterers kept after pruning, with delay and gain attached.
    pub survivors: Vec<ScattererEstimate>,
    /// No scatterer was available or all were pruned; the channel is zero.
    pub all_pruned: bool,
    pub rank_deficient: bool,
}

impl RefinedChannel {
    pub fn h_hat(&self) -> &DMatrix<C64> {
        &self.channel.h
    }
}

/// Indices kept by the power rule `|g|^2 >= ratio * max |g|^2`.
pub fn prune_mask(gains: &[C64], ratio: f64) -> Vec<bool> {
    let max = gains.iter().map(|g| g.norm_sqr()).fold(0.0, f64::max);
    gains
        .iter()
        .map(|g| max > 0.0 && g.norm_sqr() >= ratio * max)
        .collect()
}

/// Applies the pruning rule to estimates that carry a gain and delay and
/// rebuilds `H_hat = A diag(gains) F^T` over all ports and subcarriers.
pub fn prune_and_reconstruct(
    estimates: &[ScattererEstimate],
    grid: &PortGrid,
    config: &SystemConfig,
    prune_ratio: f64,
) -> Result<RefinedChannel> {
    let gains: Vec<C64> = estimates
        .iter()
        .map(|e| e.gain.ok_or_else(|| Error::Domain("scatterer estimate has no gain".into())))
        .collect::<Result<_>>()?;
    let keep = prune_mask(&gains, prune_ratio);
    let survivors: Vec<ScattererEstimate> = estimates
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(e, _)| *e)
        .collect();
    if survivors.is_empty() {
        return Ok(RefinedChannel {
            channel: ChannelMatrix::zeros(grid.num_ports(), config.num_subcarriers),
            survivors,
            all_pruned: true,
            rank_deficient: false,
        });
    }
    let lambda = config.wavelength();
    let freqs = subcarrier_frequencies(config);
    let mut a_cols = Vec::with_capacity(survivors.len());
    let mut f_cols = Vec::with_capacity(survivors.len());
    for s in &survivors {
        let delay = s.delay_s.ok_or_else(|| Error::Domain("scatterer estimate has no delay".into()))?;
        a_cols.push(steering_vector(&s.spherical, grid, lambda)?);
        f_cols.push(delay_response(delay, &freqs));
    }
    let gains = DVector::from_iterator(survivors.len(), survivors.iter().map(|s| s.gain.unwrap()));
    let channel = ChannelMatrix::from_factors(DMatrix::from_columns(&a_cols), gains, DMatrix::from_columns(&f_cols));
    Ok(RefinedChannel { channel, survivors, all_pruned: false, rank_deficient: false })
}

/// Full refinement: stack, project, search delays, prune, reconstruct.
pub fn refine_channel(
    measurement: &Measurement,
    estimates: &[ScattererEstimate],
    grid: &PortGrid,
    config: &SystemConfig,
    delays: &DelayGrid,
    prune_ratio: f64,
) -> Result<RefinedChannel> {
    if estimates.is_empty() {
        return Ok(RefinedChannel {
            channel: ChannelMatrix::zeros(grid.num_ports(), config.num_subcarriers),
            survivors: Vec::new(),
            all_pruned: true,
            rank_deficient: false,
        });
    }
    let stacked = stack_measurements(measurement)?;
    let projected = project_gains(&stacked, estimates, grid, config.wavelength())?;
    let freqs = pilot_frequencies(config, &stacked.pilot_set);
    let fitted: Vec<ScattererEstimate> = estimates
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let row = projected.x.row(i).transpose();
            let fit = estimate_delay_gain(&row, delays, &freqs);
            ScattererEstimate {
                delay_s: Some(fit.delay_s),
                gain: Some(fit.gain),
                ..*e
            }
        })
        .collect();
    let mut refined = prune_and_reconstruct(&fitted, grid, config, prune_ratio)?;
    refined.rank_deficient = projected.rank_deficient;
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::geometry::{simulate_measurement, synthesize_channel, Scene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth_estimates(scene: &Scene) -> Vec<ScattererEstimate> {
        scene
            .scatterers
            .iter()
            .map(|s| ScattererEstimate {
                delay_s: Some(s.delay_s),
                gain: Some(s.gain),
                ..ScattererEstimate::from_spherical(s.position)
            })
            .collect()
    }

    fn setup(seed: u64) -> (SystemConfig, PortGrid, Scene, ChannelMatrix, Measurement) {
        let cfg = SystemConfig { snr_db: None, ..SystemConfig::preset(Preset::Desk) };
        let grid = PortGrid::from_config(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = Scene::random(cfg.num_paths, 115e-9, &mut rng);
        scene.snap_delays(115e-9, 400);
        let ch = synthesize_channel(&scene.scatterers, &grid, &cfg).unwrap();
        let m = simulate_measurement(&ch, &grid, &cfg, seed).unwrap();
        (cfg, grid, scene, ch, m)
    }

    #[test]
    fn single_block_stack_is_identity() {
        let y = DMatrix::from_fn(3, 2, |i, j| C64::new(i as f64, j as f64));
        let m = Measurement { pilots: vec![y.clone()], visited: vec![vec![4, 1, 9]], pilot_set: vec![0, 5], noise_power: 0.0 };
        let s = stack_measurements(&m).unwrap();
        assert_eq!(s.y, y);
        assert_eq!(s.ports, vec![4, 1, 9]);
    }

    #[test]
    fn blocks_stack_in_subregion_order() {
        let (_, _, _, ch, m) = setup(2);
        let s = stack_measurements(&m).unwrap();
        assert_eq!(s.y.nrows(), 4 * 32);
        assert_eq!(s.y.rows(0, 32), m.pilots[0].rows(0, 32));
        for (i, &n) in s.ports.iter().enumerate() {
            for (j, &k) in s.pilot_set.iter().enumerate() {
                assert_eq!(s.y[(i, j)], ch.h[(n, k)]);
            }
        }
    }

    #[test]
    fn inconsistent_blocks_rejected() {
        let m = Measurement {
            pilots: vec![DMatrix::zeros(2, 3), DMatrix::zeros(2, 2)],
            visited: vec![vec![0, 1], vec![2, 3]],
            pilot_set: vec![0, 1, 2],
            noise_power: 0.0,
        };
        assert!(stack_measurements(&m).is_err());
    }

    #[test]
    fn truth_positions_recover_path_coefficients() {
        let (cfg, grid, scene, _, m) = setup(4);
        let stacked = stack_measurements(&m).unwrap();
        let est = truth_estimates(&scene);
        let proj = project_gains(&stacked, &est, &grid, cfg.wavelength()).unwrap();
        let freqs = pilot_frequencies(&cfg, &stacked.pilot_set);
        for (i, s) in scene.scatterers.iter().enumerate() {
            let expect = delay_response(s.delay_s, &freqs) * s.gain;
            assert!((proj.x.row(i).transpose() - expect).norm() < 1e-8);
        }
    }

    #[test]
    fn least_squares_beats_random_alternatives() {
        let (cfg, grid, scene, _, m) = setup(5);
        let stacked = stack_measurements(&m).unwrap();
        let mut est = truth_estimates(&scene);
        est[0].spherical.r += 0.3;
        est[0].cartesian = est[0].spherical.to_cartesian();
        let proj = project_gains(&stacked, &est, &grid, cfg.wavelength()).unwrap();
        let positions: Vec<_> = stacked.ports.iter().map(|&n| grid.port(n)).collect();
        let cols: Vec<_> = est.iter().map(|e| steering_vector_at(&e.spherical, &positions, cfg.wavelength()).unwrap()).collect();
        let psi = DMatrix::from_columns(&cols);
        let best = (&stacked.y - &psi * &proj.x).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let pert = DMatrix::from_fn(proj.x.nrows(), proj.x.ncols(), |_, _| {
                C64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1))
            });
            assert!(best <= (&stacked.y - &psi * (&proj.x + pert)).norm());
        }
    }

    #[test]
    fn on_grid_delay_recovered() {
        let cfg = SystemConfig::preset(Preset::Desk);
        let delays = DelayGrid::new(115e-9, 400).unwrap();
        assert!((delays.spacing() - 0.2875e-9).abs() < 1e-18);
        let freqs = pilot_frequencies(&cfg, &(0..32).map(|i| 2 * i).collect::<Vec<_>>());
        let x = delay_response(delays.sample(200), &freqs);
        let fit = estimate_delay_gain(&x, &delays, &freqs);
        assert_eq!(fit.index, 200);
        assert!((fit.gain - C64::new(1.0, 0.0)).norm() < 1e-10);
        let g = C64::new(0.3, -1.2);
        let fit = estimate_delay_gain(&(x * g), &delays, &freqs);
        assert_eq!(fit.index, 200);
        assert!((fit.gain - g).norm() < 1e-10);
    }

    #[test]
    fn prune_rule_uses_power() {
        let gains = [C64::new(1.0, 0.0), C64::new(0.0, 0.5), C64::new(0.01, 0.0)];
        assert_eq!(prune_mask(&gains, 0.1), vec![true, true, false]);
        assert_eq!(prune_mask(&[C64::new(1e-9, 0.0)], 0.1), vec![true]);
        let rot = C64::from_polar(7.0, 1.3);
        let scaled: Vec<_> = gains.iter().map(|g| g * rot).collect();
        assert_eq!(prune_mask(&scaled, 0.1), prune_mask(&gains, 0.1));
    }

    #[test]
    fn truth_fed_reconstruction_is_exact() {
        let (cfg, grid, scene, ch, _) = setup(6);
        let refined = prune_and_reconstruct(&truth_estimates(&scene), &grid, &cfg, 0.0).unwrap();
        assert!((refined.h_hat() - &ch.h).norm() / ch.h.norm() < 1e-10);
    }

    #[test]
    fn reconstruction_is_linear_in_gains() {
        let (cfg, grid, scene, _, _) = setup(7);
        let est = truth_estimates(&scene);
        let h1 = prune_and_reconstruct(&est, &grid, &cfg, 0.0).unwrap();
        let doubled: Vec<_> = est.iter().map(|e| ScattererEstimate { gain: e.gain.map(|g| g * 2.0), ..*e }).collect();
        let h2 = prune_and_reconstruct(&doubled, &grid, &cfg, 0.0).unwrap();
        assert!((h2.h_hat() - h1.h_hat() * C64::new(2.0, 0.0)).norm() < 1e-10 * h1.h_hat().norm());
    }

    #[test]
    fn perfect_positions_give_tiny_nmse() {
        let (cfg, grid, mut scene, _, _) = setup(8);
        for s in &mut scene.scatterers {
            s.gain = C64::from_polar(1.0, s.gain.arg());
        }
        let ch = synthesize_channel(&scene.scatterers, &grid, &cfg).unwrap();
        let m = simulate_measurement(&ch, &grid, &cfg, 8).unwrap();
        let est: Vec<_> = scene.scatterers.iter().map(|s| ScattererEstimate::from_spherical(s.position)).collect();
        let delays = DelayGrid::new(115e-9, 400).unwrap();
        let refined = refine_channel(&m, &est, &grid, &cfg, &delays, 0.1).unwrap();
        let nmse = (refined.h_hat() - &ch.h).norm_squared() / ch.h.norm_squared();
        assert_eq!(refined.survivors.len(), scene.scatterers.len());
        assert!(nmse < 1e-6, "nmse {nmse}");
    }

    #[test]
    fn empty_estimates_flag_zero_channel() {
        let (cfg, grid, _, _, m) = setup(9);
        let delays = DelayGrid::new(115e-9, 400).unwrap();
        let r = refine_channel(&m, &[], &grid, &cfg, &delays, 0.1).unwrap();
        assert!(r.all_pruned);
        assert_eq!(r.h_hat().norm(), 0.0);
    }
}
