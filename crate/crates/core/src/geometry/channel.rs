use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{steering_vector, PortGrid, Spherical, SPEED_OF_LIGHT};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::C64;

/// Scatterer radial range used by the scene generator, meters.
pub const SCENE_RANGE_M: (f64, f64) = (2.0, 12.28);
/// Elevation and azimuth range used by the scene generator and the angular
/// dictionaries, radians.
pub const ANGLE_RANGE: (f64, f64) = (PI / 6.0, 5.0 * PI / 6.0);

/// One propagation path induced by a point scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: Spherical,
    pub gain: C64,
    pub delay_s: f64,
}

impl Scatterer {
    pub fn cartesian(&self) -> Vector3<f64> {
        self.position.to_cartesian()
    }
}

/// Ground truth for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    /// User position the geometric delays were derived from, if any.
    pub user: Option<Vector3<f64>>,
}

impl Scene {
    pub fn new(scatterers: Vec<Scatterer>) -> Self {
        Scene { scatterers, user: None }
    }

    /// Draws `num_paths` scatterers and a user uniformly in range/elevation/
    /// azimuth, with unit-variance circular Gaussian gains. Each delay is the
    /// user-to-scatterer-to-array path length over `c`, clipped to
    /// `[0, tau_max_s]`.
    pub fn random<R: Rng + ?Sized>(num_paths: usize, tau_max_s: f64, rng: &mut R) -> Self {
        let draw_position = |rng: &mut R| {
            Spherical::new(
                rng.random_range(SCENE_RANGE_M.0..SCENE_RANGE_M.1),
                rng.random_range(ANGLE_RANGE.0..ANGLE_RANGE.1),
                rng.random_range(ANGLE_RANGE.0..ANGLE_RANGE.1),
            )
        };
        let user = draw_position(rng).to_cartesian();
        let scatterers = (0..num_paths)
            .map(|_| {
                let position = draw_position(rng);
                let s = position.to_cartesian();
                let delay = ((user - s).norm() + s.norm()) / SPEED_OF_LIGHT;
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Scatterer {
                    position,
                    gain: C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2,
                    delay_s: delay.clamp(0.0, tau_max_s),
                }
            })
            .collect();
        Scene { scatterers, user: Some(user) }
    }

    /// Moves every delay to the nearest sample of the grid `d * tau_max / g_tau`,
    /// `d = 1..=g_tau`.
    pub fn snap_delays(&mut self, tau_max_s: f64, g_tau: usize) {
        let step = tau_max_s / g_tau as f64;
        for s in &mut self.scatterers {
            let d = (s.delay_s / step).round().clamp(1.0, g_tau as f64);
            s.delay_s = d * step;
        }
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.scatterers.iter().map(Scatterer::cartesian).collect()
    }
}

/// Channel `H` (ports x subcarriers) with its factors `H = A diag(gains) F^T`.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    pub h: DMatrix<C64>,
    /// Steering matrix, N x L.
    pub steering: DMatrix<C64>,
    pub gains: DVector<C64>,
    /// Delay responses, K x L.
    pub delay_responses: DMatrix<C64>,
}

impl ChannelMatrix {
    pub fn num_ports(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.h.ncols()
    }

    pub fn zeros(num_ports: usize, num_subcarriers: usize) -> Self {
        ChannelMatrix {
            h: DMatrix::zeros(num_ports, num_subcarriers),
            steering: DMatrix::zeros(num_ports, 0),
            gains: DVector::zeros(0),
            delay_responses: DMatrix::zeros(num_subcarriers, 0),
        }
    }

    /// Assembles `A diag(gains) F^T` from its factors.
    pub fn from_factors(steering: DMatrix<C64>, gains: DVector<C64>, delay_responses: DMatrix<C64>) -> Self {
        let mut scaled = steering.clone();
        for (mut col, g) in scaled.column_iter_mut().zip(gains.iter()) {
            col *= *g;
        }
        let h = scaled * delay_responses.transpose();
        ChannelMatrix { h, steering, gains, delay_responses }
    }
}

/// Baseband subcarrier offsets `f_k = k * spacing`, `k = 0..K`. The carrier
/// phase `exp(-j 2pi f_c tau)` is a constant per path and lives in the gain.
pub fn subcarrier_frequencies(config: &SystemConfig) -> Vec<f64> {
    (0..config.num_subcarriers)
        .map(|k| k as f64 * config.subcarrier_spacing_hz)
        .collect()
}

/// `[exp(-j 2pi f tau)]` over the given frequencies.
pub fn delay_response(delay_s: f64, freqs: &[f64]) -> DVector<C64> {
    DVector::from_iterator(
        freqs.len(),
        freqs.iter().map(|f| C64::from_polar(1.0, -2.0 * PI * f * delay_s)),
    )
}

pub fn synthesize_channel(scatterers: &[Scatterer], grid: &PortGrid, config: &SystemConfig) -> Result<ChannelMatrix> {
    if scatterers.is_empty() {
        return Err(Error::Domain("a channel needs at least one path".into()));
    }
    let lambda = config.wavelength();
    let freqs = subcarrier_frequencies(config);
    let columns = scatterers
        .iter()
        .map(|s| steering_vector(&s.position, grid, lambda))
        .collect::<Result<Vec<_>>>()?;
    let steering = DMatrix::from_columns(&columns);
    let delays: Vec<_> = scatterers.iter().map(|s| delay_response(s.delay_s, &freqs)).collect();
    let delay_responses = DMatrix::from_columns(&delays);
    let gains = DVector::from_iterator(scatterers.len(), scatterers.iter().map(|s| s.gain));
    Ok(ChannelMatrix::from_factors(steering, gains, delay_responses))
}
