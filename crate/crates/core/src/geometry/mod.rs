//! Port grid, coordinates and the near-field steering model.
//!
//! Ports sit in the x-o-z plane, centered on the origin. Spherical positions
//! use `[r, theta, phi]` with `theta` the elevation measured from +z and
//! `phi` the azimuth measured from +x in the x-y plane.

mod channel;
mod measurement;

pub use channel::{delay_response, subcarrier_frequencies, synthesize_channel, ChannelMatrix, Scatterer, Scene};
pub use measurement::{pilot_subcarrier_set, simulate_measurement, Measurement};

use nalgebra::{DVector, Vector3};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;

/// Spherical coordinates `[r, theta, phi]` about some reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Spherical {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        Spherical { r, theta, phi }
    }

    /// Unit vector `[sin(theta)cos(phi), sin(theta)sin(phi), cos(theta)]`.
    pub fn unit(theta: f64, phi: f64) -> Vector3<f64> {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }

    pub fn to_cartesian(&self) -> Vector3<f64> {
        Self::unit(self.theta, self.phi) * self.r
    }

    /// Inverse of [`Spherical::to_cartesian`]; `phi` lands in `(-pi, pi]`.
    pub fn from_cartesian(s: &Vector3<f64>) -> Self {
        let r = s.norm();
        if r == 0.0 {
            return Spherical::new(0.0, 0.0, 0.0);
        }
        let theta = (s.z / r).clamp(-1.0, 1.0).acos();
        let phi = s.y.atan2(s.x);
        Spherical::new(r, theta, phi)
    }
}

/// Discrete port positions and their partition into rectangular subregions.
#[derive(Debug, Clone)]
pub struct PortGrid {
    coords: Vec<Vector3<f64>>,
    subregions: Vec<Vec<usize>>,
    centers: Vec<Vector3<f64>>,
    ports_per_axis: [usize; 2],
    division: [usize; 2],
    spacing: f64,
}

impl PortGrid {
    /// Builds a `ports_per_axis[0] x ports_per_axis[1]` grid with the given
    /// spacing, centered on the origin. Port `n = iz * nx + ix`. Subregion
    /// `q = qz * dx + qx` is the `qx`-th block along x and `qz`-th along z.
    pub fn new(ports_per_axis: [usize; 2], spacing: f64, division: [usize; 2]) -> Result<Self> {
        let [nx, nz] = ports_per_axis;
        let [dx, dz] = division;
        if !(spacing > 0.0) {
            return Err(Error::Config("port spacing must be positive".into()));
        }
        if nx == 0 || nz == 0 || dx == 0 || dz == 0 {
            return Err(Error::Config("grid and division counts must be at least 1".into()));
        }
        if nx % dx != 0 || nz % dz != 0 {
            return Err(Error::Config(format!(
                "division {dx}x{dz} does not evenly tile a {nx}x{nz} port grid"
            )));
        }
        let x0 = (nx as f64 - 1.0) / 2.0;
        let z0 = (nz as f64 - 1.0) / 2.0;
        let mut coords = Vec::with_capacity(nx * nz);
        for iz in 0..nz {
            for ix in 0..nx {
                coords.push(Vector3::new(
                    (ix as f64 - x0) * spacing,
                    0.0,
                    (iz as f64 - z0) * spacing,
                ));
            }
        }
        let (bx, bz) = (nx / dx, nz / dz);
        let mut subregions = Vec::with_capacity(dx * dz);
        let mut centers = Vec::with_capacity(dx * dz);
        for qz in 0..dz {
            for qx in 0..dx {
                let mut idx = Vec::with_capacity(bx * bz);
                for iz in qz * bz..(qz + 1) * bz {
                    for ix in qx * bx..(qx + 1) * bx {
                        idx.push(iz * nx + ix);
                    }
                }
                let center = idx.iter().map(|&n| coords[n]).sum::<Vector3<f64>>() / idx.len() as f64;
                subregions.push(idx);
                centers.push(center);
            }
        }
        Ok(PortGrid {
            coords,
            subregions,
            centers,
            ports_per_axis,
            division,
            spacing,
        })
    }

    pub fn from_config(config: &SystemConfig) -> Result<Self> {
        Self::new(config.ports_per_axis, config.port_spacing_m(), config.subregion_division)
    }

    pub fn num_ports(&self) -> usize {
        self.coords.len()
    }

    pub fn num_subregions(&self) -> usize {
        self.subregions.len()
    }

    pub fn coords(&self) -> &[Vector3<f64>] {
        &self.coords
    }

    pub fn port(&self, n: usize) -> Vector3<f64> {
        self.coords[n]
    }

    pub fn subregion_ports(&self, q: usize) -> Result<&[usize]> {
        self.subregions
            .get(q)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSubregion { index: q, count: self.subregions.len() })
    }

    pub fn subregions(&self) -> &[Vec<usize>] {
        &self.subregions
    }

    pub fn center(&self, q: usize) -> Result<Vector3<f64>> {
        self.centers
            .get(q)
            .copied()
            .ok_or(Error::UnknownSubregion { index: q, count: self.centers.len() })
    }

    pub fn centers(&self) -> &[Vector3<f64>] {
        &self.centers
    }

    pub fn ports_per_axis(&self) -> [usize; 2] {
        self.ports_per_axis
    }

    pub fn division(&self) -> [usize; 2] {
        self.division
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Positions of `ports` expressed relative to `reference`.
    pub fn relative_positions(&self, ports: &[usize], reference: &Vector3<f64>) -> Vec<Vector3<f64>> {
        ports.iter().map(|&n| self.coords[n] - reference).collect()
    }
}

/// Rayleigh distance `2 D^2 / lambda` for an aperture of side `aperture_m`.
pub fn rayleigh_distance(aperture_m: f64, wavelength: f64) -> f64 {
    2.0 * aperture_m * aperture_m / wavelength
}

/// Near-field steering entries for ports at `positions` (already relative to
/// the frame in which `p` is expressed).
///
/// Entry `n` is `exp(-j 2pi/lambda (|r_n - s| - r))`.
pub fn steering_vector_at(p: &Spherical, positions: &[Vector3<f64>], wavelength: f64) -> Result<DVector<C64>> {
    if !(p.r > 0.0) {
        return Err(Error::Domain(format!("radial distance must be positive, got {}", p.r)));
    }
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let s = p.to_cartesian();
    Ok(DVector::from_iterator(
        positions.len(),
        positions.iter().map(|rn| C64::from_polar(1.0, -k * ((rn - s).norm() - p.r))),
    ))
}

/// Full-aperture steering vector `a(p)` with `p` about the grid origin.
pub fn steering_vector(p: &Spherical, grid: &PortGrid, wavelength: f64) -> Result<DVector<C64>> {
    steering_vector_at(p, grid.coords(), wavelength)
}
