//! Per-subregion angle estimation: MMV-OMP detection on an angular grid
//! followed by Newton refinement of elevation and azimuth in the continuous
//! domain.
//!
//! Each subregion is processed in its own frame: port positions are taken
//! relative to the subregion center, and every candidate position sits at
//! radius `r_fix` from that center. The estimated angles are therefore the
//! bearings seen from the subregion center, which is what the ray
//! localization in [`crate::lsrc`] consumes.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};

use crate::dictionary::{codebook_matrix, AngularGrid, Codebook};
use crate::error::{Error, Result};
use crate::geometry::{steering_vector_at, Measurement, PortGrid, Spherical};
use crate::linalg::least_squares;
use crate::C64;

/// Refined angles are kept inside the dictionary's angular domain.
pub const ANGLE_MIN: f64 = PI / 6.0;
pub const ANGLE_MAX: f64 = 5.0 * PI / 6.0;

/// Residual energy below this fraction of the measurement energy is treated
/// as exactly zero.
pub const RESIDUAL_FLOOR: f64 = 1e-24;

const MAX_HALVINGS: usize = 10;

/// `L_pre x Q` elevation and azimuth estimates; column `q` is subregion `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleEstimateTable {
    pub theta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

impl AngleEstimateTable {
    pub fn from_columns(columns: &[Vec<(f64, f64)>]) -> Self {
        let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
        let mut theta = DMatrix::zeros(rows, columns.len());
        let mut phi = DMatrix::zeros(rows, columns.len());
        for (q, col) in columns.iter().enumerate() {
            for (l, &(t, p)) in col.iter().enumerate() {
                theta[(l, q)] = t;
                phi[(l, q)] = p;
            }
        }
        AngleEstimateTable { theta, phi }
    }

    pub fn num_paths(&self) -> usize {
        self.theta.nrows()
    }

    pub fn num_subregions(&self) -> usize {
        self.theta.ncols()
    }
}

/// State of the greedy loop after the last detection.
#[derive(Debug, Clone)]
pub struct NompWorkState {
    pub residual: DMatrix<C64>,
    /// Selected atoms restricted to the visited ports (Gamma), one column per
    /// detection.
    pub measured_atoms: DMatrix<C64>,
    /// Least-squares coefficients of `measured_atoms` for the measurement.
    pub coefficients: DMatrix<C64>,
    pub positions: Vec<Spherical>,
    /// Grid index picked by the coarse search of each detection.
    pub grid_indices: Vec<usize>,
    /// `||Y_res||_F` after each detection.
    pub residual_norms: Vec<f64>,
    pub rank_deficient: bool,
}

/// Value, gradient and Hessian of the matched-filter energy with respect to
/// `(theta, phi)`.
#[derive(Debug, Clone, Copy)]
pub struct Derivatives {
    pub value: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

/// `J(theta, phi) = ||Y_res^H a(p)||^2` for a steering vector `a(p)` over a
/// fixed set of ports and a fixed radius.
pub struct AngleObjective<'a> {
    /// `Y_res^H`, `K_c x N_T`.
    w: DMatrix<C64>,
    positions: &'a [Vector3<f64>],
    r_fix: f64,
    k: f64,
}

impl<'a> AngleObjective<'a> {
    pub fn new(residual: &DMatrix<C64>, positions: &'a [Vector3<f64>], r_fix: f64, wavelength: f64) -> Self {
        assert_eq!(residual.nrows(), positions.len(), "one residual row per port");
        AngleObjective {
            w: residual.adjoint(),
            positions,
            r_fix,
            k: 2.0 * PI / wavelength,
        }
    }

    pub fn position(&self, theta: f64, phi: f64) -> Spherical {
        Spherical::new(self.r_fix, theta, phi)
    }

    /// The projected vector `a_q(p) = Y_res^H a(p)`.
    pub fn projection(&self, theta: f64, phi: f64) -> DVector<C64> {
        let a = steering_vector_at(&self.position(theta, phi), self.positions, 2.0 * PI / self.k)
            .expect("r_fix is positive");
        &self.w * a
    }

    pub fn value(&self, theta: f64, phi: f64) -> f64 {
        self.projection(theta, phi).norm_squared()
    }

    /// Analytic derivatives through the phase
    /// `psi_n = -k (|d_n - s(theta, phi)| - r_fix)`.
    pub fn derivatives(&self, theta: f64, phi: f64) -> Derivatives {
        let r = self.r_fix;
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let s = Vector3::new(st * cp, st * sp, ct) * r;
        let s_t = Vector3::new(ct * cp, ct * sp, -st) * r;
        let s_p = Vector3::new(-st * sp, st * cp, 0.0) * r;
        let s_tt = -s;
        let s_tp = Vector3::new(-ct * sp, ct * cp, 0.0) * r;
        let s_pp = Vector3::new(-st * cp, -st * sp, 0.0) * r;

        let j = C64::new(0.0, 1.0);
        // Columns: a, da/dtheta, da/dphi, d2a/dtheta2, d2a/dtheta dphi, d2a/dphi2.
        let mut basis = DMatrix::<C64>::zeros(self.positions.len(), 6);
        for (n, d) in self.positions.iter().enumerate() {
            let e = d - s;
            let dist = e.norm();
            let a = C64::from_polar(1.0, -self.k * (dist - r));
            let d_t = -e.dot(&s_t) / dist;
            let d_p = -e.dot(&s_p) / dist;
            let d_tt = (s_t.dot(&s_t) - e.dot(&s_tt)) / dist - d_t * d_t / dist;
            let d_tp = (s_t.dot(&s_p) - e.dot(&s_tp)) / dist - d_t * d_p / dist;
            let d_pp = (s_p.dot(&s_p) - e.dot(&s_pp)) / dist - d_p * d_p / dist;
            let (psi_t, psi_p) = (-self.k * d_t, -self.k * d_p);
            let (psi_tt, psi_tp, psi_pp) = (-self.k * d_tt, -self.k * d_tp, -self.k * d_pp);
            basis[(n, 0)] = a;
            basis[(n, 1)] = j * psi_t * a;
            basis[(n, 2)] = j * psi_p * a;
            basis[(n, 3)] = (j * psi_tt - psi_t * psi_t) * a;
            basis[(n, 4)] = (j * psi_tp - psi_t * psi_p) * a;
            basis[(n, 5)] = (j * psi_pp - psi_p * psi_p) * a;
        }
        let proj = &self.w * basis;
        let aq = proj.column(0);
        let first = [proj.column(1), proj.column(2)];
        let second = [[proj.column(3), proj.column(4)], [proj.column(4), proj.column(5)]];
        let value = aq.norm_squared();
        let grad = Vector2::new(2.0 * aq.dotc(&first[0]).re, 2.0 * aq.dotc(&first[1]).re);
        let mut hess = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                hess[(a, b)] = 2.0 * (first[a].dotc(&first[b]) + aq.dotc(&second[a][b])).re;
            }
        }
        Derivatives { value, grad, hess }
    }
}

fn clamp_angles(p: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(p.x.clamp(ANGLE_MIN, ANGLE_MAX), p.y.clamp(ANGLE_MIN, ANGLE_MAX))
}

/// Safeguarded Newton ascent on `J` from `(theta0, phi0)`.
///
/// Each iteration takes the Newton step when the Hessian is negative definite
/// and the step raises `J`; otherwise it backtracks along the gradient
/// starting from a step of `fallback_step` radians (at most ten halvings).
/// When neither raises `J` the point is kept. Angles stay in
/// `[ANGLE_MIN, ANGLE_MAX]`.
pub fn newton_refine(objective: &AngleObjective<'_>, theta0: f64, phi0: f64, iterations: usize, fallback_step: f64) -> (f64, f64) {
    let mut p = clamp_angles(Vector2::new(theta0, phi0));
    let mut current = objective.value(p.x, p.y);
    for _ in 0..iterations {
        let d = objective.derivatives(p.x, p.y);
        let h = d.hess;
        let negative_definite = h[(0, 0)] < 0.0 && h.determinant() > 0.0;
        if negative_definite {
            if let Some(inv) = h.try_inverse() {
                let cand = clamp_angles(p - inv * d.grad);
                let val = objective.value(cand.x, cand.y);
                if val > current {
                    p = cand;
                    current = val;
                    continue;
                }
            }
        }
        let gnorm = d.grad.norm();
        if !(gnorm > 0.0) {
            break;
        }
        let dir = d.grad / gnorm;
        let mut step = fallback_step;
        let mut improved = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = clamp_angles(p + dir * step);
            let val = objective.value(cand.x, cand.y);
            if val > current {
                p = cand;
                current = val;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (p.x, p.y)
}

/// Greedy MMV detection loop shared by NOMP and plain OMP.
///
/// `dictionary` holds the candidate atoms restricted to the measured rows.
/// For each detection the coarse index is the arg-max of
/// `||Y_res^H d_g||^2` (lowest index on ties); `refine` maps it to the final
/// position and its measured atom. All selected atoms are then re-fitted
/// jointly by least squares and the residual updated.
pub fn greedy_mmv<F>(y: &DMatrix<C64>, dictionary: &DMatrix<C64>, detections: usize, mut refine: F) -> NompWorkState
where
    F: FnMut(usize, &DMatrix<C64>) -> (Spherical, DVector<C64>),
{
    assert_eq!(y.nrows(), dictionary.nrows(), "dictionary rows must match measurement rows");
    let energy = y.norm_squared();
    let mut residual = y.clone();
    let mut atoms: Vec<DVector<C64>> = Vec::with_capacity(detections);
    let mut positions = Vec::with_capacity(detections);
    let mut grid_indices = Vec::with_capacity(detections);
    let mut residual_norms = Vec::with_capacity(detections);
    let mut coefficients = DMatrix::zeros(0, y.ncols());
    let mut rank_deficient = false;
    let mut gamma = DMatrix::zeros(y.nrows(), 0);
    for _ in 0..detections {
        let g = coarse_argmax(&residual, dictionary);
        let (p, atom) = refine(g, &residual);
        grid_indices.push(g);
        positions.push(p);
        atoms.push(atom);
        gamma = DMatrix::from_columns(&atoms);
        let ls = least_squares(&gamma, y);
        rank_deficient |= ls.rank_deficient;
        residual = y - &gamma * &ls.x;
        coefficients = ls.x;
        if residual.norm_squared() <= RESIDUAL_FLOOR * energy {
            residual.fill(C64::new(0.0, 0.0));
        }
        residual_norms.push(residual.norm());
    }
    NompWorkState {
        residual,
        measured_atoms: gamma,
        coefficients,
        positions,
        grid_indices,
        residual_norms,
        rank_deficient,
    }
}

/// Arg-max over columns of `||Y_res^H d_g||^2`, lowest index on ties.
pub fn coarse_argmax(residual: &DMatrix<C64>, dictionary: &DMatrix<C64>) -> usize {
    let corr = residual.adjoint() * dictionary;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (g, col) in corr.column_iter().enumerate() {
        let v = col.norm_squared();
        if v > best_val {
            best = g;
            best_val = v;
        }
    }
    best
}

/// Result of [`nomp_subregion`].
#[derive(Debug, Clone)]
pub struct SubregionEstimate {
    /// `(theta, phi)` per detection, in detection order.
    pub angles: Vec<(f64, f64)>,
    pub state: NompWorkState,
}

/// Angle estimation for one subregion from its pilot block `y` (rows are the
/// ports at `positions`, relative to the subregion center).
pub fn nomp_subregion(
    y: &DMatrix<C64>,
    positions: &[Vector3<f64>],
    grid: &AngularGrid,
    wavelength: f64,
    l_pre: usize,
    newton_iters: usize,
) -> Result<SubregionEstimate> {
    if y.nrows() != positions.len() {
        return Err(Error::Measurement(format!(
            "pilot block has {} rows but {} ports were visited",
            y.nrows(),
            positions.len()
        )));
    }
    let dictionary = codebook_matrix(grid, positions, wavelength)?;
    let fallback = grid.theta_step().max(grid.phi_step());
    let state = greedy_mmv(y, &dictionary, l_pre, |g, residual| {
        let p0 = grid.position(g);
        if newton_iters == 0 {
            return (p0, dictionary.column(g).into_owned());
        }
        let objective = AngleObjective::new(residual, positions, grid.r_fix(), wavelength);
        let (theta, phi) = newton_refine(&objective, p0.theta, p0.phi, newton_iters, fallback);
        let p = Spherical::new(grid.r_fix(), theta, phi);
        let atom = steering_vector_at(&p, positions, wavelength).expect("r_fix is positive");
        (p, atom)
    });
    let angles = state.positions.iter().map(|p| (p.theta, p.phi)).collect();
    Ok(SubregionEstimate { angles, state })
}

/// Visited port positions of subregion `q`, relative to its center.
pub fn subregion_positions(measurement: &Measurement, grid: &PortGrid, q: usize) -> Result<Vec<Vector3<f64>>> {
    let rows = measurement
        .visited
        .get(q)
        .ok_or(Error::UnknownSubregion { index: q, count: measurement.visited.len() })?;
    Ok(grid.relative_positions(rows, &grid.center(q)?))
}

/// Runs [`nomp_subregion`] on every subregion and collects the angle table.
pub fn run_nomp(
    measurement: &Measurement,
    grid: &PortGrid,
    dictionary: &AngularGrid,
    wavelength: f64,
    l_pre: usize,
    newton_iters: usize,
) -> Result<(AngleEstimateTable, Vec<NompWorkState>)> {
    if measurement.num_subregions() != grid.num_subregions() {
        return Err(Error::Measurement(format!(
            "measurement has {} subregion blocks, grid has {}",
            measurement.num_subregions(),
            grid.num_subregions()
        )));
    }
    let mut columns = Vec::with_capacity(grid.num_subregions());
    let mut states = Vec::with_capacity(grid.num_subregions());
    for (q, y) in measurement.pilots.iter().enumerate() {
        let positions = subregion_positions(measurement, grid, q)?;
        let est = nomp_subregion(y, &positions, dictionary, wavelength, l_pre, newton_iters)?;
        columns.push(est.angles);
        states.push(est.state);
    }
    Ok((AngleEstimateTable::from_columns(&columns), states))
}
