//! Localization via subregion ray clustering.
//!
//! Every subregion contributes one bearing per detected path. Bearings with
//! the same detection index are grouped into clusters whose members are all
//! pairwise closer than `alpha_th`; each cluster of two or more rays is then
//! intersected in the least-squares sense to give a scatterer position.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::geometry::{PortGrid, Spherical};
use crate::nomp::AngleEstimateTable;
use crate::C64;

/// Systems whose reciprocal condition number is below this are rejected.
pub const MIN_RCOND: f64 = 1e-8;
/// Localized radii outside this open interval are rejected.
pub const RADIUS_BOUNDS_M: (f64, f64) = (0.1, 100.0);

/// Unit bearing `[sin(theta)cos(phi), sin(theta)sin(phi), cos(theta)]`
/// tagged with where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionVector {
    pub v: Vector3<f64>,
    pub subregion: usize,
    pub path_index: usize,
}

impl DirectionVector {
    pub fn new(theta: f64, phi: f64, subregion: usize, path_index: usize) -> Self {
        DirectionVector {
            v: Spherical::unit(theta, phi),
            subregion,
            path_index,
        }
    }

    /// Angle between two bearings, radians.
    pub fn angle_to(&self, other: &DirectionVector) -> f64 {
        self.v.dot(&other.v).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<DirectionVector>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// A localized scatterer. Delay and gain are attached by the channel
/// refinement stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererEstimate {
    pub cartesian: Vector3<f64>,
    pub spherical: Spherical,
    pub delay_s: Option<f64>,
    pub gain: Option<C64>,
}

impl ScattererEstimate {
    pub fn from_cartesian(cartesian: Vector3<f64>) -> Self {
        ScattererEstimate {
            cartesian,
            spherical: Spherical::from_cartesian(&cartesian),
            delay_s: None,
            gain: None,
        }
    }

    pub fn from_spherical(spherical: Spherical) -> Self {
        ScattererEstimate {
            cartesian: spherical.to_cartesian(),
            spherical,
            delay_s: None,
            gain: None,
        }
    }
}

/// Why a cluster produced no position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    /// Fewer than two rays: the normal matrix is singular.
    TooFewRays,
    /// Near-parallel rays: reciprocal condition number below [`MIN_RCOND`].
    DegenerateGeometry { rcond: f64 },
    /// Solution radius outside [`RADIUS_BOUNDS_M`].
    RadiusOutOfRange { r: f64 },
}

/// Greedy complete-linkage clustering within each path index.
///
/// Bearings are visited in ascending subregion order: the first unvisited
/// one seeds a cluster, and every later one joins if it is within `alpha_th`
/// of all current members. Clusters of a single ray are dropped.
pub fn cluster_dvs(per_path: &[Vec<DirectionVector>], alpha_th: f64) -> Vec<Cluster> {
    let mut clusters = Vec::new();
    for set in per_path {
        let mut remaining: Vec<DirectionVector> = set.clone();
        remaining.sort_by_key(|d| d.subregion);
        while !remaining.is_empty() {
            let seed = remaining.remove(0);
            let mut members = vec![seed];
            let mut rest = Vec::with_capacity(remaining.len());
            for cand in remaining {
                if members.iter().all(|m| m.angle_to(&cand) < alpha_th) {
                    members.push(cand);
                } else {
                    rest.push(cand);
                }
            }
            remaining = rest;
            if members.len() >= 2 {
                clusters.push(Cluster { members });
            }
        }
    }
    clusters
}

/// Normal matrix `sum (I - v v^T)` and right-hand side `sum (I - v v^T) o`.
pub fn normal_equations(rays: &[(Vector3<f64>, Vector3<f64>)]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut gamma = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (v, o) in rays {
        let proj = Matrix3::identity() - v * v.transpose();
        gamma += proj;
        rhs += proj * o;
    }
    (gamma, rhs)
}

/// Sum of squared perpendicular distances from `s` to each ray `(v, o)`.
pub fn ray_energy(rays: &[(Vector3<f64>, Vector3<f64>)], s: &Vector3<f64>) -> f64 {
    rays.iter()
        .map(|(v, o)| ((Matrix3::identity() - v * v.transpose()) * (s - o)).norm_squared())
        .sum()
}

/// Least-squares intersection of rays `(direction, origin)`.
pub fn intersect_rays(rays: &[(Vector3<f64>, Vector3<f64>)]) -> Result<Vector3<f64>, Rejection> {
    if rays.len() < 2 {
        return Err(Rejection::TooFewRays);
    }
    let (gamma, rhs) = normal_equations(rays);
    let eig = SymmetricEigen::new(gamma);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !(rcond >= MIN_RCOND) {
        return Err(Rejection::DegenerateGeometry { rcond });
    }
    // gamma = U diag(lambda) U^T with all lambda well away from zero.
    let u = eig.eigenvectors;
    let coeffs = u.transpose() * rhs;
    let scaled = Vector3::from_fn(|i, _| coeffs[i] / eig.eigenvalues[i]);
    Ok(u * scaled)
}

/// Minimum-norm minimizer of [`ray_energy`], defined for any ray set.
///
/// For parallel rays the minimizers form a line; the point of that line
/// closest to the origin is returned. Eigenvalues below `1e-12` times the
/// largest are treated as zero.
pub fn min_norm_intersection(rays: &[(Vector3<f64>, Vector3<f64>)]) -> Vector3<f64> {
    let (gamma, rhs) = normal_equations(rays);
    let eig = SymmetricEigen::new(gamma);
    let cutoff = 1e-12 * eig.eigenvalues.max().max(0.0);
    let coeffs = eig.eigenvectors.transpose() * rhs;
    let scaled = Vector3::from_fn(|i, _| {
        let l = eig.eigenvalues[i];
        if l > cutoff {
            coeffs[i] / l
        } else {
            0.0
        }
    });
    eig.eigenvectors * scaled
}

/// Localizes one cluster; `centers[q]` is the center of subregion `q`.
pub fn localize_cluster(cluster: &Cluster, centers: &[Vector3<f64>]) -> Result<ScattererEstimate, Rejection> {
    let rays: Vec<_> = cluster.members.iter().map(|d| (d.v, centers[d.subregion])).collect();
    let s = intersect_rays(&rays)?;
    let est = ScattererEstimate::from_cartesian(s);
    let r = est.spherical.r;
    if !(r > RADIUS_BOUNDS_M.0 && r < RADIUS_BOUNDS_M.1) {
        return Err(Rejection::RadiusOutOfRange { r });
    }
    Ok(est)
}

/// Direction vectors grouped by detection index.
pub fn direction_sets(table: &AngleEstimateTable) -> Vec<Vec<DirectionVector>> {
    (0..table.num_paths())
        .map(|l| {
            (0..table.num_subregions())
                .map(|q| DirectionVector::new(table.theta[(l, q)], table.phi[(l, q)], q, l))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LsrcOutput {
    pub estimates: Vec<ScattererEstimate>,
    /// Number of clusters with at least two rays (before geometric checks).
    pub num_clusters: usize,
    pub rejected: Vec<(Cluster, Rejection)>,
}

/// Clustering followed by per-cluster localization.
pub fn run_lsrc(table: &AngleEstimateTable, grid: &PortGrid, alpha_th: f64) -> LsrcOutput {
    let clusters = cluster_dvs(&direction_sets(table), alpha_th);
    let num_clusters = clusters.len();
    let mut estimates = Vec::new();
    let mut rejected = Vec::new();
    for c in clusters {
        match localize_cluster(&c, grid.centers()) {
            Ok(e) => estimates.push(e),
            Err(why) => rejected.push((c, why)),
        }
    }
    LsrcOutput { estimates, num_clusters, rejected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dv(v: Vector3<f64>, q: usize) -> DirectionVector {
        DirectionVector { v: v.normalize(), subregion: q, path_index: 0 }
    }

    #[test]
    fn direction_vector_values() {
        let a = DirectionVector::new(PI / 2.0, PI / 2.0, 0, 0);
        assert!((a.v - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let b = DirectionVector::new(PI / 2.0, PI / 6.0, 0, 0);
        assert!((b.v - Vector3::new(3f64.sqrt() / 2.0, 0.5, 0.0)).norm() < 1e-15);
        for &(t, p) in &[(0.3, 4.0), (2.9, -1.0), (1.0, 1.0)] {
            assert!((DirectionVector::new(t, p, 0, 0).v.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_rays_form_one_cluster() {
        let v = Vector3::new(0.2, 0.9, 0.1);
        let set: Vec<_> = (0..4).map(|q| dv(v, q)).collect();
        let c = cluster_dvs(&[set], 10f64.to_radians());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size(), 4);
    }

    #[test]
    fn spread_rays_form_nothing() {
        let set = vec![
            dv(Vector3::x(), 0),
            dv(Vector3::y(), 1),
            dv(Vector3::z(), 2),
            dv(-Vector3::x(), 3),
        ];
        assert!(cluster_dvs(&[set], 10f64.to_radians()).is_empty());
    }

    #[test]
    fn clusters_never_mix_path_indices() {
        let v = Vector3::new(0.0, 1.0, 0.0);
        let a = vec![dv(v, 0), dv(Vector3::x(), 1)];
        let b = vec![dv(v, 0), dv(Vector3::z(), 1)];
        assert!(cluster_dvs(&[a, b], 10f64.to_radians()).is_empty());
    }

    #[test]
    fn one_ray_is_singular() {
        assert_eq!(
            intersect_rays(&[(Vector3::y(), Vector3::zeros())]),
            Err(Rejection::TooFewRays)
        );
        let (g, _) = normal_equations(&[(Vector3::new(0.6, 0.8, 0.0), Vector3::zeros())]);
        assert!(g.determinant().abs() < 1e-15);
    }

    #[test]
    fn exact_intersection() {
        let target = Vector3::new(0.5, 2.0, 0.0);
        let o1 = Vector3::zeros();
        let o2 = Vector3::new(1.0, 0.0, 0.0);
        let rays = [((target - o1).normalize(), o1), ((target - o2).normalize(), o2)];
        let s = intersect_rays(&rays).unwrap();
        assert!((s - target).norm() < 1e-9);
        assert!(ray_energy(&rays, &s) < 1e-18);
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let v = Vector3::new(0.0, 1.0, 0.0);
        let rays = [(v, Vector3::zeros()), (v, Vector3::new(0.1, 0.0, 0.0))];
        assert!(matches!(intersect_rays(&rays), Err(Rejection::DegenerateGeometry { .. })));
    }

    #[test]
    fn parallel_rays_min_norm_solution() {
        // Offset d perpendicular to the rays: every point of the midline is
        // d/2 from both rays, so the minimum energy is 2 (d/2)^2.
        let d = 0.4;
        let v = Vector3::new(0.0, 1.0, 0.0);
        let rays = [(v, Vector3::zeros()), (v, Vector3::new(d, 0.0, 0.0))];
        let s = min_norm_intersection(&rays);
        assert!((s - Vector3::new(d / 2.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((ray_energy(&rays, &s) - d * d / 2.0).abs() < 1e-14);
        let shifted = s + Vector3::new(0.0, 3.0, 0.0);
        assert!((ray_energy(&rays, &shifted) - d * d / 2.0).abs() < 1e-14);
    }

    #[test]
    fn min_norm_agrees_when_regular() {
        let target = Vector3::new(-0.7, 4.0, 1.2);
        let origins = [Vector3::new(-0.06, 0.0, -0.06), Vector3::new(0.06, 0.0, 0.06), Vector3::new(0.06, 0.0, -0.06)];
        let rays: Vec<_> = origins.iter().map(|o| ((target - o).normalize(), *o)).collect();
        assert!((min_norm_intersection(&rays) - intersect_rays(&rays).unwrap()).norm() < 1e-9);
    }

    #[test]
    fn projector_is_idempotent() {
        let v = Vector3::new(0.3, -0.4, 0.5).normalize();
        let p = Matrix3::identity() - v * v.transpose();
        assert!((p * p - p).norm() < 1e-12);
    }

    #[test]
    fn behind_or_far_solutions_rejected() {
        // Two nearly parallel rays meeting ~1000 m out.
        let target = Vector3::new(0.0, 1000.0, 0.0);
        let o1 = Vector3::new(-0.1, 0.0, 0.0);
        let o2 = Vector3::new(0.1, 0.0, 0.0);
        let c = Cluster {
            members: vec![dv(target - o1, 0), dv(target - o2, 1)],
        };
        match localize_cluster(&c, &[o1, o2]) {
            Err(Rejection::RadiusOutOfRange { r }) => assert!(r > 100.0),
            Err(Rejection::DegenerateGeometry { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
