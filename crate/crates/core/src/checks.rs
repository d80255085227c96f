//! Self-contained verification suites run by `ma-isac check`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Preset, SimConfig};
use crate::dictionary::AngularGrid;
use crate::error::{Error, Result};
use crate::geometry::{steering_vector_at, PortGrid, Spherical};
use crate::lsrc::{cluster_dvs, intersect_rays, localize_cluster, run_lsrc, Cluster, DirectionVector, Rejection};
use crate::metrics::{min_cost_assignment, ospa};
use crate::nomp::{nomp_subregion, AngleEstimateTable, AngleObjective};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Oracle,
    Ospa,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradients" => Ok(Suite::Gradients),
            "oracle" => Ok(Suite::Oracle),
            "ospa" => Ok(Suite::Ospa),
            other => Err(Error::Config(format!("unknown suite `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {} ({:.2} s)", self.name, self.detail, self.seconds)
    }
}

fn timed(name: &'static str, body: impl FnOnce() -> (bool, String)) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = body();
    CheckOutcome { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    match suite {
        Suite::Gradients => vec![gradient_check(100, 0)],
        Suite::Oracle => vec![nomp_oracle(100), localization_oracle(100)],
        Suite::Ospa => vec![ospa_suite(0)],
    }
}

fn desk_subregion() -> (PortGrid, SimConfig) {
    let cfg = SimConfig::preset(Preset::Desk);
    let grid = PortGrid::from_config(&cfg.system).expect("desk preset is valid");
    (grid, cfg)
}

fn random_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn relative(diff: f64, scale: f64) -> f64 {
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Analytic gradient and Hessian of the angle objective against central
/// differences (step `1e-6` rad) on random residuals and angles.
///
/// Errors are measured relative to the norm of the analytic gradient and
/// Hessian respectively.
pub fn gradient_check(draws: usize, seed: u64) -> CheckOutcome {
    timed("gradient/Hessian finite differences", || {
        let (grid, cfg) = desk_subregion();
        let lambda = cfg.system.wavelength();
        let ports = grid.subregion_ports(0).expect("subregion 0 exists");
        let pos = grid.relative_positions(&ports[..cfg.system.slots_per_frame], &grid.center(0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-6;
        let mut worst_grad: f64 = 0.0;
        let mut worst_hess: f64 = 0.0;
        for _ in 0..draws {
            let y = random_block(&mut rng, pos.len(), cfg.system.pilot_subcarriers);
            let obj = AngleObjective::new(&y, &pos, cfg.estimator.r_fix_m, lambda);
            let (t, p) = (rng.random_range(0.6..2.5), rng.random_range(0.6..2.5));
            let d = obj.derivatives(t, p);
            let fd_grad = Vector2::new(
                (obj.value(t + h, p) - obj.value(t - h, p)) / (2.0 * h),
                (obj.value(t, p + h) - obj.value(t, p - h)) / (2.0 * h),
            );
            let gt = |t, p| obj.derivatives(t, p).grad;
            let fd_hess = Matrix2::from_columns(&[
                (gt(t + h, p) - gt(t - h, p)) / (2.0 * h),
                (gt(t, p + h) - gt(t, p - h)) / (2.0 * h),
            ]);
            worst_grad = worst_grad.max(relative((fd_grad - d.grad).norm(), d.grad.norm()));
            worst_hess = worst_hess.max(relative((fd_hess - d.hess).norm(), d.hess.norm()));
        }
        let passed = worst_grad < 1e-5 && worst_hess < 1e-5;
        (passed, format!("{draws} draws, worst relative error grad {worst_grad:.2e}, Hessian {worst_hess:.2e} (limit 1e-5)"))
    })
}

/// Per-seed errors of one NOMP oracle trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleErrors {
    /// Mean over subregions of the larger of `|d_theta|`, `|d_phi|`, radians.
    pub nomp: f64,
    pub omp: f64,
    /// Worst subregion for the refined estimate.
    pub nomp_max: f64,
}

/// One noiseless single-path block per subregion of the desk preset. Each
/// path sits at `r_fix` from its subregion center with angles offset from
/// the nearest grid point by 10-50 % of a cell in each coordinate.
pub fn nomp_oracle_trial(seed: u64) -> OracleErrors {
    let (grid, cfg) = desk_subregion();
    let lambda = cfg.system.wavelength();
    let e = &cfg.estimator;
    let dict = AngularGrid::new(e.g_theta, e.g_phi, e.r_fix_m).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut nomp, mut omp, mut nomp_max) = (0.0, 0.0, 0.0f64);
    let q_count = grid.num_subregions();
    for q in 0..q_count {
        let offset = |rng: &mut ChaCha8Rng, step: f64| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.random_range(0.1..0.5) * step
        };
        let it = rng.random_range(1..e.g_theta - 1);
        let ip = rng.random_range(1..e.g_phi - 1);
        let theta = dict.theta(it) + offset(&mut rng, dict.theta_step());
        let phi = dict.phi(ip) + offset(&mut rng, dict.phi_step());
        let ports = grid.subregion_ports(q).expect("valid subregion");
        let mut visited: Vec<usize> = index::sample(&mut rng, ports.len(), cfg.system.slots_per_frame)
            .into_iter()
            .map(|i| ports[i])
            .collect();
        visited.sort_unstable();
        let pos = grid.relative_positions(&visited, &grid.center(q).unwrap());
        let a = steering_vector_at(&Spherical::new(e.r_fix_m, theta, phi), &pos, lambda).expect("positive radius");
        let tau = rng.random_range(0.0..e.tau_max_s);
        let gain = C64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU));
        let f = DVector::from_fn(cfg.system.pilot_subcarriers, |k, _| {
            let freq = (k * cfg.system.num_subcarriers / cfg.system.pilot_subcarriers) as f64 * cfg.system.subcarrier_spacing_hz;
            gain * C64::from_polar(1.0, -std::f64::consts::TAU * freq * tau)
        });
        let y = &a * f.transpose();
        let err = |iters| {
            let est = nomp_subregion(&y, &pos, &dict, lambda, 1, iters).expect("consistent block");
            let (t, p) = est.angles[0];
            (t - theta).abs().max((p - phi).abs())
        };
        let (en, eo) = (err(e.newton_iters), err(0));
        nomp += en / q_count as f64;
        omp += eo / q_count as f64;
        nomp_max = nomp_max.max(en);
    }
    OracleErrors { nomp, omp, nomp_max }
}

/// Refined angles within `1e-4` rad on every seed; grid-only error of
/// cell order and strictly larger than the refined error in at least 95 %
/// of seeds.
pub fn nomp_oracle(seeds: usize) -> CheckOutcome {
    timed("NOMP oracle", || {
        let (_, cfg) = desk_subregion();
        let dict = AngularGrid::new(cfg.estimator.g_theta, cfg.estimator.g_phi, cfg.estimator.r_fix_m).unwrap();
        let half_cell = 0.5 * dict.theta_step().max(dict.phi_step());
        let trials: Vec<_> = (0..seeds as u64).map(nomp_oracle_trial).collect();
        let worst = trials.iter().map(|t| t.nomp_max).fold(0.0, f64::max);
        let omp_worse = trials.iter().filter(|t| t.omp > t.nomp).count();
        let omp_mean = trials.iter().map(|t| t.omp).sum::<f64>() / seeds as f64;
        let ratio = omp_mean / half_cell;
        let needed = (seeds * 95).div_ceil(100);
        let passed = worst < 1e-4 && omp_worse >= needed && ratio > 0.1;
        (
            passed,
            format!(
                "worst refined error {worst:.2e} rad (limit 1e-4); grid-only mean error {omp_mean:.3e} rad = {ratio:.2} half-cells; grid-only worse in {omp_worse}/{seeds} seeds (need {needed})"
            ),
        )
    })
}

/// Exact bearings from the four desk-preset subregion centers to random
/// scatterers must localize to within `1e-6` m; single-ray and parallel-ray
/// clusters must be rejected.
pub fn localization_oracle(draws: usize) -> CheckOutcome {
    timed("localization oracle", || {
        let (grid, cfg) = desk_subregion();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        let mut located = 0;
        for _ in 0..draws {
            let truth = Spherical::new(
                rng.random_range(2.0..12.28),
                rng.random_range(0.6..2.5),
                rng.random_range(0.6..2.5),
            )
            .to_cartesian();
            let column: Vec<(f64, f64)> = grid
                .centers()
                .iter()
                .map(|o| {
                    let b = Spherical::from_cartesian(&(truth - o));
                    (b.theta, b.phi)
                })
                .collect();
            let table = AngleEstimateTable::from_columns(&column.iter().map(|&c| vec![c]).collect::<Vec<_>>());
            let out = run_lsrc(&table, &grid, cfg.estimator.alpha_th_rad());
            if let [est] = out.estimates.as_slice() {
                located += 1;
                worst = worst.max((est.cartesian - truth).norm());
            } else {
                worst = f64::INFINITY;
            }
        }
        let single = DirectionVector::new(1.2, 1.4, 0, 0);
        let lone = Cluster { members: vec![single] };
        let single_rejected = localize_cluster(&lone, grid.centers()) == Err(Rejection::TooFewRays)
            && cluster_dvs(&[vec![single]], cfg.estimator.alpha_th_rad()).is_empty();
        let v = Vector3::new(0.3, 0.9, -0.2).normalize();
        let parallel = intersect_rays(&[(v, grid.centers()[0]), (v, grid.centers()[3])]);
        let parallel_rejected = matches!(parallel, Err(Rejection::DegenerateGeometry { .. }));
        let passed = worst < 1e-6 && located == draws && single_rejected && parallel_rejected;
        (
            passed,
            format!(
                "{located}/{draws} localized, worst error {worst:.2e} m (limit 1e-6); single-ray rejected: {single_rejected}; parallel rays rejected: {parallel_rejected}"
            ),
        )
    })
}

/// OSPA by enumerating every injective matching of the smaller set.
pub fn brute_force_ospa(x: &[Vector3<f64>], y: &[Vector3<f64>], psi: f64) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let n = large.len();
    if n == 0 {
        return 0.0;
    }
    fn best(small: &[Vector3<f64>], large: &[Vector3<f64>], used: &mut Vec<bool>, psi: f64) -> f64 {
        let Some((first, rest)) = small.split_first() else {
            return 0.0;
        };
        let mut out = f64::INFINITY;
        for j in 0..large.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            let c = (first - large[j]).norm().min(psi) + best(rest, large, used, psi);
            used[j] = false;
            out = out.min(c);
        }
        out
    }
    let matched = best(small, large, &mut vec![false; n], psi);
    (matched + psi * (n - small.len()) as f64) / n as f64
}

/// Minimum assignment cost by enumeration.
pub fn brute_force_assignment_cost(cost: &DMatrix<f64>) -> f64 {
    fn go(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.nrows() {
            return 0.0;
        }
        let mut out = f64::INFINITY;
        for j in 0..cost.ncols() {
            if !used[j] {
                used[j] = true;
                out = out.min(cost[(row, j)] + go(cost, row + 1, used));
                used[j] = false;
            }
        }
        out
    }
    go(cost, 0, &mut vec![false; cost.ncols()])
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::new(rng.random_range(-4.0..4.0), rng.random_range(0.0..8.0), rng.random_range(-4.0..4.0)))
        .collect()
}

/// Identity, empty-set, symmetry and brute-force agreement of OSPA and the
/// underlying assignment solver.
pub fn ospa_suite(seed: u64) -> CheckOutcome {
    timed("OSPA suite", || {
        let psi = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failures = Vec::new();

        let identity = (1..=8).all(|n| {
            let x = random_set(&mut rng, n);
            ospa(&x, &x, psi) == 0.0
        });
        if !identity {
            failures.push("identity");
        }
        let empty = (1..=8).all(|n| {
            let x = random_set(&mut rng, n);
            ospa(&[], &x, psi) == psi && ospa(&x, &[], psi) == psi
        }) && ospa(&[], &[], psi) == 0.0;
        if !empty {
            failures.push("empty");
        }

        let mut worst_asym: f64 = 0.0;
        for _ in 0..1000 {
            let (m, n) = (rng.random_range(0..9), rng.random_range(0..9));
            let (x, y) = (random_set(&mut rng, m), random_set(&mut rng, n));
            worst_asym = worst_asym.max((ospa(&x, &y, psi) - ospa(&y, &x, psi)).abs());
        }
        if worst_asym > 1e-12 {
            failures.push("symmetry");
        }

        let mut worst_brute: f64 = 0.0;
        let mut cases = 0;
        for m in 0..=7 {
            for n in 0..=7 {
                for _ in 0..3 {
                    let (x, y) = (random_set(&mut rng, m), random_set(&mut rng, n));
                    worst_brute = worst_brute.max((ospa(&x, &y, psi) - brute_force_ospa(&x, &y, psi)).abs());
                    if m <= n {
                        let cost = DMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..10.0));
                        let fast = min_cost_assignment(&cost).cost;
                        worst_brute = worst_brute.max((fast - brute_force_assignment_cost(&cost)).abs());
                    }
                    cases += 1;
                }
            }
        }
        if worst_brute > 1e-9 {
            failures.push("brute force");
        }
        let detail = format!(
            "identity {identity}, empty-vs-n {empty}, max asymmetry over 1000 pairs {worst_asym:.1e}, max deviation from brute force over {cases} cases (m, n <= 7) {worst_brute:.1e}"
        );
        (failures.is_empty(), detail)
    })
}
