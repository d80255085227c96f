//! Scoring: channel NMSE, matched angle/distance MAE and the OSPA distance.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::geometry::Spherical;
use crate::C64;

/// OSPA cutoff used for scoring, meters.
pub const DEFAULT_OSPA_CUTOFF_M: f64 = 3.0;
/// Angle MAE reported when no estimate matches any truth.
pub const UNMATCHED_ANGLE_DEG: f64 = 90.0;

/// `||H_hat - H||_F^2 / ||H||_F^2`.
pub fn nmse(h_hat: &DMatrix<C64>, h: &DMatrix<C64>) -> f64 {
    assert_eq!(h_hat.shape(), h.shape(), "nmse: shape mismatch");
    (h_hat - h).norm_squared() / h.norm_squared()
}

/// Optimal assignment for an `m x n` cost matrix with `m <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[i]` is the column matched to row `i`.
    pub columns: Vec<usize>,
    pub cost: f64,
}

/// Exact minimum-cost assignment of every row to a distinct column
/// (shortest augmenting paths with potentials, O(m^2 n)).
///
/// # Panics
/// If there are more rows than columns.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Assignment {
    let (m, n) = cost.shape();
    assert!(m <= n, "min_cost_assignment needs rows <= columns");
    if m == 0 {
        return Assignment { columns: Vec::new(), cost: 0.0 };
    }
    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=m {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0; m];
    for j in 1..=n {
        if owner[j] != 0 {
            columns[owner[j] - 1] = j - 1;
        }
    }
    let total = columns.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Assignment { columns, cost: total }
}

/// OSPA distance (order 1) with cutoff `psi` between point sets.
///
/// With `m <= n` (the sets are swapped otherwise):
/// `(1/n) * (min over matchings of sum min(psi, |x_i - y_pi(i)|) + psi (n - m))`.
/// Two empty sets are at distance 0.
pub fn ospa(truth: &[Vector3<f64>], estimates: &[Vector3<f64>], psi: f64) -> f64 {
    let (small, large) = if truth.len() <= estimates.len() {
        (truth, estimates)
    } else {
        (estimates, truth)
    };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let cost = DMatrix::from_fn(m, n, |i, j| (small[i] - large[j]).norm().min(psi));
    let matched = min_cost_assignment(&cost).cost;
    (matched + psi * (n - m) as f64) / n as f64
}

/// Angle and radial-distance MAE over optimally matched truth/estimate pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedMae {
    /// Mean of `(|d_theta| + |d_phi|) / 2`, degrees.
    pub angle_deg: f64,
    /// Mean `|d_r|`, meters.
    pub distance_m: f64,
    pub matched: usize,
}

fn wrapped_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Matches truth and estimates by the truncated-distance assignment used in
/// OSPA, keeps pairs closer than `psi`, and averages their angle and range
/// errors. Without any kept pair the result is `(90 deg, psi)`.
pub fn matched_mae(truth: &[Spherical], estimates: &[Spherical], psi: f64) -> MatchedMae {
    let sentinel = MatchedMae { angle_deg: UNMATCHED_ANGLE_DEG, distance_m: psi, matched: 0 };
    if truth.is_empty() || estimates.is_empty() {
        return sentinel;
    }
    let xt: Vec<_> = truth.iter().map(Spherical::to_cartesian).collect();
    let xe: Vec<_> = estimates.iter().map(Spherical::to_cartesian).collect();
    let transpose = truth.len() > estimates.len();
    let (rows, cols) = if transpose { (&xe, &xt) } else { (&xt, &xe) };
    let cost = DMatrix::from_fn(rows.len(), cols.len(), |i, j| (rows[i] - cols[j]).norm().min(psi));
    let assignment = min_cost_assignment(&cost);
    let mut angle = 0.0;
    let mut dist = 0.0;
    let mut matched = 0;
    for (i, &j) in assignment.columns.iter().enumerate() {
        if (rows[i] - cols[j]).norm() >= psi {
            continue;
        }
        let (t, e) = if transpose { (&truth[j], &estimates[i]) } else { (&truth[i], &estimates[j]) };
        angle += 0.5 * ((t.theta - e.theta).abs() + wrapped_diff(t.phi, e.phi)).to_degrees();
        dist += (t.r - e.r).abs();
        matched += 1;
    }
    if matched == 0 {
        return sentinel;
    }
    MatchedMae {
        angle_deg: angle / matched as f64,
        distance_m: dist / matched as f64,
        matched,
    }
}

/// One-sided paired sign test of `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: usize,
    /// Pairs that are not ties.
    pub informative: usize,
    /// `P(X >= wins)` for `X ~ Binomial(informative, 1/2)`.
    pub p_value: f64,
}

pub fn paired_sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired_sign_test: length mismatch");
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let informative = wins + losses;
    let p_value = if wins == 0 {
        1.0
    } else {
        let dist = Binomial::new(0.5, informative as u64).expect("valid binomial");
        dist.sf(wins as u64 - 1)
    };
    SignTest { wins, informative, p_value }
}

/// One method's scores on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: String,
    pub snr_db: f64,
    pub cr_ports: f64,
    pub cr_subcarriers: f64,
    pub subregion_div: String,
    pub trial: usize,
    pub nmse: f64,
    pub angle_mae_deg: f64,
    pub distance_mae_m: f64,
    pub ospa_m: f64,
    pub n_clu: usize,
    pub runtime_ms: f64,
    pub scene_hash: String,
}
