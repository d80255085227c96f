//! Scoring sensed scatterer sets: OSPA distance and matched angle/range MAE.

use ma_isac::metrics::{matched_mae, min_cost_assignment, ospa, DEFAULT_OSPA_CUTOFF_M};
use ma_isac::Spherical;
use nalgebra::DMatrix;

fn main() {
    let psi = DEFAULT_OSPA_CUTOFF_M;
    let truth = [Spherical::new(3.0, 1.2, 1.4), Spherical::new(5.0, 2.0, 1.9), Spherical::new(7.0, 1.6, 1.0)];
    let cases: [(&str, Vec<Spherical>); 4] = [
        ("exact", truth.to_vec()),
        ("small error", truth.iter().map(|s| Spherical::new(s.r + 0.1, s.theta + 0.01, s.phi)).collect()),
        ("one missed", truth[..2].to_vec()),
        ("nothing sensed", Vec::new()),
    ];
    let xyz = |v: &[Spherical]| v.iter().map(Spherical::to_cartesian).collect::<Vec<_>>();
    for (name, est) in &cases {
        let m = matched_mae(&truth, est, psi);
        println!(
            "{name:>15}: OSPA {:.3} m, angle MAE {:.2} deg, distance MAE {:.3} m, {} matched",
            ospa(&xyz(&truth), &xyz(est), psi),
            m.angle_deg,
            m.distance_m,
            m.matched
        );
    }

    let cost = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
    let a = min_cost_assignment(&cost);
    println!("assignment of {cost:.0}rows -> columns {:?}, cost {}", a.columns, a.cost);
}
