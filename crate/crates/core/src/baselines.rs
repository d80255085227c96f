//! The four estimation chains compared by the harness.
//!
//! | tag         | angles / positions                              | localization |
//! |-------------|-------------------------------------------------|--------------|
//! | `nomp_lsrc` | per-subregion NOMP (grid + Newton)              | ray clusters |
//! | `omp_lsrc`  | per-subregion MMV-OMP (grid only)               | ray clusters |
//! | `omp2d`     | full-region MMV-OMP on the angular grid, `r_fix`| none         |
//! | `omp3d`     | full-region MMV-OMP on the polar grid           | none         |
//!
//! Every chain ends in the same delay/gain search and pruning stage
//! ([`crate::ce_refine::refine_channel`]) so the reconstructed channels are
//! directly comparable.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ce_refine::{refine_channel, stack_measurements, DelayGrid, RefinedChannel};
use crate::config::SimConfig;
use crate::dictionary::{codebook_matrix, AngularGrid, Codebook, PolarGrid};
use crate::error::{Error, Result};
use crate::geometry::{Measurement, PortGrid};
use crate::lsrc::{run_lsrc, ScattererEstimate};
use crate::nomp::{greedy_mmv, run_nomp, AngleEstimateTable};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NompLsrc,
    OmpLsrc,
    Omp2d,
    Omp3d,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::NompLsrc, Method::OmpLsrc, Method::Omp2d, Method::Omp3d];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::NompLsrc => "nomp_lsrc",
            Method::OmpLsrc => "omp_lsrc",
            Method::Omp2d => "omp2d",
            Method::Omp3d => "omp3d",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.tag() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Parses a comma-separated method list such as `nomp_lsrc,omp2d`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

/// Output of one estimation chain.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub method: Method,
    /// Positions produced by the sensing stage, before delay search and
    /// pruning. Angle-only methods carry `r_fix` as radius.
    pub estimates: Vec<ScattererEstimate>,
    pub refined: RefinedChannel,
    /// Valid clusters (LSRC chains) or detected atoms (full-region chains).
    pub n_clu: usize,
}

impl BaselineResult {
    /// Scatterers that survived pruning; these are what the sensing metrics score.
    pub fn sensed(&self) -> &[ScattererEstimate] {
        &self.refined.survivors
    }
}

/// Support and coefficients of a greedy MMV solve.
#[derive(Debug, Clone)]
pub struct OmpSolution {
    /// Selected dictionary columns in detection order.
    pub support: Vec<usize>,
    pub coefficients: DMatrix<C64>,
    pub residual_norms: Vec<f64>,
}

/// Greedy MMV-OMP on a dictionary already restricted to the measured rows.
pub fn mmv_omp(y: &DMatrix<C64>, dictionary: &DMatrix<C64>, l_pre: usize) -> Result<OmpSolution> {
    if dictionary.nrows() != y.nrows() {
        return Err(Error::Measurement(format!(
            "dictionary has {} rows, measurement has {}",
            dictionary.nrows(),
            y.nrows()
        )));
    }
    if dictionary.ncols() < l_pre {
        return Err(Error::Config(format!(
            "dictionary has {} atoms but {l_pre} detections were requested",
            dictionary.ncols()
        )));
    }
    let state = greedy_mmv(y, dictionary, l_pre, |g, _| {
        (crate::geometry::Spherical::new(1.0, 0.0, 0.0), dictionary.column(g).into_owned())
    });
    Ok(OmpSolution {
        support: state.grid_indices,
        coefficients: state.coefficients,
        residual_norms: state.residual_norms,
    })
}

/// Port grid, sampling grids and parameters for running the chains on
/// measurements produced with `config`.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: SimConfig,
    pub grid: PortGrid,
    pub angular: AngularGrid,
    pub polar: PolarGrid,
    pub delays: DelayGrid,
}

impl Pipeline {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let e = &config.estimator;
        Ok(Pipeline {
            grid: PortGrid::from_config(&config.system)?,
            angular: AngularGrid::new(e.g_theta, e.g_phi, e.r_fix_m)?,
            polar: PolarGrid::new(e.g_theta, e.g_phi, e.g_r, e.polar_r_min_m, e.polar_r_max_m)?,
            delays: DelayGrid::new(e.tau_max_s, e.g_tau)?,
            config: config.clone(),
        })
    }

    pub fn wavelength(&self) -> f64 {
        self.config.system.wavelength()
    }

    pub fn run(&self, method: Method, measurement: &Measurement) -> Result<BaselineResult> {
        match method {
            Method::NompLsrc => self.run_nomp_lsrc(measurement),
            Method::OmpLsrc => self.run_omp_lsrc(measurement),
            Method::Omp2d => self.run_omp2d(measurement),
            Method::Omp3d => self.run_omp3d(measurement),
        }
    }

    /// Per-subregion angle table with `newton_iters` refinement steps.
    pub fn angle_table(&self, measurement: &Measurement, newton_iters: usize) -> Result<AngleEstimateTable> {
        let (table, _) = run_nomp(
            measurement,
            &self.grid,
            &self.angular,
            self.wavelength(),
            self.config.estimator.l_pre,
            newton_iters,
        )?;
        Ok(table)
    }

    fn lsrc_chain(&self, method: Method, measurement: &Measurement, newton_iters: usize) -> Result<BaselineResult> {
        let table = self.angle_table(measurement, newton_iters)?;
        let located = run_lsrc(&table, &self.grid, self.config.estimator.alpha_th_rad());
        let refined = self.refine(measurement, &located.estimates)?;
        Ok(BaselineResult {
            method,
            estimates: located.estimates,
            refined,
            n_clu: located.num_clusters,
        })
    }

    pub fn run_nomp_lsrc(&self, measurement: &Measurement) -> Result<BaselineResult> {
        self.lsrc_chain(Method::NompLsrc, measurement, self.config.estimator.newton_iters)
    }

    pub fn run_omp_lsrc(&self, measurement: &Measurement) -> Result<BaselineResult> {
        self.lsrc_chain(Method::OmpLsrc, measurement, 0)
    }

    fn full_region<C: Codebook>(&self, method: Method, measurement: &Measurement, codebook: &C) -> Result<BaselineResult> {
        let stacked = stack_measurements(measurement)?;
        let positions: Vec<_> = stacked.ports.iter().map(|&n| self.grid.port(n)).collect();
        let dictionary = codebook_matrix(codebook, &positions, self.wavelength())?;
        let solution = mmv_omp(&stacked.y, &dictionary, self.config.estimator.l_pre)?;
        let estimates: Vec<_> = solution
            .support
            .iter()
            .map(|&g| ScattererEstimate::from_spherical(codebook.position(g)))
            .collect();
        let refined = self.refine(measurement, &estimates)?;
        Ok(BaselineResult {
            method,
            n_clu: estimates.len(),
            estimates,
            refined,
        })
    }

    pub fn run_omp2d(&self, measurement: &Measurement) -> Result<BaselineResult> {
        self.full_region(Method::Omp2d, measurement, &self.angular)
    }

    pub fn run_omp3d(&self, measurement: &Measurement) -> Result<BaselineResult> {
        self.full_region(Method::Omp3d, measurement, &self.polar)
    }

    fn refine(&self, measurement: &Measurement, estimates: &[ScattererEstimate]) -> Result<RefinedChannel> {
        refine_channel(
            measurement,
            estimates,
            &self.grid,
            &self.config.system,
            &self.delays,
            self.config.estimator.prune_ratio,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::geometry::{simulate_measurement, steering_vector_at, synthesize_channel, Scatterer, Scene, Spherical};
    use crate::nomp::{nomp_subregion, subregion_positions};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert_eq!(parse_methods("omp2d, nomp_lsrc").unwrap(), vec![Method::Omp2d, Method::NompLsrc]);
        assert!(parse_methods("music").is_err());
    }

    #[test]
    fn single_on_grid_atom_found_first() {
        let lambda = 0.03;
        let grid = PortGrid::new([8, 8], lambda / 2.0, [1, 1]).unwrap();
        let angular = AngularGrid::new(10, 6, 3.0).unwrap();
        let dict = codebook_matrix(&angular, grid.coords(), lambda).unwrap();
        let g = angular.flat_index(4, 3);
        let f = DVector::from_fn(5, |k, _| C64::from_polar(1.0, 0.4 * k as f64));
        let y = dict.column(g) * f.transpose();
        let sol = mmv_omp(&y, &dict, 3).unwrap();
        assert_eq!(sol.support[0], g);
        assert!(sol.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(mmv_omp(&y, &dict.columns(0, 2).into_owned(), 3).is_err());
    }

    #[test]
    fn omp_equals_nomp_without_refinement() {
        let cfg = SimConfig::preset(Preset::Desk);
        let pipe = Pipeline::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scene = Scene::random(3, 115e-9, &mut rng);
        let ch = synthesize_channel(&scene.scatterers, &pipe.grid, &cfg.system).unwrap();
        let m = simulate_measurement(&ch, &pipe.grid, &cfg.system, 12).unwrap();
        for q in 0..pipe.grid.num_subregions() {
            let pos = subregion_positions(&m, &pipe.grid, q).unwrap();
            let dict = codebook_matrix(&pipe.angular, &pos, pipe.wavelength()).unwrap();
            let omp = mmv_omp(&m.pilots[q], &dict, 10).unwrap();
            let nomp = nomp_subregion(&m.pilots[q], &pos, &pipe.angular, pipe.wavelength(), 10, 0).unwrap();
            assert_eq!(omp.support, nomp.state.grid_indices);
            assert_eq!(omp.coefficients, nomp.state.coefficients);
        }
    }

    #[test]
    fn omp3d_recovers_polar_grid_point() {
        let cfg = SimConfig {
            system: crate::config::SystemConfig { snr_db: None, ..crate::config::SystemConfig::preset(Preset::Desk) },
            ..SimConfig::preset(Preset::Desk)
        };
        let pipe = Pipeline::new(&cfg).unwrap();
        let g = pipe.angular.len() * 2 + pipe.angular.flat_index(14, 6);
        let truth = pipe.polar.position(g);
        let s = Scatterer { position: truth, gain: C64::new(0.8, 0.3), delay_s: pipe.delays.sample(120) };
        let ch = synthesize_channel(&[s], &pipe.grid, &cfg.system).unwrap();
        let m = simulate_measurement(&ch, &pipe.grid, &cfg.system, 1).unwrap();
        let res = pipe.run_omp3d(&m).unwrap();
        assert_eq!(res.estimates.len(), cfg.estimator.l_pre);
        assert!((res.estimates[0].cartesian - truth.to_cartesian()).norm() < 1e-9);
        let sensed = res.sensed();
        assert_eq!(sensed.len(), 1);
        assert!(crate::metrics::nmse(res.refined.h_hat(), &ch.h) < 1e-10);
    }

    #[test]
    fn omp2d_reports_r_fix() {
        let cfg = SimConfig {
            system: crate::config::SystemConfig { snr_db: None, ..crate::config::SystemConfig::preset(Preset::Desk) },
            ..SimConfig::preset(Preset::Desk)
        };
        let pipe = Pipeline::new(&cfg).unwrap();
        let g = pipe.angular.flat_index(10, 9);
        let truth = pipe.angular.position(g);
        let s = Scatterer { position: Spherical::new(100.0, truth.theta, truth.phi), gain: C64::new(1.0, 0.0), delay_s: 20e-9 };
        let ch = synthesize_channel(&[s], &pipe.grid, &cfg.system).unwrap();
        let m = simulate_measurement(&ch, &pipe.grid, &cfg.system, 1).unwrap();
        let res = pipe.run_omp2d(&m).unwrap();
        assert_eq!(res.estimates.len(), cfg.estimator.l_pre);
        assert_eq!(res.estimates[0].spherical.theta, truth.theta);
        assert_eq!(res.estimates[0].spherical.phi, truth.phi);
        assert!(res.estimates.iter().all(|e| (e.spherical.r - cfg.estimator.r_fix_m).abs() < 1e-12));
        let _ = steering_vector_at;
    }
}
