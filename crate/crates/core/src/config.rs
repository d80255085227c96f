//! System and estimator configuration, named presets and the TOML file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SPEED_OF_LIGHT;

/// How the pilot subcarrier set is chosen. The same set is shared by all
/// subregions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPattern {
    /// `K_c` subcarriers evenly spread over `0..K`.
    Uniform,
    /// `K_c` subcarriers drawn without replacement (seeded), sorted.
    Random,
}

/// Physical layer and acquisition parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    /// Overrides `c / carrier_freq_hz` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
    pub num_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    /// Port counts along x and z.
    pub ports_per_axis: [usize; 2],
    pub port_spacing_in_wavelengths: f64,
    /// Subregion counts along x and z; their product is Q.
    pub subregion_division: [usize; 2],
    /// Number of visited ports per subregion (N_T).
    pub slots_per_frame: usize,
    /// Number of pilot subcarriers (K_c).
    pub pilot_subcarriers: usize,
    pub pilot_pattern: PilotPattern,
    /// Number of scatterers in generated scenes (L).
    pub num_paths: usize,
    /// `None` means a noiseless measurement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub rng_seed: u64,
}

/// Dictionary, detection and refinement parameters shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub g_theta: usize,
    pub g_phi: usize,
    /// Radial samples of the polar dictionary (3D baseline only).
    pub g_r: usize,
    pub r_fix_m: f64,
    pub polar_r_min_m: f64,
    pub polar_r_max_m: f64,
    /// Number of greedy detections per subregion (L_pre).
    pub l_pre: usize,
    /// Newton refinement iterations per detection (R).
    pub newton_iters: usize,
    /// Clustering angle threshold in degrees.
    pub alpha_th_deg: f64,
    pub tau_max_s: f64,
    pub g_tau: usize,
    /// Paths whose power is below this fraction of the strongest are pruned.
    pub prune_ratio: f64,
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 16x16 ports, three paths, coarse grids: a full SNR sweep in minutes.
    Desk,
    /// 32x32 ports, six paths, 60x30 angular grid, N_T = 128.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// Everything needed to generate and process one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimConfig {
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(flatten)]
    pub estimator: EstimatorConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::preset(Preset::Desk)
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::preset(Preset::Desk)
    }
}

impl SystemConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = SystemConfig {
            carrier_freq_hz: 10e9,
            wavelength_m: Some(0.03),
            num_subcarriers: 64,
            subcarrier_spacing_hz: 200e3,
            ports_per_axis: [32, 32],
            port_spacing_in_wavelengths: 0.5,
            subregion_division: [2, 2],
            slots_per_frame: 128,
            pilot_subcarriers: 32,
            pilot_pattern: PilotPattern::Uniform,
            num_paths: 6,
            snr_db: Some(20.0),
            rng_seed: 0,
        };
        match preset {
            Preset::Paper => base,
            Preset::Desk => SystemConfig {
                ports_per_axis: [16, 16],
                slots_per_frame: 32,
                num_paths: 3,
                ..base
            },
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength_m.unwrap_or(SPEED_OF_LIGHT / self.carrier_freq_hz)
    }

    pub fn port_spacing_m(&self) -> f64 {
        self.port_spacing_in_wavelengths * self.wavelength()
    }

    pub fn num_ports(&self) -> usize {
        self.ports_per_axis[0] * self.ports_per_axis[1]
    }

    pub fn num_subregions(&self) -> usize {
        self.subregion_division[0] * self.subregion_division[1]
    }

    pub fn ports_per_subregion(&self) -> usize {
        self.num_ports() / self.num_subregions().max(1)
    }

    /// Total visited ports over all subregions (M).
    pub fn total_measurements(&self) -> usize {
        self.slots_per_frame * self.num_subregions()
    }

    /// Port compression ratio M/N.
    pub fn cr_ports(&self) -> f64 {
        self.total_measurements() as f64 / self.num_ports() as f64
    }

    /// Subcarrier compression ratio K_c/K.
    pub fn cr_subcarriers(&self) -> f64 {
        self.pilot_subcarriers as f64 / self.num_subcarriers as f64
    }

    /// Largest aperture side length times itself over the wavelength, doubled.
    pub fn rayleigh_distance(&self) -> f64 {
        let side = self.ports_per_axis[0].max(self.ports_per_axis[1]) as f64 * self.port_spacing_m();
        2.0 * side * side / self.wavelength()
    }

    /// Subregion label such as `2x2`.
    pub fn division_label(&self) -> String {
        format!("{}x{}", self.subregion_division[0], self.subregion_division[1])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.carrier_freq_hz > 0.0) || !(self.subcarrier_spacing_hz > 0.0) {
            return bad("carrier frequency and subcarrier spacing must be positive".into());
        }
        if self.wavelength_m.is_some_and(|w| !(w > 0.0)) {
            return bad("wavelength_m must be positive".into());
        }
        if !(self.port_spacing_in_wavelengths > 0.0) {
            return bad("port spacing must be positive".into());
        }
        for axis in 0..2 {
            let (ports, div) = (self.ports_per_axis[axis], self.subregion_division[axis]);
            if ports == 0 || div == 0 {
                return bad("port and subregion counts must be at least 1".into());
            }
            if ports % div != 0 {
                return bad(format!(
                    "{div} subregions do not evenly tile {ports} ports along axis {axis}"
                ));
            }
        }
        if self.slots_per_frame == 0 || self.slots_per_frame > self.ports_per_subregion() {
            return bad(format!(
                "slots_per_frame = {} must lie in 1..={} (ports per subregion)",
                self.slots_per_frame,
                self.ports_per_subregion()
            ));
        }
        if self.pilot_subcarriers == 0 || self.pilot_subcarriers > self.num_subcarriers {
            return bad(format!(
                "pilot_subcarriers = {} must lie in 1..={}",
                self.pilot_subcarriers, self.num_subcarriers
            ));
        }
        if self.num_paths == 0 {
            return bad("num_paths must be at least 1".into());
        }
        Ok(())
    }
}

impl EstimatorConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = EstimatorConfig {
            g_theta: 60,
            g_phi: 30,
            g_r: 10,
            r_fix_m: 6.0,
            polar_r_min_m: 2.0,
            polar_r_max_m: 12.28,
            l_pre: 10,
            newton_iters: 10,
            alpha_th_deg: 10.0,
            tau_max_s: 115e-9,
            g_tau: 400,
            prune_ratio: 0.1,
        };
        match preset {
            Preset::Paper => base,
            Preset::Desk => EstimatorConfig {
                g_theta: 30,
                g_phi: 15,
                ..base
            },
        }
    }

    pub fn alpha_th_rad(&self) -> f64 {
        self.alpha_th_deg.to_radians()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_theta == 0 || self.g_phi == 0 || self.g_r == 0 || self.g_tau == 0 {
            return Err(Error::Config("grid sizes must be at least 1".into()));
        }
        if !(self.r_fix_m > 0.0) {
            return Err(Error::Config("r_fix_m must be positive".into()));
        }
        if !(self.polar_r_min_m > 0.0 && self.polar_r_max_m > self.polar_r_min_m) {
            return Err(Error::Config("polar radial range must be positive and increasing".into()));
        }
        if self.l_pre == 0 {
            return Err(Error::Config("l_pre must be at least 1".into()));
        }
        if !(self.alpha_th_deg > 0.0) || !(self.tau_max_s > 0.0) {
            return Err(Error::Config("alpha_th_deg and tau_max_s must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.prune_ratio) {
            return Err(Error::Config("prune_ratio must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

impl SimConfig {
    pub fn preset(preset: Preset) -> Self {
        SimConfig {
            system: SystemConfig::preset(preset),
            estimator: EstimatorConfig::preset(preset),
        }
    }

    /// Parses a TOML document of top-level keys. Absent keys keep the desk
    /// preset value; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with_base(text, &SimConfig::default())
    }

    /// Like [`SimConfig::from_toml_str`] but absent keys fall back to `base`.
    pub fn from_toml_str_with_base(text: &str, base: &SimConfig) -> Result<Self> {
        let to_table = |c: &SimConfig| {
            toml::Table::try_from(c).map_err(|e| Error::Config(format!("cannot serialize base config: {e}")))
        };
        let mut complete = base.clone();
        complete.system.snr_db.get_or_insert(0.0);
        complete.system.wavelength_m.get_or_insert(1.0);
        let known = to_table(&complete)?;
        let mut merged = to_table(base)?;
        let overrides: toml::Table = toml::from_str(text)?;
        for (k, v) in overrides {
            if !known.contains_key(&k) {
                return Err(Error::Config(format!("unknown configuration key `{k}`")));
            }
            merged.insert(k, v);
        }
        let cfg: SimConfig = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &SimConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str_with_base(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.estimator.validate()
    }
}
