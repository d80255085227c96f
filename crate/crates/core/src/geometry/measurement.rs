use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{ChannelMatrix, PortGrid};
use crate::config::{PilotPattern, SystemConfig};
use crate::error::{Error, Result};
use crate::C64;

/// Pilot observations of every subregion.
///
/// Row `t` of `pilots[q]` is port `visited[q][t]`; column `j` is subcarrier
/// `pilot_set[j]`. Selection is kept as index lists; `pilots[q]` equals
/// `[I_N]_{visited[q],:} H [I_K]_{:,pilot_set}` plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub pilots: Vec<DMatrix<C64>>,
    pub visited: Vec<Vec<usize>>,
    pub pilot_set: Vec<usize>,
    pub noise_power: f64,
}

impl Measurement {
    pub fn num_subregions(&self) -> usize {
        self.pilots.len()
    }

    pub fn num_pilots(&self) -> usize {
        self.pilot_set.len()
    }

    /// Builds a measurement directly from a channel and explicit selections.
    /// Noise is added only when `noise` is given.
    pub fn select(
        h: &DMatrix<C64>,
        visited: Vec<Vec<usize>>,
        pilot_set: Vec<usize>,
        noise: Option<(f64, &mut dyn rand::RngCore)>,
    ) -> Self {
        let mut pilots: Vec<DMatrix<C64>> = visited
            .iter()
            .map(|rows| DMatrix::from_fn(rows.len(), pilot_set.len(), |t, j| h[(rows[t], pilot_set[j])]))
            .collect();
        let mut noise_power = 0.0;
        if let Some((sigma2, rng)) = noise {
            noise_power = sigma2;
            let scale = (sigma2 / 2.0).sqrt();
            for y in &mut pilots {
                for v in y.iter_mut() {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    *v += C64::new(re, im) * scale;
                }
            }
        }
        Measurement { pilots, visited, pilot_set, noise_power }
    }

    /// Mean squared magnitude over all entries of all blocks.
    pub fn mean_power(&self) -> f64 {
        let (sum, count) = self
            .pilots
            .iter()
            .fold((0.0, 0usize), |(s, c), y| (s + y.norm_squared(), c + y.len()));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Short hex digest of the selections and pilot values. Records sharing
    /// a fingerprint were computed from the same observations.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (rows, y) in self.visited.iter().zip(&self.pilots) {
            for &n in rows {
                hasher.update((n as u64).to_le_bytes());
            }
            for v in y.iter() {
                hasher.update(v.re.to_bits().to_le_bytes());
                hasher.update(v.im.to_bits().to_le_bytes());
            }
        }
        for &j in &self.pilot_set {
            hasher.update((j as u64).to_le_bytes());
        }
        hasher.update(self.noise_power.to_bits().to_le_bytes());
        hex::encode(&hasher.finalize()[..8])
    }
}

/// Pilot subcarrier indices (0-based, ascending).
pub fn pilot_subcarrier_set<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Vec<usize> {
    let (k, kc) = (config.num_subcarriers, config.pilot_subcarriers);
    match config.pilot_pattern {
        PilotPattern::Uniform => (0..kc).map(|i| i * k / kc).collect(),
        PilotPattern::Random => {
            let mut set = index::sample(rng, k, kc).into_vec();
            set.sort_unstable();
            set
        }
    }
}

/// Draws `slots_per_frame` distinct ports per subregion, the shared pilot
/// set, and circular Gaussian noise at `config.snr_db` relative to the mean
/// noiseless entry power. Deterministic in `seed`.
pub fn simulate_measurement(
    channel: &ChannelMatrix,
    grid: &PortGrid,
    config: &SystemConfig,
    seed: u64,
) -> Result<Measurement> {
    config.validate()?;
    if channel.num_ports() != grid.num_ports() || channel.num_subcarriers() != config.num_subcarriers {
        return Err(Error::Config("channel dimensions do not match the configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = config.slots_per_frame;
    let mut visited = Vec::with_capacity(grid.num_subregions());
    for ports in grid.subregions() {
        if nt > ports.len() {
            return Err(Error::Config(format!(
                "slots_per_frame = {nt} exceeds the {} ports of a subregion",
                ports.len()
            )));
        }
        let mut pick: Vec<usize> = index::sample(&mut rng, ports.len(), nt)
            .into_iter()
            .map(|i| ports[i])
            .collect();
        pick.sort_unstable();
        visited.push(pick);
    }
    let pilot_set = pilot_subcarrier_set(config, &mut rng);
    let clean = Measurement::select(&channel.h, visited, pilot_set, None);
    let Some(snr_db) = config.snr_db else {
        return Ok(clean);
    };
    let sigma2 = clean.mean_power() / 10f64.powf(snr_db / 10.0);
    let Measurement { visited, pilot_set, .. } = clean;
    Ok(Measurement::select(&channel.h, visited, pilot_set, Some((sigma2, &mut rng))))
}
