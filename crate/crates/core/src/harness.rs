//! Monte-Carlo driver: trial generation, scoring and CSV persistence.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineResult, Method, Pipeline};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::dictionary::Codebook;
use crate::geometry::{simulate_measurement, synthesize_channel, ChannelMatrix, Measurement, Scatterer, Scene};
use crate::C64;
use crate::metrics::{matched_mae, nmse, ospa, MetricRecord, DEFAULT_OSPA_CUTOFF_M, UNMATCHED_ANGLE_DEG};

/// Column names written as the CSV header.
pub const CSV_COLUMNS: [&str; 13] = [
    "method",
    "snr_db",
    "cr_ports",
    "cr_subcarriers",
    "subregion_div",
    "trial",
    "nmse",
    "angle_mae_deg",
    "distance_mae_m",
    "ospa_m",
    "n_clu",
    "runtime_ms",
    "scene_hash",
];

/// Derives a trial seed from the master seed, sweep point and trial index.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"trial");
    h.update(master.to_le_bytes());
    h.update((point as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Parses `start:step:stop` (inclusive), a comma list, or a single value.
/// `inf` stands for a noiseless measurement.
pub fn parse_snr_range(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad SNR value `{s}`")))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
                return Err(Error::Config(format!("bad SNR range `{spec}`")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(Error::Config(format!("bad SNR range `{spec}`"))),
    }
}

/// One sweep point: the configuration a batch of trials runs with.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub config: SimConfig,
    /// SNR written to the CSV; infinite for noiseless points.
    pub snr_db: f64,
}

/// A full experiment: base configuration, sweep axes and trial budget.
///
/// Points are the Cartesian product of the axes in the order division, N_T,
/// K_c, SNR. An empty axis keeps the base value.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub base: SimConfig,
    pub snr_db: Vec<f64>,
    pub slots_per_frame: Vec<usize>,
    pub pilot_subcarriers: Vec<usize>,
    pub subregion_division: Vec<[usize; 2]>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub output: PathBuf,
    /// When false, `runtime_ms` is written as 0 so repeated runs are byte-identical.
    pub record_timing: bool,
}

impl ExperimentPlan {
    pub fn new(base: SimConfig, output: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            snr_db: base.system.snr_db.into_iter().collect(),
            base,
            slots_per_frame: Vec::new(),
            pilot_subcarriers: Vec::new(),
            subregion_division: Vec::new(),
            trials: 50,
            methods: Method::ALL.to_vec(),
            master_seed: 0,
            output: output.into(),
            record_timing: true,
        }
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let sys = &self.base.system;
        let snrs: Vec<Option<f64>> = if self.snr_db.is_empty() {
            vec![sys.snr_db]
        } else {
            self.snr_db.iter().map(|&s| s.is_finite().then_some(s)).collect()
        };
        let mut points = Vec::new();
        for &div in &axis(&self.subregion_division, sys.subregion_division) {
            for &nt in &axis(&self.slots_per_frame, sys.slots_per_frame) {
                for &kc in &axis(&self.pilot_subcarriers, sys.pilot_subcarriers) {
                    for &snr in &snrs {
                        let mut config = self.base.clone();
                        config.system.subregion_division = div;
                        config.system.slots_per_frame = nt;
                        config.system.pilot_subcarriers = kc;
                        config.system.snr_db = snr;
                        config.validate()?;
                        points.push(SweepPoint { config, snr_db: snr.unwrap_or(f64::INFINITY) });
                    }
                }
            }
        }
        Ok(points)
    }
}

/// Ground truth and observations of one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub scene: Scene,
    pub channel: ChannelMatrix,
    pub measurement: Measurement,
}

/// Draws the scene and measurement for `seed`.
pub fn generate_trial(pipeline: &Pipeline, seed: u64) -> Result<TrialData> {
    let cfg = &pipeline.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::random(cfg.system.num_paths, cfg.estimator.tau_max_s, &mut rng);
    observe_scene(pipeline, scene, rng.next_u64())
}

/// Scatterers on dictionary samples: angular grid points `(i_theta, i_phi)`
/// at radius `r_fix`, delays on delay-grid samples `d`, and the given gains.
pub fn on_grid_scene(pipeline: &Pipeline, cells: &[(usize, usize, usize, C64)]) -> Scene {
    let scatterers = cells
        .iter()
        .map(|&(it, ip, d, gain)| Scatterer {
            position: pipeline.angular.position(pipeline.angular.flat_index(it, ip)),
            gain,
            delay_s: pipeline.delays.sample(d),
        })
        .collect();
    Scene::new(scatterers)
}

/// Synthesizes the channel of a given scene and measures it.
pub fn observe_scene(pipeline: &Pipeline, scene: Scene, measurement_seed: u64) -> Result<TrialData> {
    let channel = synthesize_channel(&scene.scatterers, &pipeline.grid, &pipeline.config.system)?;
    let measurement = simulate_measurement(&channel, &pipeline.grid, &pipeline.config.system, measurement_seed)?;
    Ok(TrialData { scene, channel, measurement })
}

/// Scores one method's output against the trial's ground truth.
pub fn score(
    pipeline: &Pipeline,
    data: &TrialData,
    result: &BaselineResult,
    trial: usize,
    runtime_ms: f64,
) -> MetricRecord {
    let truth: Vec<_> = data.scene.scatterers.iter().map(|s| s.position).collect();
    let truth_xyz = data.scene.positions();
    let sensed = result.sensed();
    let est: Vec<_> = sensed.iter().map(|e| e.spherical).collect();
    let est_xyz: Vec<_> = sensed.iter().map(|e| e.cartesian).collect();
    let mae = matched_mae(&truth, &est, DEFAULT_OSPA_CUTOFF_M);
    let sys = &pipeline.config.system;
    MetricRecord {
        method: result.method.tag().to_string(),
        snr_db: sys.snr_db.unwrap_or(f64::INFINITY),
        cr_ports: sys.cr_ports(),
        cr_subcarriers: sys.cr_subcarriers(),
        subregion_div: sys.division_label(),
        trial,
        nmse: nmse(result.refined.h_hat(), &data.channel.h),
        angle_mae_deg: mae.angle_deg,
        distance_mae_m: mae.distance_m,
        ospa_m: ospa(&truth_xyz, &est_xyz, DEFAULT_OSPA_CUTOFF_M),
        n_clu: result.n_clu,
        runtime_ms,
        scene_hash: data.measurement.fingerprint(),
    }
}

fn failure_record(pipeline: &Pipeline, data: &TrialData, method: Method, trial: usize) -> MetricRecord {
    let sys = &pipeline.config.system;
    MetricRecord {
        method: method.tag().to_string(),
        snr_db: sys.snr_db.unwrap_or(f64::INFINITY),
        cr_ports: sys.cr_ports(),
        cr_subcarriers: sys.cr_subcarriers(),
        subregion_div: sys.division_label(),
        trial,
        nmse: 1.0,
        angle_mae_deg: UNMATCHED_ANGLE_DEG,
        distance_mae_m: DEFAULT_OSPA_CUTOFF_M,
        ospa_m: DEFAULT_OSPA_CUTOFF_M,
        n_clu: 0,
        runtime_ms: 0.0,
        scene_hash: data.measurement.fingerprint(),
    }
}

/// Runs every method on one shared measurement. A method that fails is
/// scored as if it returned the zero channel and no scatterers.
pub fn run_methods(
    pipeline: &Pipeline,
    data: &TrialData,
    methods: &[Method],
    trial: usize,
    record_timing: bool,
) -> Vec<MetricRecord> {
    methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            match pipeline.run(m, &data.measurement) {
                Ok(result) => {
                    let ms = if record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                    score(pipeline, data, &result, trial, ms)
                }
                Err(_) => failure_record(pipeline, data, m, trial),
            }
        })
        .collect()
}

/// One scene, one measurement, one record per method.
pub fn run_trial(config: &SimConfig, methods: &[Method], seed: u64) -> Result<Vec<MetricRecord>> {
    let pipeline = Pipeline::new(config)?;
    let data = generate_trial(&pipeline, seed)?;
    Ok(run_methods(&pipeline, &data, methods, 0, true))
}

/// Identifies a sweep point in the CSV.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey {
    pub subregion_div: String,
    pub cr_ports: u64,
    pub cr_subcarriers: u64,
    pub snr_db: u64,
}

impl PointKey {
    pub fn of(r: &MetricRecord) -> Self {
        // Bit patterns are exact because the CSV round-trips f64 losslessly.
        PointKey {
            subregion_div: r.subregion_div.clone(),
            cr_ports: r.cr_ports.to_bits(),
            cr_subcarriers: r.cr_subcarriers.to_bits(),
            snr_db: r.snr_db.to_bits(),
        }
    }
}

fn sort_records(records: &mut [MetricRecord]) {
    records.sort_by(|a, b| {
        a.subregion_div
            .cmp(&b.subregion_div)
            .then(a.cr_ports.total_cmp(&b.cr_ports))
            .then(a.cr_subcarriers.total_cmp(&b.cr_subcarriers))
            .then(a.snr_db.total_cmp(&b.snr_db))
            .then(a.trial.cmp(&b.trial))
            .then(a.method.cmp(&b.method))
    });
}

/// Reads all records of a CSV written by this module.
pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Writes records (header included) to `path`, replacing its content.
pub fn write_records(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    if records.is_empty() {
        writer.write_record(CSV_COLUMNS)?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

fn has_content(path: &Path) -> Result<bool> {
    if !path.exists() {
        return Ok(false);
    }
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(!first.trim().is_empty())
}

/// Per-point, per-method means.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: PointKey,
    pub method: String,
    pub trials: usize,
    pub nmse: f64,
    pub angle_mae_deg: f64,
    pub distance_mae_m: f64,
    pub ospa_m: f64,
}

impl SummaryRow {
    pub fn nmse_db(&self) -> f64 {
        10.0 * self.nmse.log10()
    }
}

pub fn summarize(records: &[MetricRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(PointKey, String), Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((PointKey::of(r), r.method.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((point, method), rows)| {
            let n = rows.len() as f64;
            let mean = |f: fn(&MetricRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                point,
                method,
                trials: rows.len(),
                nmse: mean(|r| r.nmse),
                angle_mae_deg: mean(|r| r.angle_mae_deg),
                distance_mae_m: mean(|r| r.distance_mae_m),
                ospa_m: mean(|r| r.ospa_m),
            }
        })
        .collect()
}

/// Plain-text summary table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<6} {:>8} {:>8} {:>8} {:<10} {:>6} {:>10} {:>10} {:>10} {:>8}\n",
        "div", "cr_port", "cr_sub", "snr_db", "method", "trials", "nmse_db", "angle_deg", "dist_m", "ospa_m"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<6} {:>8.4} {:>8.4} {:>8.1} {:<10} {:>6} {:>10.3} {:>10.4} {:>10.4} {:>8.4}\n",
            r.point.subregion_div,
            f64::from_bits(r.point.cr_ports),
            f64::from_bits(r.point.cr_subcarriers),
            f64::from_bits(r.point.snr_db),
            r.method,
            r.trials,
            r.nmse_db(),
            r.angle_mae_deg,
            r.distance_mae_m,
            r.ospa_m
        ));
    }
    s
}

/// Outcome of [`run_sweep`].
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub records: Vec<MetricRecord>,
    pub summary: Vec<SummaryRow>,
    /// Trials skipped because all their rows were already present.
    pub skipped: usize,
    pub executed: usize,
}

/// Runs every point and trial of `plan`, appending rows to `plan.output` as
/// trials finish, then rewrites the file sorted by point, trial and method.
///
/// Rows already present in the output (same point, trial and method) are
/// not recomputed.
pub fn run_sweep(plan: &ExperimentPlan) -> Result<SweepReport> {
    let points = plan.points()?;
    let resume = has_content(&plan.output)?;
    let existing = if resume { read_records(&plan.output)? } else { Vec::new() };
    let done: HashSet<(PointKey, usize, String)> = existing
        .iter()
        .map(|r| (PointKey::of(r), r.trial, r.method.clone()))
        .collect();

    let file = OpenOptions::new().create(true).append(true).open(&plan.output)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if !resume {
        writer.write_record(CSV_COLUMNS)?;
        writer.flush()?;
    }
    let writer = Mutex::new(writer);

    let pipelines: Vec<Pipeline> = points.iter().map(|p| Pipeline::new(&p.config)).collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    let mut skipped = 0;
    for (pi, pipeline) in pipelines.iter().enumerate() {
        let probe = MetricRecord {
            method: String::new(),
            snr_db: points[pi].snr_db,
            cr_ports: pipeline.config.system.cr_ports(),
            cr_subcarriers: pipeline.config.system.cr_subcarriers(),
            subregion_div: pipeline.config.system.division_label(),
            trial: 0,
            nmse: 0.0,
            angle_mae_deg: 0.0,
            distance_mae_m: 0.0,
            ospa_m: 0.0,
            n_clu: 0,
            runtime_ms: 0.0,
            scene_hash: String::new(),
        };
        let key = PointKey::of(&probe);
        for t in 0..plan.trials {
            let todo: Vec<Method> = plan
                .methods
                .iter()
                .copied()
                .filter(|m| !done.contains(&(key.clone(), t, m.tag().to_string())))
                .collect();
            if todo.is_empty() {
                skipped += 1;
            } else {
                jobs.push((pi, t, todo));
            }
        }
    }

    let executed = jobs.len();
    jobs.par_iter().try_for_each(|(pi, t, todo)| -> Result<()> {
        let pipeline = &pipelines[*pi];
        let data = generate_trial(pipeline, trial_seed(plan.master_seed, *pi, *t))?;
        let rows = run_methods(pipeline, &data, todo, *t, plan.record_timing);
        let mut w = writer.lock().expect("writer lock poisoned");
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    drop(writer);

    let mut records = read_records(&plan.output)?;
    sort_records(&mut records);
    write_records(&plan.output, &records)?;
    let summary = summarize(&records);
    Ok(SweepReport { records, summary, skipped, executed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn snr_range_parsing() {
        assert_eq!(parse_snr_range("-10:5:30").unwrap(), vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(parse_snr_range("0,10,20").unwrap(), vec![0.0, 10.0, 20.0]);
        assert_eq!(parse_snr_range("7").unwrap(), vec![7.0]);
        assert!(parse_snr_range("inf").unwrap()[0].is_infinite());
        assert!(parse_snr_range("0:0:10").is_err());
        assert!(parse_snr_range("10:1:0").is_err());
        assert!(parse_snr_range("a:b").is_err());
    }

    #[test]
    fn seeds_depend_on_every_input() {
        let s = trial_seed(1, 2, 3);
        assert_eq!(s, trial_seed(1, 2, 3));
        assert_ne!(s, trial_seed(2, 2, 3));
        assert_ne!(s, trial_seed(1, 3, 3));
        assert_ne!(s, trial_seed(1, 2, 4));
    }

    #[test]
    fn plan_points_product() {
        let mut plan = ExperimentPlan::new(SimConfig::preset(Preset::Desk), "unused.csv");
        plan.snr_db = vec![0.0, 10.0, f64::INFINITY];
        plan.slots_per_frame = vec![16, 32];
        let pts = plan.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[2].config.system.snr_db, None);
        assert_eq!(pts[3].config.system.slots_per_frame, 32);
        plan.slots_per_frame = vec![1000];
        assert!(plan.points().is_err());
    }

    #[test]
    fn summary_means() {
        let mk = |trial, nmse| MetricRecord {
            method: "omp2d".into(),
            snr_db: 10.0,
            cr_ports: 0.5,
            cr_subcarriers: 0.5,
            subregion_div: "2x2".into(),
            trial,
            nmse,
            angle_mae_deg: 1.0,
            distance_mae_m: 2.0,
            ospa_m: 3.0,
            n_clu: 1,
            runtime_ms: 0.0,
            scene_hash: "x".into(),
        };
        let rows = summarize(&[mk(0, 0.1), mk(1, 0.3)]);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].nmse - 0.2).abs() < 1e-15);
        assert!((rows[0].nmse_db() - 10.0 * 0.2f64.log10()).abs() < 1e-12);
    }
}
