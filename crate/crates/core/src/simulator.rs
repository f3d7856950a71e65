//! Synthetic I/O workload generator with per-job ground truth.
//!
//! Log10 throughput of every job is the sum of four components:
//!
//! * `base`: what the application would achieve on an idle, healthy
//!   system, a fixed function of its observable features;
//! * `global`: system-wide degradation windows, a function of time only;
//! * `local`: contention from jobs whose run windows overlap;
//! * `noise`: i.i.d. normal noise.
//!
//! Observable features live on a lattice (`feature_step`), like the
//! counters of real I/O characterization logs, and no two jobs outside a
//! duplicate set share a feature vector.
//!
//! The contention kernel only looks at the aggregate I/O volume of
//! overlapping jobs. Real file systems do not necessarily behave this way;
//! it is the smallest model in which jobs interact.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureGroup, FeatureSchema, JobRecord, START_TIME};
use crate::error::{Error, Result};
use crate::ingest;
use crate::scalar::Real;

/// Feature holding the job's I/O volume in bytes.
pub const VOLUME_FEATURE: &str = "posix_bytes";
pub const LMT_LOAD_FEATURE: &str = "lmt_overlap_load";
pub const LMT_DEGRADATION_FEATURE: &str = "lmt_degradation";
pub const NODES_FEATURE: &str = "cobalt_nodes";

/// Width of the linear ramps at degradation window edges, seconds.
pub const RAMP_SECONDS: f64 = 3600.0;

const KNOT_OFFSETS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];
const INTERACTIONS_PER_APP: usize = 3;
const BASE_CLAMP: (f64, f64) = (5.0, 11.0);
const MAX_FEATURE_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationWindow {
    /// Seconds from the start of the simulated horizon.
    pub start: f64,
    pub end: f64,
    /// Throughput loss at full depth, log10 units.
    pub depth: f64,
}

impl DegradationWindow {
    /// Log10 throughput change at horizon offset `t`.
    pub fn effect(&self, t: f64) -> f64 {
        if t <= self.start || t >= self.end {
            return 0.0;
        }
        let ramp = ((t - self.start) / RAMP_SECONDS)
            .min((self.end - t) / RAMP_SECONDS)
            .min(1.0);
        -self.depth * ramp
    }

    /// True when `t` lies inside the window at full depth.
    pub fn at_full_depth(&self, t: f64) -> bool {
        t >= self.start + RAMP_SECONDS && t <= self.end - RAMP_SECONDS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSizeDistribution {
    Fixed { size: usize },
    Uniform { min: usize, max: usize },
    /// 70% pairs, 26% sets of 3 to 6, 4% sets of 7 to 20.
    PairHeavy,
}

impl SetSizeDistribution {
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            SetSizeDistribution::Fixed { size } => size,
            SetSizeDistribution::Uniform { min, max } => rng.random_range(min..=max),
            SetSizeDistribution::PairHeavy => {
                let u: f64 = rng.random();
                if u < 0.70 {
                    2
                } else if u < 0.96 {
                    rng.random_range(3..=6)
                } else {
                    rng.random_range(7..=20)
                }
            }
        }
    }

    fn min_size(&self) -> usize {
        match *self {
            SetSizeDistribution::Fixed { size } => size,
            SetSizeDistribution::Uniform { min, .. } => min,
            SetSizeDistribution::PairHeavy => 2,
        }
    }
}

/// Simulator parameters. Every field has a default; see [`SimConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_apps: usize,
    pub n_jobs: usize,
    /// Observable application features, split between posix and mpiio.
    pub n_features: usize,
    pub seed: u64,
    /// Standard deviation of the noise component, log10 units.
    pub noise_sigma: f64,
    pub contention_kappa: f64,
    pub degradation_windows: Vec<DegradationWindow>,
    pub duplicate_set_count: usize,
    pub duplicate_set_size: SetSizeDistribution,
    pub concurrent_duplicate_fraction: f64,
    pub ood_fraction: f64,
    /// Shift of out-of-distribution feature vectors, in units of the
    /// within-application feature standard deviation.
    pub ood_shift: f64,
    /// Extra log10 offset (random sign) on the base throughput of
    /// out-of-distribution jobs.
    pub ood_offset: f64,
    pub time_horizon: f64,
    /// Epoch seconds of horizon offset 0.
    pub epoch_start: f64,
    /// System I/O capacity, bytes/s, used by the contention kernel.
    pub capacity: f64,
    /// Scale of per-feature effects on base throughput, log10 units.
    pub effect_scale: f64,
    /// Spread of application centroids in feature space.
    pub app_spread: f64,
    /// Lattice spacing of the latent features; 0 makes them continuous.
    pub feature_step: f64,
    /// Range of per-application mean log10 throughput.
    pub base_range: (f64, f64),
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_apps: 4,
            n_jobs: 4000,
            n_features: 6,
            seed: 1,
            noise_sigma: 0.03,
            contention_kappa: 0.0,
            degradation_windows: Vec::new(),
            duplicate_set_count: 300,
            duplicate_set_size: SetSizeDistribution::PairHeavy,
            concurrent_duplicate_fraction: 0.5,
            ood_fraction: 0.0,
            ood_shift: 5.0,
            ood_offset: 0.0,
            time_horizon: 20.0 * 7.0 * 86_400.0,
            // Monday 2021-01-04 00:00 UTC, so simulated weeks align with ISO weeks
            epoch_start: 1_609_718_400.0,
            capacity: 1e10,
            effect_scale: 0.025,
            app_spread: 4.0,
            feature_step: 1.0,
            base_range: (8.0, 9.5),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_apps == 0 || self.n_jobs == 0 || self.n_features == 0 {
            return fail("n_apps, n_jobs and n_features must be >= 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be >= 0".into());
        }
        if !(self.contention_kappa >= 0.0) {
            return fail("contention_kappa must be >= 0".into());
        }
        if !(self.time_horizon > 0.0) || !(self.capacity > 0.0) {
            return fail("time_horizon and capacity must be positive".into());
        }
        for w in &self.degradation_windows {
            if !(0.0 <= w.start && w.start < w.end && w.end <= self.time_horizon) {
                return fail(format!("degradation window {w:?} outside [0, time_horizon]"));
            }
            if !(w.depth >= 0.0) {
                return fail(format!("degradation window depth {} must be >= 0", w.depth));
            }
        }
        if self.duplicate_set_size.min_size() < 2 {
            return fail("duplicate sets need at least two members".into());
        }
        if let SetSizeDistribution::Uniform { min, max } = self.duplicate_set_size {
            if min > max {
                return fail("uniform set size min > max".into());
            }
        }
        if !(0.0..=1.0).contains(&self.concurrent_duplicate_fraction) {
            return fail("concurrent_duplicate_fraction must be in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.ood_fraction) {
            return fail("ood_fraction must be in [0, 1)".into());
        }
        if !(self.feature_step >= 0.0 && self.feature_step.is_finite()) {
            return fail("feature_step must be >= 0".into());
        }
        if !(self.base_range.0 <= self.base_range.1) {
            return fail("base_range must be ordered".into());
        }
        if self.duplicate_set_count * self.duplicate_set_size.min_size() > self.n_jobs {
            return fail("duplicate sets cannot fit in n_jobs".into());
        }
        Ok(())
    }

    /// Feature schema of the generated data.
    pub fn schema(&self) -> FeatureSchema {
        let (posix, mpiio) = feature_names(self.n_features);
        let mut groups = BTreeMap::new();
        groups.insert(FeatureGroup::Posix, posix);
        groups.insert(FeatureGroup::Mpiio, mpiio);
        groups.insert(
            FeatureGroup::Lmt,
            vec![LMT_LOAD_FEATURE.to_string(), LMT_DEGRADATION_FEATURE.to_string()],
        );
        groups.insert(FeatureGroup::Scheduler, vec![NODES_FEATURE.to_string()]);
        groups.insert(FeatureGroup::Timing, vec![START_TIME.to_string()]);
        FeatureSchema::new(groups, None).expect("generated schema is valid")
    }

    /// Log10 effect of all degradation windows at horizon offset `t`.
    pub fn global_effect(&self, t: f64) -> f64 {
        self.degradation_windows.iter().map(|w| w.effect(t)).sum()
    }
}

fn feature_names(n: usize) -> (Vec<String>, Vec<String>) {
    let n_posix = n.div_ceil(2);
    let posix = (0..n_posix)
        .map(|i| if i == 0 { VOLUME_FEATURE.to_string() } else { format!("posix_f{i:02}") })
        .collect();
    let mpiio = (0..n - n_posix).map(|i| format!("mpiio_f{i:02}")).collect();
    (posix, mpiio)
}

/// Log10 components of one simulated job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub job_id: String,
    pub base: f64,
    pub global: f64,
    pub local: f64,
    pub noise: f64,
    pub is_ood: bool,
}

impl TruthRow {
    pub fn total(&self) -> f64 {
        self.base + self.global + self.local + self.noise
    }
}

/// Per-job decomposition of the generated throughputs, in dataset order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
    /// Job ids of every injected duplicate set.
    pub duplicate_sets: Vec<Vec<String>>,
    /// Whether each injected set was emitted with a shared start time.
    pub concurrent: Vec<bool>,
}

impl GroundTruth {
    pub fn get(&self, job_id: &str) -> Option<&TruthRow> {
        self.rows.iter().find(|r| r.job_id == job_id)
    }

    pub fn by_id(&self) -> BTreeMap<&str, &TruthRow> {
        self.rows.iter().map(|r| (r.job_id.as_str(), r)).collect()
    }

    pub fn ood_ids(&self) -> Vec<String> {
        self.rows.iter().filter(|r| r.is_ood).map(|r| r.job_id.clone()).collect()
    }
}

struct PiecewiseLinear {
    knots: [f64; 4],
    values: [f64; 4],
}

impl PiecewiseLinear {
    /// Linear interpolation; the outer segments extend linearly.
    fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        let seg = if x <= k[1] {
            0
        } else if x <= k[2] {
            1
        } else {
            2
        };
        let slope = (self.values[seg + 1] - self.values[seg]) / (k[seg + 1] - k[seg]);
        self.values[seg] + slope * (x - k[seg])
    }
}

struct AppModel {
    centroid: Vec<f64>,
    level: f64,
    effects: Vec<PiecewiseLinear>,
    interactions: Vec<(usize, usize, f64)>,
    sensitivity: f64,
    nodes: f64,
}

impl AppModel {
    fn sample(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Self {
        let spread = Normal::new(0.0, cfg.app_spread).expect("finite spread");
        let effect = Normal::new(0.0, cfg.effect_scale).expect("finite scale");
        let centroid: Vec<f64> = (0..cfg.n_features)
            .map(|_| snap(spread.sample(rng), cfg.feature_step))
            .collect();
        let level = rng.random_range(cfg.base_range.0..=cfg.base_range.1);
        let effects = centroid
            .iter()
            .map(|&c| {
                let mut values = [0.0; 4];
                for v in &mut values {
                    *v = effect.sample(rng);
                }
                PiecewiseLinear {
                    knots: KNOT_OFFSETS.map(|o| c + o),
                    values,
                }
            })
            .collect();
        let mut interactions = Vec::new();
        if cfg.n_features >= 2 {
            for _ in 0..INTERACTIONS_PER_APP {
                let a = rng.random_range(0..cfg.n_features);
                let mut b = rng.random_range(0..cfg.n_features - 1);
                if b >= a {
                    b += 1;
                }
                interactions.push((a, b, effect.sample(rng) / 2.0));
            }
        }
        let sensitivity = rng.random_range(0.2..=2.0);
        let nodes = f64::from(1u32 << rng.random_range(0..=10));
        AppModel {
            centroid,
            level,
            effects,
            interactions,
            sensitivity,
            nodes,
        }
    }

    fn base(&self, z: &[f64]) -> f64 {
        let additive: f64 = self.effects.iter().zip(z).map(|(e, &x)| e.eval(x)).sum();
        let pairs: f64 = self
            .interactions
            .iter()
            .map(|&(a, b, c)| c * (z[a] - self.centroid[a]) * (z[b] - self.centroid[b]))
            .sum();
        (self.level + additive + pairs).clamp(BASE_CLAMP.0, BASE_CLAMP.1)
    }
}

fn snap(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}

/// Draws `centroid + shift + N(0, 1)` per feature, snapped to the lattice,
/// until the vector is new for this application.
fn draw_features(
    app: usize,
    centroid: &[f64],
    shift: f64,
    cfg: &SimConfig,
    unit: &Normal<f64>,
    used: &mut HashSet<(usize, Vec<u64>)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_FEATURE_DRAWS {
        let z: Vec<f64> = centroid
            .iter()
            .map(|c| c + shift + snap(unit.sample(rng), cfg.feature_step))
            .collect();
        if used.insert((app, z.iter().map(|v| v.to_bits()).collect())) {
            return Ok(z);
        }
    }
    Err(Error::Config(format!(
        "feature lattice too coarse: no unused feature vector for app {app} after {MAX_FEATURE_DRAWS} draws"
    )))
}

/// One generated job before ids are assigned.
struct Draft {
    app: usize,
    z: Vec<f64>,
    start: f64,
    is_ood: bool,
    ood_sign: f64,
}

/// Samples a dataset and its ground truth. Identical configs give
/// bit-identical output.
pub fn generate<T: Real>(cfg: &SimConfig) -> Result<(Dataset<T>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let apps: Vec<AppModel> = (0..cfg.n_apps).map(|_| AppModel::sample(cfg, &mut rng)).collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let horizon = Uniform::new_inclusive(0.0, cfg.time_horizon).expect("positive horizon");

    let sizes: Vec<usize> = (0..cfg.duplicate_set_count)
        .map(|_| cfg.duplicate_set_size.sample(&mut rng))
        .collect();
    let n_dup: usize = sizes.iter().sum();
    if n_dup > cfg.n_jobs {
        return Err(Error::Config(format!(
            "duplicate sets hold {n_dup} jobs but n_jobs is {}",
            cfg.n_jobs
        )));
    }
    let n_concurrent = (cfg.concurrent_duplicate_fraction * sizes.len() as f64).round() as usize;

    let mut used = HashSet::new();
    let mut drafts: Vec<Draft> = Vec::with_capacity(cfg.n_jobs);
    let mut set_members: Vec<Vec<usize>> = Vec::with_capacity(sizes.len());
    for (s, &size) in sizes.iter().enumerate() {
        let app = rng.random_range(0..cfg.n_apps);
        let z = draw_features(app, &apps[app].centroid, 0.0, cfg, &unit, &mut used, &mut rng)?;
        let first = horizon.sample(&mut rng);
        let concurrent = s < n_concurrent;
        let mut members = Vec::with_capacity(size);
        for m in 0..size {
            let start = if concurrent || m == 0 {
                first
            } else {
                spread_start(first, cfg.time_horizon, &mut rng)
            };
            members.push(drafts.len());
            drafts.push(Draft {
                app,
                z: z.clone(),
                start,
                is_ood: false,
                ood_sign: 0.0,
            });
        }
        set_members.push(members);
    }
    while drafts.len() < cfg.n_jobs {
        let app = rng.random_range(0..cfg.n_apps);
        let is_ood = rng.random::<f64>() < cfg.ood_fraction;
        let shift = if is_ood { cfg.ood_shift } else { 0.0 };
        let z = draw_features(app, &apps[app].centroid, shift, cfg, &unit, &mut used, &mut rng)?;
        let ood_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        drafts.push(Draft {
            app,
            z,
            start: horizon.sample(&mut rng),
            is_ood,
            ood_sign,
        });
    }

    // Ground-truth components. Contention uses the nominal run window
    // (volume over uncontended throughput) so that it is well defined.
    let n = drafts.len();
    let volume: Vec<f64> = drafts.iter().map(|d| volume_bytes(d.z[0])).collect();
    let base: Vec<f64> = drafts
        .iter()
        .map(|d| {
            let b = apps[d.app].base(&d.z);
            if d.is_ood {
                b + d.ood_sign * cfg.ood_offset
            } else {
                b
            }
        })
        .collect();
    let global: Vec<f64> = drafts.iter().map(|d| cfg.global_effect(d.start)).collect();
    let nominal_end: Vec<f64> = (0..n)
        .map(|i| drafts[i].start + volume[i] / 10f64.powf(base[i] + global[i]))
        .collect();
    let overlap = overlapping_volume(
        &drafts.iter().map(|d| d.start).collect::<Vec<_>>(),
        &nominal_end,
        &volume,
    );
    let load: Vec<f64> = overlap.iter().map(|v| (1.0 + v / cfg.capacity).log10()).collect();
    let local: Vec<f64> = (0..n)
        .map(|i| -cfg.contention_kappa * load[i] * apps[drafts[i].app].sensitivity)
        .collect();
    let noise_dist = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let noise: Vec<f64> = (0..n)
        .map(|_| if cfg.noise_sigma > 0.0 { noise_dist.sample(&mut rng) } else { 0.0 })
        .collect();

    // Jobs are numbered in start-time order, like a scheduler log.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| drafts[a].start.total_cmp(&drafts[b].start).then(a.cmp(&b)));
    let width = n.to_string().len().max(6);
    let mut ids = vec![String::new(); n];
    for (rank, &i) in order.iter().enumerate() {
        ids[i] = format!("job-{rank:0width$}");
    }

    let (posix, mpiio) = feature_names(cfg.n_features);
    let app_names: Vec<String> = (0..cfg.n_apps).map(|a| format!("app-{a:03}")).collect();
    let mut records = Vec::with_capacity(n);
    let mut truth = GroundTruth::default();
    for &i in &order {
        let d = &drafts[i];
        let log_tp = base[i] + global[i] + local[i] + noise[i];
        let throughput = 10f64.powf(log_tp);
        let mut features = BTreeMap::new();
        for (name, &z) in posix.iter().chain(&mpiio).zip(&d.z) {
            let value = if name == VOLUME_FEATURE { volume[i] } else { z };
            features.insert(name.clone(), T::lit(value));
        }
        features.insert(LMT_LOAD_FEATURE.to_string(), T::lit(load[i]));
        features.insert(LMT_DEGRADATION_FEATURE.to_string(), T::lit(-global[i]));
        features.insert(NODES_FEATURE.to_string(), T::lit(apps[d.app].nodes));
        let start_time = cfg.epoch_start + d.start;
        records.push(JobRecord {
            job_id: ids[i].clone(),
            app_id: app_names[d.app].clone(),
            start_time,
            end_time: start_time + volume[i] / throughput,
            features,
            throughput: T::lit(throughput),
        });
        truth.rows.push(TruthRow {
            job_id: ids[i].clone(),
            base: base[i],
            global: global[i],
            local: local[i],
            noise: noise[i],
            is_ood: d.is_ood,
        });
    }
    truth.duplicate_sets = set_members
        .iter()
        .map(|m| m.iter().map(|&i| ids[i].clone()).collect())
        .collect();
    truth.concurrent = (0..sizes.len()).map(|s| s < n_concurrent).collect();
    let dataset = Dataset::new(cfg.schema(), records)?;
    Ok((dataset, truth))
}

/// I/O volume in bytes for the first latent feature.
fn volume_bytes(z0: f64) -> f64 {
    10f64.powf(9.0 + 0.4 * z0)
}

/// A start time at a log-uniform gap in [1 s, horizon] from `first`,
/// placed on whichever side of `first` stays inside the horizon.
fn spread_start(first: f64, horizon: f64, rng: &mut ChaCha8Rng) -> f64 {
    let log_max = horizon.max(1.0).ln();
    loop {
        let gap = rng.random_range(0.0..=log_max).exp();
        let mut sides = [first + gap, first - gap];
        sides.shuffle(rng);
        if let Some(t) = sides.into_iter().find(|t| (0.0..=horizon).contains(t)) {
            return t;
        }
    }
}

/// Sum of the volumes of all other jobs whose [start, end] intervals intersect.
fn overlapping_volume(start: &[f64], end: &[f64], volume: &[f64]) -> Vec<f64> {
    let n = start.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| start[a].total_cmp(&start[b]).then(a.cmp(&b)));
    let mut acc = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if start[j] > end[i] {
                break;
            }
            acc[i] += volume[j];
            acc[j] += volume[i];
        }
    }
    acc
}

/// Paths written by [`export`].
#[derive(Debug, Clone)]
pub struct ExportedFiles {
    pub jobs: PathBuf,
    pub truth: PathBuf,
    pub schema: PathBuf,
}

/// Writes `jobs.csv`, `truth.csv` and `schema.toml` into `dir`.
pub fn export<T: Real>(dataset: &Dataset<T>, truth: &GroundTruth, dir: impl AsRef<Path>) -> Result<ExportedFiles> {
    let dir = dir.as_ref();
    if dataset.len() != truth.rows.len()
        || dataset.iter().zip(&truth.rows).any(|(r, t)| r.job_id != t.job_id)
    {
        return Err(Error::InvalidArgument("dataset and ground truth job ids differ".into()));
    }
    std::fs::create_dir_all(dir)?;
    let files = ExportedFiles {
        jobs: dir.join("jobs.csv"),
        truth: dir.join("truth.csv"),
        schema: dir.join("schema.toml"),
    };
    ingest::save_csv(dataset, &files.jobs)?;
    ingest::write_schema(dataset.schema(), &files.schema)?;
    write_truth(truth, File::create(&files.truth)?)?;
    Ok(files)
}

pub fn write_truth<W: std::io::Write>(truth: &GroundTruth, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in &truth.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<Vec<TruthRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn quiet(seed: u64) -> SimConfig {
        SimConfig {
            n_jobs: 600,
            duplicate_set_count: 40,
            noise_sigma: 0.0,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_for_identical_configs() {
        let cfg = SimConfig { contention_kappa: 0.5, ..quiet(3) };
        let (a, ta) = generate::<f64>(&cfg).unwrap();
        let (b, tb) = generate::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn components_add_up() {
        let cfg = SimConfig {
            contention_kappa: 1.0,
            noise_sigma: 0.05,
            degradation_windows: vec![DegradationWindow { start: 1e5, end: 1e6, depth: 0.3 }],
            ood_fraction: 0.05,
            ood_offset: 0.2,
            ..quiet(4)
        };
        let (ds, truth) = generate::<f64>(&cfg).unwrap();
        for (r, t) in ds.iter().zip(&truth.rows) {
            assert!((r.log_throughput() - t.total()).abs() < 1e-9);
            assert!(r.end_time >= r.start_time);
        }
    }

    #[test]
    fn ablations_zero_their_columns() {
        let (_, truth) = generate::<f64>(&quiet(5)).unwrap();
        assert!(truth.rows.iter().all(|t| t.noise == 0.0 && t.local == 0.0 && t.global == 0.0));
    }

    #[test]
    fn noiseless_duplicates_share_throughput() {
        let (ds, truth) = generate::<f64>(&quiet(6)).unwrap();
        let by_id: BTreeMap<&str, f64> =
            ds.iter().map(|r| (r.job_id.as_str(), r.throughput)).collect();
        for set in &truth.duplicate_sets {
            let first = by_id[set[0].as_str()];
            assert!(set.iter().all(|id| by_id[id.as_str()] == first));
        }
    }

    #[test]
    fn concurrent_set_spread_matches_sigma() {
        let cfg = SimConfig {
            n_jobs: 2000,
            duplicate_set_count: 10,
            duplicate_set_size: SetSizeDistribution::Fixed { size: 150 },
            concurrent_duplicate_fraction: 1.0,
            noise_sigma: 0.03,
            ..SimConfig::default()
        };
        let (ds, truth) = generate::<f64>(&cfg).unwrap();
        let by_id: BTreeMap<&str, f64> =
            ds.iter().map(|r| (r.job_id.as_str(), r.log_throughput())).collect();
        for set in &truth.duplicate_sets {
            let logs: Vec<f64> = set.iter().map(|id| by_id[id.as_str()]).collect();
            let sd = stats::sample_variance(&logs).unwrap().sqrt();
            assert!((sd - 0.03).abs() / 0.03 < 0.15, "sd {sd}");
        }
    }

    #[test]
    fn window_depth_recovered_from_paired_duplicates() {
        let horizon = SimConfig::default().time_horizon;
        let window = DegradationWindow { start: 0.45 * horizon, end: 0.55 * horizon, depth: 0.2 };
        let cfg = SimConfig {
            n_jobs: 3000,
            duplicate_set_count: 600,
            duplicate_set_size: SetSizeDistribution::Fixed { size: 4 },
            concurrent_duplicate_fraction: 0.0,
            noise_sigma: 0.0,
            degradation_windows: vec![window],
            ..SimConfig::default()
        };
        let (ds, truth) = generate::<f64>(&cfg).unwrap();
        let rec: BTreeMap<&str, &JobRecord<f64>> = ds.iter().map(|r| (r.job_id.as_str(), r)).collect();
        let mut diffs = Vec::new();
        for set in &truth.duplicate_sets {
            let (inside, outside): (Vec<&JobRecord<f64>>, Vec<&JobRecord<f64>>) = set
                .iter()
                .map(|id| rec[id.as_str()])
                .filter(|r| {
                    let t = r.start_time - cfg.epoch_start;
                    window.at_full_depth(t) || window.effect(t) == 0.0
                })
                .partition(|r| window.at_full_depth(r.start_time - cfg.epoch_start));
            if let (Some(a), Some(b)) = (inside.first(), outside.first()) {
                diffs.push(a.log_throughput() - b.log_throughput());
            }
        }
        assert!(diffs.len() >= 10, "only {} matched pairs", diffs.len());
        let mean = stats::mean(&diffs).unwrap();
        assert!((mean + 0.2).abs() < 0.01, "mean paired difference {mean}");
    }

    #[test]
    fn concurrent_sets_share_start_times() {
        let cfg = SimConfig { concurrent_duplicate_fraction: 1.0, ..quiet(8) };
        let (ds, truth) = generate::<f64>(&cfg).unwrap();
        let start: BTreeMap<&str, f64> = ds.iter().map(|r| (r.job_id.as_str(), r.start_time)).collect();
        for set in &truth.duplicate_sets {
            assert!(set.iter().all(|id| start[id.as_str()] == start[set[0].as_str()]));
        }
    }

    #[test]
    fn infeasible_duplicate_budget() {
        let cfg = SimConfig {
            n_jobs: 10,
            duplicate_set_count: 6,
            duplicate_set_size: SetSizeDistribution::Fixed { size: 2 },
            ..SimConfig::default()
        };
        assert!(matches!(generate::<f64>(&cfg), Err(Error::Config(_))));
        let cfg = SimConfig {
            n_jobs: 10,
            duplicate_set_count: 5,
            duplicate_set_size: SetSizeDistribution::Uniform { min: 2, max: 3 },
            seed: 2,
            ..SimConfig::default()
        };
        // minimum fits, but sampled sizes may not; either outcome must be clean
        if let Ok((ds, _)) = generate::<f64>(&cfg) {
            assert_eq!(ds.len(), 10);
        }
    }

    #[test]
    fn config_toml_round_trip_and_defaults() {
        let cfg = SimConfig {
            degradation_windows: vec![DegradationWindow { start: 10.0, end: 5000.0, depth: 0.1 }],
            duplicate_set_size: SetSizeDistribution::Uniform { min: 2, max: 5 },
            ..SimConfig::default()
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = SimConfig::from_toml_str("n_jobs = 50\nduplicate_set_count = 5\n").unwrap();
        assert_eq!(partial.n_jobs, 50);
        assert_eq!(partial.noise_sigma, SimConfig::default().noise_sigma);
        assert!(SimConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn window_ramps() {
        let w = DegradationWindow { start: 0.0, end: 4.0 * RAMP_SECONDS, depth: 0.2 };
        assert_eq!(w.effect(0.0), 0.0);
        assert!((w.effect(0.5 * RAMP_SECONDS) + 0.1).abs() < 1e-12);
        assert_eq!(w.effect(2.0 * RAMP_SECONDS), -0.2);
        assert_eq!(w.effect(5.0 * RAMP_SECONDS), 0.0);
    }

    #[test]
    fn overlap_kernel() {
        let start = [0.0, 5.0, 20.0];
        let end = [10.0, 6.0, 30.0];
        let vol = [1.0, 2.0, 4.0];
        assert_eq!(overlapping_volume(&start, &end, &vol), vec![2.0, 1.0, 0.0]);
    }
}
