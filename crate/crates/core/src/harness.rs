//! Monte Carlo experiment driver: repeated synthesize-and-classify trials,
//! grid sweeps written as CSV, and classification of stored captures.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class_stats::{class_models, AccessMethod, ClassLabel, ClassModel};
use crate::classifier::{classify_with_models, ClassificationResult, Verdict};
use crate::constellations::Modulation;
use crate::error::{Error, Result};
use crate::netsim::{read_capture, synthesize_scenario, write_capture, CaptureMeta, ScenarioConfig};

/// Seed of trial `index` under `master` (splitmix64 finalizer over both).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Which modulation each trial uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationPlan {
    /// The scenario's own modulation on every trial.
    Fixed,
    /// Trials cycle through the method's classes with equal weight.
    ClassAverage,
}

/// Modulations whose classes belong to `method`, one entry per class. The
/// PSK class is listed once; [`trial_modulation`] rotates its order.
pub fn class_modulations(method: AccessMethod) -> Vec<Modulation> {
    let labels: Vec<ClassLabel> = match method {
        // contention traffic is drawn from the single-carrier alphabets
        AccessMethod::Contention => ClassLabel::all().filter(|l| l.access_method() == AccessMethod::Tdma).collect(),
        m => ClassLabel::all().filter(|l| l.access_method() == m).collect(),
    };
    labels.into_iter().map(|l| l.modulation()).collect()
}

/// Modulation of trial `index` under `plan`.
pub fn trial_modulation(cfg: &ScenarioConfig, plan: ModulationPlan, index: usize) -> Modulation {
    match plan {
        ModulationPlan::Fixed => cfg.modulation,
        ModulationPlan::ClassAverage => {
            let mods = class_modulations(cfg.method);
            let round = index / mods.len();
            match mods[index % mods.len()] {
                Modulation::Psk(_) if matches!(cfg.method, AccessMethod::Tdma | AccessMethod::Contention) => {
                    Modulation::Psk(4 << (round % 5))
                }
                m => m,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub trials: usize,
    pub correct: usize,
    pub flagged: usize,
    pub insufficient: usize,
}

impl Tally {
    fn add(&mut self, o: &TrialOutcome) {
        self.trials += 1;
        self.correct += o.correct as usize;
        self.flagged += o.contention_flag as usize;
        self.insufficient += o.insufficient as usize;
    }

    pub fn p_correct(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.correct as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub truth: Verdict,
    pub modulation: Modulation,
    pub verdict: Option<Verdict>,
    pub correct: bool,
    pub contention_flag: bool,
    /// Too few usable frames to classify; counted as incorrect.
    pub insufficient: bool,
}

/// Aggregate over trials. Trials without enough usable frames count as
/// misclassified and are also reported in `insufficient`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub n_trials: usize,
    pub n_correct: usize,
    pub n_insufficient: usize,
    pub p_correct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction of trials flagged as contention by stage 2.
    pub flag_rate: f64,
    /// Per true class (or "contention"): tallies.
    pub per_class: BTreeMap<String, Tally>,
}

impl AccuracyRecord {
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let mut total = Tally::default();
        let mut per_class: BTreeMap<String, Tally> = BTreeMap::new();
        for o in outcomes {
            total.add(o);
            per_class.entry(o.truth.to_string()).or_default().add(o);
        }
        let (ci_low, ci_high) = wilson_interval(total.correct, total.trials);
        Self {
            n_trials: total.trials,
            n_correct: total.correct,
            n_insufficient: total.insufficient,
            p_correct: total.p_correct(),
            ci_low,
            ci_high,
            flag_rate: if total.trials == 0 { 0.0 } else { total.flagged as f64 / total.trials as f64 },
            per_class,
        }
    }

    /// Unweighted mean of per-class accuracies.
    pub fn class_averaged(&self) -> f64 {
        if self.per_class.is_empty() {
            return 0.0;
        }
        self.per_class.values().map(Tally::p_correct).sum::<f64>() / self.per_class.len() as f64
    }
}

/// One trial: synthesize with a derived seed, classify, compare access methods.
pub fn run_trial(cfg: &ScenarioConfig, plan: ModulationPlan, master_seed: u64, index: usize, models: &[ClassModel]) -> Result<TrialOutcome> {
    let mut c = cfg.clone();
    c.modulation = trial_modulation(cfg, plan, index);
    c.seed = derive_seed(master_seed, index as u64);
    let scenario = synthesize_scenario(&c)?;
    let params = c.analysis_params(scenario.noise_variance)?;
    let (verdict, flag, insufficient) = match classify_with_models(&scenario.samples, &params, models) {
        Ok(res) => (Some(res.verdict), res.contention, false),
        Err(Error::InsufficientData { .. }) => (None, false, true),
        Err(e) => return Err(e),
    };
    Ok(TrialOutcome {
        truth: scenario.label,
        modulation: c.modulation,
        correct: verdict.is_some_and(|v| v.access_method() == c.method),
        verdict,
        contention_flag: flag,
        insufficient,
    })
}

/// Runs `n_trials` independently seeded trials on the current rayon pool.
/// The result does not depend on the number of threads.
pub fn run_trials(cfg: &ScenarioConfig, plan: ModulationPlan, n_trials: usize, master_seed: u64) -> Result<AccuracyRecord> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    cfg.validate()?;
    let models = class_models(cfg.cdma_users)?;
    let outcomes = (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, plan, master_seed, i, &models))
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyRecord::from_outcomes(&outcomes))
}

/// A network to simulate in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: AccessMethod,
    pub n_total: usize,
    /// Fixed modulation; omitted means averaging over the method's classes.
    #[serde(default)]
    pub modulation: Option<Modulation>,
}

/// Cartesian experiment grid over a base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub methods: Vec<MethodSpec>,
    pub snr_db: Vec<f64>,
    pub load_g: Vec<f64>,
    pub frames: Vec<usize>,
}

/// JSON experiment document: a base scenario, a grid and run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    pub grid: Option<GridSpec>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub modulation: String,
    pub snr_db: f64,
    pub load: f64,
    #[serde(rename = "F")]
    pub f: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub n_trials: usize,
    pub p_correct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Scenario configs of every grid cell, in row order; validates all of
/// them before anything runs.
pub fn grid_cells(base: &ScenarioConfig, grid: &GridSpec) -> Result<Vec<(ScenarioConfig, ModulationPlan)>> {
    if grid.methods.is_empty() || grid.snr_db.is_empty() || grid.load_g.is_empty() || grid.frames.is_empty() {
        return Err(Error::Config("every grid axis needs at least one value".into()));
    }
    let mut cells = Vec::new();
    for m in &grid.methods {
        for &snr in &grid.snr_db {
            for &load in &grid.load_g {
                for &f in &grid.frames {
                    let cfg = ScenarioConfig {
                        method: m.method,
                        n_total: m.n_total,
                        modulation: m.modulation.unwrap_or(base.modulation),
                        snr_db: snr,
                        load_g: load,
                        f,
                        ..base.clone()
                    };
                    cfg.validate()?;
                    let plan = if m.modulation.is_some() { ModulationPlan::Fixed } else { ModulationPlan::ClassAverage };
                    cells.push((cfg, plan));
                }
            }
        }
    }
    Ok(cells)
}

/// Runs every cell of the grid; each cell uses its own derived master seed.
pub fn sweep(base: &ScenarioConfig, grid: &GridSpec, n_trials: usize, master_seed: u64) -> Result<Vec<SweepRow>> {
    let cells = grid_cells(base, grid)?;
    cells
        .iter()
        .enumerate()
        .map(|(k, (cfg, plan))| {
            let rec = run_trials(cfg, *plan, n_trials, derive_seed(master_seed, u64::MAX - k as u64))?;
            Ok(SweepRow {
                method: cfg.method.to_string(),
                modulation: match plan {
                    ModulationPlan::Fixed => cfg.modulation.to_string(),
                    ModulationPlan::ClassAverage => "class-average".to_string(),
                },
                snr_db: cfg.snr_db,
                load: cfg.load_g,
                f: cfg.f,
                j: cfg.j,
                n_trials: rec.n_trials,
                p_correct: rec.p_correct,
                ci_low: rec.ci_low,
                ci_high: rec.ci_high,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Classifies a stored capture using the analysis settings in its sidecar.
/// `noise_variance` replaces the sidecar's noise power when given.
pub fn classify_capture(path: &Path, noise_variance: Option<f64>) -> Result<ClassificationResult> {
    let (samples, meta) = read_capture(path)?;
    let params = meta.config.analysis_params(noise_variance.unwrap_or(meta.noise_variance))?;
    params.validate()?;
    classify_with_models(&samples, &params, &class_models(params.cdma_users)?)
}

/// Synthesizes `count` captures of `cfg` under `plan` into `dir` as
/// `capture_NNNN.iq` plus sidecars; returns the file paths.
pub fn export_captures(cfg: &ScenarioConfig, plan: ModulationPlan, count: usize, master_seed: u64, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    (0..count)
        .map(|i| {
            let mut c = cfg.clone();
            c.modulation = trial_modulation(cfg, plan, i);
            c.seed = derive_seed(master_seed, i as u64);
            let s = synthesize_scenario(&c)?;
            let path = dir.join(format!("capture_{i:04}.iq"));
            let meta = CaptureMeta { label: s.label, noise_variance: s.noise_variance, n_samples: s.samples.len(), config: c };
            write_capture(&path, &s.samples, &meta)?;
            Ok(path)
        })
        .collect()
}
