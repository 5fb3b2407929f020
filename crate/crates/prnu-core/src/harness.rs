//! Experiment runner: builds sensor datasets (from image directories or the
//! synthetic simulator), estimates galleries, and reproduces the evaluation
//! protocols — identification confusion matrices, spoof success rates, and
//! iteration studies — with seed-deterministic results.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::DenoiseParams;
use crate::error::{Error, Result};
use crate::fingerprint::{
    classify_residual, estimate_reference_mode, NCCScore, PostprocessMode, ReferencePattern,
    SensorGallery,
};
use crate::image::Image;

use crate::seeds::stream_seed;
use crate::spoof::{
    baseline1_inject, baseline2_substitute, baseline_denoised_inject, perturb_with_options,
    select_candidate, PerturbParams, SpoofOptions, SpoofResult,
};
use crate::synth::{make_scene_bank, SyntheticSensor};

/// Where a sensor's images come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    Synthetic,
    Directory,
}

/// One sensor entry of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub id: String,
    pub kind: SensorKind,
    /// Image directory (`kind = "directory"` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Response-field seed; derived from the experiment seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_noise_sigma: Option<f64>,
    /// Capture resolution when it differs from the working resolution;
    /// captures are resized down by the harness like any other input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_width: Option<usize>,
    /// Regex with one capture group extracting a subject label from file
    /// names (`kind = "directory"`). When set, the train/test split must be
    /// subject-disjoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_pattern: Option<String>,
}

impl SensorSpec {
    /// Synthetic sensor at the working resolution with default physics.
    pub fn synthetic(id: &str) -> Self {
        SensorSpec {
            id: id.to_string(),
            kind: SensorKind::Synthetic,
            dir: None,
            seed: None,
            strength: None,
            read_noise_sigma: None,
            native_height: None,
            native_width: None,
            subject_pattern: None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            SensorKind::Directory => {
                if self.dir.is_none() {
                    return Err(Error::InvalidParams(format!(
                        "sensor {:?}: directory sensors need a `dir`",
                        self.id
                    )));
                }
            }
            SensorKind::Synthetic => {
                if self.dir.is_some() {
                    return Err(Error::InvalidParams(format!(
                        "sensor {:?}: synthetic sensors take no `dir`",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

pub const DEFAULT_STRENGTH: f64 = 0.02;
pub const DEFAULT_READ_NOISE: f64 = 2.0;

/// Full experiment description; the TOML config maps onto this.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub sensors: Vec<SensorSpec>,
    /// Training images per sensor (the leading block of each dataset).
    pub train_count: usize,
    /// Test images per sensor.
    pub test_count: usize,
    pub working_height: usize,
    pub working_width: usize,
    /// Master seed; all stochastic behavior derives from it.
    pub seed: u64,
    /// Candidate-gallery size for the proposed attack; defaults to the
    /// target sensor's full test set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_gallery_size: Option<usize>,
    pub save_trajectories: bool,
    pub postprocess: PostprocessMode,
    pub denoise: DenoiseParams,
    pub perturb: PerturbParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sensors: Vec::new(),
            train_count: 55,
            test_count: 100,
            working_height: 120,
            working_width: 160,
            seed: 0,
            candidate_gallery_size: None,
            save_trajectories: false,
            postprocess: PostprocessMode::FinalPattern,
            denoise: DenoiseParams::default(),
            perturb: PerturbParams::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn working_dims(&self) -> (usize, usize) {
        (self.working_height, self.working_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 {
            return Err(Error::InvalidParams("train_count must be at least 1".into()));
        }
        if self.working_height == 0 || self.working_width == 0 {
            return Err(Error::InvalidParams("working dims must be positive".into()));
        }
        self.denoise.validate()?;
        for spec in &self.sensors {
            spec.validate()?;
        }
        for (i, spec) in self.sensors.iter().enumerate() {
            if self.sensors[..i].iter().any(|s| s.id == spec.id) {
                return Err(Error::DuplicateSensorId(spec.id.clone()));
            }
        }
        Ok(())
    }
}

/// A sensor's materialized images at working resolution.
#[derive(Debug, Clone)]
pub struct SensorDataset {
    pub id: String,
    pub train: Vec<Image>,
    pub test: Vec<Image>,
    /// Ground truth when the sensor is synthetic.
    pub truth: Option<SyntheticSensor>,
}

/// Require that no subject contributes to both sides of the train/test
/// split. Subjects come from the first capture group of `pattern` applied
/// to each file name.
fn check_subject_disjoint(
    spec: &SensorSpec,
    paths: &[std::path::PathBuf],
    pattern: &str,
    train_count: usize,
) -> Result<()> {
    let re = regex::Regex::new(pattern).map_err(|e| {
        Error::InvalidParams(format!("sensor {:?}: bad subject_pattern: {e}", spec.id))
    })?;
    let subject_of = |path: &std::path::Path| -> Result<String> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let caps = re.captures(&name).ok_or_else(|| {
            Error::InvalidParams(format!(
                "sensor {:?}: file {name:?} does not match the subject pattern",
                spec.id
            ))
        })?;
        let group = caps.get(1).ok_or_else(|| {
            Error::InvalidParams(format!(
                "sensor {:?}: subject_pattern needs one capture group",
                spec.id
            ))
        })?;
        Ok(group.as_str().to_string())
    };
    let mut train_subjects = std::collections::BTreeSet::new();
    for path in paths.iter().take(train_count) {
        train_subjects.insert(subject_of(path)?);
    }
    for path in paths.iter().skip(train_count) {
        let subject = subject_of(path)?;
        if train_subjects.contains(&subject) {
            return Err(Error::InvalidParams(format!(
                "sensor {:?}: subject {subject:?} appears in both train and test splits",
                spec.id
            )));
        }
    }
    Ok(())
}

/// Load or generate every sensor's images and bring them to working
/// resolution. Training images are the first `train_count` of each sensor,
/// test images the next `test_count` (fewer if a directory runs short).
pub fn materialize(config: &ExperimentConfig) -> Result<Vec<SensorDataset>> {
    config.validate()?;
    let (wh, ww) = config.working_dims();
    config
        .sensors
        .iter()
        .enumerate()
        .map(|(idx, spec)| {
            let (images, truth) = match spec.kind {
                SensorKind::Directory => {
                    let dir = spec.dir.as_ref().expect("validated");
                    let paths = crate::imageio::list_image_paths(dir)?;
                    if let Some(pattern) = &spec.subject_pattern {
                        check_subject_disjoint(spec, &paths, pattern, config.train_count)?;
                    }
                    let loaded = paths
                        .iter()
                        .map(|p| crate::imageio::load_image(p, None))
                        .collect::<Result<Vec<_>>>()?;
                    (loaded, None)
                }
                SensorKind::Synthetic => {
                    let total = config.train_count + config.test_count;
                    let native = (
                        spec.native_height.unwrap_or(wh),
                        spec.native_width.unwrap_or(ww),
                    );
                    let field_seed = spec
                        .seed
                        .unwrap_or_else(|| stream_seed(config.seed, "sensor-field", idx as u64));
                    let sensor = SyntheticSensor::new(
                        &spec.id,
                        native.0,
                        native.1,
                        spec.strength.unwrap_or(DEFAULT_STRENGTH),
                        spec.read_noise_sigma.unwrap_or(DEFAULT_READ_NOISE),
                        field_seed,
                    )?;
                    let scenes = make_scene_bank(
                        total,
                        native,
                        stream_seed(config.seed, "scenes", idx as u64),
                    );
                    let shots = scenes
                        .par_iter()
                        .enumerate()
                        .map(|(i, scene)| sensor.capture(scene, i as u64))
                        .collect::<Result<Vec<_>>>()?;
                    (shots, Some(sensor))
                }
            };
            let resized: Vec<Image> = images
                .par_iter()
                .map(|img| img.resize_bilinear(wh, ww))
                .collect::<Result<Vec<_>>>()?;
            let train: Vec<Image> = resized.iter().take(config.train_count).cloned().collect();
            let test: Vec<Image> = resized
                .into_iter()
                .skip(config.train_count)
                .take(config.test_count)
                .collect();
            Ok(SensorDataset {
                id: spec.id.clone(),
                train,
                test,
                truth,
            })
        })
        .collect()
}

/// Estimate every sensor's reference pattern from its training images.
pub fn build_gallery(config: &ExperimentConfig, datasets: &[SensorDataset]) -> Result<SensorGallery> {
    let patterns = datasets
        .iter()
        .map(|ds| {
            if ds.train.is_empty() {
                return Err(Error::InsufficientImages {
                    id: ds.id.clone(),
                    needed: config.train_count,
                    found: 0,
                });
            }
            estimate_reference_mode(&ds.train, &config.denoise, &ds.id, config.postprocess)
        })
        .collect::<Result<Vec<ReferencePattern>>>()?;
    SensorGallery::new(patterns)
}

/// Sensor-identification results in confusion-matrix form: rows are true
/// sensors, columns predictions, plus per-row accuracy percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub accuracies: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn overall_accuracy(&self) -> f64 {
        let correct: usize = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        let total: usize = self.counts.iter().flatten().sum();
        if total == 0 {
            0.0
        } else {
            100.0 * correct as f64 / total as f64
        }
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    /// Aligned table in the style of a published confusion matrix.
    pub fn render_text(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(4)
            .max(6);
        let mut out = String::new();
        out.push_str(&format!("{:<w$} ", "actual", w = width));
        for label in &self.labels {
            out.push_str(&format!("{label:>w$} ", w = width));
        }
        out.push_str(&format!("{:>9}\n", "acc(%)"));
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(&format!("{label:<w$} ", w = width));
            for count in &self.counts[i] {
                out.push_str(&format!("{count:>w$} ", w = width));
            }
            out.push_str(&format!("{:>9.2}\n", self.accuracies[i]));
        }
        out.push_str(&format!("overall accuracy: {:.2}%\n", self.overall_accuracy()));
        out
    }
}

/// Run the identification protocol: estimate a gallery from training
/// images, classify every test image, and tabulate.
pub fn run_identification(config: &ExperimentConfig) -> Result<ConfusionMatrix> {
    if config.sensors.len() < 2 {
        return Err(Error::InvalidParams(
            "identification needs at least 2 sensors".into(),
        ));
    }
    let datasets = materialize(config)?;
    for ds in &datasets {
        if ds.train.len() < config.train_count || ds.test.is_empty() {
            return Err(Error::InsufficientImages {
                id: ds.id.clone(),
                needed: config.train_count + 1,
                found: ds.train.len() + ds.test.len(),
            });
        }
    }
    let gallery = build_gallery(config, &datasets)?;
    let labels: Vec<String> = datasets.iter().map(|ds| ds.id.clone()).collect();

    let mut counts = vec![vec![0usize; labels.len()]; labels.len()];
    for (row, ds) in datasets.iter().enumerate() {
        let predictions: Vec<String> = ds
            .test
            .par_iter()
            .map(|img| {
                let res = crate::denoise::residual(img, &config.denoise)?;
                Ok(classify_residual(&res, &gallery)?.0)
            })
            .collect::<Result<Vec<_>>>()?;
        for predicted in predictions {
            let col = labels
                .iter()
                .position(|l| *l == predicted)
                .expect("prediction comes from the gallery");
            counts[row][col] += 1;
        }
    }
    let accuracies = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                100.0 * row[i] as f64 / total as f64
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        labels,
        counts,
        accuracies,
    })
}

/// The attack used in a spoofing experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpoofMethod {
    /// Candidate selection plus iterative patch perturbation.
    Proposed,
    /// One-shot multiplicative pattern injection.
    Baseline1,
    /// One-shot pattern substitution with peak normalization.
    Baseline2,
    /// Injection onto the denoised image.
    DenoisedInject,
}

impl std::fmt::Display for SpoofMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SpoofMethod::Proposed => "proposed",
            SpoofMethod::Baseline1 => "baseline1",
            SpoofMethod::Baseline2 => "baseline2",
            SpoofMethod::DenoisedInject => "denoised-inject",
        };
        f.write_str(name)
    }
}

/// Per-image outcome inside an [`SSRReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerImageOutcome {
    pub index: usize,
    pub predicted: String,
    pub psnr_db: f64,
    /// Iterations consumed (proposed method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_used: Option<usize>,
    /// Whether the relative-difference criterion fired (proposed only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion_met: Option<bool>,
}

/// Spoof-success-rate report for one source -> target pair and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSRReport {
    pub source_id: String,
    pub target_id: String,
    pub method: SpoofMethod,
    pub n_attempted: usize,
    pub n_classified_as_target: usize,
    /// Percentage in `[0, 100]`, exactly
    /// `100 * n_classified_as_target / n_attempted`.
    pub ssr: f64,
    pub per_image: Vec<PerImageOutcome>,
}

impl SSRReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{} -> {} [{}]: {} / {} spoofed, SSR {:.2}%\n",
            self.source_id,
            self.target_id,
            self.method,
            self.n_classified_as_target,
            self.n_attempted,
            self.ssr,
        );
        let median = median_psnr(self.per_image.iter().map(|o| o.psnr_db));
        out.push_str(&format!("median PSNR: {median:.2} dB\n"));
        out
    }

    pub fn median_psnr(&self) -> f64 {
        median_psnr(self.per_image.iter().map(|o| o.psnr_db))
    }
}

fn median_psnr(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("PSNR values are ordered"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Full per-image artifacts of a spoof run, for invariant checks and
/// trajectory export.
#[derive(Debug, Clone)]
pub struct SpoofDetail {
    pub index: usize,
    pub input: Image,
    pub perturbed: Image,
    pub scores: Vec<NCCScore>,
    /// Populated for the proposed method only.
    pub result: Option<SpoofResult>,
}

/// Peak signal-to-noise ratio in dB; identical images give infinity.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let (h, w) = a.dims();
    b.expect_dims(h, w)?;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels().iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / (h * w) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Attack every test image of `source_id` toward `target_id` with `method`,
/// classify the outputs against the full gallery, and tabulate the SSR.
pub fn run_spoof_experiment(
    config: &ExperimentConfig,
    source_id: &str,
    target_id: &str,
    method: SpoofMethod,
) -> Result<SSRReport> {
    run_spoof_experiment_detailed(config, source_id, target_id, method).map(|(report, _)| report)
}

/// [`run_spoof_experiment`] plus per-image artifacts.
pub fn run_spoof_experiment_detailed(
    config: &ExperimentConfig,
    source_id: &str,
    target_id: &str,
    method: SpoofMethod,
) -> Result<(SSRReport, Vec<SpoofDetail>)> {
    let datasets = materialize(config)?;
    let gallery = build_gallery(config, &datasets)?;
    let source_pattern = gallery.get(source_id)?.clone();
    let target_pattern = gallery.get(target_id)?.clone();
    let source_ds = datasets
        .iter()
        .find(|ds| ds.id == source_id)
        .ok_or_else(|| Error::UnknownSensor(source_id.to_string()))?;
    let target_ds = datasets
        .iter()
        .find(|ds| ds.id == target_id)
        .ok_or_else(|| Error::UnknownSensor(target_id.to_string()))?;
    if source_ds.test.is_empty() {
        return Err(Error::NothingToAttack);
    }
    let candidate_count = config
        .candidate_gallery_size
        .unwrap_or(target_ds.test.len())
        .min(target_ds.test.len());
    let candidates = &target_ds.test[..candidate_count];
    if method == SpoofMethod::Proposed && candidates.is_empty() {
        return Err(Error::EmptyGallery);
    }

    let details: Vec<SpoofDetail> = source_ds
        .test
        .par_iter()
        .enumerate()
        .map(|(index, input)| -> Result<SpoofDetail> {
            let (perturbed, result) = match method {
                SpoofMethod::Proposed => {
                    let mut patch = config.perturb.patch.clone();
                    patch.rng_seed = stream_seed(config.seed, "candidate-patches", index as u64);
                    let (candidate, _) = select_candidate(input, candidates, &patch)?;
                    let mut params = config.perturb.clone();
                    params.patch = patch;
                    params.rng_seed = stream_seed(config.seed, "perturb-patches", index as u64);
                    let result = perturb_with_options(
                        input,
                        &candidate,
                        &source_pattern,
                        &target_pattern,
                        &params,
                        &config.denoise,
                        SpoofOptions {
                            record_trajectory: config.save_trajectories,
                        },
                    )?;
                    (result.perturbed.clone(), Some(result))
                }
                SpoofMethod::Baseline1 => (baseline1_inject(input, &target_pattern, 1.0)?, None),
                SpoofMethod::Baseline2 => (
                    baseline2_substitute(input, &source_pattern, &target_pattern, 1.0, 1.0)?,
                    None,
                ),
                SpoofMethod::DenoisedInject => (
                    baseline_denoised_inject(input, &target_pattern, 1.0, &config.denoise)?,
                    None,
                ),
            };
            let res = crate::denoise::residual(&perturbed, &config.denoise)?;
            let (_, scores) = classify_residual(&res, &gallery)?;
            Ok(SpoofDetail {
                index,
                input: input.clone(),
                perturbed,
                scores,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_image: Vec<PerImageOutcome> = details
        .iter()
        .map(|d| {
            // first maximum wins, matching the classifier's tie rule
            let mut best = 0;
            for (i, s) in d.scores.iter().enumerate() {
                if s.value > d.scores[best].value {
                    best = i;
                }
            }
            Ok(PerImageOutcome {
                index: d.index,
                predicted: d.scores[best].sensor_id.clone(),
                psnr_db: psnr(&d.input, &d.perturbed)?,
                iterations_used: d.result.as_ref().map(|r| r.iterations_used),
                criterion_met: d.result.as_ref().map(|r| r.succeeded),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_attempted = per_image.len();
    let n_hit = per_image
        .iter()
        .filter(|o| o.predicted == target_id)
        .count();
    let report = SSRReport {
        source_id: source_id.to_string(),
        target_id: target_id.to_string(),
        method,
        n_attempted,
        n_classified_as_target: n_hit,
        ssr: 100.0 * n_hit as f64 / n_attempted as f64,
        per_image,
    };
    Ok((report, details))
}

/// Rerun the proposed attack at increasing iteration budgets with identical
/// per-image seed streams, so each run's visited-patch sequence is a prefix
/// of the next run's.
pub fn run_iteration_study(
    config: &ExperimentConfig,
    source_id: &str,
    target_id: &str,
    m_values: &[usize],
) -> Result<Vec<SSRReport>> {
    if m_values.is_empty() {
        return Err(Error::InvalidParams("m_values must be non-empty".into()));
    }
    if m_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParams(
            "m_values must be sorted ascending".into(),
        ));
    }
    m_values
        .iter()
        .map(|&m| {
            let mut cfg = config.clone();
            cfg.perturb.max_iters = m;
            run_spoof_experiment(&cfg, source_id, target_id, SpoofMethod::Proposed)
        })
        .collect()
}
