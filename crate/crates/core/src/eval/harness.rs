//! Evaluation drivers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::corrupt::CorruptionSpec;
use super::metrics::{auc, roc_curve, RocCurve};
use crate::backend::{open_backend, BackendDescriptor, BackendHandle, BackendKind};
use crate::detector::{
    prepare_entry, score_batch_timed, score_prepared, PhaseTimes, ScoreLine, ScoreOptions,
    SkipRecord,
};
use crate::error::{Error, Result};
use crate::image::PreprocessSpec;
use crate::manifest::{DatasetManifest, Label};
use crate::perturb::{PerturbConfig, Perturber};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalOptions {
    pub score: ScoreOptions,
    /// Adds wall-clock `runtime_seconds` to the report, which makes it
    /// non-reproducible byte for byte.
    pub record_runtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub real: usize,
    pub fake: BTreeMap<String, usize>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Each generator's fakes against the full real pool.
    pub per_generator_auc: BTreeMap<String, f64>,
    /// Unweighted mean of `per_generator_auc`.
    pub average_auc: f64,
    pub roc: BTreeMap<String, RocCurve>,
    pub counts: Counts,
    /// Generators listed in the manifest whose fakes were all skipped.
    pub missing_generators: Vec<String>,
    pub skipped: Vec<SkipRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
    pub perturb: PerturbConfig,
    pub backend: BackendDescriptor,
    pub preprocess: PreprocessSpec,
    pub batch_size: usize,
    pub corruption: Option<CorruptionSpec>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

struct Summary {
    per_generator_auc: BTreeMap<String, f64>,
    roc: BTreeMap<String, RocCurve>,
    counts: Counts,
    missing_generators: Vec<String>,
}

/// Per-generator AUC and ROC from already scored lines.
fn summarize(manifest: &DatasetManifest, lines: &[ScoreLine]) -> Result<Summary> {
    let mut real = Vec::new();
    let mut fakes: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut skipped = 0;
    for line in lines {
        match line {
            ScoreLine::Scored(r) => match r.label {
                Some(Label::Real) => real.push(r.score),
                Some(Label::Fake) => fakes
                    .entry(r.generator.clone().unwrap_or_default())
                    .or_default()
                    .push(r.score),
                None => {}
            },
            ScoreLine::Skipped(_) => skipped += 1,
        }
    }
    if real.is_empty() {
        return Err(Error::EmptyClass("real"));
    }
    if fakes.is_empty() {
        return Err(Error::EmptyClass("fake"));
    }
    let mut per_generator = BTreeMap::new();
    let mut roc = BTreeMap::new();
    for (g, scores) in &fakes {
        per_generator.insert(g.clone(), auc(&real, scores)?);
        roc.insert(g.clone(), roc_curve(&real, scores)?);
    }
    let mut missing: Vec<String> = manifest
        .entries()
        .iter()
        .filter(|e| e.label == Label::Fake && !fakes.contains_key(&e.generator))
        .map(|e| e.generator.clone())
        .collect();
    missing.sort();
    missing.dedup();
    let counts = Counts {
        real: real.len(),
        fake: fakes.iter().map(|(g, s)| (g.clone(), s.len())).collect(),
        skipped,
    };
    Ok(Summary {
        per_generator_auc: per_generator,
        roc,
        counts,
        missing_generators: missing,
    })
}

pub fn evaluate(
    manifest: &DatasetManifest,
    cfg: &PerturbConfig,
    backend: &BackendHandle,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if manifest.count(Label::Real) == 0 {
        return Err(Error::EmptyClass("real"));
    }
    if manifest.count(Label::Fake) == 0 {
        return Err(Error::EmptyClass("fake"));
    }
    let start = Instant::now();
    let (lines, _) = score_batch_timed(manifest, cfg, backend.backend(), &opts.score)?;
    let runtime = start.elapsed().as_secs_f64();
    let Summary {
        per_generator_auc,
        roc,
        counts,
        missing_generators,
    } = summarize(manifest, &lines)?;
    let average_auc = per_generator_auc.values().sum::<f64>() / per_generator_auc.len() as f64;
    Ok(EvalReport {
        per_generator_auc,
        average_auc,
        roc,
        counts,
        missing_generators,
        skipped: lines
            .into_iter()
            .filter_map(|l| match l {
                ScoreLine::Skipped(s) => Some(s),
                ScoreLine::Scored(_) => None,
            })
            .collect(),
        runtime_seconds: opts.record_runtime.then_some(runtime),
        perturb: *cfg,
        backend: backend.descriptor().clone(),
        preprocess: opts.score.preprocess,
        batch_size: opts.score.batch_size,
        corruption: opts.score.corruption,
    })
}

/// One evaluation per corruption, applied to real and fake images alike.
pub fn robustness_grid(
    manifest: &DatasetManifest,
    cfg: &PerturbConfig,
    backend: &BackendHandle,
    opts: &EvalOptions,
    specs: &[CorruptionSpec],
) -> Result<Vec<(CorruptionSpec, EvalReport)>> {
    specs
        .iter()
        .map(|spec| {
            let mut o = opts.clone();
            o.score.corruption = Some(*spec);
            Ok((*spec, evaluate(manifest, cfg, backend, &o)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda,
    PatchSize,
    Layer,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::PatchSize => "patch_size",
            SweepAxis::Layer => "layer",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepAxis::Lambda),
            "patch_size" | "patch-size" => Ok(SweepAxis::PatchSize),
            "layer" => Ok(SweepAxis::Layer),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub average_auc: f64,
    pub report: EvalReport,
}

fn as_index(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!(
            "{axis} values must be non-negative integers, got {v}"
        )))
    }
}

/// Re-evaluates with one setting varied and everything else held at `cfg`.
/// All values are validated before any evaluation runs.
pub fn sweep(
    manifest: &DatasetManifest,
    cfg: &PerturbConfig,
    backend: &BackendHandle,
    opts: &EvalOptions,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    let size = opts.score.preprocess.target_size;
    for &v in values {
        match axis {
            SweepAxis::Lambda => PerturbConfig { lambda: v, ..*cfg }.validate()?,
            SweepAxis::PatchSize => {
                let p = as_index(axis, v)?;
                if p == 0 || size % p != 0 {
                    return Err(Error::Config(format!(
                        "patch size {p} does not tile {size}x{size} inputs"
                    )));
                }
            }
            SweepAxis::Layer => {
                let l = as_index(axis, v)?;
                if backend.descriptor().kind == BackendKind::Spectral {
                    return Err(Error::Unsupported(
                        "a layer sweep on the spectral reference".into(),
                    ));
                }
                let layer_count = backend.layer_count().unwrap_or(0);
                if l > layer_count {
                    return Err(Error::LayerOutOfRange {
                        layer: l,
                        layer_count,
                    });
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let report = match axis {
            SweepAxis::Lambda => evaluate(
                manifest,
                &PerturbConfig { lambda: v, ..*cfg },
                backend,
                opts,
            )?,
            SweepAxis::PatchSize => {
                let c = PerturbConfig {
                    patch_size: v as usize,
                    ..*cfg
                };
                evaluate(manifest, &c, backend, opts)?
            }
            SweepAxis::Layer => {
                let desc = backend.descriptor().with_layer(v as usize);
                let handle = open_backend(&desc)?;
                evaluate(manifest, cfg, &handle, opts)?
            }
        };
        rows.push(SweepRow {
            value: v,
            average_auc: report.average_auc,
            report,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// True when no entry could be decoded; all timings are then zero.
    pub empty: bool,
    pub images: usize,
    pub batch_size: usize,
    pub workers: usize,
    /// Wall-clock from model input to scores, excluding decode and resize.
    pub total_seconds: f64,
    pub per_image_seconds: f64,
    /// Phase times summed over workers.
    pub perturb_seconds: f64,
    pub embed_seconds: f64,
    pub similarity_seconds: f64,
}

impl BenchReport {
    pub fn perturb_share(&self) -> f64 {
        let phases = self.perturb_seconds + self.embed_seconds + self.similarity_seconds;
        if phases > 0.0 {
            self.perturb_seconds / phases
        } else {
            0.0
        }
    }
}

/// Times scoring of every decodable entry. Images are decoded and resized up
/// front; one batch is scored untimed as warm-up.
pub fn bench_runtime(
    manifest: &DatasetManifest,
    cfg: &PerturbConfig,
    backend: &BackendHandle,
    opts: &ScoreOptions,
) -> Result<BenchReport> {
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let perturber = Perturber::new(*cfg)?;
    let mut images = Vec::new();
    let mut indices = Vec::new();
    for i in 0..manifest.len() {
        match prepare_entry(manifest, i, opts, cfg.seed) {
            Ok(img) => {
                images.push(img);
                indices.push(i as u64);
            }
            Err(e) => log::warn!("skipping {}: {e}", manifest.entries()[i].path.display()),
        }
    }
    let workers = opts.workers.max(1);
    if images.is_empty() {
        return Ok(BenchReport {
            empty: true,
            images: 0,
            batch_size: opts.batch_size,
            workers,
            total_seconds: 0.0,
            per_image_seconds: 0.0,
            perturb_seconds: 0.0,
            embed_seconds: 0.0,
            similarity_seconds: 0.0,
        });
    }
    let bs = opts.batch_size;
    let warm = bs.min(images.len());
    score_prepared(
        &images[..warm],
        &indices[..warm],
        &perturber,
        backend.backend(),
        &mut PhaseTimes::default(),
    )?;

    let n_batches = images.len().div_ceil(bs);
    let next = AtomicUsize::new(0);
    let times = Mutex::new(PhaseTimes::default());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let start = Instant::now();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n_batches) {
            scope.spawn(|| {
                let mut local = PhaseTimes::default();
                loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= n_batches {
                        break;
                    }
                    let r = b * bs..((b + 1) * bs).min(images.len());
                    if let Err(e) = score_prepared(
                        &images[r.clone()],
                        &indices[r],
                        &perturber,
                        backend.backend(),
                        &mut local,
                    ) {
                        failure.lock().unwrap().get_or_insert(e);
                        next.store(n_batches, Ordering::Relaxed);
                        break;
                    }
                }
                let mut t = times.lock().unwrap();
                t.perturb += local.perturb;
                t.embed += local.embed;
                t.similarity += local.similarity;
            });
        }
    });
    let total = start.elapsed().as_secs_f64();
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let t = times.into_inner().unwrap();
    Ok(BenchReport {
        empty: false,
        images: images.len(),
        batch_size: bs,
        workers,
        total_seconds: total,
        per_image_seconds: total / images.len() as f64,
        perturb_seconds: t.perturb.as_secs_f64(),
        embed_seconds: t.embed.as_secs_f64(),
        similarity_seconds: t.similarity.as_secs_f64(),
    })
}
