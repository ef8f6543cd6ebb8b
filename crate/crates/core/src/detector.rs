//! The detection score and batch scoring.
//!
//! `S(x) = cos(f(x), f(x + delta))`. Higher scores mean the embedding barely
//! moved, which is the signature of a generated image; [`classify`] flags
//! `S >= threshold` as fake.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Embedding};
use crate::error::{Error, Result};
use crate::eval::corrupt::{apply_corruption, CorruptionSpec};
use crate::image::{load_image, preprocess, ImageTensor, PreprocessSpec};
use crate::manifest::{DatasetManifest, Label};
use crate::perturb::{PerturbConfig, Perturber};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
    pub label: Option<Label>,
    pub generator: Option<String>,
}

/// An entry that could not be decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub skip: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreLine {
    Scored(ScoreRecord),
    Skipped(SkipRecord),
}

impl ScoreLine {
    pub fn scored(&self) -> Option<&ScoreRecord> {
        match self {
            ScoreLine::Scored(r) => Some(r),
            ScoreLine::Skipped(_) => None,
        }
    }
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Scores one preprocessed image; `image_index` keys its perturbation.
pub fn score(
    x: &ImageTensor,
    perturber: &Perturber,
    backend: &dyn Backend,
    image_index: u64,
) -> Result<f64> {
    let perturbed = perturber.perturb(x, image_index)?;
    let clean = backend.embed(x)?;
    let moved = backend.embed(&perturbed)?;
    cosine_similarity(&clean, &moved)
}

/// Scores a single preprocessed image as image 0.
pub fn score_image(
    x: &ImageTensor,
    cfg: &PerturbConfig,
    backend: &dyn Backend,
) -> Result<ScoreRecord> {
    let perturber = Perturber::new(*cfg)?;
    Ok(ScoreRecord {
        id: String::new(),
        score: score(x, &perturber, backend, 0)?,
        label: None,
        generator: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOptions {
    pub batch_size: usize,
    pub workers: usize,
    pub preprocess: PreprocessSpec,
    /// Applied after resizing and before perturbation.
    pub corruption: Option<CorruptionSpec>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            batch_size: 8,
            workers: 1,
            preprocess: PreprocessSpec::default(),
            corruption: None,
        }
    }
}

/// Time spent in each scoring phase, summed over workers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub perturb: Duration,
    pub embed: Duration,
    pub similarity: Duration,
}

impl PhaseTimes {
    fn add(&mut self, other: &PhaseTimes) {
        self.perturb += other.perturb;
        self.embed += other.embed;
        self.similarity += other.similarity;
    }

    pub fn total(&self) -> Duration {
        self.perturb + self.embed + self.similarity
    }
}

/// Scores already-preprocessed images in batches. `indices[i]` keys the
/// perturbation of `images[i]`.
pub fn score_prepared(
    images: &[ImageTensor],
    indices: &[u64],
    perturber: &Perturber,
    backend: &dyn Backend,
    times: &mut PhaseTimes,
) -> Result<Vec<f64>> {
    assert_eq!(images.len(), indices.len());
    let t = Instant::now();
    let perturbed = images
        .iter()
        .zip(indices)
        .map(|(x, &i)| perturber.perturb(x, i))
        .collect::<Result<Vec<_>>>()?;
    times.perturb += t.elapsed();

    let t = Instant::now();
    let clean = backend.embed_batch(images)?;
    let moved = backend.embed_batch(&perturbed)?;
    times.embed += t.elapsed();

    let t = Instant::now();
    let scores = clean
        .iter()
        .zip(&moved)
        .map(|(a, b)| cosine_similarity(a, b))
        .collect::<Result<Vec<_>>>()?;
    times.similarity += t.elapsed();
    Ok(scores)
}

fn is_skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::Decode { .. } | Error::UnsupportedFormat(_) | Error::Io(_)
    )
}

/// Decodes, resizes and optionally corrupts manifest entry `index`.
pub fn prepare_entry(
    manifest: &DatasetManifest,
    index: usize,
    opts: &ScoreOptions,
    seed: u64,
) -> Result<ImageTensor> {
    let entry = &manifest.entries()[index];
    let img = load_image(manifest.resolve(entry))?;
    let img = preprocess(&img, &opts.preprocess);
    Ok(match &opts.corruption {
        Some(spec) => apply_corruption(&img, spec, seed, index as u64),
        None => img,
    })
}

/// Scores every entry of `manifest` in order.
///
/// Undecodable entries yield [`ScoreLine::Skipped`]. Batches are formed from
/// consecutive manifest entries and each image's perturbation is keyed by its
/// manifest index, so the output does not depend on the worker count.
pub fn score_batch(
    manifest: &DatasetManifest,
    cfg: &PerturbConfig,
    backend: &dyn Backend,
    opts: &ScoreOptions,
) -> Result<Vec<ScoreLine>> {
    Ok(score_batch_timed(manifest, cfg, backend, opts)?.0)
}

pub fn score_batch_timed(
    manifest: &DatasetManifest,
    cfg: &PerturbConfig,
    backend: &dyn Backend,
    opts: &ScoreOptions,
) -> Result<(Vec<ScoreLine>, PhaseTimes)> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest(manifest.base_dir().to_path_buf()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let perturber = Perturber::new(*cfg)?;
    let batch_size = opts.batch_size;
    let n_batches = manifest.len().div_ceil(batch_size);
    let workers = opts.workers.clamp(1, n_batches);

    let slots: Mutex<Vec<Option<Result<Vec<ScoreLine>>>>> =
        Mutex::new((0..n_batches).map(|_| None).collect());
    let times = Mutex::new(PhaseTimes::default());
    let next = AtomicUsize::new(0);

    let run_batch = |b: usize, local: &mut PhaseTimes| -> Result<Vec<ScoreLine>> {
        let range = b * batch_size..((b + 1) * batch_size).min(manifest.len());
        let mut lines: Vec<Option<ScoreLine>> = Vec::with_capacity(range.len());
        let mut images = Vec::new();
        let mut indices = Vec::new();
        for i in range.clone() {
            let entry = &manifest.entries()[i];
            match prepare_entry(manifest, i, opts, cfg.seed) {
                Ok(img) => {
                    images.push(img);
                    indices.push(i as u64);
                    lines.push(None);
                }
                Err(e) if is_skippable(&e) => {
                    log::warn!("skipping {}: {e}", entry.path.display());
                    lines.push(Some(ScoreLine::Skipped(SkipRecord {
                        id: entry.path.display().to_string(),
                        skip: e.to_string(),
                    })));
                }
                Err(e) => return Err(e),
            }
        }
        let scores = score_prepared(&images, &indices, &perturber, backend, local)?;
        let mut scores = scores.into_iter().zip(indices);
        Ok(lines
            .into_iter()
            .map(|line| {
                line.unwrap_or_else(|| {
                    let (s, i) = scores.next().expect("one score per decoded image");
                    let entry = &manifest.entries()[i as usize];
                    ScoreLine::Scored(ScoreRecord {
                        id: entry.path.display().to_string(),
                        score: s,
                        label: Some(entry.label),
                        generator: Some(entry.generator.clone()),
                    })
                })
            })
            .collect())
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut local = PhaseTimes::default();
                loop {
                    let b = next.fetch_add(1, Ordering::Relaxed);
                    if b >= n_batches {
                        break;
                    }
                    let result = run_batch(b, &mut local);
                    let failed = result.is_err();
                    slots.lock().unwrap()[b] = Some(result);
                    if failed {
                        // Stop handing out work; earlier batches still finish.
                        next.store(n_batches, Ordering::Relaxed);
                        break;
                    }
                }
                times.lock().unwrap().add(&local);
            });
        }
    });

    let mut out = Vec::with_capacity(manifest.len());
    for slot in slots.into_inner().unwrap() {
        match slot {
            Some(Ok(lines)) => out.extend(lines),
            Some(Err(e)) => return Err(e),
            // Only reachable after an earlier failure was recorded.
            None => continue,
        }
    }
    Ok((out, times.into_inner().unwrap()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub threshold: f64,
}

/// `fake` iff `score >= threshold`.
pub fn classify(records: &[ScoreRecord], policy: &DecisionPolicy) -> Result<Vec<Label>> {
    if !policy.threshold.is_finite() {
        return Err(Error::Config("decision threshold must be finite".into()));
    }
    Ok(records
        .iter()
        .map(|r| {
            if r.score >= policy.threshold {
                Label::Fake
            } else {
                Label::Real
            }
        })
        .collect())
}
