//! Dataset ingestion and generation.
//!
//! Images become pure quaternion matrices with red, green and blue on the
//! i, j and k planes, scaled to `[0, 1]` and resized bilinearly to the
//! target size. Manifests are CSV files with a `path,label` header.

use std::path::{Path, PathBuf};

use image::{imageops::FilterType, ColorType, ImageBuffer, ImageReader, Rgb};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Label, QMatrix, Quaternion};

/// Pipeline choices that are echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDecisions {
    pub pixel_scale: String,
    pub resize_filter: String,
    pub noise_model: String,
    pub noise_applied_to: String,
}

impl Default for PipelineDecisions {
    fn default() -> Self {
        PipelineDecisions {
            pixel_scale: "channel / 255".into(),
            resize_filter: "bilinear".into(),
            noise_model: "X + R * std(imaginary entries of X) * N(0, 1), clipped to [0, 1]".into(),
            noise_applied_to: "train and test".into(),
        }
    }
}

/// One labeled quaternion sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: QMatrix,
    pub y: Label,
    pub source_id: String,
}

/// Splits samples into matrices and labels.
pub fn unzip_samples(samples: &[LabeledSample]) -> (Vec<QMatrix>, Vec<Label>) {
    samples.iter().map(|s| (s.x.clone(), s.y)).unzip()
}

/// Deterministic per-index random stream.
pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

// ---------------------------------------------------------------------------
// images

/// Decodes an 8-bit RGB(A) PNG or JPEG into a pure quaternion matrix of
/// `target = (rows, cols)`.
pub fn load_image(path: &Path, target: (usize, usize)) -> Result<QMatrix> {
    let (rows, cols) = target;
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter(format!("target size must be positive, got {rows}x{cols}")));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            message: u.to_string(),
        },
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    match img.color() {
        ColorType::Rgb8 | ColorType::Rgba8 => {}
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                message: format!("expected 8-bit RGB or RGBA, found {other:?}"),
            })
        }
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    if (h as usize, w as usize) == (rows, cols) {
        let plane = |ch: usize| {
            DMatrix::from_fn(rows, cols, |r, c| rgb.get_pixel(c as u32, r as u32)[ch] as f64 / 255.0)
        };
        return QMatrix::pure(plane(0), plane(1), plane(2));
    }
    let float: ImageBuffer<Rgb<f32>, Vec<f32>> = img.to_rgb32f();
    let resized = image::imageops::resize(&float, cols as u32, rows as u32, FilterType::Triangle);
    let plane = |ch: usize| {
        DMatrix::from_fn(rows, cols, |r, c| {
            (resized.get_pixel(c as u32, r as u32)[ch] as f64).clamp(0.0, 1.0)
        })
    };
    QMatrix::pure(plane(0), plane(1), plane(2))
}

/// Writes the imaginary planes of `x` as an 8-bit RGB PNG (clipped to `[0, 1]`).
pub fn save_png(x: &QMatrix, path: &Path) -> Result<()> {
    let (rows, cols) = x.shape();
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let img = ImageBuffer::from_fn(cols as u32, rows as u32, |c, r| {
        let q = x.get(r as usize, c as usize);
        Rgb([to_u8(q.x), to_u8(q.y), to_u8(q.z)])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}

// ---------------------------------------------------------------------------
// manifests

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
    pub target_size: (usize, usize),
}

impl DatasetManifest {
    pub fn has_both_labels(&self) -> bool {
        self.entries.iter().any(|e| e.label == 1) && self.entries.iter().any(|e| e.label == -1)
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: String,
    label: String,
}

/// Parses a manifest without touching the images.
pub fn read_manifest(path: &Path, target: (usize, usize)) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let format_err = |line: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| format_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
        return Err(format_err(1, "header must be `path,label`".into()));
    }
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format_err(line, e.to_string())
        })?;
        let line = entries.len() as u64 + 2;
        let label = match row.label.as_str() {
            "1" => 1,
            "-1" => -1,
            other => {
                return Err(Error::Validation(format!(
                    "{}: line {line}: label must be -1 or 1, got `{other}`",
                    path.display()
                )))
            }
        };
        let p = PathBuf::from(&row.path);
        let resolved = if p.is_absolute() { p } else { base.join(p) };
        entries.push(ManifestEntry { path: resolved, label });
    }
    if entries.is_empty() {
        return Err(Error::Validation(format!("{}: manifest has no entries", path.display())));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatasetManifest {
        name,
        entries,
        target_size: target,
    })
}

/// Parses a manifest and loads every image in manifest order.
pub fn load_manifest(path: &Path, target: (usize, usize)) -> Result<(DatasetManifest, Vec<LabeledSample>)> {
    let manifest = read_manifest(path, target)?;
    let samples = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let x = load_image(&e.path, target).map_err(|err| Error::Entry {
                index: i,
                source: Box::new(err),
            })?;
            Ok(LabeledSample {
                x,
                y: e.label,
                source_id: e.path.display().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Writes `samples` as PNGs plus a `manifest.csv` into `dir`; returns the
/// manifest path.
pub fn export_dataset(dir: &Path, samples: &[LabeledSample]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut out = String::from("path,label\n");
    for (i, s) in samples.iter().enumerate() {
        let name = format!("sample_{i:05}.png");
        save_png(&s.x, &dir.join(&name))?;
        out.push_str(&format!("{name},{}\n", s.y));
    }
    std::fs::write(&manifest, out).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// noise

/// Gaussian noise scaled by a ratio of the image's pixel spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
}

/// Standard deviation of all imaginary-plane entries.
pub fn imaginary_std(x: &QMatrix) -> f64 {
    let values: Vec<f64> = (1..4).flat_map(|k| x.plane(k).iter().copied()).collect();
    let n = values.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `X + R std(X) G` on the imaginary planes, without clipping.
pub fn add_noise_unclipped(x: &QMatrix, spec: NoiseSpec) -> Result<QMatrix> {
    if !(spec.ratio >= 0.0 && spec.ratio.is_finite()) {
        return Err(Error::Parameter(format!("noise ratio must be non-negative, got {}", spec.ratio)));
    }
    let mut out = x.clone();
    if spec.ratio == 0.0 {
        return Ok(out);
    }
    let scale = spec.ratio * imaginary_std(x);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for k in 1..4 {
        for v in out.plane_mut(k).iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += scale * g;
        }
    }
    Ok(out)
}

/// Noisy copy clipped to `[0, 1]`; the real plane is left alone.
pub fn add_noise(x: &QMatrix, spec: NoiseSpec) -> Result<QMatrix> {
    if spec.ratio == 0.0 {
        return Ok(x.clone());
    }
    let mut out = add_noise_unclipped(x, spec)?;
    for k in 1..4 {
        out.plane_mut(k).apply(|v| *v = v.clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Noisy copies of a dataset; sample `i` draws from stream `(seed, i)`.
pub fn add_noise_all(samples: &[LabeledSample], ratio: f64, seed: u64) -> Result<Vec<LabeledSample>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sample_seed: u64 = stream_rng(seed, i as u64).random();
            Ok(LabeledSample {
                x: add_noise(&s.x, NoiseSpec { ratio, seed: sample_seed })?,
                ..s.clone()
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// folds

/// Partitions `0..n` into `k` folds whose sizes differ by at most one.
///
/// With `labels`, each class is shuffled separately and dealt round-robin,
/// so every fold holds each class within one sample of its share.
pub fn kfold_split(n: usize, k: usize, seed: u64, labels: Option<&[Label]>) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("need 2 <= k <= N, got k = {k}, N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match labels {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Some(y) => {
            if y.len() != n {
                return Err(Error::Dimension(format!("{} labels for {n} samples", y.len())));
            }
            let mut classes: Vec<Label> = y.to_vec();
            classes.sort_unstable();
            classes.dedup();
            let mut order = Vec::with_capacity(n);
            for c in classes {
                let mut idx: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
                idx.shuffle(&mut rng);
                order.extend(idx);
            }
            order
        }
    };
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

// ---------------------------------------------------------------------------
// synthetic data

/// Two-class synthetic dataset of low-rank pure quaternion means plus
/// Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub per_class: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.per_class == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::Parameter("synthetic dataset dimensions must be positive".into()));
        }
        if self.rank == 0 || self.rank > self.rows.min(self.cols) {
            return Err(Error::Parameter(format!(
                "rank must be in 1..={}, got {}",
                self.rows.min(self.cols),
                self.rank
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Seeds of the `-1` and `+1` class means.
    pub fn class_seeds(&self) -> [u64; 2] {
        [stream_rng(self.seed, 0).random(), stream_rng(self.seed, 1).random()]
    }
}

/// Pure rank-`rank` matrix `(1 / rank) sum_k a_k (b_k^T p_k)` with entries of
/// `a_k`, `b_k` and the imaginary parts of `p_k` uniform on `[0, 1]`; every
/// plane entry stays in `[0, 1]`.
pub fn lowrank_mean(rows: usize, cols: usize, rank: usize, seed: u64) -> QMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = QMatrix::zeros(rows, cols);
    let w = 1.0 / rank as f64;
    for _ in 0..rank {
        let a: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..cols).map(|_| rng.random()).collect();
        let p = Quaternion::new(0.0, rng.random(), rng.random(), rng.random());
        for (k, pk) in [(1, p.x), (2, p.y), (3, p.z)] {
            let plane = out.plane_mut(k);
            for c in 0..cols {
                for r in 0..rows {
                    plane[(r, c)] += w * a[r] * b[c] * pk;
                }
            }
        }
    }
    out
}

fn noisy_copy(mean: &QMatrix, sigma: f64, rng: &mut ChaCha8Rng) -> QMatrix {
    let mut x = mean.clone();
    if sigma > 0.0 {
        for k in 1..4 {
            for v in x.plane_mut(k).iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v += sigma * g;
            }
        }
    }
    x
}

/// Samples around the given class means (`[negative, positive]`),
/// interleaved `-1, +1, -1, +1, ...`.
pub fn synth_around(spec: &SynthSpec, means: [&QMatrix; 2]) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let noise_seed: u64 = stream_rng(spec.seed, 2).random();
    let mut out = Vec::with_capacity(2 * spec.per_class);
    for i in 0..2 * spec.per_class {
        let (class, y) = if i % 2 == 0 { (0, -1) } else { (1, 1) };
        let mut rng = stream_rng(noise_seed, i as u64);
        out.push(LabeledSample {
            x: noisy_copy(means[class], spec.sigma, &mut rng),
            y,
            source_id: format!("synth-{}-{i}", spec.seed),
        });
    }
    Ok(out)
}

/// Two classes with independent low-rank means.
pub fn synth_lowrank(spec: &SynthSpec) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let [s_neg, s_pos] = spec.class_seeds();
    synth_with_class_seeds(spec, [s_neg, s_pos])
}

/// [`synth_lowrank`] with explicit class-mean seeds.
pub fn synth_with_class_seeds(spec: &SynthSpec, seeds: [u64; 2]) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let neg = lowrank_mean(spec.rows, spec.cols, spec.rank, seeds[0]);
    let pos = lowrank_mean(spec.rows, spec.cols, spec.rank, seeds[1]);
    synth_around(spec, [&neg, &pos])
}

/// Two classes that share one low-rank base image and differ only by
/// `+-contrast / 2` times a unit-norm rank-one pure pattern.
pub fn synth_contrast(spec: &SynthSpec, contrast: f64) -> Result<Vec<LabeledSample>> {
    spec.validate()?;
    let [s_base, s_pattern] = spec.class_seeds();
    let base = lowrank_mean(spec.rows, spec.cols, spec.rank, s_base);
    let mut pattern = lowrank_mean(spec.rows, spec.cols, 1, s_pattern);
    // center the pattern so the classes differ in structure, not brightness
    for k in 1..4 {
        let mean = pattern.plane(k).mean();
        pattern.plane_mut(k).apply(|v| *v -= mean);
    }
    let pattern = pattern.scale(0.5 * contrast / pattern.fro_norm().max(1e-300));
    let neg = base.sub(&pattern)?;
    let pos = base.add(&pattern)?;
    synth_around(spec, [&neg, &pos])
}
