//! AR-style dataset handling and a seeded synthetic occluded-face generator.
//!
//! AR files are named `{gender}-{person}-{index}.{ext}`, e.g. `m-001-01.bmp`.
//! Indices 1-7 and 14-20 are unobstructed training shots, 8-13 and 21-26 the
//! test shots.

use std::f64::consts::PI;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::LabeledImage;
use crate::raster::{load_image, write_pgm, Raster};

pub const TRAIN_IDS: [u32; 14] = [1, 2, 3, 4, 5, 6, 7, 14, 15, 16, 17, 18, 19, 20];
pub const TEST_IDS: [u32; 12] = [8, 9, 10, 11, 12, 13, 21, 22, 23, 24, 25, 26];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn code(self) -> char {
        match self {
            Gender::Male => 'm',
            Gender::Female => 'w',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMeta {
    pub gender: Gender,
    pub person: u32,
    pub img_idx: u32,
    /// `"{gender}-{person:03}"`
    pub label: String,
}

impl SampleMeta {
    pub fn new(gender: Gender, person: u32, img_idx: u32) -> Self {
        SampleMeta {
            gender,
            person,
            img_idx,
            label: format!("{}-{:03}", gender.code(), person),
        }
    }

    /// File stem in AR convention, `m-001-01`.
    pub fn stem(&self) -> String {
        format!("{}-{:02}", self.label, self.img_idx)
    }

    pub fn is_train(&self) -> bool {
        TRAIN_IDS.contains(&self.img_idx)
    }
}

/// Parses an AR-convention filename. Only the stem is inspected, so any
/// extension is accepted.
pub fn parse_filename(name: &str) -> Result<SampleMeta> {
    let err = |component: &'static str, reason: String| Error::Filename {
        name: name.to_string(),
        component,
        reason,
    };
    let base = Path::new(name)
        .file_name()
        .and_then(|f| f.to_str())
        .unwrap_or(name);
    let stem = base.split('.').next().unwrap_or(base);
    let parts: Vec<&str> = stem.split('-').collect();
    let [g, p, i] = parts[..] else {
        return Err(err(
            "layout",
            format!("expected gender-person-index, found {} fields", parts.len()),
        ));
    };
    let gender = match g {
        "m" => Gender::Male,
        "w" => Gender::Female,
        other => return Err(err("gender", format!("{other:?} is not 'm' or 'w'"))),
    };
    let person: u32 = p
        .parse()
        .ok()
        .filter(|&v| v >= 1)
        .ok_or_else(|| err("person", format!("{p:?} is not a positive integer")))?;
    let img_idx: u32 = i
        .parse()
        .ok()
        .filter(|v| (1..=26).contains(v))
        .ok_or_else(|| err("index", format!("{i:?} is not in 1..=26")))?;
    Ok(SampleMeta::new(gender, person, img_idx))
}

/// Splits samples into (train, test), each sorted by label then index.
pub fn split(mut samples: Vec<SampleMeta>) -> (Vec<SampleMeta>, Vec<SampleMeta>) {
    samples.sort_by(|a, b| (&a.label, a.img_idx).cmp(&(&b.label, b.img_idx)));
    samples.into_iter().partition(SampleMeta::is_train)
}

/// Which side of the split to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Train,
    Test,
    All,
}

impl Selection {
    fn keeps(self, meta: &SampleMeta) -> bool {
        match self {
            Selection::Train => meta.is_train(),
            Selection::Test => !meta.is_train(),
            Selection::All => true,
        }
    }
}

#[derive(Debug, Default)]
pub struct LoadedSet {
    pub samples: Vec<LabeledImage>,
    /// Files whose names do not follow the AR convention.
    pub skipped: Vec<String>,
}

/// Loads every AR-named image in `dir` (non-recursive) on the selected side
/// of the split, ordered by label then index.
pub fn load_directory(dir: &Path, selection: Selection) -> Result<LoadedSet> {
    let mut entries: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();

    let mut set = LoadedSet::default();
    let mut keep = Vec::new();
    for path in entries.into_iter().filter(|p| p.is_file()) {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match parse_filename(name) {
            Ok(meta) if selection.keeps(&meta) => keep.push((meta, path)),
            Ok(_) => {}
            Err(_) => set.skipped.push(name.to_string()),
        }
    }
    keep.sort_by(|(a, _), (b, _)| (&a.label, a.img_idx).cmp(&(&b.label, b.img_idx)));
    for (meta, path) in keep {
        set.samples.push(LabeledImage {
            id: meta.stem(),
            image: load_image(&path)?,
            label: meta.label,
        });
    }
    Ok(set)
}

/// Parameters of the synthetic face model.
///
/// Every class owns `subspace_dim` basis images; an image is a random convex
/// combination of its class basis plus Gaussian noise, clipped to `[0, 1]`.
/// Test images additionally get a horizontal occlusion band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub subspace_dim: usize,
    pub noise_sigma: f64,
    pub occlusion_fraction: f64,
    /// Intensity written into the occluded band.
    pub occlusion_value: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 10,
            n_train_per_class: 14,
            n_test_per_class: 12,
            width: 55,
            height: 66,
            subspace_dim: 3,
            noise_sigma: 0.05,
            occlusion_fraction: 0.3,
            occlusion_value: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_classes == 0 {
            return bad("n_classes must be >= 1".into());
        }
        // at most 999 persons per gender fit the 3-digit naming
        if self.n_classes > 2 * 999 {
            return bad(format!("n_classes {} exceeds 1998", self.n_classes));
        }
        if self.n_train_per_class == 0 || self.n_train_per_class > TRAIN_IDS.len() {
            return bad(format!(
                "n_train_per_class must be in 1..={}",
                TRAIN_IDS.len()
            ));
        }
        if self.n_test_per_class > TEST_IDS.len() {
            return bad(format!("n_test_per_class must be <= {}", TEST_IDS.len()));
        }
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be >= 1".into());
        }
        if self.subspace_dim == 0 || self.subspace_dim > self.width * self.height {
            return bad("subspace_dim must be in 1..=W*H".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return bad("occlusion_fraction must be in [0, 1)".into());
        }
        if !self.occlusion_value.is_finite() {
            return bad("occlusion_value must be finite".into());
        }
        Ok(())
    }

    /// Class `c` (0-based) alternates genders: m-001, w-001, m-002, ...
    pub fn class_meta(&self, class: usize, img_idx: u32) -> SampleMeta {
        let gender = if class.is_multiple_of(2) {
            Gender::Male
        } else {
            Gender::Female
        };
        SampleMeta::new(gender, (class / 2 + 1) as u32, img_idx)
    }

    /// Rows covered by the occlusion band: `round(fraction * H)` rows ending
    /// at 90% of the image height (shifted up to fit if needed).
    pub fn occlusion_rows(&self) -> Range<usize> {
        let band = (self.occlusion_fraction * self.height as f64).round() as usize;
        let end = ((0.9 * self.height as f64).ceil() as usize)
            .max(band)
            .min(self.height);
        end - band..end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

const FIELD_COMPONENTS: usize = 6;

/// Smooth random field: a sum of low-frequency plane waves rescaled to `[0, 1]`.
fn smooth_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<f64> {
    let waves: Vec<[f64; 4]> = (0..FIELD_COMPONENTS)
        .map(|_| {
            [
                rng.random_range(0.5..1.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let mut field = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            field.push(
                waves
                    .iter()
                    .map(|[a, fx, fy, ph]| a * (2.0 * PI * (fx * u + fy * v) + ph).cos())
                    .sum(),
            );
        }
    }
    let lo = field.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        field.iter_mut().for_each(|v| *v = (*v - lo) / span);
    } else {
        field.iter_mut().for_each(|v| *v = 0.5);
    }
    field
}

fn render(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], sigma: f64) -> Vec<f64> {
    let mut weights: Vec<f64> = (0..basis.len()).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        weights.iter_mut().for_each(|w| *w = 1.0 / basis.len() as f64);
    }
    let mut img = vec![0.0; basis[0].len()];
    for (b, w) in basis.iter().zip(&weights) {
        for (p, v) in img.iter_mut().zip(b) {
            *p += w * v;
        }
    }
    if sigma > 0.0 {
        for p in &mut img {
            let n: f64 = StandardNormal.sample(rng);
            *p = (*p + sigma * n).clamp(0.0, 1.0);
        }
    }
    img
}

/// Generates a synthetic dataset; identical configs give identical output.
///
/// Randomness comes from ChaCha8 seeded with `cfg.seed` via
/// `SeedableRng::seed_from_u64`. Draw order: shared template field, then per
/// class its identity field and basis fields, then every training image of
/// every class, then every test image.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let template = smooth_field(&mut rng, w, h);
    let bases: Vec<Vec<Vec<f64>>> = (0..cfg.n_classes)
        .map(|_| {
            let identity = smooth_field(&mut rng, w, h);
            (0..cfg.subspace_dim)
                .map(|_| {
                    smooth_field(&mut rng, w, h)
                        .iter()
                        .zip(&template)
                        .zip(&identity)
                        .map(|((f, t), g)| 0.7 * (0.5 * t + 0.5 * g) + 0.3 * f)
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut train = Vec::with_capacity(cfg.n_classes * cfg.n_train_per_class);
    for (c, basis) in bases.iter().enumerate() {
        for &idx in &TRAIN_IDS[..cfg.n_train_per_class] {
            let meta = cfg.class_meta(c, idx);
            train.push(LabeledImage {
                id: meta.stem(),
                image: Raster::new(w, h, render(&mut rng, basis, cfg.noise_sigma))?,
                label: meta.label,
            });
        }
    }

    let band = cfg.occlusion_rows();
    let mut test = Vec::with_capacity(cfg.n_classes * cfg.n_test_per_class);
    for (c, basis) in bases.iter().enumerate() {
        for &idx in &TEST_IDS[..cfg.n_test_per_class] {
            let meta = cfg.class_meta(c, idx);
            let mut pixels = render(&mut rng, basis, cfg.noise_sigma);
            for row in band.clone() {
                pixels[row * w..(row + 1) * w].fill(cfg.occlusion_value);
            }
            test.push(LabeledImage {
                id: meta.stem(),
                image: Raster::new(w, h, pixels)?,
                label: meta.label,
            });
        }
    }
    // match the loader's label-then-index order
    train.sort_by(|a, b| a.id.cmp(&b.id));
    test.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SynthDataset { train, test })
}

impl SynthDataset {
    /// Writes `train/` and `test/` subdirectories of 8-bit PGM files, with
    /// intensity 1.0 mapped to 255.
    pub fn write_pgm_tree(&self, out: &Path) -> Result<()> {
        for (sub, set) in [("train", &self.train), ("test", &self.test)] {
            let dir = out.join(sub);
            fs::create_dir_all(&dir)?;
            for s in set {
                write_pgm(&dir.join(format!("{}.pgm", s.id)), &s.image, 1.0)?;
            }
        }
        Ok(())
    }
}
