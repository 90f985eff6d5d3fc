//! Synthetic embedding/label worlds with a closed-form Bayes oracle.
//!
//! Class regions come from the argmax of C box-smoothed white-noise fields, which
//! yields contiguous patches. Each class emits isotropic Gaussian embeddings around
//! its mean, and all means shift along a fixed direction proportionally to the row
//! index (`drift`), so rows behave like latitude under a distribution shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassEntry, ClassTable, EmbeddingRaster, LabelRaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub dims: u32,
    pub classes: u32,
    pub seed: u64,
    pub smooth_radius: u32,
    pub sep: f64,
    pub noise_sigma: f64,
    pub drift: f64,
    /// `(class_id, weight)`: `ln(weight)` is added to that class's smoothed field.
    pub rare_boost: Vec<(u16, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            dims: 8,
            classes: 5,
            seed: 7,
            smooth_radius: 6,
            sep: 4.0,
            noise_sigma: 0.5,
            drift: 0.0,
            rare_boost: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("width and height must be ≥ 1".into()));
        }
        if self.dims < 1 {
            return Err(Error::Config("dims must be ≥ 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("classes must be ≥ 2".into()));
        }
        if self.classes >= crate::raster::NODATA as u32 {
            return Err(Error::Config("classes must fit below the nodata id".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be ≥ 0".into()));
        }
        if !self.sep.is_finite() || !self.drift.is_finite() {
            return Err(Error::Config("sep and drift must be finite".into()));
        }
        for &(id, w) in &self.rare_boost {
            if id as u32 >= self.classes {
                return Err(Error::Config(format!("rare_boost class {id} out of range")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "rare_boost weight for class {id} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub embeddings: EmbeddingRaster,
    pub labels: LabelRaster,
    /// C×D row-major class means.
    pub means: Vec<f64>,
    /// Unit-length drift direction.
    pub drift_dir: Vec<f64>,
}

impl SynthWorld {
    pub fn mean(&self, class: usize) -> &[f64] {
        let d = self.drift_dir.len();
        &self.means[class * d..(class + 1) * d]
    }

    pub fn classes(&self) -> usize {
        self.means.len() / self.drift_dir.len()
    }

    /// Class inventory with names `class_<id>`; every generated class is listed even if absent.
    pub fn class_table(&self) -> ClassTable {
        let c = self.classes();
        let mut counts = vec![0u64; c];
        for &id in self.labels.ids() {
            counts[id as usize] += 1;
        }
        let total: u64 = counts.iter().sum();
        let entries = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| ClassEntry {
                class_id: i as u16,
                name: format!("class_{i}"),
                pixel_count: n,
                fraction: if total > 0 { n as f64 / total as f64 } else { 0.0 },
            })
            .collect();
        ClassTable::new(entries).expect("dense ascending ids")
    }
}

/// Edge-normalized separable box filter of the given radius over an H×W field.
fn box_smooth(field: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return field.to_vec();
    }
    let mut tmp = vec![0.0; field.len()];
    for y in 0..height {
        let row = &field[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            let s: f64 = row[lo..=hi].iter().sum();
            tmp[y * width + x] = s / (hi - lo + 1) as f64;
        }
    }
    let mut out = vec![0.0; field.len()];
    for x in 0..width {
        for y in 0..height {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(height - 1);
            let mut s = 0.0;
            for yy in lo..=hi {
                s += tmp[yy * width + x];
            }
            out[y * width + x] = s / (hi - lo + 1) as f64;
        }
    }
    out
}

/// Random D×D orthogonal matrix (column-major columns) from Gram–Schmidt on Gaussian draws.
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for q in &cols {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    cols
}

/// Class means: `sep·e_(c mod D)`, with each further block of D classes rotated by
/// its own seeded orthogonal matrix so that wrapped classes stay distinct.
fn class_means(classes: usize, dims: usize, sep: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let groups = classes.div_ceil(dims);
    let rotations: Vec<Vec<Vec<f64>>> = (1..groups).map(|_| random_orthogonal(dims, rng)).collect();
    let mut means = vec![0.0; classes * dims];
    for c in 0..classes {
        let (group, axis) = (c / dims, c % dims);
        let m = &mut means[c * dims..(c + 1) * dims];
        if group == 0 {
            m[axis] = sep;
        } else {
            for (mi, qi) in m.iter_mut().zip(&rotations[group - 1][axis]) {
                *mi = sep * qi;
            }
        }
    }
    means
}

pub fn generate_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let (w, h) = (config.width as usize, config.height as usize);
    let (d, c) = (config.dims as usize, config.classes as usize);
    let n = w * h;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let raw: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut fields: Vec<Vec<f64>> = raw
        .iter()
        .map(|f| box_smooth(f, w, h, config.smooth_radius as usize))
        .collect();
    for &(id, weight) in &config.rare_boost {
        let bump = weight.ln();
        fields[id as usize].iter_mut().for_each(|v| *v += bump);
    }

    let ids: Vec<u16> = (0..n)
        .map(|p| {
            let mut best = 0;
            for k in 1..c {
                if fields[k][p] > fields[best][p] {
                    best = k;
                }
            }
            best as u16
        })
        .collect();

    let means = class_means(c, d, config.sep, &mut rng);

    let mut drift_dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = drift_dir.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        drift_dir.iter_mut().for_each(|a| *a /= norm);
    } else {
        drift_dir = vec![0.0; d];
        drift_dir[0] = 1.0;
    }

    let mut values = vec![0f32; n * d];
    for p in 0..n {
        let row = (p / w) as f64;
        let shift = config.drift * (row / h as f64);
        let mu = &means[ids[p] as usize * d..(ids[p] as usize + 1) * d];
        for b in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            values[b * n + p] = (mu[b] + shift * drift_dir[b] + config.noise_sigma * z) as f32;
        }
    }

    Ok(SynthWorld {
        embeddings: EmbeddingRaster::new(config.width, config.height, config.dims, values)?,
        labels: LabelRaster::new(config.width, config.height, ids)?,
        means,
        drift_dir,
    })
}

/// Exact Bayes decision for the isotropic generator with equal priors: the class
/// whose drifted mean is nearest to `x`. Ties go to the lowest id.
pub fn bayes_predict(world: &SynthWorld, config: &SynthConfig, x: &[f64], row: u32) -> Result<u16> {
    let d = world.drift_dir.len();
    if x.len() != d {
        return Err(Error::Shape(format!("pixel has {} bands, world has {d}", x.len())));
    }
    let shift = config.drift * (row as f64 / config.height as f64);
    let mut best = (0u16, f64::INFINITY);
    for c in 0..world.classes() {
        let mu = world.mean(c);
        let dist: f64 = (0..d)
            .map(|b| {
                let r = x[b] - mu[b] - shift * world.drift_dir[b];
                r * r
            })
            .sum();
        if dist < best.1 {
            best = (c as u16, dist);
        }
    }
    Ok(best.0)
}

/// Bayes-oracle label map over every pixel of the world's own embeddings.
pub fn bayes_map(world: &SynthWorld, config: &SynthConfig) -> LabelRaster {
    let emb = &world.embeddings;
    let w = emb.width() as usize;
    let mut x = vec![0.0; emb.bands() as usize];
    let ids = (0..emb.plane_len())
        .map(|p| {
            emb.pixel_into(p, &mut x);
            bayes_predict(world, config, &x, (p / w) as u32).expect("world dims")
        })
        .collect();
    LabelRaster::new(emb.width(), emb.height(), ids).expect("same shape")
}
