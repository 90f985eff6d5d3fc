//! Probability rasters, pixel-wise and overlap-tiled inference, class maps.
//!
//! Probability rasters are stored as GRD1 f32 grids with one band per class,
//! next to a validity sidecar: `ceil(W·H / 8)` bytes, bit `i % 8` of byte
//! `i / 8` set when row-major pixel `i` is valid (LSB first).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{argmax, PixelClassifier, TileClassifier};
use crate::raster::{decode_grid, encode_grid, EmbeddingRaster, LabelRaster, NODATA};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRaster {
    pub width: u32,
    pub height: u32,
    pub classes: usize,
    /// Class-planar: `probs[c * W * H + y * W + x]`.
    pub probs: Vec<f32>,
    pub valid: Vec<bool>,
}

impl ProbabilityRaster {
    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, idx: usize) -> Vec<f32> {
        let n = self.plane_len();
        (0..self.classes).map(|c| self.probs[c * n + idx]).collect()
    }

    /// Packs the validity mask LSB-first.
    pub fn validity_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.valid.len().div_ceil(8)];
        for (i, _) in self.valid.iter().enumerate().filter(|(_, &v)| v) {
            out[i / 8] |= 1 << (i % 8);
        }
        out
    }

    pub fn from_parts(probs: EmbeddingRaster, validity: &[u8]) -> Result<Self> {
        let n = probs.plane_len();
        if validity.len() != n.div_ceil(8) {
            return Err(Error::Format(format!(
                "validity bitmap has {} bytes, expected {}",
                validity.len(),
                n.div_ceil(8)
            )));
        }
        let valid = (0..n).map(|i| validity[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            width: probs.width(),
            height: probs.height(),
            classes: probs.bands() as usize,
            probs: probs.into_values(),
            valid,
        })
    }

    pub fn to_grid(&self) -> Result<EmbeddingRaster> {
        EmbeddingRaster::new(self.width, self.height, self.classes as u32, self.probs.clone())
    }

    /// Writes `path` and its validity sidecar, returned as the second path.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        let path = path.as_ref();
        fs::write(path, encode_grid(&self.to_grid()?)).map_err(|e| Error::io(path, e))?;
        let side = validity_path(path);
        fs::write(&side, self.validity_bytes()).map_err(|e| Error::io(&side, e))?;
        Ok(side)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let grid = decode_grid(&bytes)?.into_embedding()?;
        let side = validity_path(path);
        let bits = fs::read(&side).map_err(|e| Error::io(&side, e))?;
        Self::from_parts(grid, &bits)
    }
}

/// `probs.grd` → `probs.valid`.
pub fn validity_path(path: &Path) -> PathBuf {
    path.with_extension("valid")
}

/// Per-pixel probabilities; pixels that are nodata in `mask` come out invalid
/// with all-zero vectors.
pub fn predict_raster_pixelwise(
    model: &(impl PixelClassifier + ?Sized),
    emb: &EmbeddingRaster,
    mask: Option<&LabelRaster>,
) -> Result<ProbabilityRaster> {
    let d = emb.bands() as usize;
    if model.n_features() != d {
        return Err(Error::Shape(format!(
            "model expects {} features, raster has {d} bands",
            model.n_features()
        )));
    }
    if let Some(m) = mask {
        crate::raster::validate_pair(emb, m)?;
    }
    let c = model.n_classes();
    let (w, n) = (emb.width() as usize, emb.plane_len());
    let valid: Vec<bool> = (0..n).map(|i| mask.is_none_or(|m| m.ids()[i] != NODATA)).collect();
    // row-parallel, pixel-major scratch
    let rows: Vec<Vec<f64>> = (0..emb.height() as usize)
        .into_par_iter()
        .map(|y| {
            let mut out = vec![0.0; w * c];
            let mut x = vec![0.0; d];
            for xx in 0..w {
                let i = y * w + xx;
                if valid[i] {
                    emb.pixel_into(i, &mut x);
                    model.predict_proba_into(&x, &mut out[xx * c..(xx + 1) * c]);
                }
            }
            out
        })
        .collect();
    let mut probs = vec![0f32; n * c];
    for (y, row) in rows.iter().enumerate() {
        for xx in 0..w {
            for k in 0..c {
                probs[k * n + y * w + xx] = row[xx * c + k] as f32;
            }
        }
    }
    Ok(ProbabilityRaster {
        width: emb.width(),
        height: emb.height(),
        classes: c,
        probs,
        valid,
    })
}

/// Tile origins along one axis: multiples of `stride`, with the last clamped to
/// `len - tile`.
pub fn tile_origins(len: u32, tile: u32, stride: u32) -> Vec<u32> {
    let last = len - tile;
    let mut out: Vec<u32> = (0..).map(|i| i * stride).take_while(|&o| o < last).collect();
    out.push(last);
    out
}

/// Overlap-smoothed inference: mean of the probability vectors from every tile
/// covering a pixel, summed in row-major tile order, then renormalized.
pub fn predict_raster_tiled(
    model: &(impl TileClassifier + ?Sized),
    emb: &EmbeddingRaster,
    tile: u32,
    stride: u32,
) -> Result<ProbabilityRaster> {
    if stride == 0 || stride > tile {
        return Err(Error::Config(format!(
            "stride must be in [1, tile], got {stride} for tile {tile}"
        )));
    }
    let (w, h) = (emb.width(), emb.height());
    if tile > w || tile > h {
        return Err(Error::Shape(format!("tile {tile} exceeds raster {w}x{h}")));
    }
    let d = emb.bands() as usize;
    if model.n_bands() != d {
        return Err(Error::Shape(format!(
            "model expects {} bands, raster has {d}",
            model.n_bands()
        )));
    }
    let c = model.n_classes();
    let xs = tile_origins(w, tile, stride);
    let ys = tile_origins(h, tile, stride);
    let origins: Vec<(u32, u32)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();

    let n = emb.plane_len();
    let mut sum = vec![0f64; n * c];
    let mut cover = vec![0u32; n];
    let (t, wu) = (tile as usize, w as usize);
    // compute in parallel batches, commit in tile order
    for batch in origins.chunks(rayon::current_num_threads().max(1) * 4) {
        let preds: Vec<Result<Vec<f64>>> = batch
            .par_iter()
            .map(|&(x0, y0)| Ok(model.predict_tile(&emb.crop(x0, y0, tile, tile)?)))
            .collect();
        for (&(x0, y0), p) in batch.iter().zip(preds) {
            let p = p?;
            for yy in 0..t {
                for xx in 0..t {
                    let i = (y0 as usize + yy) * wu + x0 as usize + xx;
                    let src = &p[(yy * t + xx) * c..(yy * t + xx + 1) * c];
                    for (s, v) in sum[i * c..(i + 1) * c].iter_mut().zip(src) {
                        *s += v;
                    }
                    cover[i] += 1;
                }
            }
        }
    }

    let mut probs = vec![0f32; n * c];
    for i in 0..n {
        let k = cover[i] as f64;
        let v = &mut sum[i * c..(i + 1) * c];
        v.iter_mut().for_each(|s| *s /= k);
        let total: f64 = v.iter().sum();
        for (cls, s) in v.iter().enumerate() {
            probs[cls * n + i] = (s / total) as f32;
        }
    }
    Ok(ProbabilityRaster {
        width: w,
        height: h,
        classes: c,
        probs,
        valid: vec![true; n],
    })
}

/// Per-pixel argmax with ties to the lowest class; invalid pixels become nodata.
pub fn argmax_map(probs: &ProbabilityRaster) -> Result<LabelRaster> {
    let n = probs.plane_len();
    let mut v = vec![0.0; probs.classes];
    let ids = (0..n)
        .map(|i| {
            if !probs.valid[i] {
                return NODATA;
            }
            for (c, slot) in v.iter_mut().enumerate() {
                *slot = probs.probs[c * n + i] as f64;
            }
            argmax(&v) as u16
        })
        .collect();
    LabelRaster::new(probs.width, probs.height, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Pixelwise;

    struct Uniform(usize, usize);

    impl PixelClassifier for Uniform {
        fn n_classes(&self) -> usize {
            self.0
        }
        fn n_features(&self) -> usize {
            self.1
        }
        fn predict_proba_into(&self, _: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|o| *o = 1.0 / self.0 as f64);
        }
    }

    fn ramp(w: u32, h: u32, d: u32) -> EmbeddingRaster {
        EmbeddingRaster::new(w, h, d, (0..w * h * d).map(|v| (v % 17) as f32 * 0.1).collect()).unwrap()
    }

    #[test]
    fn uniform_model_gives_constant_raster() {
        let emb = ramp(5, 4, 2);
        let p = predict_raster_pixelwise(&Uniform(4, 2), &emb, None).unwrap();
        assert!(p.probs.iter().all(|&v| v == 0.25));
        let t = predict_raster_tiled(&Pixelwise(&Uniform(4, 2)), &emb, 3, 1).unwrap();
        assert!(t.probs.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn masked_pixels_are_invalid_zero() {
        let emb = ramp(2, 1, 1);
        let mask = LabelRaster::new(2, 1, vec![0, NODATA]).unwrap();
        let p = predict_raster_pixelwise(&Uniform(2, 1), &emb, Some(&mask)).unwrap();
        assert_eq!(p.valid, vec![true, false]);
        assert_eq!(p.pixel(1), vec![0.0, 0.0]);
        assert_eq!(argmax_map(&p).unwrap().ids(), &[0, NODATA]);
    }

    #[test]
    fn argmax_tie_rules() {
        let p = ProbabilityRaster {
            width: 2,
            height: 1,
            classes: 3,
            probs: vec![0.2, 0.5, 0.5, 0.5, 0.3, 0.0],
            valid: vec![true, true],
        };
        assert_eq!(argmax_map(&p).unwrap().ids(), &[1, 0]);
    }

    #[test]
    fn origins_are_clamped_and_cover() {
        assert_eq!(tile_origins(128, 64, 32), vec![0, 32, 64]);
        assert_eq!(tile_origins(100, 64, 32), vec![0, 32, 36]);
        assert_eq!(tile_origins(64, 64, 7), vec![0]);
        assert_eq!(tile_origins(10, 3, 3), vec![0, 3, 6, 7]);
    }

    #[test]
    fn bad_geometry_rejected() {
        let emb = ramp(4, 4, 1);
        let m = Pixelwise(&Uniform(2, 1));
        assert!(matches!(predict_raster_tiled(&m, &emb, 5, 2), Err(Error::Shape(_))));
        assert!(predict_raster_tiled(&m, &emb, 2, 3).is_err());
        assert!(predict_raster_tiled(&m, &emb, 2, 0).is_err());
        assert!(matches!(
            predict_raster_pixelwise(&Uniform(2, 3), &emb, None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn validity_bitmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let valid: Vec<bool> = (0..11).map(|i| i % 3 != 1).collect();
        let p = ProbabilityRaster {
            width: 11,
            height: 1,
            classes: 1,
            probs: valid.iter().map(|&v| v as u8 as f32).collect(),
            valid,
        };
        assert_eq!(p.validity_bytes(), vec![0b0110_1101, 0b0000_0011]);
        let path = dir.path().join("probs.grd");
        let side = p.write(&path).unwrap();
        assert_eq!(side, dir.path().join("probs.valid"));
        assert_eq!(ProbabilityRaster::read(&path).unwrap(), p);
    }
}
