//! Dihedral tile augmentation: horizontal flip, vertical flip, 90° rotation and
//! transpose, each drawn with probability 1/2 and applied in that order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{EmbeddingRaster, LabelRaster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Transform {
    pub hflip: bool,
    pub vflip: bool,
    /// Counter-clockwise quarter turn.
    pub rot90: bool,
    pub transpose: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        hflip: false,
        vflip: false,
        rot90: false,
        transpose: false,
    };

    pub fn draw(rng: &mut impl Rng) -> Self {
        Self {
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            rot90: rng.random_bool(0.5),
            transpose: rng.random_bool(0.5),
        }
    }

    pub fn needs_square(&self) -> bool {
        self.rot90 || self.transpose
    }

    /// Applies the transform to a row-major `w`×`h` plane.
    pub fn apply_plane<T: Copy>(&self, data: &[T], w: usize, h: usize) -> Result<Vec<T>> {
        if self.needs_square() && w != h {
            return Err(Error::Shape(format!(
                "rotation/transpose needs a square tile, got {w}x{h}"
            )));
        }
        let mut cur = data.to_vec();
        if self.hflip {
            cur = remap(&cur, w, h, |x, y| (w - 1 - x, y));
        }
        if self.vflip {
            cur = remap(&cur, w, h, |x, y| (x, h - 1 - y));
        }
        if self.rot90 {
            cur = remap(&cur, w, h, |x, y| (w - 1 - y, x));
        }
        if self.transpose {
            cur = remap(&cur, w, h, |x, y| (y, x));
        }
        Ok(cur)
    }

    pub fn apply_embedding(&self, tile: &EmbeddingRaster) -> Result<EmbeddingRaster> {
        let (w, h) = (tile.width() as usize, tile.height() as usize);
        let mut values = Vec::with_capacity(tile.values().len());
        for b in 0..tile.bands() as usize {
            values.extend(self.apply_plane(tile.band(b), w, h)?);
        }
        EmbeddingRaster::new(tile.width(), tile.height(), tile.bands(), values)
    }

    pub fn apply_labels(&self, tile: &LabelRaster) -> Result<LabelRaster> {
        let ids = self.apply_plane(tile.ids(), tile.width() as usize, tile.height() as usize)?;
        LabelRaster::new(tile.width(), tile.height(), ids)
    }
}

/// `out[y][x] = src[sy][sx]` where `(sx, sy) = source(x, y)`.
fn remap<T: Copy>(src: &[T], w: usize, h: usize, source: impl Fn(usize, usize) -> (usize, usize)) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(x, y);
            out.push(src[sy * w + sx]);
        }
    }
    out
}

/// Draws one transform from `rng` and applies it to both tiles.
pub fn augment_tile(
    emb: &EmbeddingRaster,
    labels: &LabelRaster,
    rng: &mut impl Rng,
) -> Result<(EmbeddingRaster, LabelRaster)> {
    crate::raster::validate_pair(emb, labels)?;
    let t = Transform::draw(rng);
    Ok((t.apply_embedding(emb)?, t.apply_labels(labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TILE: [u16; 4] = [1, 2, 3, 4];

    fn only(f: impl Fn(&mut Transform)) -> Transform {
        let mut t = Transform::IDENTITY;
        f(&mut t);
        t
    }

    #[test]
    fn elementary_transforms_by_hand() {
        let t = only(|t| t.transpose = true);
        assert_eq!(t.apply_plane(&TILE, 2, 2).unwrap(), vec![1, 3, 2, 4]);
        let t = only(|t| t.hflip = true);
        assert_eq!(t.apply_plane(&TILE, 2, 2).unwrap(), vec![2, 1, 4, 3]);
        let t = only(|t| t.vflip = true);
        assert_eq!(t.apply_plane(&TILE, 2, 2).unwrap(), vec![3, 4, 1, 2]);
        let t = only(|t| t.rot90 = true);
        assert_eq!(t.apply_plane(&TILE, 2, 2).unwrap(), vec![2, 4, 1, 3]);
    }

    #[test]
    fn identity_and_involutions() {
        let data: Vec<u16> = (0..9).collect();
        assert_eq!(Transform::IDENTITY.apply_plane(&data, 3, 3).unwrap(), data);
        let h = only(|t| t.hflip = true);
        let once = h.apply_plane(&data, 3, 3).unwrap();
        assert_eq!(h.apply_plane(&once, 3, 3).unwrap(), data);
        let r = only(|t| t.rot90 = true);
        let mut cur = data.clone();
        for _ in 0..4 {
            cur = r.apply_plane(&cur, 3, 3).unwrap();
        }
        assert_eq!(cur, data);
    }

    #[test]
    fn flips_allowed_on_rectangles() {
        let data: Vec<u16> = (0..6).collect();
        let t = only(|t| t.hflip = true);
        assert_eq!(t.apply_plane(&data, 3, 2).unwrap(), vec![2, 1, 0, 5, 4, 3]);
        let t = only(|t| t.transpose = true);
        assert!(t.apply_plane(&data, 3, 2).is_err());
    }

    #[test]
    fn embedding_and_labels_move_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = LabelRaster::new(3, 3, (0..9).collect()).unwrap();
        let emb = EmbeddingRaster::new(3, 3, 2, (0..18).map(|v| v as f32).collect()).unwrap();
        for _ in 0..16 {
            let (e, l) = augment_tile(&emb, &labels, &mut rng).unwrap();
            for p in 0..9 {
                let src = l.ids()[p] as usize;
                assert_eq!(e.band(0)[p], src as f32);
                assert_eq!(e.band(1)[p], (src + 9) as f32);
            }
        }
    }

    #[test]
    fn draws_cover_all_sixteen_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..400 {
            let t = Transform::draw(&mut rng);
            seen.insert((t.hflip, t.vflip, t.rot90, t.transpose));
        }
        assert_eq!(seen.len(), 16);
    }
}
