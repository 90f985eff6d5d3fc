//! Preprocessing: class histograms, rare-class filtering, remapping, tiling,
//! tile-level splits, row bands and masked pixel extraction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{validate_pair, ClassEntry, ClassTable, EmbeddingRaster, LabelRaster, NODATA};

/// Source → target class mapping with names for the targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RemapTable {
    pairs: BTreeMap<u16, u16>,
    target_names: BTreeMap<u16, String>,
}

impl RemapTable {
    /// Targets must be exactly `0..C'` and each needs a name.
    pub fn new(pairs: BTreeMap<u16, u16>, target_names: BTreeMap<u16, String>) -> Result<Self> {
        let mut targets: Vec<u16> = pairs.values().copied().collect();
        targets.sort_unstable();
        targets.dedup();
        if targets.iter().enumerate().any(|(i, &t)| i != t as usize) {
            return Err(Error::Data(format!(
                "remap targets must be dense from 0, got {targets:?}"
            )));
        }
        if let Some(t) = targets.iter().find(|t| !target_names.contains_key(t)) {
            return Err(Error::Data(format!("remap target {t} has no name")));
        }
        if pairs.contains_key(&NODATA) {
            return Err(Error::Data("nodata cannot be remapped".into()));
        }
        Ok(Self { pairs, target_names })
    }

    pub fn identity(table: &ClassTable) -> Result<Self> {
        let pairs = table.ids().into_iter().map(|id| (id, id)).collect();
        let names = table.entries().iter().map(|e| (e.class_id, e.name.clone())).collect();
        Self::new(pairs, names)
    }

    pub fn get(&self, src: u16) -> Option<u16> {
        self.pairs.get(&src).copied()
    }

    pub fn pairs(&self) -> &BTreeMap<u16, u16> {
        &self.pairs
    }

    pub fn target_name(&self, dst: u16) -> Option<&str> {
        self.target_names.get(&dst).map(String::as_str)
    }

    pub fn target_count(&self) -> usize {
        self.target_names
            .keys()
            .filter(|t| self.pairs.values().any(|v| v == *t))
            .count()
    }

    pub fn is_identity(&self) -> bool {
        self.pairs.iter().all(|(s, d)| s == d)
    }

    /// Checks the mapping is defined for every class in `table`.
    pub fn check_total(&self, table: &ClassTable) -> Result<()> {
        match table.ids().into_iter().find(|id| !self.pairs.contains_key(id)) {
            Some(id) => Err(Error::Data(format!("remap has no entry for class {id}"))),
            None => Ok(()),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["src_id", "dst_id", "dst_name"])?;
        for (s, d) in &self.pairs {
            w.write_record([s.to_string(), d.to_string(), self.target_names[d].clone()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            src_id: u16,
            dst_id: u16,
            dst_name: String,
        }
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut pairs = BTreeMap::new();
        let mut names: BTreeMap<u16, String> = BTreeMap::new();
        for row in r.deserialize() {
            let row: Row = row?;
            if pairs.insert(row.src_id, row.dst_id).is_some() {
                return Err(Error::Format(format!("duplicate remap source {}", row.src_id)));
            }
            match names.get(&row.dst_id) {
                Some(n) if *n != row.dst_name => {
                    return Err(Error::Format(format!(
                        "remap target {} named both {n:?} and {:?}",
                        row.dst_id, row.dst_name
                    )))
                }
                _ => {
                    names.insert(row.dst_id, row.dst_name);
                }
            }
        }
        Self::new(pairs, names)
    }
}

fn histogram_with(labels: &LabelRaster, name: impl Fn(u16) -> String) -> Result<ClassTable> {
    let mut counts: BTreeMap<u16, u64> = BTreeMap::new();
    for &id in labels.ids() {
        if id != NODATA {
            *counts.entry(id).or_default() += 1;
        }
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::Data("label raster has no labeled pixels".into()));
    }
    let entries = counts
        .into_iter()
        .map(|(id, n)| ClassEntry {
            class_id: id,
            name: name(id),
            pixel_count: n,
            fraction: n as f64 / total as f64,
        })
        .collect();
    ClassTable::new(entries)
}

/// Counts every labeled pixel; nodata is excluded from both counts and the fraction denominator.
pub fn histogram_classes(labels: &LabelRaster) -> Result<ClassTable> {
    histogram_with(labels, |id| format!("class_{id}"))
}

/// Like [`histogram_classes`] but takes names from `names` where available.
pub fn histogram_named(labels: &LabelRaster, names: &ClassTable) -> Result<ClassTable> {
    histogram_with(labels, |id| match names.position(id) {
        Some(i) => names.entries()[i].name.clone(),
        None => format!("class_{id}"),
    })
}

/// Masks classes whose fraction is below `threshold` and re-indexes survivors
/// densely in ascending original-id order.
pub fn filter_rare_classes(
    labels: &LabelRaster,
    table: &ClassTable,
    threshold: f64,
) -> Result<(LabelRaster, ClassTable, RemapTable)> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "rare-class threshold must lie in [0, 1), got {threshold}"
        )));
    }
    let survivors: Vec<&ClassEntry> = table.entries().iter().filter(|e| e.fraction >= threshold).collect();
    if survivors.is_empty() {
        return Err(Error::Data(format!(
            "no class reaches the {threshold} fraction threshold"
        )));
    }
    let mut pairs = BTreeMap::new();
    let mut names = BTreeMap::new();
    for (dst, e) in survivors.iter().enumerate() {
        pairs.insert(e.class_id, dst as u16);
        names.insert(dst as u16, e.name.clone());
    }
    let remap = RemapTable::new(pairs, names)?;

    let mut out = labels.clone();
    for id in out.ids_mut() {
        if *id == NODATA {
            continue;
        }
        match remap.get(*id) {
            Some(dst) => *id = dst,
            None if table.position(*id).is_some() => *id = NODATA,
            None => return Err(Error::Data(format!("class id {id} not in class table"))),
        }
    }
    // survivors with zero pixels stay listed so ids remain dense
    let mut counts = vec![0u64; survivors.len()];
    for &id in out.ids() {
        if id != NODATA {
            counts[id as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let entries = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| ClassEntry {
            class_id: i as u16,
            name: survivors[i].name.clone(),
            pixel_count: n,
            fraction: if total > 0 { n as f64 / total as f64 } else { 0.0 },
        })
        .collect();
    Ok((out, ClassTable::new(entries)?, remap))
}

/// Substitutes every labeled id through `remap`; nodata passes through.
pub fn remap_classes(labels: &LabelRaster, remap: &RemapTable) -> Result<LabelRaster> {
    let mut out = labels.clone();
    for id in out.ids_mut() {
        if *id != NODATA {
            *id = remap
                .get(*id)
                .ok_or_else(|| Error::Data(format!("class id {id} has no remap entry")))?;
        }
    }
    Ok(out)
}

/// Class table after remapping, with target names.
pub fn remapped_table(labels: &LabelRaster, remap: &RemapTable) -> Result<ClassTable> {
    histogram_with(labels, |id| {
        remap
            .target_name(id)
            .map(str::to_owned)
            .unwrap_or_else(|| format!("class_{id}"))
    })
}

/// Square tiling of a width×height grid. Partial edge tiles are always included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile: u32,
    pub cols: u32,
    pub rows: u32,
    pub includes_partial: bool,
    pub width: u32,
    pub height: u32,
}

/// Pixel rectangle of a tile clipped to the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRect {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

pub fn make_tile_grid(width: u32, height: u32, tile: u32) -> Result<TileGrid> {
    if tile == 0 {
        return Err(Error::Config("tile size must be ≥ 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Config(format!("cannot tile a {width}x{height} raster")));
    }
    Ok(TileGrid {
        tile,
        cols: width.div_ceil(tile),
        rows: height.div_ceil(tile),
        includes_partial: true,
        width,
        height,
    })
}

impl TileGrid {
    pub fn len(&self) -> usize {
        (self.cols * self.rows) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (col, row) of a row-major tile index.
    pub fn coords(&self, index: usize) -> (u32, u32) {
        (index as u32 % self.cols, index as u32 / self.cols)
    }

    pub fn rect(&self, index: usize) -> TileRect {
        let (c, r) = self.coords(index);
        let x0 = c * self.tile;
        let y0 = r * self.tile;
        TileRect {
            x0,
            y0,
            w: self.tile.min(self.width - x0),
            h: self.tile.min(self.height - y0),
        }
    }

    /// Tile-sized copies of the embedding and labels; pixels beyond the raster are
    /// zero embeddings with nodata labels and are flagged `false` in the returned mask.
    pub fn materialize(
        &self,
        index: usize,
        emb: &EmbeddingRaster,
        labels: &LabelRaster,
    ) -> (EmbeddingRaster, LabelRaster, Vec<bool>) {
        let r = self.rect(index);
        let t = self.tile as usize;
        let d = emb.bands() as usize;
        let mut values = vec![0f32; t * t * d];
        let mut ids = vec![NODATA; t * t];
        let mut inside = vec![false; t * t];
        for yy in 0..r.h as usize {
            for xx in 0..r.w as usize {
                let (x, y) = (r.x0 as usize + xx, r.y0 as usize + yy);
                let o = yy * t + xx;
                ids[o] = labels.get(x, y);
                inside[o] = true;
                for b in 0..d {
                    values[b * t * t + o] = emb.get(b, x, y);
                }
            }
        }
        (
            EmbeddingRaster::new(self.tile, self.tile, emb.bands(), values).expect("finite copy"),
            LabelRaster::new(self.tile, self.tile, ids).expect("tile shape"),
            inside,
        )
    }

    /// Tiles lying entirely within rows `[start, end)`.
    pub fn tiles_within_rows(&self, start: u32, end: u32) -> impl Fn(usize) -> bool + '_ {
        move |i| {
            let r = self.rect(i);
            r.y0 >= start && r.y0 + r.h <= end
        }
    }
}

/// Predicate: tile contains at least one labeled pixel.
pub fn tile_has_labels<'a>(grid: &'a TileGrid, labels: &'a LabelRaster) -> impl Fn(usize) -> bool + 'a {
    move |i| {
        let r = grid.rect(i);
        (r.y0..r.y0 + r.h).any(|y| (r.x0..r.x0 + r.w).any(|x| labels.get(x as usize, y as usize) != NODATA))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
    Excluded,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
            SplitKind::Excluded => "excluded",
        })
    }
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            "excluded" => Ok(SplitKind::Excluded),
            other => Err(Error::Format(format!("unknown split kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub grid: TileGrid,
    pub kinds: Vec<SplitKind>,
    pub seed: u64,
    pub fractions: (f64, f64),
}

// guards floor() against products like 0.9 * 10 landing a hair under an integer
const FLOOR_EPS: f64 = 1e-9;

/// Seeded tile split. Eligible tile indices (row-major) are Fisher–Yates shuffled;
/// the first `floor(train·n)` become Train. When `train + val` covers everything
/// the remainder is Val, otherwise the next `floor(val·n)` are Val and the rest Test.
pub fn assign_splits(
    grid: &TileGrid,
    fractions: (f64, f64),
    seed: u64,
    eligible: impl Fn(usize) -> bool,
) -> Result<SplitAssignment> {
    let (ft, fv) = fractions;
    if !(ft >= 0.0 && fv >= 0.0 && ft + fv <= 1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "split fractions must be non-negative and sum to at most 1, got ({ft}, {fv})"
        )));
    }
    let mut pool: Vec<usize> = (0..grid.len()).filter(|&i| eligible(i)).collect();
    if pool.is_empty() {
        return Err(Error::Data("no eligible tiles to split".into()));
    }
    let n = pool.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);

    let n_train = ((ft * n as f64) + FLOOR_EPS).floor() as usize;
    let n_val = if ft + fv >= 1.0 - 1e-12 {
        n - n_train
    } else {
        (((fv * n as f64) + FLOOR_EPS).floor() as usize).min(n - n_train)
    };
    let mut kinds = vec![SplitKind::Excluded; grid.len()];
    for (rank, &tile) in pool.iter().enumerate() {
        kinds[tile] = if rank < n_train {
            SplitKind::Train
        } else if rank < n_train + n_val {
            SplitKind::Val
        } else {
            SplitKind::Test
        };
    }
    Ok(SplitAssignment {
        grid: *grid,
        kinds,
        seed,
        fractions,
    })
}

impl SplitAssignment {
    pub fn count(&self, kind: SplitKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn tiles(&self, kind: SplitKind) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(move |(_, &k)| k == kind)
            .map(|(i, _)| i)
    }

    /// Marks every currently-excluded tile as `kind` (e.g. a held-out test region).
    pub fn with_excluded_as(mut self, kind: SplitKind) -> Self {
        for k in &mut self.kinds {
            if *k == SplitKind::Excluded {
                *k = kind;
            }
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tile_col,tile_row,kind\n");
        for (i, k) in self.kinds.iter().enumerate() {
            let (c, r) = self.grid.coords(i);
            s.push_str(&format!("{c},{r},{k}\n"));
        }
        s
    }

    /// Parses the CSV form against a known grid; seed and fractions are not stored in the CSV.
    pub fn from_csv(text: &str, grid: &TileGrid) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            tile_col: u32,
            tile_row: u32,
            kind: String,
        }
        let mut kinds = vec![None; grid.len()];
        for row in csv::Reader::from_reader(text.as_bytes()).deserialize() {
            let row: Row = row?;
            if row.tile_col >= grid.cols || row.tile_row >= grid.rows {
                return Err(Error::Format(format!(
                    "tile ({}, {}) outside {}x{} grid",
                    row.tile_col, row.tile_row, grid.cols, grid.rows
                )));
            }
            kinds[(row.tile_row * grid.cols + row.tile_col) as usize] = Some(row.kind.parse()?);
        }
        let kinds = kinds
            .into_iter()
            .enumerate()
            .map(|(i, k)| k.ok_or_else(|| Error::Format(format!("tile {i} missing from split CSV"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: *grid,
            kinds,
            seed: 0,
            fractions: (0.0, 0.0),
        })
    }
}

/// N×D features (row-major f64) with targets and (tile index, in-tile offset) provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDataset {
    pub features: Vec<f64>,
    pub n_features: usize,
    pub targets: Vec<u16>,
    pub provenance: Vec<(u32, u32)>,
    pub n_classes: usize,
}

impl PixelDataset {
    /// `n_classes` defaults to `max(target) + 1`.
    pub fn new(features: Vec<f64>, n_features: usize, targets: Vec<u16>) -> Result<Self> {
        let n = targets.len();
        if n_features == 0 || features.len() != n * n_features {
            return Err(Error::Shape(format!(
                "{} feature values for {n} rows of {n_features}",
                features.len()
            )));
        }
        if targets.contains(&NODATA) {
            return Err(Error::Data("dataset targets contain nodata".into()));
        }
        let n_classes = targets.iter().max().map_or(0, |&m| m as usize + 1);
        Ok(Self {
            features,
            n_features,
            targets,
            provenance: (0..n as u32).map(|i| (0, i)).collect(),
            n_classes,
        })
    }

    pub fn with_n_classes(mut self, n_classes: usize) -> Result<Self> {
        if let Some(&m) = self.targets.iter().max() {
            if m as usize >= n_classes {
                return Err(Error::Data(format!("target {m} does not fit {n_classes} classes")));
            }
        }
        self.n_classes = n_classes;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.n_classes];
        for &t in &self.targets {
            c[t as usize] += 1;
        }
        c
    }

    pub fn present_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&n| n > 0).count()
    }

    /// Same rows sorted by provenance, the canonical order fits run in.
    pub fn canonical(&self) -> PixelDataset {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| self.provenance[i]);
        self.select(&order)
    }

    pub fn select(&self, rows: &[usize]) -> PixelDataset {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        PixelDataset {
            features,
            n_features: self.n_features,
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            provenance: rows.iter().map(|&i| self.provenance[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// All labeled pixels of tiles of kind `which`, in row-major tile order then
/// row-major order within each tile.
pub fn extract_pixels(
    emb: &EmbeddingRaster,
    labels: &LabelRaster,
    split: &SplitAssignment,
    which: SplitKind,
) -> Result<PixelDataset> {
    validate_pair(emb, labels)?;
    let grid = &split.grid;
    if grid.width != emb.width() || grid.height != emb.height() {
        return Err(Error::Shape(format!(
            "split grid covers {}x{}, raster is {}x{}",
            grid.width,
            grid.height,
            emb.width(),
            emb.height()
        )));
    }
    let d = emb.bands() as usize;
    let w = emb.width() as usize;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut provenance = Vec::new();
    let mut px = vec![0.0; d];
    for tile in split.tiles(which) {
        let r = grid.rect(tile);
        for yy in 0..r.h {
            for xx in 0..r.w {
                let (x, y) = ((r.x0 + xx) as usize, (r.y0 + yy) as usize);
                let id = labels.get(x, y);
                if id == NODATA {
                    continue;
                }
                emb.pixel_into(y * w + x, &mut px);
                features.extend_from_slice(&px);
                targets.push(id);
                provenance.push((tile as u32, yy * grid.tile + xx));
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::Data(format!("no labeled pixels in {which} tiles")));
    }
    let n_classes = *targets.iter().max().expect("non-empty") as usize + 1;
    Ok(PixelDataset {
        features,
        n_features: d,
        targets,
        provenance,
        n_classes,
    })
}

/// Ascending row edges; band `i` covers rows `edges[i]..edges[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub edges: Vec<u32>,
}

impl BandSpec {
    pub fn validate(&self, height: u32) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::Config("a band spec needs at least two edges".into()));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "band edges must be strictly ascending: {:?}",
                self.edges
            )));
        }
        if *self.edges.last().expect("≥2 edges") > height {
            return Err(Error::Config(format!(
                "band edges {:?} exceed raster height {height}",
                self.edges
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.edges.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Band index per row; `None` for rows outside every band.
pub fn assign_bands(height: u32, spec: &BandSpec) -> Result<Vec<Option<usize>>> {
    spec.validate(height)?;
    Ok((0..height)
        .map(|r| spec.edges.windows(2).position(|w| w[0] <= r && r < w[1]))
        .collect())
}
