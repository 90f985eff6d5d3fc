//! Grid data model and the GRD1 binary format.
//!
//! A GRD1 file is a 24-byte little-endian header followed by the payload:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GRD1"
//! 4       4     version (u32, = 1)
//! 8       4     width   (u32)
//! 12      4     height  (u32)
//! 16      4     bands   (u32)
//! 20      1     dtype   (0 = f32, 1 = u16)
//! 21      3     zero padding
//! 24      ...   payload, band-sequential, each band a row-major plane
//! ```
//!
//! Label rasters are stored as a single u16 band with `0xFFFF` marking nodata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel for unlabeled / masked pixels in a [`LabelRaster`].
pub const NODATA: u16 = 0xFFFF;

pub const GRD_MAGIC: &[u8; 4] = b"GRD1";
pub const GRD_VERSION: u32 = 1;
pub const GRD_HEADER_LEN: usize = 24;

const DTYPE_F32: u8 = 0;
const DTYPE_U16: u8 = 1;

/// H×W×D grid of embedding values in band-sequential (planar) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRaster {
    width: u32,
    height: u32,
    bands: u32,
    values: Vec<f32>,
}

impl EmbeddingRaster {
    pub fn new(width: u32, height: u32, bands: u32, values: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize * bands as usize;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "embedding {width}x{height}x{bands} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("embedding value at index {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            bands,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32, bands: u32) -> Self {
        Self {
            width,
            height,
            bands,
            values: vec![0.0; width as usize * height as usize * bands as usize],
        }
    }

    /// Builds a raster from per-pixel vectors given in row-major pixel order.
    pub fn from_pixels(width: u32, height: u32, bands: u32, pixels: &[Vec<f32>]) -> Result<Self> {
        let n = width as usize * height as usize;
        if pixels.len() != n || pixels.iter().any(|p| p.len() != bands as usize) {
            return Err(Error::Shape(format!("expected {n} pixel vectors of length {bands}")));
        }
        let mut values = vec![0.0; n * bands as usize];
        for (p, px) in pixels.iter().enumerate() {
            for (b, &v) in px.iter().enumerate() {
                values[b * n + p] = v;
            }
        }
        Self::new(width, height, bands, values)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bands(&self) -> u32 {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.plane_len();
        &self.values[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn get(&self, band: usize, x: usize, y: usize) -> f32 {
        self.values[band * self.plane_len() + y * self.width as usize + x]
    }

    /// Copies the D-vector at flat pixel index `idx` into `out` as f64.
    #[inline]
    pub fn pixel_into(&self, idx: usize, out: &mut [f64]) {
        let n = self.plane_len();
        for (b, o) in out.iter_mut().enumerate().take(self.bands as usize) {
            *o = self.values[b * n + idx] as f64;
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec<f32> {
        let idx = y * self.width as usize + x;
        let n = self.plane_len();
        (0..self.bands as usize).map(|b| self.values[b * n + idx]).collect()
    }

    /// Copies the `w`×`h` window at (`x0`, `y0`). The window must lie inside the raster.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Shape(format!(
                "window {w}x{h} at ({x0},{y0}) exceeds raster {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity((w * h * self.bands) as usize);
        for b in 0..self.bands as usize {
            let plane = self.band(b);
            for y in y0..y0 + h {
                let start = y as usize * self.width as usize + x0 as usize;
                values.extend_from_slice(&plane[start..start + w as usize]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            bands: self.bands,
            values,
        })
    }
}

/// H×W grid of class ids, row-major, with [`NODATA`] for masked pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    width: u32,
    height: u32,
    ids: Vec<u16>,
}

impl LabelRaster {
    pub fn new(width: u32, height: u32, ids: Vec<u16>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if ids.len() != expected {
            return Err(Error::Shape(format!(
                "label raster {width}x{height} needs {expected} ids, got {}",
                ids.len()
            )));
        }
        Ok(Self { width, height, ids })
    }

    pub fn filled(width: u32, height: u32, id: u16) -> Self {
        Self {
            width,
            height,
            ids: vec![id; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn ids(&self) -> &[u16] {
        &self.ids
    }

    pub fn ids_mut(&mut self) -> &mut [u16] {
        &mut self.ids
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.ids[y * self.width as usize + x]
    }

    pub fn valid_count(&self) -> usize {
        self.ids.iter().filter(|&&v| v != NODATA).count()
    }

    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Shape(format!(
                "window {w}x{h} at ({x0},{y0}) exceeds raster {}x{}",
                self.width, self.height
            )));
        }
        let mut ids = Vec::with_capacity((w * h) as usize);
        for y in y0..y0 + h {
            let start = y as usize * self.width as usize + x0 as usize;
            ids.extend_from_slice(&self.ids[start..start + w as usize]);
        }
        Ok(Self {
            width: w,
            height: h,
            ids,
        })
    }

    /// Checks that every non-nodata id is listed in `table`.
    pub fn check_classes(&self, table: &ClassTable) -> Result<()> {
        for &id in &self.ids {
            if id != NODATA && table.position(id).is_none() {
                return Err(Error::Data(format!("class id {id} not in class table")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class_id: u16,
    pub name: String,
    pub pixel_count: u64,
    pub fraction: f64,
}

/// Ordered class inventory with per-class pixel counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassTable {
    entries: Vec<ClassEntry>,
}

impl ClassTable {
    pub fn new(entries: Vec<ClassEntry>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].class_id >= w[1].class_id {
                return Err(Error::Data(format!(
                    "class ids must be unique and ascending ({} then {})",
                    w[0].class_id, w[1].class_id
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| e.class_id == NODATA) {
            return Err(Error::Data(format!(
                "class id {} collides with the nodata sentinel",
                e.class_id
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, class_id: u16) -> Option<usize> {
        self.entries.binary_search_by_key(&class_id, |e| e.class_id).ok()
    }

    pub fn ids(&self) -> Vec<u16> {
        self.entries.iter().map(|e| e.class_id).collect()
    }

    pub fn total_pixels(&self) -> u64 {
        self.entries.iter().map(|e| e.pixel_count).sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        // serialize() emits the header from the struct on first row only
        if self.entries.is_empty() {
            w.write_record(["class_id", "name", "pixel_count", "fraction"])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["class_id", "name", "pixel_count", "fraction"] {
            return Err(Error::Format(format!(
                "class table header must be class_id,name,pixel_count,fraction; got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let entries = r.deserialize().collect::<Result<Vec<ClassEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Dataset bookkeeping: which files make up a co-registered embedding/label pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridManifest {
    pub embedding_path: String,
    pub label_path: String,
    pub resolution_m: f64,
    pub class_table_path: String,
    #[serde(default)]
    pub notes: String,
}

/// A manifest whose referenced files have been loaded.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub embeddings: EmbeddingRaster,
    pub labels: LabelRaster,
    pub classes: ClassTable,
}

impl GridManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn resolve(base: &Path, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Loads every referenced file (relative paths resolve against `base`) and
    /// checks that they are mutually consistent.
    pub fn load(&self, base: impl AsRef<Path>) -> Result<LoadedDataset> {
        let base = base.as_ref();
        let embeddings = read_grid(Self::resolve(base, &self.embedding_path))?.into_embedding()?;
        let labels = read_grid(Self::resolve(base, &self.label_path))?.into_labels()?;
        let classes = ClassTable::read(Self::resolve(base, &self.class_table_path))?;
        validate_pair(&embeddings, &labels)?;
        labels.check_classes(&classes)?;
        Ok(LoadedDataset {
            embeddings,
            labels,
            classes,
        })
    }
}

/// A decoded GRD1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Embedding(EmbeddingRaster),
    Labels(LabelRaster),
}

impl Grid {
    pub fn into_embedding(self) -> Result<EmbeddingRaster> {
        match self {
            Grid::Embedding(e) => Ok(e),
            Grid::Labels(_) => Err(Error::Format("expected an f32 embedding grid, found u16 labels".into())),
        }
    }

    pub fn into_labels(self) -> Result<LabelRaster> {
        match self {
            Grid::Labels(l) => Ok(l),
            Grid::Embedding(_) => Err(Error::Format("expected a u16 label grid, found f32 embeddings".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GridRef<'a> {
    Embedding(&'a EmbeddingRaster),
    Labels(&'a LabelRaster),
}

impl<'a> From<&'a EmbeddingRaster> for GridRef<'a> {
    fn from(r: &'a EmbeddingRaster) -> Self {
        GridRef::Embedding(r)
    }
}

impl<'a> From<&'a LabelRaster> for GridRef<'a> {
    fn from(r: &'a LabelRaster) -> Self {
        GridRef::Labels(r)
    }
}

impl<'a> From<&'a Grid> for GridRef<'a> {
    fn from(g: &'a Grid) -> Self {
        match g {
            Grid::Embedding(e) => GridRef::Embedding(e),
            Grid::Labels(l) => GridRef::Labels(l),
        }
    }
}

fn header(width: u32, height: u32, bands: u32, dtype: u8) -> [u8; GRD_HEADER_LEN] {
    let mut h = [0u8; GRD_HEADER_LEN];
    h[0..4].copy_from_slice(GRD_MAGIC);
    h[4..8].copy_from_slice(&GRD_VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&width.to_le_bytes());
    h[12..16].copy_from_slice(&height.to_le_bytes());
    h[16..20].copy_from_slice(&bands.to_le_bytes());
    h[20] = dtype;
    h
}

pub fn encode_grid<'a>(raster: impl Into<GridRef<'a>>) -> Vec<u8> {
    match raster.into() {
        GridRef::Embedding(e) => {
            let mut out = Vec::with_capacity(GRD_HEADER_LEN + e.values.len() * 4);
            out.extend_from_slice(&header(e.width, e.height, e.bands, DTYPE_F32));
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
        GridRef::Labels(l) => {
            let mut out = Vec::with_capacity(GRD_HEADER_LEN + l.ids.len() * 2);
            out.extend_from_slice(&header(l.width, l.height, 1, DTYPE_U16));
            for v in &l.ids {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
    }
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < 4 || &bytes[0..4] != GRD_MAGIC {
        return Err(Error::Format("not a GRD1 file".into()));
    }
    if bytes.len() < GRD_HEADER_LEN {
        return Err(Error::Format("truncated GRD1 header".into()));
    }
    let version = le_u32(bytes, 4);
    if version != GRD_VERSION {
        return Err(Error::Format(format!("unsupported GRD1 version {version}")));
    }
    let width = le_u32(bytes, 8);
    let height = le_u32(bytes, 12);
    let bands = le_u32(bytes, 16);
    let dtype = bytes[20];
    let elem = match dtype {
        DTYPE_F32 => 4,
        DTYPE_U16 => 2,
        other => return Err(Error::Format(format!("unsupported dtype {other}"))),
    };
    let count = width as u64 * height as u64 * bands as u64;
    let need = count * elem;
    let payload = &bytes[GRD_HEADER_LEN..];
    if (payload.len() as u64) < need {
        return Err(Error::Format(format!(
            "truncated GRD1 payload: header promises {need} bytes, found {}",
            payload.len()
        )));
    }
    let payload = &payload[..need as usize];
    match dtype {
        DTYPE_F32 => {
            let values = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect();
            Ok(Grid::Embedding(EmbeddingRaster::new(width, height, bands, values)?))
        }
        _ => {
            if bands != 1 {
                return Err(Error::Format(format!(
                    "u16 label grids carry exactly one band, header says {bands}"
                )));
            }
            let ids = payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            Ok(Grid::Labels(LabelRaster::new(width, height, ids)?))
        }
    }
}

pub fn write_grid<'a>(raster: impl Into<GridRef<'a>>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_grid(raster)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Succeeds iff the two rasters share width and height.
pub fn validate_pair(emb: &EmbeddingRaster, labels: &LabelRaster) -> Result<()> {
    if emb.width() != labels.width() || emb.height() != labels.height() {
        return Err(Error::Shape(format!(
            "embedding is {}x{}x{}, labels are {}x{}",
            emb.width(),
            emb.height(),
            emb.bands(),
            labels.width(),
            labels.height()
        )));
    }
    Ok(())
}
