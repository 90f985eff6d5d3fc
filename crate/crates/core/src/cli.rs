//! The `labelreach` command line: config-driven pipeline subcommands.
//!
//! Exit codes: 0 success, 1 IO or file format, 2 configuration, 3 data or
//! model/raster incompatibility.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{argmax_map, predict_raster_pixelwise, predict_raster_tiled};
use crate::metrics::{confusion, evaluate_by_band, report as metrics_report};
use crate::models::{
    fit_context, fit_gbt, fit_logreg, fit_random_forest, ContextConfig, Family, ForestConfig, GbtConfig, LogRegConfig,
    Model, ModelFile, TrainConfig,
};
use crate::prep::{
    assign_bands, assign_splits, extract_pixels, filter_rare_classes, histogram_named, make_tile_grid, remap_classes,
    remapped_table, tile_has_labels, BandSpec, RemapTable, SplitAssignment, SplitKind,
};
use crate::raster::{
    read_grid, write_grid, ClassEntry, ClassTable, EmbeddingRaster, GridManifest, LabelRaster, NODATA,
};
use crate::report::{metrics_table, per_class_csv, render_class_map, Palette, TableRow};
use crate::synth::{generate_world, SynthConfig};

pub const THREADS_ENV: &str = "LABELREACH_THREADS";

pub const EMBEDDINGS_FILE: &str = "embeddings.grd";
pub const LABELS_FILE: &str = "labels.grd";
pub const CLASSES_FILE: &str = "classes.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREPARED_LABELS_FILE: &str = "prepared_labels.grd";
pub const PREPARED_CLASSES_FILE: &str = "prepared_classes.csv";
pub const SPLITS_FILE: &str = "splits.csv";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const PROBS_FILE: &str = "probs.grd";
pub const PREDICTED_FILE: &str = "predicted.grd";
pub const MAP_FILE: &str = "map.ppm";
const LOCK_FILE: &str = ".labelreach.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    /// Classes below this fraction of labeled pixels are masked.
    pub threshold: f64,
    pub tile: u32,
    /// (train, val); when they sum below 1 the rest of the tiles become test.
    pub fractions: (f64, f64),
    pub seed: u64,
    /// Optional `src_id,dst_id,dst_name` CSV applied before rare-class filtering.
    pub remap_path: Option<String>,
    /// Restricts train/val tiles to rows `[start, end)`; all other tiles become test.
    pub train_rows: Option<(u32, u32)>,
}

impl Default for PrepSection {
    fn default() -> Self {
        Self {
            threshold: 0.001,
            tile: 32,
            fractions: (0.9, 0.1),
            seed: 0,
            remap_path: None,
            train_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub family: Family,
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
    pub context: ContextConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            family: Family::Logreg,
            logreg: c.logreg,
            forest: c.forest,
            gbt: c.gbt,
            context: c.context,
        }
    }
}

impl TrainSection {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            logreg: self.logreg.clone(),
            forest: self.forest.clone(),
            gbt: self.gbt.clone(),
            context: self.context.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    /// Tile-model stride; defaults to half the tile.
    pub stride: Option<u32>,
    /// Tile-model window; defaults to `prep.tile`.
    pub tile: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Row edges of evaluation bands, e.g. `[64, 85, 106, 128]`.
    pub bands: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub workdir: Option<String>,
    pub manifest: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            workdir: None,
            manifest: MANIFEST_FILE.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub prep: PrepSection,
    pub train: TrainSection,
    pub infer: InferSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "labelreach",
    version,
    about = "Train, apply and evaluate land-cover label extension models"
)]
pub struct Cli {
    /// JSON run configuration; every section is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory all other paths are relative to.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RawDtype {
    F32,
    U16,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world: embeddings, labels, class table and manifest.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        drift: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        classes: Option<u32>,
    },
    /// Wrap a headerless little-endian dump into a GRD1 file.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long, default_value_t = 1)]
        bands: u32,
        #[arg(long, value_enum, default_value_t = RawDtype::F32)]
        dtype: RawDtype,
        /// Input is pixel-interleaved (band fastest) rather than band-planar.
        #[arg(long)]
        interleaved: bool,
    },
    /// Filter, remap, tile and split the dataset named by the manifest.
    Prep {
        #[arg(long)]
        tile: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Prepare the dataset and fit one model family.
    Train {
        #[arg(long)]
        family: Option<String>,
    },
    /// Predict probabilities and a class map for a region.
    Infer {
        #[arg(long, default_value = MODEL_FILE)]
        model: PathBuf,
        /// Embedding GRD1 of the region; defaults to the manifest's embeddings.
        #[arg(long)]
        region: Option<PathBuf>,
        #[arg(long)]
        stride: Option<u32>,
    },
    /// Score a predicted class map against truth.
    Eval {
        #[arg(long, default_value = PREDICTED_FILE)]
        pred: PathBuf,
        #[arg(long, default_value = PREPARED_LABELS_FILE)]
        truth: PathBuf,
        /// Only score pixels in tiles of this split (train, val or test).
        #[arg(long)]
        split: Option<String>,
        /// Model name used in the Markdown table; defaults to the model file's family.
        #[arg(long)]
        name: Option<String>,
    },
    /// Assemble metric tables and render class maps.
    Report {
        /// `MODEL:SPLIT:metrics.json`, repeatable.
        #[arg(long = "entry")]
        entries: Vec<String>,
        #[arg(long, default_value = "report.md")]
        out: PathBuf,
        /// Label GRD1 to render as PPM.
        #[arg(long)]
        render: Option<PathBuf>,
        #[arg(long, default_value = MAP_FILE)]
        map_out: PathBuf,
    },
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format(_) => 1,
        Error::Config(_) => 2,
        Error::Shape(_) | Error::Data(_) => 3,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?;
    // a second call in one process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(workdir: &Path) -> Result<Self> {
        let path = workdir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::io(
                &path,
                std::io::Error::new(e.kind(), "another labelreach command is using this workdir"),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    let workdir = cli
        .workdir
        .clone()
        .or_else(|| cfg.paths.workdir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
    let _lock = Lock::acquire(&workdir)?;
    let ctx = Ctx { cfg, workdir };
    match cli.command {
        Command::Synth {
            seed,
            drift,
            noise_sigma,
            classes,
        } => {
            let mut s = ctx.cfg.synth.clone();
            s.seed = seed.unwrap_or(s.seed);
            s.drift = drift.unwrap_or(s.drift);
            s.noise_sigma = noise_sigma.unwrap_or(s.noise_sigma);
            s.classes = classes.unwrap_or(s.classes);
            cmd_synth(&ctx, &s)
        }
        Command::Convert {
            input,
            output,
            width,
            height,
            bands,
            dtype,
            interleaved,
        } => cmd_convert(&ctx, &input, &output, (width, height, bands), dtype, interleaved),
        Command::Prep { tile, seed } => {
            let mut ctx = ctx;
            ctx.cfg.prep.tile = tile.unwrap_or(ctx.cfg.prep.tile);
            ctx.cfg.prep.seed = seed.unwrap_or(ctx.cfg.prep.seed);
            let p = prepare(&ctx)?;
            println!(
                "{} classes, {} tiles: {} train, {} val, {} test",
                p.classes.len(),
                p.split.grid.len(),
                p.split.count(SplitKind::Train),
                p.split.count(SplitKind::Val),
                p.split.count(SplitKind::Test)
            );
            Ok(())
        }
        Command::Train { family } => {
            let family = match family {
                Some(f) => f.parse()?,
                None => ctx.cfg.train.family,
            };
            cmd_train(&ctx, family)
        }
        Command::Infer { model, region, stride } => cmd_infer(&ctx, &model, region.as_deref(), stride),
        Command::Eval {
            pred,
            truth,
            split,
            name,
        } => cmd_eval(&ctx, &pred, &truth, split.as_deref(), name.as_deref()),
        Command::Report {
            entries,
            out,
            render,
            map_out,
        } => cmd_report(&ctx, &entries, &out, render.as_deref(), &map_out),
    }
}

struct Ctx {
    cfg: RunConfig,
    workdir: PathBuf,
}

impl Ctx {
    fn path(&self, p: impl AsRef<Path>) -> PathBuf {
        self.workdir.join(p)
    }

    fn write(&self, name: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }
}

fn cmd_synth(ctx: &Ctx, s: &SynthConfig) -> Result<()> {
    let world = generate_world(s)?;
    let table = world.class_table();
    write_grid(&world.embeddings, ctx.path(EMBEDDINGS_FILE))?;
    write_grid(&world.labels, ctx.path(LABELS_FILE))?;
    table.write(ctx.path(CLASSES_FILE))?;
    GridManifest {
        embedding_path: EMBEDDINGS_FILE.into(),
        label_path: LABELS_FILE.into(),
        resolution_m: 10.0,
        class_table_path: CLASSES_FILE.into(),
        notes: format!("synthetic world, seed {}", s.seed),
    }
    .write(ctx.path(MANIFEST_FILE))?;
    println!("class,pixels,fraction");
    for e in table.entries() {
        println!("{},{},{:.4}", e.name, e.pixel_count, e.fraction);
    }
    Ok(())
}

fn cmd_convert(
    ctx: &Ctx,
    input: &Path,
    output: &Path,
    (width, height, bands): (u32, u32, u32),
    dtype: RawDtype,
    interleaved: bool,
) -> Result<()> {
    let src = ctx.path(input);
    let bytes = fs::read(&src).map_err(|e| Error::io(&src, e))?;
    let n = width as usize * height as usize;
    let count = n * bands as usize;
    let elem = match dtype {
        RawDtype::F32 => 4,
        RawDtype::U16 => 2,
    };
    if bytes.len() != count * elem {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {width}x{height}x{bands}, found {}",
            src.display(),
            count * elem,
            bytes.len()
        )));
    }
    let out = ctx.path(output);
    match dtype {
        RawDtype::F32 => {
            let raw: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect();
            let values = if interleaved {
                let d = bands as usize;
                (0..count).map(|i| raw[(i % n) * d + i / n]).collect()
            } else {
                raw
            };
            write_grid(&EmbeddingRaster::new(width, height, bands, values)?, &out)
        }
        RawDtype::U16 => {
            if bands != 1 {
                return Err(Error::Config("u16 label dumps have exactly one band".into()));
            }
            let ids = bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            write_grid(&LabelRaster::new(width, height, ids)?, &out)
        }
    }
}

/// The dataset after class filtering/remapping, with its tile split.
pub struct Prepared {
    pub embeddings: EmbeddingRaster,
    pub labels: LabelRaster,
    pub classes: ClassTable,
    pub split: SplitAssignment,
}

fn prepare(ctx: &Ctx) -> Result<Prepared> {
    let p = &ctx.cfg.prep;
    let manifest_path = ctx.path(&ctx.cfg.paths.manifest);
    let manifest = GridManifest::read(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let ds = manifest.load(base)?;

    let (labels, table) = match &p.remap_path {
        Some(r) => {
            let path = ctx.path(r);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let remap = RemapTable::from_csv(&text)?;
            remap.check_total(&ds.classes)?;
            let labels = remap_classes(&ds.labels, &remap)?;
            let table = remapped_table(&labels, &remap)?;
            (labels, table)
        }
        None => {
            let table = histogram_named(&ds.labels, &ds.classes)?;
            (ds.labels, table)
        }
    };
    let (labels, classes, _) = filter_rare_classes(&labels, &table, p.threshold)?;

    let grid = make_tile_grid(labels.width(), labels.height(), p.tile)?;
    let split = {
        let has = tile_has_labels(&grid, &labels);
        match p.train_rows {
            Some((start, end)) => {
                let within = grid.tiles_within_rows(start, end);
                assign_splits(&grid, p.fractions, p.seed, |i| has(i) && within(i))?.with_excluded_as(SplitKind::Test)
            }
            None => assign_splits(&grid, p.fractions, p.seed, has)?,
        }
    };
    write_grid(&labels, ctx.path(PREPARED_LABELS_FILE))?;
    classes.write(ctx.path(PREPARED_CLASSES_FILE))?;
    ctx.write(SPLITS_FILE, split.to_csv())?;
    Ok(Prepared {
        embeddings: ds.embeddings,
        labels,
        classes,
        split,
    })
}

fn cmd_train(ctx: &Ctx, family: Family) -> Result<()> {
    let cfg = ctx.cfg.train.config();
    cfg.validate()?;
    let p = prepare(ctx)?;
    let c = p.classes.len();
    let pixels = |kind| -> Result<_> { extract_pixels(&p.embeddings, &p.labels, &p.split, kind)?.with_n_classes(c) };
    let model = match family {
        Family::Logreg => Model::LogReg(fit_logreg(&pixels(SplitKind::Train)?, &cfg.logreg)?),
        Family::Forest => Model::Forest(fit_random_forest(&pixels(SplitKind::Train)?, &cfg.forest)?),
        Family::Gbt => Model::Gbt(fit_gbt(&pixels(SplitKind::Train)?, &cfg.gbt)?),
        Family::Context => Model::Context(fit_context(&p.embeddings, &p.labels, &p.split, &cfg)?),
    };
    if model.n_classes() != c {
        return Err(Error::Data(format!(
            "training tiles cover {} of {c} classes",
            model.n_classes()
        )));
    }
    let names = p.classes.entries().iter().map(|e| e.name.clone()).collect();
    ModelFile::new(&model, &cfg, names)?.write(ctx.path(MODEL_FILE))?;
    let mut log = String::from("step,loss\n");
    for (i, l) in model.training_log().iter().enumerate() {
        log += &format!("{i},{l:e}\n");
    }
    ctx.write(TRAIN_LOG_FILE, log)?;

    if let Some(m) = model.as_pixel() {
        for kind in [SplitKind::Train, SplitKind::Val] {
            if p.split.count(kind) > 0 {
                if let Ok(ds) = pixels(kind) {
                    println!("{kind} accuracy: {:.4}", crate::models::accuracy_on(m, &ds));
                }
            }
        }
    }
    println!("wrote {} ({})", MODEL_FILE, family.display_name());
    Ok(())
}

fn class_table_from_names(names: &[String]) -> Result<ClassTable> {
    ClassTable::new(
        names
            .iter()
            .enumerate()
            .map(|(i, n)| ClassEntry {
                class_id: i as u16,
                name: n.clone(),
                pixel_count: 0,
                fraction: 0.0,
            })
            .collect(),
    )
}

fn cmd_infer(ctx: &Ctx, model_path: &Path, region: Option<&Path>, stride: Option<u32>) -> Result<()> {
    let file = ModelFile::read(ctx.path(model_path))?;
    let region_path = match region {
        Some(r) => ctx.path(r),
        None => {
            let manifest_path = ctx.path(&ctx.cfg.paths.manifest);
            let m = GridManifest::read(&manifest_path)?;
            manifest_path.parent().unwrap_or(Path::new(".")).join(m.embedding_path)
        }
    };
    let emb = read_grid(&region_path)?.into_embedding()?;
    file.check_compatible(emb.bands() as usize)?;
    let model = file.model()?;
    let probs = match model.as_pixel() {
        Some(m) => predict_raster_pixelwise(m, &emb, None)?,
        None => {
            let tile = ctx.cfg.infer.tile.unwrap_or(ctx.cfg.prep.tile);
            let stride = stride.or(ctx.cfg.infer.stride).unwrap_or((tile / 2).max(1));
            predict_raster_tiled(model.as_tile().as_ref(), &emb, tile, stride)?
        }
    };
    probs.write(ctx.path(PROBS_FILE))?;
    let map = argmax_map(&probs)?;
    write_grid(&map, ctx.path(PREDICTED_FILE))?;
    let palette = Palette::for_table(&class_table_from_names(&file.class_names)?);
    ctx.write(MAP_FILE, render_class_map(&map, &palette)?)?;
    println!("wrote {PROBS_FILE}, {PREDICTED_FILE}, {MAP_FILE}");
    Ok(())
}

fn read_labels(ctx: &Ctx, p: &Path) -> Result<LabelRaster> {
    read_grid(ctx.path(p))?.into_labels()
}

fn cmd_eval(ctx: &Ctx, pred: &Path, truth: &Path, split: Option<&str>, name: Option<&str>) -> Result<()> {
    let pred = read_labels(ctx, pred)?;
    let mut truth = read_labels(ctx, truth)?;
    let classes_path = ctx.path(PREPARED_CLASSES_FILE);
    let table = if classes_path.exists() {
        ClassTable::read(&classes_path)?
    } else {
        let max = truth
            .ids()
            .iter()
            .chain(pred.ids())
            .filter(|&&v| v != NODATA)
            .max()
            .copied()
            .unwrap_or(0);
        class_table_from_names(&(0..=max).map(|i| format!("class_{i}")).collect::<Vec<_>>())?
    };
    let c = table.len();
    if let Some(kind) = split {
        let kind: SplitKind = kind.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let grid = make_tile_grid(truth.width(), truth.height(), ctx.cfg.prep.tile)?;
        let path = ctx.path(SPLITS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let s = SplitAssignment::from_csv(&text, &grid)?;
        let w = truth.width();
        for (i, id) in truth.ids_mut().iter_mut().enumerate() {
            let (x, y) = (i as u32 % w, i as u32 / w);
            let tile = (y / grid.tile * grid.cols + x / grid.tile) as usize;
            if s.kinds[tile] != kind {
                *id = NODATA;
            }
        }
    }
    let cm = confusion(&truth, &pred, c)?;
    let rep = metrics_report(&cm)?;
    ctx.write("metrics.json", rep.to_json()?)?;
    ctx.write("confusion.csv", cm.to_csv())?;
    ctx.write("per_class.csv", per_class_csv(&rep, &table)?)?;
    let model_name = match name {
        Some(n) => n.to_owned(),
        None => ModelFile::read(ctx.path(MODEL_FILE))
            .map(|m| m.family.display_name().to_owned())
            .unwrap_or_else(|_| "Model".into()),
    };
    let split_name = split.unwrap_or("eval");
    ctx.write(
        "metrics_table.md",
        metrics_table(&[TableRow {
            model: &model_name,
            split: split_name,
            report: &rep,
        }]),
    )?;
    if let Some(edges) = &ctx.cfg.eval.bands {
        let bands = assign_bands(truth.height(), &BandSpec { edges: edges.clone() })?;
        let reports = evaluate_by_band(&truth, &pred, &bands, c)?;
        ctx.write("band_reports.json", serde_json::to_string_pretty(&reports)? + "\n")?;
        for b in &reports {
            match &b.report {
                Some(r) => println!("band {}: accuracy {:.4} ({} px)", b.band, r.accuracy, b.pixels),
                None => println!("band {}: empty", b.band),
            }
        }
    }
    println!(
        "accuracy {:.4}  macro J {:.4}  macro F1 {:.4}",
        rep.accuracy, rep.macro_jaccard, rep.macro_f1
    );
    Ok(())
}

fn cmd_report(ctx: &Ctx, entries: &[String], out: &Path, render: Option<&Path>, map_out: &Path) -> Result<()> {
    let mut parsed = Vec::new();
    if entries.is_empty() {
        let name = ModelFile::read(ctx.path(MODEL_FILE))
            .map(|m| m.family.display_name().to_owned())
            .unwrap_or_else(|_| "Model".into());
        parsed.push((name, "eval".to_owned(), PathBuf::from("metrics.json")));
    }
    for e in entries {
        let mut parts = e.splitn(3, ':');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(m), Some(s), Some(p)) => parsed.push((m.to_owned(), s.to_owned(), PathBuf::from(p))),
            _ => return Err(Error::Config(format!("report entry {e:?} is not MODEL:SPLIT:PATH"))),
        }
    }
    let mut reports = Vec::new();
    for (_, _, p) in &parsed {
        let path = ctx.path(p);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        reports.push(serde_json::from_str::<crate::metrics::MetricsReport>(&text)?);
    }
    let rows: Vec<TableRow> = parsed
        .iter()
        .zip(&reports)
        .map(|((m, s, _), r)| TableRow {
            model: m,
            split: s,
            report: r,
        })
        .collect();
    ctx.write(out, metrics_table(&rows))?;
    if let Some(r) = render {
        let labels = read_labels(ctx, r)?;
        let classes_path = ctx.path(PREPARED_CLASSES_FILE);
        let table = if classes_path.exists() {
            ClassTable::read(&classes_path)?
        } else {
            crate::prep::histogram_classes(&labels)?
        };
        ctx.write(map_out, render_class_map(&labels, &Palette::for_table(&table))?)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
