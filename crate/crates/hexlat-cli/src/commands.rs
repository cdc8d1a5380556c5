//! One function per subcommand.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hexlat::files::{read_hexa, read_image, write_hexa, write_image};
use hexlat::hexgrid::HexGridSpec;
use hexlat::hexnn::{
    self, build_dataset, evaluate, load_weights, save_weights, summary_table, Model, ModelSpec,
    TrainConfig,
};
use hexlat::metrics::{efficiency_report_for_spec, efficiency_sweep, SweepEntry};
use hexlat::render::{rasterize, RenderOptions};
use hexlat::transform::{
    choose_grid, grid_for_radius, h2s, resize_square, s2h, InterpMode, SquareImage,
};
use hexlat::{Error, Result};

use crate::bench::{measure, BenchReport};
use crate::data::{self, DataArgs};
use crate::report;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelKind {
    /// 3x3-kernel square baseline network.
    #[value(name = "s-cnn")]
    SCnn,
    /// Seven-tap hexagonal network.
    #[value(name = "h-cnn")]
    HCnn,
}

impl ModelKind {
    fn base_spec(self) -> ModelSpec {
        match self {
            ModelKind::SCnn => ModelSpec::s_cnn(),
            ModelKind::HCnn => ModelSpec::h_cnn(),
        }
    }

    fn wants_hex(self) -> bool {
        matches!(self, ModelKind::HCnn)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SweepFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BenchFormat {
    Text,
    Json,
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn image_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Grid choice shared by metrics/sweep/bench: an explicit circumradius, or
/// the grid whose sample count matches the pixel count.
fn grid_choice(img: &SquareImage, radius: Option<f64>) -> Result<HexGridSpec> {
    match radius {
        Some(r) => grid_for_radius(img.width(), img.height(), r),
        None => choose_grid(img.width(), img.height()),
    }
}

// ---------------------------------------------------------------- transform

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Source file: PNG/PGM image or .hexa grid.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination file: .hexa grid or PNG/PGM image.
    #[arg(long)]
    pub output: PathBuf,
    /// Resampling mode: nearest, bilinear, or bicubic.
    #[arg(long, default_value = "bilinear")]
    pub interp: InterpMode,

    /// Hexagon circumradius in pixel units (image-to-grid).
    #[arg(long, conflicts_with = "equal_count")]
    pub radius: Option<f64>,
    /// Match the grid's sample count to the pixel count (the default).
    #[arg(long)]
    pub equal_count: bool,
    /// Explicit grid row count (with --cols; image-to-grid).
    #[arg(long, requires = "cols", conflicts_with_all = ["radius", "equal_count"])]
    pub rows: Option<usize>,
    /// Explicit grid column count (with --rows; image-to-grid).
    #[arg(long, requires = "rows")]
    pub cols: Option<usize>,

    /// Output raster width (grid-to-image or image resize).
    #[arg(long)]
    pub width: Option<usize>,
    /// Output raster height (grid-to-image or image resize).
    #[arg(long)]
    pub height: Option<usize>,
}

pub fn transform(args: TransformArgs) -> Result<()> {
    match (has_ext(&args.input, "hexa"), has_ext(&args.output, "hexa")) {
        (false, true) => {
            let img = read_image(&args.input)?;
            let spec = match (args.rows, args.cols) {
                (Some(rows), Some(cols)) => {
                    // fill the image width, like the automatic sizing does
                    let shift = if rows >= 2 { 0.5 } else { 0.0 };
                    let pitch = img.width() as f64 / (cols as f64 + shift);
                    HexGridSpec::new(rows, cols, pitch)?
                }
                _ => grid_choice(&img, args.radius)?,
            };
            let hex = s2h(&img, &spec, args.interp)?;
            write_hexa(&hex, &args.output)
        }
        (true, false) => {
            let hex = read_hexa(&args.input)?;
            // default to the grid's own bounding box, which round-trips
            // grids built with --equal-count
            let spec = hex.spec();
            let width = args.width.unwrap_or(spec.bbox_width().round().max(1.0) as usize);
            let height = args.height.unwrap_or(spec.bbox_height().round().max(1.0) as usize);
            let img = h2s(&hex, width, height, args.interp)?;
            write_image(&img, &args.output)
        }
        (false, false) => {
            let (Some(width), Some(height)) = (args.width, args.height) else {
                return Err(Error::invalid_argument(
                    "image-to-image resizing needs --width and --height",
                ));
            };
            let img = read_image(&args.input)?;
            let resized = resize_square(&img, width, height, args.interp)?;
            write_image(&resized, &args.output)
        }
        (true, true) => Err(Error::invalid_argument(
            "both sides are .hexa grids; nothing to transform",
        )),
    }
}

// ------------------------------------------------------------------- render

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Source .hexa grid.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination PNG/PGM image.
    #[arg(long)]
    pub output: PathBuf,
    /// Output pixels per pitch unit.
    #[arg(long, default_value_t = 8.0)]
    pub scale: f64,
    /// Sub-samples per pixel axis (1, 2, or 4).
    #[arg(long, default_value_t = 1)]
    pub supersample: u8,
    /// Sample value painted outside every hexagon.
    #[arg(long, default_value_t = 0.0)]
    pub background: f64,
}

pub fn render(args: RenderArgs) -> Result<()> {
    let hex = read_hexa(&args.input)?;
    let options = RenderOptions {
        scale: args.scale,
        supersample: args.supersample,
        background: args.background,
    };
    let img = rasterize(&hex, &options)?;
    write_image(&img, &args.output)
}

// ------------------------------------------------------------------ metrics

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Image to score.
    #[arg(long)]
    pub input: PathBuf,
    /// Hexagon circumradius in pixel units.
    #[arg(long, conflicts_with = "equal_count")]
    pub radius: Option<f64>,
    /// Use the grid whose sample count matches the pixel count (default).
    #[arg(long)]
    pub equal_count: bool,
    #[arg(long, default_value = "bilinear")]
    pub interp: InterpMode,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn metrics(args: MetricsArgs) -> Result<()> {
    let img = read_image(&args.input)?;
    let spec = grid_choice(&img, args.radius)?;
    let rep = efficiency_report_for_spec(&img, &spec, args.interp)?;
    let value = report::efficiency_json(&image_name(&args.input), args.interp, &rep);
    report::emit(args.output.as_deref(), &report::pretty(&value))
}

// -------------------------------------------------------------------- sweep

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Image to score.
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated hexagon circumradii to test.
    #[arg(long, value_delimiter = ',', default_value = "0.75,1,1.25,1.5,2,2.5,3,4")]
    pub radii: Vec<f64>,
    #[arg(long, default_value = "bilinear")]
    pub interp: InterpMode,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SweepFormat::Csv)]
    pub format: SweepFormat,
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    if args.radii.is_empty() {
        return Err(Error::invalid_argument("the sweep needs at least one radius"));
    }
    let img = read_image(&args.input)?;
    let entries = efficiency_sweep(&img, &args.radii, args.interp);
    for entry in &entries {
        if let SweepEntry::Skipped { r, reason } = entry {
            eprintln!("note: skipping R {r}: {reason}");
        }
    }
    let name = image_name(&args.input);
    let text = match args.format {
        SweepFormat::Csv => report::sweep_csv(&name, &entries),
        SweepFormat::Json => report::sweep_json(&name, args.interp, &entries),
    };
    report::emit(args.output.as_deref(), &text)
}

// ------------------------------------------------------------------ summary

#[derive(Args, Debug)]
pub struct SummaryArgs {
    /// Architecture to describe.
    #[arg(long, value_enum)]
    pub model: ModelKind,
}

pub fn summary(args: SummaryArgs) -> Result<()> {
    print!("{}", summary_table(&args.model.base_spec())?);
    Ok(())
}

// -------------------------------------------------------------- train, eval

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::HCnn)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Seed for initialization, shuffling, and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resampling mode for the image-to-grid conversion (h-cnn only).
    #[arg(long, default_value = "bilinear")]
    pub interp: InterpMode,
    /// Save the trained weights here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn sized_spec(kind: ModelKind, dataset: &hexnn::Dataset) -> Result<ModelSpec> {
    let (rows, cols, channels) = dataset.sample_dims();
    kind.base_spec()
        .with_input(rows, cols, channels)?
        .with_classes(dataset.num_classes())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let split = data::load(&args.data)?;
    let hex_mode = args.model.wants_hex().then_some(args.interp);
    let dataset = build_dataset(&split.train, &split.test, split.num_classes, hex_mode)?;
    let spec = sized_spec(args.model, &dataset)?;

    println!(
        "dataset: {} train / {} test samples, {} classes, inputs ({}, {}, {})",
        dataset.train_len(),
        dataset.test_len(),
        dataset.num_classes(),
        dataset.sample_dims().0,
        dataset.sample_dims().1,
        dataset.sample_dims().2,
    );
    let mut config = TrainConfig::new(args.epochs, args.seed);
    config.batch_size = args.batch_size;
    let outcome = hexnn::train(&spec, &dataset, &config)?;

    for stats in &outcome.history {
        println!(
            "epoch {}/{}: loss {:.6} accuracy {:.4}",
            stats.epoch, args.epochs, stats.train_loss, stats.train_accuracy
        );
    }
    if dataset.test_len() > 0 {
        println!(
            "test: loss {:.6} accuracy {:.4}",
            outcome.test_loss, outcome.test_accuracy
        );
    }
    if let Some(path) = &args.output {
        save_weights(&outcome.model, path)?;
        println!("weights written to {}", path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weights file produced by `train --output`.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::HCnn)]
    pub model: ModelKind,
    #[arg(long, default_value = "bilinear")]
    pub interp: InterpMode,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let split = data::load(&args.data)?;
    if split.test.is_empty() {
        return Err(Error::invalid_argument("evaluation needs a non-empty test split"));
    }
    let hex_mode = args.model.wants_hex().then_some(args.interp);
    let dataset = build_dataset(&split.train, &split.test, split.num_classes, hex_mode)?;
    let spec = sized_spec(args.model, &dataset)?;
    let mut model = Model::seeded(&spec, 0)?;
    load_weights(&mut model, &args.weights)?;
    let (loss, accuracy) = evaluate(&model, &dataset)?;
    println!("test: loss {loss:.6} accuracy {accuracy:.4}");
    Ok(())
}

// -------------------------------------------------------------------- bench

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Image the transformations run on.
    #[arg(long)]
    pub input: PathBuf,
    /// Hexagon circumradius in pixel units.
    #[arg(long, conflicts_with = "equal_count")]
    pub radius: Option<f64>,
    /// Use the grid whose sample count matches the pixel count (default).
    #[arg(long)]
    pub equal_count: bool,
    #[arg(long, default_value = "bilinear")]
    pub interp: InterpMode,
    /// Timed runs per operation.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Untimed warmup batches per operation.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Images transformed per timed run.
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = BenchFormat::Text)]
    pub format: BenchFormat,
}

pub fn bench(args: BenchArgs) -> Result<()> {
    if args.runs == 0 || args.batch == 0 {
        return Err(Error::invalid_argument("--runs and --batch must be positive"));
    }
    // decode once, up front: timings cover the transforms only
    let img = read_image(&args.input)?;
    let spec = grid_choice(&img, args.radius)?;
    let interp = args.interp;
    let (width, height) = (img.width(), img.height());
    let input_desc = format!("{width}x{height}x{}", img.channels());
    let parallel = rayon::current_num_threads() > 1;

    // surface errors before the timing loop swallows them
    let hex = s2h(&img, &spec, interp)?;
    h2s(&hex, width, height, interp)?;
    resize_square(&img, spec.cols(), spec.rows(), interp)?;

    type BenchOp = Box<dyn Fn() + Sync>;
    let ops: Vec<(&str, BenchOp)> = vec![
        ("s2h", {
            let img = img.clone();
            Box::new(move || {
                let _ = std::hint::black_box(s2h(&img, &spec, interp));
            })
        }),
        ("h2s", {
            let hex = hex.clone();
            Box::new(move || {
                let _ = std::hint::black_box(h2s(&hex, width, height, interp));
            })
        }),
        ("square-resize", {
            let img = img.clone();
            Box::new(move || {
                let _ = std::hint::black_box(resize_square(&img, spec.cols(), spec.rows(), interp));
            })
        }),
    ];

    let mut reports = Vec::with_capacity(ops.len());
    for (name, op) in &ops {
        let (mean, stddev) = measure(args.batch, args.runs, args.warmup, parallel, op.as_ref());
        reports.push(BenchReport {
            operation: name.to_string(),
            mean,
            stddev,
            runs: args.runs,
            warmup: args.warmup,
            input: input_desc.clone(),
        });
    }

    match args.format {
        BenchFormat::Text => {
            println!(
                "input {input_desc}, grid {}x{} (R {:.4}), batch {}",
                spec.rows(),
                spec.cols(),
                spec.circumradius(),
                args.batch
            );
            for r in &reports {
                println!(
                    "{:<14} {:>10.1} \u{b1} {:.1} images/s  ({} runs)",
                    r.operation, r.mean, r.stddev, r.runs
                );
            }
        }
        BenchFormat::Json => {
            let items: Vec<serde_json::Value> = reports.iter().map(BenchReport::to_json).collect();
            print!("{}", report::pretty(&serde_json::Value::Array(items)));
        }
    }
    Ok(())
}
