//! The degradation x restoration benchmark matrix.

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::RestoreConfig;
use crate::degrade::{apply_recipe, BlurSpec, DegradationRecipe, NoiseSpec, Step};
use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::metrics::MetricReport;
use crate::nn::{load_checkpoint, restore, ResUNet};
use crate::rng::derive_seed;

/// One column group of the benchmark: a degradation applied to every image.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub id: String,
    pub steps: Vec<Step>,
}

impl GridCell {
    pub fn new(steps: Vec<Step>) -> Self {
        let id = DegradationRecipe::new(steps.clone(), 0).label();
        GridCell { id, steps }
    }
}

pub const DEFAULT_AWGN_LEVELS: [f64; 6] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
pub const DEFAULT_DEBLUR: BlurSpec = BlurSpec::Motion {
    length: 9,
    angle: 37.0,
};

/// AWGN at six levels, a motion-blur deblur column and a composite
/// speckle + salt-and-pepper + Poisson column on top of the same blur.
pub fn default_grid() -> Vec<GridCell> {
    let mut grid: Vec<GridCell> = DEFAULT_AWGN_LEVELS
        .iter()
        .map(|&sigma| GridCell::new(vec![Step::Noise(NoiseSpec::Awgn { sigma })]))
        .collect();
    grid.push(GridCell::new(vec![Step::Blur(DEFAULT_DEBLUR)]));
    grid.push(GridCell::new(vec![
        Step::Blur(DEFAULT_DEBLUR),
        Step::Noise(NoiseSpec::Speckle { sigma: 0.1 }),
        Step::Noise(NoiseSpec::SaltPepper { p: 0.01 }),
        Step::Noise(NoiseSpec::Poisson { peak: 500.0 }),
    ]));
    grid
}

/// `default`, or cells separated by `;` whose steps are joined by `+`,
/// e.g. `awgn:25;motion:9:37+poisson:300`.
pub fn parse_grid(spec: &str) -> Result<Vec<GridCell>> {
    if spec.trim() == "default" {
        return Ok(default_grid());
    }
    let grid = spec
        .split(';')
        .filter(|c| !c.trim().is_empty())
        .map(|cell| {
            cell.split('+')
                .map(|s| Step::parse(s.trim()))
                .collect::<Result<Vec<_>>>()
                .map(GridCell::new)
        })
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(invalid!("benchmark grid is empty"));
    }
    Ok(grid)
}

#[derive(Clone, Debug)]
pub enum Method {
    /// Returns the degraded image unchanged.
    Identity,
    Classical(RestoreConfig),
    Neural { name: String, model: Box<ResUNet<f32>> },
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::Identity => "identity",
            Method::Classical(cfg) => cfg.name(),
            Method::Neural { name, .. } => name,
        }
    }

    pub fn neural_from_checkpoint(path: impl Into<PathBuf>) -> Result<Method> {
        let (model, _) = load_checkpoint::<f32>(path.into())?;
        Ok(Method::Neural {
            name: "neural".into(),
            model: Box::new(model),
        })
    }

    /// Parses one name of a `--methods` list: `identity`, a classical method
    /// with default parameters, or `neural` (which needs a checkpoint).
    pub fn parse(name: &str, checkpoint: Option<&PathBuf>) -> Result<Method> {
        match name {
            "identity" => Ok(Method::Identity),
            "neural" => match checkpoint {
                Some(p) => Method::neural_from_checkpoint(p),
                None => Err(invalid!("method `neural` needs a checkpoint")),
            },
            other => RestoreConfig::default_for(other).map(Method::Classical),
        }
    }

    fn run(&self, degraded: &Image, recipe: &DegradationRecipe) -> Result<Image> {
        match self {
            Method::Identity => Ok(degraded.clone()),
            Method::Classical(cfg) => {
                let kernel = if cfg.is_deconvolution() {
                    recipe.blur_kernel()?
                } else {
                    None
                };
                cfg.apply(degraded, kernel.as_ref())
            }
            Method::Neural { model, .. } => restore(&mut model.clone(), degraded),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub image_id: String,
    pub method: String,
    pub degradation_id: String,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchFailure {
    pub image_id: String,
    pub method: String,
    pub degradation_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
}

/// Mean SSIM/PSNR over the rows of one (method, degradation) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: String,
    pub degradation_id: String,
    pub count: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Groups rows by (method, degradation) in order of first appearance.
pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut out: Vec<Aggregate> = Vec::new();
    for r in rows {
        let key = (r.method.as_str(), r.degradation_id.as_str());
        let i = *index.entry(key).or_insert_with(|| {
            out.push(Aggregate {
                method: r.method.clone(),
                degradation_id: r.degradation_id.clone(),
                count: 0,
                mean_psnr: 0.0,
                mean_ssim: 0.0,
            });
            out.len() - 1
        });
        let a = &mut out[i];
        a.count += 1;
        a.mean_psnr += r.report.psnr;
        a.mean_ssim += r.report.ssim;
    }
    for a in &mut out {
        a.mean_psnr /= a.count as f64;
        a.mean_ssim /= a.count as f64;
    }
    out
}

/// Seed of the degradation applied to image `image_index` in cell
/// `cell_index`.
pub fn cell_seed(seed: u64, image_index: usize, cell_index: usize) -> u64 {
    derive_seed(derive_seed(seed, image_index as u64), cell_index as u64)
}

/// Scores every method on every (image, cell) pair. Tasks run on a pool of
/// `threads` workers (0 = one per core); results are collected in
/// image-major, cell, method order, so the output does not depend on the
/// thread count. A failing method is recorded and the run continues.
pub fn run_bench(
    images: &[(String, Image)],
    methods: &[Method],
    grid: &[GridCell],
    seed: u64,
    threads: usize,
) -> Result<BenchResult> {
    if methods.is_empty() {
        return Err(invalid!("no restoration methods given"));
    }
    if grid.is_empty() {
        return Err(invalid!("benchmark grid is empty"));
    }
    if images.is_empty() {
        return Err(invalid!("no images to benchmark"));
    }
    let tasks: Vec<(usize, usize)> = (0..images.len())
        .flat_map(|i| (0..grid.len()).map(move |j| (i, j)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Vec<std::result::Result<BenchRow, BenchFailure>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, j)| run_task(&images[i], &grid[j], methods, cell_seed(seed, i, j)))
            .collect()
    });
    let mut result = BenchResult::default();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(row) => result.rows.push(row),
            Err(failure) => result.failures.push(failure),
        }
    }
    Ok(result)
}

fn run_task(
    (image_id, clean): &(String, Image),
    cell: &GridCell,
    methods: &[Method],
    seed: u64,
) -> Vec<std::result::Result<BenchRow, BenchFailure>> {
    let recipe = DegradationRecipe::new(cell.steps.clone(), seed);
    let fail = |method: &str, e: Error| BenchFailure {
        image_id: image_id.clone(),
        method: method.to_string(),
        degradation_id: cell.id.clone(),
        error: e.to_string(),
    };
    let degraded = match apply_recipe(clean, &recipe) {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            return methods
                .iter()
                .map(|m| Err(fail(m.name(), Error::InvalidArgument(msg.clone()))))
                .collect();
        }
    };
    methods
        .iter()
        .map(|m| {
            m.run(&degraded, &recipe)
                .and_then(|out| MetricReport::compute(clean, &out))
                .map(|report| BenchRow {
                    image_id: image_id.clone(),
                    method: m.name().to_string(),
                    degradation_id: cell.id.clone(),
                    report,
                })
                .map_err(|e| fail(m.name(), e))
        })
        .collect()
}

/// Reads `IR_THREADS` (unset or 0 = automatic).
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("IR_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| invalid!("IR_THREADS must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}
