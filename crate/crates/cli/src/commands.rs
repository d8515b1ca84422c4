use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ir_core::color::{
    apply_pipeline, estimate_wb_grayworld, estimate_wb_whitepatch, load_matrix,
};
use ir_core::degrade::apply_recipe;
use ir_core::harness::{
    aggregates_to_csv, failures_to_csv, load_clean_images, markdown_table, parse_grid, read_csv,
    rows_to_csv, run_bench, synth_corpus, threads_from_env, write_corpus, Manifest, Method,
};
use ir_core::image::{load_image, save_image};
use ir_core::nn::{load_checkpoint, restore};
use ir_core::{
    BlurSpec, ColorPipeline, DegradationRecipe, Image, MetricReport, NoiseSpec, RestoreConfig,
};

use crate::args::{
    BenchArgs, Cli, Command, DegradeArgs, MetricsArgs, ReportArgs, RestoreArgs, SynthArgs,
    WbArgs, WbMethod,
};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Degrade(a) => degrade(a),
        Command::Restore(a) => restore_cmd(a),
        Command::Wb(a) => wb(a),
        Command::Metrics(a) => metrics(a),
        Command::Train(a) => crate::train::train(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

pub fn print_config(command: &str, config: &impl std::fmt::Debug) {
    eprintln!("ir {command}: {config:?}");
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ir_core::Error::io(path, e).into())
}

fn synth(a: SynthArgs) -> Result<()> {
    print_config("synth", &a);
    let images = synth_corpus(a.n, a.size, a.seed)?;
    let manifest = write_corpus(&a.out, &images, a.train_fraction, a.seed)?;
    eprintln!("wrote {} scenes to {}", manifest.len(), a.out.display());
    Ok(())
}

fn degrade(a: DegradeArgs) -> Result<()> {
    let recipe = match &a.recipe {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| ir_core::Error::io(path, e))?;
            DegradationRecipe::from_json(&text)?
        }
        None => {
            let mut blurs = Vec::new();
            if let Some(m) = &a.motion {
                blurs.push(BlurSpec::parse(&format!("motion:{m}"))?);
            }
            if let Some(radius) = a.disk {
                blurs.push(BlurSpec::Disk { radius });
            }
            let mut noises = Vec::new();
            if let Some(sigma) = a.awgn {
                noises.push(NoiseSpec::Awgn { sigma });
            }
            if let Some(sigma) = a.speckle {
                noises.push(NoiseSpec::Speckle { sigma });
            }
            if let Some(p) = a.salt_pepper {
                noises.push(NoiseSpec::SaltPepper { p });
            }
            if let Some(peak) = a.poisson {
                noises.push(NoiseSpec::Poisson { peak });
            }
            DegradationRecipe::blur_then_noise(&blurs, &noises, a.seed)
        }
    };
    print_config("degrade", &recipe);
    let img = load_image(&a.input)?;
    let out = apply_recipe(&img, &recipe)?;
    save_image(&out, &a.out)?;
    if let Some(path) = &a.save_recipe {
        write_text(path, &recipe.to_json())?;
    }
    Ok(())
}

fn split_param(p: &str) -> Result<(String, String)> {
    match p.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => bail!("--param expects KEY=VALUE, got {p:?}"),
    }
}

fn restore_cmd(a: RestoreArgs) -> Result<()> {
    let img = load_image(&a.input)?;
    let out = if a.method == "neural" {
        if !a.params.is_empty() {
            bail!("the neural method takes no --param overrides");
        }
        let Some(path) = &a.checkpoint else {
            bail!("--method neural needs --checkpoint");
        };
        print_config("restore", &a);
        let (mut model, _) = load_checkpoint::<f32>(path)?;
        restore(&mut model, &img)?
    } else {
        let params = a
            .params
            .iter()
            .map(|p| split_param(p))
            .collect::<Result<Vec<_>>>()?;
        let cfg = RestoreConfig::from_params(&a.method, &params)?;
        print_config("restore", &cfg);
        cfg.apply(&img, None)?
    };
    save_image(&out, &a.out)?;
    Ok(())
}

fn wb(a: WbArgs) -> Result<()> {
    let img = load_image(&a.input)?;
    let gains = match a.method {
        WbMethod::Grayworld => estimate_wb_grayworld(&img)?,
        WbMethod::Whitepatch => estimate_wb_whitepatch(&img, a.percentile)?,
    };
    let mut pipeline = ColorPipeline::from_gains(gains)?.with_srgb_encode(a.srgb);
    if let Some(path) = &a.matrix {
        pipeline = pipeline.with_matrix(load_matrix(path)?)?;
    }
    print_config("wb", &pipeline);
    save_image(&apply_pipeline(&img, &pipeline)?, &a.out)?;
    Ok(())
}

pub fn format_report(r: &MetricReport) -> String {
    let psnr = if r.psnr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{:?}", r.psnr)
    };
    format!(
        "psnr={psnr} ssim={:?} mse={:?} edge_loss={:?}",
        r.ssim, r.mse, r.edge_loss
    )
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let reference = load_image(&a.reference)?;
    let test = load_image(&a.test)?;
    let report = MetricReport::compute(&reference, &test)?;
    if a.json {
        let psnr = if report.psnr.is_infinite() {
            serde_json::Value::String("inf".into())
        } else {
            serde_json::json!(report.psnr)
        };
        let value = serde_json::json!({
            "psnr": psnr,
            "ssim": report.ssim,
            "mse": report.mse,
            "edge_loss": report.edge_loss,
        });
        println!("{value}");
    } else {
        println!("{}", format_report(&report));
    }
    Ok(())
}

/// Loads the benchmark or training images from `--synth N` or `--manifest`.
pub fn source_images(
    synth: Option<usize>,
    manifest: Option<&Path>,
    size: usize,
    seed: u64,
) -> Result<Vec<(String, Image)>> {
    match (synth, manifest) {
        (Some(n), None) => Ok(synth_corpus(n, size, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, img)| (format!("scene_{i:04}"), img))
            .collect()),
        (None, Some(path)) => {
            let manifest = Manifest::load(path)?;
            Ok(load_clean_images(&manifest)?)
        }
        _ => bail!("give exactly one of --synth N or --manifest FILE"),
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let methods = a
        .methods
        .iter()
        .map(|m| Method::parse(m.trim(), a.checkpoint.as_ref()))
        .collect::<ir_core::Result<Vec<_>>>()?;
    let threads = threads_from_env()?;
    print_config("bench", &a);
    eprintln!(
        "ir bench: grid = [{}], threads = {}",
        grid.iter().map(|c| c.id.as_str()).collect::<Vec<_>>().join(", "),
        if threads == 0 { "auto".to_string() } else { threads.to_string() }
    );
    let images = source_images(a.synth, a.manifest.as_deref(), a.size, a.seed)?;
    let result = run_bench(&images, &methods, &grid, a.seed, threads)?;

    fs::create_dir_all(&a.out).map_err(|e| ir_core::Error::io(&a.out, e))?;
    write_text(&a.out.join("results.csv"), &rows_to_csv(&result.rows)?)?;
    write_text(&a.out.join("aggregates.csv"), &aggregates_to_csv(&result.rows)?)?;
    let table = markdown_table(&result.rows)?;
    write_text(&a.out.join("report.md"), &table)?;
    if !result.failures.is_empty() {
        write_text(&a.out.join("failures.csv"), &failures_to_csv(&result.failures)?)?;
        eprintln!(
            "ir bench: {} method runs failed, see failures.csv",
            result.failures.len()
        );
    }
    print!("{table}");
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let rows = read_csv(&a.csv)?;
    let table = markdown_table(&rows)?;
    match &a.out {
        Some(path) => write_text(path, &table).with_context(|| "writing report"),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
