use anyhow::{bail, Result};
use ir_core::color::{apply_pipeline, estimate_wb_grayworld};
use ir_core::degrade::{apply_recipe, Step};
use ir_core::harness::{load_clean_images, parse_grid, Manifest, Split};
use ir_core::image::extract_patches;
use ir_core::nn::{
    load_checkpoint, save_checkpoint, train_stage_observed, write_history, Adam, HistoryEntry,
    ResUNet, Stage,
};
use ir_core::rng::derive_seed;
use ir_core::{BlurSpec, ColorPipeline, DegradationRecipe, Image, TrainConfig};

use crate::args::{StageArg, TrainArgs};
use crate::commands::{print_config, source_images};

fn training_images(a: &TrainArgs) -> Result<Vec<Image>> {
    if let Some(path) = &a.manifest {
        let manifest = Manifest::load(path)?;
        let train: Vec<_> = manifest
            .entries()
            .iter()
            .filter(|e| e.split == Split::Train)
            .cloned()
            .collect();
        if train.is_empty() {
            bail!("manifest {} has no train-split entries", path.display());
        }
        let subset = Manifest::new(train)?;
        return Ok(load_clean_images(&subset)?
            .into_iter()
            .map(|(_, img)| img)
            .collect());
    }
    Ok(source_images(a.synth, None, a.size, a.seed)?
        .into_iter()
        .map(|(_, img)| img)
        .collect())
}

fn target_of(clean: &Image, render: bool) -> Result<Image> {
    if !render {
        return Ok(clean.clone());
    }
    let gains = estimate_wb_grayworld(clean)?;
    Ok(apply_pipeline(clean, &ColorPipeline::from_gains(gains)?)?)
}

/// Pairs each patch with a degraded copy. Coarse pairs cycle through the
/// grid cells; fine pairs carry only the fine-stage blur.
fn build_pairs(
    patches: &[Image],
    cells: &[Vec<Step>],
    seed: u64,
    render: bool,
) -> Result<Vec<(Image, Image)>> {
    patches
        .iter()
        .enumerate()
        .map(|(k, clean)| {
            let steps = cells[k % cells.len()].clone();
            let recipe = DegradationRecipe::new(steps, derive_seed(seed, k as u64));
            Ok((apply_recipe(clean, &recipe)?, target_of(clean, render)?))
        })
        .collect()
}

pub fn train(a: TrainArgs) -> Result<()> {
    if a.patch == 0 || !a.patch.is_multiple_of(ir_core::nn::SPATIAL_MULTIPLE) {
        bail!("--patch must be a positive multiple of {}", ir_core::nn::SPATIAL_MULTIPLE);
    }
    let grid = parse_grid(&a.grid)?;
    let fine_blur = BlurSpec::parse(&a.fine_blur)?;
    let base = TrainConfig {
        base_width: a.base_width,
        lr: a.lr,
        batch: a.batch,
        steps: a.steps,
        stage: Stage::Coarse,
        w_ssim: a.w_ssim,
        w_psnr: a.w_psnr,
        w_l2: a.w_l2,
        w_edge: a.w_edge,
        psnr_cap: a.psnr_cap,
        seed: a.seed,
    };
    base.validate()?;
    print_config("train", &a);

    let images = training_images(&a)?;
    let mut patches = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let seed = derive_seed(derive_seed(a.seed, 0), i as u64);
        patches.extend(extract_patches(img, a.patch, a.patch / 2, seed, a.patches_per_image)?);
    }
    eprintln!("ir train: {} images, {} patches", images.len(), patches.len());

    let (mut model, mut adam) = match &a.resume {
        Some(path) => {
            let (model, adam) = load_checkpoint::<f32>(path)?;
            if model.base_width() != a.base_width {
                eprintln!(
                    "ir train: using base width {} from {}",
                    model.base_width(),
                    path.display()
                );
            }
            (model, adam.unwrap_or_else(|| Adam::new(a.lr)))
        }
        None => (ResUNet::<f32>::new(a.base_width, a.seed)?, Adam::new(a.lr)),
    };

    let mut stages = Vec::new();
    if matches!(a.stage, StageArg::Coarse | StageArg::TwoStage) {
        let cells: Vec<Vec<Step>> = grid.iter().map(|c| c.steps.clone()).collect();
        stages.push((Stage::Coarse, a.steps, cells));
    }
    if matches!(a.stage, StageArg::Fine | StageArg::TwoStage) {
        stages.push((Stage::Fine, a.fine_steps, vec![vec![Step::Blur(fine_blur)]]));
    }

    let mut history: Vec<HistoryEntry> = Vec::new();
    for (index, (stage, steps, cells)) in stages.into_iter().enumerate() {
        let stage_seed = derive_seed(a.seed, 1 + index as u64);
        let pairs = build_pairs(&patches, &cells, stage_seed, a.render_targets)?;
        let cfg = TrainConfig {
            base_width: model.base_width(),
            steps,
            stage,
            seed: stage_seed,
            ..base.clone()
        };
        let every = (steps / 10).max(1) as u64;
        let first = adam.step;
        let entries = train_stage_observed(&mut model, &mut adam, &pairs, &cfg, |e| {
            if (e.step - first) % every == 0 {
                eprintln!(
                    "step {:>6} {:<6} loss {:.5} psnr {:.2} ssim {:.4}",
                    e.step, e.stage, e.loss, e.psnr, e.ssim
                );
            }
        })?;
        history.extend(entries);
    }

    save_checkpoint(&model, Some(&adam), &a.out)?;
    if let Some(path) = &a.history {
        write_history(path, &history)?;
    }
    eprintln!("ir train: saved {}", a.out.display());
    Ok(())
}
