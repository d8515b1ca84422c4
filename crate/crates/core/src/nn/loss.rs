use crate::error::{Error, Result};
use crate::metrics::{edge_loss_plane, psnr_from_mse, ssim_constants, ssim_plane};

use super::real::Real;
use super::tensor::Tensor;
use super::train::{Stage, TrainConfig};

/// MSE floor inside the PSNR logarithm.
pub const MSE_FLOOR: f64 = 1e-10;

/// Batch means of the individual quality measures (unweighted).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub ssim: f64,
    pub psnr: f64,
    pub mse: f64,
    pub edge: f64,
}

#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub total: f64,
    pub terms: LossTerms,
    /// Gradient of `total` with respect to the prediction.
    pub grad: Tensor<T>,
}

/// Coarse-stage objective: batch mean of
/// `w_ssim (1 - SSIM) + w_psnr (1 - min(PSNR, cap) / cap) + w_l2 MSE`.
pub fn loss_total<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &TrainConfig,
) -> Result<LossValue<T>> {
    evaluate(pred, target, cfg, Stage::Coarse)
}

/// Fine-stage objective: batch mean of `w_ssim (1 - SSIM) + w_edge edge_loss`.
pub fn loss_fine<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &TrainConfig,
) -> Result<LossValue<T>> {
    evaluate(pred, target, cfg, Stage::Fine)
}

pub fn loss_for_stage<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &TrainConfig,
) -> Result<LossValue<T>> {
    evaluate(pred, target, cfg, cfg.stage)
}

fn evaluate<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &TrainConfig,
    stage: Stage,
) -> Result<LossValue<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let [n, c, h, w] = pred.shape();
    let (c1, c2) = ssim_constants(1.0);
    let plane = h * w;
    let len = c * plane;
    let inv_batch = 1.0 / n as f64;
    let mut grad = vec![0.0; n * len];
    let mut total = 0.0;
    let mut terms = LossTerms::default();

    for s in 0..n {
        let p: Vec<f64> = pred.sample_slice(s).iter().map(|v| v.as_f64()).collect();
        let t: Vec<f64> = target.sample_slice(s).iter().map(|v| v.as_f64()).collect();
        let g = &mut grad[s * len..(s + 1) * len];

        let mut ssim = 0.0;
        let mut edge = 0.0;
        for ch in 0..c {
            let r = ch * plane..(ch + 1) * plane;
            let (sv, sg) = ssim_plane(&p[r.clone()], &t[r.clone()], w, h, c1, c2, true);
            ssim += sv / c as f64;
            let coef = -cfg.w_ssim * inv_batch / c as f64;
            for (gi, d) in g[r.clone()].iter_mut().zip(sg.expect("requested")) {
                *gi += coef * d;
            }
            let want_edge = stage == Stage::Fine;
            let (ev, eg) = edge_loss_plane(&p[r.clone()], &t[r.clone()], w, h, want_edge);
            edge += ev / c as f64;
            if let Some(eg) = eg {
                let coef = cfg.w_edge * inv_batch / c as f64;
                for (gi, d) in g[r].iter_mut().zip(eg) {
                    *gi += coef * d;
                }
            }
        }

        let mse = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / len as f64;
        let psnr = psnr_from_mse(mse.max(MSE_FLOOR), 1.0);

        let sample_loss = match stage {
            Stage::Coarse => {
                // d/dp of the PSNR term is zero at the cap or below the MSE floor.
                let mut dmse = cfg.w_l2;
                if psnr < cfg.psnr_cap && mse > MSE_FLOOR {
                    dmse += cfg.w_psnr * 10.0 / (cfg.psnr_cap * std::f64::consts::LN_10 * mse);
                }
                let scale = dmse * 2.0 * inv_batch / len as f64;
                for ((gi, a), b) in g.iter_mut().zip(&p).zip(&t) {
                    *gi += scale * (a - b);
                }
                cfg.w_ssim * (1.0 - ssim)
                    + cfg.w_psnr * (1.0 - psnr.min(cfg.psnr_cap) / cfg.psnr_cap)
                    + cfg.w_l2 * mse
            }
            Stage::Fine => cfg.w_ssim * (1.0 - ssim) + cfg.w_edge * edge,
        };
        total += sample_loss * inv_batch;
        terms.ssim += ssim * inv_batch;
        terms.psnr += psnr * inv_batch;
        terms.mse += mse * inv_batch;
        terms.edge += edge * inv_batch;
    }

    if !total.is_finite() {
        return Err(Error::Numeric(format!("loss is {total}")));
    }
    Ok(LossValue {
        total,
        terms,
        grad: Tensor::new(pred.shape(), grad.into_iter().map(T::from_f64).collect())?,
    })
}
