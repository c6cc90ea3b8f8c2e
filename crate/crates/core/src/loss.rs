//! Differentiable loss functions with analytic gradients.
//!
//! Predictions and targets are flat class-major stacks: a stack with `C`
//! classes over `V` voxels is a slice of length `C·V` where class `c`
//! occupies `[c·V, (c+1)·V)`. This matches both per-class [`crate::volume::Volume`]
//! stacks and the channel layout of network output tensors.
//!
//! All reductions accumulate in f64 with a fixed sequential order, so values
//! and gradients are bit-reproducible and remain accurate in f32.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Hyperparameters shared by all losses.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Numerical guard added to Dice-style numerators and denominators.
    pub epsilon: f64,
    /// Weight of the smooth-L1 regression term in the combined objective.
    pub alpha: f64,
    /// Tversky false-positive weight.
    pub tversky_alpha: f64,
    /// Tversky false-negative weight.
    pub tversky_beta: f64,
    /// Focal-Tversky focusing parameter γ; the loss is (1−TI)^(1/γ).
    pub focal_gamma: f64,
    /// Exp-Log weight of the dice term.
    pub exp_log_w_dice: f64,
    /// Exp-Log weight of the cross-entropy term.
    pub exp_log_w_ce: f64,
    /// Exp-Log exponent γ applied to both −ln terms.
    pub exp_log_gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 1e-5,
            alpha: 10.0,
            tversky_alpha: 0.3,
            tversky_beta: 0.7,
            focal_gamma: 4.0 / 3.0,
            exp_log_w_dice: 0.8,
            exp_log_w_ce: 0.2,
            exp_log_gamma: 0.3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid("alpha must be >= 0"));
        }
        if !(self.tversky_alpha + self.tversky_beta > 0.0) {
            return Err(Error::invalid("tversky alpha + beta must be > 0"));
        }
        if !(self.focal_gamma > 0.0) || !(self.exp_log_gamma > 0.0) {
            return Err(Error::invalid("gamma parameters must be > 0"));
        }
        Ok(())
    }
}

/// A loss value with its gradient w.r.t. the prediction stack.
#[derive(Clone, Debug)]
pub struct LossResult<S> {
    pub value: S,
    pub grad: Vec<S>,
}

/// Gradient contributions vanish below this; guards the removable
/// singularities of focal and log-of-dice terms at the exact optimum.
const SINGULARITY_GUARD: f64 = 1e-12;

fn check_stack<S>(pred: &[S], target: &[S], classes: usize) -> Result<usize> {
    if classes == 0 {
        return Err(Error::invalid("stack needs at least one class"));
    }
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "pred has {} elements, target {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() % classes != 0 || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "stack of {} elements does not divide into {classes} classes",
            pred.len()
        )));
    }
    Ok(pred.len() / classes)
}

/// Dice-style overlap of a prediction with a per-voxel weight map:
/// 1 − mean over classes of (2·Σ p·w + ε)/(Σ p + Σ w + ε).
fn weighted_dice<S: Scalar>(
    pred: &[S],
    weight: &[S],
    classes: usize,
    eps: f64,
) -> Result<LossResult<S>> {
    let voxels = check_stack(pred, weight, classes)?;
    let mut value = 0.0f64;
    let mut grad = vec![S::zero(); pred.len()];
    for c in 0..classes {
        let p = &pred[c * voxels..(c + 1) * voxels];
        let w = &weight[c * voxels..(c + 1) * voxels];
        let mut inter = 0.0f64;
        let mut psum = 0.0f64;
        let mut wsum = 0.0f64;
        for i in 0..voxels {
            inter += p[i].into_f64() * w[i].into_f64();
            psum += p[i].into_f64();
            wsum += w[i].into_f64();
        }
        let num = 2.0 * inter + eps;
        let den = psum + wsum + eps;
        value += num / den;
        // d/dp_i of (num/den): (2 w_i · den − num) / den²; loss negates and
        // averages over classes.
        let scale = -1.0 / classes as f64;
        let g = &mut grad[c * voxels..(c + 1) * voxels];
        for i in 0..voxels {
            let d = (2.0 * w[i].into_f64() * den - num) / (den * den);
            g[i] = S::from_f64(scale * d);
        }
    }
    Ok(LossResult {
        value: S::from_f64(1.0 - value / classes as f64),
        grad,
    })
}

/// Soft Dice loss against a one-hot target.
pub fn dice_loss<S: Scalar>(
    pred: &[S],
    target: &[S],
    classes: usize,
    cfg: &LossConfig,
) -> Result<LossResult<S>> {
    cfg.validate()?;
    weighted_dice(pred, target, classes, cfg.epsilon)
}

/// MapDice: Dice against the per-class normalized-inverse distance maps,
/// which act as a per-voxel penalty map emphasizing voxels near the
/// boundary. The target must be non-negative (NI-DM, not SNI-DM).
pub fn map_dice_loss<S: Scalar>(
    pred: &[S],
    target_dm: &[S],
    classes: usize,
    cfg: &LossConfig,
) -> Result<LossResult<S>> {
    cfg.validate()?;
    if target_dm.iter().any(|&v| v < S::zero()) {
        return Err(Error::invalid(
            "map_dice_loss target has negative values; pass an NI-DM stack, not SNI-DM",
        ));
    }
    weighted_dice(pred, target_dm, classes, cfg.epsilon)
}

/// Smooth L1 (Huber with transition at |d| = 1), mean-reduced over all
/// elements: h(d) = d²/2 for |d| < 1 else |d| − 1/2.
pub fn smooth_l1<S: Scalar>(pred: &[S], target: &[S]) -> Result<LossResult<S>> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "pred has {} elements, target {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut value = 0.0f64;
    let mut grad = vec![S::zero(); pred.len()];
    for i in 0..pred.len() {
        let d = pred[i].into_f64() - target[i].into_f64();
        let (h, dh) = if d.abs() < 1.0 {
            (0.5 * d * d, d)
        } else {
            (d.abs() - 0.5, d.signum())
        };
        value += h;
        grad[i] = S::from_f64(dh / n);
    }
    Ok(LossResult {
        value: S::from_f64(value / n),
        grad,
    })
}

/// Which segmentation term the combined objective uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegLossKind {
    Dice,
    MapDice,
    None,
}

/// Combined objective: `L_seg + α · L_smoothL1`, with gradients for the
/// probability head and the regression head separately.
#[derive(Clone, Debug)]
pub struct CombinedLoss<S> {
    pub value: S,
    pub seg_value: S,
    pub reg_value: S,
    /// Gradient w.r.t. the probability prediction (when a seg term is active).
    pub prob_grad: Option<Vec<S>>,
    /// Gradient w.r.t. the regressed distance map (when present), already
    /// scaled by α.
    pub dm_grad: Option<Vec<S>>,
}

/// Evaluate the combined objective.
///
/// `seg_target` is the one-hot stack for [`SegLossKind::Dice`] and the
/// per-class NI-DM stack for [`SegLossKind::MapDice`]. Either side may be
/// omitted — segmentation-only (no regression head) and regression-only
/// (`seg = None`) modes are both valid — but not both.
pub fn combined_loss<S: Scalar>(
    seg: SegLossKind,
    pred_prob: Option<&[S]>,
    seg_target: Option<&[S]>,
    pred_dm: Option<&[S]>,
    target_dm: Option<&[S]>,
    classes: usize,
    cfg: &LossConfig,
) -> Result<CombinedLoss<S>> {
    cfg.validate()?;
    let seg_part = match seg {
        SegLossKind::None => None,
        kind => {
            let (p, t) = match (pred_prob, seg_target) {
                (Some(p), Some(t)) => (p, t),
                _ => {
                    return Err(Error::invalid(
                        "seg loss selected but pred_prob/seg_target missing",
                    ))
                }
            };
            Some(match kind {
                SegLossKind::Dice => dice_loss(p, t, classes, cfg)?,
                SegLossKind::MapDice => map_dice_loss(p, t, classes, cfg)?,
                SegLossKind::None => unreachable!(),
            })
        }
    };
    let reg_part = match (pred_dm, target_dm) {
        (Some(p), Some(t)) => Some(smooth_l1(p, t)?),
        (None, None) => None,
        _ => return Err(Error::invalid("pred_dm and target_dm must come together")),
    };
    if seg_part.is_none() && reg_part.is_none() {
        return Err(Error::invalid("combined_loss needs at least one term"));
    }

    let seg_value = seg_part.as_ref().map_or(0.0, |l| l.value.into_f64());
    let reg_value = reg_part.as_ref().map_or(0.0, |l| l.value.into_f64());
    let dm_grad = reg_part.map(|l| {
        l.grad
            .into_iter()
            .map(|g| S::from_f64(g.into_f64() * cfg.alpha))
            .collect()
    });
    Ok(CombinedLoss {
        value: S::from_f64(seg_value + cfg.alpha * reg_value),
        seg_value: S::from_f64(seg_value),
        reg_value: S::from_f64(reg_value),
        prob_grad: seg_part.map(|l| l.grad),
        dm_grad,
    })
}

/// Baseline class-imbalance losses used by the comparison harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Weighted cross-entropy, inverse-frequency class weights.
    Wce,
    /// Generalized Dice score loss, 1/(Σt)² class weights.
    Gds,
    /// Tversky index with (alpha, beta) FP/FN weights.
    Tversky,
    /// Focal Tversky, (1 − TI)^(1/γ).
    FocalTversky,
    /// Exponential-logarithmic combination of Dice and cross-entropy.
    ExpLog,
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BaselineKind::Wce => "wce",
            BaselineKind::Gds => "gds",
            BaselineKind::Tversky => "tversky",
            BaselineKind::FocalTversky => "focal_tversky",
            BaselineKind::ExpLog => "exp_log",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wce" => Ok(BaselineKind::Wce),
            "gds" => Ok(BaselineKind::Gds),
            "tversky" => Ok(BaselineKind::Tversky),
            "focal_tversky" | "focaltversky" => Ok(BaselineKind::FocalTversky),
            "exp_log" | "explog" => Ok(BaselineKind::ExpLog),
            other => Err(Error::invalid(format!("unknown baseline loss {other:?}"))),
        }
    }
}

/// Per-class sums used by the region-based baselines.
struct ClassSums {
    inter: f64,
    psum: f64,
    tsum: f64,
}

fn class_sums<S: Scalar>(p: &[S], t: &[S]) -> ClassSums {
    let mut s = ClassSums {
        inter: 0.0,
        psum: 0.0,
        tsum: 0.0,
    };
    for i in 0..p.len() {
        s.inter += p[i].into_f64() * t[i].into_f64();
        s.psum += p[i].into_f64();
        s.tsum += t[i].into_f64();
    }
    s
}

/// Evaluate one of the five baseline imbalance losses against a one-hot
/// target.
pub fn baseline_loss<S: Scalar>(
    kind: BaselineKind,
    pred: &[S],
    target: &[S],
    classes: usize,
    cfg: &LossConfig,
) -> Result<LossResult<S>> {
    cfg.validate()?;
    let voxels = check_stack(pred, target, classes)?;
    let eps = cfg.epsilon;
    let n = voxels as f64;
    let mut grad = vec![S::zero(); pred.len()];

    let value = match kind {
        BaselineKind::Wce => {
            // w_c = N / (C·N_c + ε): inverse class frequency.
            let mut value = 0.0f64;
            for c in 0..classes {
                let p = &pred[c * voxels..(c + 1) * voxels];
                let t = &target[c * voxels..(c + 1) * voxels];
                let nc: f64 = t.iter().map(|&v| v.into_f64()).sum();
                let w = n / (classes as f64 * nc + eps);
                let g = &mut grad[c * voxels..(c + 1) * voxels];
                for i in 0..voxels {
                    let ti = t[i].into_f64();
                    if ti == 0.0 {
                        continue;
                    }
                    let pi = p[i].into_f64() + eps;
                    value -= w * ti * pi.ln() / n;
                    g[i] = S::from_f64(-w * ti / (pi * n));
                }
            }
            value
        }
        BaselineKind::Gds => {
            // Single ratio over all classes with weights w_c = 1/(Σt_c)².
            let sums: Vec<ClassSums> = (0..classes)
                .map(|c| {
                    class_sums(
                        &pred[c * voxels..(c + 1) * voxels],
                        &target[c * voxels..(c + 1) * voxels],
                    )
                })
                .collect();
            let w: Vec<f64> = sums.iter().map(|s| 1.0 / (s.tsum * s.tsum + eps)).collect();
            let num = 2.0 * sums.iter().zip(&w).map(|(s, w)| w * s.inter).sum::<f64>() + eps;
            let den = sums
                .iter()
                .zip(&w)
                .map(|(s, w)| w * (s.psum + s.tsum))
                .sum::<f64>()
                + eps;
            for c in 0..classes {
                let t = &target[c * voxels..(c + 1) * voxels];
                let g = &mut grad[c * voxels..(c + 1) * voxels];
                for i in 0..voxels {
                    let dnum = 2.0 * w[c] * t[i].into_f64();
                    let dden = w[c];
                    g[i] = S::from_f64(-(dnum * den - num * dden) / (den * den));
                }
            }
            1.0 - num / den
        }
        BaselineKind::Tversky | BaselineKind::FocalTversky => {
            let (a, b) = (cfg.tversky_alpha, cfg.tversky_beta);
            let exponent = 1.0 / cfg.focal_gamma;
            let mut value = 0.0f64;
            for c in 0..classes {
                let p = &pred[c * voxels..(c + 1) * voxels];
                let t = &target[c * voxels..(c + 1) * voxels];
                let s = class_sums(p, t);
                let fp = s.psum - s.inter;
                let fn_ = s.tsum - s.inter;
                let num = s.inter + eps;
                let den = s.inter + a * fp + b * fn_ + eps;
                let ti = num / den;
                // Chain factor for the focal form; plain Tversky is the
                // focal form with exponent 1.
                let (term, outer) = match kind {
                    BaselineKind::Tversky => (1.0 - ti, 1.0),
                    _ => {
                        let base = 1.0 - ti;
                        if base < SINGULARITY_GUARD {
                            (0.0, 0.0)
                        } else {
                            (base.powf(exponent), exponent * base.powf(exponent - 1.0))
                        }
                    }
                };
                value += term / classes as f64;
                let g = &mut grad[c * voxels..(c + 1) * voxels];
                for i in 0..voxels {
                    let ti_i = t[i].into_f64();
                    let dnum = ti_i;
                    let dden = ti_i + a * (1.0 - ti_i) - b * ti_i;
                    let dti = (dnum * den - num * dden) / (den * den);
                    g[i] = S::from_f64(-outer * dti / classes as f64);
                }
            }
            value
        }
        BaselineKind::ExpLog => {
            let gamma = cfg.exp_log_gamma;
            let (w_dice, w_ce) = (cfg.exp_log_w_dice, cfg.exp_log_w_ce);
            let mut value = 0.0f64;
            // Dice term: mean_c (−ln D_c)^γ with soft per-class Dice.
            for c in 0..classes {
                let p = &pred[c * voxels..(c + 1) * voxels];
                let t = &target[c * voxels..(c + 1) * voxels];
                let s = class_sums(p, t);
                let num = 2.0 * s.inter + eps;
                let den = s.psum + s.tsum + eps;
                let dice = num / den;
                let neg_ln = -dice.ln();
                let (term, outer) = if neg_ln < SINGULARITY_GUARD {
                    (0.0, 0.0)
                } else {
                    (
                        neg_ln.powf(gamma),
                        gamma * neg_ln.powf(gamma - 1.0) * (-1.0 / dice),
                    )
                };
                value += w_dice * term / classes as f64;
                let g = &mut grad[c * voxels..(c + 1) * voxels];
                for i in 0..voxels {
                    let ddice =
                        (2.0 * t[i].into_f64() * den - num) / (den * den);
                    g[i] = S::from_f64(w_dice * outer * ddice / classes as f64);
                }
            }
            // Cross-entropy term: mean over voxels of w_c (−ln p_c)^γ at the
            // target class, with w_c the square root of the WCE weight.
            for c in 0..classes {
                let p = &pred[c * voxels..(c + 1) * voxels];
                let t = &target[c * voxels..(c + 1) * voxels];
                let nc: f64 = t.iter().map(|&v| v.into_f64()).sum();
                let w = (n / (classes as f64 * nc + eps)).sqrt();
                let g = &mut grad[c * voxels..(c + 1) * voxels];
                for i in 0..voxels {
                    let ti = t[i].into_f64();
                    if ti == 0.0 {
                        continue;
                    }
                    let q = (p[i].into_f64() + eps).min(1.0);
                    let neg_ln = -q.ln();
                    if neg_ln < SINGULARITY_GUARD {
                        continue;
                    }
                    value += w_ce * w * ti * neg_ln.powf(gamma) / n;
                    let d = gamma * neg_ln.powf(gamma - 1.0) * (-1.0 / q);
                    let prev = g[i].into_f64();
                    g[i] = S::from_f64(prev + w_ce * w * ti * d / n);
                }
            }
            value
        }
    };

    Ok(LossResult {
        value: S::from_f64(value),
        grad,
    })
}
