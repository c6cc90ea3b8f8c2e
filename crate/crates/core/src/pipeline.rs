//! Training, inference, and comparison orchestration.
//!
//! Two-stage protocol: [`pretrain_lrnet`] fits the regression network to map
//! one-hot masks to their distance-map stacks, then [`train_joint`] trains
//! the segmentation network while the (optionally frozen) regression network
//! supplies the auxiliary distance-map objective. Everything is seeded and
//! single-threaded, so a `(config, seed, dataset)` triple reproduces
//! checkpoints and metric tables bit for bit.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dm::{dm_to_mask, per_class_dm, per_class_nidm, DistanceMap, DmVariant};
use crate::error::{Error, Result};
use crate::loss::{
    baseline_loss, combined_loss, smooth_l1, BaselineKind, LossConfig, SegLossKind,
};
use crate::metrics::{dice_per_case, evaluate_cases, MetricsReport};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::network::{bind, collect_param_grads, Bound, LrNetSpec, MNetSpec, NetSpec, ParamSet};
use crate::nn::optim::{Adam, PlateauScheduler};
use crate::nn::tape::{NodeId, Tape};
use crate::nn::tensor::Tensor;
use crate::volume::{one_hot, Mask, Volume};

/// One training case: an intensity image and its label mask.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Volume<f32>,
    pub mask: Mask,
}

/// Segmentation term of the training objective. Beyond the two native
/// choices (`Dice`, `MapDice`) the comparison harness can swap in any of the
/// baseline imbalance losses; `None` trains through the regression head
/// alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineLoss {
    None,
    Dice,
    MapDice,
    Wce,
    Gds,
    Tversky,
    FocalTversky,
    ExpLog,
}

impl PipelineLoss {
    fn seg_kind(self) -> Option<SegLossKind> {
        match self {
            PipelineLoss::None => Some(SegLossKind::None),
            PipelineLoss::Dice => Some(SegLossKind::Dice),
            PipelineLoss::MapDice => Some(SegLossKind::MapDice),
            _ => None,
        }
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            PipelineLoss::Wce => Some(BaselineKind::Wce),
            PipelineLoss::Gds => Some(BaselineKind::Gds),
            PipelineLoss::Tversky => Some(BaselineKind::Tversky),
            PipelineLoss::FocalTversky => Some(BaselineKind::FocalTversky),
            PipelineLoss::ExpLog => Some(BaselineKind::ExpLog),
            _ => None,
        }
    }

    /// MapDice weights the prediction by the normalized-inverse maps, so its
    /// target stack is always the NI-DM one regardless of which variant the
    /// regression head learns.
    fn needs_nidm(self) -> bool {
        self == PipelineLoss::MapDice
    }
}

impl std::fmt::Display for PipelineLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PipelineLoss::None => "none",
            PipelineLoss::Dice => "dice",
            PipelineLoss::MapDice => "map_dice",
            PipelineLoss::Wce => "wce",
            PipelineLoss::Gds => "gds",
            PipelineLoss::Tversky => "tversky",
            PipelineLoss::FocalTversky => "focal_tversky",
            PipelineLoss::ExpLog => "exp_log",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PipelineLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(PipelineLoss::None),
            "dice" => Ok(PipelineLoss::Dice),
            "map_dice" | "mapdice" => Ok(PipelineLoss::MapDice),
            "wce" => Ok(PipelineLoss::Wce),
            "gds" => Ok(PipelineLoss::Gds),
            "tversky" => Ok(PipelineLoss::Tversky),
            "focal_tversky" | "focaltversky" => Ok(PipelineLoss::FocalTversky),
            "exp_log" | "explog" => Ok(PipelineLoss::ExpLog),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Everything a training run needs. `alpha` here is authoritative for the
/// combined objective; the `loss.alpha` default only applies when the loss
/// functions are used standalone.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Which transform the regression head learns.
    pub dm_variant: DmVariant,
    pub seg_loss: PipelineLoss,
    /// Attach the regression head and its smooth-L1 term.
    pub with_regression: bool,
    /// Weight of the regression term.
    pub alpha: f64,
    /// Keep the pretrained regression parameters fixed during joint
    /// training (gradients still flow through them to the segmenter).
    pub freeze_lrnet: bool,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub plateau_cooldown: usize,
    /// Stop when validation loss has not improved for this many epochs
    /// (0 disables).
    pub early_stop_patience: usize,
    /// Train/validation fractions; must sum to 1.
    pub split: [f64; 2],
    pub mnet: MNetSpec,
    pub lrnet_width: usize,
    /// Clamp the regression head with a sigmoid (ablation).
    pub sigmoid_head: bool,
    /// Soften the one-hot input during pretraining: x·(1−s) + s/C.
    pub label_smoothing: f64,
    /// Threshold for reconstructing a mask from a predicted NI-DM.
    pub recon_threshold: f32,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dm_variant: DmVariant::Nidm,
            seg_loss: PipelineLoss::MapDice,
            with_regression: true,
            alpha: 10.0,
            freeze_lrnet: true,
            pretrain_epochs: 40,
            epochs: 30,
            batch: 2,
            seed: 17,
            lr: 1e-3,
            plateau_factor: 0.8,
            plateau_patience: 5,
            plateau_min_delta: 1e-5,
            plateau_cooldown: 2,
            early_stop_patience: 0,
            split: [0.8, 0.2],
            mnet: MNetSpec::default(),
            lrnet_width: 8,
            sigmoid_head: false,
            label_smoothing: 0.0,
            recon_threshold: 0.3,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.mnet.validate()?;
        if self.mnet.in_channels != 1 {
            return Err(Error::Config(
                "the pipeline feeds single-channel images; in_channels must be 1".into(),
            ));
        }
        if !self.with_regression && self.seg_loss == PipelineLoss::None {
            return Err(Error::Config(
                "no active loss: seg_loss is `none` and regression is off".into(),
            ));
        }
        if self.with_regression {
            if !(self.alpha > 0.0) {
                return Err(Error::Config("alpha must be > 0 when regression is on".into()));
            }
            LrNetSpec::new(self.mnet.classes, self.lrnet_width, self.dm_variant).validate()?;
        } else if !(self.alpha >= 0.0) {
            return Err(Error::Config("alpha must be >= 0".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive and finite".into()));
        }
        if self.split.iter().any(|&f| !(f > 0.0))
            || (self.split[0] + self.split[1] - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split {:?} must be two positive fractions summing to 1",
                self.split
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config("label_smoothing must be in [0, 1)".into()));
        }
        if !self.recon_threshold.is_finite() {
            return Err(Error::Config("recon_threshold must be finite".into()));
        }
        // Exercises the factor/patience checks without keeping the instance.
        PlateauScheduler::new(
            self.plateau_factor,
            self.plateau_patience,
            self.plateau_min_delta,
            self.plateau_cooldown,
        )?;
        self.loss_cfg().validate()
    }

    /// Loss hyperparameters with this config's α substituted in.
    pub fn loss_cfg(&self) -> LossConfig {
        let mut cfg = self.loss.clone();
        cfg.alpha = self.alpha;
        cfg
    }

    fn lrnet_spec(&self) -> LrNetSpec {
        let mut spec = LrNetSpec::new(self.mnet.classes, self.lrnet_width, self.dm_variant);
        spec.sigmoid_head = self.sigmoid_head;
        spec
    }

    fn scheduler(&self) -> Result<PlateauScheduler> {
        PlateauScheduler::new(
            self.plateau_factor,
            self.plateau_patience,
            self.plateau_min_delta,
            self.plateau_cooldown,
        )
    }

    fn dump(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| "<unprintable config>".into())
    }
}

fn nonfinite_abort(cfg: &TrainConfig, what: impl std::fmt::Display) -> Error {
    Error::NonFinite(format!("{what}; config: {}", cfg.dump()))
}

// ---------------------------------------------------------------------------
// Dataset identity and deterministic splitting.

fn hash_volume_f32(h: &mut Sha256, v: &Volume<f32>) {
    for d in v.shape() {
        h.update((d as u64).to_le_bytes());
    }
    for s in v.spacing() {
        h.update(s.to_le_bytes());
    }
    for x in v.data() {
        h.update(x.to_le_bytes());
    }
}

fn hash_mask(h: &mut Sha256, m: &Mask) {
    for d in m.shape() {
        h.update((d as u64).to_le_bytes());
    }
    for s in m.spacing() {
        h.update(s.to_le_bytes());
    }
    h.update([m.num_classes()]);
    h.update(m.vol().data());
}

/// Content hash of an image+mask dataset, independent of file paths.
pub fn dataset_hash(samples: &[Sample]) -> String {
    let mut h = Sha256::new();
    h.update((samples.len() as u64).to_le_bytes());
    for s in samples {
        hash_volume_f32(&mut h, &s.image);
        hash_mask(&mut h, &s.mask);
    }
    hex(&h.finalize())
}

/// Content hash of a mask-only dataset (pretraining input).
pub fn mask_dataset_hash(masks: &[Mask]) -> String {
    let mut h = Sha256::new();
    h.update((masks.len() as u64).to_le_bytes());
    for m in masks {
        hash_mask(&mut h, m);
    }
    hex(&h.finalize())
}

/// Short content id of a checkpoint: spec, step, and parameter bytes.
pub fn checkpoint_id(ck: &Checkpoint) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&ck.net).unwrap_or_default().as_bytes());
    h.update(ck.seed.to_le_bytes());
    h.update(ck.step.to_le_bytes());
    for (name, t) in ck.params.iter() {
        h.update(name.as_bytes());
        for d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for x in t.data() {
            h.update(x.to_le_bytes());
        }
    }
    hex(&h.finalize())[..16].to_string()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

const SPLIT_SALT: u64 = 0x53504c4954; // "SPLIT"
const EPOCH_SALT: u64 = 0x9e3779b97f4a7c15;

/// Deterministic shuffled split; both sides are non-empty and sorted.
/// The deterministic train/validation partition a config induces on `n`
/// cases, as sorted index lists. This is exactly the split the training
/// entry points use, so callers can line artifacts up with the held-out set.
pub fn holdout_split(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    split_indices(n, cfg.split, cfg.seed)
}

fn split_indices(n: usize, split: [f64; 2], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 cases to split into train/val, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * split[1]).round() as usize).clamp(1, n - 1);
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();
    let mut val = val.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(EPOCH_SALT.wrapping_mul(epoch as u64)))
}

// ---------------------------------------------------------------------------
// Precomputed per-sample tensors.

/// Ground-truth tensors cached once per run; distance maps are never
/// recomputed inside the epoch loop.
struct Prepared {
    image: Tensor<f32>,
    onehot: Tensor<f32>,
    /// MapDice target (NI-DM stack).
    nidm: Option<Tensor<f32>>,
    /// Regression target in the configured variant.
    dm: Option<Tensor<f32>>,
}

fn classes_u8(classes: usize) -> Result<u8> {
    u8::try_from(classes).map_err(|_| Error::Config("more than 255 classes".into()))
}

fn check_uniform(shapes: &[([usize; 3], [f32; 3])]) -> Result<()> {
    if let Some((first, rest)) = shapes.split_first() {
        for s in rest {
            if s != first {
                return Err(Error::ShapeMismatch(format!(
                    "dataset is not uniform: {:?} vs {:?}",
                    s, first
                )));
            }
        }
    }
    Ok(())
}

fn nidm_tensor(mask: &Mask, classes: u8) -> Result<Tensor<f32>> {
    let vols: Vec<Volume<f32>> = per_class_nidm(mask, classes)?
        .into_iter()
        .map(|d| d.values)
        .collect();
    Tensor::from_volumes(&vols)
}

fn dm_tensor(mask: &Mask, classes: u8, variant: DmVariant) -> Result<Tensor<f32>> {
    let vols: Vec<Volume<f32>> = per_class_dm(mask, classes, variant)?
        .into_iter()
        .map(|d| d.values)
        .collect();
    Tensor::from_volumes(&vols)
}

fn onehot_tensor(mask: &Mask, classes: u8) -> Result<Tensor<f32>> {
    Tensor::from_volumes(&one_hot(mask, classes)?)
}

fn prepare(
    samples: &[Sample],
    cfg: &TrainConfig,
    need_nidm: bool,
    need_dm: bool,
) -> Result<Vec<Prepared>> {
    let classes = classes_u8(cfg.mnet.classes)?;
    let shapes: Vec<_> = samples
        .iter()
        .map(|s| (s.image.shape(), s.image.spacing()))
        .collect();
    check_uniform(&shapes)?;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        if s.image.shape() != s.mask.shape() {
            return Err(Error::ShapeMismatch(format!(
                "image {:?} vs mask {:?}",
                s.image.shape(),
                s.mask.shape()
            )));
        }
        if s.mask.num_classes() != classes {
            return Err(Error::Config(format!(
                "mask has {} classes, network expects {classes}",
                s.mask.num_classes()
            )));
        }
        let nidm = need_nidm.then(|| nidm_tensor(&s.mask, classes)).transpose()?;
        let dm = if need_dm {
            // The NI-DM stack doubles as the regression target when the
            // variants coincide.
            match (&nidm, cfg.dm_variant) {
                (Some(t), DmVariant::Nidm) => Some(t.clone()),
                _ => Some(dm_tensor(&s.mask, classes, cfg.dm_variant)?),
            }
        } else {
            None
        };
        // Smoothing applies to the segmentation targets only: it moves the
        // optimum of the overlap losses to finite logits, which keeps the
        // softmax out of its saturated (zero-gradient) regime on heavily
        // imbalanced volumes. The regression target stays exact.
        out.push(Prepared {
            image: Tensor::from_volumes(std::slice::from_ref(&s.image))?,
            onehot: smoothed_input(
                &onehot_tensor(&s.mask, classes)?,
                cfg.label_smoothing,
                classes as usize,
            ),
            nidm: nidm.map(|t| smoothed_input(&t, cfg.label_smoothing, classes as usize)),
            dm,
        });
    }
    Ok(out)
}

/// Concatenate `[1, C, …]` tensors along the batch axis.
fn stack_items(items: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = items
        .first()
        .ok_or_else(|| Error::invalid("cannot stack an empty batch"))?;
    let [_, c, z, y, x] = first.shape();
    let mut data = Vec::with_capacity(items.len() * first.numel());
    for t in items {
        if t.shape() != first.shape() {
            return Err(Error::ShapeMismatch(format!(
                "batch items differ: {:?} vs {:?}",
                t.shape(),
                first.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec([items.len(), c, z, y, x], data)
}

// ---------------------------------------------------------------------------
// The objective for one batch item.

struct ItemLoss {
    total: f64,
    seg: f64,
    reg: f64,
    prob_grad: Option<Vec<f32>>,
    dm_grad: Option<Vec<f32>>,
}

#[allow(clippy::too_many_arguments)]
fn item_objective(
    seg_loss: PipelineLoss,
    lcfg: &LossConfig,
    classes: usize,
    probs: &[f32],
    onehot: &[f32],
    nidm: Option<&[f32]>,
    pred_dm: Option<&[f32]>,
    gt_dm: Option<&[f32]>,
) -> Result<ItemLoss> {
    if let Some(kind) = seg_loss.seg_kind() {
        let target = match kind {
            SegLossKind::Dice => Some(onehot),
            SegLossKind::MapDice => {
                Some(nidm.ok_or_else(|| Error::invalid("map_dice needs the NI-DM stack"))?)
            }
            SegLossKind::None => None,
        };
        let pred = if kind == SegLossKind::None { None } else { Some(probs) };
        let c = combined_loss(kind, pred, target, pred_dm, gt_dm, classes, lcfg)?;
        return Ok(ItemLoss {
            total: c.value as f64,
            seg: c.seg_value as f64,
            reg: c.reg_value as f64,
            prob_grad: c.prob_grad,
            dm_grad: c.dm_grad,
        });
    }
    // Baseline segmentation term plus (optionally) the same α-weighted
    // smooth-L1 regression term the combined objective uses.
    let kind = seg_loss.baseline().expect("non-seg kinds handled above");
    let seg = baseline_loss(kind, probs, onehot, classes, lcfg)?;
    let reg = match (pred_dm, gt_dm) {
        (Some(p), Some(t)) => Some(smooth_l1(p, t)?),
        (None, None) => None,
        _ => return Err(Error::invalid("pred_dm and target_dm must come together")),
    };
    let seg_v = seg.value as f64;
    let reg_v = reg.as_ref().map_or(0.0, |r| r.value as f64);
    Ok(ItemLoss {
        total: seg_v + lcfg.alpha * reg_v,
        seg: seg_v,
        reg: reg_v,
        prob_grad: Some(seg.grad),
        dm_grad: reg.map(|r| {
            r.grad
                .into_iter()
                .map(|g| (g as f64 * lcfg.alpha) as f32)
                .collect()
        }),
    })
}

// ---------------------------------------------------------------------------
// Forward graphs.

struct Graph {
    tape: Tape<f32>,
    mb: Bound,
    lb: Option<Bound>,
    probs: NodeId,
    dm: Option<NodeId>,
}

fn record_graph(
    mnet: &MNetSpec,
    mparams: &ParamSet<f32>,
    lrnet: Option<(&LrNetSpec, &ParamSet<f32>)>,
    input: Tensor<f32>,
) -> Result<Graph> {
    let mut tape = Tape::new();
    let mb = bind(&mut tape, mparams);
    let x = tape.leaf(input, "input");
    let probs = mnet.forward(&mut tape, &mb, x)?;
    let (lb, dm) = match lrnet {
        Some((spec, params)) => {
            let lb = bind(&mut tape, params);
            let dm = spec.forward(&mut tape, &lb, probs)?;
            (Some(lb), Some(dm))
        }
        None => (None, None),
    };
    Ok(Graph {
        tape,
        mb,
        lb,
        probs,
        dm,
    })
}

/// Per-voxel argmax of one batch item's class probabilities.
fn argmax_item_mask(probs: &Tensor<f32>, item: usize, spacing: [f32; 3]) -> Result<Mask> {
    let shape = probs.shape();
    let classes = shape[1];
    let vox = probs.spatial();
    let data = probs.data();
    let mut labels = vec![0u8; vox];
    for (v, label) in labels.iter_mut().enumerate() {
        let mut best_c = 0usize;
        let mut best = data[probs.channel_offset(item, 0) + v];
        for c in 1..classes {
            let p = data[probs.channel_offset(item, c) + v];
            if p > best {
                best = p;
                best_c = c;
            }
        }
        *label = best_c as u8;
    }
    let vol = Volume::from_vec([shape[2], shape[3], shape[4]], spacing, labels)?;
    Mask::new(vol, classes_u8(classes)?)
}

/// Mean over foreground classes of the per-class Dice.
fn mean_fg_dice(pred: &Mask, reference: &Mask) -> Result<f64> {
    let classes = reference.num_classes();
    let mut sum = 0.0;
    for c in 1..classes {
        sum += dice_per_case(&pred.binarize(c)?, &reference.binarize(c)?)?;
    }
    Ok(sum / (classes - 1) as f64)
}

// ---------------------------------------------------------------------------
// Pretraining: one-hot masks -> distance-map stacks.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// What happened during pretraining, including the held-out quality gates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainReport {
    pub dataset_hash: String,
    pub train_cases: usize,
    pub val_cases: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// Held-out smooth-L1 of the returned parameters.
    pub heldout_loss: f64,
    /// Mean Dice of masks reconstructed from predicted maps on the held-out
    /// split; absent for variants a mask cannot be recovered from.
    pub recon_dice: Option<f64>,
    pub per_epoch: Vec<PretrainEpoch>,
}

/// Inputs with optional label smoothing applied.
fn smoothed_input(onehot: &Tensor<f32>, smoothing: f64, classes: usize) -> Tensor<f32> {
    if smoothing == 0.0 {
        return onehot.clone();
    }
    let keep = (1.0 - smoothing) as f32;
    let floor = (smoothing / classes as f64) as f32;
    onehot.map(|v| v * keep + floor)
}

/// Fit the regression network to reproduce ground-truth distance maps from
/// one-hot masks. Zero epochs returns the freshly initialized checkpoint.
pub fn pretrain_lrnet(masks: &[Mask], cfg: &TrainConfig) -> Result<(Checkpoint, PretrainReport)> {
    cfg.validate()?;
    let spec = cfg.lrnet_spec();
    spec.validate()?;
    let classes = classes_u8(cfg.mnet.classes)?;
    let hash = mask_dataset_hash(masks);
    let shapes: Vec<_> = masks
        .iter()
        .map(|m| (m.shape(), m.spacing()))
        .collect();
    check_uniform(&shapes)?;

    let mut inputs = Vec::with_capacity(masks.len());
    let mut targets = Vec::with_capacity(masks.len());
    for m in masks {
        if m.num_classes() != classes {
            return Err(Error::Config(format!(
                "mask has {} classes, network expects {classes}",
                m.num_classes()
            )));
        }
        inputs.push(smoothed_input(
            &onehot_tensor(m, classes)?,
            cfg.label_smoothing,
            classes as usize,
        ));
        targets.push(dm_tensor(m, classes, cfg.dm_variant)?);
    }

    let (train_idx, val_idx) = split_indices(masks.len(), cfg.split, cfg.seed)?;
    let mut params = spec.init(cfg.seed);
    let mut adam = Adam::new(cfg.lr);
    let mut sched = cfg.scheduler()?;
    let mut lr_now = cfg.lr;

    let val_loss_of = |params: &ParamSet<f32>| -> Result<f64> {
        let mut sum = 0.0;
        for chunk in val_idx.chunks(cfg.batch.max(1)) {
            let xs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &inputs[i]).collect();
            let mut tape = Tape::new();
            let b = bind(&mut tape, params);
            let x = tape.leaf(stack_items(&xs)?, "input");
            let out = spec.forward(&mut tape, &b, x)?;
            let pred = tape.value(out);
            let per_item = pred.numel() / chunk.len();
            for (k, &i) in chunk.iter().enumerate() {
                let p = &pred.data()[k * per_item..(k + 1) * per_item];
                sum += smooth_l1(p, targets[i].data())?.value as f64;
            }
        }
        Ok(sum / val_idx.len() as f64)
    };

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_step = 0u64;
    let mut per_epoch = Vec::new();
    let mut stopped_early = false;
    let mut bad_epochs = 0usize;

    for epoch in 1..=cfg.pretrain_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut train_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let xs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &inputs[i]).collect();
            let mut tape = Tape::new();
            let b = bind(&mut tape, &params);
            let x = tape.leaf(stack_items(&xs)?, "input");
            let out = spec.forward(&mut tape, &b, x)?;
            let pred = tape.value(out);
            let per_item = pred.numel() / chunk.len();
            let mut seed_t = Tensor::zeros(pred.shape());
            let scale = 1.0 / chunk.len() as f32;
            for (k, &i) in chunk.iter().enumerate() {
                let p = &pred.data()[k * per_item..(k + 1) * per_item];
                let l = smooth_l1(p, targets[i].data())?;
                if !(l.value as f64).is_finite() {
                    return Err(nonfinite_abort(
                        cfg,
                        format!("pretraining loss diverged at epoch {epoch}"),
                    ));
                }
                train_sum += l.value as f64;
                let sd = &mut seed_t.data_mut()[k * per_item..(k + 1) * per_item];
                for (s, g) in sd.iter_mut().zip(&l.grad) {
                    *s = g * scale;
                }
            }
            let grads = tape.backward(&[(out, seed_t)])?;
            let g = collect_param_grads(&b, &grads, &params)?;
            adam.step(&mut params, &g)?;
        }
        let train_loss = train_sum / train_idx.len() as f64;
        let val_loss = val_loss_of(&params)?;
        if !val_loss.is_finite() {
            return Err(nonfinite_abort(
                cfg,
                format!("pretraining validation loss diverged at epoch {epoch}"),
            ));
        }
        lr_now = sched.observe(val_loss, lr_now);
        adam.set_lr(lr_now);
        per_epoch.push(PretrainEpoch {
            epoch,
            train_loss,
            val_loss,
            lr: lr_now,
        });
        if val_loss < best_val - cfg.plateau_min_delta {
            best_val = val_loss;
            best_params = params.clone();
            best_step = adam.step_count();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if cfg.early_stop_patience > 0 && bad_epochs >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    if cfg.pretrain_epochs == 0 {
        best_val = val_loss_of(&best_params)?;
    }

    // Reconstruction gate: invert the predicted maps back into masks on the
    // held-out split and score them against the ground truth.
    let recon_dice = match cfg.dm_variant {
        DmVariant::Nidm | DmVariant::Snidm => {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &i in &val_idx {
                let mut tape = Tape::new();
                let b = bind(&mut tape, &best_params);
                let x = tape.leaf(inputs[i].clone(), "input");
                let out = spec.forward(&mut tape, &b, x)?;
                let pred_vols = tape.value(out).to_volumes(masks[i].spacing())?;
                for c in 1..classes {
                    let dm = DistanceMap {
                        values: pred_vols[c as usize].clone(),
                        variant: cfg.dm_variant,
                        source_class: c,
                        per_component_max: BTreeMap::new(),
                        class_absent: false,
                    };
                    let recon = dm_to_mask(&dm, cfg.recon_threshold)?;
                    sum += dice_per_case(&recon, &masks[i].binarize(c)?)?;
                    count += 1;
                }
            }
            Some(sum / count as f64)
        }
        _ => None,
    };

    let mut ck = Checkpoint {
        net: NetSpec::LrNet(spec),
        seed: cfg.seed,
        step: best_step,
        lr: lr_now,
        params: best_params,
        meta: BTreeMap::new(),
    };
    ck.meta.insert("phase".into(), "pretrain".into());
    ck.meta.insert("dm_variant".into(), cfg.dm_variant.to_string());
    ck.meta.insert("dataset_hash".into(), hash.clone());
    let report = PretrainReport {
        dataset_hash: hash,
        train_cases: train_idx.len(),
        val_cases: val_idx.len(),
        epochs_run: per_epoch.len(),
        stopped_early,
        heldout_loss: best_val,
        recon_dice,
        per_epoch,
    };
    Ok((ck, report))
}

// ---------------------------------------------------------------------------
// Joint training.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_seg: f64,
    pub train_reg: f64,
    pub val_loss: f64,
    pub val_seg: f64,
    pub val_reg: f64,
    pub val_dice: f64,
    pub lr: f64,
}

/// Everything needed to trace a metric table back to its run: the config,
/// the dataset identity, the per-epoch curves, and the checkpoint ids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub dataset_hash: String,
    pub train_cases: usize,
    pub val_cases: usize,
    pub epochs: Vec<EpochStats>,
    /// Id of the pretrained regression checkpoint fed into this run.
    pub lrnet_checkpoint: Option<String>,
    pub best_checkpoint: String,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Validation metrics of the best checkpoint.
    pub metrics: MetricsReport,
}

/// A finished run: the best segmentation checkpoint, its companion
/// regression checkpoint (same epoch), and the run record.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub lrnet: Option<Checkpoint>,
    pub record: RunRecord,
}

struct ValOutcome {
    loss: f64,
    seg: f64,
    reg: f64,
    dice: f64,
    masks: Vec<Mask>,
}

/// Train the segmentation network, optionally against a pretrained
/// regression head. The returned checkpoint is the epoch with the best
/// validation Dice.
pub fn train_joint(
    samples: &[Sample],
    lrnet: Option<&Checkpoint>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let lr_spec_params: Option<(LrNetSpec, ParamSet<f32>)> = match (cfg.with_regression, lrnet) {
        (false, _) => None,
        (true, None) => {
            return Err(Error::Config(
                "regression is on but no pretrained checkpoint was given".into(),
            ))
        }
        (true, Some(ck)) => match ck.net {
            NetSpec::LrNet(spec) => {
                if spec.variant != cfg.dm_variant {
                    return Err(Error::Config(format!(
                        "checkpoint regresses {} but the run wants {}",
                        spec.variant, cfg.dm_variant
                    )));
                }
                if spec.classes != cfg.mnet.classes {
                    return Err(Error::Config(format!(
                        "checkpoint has {} classes, network expects {}",
                        spec.classes, cfg.mnet.classes
                    )));
                }
                Some((spec, ck.params.clone()))
            }
            NetSpec::MNet(_) => {
                return Err(Error::Config(
                    "the regression checkpoint holds a segmentation network".into(),
                ))
            }
        },
    };

    let need_nidm = cfg.seg_loss.needs_nidm();
    let prepared = prepare(samples, cfg, need_nidm, cfg.with_regression)?;
    let hash = dataset_hash(samples);
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.split, cfg.seed)?;
    let lcfg = cfg.loss_cfg();
    let classes = cfg.mnet.classes;
    let spacing = samples[0].image.spacing();

    let mut mparams = cfg.mnet.init(cfg.seed);
    let mut lparams = lr_spec_params;
    let mut adam_m = Adam::new(cfg.lr);
    let mut adam_l = match (&lparams, cfg.freeze_lrnet) {
        (Some(_), false) => Some(Adam::new(cfg.lr)),
        _ => None,
    };
    let mut sched = cfg.scheduler()?;
    let mut lr_now = cfg.lr;

    let run_val = |mp: &ParamSet<f32>,
                   lp: &Option<(LrNetSpec, ParamSet<f32>)>|
     -> Result<ValOutcome> {
        let mut loss_sum = 0.0;
        let mut seg_sum = 0.0;
        let mut reg_sum = 0.0;
        let mut dice_sum = 0.0;
        let mut masks = Vec::with_capacity(val_idx.len());
        for chunk in val_idx.chunks(cfg.batch) {
            let xs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &prepared[i].image).collect();
            let g = record_graph(
                &cfg.mnet,
                mp,
                lp.as_ref().map(|(s, p)| (s, p)),
                stack_items(&xs)?,
            )?;
            let probs = g.tape.value(g.probs);
            let pred_dm = g.dm.map(|id| g.tape.value(id));
            let pv = probs.numel() / chunk.len();
            for (k, &i) in chunk.iter().enumerate() {
                let p = &probs.data()[k * pv..(k + 1) * pv];
                let pd = pred_dm.map(|t| {
                    let n = t.numel() / chunk.len();
                    &t.data()[k * n..(k + 1) * n]
                });
                let l = item_objective(
                    cfg.seg_loss,
                    &lcfg,
                    classes,
                    p,
                    prepared[i].onehot.data(),
                    prepared[i].nidm.as_ref().map(|t| t.data()),
                    pd,
                    prepared[i].dm.as_ref().map(|t| t.data()),
                )?;
                loss_sum += l.total;
                seg_sum += l.seg;
                reg_sum += l.reg;
                let pm = argmax_item_mask(probs, k, spacing)?;
                dice_sum += mean_fg_dice(&pm, &samples[i].mask)?;
                masks.push(pm);
            }
        }
        let n = val_idx.len() as f64;
        Ok(ValOutcome {
            loss: loss_sum / n,
            seg: seg_sum / n,
            reg: reg_sum / n,
            dice: dice_sum / n,
            masks,
        })
    };

    let mut best_dice = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_m = mparams.clone();
    let mut best_l = lparams.clone();
    let mut best_step = 0u64;
    let mut epochs_out = Vec::new();
    let mut stopped_early = false;
    let mut best_val_loss = f64::INFINITY;
    let mut bad_epochs = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut loss_sum = 0.0;
        let mut seg_sum = 0.0;
        let mut reg_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let xs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &prepared[i].image).collect();
            let g = record_graph(
                &cfg.mnet,
                &mparams,
                lparams.as_ref().map(|(s, p)| (s, p)),
                stack_items(&xs)?,
            )?;
            let probs = g.tape.value(g.probs);
            let pred_dm = g.dm.map(|id| g.tape.value(id));
            let pv = probs.numel() / chunk.len();
            let scale = 1.0 / chunk.len() as f32;
            let mut prob_seed: Option<Tensor<f32>> = None;
            let mut dm_seed: Option<Tensor<f32>> = None;
            for (k, &i) in chunk.iter().enumerate() {
                let p = &probs.data()[k * pv..(k + 1) * pv];
                let pd = pred_dm.map(|t| {
                    let n = t.numel() / chunk.len();
                    &t.data()[k * n..(k + 1) * n]
                });
                let l = item_objective(
                    cfg.seg_loss,
                    &lcfg,
                    classes,
                    p,
                    prepared[i].onehot.data(),
                    prepared[i].nidm.as_ref().map(|t| t.data()),
                    pd,
                    prepared[i].dm.as_ref().map(|t| t.data()),
                )?;
                if !l.total.is_finite() {
                    return Err(nonfinite_abort(
                        cfg,
                        format!("training loss diverged at epoch {epoch}"),
                    ));
                }
                loss_sum += l.total;
                seg_sum += l.seg;
                reg_sum += l.reg;
                if let Some(gr) = l.prob_grad {
                    let seed = prob_seed.get_or_insert_with(|| Tensor::zeros(probs.shape()));
                    let sd = &mut seed.data_mut()[k * pv..(k + 1) * pv];
                    for (s, g) in sd.iter_mut().zip(&gr) {
                        *s = g * scale;
                    }
                }
                if let (Some(gr), Some(t)) = (l.dm_grad, pred_dm) {
                    let n = t.numel() / chunk.len();
                    let seed = dm_seed.get_or_insert_with(|| Tensor::zeros(t.shape()));
                    let sd = &mut seed.data_mut()[k * n..(k + 1) * n];
                    for (s, g) in sd.iter_mut().zip(&gr) {
                        *s = g * scale;
                    }
                }
            }
            let mut seeds = Vec::new();
            if let Some(s) = prob_seed {
                seeds.push((g.probs, s));
            }
            if let (Some(s), Some(id)) = (dm_seed, g.dm) {
                seeds.push((id, s));
            }
            let grads = g.tape.backward(&seeds)?;
            let mg = collect_param_grads(&g.mb, &grads, &mparams)?;
            adam_m.step(&mut mparams, &mg)?;
            if let (Some(al), Some(lb), Some((_, lp))) = (adam_l.as_mut(), &g.lb, &mut lparams) {
                let lg = collect_param_grads(lb, &grads, lp)?;
                al.step(lp, &lg)?;
            }
        }
        let n_train = train_idx.len() as f64;
        let val = run_val(&mparams, &lparams)?;
        if !val.loss.is_finite() {
            return Err(nonfinite_abort(
                cfg,
                format!("validation loss diverged at epoch {epoch}"),
            ));
        }
        lr_now = sched.observe(val.loss, lr_now);
        adam_m.set_lr(lr_now);
        if let Some(al) = adam_l.as_mut() {
            al.set_lr(lr_now);
        }
        epochs_out.push(EpochStats {
            epoch,
            train_loss: loss_sum / n_train,
            train_seg: seg_sum / n_train,
            train_reg: reg_sum / n_train,
            val_loss: val.loss,
            val_seg: val.seg,
            val_reg: val.reg,
            val_dice: val.dice,
            lr: lr_now,
        });
        if val.dice > best_dice {
            best_dice = val.dice;
            best_epoch = epoch;
            best_m = mparams.clone();
            best_l = lparams.clone();
            best_step = adam_m.step_count();
        }
        if val.loss < best_val_loss - cfg.plateau_min_delta {
            best_val_loss = val.loss;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if cfg.early_stop_patience > 0 && bad_epochs >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    // Validation metrics of the champion. With zero epochs this doubles as
    // the (only) evaluation of the initial parameters.
    let final_val = run_val(&best_m, &best_l)?;
    let cases: Vec<(String, &Mask, &Mask)> = val_idx
        .iter()
        .zip(&final_val.masks)
        .map(|(&i, pm)| (format!("val{i:03}"), pm, &samples[i].mask))
        .collect();
    let metrics = evaluate_cases(&cases)?;

    let lrnet_input_id = lrnet.map(checkpoint_id);
    let mut ck = Checkpoint {
        net: NetSpec::MNet(cfg.mnet),
        seed: cfg.seed,
        step: best_step,
        lr: lr_now,
        params: best_m,
        meta: BTreeMap::new(),
    };
    ck.meta.insert("phase".into(), "joint".into());
    ck.meta.insert("dm_variant".into(), cfg.dm_variant.to_string());
    ck.meta.insert("seg_loss".into(), cfg.seg_loss.to_string());
    ck.meta.insert("alpha".into(), format!("{}", cfg.alpha));
    ck.meta.insert("dataset_hash".into(), hash.clone());
    ck.meta.insert("best_epoch".into(), best_epoch.to_string());
    if let Some(id) = &lrnet_input_id {
        ck.meta.insert("lrnet_input".into(), id.clone());
        ck.meta
            .insert("lrnet_frozen".into(), cfg.freeze_lrnet.to_string());
    }
    let best_id = checkpoint_id(&ck);

    let lr_ck = match (best_l, lrnet) {
        (Some((spec, params)), Some(input)) => {
            let mut lck = Checkpoint {
                net: NetSpec::LrNet(spec),
                seed: cfg.seed,
                step: best_step,
                lr: lr_now,
                params,
                meta: BTreeMap::new(),
            };
            lck.meta.insert("phase".into(), "joint".into());
            lck.meta
                .insert("lrnet_input".into(), checkpoint_id(input));
            lck.meta
                .insert("frozen".into(), cfg.freeze_lrnet.to_string());
            Some(lck)
        }
        _ => None,
    };

    let record = RunRecord {
        config: cfg.clone(),
        dataset_hash: hash,
        train_cases: train_idx.len(),
        val_cases: val_idx.len(),
        epochs: epochs_out,
        lrnet_checkpoint: lrnet_input_id,
        best_checkpoint: best_id,
        best_epoch,
        stopped_early,
        metrics,
    };
    Ok(TrainOutcome {
        checkpoint: ck,
        lrnet: lr_ck,
        record,
    })
}

// ---------------------------------------------------------------------------
// Inference.

/// Segment one image with a trained checkpoint: argmax labels plus the raw
/// per-class probability volumes. The regression head plays no part here.
pub fn infer(ck: &Checkpoint, image: &Volume<f32>) -> Result<(Mask, Vec<Volume<f32>>)> {
    let spec = match ck.net {
        NetSpec::MNet(spec) => spec,
        NetSpec::LrNet(_) => {
            return Err(Error::Config(
                "inference needs a segmentation checkpoint, got a regression one".into(),
            ))
        }
    };
    if spec.in_channels != 1 {
        return Err(Error::Config(
            "the pipeline feeds single-channel images; in_channels must be 1".into(),
        ));
    }
    let input = Tensor::from_volumes(std::slice::from_ref(image))?;
    let mut tape = Tape::new();
    let b = bind(&mut tape, &ck.params);
    let x = tape.leaf(input, "input");
    let probs_id = spec.forward(&mut tape, &b, x)?;
    let probs = tape.value(probs_id);
    let mask = argmax_item_mask(probs, 0, image.spacing())?;
    let vols = probs.to_volumes(image.spacing())?;
    Ok((mask, vols))
}

// ---------------------------------------------------------------------------
// Comparison harness.

/// One named configuration in a comparison suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareRow {
    pub name: String,
    pub config: TrainConfig,
}

/// Result of one comparison row; `error` is set (and the metric fields
/// absent) when the row failed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RowOutcome {
    pub name: String,
    pub seg_loss: String,
    pub dm_variant: String,
    pub regression: bool,
    pub frozen: bool,
    pub alpha: f64,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub val_dice: Option<f64>,
    pub dc_mean: Option<f64>,
    pub dg: Option<f64>,
    pub voe_mean: Option<f64>,
    pub rvd_mean: Option<f64>,
    pub assd_mean: Option<f64>,
    pub msd_mean: Option<f64>,
    pub rmsd_mean: Option<f64>,
    pub degenerate_count: Option<usize>,
    pub checkpoint: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub dataset_hash: String,
    pub rows: Vec<RowOutcome>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from(
            "name,seg_loss,dm_variant,regression,frozen,alpha,seed,best_epoch,val_dice,\
             dc_mean,dg,voe_mean,rvd_mean,assd_mean,msd_mean,rmsd_mean,degenerate_count,\
             checkpoint,error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.name,
                r.seg_loss,
                r.dm_variant,
                r.regression,
                r.frozen,
                r.alpha,
                r.seed,
                opt(&r.best_epoch),
                opt(&r.val_dice),
                opt(&r.dc_mean),
                opt(&r.dg),
                opt(&r.voe_mean),
                opt(&r.rvd_mean),
                opt(&r.assd_mean),
                opt(&r.msd_mean),
                opt(&r.rmsd_mean),
                opt(&r.degenerate_count),
                opt(&r.checkpoint),
                opt(&r.error).replace(',', ";"),
            ));
        }
        out
    }
}

/// Run every row of a comparison suite on one dataset. A failing row is
/// recorded in place and does not stop the remaining rows; an empty suite
/// yields an empty table.
pub fn run_comparison(rows: &[CompareRow], samples: &[Sample]) -> ComparisonTable {
    let mut out = ComparisonTable {
        dataset_hash: dataset_hash(samples),
        rows: Vec::with_capacity(rows.len()),
    };
    for row in rows {
        let cfg = &row.config;
        let mut outcome = RowOutcome {
            name: row.name.clone(),
            seg_loss: cfg.seg_loss.to_string(),
            dm_variant: cfg.dm_variant.to_string(),
            regression: cfg.with_regression,
            frozen: cfg.freeze_lrnet,
            alpha: cfg.alpha,
            seed: cfg.seed,
            best_epoch: None,
            val_dice: None,
            dc_mean: None,
            dg: None,
            voe_mean: None,
            rvd_mean: None,
            assd_mean: None,
            msd_mean: None,
            rmsd_mean: None,
            degenerate_count: None,
            checkpoint: None,
            error: None,
        };
        match run_row(cfg, samples) {
            Ok(res) => {
                let agg = &res.record.metrics.aggregate;
                outcome.best_epoch = Some(res.record.best_epoch);
                outcome.val_dice = res
                    .record
                    .epochs
                    .iter()
                    .find(|e| e.epoch == res.record.best_epoch)
                    .map(|e| e.val_dice);
                outcome.dc_mean = Some(agg.dc_mean);
                outcome.dg = Some(agg.dg);
                outcome.voe_mean = Some(agg.voe_mean);
                outcome.rvd_mean = agg.rvd_mean;
                outcome.assd_mean = Some(agg.assd_mean);
                outcome.msd_mean = Some(agg.msd_mean);
                outcome.rmsd_mean = Some(agg.rmsd_mean);
                outcome.degenerate_count = Some(agg.degenerate_count);
                outcome.checkpoint = Some(res.record.best_checkpoint.clone());
            }
            Err(e) => outcome.error = Some(e.to_string()),
        }
        out.rows.push(outcome);
    }
    out
}

fn run_row(cfg: &TrainConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    if cfg.with_regression {
        let masks: Vec<Mask> = samples.iter().map(|s| s.mask.clone()).collect();
        let (lr_ck, _) = pretrain_lrnet(&masks, cfg)?;
        train_joint(samples, Some(&lr_ck), cfg)
    } else {
        train_joint(samples, None, cfg)
    }
}

/// Long-form CSV of a run's training curves, one series per column triple.
pub fn loss_curves_csv(record: &RunRecord) -> String {
    let mut out = String::from("epoch,series,value\n");
    for e in &record.epochs {
        for (name, v) in [
            ("train_loss", e.train_loss),
            ("train_seg", e.train_seg),
            ("train_reg", e.train_reg),
            ("val_loss", e.val_loss),
            ("val_seg", e.val_seg),
            ("val_reg", e.val_reg),
            ("val_dice", e.val_dice),
            ("lr", e.lr),
        ] {
            out.push_str(&format!("{},{},{}\n", e.epoch, name, v));
        }
    }
    out
}
