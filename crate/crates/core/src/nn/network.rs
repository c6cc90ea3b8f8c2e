//! The two toy volumetric networks and their parameter plumbing.
//!
//! Parameters live outside the tape in a [`ParamSet`]; each forward pass
//! binds them as leaves ([`bind`]), wires the architecture, and after
//! backward the leaf gradients are collected back into parameter order
//! ([`collect_param_grads`]). This keeps optimizer state attached to stable
//! names rather than tape node ids, which are reassigned every pass.
//!
//! Both networks downsample once and upsample once, so input spatial dims
//! must be even.

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dm::DmVariant;
use crate::error::{Error, Result};
use crate::nn::tape::{NodeId, Tape};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Shape and role of one named parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: [usize; 5],
    pub is_bias: bool,
}

impl ParamSpec {
    fn conv(name: &str, co: usize, ci: usize, k: usize) -> [ParamSpec; 2] {
        [
            ParamSpec {
                name: format!("{name}.w"),
                shape: [co, ci, k, k, k],
                is_bias: false,
            },
            ParamSpec {
                name: format!("{name}.b"),
                shape: [1, co, 1, 1, 1],
                is_bias: true,
            },
        ]
    }
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<S> {
    entries: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::State(format!("duplicate parameter name {name:?}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor<S>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut (String, Tensor<S>)> {
        self.entries.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Total scalar count across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast::<T>()))
                .collect(),
        }
    }
}

/// Kaiming-uniform initialization: weights uniform in `[-b, b]` with
/// `b = sqrt(6 / fan_in)` (`fan_in = ci·k³`), biases zero. Fully determined
/// by the seed.
pub fn kaiming_uniform(specs: &[ParamSpec], seed: u64) -> ParamSet<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for spec in specs {
        let numel: usize = spec.shape.iter().product();
        let tensor = if spec.is_bias {
            Tensor::zeros(spec.shape)
        } else {
            let fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3] * spec.shape[4];
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let data: Vec<f32> = (0..numel).map(|_| rng.sample(dist) as f32).collect();
            Tensor::from_vec(spec.shape, data).expect("spec shape matches sample count")
        };
        params
            .push(spec.name.clone(), tensor)
            .expect("spec names are unique");
    }
    params
}

/// Parameter leaves recorded on a tape for one forward pass.
pub struct Bound {
    entries: Vec<(String, NodeId)>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| Error::State(format!("parameter {name:?} is not bound")))
    }

    pub fn entries(&self) -> &[(String, NodeId)] {
        &self.entries
    }
}

/// Push every parameter in the set onto the tape as a leaf.
pub fn bind<S: Scalar>(tape: &mut Tape<S>, params: &ParamSet<S>) -> Bound {
    Bound {
        entries: params
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone(), name)))
            .collect(),
    }
}

/// Gather leaf gradients back into parameter order. Parameters that did not
/// participate in the pass get zero gradients.
pub fn collect_param_grads<S: Scalar>(
    bound: &Bound,
    grads: &[Option<Tensor<S>>],
    params: &ParamSet<S>,
) -> Result<Vec<Tensor<S>>> {
    let mut out = Vec::with_capacity(params.len());
    for (name, tensor) in params.iter() {
        let id = bound.get(name)?;
        out.push(match &grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(tensor.shape()),
        });
    }
    Ok(out)
}

fn conv<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    name: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
) -> Result<NodeId> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.get(&format!("{name}.b"))?;
    tape.conv3d(name, x, w, b, stride, pad)
}

fn conv_relu<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    name: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
) -> Result<NodeId> {
    let y = conv(tape, p, name, x, stride, pad)?;
    Ok(tape.relu(&format!("{name}.relu"), y))
}

/// Residual block: two 3×3×3 convs with an identity shortcut,
/// `relu(x + c2(relu(c1(x))))`. Channel count is preserved.
fn res_block<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let h = conv_relu(tape, p, &format!("{prefix}.c1"), x, 1, 1)?;
    let h = conv(tape, p, &format!("{prefix}.c2"), h, 1, 1)?;
    let sum = tape.add(&format!("{prefix}.add"), x, h)?;
    Ok(tape.relu(&format!("{prefix}.relu"), sum))
}

/// Residual block that closes with tanh instead of relu, bounding its
/// output to (−1, 1). Without normalization layers, an unbounded path into
/// the classification head lets early class-imbalance gradients inflate
/// activations until the f32 softmax saturates and all gradients vanish;
/// bounding the head's input keeps the logit range small forever.
fn res_block_bounded<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let h = conv_relu(tape, p, &format!("{prefix}.c1"), x, 1, 1)?;
    let h = conv(tape, p, &format!("{prefix}.c2"), h, 1, 1)?;
    let sum = tape.add(&format!("{prefix}.add"), x, h)?;
    Ok(tape.tanh(&format!("{prefix}.tanh"), sum))
}

/// Segmentation network: a two-level residual U-Net with a single
/// downsampling step, a bounded decoder block, and a softmax head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MNetSpec {
    pub in_channels: usize,
    pub classes: usize,
    pub base_width: usize,
}

impl Default for MNetSpec {
    fn default() -> Self {
        MNetSpec {
            in_channels: 1,
            classes: 2,
            base_width: 8,
        }
    }
}

impl MNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 {
            return Err(Error::Config(
                "network channels and width must be >= 1".into(),
            ));
        }
        if self.classes < 2 {
            return Err(Error::Config("segmentation needs at least 2 classes".into()));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let w = self.base_width;
        let mut out = Vec::new();
        out.extend(ParamSpec::conv("stem", w, self.in_channels, 3));
        out.extend(ParamSpec::conv("enc.c1", w, w, 3));
        out.extend(ParamSpec::conv("enc.c2", w, w, 3));
        out.extend(ParamSpec::conv("body.in", 2 * w, w, 3));
        out.extend(ParamSpec::conv("body.c1", 2 * w, 2 * w, 3));
        out.extend(ParamSpec::conv("body.c2", 2 * w, 2 * w, 3));
        out.extend(ParamSpec::conv("up", w, 2 * w, 3));
        out.extend(ParamSpec::conv("dec.in", w, 2 * w, 3));
        out.extend(ParamSpec::conv("dec.c1", w, w, 3));
        out.extend(ParamSpec::conv("dec.c2", w, w, 3));
        out.extend(ParamSpec::conv("head", self.classes, w, 1));
        out
    }

    pub fn init(&self, seed: u64) -> ParamSet<f32> {
        kaiming_uniform(&self.param_specs(), seed)
    }

    /// Wire the network on the tape; returns the per-voxel class
    /// probabilities (softmax output).
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        p: &Bound,
        input: NodeId,
    ) -> Result<NodeId> {
        let x = conv_relu(tape, p, "stem", input, 1, 1)?;
        let skip = res_block(tape, p, "enc", x)?;
        let x = tape.maxpool2("pool", skip)?;
        let x = conv_relu(tape, p, "body.in", x, 1, 1)?;
        let x = res_block(tape, p, "body", x)?;
        let x = tape.upsample2("up.sample", x);
        let x = conv_relu(tape, p, "up", x, 1, 1)?;
        let x = tape.concat_channels("cat", skip, x)?;
        let x = conv_relu(tape, p, "dec.in", x, 1, 1)?;
        let x = res_block_bounded(tape, p, "dec", x)?;
        let logits = conv(tape, p, "head", x, 1, 0)?;
        Ok(tape.softmax_channels("softmax", logits))
    }
}

/// Output activation of the regression head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadActivation {
    Relu,
    Sigmoid,
    Tanh,
}

/// Distance-map regression network: probabilities in, distance maps out,
/// with one stride-2 downsampling mirrored by one upsampling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrNetSpec {
    pub classes: usize,
    pub width: usize,
    pub variant: DmVariant,
    /// Clamp the head to (0, 1) with a sigmoid instead of the default
    /// activation for the variant (ablation flag).
    #[serde(default)]
    pub sigmoid_head: bool,
}

impl LrNetSpec {
    pub fn new(classes: usize, width: usize, variant: DmVariant) -> Self {
        LrNetSpec {
            classes,
            width,
            variant,
            sigmoid_head: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("network width must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("regression needs at least 2 classes".into()));
        }
        Ok(())
    }

    /// Signed maps need a signed activation; unsigned maps a nonnegative
    /// one.
    pub fn head_activation(&self) -> HeadActivation {
        if self.sigmoid_head {
            HeadActivation::Sigmoid
        } else {
            match self.variant {
                DmVariant::Snidm => HeadActivation::Tanh,
                _ => HeadActivation::Relu,
            }
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let w = self.width;
        let mut out = Vec::new();
        out.extend(ParamSpec::conv("down", w, self.classes, 3));
        out.extend(ParamSpec::conv("res.c1", w, w, 3));
        out.extend(ParamSpec::conv("res.c2", w, w, 3));
        out.extend(ParamSpec::conv("up", w, w, 3));
        out.extend(ParamSpec::conv("head", self.classes, w, 1));
        out
    }

    pub fn init(&self, seed: u64) -> ParamSet<f32> {
        kaiming_uniform(&self.param_specs(), seed)
    }

    /// Wire the network; returns the per-class distance-map stack.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        p: &Bound,
        input: NodeId,
    ) -> Result<NodeId> {
        let x = conv_relu(tape, p, "down", input, 2, 1)?;
        let x = res_block(tape, p, "res", x)?;
        let x = tape.upsample2("up.sample", x);
        let x = conv_relu(tape, p, "up", x, 1, 1)?;
        let pre = conv(tape, p, "head", x, 1, 0)?;
        Ok(match self.head_activation() {
            HeadActivation::Relu => tape.relu("head.act", pre),
            HeadActivation::Sigmoid => tape.sigmoid("head.act", pre),
            HeadActivation::Tanh => tape.tanh("head.act", pre),
        })
    }
}

/// Which network a checkpoint holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetSpec {
    MNet(MNetSpec),
    LrNet(LrNetSpec),
}

impl NetSpec {
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match self {
            NetSpec::MNet(s) => s.param_specs(),
            NetSpec::LrNet(s) => s.param_specs(),
        }
    }

    pub fn init(&self, seed: u64) -> ParamSet<f32> {
        match self {
            NetSpec::MNet(s) => s.init(seed),
            NetSpec::LrNet(s) => s.init(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NetSpec::MNet(s) => s.validate(),
            NetSpec::LrNet(s) => s.validate(),
        }
    }
}

/// Check that a parameter set matches a spec name-for-name and
/// shape-for-shape, in order.
pub fn validate_params<S: Scalar>(specs: &[ParamSpec], params: &ParamSet<S>) -> Result<()> {
    if specs.len() != params.len() {
        return Err(Error::State(format!(
            "parameter count mismatch: spec has {}, set has {}",
            specs.len(),
            params.len()
        )));
    }
    for (spec, (name, tensor)) in specs.iter().zip(params.iter()) {
        if spec.name != *name {
            return Err(Error::State(format!(
                "parameter order mismatch: expected {:?}, found {name:?}",
                spec.name
            )));
        }
        if spec.shape != tensor.shape() {
            return Err(Error::State(format!(
                "parameter {name:?} has shape {:?}, expected {:?}",
                tensor.shape(),
                spec.shape
            )));
        }
    }
    Ok(())
}
