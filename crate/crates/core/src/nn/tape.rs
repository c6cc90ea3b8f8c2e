//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records operations as they execute; node ids increase
//! monotonically, so the recording order is already a topological order and
//! [`Tape::backward`] is a single reverse sweep that visits each node once.
//! Backward accepts multiple seeds, which the two-headed training objective
//! needs: the segmentation gradient seeds the probability node while the
//! regression gradient seeds the distance-map node downstream of it, and
//! contributions merge where the paths join.
//!
//! Gradients returned by backward are populated at leaf nodes (parameters
//! and inputs); interior gradients are consumed during the sweep.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

enum Op {
    Leaf,
    Conv3d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    },
    Relu {
        input: NodeId,
    },
    Sigmoid {
        input: NodeId,
    },
    Tanh {
        input: NodeId,
    },
    /// Softmax over the channel dimension.
    SoftmaxC {
        input: NodeId,
    },
    /// 2×2×2 max pooling, stride 2; argmax stores the flat input index that
    /// won each output cell.
    MaxPool2 {
        input: NodeId,
        argmax: Vec<usize>,
    },
    /// Nearest-neighbor doubling of the three spatial dims.
    Upsample2 {
        input: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    /// Channel concatenation of two tensors.
    ConcatC {
        a: NodeId,
        b: NodeId,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op,
    name: String,
}

/// Recording of one forward pass.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn layer_err(name: &str, detail: impl Into<String>) -> Error {
    Error::Layer {
        layer: name.to_string(),
        detail: detail.into(),
    }
}

/// Output index range `[lo, hi)` for which `o·stride + k_off` lands inside
/// `[0, in_dim)`.
#[inline]
fn conv_range(out_dim: usize, in_dim: usize, k_off: isize, stride: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if k_off >= 0 { 0 } else { (-k_off + s - 1) / s };
    let hi_in = in_dim as isize - k_off;
    let hi = if hi_in <= 0 { 0 } else { (hi_in + s - 1) / s };
    (lo as usize, (hi.min(out_dim as isize)).max(lo) as usize)
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<S>, op: Op, name: &str) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            name: name.to_string(),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor<S>, name: &str) -> NodeId {
        self.push(value, Op::Leaf, name)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    /// Debugging aid: per-node value statistics on stderr.
    #[cfg(test)]
    #[allow(dead_code)]
    pub(crate) fn dump_stats(&self) {
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.value.data();
            let mut mn = f64::INFINITY;
            let mut mx = f64::NEG_INFINITY;
            let mut sum = 0.0;
            let mut nonzero = 0usize;
            for &v in d {
                let x = v.into_f64();
                mn = mn.min(x);
                mx = mx.max(x);
                sum += x;
                if x != 0.0 {
                    nonzero += 1;
                }
            }
            eprintln!(
                "  node {i:3} {:12} min={mn:+.3e} max={mx:+.3e} mean={:+.3e} nz={nonzero}/{}",
                n.name,
                sum / d.len() as f64,
                d.len()
            );
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// 3D convolution with cubic kernel, zero padding `pad`, and equal
    /// stride on all spatial axes. Weight is `[co, ci, k, k, k]`, bias
    /// `[1, co, 1, 1, 1]`.
    pub fn conv3d(
        &mut self,
        name: &str,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let xs = self.value(input).shape();
        let ws = self.value(weight).shape();
        let bs = self.value(bias).shape();
        let (co, ci, k) = (ws[0], ws[1], ws[2]);
        if ws[3] != k || ws[4] != k {
            return Err(layer_err(name, format!("kernel must be cubic, got {ws:?}")));
        }
        if xs[1] != ci {
            return Err(layer_err(
                name,
                format!("input has {} channels, weight expects {ci}", xs[1]),
            ));
        }
        if bs != [1, co, 1, 1, 1] {
            return Err(layer_err(
                name,
                format!("bias shape {bs:?}, expected [1,{co},1,1,1]"),
            ));
        }
        if stride == 0 {
            return Err(layer_err(name, "stride must be >= 1"));
        }
        let out_sp = |d: usize| -> Result<usize> {
            let n = d + 2 * pad;
            if n < k {
                return Err(layer_err(
                    name,
                    format!("spatial dim {d} too small for kernel {k} with pad {pad}"),
                ));
            }
            Ok((n - k) / stride + 1)
        };
        let os = [xs[0], co, out_sp(xs[2])?, out_sp(xs[3])?, out_sp(xs[4])?];

        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let mut out = Tensor::zeros(os);
        let (iz, iy, ix) = (xs[2], xs[3], xs[4]);
        let (oz, oy, ox) = (os[2], os[3], os[4]);
        let p = pad as isize;
        {
            let od = out.data_mut();
            let xd = x.data();
            let wd = w.data();
            for n in 0..xs[0] {
                for c_out in 0..co {
                    let ob = (n * co + c_out) * oz * oy * ox;
                    let bias_v = b.data()[c_out];
                    for v in &mut od[ob..ob + oz * oy * ox] {
                        *v = bias_v;
                    }
                    for c_in in 0..ci {
                        let xb = (n * ci + c_in) * iz * iy * ix;
                        for kz in 0..k {
                            let zo = kz as isize - p;
                            let (z_lo, z_hi) = conv_range(oz, iz, zo, stride);
                            for ky in 0..k {
                                let yo = ky as isize - p;
                                let (y_lo, y_hi) = conv_range(oy, iy, yo, stride);
                                for kx in 0..k {
                                    let xo = kx as isize - p;
                                    let (x_lo, x_hi) = conv_range(ox, ix, xo, stride);
                                    if x_lo >= x_hi {
                                        continue;
                                    }
                                    let wv =
                                        wd[(((c_out * ci + c_in) * k + kz) * k + ky) * k + kx];
                                    for z in z_lo..z_hi {
                                        let zi = (z * stride) as isize + zo;
                                        for y in y_lo..y_hi {
                                            let yi = (y * stride) as isize + yo;
                                            let orow = ob + (z * oy + y) * ox;
                                            let irow = xb
                                                + (zi as usize * iy + yi as usize) * ix;
                                            if stride == 1 {
                                                // Contiguous axpy over x.
                                                let ib = (irow as isize + x_lo as isize + xo)
                                                    as usize;
                                                let run = x_hi - x_lo;
                                                let outs = &mut od[orow + x_lo..orow + x_hi];
                                                let ins = &xd[ib..ib + run];
                                                for (o, &i) in outs.iter_mut().zip(ins) {
                                                    *o = *o + wv * i;
                                                }
                                            } else {
                                                for xi in x_lo..x_hi {
                                                    let ii = (irow as isize
                                                        + (xi * stride) as isize
                                                        + xo)
                                                        as usize;
                                                    od[orow + xi] = od[orow + xi] + wv * xd[ii];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::Conv3d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            name,
        ))
    }

    pub fn relu(&mut self, name: &str, input: NodeId) -> NodeId {
        let out = self
            .value(input)
            .map(|v| if v > S::zero() { v } else { S::zero() });
        self.push(out, Op::Relu { input }, name)
    }

    pub fn sigmoid(&mut self, name: &str, input: NodeId) -> NodeId {
        let out = self
            .value(input)
            .map(|v| S::one() / (S::one() + (-v).exp()));
        self.push(out, Op::Sigmoid { input }, name)
    }

    pub fn tanh(&mut self, name: &str, input: NodeId) -> NodeId {
        let out = self.value(input).map(|v| v.tanh());
        self.push(out, Op::Tanh { input }, name)
    }

    /// Numerically stable softmax over the channel dimension.
    pub fn softmax_channels(&mut self, name: &str, input: NodeId) -> NodeId {
        let x = self.value(input);
        let sh = x.shape();
        let sp = x.spatial();
        let c_n = sh[1];
        let mut out = Tensor::zeros(sh);
        {
            let od = out.data_mut();
            let xd = x.data();
            for n in 0..sh[0] {
                let base = n * c_n * sp;
                for v in 0..sp {
                    let mut max = S::neg_infinity();
                    for c in 0..c_n {
                        max = max.max(xd[base + c * sp + v]);
                    }
                    let mut sum = S::zero();
                    for c in 0..c_n {
                        let e = (xd[base + c * sp + v] - max).exp();
                        od[base + c * sp + v] = e;
                        sum = sum + e;
                    }
                    for c in 0..c_n {
                        od[base + c * sp + v] = od[base + c * sp + v] / sum;
                    }
                }
            }
        }
        self.push(out, Op::SoftmaxC { input }, name)
    }

    /// 2×2×2 max pooling with stride 2; spatial dims must be even.
    pub fn maxpool2(&mut self, name: &str, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let sh = x.shape();
        if sh[2] % 2 != 0 || sh[3] % 2 != 0 || sh[4] % 2 != 0 {
            return Err(layer_err(
                name,
                format!("maxpool2 needs even spatial dims, got {sh:?}"),
            ));
        }
        let os = [sh[0], sh[1], sh[2] / 2, sh[3] / 2, sh[4] / 2];
        let mut out = Tensor::zeros(os);
        let mut argmax = vec![0usize; out.numel()];
        let (iy, ix) = (sh[3], sh[4]);
        let (oz, oy, ox) = (os[2], os[3], os[4]);
        {
            let od = out.data_mut();
            let xd = x.data();
            let mut oi = 0usize;
            for n in 0..sh[0] {
                for c in 0..sh[1] {
                    let xb = (n * sh[1] + c) * sh[2] * iy * ix;
                    for z in 0..oz {
                        for y in 0..oy {
                            for xo in 0..ox {
                                let mut best = S::neg_infinity();
                                let mut best_i = 0usize;
                                for dz in 0..2 {
                                    for dy in 0..2 {
                                        for dx in 0..2 {
                                            let i = xb
                                                + ((2 * z + dz) * iy + (2 * y + dy)) * ix
                                                + (2 * xo + dx);
                                            if xd[i] > best {
                                                best = xd[i];
                                                best_i = i;
                                            }
                                        }
                                    }
                                }
                                od[oi] = best;
                                argmax[oi] = best_i;
                                oi += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(out, Op::MaxPool2 { input, argmax }, name))
    }

    /// Nearest-neighbor upsampling that doubles z, y, and x.
    pub fn upsample2(&mut self, name: &str, input: NodeId) -> NodeId {
        let x = self.value(input);
        let sh = x.shape();
        let os = [sh[0], sh[1], sh[2] * 2, sh[3] * 2, sh[4] * 2];
        let mut out = Tensor::zeros(os);
        let (iy, ix) = (sh[3], sh[4]);
        let (oz, oy, ox) = (os[2], os[3], os[4]);
        {
            let od = out.data_mut();
            let xd = x.data();
            for n in 0..sh[0] {
                for c in 0..sh[1] {
                    let xb = (n * sh[1] + c) * sh[2] * iy * ix;
                    let ob = (n * sh[1] + c) * oz * oy * ox;
                    for z in 0..oz {
                        for y in 0..oy {
                            let irow = xb + ((z / 2) * iy + y / 2) * ix;
                            let orow = ob + (z * oy + y) * ox;
                            for xo in 0..ox {
                                od[orow + xo] = xd[irow + xo / 2];
                            }
                        }
                    }
                }
            }
        }
        self.push(out, Op::Upsample2 { input }, name)
    }

    /// Elementwise sum (residual connection).
    pub fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(layer_err(
                name,
                format!(
                    "add shapes differ: {:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let mut out = self.value(a).clone();
        out.accumulate(self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }, name))
    }

    /// Concatenate along the channel dimension (skip connection).
    pub fn concat_channels(&mut self, name: &str, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(layer_err(
                name,
                format!("concat shapes incompatible: {sa:?} vs {sb:?}"),
            ));
        }
        let os = [sa[0], sa[1] + sb[1], sa[2], sa[3], sa[4]];
        let sp = self.value(a).spatial();
        let mut out = Tensor::zeros(os);
        for n in 0..sa[0] {
            let (av, bv) = (self.value(a), self.value(b));
            let dst = (n * os[1]) * sp;
            out.data_mut()[dst..dst + sa[1] * sp]
                .copy_from_slice(&av.data()[n * sa[1] * sp..(n + 1) * sa[1] * sp]);
            let dst = dst + sa[1] * sp;
            out.data_mut()[dst..dst + sb[1] * sp]
                .copy_from_slice(&bv.data()[n * sb[1] * sp..(n + 1) * sb[1] * sp]);
        }
        Ok(self.push(out, Op::ConcatC { a, b }, name))
    }

    /// Reverse sweep from the given seed gradients.
    ///
    /// Returns one slot per node; leaf slots hold the accumulated gradients,
    /// interior slots are consumed during propagation.
    pub fn backward(&self, seeds: &[(NodeId, Tensor<S>)]) -> Result<Vec<Option<Tensor<S>>>> {
        if seeds.is_empty() {
            return Err(Error::State("backward needs at least one seed".into()));
        }
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut start = 0usize;
        for (id, g) in seeds {
            if id.0 >= self.nodes.len() {
                return Err(Error::State(format!("seed node {} not on tape", id.0)));
            }
            if g.shape() != self.nodes[id.0].value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "seed gradient shape {:?} vs node {:?} shape {:?}",
                    g.shape(),
                    self.nodes[id.0].name,
                    self.nodes[id.0].value.shape()
                )));
            }
            match &mut grads[id.0] {
                Some(acc) => acc.accumulate(g)?,
                slot => *slot = Some(g.clone()),
            }
            start = start.max(id.0);
        }

        for id in (0..=start).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue; // leaf gradients stay for retrieval
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
        }
        Ok(grads)
    }

    /// Add `delta` into the gradient slot of `id`.
    fn deposit(grads: &mut [Option<Tensor<S>>], id: NodeId, delta: Tensor<S>) -> Result<()> {
        match &mut grads[id.0] {
            Some(acc) => acc.accumulate(&delta),
            slot => {
                *slot = Some(delta);
                Ok(())
            }
        }
    }

    fn propagate(&self, id: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => unreachable!("leaves are skipped in the sweep"),
            Op::Relu { input } => {
                let y = &node.value;
                let mut d = g.clone();
                for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    if yv <= S::zero() {
                        *dv = S::zero();
                    }
                }
                Self::deposit(grads, *input, d)
            }
            Op::Sigmoid { input } => {
                let y = &node.value;
                let mut d = g.clone();
                for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *dv = *dv * yv * (S::one() - yv);
                }
                Self::deposit(grads, *input, d)
            }
            Op::Tanh { input } => {
                let y = &node.value;
                let mut d = g.clone();
                for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                    *dv = *dv * (S::one() - yv * yv);
                }
                Self::deposit(grads, *input, d)
            }
            Op::SoftmaxC { input } => {
                // dx_c = y_c (g_c − Σ_k y_k g_k)
                let y = &node.value;
                let sh = y.shape();
                let sp = y.spatial();
                let c_n = sh[1];
                let mut d = Tensor::zeros(sh);
                let dd = d.data_mut();
                for n in 0..sh[0] {
                    let base = n * c_n * sp;
                    for v in 0..sp {
                        let mut dot = S::zero();
                        for c in 0..c_n {
                            let i = base + c * sp + v;
                            dot = dot + y.data()[i] * g.data()[i];
                        }
                        for c in 0..c_n {
                            let i = base + c * sp + v;
                            dd[i] = y.data()[i] * (g.data()[i] - dot);
                        }
                    }
                }
                Self::deposit(grads, *input, d)
            }
            Op::MaxPool2 { input, argmax } => {
                let mut d = Tensor::zeros(self.value(*input).shape());
                let dd = d.data_mut();
                for (oi, &ii) in argmax.iter().enumerate() {
                    dd[ii] = dd[ii] + g.data()[oi];
                }
                Self::deposit(grads, *input, d)
            }
            Op::Upsample2 { input } => {
                let xs = self.value(*input).shape();
                let mut d = Tensor::zeros(xs);
                let (iy, ix) = (xs[3], xs[4]);
                let os = node.value.shape();
                let (oz, oy, ox) = (os[2], os[3], os[4]);
                let dd = d.data_mut();
                for n in 0..xs[0] {
                    for c in 0..xs[1] {
                        let db = (n * xs[1] + c) * xs[2] * iy * ix;
                        let gb = (n * os[1] + c) * oz * oy * ox;
                        for z in 0..oz {
                            for y in 0..oy {
                                let drow = db + ((z / 2) * iy + y / 2) * ix;
                                let grow = gb + (z * oy + y) * ox;
                                for xo in 0..ox {
                                    let di = drow + xo / 2;
                                    dd[di] = dd[di] + g.data()[grow + xo];
                                }
                            }
                        }
                    }
                }
                Self::deposit(grads, *input, d)
            }
            Op::Add { a, b } => {
                Self::deposit(grads, *a, g.clone())?;
                Self::deposit(grads, *b, g.clone())
            }
            Op::ConcatC { a, b } => {
                let sa = self.value(*a).shape();
                let sb = self.value(*b).shape();
                let sp = self.value(*a).spatial();
                let mut da = Tensor::zeros(sa);
                let mut db = Tensor::zeros(sb);
                for n in 0..sa[0] {
                    let src = g.data();
                    let ga = (n * (sa[1] + sb[1])) * sp;
                    da.data_mut()[n * sa[1] * sp..(n + 1) * sa[1] * sp]
                        .copy_from_slice(&src[ga..ga + sa[1] * sp]);
                    db.data_mut()[n * sb[1] * sp..(n + 1) * sb[1] * sp]
                        .copy_from_slice(&src[ga + sa[1] * sp..ga + (sa[1] + sb[1]) * sp]);
                }
                Self::deposit(grads, *a, da)?;
                Self::deposit(grads, *b, db)
            }
            Op::Conv3d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let xs = x.shape();
                let ws = w.shape();
                let os = node.value.shape();
                let (co, ci, k) = (ws[0], ws[1], ws[2]);
                let (iz, iy, ix) = (xs[2], xs[3], xs[4]);
                let (oz, oy, ox) = (os[2], os[3], os[4]);
                let p = *pad as isize;
                let s = *stride;

                let mut dx = Tensor::zeros(xs);
                let mut dw = Tensor::zeros(ws);
                let mut db = Tensor::zeros([1, co, 1, 1, 1]);
                {
                    let dxd = dx.data_mut();
                    let dwd = dw.data_mut();
                    let dbd = db.data_mut();
                    let xd = x.data();
                    let wd = w.data();
                    let gd = g.data();
                    for n in 0..xs[0] {
                        for c_out in 0..co {
                            let gb = (n * co + c_out) * oz * oy * ox;
                            let mut bias_acc = S::zero();
                            for &gv in &gd[gb..gb + oz * oy * ox] {
                                bias_acc = bias_acc + gv;
                            }
                            dbd[c_out] = dbd[c_out] + bias_acc;
                            for c_in in 0..ci {
                                let xb = (n * ci + c_in) * iz * iy * ix;
                                for kz in 0..k {
                                    let zo = kz as isize - p;
                                    let (z_lo, z_hi) = conv_range(oz, iz, zo, s);
                                    for ky in 0..k {
                                        let yo = ky as isize - p;
                                        let (y_lo, y_hi) = conv_range(oy, iy, yo, s);
                                        for kx in 0..k {
                                            let xo = kx as isize - p;
                                            let (x_lo, x_hi) = conv_range(ox, ix, xo, s);
                                            if x_lo >= x_hi {
                                                continue;
                                            }
                                            let wi = (((c_out * ci + c_in) * k + kz) * k + ky)
                                                * k
                                                + kx;
                                            let wv = wd[wi];
                                            let mut w_acc = S::zero();
                                            for z in z_lo..z_hi {
                                                let zi = (z * s) as isize + zo;
                                                for y in y_lo..y_hi {
                                                    let yi = (y * s) as isize + yo;
                                                    let grow = gb + (z * oy + y) * ox;
                                                    let irow = xb
                                                        + (zi as usize * iy + yi as usize) * ix;
                                                    if s == 1 {
                                                        let ib = (irow as isize
                                                            + x_lo as isize
                                                            + xo)
                                                            as usize;
                                                        let run = x_hi - x_lo;
                                                        let gs = &gd[grow + x_lo..grow + x_hi];
                                                        let xin = &xd[ib..ib + run];
                                                        let dxs = &mut dxd[ib..ib + run];
                                                        for j in 0..run {
                                                            let gv = gs[j];
                                                            w_acc = w_acc + xin[j] * gv;
                                                            dxs[j] = dxs[j] + wv * gv;
                                                        }
                                                    } else {
                                                        for xi in x_lo..x_hi {
                                                            let ii = (irow as isize
                                                                + (xi * s) as isize
                                                                + xo)
                                                                as usize;
                                                            let gv = gd[grow + xi];
                                                            w_acc = w_acc + xd[ii] * gv;
                                                            dxd[ii] = dxd[ii] + wv * gv;
                                                        }
                                                    }
                                                }
                                            }
                                            dwd[wi] = dwd[wi] + w_acc;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Self::deposit(grads, *input, dx)?;
                Self::deposit(grads, *weight, dw)?;
                Self::deposit(grads, *bias, db)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic tie-free pseudo-random tensor: multiplier 73 is coprime
    /// to 127, so values repeat only at index distance 127 — farther apart
    /// than any pooling window or kernel span used here.
    fn seq_tensor(shape: [usize; 5], scale: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..n)
                .map(|i| ((i * 73 % 127) as f64 / 12.7 - 5.0) * scale)
                .collect(),
        )
        .unwrap()
    }

    fn fd_grad(f: impl Fn(&Tensor<f64>) -> f64, x0: &Tensor<f64>, h: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(x0.numel());
        let mut probe = x0.clone();
        for i in 0..x0.numel() {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let dn = f(&probe);
            probe.data_mut()[i] = orig;
            out.push((up - dn) / (2.0 * h));
        }
        out
    }

    fn assert_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            let denom = w.abs().max(g.abs()).max(1e-6);
            assert!((g - w).abs() / denom < tol, "{what}[{i}]: got {g}, want {w}");
        }
    }

    fn sum_sq(t: &Tensor<f64>) -> f64 {
        t.data().iter().map(|v| v * v).sum()
    }

    fn sum_sq_seed(t: &Tensor<f64>) -> Tensor<f64> {
        t.map(|v| 2.0 * v)
    }

    #[test]
    fn identity_conv_passes_input_through() {
        let mut tape = Tape::<f64>::new();
        let x = seq_tensor([1, 1, 3, 3, 3], 0.5);
        let xi = tape.leaf(x.clone(), "x");
        let wi = tape.leaf(Tensor::from_vec([1, 1, 1, 1, 1], vec![1.0]).unwrap(), "w");
        let bi = tape.leaf(Tensor::zeros([1, 1, 1, 1, 1]), "b");
        let y = tape.conv3d("id", xi, wi, bi, 1, 0).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn conv_grads_match_fd() {
        let x0 = seq_tensor([1, 2, 4, 4, 4], 0.3);
        let w0 = seq_tensor([3, 2, 3, 3, 3], 0.1);
        let b0 = seq_tensor([1, 3, 1, 1, 1], 0.2);
        for (stride, pad) in [(1usize, 1usize), (2, 1), (1, 0)] {
            let run = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
                let mut tape = Tape::<f64>::new();
                let xi = tape.leaf(x.clone(), "x");
                let wi = tape.leaf(w.clone(), "w");
                let bi = tape.leaf(b.clone(), "b");
                let y = tape.conv3d("c", xi, wi, bi, stride, pad).unwrap();
                (tape, xi, wi, bi, y)
            };
            let value = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
                let (tape, _, _, _, y) = run(x, w, b);
                sum_sq(tape.value(y))
            };
            let (tape, xi, wi, bi, y) = run(&x0, &w0, &b0);
            let seed = sum_sq_seed(tape.value(y));
            let grads = tape.backward(&[(y, seed)]).unwrap();

            let fd_x = fd_grad(|x| value(x, &w0, &b0), &x0, 1e-5);
            let fd_w = fd_grad(|w| value(&x0, w, &b0), &w0, 1e-5);
            let fd_b = fd_grad(|b| value(&x0, &w0, b), &b0, 1e-5);
            let tag = format!("s{stride}p{pad}");
            assert_close(grads[xi.0].as_ref().unwrap().data(), &fd_x, 1e-6, &format!("dx {tag}"));
            assert_close(grads[wi.0].as_ref().unwrap().data(), &fd_w, 1e-6, &format!("dw {tag}"));
            assert_close(grads[bi.0].as_ref().unwrap().data(), &fd_b, 1e-6, &format!("db {tag}"));
        }
    }

    #[test]
    fn activation_grads_match_fd() {
        type Builder = fn(&mut Tape<f64>, NodeId) -> NodeId;
        let cases: Vec<(&str, Builder)> = vec![
            ("relu", |t, x| t.relu("a", x)),
            ("sigmoid", |t, x| t.sigmoid("a", x)),
            ("tanh", |t, x| t.tanh("a", x)),
            ("softmax", |t, x| t.softmax_channels("a", x)),
        ];
        let x0 = seq_tensor([1, 3, 2, 2, 2], 0.37);
        for (what, build) in cases {
            let run = |x: &Tensor<f64>| {
                let mut tape = Tape::<f64>::new();
                let xi = tape.leaf(x.clone(), "x");
                let y = build(&mut tape, xi);
                (tape, xi, y)
            };
            let (tape, xi, y) = run(&x0);
            let seed = sum_sq_seed(tape.value(y));
            let grads = tape.backward(&[(y, seed)]).unwrap();
            let fd = fd_grad(
                |x| {
                    let (t, _, y) = run(x);
                    sum_sq(t.value(y))
                },
                &x0,
                1e-6,
            );
            assert_close(grads[xi.0].as_ref().unwrap().data(), &fd, 1e-5, what);
        }
    }

    #[test]
    fn softmax_outputs_normalized() {
        let mut tape = Tape::<f32>::new();
        let x = seq_tensor([2, 4, 2, 2, 2], 1.7).cast::<f32>();
        let xi = tape.leaf(x, "x");
        let y = tape.softmax_channels("sm", xi);
        let out = tape.value(y);
        let sp = out.spatial();
        for n in 0..2 {
            for v in 0..sp {
                let s: f32 = (0..4).map(|c| out.data()[(n * 4 + c) * sp + v]).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
        // Constant logits → uniform probabilities.
        let mut tape = Tape::<f32>::new();
        let xi = tape.leaf(Tensor::full([1, 4, 2, 2, 2], 0.7f32), "x");
        let y = tape.softmax_channels("sm", xi);
        assert!(tape
            .value(y)
            .data()
            .iter()
            .all(|&v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn pool_upsample_concat_add_grads() {
        let x0 = seq_tensor([1, 2, 4, 4, 4], 0.29);
        let run = |x: &Tensor<f64>| {
            let mut tape = Tape::<f64>::new();
            let xi = tape.leaf(x.clone(), "x");
            let p = tape.maxpool2("pool", xi).unwrap();
            let u = tape.upsample2("up", p);
            let c = tape.concat_channels("cat", u, xi).unwrap();
            let r = tape.relu("relu", c);
            (tape, xi, r)
        };
        let (tape, xi, y) = run(&x0);
        let seed = sum_sq_seed(tape.value(y));
        let grads = tape.backward(&[(y, seed)]).unwrap();
        let fd = fd_grad(
            |x| {
                let (t, _, y) = run(x);
                sum_sq(t.value(y))
            },
            &x0,
            1e-6,
        );
        assert_close(grads[xi.0].as_ref().unwrap().data(), &fd, 1e-5, "dx");
    }

    #[test]
    fn residual_identity_path_passes_gradient() {
        // With a zero conv path, d(x + conv(x))/dx is exactly the upstream
        // gradient.
        let x0 = seq_tensor([1, 2, 4, 4, 4], 0.4);
        let mut tape = Tape::<f64>::new();
        let xi = tape.leaf(x0.clone(), "x");
        let wi = tape.leaf(Tensor::zeros([2, 2, 3, 3, 3]), "w");
        let bi = tape.leaf(Tensor::zeros([1, 2, 1, 1, 1]), "b");
        let c = tape.conv3d("conv", xi, wi, bi, 1, 1).unwrap();
        let y = tape.add("res", xi, c).unwrap();
        let seed = Tensor::full(x0.shape(), 1.0f64);
        let grads = tape.backward(&[(y, seed.clone())]).unwrap();
        assert_eq!(grads[xi.0].as_ref().unwrap(), &seed);
    }

    #[test]
    fn multi_seed_backward_accumulates() {
        // Seeding the output and an intermediate node adds both
        // contributions into the leaf gradient.
        let x0 = seq_tensor([1, 1, 2, 2, 2], 0.5);
        let mut tape = Tape::<f64>::new();
        let xi = tape.leaf(x0.clone(), "x");
        let a = tape.relu("a", xi);
        let b = tape.tanh("b", a);
        let one = Tensor::full(x0.shape(), 1.0f64);
        let both = tape.backward(&[(b, one.clone()), (a, one.clone())]).unwrap();
        let only_b = tape.backward(&[(b, one.clone())]).unwrap();
        let only_a = tape.backward(&[(a, one)]).unwrap();
        for i in 0..x0.numel() {
            let want = only_b[xi.0].as_ref().unwrap().data()[i]
                + only_a[xi.0].as_ref().unwrap().data()[i];
            let got = both[xi.0].as_ref().unwrap().data()[i];
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_rejects_bad_seeds() {
        let mut tape = Tape::<f64>::new();
        let xi = tape.leaf(Tensor::zeros([1, 1, 2, 2, 2]), "x");
        assert!(tape.backward(&[]).is_err());
        assert!(tape
            .backward(&[(xi, Tensor::zeros([1, 1, 2, 2, 3]))])
            .is_err());
        assert!(tape
            .backward(&[(NodeId(5), Tensor::zeros([1, 1, 2, 2, 2]))])
            .is_err());
    }

    #[test]
    fn conv_rejects_mismatched_shapes() {
        let mut tape = Tape::<f32>::new();
        let xi = tape.leaf(Tensor::zeros([1, 2, 4, 4, 4]), "x");
        let w_bad = tape.leaf(Tensor::zeros([3, 1, 3, 3, 3]), "w");
        let b = tape.leaf(Tensor::zeros([1, 3, 1, 1, 1]), "b");
        let err = tape.conv3d("enc.conv", xi, w_bad, b, 1, 1).unwrap_err();
        assert!(err.to_string().contains("enc.conv"), "{err}");
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        let mut tape = Tape::<f32>::new();
        let xi = tape.leaf(Tensor::zeros([1, 1, 3, 4, 4]), "x");
        assert!(tape.maxpool2("pool", xi).is_err());
    }

    #[test]
    fn stride2_conv_halves_dims() {
        let mut tape = Tape::<f32>::new();
        let xi = tape.leaf(Tensor::zeros([1, 2, 16, 16, 16]), "x");
        let wi = tape.leaf(Tensor::zeros([8, 2, 3, 3, 3]), "w");
        let bi = tape.leaf(Tensor::zeros([1, 8, 1, 1, 1]), "b");
        let y = tape.conv3d("down", xi, wi, bi, 2, 1).unwrap();
        assert_eq!(tape.value(y).shape(), [1, 8, 8, 8, 8]);
    }
}
