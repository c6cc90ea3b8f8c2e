//! Dense 5-D tensors in `[batch, channel, z, y, x]` layout.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volume::Volume;

/// Value holder for the autodiff engine. Row-major with x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: [usize; 5],
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: [usize; 5]) -> Self {
        Tensor {
            shape,
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 5], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {shape:?} ({n})",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: [usize; 5], value: S) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Spatial volume `z·y·x`.
    #[inline]
    pub fn spatial(&self) -> usize {
        self.shape[2] * self.shape[3] * self.shape[4]
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Offset of channel `c` in batch item `b`.
    #[inline]
    pub fn channel_offset(&self, b: usize, c: usize) -> usize {
        (b * self.shape[1] + c) * self.spatial()
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise accumulate, for gradient merging.
    pub fn accumulate(&mut self, other: &Tensor<S>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "accumulate {:?} into {:?}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Convert the element type (f32 ↔ f64), e.g. to build the f64 twin of
    /// an f32 network for finite-difference checks.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| T::from_f64(v.into_f64())).collect(),
        }
    }

    /// Stack per-class volumes into a single-batch `[1, C, z, y, x]` tensor.
    pub fn from_volumes(vols: &[Volume<f32>]) -> Result<Tensor<S>> {
        let first = vols
            .first()
            .ok_or_else(|| Error::invalid("from_volumes needs at least one channel"))?;
        let [nz, ny, nx] = first.shape();
        let mut data = Vec::with_capacity(vols.len() * first.len());
        for v in vols {
            if v.shape() != first.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "channel shapes differ: {:?} vs {:?}",
                    v.shape(),
                    first.shape()
                )));
            }
            data.extend(v.data().iter().map(|&x| S::from_f64(x as f64)));
        }
        Tensor::from_vec([1, vols.len(), nz, ny, nx], data)
    }

    /// Split a single-batch tensor back into per-channel volumes.
    pub fn to_volumes(&self, spacing: [f32; 3]) -> Result<Vec<Volume<f32>>> {
        if self.shape[0] != 1 {
            return Err(Error::invalid("to_volumes expects batch size 1"));
        }
        let shape3 = [self.shape[2], self.shape[3], self.shape[4]];
        let sp = self.spatial();
        (0..self.shape[1])
            .map(|c| {
                let slice = &self.data[c * sp..(c + 1) * sp];
                Volume::from_vec(
                    shape3,
                    spacing,
                    slice.iter().map(|&v| v.into_f64() as f32).collect(),
                )
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
