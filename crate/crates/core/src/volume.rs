//! Dense 3D grids with voxel spacing, plus the RVOL v1 on-disk format.
//!
//! Volumes are stored flat in z-major order: the flat index of `(z, y, x)` is
//! `(z * ny + y) * nx + x`. All coordinates throughout the crate follow the
//! `(z, y, x)` ordering.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Element types storable in a [`Volume`].
pub trait Element: Copy + Default + PartialEq + std::fmt::Debug + 'static {
    const DTYPE: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Element for u8 {
    const DTYPE: &'static str = "u8";
    const SIZE: usize = 1;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

impl Element for u32 {
    // In-memory only (component labels); RVOL serialization covers f32/u8.
    const DTYPE: &'static str = "u32";
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

/// Dense 3D scalar grid with physical voxel spacing in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    shape: [usize; 3],
    spacing: [f32; 3],
    data: Vec<T>,
}

impl<T: Element> Volume<T> {
    pub fn new(shape: [usize; 3], spacing: [f32; 3], fill: T) -> Result<Self> {
        Self::from_vec(shape, spacing, vec![fill; shape[0] * shape[1] * shape[2]])
    }

    pub fn from_vec(shape: [usize; 3], spacing: [f32; 3], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("shape {shape:?} has a zero dim")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!(
                "spacing {spacing:?} must be finite and positive"
            )));
        }
        let n = shape[0] * shape[1] * shape[2];
        if data.len() != n {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {shape:?} ({n} voxels)",
                data.len()
            )));
        }
        Ok(Volume {
            shape,
            spacing,
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn set_spacing(&mut self, spacing: [f32; 3]) -> Result<()> {
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!("bad spacing {spacing:?}")));
        }
        self.spacing = spacing;
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index of `(z, y, x)`.
    #[inline]
    pub fn idx(&self, z: usize, y: usize, x: usize) -> usize {
        debug_assert!(z < self.shape[0] && y < self.shape[1] && x < self.shape[2]);
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.idx(z, y, x)]
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: T) {
        let i = self.idx(z, y, x);
        self.data[i] = v;
    }

    /// Inverse of [`Volume::idx`].
    #[inline]
    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let nx = self.shape[2];
        let ny = self.shape[1];
        let x = flat % nx;
        let y = (flat / nx) % ny;
        let z = flat / (nx * ny);
        [z, y, x]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Volume<U>) -> bool {
        self.shape == other.shape
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Physical length of the image diagonal in millimeters.
    pub fn diagonal_mm(&self) -> f64 {
        let mut s = 0.0f64;
        for a in 0..3 {
            let d = self.shape[a] as f64 * self.spacing[a] as f64;
            s += d * d;
        }
        s.sqrt()
    }
}

#[derive(Serialize, Deserialize)]
struct RvolHeader {
    magic: String,
    version: u32,
    dtype: String,
    shape: [usize; 3],
    spacing: [f32; 3],
    order: String,
}

impl<T: Element> Volume<T> {
    /// Write in RVOL v1: one JSON header line, then the raw little-endian payload.
    pub fn write_rvol(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = RvolHeader {
            magic: "RVOL".to_string(),
            version: 1,
            dtype: T::DTYPE.to_string(),
            shape: self.shape,
            spacing: self.spacing,
            order: "z-major".to_string(),
        };
        let mut bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        bytes.push(b'\n');
        bytes.reserve(self.data.len() * T::SIZE);
        for &v in &self.data {
            v.write_le(&mut bytes);
        }
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&bytes)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Read an RVOL v1 file; rejects wrong dtype, version, or payload length.
    pub fn read_rvol(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(pstr.clone(), e))?;
        let mut r = BufReader::new(file);
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)
            .map_err(|e| Error::io(pstr.clone(), e))?;
        let nl = raw
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(&pstr, "missing header newline"))?;
        let header: RvolHeader = serde_json::from_slice(&raw[..nl])
            .map_err(|e| Error::format(&pstr, format!("bad header: {e}")))?;
        if header.magic != "RVOL" {
            return Err(Error::format(&pstr, format!("bad magic {:?}", header.magic)));
        }
        if header.version != 1 {
            return Err(Error::format(
                &pstr,
                format!("unsupported version {}", header.version),
            ));
        }
        if header.order != "z-major" {
            return Err(Error::format(&pstr, format!("bad order {:?}", header.order)));
        }
        if header.dtype != T::DTYPE {
            return Err(Error::format(
                &pstr,
                format!("dtype {:?}, expected {:?}", header.dtype, T::DTYPE),
            ));
        }
        let n = header.shape[0] * header.shape[1] * header.shape[2];
        let payload = &raw[nl + 1..];
        if payload.len() != n * T::SIZE {
            return Err(Error::format(
                &pstr,
                format!(
                    "payload is {} bytes, expected {} for shape {:?}",
                    payload.len(),
                    n * T::SIZE,
                    header.shape
                ),
            ));
        }
        let data = payload
            .chunks_exact(T::SIZE)
            .map(T::read_le)
            .collect::<Vec<_>>();
        Volume::from_vec(header.shape, header.spacing, data)
    }
}

/// Label volume whose values are class ids `< num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    vol: Volume<u8>,
    num_classes: u8,
}

impl Mask {
    pub fn new(vol: Volume<u8>, num_classes: u8) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("a mask needs at least 2 classes"));
        }
        if let Some(&v) = vol.data().iter().find(|&&v| v >= num_classes) {
            return Err(Error::invalid(format!(
                "mask value {v} out of range for {num_classes} classes"
            )));
        }
        Ok(Mask { vol, num_classes })
    }

    /// Binary mask (background 0, foreground 1) from any u8 volume.
    pub fn binary(vol: Volume<u8>) -> Result<Self> {
        Mask::new(vol.map(|v| (v != 0) as u8), 2)
    }

    pub fn zeros(shape: [usize; 3], spacing: [f32; 3], num_classes: u8) -> Result<Self> {
        Mask::new(Volume::new(shape, spacing, 0u8)?, num_classes)
    }

    #[inline]
    pub fn vol(&self) -> &Volume<u8> {
        &self.vol
    }

    pub fn vol_mut(&mut self) -> &mut Volume<u8> {
        &mut self.vol
    }

    #[inline]
    pub fn num_classes(&self) -> u8 {
        self.num_classes
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.vol.shape()
    }

    #[inline]
    pub fn spacing(&self) -> [f32; 3] {
        self.vol.spacing()
    }

    #[inline]
    pub fn at(&self, z: usize, y: usize, x: usize) -> u8 {
        self.vol.at(z, y, x)
    }

    pub fn check_class(&self, class_id: u8) -> Result<()> {
        if class_id >= self.num_classes {
            return Err(Error::invalid(format!(
                "class {class_id} out of range (num_classes {})",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn count_class(&self, class_id: u8) -> usize {
        self.vol.data().iter().filter(|&&v| v == class_id).count()
    }

    /// Binary view of one class: voxels of `class_id` become 1, all else 0.
    pub fn binarize(&self, class_id: u8) -> Result<Mask> {
        self.check_class(class_id)?;
        Mask::new(self.vol.map(|v| (v == class_id) as u8), 2)
    }

    pub fn write_rvol(&self, path: impl AsRef<Path>) -> Result<()> {
        self.vol.write_rvol(path)
    }

    /// Reads a u8 RVOL; the class count is taken as `max value + 1` (at least 2).
    pub fn read_rvol(path: impl AsRef<Path>) -> Result<Self> {
        let vol = Volume::<u8>::read_rvol(path)?;
        let max = vol.data().iter().copied().max().unwrap_or(0);
        Mask::new(vol, max.saturating_add(1).max(2))
    }
}

/// Lift a mask to a per-class stack of indicator volumes.
///
/// Channel `c` is 1.0 where the mask equals `c`, so channels sum to 1 at every
/// voxel.
pub fn one_hot(mask: &Mask, num_classes: u8) -> Result<Vec<Volume<f32>>> {
    if num_classes < 2 {
        return Err(Error::invalid("one_hot needs at least 2 classes"));
    }
    if let Some(&v) = mask.vol().data().iter().find(|&&v| v >= num_classes) {
        return Err(Error::invalid(format!(
            "mask value {v} >= num_classes {num_classes}"
        )));
    }
    let mut channels = Vec::with_capacity(num_classes as usize);
    for c in 0..num_classes {
        channels.push(mask.vol().map(|v| (v == c) as u8 as f32));
    }
    Ok(channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_roundtrip() {
        let v = Volume::<f32>::new([3, 4, 5], [1.0; 3], 0.0).unwrap();
        for flat in 0..v.len() {
            let [z, y, x] = v.coords(flat);
            assert_eq!(v.idx(z, y, x), flat);
        }
    }

    #[test]
    fn rejects_bad_shape_and_spacing() {
        assert!(Volume::<f32>::new([0, 2, 2], [1.0; 3], 0.0).is_err());
        assert!(Volume::<f32>::new([2, 2, 2], [1.0, 0.0, 1.0], 0.0).is_err());
        assert!(Volume::<f32>::new([2, 2, 2], [1.0, f32::NAN, 1.0], 0.0).is_err());
        assert!(Volume::<f32>::from_vec([2, 2, 2], [1.0; 3], vec![0.0; 7]).is_err());
    }

    #[test]
    fn mask_validates_values() {
        let mut vol = Volume::<u8>::new([2, 2, 2], [1.0; 3], 0).unwrap();
        vol.set(0, 0, 0, 3);
        assert!(Mask::new(vol.clone(), 2).is_err());
        assert!(Mask::new(vol, 4).is_ok());
    }

    #[test]
    fn one_hot_single_voxel() {
        let mut m = Mask::zeros([3, 3, 3], [1.0; 3], 2).unwrap();
        m.vol_mut().set(1, 1, 1, 1);
        let oh = one_hot(&m, 2).unwrap();
        assert_eq!(oh[1].data().iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(oh[1].at(1, 1, 1), 1.0);
        for i in 0..27 {
            assert_eq!(oh[0].data()[i] + oh[1].data()[i], 1.0);
        }
    }

    #[test]
    fn one_hot_all_background() {
        let m = Mask::zeros([2, 2, 2], [1.0; 3], 2).unwrap();
        let oh = one_hot(&m, 2).unwrap();
        assert!(oh[0].data().iter().all(|&v| v == 1.0));
        assert!(oh[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        let mut m = Mask::zeros([2, 2, 2], [1.0; 3], 4).unwrap();
        m.vol_mut().set(0, 0, 0, 3);
        assert!(one_hot(&m, 2).is_err());
    }

    #[test]
    fn rvol_roundtrip_f32_and_u8() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = Volume::<f32>::new([2, 3, 4], [1.5, 0.8, 0.8], 0.0).unwrap();
        for i in 0..v.len() {
            v.data_mut()[i] = i as f32 * 0.25 - 1.0;
        }
        let p = dir.path().join("t.rvol");
        v.write_rvol(&p).unwrap();
        let back = Volume::<f32>::read_rvol(&p).unwrap();
        assert_eq!(v, back);

        let m = Mask::zeros([2, 2, 2], [1.0; 3], 2).unwrap();
        let pm = dir.path().join("m.rvol");
        m.write_rvol(&pm).unwrap();
        assert_eq!(Mask::read_rvol(&pm).unwrap().shape(), [2, 2, 2]);
        // dtype mismatch must be rejected
        assert!(Volume::<f32>::read_rvol(&pm).is_err());
    }

    #[test]
    fn rvol_rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::<f32>::new([2, 2, 2], [1.0; 3], 0.0).unwrap();
        let p = dir.path().join("t.rvol");
        v.write_rvol(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(Volume::<f32>::read_rvol(&p).is_err());
    }
}
