//! The preprocessing chain: intensity windowing, spacing resampling, and
//! effective-range sub-volume extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask, Volume};

/// Clamp to `[w_min, w_max]` and affine-map onto `[0, 1]`.
pub fn window_transform(image: &Volume<f32>, w_min: f32, w_max: f32) -> Result<Volume<f32>> {
    if !(w_min.is_finite() && w_max.is_finite() && w_min < w_max) {
        return Err(Error::invalid(format!(
            "window [{w_min}, {w_max}] must be finite with w_min < w_max"
        )));
    }
    let span = w_max - w_min;
    Ok(image.map(|v| (v.clamp(w_min, w_max) - w_min) / span))
}

fn resampled_shape(shape: [usize; 3], spacing: [f32; 3], target: [f32; 3]) -> Result<[usize; 3]> {
    if target.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::invalid(format!(
            "target spacing {target:?} must be positive"
        )));
    }
    let mut out = [0usize; 3];
    for a in 0..3 {
        out[a] = (shape[a] as f64 * spacing[a] as f64 / target[a] as f64).round() as usize;
        if out[a] == 0 {
            return Err(Error::invalid(format!(
                "resampling to spacing {target:?} collapses axis {a} to zero voxels"
            )));
        }
    }
    Ok(out)
}

/// Source coordinate of an output voxel center under the scale change,
/// clamped into the source grid.
#[inline]
fn src_coord(i: usize, ratio: f64, max: usize) -> f64 {
    ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, max as f64)
}

/// Resample an intensity volume to a new voxel spacing (trilinear).
pub fn resample_image(image: &Volume<f32>, target: [f32; 3]) -> Result<Volume<f32>> {
    let shape = image.shape();
    let out_shape = resampled_shape(shape, image.spacing(), target)?;
    let ratio: Vec<f64> = (0..3)
        .map(|a| target[a] as f64 / image.spacing()[a] as f64)
        .collect();
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for z in 0..out_shape[0] {
        let fz = src_coord(z, ratio[0], shape[0] - 1);
        let (z0, tz) = (fz.floor() as usize, fz.fract());
        let z1 = (z0 + 1).min(shape[0] - 1);
        for y in 0..out_shape[1] {
            let fy = src_coord(y, ratio[1], shape[1] - 1);
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            let y1 = (y0 + 1).min(shape[1] - 1);
            for x in 0..out_shape[2] {
                let fx = src_coord(x, ratio[2], shape[2] - 1);
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let x1 = (x0 + 1).min(shape[2] - 1);
                let mut acc = 0.0f64;
                for (zi, wz) in [(z0, 1.0 - tz), (z1, tz)] {
                    for (yi, wy) in [(y0, 1.0 - ty), (y1, ty)] {
                        for (xi, wx) in [(x0, 1.0 - tx), (x1, tx)] {
                            acc += wz * wy * wx * image.at(zi, yi, xi) as f64;
                        }
                    }
                }
                data.push(acc as f32);
            }
        }
    }
    Volume::from_vec(out_shape, target, data)
}

/// Resample a label mask to a new voxel spacing (nearest neighbor, so no
/// labels outside the original set can appear).
pub fn resample_mask(mask: &Mask, target: [f32; 3]) -> Result<Mask> {
    let shape = mask.shape();
    let out_shape = resampled_shape(shape, mask.spacing(), target)?;
    let ratio: Vec<f64> = (0..3)
        .map(|a| target[a] as f64 / mask.spacing()[a] as f64)
        .collect();
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for z in 0..out_shape[0] {
        let zi = src_coord(z, ratio[0], shape[0] - 1).round() as usize;
        for y in 0..out_shape[1] {
            let yi = src_coord(y, ratio[1], shape[1] - 1).round() as usize;
            for x in 0..out_shape[2] {
                let xi = src_coord(x, ratio[2], shape[2] - 1).round() as usize;
                data.push(mask.at(zi, yi, xi));
            }
        }
    }
    Mask::new(Volume::from_vec(out_shape, target, data)?, mask.num_classes())
}

/// Inclusive bounding box of all nonzero mask voxels, or `None` when the
/// mask is empty.
pub fn mask_bbox(mask: &Mask) -> Option<([usize; 3], [usize; 3])> {
    let [nz, ny, nx] = mask.shape();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.at(z, y, x) != 0 {
                    for (a, c) in [z, y, x].into_iter().enumerate() {
                        lo[a] = lo[a].min(c);
                        hi[a] = hi[a].max(c);
                    }
                }
            }
        }
    }
    (lo[0] != usize::MAX).then_some((lo, hi))
}

/// Tiling policy for [`extract_subvolumes`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropPolicy {
    /// Voxels added around the mask bounding box before tiling.
    pub margin: usize,
    /// Overlap between adjacent tiles along each axis.
    pub overlap: usize,
}

impl Default for CropPolicy {
    fn default() -> Self {
        CropPolicy {
            margin: 4,
            overlap: 4,
        }
    }
}

/// One extracted sub-volume and where it came from.
#[derive(Clone, Debug)]
pub struct Crop {
    pub image: Volume<f32>,
    pub mask: Mask,
    /// Offset of this crop in the source volume.
    pub origin: [usize; 3],
    /// The source mask had no foreground at all; this is the fallback
    /// center crop.
    pub empty_mask: bool,
}

/// Tile starts covering `[lo, hi]` (inclusive), clamped so each tile fits
/// in `dim`.
fn axis_starts(lo: usize, hi: usize, crop: usize, dim: usize, step: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = lo;
    loop {
        let start = s.min(dim - crop);
        starts.push(start);
        if start + crop > hi {
            break;
        }
        s = start + step;
    }
    starts
}

/// Crop to the mask's bounding box plus margin, then tile fixed-size
/// sub-volumes with overlap. Every foreground voxel lands in at least one
/// crop; an empty mask yields a single centered crop flagged as such.
pub fn extract_subvolumes(
    image: &Volume<f32>,
    mask: &Mask,
    crop_shape: [usize; 3],
    policy: CropPolicy,
) -> Result<Vec<Crop>> {
    if image.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "image {:?} vs mask {:?}",
            image.shape(),
            mask.shape()
        )));
    }
    let shape = image.shape();
    for a in 0..3 {
        if crop_shape[a] == 0 || crop_shape[a] > shape[a] {
            return Err(Error::invalid(format!(
                "crop shape {crop_shape:?} does not fit in volume {shape:?}"
            )));
        }
    }
    let step_of = |crop: usize| -> usize { crop.saturating_sub(policy.overlap).max(1) };

    let take = |origin: [usize; 3], empty_mask: bool| -> Result<Crop> {
        let mut img = Vec::with_capacity(crop_shape.iter().product());
        let mut lab = Vec::with_capacity(crop_shape.iter().product());
        for z in 0..crop_shape[0] {
            for y in 0..crop_shape[1] {
                for x in 0..crop_shape[2] {
                    let src = [origin[0] + z, origin[1] + y, origin[2] + x];
                    img.push(image.at(src[0], src[1], src[2]));
                    lab.push(mask.at(src[0], src[1], src[2]));
                }
            }
        }
        Ok(Crop {
            image: Volume::from_vec(crop_shape, image.spacing(), img)?,
            mask: Mask::new(
                Volume::from_vec(crop_shape, image.spacing(), lab)?,
                mask.num_classes(),
            )?,
            origin,
            empty_mask,
        })
    };

    let Some((lo, hi)) = mask_bbox(mask) else {
        let origin = [
            (shape[0] - crop_shape[0]) / 2,
            (shape[1] - crop_shape[1]) / 2,
            (shape[2] - crop_shape[2]) / 2,
        ];
        return Ok(vec![take(origin, true)?]);
    };

    let mut per_axis = Vec::with_capacity(3);
    for a in 0..3 {
        let eff_lo = lo[a].saturating_sub(policy.margin);
        let eff_hi = (hi[a] + policy.margin).min(shape[a] - 1);
        per_axis.push(axis_starts(
            eff_lo,
            eff_hi,
            crop_shape[a],
            shape[a],
            step_of(crop_shape[a]),
        ));
    }

    let mut crops = Vec::new();
    for &z in &per_axis[0] {
        for &y in &per_axis[1] {
            for &x in &per_axis[2] {
                crops.push(take([z, y, x], false)?);
            }
        }
    }
    Ok(crops)
}
