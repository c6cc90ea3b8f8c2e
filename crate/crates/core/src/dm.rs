//! Distance-map variants over segmentation masks.
//!
//! Starting from the original distance map (O-DM) — the exact Euclidean
//! distance of every voxel to the object boundary, in voxel units — three
//! derived variants are defined per connected component C with
//! `M_C = max of D inside C`:
//!
//! * I-DM: `M_C + 1 − D(x)` on foreground, 0 on background;
//! * NI-DM: `(M_C + 1 − D(x)) / M_C` on foreground, 0 on background;
//! * SNI-DM: `+NI-DM` on foreground and `−NI-DM` of the complement region on
//!   background, each side normalized over its own components.
//!
//! Degenerate components where every voxel lies on the boundary (`M_C = 0`)
//! take the value 1 throughout, the limit of the formula's intent.

use crate::edt::squared_edt_from_seeds;
use crate::error::{Error, Result};
use crate::labeling::{label_components, region_boundary, Connectivity};
use crate::volume::{Mask, Volume};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which transform produced a [`DistanceMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmVariant {
    /// Original: distance to boundary, everywhere.
    Odm,
    /// Inverse: `M_C + 1 − D` on foreground.
    Idm,
    /// Normalized inverse: `(M_C + 1 − D) / M_C` on foreground.
    Nidm,
    /// Signed normalized inverse: `+NI-DM` inside, `−NI-DM` of the
    /// complement outside.
    Snidm,
}

impl fmt::Display for DmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DmVariant::Odm => "ODM",
            DmVariant::Idm => "IDM",
            DmVariant::Nidm => "NIDM",
            DmVariant::Snidm => "SNIDM",
        };
        f.write_str(s)
    }
}

impl FromStr for DmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "odm" | "o-dm" => Ok(DmVariant::Odm),
            "idm" | "i-dm" => Ok(DmVariant::Idm),
            "nidm" | "ni-dm" => Ok(DmVariant::Nidm),
            "snidm" | "sni-dm" => Ok(DmVariant::Snidm),
            other => Err(Error::UnsupportedVariant(other.to_string())),
        }
    }
}

/// A distance map plus the bookkeeping needed to interpret it.
///
/// `per_component_max` records `M_C` per component. Keys are the component
/// ids of the source-class labeling (positive); for SNI-DM the complement's
/// components appear under negated ids.
#[derive(Clone, Debug)]
pub struct DistanceMap {
    pub values: Volume<f32>,
    pub variant: DmVariant,
    pub source_class: u8,
    pub per_component_max: BTreeMap<i32, f64>,
    /// Set when the source class had no voxels at all (all-zero map).
    pub class_absent: bool,
}

/// Exact Euclidean distance of every voxel to the boundary of one class.
///
/// Distances are in voxel units. Errors when the class has no boundary,
/// which happens exactly when the class is absent or fills the whole image.
pub fn edt_exact(mask: &Mask, class_id: u8) -> Result<DistanceMap> {
    mask.check_class(class_id)?;
    let boundary = region_boundary(mask, |v| v == class_id);
    if boundary.is_empty() {
        return Err(Error::NoBoundary { class: class_id });
    }
    let vol = mask.vol();
    let mut is_seed = vec![false; vol.len()];
    for &b in &boundary.voxels {
        is_seed[b] = true;
    }
    let sq = squared_edt_from_seeds(vol.shape(), |i| is_seed[i], [1.0; 3]);
    let values = Volume::from_vec(
        vol.shape(),
        vol.spacing(),
        sq.iter().map(|&d| d.sqrt() as f32).collect(),
    )?;

    let labeling = label_components(mask, |v| v == class_id, Connectivity::TwentySix);
    let mut per_component_max = BTreeMap::new();
    for (i, &l) in labeling.labels.data().iter().enumerate() {
        if l > 0 {
            let m = per_component_max.entry(l as i32).or_insert(0.0f64);
            *m = m.max(values.data()[i] as f64);
        }
    }
    Ok(DistanceMap {
        values,
        variant: DmVariant::Odm,
        source_class: class_id,
        per_component_max,
        class_absent: false,
    })
}

/// Normalized inverse transform of one region: `(M_C + 1 − D) / M_C` inside
/// each component, `1` throughout degenerate components, `0` elsewhere.
/// Returns the values and the per-component maxima keyed by component id.
fn nidm_region(
    mask: &Mask,
    select: impl Fn(u8) -> bool + Copy,
    conn: Connectivity,
) -> (Volume<f32>, BTreeMap<i32, f64>) {
    let vol = mask.vol();
    let boundary = region_boundary(mask, select);
    let labeling = label_components(mask, select, conn);
    let mut out = Volume::from_vec(vol.shape(), vol.spacing(), vec![0.0f32; vol.len()])
        .expect("output mirrors mask shape");
    let mut maxima = BTreeMap::new();
    if labeling.count == 0 {
        return (out, maxima);
    }
    let mut is_seed = vec![false; vol.len()];
    for &b in &boundary.voxels {
        is_seed[b] = true;
    }
    // Distances round through f32 exactly as edt_exact stores them, so this
    // route is bit-identical to to_variant(edt_exact(..), ..).
    let d: Vec<f64> = squared_edt_from_seeds(vol.shape(), |i| is_seed[i], [1.0; 3])
        .into_iter()
        .map(|sq| (sq.sqrt() as f32) as f64)
        .collect();
    for c in 1..=labeling.count {
        let mut m = 0.0f64;
        let mut finite = true;
        for (i, &l) in labeling.labels.data().iter().enumerate() {
            if l == c {
                if d[i].is_finite() {
                    m = m.max(d[i]);
                } else {
                    finite = false;
                }
            }
        }
        // A component only sees an infinite distance when the region has no
        // boundary at all (region fills the image): treat as degenerate.
        let m = if finite { m } else { 0.0 };
        maxima.insert(c as i32, m);
        for (i, &l) in labeling.labels.data().iter().enumerate() {
            if l == c {
                out.data_mut()[i] = if m == 0.0 {
                    1.0
                } else {
                    (((m + 1.0) - d[i]) / m) as f32
                };
            }
        }
    }
    (out, maxima)
}

/// Derive I-DM, NI-DM, or SNI-DM from an O-DM and the mask it came from.
pub fn to_variant(odm: &DistanceMap, mask: &Mask, variant: DmVariant) -> Result<DistanceMap> {
    if odm.variant != DmVariant::Odm {
        return Err(Error::invalid(format!(
            "to_variant expects an ODM input, got {}",
            odm.variant
        )));
    }
    if variant == DmVariant::Odm {
        return Err(Error::invalid("to_variant target must not be ODM"));
    }
    if odm.values.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "odm shape {:?} vs mask shape {:?}",
            odm.values.shape(),
            mask.shape()
        )));
    }
    let class_id = odm.source_class;
    mask.check_class(class_id)?;
    let vol = mask.vol();
    let labeling = label_components(mask, |v| v == class_id, Connectivity::TwentySix);

    let mut values = Volume::from_vec(vol.shape(), vol.spacing(), vec![0.0f32; vol.len()])?;
    let mut per_component_max = BTreeMap::new();
    for (i, &l) in labeling.labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let m = *odm
            .per_component_max
            .get(&(l as i32))
            .ok_or_else(|| Error::invalid(format!("odm lacks component {l}; mask mismatch?")))?;
        per_component_max.insert(l as i32, m);
        let d = odm.values.data()[i] as f64;
        values.data_mut()[i] = match variant {
            DmVariant::Idm => ((m + 1.0) - d) as f32,
            DmVariant::Nidm | DmVariant::Snidm => {
                if m == 0.0 {
                    1.0
                } else {
                    (((m + 1.0) - d) / m) as f32
                }
            }
            DmVariant::Odm => unreachable!(),
        };
    }

    if variant == DmVariant::Snidm {
        // Background side: the complement region normalized over its own
        // 6-connected components against its own boundary, negated.
        let (bg, bg_max) = nidm_region(mask, |v| v != class_id, Connectivity::Six);
        for (i, &v) in bg.data().iter().enumerate() {
            if v != 0.0 {
                values.data_mut()[i] = -v;
            }
        }
        for (c, m) in bg_max {
            per_component_max.insert(-c, m);
        }
    }

    Ok(DistanceMap {
        values,
        variant,
        source_class: class_id,
        per_component_max,
        class_absent: false,
    })
}

/// NI-DM of every class of a mask, treating each class in turn as the
/// foreground (26-connectivity).
///
/// Never errors on degenerate classes: an absent class yields an all-zero
/// channel flagged `class_absent`, and a class filling the whole image is
/// one boundary-less component treated as degenerate (value 1 throughout).
pub fn per_class_nidm(mask: &Mask, num_classes: u8) -> Result<Vec<DistanceMap>> {
    if num_classes < 2 {
        return Err(Error::invalid("per_class_nidm needs at least 2 classes"));
    }
    if let Some(&v) = mask.vol().data().iter().find(|&&v| v >= num_classes) {
        return Err(Error::invalid(format!(
            "mask value {v} >= num_classes {num_classes}"
        )));
    }
    let mut stack = Vec::with_capacity(num_classes as usize);
    for c in 0..num_classes {
        let absent = !mask.vol().data().iter().any(|&v| v == c);
        let (values, per_component_max) = if absent {
            (
                Volume::from_vec(
                    mask.shape(),
                    mask.spacing(),
                    vec![0.0f32; mask.vol().len()],
                )?,
                BTreeMap::new(),
            )
        } else {
            let (v, m) = nidm_region(mask, |x| x == c, Connectivity::TwentySix);
            (v, m)
        };
        stack.push(DistanceMap {
            values,
            variant: DmVariant::Nidm,
            source_class: c,
            per_component_max,
            class_absent: absent,
        });
    }
    Ok(stack)
}

/// Per-class stack of any distance-map variant, with the same degenerate
/// policy as [`per_class_nidm`]: an absent class yields an all-zero channel
/// flagged `class_absent`, and a class filling the whole image gets the
/// degenerate value of its variant (0 for O-DM, since there is no boundary
/// to measure from; 1 for the inverse forms, matching the `M = 0` case).
pub fn per_class_dm(mask: &Mask, num_classes: u8, variant: DmVariant) -> Result<Vec<DistanceMap>> {
    if variant == DmVariant::Nidm {
        return per_class_nidm(mask, num_classes);
    }
    if num_classes < 2 {
        return Err(Error::invalid("per_class_dm needs at least 2 classes"));
    }
    if let Some(&v) = mask.vol().data().iter().find(|&&v| v >= num_classes) {
        return Err(Error::invalid(format!(
            "mask value {v} >= num_classes {num_classes}"
        )));
    }
    let mut stack = Vec::with_capacity(num_classes as usize);
    for c in 0..num_classes {
        let absent = !mask.vol().data().iter().any(|&v| v == c);
        let fills_image = mask.vol().data().iter().all(|&v| v == c);
        let dm = if absent || fills_image {
            let fill = match (absent, variant) {
                (true, _) => 0.0,
                (false, DmVariant::Odm) => 0.0,
                (false, _) => 1.0,
            };
            DistanceMap {
                values: Volume::new(mask.shape(), mask.spacing(), fill)?,
                variant,
                source_class: c,
                per_component_max: BTreeMap::new(),
                class_absent: absent,
            }
        } else {
            let odm = edt_exact(mask, c)?;
            match variant {
                DmVariant::Odm => odm,
                v => to_variant(&odm, mask, v)?,
            }
        };
        stack.push(dm);
    }
    Ok(stack)
}

/// Binarize a regressed distance map back into a mask.
///
/// NI-DM keeps voxels with value strictly above `threshold`; SNI-DM keeps
/// strictly positive voxels and ignores the threshold (the sign already
/// encodes the region).
pub fn dm_to_mask(dm: &DistanceMap, threshold: f32) -> Result<Mask> {
    let cut = match dm.variant {
        DmVariant::Nidm => threshold,
        DmVariant::Snidm => 0.0,
        v => return Err(Error::UnsupportedVariant(format!("dm_to_mask on {v}"))),
    };
    Mask::new(dm.values.map(|v| (v > cut) as u8), 2)
}

#[derive(Serialize, Deserialize)]
struct DmSidecar {
    variant: DmVariant,
    source_class: u8,
    per_component_max: BTreeMap<i32, f64>,
    class_absent: bool,
}

impl DistanceMap {
    /// Write the RVOL payload to `path` and the metadata sidecar to
    /// `path.json` (appended extension).
    pub fn write_files(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.values.write_rvol(path)?;
        let side = DmSidecar {
            variant: self.variant,
            source_class: self.source_class,
            per_component_max: self.per_component_max.clone(),
            class_absent: self.class_absent,
        };
        let spath = sidecar_path(path);
        let json = serde_json::to_string_pretty(&side)
            .map_err(|e| Error::format(spath.display().to_string(), e.to_string()))?;
        std::fs::write(&spath, json).map_err(|e| Error::io(spath.display().to_string(), e))
    }

    pub fn read_files(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let values = Volume::<f32>::read_rvol(path)?;
        let spath = sidecar_path(path);
        let raw = std::fs::read(&spath).map_err(|e| Error::io(spath.display().to_string(), e))?;
        let side: DmSidecar = serde_json::from_slice(&raw)
            .map_err(|e| Error::format(spath.display().to_string(), e.to_string()))?;
        Ok(DistanceMap {
            values,
            variant: side.variant,
            source_class: side.source_class,
            per_component_max: side.per_component_max,
            class_absent: side.class_absent,
        })
    }
}

/// Sidecar file that accompanies a distance-map RVOL.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}
