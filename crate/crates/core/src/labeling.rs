//! Connected-component labeling and boundary extraction on label masks.

use crate::error::Result;
use crate::volume::{Mask, Volume};
use std::collections::VecDeque;

/// Neighborhood used when growing components.
///
/// Foreground classes conventionally use [`Connectivity::TwentySix`] and the
/// background [`Connectivity::Six`] (the standard digital-topology pairing).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Faces, edges, and corners.
    TwentySix,
}

impl Connectivity {
    /// Neighbor offsets as `(dz, dy, dx)` triples.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        match self {
            Connectivity::Six => vec![
                [-1, 0, 0],
                [1, 0, 0],
                [0, -1, 0],
                [0, 1, 0],
                [0, 0, -1],
                [0, 0, 1],
            ],
            Connectivity::TwentySix => {
                let mut offs = Vec::with_capacity(26);
                for dz in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dz != 0 || dy != 0 || dx != 0 {
                                offs.push([dz, dy, dx]);
                            }
                        }
                    }
                }
                offs
            }
        }
    }
}

/// Result of labeling: voxel `i` belongs to component `labels[i]`, with 0
/// meaning "not in the labeled class" and ids contiguous in `1..=count`.
#[derive(Clone, Debug)]
pub struct ComponentLabeling {
    pub labels: Volume<u32>,
    pub count: u32,
    /// Voxel count of each component, indexed by `label - 1`.
    pub voxel_counts: Vec<usize>,
}

/// Label connected components of the voxels satisfying `select` via BFS.
///
/// Components are numbered by first encounter in z-major scan order, so the
/// labeling is deterministic for a given volume.
pub fn label_components(
    mask: &Mask,
    select: impl Fn(u8) -> bool,
    conn: Connectivity,
) -> ComponentLabeling {
    let vol = mask.vol();
    let [nz, ny, nx] = vol.shape();
    let mut labels = Volume::<u32>::from_vec(vol.shape(), vol.spacing(), vec![0; vol.len()])
        .expect("labels volume mirrors mask shape");
    let offs = conn.offsets();
    let mut count = 0u32;
    let mut voxel_counts = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..vol.len() {
        if !select(vol.data()[start]) || labels.data()[start] != 0 {
            continue;
        }
        count += 1;
        let mut size = 0usize;
        labels.data_mut()[start] = count;
        queue.push_back(start);
        while let Some(flat) = queue.pop_front() {
            size += 1;
            let [z, y, x] = vol.coords(flat);
            for off in &offs {
                let zz = z as isize + off[0];
                let yy = y as isize + off[1];
                let xx = x as isize + off[2];
                if zz < 0 || yy < 0 || xx < 0 {
                    continue;
                }
                let (zz, yy, xx) = (zz as usize, yy as usize, xx as usize);
                if zz >= nz || yy >= ny || xx >= nx {
                    continue;
                }
                let ni = vol.idx(zz, yy, xx);
                if select(vol.data()[ni]) && labels.data()[ni] == 0 {
                    labels.data_mut()[ni] = count;
                    queue.push_back(ni);
                }
            }
        }
        voxel_counts.push(size);
    }
    ComponentLabeling {
        labels,
        count,
        voxel_counts,
    }
}

/// Label the connected components of one class of the mask.
pub fn connected_components(
    mask: &Mask,
    class_id: u8,
    conn: Connectivity,
) -> Result<ComponentLabeling> {
    mask.check_class(class_id)?;
    Ok(label_components(mask, |v| v == class_id, conn))
}

/// Boundary voxels of a region, as flat indices in z-major scan order.
#[derive(Clone, Debug, Default)]
pub struct BoundarySet {
    pub voxels: Vec<usize>,
}

impl BoundarySet {
    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }
}

/// Inner boundary of the `select` region: voxels in the region with at least
/// one 6-neighbor *inside the image* that is outside the region. Voxels on
/// the image border count only through in-image neighbors, so a region that
/// fills the whole image has no boundary.
pub fn region_boundary(mask: &Mask, select: impl Fn(u8) -> bool) -> BoundarySet {
    let vol = mask.vol();
    let [nz, ny, nx] = vol.shape();
    let offs = Connectivity::Six.offsets();
    let mut voxels = Vec::new();
    for flat in 0..vol.len() {
        if !select(vol.data()[flat]) {
            continue;
        }
        let [z, y, x] = vol.coords(flat);
        let mut on_boundary = false;
        for off in &offs {
            let zz = z as isize + off[0];
            let yy = y as isize + off[1];
            let xx = x as isize + off[2];
            if zz < 0 || yy < 0 || xx < 0 {
                continue;
            }
            let (zz, yy, xx) = (zz as usize, yy as usize, xx as usize);
            if zz >= nz || yy >= ny || xx >= nx {
                continue;
            }
            if !select(vol.data()[vol.idx(zz, yy, xx)]) {
                on_boundary = true;
                break;
            }
        }
        if on_boundary {
            voxels.push(flat);
        }
    }
    BoundarySet { voxels }
}

/// Boundary of one class of a mask (inner boundary, 6-neighborhood).
pub fn boundary_voxels(mask: &Mask, class_id: u8) -> Result<BoundarySet> {
    mask.check_class(class_id)?;
    Ok(region_boundary(mask, |v| v == class_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    fn mask_from(shape: [usize; 3], ones: &[[usize; 3]]) -> Mask {
        let mut vol = Volume::<u8>::new(shape, [1.0; 3], 0).unwrap();
        for &[z, y, x] in ones {
            vol.set(z, y, x, 1);
        }
        Mask::new(vol, 2).unwrap()
    }

    #[test]
    fn diagonal_voxels_connect_under_26_not_6() {
        let m = mask_from([3, 3, 3], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, 1, Connectivity::TwentySix).unwrap().count, 1);
        assert_eq!(connected_components(&m, 1, Connectivity::Six).unwrap().count, 2);
    }

    #[test]
    fn empty_class_has_zero_components() {
        let m = mask_from([3, 3, 3], &[]);
        let l = connected_components(&m, 1, Connectivity::TwentySix).unwrap();
        assert_eq!(l.count, 0);
        assert!(l.voxel_counts.is_empty());
    }

    #[test]
    fn labels_follow_scan_order() {
        let m = mask_from([1, 1, 5], &[[0, 0, 4], [0, 0, 0]]);
        let l = connected_components(&m, 1, Connectivity::Six).unwrap();
        assert_eq!(l.count, 2);
        assert_eq!(l.labels.at(0, 0, 0), 1);
        assert_eq!(l.labels.at(0, 0, 4), 2);
        assert_eq!(l.voxel_counts, vec![1, 1]);
    }

    #[test]
    fn rejects_out_of_range_class() {
        let m = mask_from([2, 2, 2], &[]);
        assert!(connected_components(&m, 2, Connectivity::Six).is_err());
        assert!(boundary_voxels(&m, 2).is_err());
    }

    #[test]
    fn single_voxel_is_its_own_boundary() {
        let m = mask_from([3, 3, 3], &[[1, 1, 1]]);
        let b = boundary_voxels(&m, 1).unwrap();
        assert_eq!(b.voxels, vec![m.vol().idx(1, 1, 1)]);
    }

    #[test]
    fn solid_cube_boundary_is_shell() {
        // 5^3 cube inside 7^3: boundary = the 5^3 − 3^3 = 98 shell voxels.
        let mut vol = Volume::<u8>::new([7, 7, 7], [1.0; 3], 0).unwrap();
        for z in 1..6 {
            for y in 1..6 {
                for x in 1..6 {
                    vol.set(z, y, x, 1);
                }
            }
        }
        let m = Mask::new(vol, 2).unwrap();
        assert_eq!(boundary_voxels(&m, 1).unwrap().len(), 98);
    }

    #[test]
    fn region_filling_image_has_no_boundary() {
        let vol = Volume::<u8>::new([3, 3, 3], [1.0; 3], 1).unwrap();
        let m = Mask::new(vol, 2).unwrap();
        assert!(boundary_voxels(&m, 1).unwrap().is_empty());
    }

    #[test]
    fn region_at_image_border_still_has_inner_boundary() {
        // Slab filling the z=0 plane: every slab voxel has an in-image
        // background 6-neighbor at z=1, so all 9 are boundary.
        let mut vol = Volume::<u8>::new([3, 3, 3], [1.0; 3], 0).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                vol.set(0, y, x, 1);
            }
        }
        let m = Mask::new(vol, 2).unwrap();
        assert_eq!(boundary_voxels(&m, 1).unwrap().len(), 9);
    }

    #[test]
    fn class_and_complement_boundaries_are_disjoint() {
        let m = mask_from(
            [4, 4, 4],
            &[[1, 1, 1], [1, 1, 2], [2, 2, 2], [0, 3, 3]],
        );
        let fg = boundary_voxels(&m, 1).unwrap();
        let bg = boundary_voxels(&m, 0).unwrap();
        for v in &fg.voxels {
            assert!(!bg.voxels.contains(v));
        }
    }
}
