//! Independent oracles the integration tests check the fast implementations
//! against: quadratic/cubic brute force everywhere, no shared code paths
//! with the library internals.

use dmseg::volume::Mask;

/// Boundary voxels of `class_id` under the same rule the library documents:
/// a class voxel with at least one 6-adjacent in-image voxel of a different
/// class.
pub fn brute_boundary(mask: &Mask, class_id: u8) -> Vec<[isize; 3]> {
    let vol = mask.vol();
    let [nz, ny, nx] = vol.shape();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if vol.at(z, y, x) != class_id {
                    continue;
                }
                let neighbors = [
                    [z as isize - 1, y as isize, x as isize],
                    [z as isize + 1, y as isize, x as isize],
                    [z as isize, y as isize - 1, x as isize],
                    [z as isize, y as isize + 1, x as isize],
                    [z as isize, y as isize, x as isize - 1],
                    [z as isize, y as isize, x as isize + 1],
                ];
                let on_boundary = neighbors.iter().any(|&[zz, yy, xx]| {
                    zz >= 0
                        && yy >= 0
                        && xx >= 0
                        && (zz as usize) < nz
                        && (yy as usize) < ny
                        && (xx as usize) < nx
                        && vol.at(zz as usize, yy as usize, xx as usize) != class_id
                });
                if on_boundary {
                    out.push([z as isize, y as isize, x as isize]);
                }
            }
        }
    }
    out
}

/// All-pairs exact Euclidean distance transform: for every voxel, the
/// minimum distance (voxel units) to any boundary voxel of `class_id`.
/// Returns `None` when the class has no boundary.
pub fn brute_edt(mask: &Mask, class_id: u8) -> Option<Vec<f64>> {
    let boundary = brute_boundary(mask, class_id);
    if boundary.is_empty() {
        return None;
    }
    let [nz, ny, nx] = mask.shape();
    let mut out = Vec::with_capacity(nz * ny * nx);
    for z in 0..nz as isize {
        for y in 0..ny as isize {
            for x in 0..nx as isize {
                let mut best = f64::INFINITY;
                for &[bz, by, bx] in &boundary {
                    let d2 = ((z - bz) * (z - bz) + (y - by) * (y - by) + (x - bx) * (x - bx))
                        as f64;
                    best = best.min(d2);
                }
                out.push(best.sqrt());
            }
        }
    }
    Some(out)
}

/// Connected-component labeling by breadth-first flood fill over the given
/// neighbor offsets. Returns per-voxel component ids (0 = not selected) and
/// the component count.
pub fn flood_fill_components(
    mask: &Mask,
    select: impl Fn(u8) -> bool,
    offsets: &[[isize; 3]],
) -> (Vec<u32>, u32) {
    let vol = mask.vol();
    let [nz, ny, nx] = vol.shape();
    let mut labels = vec![0u32; vol.len()];
    let mut next = 0u32;
    for start in 0..vol.len() {
        if labels[start] != 0 || !select(vol.data()[start]) {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(flat) = queue.pop_front() {
            let [z, y, x] = vol.coords(flat);
            for off in offsets {
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
                let n = vol.idx(zz, yy, xx);
                if labels[n] == 0 && select(vol.data()[n]) {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    (labels, next)
}

/// The 26-connected neighbor offsets.
pub fn offsets_26() -> Vec<[isize; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1isize {
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if (dz, dy, dx) != (0, 0, 0) {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

/// All-pairs symmetric surface distances in millimeters between the
/// foreground (label != 0) surfaces of two masks. Returns
/// `(assd, msd, rmsd)`, or `None` when either surface is empty.
pub fn brute_surface_distances(pred: &Mask, reference: &Mask) -> Option<(f64, f64, f64)> {
    let sp = brute_boundary_fg(pred);
    let sr = brute_boundary_fg(reference);
    if sp.is_empty() || sr.is_empty() {
        return None;
    }
    let spacing = pred.spacing();
    let dist = |a: &[isize; 3], b: &[isize; 3]| -> f64 {
        let dz = (a[0] - b[0]) as f64 * spacing[0] as f64;
        let dy = (a[1] - b[1]) as f64 * spacing[1] as f64;
        let dx = (a[2] - b[2]) as f64 * spacing[2] as f64;
        (dz * dz + dy * dy + dx * dx).sqrt()
    };
    let directed = |from: &[[isize; 3]], to: &[[isize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| dist(a, b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let mut all = directed(&sp, &sr);
    all.extend(directed(&sr, &sp));
    let n = all.len() as f64;
    let assd = all.iter().sum::<f64>() / n;
    let msd = all.iter().copied().fold(0.0, f64::max);
    let rmsd = (all.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    Some((assd, msd, rmsd))
}

fn brute_boundary_fg(mask: &Mask) -> Vec<[isize; 3]> {
    // Foreground = any nonzero label; reuse the per-class rule by treating
    // labels through a binarized copy.
    let bin = Mask::new(mask.vol().map(|v| (v != 0) as u8), 2).expect("binary lift");
    brute_boundary(&bin, 1)
}

/// Deterministic splitmix-style generator for oracle-side randomness, so the
/// tests stay independent of the library's RNG choices.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_add(0x9e37_79b9_7f4a_7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

/// A random blobby binary mask: a few random balls on a noisy floor. The
/// construction guarantees nothing about connectivity; callers that need a
/// boundary should check for one.
pub fn random_mask(rng: &mut TestRng, shape: [usize; 3]) -> Mask {
    let [nz, ny, nx] = shape;
    let mut labels = vec![0u8; nz * ny * nx];
    // Sparse salt so flat regions stay interesting.
    for l in labels.iter_mut() {
        if rng.unit() < 0.08 {
            *l = 1;
        }
    }
    let balls = rng.range(1, 3);
    for _ in 0..balls {
        let cz = rng.range(0, nz - 1) as f64;
        let cy = rng.range(0, ny - 1) as f64;
        let cx = rng.range(0, nx - 1) as f64;
        let r = 1.0 + rng.unit() * (nz.min(ny).min(nx) as f64 / 3.0);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let d2 = (z as f64 - cz).powi(2)
                        + (y as f64 - cy).powi(2)
                        + (x as f64 - cx).powi(2);
                    if d2 <= r * r {
                        labels[(z * ny + y) * nx + x] = 1;
                    }
                }
            }
        }
    }
    let vol = dmseg::volume::Volume::from_vec(shape, [1.0, 1.0, 1.0], labels).expect("shape");
    Mask::new(vol, 2).expect("binary mask")
}
