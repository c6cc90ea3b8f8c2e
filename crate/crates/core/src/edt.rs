//! Exact Euclidean distance transform on anisotropic 3D grids.
//!
//! Separable squared-distance transform: the 1D lower envelope of parabolas
//! is applied along each axis in turn, which yields the exact squared
//! Euclidean distance to the nearest seed. Per-axis weights let the same
//! routine serve voxel-unit distances (`weights = [1,1,1]`) and physical
//! millimeter distances (`weights = spacing`).

use crate::volume::Volume;

const INF: f64 = f64::INFINITY;

/// 1D squared-distance transform with sample positions `x_i = i * w`.
///
/// `f` holds the squared distance at each sample on entry (INF where no seed
/// contributes) and the lower envelope on exit.
fn dt_1d(f: &mut [f64], w: f64, v: &mut [usize], z: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    // Hull of parabolas y = f[q] + (x - q*w)^2, skipping infinite ones.
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if f[q] == INF {
            continue;
        }
        let xq = q as f64 * w;
        if !any {
            v[0] = q;
            z[0] = -INF;
            z[1] = INF;
            any = true;
            continue;
        }
        loop {
            let p = v[k];
            let xp = p as f64 * w;
            // Intersection of the parabolas rooted at p and q.
            let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * xq - 2.0 * xp);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    if !any {
        out[..n].copy_from_slice(&f[..n]);
        return;
    }
    // Evaluate the envelope at each sample.
    k = 0;
    for (i, o) in out.iter_mut().take(n).enumerate() {
        let x = i as f64 * w;
        while z[k + 1] < x {
            k += 1;
        }
        let d = x - v[k] as f64 * w;
        *o = f[v[k]] + d * d;
    }
}

/// Exact squared Euclidean distance from every voxel to the nearest seed.
///
/// `seeds[i] == true` marks seed voxels (distance 0). `weights` are the
/// per-axis sample step sizes in `(z, y, x)` order. Voxels return INF when
/// there are no seeds at all.
pub fn squared_edt_from_seeds(
    shape: [usize; 3],
    seeds: impl Fn(usize) -> bool,
    weights: [f64; 3],
) -> Vec<f64> {
    let [nz, ny, nx] = shape;
    let n = nz * ny * nx;
    let mut d: Vec<f64> = (0..n).map(|i| if seeds(i) { 0.0 } else { INF }).collect();

    let max_dim = nz.max(ny).max(nx);
    let mut f = vec![0.0f64; max_dim];
    let mut out = vec![0.0f64; max_dim];
    let mut v = vec![0usize; max_dim];
    let mut z = vec![0.0f64; max_dim + 1];

    // Pass along x (contiguous rows).
    for zy in 0..nz * ny {
        let row = &mut d[zy * nx..(zy + 1) * nx];
        f[..nx].copy_from_slice(row);
        dt_1d(&mut f[..nx], weights[2], &mut v, &mut z, &mut out);
        row.copy_from_slice(&out[..nx]);
    }
    // Pass along y.
    for zi in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                f[y] = d[(zi * ny + y) * nx + x];
            }
            dt_1d(&mut f[..ny], weights[1], &mut v, &mut z, &mut out);
            for y in 0..ny {
                d[(zi * ny + y) * nx + x] = out[y];
            }
        }
    }
    // Pass along z.
    for y in 0..ny {
        for x in 0..nx {
            for zi in 0..nz {
                f[zi] = d[(zi * ny + y) * nx + x];
            }
            dt_1d(&mut f[..nz], weights[0], &mut v, &mut z, &mut out);
            for zi in 0..nz {
                d[(zi * ny + y) * nx + x] = out[zi];
            }
        }
    }
    d
}

/// Euclidean distance (not squared) from every voxel to the nearest seed,
/// using per-axis weights. Returns INF everywhere when `seed_flats` is empty.
pub fn edt_from_seeds<T: crate::volume::Element>(
    reference: &Volume<T>,
    seed_flats: &[usize],
    weights: [f64; 3],
) -> Vec<f64> {
    let mut is_seed = vec![false; reference.len()];
    for &s in seed_flats {
        is_seed[s] = true;
    }
    squared_edt_from_seeds(reference.shape(), |i| is_seed[i], weights)
        .into_iter()
        .map(f64::sqrt)
        .collect()
}
