//! Synthetic phantom generation: a bright organ blob with a handful of
//! small, brighter lesions — the class imbalance is built in by
//! construction, since the allowed lesion budget is capped at 5% of the
//! volume.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask, Volume};

/// How many placement attempts each lesion gets before the count is
/// reduced.
const PLACEMENT_RETRIES: usize = 50;

/// Parameters of one synthetic volume. Intensity pairs are `[mean, std]`
/// of the per-phantom tissue base value; `noise_std` is added per voxel on
/// top. Absolute intensity scales are arbitrary — windowing normalizes
/// them downstream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub shape: [usize; 3],
    pub spacing: [f32; 3],
    /// Organ semi-axes as fractions of the half-extent per axis,
    /// `[lo, hi]` sampled uniformly.
    pub organ_axes_frac: [f32; 2],
    /// Inclusive lesion count range.
    pub lesion_count: [usize; 2],
    /// Lesion radius range in voxels.
    pub lesion_radius: [f32; 2],
    pub intensity_bg: [f32; 2],
    pub intensity_organ: [f32; 2],
    pub intensity_lesion: [f32; 2],
    pub noise_std: f32,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            shape: [32, 32, 32],
            spacing: [1.0, 1.0, 1.0],
            organ_axes_frac: [0.55, 0.8],
            lesion_count: [1, 3],
            lesion_radius: [1.5, 3.0],
            intensity_bg: [0.10, 0.02],
            intensity_organ: [0.45, 0.03],
            intensity_lesion: [0.85, 0.03],
            noise_std: 0.04,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.iter().any(|&d| d < 8) {
            return Err(Error::Config("phantom dims must be >= 8".into()));
        }
        if self.lesion_radius[0] < 1.0 || self.lesion_radius[0] > self.lesion_radius[1] {
            return Err(Error::Config(format!(
                "lesion radius range {:?} must be ordered and >= 1 voxel",
                self.lesion_radius
            )));
        }
        if self.lesion_count[0] > self.lesion_count[1] {
            return Err(Error::Config(format!(
                "lesion count range {:?} is reversed",
                self.lesion_count
            )));
        }
        let [lo, hi] = self.organ_axes_frac;
        if !(0.0 < lo && lo <= hi && hi <= 0.9) {
            return Err(Error::Config(format!(
                "organ axes fractions {:?} must satisfy 0 < lo <= hi <= 0.9",
                self.organ_axes_frac
            )));
        }
        if self.noise_std < 0.0
            || [self.intensity_bg, self.intensity_organ, self.intensity_lesion]
                .iter()
                .any(|p| p[1] < 0.0)
        {
            return Err(Error::Config("intensity stds must be >= 0".into()));
        }
        // Imbalance by construction: even the worst-case lesion budget must
        // stay under 5% of the volume (half a voxel of slack covers
        // voxelization).
        let numel: usize = self.shape.iter().product();
        let r = (self.lesion_radius[1] + 0.5) as f64;
        let worst = self.lesion_count[1] as f64 * (4.0 / 3.0) * std::f64::consts::PI * r * r * r;
        if worst > 0.05 * numel as f64 {
            return Err(Error::Config(format!(
                "lesion budget (~{worst:.0} voxels) exceeds 5% of the volume ({numel})"
            )));
        }
        Ok(())
    }
}

/// One generated volume. `placed < requested` means placement retries ran
/// out and the lesion count was reduced; callers should surface that as a
/// warning.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub image: Volume<f32>,
    pub mask: Mask,
    pub requested_lesions: usize,
    pub placed_lesions: usize,
}

struct Ellipsoid {
    center: [f64; 3],
    semi: [f64; 3],
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        let mut acc = 0.0;
        for a in 0..3 {
            let t = (p[a] - self.center[a]) / self.semi[a];
            acc += t * t;
        }
        acc <= 1.0
    }
}

/// Every voxel center within `radius` of `center`, as flat indices —
/// `None` unless the whole ball *plus one voxel of margin* lies inside the
/// organ, so lesions are always embedded in organ tissue rather than
/// touching its surface.
fn lesion_voxels(
    shape: [usize; 3],
    organ: &Ellipsoid,
    center: [usize; 3],
    radius: f64,
) -> Option<Vec<usize>> {
    let guard = radius + 1.0;
    let r = guard.ceil() as isize;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dz * dz + dy * dy + dx * dx) as f64;
                if d2 > guard * guard {
                    continue;
                }
                let p = [
                    center[0] as isize + dz,
                    center[1] as isize + dy,
                    center[2] as isize + dx,
                ];
                if p.iter().zip(shape).any(|(&c, d)| c < 0 || c as usize >= d) {
                    return None;
                }
                if !organ.contains([p[0] as f64, p[1] as f64, p[2] as f64]) {
                    return None;
                }
                if d2 <= radius * radius {
                    out.push(
                        (p[0] as usize * shape[1] + p[1] as usize) * shape[2] + p[2] as usize,
                    );
                }
            }
        }
    }
    Some(out)
}

/// Generate one phantom, fully determined by `spec` (including its seed).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [nz, ny, nx] = spec.shape;
    let numel = nz * ny * nx;

    // Organ ellipsoid: jittered center, per-axis semi-axes.
    let mut center = [0.0f64; 3];
    let mut semi = [0.0f64; 3];
    for a in 0..3 {
        let half = spec.shape[a] as f64 / 2.0;
        let frac = rng.gen_range(spec.organ_axes_frac[0]..=spec.organ_axes_frac[1]) as f64;
        center[a] = half + rng.gen_range(-0.05..=0.05) * half;
        semi[a] = frac * half;
    }
    let organ = Ellipsoid { center, semi };

    let gauss = |rng: &mut ChaCha8Rng, pair: [f32; 2]| -> Result<f32> {
        let n = Normal::new(pair[0], pair[1])
            .map_err(|e| Error::Config(format!("bad intensity distribution: {e}")))?;
        Ok(n.sample(rng))
    };
    let base_bg = gauss(&mut rng, spec.intensity_bg)?;
    let base_organ = gauss(&mut rng, spec.intensity_organ)?;
    let base_lesion = gauss(&mut rng, spec.intensity_lesion)?;

    // Tissue map: 0 background, 1 organ, 2 lesion.
    let mut tissue = vec![0u8; numel];
    let mut organ_bbox = [[usize::MAX, 0], [usize::MAX, 0], [usize::MAX, 0]];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if organ.contains([z as f64, y as f64, x as f64]) {
                    tissue[(z * ny + y) * nx + x] = 1;
                    for (b, c) in organ_bbox.iter_mut().zip([z, y, x]) {
                        b[0] = b[0].min(c);
                        b[1] = b[1].max(c);
                    }
                }
            }
        }
    }
    if organ_bbox[0][0] == usize::MAX {
        return Err(Error::State("organ ellipsoid contains no voxels".into()));
    }

    let requested = rng.gen_range(spec.lesion_count[0]..=spec.lesion_count[1]);
    let mut placed = 0;
    for _ in 0..requested {
        let mut done = false;
        for _ in 0..PLACEMENT_RETRIES {
            let c = [
                rng.gen_range(organ_bbox[0][0]..=organ_bbox[0][1]),
                rng.gen_range(organ_bbox[1][0]..=organ_bbox[1][1]),
                rng.gen_range(organ_bbox[2][0]..=organ_bbox[2][1]),
            ];
            let r = rng.gen_range(spec.lesion_radius[0]..=spec.lesion_radius[1]) as f64;
            if let Some(voxels) = lesion_voxels(spec.shape, &organ, c, r) {
                for i in voxels {
                    tissue[i] = 2;
                }
                placed += 1;
                done = true;
                break;
            }
        }
        if !done {
            break; // reduce the count; caller reports the shortfall
        }
    }

    let noise = Normal::new(0.0f32, spec.noise_std)
        .map_err(|e| Error::Config(format!("bad noise distribution: {e}")))?;
    let mut image = Vec::with_capacity(numel);
    let mut labels = Vec::with_capacity(numel);
    for &t in &tissue {
        let base = match t {
            0 => base_bg,
            1 => base_organ,
            _ => base_lesion,
        };
        image.push(base + noise.sample(&mut rng));
        labels.push(u8::from(t == 2));
    }

    Ok(Phantom {
        image: Volume::from_vec(spec.shape, spec.spacing, image)?,
        mask: Mask::new(Volume::from_vec(spec.shape, spec.spacing, labels)?, 2)?,
        requested_lesions: requested,
        placed_lesions: placed,
    })
}

/// Generate `count` phantoms with seeds `spec.seed + i`.
pub fn generate_dataset(spec: &PhantomSpec, count: usize) -> Result<Vec<Phantom>> {
    (0..count)
        .map(|i| generate_phantom(&spec.clone().with_seed(spec.seed.wrapping_add(i as u64))))
        .collect()
}
