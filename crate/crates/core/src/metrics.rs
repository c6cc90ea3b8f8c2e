//! Volumetric segmentation metrics: DC, DG, VOE, RVD, ASSD, MSD, RMSD.
//!
//! Masks are binarized for evaluation: any nonzero label counts as
//! foreground. Overlap metrics are dimensionless; surface distances are in
//! millimeters, using voxel centers at `coordinate · spacing` and the same
//! inner-boundary definition as the rest of the crate.
//!
//! Degenerate cases keep aggregates defined: an empty prediction or
//! reference yields Dice 0 (1 when both are empty), sentinel surface
//! distances equal to the image diagonal, an undefined (excluded) RVD when
//! the reference is empty, and a raised `degenerate` flag.

use crate::edt::squared_edt_from_seeds;
use crate::error::{Error, Result};
use crate::labeling::region_boundary;
use crate::volume::Mask;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn check_pair(pred: &Mask, reference: &Mask) -> Result<()> {
    if pred.shape() != reference.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pred shape {:?} vs reference shape {:?}",
            pred.shape(),
            reference.shape()
        )));
    }
    if pred.spacing() != reference.spacing() {
        return Err(Error::invalid(format!(
            "pred spacing {:?} vs reference spacing {:?}",
            pred.spacing(),
            reference.spacing()
        )));
    }
    Ok(())
}

/// Foreground-overlap counts of a mask pair.
struct Overlap {
    pred: u64,
    reference: u64,
    inter: u64,
}

fn overlap(pred: &Mask, reference: &Mask) -> Overlap {
    let mut o = Overlap {
        pred: 0,
        reference: 0,
        inter: 0,
    };
    for (p, r) in pred.vol().data().iter().zip(reference.vol().data()) {
        let p = *p != 0;
        let r = *r != 0;
        o.pred += p as u64;
        o.reference += r as u64;
        o.inter += (p && r) as u64;
    }
    o
}

/// Dice per case: 2|P∩R| / (|P|+|R|); 1 when both sets are empty, 0 when
/// exactly one is.
pub fn dice_per_case(pred: &Mask, reference: &Mask) -> Result<f64> {
    check_pair(pred, reference)?;
    let o = overlap(pred, reference);
    Ok(dice_from_counts(o.inter, o.pred + o.reference))
}

fn dice_from_counts(inter: u64, size_sum: u64) -> f64 {
    if size_sum == 0 {
        1.0
    } else {
        2.0 * inter as f64 / size_sum as f64
    }
}

/// Dice global: one Dice over the voxel counts pooled across all cases.
pub fn dice_global(cases: &[(&Mask, &Mask)]) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::invalid("dice_global needs at least one case"));
    }
    let mut inter = 0u64;
    let mut size_sum = 0u64;
    for (pred, reference) in cases {
        check_pair(pred, reference)?;
        let o = overlap(pred, reference);
        inter += o.inter;
        size_sum += o.pred + o.reference;
    }
    Ok(dice_from_counts(inter, size_sum))
}

/// Volumetric overlap error and signed relative volume difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapOutcome {
    /// 1 − |P∩R|/|P∪R|; 0 when both sets are empty.
    pub voe: f64,
    /// (|P| − |R|)/|R|, prediction minus reference; undefined when the
    /// reference is empty.
    pub rvd: Option<f64>,
    /// Raised when the reference (or both sets) is empty.
    pub degenerate: bool,
}

pub fn voe_rvd(pred: &Mask, reference: &Mask) -> Result<OverlapOutcome> {
    check_pair(pred, reference)?;
    let o = overlap(pred, reference);
    let union = o.pred + o.reference - o.inter;
    let voe = if union == 0 {
        0.0
    } else {
        1.0 - o.inter as f64 / union as f64
    };
    let rvd = if o.reference == 0 {
        None
    } else {
        Some((o.pred as f64 - o.reference as f64) / o.reference as f64)
    };
    Ok(OverlapOutcome {
        voe,
        rvd,
        degenerate: o.reference == 0,
    })
}

/// Symmetric surface distances in millimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    pub assd_mm: f64,
    pub msd_mm: f64,
    pub rmsd_mm: f64,
    /// Raised when either surface is empty; distances then hold the
    /// image-diagonal sentinel.
    pub degenerate: bool,
}

/// ASSD, MSD, and RMSD between the foreground surfaces of two masks.
///
/// The directed distance from every boundary voxel to the other surface is
/// computed exactly with a spacing-weighted EDT; the three statistics pool
/// both directions.
pub fn surface_distances(pred: &Mask, reference: &Mask) -> Result<SurfaceDistances> {
    check_pair(pred, reference)?;
    let sp = region_boundary(pred, |v| v != 0);
    let sr = region_boundary(reference, |v| v != 0);
    if sp.is_empty() || sr.is_empty() {
        let sentinel = reference.vol().diagonal_mm();
        return Ok(SurfaceDistances {
            assd_mm: sentinel,
            msd_mm: sentinel,
            rmsd_mm: sentinel,
            degenerate: true,
        });
    }
    let spacing = reference.spacing();
    let weights = [
        spacing[0] as f64,
        spacing[1] as f64,
        spacing[2] as f64,
    ];
    let shape = reference.shape();
    let dist_to = |surface: &[usize]| -> Vec<f64> {
        let mut is_seed = vec![false; reference.vol().len()];
        for &s in surface {
            is_seed[s] = true;
        }
        squared_edt_from_seeds(shape, |i| is_seed[i], weights)
    };
    let to_ref = dist_to(&sr.voxels);
    let to_pred = dist_to(&sp.voxels);

    // Each direction accumulates separately so the metric is bitwise
    // symmetric in its arguments.
    let directed = |surface: &[usize], dist: &[f64]| -> (f64, f64, f64) {
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut max = 0.0f64;
        for &v in surface {
            let sq = dist[v];
            sum += sq.sqrt();
            sum_sq += sq;
            max = max.max(sq);
        }
        (sum, sum_sq, max)
    };
    let (sum_p, sq_p, max_p) = directed(&sp.voxels, &to_ref);
    let (sum_r, sq_r, max_r) = directed(&sr.voxels, &to_pred);
    let (sum, sum_sq, max) = (sum_p + sum_r, sq_p + sq_r, max_p.max(max_r));
    let n = (sp.len() + sr.len()) as f64;
    Ok(SurfaceDistances {
        assd_mm: sum / n,
        msd_mm: max.sqrt(),
        rmsd_mm: (sum_sq / n).sqrt(),
        degenerate: false,
    })
}

/// All seven metrics for one case.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub dc: f64,
    pub voe: f64,
    pub rvd: Option<f64>,
    pub assd_mm: f64,
    pub msd_mm: f64,
    pub rmsd_mm: f64,
    pub degenerate: bool,
}

/// Cohort-level aggregation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub dc_mean: f64,
    /// Dice over pooled voxel counts, not the mean of per-case Dice.
    pub dg: f64,
    pub voe_mean: f64,
    /// Mean over the cases where RVD is defined; absent if none are.
    pub rvd_mean: Option<f64>,
    pub assd_mean: f64,
    pub msd_mean: f64,
    pub rmsd_mean: f64,
    pub degenerate_count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_case: Vec<CaseMetrics>,
    pub aggregate: AggregateMetrics,
}

/// Evaluate a cohort of (case id, prediction, reference) tuples.
pub fn evaluate_cases(cases: &[(String, &Mask, &Mask)]) -> Result<MetricsReport> {
    if cases.is_empty() {
        return Err(Error::invalid("evaluate_cases needs at least one case"));
    }
    let mut per_case = Vec::with_capacity(cases.len());
    let mut pooled_inter = 0u64;
    let mut pooled_sizes = 0u64;
    for (id, pred, reference) in cases {
        check_pair(pred, reference)?;
        let o = overlap(pred, reference);
        pooled_inter += o.inter;
        pooled_sizes += o.pred + o.reference;
        let ov = voe_rvd(pred, reference)?;
        let sd = surface_distances(pred, reference)?;
        per_case.push(CaseMetrics {
            case_id: id.clone(),
            dc: dice_from_counts(o.inter, o.pred + o.reference),
            voe: ov.voe,
            rvd: ov.rvd,
            assd_mm: sd.assd_mm,
            msd_mm: sd.msd_mm,
            rmsd_mm: sd.rmsd_mm,
            degenerate: ov.degenerate || sd.degenerate,
        });
    }

    let n = per_case.len() as f64;
    let rvds: Vec<f64> = per_case.iter().filter_map(|c| c.rvd).collect();
    let aggregate = AggregateMetrics {
        dc_mean: per_case.iter().map(|c| c.dc).sum::<f64>() / n,
        dg: dice_from_counts(pooled_inter, pooled_sizes),
        voe_mean: per_case.iter().map(|c| c.voe).sum::<f64>() / n,
        rvd_mean: if rvds.is_empty() {
            None
        } else {
            Some(rvds.iter().sum::<f64>() / rvds.len() as f64)
        },
        assd_mean: per_case.iter().map(|c| c.assd_mm).sum::<f64>() / n,
        msd_mean: per_case.iter().map(|c| c.msd_mm).sum::<f64>() / n,
        rmsd_mean: per_case.iter().map(|c| c.rmsd_mm).sum::<f64>() / n,
        degenerate_count: per_case.iter().filter(|c| c.degenerate).count(),
    };
    Ok(MetricsReport {
        per_case,
        aggregate,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl MetricsReport {
    /// One row per case plus a final "aggregate" row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("case_id,dc,voe,rvd,assd_mm,msd_mm,rmsd_mm,degenerate\n");
        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
        for c in &self.per_case {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&c.case_id),
                c.dc,
                c.voe,
                fmt_opt(c.rvd),
                c.assd_mm,
                c.msd_mm,
                c.rmsd_mm,
                c.degenerate
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "aggregate,{},{},{},{},{},{},{}\n",
            a.dc_mean,
            a.voe_mean,
            fmt_opt(a.rvd_mean),
            a.assd_mean,
            a.msd_mean,
            a.rmsd_mean,
            a.degenerate_count
        ));
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    fn mask_with(shape: [usize; 3], spacing: [f32; 3], ones: &[[usize; 3]]) -> Mask {
        let mut vol = Volume::<u8>::new(shape, spacing, 0).unwrap();
        for &[z, y, x] in ones {
            vol.set(z, y, x, 1);
        }
        Mask::new(vol, 2).unwrap()
    }

    fn cube(shape: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> Mask {
        let mut vol = Volume::<u8>::new(shape, [1.0; 3], 0).unwrap();
        for z in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for x in lo[2]..hi[2] {
                    vol.set(z, y, x, 1);
                }
            }
        }
        Mask::new(vol, 2).unwrap()
    }

    #[test]
    fn dice_basics() {
        let a = cube([6, 6, 6], [1, 1, 1], [4, 4, 4]);
        assert_eq!(dice_per_case(&a, &a).unwrap(), 1.0);
        let empty = cube([6, 6, 6], [0, 0, 0], [0, 0, 0]);
        assert_eq!(dice_per_case(&empty, &empty).unwrap(), 1.0);
        assert_eq!(dice_per_case(&a, &empty).unwrap(), 0.0);
        let b = cube([6, 6, 6], [1, 1, 4], [4, 4, 5]); // disjoint from a in x
        let d = dice_per_case(&a, &b).unwrap();
        assert!(d < 0.3, "mostly disjoint, got {d}");
    }

    #[test]
    fn dice_shifted_cube() {
        // 3³ cube vs the same cube shifted by 1 in x: overlap 3·3·2.
        let p = cube([5, 5, 6], [1, 1, 1], [4, 4, 4]);
        let r = cube([5, 5, 6], [1, 1, 2], [4, 4, 5]);
        let d = dice_per_case(&p, &r).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dice_global_pools_counts() {
        // Case 1: perfect on 10 voxels; case 2: fully wrong 10 vs 10.
        let p1 = mask_with([3, 3, 3], [1.0; 3], &[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 1, 0], [0, 1, 1], [0, 1, 2], [0, 2, 0], [0, 2, 1], [0, 2, 2], [1, 0, 0]]);
        let p2 = mask_with([3, 3, 3], [1.0; 3], &[[0, 0, 0], [0, 0, 1], [0, 0, 2], [0, 1, 0], [0, 1, 1], [0, 1, 2], [0, 2, 0], [0, 2, 1], [0, 2, 2], [1, 0, 0]]);
        let r2 = mask_with([3, 3, 3], [1.0; 3], &[[2, 0, 0], [2, 0, 1], [2, 0, 2], [2, 1, 0], [2, 1, 1], [2, 1, 2], [2, 2, 0], [2, 2, 1], [2, 2, 2], [1, 2, 2]]);
        assert_eq!(dice_per_case(&p1, &p1).unwrap(), 1.0);
        assert_eq!(dice_per_case(&p2, &r2).unwrap(), 0.0);
        let dg = dice_global(&[(&p1, &p1), (&p2, &r2)]).unwrap();
        assert!((dg - 0.5).abs() < 1e-12, "got {dg}");
        // Convention: nothing predicted anywhere, nothing to find → 1.
        let e = cube([3, 3, 3], [0, 0, 0], [0, 0, 0]);
        assert_eq!(dice_global(&[(&e, &e)]).unwrap(), 1.0);
        assert!(dice_global(&[]).is_err());
    }

    #[test]
    fn voe_rvd_nested_cubes() {
        // P = 4×4×4 block, R = its lower half: |P| = 2|R|, R ⊂ P.
        let p = cube([6, 6, 6], [1, 1, 1], [5, 5, 5]);
        let r = cube([6, 6, 6], [1, 1, 1], [3, 5, 5]);
        let o = voe_rvd(&p, &r).unwrap();
        assert!((o.voe - 0.5).abs() < 1e-12);
        assert_eq!(o.rvd, Some(1.0));
        assert!(!o.degenerate);

        let same = voe_rvd(&p, &p).unwrap();
        assert_eq!((same.voe, same.rvd), (0.0, Some(0.0)));

        let empty = cube([6, 6, 6], [0, 0, 0], [0, 0, 0]);
        let both = voe_rvd(&empty, &empty).unwrap();
        assert!(both.degenerate && both.voe == 0.0 && both.rvd.is_none());
        let one = voe_rvd(&p, &empty).unwrap();
        assert!(one.degenerate && one.voe == 1.0 && one.rvd.is_none());
    }

    #[test]
    fn dc_voe_identity() {
        let p = cube([6, 6, 6], [1, 1, 1], [4, 4, 4]);
        let r = cube([6, 6, 6], [2, 1, 1], [5, 4, 4]);
        let dc = dice_per_case(&p, &r).unwrap();
        let voe = voe_rvd(&p, &r).unwrap().voe;
        assert!((dc - 2.0 * (1.0 - voe) / (2.0 - voe)).abs() < 1e-9);
    }

    #[test]
    fn parallel_plates_distances() {
        // Two single-voxel-thick 3×3 plates 4 voxels apart: every boundary
        // voxel's nearest point on the other plate is directly across.
        let mut pv = Volume::<u8>::new([5, 5, 5], [1.0; 3], 0).unwrap();
        let mut rv = Volume::<u8>::new([5, 5, 5], [1.0; 3], 0).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                pv.set(0, y, x, 1);
                rv.set(4, y, x, 1);
            }
        }
        let p = Mask::new(pv, 2).unwrap();
        let r = Mask::new(rv, 2).unwrap();
        let sd = surface_distances(&p, &r).unwrap();
        assert_eq!((sd.assd_mm, sd.msd_mm, sd.rmsd_mm), (4.0, 4.0, 4.0));
        assert!(!sd.degenerate);

        // Doubling the spacing doubles all three distances.
        let mut p2 = p.clone();
        let mut r2 = r.clone();
        p2.vol_mut().set_spacing([2.0; 3]).unwrap();
        r2.vol_mut().set_spacing([2.0; 3]).unwrap();
        let sd2 = surface_distances(&p2, &r2).unwrap();
        assert_eq!((sd2.assd_mm, sd2.msd_mm, sd2.rmsd_mm), (8.0, 8.0, 8.0));
    }

    #[test]
    fn surface_distance_properties() {
        let p = cube([7, 7, 7], [1, 1, 1], [4, 5, 4]);
        let r = cube([7, 7, 7], [2, 2, 2], [6, 6, 5]);
        let ab = surface_distances(&p, &r).unwrap();
        let ba = surface_distances(&r, &p).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.assd_mm <= ab.rmsd_mm + 1e-12);
        assert!(ab.rmsd_mm <= ab.msd_mm + 1e-12);
        let same = surface_distances(&p, &p).unwrap();
        assert_eq!((same.assd_mm, same.msd_mm, same.rmsd_mm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_surface_gets_sentinel() {
        let p = cube([4, 4, 4], [1, 1, 1], [3, 3, 3]);
        let empty = cube([4, 4, 4], [0, 0, 0], [0, 0, 0]);
        let sd = surface_distances(&p, &empty).unwrap();
        assert!(sd.degenerate);
        let diag = (3.0f64 * 16.0).sqrt();
        assert!((sd.assd_mm - diag).abs() < 1e-9);
    }

    #[test]
    fn rejects_mismatched_pairs() {
        let a = cube([4, 4, 4], [1, 1, 1], [3, 3, 3]);
        let b = cube([4, 4, 5], [1, 1, 1], [3, 3, 3]);
        assert!(dice_per_case(&a, &b).is_err());
        let mut c = a.clone();
        c.vol_mut().set_spacing([2.0; 3]).unwrap();
        assert!(surface_distances(&a, &c).is_err());
    }

    #[test]
    fn evaluate_cases_aggregates() {
        let p = cube([5, 5, 5], [1, 1, 1], [4, 4, 4]);
        let r = cube([5, 5, 5], [1, 1, 2], [4, 4, 5]);
        let empty = cube([5, 5, 5], [0, 0, 0], [0, 0, 0]);
        let cases = vec![
            ("a".to_string(), &p, &p),
            ("b".to_string(), &p, &r),
            ("c".to_string(), &p, &empty),
        ];
        let rep = evaluate_cases(&cases).unwrap();
        assert_eq!(rep.per_case.len(), 3);
        assert_eq!(rep.aggregate.degenerate_count, 1);
        // DG uses pooled counts, so it differs from the DC mean here.
        assert!((rep.aggregate.dg - rep.aggregate.dc_mean).abs() > 1e-3);
        // Case "c" has undefined RVD; the mean covers the other two.
        assert!(rep.aggregate.rvd_mean.is_some());
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().last().unwrap().starts_with("aggregate,"));
    }

    #[test]
    fn report_writers() {
        let p = cube([4, 4, 4], [1, 1, 1], [3, 3, 3]);
        let cases = vec![("only".to_string(), &p, &p)];
        let rep = evaluate_cases(&cases).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("m.json");
        let c = dir.path().join("m.csv");
        rep.write_json(&j).unwrap();
        rep.write_csv(&c).unwrap();
        let parsed: MetricsReport =
            serde_json::from_str(&std::fs::read_to_string(&j).unwrap()).unwrap();
        assert_eq!(parsed.per_case[0].dc, 1.0);
        assert!(std::fs::read_to_string(&c).unwrap().contains("case_id"));
    }
}
