//! The acceptance gate: one test per shipped guarantee, each checked against
//! an independent oracle or an exact identity. The harness prints one
//! pass/fail line per criterion; the bodies print their measured numbers
//! under `--nocapture`.

mod common;

use std::time::Instant;

use common::{brute_edt, brute_surface_distances, random_mask, TestRng};
use dmseg::dm::{dm_to_mask, edt_exact, per_class_nidm, DmVariant};
use dmseg::loss::{baseline_loss, dice_loss, map_dice_loss, smooth_l1, BaselineKind, LossConfig};
use dmseg::metrics::{dice_per_case, surface_distances, voe_rvd};
use dmseg::nn::network::{bind, collect_param_grads, Bound, LrNetSpec, MNetSpec, ParamSet};
use dmseg::nn::tape::{NodeId, Tape};
use dmseg::nn::tensor::Tensor;
use dmseg::phantom::{generate_dataset, PhantomSpec};
use dmseg::pipeline::{checkpoint_id, pretrain_lrnet, train_joint, Sample, TrainConfig};
use dmseg::volume::{Mask, Volume};

// ---------------------------------------------------------------------------
// Criterion 1: the separable EDT equals the all-pairs oracle.

#[test]
fn c01_edt_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = TestRng::new(101);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    while checked < 200 {
        let shape = [rng.range(8, 16), rng.range(8, 16), rng.range(8, 16)];
        let mask = random_mask(&mut rng, shape);
        let Some(oracle) = brute_edt(&mask, 1) else {
            continue; // no boundary: edt_exact rejects these by contract
        };
        let fast = edt_exact(&mask, 1).expect("boundary exists");
        for (i, (&got, want)) in fast.values.data().iter().zip(&oracle).enumerate() {
            let diff = (got as f64 - want).abs();
            assert!(
                diff <= 1e-6,
                "mask {checked} voxel {i}: edt {got} vs oracle {want}"
            );
            worst = worst.max(diff);
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "200 oracle comparisons took {elapsed:?}, budget is 60 s"
    );
    println!("criterion 1: 200 masks, worst |edt - oracle| = {worst:.2e}, {elapsed:?}");
}

// ---------------------------------------------------------------------------
// Criterion 2: NI-DM values on the canonical cube, and thin components.

#[test]
fn c02_nidm_cube_values_and_thin_components() {
    // A 5³ cube centered in a 9³ image: the center sits at distance 2 from
    // the nearest boundary voxel, so M = 2, boundary φ = 3/2, center φ = 1/2.
    let mut labels = vec![0u8; 9 * 9 * 9];
    for z in 2..7 {
        for y in 2..7 {
            for x in 2..7 {
                labels[(z * 9 + y) * 9 + x] = 1;
            }
        }
    }
    let vol = Volume::from_vec([9, 9, 9], [1.0, 1.0, 1.0], labels).unwrap();
    let mask = Mask::new(vol, 2).unwrap();
    let nidm = &per_class_nidm(&mask, 2).unwrap()[1];
    let at = |z: usize, y: usize, x: usize| nidm.values.at(z, y, x);
    assert_eq!(at(2, 2, 2), 1.5, "cube corner is a boundary voxel");
    assert_eq!(at(2, 4, 4), 1.5, "face center is a boundary voxel");
    assert_eq!(at(4, 4, 4), 0.5, "cube center");
    assert_eq!(at(0, 0, 0), 0.0, "outside the object");

    // Thin components are all boundary, so M = 0 and φ = 1 on the whole
    // component: a lone voxel and a one-voxel-thick plate.
    let mut labels = vec![0u8; 8 * 8 * 8];
    labels[(1 * 8 + 1) * 8 + 1] = 1;
    for y in 3..6 {
        for x in 3..6 {
            labels[(5 * 8 + y) * 8 + x] = 1;
        }
    }
    let vol = Volume::from_vec([8, 8, 8], [1.0, 1.0, 1.0], labels.clone()).unwrap();
    let mask = Mask::new(vol, 2).unwrap();
    let nidm = &per_class_nidm(&mask, 2).unwrap()[1];
    for (i, &l) in labels.iter().enumerate() {
        let want = if l == 1 { 1.0 } else { 0.0 };
        assert_eq!(nidm.values.data()[i], want, "voxel {i}");
    }
    println!("criterion 2: cube boundary 1.5, center 0.5, thin components 1.0");
}

// ---------------------------------------------------------------------------
// Criterion 3: NI-DM round-trips back to the mask, exactly.

#[test]
fn c03_nidm_mask_round_trip_on_phantoms() {
    let spec = PhantomSpec {
        shape: [16, 16, 16],
        lesion_radius: [1.2, 2.6],
        seed: 303,
        ..PhantomSpec::default()
    };
    let phantoms = generate_dataset(&spec, 100).unwrap();
    for (i, p) in phantoms.iter().enumerate() {
        let stack = per_class_nidm(&p.mask, 2).unwrap();
        let back = dm_to_mask(&stack[1], 0.05).unwrap();
        assert_eq!(
            back.vol().data(),
            p.mask.vol().data(),
            "phantom {i} did not round-trip"
        );
    }
    println!("criterion 3: 100 phantoms round-tripped exactly");
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic gradients match central finite differences.

/// Max relative error between an analytic gradient and central finite
/// differences, with an absolute floor for near-zero pairs.
fn fd_rel_err(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = f(&xp);
        xp[i] = orig - h;
        let dn = f(&xp);
        xp[i] = orig;
        let fd = (up - dn) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max((fd - grad[i]).abs() / denom);
    }
    worst
}

/// A random probability stack (`classes` channels over `voxels`), its
/// matching one-hot target, and a nonnegative map stack.
fn random_stacks(
    rng: &mut TestRng,
    classes: usize,
    voxels: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut probs = vec![0.0f64; classes * voxels];
    let mut onehot = vec![0.0f64; classes * voxels];
    let mut maps = vec![0.0f64; classes * voxels];
    for v in 0..voxels {
        let logits: Vec<f64> = (0..classes).map(|_| rng.unit() * 4.0 - 2.0).collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for c in 0..classes {
            probs[c * voxels + v] = exps[c] / sum;
        }
        let hot = rng.range(0, classes - 1);
        onehot[hot * voxels + v] = 1.0;
        for c in 0..classes {
            maps[c * voxels + v] = onehot[c * voxels + v] * (0.5 + rng.unit());
        }
    }
    (probs, onehot, maps)
}

#[test]
fn c04_loss_gradients_match_finite_differences() {
    let cfg = LossConfig::default();
    let classes = 2;
    let voxels = 27;
    let mut rng = TestRng::new(404);
    let kinds = [
        BaselineKind::Wce,
        BaselineKind::Gds,
        BaselineKind::Tversky,
        BaselineKind::FocalTversky,
        BaselineKind::ExpLog,
    ];
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (probs, onehot, maps) = random_stacks(&mut rng, classes, voxels);

        let r = dice_loss(&probs, &onehot, classes, &cfg).unwrap();
        let err = fd_rel_err(
            |x| dice_loss(x, &onehot, classes, &cfg).unwrap().value,
            &probs,
            &r.grad,
            1e-5,
        );
        assert!(err <= 1e-4, "dice seed {seed}: rel err {err:.2e}");
        worst = worst.max(err);

        let r = map_dice_loss(&probs, &maps, classes, &cfg).unwrap();
        let err = fd_rel_err(
            |x| map_dice_loss(x, &maps, classes, &cfg).unwrap().value,
            &probs,
            &r.grad,
            1e-5,
        );
        assert!(err <= 1e-4, "map_dice seed {seed}: rel err {err:.2e}");
        worst = worst.max(err);

        let target: Vec<f64> = maps.iter().map(|&t| t * 1.3 - 0.1).collect();
        let pred: Vec<f64> = probs.iter().map(|&p| p * 2.0 - 0.5).collect();
        let r = smooth_l1(&pred, &target).unwrap();
        let err = fd_rel_err(
            |x| smooth_l1(x, &target).unwrap().value,
            &pred,
            &r.grad,
            1e-5,
        );
        assert!(err <= 1e-4, "smooth_l1 seed {seed}: rel err {err:.2e}");
        worst = worst.max(err);

        for kind in kinds {
            let r = baseline_loss(kind, &probs, &onehot, classes, &cfg).unwrap();
            let err = fd_rel_err(
                |x| baseline_loss(kind, x, &onehot, classes, &cfg).unwrap().value,
                &probs,
                &r.grad,
                1e-5,
            );
            assert!(err <= 1e-4, "{kind:?} seed {seed}: rel err {err:.2e}");
            worst = worst.max(err);
        }
    }
    println!("criterion 4a: eight losses, 20 seeds, worst rel err {worst:.2e}");
}

/// Check a network's parameter gradients against finite differences. The
/// objective is a fixed random weighting of the outputs; every parameter
/// tensor is probed at a few entries (rotating with the seed), so all layers
/// are exercised without a full 2N-forward sweep per scalar.
fn check_network_fd(
    build: impl Fn(&mut Tape<f64>, &Bound) -> NodeId,
    params: &ParamSet<f64>,
    probe: &Tensor<f64>,
    rng: &mut TestRng,
) -> f64 {
    let run = |params: &ParamSet<f64>, want_grads: bool| -> (f64, Vec<Tensor<f64>>) {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, params);
        let out = build(&mut tape, &bound);
        let value: f64 = tape
            .value(out)
            .data()
            .iter()
            .zip(probe.data())
            .map(|(&o, &w)| o * w)
            .sum();
        if !want_grads {
            return (value, Vec::new());
        }
        let grads = tape.backward(&[(out, probe.clone())]).unwrap();
        (value, collect_param_grads(&bound, &grads, params).unwrap())
    };
    let (_, grads) = run(params, true);

    let mut worst = 0.0f64;
    let h = 1e-5;
    for (ti, grad) in grads.iter().enumerate() {
        for _ in 0..3 {
            let i = rng.range(0, grad.numel() - 1);
            let mut shifted = params.clone();
            let entry = shifted.iter_mut().nth(ti).unwrap();
            let orig = entry.1.data()[i];
            entry.1.data_mut()[i] = orig + h;
            let (up, _) = run(&shifted, false);
            shifted.iter_mut().nth(ti).unwrap().1.data_mut()[i] = orig - h;
            let (dn, _) = run(&shifted, false);
            let fd = (up - dn) / (2.0 * h);
            let g = grad.data()[i];
            let denom = fd.abs().max(g.abs()).max(1e-6);
            worst = worst.max((fd - g).abs() / denom);
        }
    }
    worst
}

#[test]
fn c04_network_gradients_match_finite_differences() {
    let mut rng = TestRng::new(440);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        // Toy M-Net on a 4³ input (the pooling level needs even extents).
        let spec = MNetSpec {
            in_channels: 1,
            classes: 2,
            base_width: 2,
        };
        let params = spec.init(seed).cast::<f64>();
        let input =
            Tensor::from_vec([1, 1, 4, 4, 4], (0..64).map(|_| rng.unit()).collect()).unwrap();
        let probe =
            Tensor::from_vec([1, 2, 4, 4, 4], (0..128).map(|_| rng.unit() - 0.5).collect())
                .unwrap();
        let err = check_network_fd(
            |tape, bound| {
                let x = tape.leaf(input.clone(), "input");
                spec.forward(tape, bound, x).unwrap()
            },
            &params,
            &probe,
            &mut rng,
        );
        assert!(err <= 1e-3, "mnet seed {seed}: rel err {err:.2e}");
        worst = worst.max(err);

        // Toy LR-Net fed a valid probability stack.
        let lspec = LrNetSpec::new(2, 2, DmVariant::Nidm);
        let lparams = lspec.init(seed + 1000).cast::<f64>();
        let mut pdata = vec![0.0f64; 128];
        for v in 0..64 {
            let p = 0.05 + 0.9 * rng.unit();
            pdata[v] = p;
            pdata[64 + v] = 1.0 - p;
        }
        let pinput = Tensor::from_vec([1, 2, 4, 4, 4], pdata).unwrap();
        let err = check_network_fd(
            |tape, bound| {
                let x = tape.leaf(pinput.clone(), "probs");
                lspec.forward(tape, bound, x).unwrap()
            },
            &lparams,
            &probe,
            &mut rng,
        );
        assert!(err <= 1e-3, "lrnet seed {seed}: rel err {err:.2e}");
        worst = worst.max(err);
    }
    println!("criterion 4b: both toy networks, 20 seeds, worst rel err {worst:.2e}");
}

// ---------------------------------------------------------------------------
// Criterion 5: MapDice collapses to Dice on all-degenerate maps.

#[test]
fn c05_map_dice_reduces_to_dice_on_degenerate_maps() {
    // A 3D checkerboard: every voxel has an opposite-parity 6-neighbor, so
    // every component of BOTH classes is pure boundary (M = 0, φ = 1) and
    // the full NI-DM stack equals the one-hot stack.
    let voxels = 9 * 9 * 9;
    let mut labels = vec![0u8; voxels];
    for z in 0..9 {
        for y in 0..9 {
            for x in 0..9 {
                labels[(z * 9 + y) * 9 + x] = ((z + y + x) % 2) as u8;
            }
        }
    }
    let vol = Volume::from_vec([9, 9, 9], [1.0, 1.0, 1.0], labels).unwrap();
    let mask = Mask::new(vol, 2).unwrap();
    let stack = per_class_nidm(&mask, 2).unwrap();
    let mut maps = vec![0.0f64; 2 * voxels];
    let mut onehot = vec![0.0f64; 2 * voxels];
    for c in 0..2 {
        for (v, &m) in stack[c].values.data().iter().enumerate() {
            maps[c * voxels + v] = m as f64;
            onehot[c * voxels + v] = (mask.vol().data()[v] == c as u8) as u8 as f64;
        }
    }
    assert_eq!(maps, onehot, "all-degenerate NI-DM must equal one-hot");

    let cfg = LossConfig::default();
    let mut rng = TestRng::new(505);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut probs = vec![0.0f64; 2 * voxels];
        for v in 0..voxels {
            let p = rng.unit();
            probs[v] = p;
            probs[voxels + v] = 1.0 - p;
        }
        let md = map_dice_loss(&probs, &maps, 2, &cfg).unwrap().value;
        let d = dice_loss(&probs, &onehot, 2, &cfg).unwrap().value;
        assert!((md - d).abs() <= 1e-6, "map dice {md} vs dice {d}");
        worst = worst.max((md - d).abs());
    }

    // Scattered thin structures: lone voxels, a line, a plate. Their
    // foreground components are degenerate too, so the identity holds on
    // the foreground channel even when the background is not degenerate.
    let mut labels = vec![0u8; 1000];
    labels[(1 * 10 + 1) * 10 + 1] = 1;
    labels[(8 * 10 + 2) * 10 + 7] = 1;
    for x in 2..8 {
        labels[(4 * 10 + 5) * 10 + x] = 1;
    }
    for y in 3..7 {
        for x in 3..7 {
            labels[(7 * 10 + y) * 10 + x] = 1;
        }
    }
    let vol = Volume::from_vec([10, 10, 10], [1.0, 1.0, 1.0], labels).unwrap();
    let mask = Mask::new(vol, 2).unwrap();
    let stack = per_class_nidm(&mask, 2).unwrap();
    let fg_maps: Vec<f64> = stack[1].values.data().iter().map(|&m| m as f64).collect();
    let fg_onehot: Vec<f64> = mask
        .vol()
        .data()
        .iter()
        .map(|&l| (l == 1) as u8 as f64)
        .collect();
    assert_eq!(fg_maps, fg_onehot, "thin-component NI-DM must equal one-hot");
    for _ in 0..20 {
        let probs: Vec<f64> = (0..1000).map(|_| rng.unit()).collect();
        let md = map_dice_loss(&probs, &fg_maps, 1, &cfg).unwrap().value;
        let d = dice_loss(&probs, &fg_onehot, 1, &cfg).unwrap().value;
        assert!((md - d).abs() <= 1e-6, "map dice {md} vs dice {d}");
        worst = worst.max((md - d).abs());
    }
    println!("criterion 5: worst |map_dice - dice| = {worst:.2e}");
}

// ---------------------------------------------------------------------------
// Criterion 6: metric identities and the surface-distance oracle.

#[test]
fn c06_metric_identities_and_surface_oracle() {
    let mut rng = TestRng::new(606);
    let mut worst_id = 0.0f64;
    let mut worst_surf = 0.0f64;
    for pair in 0..50 {
        let shape = [rng.range(8, 16), rng.range(8, 16), rng.range(8, 16)];
        let mut pred = random_mask(&mut rng, shape);
        let mut reference = random_mask(&mut rng, shape);
        if pair % 3 == 0 {
            // Anisotropic spacing exercises the millimeter conversion.
            pred.vol_mut().set_spacing([0.5, 1.0, 2.0]).unwrap();
            reference.vol_mut().set_spacing([0.5, 1.0, 2.0]).unwrap();
        }

        // DC = 2(1 − VOE)/(2 − VOE), always.
        let dc = dice_per_case(&pred, &reference).unwrap();
        let ov = voe_rvd(&pred, &reference).unwrap();
        let identity = 2.0 * (1.0 - ov.voe) / (2.0 - ov.voe);
        assert!(
            (dc - identity).abs() <= 1e-9,
            "pair {pair}: dc {dc} vs identity {identity}"
        );
        worst_id = worst_id.max((dc - identity).abs());

        let sd = surface_distances(&pred, &reference).unwrap();
        assert!(
            sd.assd_mm <= sd.rmsd_mm + 1e-12 && sd.rmsd_mm <= sd.msd_mm + 1e-12,
            "pair {pair}: ASSD {} RMSD {} MSD {}",
            sd.assd_mm,
            sd.rmsd_mm,
            sd.msd_mm
        );

        if let Some((assd, msd, rmsd)) = brute_surface_distances(&pred, &reference) {
            assert!(!sd.degenerate);
            for (got, want, what) in [
                (sd.assd_mm, assd, "assd"),
                (sd.msd_mm, msd, "msd"),
                (sd.rmsd_mm, rmsd, "rmsd"),
            ] {
                assert!(
                    (got - want).abs() <= 1e-6,
                    "pair {pair} {what}: {got} vs oracle {want}"
                );
                worst_surf = worst_surf.max((got - want).abs());
            }
        }
    }
    println!(
        "criterion 6: 50 pairs, worst identity gap {worst_id:.2e}, worst surface gap {worst_surf:.2e}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: LR-Net pretraining reaches reconstruction Dice >= 0.95.

#[test]
fn c07_lrnet_pretraining_reconstruction_quality() {
    let start = Instant::now();
    let spec = PhantomSpec {
        shape: [16, 16, 16],
        lesion_radius: [1.8, 2.6],
        lesion_count: [1, 1],
        seed: 707,
        ..PhantomSpec::default()
    };
    let masks: Vec<Mask> = generate_dataset(&spec, 30)
        .unwrap()
        .into_iter()
        .map(|p| p.mask)
        .collect();
    let cfg = TrainConfig {
        seed: 7,
        pretrain_epochs: 60,
        lr: 3e-3,
        batch: 2,
        ..TrainConfig::default()
    };
    let (_, report) = pretrain_lrnet(&masks, &cfg).unwrap();
    let elapsed = start.elapsed();
    let recon = report.recon_dice.expect("NI-DM reconstructs masks");
    assert!(
        recon >= 0.95,
        "held-out reconstruction dice {recon:.4} < 0.95"
    );
    assert!(
        elapsed.as_secs() < 600,
        "pretraining took {elapsed:?}, budget is 10 minutes"
    );
    println!("criterion 7: 30 phantoms, held-out reconstruction dice {recon:.4} in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// Criterion 8: the freeze contract over 100 joint steps.

fn small_benchmark(n: usize, seed: u64) -> Vec<Sample> {
    let spec = PhantomSpec {
        shape: [10, 10, 10],
        lesion_radius: [1.0, 1.5],
        lesion_count: [1, 1],
        seed,
        ..PhantomSpec::default()
    };
    generate_dataset(&spec, n)
        .unwrap()
        .into_iter()
        .map(|p| Sample {
            image: p.image,
            mask: p.mask,
        })
        .collect()
}

fn param_bytes(params: &ParamSet<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, t) in params.iter() {
        out.extend_from_slice(name.as_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[test]
fn c08_frozen_lrnet_is_bit_identical_after_100_steps() {
    let data = small_benchmark(27, 808);
    let mut cfg = TrainConfig {
        seed: 8,
        pretrain_epochs: 2,
        // 27 cases split 80/20 leave 21 for training: 11 steps per epoch at
        // batch 2, so 10 epochs run well past 100 joint steps.
        epochs: 10,
        batch: 2,
        lr: 1e-3,
        early_stop_patience: 0,
        mnet: MNetSpec {
            in_channels: 1,
            classes: 2,
            base_width: 2,
        },
        lrnet_width: 2,
        ..TrainConfig::default()
    };
    let masks: Vec<Mask> = data.iter().map(|s| s.mask.clone()).collect();
    let (lrnet, _) = pretrain_lrnet(&masks, &cfg).unwrap();
    let before = param_bytes(&lrnet.params);

    cfg.freeze_lrnet = true;
    let frozen = train_joint(&data, Some(&lrnet), &cfg).unwrap();
    let frozen_after = param_bytes(&frozen.lrnet.as_ref().unwrap().params);
    assert_eq!(
        before, frozen_after,
        "frozen LR-Net parameters changed during joint training"
    );

    cfg.freeze_lrnet = false;
    let unfrozen = train_joint(&data, Some(&lrnet), &cfg).unwrap();
    let unfrozen_after = param_bytes(&unfrozen.lrnet.as_ref().unwrap().params);
    assert_ne!(
        before, unfrozen_after,
        "unfrozen LR-Net parameters did not move"
    );
    println!("criterion 8: frozen bytes identical, unfrozen bytes moved");
}

// ---------------------------------------------------------------------------
// Criterion 10: bit-identical checkpoints and metric tables under a seed.

#[test]
fn c10_runs_are_deterministic() {
    let data = small_benchmark(10, 1010);
    let cfg = TrainConfig {
        seed: 10,
        pretrain_epochs: 2,
        epochs: 3,
        batch: 2,
        lr: 1e-3,
        mnet: MNetSpec {
            in_channels: 1,
            classes: 2,
            base_width: 2,
        },
        lrnet_width: 2,
        ..TrainConfig::default()
    };
    let masks: Vec<Mask> = data.iter().map(|s| s.mask.clone()).collect();

    let run = || {
        let (lrnet, _) = pretrain_lrnet(&masks, &cfg).unwrap();
        let out = train_joint(&data, Some(&lrnet), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.dmck");
        out.checkpoint.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        (
            checkpoint_id(&out.checkpoint),
            bytes,
            out.record.metrics.to_csv(),
        )
    };
    let (id_a, bytes_a, csv_a) = run();
    let (id_b, bytes_b, csv_b) = run();
    assert_eq!(id_a, id_b, "checkpoint ids diverged");
    assert_eq!(bytes_a, bytes_b, "checkpoint files diverged");
    assert_eq!(csv_a, csv_b, "metric tables diverged");
    println!("criterion 10: identical ids, files, and metric tables ({id_a})");
}
