use std::time::Instant;

use dmseg::phantom::{generate_dataset, PhantomSpec};
use dmseg::pipeline::{pretrain_lrnet, train_joint, PipelineLoss, Sample, TrainConfig};

fn dataset(shape: [usize; 3], radius: [f32; 2], count: [usize; 2], n: usize, seed: u64) -> Vec<Sample> {
    let spec = PhantomSpec {
        shape,
        lesion_count: count,
        lesion_radius: radius,
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

#[test]
#[ignore]
fn pretrain_convergence() {
    // Single larger lesion: more interior voxels, easier reconstruction.
    let samples = dataset([16, 16, 16], [1.8, 2.6], [1, 1], 30, 0);
    let masks: Vec<_> = samples.iter().map(|s| s.mask.clone()).collect();
    for (epochs, lr, thr) in [
        (60, 1e-3, 0.15f32),
        (60, 1e-3, 0.3),
        (60, 1e-3, 0.5),
        (60, 3e-3, 0.3),
        (150, 3e-3, 0.3),
        (150, 3e-3, 0.5),
    ] {
        let mut cfg = TrainConfig::default();
        cfg.pretrain_epochs = epochs;
        cfg.batch = 2;
        cfg.lr = lr;
        cfg.recon_threshold = thr;
        let t = Instant::now();
        let (_, report) = pretrain_lrnet(&masks, &cfg).unwrap();
        println!(
            "pretrain {epochs} epochs lr={lr} thr={thr}: {:?} heldout={:.5} recon={:?}",
            t.elapsed(),
            report.heldout_loss,
            report.recon_dice
        );
    }
}

#[test]
#[ignore]
fn joint_convergence() {
    let samples = dataset([16, 16, 16], [1.8, 2.6], [1, 1], 20, 0);
    let masks: Vec<_> = samples.iter().map(|s| s.mask.clone()).collect();

    let mut base = TrainConfig::default();
    base.pretrain_epochs = 60;
    base.epochs = 30;
    base.batch = 1;
    base.lr = 1e-3;
    base.mnet.base_width = 8;
    base.lrnet_width = 8;

    for seed in [1u64] {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let t = Instant::now();
        let (ck, rep) = pretrain_lrnet(&masks, &cfg).unwrap();
        let map = train_joint(&samples, Some(&ck), &cfg).unwrap();
        let tm = t.elapsed();

        let mut dcfg = cfg.clone();
        dcfg.seg_loss = PipelineLoss::Dice;
        dcfg.with_regression = false;
        let t = Instant::now();
        let dice = train_joint(&samples, None, &dcfg).unwrap();
        let td = t.elapsed();

        let best = |o: &dmseg::pipeline::TrainOutcome| {
            o.record
                .epochs
                .iter()
                .map(|e| e.val_dice)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        println!(
            "seed {seed}: recon={:?} mapdice best={:.4} ({tm:?})  dice-only best={:.4} ({td:?})",
            rep.recon_dice,
            best(&map),
            best(&dice)
        );
        let curve: Vec<String> = map
            .record
            .epochs
            .iter()
            .map(|e| format!("{:.3}", e.val_dice))
            .collect();
        println!("  map val_dice curve: {}", curve.join(" "));
        let seg: Vec<String> = map
            .record
            .epochs
            .iter()
            .map(|e| format!("{:.3}", e.val_seg))
            .collect();
        println!("  map val_seg curve:  {}", seg.join(" "));
        let tl: Vec<String> = map.record.epochs.iter().map(|e| format!("{:.3}", e.train_loss)).collect();
        println!("  map train_loss:     {}", tl.join(" "));
        let dtl: Vec<String> = dice.record.epochs.iter().map(|e| format!("{:.3}", e.train_loss)).collect();
        println!("  dice train_loss:    {}", dtl.join(" "));
        let dcurve: Vec<String> = dice
            .record
            .epochs
            .iter()
            .map(|e| format!("{:.3}", e.val_dice))
            .collect();
        println!("  dice val_dice curve: {}", dcurve.join(" "));
    }
}
