use dmseg::phantom::{generate_dataset, PhantomSpec};
use dmseg::pipeline::{train_joint, PipelineLoss, Sample, TrainConfig};

#[test]
#[ignore]
fn overfit_single_case() {
    let spec = PhantomSpec {
        shape: [16, 16, 16],
        lesion_count: [1, 1],
        lesion_radius: [1.8, 2.6],
        seed: 7,
        ..PhantomSpec::default()
    };
    // Two copies of the same phantom: one trains, one validates, so val
    // dice is literally train dice.
    let p = generate_dataset(&spec, 1).unwrap().remove(0);
    let samples = vec![
        Sample {
            image: p.image.clone(),
            mask: p.mask.clone(),
        },
        Sample {
            image: p.image,
            mask: p.mask,
        },
    ];
    for lr in [3e-3, 1e-3, 3e-4] {
        let mut cfg = TrainConfig::default();
        cfg.seg_loss = PipelineLoss::Dice;
        cfg.with_regression = false;
        cfg.epochs = 120;
        cfg.batch = 1;
        cfg.lr = lr;
        cfg.split = [0.5, 0.5];
        cfg.mnet.base_width = 8;
        cfg.plateau_patience = 1000; // no decay during the probe
        let out = train_joint(&samples, None, &cfg).unwrap();
        let curve: Vec<String> = out
            .record
            .epochs
            .iter()
            .step_by(10)
            .map(|e| format!("{:.3}", e.val_dice))
            .collect();
        println!("lr={lr}: every-10th val_dice: {}", curve.join(" "));
    }
}
