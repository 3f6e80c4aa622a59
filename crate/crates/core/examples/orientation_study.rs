//! Trains the tiny regressor on synthetic rotated femurs with and without
//! dynamic label ordering and prints the validation curves.
//!
//! ```text
//! cargo run --release -p fetal-biometry --example orientation_study -- [epochs] [seed]
//! ```

use std::time::Instant;

use fetal_biometry::augment::AugmentConfig;
use fetal_biometry::data::{generate_synthetic, SyntheticConfig};
use fetal_biometry::dod::{fit_orientation, GmmFitConfig};
use fetal_biometry::heatmap::{HeatmapConfig, TargetCenter};
use fetal_biometry::model::{
    prepare_samples, train, OrientationMode, RegressorSpec, TrainConfig, TrainOptions, TrainSetup, Variant,
};
use fetal_biometry::MeasurementKind;

fn main() -> fetal_biometry::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let lr = env("LR", 1e-3);
    let batch = env("BATCH", 2.0) as usize;
    let width = env("CH", 16.0) as usize;
    let stride = env("STRIDE", 4.0) as usize;

    let synth = |n, seed| SyntheticConfig {
        n_images: n,
        seed,
        ..SyntheticConfig::default()
    };
    let spec = RegressorSpec {
        variant: Variant::TinyEncoderDecoder,
        input_height: 128,
        input_width: 128,
        output_stride: stride,
        channels: [width, width * 4 / 3, width * 2, width * 8 / 3],
    };
    let train_set = generate_synthetic(&synth(200, 1000 + seed))?;
    let val_set = generate_synthetic(&synth(50, 2000 + seed))?;
    let tr = prepare_samples(&train_set.images, MeasurementKind::Fl, &spec)?;
    let va = prepare_samples(&val_set.images, MeasurementKind::Fl, &spec)?;
    let pairs: Vec<_> = train_set
        .images
        .iter()
        .map(|img| (img.landmarks[0], img.dims()))
        .collect();
    let orientation = fit_orientation(&pairs, &GmmFitConfig { seed, ..GmmFitConfig::default() })?;
    println!("orientation axis {:.1} deg", orientation.angle_degrees());

    for mode in [OrientationMode::Dynamic, OrientationMode::None] {
        let setup = TrainSetup {
            measurement: MeasurementKind::Fl,
            spec: spec.clone(),
            train: TrainConfig {
                epochs,
                batch_size: batch,
                initial_lr: lr,
                lr_drop_epochs: vec![epochs * 2 / 3],
                seed,
                orientation_mode: mode,
                ..TrainConfig::default()
            },
            augment: AugmentConfig::default(),
            heatmap: HeatmapConfig {
                target_center: TargetCenter::Continuous,
                subpixel_refinement: true,
                stride,
                ..HeatmapConfig::default()
            },
            orientation: Some(orientation.clone()),
            orientation_model_path: None,
            config_fingerprint: None,
        };
        let start = Instant::now();
        let mut hook = |epoch: usize, c: &fetal_biometry::model::EpochCurves| {
            println!(
                "{:>16} epoch {epoch:>3}  loss {:.5}  val {:.2} px  ({:.0} s)",
                mode.as_str(),
                c.train_loss[epoch],
                c.val_median_px_error[epoch],
                start.elapsed().as_secs_f64()
            );
        };
        let ckpt = train(&tr, &va, &setup, TrainOptions { on_epoch: Some(&mut hook), ..TrainOptions::default() })?;
        println!(
            "{}: best epoch {} at {:.2} px, final {:.2} px",
            mode.as_str(),
            ckpt.best_epoch,
            ckpt.curves.val_median_px_error[ckpt.best_epoch],
            ckpt.curves.val_median_px_error.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
