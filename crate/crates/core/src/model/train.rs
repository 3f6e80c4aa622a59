use ndarray::{Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_sample, AugmentConfig, Augmented, LabelPolicy, Sample};
use crate::dod::{OrientationModel, ProjectionAxis};
use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, LandmarkPair, MeasurementKind};
use crate::heatmap::{decode, encode, HeatmapConfig};
use crate::image::{AnnotatedImage, GrayImage};
use crate::metrics::median;
use crate::model::{
    apply_label_axis, preprocess, Checkpoint, EpochCurves, Preprocessed, Regressor, RegressorSpec,
    ResumeState, TrainConfig,
};
use crate::nn::{cast, flatten, load_grads, load_layers, zero_grads, Adam, Graph};

/// A preprocessed image with its raw (annotation-order) landmark pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub pre: Preprocessed,
    /// Original-image pixels.
    pub pair: LandmarkPair,
}

impl PreparedSample {
    fn input_pair(&self) -> LandmarkPair {
        self.pair.map_points(|p| self.pre.to_input(p))
    }
}

/// Preprocesses every image for `kind`; images without that pair are an error.
pub fn prepare_samples(images: &[AnnotatedImage], kind: MeasurementKind, spec: &RegressorSpec) -> Result<Vec<PreparedSample>> {
    images
        .iter()
        .map(|img| {
            let pair = img.pair(kind).ok_or_else(|| {
                Error::domain(format!("{} has no {kind} annotation", img.image_id))
            })?;
            Ok(PreparedSample {
                id: img.image_id.clone(),
                pre: preprocess(&img.pixels, spec)?,
                pair: *pair,
            })
        })
        .collect()
}

/// Static description of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub measurement: MeasurementKind,
    pub spec: RegressorSpec,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub heatmap: HeatmapConfig,
    /// Required for dynamic orientation mode.
    pub orientation: Option<OrientationModel>,
    pub orientation_model_path: Option<String>,
    pub config_fingerprint: Option<String>,
}

/// Progress callback: `(epoch, curves so far)`.
pub type EpochHook<'a> = &'a mut dyn FnMut(usize, &EpochCurves);

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Continue from this checkpoint's saved state.
    pub resume: Option<&'a Checkpoint>,
    /// Stop once this many epochs are complete.
    pub stop_after: Option<usize>,
    pub on_epoch: Option<EpochHook<'a>>,
}

fn validate_setup(setup: &TrainSetup, train: &[PreparedSample], val: &[PreparedSample]) -> Result<Option<ProjectionAxis>> {
    setup.spec.validate()?;
    setup.train.validate()?;
    setup.augment.validate()?;
    setup.heatmap.validate()?;
    if setup.heatmap.stride != setup.spec.output_stride {
        return Err(Error::domain(format!(
            "heatmap stride {} differs from network output stride {}",
            setup.heatmap.stride, setup.spec.output_stride
        )));
    }
    if train.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if val.is_empty() {
        return Err(Error::domain("validation set is empty"));
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.pair.measurement != setup.measurement) {
        return Err(Error::domain(format!(
            "{} carries a {} pair; one network is trained per measurement ({})",
            s.id, s.pair.measurement, setup.measurement
        )));
    }
    if let Some(model) = &setup.orientation {
        if model.measurement != setup.measurement {
            return Err(Error::domain(format!(
                "orientation model was fitted on {}, training {}",
                model.measurement, setup.measurement
            )));
        }
    }
    setup.train.orientation_mode.label_axis(setup.orientation.as_ref())
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn fill_input(batch: &mut Array4<f32>, b: usize, img: &GrayImage) {
    batch
        .index_axis_mut(Axis(1), b)
        .index_axis_mut(Axis(0), 0)
        .zip_mut_with(img.data(), |d, s| *d = *s as f32);
}

fn fill_target(batch: &mut Array4<f32>, b: usize, pair: &LandmarkPair, spec: &RegressorSpec, heatmap: &HeatmapConfig) -> Result<()> {
    let stack = encode(pair, spec.input_height, spec.input_width, heatmap)?;
    batch
        .index_axis_mut(Axis(1), b)
        .zip_mut_with(&stack.maps, |d, s| *d = *s as f32);
    Ok(())
}

/// Mean squared error and its gradient with respect to `pred`.
fn mse(pred: &Array4<f32>, target: &Array4<f32>) -> (f64, Array4<f32>) {
    let n = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| (*d as f64).powi(2)).sum::<f64>() / n;
    let grad = diff.mapv(|d| d * cast::<f32>(2.0 / n));
    (loss, grad)
}

struct Validation {
    loss: f64,
    median_px_error: f64,
}

fn validate_epoch(
    net: &Regressor<f32>,
    val: &[PreparedSample],
    axis: Option<&ProjectionAxis>,
    setup: &TrainSetup,
) -> Result<Validation> {
    let spec = &setup.spec;
    let (rows, cols) = spec.output_grid();
    let mut errors = Vec::with_capacity(2 * val.len());
    let mut loss_sum = 0.0;
    for chunk in val.chunks(setup.train.batch_size) {
        let inputs: Vec<&GrayImage> = chunk.iter().map(|s| &s.pre.input).collect();
        let out = net.forward(&inputs)?;
        let mut targets = Array4::<f32>::zeros((2, chunk.len(), rows, cols));
        for (b, s) in chunk.iter().enumerate() {
            let label = apply_label_axis(&s.pair, axis, s.pre.original)?;
            fill_target(&mut targets, b, &label.map_points(|p| s.pre.to_input(p)), spec, &setup.heatmap)?;
            let stack = crate::heatmap::HeatmapStack::new(
                out.index_axis(Axis(1), b).mapv(f64::from),
                spec.output_stride,
            )?;
            let decoded = decode(&stack, setup.measurement, setup.heatmap.subpixel_refinement)?;
            let pred = decoded.pair.map_points(|p| s.pre.to_original(p));
            errors.push(euclidean_distance(&pred.first, &label.first));
            errors.push(euclidean_distance(&pred.second, &label.second));
        }
        loss_sum += mse(&out, &targets).0 * chunk.len() as f64;
    }
    Ok(Validation {
        loss: loss_sum / val.len() as f64,
        median_px_error: median(&errors),
    })
}

/// Trains one regressor and returns the best-validation checkpoint.
///
/// Each epoch draws its shuffle and augmentation parameters from an RNG
/// stream derived from `(seed, epoch)`, so a run resumed from a checkpoint
/// continues with exactly the curve an uninterrupted run would produce.
pub fn train(train: &[PreparedSample], val: &[PreparedSample], setup: &TrainSetup, mut options: TrainOptions<'_>) -> Result<Checkpoint> {
    let axis = validate_setup(setup, train, val)?;
    let cfg = &setup.train;
    let spec = &setup.spec;
    let mut net = Regressor::<f32>::new(spec.clone(), cfg.seed)?;
    let mut adam = Adam::new(&net.layers);
    let mut curves = EpochCurves::default();
    let mut best: Option<(usize, Vec<f64>)> = None;
    let mut start = 0;

    if let Some(ckpt) = options.resume {
        let state = ckpt
            .resume
            .as_ref()
            .ok_or_else(|| Error::domain("checkpoint carries no resumable state"))?;
        if ckpt.spec != *spec || ckpt.train_config != *cfg || ckpt.heatmap != setup.heatmap || ckpt.augment != setup.augment {
            return Err(Error::domain("checkpoint was trained with a different configuration"));
        }
        load_layers(&state.weights, &mut net.layers)?;
        load_grads(&state.adam_m, &mut adam.m)?;
        load_grads(&state.adam_v, &mut adam.v)?;
        adam.step = state.adam_step;
        curves = ckpt.curves.clone();
        start = ckpt.epochs_completed;
        best = Some((ckpt.best_epoch, ckpt.weights.clone()));
    }

    let end = options.stop_after.unwrap_or(cfg.epochs).min(cfg.epochs);
    let (rows, cols) = spec.output_grid();
    let content_dims: Vec<_> = train.iter().map(|s| s.pre.content).collect();

    for epoch in start..end {
        let lr = cfg.learning_rate(epoch);
        let mut rng = epoch_rng(cfg.seed, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut skipped = 0;
        let mut loss_sum = 0.0;
        let mut seen = 0usize;

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let sample = Sample {
                    image: train[i].pre.input.clone(),
                    pair: train[i].input_pair(),
                };
                match augment_sample(&sample, &LabelPolicy::Keep, &setup.augment, &mut rng)? {
                    Augmented::Sample(out, _) => {
                        let pair = apply_label_axis(&out.pair, axis.as_ref(), content_dims[i])?;
                        batch.push((out.image, pair));
                    }
                    Augmented::Skipped { .. } => skipped += 1,
                }
            }
            if batch.is_empty() {
                continue;
            }
            let n = batch.len();
            let mut inputs = Array4::<f32>::zeros((1, n, spec.input_height, spec.input_width));
            let mut targets = Array4::<f32>::zeros((2, n, rows, cols));
            for (b, (img, pair)) in batch.iter().enumerate() {
                fill_input(&mut inputs, b, img);
                fill_target(&mut targets, b, pair, spec, &setup.heatmap)?;
            }
            let mut graph = Graph::new(&net.layers);
            let out = net.build(&mut graph, inputs)?;
            let (loss, grad) = mse(graph.value(out), &targets);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            let mut grads = zero_grads(&net.layers);
            graph.backward(out, grad, &mut grads)?;
            drop(graph);
            adam.update(&mut net.layers, &grads, lr);
            loss_sum += loss * n as f64;
            seen += n;
        }

        let v = validate_epoch(&net, val, axis.as_ref(), setup)?;
        curves.train_loss.push(if seen > 0 { loss_sum / seen as f64 } else { f64::NAN });
        curves.val_loss.push(v.loss);
        curves.val_median_px_error.push(v.median_px_error);
        curves.learning_rate.push(lr);
        curves.skipped.push(skipped);
        if best.as_ref().is_none_or(|(b, _)| v.median_px_error < curves.val_median_px_error[*b]) {
            best = Some((epoch, net.flat_params()));
        }
        if let Some(hook) = options.on_epoch.as_mut() {
            hook(epoch, &curves);
        }
    }

    let (best_epoch, weights) = best.unwrap_or_else(|| (0, net.flat_params()));
    Ok(Checkpoint {
        measurement: setup.measurement,
        spec: spec.clone(),
        train_config: cfg.clone(),
        augment: setup.augment,
        heatmap: setup.heatmap,
        label_axis: axis,
        orientation_model_path: setup.orientation_model_path.clone(),
        config_fingerprint: setup.config_fingerprint.clone(),
        best_epoch,
        epochs_completed: curves.len(),
        n_train: train.len(),
        n_val: val.len(),
        curves,
        weights,
        resume: Some(ResumeState {
            weights: net.flat_params(),
            adam_m: flatten(&adam.m),
            adam_v: flatten(&adam.v),
            adam_step: adam.step,
        }),
    })
}
