//! Dataset assembly and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::hexnn::layers::AdamConfig;
use crate::hexnn::model::{Model, ModelSpec};
use crate::hexnn::tensor::Tensor4;
use crate::transform::{choose_grid, s2h, InterpMode, SquareImage};

/// A labeled classification dataset. Samples are stored as flat row-major
/// `rows * cols * channels` vectors with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    channels: usize,
    num_classes: usize,
    train_samples: Vec<Vec<f64>>,
    train_labels: Vec<usize>,
    test_samples: Vec<Vec<f64>>,
    test_labels: Vec<usize>,
}

impl Dataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: usize,
        cols: usize,
        channels: usize,
        num_classes: usize,
        train_samples: Vec<Vec<f64>>,
        train_labels: Vec<usize>,
        test_samples: Vec<Vec<f64>>,
        test_labels: Vec<usize>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::invalid_argument("sample dimensions must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::invalid_argument("a dataset needs at least one class"));
        }
        if train_samples.len() != train_labels.len() || test_samples.len() != test_labels.len() {
            return Err(Error::shape_mismatch(
                "sample and label counts differ".to_string(),
            ));
        }
        let len = rows * cols * channels;
        for s in train_samples.iter().chain(&test_samples) {
            if s.len() != len {
                return Err(Error::shape_mismatch(format!(
                    "sample has {} values, expected {len}",
                    s.len()
                )));
            }
        }
        if let Some(&bad) = train_labels.iter().chain(&test_labels).find(|&&l| l >= num_classes) {
            return Err(Error::invalid_argument(format!(
                "label {bad} is out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            rows,
            cols,
            channels,
            num_classes,
            train_samples,
            train_labels,
            test_samples,
            test_labels,
        })
    }

    pub fn sample_dims(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn train_len(&self) -> usize {
        self.train_samples.len()
    }

    pub fn test_len(&self) -> usize {
        self.test_samples.len()
    }

    pub fn train(&self) -> (&[Vec<f64>], &[usize]) {
        (&self.train_samples, &self.train_labels)
    }

    pub fn test(&self) -> (&[Vec<f64>], &[usize]) {
        (&self.test_samples, &self.test_labels)
    }
}

/// Builds a dataset from labeled `[0, 255]` images, scaling values to
/// `[0, 1]`. With `hex_interp` set, every image is first resampled onto the
/// matching equal-count hexagonal raster with that interpolation mode.
/// All images must share one size and channel count.
pub fn build_dataset(
    train: &[(SquareImage, usize)],
    test: &[(SquareImage, usize)],
    num_classes: usize,
    hex_interp: Option<InterpMode>,
) -> Result<Dataset> {
    let first = train
        .first()
        .or_else(|| test.first())
        .ok_or_else(|| Error::invalid_argument("dataset has no images"))?;
    let (width, height, channels) = (first.0.width(), first.0.height(), first.0.channels());
    let (rows, cols) = match hex_interp {
        Some(_) => {
            let g = choose_grid(width, height)?;
            (g.rows(), g.cols())
        }
        None => (height, width),
    };
    let convert = |img: &SquareImage| -> Result<Vec<f64>> {
        if (img.width(), img.height(), img.channels()) != (width, height, channels) {
            return Err(Error::shape_mismatch(format!(
                "image is {}x{}x{}, expected {width}x{height}x{channels}",
                img.width(),
                img.height(),
                img.channels()
            )));
        }
        let data = match hex_interp {
            Some(mode) => s2h(img, &choose_grid(width, height)?, mode)?.into_data(),
            None => img.data().to_vec(),
        };
        Ok(data.into_iter().map(|v| v / 255.0).collect())
    };
    let mut train_samples = Vec::with_capacity(train.len());
    let mut train_labels = Vec::with_capacity(train.len());
    for (img, label) in train {
        train_samples.push(convert(img)?);
        train_labels.push(*label);
    }
    let mut test_samples = Vec::with_capacity(test.len());
    let mut test_labels = Vec::with_capacity(test.len());
    for (img, label) in test {
        test_samples.push(convert(img)?);
        test_labels.push(*label);
    }
    Dataset::new(
        rows,
        cols,
        channels,
        num_classes,
        train_samples,
        train_labels,
        test_samples,
        test_labels,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 32,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

fn gather_batch(
    samples: &[Vec<f64>],
    labels: &[usize],
    indices: &[usize],
    dims: (usize, usize, usize),
) -> (Tensor4, Vec<usize>) {
    let (rows, cols, channels) = dims;
    let mut x = Tensor4::zeros(indices.len(), rows, cols, channels);
    let stride = rows * cols * channels;
    for (slot, &idx) in indices.iter().enumerate() {
        x.data_mut()[slot * stride..(slot + 1) * stride].copy_from_slice(&samples[idx]);
    }
    let y = indices.iter().map(|&i| labels[i]).collect();
    (x, y)
}

/// Trains a fresh model on the dataset. Fully deterministic for a given
/// `(spec, data, config)`: a single ChaCha20 stream seeded from
/// `config.seed` drives, in order, weight initialization, the per-epoch
/// shuffles, and the per-batch dropout masks. Returns the trained model,
/// per-epoch training stats, and the final test loss and accuracy.
pub fn train(spec: &ModelSpec, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Err(Error::invalid_argument("training needs at least one epoch"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid_argument("batch size must be positive"));
    }
    if data.train_len() == 0 {
        return Err(Error::invalid_argument("training split is empty"));
    }
    let (rows, cols, channels) = data.sample_dims();
    if spec.input() != (rows, cols, channels) {
        return Err(Error::shape_mismatch(format!(
            "model expects {:?} inputs but the dataset provides ({rows}, {cols}, {channels})",
            spec.input()
        )));
    }
    if spec.classes() != data.num_classes() {
        return Err(Error::shape_mismatch(format!(
            "model emits {} classes but the dataset has {}",
            spec.classes(),
            data.num_classes()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut model = Model::init(spec, &mut rng)?;
    let mut opt = model.fresh_opt_state();
    let (samples, labels) = data.train();
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = gather_batch(samples, labels, chunk, data.sample_dims());
            let (loss, predictions) =
                model.train_step(&x, &y, &mut opt, &config.adam, &mut rng)?;
            loss_sum += loss * chunk.len() as f64;
            correct += predictions.iter().zip(&y).filter(|(p, l)| p == l).count();
        }
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
        });
    }
    let (test_loss, test_accuracy) = evaluate(&model, data)?;
    Ok(TrainOutcome { model, history, test_loss, test_accuracy })
}

/// Mean loss and accuracy of a model on the dataset's test split.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    let (samples, labels) = data.test();
    evaluate_samples(model, samples, labels, data.sample_dims())
}

/// Mean loss and accuracy on an explicit sample list.
pub fn evaluate_samples(
    model: &Model,
    samples: &[Vec<f64>],
    labels: &[usize],
    dims: (usize, usize, usize),
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid_argument("evaluation split is empty"));
    }
    if samples.len() != labels.len() {
        return Err(Error::shape_mismatch("sample and label counts differ".to_string()));
    }
    let n = samples.len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(64) {
        let (x, y) = gather_batch(samples, labels, chunk, dims);
        let logits = model.forward_eval(&x)?;
        let (loss, _, predictions) =
            crate::hexnn::layers::softmax_cross_entropy(&logits, &y)?;
        loss_sum += loss * chunk.len() as f64;
        correct += predictions.iter().zip(&y).filter(|(p, l)| p == l).count();
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}
