use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassId, LabeledSample, Taxonomy};

use super::featurize::{FeaturizerConfig, SparseFeatures};
use super::model::StudentModel;
use super::StudentError;

/// Mini-batch SGD settings for the reference student.
///
/// Epochs, batch size and patience default to the BERT fine-tuning setup
/// (30 / 64 / 5). That setup's learning rate, 2e-5, is specific to
/// transformer fine-tuning; the default here had the lowest mean validation
/// loss over the grid {0.01, 0.03, 0.1, 0.3, 1, 3} on the bundled fixture
/// corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
    pub featurizer: FeaturizerConfig,
}

pub const BERT_REFERENCE_LEARNING_RATE: f64 = 2e-5;

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1.0,
            patience: 5,
            seed: 0,
            featurizer: FeaturizerConfig::default(),
        }
    }
}

impl StudentConfig {
    pub fn validate(&self) -> Result<(), StudentError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(StudentError::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(StudentError::InvalidConfig(format!(
                "learning rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        self.featurizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Last completed epoch (1-based).
    pub stopped_epoch: usize,
    /// Epoch whose snapshot was returned (1-based).
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }
}

/// Trains a fresh zero-initialised student.
pub fn train(
    train: &[LabeledSample],
    val: &[LabeledSample],
    taxonomy: &Taxonomy,
    config: &StudentConfig,
) -> Result<(StudentModel, TrainingLog), StudentError> {
    config.validate()?;
    let init = StudentModel::zeros(taxonomy.clone(), config.featurizer.clone())?;
    train_from(init, train, val, config)
}

/// Continues training from `init`. `config.featurizer` is ignored in favour of
/// the model's own featurizer.
///
/// After every epoch the validation loss is measured; training stops once it
/// has failed to improve for more than `patience` consecutive epochs and the
/// snapshot from the best epoch is returned.
pub fn train_from(
    init: StudentModel,
    train: &[LabeledSample],
    val: &[LabeledSample],
    config: &StudentConfig,
) -> Result<(StudentModel, TrainingLog), StudentError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(StudentError::EmptyDataset);
    }
    let mut model = init;
    let train_x = encode(&model, train)?;
    let val_x = encode(&model, val)?;
    let d = model.dimension();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut log = TrainingLog {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        stopped_epoch: 0,
        best_epoch: 0,
    };
    let mut best: Option<StudentModel> = None;
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            // Residuals for the whole batch are taken at the pre-step weights.
            let residuals: Vec<(usize, Vec<f64>)> = batch
                .iter()
                .map(|&i| {
                    let (r, l) = model.logit_residual(&train_x[i].0, train_x[i].1);
                    epoch_loss += l;
                    (i, r)
                })
                .collect();
            let step = config.learning_rate / batch.len() as f64;
            let (w, b) = model.params_mut();
            for (i, r) in residuals {
                for (c, rc) in r.into_iter().enumerate() {
                    let g = step * rc;
                    b[c] -= g;
                    let row = &mut w[c * d..(c + 1) * d];
                    for &(j, v) in train_x[i].0.entries() {
                        row[j as usize] -= g * v;
                    }
                }
            }
        }
        log.train_loss.push(epoch_loss / train_x.len() as f64);

        let v = mean_loss(&model, &val_x);
        log.val_loss.push(v);
        log.stopped_epoch = epoch;
        if v < best_val {
            best_val = v;
            log.best_epoch = epoch;
            best = Some(model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }

    // A diverged run (NaN every epoch) never records a best epoch; fall back
    // to the final weights rather than inventing a snapshot.
    let model = match best {
        Some(m) => m,
        None => {
            log.best_epoch = log.stopped_epoch;
            model
        }
    };
    Ok((model, log))
}

fn encode(
    model: &StudentModel,
    samples: &[LabeledSample],
) -> Result<Vec<(SparseFeatures, ClassId)>, StudentError> {
    samples
        .iter()
        .map(|s| {
            if s.label >= model.num_classes() {
                Err(StudentError::InvalidLabel { id: s.id, label: s.label })
            } else {
                Ok((model.featurize(&s.text), s.label))
            }
        })
        .collect()
}

// Same accumulation order as `model::loss`, so the two agree bitwise.
fn mean_loss(model: &StudentModel, xs: &[(SparseFeatures, ClassId)]) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs {
        total -= model.log_proba_features(x)[*y];
    }
    total / xs.len() as f64
}
