use crate::corpus::{ClassId, LabeledSample, Taxonomy};

use super::featurize::{featurize, FeaturizerConfig, SparseFeatures};
use super::StudentError;

/// Anything that maps text to a probability distribution over a taxonomy.
///
/// Evaluation and the distillation loop only talk to the student through this
/// trait, so another architecture can stand in for the linear model.
pub trait Classifier {
    fn taxonomy(&self) -> &Taxonomy;

    /// Natural-log class probabilities.
    fn log_proba(&self, text: &str) -> Vec<f64>;

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        self.log_proba(text).into_iter().map(f64::exp).collect()
    }
}

/// Multinomial logistic regression over hashed n-gram counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    taxonomy: Taxonomy,
    featurizer: FeaturizerConfig,
    /// Row-major `classes x dimension`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl StudentModel {
    pub fn zeros(taxonomy: Taxonomy, featurizer: FeaturizerConfig) -> Result<Self, StudentError> {
        featurizer.validate()?;
        let k = taxonomy.len();
        Ok(Self {
            weights: vec![0.0; k * featurizer.dimension],
            bias: vec![0.0; k],
            taxonomy,
            featurizer,
        })
    }

    pub fn from_parts(
        taxonomy: Taxonomy,
        featurizer: FeaturizerConfig,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, StudentError> {
        featurizer.validate()?;
        let k = taxonomy.len();
        if bias.len() != k || weights.len() != k * featurizer.dimension {
            return Err(StudentError::ShapeMismatch {
                classes: k,
                dimension: featurizer.dimension,
                weights: weights.len(),
                bias: bias.len(),
            });
        }
        Ok(Self {
            taxonomy,
            featurizer,
            weights,
            bias,
        })
    }

    pub fn featurizer(&self) -> &FeaturizerConfig {
        &self.featurizer
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dimension(&self) -> usize {
        self.featurizer.dimension
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn featurize(&self, text: &str) -> SparseFeatures {
        featurize(text, &self.featurizer)
    }

    pub fn logits(&self, x: &SparseFeatures) -> Vec<f64> {
        let d = self.featurizer.dimension;
        self.bias
            .iter()
            .enumerate()
            .map(|(c, b)| {
                let row = &self.weights[c * d..(c + 1) * d];
                b + x.entries().iter().map(|&(j, v)| row[j as usize] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn log_proba_features(&self, x: &SparseFeatures) -> Vec<f64> {
        log_softmax(&self.logits(x))
    }

    pub fn proba_features(&self, x: &SparseFeatures) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// `softmax(weights * features + bias)`.
    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        self.proba_features(&self.featurize(text))
    }

    /// Per-sample gradient factor `p - onehot(label)` of the cross-entropy
    /// with respect to the logits, plus the sample's loss.
    pub(crate) fn logit_residual(&self, x: &SparseFeatures, label: ClassId) -> (Vec<f64>, f64) {
        let logits = self.logits(x);
        let lse = log_sum_exp(&logits);
        let mut residual: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        residual[label] -= 1.0;
        (residual, lse - logits[label])
    }
}

impl Classifier for StudentModel {
    fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    fn log_proba(&self, text: &str) -> Vec<f64> {
        self.log_proba_features(&self.featurize(text))
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        StudentModel::predict_proba(self, text)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| v - lse).collect()
}

/// Mean categorical cross-entropy `-mean(ln p(true class))`.
pub fn loss<C: Classifier + ?Sized>(model: &C, samples: &[LabeledSample]) -> Result<f64, StudentError> {
    if samples.is_empty() {
        return Err(StudentError::EmptyDataset);
    }
    let k = model.taxonomy().len();
    let mut total = 0.0;
    for s in samples {
        if s.label >= k {
            return Err(StudentError::InvalidLabel { id: s.id, label: s.label });
        }
        total -= model.log_proba(&s.text)[s.label];
    }
    Ok(total / samples.len() as f64)
}

/// Dense gradient of the mean cross-entropy over `samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn objective_gradient(model: &StudentModel, samples: &[LabeledSample]) -> Result<Gradient, StudentError> {
    if samples.is_empty() {
        return Err(StudentError::EmptyDataset);
    }
    let d = model.dimension();
    let mut g = Gradient {
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; model.bias.len()],
    };
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        if s.label >= model.num_classes() {
            return Err(StudentError::InvalidLabel { id: s.id, label: s.label });
        }
        let x = model.featurize(&s.text);
        let (r, _) = model.logit_residual(&x, s.label);
        for (c, rc) in r.iter().enumerate() {
            g.bias[c] += rc * scale;
            for &(j, v) in x.entries() {
                g.weights[c * d + j as usize] += rc * v * scale;
            }
        }
    }
    Ok(g)
}
