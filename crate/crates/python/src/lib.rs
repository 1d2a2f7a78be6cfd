//! Python bindings: taxonomy, student training and inference, metrics,
//! prompt building, response parsing and the distillation loop with either
//! the mock oracle teacher or a Python callable as teacher.

use pgkd_core::corpus::{LabeledSample, SampleId, Taxonomy as CoreTaxonomy};
use pgkd_core::cost::Pricing;
use pgkd_core::distill::{run_pgkd as core_run_pgkd, PgkdConfig};
use pgkd_core::evaluation::{evaluate, render_report, ClassificationReport};
use pgkd_core::student::{train, Classifier, StudentConfig, StudentModel};
use pgkd_core::synthetic::{SyntheticConfig, SyntheticCorpus};
use pgkd_core::teacher::{
    build_zero_shot_prompt, parse_generation, BackendError, Completion, MockOracleBackend, ParseContext,
    TeacherBackend, TokenUsage,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

/// `(text, class name)` pairs.
type Pairs = Vec<(String, String)>;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Taxonomy {
    inner: CoreTaxonomy,
}

#[pymethods]
impl Taxonomy {
    #[new]
    fn new(names: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: CoreTaxonomy::new(names).map_err(value_err)? })
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.inner.index_of(name)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Taxonomy({:?})", self.inner.names())
    }
}

/// `(text, label name)` pairs to samples with ids starting at `first_id`.
fn to_samples(taxonomy: &CoreTaxonomy, pairs: &[(String, String)], first_id: SampleId) -> PyResult<Vec<LabeledSample>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, (text, label))| {
            let id = taxonomy
                .index_of(label)
                .ok_or_else(|| PyValueError::new_err(format!("unknown label {label:?}")))?;
            Ok(LabeledSample::seed(first_id + i as SampleId, text.clone(), id))
        })
        .collect()
}

fn report_dict<'py>(py: Python<'py>, report: &ClassificationReport, taxonomy: &CoreTaxonomy) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::json!({
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "weighted_f1": report.weighted_f1,
        "total": report.total,
        "per_class": taxonomy.names().iter().zip(&report.per_class).map(|(name, m)| serde_json::json!({
            "class": name,
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
            "support": m.support,
        })).collect::<Vec<_>>(),
        "text": render_report(report, taxonomy),
    });
    py.import("json")?.call_method1("loads", (json.to_string(),))
}

#[pyclass]
struct Student {
    model: StudentModel,
}

#[pymethods]
impl Student {
    /// Trains a fresh student with validation early stopping.
    #[staticmethod]
    #[pyo3(signature = (taxonomy, train_samples, val_samples, epochs=30, batch_size=64, learning_rate=None, patience=5, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        taxonomy: &Taxonomy,
        train_samples: Vec<(String, String)>,
        val_samples: Vec<(String, String)>,
        epochs: usize,
        batch_size: usize,
        learning_rate: Option<f64>,
        patience: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let t = &taxonomy.inner;
        let tr = to_samples(t, &train_samples, 0)?;
        let va = to_samples(t, &val_samples, tr.len() as SampleId)?;
        let defaults = StudentConfig::default();
        let config = StudentConfig {
            epochs,
            batch_size,
            learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
            patience,
            seed,
            ..defaults
        };
        let (model, _) = train(&tr, &va, t, &config).map_err(value_err)?;
        Ok(Self { model })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { model: StudentModel::load(path).map_err(|e| PyIOError::new_err(e.to_string()))? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.model.save(path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn taxonomy(&self) -> Taxonomy {
        Taxonomy { inner: self.model.taxonomy().clone() }
    }

    fn predict_proba(&self, text: &str) -> Vec<f64> {
        self.model.predict_proba(text)
    }

    fn predict(&self, text: &str) -> String {
        let p = self.model.predict_proba(text);
        let (c, _) = pgkd_core::evaluation::argmax(&p);
        self.model.taxonomy().name(c).unwrap_or_default().to_string()
    }

    /// Loss and classification report on labelled samples.
    fn evaluate<'py>(&self, py: Python<'py>, samples: Vec<(String, String)>) -> PyResult<(f64, Bound<'py, PyAny>)> {
        let data = to_samples(self.model.taxonomy(), &samples, 0)?;
        let eval = evaluate(&self.model, &data).map_err(value_err)?;
        Ok((eval.loss, report_dict(py, &eval.report, self.model.taxonomy())?))
    }
}

/// Metrics from `(true, predicted)` label-name pairs.
#[pyfunction]
fn classification_report<'py>(
    py: Python<'py>,
    taxonomy: &Taxonomy,
    pairs: Vec<(String, String)>,
) -> PyResult<Bound<'py, PyAny>> {
    let t = &taxonomy.inner;
    let ids = pairs
        .iter()
        .map(|(a, b)| match (t.index_of(a), t.index_of(b)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(PyValueError::new_err(format!("unknown label in pair ({a:?}, {b:?})"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    report_dict(py, &ClassificationReport::from_pairs(t.len(), ids), t)
}

#[pyfunction]
fn zero_shot_prompt(taxonomy: &Taxonomy, text: &str) -> PyResult<String> {
    build_zero_shot_prompt(&taxonomy.inner, text).map_err(value_err)
}

/// Parses a teacher response into accepted `(text, label)` pairs and rejected
/// `(record JSON, reason)` pairs.
#[pyfunction]
#[pyo3(signature = (raw, taxonomy, step=1, known_texts=Vec::new()))]
fn parse_response(
    raw: &str,
    taxonomy: &Taxonomy,
    step: u32,
    known_texts: Vec<String>,
) -> PyResult<(Pairs, Pairs)> {
    let t = &taxonomy.inner;
    let known = known_texts.into_iter().collect();
    let batch = parse_generation(raw, &ParseContext { taxonomy: t, step, known_texts: &known, first_id: 0 })
        .map_err(value_err)?;
    let accepted = batch
        .accepted
        .iter()
        .map(|s| (s.text.clone(), t.name(s.label).unwrap_or_default().to_string()))
        .collect();
    let rejected = batch
        .rejected
        .iter()
        .map(|r| (r.record.to_string(), r.reason.kind().to_string()))
        .collect();
    Ok((accepted, rejected))
}

#[pyfunction]
fn teacher_cost(input_tokens: u64, output_tokens: u64, input_per_1k: f64, output_per_1k: f64) -> f64 {
    Pricing { input_per_1k, output_per_1k }.cost(TokenUsage { input_tokens, output_tokens })
}

/// Class-conditional synthetic corpus: `(class names, [(text, label)])`.
#[pyfunction]
#[pyo3(signature = (n, num_classes=20, seed=0))]
fn synthetic_corpus(n: usize, num_classes: usize, seed: u64) -> PyResult<(Vec<String>, Pairs)> {
    let corpus = SyntheticCorpus::new(SyntheticConfig { num_classes, seed, ..Default::default() }).map_err(value_err)?;
    let names = corpus.taxonomy.names().to_vec();
    let samples = corpus
        .generate(n, 0)
        .into_iter()
        .map(|s| (s.text, names[s.label].clone()))
        .collect();
    Ok((names, samples))
}

/// Teacher backed by a Python callable `prompt -> response text`.
struct CallableTeacher {
    callable: Py<PyAny>,
}

impl TeacherBackend for CallableTeacher {
    fn complete(&mut self, prompt: &str) -> Result<Completion, BackendError> {
        Python::attach(|py| {
            self.callable
                .call1(py, (prompt,))
                .and_then(|r| r.extract::<String>(py))
                .map(Completion::text)
                .map_err(|e| BackendError::Transport(e.to_string()))
        })
    }
}

/// Runs the distillation loop. The teacher is either a Python callable taking
/// the prompt and returning the response text, or, when `teacher` is None, the
/// mock oracle drawing from `reserve`. Returns the best student and the run
/// manifest as JSON.
#[pyfunction]
#[pyo3(signature = (
    taxonomy, train_samples, val_samples, teacher=None, reserve=Vec::new(), noise=0.0,
    num_kd_steps=10, patience_limit=5, gen_batch_size=32, use_validation_report=true,
    use_hard_negatives=true, seed=0, learning_rate=None
))]
#[allow(clippy::too_many_arguments)]
fn run_pgkd(
    taxonomy: &Taxonomy,
    train_samples: Vec<(String, String)>,
    val_samples: Vec<(String, String)>,
    teacher: Option<Py<PyAny>>,
    reserve: Vec<(String, String)>,
    noise: f64,
    num_kd_steps: u32,
    patience_limit: usize,
    gen_batch_size: usize,
    use_validation_report: bool,
    use_hard_negatives: bool,
    seed: u64,
    learning_rate: Option<f64>,
) -> PyResult<(Student, String)> {
    let t = &taxonomy.inner;
    let tr = to_samples(t, &train_samples, 0)?;
    let va = to_samples(t, &val_samples, tr.len() as SampleId)?;
    let split = pgkd_core::corpus::DatasetSplit { train: tr, val: va };
    let mut backend: Box<dyn TeacherBackend> = match teacher {
        Some(callable) => Box::new(CallableTeacher { callable }),
        None => {
            let pool = to_samples(t, &reserve, 0)?;
            Box::new(MockOracleBackend::new(t.clone(), &pool, noise, seed).map_err(value_err)?)
        }
    };
    let defaults = StudentConfig::default();
    let student = StudentConfig { seed, learning_rate: learning_rate.unwrap_or(defaults.learning_rate), ..defaults };
    let config = PgkdConfig {
        num_kd_steps,
        patience_limit,
        gen_batch_size,
        use_validation_report,
        use_hard_negatives,
        seed,
        ..Default::default()
    };
    let run = core_run_pgkd(&split, t, &student, backend.as_mut(), &config).map_err(value_err)?;
    Ok((Student { model: run.model }, run.manifest.to_json()))
}

#[pymodule]
fn pgkd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Taxonomy>()?;
    m.add_class::<Student>()?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(zero_shot_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_response, m)?)?;
    m.add_function(wrap_pyfunction!(teacher_cost, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_pgkd, m)?)?;
    Ok(())
}
