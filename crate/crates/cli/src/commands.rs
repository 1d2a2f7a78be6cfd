use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pgkd_core::corpus::{load_dataset, LabeledSample, SampleId, Taxonomy};
use pgkd_core::cost::{
    estimate_cost_latency, measure_batch_latency, render_cost_table, zero_shot_row, BatchMeasurement, CostRow,
    INFERENCE_BATCH,
};
use pgkd_core::distill::RunManifest;
use pgkd_core::evaluation::{evaluate, render_report, ClassificationReport};
use pgkd_core::experiment::{holdout_test, oracle_teacher, prepare_seed, run_seed, MetricSummary, SeedOutcome, SeedSetup};
use pgkd_core::student::train;
use pgkd_core::teacher::{
    zero_shot_classify, ConstantBackend, HttpBackend, LookupBackend, TeacherBackend, TokenUsage,
};
use rayon::prelude::*;

use crate::config::{RunSpec, TeacherConfig, TeacherKind};

pub struct Data {
    pub taxonomy: Taxonomy,
    pub pool: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

pub fn load_data(spec: &RunSpec) -> Result<Data> {
    let taxonomy = Taxonomy::load(&spec.taxonomy).with_context(|| format!("taxonomy {}", spec.taxonomy.display()))?;
    let samples = load_dataset(&spec.dataset, &taxonomy).with_context(|| format!("dataset {}", spec.dataset.display()))?;
    let (pool, test) = match &spec.test {
        Some(path) => {
            let offset = samples.len() as SampleId;
            let mut test = load_dataset(path, &taxonomy).with_context(|| format!("test set {}", path.display()))?;
            for s in &mut test {
                s.id += offset;
            }
            (samples, test)
        }
        None => holdout_test(&samples, spec.config.test_fraction)?,
    };
    Ok(Data { taxonomy, pool, test })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn per_seed<T: Send>(spec: &RunSpec, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(spec.workers.max(1)).build()?;
    pool.install(|| spec.config.seeds.par_iter().map(|&s| f(s)).collect())
}

fn generation_teacher(cfg: &TeacherConfig, taxonomy: &Taxonomy, setup: &SeedSetup) -> Result<Box<dyn TeacherBackend>> {
    Ok(match (cfg.kind, &cfg.constant_response) {
        (TeacherKind::Http, _) => Box::new(HttpBackend::new(cfg.http.clone())?),
        (TeacherKind::Mock, Some(text)) => Box::new(ConstantBackend::new(text.clone())),
        (TeacherKind::Mock, None) => Box::new(oracle_teacher(taxonomy, setup, cfg.noise)?),
    })
}

const METRIC_HEADER: &str = "| Method | Accuracy | Macro-F1 | Weighted-F1 |\n|---|---|---|---|\n";

fn metric_row(out: &mut String, method: &str, s: &MetricSummary) {
    let _ = writeln!(out, "| {method} | {} | {} | {} |", s.accuracy, s.macro_f1, s.weighted_f1);
}

fn report_block(title: &str, report: &ClassificationReport, taxonomy: &Taxonomy) -> String {
    format!("{title}\n{}\n", render_report(report, taxonomy))
}

pub fn train_base(spec: &RunSpec) -> Result<String> {
    let data = load_data(spec)?;
    let cfg = &spec.config;
    let reports = per_seed(spec, |seed| {
        let setup = prepare_seed(&data.pool, cfg.seed_size, seed)?;
        let student = pgkd_core::student::StudentConfig { seed, ..cfg.student.clone() };
        let (model, _) = train(&setup.split.train, &setup.split.val, &data.taxonomy, &student)?;
        let val = evaluate(&model, &setup.split.val)?.report;
        let test = evaluate(&model, &data.test)?.report;
        let dir = spec.out.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        model.save(dir.join("model.bin"))?;
        let text = format!(
            "{}\n{}\n{}",
            spec.header("train-base"),
            report_block("validation", &val, &data.taxonomy),
            report_block("test", &test, &data.taxonomy)
        );
        write(&dir.join("report.txt"), text)?;
        Ok(test)
    })?;
    let mut table = format!("{}\n{METRIC_HEADER}", spec.header("train-base"));
    metric_row(&mut table, "student base", &MetricSummary::of(&reports));
    write(&spec.out.join("summary.md"), &table)?;
    Ok(table)
}

/// Label of the PGKD row, naming disabled prompt blocks.
fn pgkd_label(spec: &RunSpec) -> String {
    let p = &spec.config.pgkd;
    match (p.use_validation_report, p.use_hard_negatives) {
        (true, true) => "student + PGKD".into(),
        (false, true) => "student + PGKD w/o Validation".into(),
        (true, false) => "student + PGKD w/o Hard Negatives".into(),
        (false, false) => "student + PGKD w/o Validation, w/o Hard Negatives".into(),
    }
}

fn run_arms(spec: &RunSpec, data: &Data, seed_size: usize, dir: &Path) -> Result<Vec<SeedOutcome>> {
    let cfg = &spec.config;
    per_seed(spec, |seed| {
        let setup = prepare_seed(&data.pool, seed_size, seed)?;
        let mut teacher = generation_teacher(&cfg.teacher, &data.taxonomy, &setup)?;
        let out = run_seed(&data.taxonomy, &setup, &data.test, &cfg.student, &cfg.pgkd, teacher.as_mut())?;
        let seed_dir = dir.join(format!("seed-{seed}"));
        write(&seed_dir.join("manifest.json"), out.run.manifest.to_json())?;
        write(&seed_dir.join("metrics.tsv"), out.run.manifest.metrics_tsv())?;
        let prompts: String = out
            .run
            .prompts
            .iter()
            .map(|p| serde_json::to_string(p).expect("serializable") + "\n")
            .collect();
        write(&seed_dir.join("prompts.jsonl"), prompts)?;
        out.run.model.save(seed_dir.join("model.bin"))?;
        let text = format!(
            "{}\n{}\n{}",
            spec.header("pgkd"),
            report_block("base (test)", &out.base, &data.taxonomy),
            report_block("pgkd (test)", &out.pgkd, &data.taxonomy)
        );
        write(&seed_dir.join("report.txt"), text)?;
        if spec.timings {
            let timings = serde_json::to_string_pretty(&out.run.timings)? + "\n";
            write(&seed_dir.join("timings.json"), timings)?;
        }
        Ok(out)
    })
}

fn cost_rows(spec: &RunSpec, data: &Data, outcomes: &[SeedOutcome]) -> Vec<CostRow> {
    let pricing = spec.config.pricing.teacher();
    let measured = spec.timings.then(|| {
        let texts: Vec<String> = data.test.iter().take(INFERENCE_BATCH).map(|s| s.text.clone()).collect();
        BatchMeasurement {
            batch_size: texts.len(),
            latency_secs: measure_batch_latency(&outcomes[0].run.model, &texts, 5),
            hourly_rate: spec.config.pricing.student_hourly_rate,
        }
    });
    let mut rows = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let acct = estimate_cost_latency(&o.run.manifest, &pricing, measured.as_ref().filter(|_| i == 0));
        for mut row in acct.rows {
            if row.latency_secs.is_none() {
                row.method = format!("{} [seed {}]", row.method, o.seed);
            }
            rows.push(row);
        }
    }
    rows
}

pub fn pgkd(spec: &RunSpec) -> Result<String> {
    let data = load_data(spec)?;
    let outcomes = run_arms(spec, &data, spec.config.seed_size, &spec.out)?;
    let mut table = format!("{}\n{METRIC_HEADER}", spec.header("pgkd"));
    metric_row(&mut table, "student base", &MetricSummary::of(outcomes.iter().map(|o| &o.base)));
    metric_row(&mut table, &pgkd_label(spec), &MetricSummary::of(outcomes.iter().map(|o| &o.pgkd)));
    write(&spec.out.join("summary.md"), &table)?;
    let cost = format!("{}\n{}", spec.header("pgkd cost"), render_cost_table(&cost_rows(spec, &data, &outcomes)));
    write(&spec.out.join("cost.md"), &cost)?;
    Ok(table)
}

pub fn scaling_sweep(spec: &RunSpec, sizes: &[usize]) -> Result<String> {
    if sizes.is_empty() {
        bail!("--sizes needs at least one seed-set size");
    }
    let data = load_data(spec)?;
    let mut table = format!(
        "{}\n| Size | Method | Accuracy | Macro-F1 | Weighted-F1 |\n|---|---|---|---|---|\n",
        spec.header("scaling-sweep")
    );
    let label = pgkd_label(spec);
    for &size in sizes {
        let outcomes = run_arms(spec, &data, size, &spec.out.join(format!("size-{size}")))?;
        for (method, s) in [
            ("student base", MetricSummary::of(outcomes.iter().map(|o| &o.base))),
            (label.as_str(), MetricSummary::of(outcomes.iter().map(|o| &o.pgkd))),
        ] {
            let _ = writeln!(table, "| {size} | {method} | {} | {} | {} |", s.accuracy, s.macro_f1, s.weighted_f1);
        }
    }
    write(&spec.out.join("summary.md"), &table)?;
    Ok(table)
}

pub fn zero_shot(spec: &RunSpec) -> Result<String> {
    let data = load_data(spec)?;
    let cfg = &spec.config.teacher;
    let mut backend: Box<dyn TeacherBackend> = match (cfg.kind, &cfg.constant_response) {
        (TeacherKind::Http, _) => Box::new(HttpBackend::new(cfg.http.clone())?),
        (TeacherKind::Mock, Some(text)) => Box::new(ConstantBackend::new(text.clone())),
        (TeacherKind::Mock, None) => Box::new(LookupBackend::new(
            data.taxonomy.clone(),
            &data.test,
            cfg.noise,
            spec.config.seeds[0],
        )),
    };
    let texts: Vec<String> = data.test.iter().map(|s| s.text.clone()).collect();
    let started = std::time::Instant::now();
    let outcome = zero_shot_classify(backend.as_mut(), &data.taxonomy, &texts);
    let elapsed = started.elapsed().as_secs_f64();
    let pairs: Vec<_> = data
        .test
        .iter()
        .zip(&outcome.predictions)
        .filter_map(|(s, p)| p.map(|p| (s.label, p)))
        .collect();
    let report = ClassificationReport::from_pairs(data.taxonomy.len(), pairs);
    let text = format!(
        "{}\n{}\nfailures: {} of {} (excluded from metrics)\n",
        spec.header("zero-shot"),
        report_block("zero-shot (test)", &report, &data.taxonomy),
        outcome.failures,
        texts.len()
    );
    write(&spec.out.join("report.txt"), &text)?;
    let predictions: String = outcome
        .predictions
        .iter()
        .zip(&data.test)
        .map(|(p, s)| {
            serde_json::json!({"id": s.id, "label": s.label, "predicted": p}).to_string() + "\n"
        })
        .collect();
    write(&spec.out.join("predictions.jsonl"), predictions)?;

    // Cost per inference batch, scaled from the whole run.
    let n = texts.len().max(1) as f64;
    let per_batch = |v: u64| (v as f64 * INFERENCE_BATCH as f64 / n).round() as u64;
    let usage = TokenUsage {
        input_tokens: per_batch(outcome.usage.input_tokens),
        output_tokens: per_batch(outcome.usage.output_tokens),
    };
    let latency = spec.timings.then(|| elapsed * INFERENCE_BATCH as f64 / n);
    let row = zero_shot_row(usage, &spec.config.pricing.teacher(), INFERENCE_BATCH, latency);
    let cost = format!("{}\n{}", spec.header("zero-shot cost"), render_cost_table(&[row]));
    write(&spec.out.join("cost.md"), cost)?;
    Ok(text)
}

/// Re-renders a stored manifest and re-checks its best-model selection.
pub fn report(manifest_path: &Path) -> Result<String> {
    let text = fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let m = RunManifest::from_json(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;
    let mut out = String::new();
    let _ = writeln!(out, "# report | {}", manifest_path.display());
    out.push_str("| Step | Val loss | Accuracy | Macro-F1 | Weighted-F1 | Accepted | History | Patience |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for s in &m.steps {
        let _ = writeln!(
            out,
            "| {}{} | {:.4} | {:.3} | {:.3} | {:.3} | {} | {} | {} |",
            s.step,
            if s.step == m.best_step { " *" } else { "" },
            s.val_loss,
            s.report.accuracy,
            s.report.macro_f1,
            s.report.weighted_f1,
            s.accepted,
            s.history_size,
            s.patience_counter
        );
    }
    let _ = writeln!(
        out,
        "\nbest step {} (validation loss {:.6}){}",
        m.best_step,
        m.best_val_loss,
        if m.stopped_early { ", stopped early" } else { "" }
    );
    let _ = writeln!(out, "teacher tokens: {} in, {} out", m.total_usage.input_tokens, m.total_usage.output_tokens);
    out.push('\n');
    out.push_str(&report_block("validation (best model)", &m.final_report, &m.taxonomy));
    if let Some(test) = &m.test_report {
        out.push('\n');
        out.push_str(&report_block("test (best model)", test, &m.taxonomy));
    }
    match m.verify() {
        Ok(()) => out.push_str("\nmanifest check: ok\n"),
        Err(e) => {
            let _ = writeln!(out, "\nmanifest check: FAILED ({e})");
        }
    }
    Ok(out)
}
