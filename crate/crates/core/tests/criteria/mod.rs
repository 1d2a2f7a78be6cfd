//! One check per acceptance criterion. Each returns a short summary on
//! success and a reason on failure.

use std::fs;

use pgkd_core::corpus::LabeledSample;
use pgkd_core::cost::{estimate_cost_latency, render_cost_table, BatchMeasurement, Pricing};
use pgkd_core::distill::{run_pgkd, PgkdConfig};
use pgkd_core::evaluation::{render_report, ClassificationReport};
use pgkd_core::experiment::{oracle_teacher, prepare_seed, run_seed, MeanStd};
use pgkd_core::student::{loss, objective_gradient, FeaturizerConfig, StudentConfig, StudentModel};
use pgkd_core::synthetic::{SyntheticConfig, SyntheticCorpus};
use pgkd_core::teacher::{
    build_pgkd_prompt, build_zero_shot_prompt, extract_payload, parse_generation, Completion, MockOracleBackend,
    ParseContext, PromptContext, ScriptedBackend, TeacherError, TokenUsage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::*;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e7c);
    let mut worst: f64 = 0.0;
    let mut zero_support_cases = 0;
    for case in 0..100 {
        let (k, pairs) = random_pairs(&mut rng, case);
        let report = ClassificationReport::from_pairs(k, pairs.iter().copied());
        let oracle = brute_force_report(k, &pairs);
        let gap = report_gap(&report, &oracle).ok_or_else(|| format!("case {case}: supports or shape differ"))?;
        ensure(gap <= 1e-9, || format!("case {case}: deviation {gap:e}"))?;
        worst = worst.max(gap);
        if oracle.per_class.iter().any(|m| m.3 == 0) {
            zero_support_cases += 1;
        }
    }
    ensure(zero_support_cases > 0, || "no case had a zero-support class".into())?;
    Ok(format!("100 cases, {zero_support_cases} with zero-support classes, max deviation {worst:.1e}"))
}

pub fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x96ad);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let k = rng.random_range(2..=5);
        let dimension = 1usize << rng.random_range(1..=6);
        let taxonomy = pgkd_core::corpus::Taxonomy::new((0..k).map(|c| format!("c{c}"))).unwrap();
        let orders = if rng.random_bool(0.5) { vec![1] } else { vec![1, 2] };
        let featurizer = FeaturizerConfig { ngram_orders: orders, dimension, hash_seed: case, max_tokens: 512 };
        let weights: Vec<f64> = (0..k * dimension).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = rng.random_range(3..=10);
        let samples: Vec<LabeledSample> = (0..n)
            .map(|i| {
                let len = rng.random_range(2..8);
                LabeledSample::seed(i as u64, random_words(&mut rng, 12, len), rng.random_range(0..k))
            })
            .collect();
        let model = StudentModel::from_parts(taxonomy.clone(), featurizer.clone(), weights.clone(), bias.clone()).unwrap();
        let g = objective_gradient(&model, &samples).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = g.weights.iter().chain(&g.bias).copied().collect();
        let params: Vec<f64> = weights.iter().chain(&bias).copied().collect();
        let numeric = central_differences(&params, 1e-5, |p| {
            let (w, b) = p.split_at(k * dimension);
            let m = StudentModel::from_parts(taxonomy.clone(), featurizer.clone(), w.to_vec(), b.to_vec()).unwrap();
            loss(&m, &samples).unwrap()
        });
        let err = relative_error(&analytic, &numeric);
        ensure(err < 1e-4, || format!("instance {case} (k={k}, d={dimension}): relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("20 instances, max relative error {worst:.1e}"))
}

pub fn return_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa161);
    let configs = 24;
    let mut fired = 0;
    let mut steps_total = 0;
    for case in 0..configs {
        let classes = rng.random_range(3..=6);
        let seed_size = rng.random_range(60..=160);
        let fx = loop_fixture(classes, seed_size, case);
        let config = PgkdConfig {
            num_kd_steps: rng.random_range(1..=6),
            patience_limit: rng.random_range(0..=2),
            gen_batch_size: rng.random_range(8..=32),
            use_validation_report: rng.random_bool(0.7),
            use_hard_negatives: rng.random_bool(0.7),
            seed: case,
            ..Default::default()
        };
        let noise = [0.0, 0.3, 0.7, 1.0][rng.random_range(0..4)];
        let mut teacher = MockOracleBackend::new(fx.taxonomy.clone(), &fx.reserve, noise, case).unwrap();
        let run = run_pgkd(&fx.split, &fx.taxonomy, &small_student(case), &mut teacher, &config)
            .map_err(|e| format!("config {case}: {e}"))?;
        let m = &run.manifest;
        let losses: Vec<f64> = m.steps.iter().map(|s| s.val_loss).collect();
        steps_total += losses.len();
        let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let returned = loss(&run.model, &fx.split.val).unwrap();
        ensure(returned.to_bits() == min.to_bits(), || format!("config {case}: returned loss {returned} vs minimum {min}"))?;
        ensure(m.best_val_loss.to_bits() == min.to_bits(), || format!("config {case}: recorded best {} vs minimum {min}", m.best_val_loss))?;

        let (replayed, stop_at, best_at) = replay_patience(&losses, config.patience_limit);
        ensure(m.best_step as usize == best_at, || format!("config {case}: best step {} vs {best_at}", m.best_step))?;
        for (s, (improved, counter)) in m.steps[1..].iter().zip(&replayed) {
            ensure(s.improved == *improved && s.patience_counter == *counter, || {
                format!("config {case}: step {} bookkeeping differs from replay", s.step)
            })?;
        }
        match stop_at {
            Some(i) => {
                fired += 1;
                ensure(m.stopped_early && i == losses.len() - 1, || format!("config {case}: should stop at step {i}"))?;
                let window = &replayed[replayed.len() - (config.patience_limit + 1)..];
                ensure(window.iter().all(|(imp, _)| !imp), || format!("config {case}: stop without limit+1 regressions"))?;
            }
            None => ensure(!m.stopped_early && losses.len() == config.num_kd_steps as usize + 1, || {
                format!("config {case}: ran {} steps without the stopping rule firing", losses.len())
            })?,
        }
        m.verify().map_err(|e| format!("config {case}: manifest check failed: {e}"))?;
        let leaked = leaked_texts(&run.prompts, &fx.split.val);
        ensure(leaked.is_empty(), || format!("config {case}: {} validation texts in prompts", leaked.len()))?;
    }
    ensure(fired > 0, || "patience never fired in any config".into())?;
    Ok(format!("{configs} configs, {steps_total} evaluated steps, early stop fired in {fired}"))
}

fn golden(name: &str, actual: &str) -> Result<(), String> {
    let path = fixture_dir().join("golden").join(name);
    if std::env::var_os("PGKD_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure(expected == actual, || format!("{name} differs from the built prompt"))
}

pub fn prompt_fidelity() -> Outcome {
    let taxonomy = news_taxonomy();
    let report = render_report(&ClassificationReport::from_pairs(4, golden_report_pairs()), &taxonomy);
    let ctx = golden_context(&report);
    let build = |c: &PromptContext| build_pgkd_prompt(c).map_err(|e| e.to_string());
    let full = build(&ctx)?;
    let no_report = build(&PromptContext { report_text: None, ..ctx.clone() })?;
    let no_hard = build(&PromptContext { hard_negatives: None, ..ctx.clone() })?;
    let zero = build_zero_shot_prompt(&taxonomy, "Stocks rally as inflation cools").map_err(|e| e.to_string())?;

    golden("pgkd_prompt.txt", &full)?;
    golden("pgkd_prompt_no_validation.txt", &no_report)?;
    golden("pgkd_prompt_no_hard_negatives.txt", &no_hard)?;
    golden("zero_shot_prompt.txt", &zero)?;
    ensure(full.contains("You are a Teacher model for a Student LM"), || "teacher scaffolding missing".into())?;
    ensure(zero.contains("You are an AI assistant"), || "zero-shot scaffolding missing".into())?;

    let report_block = format!(
        ", generate new samples knowing that the classification report over validation set is:\n{}",
        report.trim_end()
    );
    ensure(single_deletions(&full, &no_report).contains(&report_block), || {
        "dropping the report removed something other than the report block".into()
    })?;
    let hard_block = "The model has a high confidence in classifying the following misclassified examples:\n\
{\"text\":\"Stadium \\\"naming rights\\\" sold to bank\",\"label\":\"Sports\",\"predicted_label\":\"Business\"}\n";
    ensure(single_deletions(&full, &no_hard).contains(&hard_block.to_string()), || {
        "dropping hard negatives removed something other than the hard-negative block".into()
    })?;
    Ok("4 golden prompts match; each ablation deletes exactly its block".into())
}

pub fn privacy() -> Outcome {
    let mut fx = loop_fixture(5, 200, 77);
    let val = fx.split.val.clone();
    // Seed texts and teacher reserve texts that embed validation texts.
    for (i, s) in fx.split.train.iter_mut().take(12).enumerate() {
        s.text = format!("{} {}", val[i % val.len()].text, s.text);
    }
    for (i, s) in fx.reserve.iter_mut().step_by(5).take(40).enumerate() {
        s.text = format!("{} {}", s.text, val[(i + 3) % val.len()].text);
    }
    let mut prompts = Vec::new();
    for (case, (report, hard)) in [(true, true), (false, true), (true, false)].into_iter().enumerate() {
        let config = PgkdConfig {
            num_kd_steps: 5,
            patience_limit: 10,
            use_validation_report: report,
            use_hard_negatives: hard,
            seed: case as u64,
            ..Default::default()
        };
        let mut teacher = MockOracleBackend::new(fx.taxonomy.clone(), &fx.reserve, 0.2, 3).unwrap();
        let run = run_pgkd(&fx.split, &fx.taxonomy, &small_student(1), &mut teacher, &config).map_err(|e| e.to_string())?;
        let tainted = run.history.iter().filter(|s| val.iter().any(|v| s.text.contains(&v.text))).count();
        ensure(tainted > 12, || "no generated sample embedded a validation text".into())?;
        prompts.extend(run.prompts);
    }
    let leaked = leaked_texts(&prompts, &val);
    ensure(leaked.is_empty(), || format!("{} validation texts leaked, first {:?}", leaked.len(), leaked[0]))?;
    Ok(format!("{} prompts scanned against {} validation texts, none leaked", prompts.len(), val.len()))
}

pub fn parser_robustness() -> Outcome {
    let taxonomy = news_taxonomy();
    let known = fuzz_known_texts();
    let corpus = fuzz_corpus();
    let mut accepted = 0;
    let mut rejected = 0;
    for case in &corpus {
        let ctx = ParseContext { taxonomy: &taxonomy, step: 1, known_texts: &known, first_id: 0 };
        let result = std::panic::catch_unwind(|| parse_generation(&case.raw, &ctx))
            .map_err(|_| format!("{}: parser panicked", case.name))?;
        let Some(embedded) = &case.embedded else {
            ensure(matches!(result, Err(TeacherError::UnparsableResponse)), || format!("{}: expected no payload", case.name))?;
            continue;
        };
        let batch = result.map_err(|e| format!("{}: {e}", case.name))?;
        let expected: Vec<_> = embedded.iter().map(Rec::expected).collect();
        let want_ok: Vec<(String, &str)> = expected.iter().filter_map(|e| e.clone().ok()).collect();
        let want_err: Vec<&str> = expected.iter().filter_map(|e| e.clone().err()).collect();
        let got_ok: Vec<(String, &str)> =
            batch.accepted.iter().map(|s| (s.text.clone(), taxonomy.name(s.label).unwrap())).collect();
        let got_err: Vec<&str> = batch.rejected.iter().map(|r| r.reason.kind()).collect();
        ensure(got_ok == want_ok, || format!("{}: accepted {got_ok:?}, expected {want_ok:?}", case.name))?;
        ensure(got_err == want_err, || format!("{}: rejected {got_err:?}, expected {want_err:?}", case.name))?;

        let payload = extract_payload(&case.raw).ok_or_else(|| format!("{}: no payload extracted", case.name))?;
        let strict = strict_reference(&payload, &taxonomy, &known);
        let strict_ok: Vec<(String, &str)> =
            strict.iter().filter_map(|r| r.clone().ok()).map(|(t, l)| (t, taxonomy.name(l).unwrap())).collect();
        let strict_err: Vec<&str> = strict.iter().filter_map(|r| r.clone().err()).collect();
        ensure(strict_ok == got_ok && strict_err == got_err, || format!("{}: differs from the strict reference", case.name))?;
        accepted += got_ok.len();
        rejected += got_err.len();
    }
    ensure(corpus.len() == 50, || format!("corpus has {} cases", corpus.len()))?;
    Ok(format!("50 cases, no panics, {accepted} accepted and {rejected} rejected as expected"))
}

/// Mean accuracies (base, pgkd) over five seeds at one seed-set size.
fn trend_arm(corpus: &SyntheticCorpus, pool: &[LabeledSample], test: &[LabeledSample], size: usize) -> Result<(MeanStd, MeanStd), String> {
    let results: Vec<Result<(f64, f64), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..5u64)
            .map(|seed| {
                scope.spawn(move || {
                    let setup = prepare_seed(pool, size, seed).map_err(|e| e.to_string())?;
                    let mut teacher = oracle_teacher(&corpus.taxonomy, &setup, 0.0).map_err(|e| e.to_string())?;
                    let out = run_seed(&corpus.taxonomy, &setup, test, &StudentConfig::default(), &PgkdConfig::default(), &mut teacher)
                        .map_err(|e| e.to_string())?;
                    let leaked = leaked_texts(&out.run.prompts, &setup.split.val);
                    ensure(leaked.is_empty(), || format!("size {size} seed {seed}: validation text leaked"))?;
                    Ok((out.base.accuracy, out.pgkd.accuracy))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let pairs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let base: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let pgkd: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((MeanStd::of(&base), MeanStd::of(&pgkd)))
}

pub fn trend() -> Outcome {
    let corpus = SyntheticCorpus::new(SyntheticConfig::default()).unwrap();
    let all = corpus.generate(16_000, 0);
    let (test, pool) = all.split_at(2000);
    let (b_small, p_small) = trend_arm(&corpus, pool, test, 200)?;
    let (b_large, p_large) = trend_arm(&corpus, pool, test, 2000)?;
    let gap_small = p_small.mean - b_small.mean;
    let gap_large = p_large.mean - b_large.mean;
    let summary = format!(
        "size 200: base {b_small}, +PGKD {p_small} (gap {gap_small:+.3}); size 2000: base {b_large}, +PGKD {p_large} (gap {gap_large:+.3})"
    );
    ensure(gap_small >= 0.0 && gap_large >= 0.0, || format!("PGKD below base: {summary}"))?;
    ensure(gap_small > 0.0, || format!("no gain at size 200: {summary}"))?;
    ensure(gap_small > gap_large, || format!("gap does not narrow: {summary}"))?;
    Ok(summary)
}

pub fn determinism() -> Outcome {
    let fx = loop_fixture(6, 300, 11);
    let run = || {
        let mut teacher = MockOracleBackend::new(fx.taxonomy.clone(), &fx.reserve, 0.1, 5).unwrap();
        run_pgkd(&fx.split, &fx.taxonomy, &small_student(5), &mut teacher, &PgkdConfig { seed: 5, ..Default::default() })
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    let (ja, jb) = (a.manifest.to_json(), b.manifest.to_json());
    ensure(ja == jb, || "manifests differ between identical runs".into())?;
    ensure(a.prompts == b.prompts, || "prompts differ between identical runs".into())?;
    ensure(leaked_texts(&a.prompts, &fx.split.val).is_empty(), || "validation text leaked".into())?;
    Ok(format!("two runs of {} steps, manifests byte-identical ({} bytes)", a.manifest.steps.len(), ja.len()))
}

pub fn cost_accounting() -> Outcome {
    let fx = loop_fixture(3, 60, 2);
    let reply = |input, output| Ok(Completion { text: "[]".into(), usage: Some(TokenUsage { input_tokens: input, output_tokens: output }) });
    let mut teacher = ScriptedBackend::new([reply(6_000, 500), reply(4_000, 1_500)]);
    let config = PgkdConfig { num_kd_steps: 2, patience_limit: 5, ..Default::default() };
    let run = run_pgkd(&fx.split, &fx.taxonomy, &small_student(0), &mut teacher, &config).map_err(|e| e.to_string())?;
    ensure(leaked_texts(&teacher.prompts, &fx.split.val).is_empty(), || "validation text leaked".into())?;
    let pricing = Pricing { input_per_1k: 3.0, output_per_1k: 15.0 };
    let measured = BatchMeasurement { batch_size: 64, latency_secs: 0.5, hourly_rate: 0.72 };
    let acct = estimate_cost_latency(&run.manifest, &pricing, Some(&measured));
    ensure(acct.teacher_usage == TokenUsage { input_tokens: 10_000, output_tokens: 2_000 }, || format!("usage {:?}", acct.teacher_usage))?;
    // 10,000 * 3 / 1000 + 2,000 * 15 / 1000
    ensure(acct.teacher_cost == 60.0, || format!("teacher cost {} instead of 60", acct.teacher_cost))?;

    let mut doubled = run.manifest.clone();
    for s in &mut doubled.steps {
        s.usage = TokenUsage { input_tokens: 2 * s.usage.input_tokens, output_tokens: 2 * s.usage.output_tokens };
    }
    let twice = estimate_cost_latency(&doubled, &pricing, None).teacher_cost;
    ensure(twice == 2.0 * acct.teacher_cost, || format!("doubling tokens gave {twice}"))?;
    let mut empty = run.manifest.clone();
    for s in &mut empty.steps {
        s.usage = TokenUsage::default();
    }
    ensure(estimate_cost_latency(&empty, &pricing, None).teacher_cost == 0.0, || "zero tokens cost money".into())?;
    // 0.5 s at $0.72 per hour
    let student = acct.rows.iter().find(|r| r.latency_secs.is_some()).ok_or("no student row")?;
    ensure((student.cost - 0.0001).abs() < 1e-15, || format!("student batch cost {}", student.cost))?;

    let table = render_cost_table(&acct.rows);
    let lines: Vec<&str> = table.lines().collect();
    ensure(lines[0] == "| Method | Batch | Latency (s) | Cost ($) |", || format!("header {:?}", lines[0]))?;
    for line in &lines {
        let cells = line.trim_matches('|').split('|').count();
        ensure(cells == 4, || format!("row {line:?} has {cells} cells"))?;
    }
    ensure(lines.len() == 2 + acct.rows.len() && table.contains("| 60.0000 |"), || format!("table:\n{table}"))?;
    Ok("teacher cost 60.00 from 10k/2k tokens at 3/15 per 1k; linear; 4-column table".into())
}
