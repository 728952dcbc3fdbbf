use std::fs;
use std::path::{Path, PathBuf};

use satirekit::corpus::save_corpus;
use satirekit::experiment::{compare_runs, explain_run, run_dir, run_experiment, ExperimentConfig, Representation, RunReport, RunStatus};
use satirekit::formats::{load_model, save_dense, StoredModel};
use satirekit::learner::LambdaGrid;
use satirekit::matrix::DenseMatrix;
use satirekit::synth::{generate_planted, generate_synthetic, SynthSpec, PLANTED_TOKEN};
use satirekit::Error;

fn planted_config(dir: &Path) -> ExperimentConfig {
    let corpus = dir.join("planted.jsonl");
    save_corpus(&generate_planted(40, PLANTED_TOKEN, 5).unwrap(), &corpus).unwrap();
    ExperimentConfig {
        corpus,
        ngram_grid: vec![3, 4, 5],
        output_dir: dir.join("out"),
        ..Default::default()
    }
}

fn report_dir(report: &RunReport, cfg: &ExperimentConfig) -> PathBuf {
    run_dir(&cfg.output_dir, &report.config_hash)
}

#[test]
fn planted_token_is_learned_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    for rep in [Representation::Pbsk, Representation::Hisk] {
        let cfg = ExperimentConfig {
            representation: rep,
            ..planted_config(dir.path())
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.status, RunStatus::Ok);
        assert_eq!(r.test_accuracy, Some(1.0), "{rep:?}");
        assert_eq!(r.sizes.train, 20);
        assert_eq!(r.ngram_curve.len(), 3);
        assert_eq!(r.lambda_curve.len(), 7);
        let out = report_dir(&r, &cfg);
        for f in ["report.json", "predictions.tsv", "model.bin", "curves/ngram.tsv", "curves/lambda.tsv"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let preds = fs::read_to_string(out.join("predictions.tsv")).unwrap();
        assert_eq!(preds.lines().count(), 21);
        assert!(matches!(load_model(out.join("model.bin")).unwrap(), StoredModel::Dual(m) if m.n == r.chosen_n.unwrap()));
        assert!(!cfg.output_dir.join(".lock").exists());
    }
}

#[test]
fn reruns_are_deterministic_and_use_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        domain_adapt: true,
        ..planted_config(dir.path())
    };
    let first = run_experiment(&cfg).unwrap();
    let cache: Vec<_> = fs::read_dir(cfg.output_dir.join("cache")).unwrap().collect();
    assert!(!cache.is_empty());
    assert!(first.runtime.cache_misses > 0);
    let model_a = fs::read(report_dir(&first, &cfg).join("model.bin")).unwrap();
    let preds_a = fs::read(report_dir(&first, &cfg).join("predictions.tsv")).unwrap();

    let second = run_experiment(&cfg).unwrap();
    assert_eq!(second.runtime.cache_misses, 0);
    assert!(second.runtime.cache_hits > 0);
    assert_eq!(first.reproducible(), second.reproducible());
    assert_eq!(model_a, fs::read(report_dir(&second, &cfg).join("model.bin")).unwrap());
    assert_eq!(preds_a, fs::read(report_dir(&second, &cfg).join("predictions.tsv")).unwrap());

    // cold cache, different worker count: same bytes
    let cold = ExperimentConfig {
        output_dir: dir.path().join("cold"),
        workers: Some(1),
        ..cfg.clone()
    };
    let third = run_experiment(&cold).unwrap();
    assert_eq!(third.config_hash, first.config_hash);
    assert_eq!(third.runtime.cache_misses, first.runtime.cache_misses);
    assert_eq!(first.reproducible().test, third.reproducible().test);
    assert_eq!(model_a, fs::read(report_dir(&third, &cold).join("model.bin")).unwrap());
}

#[test]
fn compare_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path());
    let r = run_experiment(&cfg).unwrap();
    let copy = RunReport::load(report_dir(&r, &cfg)).unwrap();
    let cmp = compare_runs(&r, &copy, true).unwrap();
    assert_eq!(cmp.mcnemar.statistic, 0.0);
    assert!(!cmp.mcnemar.significant);
    assert!(cmp.table.contains("100.00"));

    let mut other = copy.clone();
    other.test.as_mut().unwrap().predictions.pop();
    assert!(matches!(compare_runs(&r, &other, true), Err(Error::Argument(_))));
}

#[test]
fn baseline_report_is_compared() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path());
    let base = run_experiment(&cfg).unwrap();
    let cfg2 = ExperimentConfig {
        representation: Representation::Hisk,
        baseline: Some(report_dir(&base, &cfg).join("report.json")),
        ..cfg
    };
    let r = run_experiment(&cfg2).unwrap();
    let c = r.comparison.unwrap();
    assert_eq!(c.baseline, "PBSK");
    assert_eq!((c.mcnemar.n01, c.mcnemar.n10), (0, 0));
}

#[test]
fn adaptation_records_both_stages() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        train_per_class: 30,
        valid_per_class: 15,
        test_per_class: 15,
        ..SynthSpec::default()
    };
    let corpus = dir.path().join("synth.jsonl");
    save_corpus(&generate_synthetic(&spec).unwrap(), &corpus).unwrap();
    let cfg = ExperimentConfig {
        corpus,
        ngram_grid: vec![4, 5],
        domain_adapt: true,
        output_dir: dir.path().join("out"),
        ..Default::default()
    };
    let r = run_experiment(&cfg).unwrap();
    let base = r.baseline.as_ref().unwrap();
    assert!(base.test_accuracy.is_some());
    assert_eq!(base.lambda_curve.len(), 7);
    let m = r.adaptation_vs_baseline.as_ref().unwrap();
    assert!(m.continuity_correction);
    assert_eq!(r.sizes.targets, 30);
    let out = report_dir(&r, &cfg);
    assert!(out.join("baseline_model.bin").exists());
    assert!(out.join("curves/baseline_lambda.tsv").exists());
    assert!(r.notes.iter().any(|n| n.contains("validation split")));
}

#[test]
fn external_target_set() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = planted_config(dir.path());
    let target = dir.path().join("target.jsonl");
    fs::write(
        &target,
        "{\"id\":\"t1\",\"title\":\"un titre\",\"body\":\"un corps zyzzyxa\"}\n{\"id\":\"t2\",\"title\":\"autre\"}\n",
    )
    .unwrap();
    cfg.domain_adapt = true;
    cfg.target = Some(target);
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.sizes.targets, 2);
    assert_eq!(r.status, RunStatus::Ok);
}

fn dense_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = generate_planted(40, PLANTED_TOKEN, 9).unwrap();
    let corpus_path = dir.join("c.jsonl");
    save_corpus(&corpus, &corpus_path).unwrap();
    // one informative coordinate plus deterministic noise
    let ids: Vec<String> = corpus.articles.iter().map(|a| a.id.clone()).collect();
    let rows = corpus
        .articles
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let s = if a.label == corpus.class_positive { 1.0 } else { -1.0 };
            vec![s + 0.1 * ((i * 7 % 5) as f64 - 2.0), ((i * 13 % 11) as f64) / 11.0, 0.5]
        })
        .collect();
    let dense = dir.join("x.fsdm");
    save_dense(&DenseMatrix::from_rows(ids, rows).unwrap(), &dense).unwrap();
    (corpus_path, dense)
}

#[test]
fn dense_representation() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, dense) = dense_fixture(dir.path());
    for da in [false, true] {
        let cfg = ExperimentConfig {
            corpus: corpus.clone(),
            representation: Representation::Dense,
            dense_features: Some(dense.clone()),
            domain_adapt: da,
            output_dir: dir.path().join("out"),
            ..Default::default()
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.test_accuracy, Some(1.0));
        assert_eq!(r.sizes.feature_dim, Some(if da { 3 + 10 } else { 3 }));
        assert!(r.chosen_n.is_none());
        assert!(r.ngram_curve.is_empty());
        let out = report_dir(&r, &cfg);
        assert!(matches!(load_model(out.join("model.bin")).unwrap(), StoredModel::Primal(_)));
        assert_eq!(fs::read_to_string(out.join("curves/ngram.tsv")).unwrap(), "n\taccuracy\n");
    }
}

#[test]
fn dense_features_must_cover_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = dense_fixture(dir.path());
    let partial = dir.path().join("partial.fsdm");
    save_dense(&DenseMatrix::from_rows(vec!["nope".into()], vec![vec![1.0]]).unwrap(), &partial).unwrap();
    let cfg = ExperimentConfig {
        corpus,
        representation: Representation::Dense,
        dense_features: Some(partial),
        output_dir: dir.path().join("out"),
        ..Default::default()
    };
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    // the failure is still reported
    let runs = cfg.output_dir.join("runs");
    let run = fs::read_dir(&runs).unwrap().next().unwrap().unwrap().path();
    let report = RunReport::load(&run).unwrap();
    assert_eq!(report.status, RunStatus::Failed);
    assert!(report.error.is_some());
}

#[test]
fn custom_lambda_grid_ties_prefer_larger_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        lambda_grid: LambdaGrid::new(vec![1e-1, 1e-2]).unwrap(),
        ..planted_config(dir.path())
    };
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.lambda_curve.len(), 2);
    assert_eq!(r.chosen_lambda, Some(1e-1));
}

#[test]
fn empty_split_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = generate_planted(40, PLANTED_TOKEN, 5).unwrap();
    corpus.articles.retain(|a| a.split != satirekit::corpus::Split::Test);
    let path = dir.path().join("c.jsonl");
    save_corpus(&corpus, &path).unwrap();
    let cfg = ExperimentConfig {
        corpus: path,
        output_dir: dir.path().join("out"),
        ..Default::default()
    };
    assert!(matches!(run_experiment(&cfg), Err(Error::Validation(_))));
}

#[test]
fn locked_output_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path());
    fs::create_dir_all(&cfg.output_dir).unwrap();
    fs::write(cfg.output_dir.join(".lock"), "1").unwrap();
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}

#[test]
fn config_file_paths_are_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, "corpus = \"data/c.jsonl\"\noutput_dir = \"out\"\nngram_grid = [3]\n").unwrap();
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    assert_eq!(cfg.corpus, dir.path().join("data/c.jsonl"));
    assert_eq!(cfg.output_dir, dir.path().join("out"));
}

#[test]
fn explain_finds_the_planted_token() {
    let dir = tempfile::tempdir().unwrap();
    for da in [false, true] {
        let cfg = ExperimentConfig {
            domain_adapt: da,
            ..planted_config(dir.path())
        };
        let r = run_experiment(&cfg).unwrap();
        let ranked = explain_run(report_dir(&r, &cfg)).unwrap();
        let top: Vec<_> = satirekit::explain::top_k(&ranked, 10)
            .into_iter()
            .filter(|f| f.class == satirekit::corpus::Label::Satirical)
            .collect();
        assert_eq!(top.len(), 10);
        assert!(top.iter().any(|f| f.feature.contains("zyz")), "{top:?}");
    }
}

#[test]
fn explain_detects_a_changed_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted_config(dir.path());
    let r = run_experiment(&cfg).unwrap();
    save_corpus(&generate_planted(40, PLANTED_TOKEN, 6).unwrap(), &cfg.corpus).unwrap();
    assert!(matches!(explain_run(report_dir(&r, &cfg)), Err(Error::Validation(_))));
}

fn in_source_and_cross_source(confounder_strength: f64) -> (f64, f64) {
    use satirekit::corpus::{document_text, Split, TextMode};
    use satirekit::learner::predict_krr;
    use satirekit::ngram::{gram_block, ProfileSet, StringKernel};
    use satirekit::synth::generate_in_source_holdout;

    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        confounder_strength,
        class_rate: 0.15,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let path = dir.path().join("c.jsonl");
    save_corpus(&corpus, &path).unwrap();
    let cfg = ExperimentConfig {
        corpus: path,
        ngram_grid: vec![4, 5, 6],
        output_dir: dir.path().join("out"),
        ..Default::default()
    };
    let r = run_experiment(&cfg).unwrap();
    let model = match load_model(report_dir(&r, &cfg).join("model.bin")).unwrap() {
        StoredModel::Dual(m) => m,
        StoredModel::Primal(_) => unreachable!(),
    };
    let profiles = |arts: &[&satirekit::corpus::Article]| {
        let texts: Vec<String> = arts.iter().map(|a| document_text(a, TextMode::Full)).collect();
        ProfileSet::from_texts(arts.iter().map(|a| a.id.clone()).collect(), &texts, model.n).unwrap()
    };
    let train: Vec<_> = corpus.split(Split::Train).collect();
    let holdout = generate_in_source_holdout(&spec, 50).unwrap();
    let held: Vec<_> = holdout.iter().collect();
    let k = gram_block(&profiles(&held), &profiles(&train), StringKernel::new(model.kind).unwrap()).unwrap();
    let pred = predict_krr(&model, &k).unwrap();
    let correct = held
        .iter()
        .zip(&pred.labels)
        .filter(|(a, &p)| (a.label == corpus.class_positive) == (p > 0))
        .count();
    (correct as f64 / held.len() as f64, r.test_accuracy.unwrap())
}

#[test]
fn confounder_controls_the_domain_gap() {
    let (in_source, cross) = in_source_and_cross_source(0.0);
    assert!((in_source - cross).abs() <= 0.08, "{in_source} vs {cross}");
    let (in_source, cross) = in_source_and_cross_source(1.0);
    assert!(in_source - cross >= 0.15, "{in_source} vs {cross}");
}
