//! End-to-end experiments: tuning, training, evaluation and artifacts.
//!
//! String-kernel runs tune the n-gram length first (at a fixed λ), then λ at
//! the chosen length. With domain adaptation on, λ is tuned again on the
//! augmented representation and the adapted model is compared against the
//! non-adapted one with McNemar's test on the test split.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! .lock                         held while a run is active
//! cache/<key>.fskm              kernel blocks, keyed by corpus and kernel
//! runs/<config-hash>/report.json
//! runs/<config-hash>/predictions.tsv
//! runs/<config-hash>/model.bin  (+ baseline_model.bin with adaptation)
//! runs/<config-hash>/curves/*.tsv
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{document_text_with, load_corpus, load_unlabeled, Label, LabeledCorpus, Split, TextMode, TextOptions};
use crate::domain_adapt::{augment_features_scaled, augment_gram_scaled, similarity_block, SimilarityBlock};
use crate::error::{Error, Result};
use crate::eval::{evaluate, mcnemar_with, render_table, EvalReport, McNemarResult, TableRow};
use crate::explain::{primal_ngram_weights, RankedFeature};
use crate::formats::{load_dense, load_kernel, load_model, save_kernel, save_model, StoredModel};
use crate::learner::{fit_krr, fit_rr, predict_krr, predict_rr, tune_lambda, CurvePoint, DualModel, LambdaGrid, Prediction, PrimalModel, Tuned};
use crate::matrix::{DenseMatrix, KernelMatrix};
use crate::ngram::{gram_block, normalize_gram, KernelKind, PresenceRule, ProfileSet, StringKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    #[default]
    Pbsk,
    Hisk,
    /// Precomputed dense document vectors (FSDM file).
    Dense,
}

impl Representation {
    pub fn kernel_kind(self) -> Option<KernelKind> {
        match self {
            Representation::Pbsk => Some(KernelKind::Pbsk),
            Representation::Hisk => Some(KernelKind::Hisk),
            Representation::Dense => None,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Representation::Pbsk => "PBSK",
            Representation::Hisk => "HISK",
            Representation::Dense => "Dense",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pbsk" => Ok(Representation::Pbsk),
            "hisk" => Ok(Representation::Hisk),
            "dense" => Ok(Representation::Dense),
            other => Err(Error::Config(format!(
                "unknown representation {other:?} (expected pbsk, hisk or dense)"
            ))),
        }
    }
}

pub const DEFAULT_NGRAM_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub task: TextMode,
    pub representation: Representation,
    /// Empty means 4..=8 for full articles and 2..=8 for headlines.
    pub ngram_grid: Vec<usize>,
    pub lambda_grid: LambdaGrid,
    /// λ used while sweeping the n-gram length.
    pub ngram_lambda: f64,
    pub domain_adapt: bool,
    /// Unlabeled target documents; the validation split when unset.
    /// JSON lines for string kernels, an FSDM file for dense features.
    pub target: Option<PathBuf>,
    /// Multiplier on the appended similarity block.
    pub da_scale: f64,
    /// Cosine-normalize kernel blocks.
    pub normalize: bool,
    pub presence: PresenceRule,
    pub lowercase: bool,
    pub strip_accents: bool,
    pub class_positive: Label,
    pub dense_features: Option<PathBuf>,
    /// Report of a run to compare against.
    pub baseline: Option<PathBuf>,
    pub continuity_correction: bool,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
    pub seed: u64,
    pub name: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: PathBuf::new(),
            task: TextMode::Full,
            representation: Representation::Pbsk,
            ngram_grid: Vec::new(),
            lambda_grid: LambdaGrid::default(),
            ngram_lambda: DEFAULT_NGRAM_LAMBDA,
            domain_adapt: false,
            target: None,
            da_scale: 1.0,
            normalize: false,
            presence: PresenceRule::default(),
            lowercase: false,
            strip_accents: false,
            class_positive: Label::Satirical,
            dense_features: None,
            baseline: None,
            continuity_correction: true,
            output_dir: PathBuf::from("runs"),
            workers: None,
            seed: 0,
            name: None,
        }
    }
}

pub fn default_ngram_grid(task: TextMode) -> Vec<usize> {
    match task {
        TextMode::Full => (4..=8).collect(),
        TextMode::Headline => (2..=8).collect(),
    }
}

impl ExperimentConfig {
    /// Parses a TOML (`key = value`) config file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative paths in a config file are relative to the file
        if let Some(base) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut cfg.corpus);
            fix(&mut cfg.output_dir);
            for p in [&mut cfg.target, &mut cfg.dense_features, &mut cfg.baseline].into_iter().flatten() {
                fix(p);
            }
        }
        Ok(cfg)
    }

    pub fn effective_ngram_grid(&self) -> Vec<usize> {
        if self.ngram_grid.is_empty() {
            default_ngram_grid(self.task)
        } else {
            self.ngram_grid.clone()
        }
    }

    pub fn text_options(&self) -> TextOptions {
        TextOptions {
            lowercase: self.lowercase,
            strip_accents: self.strip_accents,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.as_os_str().is_empty() {
            return Err(Error::Config("no corpus path given".into()));
        }
        let grid = self.effective_ngram_grid();
        if grid.contains(&0) {
            return Err(Error::Config("n-gram lengths must be at least 1".into()));
        }
        for (i, n) in grid.iter().enumerate() {
            if grid[..i].contains(n) {
                return Err(Error::Config(format!("n-gram grid repeats {n}")));
            }
        }
        if !(self.ngram_lambda.is_finite() && self.ngram_lambda > 0.0) {
            return Err(Error::Config("ngram_lambda must be positive".into()));
        }
        if !self.da_scale.is_finite() {
            return Err(Error::Config("da_scale must be finite".into()));
        }
        if self.representation == Representation::Dense && self.dense_features.is_none() {
            return Err(Error::Config("the dense representation needs dense_features".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let mut s = self.representation.display_name().to_string();
        if self.domain_adapt {
            s.push_str(" + DA");
        }
        s
    }

    /// Hash of everything that affects results; output location and worker
    /// count are excluded.
    fn content_hash(&self, inputs: &[&str]) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.workers = None;
        canonical.baseline = None;
        canonical.name = None;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&canonical).expect("config serializes"));
        for i in inputs {
            h.update(i.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub lambda: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub lambda_curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub targets: usize,
    /// Feature dimension for dense runs (after augmentation).
    pub feature_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedComparison {
    pub baseline: String,
    pub mcnemar: McNemarResult,
}

/// Timing and cache statistics. Not part of the reproducible result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub seconds: BTreeMap<String, f64>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub error: Option<String>,
    pub name: String,
    pub config_hash: String,
    pub corpus_hash: String,
    pub config: ExperimentConfig,
    pub class_positive: Label,
    pub chosen_n: Option<usize>,
    pub ngram_lambda: Option<f64>,
    pub chosen_lambda: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub ngram_curve: Vec<CurvePoint>,
    pub lambda_curve: Vec<CurvePoint>,
    /// The non-adapted model at the chosen n, when adaptation is on.
    pub baseline: Option<StageSummary>,
    /// Adapted vs non-adapted predictions on the test split.
    pub adaptation_vs_baseline: Option<McNemarResult>,
    /// Against the report named by `config.baseline`.
    pub comparison: Option<NamedComparison>,
    pub validation: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub sizes: Sizes,
    pub notes: Vec<String>,
    pub runtime: Runtime,
}

impl RunReport {
    fn new(cfg: &ExperimentConfig) -> Self {
        RunReport {
            status: RunStatus::Failed,
            error: None,
            name: cfg.display_name(),
            config_hash: String::new(),
            corpus_hash: String::new(),
            config: cfg.clone(),
            class_positive: cfg.class_positive,
            chosen_n: None,
            ngram_lambda: None,
            chosen_lambda: None,
            validation_accuracy: None,
            test_accuracy: None,
            ngram_curve: Vec::new(),
            lambda_curve: Vec::new(),
            baseline: None,
            adaptation_vs_baseline: None,
            comparison: None,
            validation: None,
            test: None,
            sizes: Sizes::default(),
            notes: Vec::new(),
            runtime: Runtime::default(),
        }
    }

    /// The report without runtime statistics; equal across reruns.
    pub fn reproducible(&self) -> RunReport {
        RunReport {
            runtime: Runtime::default(),
            ..self.clone()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Holds `<dir>/.lock` for the lifetime of a run.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Kernel blocks persisted under `cache/`, keyed by content.
struct KernelCache {
    dir: PathBuf,
    base_key: String,
    hits: usize,
    misses: usize,
}

impl KernelCache {
    fn block(
        &mut self,
        name: &str,
        kernel: StringKernel,
        n: usize,
        rows: &ProfileSet,
        cols: &ProfileSet,
        extra: &str,
    ) -> Result<KernelMatrix> {
        let mut h = Sha256::new();
        for part in [
            self.base_key.as_str(),
            name,
            kernel.kind.as_str(),
            &format!("{:?}", kernel.presence),
            &n.to_string(),
            extra,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        let path = self.dir.join(format!("{}.fskm", &hex::encode(h.finalize())[..32]));
        if path.exists() {
            if let Ok(k) = load_kernel(&path) {
                if k.row_ids() == rows.ids.as_slice()
                    && k.col_ids() == cols.ids.as_slice()
                    && k.kind() == kernel.kind
                    && k.n() == n
                {
                    self.hits += 1;
                    return Ok(k);
                }
            }
        }
        let k = gram_block(rows, cols, kernel)?;
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tmp = path.with_extension("tmp");
        save_kernel(&k, &tmp)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        self.misses += 1;
        Ok(k)
    }
}

struct SplitData {
    ids: Vec<String>,
    texts: Vec<String>,
    labels: Vec<Label>,
}

impl SplitData {
    fn collect(corpus: &LabeledCorpus, split: Split, mode: TextMode, opts: TextOptions) -> Self {
        let mut d = SplitData {
            ids: Vec::new(),
            texts: Vec::new(),
            labels: Vec::new(),
        };
        for a in corpus.split(split) {
            d.ids.push(a.id.clone());
            d.texts.push(document_text_with(a, mode, opts));
            d.labels.push(a.label);
        }
        d
    }

    fn signs(&self, class_positive: Label) -> Vec<i8> {
        self.labels
            .iter()
            .map(|&l| if l == class_positive { 1 } else { -1 })
            .collect()
    }
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn accuracy_of(pred: &Prediction, gold: &[i8]) -> Result<f64> {
    let ids: Vec<String> = (0..gold.len()).map(|i| i.to_string()).collect();
    Ok(evaluate(&ids, &pred.labels, gold)?.accuracy)
}

fn write_predictions(path: &Path, rows: &[(Split, &[String], &[i8], &Prediction)]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "split\tid\tgold\tpredicted\tscore").map_err(io)?;
    for (split, ids, gold, pred) in rows {
        for (i, id) in ids.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{:.17e}",
                split, id, gold[i], pred.labels[i], pred.scores[i]
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Everything the final reporting step needs from a representation-specific run.
struct Outcome {
    final_model: StoredModel,
    baseline_model: Option<StoredModel>,
    valid_pred: Prediction,
    test_pred: Prediction,
    baseline_test_pred: Option<Prediction>,
}

/// Location of a run's artifacts.
pub fn run_dir(output_dir: &Path, config_hash: &str) -> PathBuf {
    output_dir.join("runs").join(&config_hash[..16])
}

/// Runs one experiment and writes its artifacts. On failure a report with
/// `status = failed` and whatever was completed is still written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let _lock = DirLock::acquire(&cfg.output_dir)?;
    let run = || -> Result<RunReport> {
        let mut report = RunReport::new(cfg);
        let mut dir = None;
        let result = run_inner(cfg, &mut report, &mut dir);
        match (result, dir) {
            (Ok(()), _) => Ok(report),
            (Err(e), Some(dir)) => {
                report.status = RunStatus::Failed;
                report.error = Some(e.to_string());
                let _ = report.save(dir.join("report.json"));
                Err(e)
            }
            (Err(e), None) => Err(e),
        }
    };
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(run),
        None => run(),
    }
}

fn run_inner(cfg: &ExperimentConfig, report: &mut RunReport, dir_out: &mut Option<PathBuf>) -> Result<()> {
    let t0 = Instant::now();
    let mut corpus = load_corpus(&cfg.corpus)?;
    corpus.class_positive = cfg.class_positive;
    report.corpus_hash = corpus.content_hash();
    let mut inputs = vec![report.corpus_hash.clone()];
    for p in [&cfg.dense_features, &cfg.target].into_iter().flatten() {
        inputs.push(hash_file(p)?);
    }
    let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    report.config_hash = cfg.content_hash(&refs);
    let dir = run_dir(&cfg.output_dir, &report.config_hash);
    fs::create_dir_all(dir.join("curves")).map_err(|e| Error::io(&dir, e))?;
    *dir_out = Some(dir.clone());
    report
        .runtime
        .seconds
        .insert("load".into(), t0.elapsed().as_secs_f64());

    let opts = cfg.text_options();
    let train = SplitData::collect(&corpus, Split::Train, cfg.task, opts);
    let valid = SplitData::collect(&corpus, Split::Valid, cfg.task, opts);
    let test = SplitData::collect(&corpus, Split::Test, cfg.task, opts);
    for (name, d) in [("train", &train), ("valid", &valid), ("test", &test)] {
        if d.ids.is_empty() {
            return Err(Error::Validation(format!("the {name} split is empty")));
        }
    }
    report.sizes.train = train.ids.len();
    report.sizes.valid = valid.ids.len();
    report.sizes.test = test.ids.len();
    report.notes.push(format!(
        "labels: {} = +1, {} = -1",
        cfg.class_positive,
        cfg.class_positive.other()
    ));
    if cfg.domain_adapt && cfg.target.is_none() {
        report.notes.push(
            "target set is the unlabeled validation split, which is also used to tune lambda".into(),
        );
    }

    let outcome = match cfg.representation.kernel_kind() {
        Some(kind) => run_string_kernel(cfg, kind, &train, &valid, &test, report)?,
        None => run_dense(cfg, &train, &valid, &test, report)?,
    };

    // Test labels are read only from here on.
    let t = Instant::now();
    let y_valid = valid.signs(cfg.class_positive);
    let y_test = test.signs(cfg.class_positive);
    let valid_eval = evaluate(&valid.ids, &outcome.valid_pred.labels, &y_valid)?;
    let test_eval = evaluate(&test.ids, &outcome.test_pred.labels, &y_test)?;
    report.validation_accuracy = Some(valid_eval.accuracy);
    report.test_accuracy = Some(test_eval.accuracy);
    if let Some(base_pred) = &outcome.baseline_test_pred {
        let base_acc = accuracy_of(base_pred, &y_test)?;
        if let Some(b) = report.baseline.as_mut() {
            b.test_accuracy = Some(base_acc);
        }
        report.adaptation_vs_baseline = Some(mcnemar_with(
            &base_pred.labels,
            &outcome.test_pred.labels,
            &y_test,
            cfg.continuity_correction,
        )?);
    }
    report.validation = Some(valid_eval);
    report.test = Some(test_eval);

    if let Some(path) = &cfg.baseline {
        let other = RunReport::load(path)?;
        let cmp = compare_runs(&other, report, cfg.continuity_correction)?;
        report.comparison = Some(NamedComparison {
            baseline: other.name.clone(),
            mcnemar: cmp.mcnemar,
        });
    }

    save_model(&outcome.final_model, dir.join("model.bin"))?;
    if let Some(m) = &outcome.baseline_model {
        save_model(m, dir.join("baseline_model.bin"))?;
    }
    write_predictions(
        &dir.join("predictions.tsv"),
        &[
            (Split::Valid, &valid.ids, &y_valid, &outcome.valid_pred),
            (Split::Test, &test.ids, &y_test, &outcome.test_pred),
        ],
    )?;
    report
        .runtime
        .seconds
        .insert("report".into(), t.elapsed().as_secs_f64());
    report
        .runtime
        .seconds
        .insert("total".into(), t0.elapsed().as_secs_f64());
    report.status = RunStatus::Ok;
    emit_curves(report, dir.join("curves"))?;
    report.save(dir.join("report.json"))?;
    Ok(())
}

fn normalize_if(cfg: &ExperimentConfig, k: KernelMatrix, self_rows: &[f64], self_cols: &[f64]) -> Result<KernelMatrix> {
    if cfg.normalize {
        normalize_gram(&k, self_rows, self_cols)
    } else {
        Ok(k)
    }
}

fn run_string_kernel(
    cfg: &ExperimentConfig,
    kind: KernelKind,
    train: &SplitData,
    valid: &SplitData,
    test: &SplitData,
    report: &mut RunReport,
) -> Result<Outcome> {
    let kernel = StringKernel::new(kind)?.with_presence(cfg.presence);
    let mut cache = KernelCache {
        dir: cfg.output_dir.join("cache"),
        base_key: format!(
            "{}|{:?}|{:?}",
            report.corpus_hash,
            cfg.task,
            cfg.text_options()
        ),
        hits: 0,
        misses: 0,
    };
    let y_train = train.signs(cfg.class_positive);
    let y_valid = valid.signs(cfg.class_positive);
    let profiles = |d: &SplitData, n: usize| ProfileSet::from_texts(d.ids.clone(), &d.texts, n);

    // Stage 1: n-gram length at a fixed lambda.
    let t = Instant::now();
    let grid = cfg.effective_ngram_grid();
    report.ngram_lambda = Some(cfg.ngram_lambda);
    report.notes.push(format!(
        "n-gram length tuned at lambda = {:e}, then lambda tuned at the chosen length",
        cfg.ngram_lambda
    ));
    let mut best: Option<(usize, f64)> = None;
    for &n in &grid {
        let outcome = (|| -> Result<f64> {
            let ptr = profiles(train, n)?;
            let pv = profiles(valid, n)?;
            let (st, sv) = (ptr.self_kernels(kernel), pv.self_kernels(kernel));
            let ktt = normalize_if(cfg, cache.block("train-train", kernel, n, &ptr, &ptr, "")?, &st, &st)?;
            let kvt = normalize_if(cfg, cache.block("valid-train", kernel, n, &pv, &ptr, "")?, &sv, &st)?;
            let model = fit_krr(&ktt, &y_train, cfg.ngram_lambda)?;
            accuracy_of(&predict_krr(&model, &kvt)?, &y_valid)
        })();
        match outcome {
            Ok(acc) => {
                report.ngram_curve.push(CurvePoint {
                    x: n as f64,
                    accuracy: Some(acc),
                    error: None,
                });
                // ties keep the shorter length
                if best.is_none_or(|(_, a)| acc > a) {
                    best = Some((n, acc));
                }
            }
            Err(e) => report.ngram_curve.push(CurvePoint {
                x: n as f64,
                accuracy: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let (n, _) = best.ok_or_else(|| Error::Numerical("no n-gram length could be evaluated".into()))?;
    report.chosen_n = Some(n);
    report
        .runtime
        .seconds
        .insert("ngram_sweep".into(), t.elapsed().as_secs_f64());

    // Stage 2: lambda at the chosen n.
    let t = Instant::now();
    let ptr = profiles(train, n)?;
    let pv = profiles(valid, n)?;
    let (st, sv) = (ptr.self_kernels(kernel), pv.self_kernels(kernel));
    let ktt = normalize_if(cfg, cache.block("train-train", kernel, n, &ptr, &ptr, "")?, &st, &st)?;
    let kvt = normalize_if(cfg, cache.block("valid-train", kernel, n, &pv, &ptr, "")?, &sv, &st)?;
    let fit = |k: &KernelMatrix, l: f64| {
        fit_krr(k, &y_train, l).map(|mut m| {
            m.presence = cfg.presence;
            m
        })
    };
    let base: Tuned<DualModel> = tune_lambda(
        &cfg.lambda_grid,
        |l| fit(&ktt, l),
        |m| accuracy_of(&predict_krr(m, &kvt)?, &y_valid),
    )?;
    report
        .runtime
        .seconds
        .insert("lambda_sweep".into(), t.elapsed().as_secs_f64());

    let pte = profiles(test, n)?;
    let ste = pte.self_kernels(kernel);
    let kte = normalize_if(cfg, cache.block("test-train", kernel, n, &pte, &ptr, "")?, &ste, &st)?;

    let outcome = if cfg.domain_adapt {
        let t = Instant::now();
        let (pz, target_key) = match &cfg.target {
            None => (pv.clone(), "valid".to_string()),
            Some(path) => {
                let docs = load_unlabeled(path)?;
                let ids = docs.iter().map(|d| d.id.clone()).collect();
                let texts: Vec<String> = docs.iter().map(|d| d.text(cfg.task, cfg.text_options())).collect();
                (ProfileSet::from_texts(ids, &texts, n)?, hash_file(path)?)
            }
        };
        report.sizes.targets = pz.len();
        let sz = pz.self_kernels(kernel);
        let sim = |name: &str, rows: &ProfileSet, self_rows: &[f64], cache: &mut KernelCache| -> Result<SimilarityBlock> {
            let k = if cfg.target.is_none() && std::ptr::eq(rows, &pv) {
                cache.block("valid-valid", kernel, n, rows, rows, "")?
            } else {
                cache.block(name, kernel, n, rows, &pz, &target_key)?
            };
            Ok(SimilarityBlock::from_kernel(normalize_if(cfg, k, self_rows, &sz)?))
        };
        let s_train = sim("train-target", &ptr, &st, &mut cache)?;
        let s_valid = sim("valid-target", &pv, &sv, &mut cache)?;
        let ktt_da = augment_gram_scaled(&ktt, &s_train, &s_train, cfg.da_scale)?;
        let kvt_da = augment_gram_scaled(&kvt, &s_valid, &s_train, cfg.da_scale)?;
        let adapted: Tuned<DualModel> = tune_lambda(
            &cfg.lambda_grid,
            |l| fit(&ktt_da, l),
            |m| accuracy_of(&predict_krr(m, &kvt_da)?, &y_valid),
        )?;
        let s_test = sim("test-target", &pte, &ste, &mut cache)?;
        let kte_da = augment_gram_scaled(&kte, &s_test, &s_train, cfg.da_scale)?;
        report
            .runtime
            .seconds
            .insert("adaptation".into(), t.elapsed().as_secs_f64());

        report.baseline = Some(StageSummary {
            lambda: base.lambda,
            validation_accuracy: base.accuracy,
            test_accuracy: None,
            lambda_curve: base.curve.clone(),
        });
        report.chosen_lambda = Some(adapted.lambda);
        report.lambda_curve = adapted.curve.clone();
        Outcome {
            valid_pred: predict_krr(&adapted.model, &kvt_da)?,
            test_pred: predict_krr(&adapted.model, &kte_da)?,
            baseline_test_pred: Some(predict_krr(&base.model, &kte)?),
            final_model: StoredModel::Dual(adapted.model),
            baseline_model: Some(StoredModel::Dual(base.model)),
        }
    } else {
        report.chosen_lambda = Some(base.lambda);
        report.lambda_curve = base.curve.clone();
        Outcome {
            valid_pred: predict_krr(&base.model, &kvt)?,
            test_pred: predict_krr(&base.model, &kte)?,
            baseline_test_pred: None,
            final_model: StoredModel::Dual(base.model),
            baseline_model: None,
        }
    };
    report.runtime.cache_hits = cache.hits;
    report.runtime.cache_misses = cache.misses;
    Ok(outcome)
}

fn run_dense(
    cfg: &ExperimentConfig,
    train: &SplitData,
    valid: &SplitData,
    test: &SplitData,
    report: &mut RunReport,
) -> Result<Outcome> {
    let path = cfg
        .dense_features
        .as_ref()
        .ok_or_else(|| Error::Config("the dense representation needs dense_features".into()))?;
    if cfg.normalize {
        report.notes.push("normalize is ignored for dense features".into());
    }
    let all = load_dense(path)?;
    let xtr = all.select(&train.ids)?;
    let xv = all.select(&valid.ids)?;
    let xte = all.select(&test.ids)?;
    report.sizes.feature_dim = Some(all.dim());
    let y_train = train.signs(cfg.class_positive);
    let y_valid = valid.signs(cfg.class_positive);

    let t = Instant::now();
    let base: Tuned<PrimalModel> = tune_lambda(
        &cfg.lambda_grid,
        |l| fit_rr(&xtr, &y_train, l),
        |m| accuracy_of(&predict_rr(m, &xv)?, &y_valid),
    )?;
    report
        .runtime
        .seconds
        .insert("lambda_sweep".into(), t.elapsed().as_secs_f64());

    if !cfg.domain_adapt {
        report.chosen_lambda = Some(base.lambda);
        report.lambda_curve = base.curve.clone();
        return Ok(Outcome {
            valid_pred: predict_rr(&base.model, &xv)?,
            test_pred: predict_rr(&base.model, &xte)?,
            baseline_test_pred: None,
            final_model: StoredModel::Primal(base.model),
            baseline_model: None,
        });
    }

    let t = Instant::now();
    let z: DenseMatrix = match &cfg.target {
        None => xv.clone(),
        Some(p) => load_dense(p)?,
    };
    report.sizes.targets = z.rows();
    let aug = |x: &DenseMatrix| -> Result<DenseMatrix> {
        augment_features_scaled(x, &similarity_block(x, &z)?, cfg.da_scale)
    };
    let (atr, av, ate) = (aug(&xtr)?, aug(&xv)?, aug(&xte)?);
    report.sizes.feature_dim = Some(atr.dim());
    let adapted: Tuned<PrimalModel> = tune_lambda(
        &cfg.lambda_grid,
        |l| fit_rr(&atr, &y_train, l),
        |m| accuracy_of(&predict_rr(m, &av)?, &y_valid),
    )?;
    report
        .runtime
        .seconds
        .insert("adaptation".into(), t.elapsed().as_secs_f64());
    report.baseline = Some(StageSummary {
        lambda: base.lambda,
        validation_accuracy: base.accuracy,
        test_accuracy: None,
        lambda_curve: base.curve.clone(),
    });
    report.chosen_lambda = Some(adapted.lambda);
    report.lambda_curve = adapted.curve.clone();
    Ok(Outcome {
        valid_pred: predict_rr(&adapted.model, &av)?,
        test_pred: predict_rr(&adapted.model, &ate)?,
        baseline_test_pred: Some(predict_rr(&base.model, &xte)?),
        final_model: StoredModel::Primal(adapted.model),
        baseline_model: Some(StoredModel::Primal(base.model)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub mcnemar: McNemarResult,
    pub table: String,
}

/// Paired McNemar test of `b` against `a` on their stored test predictions.
pub fn compare_runs(a: &RunReport, b: &RunReport, continuity_correction: bool) -> Result<Comparison> {
    let (ta, tb) = match (&a.test, &b.test) {
        (Some(ta), Some(tb)) => (ta, tb),
        _ => return Err(Error::arg("both reports need test predictions")),
    };
    let index: HashMap<&str, (i8, i8)> = tb
        .predictions
        .iter()
        .map(|p| (p.id.as_str(), (p.gold, p.predicted)))
        .collect();
    if index.len() != ta.predictions.len() {
        return Err(Error::arg("reports cover different test ids"));
    }
    let (mut pa, mut pb, mut gold) = (Vec::new(), Vec::new(), Vec::new());
    for p in &ta.predictions {
        let &(g, q) = index
            .get(p.id.as_str())
            .ok_or_else(|| Error::arg(format!("test id {:?} missing from the second report", p.id)))?;
        if g != p.gold {
            return Err(Error::arg(format!("gold labels disagree for {:?}", p.id)));
        }
        pa.push(p.predicted);
        pb.push(q);
        gold.push(g);
    }
    let mcnemar = mcnemar_with(&pa, &pb, &gold, continuity_correction)?;
    let better = tb.accuracy > ta.accuracy;
    let table = render_table(&[
        TableRow {
            method: a.name.clone(),
            valid_accuracy: a.validation_accuracy,
            test_accuracy: a.test_accuracy,
            significant: false,
        },
        TableRow {
            method: b.name.clone(),
            valid_accuracy: b.validation_accuracy,
            test_accuracy: b.test_accuracy,
            significant: better && mcnemar.significant,
        },
    ]);
    Ok(Comparison { mcnemar, table })
}

fn write_curve(path: &Path, header: &str, points: &[CurvePoint], fmt_x: impl Fn(f64) -> String) -> Result<()> {
    let mut text = format!("{header}\taccuracy\n");
    for p in points {
        let acc = p.accuracy.map_or_else(|| "NA".to_string(), |a| format!("{a:.6}"));
        text.push_str(&format!("{}\t{}\n", fmt_x(p.x), acc));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `ngram.tsv`, `lambda.tsv` and, with adaptation, `baseline_lambda.tsv`.
pub fn emit_curves(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let ngram = dir.join("ngram.tsv");
    write_curve(&ngram, "n", &report.ngram_curve, |x| format!("{}", x as usize))?;
    out.push(ngram);
    let lambda = dir.join("lambda.tsv");
    write_curve(&lambda, "lambda", &report.lambda_curve, |x| format!("{x:e}"))?;
    out.push(lambda);
    if let Some(b) = &report.baseline {
        let p = dir.join("baseline_lambda.tsv");
        write_curve(&p, "lambda", &b.lambda_curve, |x| format!("{x:e}"))?;
        out.push(p);
    }
    Ok(out)
}

/// Ranked n-gram weights of a finished string-kernel run.
///
/// Adapted models are trained on augmented kernels, so the non-adapted model
/// of the same run is explained instead.
pub fn explain_run(run: impl AsRef<Path>) -> Result<Vec<RankedFeature>> {
    let run = run.as_ref();
    let report = RunReport::load(run)?;
    let dir = if run.is_dir() { run.to_path_buf() } else { run.parent().unwrap_or(Path::new(".")).to_path_buf() };
    let cfg = &report.config;
    if cfg.representation == Representation::Dense {
        return Err(Error::arg("dense runs are explained from word occurrence vectors"));
    }
    let baseline = dir.join("baseline_model.bin");
    let path = if baseline.exists() { baseline } else { dir.join("model.bin") };
    let model = match load_model(&path)? {
        StoredModel::Dual(m) => m,
        StoredModel::Primal(_) => return Err(Error::arg(format!("{} is not a kernel model", path.display()))),
    };
    let mut corpus = load_corpus(&cfg.corpus)?;
    corpus.class_positive = report.class_positive;
    if corpus.content_hash() != report.corpus_hash {
        return Err(Error::Validation(format!(
            "{} changed since the run",
            cfg.corpus.display()
        )));
    }
    let train = SplitData::collect(&corpus, Split::Train, cfg.task, cfg.text_options());
    let profiles = ProfileSet::from_texts(train.ids, &train.texts, model.n)?;
    primal_ngram_weights(&model, &profiles, report.class_positive)
}
