use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use satirekit::corpus::{corpus_stats, load_corpus, save_corpus, Label, TextMode};
use satirekit::experiment::{
    compare_runs, emit_curves, explain_run, run_dir, run_experiment, ExperimentConfig, Representation, RunReport,
    RunStatus,
};
use satirekit::explain::{embedding_bigram_scores, embedding_word_scores, top_k, write_ranked_tsv, RankedFeature};
use satirekit::formats::{load_model, load_occurrences, StoredModel};
use satirekit::learner::LambdaGrid;
use satirekit::ngram::PresenceRule;
use satirekit::prepare::prepare;
use satirekit::synth::{generate_planted, generate_synthetic, SynthSpec, PLANTED_TOKEN};
use satirekit::{Error, Result};

/// String-kernel and dense-embedding experiments for cross-source text classification.
///
/// Exit codes: 0 success, 1 I/O error, 2 configuration or argument error,
/// 3 data validation error, 4 numerical error.
#[derive(Parser)]
#[command(name = "satirekit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw dump (directory tree or CSV) into a corpus JSONL file.
    Prepare {
        /// `<split>/<label>/[<source>/]*.txt` directory or CSV with title, body, label, split columns.
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print per-split, per-label sample and token counts.
    Stats {
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one experiment: tune, train, evaluate and write artifacts.
    Run(RunArgs),
    /// Paired McNemar test between the test predictions of two runs.
    Compare {
        /// Run directory or report.json of the baseline.
        a: PathBuf,
        /// Run directory or report.json of the contender.
        b: PathBuf,
        /// Use the uncorrected statistic.
        #[arg(long)]
        no_continuity_correction: bool,
    },
    /// Write tuning curves of a run as TSV files.
    Curves {
        run: PathBuf,
        /// Defaults to `<run>/curves`.
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic corpus.
    Synth(SynthArgs),
    /// Rank discriminative features.
    #[command(subcommand)]
    Explain(ExplainCommand),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with `key = value` settings; flags override it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// full or headline [default: full]
    #[arg(long)]
    task: Option<TextMode>,
    /// pbsk, hisk or dense [default: pbsk]
    #[arg(long)]
    representation: Option<Representation>,
    /// Comma-separated n-gram lengths [default: 4,5,6,7,8 for full, 2,3,4,5,6,7,8 for headline]
    #[arg(long, value_delimiter = ',')]
    ngram: Option<Vec<usize>>,
    /// Comma-separated λ values [default: 1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7]
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// λ used while tuning the n-gram length [default: 1e-3]
    #[arg(long)]
    ngram_lambda: Option<f64>,
    /// Augment with similarities to an unlabeled target set.
    #[arg(long)]
    domain_adapt: bool,
    /// Unlabeled target documents (JSONL, or FSDM for dense) [default: the validation split]
    #[arg(long)]
    target: Option<PathBuf>,
    /// Scale of the similarity block [default: 1]
    #[arg(long)]
    da_scale: Option<f64>,
    /// Cosine-normalize kernel matrices.
    #[arg(long)]
    normalize: bool,
    /// at_least_once or more_than_once [default: at_least_once]
    #[arg(long)]
    presence: Option<PresenceRule>,
    #[arg(long)]
    lowercase: bool,
    #[arg(long)]
    strip_accents: bool,
    /// Class mapped to +1 [default: satirical]
    #[arg(long)]
    class_positive: Option<Label>,
    /// FSDM file with one vector per article (dense representation).
    #[arg(long)]
    dense_features: Option<PathBuf>,
    /// Report of a run to test against.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    no_continuity_correction: bool,
    /// [default: runs]
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Worker threads [default: available parallelism]
    #[arg(long)]
    workers: Option<usize>,
    /// Display name in tables.
    #[arg(long)]
    name: Option<String>,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    output: PathBuf,
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Generate the small planted-token corpus of this many documents instead.
    #[arg(long)]
    planted: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    valid_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    /// Between 0 and 1 [default: 1]
    #[arg(long)]
    confounder_strength: Option<f64>,
    /// [default: 17]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum ExplainCommand {
    /// N-gram weights of a string-kernel run.
    Ngrams {
        run: PathBuf,
        /// Features kept per class; 0 keeps all.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// TSV output [default: stdout]
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Word and bigram scores of a dense model from word occurrence vectors.
    Embeddings {
        /// Primal model file (model.bin of a dense run).
        #[arg(long)]
        model: PathBuf,
        /// FSWO word occurrence file.
        #[arg(long)]
        occurrences: PathBuf,
        /// Receives words.tsv and bigrams.tsv.
        #[arg(short, long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value = "satirical")]
        class_positive: Label,
    },
}

fn config_from(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.corpus {
        cfg.corpus = v.clone();
    }
    if let Some(v) = args.task {
        cfg.task = v;
    }
    if let Some(v) = args.representation {
        cfg.representation = v;
    }
    if let Some(v) = &args.ngram {
        cfg.ngram_grid = v.clone();
    }
    if let Some(v) = &args.lambda {
        cfg.lambda_grid = LambdaGrid::new(v.clone())?;
    }
    if let Some(v) = args.ngram_lambda {
        cfg.ngram_lambda = v;
    }
    cfg.domain_adapt |= args.domain_adapt;
    if let Some(v) = &args.target {
        cfg.target = Some(v.clone());
    }
    if let Some(v) = args.da_scale {
        cfg.da_scale = v;
    }
    cfg.normalize |= args.normalize;
    if let Some(v) = args.presence {
        cfg.presence = v;
    }
    cfg.lowercase |= args.lowercase;
    cfg.strip_accents |= args.strip_accents;
    if let Some(v) = args.class_positive {
        cfg.class_positive = v;
    }
    if let Some(v) = &args.dense_features {
        cfg.dense_features = Some(v.clone());
    }
    if let Some(v) = &args.baseline {
        cfg.baseline = Some(v.clone());
    }
    if args.no_continuity_correction {
        cfg.continuity_correction = false;
    }
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = args.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = &args.name {
        cfg.name = Some(v.clone());
    }
    Ok(cfg)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |a| format!("{:.2}%", 100.0 * a))
}

fn print_summary(r: &RunReport, dir: &Path) {
    println!("run        {}", dir.display());
    println!("status     {}", if r.status == RunStatus::Ok { "ok" } else { "failed" });
    if let Some(n) = r.chosen_n {
        println!("n          {n}");
    }
    if let Some(l) = r.chosen_lambda {
        println!("lambda     {l:e}");
    }
    println!("valid      {}", pct(r.validation_accuracy));
    println!("test       {}", pct(r.test_accuracy));
    if let Some(b) = &r.baseline {
        println!(
            "baseline   lambda {:e}, valid {}, test {}",
            b.lambda,
            pct(Some(b.validation_accuracy)),
            pct(b.test_accuracy)
        );
    }
    if let Some(m) = &r.adaptation_vs_baseline {
        println!(
            "mcnemar    {:.4} (n01 {}, n10 {}){}",
            m.statistic,
            m.n01,
            m.n10,
            if m.significant { " significant" } else { "" }
        );
    }
    if let Some(c) = &r.comparison {
        println!(
            "vs {:<7} {:.4}{}",
            c.baseline,
            c.mcnemar.statistic,
            if c.mcnemar.significant { " significant" } else { "" }
        );
    }
}

fn write_features(features: &[RankedFeature], output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            write_ranked_tsv(features, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            write_ranked_tsv(features, stdout.lock()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn keep_top(features: Vec<RankedFeature>, top: usize) -> Vec<RankedFeature> {
    if top == 0 {
        features
    } else {
        top_k(&features, top)
    }
}

fn synth_spec(args: &SynthArgs) -> Result<SynthSpec> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SynthSpec::from_toml_str(&text)?
        }
        None => SynthSpec::default(),
    };
    if let Some(v) = args.train_per_class {
        spec.train_per_class = v;
    }
    if let Some(v) = args.valid_per_class {
        spec.valid_per_class = v;
    }
    if let Some(v) = args.test_per_class {
        spec.test_per_class = v;
    }
    if let Some(v) = args.confounder_strength {
        spec.confounder_strength = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    Ok(spec)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { input, output } => {
            let corpus = prepare(&input)?;
            save_corpus(&corpus, &output)?;
            eprintln!("wrote {} articles to {}", corpus.len(), output.display());
        }
        Command::Stats { corpus, json } => {
            let stats = corpus_stats(&load_corpus(&corpus)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", stats.to_table());
            }
        }
        Command::Run(args) => {
            let cfg = config_from(&args)?;
            let report = run_experiment(&cfg)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_summary(&report, &run_dir(&cfg.output_dir, &report.config_hash));
            }
        }
        Command::Compare {
            a,
            b,
            no_continuity_correction,
        } => {
            let (ra, rb) = (RunReport::load(&a)?, RunReport::load(&b)?);
            let cmp = compare_runs(&ra, &rb, !no_continuity_correction)?;
            print!("{}", cmp.table);
            let m = &cmp.mcnemar;
            println!(
                "McNemar statistic {:.4} (n01 {}, n10 {}), {}",
                m.statistic,
                m.n01,
                m.n10,
                if m.significant { "significant at 0.05" } else { "not significant at 0.05" }
            );
        }
        Command::Curves { run, output_dir } => {
            let report = RunReport::load(&run)?;
            let base = if run.is_dir() { run.clone() } else { run.parent().unwrap_or(Path::new(".")).to_path_buf() };
            let dir = output_dir.unwrap_or_else(|| base.join("curves"));
            for p in emit_curves(&report, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Synth(args) => {
            let corpus = match args.planted {
                Some(n) => generate_planted(n, PLANTED_TOKEN, args.seed.unwrap_or(0))?,
                None => generate_synthetic(&synth_spec(&args)?)?,
            };
            save_corpus(&corpus, &args.output)?;
            eprintln!("wrote {} articles to {}", corpus.len(), args.output.display());
        }
        Command::Explain(ExplainCommand::Ngrams { run, top, output }) => {
            let features = keep_top(explain_run(&run)?, top);
            write_features(&features, output.as_deref())?;
        }
        Command::Explain(ExplainCommand::Embeddings {
            model,
            occurrences,
            output_dir,
            top,
            class_positive,
        }) => {
            let model = match load_model(&model)? {
                StoredModel::Primal(m) => m,
                StoredModel::Dual(_) => {
                    return Err(Error::arg(format!("{} is a kernel model, not a dense one", model.display())))
                }
            };
            let occs = load_occurrences(&occurrences)?;
            fs::create_dir_all(&output_dir).map_err(|e| Error::io(&output_dir, e))?;
            let words = keep_top(embedding_word_scores(&occs, &model, class_positive)?, top);
            write_features(&words, Some(&output_dir.join("words.tsv")))?;
            let bigrams = keep_top(embedding_bigram_scores(&occs, &model, class_positive)?, top);
            write_features(&bigrams, Some(&output_dir.join("bigrams.tsv")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
