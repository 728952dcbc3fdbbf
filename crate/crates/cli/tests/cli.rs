use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn satirekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satirekit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn only_run(out: &Path) -> PathBuf {
    let mut runs: Vec<_> = fs::read_dir(out.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    runs.pop().unwrap()
}

#[test]
fn planted_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = satirekit(d, &["synth", "--planted", "40", "-o", "p.jsonl"]);
    assert!(o.status.success(), "{o:?}");

    let o = satirekit(d, &["run", "--corpus", "p.jsonl", "--ngram", "3,4", "-o", "out", "--json"]);
    assert!(o.status.success(), "{o:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["status"], "ok");
    assert_eq!(report["test_accuracy"], 1.0);
    let run = only_run(&d.join("out"));

    let o = satirekit(d, &["compare", run.to_str().unwrap(), run.join("report.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("McNemar statistic 0.0000"));
    assert!(stdout(&o).contains("not significant"));

    let o = satirekit(d, &["curves", run.to_str().unwrap(), "-o", "curves"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(d.join("curves/ngram.tsv")).unwrap().lines().count(), 3);
    assert_eq!(fs::read_to_string(d.join("curves/lambda.tsv")).unwrap().lines().count(), 8);

    let o = satirekit(d, &["explain", "ngrams", run.to_str().unwrap(), "--top", "10", "-o", "top.tsv"]);
    assert!(o.status.success(), "{o:?}");
    let tsv = fs::read_to_string(d.join("top.tsv")).unwrap();
    assert!(tsv.starts_with("class\trank\tfeature\tscore\n"));
    assert!(tsv.lines().any(|l| l.starts_with("satirical\t") && l.contains("zyz")));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(satirekit(d, &["synth", "--planted", "40", "-o", "p.jsonl"]).status.success());
    fs::write(
        d.join("exp.toml"),
        "corpus = \"p.jsonl\"\nrepresentation = \"pbsk\"\nngram_grid = [3]\nlambda_grid = [0.1, 0.01]\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let o = satirekit(d, &["run", "-c", "exp.toml", "--representation", "hisk", "--json"]);
    assert!(o.status.success(), "{o:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["config"]["representation"], "hisk");
    assert_eq!(report["chosen_n"], 3);
    assert_eq!(report["lambda_curve"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(satirekit(d, &["synth", "--planted", "40", "-o", "p.jsonl"]).status.success());

    // configuration
    let o = satirekit(d, &["run", "--corpus", "p.jsonl", "--lambda", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = satirekit(d, &["run", "--corpus", "p.jsonl", "--representation", "dense"]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(d.join("bad.toml"), "colour = \"blue\"\n").unwrap();
    assert_eq!(satirekit(d, &["run", "-c", "bad.toml"]).status.code(), Some(2));

    // data validation
    fs::write(
        d.join("leak.jsonl"),
        concat!(
            "{\"id\":\"a\",\"title\":\"t\",\"body\":\"b\",\"label\":\"regular\",\"source\":\"s\",\"split\":\"train\"}\n",
            "{\"id\":\"b\",\"title\":\"t\",\"body\":\"b\",\"label\":\"regular\",\"source\":\"s\",\"split\":\"test\"}\n",
        ),
    )
    .unwrap();
    let o = satirekit(d, &["run", "--corpus", "leak.jsonl"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cross-source violation"));
    fs::write(d.join("broken.jsonl"), "{not json\n").unwrap();
    assert_eq!(satirekit(d, &["stats", "broken.jsonl"]).status.code(), Some(3));

    // compare across different test sets
    assert!(satirekit(d, &["synth", "--planted", "48", "-o", "q.jsonl"]).status.success());
    assert!(satirekit(d, &["run", "--corpus", "p.jsonl", "--ngram", "3", "-o", "a"]).status.success());
    assert!(satirekit(d, &["run", "--corpus", "q.jsonl", "--ngram", "3", "-o", "b"]).status.success());
    let (ra, rb) = (only_run(&d.join("a")), only_run(&d.join("b")));
    let o = satirekit(d, &["compare", ra.to_str().unwrap(), rb.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn prepare_directory_dump() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (path, text) in [
        ("raw/train/regular/1.txt", "Un titre\nun corps"),
        ("raw/train/satire/2.txt", "Autre titre\nautre corps"),
        ("raw/test/regular/3.txt", "Titre\ncorps"),
    ] {
        let p = d.join(path);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, text).unwrap();
    }
    let o = satirekit(d, &["prepare", "raw", "-o", "c.jsonl"]);
    assert!(o.status.success(), "{o:?}");
    let o = satirekit(d, &["stats", "c.jsonl", "--json"]);
    let stats: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(stats["cells"]["train"]["satirical"]["sample_count"], 1);
    assert_eq!(stats["cells"]["test"]["regular"]["sample_count"], 1);
}

#[test]
fn embedding_explanations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // primal model with weights (1, 0): magic, version, lambda, dimension, weights
    let mut model = b"FSRR".to_vec();
    model.extend(1u32.to_le_bytes());
    model.extend(0.1f64.to_le_bytes());
    model.extend(2u32.to_le_bytes());
    model.extend(1.0f64.to_le_bytes());
    model.extend(0.0f64.to_le_bytes());
    fs::write(d.join("m.bin"), model).unwrap();
    fs::write(
        d.join("w.fswo"),
        "FSWO v1 3 2\nd1\t0\tdrôle\t1 0\nd1\t1\tvraiment\t0.5 -0.5\nd2\t0\tdrôle\t2 0\n",
    )
    .unwrap();
    let o = satirekit(d, &["explain", "embeddings", "--model", "m.bin", "--occurrences", "w.fswo", "-o", "ex"]);
    assert!(o.status.success(), "{o:?}");
    let words = fs::read_to_string(d.join("ex/words.tsv")).unwrap();
    assert!(words.contains("satirical\t1\tdrôle\t2.000000000e0"), "{words}");
    let bigrams = fs::read_to_string(d.join("ex/bigrams.tsv")).unwrap();
    let expected = format!("drôle vraiment\t{:.9e}", 0.5f64.sqrt());
    assert!(bigrams.contains(&expected), "{bigrams}");
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = satirekit(dir.path(), &["run", "--help"]);
    let help = stdout(&o);
    assert!(help.contains("4,5,6,7,8"));
    assert!(help.contains("1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7"));
    assert!(help.contains("1e-3"));
}
