mod common;

use common::cli::{invoicer, text};

#[test]
fn mixed_directory_is_processed_and_the_corrupt_file_skipped() {
    let dir = tempfile::tempdir().unwrap();
    common::cli::mixed_directory(dir.path());
}

#[test]
fn all_corrupt_directory_extracts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    common::cli::all_corrupt_directory(dir.path());
}

#[test]
fn live_mode_without_key_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus(dir.path(), 8, 1);
    let out = dir.path().join("out.xlsx");
    let o = invoicer(&[
        "process",
        "--input",
        corpus.dir(&corpus.ids()[0]).join("invoice.pdf").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--llm",
        "live",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("LLM_API_KEY"), "{}", text(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn the_key_cannot_be_passed_as_an_argument() {
    let o = invoicer(&["process", "--input", ".", "--out", "x.csv", "--llm", "sk-abc123"]);
    assert_ne!(o.status.code(), Some(0));
    let o = invoicer(&["process", "--input", ".", "--out", "x.csv", "--api-key", "sk-abc123"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(text(&o.stderr).contains("--api-key"));
}

#[test]
fn csv_by_extension_and_threshold_flag() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::corpus(&dir.path().join("corpus"), 12, 3);
    let out = dir.path().join("out.csv");
    let replay = format!("replay:{}", corpus.replay_dir().display());
    let files: Vec<String> = corpus
        .ids()
        .iter()
        .map(|id| corpus.dir(id).join("invoice.pdf").display().to_string())
        .collect();
    let mut args = vec!["process", "--input"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--out", out.to_str().unwrap(), "--llm", &replay, "--threshold", "1.0"]);
    let o = invoicer(&args);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let statuses: Vec<String> = reader.records().map(|r| r.unwrap()[9].to_string()).collect();
    // nothing reaches a threshold of 1.0 on its own
    assert_eq!(statuses, ["needs_review"; 3]);

    let o = invoicer(&["process", "--input", &files[0], "--out", "x.csv", "--threshold", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_corpus_and_eval_commands() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("c");
    let o = invoicer(&["gen-corpus", "--out", root.to_str().unwrap(), "--seed", "4", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let report = dir.path().join("report");
    let o = invoicer(&["eval", "--corpus", root.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("required-field accuracy"));
    assert!(report.join("metrics.json").exists() && report.join("metrics.csv").exists());
}
