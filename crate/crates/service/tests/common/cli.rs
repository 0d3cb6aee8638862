//! The `invoicer` binary, run as a child process.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Output};

pub fn invoicer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invoicer"))
        .args(args)
        .env_remove("LLM_API_KEY")
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

pub fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// Data rows in the first worksheet, re-read with an independent zip reader.
pub fn xlsx_rows(path: &Path) -> usize {
    let mut zip = zip::ZipArchive::new(std::fs::File::open(path).unwrap()).unwrap();
    let mut xml = String::new();
    zip.by_name("xl/worksheets/sheet1.xml").unwrap().read_to_string(&mut xml).unwrap();
    xml.matches("<row").count() - 1
}

/// Text PDFs, scans and one corrupt file in one directory: exit 0, the
/// corrupt file skipped with a logged error, the rest exported.
pub fn mixed_directory(dir: &Path) {
    let corpus = super::corpus(&dir.join("corpus"), 8, 5);
    let input = super::mixed_dir(dir, &corpus);
    let cfg = super::ocr_config(dir, &corpus);
    let out = dir.join("out.xlsx");
    let replay = format!("replay:{}", corpus.replay_dir().display());
    let o = invoicer(&[
        "process",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--llm",
        &replay,
    ]);
    let (stdout, stderr) = (text(&o.stdout), text(&o.stderr));
    assert_eq!(o.status.code(), Some(0), "{stdout}\n{stderr}");
    assert_eq!(stdout.trim(), "Processing complete.");
    assert!(stderr.contains("skipping file") && stderr.contains("zz-corrupt.pdf"), "{stderr}");
    assert_eq!(xlsx_rows(&out), 5);
}

/// Nothing readable: "No data extracted." and exit 2, no output file.
pub fn all_corrupt_directory(dir: &Path) {
    let input = dir.join("bad");
    std::fs::create_dir(&input).unwrap();
    std::fs::write(input.join("a.pdf"), b"%PDF-1.4\n1 0 obj <<").unwrap();
    std::fs::write(input.join("b.png"), b"\x89PNG\r\n\x1a\nbroken").unwrap();
    std::fs::write(input.join("c.txt"), b"hello").unwrap();
    let out = dir.join("out.xlsx");
    let o = invoicer(&["process", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).trim(), "No data extracted.");
    assert!(!out.exists());
}
