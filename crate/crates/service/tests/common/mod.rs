#![allow(dead_code)]

pub mod cli;
pub mod server;

use std::path::Path;

use invoice_core::ingest::{tokens_to_text, PdfDocument};
use invoice_core::llm::{build_prompt, prompt_hash};
use invoice_core::model::{CanonicalField, LlmMode, LlmSettings, PipelineConfig};
use invoice_eval::render::{text_pdf, Run};
use invoice_eval::{gen_corpus, Corpus, Degradation};

pub fn corpus(dir: &Path, seed: u64, n: usize) -> Corpus {
    gen_corpus(dir, seed, n, Degradation::None).unwrap()
}

pub fn replay_cfg(dir: &Path) -> PipelineConfig {
    PipelineConfig {
        llm: LlmSettings {
            mode: LlmMode::Replay { dir: dir.to_path_buf() },
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Store a model answer for `pdf` under `replay_dir`.
pub fn write_fixture(replay_dir: &Path, pdf: &[u8], answer: &serde_json::Value) {
    let tokens = PdfDocument::parse(pdf).unwrap().text_tokens(300).unwrap();
    let prompt = build_prompt(&tokens_to_text(&tokens), &CanonicalField::ALL, LlmSettings::default().max_prompt_chars);
    std::fs::create_dir_all(replay_dir).unwrap();
    std::fs::write(replay_dir.join(format!("{}.txt", prompt_hash(&prompt))), answer.to_string()).unwrap();
}

/// A text invoice printing 150.00 + 15.00 = `total`, with a faithful model
/// answer stored under `replay_dir`.
pub fn invoice_with_total(replay_dir: &Path, number: &str, total: &str) -> Vec<u8> {
    let lines = [
        (0, "Harbour Lights Trading Co".to_string()),
        (1, "14 Quay Street, Bristol".to_string()),
        (3, format!("Invoice No: {number}")),
        (4, "Invoice Date: 04/03/2024".to_string()),
        (6, "Subtotal: $150.00".to_string()),
        (7, "Tax: $15.00".to_string()),
        (8, format!("TOTAL: ${total}")),
    ];
    let runs: Vec<Run> = lines.iter().map(|(row, text)| Run { row: *row, col: 0, text: text.clone() }).collect();
    let pdf = text_pdf(&runs, number);
    let answer = serde_json::json!({
        "invoice_number": number,
        "invoice_date": "04/03/2024",
        "vendor_name": "Harbour Lights Trading Co",
        "vendor_address": "14 Quay Street, Bristol",
        "currency": "USD",
        "subtotal": "$150.00",
        "tax_amount": "$15.00",
        "total_amount": format!("${total}"),
        "line_items": [],
    });
    write_fixture(replay_dir, &pdf, &answer);
    pdf
}

/// Image-only PDF of a corpus invoice's page scan.
pub fn scanned_pdf(corpus: &Corpus, id: &str) -> Vec<u8> {
    use invoice_core::ingest::{rasterize, RawDocument};
    let png = std::fs::read(corpus.dir(id).join("page.png")).unwrap();
    let page = rasterize(&RawDocument::from_bytes(png, "page.png"), 300, None).unwrap().remove(0);
    invoice_eval::render::image_pdf(&page, id)
}

/// Config file selecting the corpus-backed OCR engine.
pub fn ocr_config(dir: &Path, corpus: &Corpus) -> std::path::PathBuf {
    let path = dir.join("invoicer.toml");
    let text = format!(
        "[ocr.primary]\nkind = \"mock_perfect\"\nsidecar_root = {:?}\n",
        corpus.root.display().to_string()
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// Three text PDFs, two scanned PDFs and one corrupt file.
pub fn mixed_dir(dir: &Path, corpus: &Corpus) -> std::path::PathBuf {
    let input = dir.join("mixed");
    std::fs::create_dir_all(&input).unwrap();
    let ids = corpus.ids();
    for id in &ids[..3] {
        std::fs::copy(corpus.dir(id).join("invoice.pdf"), input.join(format!("{id}.pdf"))).unwrap();
    }
    for id in &ids[3..5] {
        std::fs::write(input.join(format!("{id}-scan.pdf")), scanned_pdf(corpus, id)).unwrap();
    }
    let mut corrupt = std::fs::read(corpus.dir(&ids[0]).join("invoice.pdf")).unwrap();
    corrupt.truncate(200);
    std::fs::write(input.join("zz-corrupt.pdf"), corrupt).unwrap();
    input
}
