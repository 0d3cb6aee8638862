use std::path::PathBuf;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{OcrEngine, OcrError};
use crate::ingest::{BBox, Token, TokenSource};
use crate::model::TokenId;
use crate::preprocess::PageImage;

/// One ground-truth token as stored in a fixture's `truth.json`.
#[derive(Debug, Clone, Deserialize)]
pub struct SidecarToken {
    pub text: String,
    pub bbox: BBox,
    #[serde(default)]
    pub page: u32,
}

#[derive(Deserialize)]
struct Sidecar {
    tokens: Vec<SidecarToken>,
    #[serde(default = "default_token_dpi")]
    token_dpi: u32,
}

fn default_token_dpi() -> u32 {
    300
}

fn failed(engine: &str, message: impl Into<String>) -> OcrError {
    OcrError::EngineFailed {
        engine: engine.to_string(),
        message: message.into(),
    }
}

/// Sidecar tokens for the page, scaled to the image resolution.
fn load_sidecar(root: &PathBuf, engine: &str, img: &PageImage) -> Result<Vec<SidecarToken>, OcrError> {
    let tag = img
        .tag
        .as_deref()
        .ok_or_else(|| failed(engine, "page carries no fixture id"))?;
    if tag.contains(['/', '\\']) || tag.starts_with('.') {
        return Err(failed(engine, format!("bad fixture id {tag:?}")));
    }
    let path = root.join(tag).join("truth.json");
    let text = std::fs::read_to_string(&path).map_err(|e| failed(engine, format!("{}: {e}", path.display())))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| failed(engine, format!("{}: {e}", path.display())))?;
    let s = img.dpi as f64 / sidecar.token_dpi.max(1) as f64;
    Ok(sidecar
        .tokens
        .into_iter()
        .filter(|t| t.page == img.page)
        .map(|mut t| {
            t.bbox = BBox::new(t.bbox.x0 * s, t.bbox.y0 * s, t.bbox.x1 * s, t.bbox.y1 * s);
            t
        })
        .collect())
}

/// Reads ground truth for the fixture named in the page metadata and
/// reports it verbatim at confidence 1.0.
pub struct MockPerfectEngine {
    root: PathBuf,
}

impl MockPerfectEngine {
    pub fn new(root: PathBuf) -> Self {
        MockPerfectEngine { root }
    }
}

impl OcrEngine for MockPerfectEngine {
    fn id(&self) -> &str {
        "mock_perfect"
    }

    fn recognize(&self, img: &PageImage) -> Result<Vec<Token>, OcrError> {
        Ok(load_sidecar(&self.root, self.id(), img)?
            .into_iter()
            .enumerate()
            .map(|(i, t)| Token {
                id: TokenId(i as u32),
                text: t.text,
                bbox: t.bbox,
                page: img.page,
                confidence: 1.0,
                source: TokenSource::Ocr(self.id().to_string()),
            })
            .collect())
    }
}

/// Ground truth with seeded character substitutions at `rate`. Tokens whose
/// box holds no ink in the page image are not reported.
pub struct MockNoisyEngine {
    root: PathBuf,
    rate: f64,
    seed: u64,
}

const SUBSTITUTES: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

impl MockNoisyEngine {
    pub fn new(root: PathBuf, rate: f64, seed: u64) -> Self {
        MockNoisyEngine {
            root,
            rate: rate.clamp(0.0, 1.0),
            seed,
        }
    }

    fn rng_for(&self, img: &PageImage) -> ChaCha8Rng {
        // FNV-1a over the fixture id keeps the stream stable per page
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in img.tag.as_deref().unwrap_or("").bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(self.seed ^ h ^ (img.page as u64).rotate_left(32))
    }
}

fn has_ink(img: &PageImage, b: &BBox) -> bool {
    let x0 = b.x0.floor().max(0.0) as u32;
    let y0 = b.y0.floor().max(0.0) as u32;
    let x1 = (b.x1.ceil() as u32).min(img.width);
    let y1 = (b.y1.ceil() as u32).min(img.height);
    (y0..y1).any(|y| (x0..x1).any(|x| img.get(x, y) < 128))
}

impl OcrEngine for MockNoisyEngine {
    fn id(&self) -> &str {
        "mock_noisy"
    }

    fn recognize(&self, img: &PageImage) -> Result<Vec<Token>, OcrError> {
        let truth = load_sidecar(&self.root, self.id(), img)?;
        let mut rng = self.rng_for(img);
        let mut out = Vec::with_capacity(truth.len());
        for t in truth {
            let text: String = t
                .text
                .chars()
                .map(|c| {
                    if rng.random_bool(self.rate) {
                        let mut r = SUBSTITUTES[rng.random_range(0..SUBSTITUTES.len())] as char;
                        if r == c {
                            r = if c == 'X' { 'Y' } else { 'X' };
                        }
                        r
                    } else {
                        c
                    }
                })
                .collect();
            if !has_ink(img, &t.bbox) {
                continue;
            }
            out.push(Token {
                id: TokenId(out.len() as u32),
                text,
                bbox: t.bbox,
                page: img.page,
                confidence: 1.0 - self.rate,
                source: TokenSource::Ocr(self.id().to_string()),
            });
        }
        Ok(out)
    }
}

/// Shells out to an OCR program. The command template's `{input.png}` and
/// `{output.tsv}` placeholders are replaced with temporary paths.
pub struct ExternalProcessEngine {
    id: String,
    command: String,
}

impl ExternalProcessEngine {
    pub fn new(id: String, command: String) -> Self {
        ExternalProcessEngine { id, command }
    }
}

fn encode_png(img: &PageImage) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let ppm = (img.dpi as f64 / 0.0254).round() as u32;
        enc.set_pixel_dims(Some(png::PixelDimensions {
            xppu: ppm,
            yppu: ppm,
            unit: png::Unit::Meter,
        }));
        let mut w = enc.write_header()?;
        w.write_image_data(&img.pixels)?;
    }
    Ok(out)
}

impl OcrEngine for ExternalProcessEngine {
    fn id(&self) -> &str {
        &self.id
    }

    fn recognize(&self, img: &PageImage) -> Result<Vec<Token>, OcrError> {
        let dir = tempfile::tempdir().map_err(|e| failed(&self.id, e.to_string()))?;
        let input = dir.path().join("input.png");
        let output = dir.path().join("output.tsv");
        let png = encode_png(img).map_err(|e| failed(&self.id, e.to_string()))?;
        std::fs::write(&input, png).map_err(|e| failed(&self.id, e.to_string()))?;
        let cmd = self
            .command
            .replace("{input.png}", &input.display().to_string())
            .replace("{output.tsv}", &output.display().to_string());
        let run = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .output()
            .map_err(|e| failed(&self.id, e.to_string()))?;
        if !run.status.success() {
            return Err(failed(
                &self.id,
                format!("exit {}: {}", run.status, String::from_utf8_lossy(&run.stderr).trim()),
            ));
        }
        let tsv = std::fs::read_to_string(&output).map_err(|e| failed(&self.id, format!("no TSV output: {e}")))?;
        let mut tokens = parse_tsv(&tsv, &self.id).map_err(|m| failed(&self.id, m))?;
        for t in &mut tokens {
            t.page = img.page;
        }
        Ok(tokens)
    }
}

/// Parse word-level OCR TSV. Accepts the 12-column layout written by
/// Tesseract (`level … left top width height conf text`) and the 7-column
/// `page x0 y0 x1 y1 conf text` layout. Confidences are 0–100; rows with a
/// negative confidence or empty text are structural and skipped.
pub fn parse_tsv(tsv: &str, engine: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    for (lineno, line) in tsv.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if lineno == 0 && cols.iter().any(|c| c.eq_ignore_ascii_case("conf")) {
            continue;
        }
        let num = |s: &str| -> Result<f64, String> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("line {}: bad number {s:?}", lineno + 1))
        };
        let (page, bbox, conf, text) = match cols.len() {
            12 => {
                let (l, t, w, h) = (num(cols[6])?, num(cols[7])?, num(cols[8])?, num(cols[9])?);
                (num(cols[1])? as u32, BBox::new(l, t, l + w, t + h), num(cols[10])?, cols[11])
            }
            7 => (
                num(cols[0])? as u32,
                BBox::new(num(cols[1])?, num(cols[2])?, num(cols[3])?, num(cols[4])?),
                num(cols[5])?,
                cols[6],
            ),
            n => return Err(format!("line {}: expected 7 or 12 columns, found {n}", lineno + 1)),
        };
        let text = text.trim();
        if conf < 0.0 || text.is_empty() || !bbox.is_valid() {
            continue;
        }
        tokens.push(Token {
            id: TokenId(tokens.len() as u32),
            text: text.to_string(),
            bbox,
            page,
            confidence: (conf / 100.0).clamp(0.0, 1.0),
            source: TokenSource::Ocr(engine.to_string()),
        });
    }
    Ok(tokens)
}
