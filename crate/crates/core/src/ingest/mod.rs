//! Document intake: format sniffing, embedded PDF text, and page images.

mod pdf;
mod raster;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::TokenId;

pub use pdf::{extract_embedded_text, PdfDocument};
pub use raster::{estimate_dpi, rasterize, read_png_metadata};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown document format")]
    UnknownFormat,
    #[error("corrupt PDF: {0}")]
    CorruptPdf(String),
    #[error("encrypted PDF")]
    EncryptedPdf,
    #[error("unsupported PDF feature: {0}")]
    Unsupported(String),
    #[error("no PDF rasterizer configured")]
    RasterizerUnavailable,
    #[error("rasterizer failed: {0}")]
    RasterizerFailed(String),
    #[error("cannot decode image: {0}")]
    DecodeError(String),
    #[error("document is not a PDF")]
    NotPdf,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    Pdf,
    Png,
    Jpeg,
    Tiff,
    Unknown,
}

impl fmt::Display for DocumentFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DocumentFormat::Pdf => "pdf",
            DocumentFormat::Png => "png",
            DocumentFormat::Jpeg => "jpeg",
            DocumentFormat::Tiff => "tiff",
            DocumentFormat::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Sniff the format from magic bytes. Only the first 16 bytes are examined.
pub fn detect_format(bytes: &[u8]) -> Result<DocumentFormat, IngestError> {
    let head = &bytes[..bytes.len().min(16)];
    if head.len() < 8 {
        return Err(IngestError::UnknownFormat);
    }
    let format = if head.starts_with(b"%PDF-") {
        DocumentFormat::Pdf
    } else if head.starts_with(b"\x89PNG\r\n\x1a\n") {
        DocumentFormat::Png
    } else if head.starts_with(&[0xFF, 0xD8, 0xFF]) {
        DocumentFormat::Jpeg
    } else if head.starts_with(b"II*\0") || head.starts_with(b"MM\0*") {
        DocumentFormat::Tiff
    } else {
        return Err(IngestError::UnknownFormat);
    };
    Ok(format)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub bytes: Vec<u8>,
    pub format: DocumentFormat,
    pub source_path: String,
    pub content_hash: String,
}

impl fmt::Debug for RawDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawDocument")
            .field("format", &self.format)
            .field("source_path", &self.source_path)
            .field("len", &self.bytes.len())
            .field("content_hash", &self.content_hash)
            .finish()
    }
}

impl RawDocument {
    /// Wrap bytes, hashing them and sniffing the format. Unrecognized
    /// content is kept with format `Unknown` so callers can report it.
    pub fn from_bytes(bytes: Vec<u8>, source_path: impl Into<String>) -> Self {
        let format = detect_format(&bytes).unwrap_or(DocumentFormat::Unknown);
        let content_hash = sha256_hex(&bytes);
        RawDocument {
            bytes,
            format,
            source_path: source_path.into(),
            content_hash,
        }
    }

    pub fn open(path: &Path) -> Result<Self, IngestError> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(bytes, path.display().to_string()))
    }
}

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center_y(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn vertical_overlap(&self, other: &BBox) -> f64 {
        (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0)
    }

    pub fn horizontal_overlap(&self, other: &BBox) -> f64 {
        (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenSource {
    Embedded,
    Ocr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub text: String,
    pub bbox: BBox,
    pub page: u32,
    pub confidence: f64,
    pub source: TokenSource,
}

/// Sort tokens into reading order (page, line band, x0) and renumber ids.
///
/// A band opens at the topmost remaining token; later tokens whose vertical
/// center falls inside that first token's extent join it.
pub fn reading_order(mut tokens: Vec<Token>) -> Vec<Token> {
    tokens.sort_by(|a, b| {
        a.page
            .cmp(&b.page)
            .then(a.bbox.center_y().total_cmp(&b.bbox.center_y()))
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
    });
    let bands = line_bands(&tokens);
    let mut keyed: Vec<(u32, usize, Token)> = tokens
        .into_iter()
        .zip(bands)
        .map(|(t, band)| (t.page, band, t))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.bbox.x0.total_cmp(&b.2.bbox.x0))
    });
    keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, mut t))| {
            t.id = TokenId(i as u32);
            t
        })
        .collect()
}

/// Band index per token; `tokens` must be sorted by (page, center y).
pub fn line_bands(tokens: &[Token]) -> Vec<usize> {
    let mut bands = Vec::with_capacity(tokens.len());
    let mut band = 0usize;
    let mut anchor: Option<(u32, BBox)> = None;
    for t in tokens {
        match anchor {
            Some((page, bb)) if page == t.page && t.bbox.center_y() <= bb.y1 => {}
            Some(_) => {
                band += 1;
                anchor = Some((t.page, t.bbox));
            }
            None => anchor = Some((t.page, t.bbox)),
        }
        bands.push(band);
    }
    bands
}

/// Plain text of a token stream: tokens joined by spaces, band breaks as
/// newlines, pages separated by a form feed line.
pub fn tokens_to_text(tokens: &[Token]) -> String {
    let mut sorted: Vec<&Token> = tokens.iter().collect();
    sorted.sort_by_key(|t| t.id);
    let owned: Vec<Token> = sorted.iter().map(|t| (*t).clone()).collect();
    let mut by_center = owned.clone();
    by_center.sort_by(|a, b| {
        a.page
            .cmp(&b.page)
            .then(a.bbox.center_y().total_cmp(&b.bbox.center_y()))
            .then(a.bbox.x0.total_cmp(&b.bbox.x0))
    });
    let bands = line_bands(&by_center);
    let band_of: std::collections::HashMap<TokenId, usize> =
        by_center.iter().zip(bands).map(|(t, b)| (t.id, b)).collect();

    let mut out = String::new();
    let mut prev: Option<(u32, usize)> = None;
    for t in &owned {
        let key = (t.page, band_of[&t.id]);
        match prev {
            None => {}
            Some((p, _)) if p != key.0 => out.push_str("\n\u{c}\n"),
            Some(k) if k != key => out.push('\n'),
            Some(_) => out.push(' '),
        }
        out.push_str(&t.text);
        prev = Some(key);
    }
    out
}
