//! Page images for reviewers. Scanned pages come back as scanned; text
//! PDFs without a page image are drawn from their text layer.

use invoice_core::ingest::{rasterize, DocumentFormat, IngestError, PdfDocument, RawDocument};
use invoice_core::preprocess::PageImage;
use thiserror::Error;

/// Resolution of text-layer previews.
pub const PREVIEW_DPI: u32 = 100;

#[derive(Debug, Error)]
pub enum PreviewError {
    #[error("page {0} does not exist")]
    NoSuchPage(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("png encoding: {0}")]
    Encode(String),
}

/// PNG bytes of page `n` (1-based).
pub fn page_png(doc: &RawDocument, n: usize, rasterizer_cmd: Option<&str>) -> Result<Vec<u8>, PreviewError> {
    if n == 0 {
        return Err(PreviewError::NoSuchPage(n));
    }
    let page = match rasterize(doc, PREVIEW_DPI, rasterizer_cmd) {
        Ok(mut pages) if n <= pages.len() => pages.swap_remove(n - 1),
        Ok(_) => return Err(PreviewError::NoSuchPage(n)),
        Err(IngestError::RasterizerUnavailable) if doc.format == DocumentFormat::Pdf => text_page(doc, n)?,
        Err(e) => return Err(e.into()),
    };
    encode(&page)
}

fn text_page(doc: &RawDocument, n: usize) -> Result<PageImage, PreviewError> {
    let pdf = PdfDocument::parse(&doc.bytes)?;
    let sizes = pdf.page_sizes(PREVIEW_DPI)?;
    let &(w, h) = sizes.get(n - 1).ok_or(PreviewError::NoSuchPage(n))?;
    let mut page = PageImage::filled(w.ceil() as u32, h.ceil() as u32, PREVIEW_DPI, 255);
    for t in pdf.text_tokens(PREVIEW_DPI)?.iter().filter(|t| t.page as usize == n - 1) {
        let chars: Vec<char> = t.text.chars().collect();
        if chars.is_empty() {
            continue;
        }
        let cell = t.bbox.width() / chars.len() as f64;
        for (i, c) in chars.iter().enumerate() {
            let x0 = t.bbox.x0 + i as f64 * cell;
            draw_glyph(&mut page, *c, x0, t.bbox.y0, cell, t.bbox.height());
        }
    }
    Ok(page)
}

/// Scale an 8x8 glyph into the cell by nearest neighbour.
fn draw_glyph(page: &mut PageImage, c: char, x0: f64, y0: f64, w: f64, h: f64) {
    let code = c as usize;
    let glyph = if code < 128 { font8x8::legacy::BASIC_LEGACY[code] } else { [0x7e; 8] };
    let (px0, py0) = (x0.floor().max(0.0) as u32, y0.floor().max(0.0) as u32);
    let (px1, py1) = (
        ((x0 + w).ceil() as u32).min(page.width),
        ((y0 + h).ceil() as u32).min(page.height),
    );
    for y in py0..py1 {
        let gy = (((f64::from(y) - y0) / h * 8.0) as usize).min(7);
        for x in px0..px1 {
            let gx = (((f64::from(x) - x0) / w * 8.0) as usize).min(7);
            if glyph[gy] >> gx & 1 == 1 {
                page.pixels[(y * page.width + x) as usize] = 0;
            }
        }
    }
}

fn encode(page: &PageImage) -> Result<Vec<u8>, PreviewError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, page.width, page.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| PreviewError::Encode(e.to_string()))?;
        w.write_image_data(&page.pixels).map_err(|e| PreviewError::Encode(e.to_string()))?;
    }
    Ok(out)
}
