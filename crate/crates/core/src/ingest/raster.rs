use std::io::Cursor;
use std::path::Path;
use std::process::Command;

use super::pdf::PdfDocument;
use super::{DocumentFormat, IngestError, RawDocument};
use crate::preprocess::PageImage;

/// Resolution guess for an image without metadata: the page is assumed
/// letter width (8.5 in), or A4 width (8.27 in) when clearly taller than
/// letter proportions.
pub fn estimate_dpi(width: u32, height: u32) -> u32 {
    let inches = if height as f64 / width.max(1) as f64 > 1.4 {
        8.27
    } else {
        8.5
    };
    ((width as f64 / inches).round() as u32).max(1)
}

/// DPI from the pHYs chunk and the `fixture-id` text chunk of a PNG.
pub fn read_png_metadata(bytes: &[u8]) -> Result<(Option<u32>, Option<String>), IngestError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let reader = decoder
        .read_info()
        .map_err(|e| IngestError::DecodeError(e.to_string()))?;
    let info = reader.info();
    let dpi = info.pixel_dims.and_then(|d| match d.unit {
        png::Unit::Meter if d.xppu > 0 => Some((d.xppu as f64 * 0.0254).round() as u32),
        _ => None,
    });
    let tag = info
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == "fixture-id")
        .map(|t| t.text.clone())
        .or_else(|| {
            info.utf8_text
                .iter()
                .find(|t| t.keyword == "fixture-id")
                .and_then(|t| t.get_text().ok())
        });
    Ok((dpi, tag))
}

/// Density from a JFIF APP0 segment, if the file starts with one.
fn jfif_dpi(bytes: &[u8]) -> Option<u32> {
    if bytes.len() < 18 || bytes[2..4] != [0xFF, 0xE0] || &bytes[6..11] != b"JFIF\0" {
        return None;
    }
    let units = bytes[13];
    let xd = u16::from_be_bytes([bytes[14], bytes[15]]) as f64;
    match units {
        1 if xd > 0.0 => Some(xd as u32),
        2 if xd > 0.0 => Some((xd * 2.54).round() as u32),
        _ => None,
    }
}

fn decode_image(bytes: &[u8], format: image::ImageFormat) -> Result<(u32, u32, Vec<u8>), IngestError> {
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| IngestError::DecodeError(e.to_string()))?;
    let gray = img.to_luma8();
    Ok((gray.width(), gray.height(), gray.into_raw()))
}

fn page_from_image(bytes: &[u8], format: DocumentFormat) -> Result<PageImage, IngestError> {
    let (fmt, (meta_dpi, tag)) = match format {
        DocumentFormat::Png => (image::ImageFormat::Png, read_png_metadata(bytes)?),
        DocumentFormat::Jpeg => (image::ImageFormat::Jpeg, (jfif_dpi(bytes), None)),
        DocumentFormat::Tiff => (image::ImageFormat::Tiff, (None, None)),
        _ => return Err(IngestError::UnknownFormat),
    };
    let (w, h, pixels) = decode_image(bytes, fmt)?;
    let dpi = meta_dpi.unwrap_or_else(|| estimate_dpi(w, h));
    let mut page = PageImage::new(w, h, dpi, pixels).map_err(|e| IngestError::DecodeError(e.to_string()))?;
    page.tag = tag;
    Ok(page)
}

/// One grayscale page per document page. Bitmaps pass through at their own
/// resolution; PDFs use their embedded page scans, or the external
/// rasterizer at `dpi` when pages are not plain scans.
pub fn rasterize(doc: &RawDocument, dpi: u32, rasterizer_cmd: Option<&str>) -> Result<Vec<PageImage>, IngestError> {
    match doc.format {
        DocumentFormat::Png | DocumentFormat::Jpeg | DocumentFormat::Tiff => {
            Ok(vec![page_from_image(&doc.bytes, doc.format)?])
        }
        DocumentFormat::Pdf => {
            let pdf = PdfDocument::parse(&doc.bytes)?;
            if pdf.is_encrypted() {
                return Err(IngestError::EncryptedPdf);
            }
            let scans = pdf.page_images()?;
            if !scans.is_empty() && scans.iter().all(Option::is_some) {
                return Ok(scans.into_iter().flatten().collect());
            }
            match rasterizer_cmd {
                Some(cmd) => {
                    let mut pages = run_rasterizer(cmd, &doc.bytes, dpi)?;
                    let tag = pdf.info("FixtureId");
                    for p in &mut pages {
                        p.tag = tag.clone();
                    }
                    Ok(pages)
                }
                None => Err(IngestError::RasterizerUnavailable),
            }
        }
        DocumentFormat::Unknown => Err(IngestError::UnknownFormat),
    }
}

fn run_rasterizer(template: &str, pdf: &[u8], dpi: u32) -> Result<Vec<PageImage>, IngestError> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("input.pdf");
    std::fs::write(&input, pdf)?;
    let outdir = dir.path().join("pages");
    std::fs::create_dir_all(&outdir)?;
    let cmd = template
        .replace("{input}", &input.display().to_string())
        .replace("{dpi}", &dpi.to_string())
        .replace("{outdir}", &outdir.display().to_string());
    let status = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| IngestError::RasterizerFailed(e.to_string()))?;
    if !status.status.success() {
        return Err(IngestError::RasterizerFailed(format!(
            "exit {}: {}",
            status.status,
            String::from_utf8_lossy(&status.stderr).trim()
        )));
    }
    let pages = collect_pngs(&outdir)?;
    if pages.is_empty() {
        return Err(IngestError::RasterizerFailed("no pages produced".into()));
    }
    Ok(pages)
}

fn collect_pngs(dir: &Path) -> Result<Vec<PageImage>, IngestError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let mut pages = Vec::new();
    for (i, f) in files.iter().enumerate() {
        let bytes = std::fs::read(f)?;
        let mut page = page_from_image(&bytes, DocumentFormat::Png)?;
        page.page = i as u32;
        pages.push(page);
    }
    Ok(pages)
}
