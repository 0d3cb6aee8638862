//! Page rendering: text PDFs in Courier, bitmaps from an 8x8 glyph set
//! stretched to an 8x16 cell, scan-style image PDFs, and degradations.

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;
use invoice_core::ingest::BBox;
use invoice_core::preprocess::PageImage;
use rand::Rng;

pub const PAGE_W_PT: f64 = 612.0;
pub const PAGE_H_PT: f64 = 792.0;
pub const FONT_PT: f64 = 10.0;
/// Courier advance: 0.6 em.
pub const CHAR_PT: f64 = 6.0;
pub const PITCH_PT: f64 = 14.0;
pub const LEFT_PT: f64 = 54.0;
pub const FIRST_BASELINE_PT: f64 = 738.0;
/// Printable columns between the margins.
pub const COLUMNS: u32 = 84;
pub const DPI: u32 = 300;

pub const INK: u8 = 20;
pub const PAPER: u8 = 250;

/// A string placed on the character grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub row: u32,
    pub col: u32,
    pub text: String,
}

fn scale(dpi: u32) -> f64 {
    dpi as f64 / 72.0
}

pub fn baseline_pt(row: u32) -> f64 {
    FIRST_BASELINE_PT - row as f64 * PITCH_PT
}

pub fn x_pt(col: u32) -> f64 {
    LEFT_PT + col as f64 * CHAR_PT
}

/// Box of `len` characters starting at (`row`, `col`), in pixels at `dpi`,
/// with the 0.8 em ascent and 0.2 em descent used by the PDF text reader.
pub fn cell_bbox(row: u32, col: u32, len: usize, dpi: u32) -> BBox {
    let s = scale(dpi);
    let base = baseline_pt(row);
    let x0 = x_pt(col);
    BBox::new(
        x0 * s,
        (PAGE_H_PT - (base + 0.8 * FONT_PT)) * s,
        (x0 + len as f64 * CHAR_PT) * s,
        (PAGE_H_PT - (base - 0.2 * FONT_PT)) * s,
    )
}

fn pdf_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' | '(' | ')' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

fn pdf_literal(s: &str) -> String {
    format!("({})", pdf_escape(s))
}

/// Serialize numbered objects (1-based, in order) with an xref table.
fn assemble_pdf(objects: &[Vec<u8>], root: usize, info: Option<usize>) -> Vec<u8> {
    let mut out = b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n".to_vec();
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n", i + 1).as_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    }
    let xref = out.len();
    out.extend_from_slice(format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1).as_bytes());
    for off in offsets {
        out.extend_from_slice(format!("{off:010} 00000 n \n").as_bytes());
    }
    let info = info.map(|i| format!(" /Info {i} 0 R")).unwrap_or_default();
    out.extend_from_slice(
        format!(
            "trailer\n<< /Size {} /Root {root} 0 R{info} >>\nstartxref\n{xref}\n%%EOF\n",
            objects.len() + 1
        )
        .as_bytes(),
    );
    out
}

fn stream_object(dict: &str, data: &[u8]) -> Vec<u8> {
    let mut o = format!("<< {dict} /Length {} >>\nstream\n", data.len()).into_bytes();
    o.extend_from_slice(data);
    o.extend_from_slice(b"\nendstream");
    o
}

fn info_object(fixture_id: &str) -> Vec<u8> {
    format!("<< /Producer (invoice-eval) /FixtureId {} >>", pdf_literal(fixture_id)).into_bytes()
}

/// One-page letter PDF with an uncompressed content stream in Courier.
pub fn text_pdf(runs: &[Run], fixture_id: &str) -> Vec<u8> {
    let mut content = String::new();
    for r in runs {
        content.push_str(&format!(
            "BT /F1 {FONT_PT} Tf 1 0 0 1 {} {} Tm {} Tj ET\n",
            x_pt(r.col),
            baseline_pt(r.row),
            pdf_literal(&r.text)
        ));
    }
    let objects = vec![
        b"<< /Type /Catalog /Pages 2 0 R >>".to_vec(),
        format!("<< /Type /Pages /Kids [3 0 R] /Count 1 /MediaBox [0 0 {PAGE_W_PT} {PAGE_H_PT}] >>").into_bytes(),
        b"<< /Type /Page /Parent 2 0 R /Contents 4 0 R /Resources << /Font << /F1 5 0 R >> >> >>".to_vec(),
        stream_object("", content.as_bytes()),
        b"<< /Type /Font /Subtype /Type1 /BaseFont /Courier /Encoding /WinAnsiEncoding >>".to_vec(),
        info_object(fixture_id),
    ];
    assemble_pdf(&objects, 1, Some(6))
}

/// A scan-style PDF: the page is one full-page grayscale image.
pub fn image_pdf(img: &PageImage, fixture_id: &str) -> Vec<u8> {
    let mut z = ZlibEncoder::new(Vec::new(), Compression::fast());
    z.write_all(&img.pixels).expect("in-memory write");
    let data = z.finish().expect("in-memory write");
    let w_pt = img.width as f64 * 72.0 / img.dpi as f64;
    let h_pt = img.height as f64 * 72.0 / img.dpi as f64;
    let content = format!("q {w_pt} 0 0 {h_pt} 0 0 cm /Im0 Do Q");
    let objects = vec![
        b"<< /Type /Catalog /Pages 2 0 R >>".to_vec(),
        format!("<< /Type /Pages /Kids [3 0 R] /Count 1 /MediaBox [0 0 {w_pt} {h_pt}] >>").into_bytes(),
        b"<< /Type /Page /Parent 2 0 R /Contents 4 0 R /Resources << /XObject << /Im0 5 0 R >> >> >>".to_vec(),
        stream_object("", content.as_bytes()),
        stream_object(
            &format!(
                "/Type /XObject /Subtype /Image /Width {} /Height {} /ColorSpace /DeviceGray /BitsPerComponent 8 /Filter /FlateDecode",
                img.width, img.height
            ),
            &data,
        ),
        info_object(fixture_id),
    ];
    assemble_pdf(&objects, 1, Some(6))
}

/// Render runs onto a white letter page at [`DPI`]. Each glyph is 24x32 px
/// inside its 25 px advance.
pub fn rasterize_runs(runs: &[Run]) -> PageImage {
    let s = scale(DPI);
    let w = (PAGE_W_PT * s).round() as u32;
    let h = (PAGE_H_PT * s).round() as u32;
    let mut img = PageImage::filled(w, h, DPI, PAPER);
    for r in runs {
        for (i, ch) in r.text.chars().enumerate() {
            let cell = cell_bbox(r.row, r.col + i as u32, 1, DPI);
            draw_glyph(&mut img, ch, cell.x0.round() as u32, cell.y0.round() as u32 + 5);
        }
    }
    img
}

fn draw_glyph(img: &mut PageImage, ch: char, x: u32, y: u32) {
    let code = ch as usize;
    if code >= 128 {
        return;
    }
    let glyph = font8x8::legacy::BASIC_LEGACY[code];
    for (gy, bits) in glyph.iter().enumerate() {
        for gx in 0..8u32 {
            if bits & (1 << gx) == 0 {
                continue;
            }
            for py in 0..4 {
                for px in 0..3 {
                    let (xx, yy) = (x + gx * 3 + px, y + gy as u32 * 4 + py);
                    if xx < img.width && yy < img.height {
                        img.pixels[(yy * img.width + xx) as usize] = INK;
                    }
                }
            }
        }
    }
}

/// Turn the page content by `degrees` (counterclockwise as viewed) inside
/// the same frame, as a crooked scan would. Bilinear, white fill.
pub fn skew(img: &PageImage, degrees: f64) -> PageImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let (w, h) = (img.width as usize, img.height as usize);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let src = &img.pixels;
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            PAPER as f64
        } else {
            src[y as usize * w + x as usize] as f64
        }
    };
    let mut out = vec![PAPER; w * h];
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            let sx = cx + dx * c - dy * s;
            let sy = cy + dx * s + dy * c;
            let (fx, fy) = (sx.floor(), sy.floor());
            let (ax, ay) = (sx - fx, sy - fy);
            let (ix, iy) = (fx as i64, fy as i64);
            let top = at(ix, iy) * (1.0 - ax) + at(ix + 1, iy) * ax;
            let bottom = at(ix, iy + 1) * (1.0 - ax) + at(ix + 1, iy + 1) * ax;
            out[y * w + x] = (top * (1.0 - ay) + bottom * ay).round() as u8;
        }
    }
    let mut page = img.clone();
    page.pixels = out;
    page
}

/// Salt-and-pepper noise: each pixel is replaced with probability `p`,
/// by black or white with equal odds.
pub fn salt_and_pepper(img: &mut PageImage, p: f64, rng: &mut impl Rng) {
    if p <= 0.0 {
        return;
    }
    for px in img.pixels.iter_mut() {
        if rng.random_bool(p.min(1.0)) {
            *px = if rng.random_bool(0.5) { 0 } else { 255 };
        }
    }
}

/// Grayscale PNG with the resolution in pHYs and a `fixture-id` text chunk.
pub fn encode_png(img: &PageImage, fixture_id: Option<&str>) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        let ppm = (img.dpi as f64 / 0.0254).round() as u32;
        enc.set_pixel_dims(Some(png::PixelDimensions {
            xppu: ppm,
            yppu: ppm,
            unit: png::Unit::Meter,
        }));
        if let Some(id) = fixture_id {
            enc.add_text_chunk("fixture-id".to_string(), id.to_string())
                .expect("latin-1 fixture id");
        }
        let mut writer = enc.write_header().expect("in-memory png");
        writer.write_image_data(&img.pixels).expect("in-memory png");
    }
    out
}
