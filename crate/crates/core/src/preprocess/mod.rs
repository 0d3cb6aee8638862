//! Grayscale page enhancement ahead of OCR.

mod filters;
mod geometry;
mod skew;

use std::fmt;

use thiserror::Error;

use crate::model::PreprocessTuning;

pub use filters::{binarize_otsu, contrast_stretch, denoise_median, otsu_threshold, salt_fraction};
pub use geometry::{crop_center, normalize_dpi, resize_bilinear, rotate};
pub use skew::estimate_skew_hough;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("image too small ({0}x{1}); need at least 32x32")]
    ImageTooSmall(u32, u32),
    #[error("blank page: no text-like content")]
    BlankPage,
    #[error("degenerate histogram")]
    DegenerateHistogram,
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

/// Row-major 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq)]
pub struct PageImage {
    pub width: u32,
    pub height: u32,
    pub dpi: u32,
    pub pixels: Vec<u8>,
    pub page: u32,
    /// Fixture identifier carried in image metadata, used by mock engines.
    pub tag: Option<String>,
}

impl fmt::Debug for PageImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PageImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("dpi", &self.dpi)
            .field("page", &self.page)
            .field("tag", &self.tag)
            .finish_non_exhaustive()
    }
}

impl PageImage {
    pub fn new(width: u32, height: u32, dpi: u32, pixels: Vec<u8>) -> Result<Self, PreprocessError> {
        if pixels.len() != width as usize * height as usize {
            return Err(PreprocessError::InvalidImage(format!(
                "{} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        if dpi == 0 {
            return Err(PreprocessError::InvalidImage("dpi must be positive".into()));
        }
        Ok(PageImage {
            width,
            height,
            dpi,
            pixels,
            page: 0,
            tag: None,
        })
    }

    pub fn filled(width: u32, height: u32, dpi: u32, value: u8) -> Self {
        PageImage {
            width,
            height,
            dpi,
            pixels: vec![value; width as usize * height as usize],
            page: 0,
            tag: None,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Same metadata, new raster.
    pub(crate) fn with_pixels(&self, width: u32, height: u32, pixels: Vec<u8>) -> PageImage {
        PageImage {
            width,
            height,
            dpi: self.dpi,
            pixels,
            page: self.page,
            tag: self.tag.clone(),
        }
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[p as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub sharpness: f64,
    pub contrast: f64,
    pub skew_deg: f64,
    pub score: f64,
    /// Share of isolated impulse pixels.
    pub salt: f64,
    /// No text-like content was found; skew is reported as 0.
    pub blank: bool,
}

/// Variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(img: &PageImage) -> f64 {
    let (w, h) = (img.width as usize, img.height as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let p = &img.pixels;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for y in 1..h - 1 {
        let row = y * w;
        for x in 1..w - 1 {
            let i = row + x;
            let v = p[i - 1] as i32 + p[i + 1] as i32 + p[i - w] as i32 + p[i + w] as i32
                - 4 * p[i] as i32;
            sum += v as f64;
            sum_sq += (v * v) as f64;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

/// Nearest-rank percentile of the pixel values, `p` in [0, 100].
pub fn percentile(hist: &[u64; 256], p: f64) -> u8 {
    let n: u64 = hist.iter().sum();
    let rank = ((p / 100.0 * n as f64).ceil() as u64).clamp(1, n.max(1));
    let mut seen = 0;
    for (v, &c) in hist.iter().enumerate() {
        seen += c;
        if seen >= rank {
            return v as u8;
        }
    }
    255
}

pub fn assess_quality(img: &PageImage, tuning: &PreprocessTuning) -> Result<QualityReport, PreprocessError> {
    if img.width < 32 || img.height < 32 {
        return Err(PreprocessError::ImageTooSmall(img.width, img.height));
    }
    let sharpness = laplacian_variance(img);
    let hist = img.histogram();
    let contrast = (percentile(&hist, tuning.stretch_low_percentile).abs_diff(percentile(&hist, tuning.stretch_high_percentile))) as f64
        / 255.0;
    let (skew_deg, blank) = match estimate_skew_hough(img, tuning) {
        Ok(s) => (s, false),
        Err(PreprocessError::BlankPage) => (0.0, true),
        Err(e) => return Err(e),
    };
    let score = (tuning.weight_sharpness * (sharpness / tuning.sharpness_norm).min(1.0)
        + tuning.weight_contrast * contrast
        + tuning.weight_skew * (1.0 - (skew_deg.abs() / tuning.skew_norm_deg).min(1.0)))
    .clamp(0.0, 1.0);
    Ok(QualityReport {
        sharpness,
        contrast,
        skew_deg,
        score,
        salt: salt_fraction(img),
        blank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    NormalizeDpi,
    Denoise,
    Deskew,
    ContrastStretch,
    Binarize,
}

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::NormalizeDpi => "normalize_dpi",
            Step::Denoise => "denoise",
            Step::Deskew => "deskew",
            Step::ContrastStretch => "contrast_stretch",
            Step::Binarize => "binarize",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub image: PageImage,
    pub applied: Vec<Step>,
    /// Quality of the page after DPI normalization, before enhancement.
    pub quality: QualityReport,
    pub blank: bool,
    pub notes: Vec<String>,
}

/// Fixed-order enhancement with quality-driven gates. Only the gated steps
/// whose conditions hold are run.
pub fn preprocess_adaptive(
    img: &PageImage,
    target_dpi: u32,
    tuning: &PreprocessTuning,
) -> Result<Preprocessed, PreprocessError> {
    let mut cur = normalize_dpi(img, target_dpi);
    let mut applied = vec![Step::NormalizeDpi];
    let mut notes = Vec::new();
    let quality = assess_quality(&cur, tuning)?;
    if quality.blank {
        return Ok(Preprocessed {
            image: cur,
            applied,
            quality,
            blank: true,
            notes: vec!["blank page".into()],
        });
    }

    if quality.sharpness < tuning.denoise_below_sharpness || quality.salt > tuning.denoise_above_salt {
        cur = denoise_median(&cur, 1);
        applied.push(Step::Denoise);
    }

    let skew = if applied.contains(&Step::Denoise) {
        match estimate_skew_hough(&cur, tuning) {
            Ok(s) => s,
            Err(PreprocessError::BlankPage) => quality.skew_deg,
            Err(e) => return Err(e),
        }
    } else {
        quality.skew_deg
    };
    if skew.abs() > tuning.deskew_above_deg {
        let rotated = rotate(&cur, -skew);
        // keep the original frame so downstream coordinates stay comparable
        cur = geometry::crop_center(&rotated, cur.width, cur.height);
        applied.push(Step::Deskew);
        notes.push(format!("deskewed by {:.1} deg", -skew));
    }

    if quality.contrast < tuning.stretch_below_contrast {
        match contrast_stretch(&cur, tuning.stretch_low_percentile, tuning.stretch_high_percentile) {
            Ok(s) => {
                cur = s;
                applied.push(Step::ContrastStretch);
            }
            Err(PreprocessError::DegenerateHistogram) => {
                notes.push("contrast stretch skipped: degenerate histogram".into());
            }
            Err(e) => return Err(e),
        }
    }

    let (bin, _, degenerate) = binarize_otsu(&cur);
    if degenerate {
        notes.push("binarize: degenerate histogram".into());
    }
    cur = bin;
    applied.push(Step::Binarize);

    Ok(Preprocessed {
        image: cur,
        applied,
        quality,
        blank: false,
        notes,
    })
}
