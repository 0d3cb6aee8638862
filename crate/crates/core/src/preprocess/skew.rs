use super::filters::otsu_threshold;
use super::{PageImage, PreprocessError};
use crate::model::PreprocessTuning;

/// Page skew in degrees, positive when the content is turned
/// counterclockwise as viewed.
///
/// Edge points are the lower boundaries of dark runs (dark pixel above a
/// light one) after Otsu. Each votes for ρ = y·cosθ + x·sinθ over the search
/// range; the angle owning the single largest accumulator cell wins. Angles
/// are visited from 0 outward, negative before positive, and only a strictly
/// larger count replaces the incumbent.
pub fn estimate_skew_hough(img: &PageImage, tuning: &PreprocessTuning) -> Result<f64, PreprocessError> {
    let threshold = otsu_threshold(&img.histogram()).unwrap_or(128);
    let (w, h) = (img.width as usize, img.height as usize);
    let dark_count = img.pixels.iter().filter(|&&p| p <= threshold).count();
    if otsu_threshold(&img.histogram()).is_none()
        || (dark_count as f64) < tuning.min_dark_fraction * img.pixels.len() as f64
    {
        return Err(PreprocessError::BlankPage);
    }

    let mut points: Vec<(u32, u32)> = Vec::new();
    for y in 0..h.saturating_sub(1) {
        let row = y * w;
        for x in 0..w {
            if img.pixels[row + x] <= threshold && img.pixels[row + w + x] > threshold {
                points.push((x as u32, y as u32));
            }
        }
    }
    if points.is_empty() {
        return Err(PreprocessError::BlankPage);
    }

    let steps = (tuning.skew_search_deg / tuning.skew_step_deg).round() as i64;
    let mut order = vec![0i64];
    for k in 1..=steps {
        order.push(-k);
        order.push(k);
    }
    let max_sin = (tuning.skew_search_deg.to_radians()).sin();
    let offset = (w as f64 * max_sin).ceil() as i64 + 2;
    let bins = (h as i64 + 2 * offset + 2) as usize;
    let mut acc = vec![0u32; bins];

    let mut best_k = 0i64;
    let mut best_votes = 0u32;
    for &k in &order {
        let theta = (k as f64 * tuning.skew_step_deg).to_radians();
        let (s, c) = theta.sin_cos();
        acc.iter_mut().for_each(|a| *a = 0);
        for &(x, y) in &points {
            let rho = y as f64 * c + x as f64 * s;
            let idx = (rho.round() as i64 + offset) as usize;
            acc[idx] += 1;
        }
        let peak = *acc.iter().max().unwrap_or(&0);
        if peak > best_votes {
            best_votes = peak;
            best_k = k;
        }
    }
    Ok(best_k as f64 * tuning.skew_step_deg)
}
