use super::{percentile, PageImage, PreprocessError};

/// Median over a (2r+1)² window with edge clamping. `radius` is 1 or 2.
pub fn denoise_median(img: &PageImage, radius: u32) -> PageImage {
    let r = radius.clamp(1, 2) as i64;
    let (w, h) = (img.width as i64, img.height as i64);
    let side = (2 * r + 1) as usize;
    let mid = side * side / 2;
    let mut out = vec![0u8; img.pixels.len()];
    let mut window = [0u8; 25];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            let mut all_same = true;
            let first = img.pixels[(y * w + x) as usize];
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h - 1);
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w - 1);
                    let v = img.pixels[(yy * w + xx) as usize];
                    all_same &= v == first;
                    window[k] = v;
                    k += 1;
                }
            }
            out[(y * w + x) as usize] = if all_same {
                first
            } else {
                let win = &mut window[..k];
                *win.select_nth_unstable(mid).1
            };
        }
    }
    img.with_pixels(img.width, img.height, out)
}

/// Share of interior pixels whose eight neighbours all differ from them by
/// more than half the value range: isolated impulse noise.
pub fn salt_fraction(img: &PageImage) -> f64 {
    let (w, h) = (img.width as usize, img.height as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let p = &img.pixels;
    let mut count = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = p[y * w + x] as i16;
            let isolated = [
                (y - 1) * w + x - 1,
                (y - 1) * w + x,
                (y - 1) * w + x + 1,
                y * w + x - 1,
                y * w + x + 1,
                (y + 1) * w + x - 1,
                (y + 1) * w + x,
                (y + 1) * w + x + 1,
            ]
            .iter()
            .all(|&i| (p[i] as i16 - c).abs() > 127);
            if isolated {
                count += 1;
            }
        }
    }
    count as f64 / ((w - 2) * (h - 2)) as f64
}

/// Otsu threshold from a histogram. Returns `None` for a single-valued
/// histogram. Ties go to the smallest threshold.
///
/// Between-class variance ω0ω1(μ0−μ1)² is evaluated as
/// (s0·n1 − s1·n0)² / (n0·n1), which is the same quantity scaled by N².
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let mut best: Option<(u8, f64)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 0..256usize {
        n0 += hist[t];
        s0 += t as u64 * hist[t];
        let n1 = total_n - n0;
        let s1 = total_s - s0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let var = between_class(n0, s0, n1, s1);
        if best.is_none_or(|(_, b)| var > b) {
            best = Some((t as u8, var));
        }
    }
    best.map(|(t, _)| t)
}

pub(crate) fn between_class(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    let d = s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128;
    let d = d as f64;
    d * d / (n0 as f64 * n1 as f64)
}

/// Binarize at the Otsu threshold: pixels ≤ t become 0, the rest 255.
/// A constant image comes back unchanged with threshold 128 and the
/// degenerate flag set.
pub fn binarize_otsu(img: &PageImage) -> (PageImage, u8, bool) {
    match otsu_threshold(&img.histogram()) {
        Some(t) => {
            let px = img.pixels.iter().map(|&p| if p <= t { 0 } else { 255 }).collect();
            (img.with_pixels(img.width, img.height, px), t, false)
        }
        None => (img.clone(), 128, true),
    }
}

/// Linear map of [P(p_low), P(p_high)] onto [0, 255], clamped.
pub fn contrast_stretch(img: &PageImage, p_low: f64, p_high: f64) -> Result<PageImage, PreprocessError> {
    if p_low >= p_high {
        return Err(PreprocessError::InvalidImage("p_low must be below p_high".into()));
    }
    let hist = img.histogram();
    let lo = percentile(&hist, p_low) as i32;
    let hi = percentile(&hist, p_high) as i32;
    if lo >= hi {
        return Err(PreprocessError::DegenerateHistogram);
    }
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let num = (v as i32 - lo) * 255;
        let den = hi - lo;
        // round half up on the non-negative range, clamp outside it
        let mapped = if num <= 0 { 0 } else { (2 * num + den) / (2 * den) };
        *slot = mapped.clamp(0, 255) as u8;
    }
    let px = img.pixels.iter().map(|&p| lut[p as usize]).collect();
    Ok(img.with_pixels(img.width, img.height, px))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_salt_is_removed() {
        let mut img = PageImage::filled(9, 9, 300, 0);
        img.pixels[4 * 9 + 4] = 255;
        let out = denoise_median(&img, 1);
        assert!(out.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn constant_image_is_fixed_point_of_median() {
        let img = PageImage::filled(20, 15, 300, 77);
        assert_eq!(denoise_median(&img, 2), img);
    }

    #[test]
    fn two_level_image_splits_between_levels() {
        let mut img = PageImage::filled(10, 10, 300, 50);
        for p in img.pixels.iter_mut().skip(50) {
            *p = 200;
        }
        let (out, t, degenerate) = binarize_otsu(&img);
        assert!(!degenerate);
        assert!((50..200).contains(&t));
        assert_eq!(t, 50, "flat plateau resolves to the smallest threshold");
        assert!(out.pixels.iter().all(|&p| p == 0 || p == 255));
        assert_eq!(out.pixels.iter().filter(|&&p| p == 0).count(), 50);
    }

    #[test]
    fn all_black_is_degenerate() {
        let img = PageImage::filled(10, 10, 300, 0);
        let (out, t, degenerate) = binarize_otsu(&img);
        assert!(degenerate);
        assert_eq!(t, 128);
        assert_eq!(out, img);
    }

    #[test]
    fn stretch_expands_narrow_range() {
        let px: Vec<u8> = (0..100).map(|i| 100 + (i % 51) as u8).collect();
        let img = PageImage::new(10, 10, 300, px).unwrap();
        let out = contrast_stretch(&img, 2.0, 98.0).unwrap();
        assert_eq!(*out.pixels.iter().min().unwrap(), 0);
        assert_eq!(*out.pixels.iter().max().unwrap(), 255);
    }

    #[test]
    fn stretch_of_constant_is_degenerate() {
        let img = PageImage::filled(10, 10, 300, 90);
        assert_eq!(contrast_stretch(&img, 2.0, 98.0), Err(PreprocessError::DegenerateHistogram));
    }

    #[test]
    fn salt_fraction_counts_isolated_pixels() {
        let mut img = PageImage::filled(10, 10, 300, 255);
        img.pixels[3 * 10 + 3] = 0;
        img.pixels[6 * 10 + 6] = 0;
        assert!((salt_fraction(&img) - 2.0 / 64.0).abs() < 1e-12);
    }
}
