use super::PageImage;

#[inline]
fn sample_bilinear(img: &PageImage, sx: f64, sy: f64, fill: u8) -> u8 {
    let (w, h) = (img.width as i64, img.height as i64);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let px = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            fill as f64
        } else {
            img.pixels[(y * w + x) as usize] as f64
        }
    };
    if fx == 0.0 && fy == 0.0 {
        return px(x0, y0) as u8;
    }
    let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
    let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
    (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
}

/// Canvas side needed for a rotated extent, with its parity matched to the
/// source side it mostly derives from so centers stay on the same grid.
fn expanded(needed: f64, parity_of: u32) -> u32 {
    let mut n = (needed - 1e-9).ceil().max(1.0) as u32;
    if (n ^ parity_of) & 1 == 1 {
        n += 1;
    }
    n
}

/// Rotate about the center by `degrees`, positive counterclockwise as
/// viewed. The canvas grows to hold the rotated page; uncovered area is
/// white.
pub fn rotate(img: &PageImage, degrees: f64) -> PageImage {
    if degrees == 0.0 {
        return img.clone();
    }
    let th = degrees.to_radians();
    let (s, c) = th.sin_cos();
    let (w, h) = (img.width as f64, img.height as f64);
    let upright = c.abs() >= s.abs();
    let (pw, ph) = if upright {
        (img.width, img.height)
    } else {
        (img.height, img.width)
    };
    let nw = expanded(w * c.abs() + h * s.abs(), pw);
    let nh = expanded(w * s.abs() + h * c.abs(), ph);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ncx, ncy) = ((nw as f64 - 1.0) / 2.0, (nh as f64 - 1.0) / 2.0);
    let mut out = vec![255u8; nw as usize * nh as usize];
    for y in 0..nh {
        let dy = y as f64 - ncy;
        for x in 0..nw {
            let dx = x as f64 - ncx;
            let sx = cx + dx * c - dy * s;
            let sy = cy + dx * s + dy * c;
            if sx <= -1.0 || sy <= -1.0 || sx >= w || sy >= h {
                continue;
            }
            out[(y * nw + x) as usize] = sample_bilinear(img, sx, sy, 255);
        }
    }
    img.with_pixels(nw, nh, out)
}

/// Central `w`×`h` window; the canvas is padded white where it is smaller.
pub fn crop_center(img: &PageImage, w: u32, h: u32) -> PageImage {
    let ox = (img.width as i64 - w as i64).div_euclid(2);
    let oy = (img.height as i64 - h as i64).div_euclid(2);
    let mut out = vec![255u8; w as usize * h as usize];
    for y in 0..h as i64 {
        let sy = y + oy;
        if sy < 0 || sy >= img.height as i64 {
            continue;
        }
        for x in 0..w as i64 {
            let sx = x + ox;
            if sx < 0 || sx >= img.width as i64 {
                continue;
            }
            out[(y * w as i64 + x) as usize] = img.pixels[(sy * img.width as i64 + sx) as usize];
        }
    }
    img.with_pixels(w, h, out)
}

/// Bilinear resize to exactly `nw`×`nh`, sampling at pixel centers.
pub fn resize_bilinear(img: &PageImage, nw: u32, nh: u32) -> PageImage {
    if nw == img.width && nh == img.height {
        return img.clone();
    }
    let sxr = img.width as f64 / nw as f64;
    let syr = img.height as f64 / nh as f64;
    let maxx = (img.width - 1) as f64;
    let maxy = (img.height - 1) as f64;
    let mut out = Vec::with_capacity(nw as usize * nh as usize);
    for y in 0..nh {
        let sy = ((y as f64 + 0.5) * syr - 0.5).clamp(0.0, maxy);
        for x in 0..nw {
            let sx = ((x as f64 + 0.5) * sxr - 0.5).clamp(0.0, maxx);
            out.push(sample_bilinear(img, sx, sy, 255));
        }
    }
    img.with_pixels(nw, nh, out)
}

/// Rescale so the raster is at `target` dpi.
pub fn normalize_dpi(img: &PageImage, target: u32) -> PageImage {
    if img.dpi == target {
        return img.clone();
    }
    let f = target as f64 / img.dpi as f64;
    let nw = ((img.width as f64 * f).round() as u32).max(1);
    let nh = ((img.height as f64 * f).round() as u32).max(1);
    let mut out = resize_bilinear(img, nw, nh);
    out.dpi = target;
    out
}
