//! Point operators and the blend-based enhancement family.
//!
//! Enhancement operators compute a degenerate image `d` and blend it with the
//! source `s` per channel value:
//!
//! ```text
//! out = clamp(round(d + factor * (s - d)), 0, 255)
//! ```
//!
//! with rounding half away from zero. Degenerate images:
//!
//! * `Color`: luma replicated to every channel (grayscale inputs are their own luma)
//! * `Contrast`: constant image at `floor(mean luma + 0.5)`
//! * `Brightness`: black
//! * `Sharpness`: 3x3 smooth kernel `[1 1 1; 1 5 1; 1 1 1] / 13` on interior
//!   pixels (integer division with rounding), border pixels copied
//!
//! Luma is the fixed-point ITU-R 601 weighting
//! `(19595 R + 38470 G + 7471 B + 32768) >> 16`.

use super::Image;

#[inline]
fn saturate(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[inline]
pub(crate) fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((19595 * r as u32 + 38470 * g as u32 + 7471 * b as u32 + 0x8000) >> 16) as u8
}

pub(crate) fn invert(image: &Image) -> Image {
    image.map_pixels(|p| 255 - p)
}

/// Keeps the `bits` most significant bits of every value.
pub(crate) fn posterize(image: &Image, bits: u8) -> Image {
    let mask = if bits == 0 { 0 } else { 0xFFu8 << (8 - bits.min(8)) };
    image.map_pixels(|p| p & mask)
}

/// Inverts every value at or above `threshold`.
pub(crate) fn solarize(image: &Image, threshold: f64) -> Image {
    image.map_pixels(|p| if p as f64 >= threshold { 255 - p } else { p })
}

/// Adds `addition` to every value below `threshold`, saturating.
pub(crate) fn solarize_add(image: &Image, addition: i32, threshold: u8) -> Image {
    image.map_pixels(|p| {
        if p < threshold {
            (p as i32 + addition).clamp(0, 255) as u8
        } else {
            p
        }
    })
}

fn channel_values(image: &Image, c: u8) -> impl Iterator<Item = u8> + '_ {
    image
        .pixels()
        .iter()
        .skip(c as usize)
        .step_by(image.channels() as usize)
        .copied()
}

fn per_channel_lut(image: &Image, build: impl Fn(&Image, u8) -> [u8; 256]) -> Image {
    let channels = image.channels() as usize;
    let luts: Vec<[u8; 256]> = (0..channels as u8).map(|c| build(image, c)).collect();
    let pixels = image
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &p)| luts[i % channels][p as usize])
        .collect();
    image.with_pixels(pixels)
}

/// Stretches each channel so its darkest value maps to 0 and brightest to 255.
pub(crate) fn autocontrast(image: &Image) -> Image {
    per_channel_lut(image, |img, c| {
        let (lo, hi) = channel_values(img, c).fold((255u8, 0u8), |(lo, hi), p| (lo.min(p), hi.max(p)));
        let mut lut = [0u8; 256];
        for (i, entry) in lut.iter_mut().enumerate() {
            *entry = if hi <= lo {
                i as u8
            } else {
                let span = (hi - lo) as u32;
                let shifted = (i as i32 - lo as i32).clamp(0, span as i32) as u32;
                ((shifted * 255 + span / 2) / span) as u8
            };
        }
        lut
    })
}

/// Per-channel histogram equalization using the cumulative histogram with
/// the final occupied bin excluded from the step size.
pub(crate) fn equalize(image: &Image) -> Image {
    per_channel_lut(image, |img, c| {
        let mut hist = [0u64; 256];
        for p in channel_values(img, c) {
            hist[p as usize] += 1;
        }
        let total: u64 = hist.iter().sum();
        let last = hist.iter().rev().find(|&&h| h > 0).copied().unwrap_or(0);
        let step = (total - last) / 255;
        let mut lut = [0u8; 256];
        if step == 0 {
            for (i, entry) in lut.iter_mut().enumerate() {
                *entry = i as u8;
            }
            return lut;
        }
        let mut n = step / 2;
        for (i, entry) in lut.iter_mut().enumerate() {
            *entry = (n / step).min(255) as u8;
            n += hist[i];
        }
        lut
    })
}

fn blend(degenerate: &[u8], image: &Image, factor: f64) -> Image {
    let pixels = degenerate
        .iter()
        .zip(image.pixels())
        .map(|(&d, &s)| {
            let d = d as f64;
            saturate(d + factor * (s as f64 - d))
        })
        .collect();
    image.with_pixels(pixels)
}

fn luma_plane(image: &Image) -> Vec<u8> {
    match image.channels() {
        1 => image.pixels().to_vec(),
        _ => image
            .pixels()
            .chunks_exact(3)
            .map(|px| luma(px[0], px[1], px[2]))
            .collect(),
    }
}

pub(crate) fn color(image: &Image, factor: f64) -> Image {
    if image.channels() == 1 {
        return image.clone();
    }
    let degenerate: Vec<u8> = luma_plane(image).into_iter().flat_map(|l| [l, l, l]).collect();
    blend(&degenerate, image, factor)
}

pub(crate) fn contrast(image: &Image, factor: f64) -> Image {
    let plane = luma_plane(image);
    let sum: u64 = plane.iter().map(|&v| v as u64).sum();
    let mean = (sum as f64 / plane.len() as f64 + 0.5).floor().clamp(0.0, 255.0) as u8;
    let degenerate = vec![mean; image.pixels().len()];
    blend(&degenerate, image, factor)
}

pub(crate) fn brightness(image: &Image, factor: f64) -> Image {
    let degenerate = vec![0u8; image.pixels().len()];
    blend(&degenerate, image, factor)
}

pub(crate) fn sharpness(image: &Image, factor: f64) -> Image {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let mut degenerate = image.pixels().to_vec();
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                for c in 0..ch {
                    let mut acc = 0u32;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let weight = if dx == 1 && dy == 1 { 5 } else { 1 };
                            acc += weight * image.get(x + dx - 1, y + dy - 1, c) as u32;
                        }
                    }
                    degenerate[image.index(x, y, c)] = ((acc + 6) / 13) as u8;
                }
            }
        }
    }
    blend(&degenerate, image, factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_values_gray() -> Image {
        Image::new(16, 16, 1, (0..=255u8).collect()).unwrap()
    }

    fn rgb(pixels: Vec<u8>, width: u32) -> Image {
        let height = pixels.len() as u32 / (3 * width);
        Image::new(width, height, 3, pixels).unwrap()
    }

    #[test]
    fn posterize_table_matches_mask_oracle() {
        let img = all_values_gray();
        for bits in 0..=8u8 {
            let out = posterize(&img, bits);
            for v in 0..=255u8 {
                // oracle: clear the low (8 - bits) bits by integer division
                let keep = 1u32 << (8 - bits as u32);
                let expected = ((v as u32 / keep) * keep) as u8;
                assert_eq!(out.pixels()[v as usize], expected, "bits={bits} v={v}");
            }
        }
        assert_eq!(posterize(&img, 4).pixels()[200], 192);
    }

    #[test]
    fn solarize_examples_and_table() {
        let img = all_values_gray();
        let out = solarize(&img, 128.0);
        assert_eq!(out.pixels()[200], 55);
        assert_eq!(out.pixels()[100], 100);
        for v in 0..=255u8 {
            let expected = if v >= 128 { 255 - v } else { v };
            assert_eq!(out.pixels()[v as usize], expected);
        }
        assert_eq!(solarize(&img, 256.0), img);
        assert_eq!(solarize(&img, 0.0), invert(&img));
    }

    #[test]
    fn solarize_add_saturates() {
        let img = all_values_gray();
        let out = solarize_add(&img, 110, 128);
        assert_eq!(out.pixels()[0], 110);
        assert_eq!(out.pixels()[127], 237);
        assert_eq!(out.pixels()[128], 128);
        let out = solarize_add(&img, 200, 128);
        assert_eq!(out.pixels()[100], 255);
    }

    #[test]
    fn invert_is_an_involution() {
        let img = all_values_gray();
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn enhancements_at_factor_one_are_identity() {
        let img = rgb((0..96u32).map(|i| (i * 53 % 256) as u8).collect(), 4);
        assert_eq!(color(&img, 1.0), img);
        assert_eq!(contrast(&img, 1.0), img);
        assert_eq!(brightness(&img, 1.0), img);
        assert_eq!(sharpness(&img, 1.0), img);
    }

    #[test]
    fn brightness_scales_and_saturates() {
        let img = rgb(vec![10, 100, 200, 0, 128, 255], 2);
        assert_eq!(brightness(&img, 0.5).pixels(), &[5, 50, 100, 0, 64, 128]);
        assert_eq!(brightness(&img, 1.9).pixels(), &[19, 190, 255, 0, 243, 255]);
    }

    #[test]
    fn color_at_zero_is_luma() {
        let img = rgb(vec![255, 0, 0, 0, 255, 0], 2);
        let out = color(&img, 0.0);
        assert_eq!(out.pixels(), &[76, 76, 76, 150, 150, 150]);
    }

    #[test]
    fn contrast_at_zero_is_mean_luma() {
        let img = Image::new(2, 1, 1, vec![0, 255]).unwrap();
        assert_eq!(contrast(&img, 0.0).pixels(), &[128, 128]);
    }

    #[test]
    fn sharpness_keeps_borders_and_flat_regions() {
        let img = Image::filled(5, 5, 3, 77).unwrap();
        assert_eq!(sharpness(&img, 1.9), img);
        assert_eq!(sharpness(&img, 0.1), img);
    }

    #[test]
    fn autocontrast_stretches_range() {
        let img = Image::new(3, 1, 1, vec![50, 100, 150]).unwrap();
        assert_eq!(autocontrast(&img).pixels(), &[0, 128, 255]);
        let flat = Image::filled(3, 3, 3, 9).unwrap();
        assert_eq!(autocontrast(&flat), flat);
    }

    #[test]
    fn equalize_uniform_histogram_is_identity() {
        let img = all_values_gray();
        assert_eq!(equalize(&img), img);
        let flat = Image::filled(4, 4, 1, 200).unwrap();
        assert_eq!(equalize(&flat), flat);
    }
}
