//! Affine warps with bilinear resampling.
//!
//! Each output pixel centre `(x + 0.5, y + 0.5)` is mapped back into the
//! source through the inverse transform. The four surrounding taps are blended
//! bilinearly; taps outside the frame take [`FILL_VALUE`]. Results are rounded
//! half away from zero.

use super::{Image, FILL_VALUE};

/// Inverse affine map `(x, y) -> (a x + b y + c, d x + e y + f)` from output to
/// source coordinates.
#[derive(Debug, Clone, Copy)]
struct InverseAffine {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
}

fn warp(image: &Image, map: InverseAffine) -> Image {
    let (w, h, ch) = (image.width(), image.height(), image.channels() as usize);
    let mut out = Vec::with_capacity(image.pixels().len());
    let tap = |xi: i64, yi: i64, c: usize| -> f64 {
        if xi < 0 || yi < 0 || xi >= w as i64 || yi >= h as i64 {
            FILL_VALUE as f64
        } else {
            image.pixels()[(yi as usize * w as usize + xi as usize) * ch + c] as f64
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (ox, oy) = (x as f64 + 0.5, y as f64 + 0.5);
            let sx = map.a * ox + map.b * oy + map.c - 0.5;
            let sy = map.d * ox + map.e * oy + map.f - 0.5;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..ch {
                let top = tap(x0, y0, c) * (1.0 - fx) + tap(x0 + 1, y0, c) * fx;
                let bottom = tap(x0, y0 + 1, c) * (1.0 - fx) + tap(x0 + 1, y0 + 1, c) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    image.with_pixels(out)
}

/// Rotates counter-clockwise (as displayed) by `degrees` about the image centre.
pub(crate) fn rotate(image: &Image, degrees: f64) -> Image {
    if degrees == 0.0 {
        return image.clone();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cx = image.width() as f64 / 2.0;
    let cy = image.height() as f64 / 2.0;
    // source = centre + R(θ)ᵀ-style inverse applied to (p - centre)
    warp(
        image,
        InverseAffine {
            a: cos,
            b: -sin,
            c: cx - cos * cx + sin * cy,
            d: sin,
            e: cos,
            f: cy - sin * cx - cos * cy,
        },
    )
}

/// Horizontal shear: source x = x + level * y.
pub(crate) fn shear_x(image: &Image, level: f64) -> Image {
    if level == 0.0 {
        return image.clone();
    }
    warp(
        image,
        InverseAffine {
            a: 1.0,
            b: level,
            c: 0.0,
            d: 0.0,
            e: 1.0,
            f: 0.0,
        },
    )
}

/// Vertical shear: source y = level * x + y.
pub(crate) fn shear_y(image: &Image, level: f64) -> Image {
    if level == 0.0 {
        return image.clone();
    }
    warp(
        image,
        InverseAffine {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: level,
            e: 1.0,
            f: 0.0,
        },
    )
}

/// Shifts the sampling window by `(dx, dy)` pixels: source = output + offset,
/// so positive offsets move content left/up.
pub(crate) fn translate(image: &Image, dx: f64, dy: f64) -> Image {
    if dx == 0.0 && dy == 0.0 {
        return image.clone();
    }
    warp(
        image,
        InverseAffine {
            a: 1.0,
            b: 0.0,
            c: dx,
            d: 0.0,
            e: 1.0,
            f: dy,
        },
    )
}
