//! 8-bit PNG decode/encode. Palette and 16-bit inputs are normalized to 8-bit;
//! alpha channels are dropped.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::{Image, ImageError};

pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Image, ImageError> {
    let decode_err = |reason: String| ImageError::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| decode_err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode_err("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(e.to_string()))?;
    buf.truncate(info.buffer_size());

    let (channels, pixels) = match info.color_type {
        png::ColorType::Grayscale => (1, buf),
        png::ColorType::Rgb => (3, buf),
        png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(2).map(|px| px[0]).collect()),
        png::ColorType::Rgba => (
            3,
            buf.chunks_exact(4).flat_map(|px| [px[0], px[1], px[2]]).collect(),
        ),
        other => return Err(decode_err(format!("unsupported color type {other:?}"))),
    };
    Image::new(info.width, info.height, channels, pixels).map_err(|e| decode_err(e.to_string()))
}

/// Encodes with fixed compression and filter settings so output bytes are a
/// pure function of the pixels.
pub fn encode_png(image: &Image) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width(), image.height());
        encoder.set_color(match image.channels() {
            1 => png::ColorType::Grayscale,
            _ => png::ColorType::Rgb,
        });
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Balanced);
        encoder.set_filter(png::Filter::Adaptive);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(image.pixels())?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn read_png(path: &Path) -> Result<Image, ImageError> {
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_png(&bytes, path)
}

pub fn write_png(image: &Image, path: &Path) -> Result<(), ImageError> {
    let bytes = encode_png(image).map_err(|e| ImageError::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })
}
