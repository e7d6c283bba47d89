//! 8-bit PNG and binary PGM/PPM images, and segmentation masks.
//!
//! Pixel bytes map to `[0, 1]` by dividing by 255; writing rounds
//! `v * 255` half-up.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::FormatError;
use crate::metrics::BinaryMask;
use crate::saliency::RasterImage;

const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

/// 8-bit samples with 1 or 3 channels.
struct Samples {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn format_err(path: &Path, source: FormatError) -> Error {
    Error::Format {
        path: path.to_owned(),
        source,
    }
}

fn decode_png(bytes: &[u8], expand_palette: bool) -> Result<Samples, FormatError> {
    let corrupt = |e: png::DecodingError| FormatError::Corrupt(e.to_string());
    let probe = png::Decoder::new(Cursor::new(bytes)).read_info().map_err(corrupt)?;
    let info = probe.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(FormatError::UnsupportedBitDepth(info.bit_depth as u32));
    }
    let indexed = info.color_type == png::ColorType::Indexed;
    drop(probe);

    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    if indexed && expand_palette {
        decoder.set_transformations(png::Transformations::EXPAND);
    }
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::Corrupt("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    buf.truncate(frame.buffer_size());
    let (width, height) = (frame.width as usize, frame.height as usize);

    let (src_channels, keep) = match frame.color_type {
        png::ColorType::Grayscale | png::ColorType::Indexed => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
    };
    let bytes = if src_channels == keep {
        buf
    } else {
        buf.chunks_exact(src_channels)
            .flat_map(|px| px[..keep].iter().copied())
            .collect()
    };
    Ok(Samples {
        width,
        height,
        channels: keep,
        bytes,
    })
}

fn decode_pnm(bytes: &[u8]) -> Result<Samples, FormatError> {
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(FormatError::UnsupportedImage(format!(
                "PNM type {}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::Corrupt(format!("bad PNM header field at byte {start}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(FormatError::Corrupt(format!(
            "missing whitespace after PNM header at byte {pos}"
        )));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        let depth = if maxval > 255 { 16 } else { (usize::BITS - maxval.leading_zeros()).max(1) };
        return Err(FormatError::UnsupportedBitDepth(depth));
    }
    if width == 0 || height == 0 {
        return Err(FormatError::Corrupt("zero-sized PNM image".into()));
    }
    let len = width * height * channels;
    if bytes.len() < pos + len {
        return Err(FormatError::Truncated {
            expected: pos + len,
            actual: bytes.len(),
        });
    }
    Ok(Samples {
        width,
        height,
        channels,
        bytes: bytes[pos..pos + len].to_vec(),
    })
}

fn decode(bytes: &[u8], expand_palette: bool) -> Result<Samples, FormatError> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes, expand_palette)
    } else if bytes.len() >= 2 && bytes[0] == b'P' {
        decode_pnm(bytes)
    } else {
        Err(FormatError::UnsupportedImage(
            "neither PNG nor binary PGM/PPM".into(),
        ))
    }
}

/// Reads an 8-bit PNG (gray, RGB, palette; alpha dropped) or a binary
/// PGM/PPM.
pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let s = decode(&read_bytes(path)?, true).map_err(|e| format_err(path, e))?;
    let pixels = s.bytes.iter().map(|&b| b as f64 / 255.0).collect();
    RasterImage::new(s.height, s.width, s.channels, pixels)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes PNG for `.png` paths and PGM/PPM (by channel count) otherwise.
pub fn write_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| quantize(v)).collect();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let encoded = if is_png {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
            enc.set_color(if img.channels() == 1 {
                png::ColorType::Grayscale
            } else {
                png::ColorType::Rgb
            });
            enc.set_depth(png::BitDepth::Eight);
            let encode_err = |e: png::EncodingError| format_err(path, FormatError::Corrupt(e.to_string()));
            let mut writer = enc.write_header().map_err(encode_err)?;
            writer.write_image_data(&bytes).map_err(encode_err)?;
            writer.finish().map_err(encode_err)?;
        }
        out
    } else {
        let magic = if img.channels() == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
        out.extend_from_slice(&bytes);
        out
    };
    std::fs::write(path, encoded).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskOptions {
    /// Single-channel label treated as background (object boundaries in
    /// VOC-style masks).
    pub ignore_label: Option<u8>,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self {
            ignore_label: Some(255),
        }
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    read_mask_with(path, &MaskOptions::default())
}

/// Foreground wherever a channel byte is nonzero. On single-channel masks
/// (grayscale or palette indices) the ignore label counts as background.
pub fn read_mask_with(path: impl AsRef<Path>, opts: &MaskOptions) -> Result<BinaryMask> {
    let path = path.as_ref();
    let s = decode(&read_bytes(path)?, false).map_err(|e| format_err(path, e))?;
    let data = if s.channels == 1 {
        s.bytes
            .iter()
            .map(|&b| b > 0 && Some(b) != opts.ignore_label)
            .collect()
    } else {
        s.bytes
            .chunks_exact(s.channels)
            .map(|px| px.iter().any(|&b| b > 0))
            .collect()
    };
    BinaryMask::new(s.height, s.width, data)
}
