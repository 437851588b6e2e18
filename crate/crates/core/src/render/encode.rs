//! Minimal 8-bit grayscale PNG writer with fixed encoding parameters.
//!
//! Non-interlaced, filter type 0 on every row, a single IDAT chunk and
//! zlib level 6 through the pure-Rust deflate backend. Identical pixel
//! buffers therefore produce identical bytes on every platform.

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::{RenderError, RenderedImage};

const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
const ZLIB_LEVEL: u32 = 6;

fn chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(kind);
    out.extend_from_slice(data);
    let mut crc = crc32fast::Hasher::new();
    crc.update(kind);
    crc.update(data);
    out.extend_from_slice(&crc.finalize().to_be_bytes());
}

pub fn encode_png(image: &RenderedImage) -> Result<Vec<u8>, RenderError> {
    let (w, h) = (image.width as usize, image.height as usize);
    if w == 0 || h == 0 || image.pixels.len() != w * h {
        return Err(RenderError::EncodeFailure(format!(
            "buffer of {} bytes does not match {}x{}",
            image.pixels.len(),
            w,
            h
        )));
    }

    let mut ihdr = Vec::with_capacity(13);
    ihdr.extend_from_slice(&image.width.to_be_bytes());
    ihdr.extend_from_slice(&image.height.to_be_bytes());
    // bit depth 8, grayscale, deflate, adaptive filtering method, no interlace
    ihdr.extend_from_slice(&[8, 0, 0, 0, 0]);

    let mut z = ZlibEncoder::new(Vec::with_capacity(w * h / 8), Compression::new(ZLIB_LEVEL));
    for row in image.pixels.chunks_exact(w) {
        z.write_all(&[0])
            .and_then(|_| z.write_all(row))
            .map_err(|e| RenderError::EncodeFailure(e.to_string()))?;
    }
    let idat = z.finish().map_err(|e| RenderError::EncodeFailure(e.to_string()))?;

    let mut out = Vec::with_capacity(idat.len() + 64);
    out.extend_from_slice(&SIGNATURE);
    chunk(&mut out, b"IHDR", &ihdr);
    chunk(&mut out, b"IDAT", &idat);
    chunk(&mut out, b"IEND", &[]);
    Ok(out)
}
