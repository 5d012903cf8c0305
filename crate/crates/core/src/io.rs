//! On-disk formats: the binary tensor container and 16-bit RGB images.
//!
//! Tensor file layout (all integers little-endian):
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `LSFT`                            |
//! | 4      | 1         | version (1)                             |
//! | 5      | 1         | dtype: 1 = f32, 2 = f64                 |
//! | 6      | 1         | ndim (1..=8)                            |
//! | 7      | 1         | reserved, 0                             |
//! | 8      | 4 * ndim  | dims, u32 each, outermost first         |
//! | ...    | ...       | row-major values, little-endian         |

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::raw::RgbImage;

pub const TENSOR_MAGIC: [u8; 4] = *b"LSFT";
pub const TENSOR_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// A decoded tensor file. Values are widened to `f64` on read.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dtype: DType,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode_tensor(dims: &[usize], data: &[f64], dtype: DType) -> Result<Vec<u8>> {
    if dims.is_empty() || dims.len() > 8 {
        return Err(Error::Shape(format!("tensor rank {} not in 1..=8", dims.len())));
    }
    let count: usize = dims.iter().product();
    if count != data.len() {
        return Err(Error::Shape(format!(
            "dims {dims:?} describe {count} values but {} were given",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + count * dtype.width());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(dtype.code());
    out.push(dims.len() as u8);
    out.push(0);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Shape(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        DType::F32 => data
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<TensorFile> {
    let bad = |reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 8 || bytes[..4] != TENSOR_MAGIC {
        return Err(bad("missing LSFT magic"));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(bad(&format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5]).ok_or_else(|| bad("unknown dtype"))?;
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > 8 {
        return Err(bad("rank out of range"));
    }
    let header = 8 + 4 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != count * dtype.width() {
        return Err(bad(&format!(
            "body holds {} bytes, expected {}",
            body.len(),
            count * dtype.width()
        )));
    }
    let data = match dtype {
        DType::F32 => body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        DType::F64 => body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(TensorFile { dtype, dims, data })
}

pub fn write_tensor(path: &Path, dims: &[usize], data: &[f64], dtype: DType) -> Result<()> {
    let bytes = encode_tensor(dims, data, dtype)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Write an RGB image with samples in [0, 1] as 16 bits per channel.
/// The container follows the extension: `.png` or `.ppm`/`.pnm`.
pub fn write_rgb16(path: &Path, img: &RgbImage) -> Result<()> {
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_vec(
        img.width() as u32,
        img.height() as u32,
        img.data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect(),
    )
    .ok_or_else(|| Error::Shape("rgb buffer does not match dimensions".into()))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    if ext == "ppm" || ext == "pnm" {
        // Binary P6 with big-endian 16-bit samples, not the PAM container.
        let mut bytes = format!("P6\n{} {}\n65535\n", buf.width(), buf.height()).into_bytes();
        bytes.extend(buf.as_raw().iter().flat_map(|v| v.to_be_bytes()));
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    } else {
        buf.save(path)?;
    }
    Ok(())
}

/// Read a 16-bit 3-channel image, normalised so 65535 maps to 1.0.
pub fn read_rgb16(path: &Path) -> Result<RgbImage> {
    let img = image::open(path)?;
    match img.color() {
        image::ColorType::Rgb16 | image::ColorType::Rgba16 => {}
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected 16-bit RGB, found {other:?}",
                path.display()
            )))
        }
    }
    let rgb = img.to_rgb16();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    RgbImage::new(h as usize, w as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode_tensor(&[2, 3], &[0.0; 6], DType::F32).unwrap();
        assert_eq!(&bytes[..4], b"LSFT");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 6 * 4);
    }

    #[test]
    fn rejects_garbage() {
        let p = Path::new("x");
        assert!(decode_tensor(b"nope", p).is_err());
        let mut bytes = encode_tensor(&[4], &[1.0; 4], DType::F64).unwrap();
        bytes.pop();
        assert!(matches!(decode_tensor(&bytes, p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn shape_mismatch_on_encode() {
        assert!(encode_tensor(&[2, 2], &[0.0; 3], DType::F32).is_err());
    }

    #[test]
    fn rgb16_roundtrip_png_and_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_planar(2, 3, &(0..18).map(|i| i as f64 / 17.0).collect::<Vec<_>>()).unwrap();
        for name in ["a.png", "a.ppm"] {
            let path = dir.path().join(name);
            write_rgb16(&path, &img).unwrap();
            let back = read_rgb16(&path).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn f64_roundtrip_exact(data in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let dims = [data.len()];
            let bytes = encode_tensor(&dims, &data, DType::F64).unwrap();
            let back = decode_tensor(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(back.data, data);
        }
    }
}
