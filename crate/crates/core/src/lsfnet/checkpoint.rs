//! Checkpoint file: architecture header, named parameter table, and an
//! optional optimizer section. All integers and floats are little-endian.
//!
//! ```text
//! magic "LSFC" | version u32 | dtype u8 (1 = f32, 2 = f64) | mode u8 (0 gamma, 1 mu-law) | reserved u16
//! input_channels u32 | channels 4 x u32 | param_count u32
//! per parameter: name_len u16 | name utf-8 | dims 4 x u32 | values
//! has_optimizer u8
//! if 1: step u64 | epoch u64 | beta1 f64 | beta2 f64 | eps f64 | per parameter: m values | v values
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::isp::ToneMode;
use crate::nn::{AdamConfig, AdamState, Scalar};

use super::{LsfConfig, LsfModel, SCALES};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LSFC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub model: LsfModel<T>,
    pub optimizer: Option<AdamState<T>>,
}

fn dtype_code<T: Scalar>() -> u8 {
    if std::mem::size_of::<T>() == 4 {
        1
    } else {
        2
    }
}

fn put_values<T: Scalar>(buf: &mut Vec<u8>, values: &[T]) {
    for v in values {
        if dtype_code::<T>() == 1 {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        } else {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
}

pub fn encode_checkpoint<T: Scalar>(model: &LsfModel<T>, optimizer: Option<&AdamState<T>>) -> Vec<u8> {
    let cfg = model.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(dtype_code::<T>());
    buf.push(match cfg.mode {
        ToneMode::Gamma => 0,
        ToneMode::MuLaw => 1,
    });
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(cfg.input_channels as u32).to_le_bytes());
    for c in cfg.channels {
        buf.extend_from_slice(&(c as u32).to_le_bytes());
    }
    let params = model.named_parameters();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in &params {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        for d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        put_values(&mut buf, t.data());
    }
    match optimizer {
        None => buf.push(0),
        Some(st) => {
            buf.push(1);
            buf.extend_from_slice(&st.step.to_le_bytes());
            buf.extend_from_slice(&(st.epoch as u64).to_le_bytes());
            for v in [st.config.beta1, st.config.beta2, st.config.eps] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for (m, v) in st.m.iter().zip(&st.v) {
                put_values(&mut buf, m);
                put_values(&mut buf, v);
            }
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.malformed(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn values<T: Scalar>(&mut self, dtype: u8, n: usize) -> Result<Vec<T>> {
        let width = if dtype == 1 { 4 } else { 8 };
        let raw = self.take(n * width)?;
        Ok(raw
            .chunks_exact(width)
            .map(|b| {
                let v = if dtype == 1 {
                    f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64
                } else {
                    f64::from_le_bytes(b.try_into().expect("8 bytes"))
                };
                T::cast(v)
            })
            .collect())
    }
}

/// Decode a checkpoint into a model of precision `T`; values stored in the
/// other precision are converted.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.malformed("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.malformed(format!("unsupported version {version}")));
    }
    let dtype = r.u8()?;
    if dtype != 1 && dtype != 2 {
        return Err(r.malformed(format!("unknown dtype code {dtype}")));
    }
    let mode = match r.u8()? {
        0 => ToneMode::Gamma,
        1 => ToneMode::MuLaw,
        m => return Err(r.malformed(format!("unknown tone mode code {m}"))),
    };
    r.u16()?;
    let input_channels = r.u32()? as usize;
    let mut channels = [0usize; SCALES];
    for c in channels.iter_mut() {
        *c = r.u32()? as usize;
    }
    let config = LsfConfig {
        channels,
        input_channels,
        mode,
    };
    config.validate().map_err(|e| r.malformed(e.to_string()))?;
    let mut model = LsfModel::<T>::build(config, 0)?;
    let expected: Vec<(String, [usize; 4])> = model
        .named_parameters()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape()))
        .collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(r.malformed(format!(
            "{count} parameters stored, architecture has {}",
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let len = r.u16()? as usize;
        let stored = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.malformed("non-utf8 name"))?;
        if &stored != name {
            return Err(r.malformed(format!("expected parameter {name}, found {stored}")));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        if &dims != shape {
            return Err(r.malformed(format!("{name} has shape {dims:?}, expected {shape:?}")));
        }
        loaded.push(r.values::<T>(dtype, dims.iter().product())?);
    }
    for (p, vals) in model.parameters_mut().into_iter().zip(loaded) {
        p.data_mut().copy_from_slice(&vals);
    }
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let epoch = r.u64()? as usize;
            let config = AdamConfig {
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            };
            let lens = model.parameter_lens();
            let mut st = AdamState::new(config, &lens);
            st.step = step;
            st.epoch = epoch;
            for (i, &n) in lens.iter().enumerate() {
                st.m[i] = r.values(dtype, n)?;
                st.v[i] = r.values(dtype, n)?;
            }
            Some(st)
        }
        f => return Err(r.malformed(format!("bad optimizer flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(r.malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { model, optimizer })
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &LsfModel<T>, optimizer: Option<&AdamState<T>>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // Write-then-rename so an interrupted save never leaves a torn file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(model, optimizer)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_optimizer() {
        let model = LsfModel::<f64>::build(LsfConfig::toy(), 7).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &model.parameter_lens());
        st.step = 12;
        st.epoch = 3;
        st.m[0][0] = 0.25;
        st.v[5][1] = 1e-7;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.lsfc");
        save_checkpoint(&path, &model, Some(&st)).unwrap();
        let ck = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(ck.model, model);
        assert_eq!(ck.optimizer.unwrap(), st);
    }

    #[test]
    fn f32_roundtrip_and_cross_precision() {
        let mut cfg = LsfConfig::toy();
        cfg.mode = ToneMode::MuLaw;
        let model = LsfModel::<f32>::build(cfg, 1).unwrap();
        let bytes = encode_checkpoint(&model, None);
        let back = decode_checkpoint::<f32>(&bytes, Path::new("m")).unwrap();
        assert_eq!(back.model, model);
        assert!(back.optimizer.is_none());
        let wide = decode_checkpoint::<f64>(&bytes, Path::new("m")).unwrap();
        assert_eq!(wide.model.config.mode, ToneMode::MuLaw);
        assert_eq!(wide.model.cast::<f32>(), model);
    }

    #[test]
    fn corruption_detected() {
        let model = LsfModel::<f32>::build(LsfConfig::toy(), 1).unwrap();
        let bytes = encode_checkpoint(&model, None);
        let p = Path::new("m");
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 3], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad, p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint::<f32>(&extra, p).is_err());
    }
}
