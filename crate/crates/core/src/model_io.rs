//! Self-describing model files.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "JANE0001"
//! 8       4     header_len   (u32 LE)
//! 12      8     payload_len  (u64 LE)
//! 20      32    SHA-256 over header bytes followed by payload bytes
//! 52      H     header, UTF-8 JSON
//! 52+H    P     payload, little-endian tensor blobs
//! ```
//!
//! The header holds `format_version`, the model `config` and a `tensors`
//! manifest of `{name, dtype, shape, offset, nbytes}` entries, offsets
//! relative to the payload start. Quantized groups store `<group>.weight`
//! (`i8`) and `<group>.bias` (`i32`); float groups store
//! `<group>.weight_f32` and `<group>.bias_f32` (`f32`).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::network::{ConvParams, FixedWeights, FloatWeights, ModelConfig, WeightError, WeightSet};

pub const MAGIC: &[u8; 8] = b"JANE0001";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    I32,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::I32 | DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

/// A model in memory. At least one weight set is present.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub fixed: Option<FixedWeights>,
    pub float: Option<FloatWeights>,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported model file version '{0}'")]
    UnsupportedVersion(String),
    #[error("file truncated in {0}")]
    Truncated(String),
    #[error("tensor '{name}' truncated: needs bytes {start}..{end} of the payload, only {available} present")]
    TruncatedTensor { name: String, start: u64, end: u64, available: u64 },
    #[error("checksum mismatch")]
    Checksum,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("shape inconsistency: {0}")]
    Shape(String),
    #[error("model has no weights")]
    NoWeights,
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

trait Elem: Copy + Default {
    const DTYPE: DType;
    fn put(self, out: &mut Vec<u8>);
    fn get(b: &[u8]) -> Self;
}

impl Elem for i8 {
    const DTYPE: DType = DType::I8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self as u8);
    }
    fn get(b: &[u8]) -> Self {
        b[0] as i8
    }
}

impl Elem for i32 {
    const DTYPE: DType = DType::I32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        i32::from_le_bytes(b.try_into().unwrap())
    }
}

impl Elem for f64 {
    const DTYPE: DType = DType::F32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self as f32).to_le_bytes());
    }
    fn get(b: &[u8]) -> Self {
        f32::from_le_bytes(b.try_into().unwrap()) as f64
    }
}

fn suffix(d: DType) -> &'static str {
    if d == DType::F32 {
        "_f32"
    } else {
        ""
    }
}

fn push_set<W: Elem, B: Elem>(set: &WeightSet<W, B>, manifest: &mut Vec<TensorEntry>, payload: &mut Vec<u8>) {
    for c in &set.convs {
        let mut add = |name: String, shape: Vec<usize>, dtype: DType, write: &dyn Fn(&mut Vec<u8>)| {
            let offset = payload.len() as u64;
            write(payload);
            manifest.push(TensorEntry { name, dtype, shape, offset, nbytes: payload.len() as u64 - offset });
        };
        add(format!("{}.weight{}", c.name, suffix(W::DTYPE)), c.weight_shape().to_vec(), W::DTYPE, &|p| c.weight.iter().for_each(|v| v.put(p)));
        if let Some(b) = &c.bias {
            add(format!("{}.bias{}", c.name, suffix(B::DTYPE)), vec![b.len()], B::DTYPE, &|p| b.iter().for_each(|v| v.put(p)));
        }
    }
}

/// Serialize. Output is deterministic for identical inputs.
pub fn save_model(model: &ModelFile) -> Result<Vec<u8>, ModelIoError> {
    if model.fixed.is_none() && model.float.is_none() {
        return Err(ModelIoError::NoWeights);
    }
    let mut manifest = Vec::new();
    let mut payload = Vec::new();
    if let Some(f) = &model.fixed {
        f.check(&model.config)?;
        push_set(f, &mut manifest, &mut payload);
    }
    if let Some(f) = &model.float {
        f.check(&model.config)?;
        push_set(f, &mut manifest, &mut payload);
    }
    let header = Header { format_version: FORMAT_VERSION, config: model.config.clone(), tensors: manifest };
    let hbytes = serde_json::to_vec(&header).map_err(|e| ModelIoError::Header(e.to_string()))?;
    let mut sha = Sha256::new();
    sha.update(&hbytes);
    sha.update(&payload);
    let digest = sha.finalize();
    let mut out = Vec::with_capacity(PREAMBLE + hbytes.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(hbytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&hbytes);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn read_set<W: Elem, B: Elem>(config: &ModelConfig, header: &Header, payload: &[u8]) -> Result<Option<WeightSet<W, B>>, ModelIoError> {
    let mut set = WeightSet::<W, B>::zeros(config).map_err(|e| ModelIoError::Shape(e.to_string()))?;
    let find = |name: String| header.tensors.iter().find(|t| t.name == name);
    let present = set.convs.iter().any(|c| find(format!("{}.weight{}", c.name, suffix(W::DTYPE))).is_some_and(|t| t.dtype == W::DTYPE));
    if !present {
        return Ok(None);
    }
    fn fill<T: Elem>(dst: &mut [T], e: Option<&TensorEntry>, name: &str, shape: &[usize], payload: &[u8]) -> Result<(), ModelIoError> {
        let e = e.ok_or_else(|| ModelIoError::Shape(format!("tensor '{name}' missing from manifest")))?;
        if e.dtype != T::DTYPE {
            return Err(ModelIoError::Shape(format!("tensor '{name}' has dtype {:?}, expected {:?}", e.dtype, T::DTYPE)));
        }
        if e.shape != shape {
            return Err(ModelIoError::Shape(format!("tensor '{name}' has shape {:?}, config implies {:?}", e.shape, shape)));
        }
        if e.nbytes as usize != dst.len() * T::DTYPE.size() {
            return Err(ModelIoError::Shape(format!("tensor '{name}' has {} bytes, shape implies {}", e.nbytes, dst.len() * T::DTYPE.size())));
        }
        let bytes = &payload[e.offset as usize..(e.offset + e.nbytes) as usize];
        for (d, b) in dst.iter_mut().zip(bytes.chunks_exact(T::DTYPE.size())) {
            *d = T::get(b);
        }
        Ok(())
    }
    for c in &mut set.convs {
        let ConvParams { name, weight, bias, .. } = c;
        let shape = [c.out_channels, c.fan_in, c.kernel.0, c.kernel.1];
        let wn = format!("{name}.weight{}", suffix(W::DTYPE));
        fill(weight, find(wn.clone()), &wn, &shape, payload)?;
        if let Some(b) = bias {
            let bn = format!("{name}.bias{}", suffix(B::DTYPE));
            let len = b.len();
            fill(b, find(bn.clone()), &bn, &[len], payload)?;
        }
    }
    Ok(Some(set))
}

/// Parse and validate a model file.
pub fn load_model(bytes: &[u8]) -> Result<ModelFile, ModelIoError> {
    if bytes.len() < 8 {
        return if MAGIC.starts_with(bytes) && !bytes.is_empty() { Err(ModelIoError::Truncated("magic".into())) } else { Err(ModelIoError::BadMagic) };
    }
    if &bytes[..8] != MAGIC {
        if &bytes[..4] == b"JANE" {
            return Err(ModelIoError::UnsupportedVersion(String::from_utf8_lossy(&bytes[4..8]).into_owned()));
        }
        return Err(ModelIoError::BadMagic);
    }
    if bytes.len() < PREAMBLE {
        return Err(ModelIoError::Truncated("preamble".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let plen = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let digest = &bytes[20..52];
    if bytes.len() < PREAMBLE + hlen {
        return Err(ModelIoError::Truncated("header".into()));
    }
    let hbytes = &bytes[PREAMBLE..PREAMBLE + hlen];
    let header: Header = serde_json::from_slice(hbytes).map_err(|e| ModelIoError::Header(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(header.format_version.to_string()));
    }
    let payload = &bytes[PREAMBLE + hlen..];
    let available = payload.len() as u64;
    if available < plen {
        let short = header.tensors.iter().find(|t| t.offset + t.nbytes > available);
        return Err(match short {
            Some(t) => ModelIoError::TruncatedTensor { name: t.name.clone(), start: t.offset, end: t.offset + t.nbytes, available },
            None => ModelIoError::Truncated("payload".into()),
        });
    }
    if available > plen {
        return Err(ModelIoError::Shape(format!("{} trailing bytes after payload", available - plen)));
    }
    let mut sha = Sha256::new();
    sha.update(hbytes);
    sha.update(payload);
    if sha.finalize().as_slice() != digest {
        return Err(ModelIoError::Checksum);
    }
    let mut expect = 0u64;
    for t in &header.tensors {
        if t.offset != expect {
            return Err(ModelIoError::Shape(format!("tensor '{}' at offset {}, expected {}", t.name, t.offset, expect)));
        }
        if t.shape.iter().product::<usize>() * t.dtype.size() != t.nbytes as usize {
            return Err(ModelIoError::Shape(format!("tensor '{}' shape {:?} does not match {} bytes", t.name, t.shape, t.nbytes)));
        }
        expect += t.nbytes;
    }
    if expect != plen {
        return Err(ModelIoError::Shape(format!("manifest covers {expect} bytes, payload has {plen}")));
    }
    let config = header.config.clone();
    config.validate().map_err(|e| ModelIoError::Shape(e.to_string()))?;
    let fixed = read_set::<i8, i32>(&config, &header, payload)?;
    let float = read_set::<f64, f64>(&config, &header, payload)?;
    if fixed.is_none() && float.is_none() {
        return Err(ModelIoError::NoWeights);
    }
    Ok(ModelFile { config, fixed, float })
}

pub fn read_model_file(path: &std::path::Path) -> Result<ModelFile, ModelIoError> {
    load_model(&std::fs::read(path)?)
}

pub fn write_model_file(path: &std::path::Path, model: &ModelFile) -> Result<(), ModelIoError> {
    std::fs::write(path, save_model(model)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelFile {
        let config = ModelConfig::default();
        let fixed = FixedWeights::random(&config, 5).unwrap();
        let float = fixed.dequantize();
        ModelFile { config, fixed: Some(fixed), float: Some(float) }
    }

    #[test]
    fn round_trip_and_determinism() {
        let m = model();
        let a = save_model(&m).unwrap();
        assert_eq!(a, save_model(&m).unwrap());
        assert_eq!(&a[..8], b"JANE0001");
        assert_eq!(load_model(&a).unwrap(), m);
    }

    #[test]
    fn truncation_names_tensor() {
        let a = save_model(&model()).unwrap();
        let e = load_model(&a[..a.len() - 3]).unwrap_err();
        match e {
            ModelIoError::TruncatedTensor { name, .. } => assert_eq!(name, "fc.bias_f32"),
            other => panic!("{other}"),
        }
        assert!(matches!(load_model(&a[..30]).unwrap_err(), ModelIoError::Truncated(_)));
    }

    #[test]
    fn header_errors() {
        let mut a = save_model(&model()).unwrap();
        assert!(matches!(load_model(b"NOPE0001xxxx").unwrap_err(), ModelIoError::BadMagic));
        let mut v2 = a.clone();
        v2[7] = b'2';
        assert!(matches!(load_model(&v2).unwrap_err(), ModelIoError::UnsupportedVersion(v) if v == "0002"));
        let n = a.len();
        a[n - 1] ^= 1;
        assert!(matches!(load_model(&a).unwrap_err(), ModelIoError::Checksum));
    }

    #[test]
    fn fixed_only_and_float_only() {
        let m = model();
        let fx = ModelFile { float: None, ..m.clone() };
        assert_eq!(load_model(&save_model(&fx).unwrap()).unwrap(), fx);
        let fl = ModelFile { fixed: None, ..m.clone() };
        assert_eq!(load_model(&save_model(&fl).unwrap()).unwrap(), fl);
        let none = ModelFile { fixed: None, float: None, config: m.config };
        assert!(matches!(save_model(&none).unwrap_err(), ModelIoError::NoWeights));
    }
}
