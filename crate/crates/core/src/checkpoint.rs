//! Binary checkpoint format.
//!
//! ```text
//! "ORECKPT"  u32 version  u32 field-count  field*  u32 crc32
//! field := u16 name-len, name, u8 type, value
//!   1 u64        8 bytes
//!   2 string     u32 len, utf-8
//!   3 strings    u32 count, then (u32 len, utf-8)*
//!   4 tensor     u8 ndim, u64 dim*, f64* row-major
//! ```
//!
//! Integers and floats are little-endian. The CRC covers every byte before
//! it.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scheme::TagAlphabet;
use crate::tag::SchemeKind;
use crate::train::{AdamState, ModelParams};

pub const MAGIC: &[u8; 7] = b"ORECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub alphabet: TagAlphabet,
    pub scheme: SchemeKind,
    pub params: ModelParams,
    /// Settings of the run; also records the embedding source and seed.
    pub config: TrainConfig,
    pub epochs_completed: usize,
    pub optimizer: Option<AdamState>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    U64(u64),
    Str(String),
    StrList(Vec<String>),
    Tensor { shape: Vec<usize>, data: Vec<f64> },
}

impl Value {
    fn type_byte(&self) -> u8 {
        match self {
            Value::U64(_) => 1,
            Value::Str(_) => 2,
            Value::StrList(_) => 3,
            Value::Tensor { .. } => 4,
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_fields(fields: &[(String, Value)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for (name, value) in fields {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(value.type_byte());
        match value {
            Value::U64(n) => out.extend_from_slice(&n.to_le_bytes()),
            Value::Str(s) => put_str(&mut out, s),
            Value::StrList(items) => {
                out.extend_from_slice(&(items.len() as u32).to_le_bytes());
                for s in items {
                    put_str(&mut out, s);
                }
            }
            Value::Tensor { shape, data } => {
                out.push(shape.len() as u8);
                for &d in shape {
                    out.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for x in data {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Integrity(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize) -> Result<String> {
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Integrity(format!("invalid utf-8 before byte {}", self.pos)))
    }
}

pub fn decode_fields(bytes: &[u8]) -> Result<Vec<(String, Value)>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Integrity("not a checkpoint (bad magic)".into()));
    }
    if bytes.len() < MAGIC.len() + 12 {
        return Err(Error::Integrity("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Integrity(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32()?;
    let mut fields = Vec::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.string(name_len)?;
        let value = match r.u8()? {
            1 => Value::U64(r.u64()?),
            2 => {
                let n = r.u32()? as usize;
                Value::Str(r.string(n)?)
            }
            3 => {
                let n = r.u32()? as usize;
                let mut items = Vec::new();
                for _ in 0..n {
                    let len = r.u32()? as usize;
                    items.push(r.string(len)?);
                }
                Value::StrList(items)
            }
            4 => {
                let ndim = r.u8()? as usize;
                let shape = (0..ndim)
                    .map(|_| r.u64().map(|d| d as usize))
                    .collect::<Result<Vec<_>>>()?;
                let n = shape
                    .iter()
                    .try_fold(1usize, |a, &d| a.checked_mul(d))
                    .filter(|&n| n <= (body.len() - r.pos) / 8)
                    .ok_or_else(|| Error::Integrity(format!("tensor {name} larger than the file")))?;
                let data = (0..n)
                    .map(|_| r.u64().map(f64::from_bits))
                    .collect::<Result<Vec<_>>>()?;
                Value::Tensor { shape, data }
            }
            t => return Err(Error::Integrity(format!("field {name}: unknown type {t}"))),
        };
        fields.push((name, value));
    }
    if r.pos != body.len() {
        return Err(Error::Integrity(format!("{} unread bytes", body.len() - r.pos)));
    }
    Ok(fields)
}

impl ModelCheckpoint {
    pub fn to_fields(&self) -> Vec<(String, Value)> {
        let (d, h, k) = self.params.dims();
        let mut f: Vec<(String, Value)> = vec![
            ("alphabet".into(), Value::StrList(self.alphabet.strings())),
            ("scheme".into(), Value::Str(self.scheme.name().into())),
            ("dim.input".into(), Value::U64(d as u64)),
            ("dim.hidden".into(), Value::U64(h as u64)),
            ("dim.tags".into(), Value::U64(k as u64)),
            (
                "config".into(),
                Value::StrList(
                    self.config
                        .to_pairs()
                        .into_iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect(),
                ),
            ),
            ("epochs_completed".into(), Value::U64(self.epochs_completed as u64)),
        ];
        for t in self.params.tensors() {
            f.push((
                t.name,
                Value::Tensor {
                    shape: t.shape,
                    data: t.data.to_vec(),
                },
            ));
        }
        if let Some(adam) = &self.optimizer {
            f.push(("adam.step".into(), Value::U64(adam.step)));
            for (name, v) in [("adam.m", &adam.m), ("adam.v", &adam.v)] {
                f.push((
                    name.into(),
                    Value::Tensor {
                        shape: vec![v.len()],
                        data: v.clone(),
                    },
                ));
            }
        }
        f
    }

    pub fn from_fields(fields: Vec<(String, Value)>) -> Result<Self> {
        let mut map: HashMap<String, Value> = HashMap::new();
        for (name, v) in fields {
            if map.insert(name.clone(), v).is_some() {
                return Err(Error::Integrity(format!("duplicate field {name}")));
            }
        }
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::Integrity(format!("missing field {name}")))
        };
        let wrong = |name: &str| Error::Integrity(format!("field {name} has the wrong type"));
        let mut u64_field = |name: &str| match take(name)? {
            Value::U64(n) => Ok(n),
            _ => Err(wrong(name)),
        };
        let d = u64_field("dim.input")? as usize;
        let h = u64_field("dim.hidden")? as usize;
        let k = u64_field("dim.tags")? as usize;
        let epochs_completed = u64_field("epochs_completed")? as usize;
        let step = match map.remove("adam.step") {
            Some(Value::U64(n)) => Some(n),
            None => None,
            Some(_) => return Err(wrong("adam.step")),
        };
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::Integrity(format!("missing field {name}")))
        };

        let alphabet = match take("alphabet")? {
            Value::StrList(s) => TagAlphabet::from_strings(&s)?,
            _ => return Err(wrong("alphabet")),
        };
        if alphabet.len() != k {
            return Err(Error::Integrity(format!(
                "{} alphabet entries for {k} tags",
                alphabet.len()
            )));
        }
        let scheme = match take("scheme")? {
            Value::Str(s) => s.parse()?,
            _ => return Err(wrong("scheme")),
        };
        let config = match take("config")? {
            Value::StrList(lines) => {
                let pairs = lines
                    .iter()
                    .map(|l| {
                        l.split_once('=')
                            .ok_or_else(|| Error::Integrity(format!("config entry {l:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TrainConfig::from_pairs(&pairs)?
            }
            _ => return Err(wrong("config")),
        };

        let mut params = ModelParams::zeros(d, h, k);
        let layout: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|t| (t.name, t.shape))
            .collect();
        for ((name, shape), dst) in layout.iter().zip(params.tensors_mut()) {
            match take(name)? {
                Value::Tensor { shape: s, data } if &s == shape => dst.copy_from_slice(&data),
                Value::Tensor { shape: s, .. } => {
                    return Err(Error::Integrity(format!(
                        "tensor {name} has shape {s:?}, expected {shape:?}"
                    )))
                }
                _ => return Err(wrong(name)),
            }
        }

        let optimizer = match step {
            None => None,
            Some(step) => {
                let n = params.num_values();
                let mut moment = |name: &str| match take(name)? {
                    Value::Tensor { shape, data } if shape == [n] => Ok(data),
                    _ => Err(Error::Integrity(format!("{name} must be a vector of {n} values"))),
                };
                Some(AdamState {
                    step,
                    m: moment("adam.m")?,
                    v: moment("adam.v")?,
                })
            }
        };
        if let Some(extra) = map.keys().min() {
            return Err(Error::Integrity(format!("unexpected field {extra}")));
        }
        Ok(ModelCheckpoint {
            alphabet,
            scheme,
            params,
            config,
            epochs_completed,
            optimizer,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_fields(&self.to_fields())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        ModelCheckpoint::from_fields(decode_fields(bytes)?)
    }
}

pub fn save_checkpoint(cp: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cp.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    ModelCheckpoint::from_bytes(&fs::read(path)?)
}
