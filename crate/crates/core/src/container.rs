//! The "SPUL" binary container shared by backbone, prompt, verbalizer and
//! quantizer checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"SPUL" | version u16 | config_len u32 | config (UTF-8 TOML)
//! | record_count u32
//! | per record: name_len u16 | name | dtype u8 | rank u8 | dims u32 * rank | payload
//! | FNV-1a 64 over all payloads, in record order
//! ```

use crate::error::{Error, Result};
use crate::numcore::{DType, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"SPUL";
pub const VERSION: u16 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(FNV_OFFSET)
    }
}

impl Fnv1a {
    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::default();
    h.update(bytes);
    h.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub config: String,
    pub records: Vec<Record>,
}

pub fn tensor_bytes<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.numel() * T::DTYPE.size());
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

impl Container {
    pub fn new(config: impl Into<String>) -> Self {
        Self {
            config: config.into(),
            records: Vec::new(),
        }
    }

    pub fn push_tensor<T: Real>(&mut self, name: &str, t: &Tensor<T>) {
        self.records.push(Record {
            name: name.to_string(),
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            payload: tensor_bytes(t),
        });
    }

    pub fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Decodes a record into `T`, converting from the stored dtype if needed.
    pub fn tensor<T: Real>(&self, name: &str) -> Result<Tensor<T>> {
        let rec = self
            .record(name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing record {name}")))?;
        let size = rec.dtype.size();
        let values: Vec<T> = match rec.dtype {
            DType::F32 => rec
                .payload
                .chunks_exact(size)
                .map(|c| T::lit(f64::from(f32::read_le(c))))
                .collect(),
            DType::F64 => rec
                .payload
                .chunks_exact(size)
                .map(|c| T::lit(f64::read_le(c)))
                .collect(),
        };
        Tensor::new(rec.shape.clone(), values)
    }

    pub fn payload_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        for r in &self.records {
            h.update(&r.payload);
        }
        h.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.push(r.dtype.tag());
            out.push(r.shape.len() as u8);
            for &d in &r.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&r.payload);
        }
        out.extend_from_slice(&self.payload_hash().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u16::from_le_bytes(rd.take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let config_len = rd.u32()? as usize;
        let config = String::from_utf8(rd.take(config_len)?.to_vec())
            .map_err(|_| corrupt("config block is not UTF-8"))?;
        let count = rd.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(rd.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(rd.take(name_len)?.to_vec())
                .map_err(|_| corrupt("record name is not UTF-8"))?;
            let dtype = DType::from_tag(rd.take(1)?[0]).ok_or_else(|| corrupt("bad dtype tag"))?;
            let rank = rd.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(rd.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let payload = rd.take(n * dtype.size())?.to_vec();
            records.push(Record {
                name,
                dtype,
                shape,
                payload,
            });
        }
        let stored = u64::from_le_bytes(rd.take(8)?.try_into().unwrap());
        if rd.pos != bytes.len() {
            return Err(corrupt("trailing bytes after hash"));
        }
        let container = Self { config, records };
        if container.payload_hash() != stored {
            return Err(corrupt("payload hash mismatch"));
        }
        Ok(container)
    }

    /// Parses the config block and checks its `component` tag.
    pub fn config_table(&self, component: &str) -> Result<toml::Table> {
        let table: toml::Table = self
            .config
            .parse()
            .map_err(|e| corrupt(format!("config block: {e}")))?;
        match table.get("component").and_then(|v| v.as_str()) {
            Some(c) if c == component => Ok(table),
            other => Err(corrupt(format!(
                "expected component {component}, found {other:?}"
            ))),
        }
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new("component = \"TEST\"\n");
        c.push_tensor("a", &Tensor::<f32>::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        c.push_tensor("b", &Tensor::<f64>::from_f64(&[3], &[0.5, -1.0, 7.25]).unwrap());
        c
    }

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        let b: Tensor<f64> = back.tensor("b").unwrap();
        assert_eq!(b.data(), &[0.5, -1.0, 7.25]);
        let a64: Tensor<f64> = back.tensor("a").unwrap();
        assert_eq!(a64.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn damaged_inputs_are_rejected() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(
                Container::from_bytes(&bytes[..cut]),
                Err(Error::CorruptCheckpoint(_))
            ));
        }
        let mut flipped = bytes.clone();
        let idx = bytes.len() - 12;
        flipped[idx] ^= 0xff;
        assert!(Container::from_bytes(&flipped).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Container::from_bytes(&magic).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(Container::from_bytes(&version).is_err());
    }

    #[test]
    fn component_tag_checked() {
        let c = sample();
        assert!(c.config_table("TEST").is_ok());
        assert!(c.config_table("LM").is_err());
    }
}
