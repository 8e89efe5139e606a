//! Binary container shared by all model files.
//!
//! Layout, all integers little-endian:
//!
//! | field    | size          |
//! |----------|---------------|
//! | magic    | 8 bytes `FLMSMODL` |
//! | version  | u16           |
//! | family   | u8 (0 cnn, 1 gmm) |
//! | task     | u8 (0 vocal, 1 guitar, 2 palmas) |
//! | n_dims   | u32           |
//! | dims     | n_dims x u32  |
//! | n_values | u64           |
//! | values   | n_values x f32 |

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::task::Task;

pub const MAGIC: &[u8; 8] = b"FLMSMODL";
pub const VERSION: u16 = 1;

/// Classifier family stored in a model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cnn,
    Gmm,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Cnn, Family::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cnn => "cnn",
            Family::Gmm => "gmm",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Family::Cnn => 0,
            Family::Gmm => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Family::Cnn),
            1 => Some(Family::Gmm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cnn" => Ok(Family::Cnn),
            "gmm" => Ok(Family::Gmm),
            other => Err(Error::InvalidArgument(format!("unknown model family {other:?}"))),
        }
    }
}

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBlob {
    pub family: Family,
    pub task: Task,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl ModelBlob {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * (self.dims.len() + self.values.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.family.tag());
        out.push(self.task.tag());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version, expected: VERSION });
        }
        let [family, task] = r.array()?;
        let family = Family::from_tag(family)
            .ok_or_else(|| Error::ModelFormat(format!("unknown family tag {family}")))?;
        let task =
            Task::from_tag(task).ok_or_else(|| Error::ModelFormat(format!("unknown task tag {task}")))?;
        let n_dims = u32::from_le_bytes(r.array()?) as usize;
        if n_dims > 1024 {
            return Err(Error::ModelFormat(format!("implausible dimension count {n_dims}")));
        }
        let dims = (0..n_dims)
            .map(|_| r.array().map(u32::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let n_values = u64::from_le_bytes(r.array()?) as usize;
        if n_values.checked_mul(4) != Some(bytes.len() - r.pos) {
            return Err(Error::ModelFormat(format!(
                "expected {n_values} values, found {} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let values = r.bytes[r.pos..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { family, task, dims, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::ModelFormat("truncated header".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}
