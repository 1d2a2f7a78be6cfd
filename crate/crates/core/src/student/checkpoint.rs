//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes   "PGKDSTU\0"
//! version    u32 LE    1
//! header_len u64 LE
//! header     JSON      {"taxonomy": [...], "featurizer": {...}}
//! bias       f64 LE x classes
//! weights    f64 LE x classes*dimension, row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Taxonomy;

use super::featurize::FeaturizerConfig;
use super::model::{Classifier, StudentModel};
use super::StudentError;

const MAGIC: &[u8; 8] = b"PGKDSTU\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    taxonomy: Taxonomy,
    featurizer: FeaturizerConfig,
}

impl StudentModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            taxonomy: self.taxonomy().clone(),
            featurizer: self.featurizer().clone(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + 8 * (self.bias().len() + self.weights().len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.bias().iter().chain(self.weights()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StudentError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(StudentError::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(StudentError::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| StudentError::Checkpoint(format!("header: {e}")))?;
        header.featurizer.validate()?;
        let k = header.taxonomy.len();
        let bias = cur.floats(k)?;
        let weights = cur.floats(k * header.featurizer.dimension)?;
        if cur.pos != bytes.len() {
            return Err(StudentError::Checkpoint("trailing bytes".into()));
        }
        StudentModel::from_parts(header.taxonomy, header.featurizer, weights, bias)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StudentError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StudentError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StudentError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| StudentError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, StudentError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| StudentError::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
