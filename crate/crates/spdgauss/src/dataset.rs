//! JSON-lines dataset format for SPD-valued data.
//!
//! The first line is a self-describing header,
//! `{"format":"spdgauss-dataset","version":1,"m":<m>}` (plus the seed when
//! the file was produced by a stochastic command), followed by one record
//! per line: `{"matrix":[[...]],"label":"..."}` with the label optional.
//! Matrices are serialised row-major at full double precision and are
//! revalidated on load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::SpdMatrix;
use crate::mixture::{matrix_from_rows, matrix_rows};

/// One data point: a validated SPD matrix and an optional class label.
#[derive(Clone, Debug)]
pub struct DatasetRecord {
    pub matrix: SpdMatrix,
    pub label: Option<String>,
}

/// An in-memory dataset with its header metadata.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dim: usize,
    pub seed: Option<u64>,
    pub records: Vec<DatasetRecord>,
}

#[derive(Serialize, Deserialize)]
struct HeaderJson {
    format: String,
    version: u32,
    m: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    matrix: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    label: Option<String>,
}

impl Dataset {
    pub fn new(dim: usize, seed: Option<u64>, records: Vec<DatasetRecord>) -> Result<Self> {
        if let Some(bad) = records.iter().find(|r| r.matrix.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.matrix.dim(),
            });
        }
        Ok(Dataset { dim, seed, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn matrices(&self) -> Vec<SpdMatrix> {
        self.records.iter().map(|r| r.matrix.clone()).collect()
    }

    /// Points paired with labels; errors if any record is unlabelled.
    pub fn labelled(&self) -> Result<Vec<(SpdMatrix, String)>> {
        self.records
            .iter()
            .map(|r| {
                r.label
                    .clone()
                    .map(|l| (r.matrix.clone(), l))
                    .ok_or(Error::EmptyInput("record without a label"))
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&HeaderJson {
            format: "spdgauss-dataset".into(),
            version: 1,
            m: self.dim,
            seed: self.seed,
        })
        .expect("header serialises");
        out.push('\n');
        for r in &self.records {
            let record = RecordJson {
                matrix: matrix_rows(&r.matrix),
                label: r.label.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| Error::Format("empty dataset".into()))?;
        let header: HeaderJson = serde_json::from_str(header_line)
            .map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        if header.format != "spdgauss-dataset" {
            return Err(Error::Format(format!(
                "unexpected format tag {:?}",
                header.format
            )));
        }
        if header.version != 1 {
            return Err(Error::Format(format!(
                "unsupported dataset version {}",
                header.version
            )));
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: RecordJson = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("record {}: {e}", k + 1)))?;
            let matrix = matrix_from_rows(header.m, &record.matrix)?;
            records.push(DatasetRecord {
                matrix,
                label: record.label,
            });
        }
        Dataset::new(header.m, header.seed, records)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}
