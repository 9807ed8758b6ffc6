use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str =
    "config_hash,mode,dim,mu,theta,eta,n,trial,seed,num_vertices,num_subtrees,\
range_size,max_depth,max_abs_pos,sum_L2,green_sum,green_sum_method,cap_lower,cap_upper,cap_value,\
cap_method,cap_error,elapsed_ms,error_tag";

/// One row of the results file. Missing statistics are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrialRecord {
    pub config_hash: String,
    pub mode: String,
    pub dim: u32,
    pub mu: String,
    pub theta: String,
    pub eta: String,
    pub n: u64,
    pub trial: u32,
    pub seed: u64,
    pub num_vertices: Option<u64>,
    pub num_subtrees: Option<u64>,
    pub range_size: Option<u64>,
    pub max_depth: Option<u64>,
    pub max_abs_pos: Option<u64>,
    #[serde(rename = "sum_L2")]
    pub sum_l2: Option<u64>,
    pub green_sum: Option<f64>,
    pub green_sum_method: String,
    pub cap_lower: Option<f64>,
    pub cap_upper: Option<f64>,
    pub cap_value: Option<f64>,
    pub cap_method: String,
    pub cap_error: Option<f64>,
    pub elapsed_ms: u64,
    pub error_tag: String,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.error_tag.is_empty()
    }

    /// cap_lower ≤ cap_value + error and cap_value − error ≤ cap_upper,
    /// whenever all are present. Sampled bounds carry their own error,
    /// which is added on their side.
    pub fn sandwich_holds(&self) -> bool {
        match (
            self.cap_lower,
            self.cap_value,
            self.cap_error,
            self.cap_upper,
        ) {
            (Some(lo), Some(v), Some(e), Some(hi)) => {
                lo <= v + e + 1e-9 * v.abs() && v - e <= hi + 1e-9 * hi.abs()
            }
            _ => true,
        }
    }

    /// The same row with the wall-clock column cleared, for determinism
    /// comparisons.
    pub fn statistics_only(&self) -> TrialRecord {
        TrialRecord {
            elapsed_ms: 0,
            ..self.clone()
        }
    }
}

/// Append-only CSV writer that flushes after every batch.
pub struct RecordWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl RecordWriter {
    /// Opens `path` for appending; writes the header if the file is new or
    /// empty, and refuses files whose header differs.
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let existing = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        if existing > 0 {
            let mut first = String::new();
            File::open(path)?.take(4096).read_to_string(&mut first)?;
            let header = first.lines().next().unwrap_or("");
            if header != CSV_HEADER {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{} has a different header", path.display()),
                ));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut buf = BufWriter::new(file);
        if existing == 0 {
            writeln!(buf, "{CSV_HEADER}")?;
        }
        let inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(buf);
        Ok(Self { inner })
    }

    pub fn write_batch(&mut self, records: &[TrialRecord]) -> std::io::Result<()> {
        for r in records {
            self.inner.serialize(r).map_err(std::io::Error::other)?;
        }
        self.inner.flush()
    }
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect()
}
