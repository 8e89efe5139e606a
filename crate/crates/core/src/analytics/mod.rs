//! Corpus-level analyses: metadata, global statistics, thresholded
//! retrieval, pairwise distances, layouts and style retrieval.

mod distance;
mod layout;
mod retrieval;

pub use distance::{
    distance_matrix, dtw_distance, dtw_matrix, profile_distance, profile_matrix, DistanceMatrix, Metric,
};
pub use layout::{force_layout, force_layout_from, LayoutConfig};
pub use retrieval::{
    global_stats, mean_reciprocal_rank, mrr_retrieval, precision_curve, threshold_retrieval, CurvePoint,
    MrrOptions, RetrievalMode, RetrievalResult, RetrievedSet, StyleMrr,
};

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenter::InstrumentationProfile;

/// Separator between styles of a multi-style recording.
pub const STYLE_SEPARATOR: char = ';';

const COLUMNS: [&str; 5] = ["id", "path", "style", "artist_id", "anthology"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub path: PathBuf,
    /// Trimmed style names; empty when unlabeled.
    pub styles: Vec<String>,
    pub artist_id: String,
    pub anthology: bool,
}

impl CorpusRecord {
    /// The single style, if exactly one is given.
    pub fn style(&self) -> Option<&str> {
        match self.styles.as_slice() {
            [s] => Some(s),
            _ => None,
        }
    }

    pub fn multi_style(&self) -> bool {
        self.styles.len() > 1
    }
}

/// Validated recording metadata, in file order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub records: Vec<CorpusRecord>,
}

fn parse_flag(raw: &str, row: usize) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" => Ok(false),
        "1" | "true" | "yes" => Ok(true),
        other => Err(Error::Metadata(format!("row {row}: anthology flag {other:?} is not a boolean"))),
    }
}

impl CorpusIndex {
    pub fn from_records(records: Vec<CorpusRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.id.is_empty() {
                return Err(Error::Metadata("empty recording id".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records })
    }

    /// Parse a metadata CSV with columns `id,path,style,artist_id,anthology`
    /// (any order, extra columns ignored).
    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut pos = [0usize; 5];
        for (slot, name) in pos.iter_mut().zip(COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Metadata(format!("missing column {name:?}")))?;
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |k: usize| row.get(pos[k]).unwrap_or("").to_string();
            records.push(CorpusRecord {
                id: field(0),
                path: PathBuf::from(field(1)),
                styles: field(2)
                    .split(STYLE_SEPARATOR)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                artist_id: field(3),
                anthology: parse_flag(&field(4), i + 2)?,
            });
        }
        Self::from_records(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(COLUMNS)?;
        for r in &self.records {
            let styles = r.styles.join(&STYLE_SEPARATOR.to_string());
            let path = r.path.to_string_lossy();
            let anthology = if r.anthology { "1" } else { "0" };
            w.write_record([r.id.as_str(), &path, &styles, &r.artist_id, anthology])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Number of single-style recordings per style.
    pub fn style_histogram(&self) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for r in &self.records {
            if let Some(s) = r.style() {
                *h.entry(s.to_string()).or_insert(0) += 1;
            }
        }
        h
    }
}

/// CSV of every profile field per recording, for scatter plots.
pub fn write_scatter_csv(
    writer: impl std::io::Write,
    rows: &[(&str, Option<&str>, InstrumentationProfile)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "style", "pct_vocal", "pct_picked", "pct_strummed", "pct_palmas"])?;
    for (id, style, p) in rows {
        let mut rec = vec![id.to_string(), style.unwrap_or("").to_string()];
        rec.extend(p.as_array().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "id,path,style,artist_id,anthology\n\
        a,a.wav,soleares,ar1,0\n\
        b,b.wav,,ar2,1\n\
        c,c.wav, tientos ; tangos ,ar1,\n";

    #[test]
    fn ingests_a_small_file() {
        let idx = CorpusIndex::from_reader(GOOD.as_bytes()).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.records[0].style(), Some("soleares"));
        assert!(idx.records[1].styles.is_empty() && idx.records[1].anthology);
        assert!(idx.records[2].multi_style());
        assert_eq!(idx.records[2].styles, ["tientos", "tangos"]);
        assert_eq!(idx.style_histogram().len(), 1);

        let mut out = Vec::new();
        idx.write_csv(&mut out).unwrap();
        assert_eq!(CorpusIndex::from_reader(out.as_slice()).unwrap(), idx);
    }

    #[test]
    fn duplicate_ids_are_named() {
        let text = "id,path,style,artist_id,anthology\nx,1.wav,a,r,0\nx,2.wav,a,r,0\n";
        match CorpusIndex::from_reader(text.as_bytes()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "x"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let err = CorpusIndex::from_reader("id,path,style\na,b,c\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("artist_id"));
    }
}
