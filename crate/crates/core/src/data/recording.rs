//! Per-subject multichannel recordings, CSV ingestion and z-scoring.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::atlas::RoiAtlas;
use crate::error::{Error, Result};

/// Minimum number of time points a recording must carry.
pub const MIN_TIMEPOINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "EMCI")]
    Emci,
    #[serde(rename = "LMCI")]
    Lmci,
    #[serde(rename = "CN")]
    Cn,
    #[serde(rename = "SYNTH_A")]
    SynthA,
    #[serde(rename = "SYNTH_B")]
    SynthB,
}

impl Group {
    pub const ALL: [Group; 7] = [
        Group::Ad,
        Group::Mci,
        Group::Emci,
        Group::Lmci,
        Group::Cn,
        Group::SynthA,
        Group::SynthB,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Ad => "AD",
            Group::Mci => "MCI",
            Group::Emci => "EMCI",
            Group::Lmci => "LMCI",
            Group::Cn => "CN",
            Group::SynthA => "SYNTH_A",
            Group::SynthB => "SYNTH_B",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnexpectedGroup(s.to_owned()))
    }
}

/// One subject's `T × R` signal matrix (rows are time points, columns channels).
#[derive(Debug, Clone, PartialEq)]
pub struct BoldRecording {
    pub subject_id: String,
    pub group: Group,
    signal: Array2<f64>,
}

impl BoldRecording {
    pub fn new(subject_id: impl Into<String>, group: Group, signal: Array2<f64>) -> Result<Self> {
        if signal.nrows() < MIN_TIMEPOINTS {
            return Err(Error::Shape(format!(
                "recording has {} time points, need at least {MIN_TIMEPOINTS}",
                signal.nrows()
            )));
        }
        if signal.ncols() == 0 {
            return Err(Error::Shape("recording has no channels".into()));
        }
        for ((row, column), v) in signal.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
        }
        Ok(Self {
            subject_id: subject_id.into(),
            group,
            signal,
        })
    }

    pub fn signal(&self) -> &Array2<f64> {
        &self.signal
    }

    pub fn t_count(&self) -> usize {
        self.signal.nrows()
    }

    pub fn channel_count(&self) -> usize {
        self.signal.ncols()
    }
}

/// Parses a BOLD CSV whose header must equal the atlas labels in order.
///
/// The subject id is the file stem.
pub fn ingest_bold(path: &Path, atlas: &RoiAtlas, group: Group) -> Result<BoldRecording> {
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ingest_bold_as(path, atlas, group, subject_id)
}

pub fn ingest_bold_as(
    path: &Path,
    atlas: &RoiAtlas,
    group: Group,
    subject_id: impl Into<String>,
) -> Result<BoldRecording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_bold(file, atlas, group, subject_id)
}

pub fn read_bold<R: std::io::Read>(
    reader: R,
    atlas: &RoiAtlas,
    group: Group,
    subject_id: impl Into<String>,
) -> Result<BoldRecording> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let r = atlas.len();
    for column in 0..r.max(header.len()) {
        let expected = atlas.labels().get(column).map(String::as_str).unwrap_or("");
        let found = header.get(column).unwrap_or("");
        if expected != found {
            return Err(Error::HeaderMismatch {
                column,
                expected: expected.to_owned(),
                found: found.to_owned(),
            });
        }
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != r {
            return Err(Error::Shape(format!(
                "row {row} has {} cells, expected {r}",
                record.len()
            )));
        }
        for (column, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column,
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
            values.push(v);
        }
        rows += 1;
    }
    let signal = Array2::from_shape_vec((rows, r), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    BoldRecording::new(subject_id, group, signal)
}

/// Writes a recording as CSV. `f64` Display is the shortest round-tripping
/// decimal, so re-ingesting yields bit-identical values.
pub fn write_bold(rec: &BoldRecording, atlas: &RoiAtlas, path: &Path) -> Result<()> {
    if atlas.len() != rec.channel_count() {
        return Err(Error::Shape(format!(
            "atlas has {} labels, recording has {} channels",
            atlas.len(),
            rec.channel_count()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", atlas.labels().join(",")).map_err(io)?;
    for row in rec.signal.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Z-scores every channel using the sample (n − 1) standard deviation.
pub fn standardize(rec: &BoldRecording, atlas: &RoiAtlas) -> Result<BoldRecording> {
    let n = rec.t_count() as f64;
    let mut signal = rec.signal.clone();
    for (c, mut col) in signal.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) || sd < 1e-12 * mean.abs().max(1.0) {
            let name = atlas
                .labels()
                .get(c)
                .cloned()
                .unwrap_or_else(|| format!("#{}", c + 1));
            return Err(Error::DegenerateChannel(name));
        }
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(BoldRecording {
        subject_id: rec.subject_id.clone(),
        group: rec.group,
        signal,
    })
}

/// One entry of a cohort manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub subject_id: String,
    pub group: Group,
    pub csv_path: PathBuf,
}

/// Reads a JSON array of [`CohortEntry`]. Relative `csv_path`s are resolved
/// against the manifest's directory.
pub fn read_cohort_manifest(path: &Path) -> Result<Vec<CohortEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<CohortEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for e in &mut entries {
        if e.csv_path.is_relative() {
            e.csv_path = base.join(&e.csv_path);
        }
    }
    Ok(entries)
}

pub fn write_cohort_manifest(entries: &[CohortEntry], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(entries)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn abc() -> RoiAtlas {
        RoiAtlas::new(vec!["A".into(), "B".into(), "C".into()]).unwrap()
    }

    fn eight_by_three() -> String {
        let mut s = String::from("A,B,C\n");
        for t in 0..8 {
            s.push_str(&format!("{},{},{}\n", t, t * t, 0.5 - t as f64));
        }
        s
    }

    #[test]
    fn minimal_csv() {
        let rec = read_bold(eight_by_three().as_bytes(), &abc(), Group::Ad, "s1").unwrap();
        assert_eq!(rec.t_count(), 8);
        assert_eq!(rec.channel_count(), 3);
        assert_eq!(rec.signal()[[3, 1]], 9.0);
        assert_eq!(rec.signal()[[7, 2]], -6.5);
    }

    #[test]
    fn header_permutation_rejected() {
        let text = eight_by_three().replacen("A,B,C", "B,A,C", 1);
        let err = read_bold(text.as_bytes(), &abc(), Group::Ad, "s1").unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch { column: 0, .. }));
    }

    #[test]
    fn bad_cells() {
        let text = eight_by_three().replacen("0,0,0.5", "0,x,0.5", 1);
        assert!(matches!(
            read_bold(text.as_bytes(), &abc(), Group::Ad, "s").unwrap_err(),
            Error::NonNumeric { row: 0, column: 1, .. }
        ));
        let text = eight_by_three().replacen("0,0,0.5", "0,NaN,0.5", 1);
        assert!(matches!(
            read_bold(text.as_bytes(), &abc(), Group::Ad, "s").unwrap_err(),
            Error::NonFinite { row: 0, column: 1 }
        ));
    }

    #[test]
    fn too_short() {
        let text = "A,B,C\n1,2,3\n";
        assert!(matches!(
            read_bold(text.as_bytes(), &abc(), Group::Ad, "s").unwrap_err(),
            Error::Shape(_)
        ));
    }

    #[test]
    fn standardize_small_column() {
        let atlas = RoiAtlas::numbered(1).unwrap();
        let signal = array![[1.0], [2.0], [3.0], [1.0], [2.0], [3.0], [1.0], [2.0]];
        let rec = BoldRecording::new("s", Group::Cn, signal).unwrap();
        let z = standardize(&rec, &atlas).unwrap();
        let col = z.signal().column(0);
        let mean = col.sum() / 8.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_named() {
        let atlas = abc();
        let mut signal = Array2::zeros((8, 3));
        for t in 0..8 {
            signal[[t, 0]] = t as f64;
            signal[[t, 1]] = 5.0;
            signal[[t, 2]] = (t as f64).sin();
        }
        let rec = BoldRecording::new("s", Group::Cn, signal).unwrap();
        assert!(matches!(standardize(&rec, &atlas), Err(Error::DegenerateChannel(n)) if n == "B"));
    }

    #[test]
    fn group_parse() {
        assert_eq!("synth_a".parse::<Group>().unwrap(), Group::SynthA);
        assert_eq!("LMCI".parse::<Group>().unwrap(), Group::Lmci);
        assert!("XYZ".parse::<Group>().is_err());
    }
}
