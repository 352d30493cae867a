//! Fingerprint candidate files: JSONL records `{"bits": [..], "label": "..", "y": ..}`
//! or CSV with header `bit_0,..,bit_{d-1}[,y]`.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DomainSpec, MixedPoint};
use crate::error::{Result, SoberError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerprintRecord {
    pub bits: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl FingerprintRecord {
    pub fn to_point(&self) -> MixedPoint {
        MixedPoint {
            continuous: Vec::new(),
            categorical: Vec::new(),
            binary: self.bits.iter().map(|b| *b == 1).collect(),
        }
    }
}

fn check_widths(records: &[FingerprintRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Err(SoberError::InvalidArgument("no fingerprint records".into()));
    };
    let d = first.bits.len();
    if d == 0 {
        return Err(SoberError::InvalidArgument("empty fingerprint".into()));
    }
    for r in records {
        if r.bits.len() != d {
            return Err(SoberError::DimensionMismatch {
                expected: d,
                got: r.bits.len(),
            });
        }
        if let Some(b) = r.bits.iter().find(|b| **b > 1) {
            return Err(SoberError::NonBinaryInput(*b as f64));
        }
    }
    Ok(())
}

pub fn read_jsonl<R: Read>(reader: R) -> Result<Vec<FingerprintRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    check_widths(&out)?;
    Ok(out)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<FingerprintRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut n_bits = 0;
    let mut y_col = None;
    for (i, h) in headers.iter().enumerate() {
        if h == format!("bit_{i}") && y_col.is_none() {
            n_bits += 1;
        } else if h == "y" && i == n_bits {
            y_col = Some(i);
        } else {
            return Err(SoberError::InvalidArgument(format!("unexpected csv column '{h}'")));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bits = (0..n_bits)
            .map(|i| {
                rec[i]
                    .trim()
                    .parse::<u8>()
                    .map_err(|_| SoberError::NonBinaryInput(rec[i].trim().parse().unwrap_or(f64::NAN)))
            })
            .collect::<Result<Vec<u8>>>()?;
        let y = match y_col {
            Some(c) if !rec[c].trim().is_empty() => Some(
                rec[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SoberError::InvalidArgument(format!("bad y value: {e}")))?,
            ),
            _ => None,
        };
        out.push(FingerprintRecord { bits, label: None, y });
    }
    check_widths(&out)?;
    Ok(out)
}

/// Reads by extension: `.csv` as CSV, anything else as JSONL.
pub fn read_fingerprints(path: &Path) -> Result<Vec<FingerprintRecord>> {
    let f = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_csv(f),
        _ => read_jsonl(f),
    }
}

/// Enumerable binary domain holding every record.
pub fn fingerprint_domain(records: &[FingerprintRecord]) -> Result<DomainSpec> {
    check_widths(records)?;
    DomainSpec::new(Vec::new(), Vec::new(), records[0].bits.len())?
        .with_candidates(records.iter().map(|r| r.to_point()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip() {
        let src = "{\"bits\":[1,0,1],\"label\":\"a\",\"y\":0.5}\n\n{\"bits\":[0,0,1]}\n";
        let r = read_jsonl(src.as_bytes()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].label.as_deref(), Some("a"));
        assert_eq!(r[1].y, None);
        let d = fingerprint_domain(&r).unwrap();
        assert_eq!(d.encoded_dim(), 3);
        assert!(d.is_enumerable());
    }

    #[test]
    fn csv_with_and_without_y() {
        let r = read_csv("bit_0,bit_1,y\n1,0,2.5\n0,1,-1\n".as_bytes()).unwrap();
        assert_eq!(r[0].bits, vec![1, 0]);
        assert_eq!(r[1].y, Some(-1.0));
        let r = read_csv("bit_0,bit_1\n1,1\n".as_bytes()).unwrap();
        assert_eq!(r[0].y, None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_jsonl("{\"bits\":[1,2]}\n".as_bytes()).is_err());
        assert!(read_jsonl("{\"bits\":[1,0]}\n{\"bits\":[1]}\n".as_bytes()).is_err());
        assert!(read_csv("bit_0,z\n1,2\n".as_bytes()).is_err());
    }
}
