//! Sample files and run summaries.
//!
//! A sample file is CSV with the header `x_0,..,x_{n-1},e,e_star,accepted`.
//! Floats are written in Rust's shortest round-trip form so that reading a
//! file back reproduces the in-memory values exactly.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{summarize, ChainSummary};
use crate::error::{invalid, Result};
use crate::manifold::Manifold;
use crate::sampler::{ChainOutput, TransitionRecord};

pub fn chain_file_name(index: usize) -> String {
    format!("chain_{index}.csv")
}

pub const SUMMARY_FILE: &str = "summary.json";

fn header(dim: usize) -> Vec<String> {
    (0..dim)
        .map(|i| format!("x_{i}"))
        .chain(["e", "e_star", "accepted"].map(String::from))
        .collect()
}

pub fn write_samples<W: Write>(out: W, dim: usize, chain: &ChainOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| invalid(format!("writing samples: {e}"));
    w.write_record(header(dim)).map_err(io_err)?;
    let mut row = Vec::with_capacity(dim + 3);
    for (x, r) in chain.samples.iter().zip(&chain.records) {
        if x.len() != dim {
            return Err(invalid(format!("sample has length {}, expected {dim}", x.len())));
        }
        row.clear();
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(r.energy.to_string());
        row.push(r.proposed_energy.to_string());
        row.push(u8::from(r.accepted).to_string());
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| invalid(format!("writing samples: {e}")))?;
    Ok(())
}

/// Parsed sample file. Record fields that the file does not store are NaN;
/// `failed` is recovered from a non-finite `e_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub samples: Vec<DVector<f64>>,
    pub records: Vec<TransitionRecord>,
}

pub fn read_samples<R: Read>(input: R) -> Result<SampleFile> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| invalid(format!("reading sample header: {e}")))?
        .clone();
    let n = headers.len();
    if n < 4 || headers.iter().ne(header(n - 3).iter().map(String::as_str)) {
        return Err(invalid(format!(
            "unexpected sample file header: {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let dim = n - 3;
    let mut samples = Vec::new();
    let mut records = Vec::new();
    for (row_idx, rec) in r.records().enumerate() {
        let line = row_idx + 2;
        let rec = rec.map_err(|e| invalid(format!("sample file line {line}: {e}")))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| invalid(format!("sample file line {line}: cannot parse {:?}", &rec[i])))
        };
        let x = (0..dim).map(num).collect::<Result<Vec<_>>>()?;
        let energy = num(dim)?;
        let proposed_energy = num(dim + 1)?;
        let accepted = match &rec[dim + 2] {
            "1" => true,
            "0" => false,
            other => return Err(invalid(format!("sample file line {line}: accepted flag {other:?}"))),
        };
        samples.push(DVector::from_vec(x));
        records.push(TransitionRecord {
            energy,
            proposed_energy,
            log_uniform: f64::NAN,
            accepted,
            drift: f64::NAN,
            speed_start: f64::NAN,
            speed_end: f64::NAN,
            failed: !proposed_energy.is_finite(),
        });
    }
    Ok(SampleFile { samples, records })
}

pub fn write_samples_file(path: &Path, dim: usize, chain: &ChainOutput) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    write_samples(std::io::BufWriter::new(f), dim, chain)
}

pub fn read_samples_file(path: &Path) -> Result<SampleFile> {
    let f = std::fs::File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    read_samples(std::io::BufReader::new(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub file: String,
    #[serde(flatten)]
    pub summary: ChainSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub chains: Vec<ChainEntry>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Summaries recomputed from sample files on disk.
pub fn summarize_files(manifold: &Manifold, files: &[PathBuf]) -> Result<RunSummary> {
    let chains = files
        .iter()
        .map(|path| {
            let parsed = read_samples_file(path)?;
            Ok(ChainEntry {
                file: path
                    .file_name()
                    .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
                summary: summarize(manifold, &parsed.samples, &parsed.records)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary { chains })
}
