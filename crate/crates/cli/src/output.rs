//! File formats: report JSON, spectra CSV, and cochain arrays (CSV, or raw
//! little-endian `f64` with a JSON header next to it).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use spencer_core::hodge::HarmonicSpace;
use spencer_core::SpectrumReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    /// `[rows, cols]`; data is column-major.
    pub shape: [usize; 2],
    pub degree: usize,
    pub metric: String,
    pub dtype: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_spectra(path: &Path, report: &SpectrumReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["degree", "index", "eigenvalue"])?;
    for s in &report.degrees {
        for (i, v) in s.eigenvalues.iter().enumerate() {
            w.write_record([s.degree.to_string(), i.to_string(), format!("{v:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_array(path: &Path, data: &DMatrix<f64>, degree: usize, metric: &str) -> anyhow::Result<()> {
    let bytes: Vec<u8> = data.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    let header = ArrayHeader {
        shape: [data.nrows(), data.ncols()],
        degree,
        metric: metric.to_string(),
        dtype: "f64-le".into(),
    };
    write_json(&header_path(path), &header)
}

pub fn dump_harmonics(dir: &Path, spaces: &[HarmonicSpace], metric: &str) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for hs in spaces {
        let path = dir.join(format!("harmonics_{}.bin", hs.degree));
        write_array(&path, &hs.basis, hs.degree, metric)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_cochain_csv(path: &Path, u: &DVector<f64>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["value"])?;
    for v in u.iter() {
        w.write_record([format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cochain: `.csv` (one value per row, optional `value` header)
/// or a binary array with its JSON header alongside.
pub fn read_cochain(path: &Path) -> anyhow::Result<DVector<f64>> {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("").trim();
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if i == 0 => continue,
                Err(e) => bail!("{}: row {}: {e}", path.display(), i + 1),
            }
        }
        return Ok(DVector::from_vec(values));
    }
    let header_file = header_path(path);
    let header: ArrayHeader = serde_json::from_str(
        &fs::read_to_string(&header_file).with_context(|| format!("reading {}", header_file.display()))?,
    )?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let len = header.shape[0] * header.shape[1];
    if header.shape[1] != 1 || bytes.len() != 8 * len {
        bail!(
            "{}: expected a single column of {} f64 values per the header, found {} bytes",
            path.display(),
            len,
            bytes.len()
        );
    }
    Ok(DVector::from_iterator(
        len,
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))),
    ))
}
