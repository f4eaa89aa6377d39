use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::analysis::ResidualRecord;
use crate::cbo::RunRecord;
use crate::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `k,x1,...,xd,objective`, one row per tracked iterate.
pub fn write_trajectory_csv(path: &Path, run: &RunRecord) -> Result<()> {
    let d = run.iterates.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.push("objective".into());
    w.write_record(&header)?;
    for (k, (x, e)) in run.iterates.iter().zip(&run.objective_values).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| fmt(*v)));
        row.push(fmt(*e));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Returns the iterates and objective values of a trajectory CSV.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let d = r.headers()?.len().checked_sub(2).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{}: header needs k and objective columns",
            path.display()
        ))
    })?;
    let mut iterates = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| {
            rec[j].parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!(
                    "{}: row {}: column {j}: {e}",
                    path.display(),
                    line + 1
                ))
            })
        };
        iterates.push((1..=d).map(parse).collect::<Result<Vec<_>>>()?);
        values.push(parse(d + 1)?);
    }
    Ok((iterates, values))
}

/// Columns `k,g1,g2,g3,g,reconstruction_residual` holding Euclidean norms.
pub fn write_residual_csv(path: &Path, record: &ResidualRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "g1", "g2", "g3", "g", "reconstruction_residual"])?;
    for s in &record.steps {
        w.write_record([
            s.k.to_string(),
            fmt(s.g1_norm),
            fmt(s.g2_norm),
            fmt(s.g3_norm),
            fmt(s.g_norm),
            fmt(s.reconstruction_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
