use std::io::Write;
use std::path::Path;

use num_traits::Num;
use serde::Serialize;

use crate::error::{Error, Result};

/// F_k: the best success rate seen while adapting to task k.
pub fn compute_fwt<T: PartialOrd + Copy>(history: &[T]) -> Result<T> {
    let (&first, rest) = history
        .split_first()
        .ok_or_else(|| Error::Invalid("forward transfer needs at least one evaluation".into()))?;
    Ok(rest.iter().fold(first, |m, &v| if v > m { v } else { m }))
}

/// B = (1/(k−1)) Σ_i (S_i − F_i) over the k−1 earlier tasks.
pub fn compute_bwt<T: Num + Clone>(fwt: &[T], after: &[T]) -> Result<T> {
    if fwt.is_empty() || fwt.len() != after.len() {
        return Err(Error::Invalid(format!(
            "backward transfer needs equal nonempty histories, got {} and {}",
            fwt.len(),
            after.len()
        )));
    }
    let mut total = T::zero();
    let mut count = T::zero();
    for (f, s) in fwt.iter().zip(after) {
        total = total + (s.clone() - f.clone());
        count = count + T::one();
    }
    Ok(total / count)
}

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub task_id: String,
    pub stage: String,
    pub checkpoint_epoch: usize,
    pub success_rate: f64,
    pub episodes: usize,
    pub fwt: Option<f64>,
    pub bwt: Option<f64>,
}

pub const METRICS_HEADER: [&str; 7] = [
    "task_id",
    "stage",
    "checkpoint_epoch",
    "success_rate",
    "episodes",
    "fwt",
    "bwt",
];

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        if rows.is_empty() {
            w.write_record(METRICS_HEADER).map_err(csv_err)?;
        }
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}
