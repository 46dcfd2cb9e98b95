use std::io::Write;
use std::path::{Path, PathBuf};

use super::metrics::csv_err;
use super::rollout::EpisodeOutcome;
use crate::error::{Error, Result};

/// Per-episode standard deviation over timesteps of every α, indexed
/// `[layer][component]`. Population std via Welford's update, so a
/// constant trace gives exactly zero.
pub fn alpha_std(trace: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let Some(first) = trace.first() else {
        return Vec::new();
    };
    let mut mean: Vec<Vec<f64>> = first.iter().map(|l| vec![0.0; l.len()]).collect();
    let mut m2 = mean.clone();
    for (n, step) in trace.iter().enumerate() {
        let n = (n + 1) as f64;
        for (l, row) in step.iter().enumerate() {
            for (m, &x) in row.iter().enumerate() {
                let d = x - mean[l][m];
                mean[l][m] += d / n;
                m2[l][m] += d * (x - mean[l][m]);
            }
        }
    }
    let n = trace.len() as f64;
    m2.iter()
        .map(|row| row.iter().map(|&v| (v / n).sqrt()).collect())
        .collect()
}

/// Largest per-episode α std over layers and components.
pub fn max_alpha_std(trace: &[Vec<Vec<f64>>]) -> f64 {
    alpha_std(trace)
        .iter()
        .flatten()
        .fold(0.0, |m: f64, &v| m.max(v))
}

/// Cosine similarity between the time-averaged, flattened α vectors of
/// two traces; 0 if either is empty or zero.
pub fn trace_similarity(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    let avg = |t: &[Vec<Vec<f64>>]| -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for step in t {
            let flat: Vec<f64> = step.iter().flatten().copied().collect();
            if acc.is_empty() {
                acc = vec![0.0; flat.len()];
            }
            acc.iter_mut().zip(&flat).for_each(|(s, v)| *s += v);
        }
        acc
    };
    let (x, y) = (avg(a), avg(b));
    if x.len() != y.len() {
        return 0.0;
    }
    crate::numcore::cosine(&x, &y)
}

/// Companion path `<stem>_summary.csv` next to `path`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("weights");
    path.with_file_name(format!("{stem}_summary.csv"))
}

/// Writes `episode,timestep,layer,component,alpha` rows to `path` and the
/// per-episode std summary to [`summary_path`].
pub fn export_weight_trace(episodes: &[EpisodeOutcome], path: &Path) -> Result<PathBuf> {
    if episodes.iter().all(|e| e.alphas.is_empty()) {
        return Err(Error::Invalid("no prompt weights recorded".into()));
    }
    let mut trace = csv::Writer::from_writer(Vec::new());
    trace
        .write_record(["episode", "timestep", "layer", "component", "alpha"])
        .map_err(csv_err)?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary
        .write_record(["episode", "layer", "component", "alpha_std", "objects_moved"])
        .map_err(csv_err)?;
    for (e, ep) in episodes.iter().enumerate() {
        for (t, step) in ep.alphas.iter().enumerate() {
            for (l, row) in step.iter().enumerate() {
                for (m, a) in row.iter().enumerate() {
                    trace
                        .write_record([e.to_string(), t.to_string(), l.to_string(), m.to_string(), a.to_string()])
                        .map_err(csv_err)?;
                }
            }
        }
        for (l, row) in alpha_std(&ep.alphas).iter().enumerate() {
            for (m, s) in row.iter().enumerate() {
                summary
                    .write_record([
                        e.to_string(),
                        l.to_string(),
                        m.to_string(),
                        s.to_string(),
                        ep.objects_moved.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
        }
    }
    let write = |p: &Path, w: csv::Writer<Vec<u8>>| -> Result<()> {
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        std::fs::File::create(p)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(p, e))
    };
    let sp = summary_path(path);
    write(path, trace)?;
    write(&sp, summary)?;
    Ok(sp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_has_exactly_zero_std() {
        let step = vec![vec![0.1, -0.7, 0.3333333333333333], vec![0.9]];
        let trace = vec![step; 37];
        assert!(alpha_std(&trace).iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn std_matches_two_pass_oracle() {
        let xs = [0.1, 0.5, -0.2, 0.9, 0.3];
        let trace: Vec<_> = xs.iter().map(|&x| vec![vec![x]]).collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((alpha_std(&trace)[0][0] - var.sqrt()).abs() < 1e-15);
    }
}
