//! CSV and JSON output.
//!
//! Layout under the output directory:
//!
//! ```text
//! summary.json
//! plan.toml                         canonical plan
//! <point>/counts.csv                time,replica,count
//! <point>/com.csv                   time,replica,value
//! <point>/probe_h_<id>.csv          time,replica,xh,Mh,QVh
//! <point>/pair_<i>_<j>.csv          time,replica,equal,mass,realized_qv,predicted_qv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::InvariantViolation;

use super::plan::{ExperimentPlan, OutputFormat};
use super::run::{HarnessError, ResultBundle};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        source: e.into(),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the bundle in the requested formats and returns the files written.
pub fn emit(
    bundle: &ResultBundle,
    plan: &ExperimentPlan,
    dir: &Path,
    formats: &[OutputFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    if formats.contains(&OutputFormat::Json) {
        let path = dir.join("summary.json");
        fs::write(&path, bundle.summary_json()).map_err(io_err(&path))?;
        written.push(path);
        let path = dir.join("plan.toml");
        fs::write(&path, plan.to_toml()).map_err(io_err(&path))?;
        written.push(path);
    }
    if !formats.contains(&OutputFormat::Csv) {
        return Ok(written);
    }

    for point in &bundle.points {
        let pdir = dir.join(&point.name);
        fs::create_dir_all(&pdir).map_err(io_err(&pdir))?;

        let mut counts = Vec::new();
        let mut com = Vec::new();
        for r in &point.records {
            let rep = r.metadata.replica.to_string();
            for k in 0..r.len() {
                let t = r.times[k].to_string();
                counts.push(vec![t.clone(), rep.clone(), r.counts[k].to_string()]);
                com.push(vec![t, rep.clone(), r.com[k].to_string()]);
            }
        }
        let path = pdir.join("counts.csv");
        write_csv(&path, &["time", "replica", "count"], counts)?;
        written.push(path);
        let path = pdir.join("com.csv");
        write_csv(&path, &["time", "replica", "value"], com)?;
        written.push(path);

        let Some(first) = point.records.first() else {
            continue;
        };
        for (idx, probe) in first.h_probes.iter().enumerate() {
            let mut rows = Vec::new();
            for r in &point.records {
                let s = &r.h_probes[idx];
                for k in 0..r.len() {
                    rows.push(vec![
                        r.times[k].to_string(),
                        r.metadata.replica.to_string(),
                        s.xh[k].to_string(),
                        s.mh[k].to_string(),
                        s.qvh[k].to_string(),
                    ]);
                }
            }
            let path = pdir.join(format!("probe_h_{}.csv", probe.id));
            write_csv(&path, &["time", "replica", "xh", "Mh", "QVh"], rows)?;
            written.push(path);
        }
        for (idx, pair) in first.pair_probes.iter().enumerate() {
            let mut rows = Vec::new();
            for r in &point.records {
                let s = &r.pair_probes[idx];
                for k in 0..r.len() {
                    rows.push(vec![
                        r.times[k].to_string(),
                        r.metadata.replica.to_string(),
                        u8::from(s.equal[k]).to_string(),
                        s.mass[k].to_string(),
                        s.realized_qv[k].to_string(),
                        s.predicted_qv[k].to_string(),
                    ]);
                }
            }
            let path = pdir.join(format!("pair_{}_{}.csv", pair.i, pair.j));
            write_csv(
                &path,
                &[
                    "time",
                    "replica",
                    "equal",
                    "mass",
                    "realized_qv",
                    "predicted_qv",
                ],
                rows,
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Dumps an invariant violation with the offending state to `violation.json`.
pub fn emit_violation(
    dir: &Path,
    point: &str,
    violation: &InvariantViolation,
) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("violation.json");
    let doc = serde_json::json!({ "point": point, "violation": violation });
    let text = serde_json::to_string_pretty(&doc).expect("violation serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}
