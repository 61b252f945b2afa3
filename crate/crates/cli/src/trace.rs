//! Trace CSV files: fixed column order, empty cells for missing metrics.

use std::path::Path;

use anyhow::{bail, Context, Result};
use shuffle_vr::diagnostics::{Flags, TraceRecord};

pub const COLUMNS: [&str; 9] = [
    "epoch",
    "grad_evals",
    "grad_map_residual_sq",
    "prox_residual_sq",
    "dist_sq_to_opt",
    "pi_norm_residual_sq",
    "bound_convex",
    "bound_sc",
    "flags",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn parse_cell(s: &str, column: &str, row: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).with_context(|| format!("row {row}, column {column}: bad number {s:?}"))
}

pub fn to_csv(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in trace {
        w.write_record([
            r.epoch.to_string(),
            format!("{}", r.grad_evals),
            cell(Some(r.grad_map_residual_sq)),
            cell(r.prox_residual_sq),
            cell(r.dist_sq_to_opt),
            cell(r.pi_norm_residual_sq),
            cell(r.bound_convex),
            cell(r.bound_sc),
            r.flags.encode(),
        ])?;
    }
    w.into_inner().context("flushing csv")
}

pub fn from_csv(bytes: &[u8]) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        bail!("unexpected trace header {header:?}");
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let num = |j: usize| parse_cell(&rec[j], COLUMNS[j], row);
        let required = |j: usize| num(j)?.with_context(|| format!("row {row}: {} is required", COLUMNS[j]));
        out.push(TraceRecord {
            epoch: rec[0].parse().with_context(|| format!("row {row}: bad epoch {:?}", &rec[0]))?,
            grad_evals: required(1)?,
            grad_map_residual_sq: required(2)?,
            prox_residual_sq: num(3)?,
            dist_sq_to_opt: num(4)?,
            pi_norm_residual_sq: num(5)?,
            bound_convex: num(6)?,
            bound_sc: num(7)?,
            flags: Flags::decode(&rec[8])?,
        });
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    from_csv(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Pointwise mean over seeds. Optional metrics stay empty unless every seed
/// has them; flags are the union.
pub fn mean_trace(traces: &[Vec<TraceRecord>]) -> Result<Vec<TraceRecord>> {
    let Some(first) = traces.first() else { bail!("no traces to average") };
    if traces.iter().any(|t| t.len() != first.len()) {
        bail!("traces have different lengths");
    }
    let m = traces.len() as f64;
    let mut out = Vec::with_capacity(first.len());
    for (j, head) in first.iter().enumerate() {
        let rows: Vec<&TraceRecord> = traces.iter().map(|t| &t[j]).collect();
        if rows.iter().any(|r| r.epoch != head.epoch) {
            bail!("traces disagree on the epoch of record {j}");
        }
        let avg = |f: fn(&TraceRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / m;
        let avg_opt = |f: fn(&TraceRecord) -> Option<f64>| {
            rows.iter().map(|r| f(r)).sum::<Option<f64>>().map(|s| s / m)
        };
        out.push(TraceRecord {
            epoch: head.epoch,
            grad_evals: avg(|r| r.grad_evals),
            grad_map_residual_sq: avg(|r| r.grad_map_residual_sq),
            prox_residual_sq: avg_opt(|r| r.prox_residual_sq),
            dist_sq_to_opt: avg_opt(|r| r.dist_sq_to_opt),
            pi_norm_residual_sq: avg_opt(|r| r.pi_norm_residual_sq),
            bound_convex: avg_opt(|r| r.bound_convex),
            bound_sc: avg_opt(|r| r.bound_sc),
            flags: rows.iter().fold(Flags::default(), |acc, r| acc.union(&r.flags)),
        });
    }
    Ok(out)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !dir.is_dir() {
        bail!("output directory {} does not exist", dir.display());
    }
    let name = path.file_name().with_context(|| format!("{} has no file name", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: u64, g: f64, dist: Option<f64>) -> TraceRecord {
        TraceRecord {
            epoch,
            grad_evals: epoch as f64,
            grad_map_residual_sq: g,
            prox_residual_sq: Some(g * 2.0),
            dist_sq_to_opt: dist,
            pi_norm_residual_sq: None,
            bound_convex: Some(1.0 / 3.0),
            bound_sc: None,
            flags: Flags { expectation_bound: true, ..Flags::default() },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = vec![rec(0, 1.0, Some(0.5)), rec(1, 1e-300, None), rec(2, f64::INFINITY, Some(0.1 + 0.2))];
        let bytes = to_csv(&t).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("epoch,grad_evals,grad_map_residual_sq,"));
        assert!(!text.contains('\r'));
        assert_eq!(from_csv(&bytes).unwrap(), t);
    }

    #[test]
    fn mean_handles_missing_cells() {
        let a = vec![rec(0, 1.0, Some(1.0))];
        let b = vec![rec(0, 3.0, None)];
        let m = mean_trace(&[a.clone(), b]).unwrap();
        assert_eq!(m[0].grad_map_residual_sq, 2.0);
        assert_eq!(m[0].dist_sq_to_opt, None);
        assert!(mean_trace(&[a.clone(), vec![]]).is_err());
        assert!(mean_trace(&[]).is_err());
    }

    #[test]
    fn rejects_foreign_headers() {
        assert!(from_csv(b"a,b\n1,2\n").is_err());
    }
}
