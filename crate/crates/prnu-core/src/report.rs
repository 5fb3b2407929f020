//! Report serialization: JSON for machines, aligned text for reading, and
//! per-image trajectory CSVs for plotting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{ConfusionMatrix, SSRReport, SpoofDetail};

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Stable, pretty-printed JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Write `confusion.json` and `confusion.txt` into `dir`.
pub fn write_identification_report(matrix: &ConfusionMatrix, dir: &Path) -> Result<()> {
    write(&dir.join("confusion.json"), &to_json(matrix))?;
    write(&dir.join("confusion.txt"), &matrix.render_text())
}

fn pair_stem(report: &SSRReport) -> String {
    format!("ssr_{}_{}_{}", report.source_id, report.target_id, report.method)
}

/// Write `ssr_<source>_<target>_<method>.json/.txt` into `dir`.
pub fn write_spoof_report(report: &SSRReport, dir: &Path) -> Result<()> {
    let stem = pair_stem(report);
    write(&dir.join(format!("{stem}.json")), &to_json(report))?;
    write(&dir.join(format!("{stem}.txt")), &report.render_text())
}

/// Write one `(iteration, phi_target, phi_source)` CSV per attacked image
/// that carries a recorded trajectory.
pub fn write_trajectories(
    report: &SSRReport,
    details: &[SpoofDetail],
    dir: &Path,
) -> Result<()> {
    for detail in details {
        let Some(result) = &detail.result else { continue };
        let Some(trajectory) = &result.trajectory else { continue };
        let mut csv = String::from("iteration,phi_target,phi_source\n");
        for p in trajectory {
            csv.push_str(&format!("{},{},{}\n", p.iteration, p.phi_target, p.phi_source));
        }
        let path = dir.join(format!(
            "trajectory_{}_{}_{:03}.csv",
            report.source_id, report.target_id, detail.index
        ));
        write(&path, &csv)?;
    }
    Ok(())
}

/// Write an iteration study as one JSON plus a summary table.
pub fn write_iteration_report(
    m_values: &[usize],
    reports: &[SSRReport],
    dir: &Path,
) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Entry<'a> {
        max_iters: usize,
        #[serde(flatten)]
        report: &'a SSRReport,
    }
    let entries: Vec<Entry> = m_values
        .iter()
        .zip(reports.iter())
        .map(|(&max_iters, report)| Entry { max_iters, report })
        .collect();
    write(&dir.join("iteration_study.json"), &to_json(&entries))?;

    let mut txt = String::from("max_iters  ssr(%)  hits/attempted\n");
    for (m, r) in m_values.iter().zip(reports.iter()) {
        txt.push_str(&format!(
            "{m:>9}  {:>6.2}  {}/{}\n",
            r.ssr, r.n_classified_as_target, r.n_attempted
        ));
    }
    write(&dir.join("iteration_study.txt"), &txt)
}
