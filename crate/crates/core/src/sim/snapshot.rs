//! Time-indexed cumulative energy tables and the per-run file set.
//!
//! Files written by [`write_run_files`]:
//! - `summary.txt`: `key = value` totals.
//! - `snapshots_cores.csv`: `time,core_0,core_1,...` cumulative energy (pJ).
//! - `snapshots_interconnects.csv`: `time,<link>,...` cumulative energy (pJ);
//!   links are named `inject_<core>` or `hop_<r>_<c>-<r>_<c>`.
//! - `output_snapshot.csv`: `timestamp,value`, the end signal.
//! - `gui_setting.csv`: `key,value` echo of the run parameters.

use std::fmt::Write as _;
use std::path::Path;

use super::noc::LinkId;
use super::{CostReport, SimError, Sink};

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    pub times: Vec<f64>,
    /// One row per sample time, one column per core.
    pub cores: Vec<Vec<f64>>,
    pub links: Vec<LinkId>,
    /// One row per sample time, one column per entry of `links`.
    pub interconnects: Vec<Vec<f64>>,
}

/// Cumulative energy per core and link every `every` ns from the start of
/// the run; the last row is taken at the end of the run and equals the
/// report totals.
pub fn snapshot(report: &CostReport, every: f64) -> Result<Snapshots, SimError> {
    if !(every.is_finite() && every > 0.0) {
        return Err(SimError::BadInterval);
    }
    let ledger = report.ledger.as_ref().ok_or(SimError::MissingLedger)?;
    let mut order: Vec<usize> = (0..ledger.len()).collect();
    order.sort_by(|&a, &b| ledger[a].time.total_cmp(&ledger[b].time).then(a.cmp(&b)));

    let links: Vec<LinkId> = report.energy_interconnect.keys().copied().collect();
    let n_cores = report.energy_per_core.len();
    let duration = report.t_end - report.t_start;
    let mut times = Vec::new();
    let mut k = 1u64;
    while (k as f64) * every < duration {
        times.push(report.t_start + k as f64 * every);
        k += 1;
    }
    times.push(report.t_end);

    let mut core_acc = vec![0.0; n_cores];
    let mut link_acc = vec![0.0; links.len()];
    let mut cores = Vec::with_capacity(times.len());
    let mut interconnects = Vec::with_capacity(times.len());
    let mut next = 0;
    for (i, &t) in times.iter().enumerate() {
        let last = i + 1 == times.len();
        while next < order.len() && (last || ledger[order[next]].time <= t) {
            let e = &ledger[order[next]];
            match e.sink {
                Sink::Core(c) => core_acc[c] += e.energy,
                Sink::Link(l) => {
                    let j = links.binary_search(&l).expect("ledger link is in the report");
                    link_acc[j] += e.energy;
                }
            }
            next += 1;
        }
        let elapsed = if last { duration } else { t - report.t_start };
        let row: Vec<f64> = if last {
            report.energy_per_core.clone()
        } else {
            core_acc
                .iter()
                .zip(&report.static_energy_per_core)
                .map(|(d, s)| d + if duration > 0.0 { s * elapsed / duration } else { 0.0 })
                .collect()
        };
        cores.push(row);
        interconnects.push(if last {
            links.iter().map(|l| report.energy_interconnect[l]).collect()
        } else {
            link_acc.clone()
        });
    }
    Ok(Snapshots {
        times,
        cores,
        links,
        interconnects,
    })
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |e| SimError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> SimError + '_ {
    move |e| SimError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

pub fn summary_text(report: &CostReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "total_energy_pj = {}", report.total_energy);
    let _ = writeln!(s, "core_energy_pj = {}", report.energy_per_core.iter().sum::<f64>());
    let _ = writeln!(s, "interconnect_energy_pj = {}", report.interconnect_energy());
    let _ = writeln!(s, "latency_ns = {}", report.latency_end_to_end);
    let _ = writeln!(s, "throughput_fps = {}", report.throughput);
    let _ = writeln!(s, "cores = {}", report.energy_per_core.len());
    let _ = writeln!(s, "frames = {}", report.n_frames);
    let _ = writeln!(s, "events_processed = {}", report.events_processed);
    let _ = writeln!(s, "messages = {}", report.messages);
    let _ = writeln!(s, "max_inbox_depth = {}", report.max_inbox_depth);
    let _ = writeln!(
        s,
        "max_link_queue = {}",
        report.congestion.values().copied().max().unwrap_or(0)
    );
    let _ = writeln!(s, "output_samples = {}", report.end_signal.len());
    s
}

pub fn write_end_signal(path: &Path, signal: &[(f64, f64)]) -> Result<(), SimError> {
    let err = csv_io(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(["timestamp", "value"]).map_err(&err)?;
    for (t, v) in signal {
        w.write_record([t.to_string(), v.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(io(path))
}

/// Writes the per-run file set into `dir`, creating it if needed. Snapshot
/// tables need a report recorded with the ledger.
pub fn write_run_files(dir: &Path, report: &CostReport, every: f64, settings: &[(String, String)]) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let summary = dir.join("summary.txt");
    std::fs::write(&summary, summary_text(report)).map_err(io(&summary))?;

    let snaps = snapshot(report, every)?;
    let path = dir.join("snapshots_cores.csv");
    let err = csv_io(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    let mut header = vec!["time".to_string()];
    header.extend((0..report.energy_per_core.len()).map(|c| format!("core_{c}")));
    w.write_record(&header).map_err(&err)?;
    for (t, row) in snaps.times.iter().zip(&snaps.cores) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(io(&path))?;

    let path = dir.join("snapshots_interconnects.csv");
    let err = csv_io(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    let mut header = vec!["time".to_string()];
    header.extend(snaps.links.iter().map(LinkId::to_string));
    w.write_record(&header).map_err(&err)?;
    for (t, row) in snaps.times.iter().zip(&snaps.interconnects) {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(io(&path))?;

    write_end_signal(&dir.join("output_snapshot.csv"), &report.end_signal)?;

    let path = dir.join("gui_setting.csv");
    let err = csv_io(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&err)?;
    w.write_record(["key", "value"]).map_err(&err)?;
    for (k, v) in settings {
        w.write_record([k, v]).map_err(&err)?;
    }
    w.flush().map_err(io(&path))
}
