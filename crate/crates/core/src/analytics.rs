//! Experiment bookkeeping: run directories, per-evaluation rows, simulator
//! snapshots of selected evaluations, and report tables.
//!
//! Layout under the output root:
//!
//! ```text
//! experiments/index.csv                     one row per run
//! experiments/<ALGO>_<n>_<stamp>/
//!     evaluations.csv                       one row per evaluation
//!     evaluations/eval_<i>/                 simulator files of flagged evaluations
//!     Energy/eval_<i>/, Latency/eval_<i>/   simulator files of the final bests
//!     <ALGO>_sum_<stamp>/                   algo.prm, sim.prm and report tables
//! ```
//!
//! `<stamp>` is `YYYY_MM_DD_HH-MM-SS` in local time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::optimize::operators::dominates;
use crate::optimize::{Algorithm, DesignProblem, Evaluation, GenerationLog, Genome, Observer};
use crate::sim::snapshot::write_run_files;
use crate::sim::CostReport;

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("record has no evaluations")]
    EmptyRecord,
    #[error("not a run directory: {0}")]
    NotARun(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AnalyticsError + '_ {
    move |e| AnalyticsError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> AnalyticsError + '_ {
    move |e| AnalyticsError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Which evaluations get full simulator snapshot files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    All,
    /// Only evaluations that improve the best energy or best latency so far.
    BestsOnly,
    /// Every `n`-th evaluation, starting with the first.
    Sampled(usize),
}

impl FromStr for RecordMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(RecordMode::All),
            "bests" => Ok(RecordMode::BestsOnly),
            _ => match s.strip_prefix("sampled:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Ok(RecordMode::Sampled(n)),
                _ => Err(format!("unknown record mode `{s}` (all, bests, sampled:N)")),
            },
        }
    }
}

const FIXED_COLUMNS: [&str; 15] = [
    "index",
    "generation",
    "elapsed_s",
    "feasible",
    "violation",
    "energy",
    "latency",
    "area",
    "fidelity_penalty",
    "cores",
    "fps",
    "core_energy",
    "interconnect_energy",
    "snapshot",
    "error",
];

/// One evaluation as stored in `evaluations.csv`. Metric fields are `None`
/// for designs that could not be simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    pub generation: usize,
    pub elapsed_s: f64,
    pub feasible: bool,
    pub violation: f64,
    pub energy: Option<f64>,
    pub latency: Option<f64>,
    pub area: Option<usize>,
    pub fidelity_penalty: Option<f64>,
    pub cores: Option<usize>,
    pub fps: Option<u32>,
    pub core_energy: Option<f64>,
    pub interconnect_energy: Option<f64>,
    /// Snapshot directory relative to the run directory.
    pub snapshot: Option<String>,
    pub error: Option<String>,
    pub genome: Genome,
}

impl EvalRow {
    pub fn from_evaluation(index: usize, generation: usize, elapsed_s: f64, genome: &Genome, eval: &Evaluation) -> Self {
        let m = eval.metrics;
        EvalRow {
            index,
            generation,
            elapsed_s,
            feasible: eval.feasible(),
            violation: eval.violation,
            energy: m.map(|m| m.energy),
            latency: m.map(|m| m.latency),
            area: m.map(|m| m.area),
            fidelity_penalty: m.map(|m| m.fidelity_penalty),
            cores: m.map(|m| m.cores),
            fps: m.map(|m| m.fps),
            core_energy: m.map(|m| m.core_energy),
            interconnect_energy: m.map(|m| m.interconnect_energy),
            snapshot: None,
            error: eval.error.clone(),
            genome: genome.clone(),
        }
    }

    /// Energy and latency of a feasible, simulated row.
    fn point(&self) -> Option<(f64, f64)> {
        if !self.feasible {
            return None;
        }
        Some((self.energy?, self.latency?))
    }

    fn fields(&self) -> Vec<String> {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        let mut f = vec![
            self.index.to_string(),
            self.generation.to_string(),
            self.elapsed_s.to_string(),
            self.feasible.to_string(),
            self.violation.to_string(),
            opt(&self.energy),
            opt(&self.latency),
            opt(&self.area),
            opt(&self.fidelity_penalty),
            opt(&self.cores),
            opt(&self.fps),
            opt(&self.core_energy),
            opt(&self.interconnect_energy),
            self.snapshot.clone().unwrap_or_default(),
            self.error.clone().unwrap_or_default(),
        ];
        f.extend(self.genome.iter().map(i64::to_string));
        f
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self, String> {
        fn req<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, String> {
            let s = rec.get(i).ok_or_else(|| format!("missing column {}", FIXED_COLUMNS[i]))?;
            s.parse().map_err(|_| format!("bad {} `{s}`", FIXED_COLUMNS[i]))
        }
        fn opt<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>, String> {
            match rec.get(i) {
                None | Some("") => Ok(None),
                Some(_) => req(rec, i).map(Some),
            }
        }
        let text = |i: usize| rec.get(i).filter(|s| !s.is_empty()).map(str::to_string);
        let genome = rec
            .iter()
            .skip(FIXED_COLUMNS.len())
            .map(|s| s.parse::<i64>().map_err(|_| format!("bad gene `{s}`")))
            .collect::<Result<_, _>>()?;
        Ok(EvalRow {
            index: req(rec, 0)?,
            generation: req(rec, 1)?,
            elapsed_s: req(rec, 2)?,
            feasible: req(rec, 3)?,
            violation: req(rec, 4)?,
            energy: opt(rec, 5)?,
            latency: opt(rec, 6)?,
            area: opt(rec, 7)?,
            fidelity_penalty: opt(rec, 8)?,
            cores: opt(rec, 9)?,
            fps: opt(rec, 10)?,
            core_energy: opt(rec, 11)?,
            interconnect_energy: opt(rec, 12)?,
            snapshot: text(13),
            error: text(14),
            genome,
        })
    }
}

pub fn evaluation_header(gene_names: &[String]) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(gene_names.iter().cloned())
        .collect()
}

/// Reads `evaluations.csv`, returning the gene names and the rows.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<EvalRow>), AnalyticsError> {
    let perr = |msg: String| AnalyticsError::Parse {
        path: path.display().to_string(),
        msg,
    };
    let mut r = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
        return Err(perr("unexpected header".into()));
    }
    let genes = header.iter().skip(FIXED_COLUMNS.len()).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        rows.push(EvalRow::parse(&rec).map_err(|m| perr(format!("row {}: {m}", rows.len() + 1)))?);
    }
    Ok((genes, rows))
}

/// `<ALGO>_<n>_<stamp>` to `<ALGO>_sum_<stamp>`.
pub fn summary_dir_name(run_dir_name: &str) -> Option<String> {
    let (algo, rest) = run_dir_name.split_once('_')?;
    let (n, stamp) = rest.split_once('_')?;
    n.parse::<usize>().ok()?;
    Some(format!("{algo}_sum_{stamp}"))
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Rows on the energy/latency Pareto front, sorted by latency then energy.
/// Exact duplicates keep their first occurrence.
pub fn energy_latency_front(rows: &[EvalRow]) -> Vec<&EvalRow> {
    let pts: Vec<(&EvalRow, [f64; 2])> = rows.iter().filter_map(|r| r.point().map(|(e, l)| (r, [e, l]))).collect();
    let mut front: Vec<&EvalRow> = pts
        .iter()
        .enumerate()
        .filter(|(i, (_, p))| {
            pts.iter()
                .enumerate()
                .all(|(j, (_, q))| !(dominates(q, p) || (j < *i && q == p)))
        })
        .map(|(_, (r, _))| *r)
        .collect();
    front.sort_by(|a, b| {
        let (ea, la) = a.point().expect("front rows are feasible");
        let (eb, lb) = b.point().expect("front rows are feasible");
        la.total_cmp(&lb).then(ea.total_cmp(&eb)).then(a.index.cmp(&b.index))
    });
    front
}

/// Per-generation best-so-far rows under `key`; generations before the
/// first feasible evaluation are skipped.
fn best_by_generation(rows: &[EvalRow], key: impl Fn(&EvalRow) -> Option<f64>) -> Vec<(usize, &EvalRow)> {
    let last_gen = rows.iter().map(|r| r.generation).max().unwrap_or(0);
    let mut out = Vec::new();
    let mut best: Option<&EvalRow> = None;
    for g in 0..=last_gen {
        for r in rows.iter().filter(|r| r.generation == g) {
            let Some(k) = key(r).filter(|_| r.point().is_some()) else {
                continue;
            };
            if best.is_none_or(|b| k < key(b).expect("best has a key")) {
                best = Some(r);
            }
        }
        if let Some(b) = best {
            out.push((g, b));
        }
    }
    out
}

fn opt_table(rows: &[EvalRow], key: impl Fn(&EvalRow) -> Option<f64>, genes: &[String]) -> String {
    let mut header = strings(&["generation", "energy", "latency"]);
    header.extend(genes.iter().cloned());
    let body: Vec<Vec<String>> = best_by_generation(rows, &key)
        .into_iter()
        .map(|(g, r)| {
            let (e, l) = r.point().expect("bests are feasible");
            let mut f = vec![g.to_string(), e.to_string(), l.to_string()];
            f.extend(r.genome.iter().map(i64::to_string));
            f
        })
        .collect();
    csv_text(&header, &body)
}

#[derive(Default)]
struct Group {
    count: usize,
    min: f64,
    sum: f64,
    min_latency: f64,
}

impl Group {
    fn add(&mut self, energy: f64, latency: f64) {
        if self.count == 0 {
            self.min = energy;
            self.min_latency = latency;
        }
        self.count += 1;
        self.sum += energy;
        self.min = self.min.min(energy);
        self.min_latency = self.min_latency.min(latency);
    }
}

fn trend_table<K: Ord + ToString>(rows: &[EvalRow], name: &str, key: impl Fn(&EvalRow) -> Option<K>) -> String {
    let mut groups: BTreeMap<K, Group> = BTreeMap::new();
    for r in rows {
        if let (Some((e, l)), Some(k)) = (r.point(), key(r)) {
            groups.entry(k).or_default().add(e, l);
        }
    }
    let header = strings(&[name, "count", "min_energy", "mean_energy", "min_latency"]);
    let body: Vec<Vec<String>> = groups
        .iter()
        .map(|(k, g)| {
            vec![
                k.to_string(),
                g.count.to_string(),
                g.min.to_string(),
                (g.sum / g.count as f64).to_string(),
                g.min_latency.to_string(),
            ]
        })
        .collect();
    csv_text(&header, &body)
}

/// All report tables, computed from evaluation rows alone, as
/// `(file name, contents)` pairs.
pub fn report_tables(rows: &[EvalRow], genes: &[String]) -> Result<Vec<(String, String)>, AnalyticsError> {
    if rows.is_empty() {
        return Err(AnalyticsError::EmptyRecord);
    }
    let mut out = Vec::new();
    out.push(("energyOpt.csv".to_string(), opt_table(rows, |r| r.energy, genes)));
    out.push(("latOpt.csv".to_string(), opt_table(rows, |r| r.latency, genes)));

    let scatter = |value: fn(&EvalRow) -> Option<f64>, name: &str| {
        let header = strings(&["index", "generation", "cores", name]);
        let body: Vec<Vec<String>> = rows
            .iter()
            .filter(|r| r.point().is_some())
            .filter_map(|r| {
                Some(vec![
                    r.index.to_string(),
                    r.generation.to_string(),
                    r.cores?.to_string(),
                    value(r)?.to_string(),
                ])
            })
            .collect();
        csv_text(&header, &body)
    };
    out.push(("plot_cores.csv".to_string(), scatter(|r| r.core_energy, "core_energy")));
    out.push((
        "plot_interconnect.csv".to_string(),
        scatter(|r| r.interconnect_energy, "interconnect_energy"),
    ));
    out.push(("trend_cores.csv".to_string(), trend_table(rows, "cores", |r| r.cores)));
    out.push(("trend_fps.csv".to_string(), trend_table(rows, "fps", |r| r.fps)));

    let front = energy_latency_front(rows);
    let mut header = strings(&["index", "energy", "latency"]);
    header.extend(genes.iter().cloned());
    let body: Vec<Vec<String>> = front
        .iter()
        .map(|r| {
            let (e, l) = r.point().expect("front rows are feasible");
            let mut f = vec![r.index.to_string(), e.to_string(), l.to_string()];
            f.extend(r.genome.iter().map(i64::to_string));
            f
        })
        .collect();
    out.push(("pareto.csv".to_string(), csv_text(&header, &body)));

    let worst = front.iter().filter_map(|r| r.energy).fold(0.0, f64::max);
    let body: Vec<Vec<String>> = front
        .iter()
        .enumerate()
        .map(|(rank, r)| {
            let (e, l) = r.point().expect("front rows are feasible");
            vec![rank.to_string(), r.index.to_string(), l.to_string(), e.to_string(), (e / worst).to_string()]
        })
        .collect();
    let header = strings(&["rank", "index", "latency", "energy", "relative_energy"]);
    out.push(("relative_energy.csv".to_string(), csv_text(&header, &body)));

    let feasible = rows.iter().filter(|r| r.feasible).count();
    let mut s = String::new();
    let _ = writeln!(s, "evaluations = {}", rows.len());
    let _ = writeln!(s, "feasible = {feasible}");
    let _ = writeln!(s, "generations = {}", rows.iter().map(|r| r.generation).max().unwrap_or(0) + 1);
    let _ = writeln!(s, "pareto_points = {}", front.len());
    let best = |key: fn(&EvalRow) -> Option<f64>| {
        rows.iter()
            .filter(|r| r.point().is_some())
            .filter_map(|r| key(r).map(|k| (k, r.index)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    };
    if let Some((e, i)) = best(|r| r.energy) {
        let _ = writeln!(s, "best_energy = {e}\nbest_energy_index = {i}");
    }
    if let Some((l, i)) = best(|r| r.latency) {
        let _ = writeln!(s, "best_latency = {l}\nbest_latency_index = {i}");
    }
    out.push(("summary.txt".to_string(), s));
    Ok(out)
}

/// Recomputes the report tables of a run directory from its
/// `evaluations.csv` and writes them into the summary directory.
pub fn report(run_dir: &Path) -> Result<PathBuf, AnalyticsError> {
    let name = run_dir
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(summary_dir_name)
        .ok_or_else(|| AnalyticsError::NotARun(run_dir.display().to_string()))?;
    let (genes, rows) = read_rows(&run_dir.join("evaluations.csv"))?;
    let dir = run_dir.join(name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (file, text) in report_tables(&rows, &genes)? {
        let path = dir.join(file);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(dir)
}

/// An open run directory. Rows are appended to `evaluations.csv` and flushed
/// as they arrive, so a crashed run keeps everything recorded so far.
pub struct ExperimentRecord {
    pub run_dir: PathBuf,
    pub summary_dir: PathBuf,
    pub algorithm: Algorithm,
    pub run_id: usize,
    pub stamp: String,
    pub app: String,
    pub gene_names: Vec<String>,
    pub rows: Vec<EvalRow>,
    started: Instant,
    index: csv::Writer<File>,
}

impl ExperimentRecord {
    /// Opens `<out_root>/experiments/<ALGO>_<n>_<stamp>/`, where `n` is one
    /// more than the runs of this algorithm already indexed, and echoes the
    /// parameter files into the summary directory.
    pub fn create(
        out_root: &Path,
        algorithm: Algorithm,
        app: &str,
        gene_names: Vec<String>,
        algo_prm: &str,
        sim_prm: &str,
    ) -> Result<Self, AnalyticsError> {
        let experiments = out_root.join("experiments");
        fs::create_dir_all(&experiments).map_err(io_err(&experiments))?;
        let master = experiments.join("index.csv");
        let previous = if master.exists() {
            let mut r = csv::Reader::from_path(&master).map_err(csv_err(&master))?;
            let mut n = 0;
            for rec in r.records() {
                let rec = rec.map_err(csv_err(&master))?;
                n += usize::from(rec.get(1) == Some(algorithm.tag()));
            }
            n
        } else {
            0
        };
        let stamp = chrono::Local::now().format("%Y_%m_%d_%H-%M-%S").to_string();
        let mut run_id = previous + 1;
        let run_dir = loop {
            let dir = experiments.join(format!("{}_{run_id}_{stamp}", algorithm.tag()));
            if !dir.exists() {
                break dir;
            }
            run_id += 1;
        };
        let summary_dir = run_dir.join(format!("{}_sum_{stamp}", algorithm.tag()));
        fs::create_dir_all(&summary_dir).map_err(io_err(&summary_dir))?;
        for (file, text) in [("algo.prm", algo_prm), ("sim.prm", sim_prm)] {
            let path = summary_dir.join(file);
            fs::write(&path, text).map_err(io_err(&path))?;
        }

        let new_master = !master.exists();
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&master)
            .map_err(io_err(&master))?;
        let mut w = csv::Writer::from_writer(f);
        if new_master {
            w.write_record(["run_id", "algorithm", "app", "timestamp", "run_dir"])
                .map_err(csv_err(&master))?;
        }
        let dir_name = run_dir.file_name().expect("run dir has a name").to_string_lossy().into_owned();
        w.write_record([run_id.to_string().as_str(), algorithm.tag(), app, stamp.as_str(), dir_name.as_str()])
            .map_err(csv_err(&master))?;
        w.flush().map_err(io_err(&master))?;

        let path = run_dir.join("evaluations.csv");
        let mut index = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        index.write_record(evaluation_header(&gene_names)).map_err(csv_err(&path))?;
        index.flush().map_err(io_err(&path))?;
        Ok(ExperimentRecord {
            run_dir,
            summary_dir,
            algorithm,
            run_id,
            stamp,
            app: app.to_string(),
            gene_names,
            rows: Vec::new(),
            started: Instant::now(),
            index,
        })
    }

    /// Appends one evaluation row; elapsed times never decrease.
    pub fn record_evaluation(
        &mut self,
        generation: usize,
        genome: &Genome,
        eval: &Evaluation,
        snapshot: Option<String>,
    ) -> Result<&EvalRow, AnalyticsError> {
        let prev = self.rows.last().map_or(0.0, |r| r.elapsed_s);
        let elapsed = self.started.elapsed().as_secs_f64().max(prev);
        let mut row = EvalRow::from_evaluation(self.rows.len(), generation, elapsed, genome, eval);
        row.snapshot = snapshot;
        let path = self.run_dir.join("evaluations.csv");
        self.index.write_record(row.fields()).map_err(csv_err(&path))?;
        self.index.flush().map_err(io_err(&path))?;
        self.rows.push(row);
        Ok(self.rows.last().expect("just pushed"))
    }

    pub fn next_index(&self) -> usize {
        self.rows.len()
    }

    pub fn report(&self) -> Result<PathBuf, AnalyticsError> {
        report(&self.run_dir)
    }
}

/// Snapshot interval giving about fifty rows per run.
pub fn snapshot_interval(report: &CostReport) -> f64 {
    ((report.t_end - report.t_start) / 50.0).max(1.0)
}

/// Observer that records every evaluation of a design search and writes
/// simulator files for the evaluations selected by `mode`.
pub struct Recorder<'a> {
    pub record: ExperimentRecord,
    problem: &'a DesignProblem,
    mode: RecordMode,
    best_energy: f64,
    best_latency: f64,
    failure: Option<AnalyticsError>,
}

impl<'a> Recorder<'a> {
    pub fn new(record: ExperimentRecord, problem: &'a DesignProblem, mode: RecordMode) -> Self {
        Recorder {
            record,
            problem,
            mode,
            best_energy: f64::INFINITY,
            best_latency: f64::INFINITY,
            failure: None,
        }
    }

    /// The first I/O failure, if any; recording stops after it.
    pub fn failure(&self) -> Option<&AnalyticsError> {
        self.failure.as_ref()
    }

    fn write_snapshot(&self, genome: &Genome, dir: &str) -> Result<(), AnalyticsError> {
        let design = self.problem.decode(genome);
        let run = self.problem.run(&design, true).map_err(|r| AnalyticsError::Io {
            path: dir.to_string(),
            msg: r.reason,
        })?;
        let mut settings = vec![
            ("genome".to_string(), genome.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")),
            ("scheme".to_string(), design.scheme.to_string()),
            ("fps".to_string(), design.fps.to_string()),
            ("mesh".to_string(), format!("{}x{}", run.placement.rows, run.placement.cols)),
        ];
        settings.extend(
            toml::Table::try_from(&design.hw)
                .map(|t| t.into_iter().map(|(k, v)| (k, v.to_string())).collect::<Vec<_>>())
                .unwrap_or_default(),
        );
        let path = self.record.run_dir.join(dir);
        write_run_files(&path, &run.report, snapshot_interval(&run.report), &settings).map_err(|e| AnalyticsError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    fn try_record(&mut self, generation: usize, genome: &Genome, eval: &Evaluation) -> Result<(), AnalyticsError> {
        let index = self.record.next_index();
        let (energy, latency) = eval.metrics.map_or((f64::INFINITY, f64::INFINITY), |m| (m.energy, m.latency));
        let improves = eval.feasible() && (energy < self.best_energy || latency < self.best_latency);
        if eval.feasible() {
            self.best_energy = self.best_energy.min(energy);
            self.best_latency = self.best_latency.min(latency);
        }
        let flagged = eval.metrics.is_some()
            && match self.mode {
                RecordMode::All => true,
                RecordMode::BestsOnly => improves,
                RecordMode::Sampled(n) => index.is_multiple_of(n),
            };
        let snapshot = if flagged {
            let dir = format!("evaluations/eval_{index:05}");
            self.write_snapshot(genome, &dir)?;
            Some(dir)
        } else {
            None
        };
        self.record.record_evaluation(generation, genome, eval, snapshot)?;
        Ok(())
    }

    /// Writes the simulator files of the best-energy and best-latency
    /// designs into `Energy/` and `Latency/`, then the report tables.
    pub fn finish(self) -> Result<(ExperimentRecord, PathBuf), AnalyticsError> {
        if let Some(e) = self.failure {
            return Err(e);
        }
        let best = |key: fn(&EvalRow) -> Option<f64>| {
            self.record
                .rows
                .iter()
                .filter(|r| r.point().is_some())
                .filter_map(|r| key(r).map(|k| (k, r)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.index.cmp(&b.1.index)))
                .map(|(_, r)| (r.index, r.genome.clone()))
        };
        for (dir, key) in [("Energy", (|r: &EvalRow| r.energy) as fn(&EvalRow) -> Option<f64>), ("Latency", |r: &EvalRow| r.latency)] {
            if let Some((i, g)) = best(key) {
                self.write_snapshot(&g, &format!("{dir}/eval_{i:05}"))?;
            }
        }
        let summary = self.record.report()?;
        Ok((self.record, summary))
    }
}

impl Observer for Recorder<'_> {
    fn on_evaluation(&mut self, generation: usize, genome: &Genome, eval: &Evaluation) {
        if self.failure.is_some() {
            return;
        }
        if let Err(e) = self.try_record(generation, genome, eval) {
            self.failure = Some(e);
        }
    }

    fn on_generation(&mut self, _log: &GenerationLog) {}

    fn should_stop(&self) -> bool {
        self.failure.is_some()
    }
}
