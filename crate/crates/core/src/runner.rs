//! Sweeps (delay, seed, mode) cells, writes per-cell traces and a combined
//! `comparison.csv`, and renders side-by-side tables from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::iscsi::Direction;
use crate::metrics::{summarize, SummaryStats};
use crate::tcp::MSS;
use crate::testbed::{self, Mode, RunResult};
use crate::workload::WorkloadKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mode: Mode,
    pub delay_ms: f64,
    pub seed: u64,
}

impl Cell {
    /// Directory name under the output root.
    pub fn dir_name(&self, workload: WorkloadKind) -> String {
        format!("{}_{}_d{}_s{}", workload.as_str(), self.mode.as_str(), self.delay_ms, self.seed)
    }
}

/// Cells in delay, seed, mode order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &delay_ms in &cfg.delays_ms {
        for &seed in &cfg.seeds {
            for &mode in &cfg.modes {
                out.push(Cell { mode, delay_ms, seed });
            }
        }
    }
    out
}

/// Per-cell numbers that go into `comparison.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub workload: WorkloadKind,
    pub cell: Cell,
    pub connections: usize,
    pub elapsed_s: f64,
    pub throughput: Option<f64>,
    pub retx_fast: u64,
    pub retx_timeout: u64,
    pub write_tat: Option<SummaryStats>,
    pub read_tat: Option<SummaryStats>,
    /// Aggregate window in segments.
    pub aggr_cwnd: Option<SummaryStats>,
    pub commands: u64,
    pub packets_offered: u64,
    pub random_losses: u64,
    pub conserved: bool,
}

impl CellSummary {
    pub fn from_result(cfg: &ExperimentConfig, cell: Cell, r: &RunResult) -> Self {
        let retx = r.total_retransmits();
        CellSummary {
            workload: cfg.workload,
            cell,
            connections: cfg.connections,
            elapsed_s: r.elapsed.as_secs_f64(),
            throughput: r.throughput(),
            retx_fast: retx.fast,
            retx_timeout: retx.timeout,
            write_tat: summarize(r.turnaround_ms(Direction::Write)).ok(),
            read_tat: summarize(r.turnaround_ms(Direction::Read)).ok(),
            aggr_cwnd: r.cwnd.aggregate.scaled(1.0 / MSS as f64).summary().ok(),
            commands: r.commands_completed,
            packets_offered: r.router.offered,
            random_losses: r.router.random_loss,
            conserved: r.conserved(),
        }
    }

    pub fn loss_rate(&self) -> Option<f64> {
        (self.packets_offered > 0).then(|| self.random_losses as f64 / self.packets_offered as f64)
    }

    /// `(metric, value)` pairs for `summary.csv`.
    fn metrics(&self) -> Vec<(String, String)> {
        let mut m: Vec<(String, String)> = [
            ("elapsed_s", self.elapsed_s.to_string()),
            ("throughput_bytes_per_s", opt(self.throughput)),
            ("retx_fast", self.retx_fast.to_string()),
            ("retx_timeout", self.retx_timeout.to_string()),
            ("retx_total", (self.retx_fast + self.retx_timeout).to_string()),
            ("commands", self.commands.to_string()),
            ("packets_offered", self.packets_offered.to_string()),
            ("random_losses", self.random_losses.to_string()),
            ("loss_rate", opt(self.loss_rate())),
            ("conserved", self.conserved.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (prefix, s) in [("write_tat_ms", self.write_tat), ("read_tat_ms", self.read_tat), ("aggr_cwnd_seg", self.aggr_cwnd)] {
            if let Some(s) = s {
                m.push((format!("{prefix}_mean"), s.mean.to_string()));
                m.push((format!("{prefix}_sd"), s.sd.to_string()));
                m.push((format!("{prefix}_pct_sd"), opt(s.pct_sd)));
                m.push((format!("{prefix}_n"), s.n.to_string()));
            }
        }
        m
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |e| RunError::io(path.display().to_string(), e)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::io(path.display().to_string(), e.into())
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `cwnd_trace.csv`, `turnaround.csv`, `summary.csv` and, in fair
/// mode, `ecb_trace.csv` into `dir`.
pub fn write_cell(dir: &Path, summary: &CellSummary, r: &RunResult) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut rows = Vec::new();
    for (i, &(at, agg)) in r.cwnd.aggregate.samples().iter().enumerate() {
        for (c, s) in r.cwnd.per_conn.iter().enumerate() {
            rows.push(vec![at.as_nanos().to_string(), c.to_string(), (s.samples()[i].1 as u64).to_string()]);
        }
        rows.push(vec![at.as_nanos().to_string(), "AGG".into(), (agg as u64).to_string()]);
    }
    write_csv(&dir.join("cwnd_trace.csv"), &["time_ns", "conn_id", "cwnd_bytes"], rows)?;

    let rows = r.turnaround.iter().map(|t| {
        vec![
            t.command_id.to_string(),
            t.dir.as_str().to_string(),
            t.issue.as_nanos().to_string(),
            t.complete.as_nanos().to_string(),
            t.conn.to_string(),
        ]
    });
    write_csv(
        &dir.join("turnaround.csv"),
        &["command_id", "direction", "issue_ns", "complete_ns", "conn_id"],
        rows,
    )?;

    if summary.cell.mode == Mode::Fair {
        let rows = r.ecb_trace.iter().map(|e| {
            vec![
                e.at.as_nanos().to_string(),
                e.cwnd.to_string(),
                e.ssthresh.to_string(),
                e.ref_cnt.to_string(),
                e.srtt.map(|s| s.as_nanos().to_string()).unwrap_or_default(),
            ]
        });
        write_csv(
            &dir.join("ecb_trace.csv"),
            &["time_ns", "ecb_cwnd_bytes", "ecb_ssthresh_bytes", "ref_cnt", "ecb_srtt_ns"],
            rows,
        )?;
    }

    let cell = summary.cell;
    let name = cell.dir_name(summary.workload);
    let rows = summary.metrics().into_iter().map(|(metric, value)| {
        vec![
            name.clone(),
            cell.mode.as_str().to_string(),
            cell.delay_ms.to_string(),
            cell.seed.to_string(),
            metric,
            value,
        ]
    });
    write_csv(&dir.join("summary.csv"), &["cell", "mode", "delay_ms", "seed", "metric", "value"], rows)
}

pub const COMPARISON_HEADER: &[&str] = &[
    "workload",
    "mode",
    "delay_ms",
    "seed",
    "connections",
    "elapsed_s",
    "throughput_bytes_per_s",
    "retx_fast",
    "retx_timeout",
    "retx_total",
    "write_tat_mean_ms",
    "write_tat_sd_ms",
    "write_tat_pct_sd",
    "read_tat_mean_ms",
    "read_tat_sd_ms",
    "read_tat_pct_sd",
    "aggr_cwnd_mean_seg",
    "aggr_cwnd_sd_seg",
    "aggr_cwnd_pct_sd",
    "commands",
    "loss_rate",
    "conserved",
];

fn comparison_row(s: &CellSummary) -> Vec<String> {
    let stats = |st: Option<SummaryStats>| match st {
        Some(st) => [st.mean.to_string(), st.sd.to_string(), opt(st.pct_sd)],
        None => Default::default(),
    };
    let mut row = vec![
        s.workload.as_str().to_string(),
        s.cell.mode.as_str().to_string(),
        s.cell.delay_ms.to_string(),
        s.cell.seed.to_string(),
        s.connections.to_string(),
        s.elapsed_s.to_string(),
        opt(s.throughput),
        s.retx_fast.to_string(),
        s.retx_timeout.to_string(),
        (s.retx_fast + s.retx_timeout).to_string(),
    ];
    row.extend(stats(s.write_tat));
    row.extend(stats(s.read_tat));
    row.extend(stats(s.aggr_cwnd));
    row.push(s.commands.to_string());
    row.push(opt(s.loss_rate()));
    row.push(s.conserved.to_string());
    row
}

pub fn write_comparison(path: &Path, summaries: &[CellSummary]) -> Result<(), RunError> {
    write_csv(path, COMPARISON_HEADER, summaries.iter().map(comparison_row))
}

/// Runs one cell without touching the filesystem.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<(CellSummary, RunResult), RunError> {
    let r = testbed::run(cfg.testbed(cell.mode, cell.delay_ms, cell.seed))?;
    Ok((CellSummary::from_result(cfg, cell, &r), r))
}

/// Runs every cell, writes all outputs under `cfg.out_dir`, and returns the
/// per-cell summaries in cell order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CellSummary>, RunError> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    fs::write(out.join("config.echo"), cfg.to_text()).map_err(io_err(&out.join("config.echo")))?;

    let work = |cell: Cell| -> Result<CellSummary, RunError> {
        let (summary, r) = run_cell(cfg, cell)?;
        write_cell(&out.join(cell.dir_name(cfg.workload)), &summary, &r)?;
        Ok(summary)
    };
    let cells = cells(cfg);
    let results: Vec<Result<CellSummary, RunError>> = if cfg.threads == 0 {
        cells.par_iter().map(|&c| work(c)).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| RunError::config(format!("threads: {e}")))?
            .install(|| cells.par_iter().map(|&c| work(c)).collect())
    };
    let summaries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_comparison(&out.join("comparison.csv"), &summaries)?;
    Ok(summaries)
}

/// Which table to render from `comparison.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    AggrCwnd,
    WriteTat,
    ReadTat,
}

impl Table {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aggr_cwnd" => Some(Table::AggrCwnd),
            "write_tat" => Some(Table::WriteTat),
            "read_tat" => Some(Table::ReadTat),
            _ => None,
        }
    }

    fn title(self) -> &'static str {
        match self {
            Table::AggrCwnd => "Aggregate congestion window (segments)",
            Table::WriteTat => "SCSI command turnaround, writes (ms)",
            Table::ReadTat => "SCSI command turnaround, reads (ms)",
        }
    }

    fn columns(self) -> [&'static str; 3] {
        match self {
            Table::AggrCwnd => ["aggr_cwnd_mean_seg", "aggr_cwnd_sd_seg", "aggr_cwnd_pct_sd"],
            Table::WriteTat => ["write_tat_mean_ms", "write_tat_sd_ms", "write_tat_pct_sd"],
            Table::ReadTat => ["read_tat_mean_ms", "read_tat_sd_ms", "read_tat_pct_sd"],
        }
    }
}

/// Reads `comparison.csv` into header-keyed rows.
pub fn read_comparison(path: &Path) -> Result<Vec<BTreeMap<String, String>>, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let bad = |e: csv::Error| RunError::config(format!("{}: {e}", path.display()));
    let header: Vec<String> = rdr.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        rows.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok(rows)
}

/// Running (sum, count) for the mean, SD and %SD columns.
type ColumnSums = [(f64, u32); 3];

/// Delay rows against TCP and Fair-TCP column groups, each value averaged
/// over seeds. Missing values print as `-`.
pub fn emit_table(rows: &[BTreeMap<String, String>], table: Table) -> Result<String, RunError> {
    let cols = table.columns();
    // delay -> mode -> per-column sums and counts
    let mut acc: Vec<(f64, [ColumnSums; 2])> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let field = |k: &str| {
            row.get(k)
                .ok_or_else(|| RunError::config(format!("comparison row {}: missing column {k}", i + 2)))
        };
        let delay: f64 = field("delay_ms")?
            .parse()
            .map_err(|_| RunError::config(format!("comparison row {}: bad delay_ms", i + 2)))?;
        let mode = Mode::parse(field("mode")?)
            .ok_or_else(|| RunError::config(format!("comparison row {}: bad mode", i + 2)))?;
        let m = match mode {
            Mode::Standard => 0,
            Mode::Fair => 1,
        };
        let pos = match acc.iter().position(|(d, _)| *d == delay) {
            Some(p) => p,
            None => {
                acc.push((delay, Default::default()));
                acc.len() - 1
            }
        };
        for (c, col) in cols.iter().enumerate() {
            if let Ok(v) = field(col)?.parse::<f64>() {
                let slot = &mut acc[pos].1[m][c];
                slot.0 += v;
                slot.1 += 1;
            }
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut out = String::new();
    let _ = writeln!(out, "{}", table.title());
    let _ = writeln!(out, "{:>6} | {:^26} | {:^26}", "Delay", "TCP", "Fair-TCP");
    let _ = writeln!(
        out,
        "{:>6} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
        "(ms)", "Mean", "SD", "%SD", "Mean", "SD", "%SD"
    );
    for (delay, modes) in &acc {
        let _ = write!(out, "{:>6}", delay);
        for mode in modes {
            out.push_str(" |");
            for (c, &(sum, n)) in mode.iter().enumerate() {
                if n == 0 {
                    let _ = write!(out, " {:>8}", "-");
                } else if c == 2 {
                    let _ = write!(out, " {:>8.0}", sum / n as f64);
                } else {
                    let _ = write!(out, " {:>8.1}", sum / n as f64);
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Output root for a run, used by the bins to report where files went.
pub fn comparison_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("comparison.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.file_size_mb = 1.0;
        c.delays_ms = vec![2.0];
        c.seeds = vec![1];
        c
    }

    #[test]
    fn cell_count_is_the_product() {
        let mut c = ExperimentConfig::default();
        c.seeds = vec![1, 2, 3];
        assert_eq!(cells(&c).len(), 36);
        c.delays_ms = vec![4.0];
        c.seeds = vec![1];
        assert_eq!(cells(&c).len(), 2);
    }

    #[test]
    fn experiment_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small();
        c.out_dir = dir.path().to_path_buf();
        let s = run_experiment(&c).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|s| s.conserved));
        for cell in cells(&c) {
            let d = dir.path().join(cell.dir_name(c.workload));
            for f in ["cwnd_trace.csv", "turnaround.csv", "summary.csv"] {
                assert!(d.join(f).exists(), "{f}");
            }
            assert_eq!(d.join("ecb_trace.csv").exists(), cell.mode == Mode::Fair);
        }
        let echo = fs::read_to_string(dir.path().join("config.echo")).unwrap();
        assert_eq!(ExperimentConfig::parse(&echo).unwrap(), c);
        let rows = read_comparison(&dir.path().join("comparison.csv")).unwrap();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn cwnd_trace_aggregate_is_the_sum() {
        let (_, r) = run_cell(&small(), Cell { mode: Mode::Standard, delay_ms: 2.0, seed: 1 }).unwrap();
        for (i, &(_, agg)) in r.cwnd.aggregate.samples().iter().enumerate() {
            let sum: f64 = r.cwnd.per_conn.iter().map(|s| s.samples()[i].1).sum();
            assert_eq!(sum, agg);
        }
    }

    #[test]
    fn cell_order_does_not_matter() {
        let mut c = small();
        c.seeds = vec![1, 2];
        let forward: Vec<_> = cells(&c).into_iter().map(|cell| run_cell(&c, cell).unwrap().0).collect();
        let mut backward: Vec<_> = cells(&c).into_iter().rev().map(|cell| run_cell(&c, cell).unwrap().0).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn unwritable_out_dir_is_an_io_error() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let mut c = small();
        c.out_dir = f.path().join("sub");
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn table_layout() {
        let empty = emit_table(&[], Table::AggrCwnd).unwrap();
        assert_eq!(empty.lines().count(), 3);

        let row = |mode: &str, mean: &str| -> BTreeMap<String, String> {
            [("mode", mode), ("delay_ms", "2"), ("aggr_cwnd_mean_seg", mean), ("aggr_cwnd_sd_seg", "4.3"), ("aggr_cwnd_pct_sd", "33")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        };
        let t = emit_table(&[row("standard", "13.2")], Table::AggrCwnd).unwrap();
        let last = t.lines().last().unwrap();
        assert!(last.contains("13.2") && last.contains("33"), "{t}");
        assert_eq!(last.matches(" -").count(), 3, "{t}");

        let t = emit_table(&[row("standard", "12"), row("standard", "14"), row("fair", "16")], Table::AggrCwnd).unwrap();
        let last = t.lines().last().unwrap();
        assert!(last.contains("13.0") && last.contains("16.0"), "{t}");
    }
}
