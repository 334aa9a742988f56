//! The read-modify-write and random-seek workloads at 2ms delay.

use fairtcp_sim::config::ExperimentConfig;
use fairtcp_sim::iscsi::Direction;
use fairtcp_sim::metrics::summarize;
use fairtcp_sim::testbed::{run, Mode};
use fairtcp_sim::workload::WorkloadKind;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.file_size_mb = 16.0;
    cfg.seeks = 2000;
    for kind in [WorkloadKind::Rewrite, WorkloadKind::Seek] {
        cfg.workload = kind;
        for mode in [Mode::Standard, Mode::Fair] {
            let r = run(cfg.testbed(mode, 2.0, 1)).expect("run");
            let ops: u64 = r.reports.iter().map(|w| w.ops).sum();
            let reads = summarize(r.turnaround_ms(Direction::Read)).ok();
            let writes = summarize(r.turnaround_ms(Direction::Write)).ok();
            println!(
                "{:<8} {:<8} {:.2}s  {:.2} MB/s  ops {ops}  read tat {}  write tat {}",
                kind.as_str(),
                mode.as_str(),
                r.elapsed.as_secs_f64(),
                r.throughput().unwrap_or(0.0) / 1e6,
                reads.map_or("-".into(), |s| format!("{:.1}ms", s.mean)),
                writes.map_or("-".into(), |s| format!("{:.1}ms", s.mean)),
            );
        }
    }
}
