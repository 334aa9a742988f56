//! Postmark with one process against ten processes sharing a session, at a
//! tenth of the desk file and transaction counts. Prints how much elapsed
//! time the ensemble saves (negative means it costs time).

use fairtcp_sim::config::ExperimentConfig;
use fairtcp_sim::testbed::{run, Mode};
use fairtcp_sim::workload::WorkloadKind;

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.scale = 0.1;
    for kind in [WorkloadKind::Postmark, WorkloadKind::PostmarkMulti] {
        cfg.workload = kind;
        for delay in [0.0, 2.0, 10.0] {
            let elapsed = |mode| {
                let r = run(cfg.testbed(mode, delay, 1)).expect("run");
                let txns: u64 = r.reports.iter().map(|w| w.ops).sum();
                (r.elapsed.as_secs_f64(), txns, r.commands_completed)
            };
            let (std_s, txns, cmds) = elapsed(Mode::Standard);
            let (fair_s, _, _) = elapsed(Mode::Fair);
            println!(
                "{:<15} delay {delay:>4}ms: {txns} transactions, {cmds} commands; standard {std_s:.1}s fair {fair_s:.1}s ({:+.0}%)",
                kind.as_str(),
                100.0 * (std_s - fair_s) / std_s
            );
        }
    }
}
