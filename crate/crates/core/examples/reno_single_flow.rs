//! One Reno+SACK connection writing 64MB, first over a clean path and then
//! with 2.7% random loss. Prints where slow start ends and how losses were
//! repaired.

use fairtcp_sim::config::ExperimentConfig;
use fairtcp_sim::tcp::MSS;
use fairtcp_sim::testbed::{run, Mode};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.connections = 1;

    for loss in [0.0, 0.027] {
        cfg.loss = loss;
        let mut tb = cfg.testbed(Mode::Standard, 4.0, 1);
        tb.record_cwnd_events = true;
        let r = run(tb).expect("run");
        let events = r.cwnd_events.as_deref().unwrap_or_default();
        let ss_end = events.iter().position(|e| e.cwnd >= e.ssthresh);
        let stats = &r.tcp_stats[0][0];

        println!("loss {loss}:");
        println!("  elapsed {:.2}s, {:.2} MB/s", r.elapsed.as_secs_f64(), r.throughput().unwrap_or(0.0) / 1e6);
        println!("  {} window updates; slow start ended at update {ss_end:?}", events.len());
        if let Some(last) = events.last() {
            println!("  final cwnd {} segments, ssthresh {} segments", last.cwnd / MSS as u64, last.ssthresh / MSS as u64);
        }
        println!(
            "  fast recoveries {}, timeouts {}, retransmitted segments {} (fast {}, timeout {})",
            stats.fast_recoveries, stats.timeouts, stats.retransmits(), stats.retx_fast, stats.retx_timeout
        );
        let s = r.cwnd.aggregate.scaled(1.0 / MSS as f64).summary().expect("samples");
        println!("  cwnd sampled every 10ms: mean {:.1} SD {:.1} segments\n", s.mean, s.sd);
    }
}
