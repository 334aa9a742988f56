//! Two connections competing at 4ms delay. Under standard TCP their windows
//! move against each other, so the difference series varies more than
//! either window; the ensemble keeps the two shares within one segment.

use fairtcp_sim::config::ExperimentConfig;
use fairtcp_sim::metrics::window_difference;
use fairtcp_sim::tcp::MSS;
use fairtcp_sim::testbed::{run, Mode};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.connections = 2;
    for mode in [Mode::Standard, Mode::Fair] {
        for seed in 1..=3 {
            let r = run(cfg.testbed(mode, 4.0, seed)).expect("run");
            let a = r.cwnd.per_conn[0].scaled(1.0 / MSS as f64);
            let b = r.cwnd.per_conn[1].scaled(1.0 / MSS as f64);
            let (sa, sb) = (a.summary().unwrap(), b.summary().unwrap());
            let (_, d) = window_difference(&a, &b).unwrap();
            println!(
                "{:<8} seed {seed}: conn0 {:.2}/{:.2}  conn1 {:.2}/{:.2}  difference {:.2}/{:.2}  (mean/SD, segments)",
                mode.as_str(),
                sa.mean,
                sa.sd,
                sb.mean,
                sb.sd,
                d.mean,
                d.sd
            );
        }
    }
}
