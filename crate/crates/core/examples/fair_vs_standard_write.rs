//! Sequential 64MB writes over four connections, standard TCP against the
//! shared ensemble, across the desk delays. Pass a seed count to change the
//! default of 3.

use fairtcp_sim::config::ExperimentConfig;
use fairtcp_sim::runner::{cells, run_cell};
use fairtcp_sim::testbed::Mode;

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut cfg = ExperimentConfig::default();
    cfg.delays_ms = vec![0.0, 2.0, 4.0, 10.0];
    cfg.seeds = (1..=n).collect();

    println!("delay seed mode      MB/s  aggr(seg) %SD  retx  write tat ms (mean/SD)");
    for cell in cells(&cfg) {
        let (s, _) = run_cell(&cfg, cell).expect("run");
        let agg = s.aggr_cwnd.expect("samples");
        let tat = s.write_tat.expect("writes");
        println!(
            "{:>5} {:>4} {:<8} {:>6.2} {:>9.1} {:>4.0} {:>5}  {:>7.1}/{:.1}",
            cell.delay_ms,
            cell.seed,
            if cell.mode == Mode::Fair { "fair" } else { "standard" },
            s.throughput.unwrap_or(0.0) / 1e6,
            agg.mean,
            agg.pct_sd.unwrap_or(0.0),
            s.retx_fast + s.retx_timeout,
            tat.mean,
            tat.sd
        );
    }
}
