//! Full desk sweep written to disk, then rendered as the three comparison
//! tables. Takes an output directory (default `out/tables`) and an optional
//! seed count.

use std::path::PathBuf;

use fairtcp_sim::config::ExperimentConfig;
use fairtcp_sim::runner::{emit_table, read_comparison, run_experiment, Table};
use fairtcp_sim::workload::WorkloadKind;

fn main() {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "out/tables".into()));
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);

    for (kind, tables) in [
        (WorkloadKind::SeqWrite, &[Table::AggrCwnd, Table::WriteTat][..]),
        (WorkloadKind::SeqRead, &[Table::ReadTat][..]),
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.workload = kind;
        cfg.seeds = (1..=seeds).collect();
        cfg.out_dir = root.join(kind.as_str());
        if let Err(e) = run_experiment(&cfg) {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
        let rows = read_comparison(&cfg.out_dir.join("comparison.csv")).expect("just written");
        for &t in tables {
            println!("{}", emit_table(&rows, t).expect("well-formed"));
        }
    }
}
