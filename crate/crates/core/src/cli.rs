//! Entry points behind the `simrun` and `simtable` binaries.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Arg, ArgAction, Command};

use crate::config::{ExperimentConfig, KEYS};
use crate::error::RunError;
use crate::runner::{self, Table};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn simrun_command() -> Command {
    let mut cmd = Command::new("simrun")
        .about("Run a sweep of simulation cells and write CSV results")
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("Config file; any key in it can also be given as --key value"),
        );
    for (section, key) in KEYS {
        let mut arg = Arg::new(*key)
            .long(flag(key))
            .value_name("VALUE")
            .action(ArgAction::Set)
            .help(format!("Override [{section}] {key}"));
        match *key {
            "mode" => arg = arg.alias("modes"),
            "seeds" => arg = arg.alias("seed"),
            _ => {}
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn load(args: &clap::ArgMatches) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match args.get_one::<String>("config") {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| RunError::io(path.clone(), e))?;
            ExperimentConfig::parse(&text).map_err(|e| match e {
                RunError::Config { line, msg } => RunError::Config {
                    line,
                    msg: format!("{path}: {msg}"),
                },
                other => other,
            })?
        }
        None => ExperimentConfig::default(),
    };
    for (_, key) in KEYS {
        if let Some(v) = args.get_one::<String>(key) {
            cfg.apply_override(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `simrun` and returns the process exit status.
pub fn simrun<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match simrun_command().try_get_matches_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = load(&args).and_then(|cfg| {
        let summaries = runner::run_experiment(&cfg)?;
        println!("{} cells written to {}", summaries.len(), cfg.out_dir.display());
        let rows = runner::read_comparison(&runner::comparison_path(&cfg))?;
        for table in [Table::AggrCwnd, Table::WriteTat] {
            println!("\n{}", runner::emit_table(&rows, table)?);
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("simrun: {e}");
            e.exit_code()
        }
    }
}

/// Runs `simtable` and returns the process exit status.
pub fn simtable<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = Command::new("simtable")
        .about("Render a side-by-side table from comparison.csv")
        .arg(
            Arg::new("in")
                .long("in")
                .value_name("PATH")
                .required(true)
                .value_parser(clap::value_parser!(PathBuf)),
        )
        .arg(
            Arg::new("table")
                .long("table")
                .required(true)
                .value_parser(["aggr_cwnd", "write_tat", "read_tat"]),
        );
    let args = match cmd.try_get_matches_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let path = args.get_one::<PathBuf>("in").expect("required");
    let table = Table::parse(args.get_one::<String>("table").expect("required")).expect("checked by clap");
    match runner::read_comparison(path).and_then(|rows| runner::emit_table(&rows, table)) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("simtable: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_a_flag() {
        let m = simrun_command()
            .try_get_matches_from(["simrun", "--delays-ms", "4", "--modes", "fair", "--seed", "3", "--postmark-files", "10"])
            .unwrap();
        let cfg = load(&m).unwrap();
        assert_eq!(cfg.delays_ms, vec![4.0]);
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.postmark_files, 10);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(simrun(["simrun", "--no-such-flag", "1"]), 2);
        assert_eq!(simrun(["simrun", "--loss", "2"]), 2);
        assert_eq!(simrun(["simrun", "--config", "/nonexistent/x.conf"]), 3);
        assert_eq!(simtable(["simtable", "--in", "/nonexistent.csv", "--table", "aggr_cwnd"]), 3);
        assert_eq!(simtable(["simtable", "--in", "x.csv", "--table", "bogus"]), 2);
    }

    #[test]
    fn bad_config_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.conf");
        fs::write(&p, "[experiment]\nconnections = many\n").unwrap();
        let m = simrun_command().try_get_matches_from(["simrun", "--config", p.to_str().unwrap()]).unwrap();
        match load(&m).unwrap_err() {
            RunError::Config { line, .. } => assert_eq!(line, Some(2)),
            e => panic!("{e}"),
        }
    }
}
