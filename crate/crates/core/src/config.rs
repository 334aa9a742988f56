//! Experiment configuration: `[section]` headers and `key = value` lines.
//!
//! ```text
//! # comments run to end of line
//! [experiment]
//! mode = standard,fair
//! delays_ms = 0,2,4,10
//! seeds = 1,2,3
//! ```
//!
//! Keys are unique across sections, so every key can also be given on the
//! command line as `--key value` (underscores become dashes).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::ensemble::GrowthMode;
use crate::error::RunError;
use crate::iscsi::DiskConfig;
use crate::netem::PathConfig;
use crate::sim::SimTime;
use crate::tcp::{RtoBounds, TcpConfig, MSS};
use crate::testbed::{Mode, TestbedConfig};
use crate::workload::{PostmarkParams, SeekParams, WorkloadKind, WorkloadParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionLayout {
    Shared,
    PerProcess,
}

impl SessionLayout {
    fn as_str(self) -> &'static str {
        match self {
            SessionLayout::Shared => "shared",
            SessionLayout::PerProcess => "per_process",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub delays_ms: Vec<f64>,
    pub workload: WorkloadKind,
    pub growth_mode: GrowthMode,
    pub connections: usize,
    pub out_dir: PathBuf,
    /// Worker threads for running cells; 0 picks one per core.
    pub threads: usize,

    pub loss: f64,
    pub bandwidth_bps: u64,
    pub delay_is_one_way: bool,
    pub router_queue_pkts: usize,

    pub initial_cwnd_segments: u64,
    pub send_buffer: u64,
    pub rwnd: u64,
    pub min_rto_ms: f64,
    pub max_rto_ms: f64,
    pub initial_rto_ms: f64,

    pub max_outstanding: usize,
    pub session: SessionLayout,

    pub disk_overhead_us: f64,
    pub disk_rate_bps: f64,
    pub seek_penalty_ms: f64,

    /// Multiplies file sizes and Postmark counts.
    pub scale: f64,
    pub file_size_mb: f64,
    pub block_size: u64,
    pub processes: usize,
    pub postmark_files: u64,
    pub postmark_transactions: u64,
    pub postmark_size_min: u64,
    pub postmark_size_max: u64,
    pub seekers: usize,
    pub seeks: u64,
    pub rewrite_fraction: f64,

    pub sample_ms: f64,
    pub deadline_s: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let pm = PostmarkParams::default();
        let sk = SeekParams::default();
        ExperimentConfig {
            modes: vec![Mode::Standard, Mode::Fair],
            seeds: vec![1, 2, 3, 4, 5],
            delays_ms: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            workload: WorkloadKind::SeqWrite,
            growth_mode: GrowthMode::PerMember,
            connections: 4,
            out_dir: PathBuf::from("out"),
            threads: 0,
            loss: 0.027,
            bandwidth_bps: 1_000_000_000,
            delay_is_one_way: true,
            router_queue_pkts: 100,
            initial_cwnd_segments: 2,
            send_buffer: 512 * 1024,
            rwnd: 512 * 1024,
            min_rto_ms: 200.0,
            max_rto_ms: 60_000.0,
            initial_rto_ms: 1000.0,
            max_outstanding: 32,
            session: SessionLayout::Shared,
            disk_overhead_us: 500.0,
            disk_rate_bps: 400e6,
            seek_penalty_ms: 4.0,
            scale: 1.0,
            file_size_mb: 64.0,
            block_size: 4096,
            processes: 10,
            postmark_files: pm.n_files,
            postmark_transactions: pm.n_transactions,
            postmark_size_min: pm.size_min,
            postmark_size_max: pm.size_max,
            seekers: sk.n_seekers,
            seeks: sk.total_seeks,
            rewrite_fraction: sk.rewrite_fraction,
            sample_ms: 10.0,
            deadline_s: 4.0 * 3600.0,
        }
    }
}

/// Every key, in the order it is written out, with its section.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "mode"),
    ("experiment", "seeds"),
    ("experiment", "delays_ms"),
    ("experiment", "workload"),
    ("experiment", "growth_mode"),
    ("experiment", "connections"),
    ("experiment", "out_dir"),
    ("experiment", "threads"),
    ("path", "loss"),
    ("path", "bandwidth_bps"),
    ("path", "delay_is_one_way"),
    ("path", "router_queue_pkts"),
    ("tcp", "initial_cwnd_segments"),
    ("tcp", "send_buffer"),
    ("tcp", "rwnd"),
    ("tcp", "min_rto_ms"),
    ("tcp", "max_rto_ms"),
    ("tcp", "initial_rto_ms"),
    ("iscsi", "max_outstanding"),
    ("iscsi", "session"),
    ("disk", "disk_overhead_us"),
    ("disk", "disk_rate_bps"),
    ("disk", "seek_penalty_ms"),
    ("workload", "scale"),
    ("workload", "file_size_mb"),
    ("workload", "block_size"),
    ("workload", "processes"),
    ("workload", "postmark_files"),
    ("workload", "postmark_transactions"),
    ("workload", "postmark_size_min"),
    ("workload", "postmark_size_max"),
    ("workload", "seekers"),
    ("workload", "seeks"),
    ("workload", "rewrite_fraction"),
    ("metrics", "sample_ms"),
    ("metrics", "deadline_s"),
];

/// Alternative spellings accepted for a few keys.
fn canonical(key: &str) -> &str {
    match key {
        "modes" => "mode",
        "seed" => "seeds",
        "delays" => "delays_ms",
        other => other,
    }
}

pub fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(_, k)| *k == key).map(|(s, _)| *s)
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid number '{v}'"))
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let v = v.trim();
        match canonical(key) {
            "mode" => {
                self.modes = parse_list(v, |s| Mode::parse(s).ok_or_else(|| format!("unknown mode '{s}'")))?
            }
            "seeds" => self.seeds = parse_list(v, parse_num)?,
            "delays_ms" => self.delays_ms = parse_list(v, parse_num)?,
            "workload" => {
                self.workload = WorkloadKind::parse(v).ok_or_else(|| {
                    let names: Vec<_> = WorkloadKind::ALL.iter().map(|k| k.as_str()).collect();
                    format!("unknown workload '{v}' (expected one of {})", names.join(", "))
                })?
            }
            "growth_mode" => {
                self.growth_mode = GrowthMode::parse(v).ok_or_else(|| format!("unknown growth mode '{v}'"))?
            }
            "connections" => self.connections = parse_num(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = parse_num(v)?,
            "loss" => self.loss = parse_num(v)?,
            "bandwidth_bps" => self.bandwidth_bps = parse_num(v)?,
            "delay_is_one_way" => self.delay_is_one_way = parse_bool(v)?,
            "router_queue_pkts" => self.router_queue_pkts = parse_num(v)?,
            "initial_cwnd_segments" => self.initial_cwnd_segments = parse_num(v)?,
            "send_buffer" => self.send_buffer = parse_num(v)?,
            "rwnd" => self.rwnd = parse_num(v)?,
            "min_rto_ms" => self.min_rto_ms = parse_num(v)?,
            "max_rto_ms" => self.max_rto_ms = parse_num(v)?,
            "initial_rto_ms" => self.initial_rto_ms = parse_num(v)?,
            "max_outstanding" => self.max_outstanding = parse_num(v)?,
            "session" => {
                self.session = match v {
                    "shared" => SessionLayout::Shared,
                    "per_process" => SessionLayout::PerProcess,
                    _ => return Err(format!("session must be shared or per_process, got '{v}'")),
                }
            }
            "disk_overhead_us" => self.disk_overhead_us = parse_num(v)?,
            "disk_rate_bps" => self.disk_rate_bps = parse_num(v)?,
            "seek_penalty_ms" => self.seek_penalty_ms = parse_num(v)?,
            "scale" => self.scale = parse_num(v)?,
            "file_size_mb" => self.file_size_mb = parse_num(v)?,
            "block_size" => self.block_size = parse_num(v)?,
            "processes" => self.processes = parse_num(v)?,
            "postmark_files" => self.postmark_files = parse_num(v)?,
            "postmark_transactions" => self.postmark_transactions = parse_num(v)?,
            "postmark_size_min" => self.postmark_size_min = parse_num(v)?,
            "postmark_size_max" => self.postmark_size_max = parse_num(v)?,
            "seekers" => self.seekers = parse_num(v)?,
            "seeks" => self.seeks = parse_num(v)?,
            "rewrite_fraction" => self.rewrite_fraction = parse_num(v)?,
            "sample_ms" => self.sample_ms = parse_num(v)?,
            "deadline_s" => self.deadline_s = parse_num(v)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match canonical(key) {
            "mode" => self.modes.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
            "seeds" => join(&self.seeds),
            "delays_ms" => join(&self.delays_ms),
            "workload" => self.workload.as_str().to_string(),
            "growth_mode" => self.growth_mode.as_str().to_string(),
            "connections" => self.connections.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "threads" => self.threads.to_string(),
            "loss" => self.loss.to_string(),
            "bandwidth_bps" => self.bandwidth_bps.to_string(),
            "delay_is_one_way" => self.delay_is_one_way.to_string(),
            "router_queue_pkts" => self.router_queue_pkts.to_string(),
            "initial_cwnd_segments" => self.initial_cwnd_segments.to_string(),
            "send_buffer" => self.send_buffer.to_string(),
            "rwnd" => self.rwnd.to_string(),
            "min_rto_ms" => self.min_rto_ms.to_string(),
            "max_rto_ms" => self.max_rto_ms.to_string(),
            "initial_rto_ms" => self.initial_rto_ms.to_string(),
            "max_outstanding" => self.max_outstanding.to_string(),
            "session" => self.session.as_str().to_string(),
            "disk_overhead_us" => self.disk_overhead_us.to_string(),
            "disk_rate_bps" => self.disk_rate_bps.to_string(),
            "seek_penalty_ms" => self.seek_penalty_ms.to_string(),
            "scale" => self.scale.to_string(),
            "file_size_mb" => self.file_size_mb.to_string(),
            "block_size" => self.block_size.to_string(),
            "processes" => self.processes.to_string(),
            "postmark_files" => self.postmark_files.to_string(),
            "postmark_transactions" => self.postmark_transactions.to_string(),
            "postmark_size_min" => self.postmark_size_min.to_string(),
            "postmark_size_max" => self.postmark_size_max.to_string(),
            "seekers" => self.seekers.to_string(),
            "seeks" => self.seeks.to_string(),
            "rewrite_fraction" => self.rewrite_fraction.to_string(),
            "sample_ms" => self.sample_ms.to_string(),
            "deadline_s" => self.deadline_s.to_string(),
            _ => return None,
        })
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let mut cfg = ExperimentConfig::default();
        let mut lines = HashMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| RunError::at_line(lineno, "unterminated section header"))?
                    .trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(RunError::at_line(lineno, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RunError::at_line(lineno, format!("expected 'key = value', got '{line}'")))?;
            let key = canonical(key.trim());
            let home = section_of(key).ok_or_else(|| RunError::at_line(lineno, format!("unknown key '{key}'")))?;
            if let Some(s) = &section {
                if s != home {
                    return Err(RunError::at_line(
                        lineno,
                        format!("key '{key}' belongs in [{home}], not [{s}]"),
                    ));
                }
            }
            cfg.set(key, value).map_err(|m| RunError::at_line(lineno, format!("{key}: {m}")))?;
            lines.insert(key, lineno);
        }
        cfg.validate_with(|key| lines.get(key).copied())?;
        Ok(cfg)
    }

    /// Applies a `--key value` override.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        let key = canonical(&key.replace('-', "_")).to_string();
        if section_of(&key).is_none() {
            return Err(RunError::config(format!("unknown option --{}", key.replace('_', "-"))));
        }
        self.set(&key, value)
            .map_err(|m| RunError::config(format!("--{}: {m}", key.replace('_', "-"))))
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.validate_with(|_| None)
    }

    fn validate_with(&self, line_of: impl Fn(&str) -> Option<usize>) -> Result<(), RunError> {
        let fail = |key: &str, msg: String| match line_of(key) {
            Some(l) => Err(RunError::at_line(l, format!("{key}: {msg}"))),
            None => Err(RunError::config(format!("{key}: {msg}"))),
        };
        if self.modes.is_empty() {
            return fail("mode", "at least one mode is required".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds", "at least one seed is required".into());
        }
        if self.delays_ms.is_empty() || self.delays_ms.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return fail("delays_ms", "delays must be a non-empty list of values >= 0".into());
        }
        if self.connections == 0 {
            return fail("connections", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return fail("loss", format!("{} is not a probability", self.loss));
        }
        if self.bandwidth_bps == 0 {
            return fail("bandwidth_bps", "must be positive".into());
        }
        if self.initial_cwnd_segments == 0 {
            return fail("initial_cwnd_segments", "must be at least 1".into());
        }
        if self.send_buffer == 0 || self.rwnd < MSS as u64 {
            return fail("send_buffer", "buffers must hold at least one segment".into());
        }
        if !(self.min_rto_ms > 0.0 && self.min_rto_ms <= self.max_rto_ms) {
            return fail("min_rto_ms", "need 0 < min_rto_ms <= max_rto_ms".into());
        }
        if self.initial_rto_ms <= 0.0 {
            return fail("initial_rto_ms", "must be positive".into());
        }
        if self.max_outstanding == 0 {
            return fail("max_outstanding", "must be at least 1".into());
        }
        if self.disk_rate_bps <= 0.0 || self.disk_overhead_us < 0.0 || self.seek_penalty_ms < 0.0 {
            return fail("disk_rate_bps", "disk parameters must be positive".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return fail("scale", "must be positive".into());
        }
        if self.file_size_mb < 0.0 {
            return fail("file_size_mb", "must be >= 0".into());
        }
        if self.processes == 0 {
            return fail("processes", "must be at least 1".into());
        }
        if let Err(m) = self.postmark().validate() {
            return fail("postmark_size_min", m);
        }
        if self.seekers == 0 {
            return fail("seekers", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.rewrite_fraction) {
            return fail("rewrite_fraction", "must lie in [0, 1]".into());
        }
        if self.sample_ms <= 0.0 {
            return fail("sample_ms", "must be positive".into());
        }
        if self.deadline_s <= 0.0 {
            return fail("deadline_s", "must be positive".into());
        }
        Ok(())
    }

    /// Serialized form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key) in KEYS {
            if *section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    fn postmark(&self) -> PostmarkParams {
        PostmarkParams {
            n_files: ((self.postmark_files as f64 * self.scale).round() as u64).max(1),
            size_min: self.postmark_size_min,
            size_max: self.postmark_size_max,
            n_transactions: (self.postmark_transactions as f64 * self.scale).round() as u64,
        }
    }

    pub fn workload_params(&self) -> WorkloadParams {
        WorkloadParams {
            kind: self.workload,
            file_size: (self.file_size_mb * self.scale * (1u64 << 20) as f64).round() as u64,
            block_size: self.block_size,
            depth: self.max_outstanding,
            postmark: self.postmark(),
            seek: SeekParams {
                n_seekers: self.seekers,
                total_seeks: self.seeks,
                block_bytes: SeekParams::default().block_bytes,
                rewrite_fraction: self.rewrite_fraction,
            },
            n_processes: self.processes,
        }
    }

    pub fn testbed(&self, mode: Mode, delay_ms: f64, seed: u64) -> TestbedConfig {
        let ms = |v: f64| SimTime::from_secs_f64(v / 1e3);
        TestbedConfig {
            mode,
            n_conns: self.connections,
            path: PathConfig {
                bandwidth_bps: self.bandwidth_bps,
                delay_ms,
                delay_is_one_way: self.delay_is_one_way,
                loss_prob: self.loss,
                router_queue_pkts: self.router_queue_pkts,
            },
            tcp: TcpConfig {
                initial_cwnd: self.initial_cwnd_segments * MSS as u64,
                initial_ssthresh: self.rwnd,
                rwnd: self.rwnd,
                send_buffer: self.send_buffer,
                initial_rto: ms(self.initial_rto_ms),
                rto_bounds: RtoBounds {
                    min: ms(self.min_rto_ms),
                    max: ms(self.max_rto_ms),
                },
                ..TcpConfig::default()
            },
            growth_mode: self.growth_mode,
            disk: DiskConfig {
                overhead: SimTime::from_secs_f64(self.disk_overhead_us / 1e6),
                rate_bps: self.disk_rate_bps,
                seek_penalty: ms(self.seek_penalty_ms),
            },
            max_outstanding: self.max_outstanding,
            workload: self.workload_params(),
            session_per_process: self.session == SessionLayout::PerProcess,
            seed,
            sample_every: ms(self.sample_ms),
            deadline: SimTime::from_secs_f64(self.deadline_s),
            record_sends: false,
            record_cwnd_events: false,
        }
    }
}
