//! iSCSI session layer: command admission, round-robin connection binding,
//! PDU sizing and a single-spindle disk at the target.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::error::SimError;
use crate::sim::SimTime;

pub const PDU_HEADER_BYTES: u64 = 48;
/// Data-in PDUs are cut at this payload size on the way back to the initiator.
pub const DATA_IN_SEGMENT_BYTES: u64 = 8192;
pub const BLOCK_BYTES: u64 = 512;
pub const CLUSTER_BYTES: u64 = 128 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Write,
    Read,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Write => "write",
            Direction::Read => "read",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a workload asks of the block layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IoRequest {
    pub dir: Direction,
    /// Address in 512-byte blocks.
    pub lba: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScsiCommand {
    pub id: u64,
    pub dir: Direction,
    pub lba: u64,
    pub len: u64,
}

impl ScsiCommand {
    /// Bytes on the initiator-to-target stream.
    pub fn request_bytes(&self) -> u64 {
        match self.dir {
            Direction::Write => PDU_HEADER_BYTES + self.len,
            Direction::Read => PDU_HEADER_BYTES,
        }
    }

    /// Bytes on the target-to-initiator stream, status included.
    pub fn response_bytes(&self) -> u64 {
        match self.dir {
            Direction::Write => PDU_HEADER_BYTES,
            Direction::Read => {
                let data_pdus = self.len.div_ceil(DATA_IN_SEGMENT_BYTES);
                self.len + data_pdus * PDU_HEADER_BYTES + PDU_HEADER_BYTES
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnaroundRecord {
    pub command_id: u64,
    pub dir: Direction,
    pub issue: SimTime,
    pub complete: SimTime,
    pub conn: usize,
}

impl TurnaroundRecord {
    pub fn turnaround(&self) -> SimTime {
        self.complete - self.issue
    }
}

/// A command bound to a connection and ready to go on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Admitted {
    pub cmd: ScsiCommand,
    pub conn: usize,
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    dir: Direction,
    conn: usize,
    issue: SimTime,
}

#[derive(Debug, Clone)]
pub struct Session {
    conns: Vec<usize>,
    max_outstanding: usize,
    pending: VecDeque<ScsiCommand>,
    in_flight: BTreeMap<u64, InFlight>,
    next_conn: usize,
    submitted: u64,
    completed: u64,
}

impl Session {
    pub fn new(conns: Vec<usize>, max_outstanding: usize) -> Result<Self, SimError> {
        if conns.is_empty() {
            return Err(SimError::Config("a session needs at least one connection".into()));
        }
        if max_outstanding == 0 {
            return Err(SimError::Config("max_outstanding must be at least 1".into()));
        }
        Ok(Session {
            conns,
            max_outstanding,
            pending: VecDeque::new(),
            in_flight: BTreeMap::new(),
            next_conn: 0,
            submitted: 0,
            completed: 0,
        })
    }

    pub fn conns(&self) -> &[usize] {
        &self.conns
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn submitted(&self) -> u64 {
        self.submitted
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Connection a command in flight is bound to.
    pub fn binding(&self, id: u64) -> Option<usize> {
        self.in_flight.get(&id).map(|f| f.conn)
    }

    /// Queues `cmd`; returns it bound to a connection if there is room.
    /// The issue time is taken at admission, when the command PDU is queued
    /// on its connection.
    pub fn submit(&mut self, now: SimTime, cmd: ScsiCommand) -> Result<Option<Admitted>, SimError> {
        if cmd.len == 0 {
            return Err(SimError::Logic(format!("command {} has zero length", cmd.id)));
        }
        self.submitted += 1;
        if self.in_flight.len() < self.max_outstanding {
            Ok(Some(self.admit(now, cmd)))
        } else {
            self.pending.push_back(cmd);
            Ok(None)
        }
    }

    fn admit(&mut self, now: SimTime, cmd: ScsiCommand) -> Admitted {
        let conn = self.conns[self.next_conn];
        self.next_conn = (self.next_conn + 1) % self.conns.len();
        self.in_flight.insert(
            cmd.id,
            InFlight {
                dir: cmd.dir,
                conn,
                issue: now,
            },
        );
        debug_assert!(self.in_flight.len() <= self.max_outstanding);
        Admitted { cmd, conn }
    }

    /// Status received on `conn`. Returns the turnaround record and the
    /// next pending command, now admitted.
    pub fn complete(
        &mut self,
        now: SimTime,
        id: u64,
        conn: usize,
    ) -> Result<(TurnaroundRecord, Option<Admitted>), SimError> {
        let f = self
            .in_flight
            .remove(&id)
            .ok_or_else(|| SimError::Logic(format!("completion for unknown command {id}")))?;
        if f.conn != conn {
            return Err(SimError::Logic(format!(
                "command {id} bound to connection {} completed on {conn}",
                f.conn
            )));
        }
        self.completed += 1;
        let rec = TurnaroundRecord {
            command_id: id,
            dir: f.dir,
            issue: f.issue,
            complete: now,
            conn,
        };
        let next = self.pending.pop_front().map(|c| self.admit(now, c));
        Ok((rec, next))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskConfig {
    pub overhead: SimTime,
    pub rate_bps: f64,
    pub seek_penalty: SimTime,
}

impl Default for DiskConfig {
    fn default() -> Self {
        DiskConfig {
            overhead: SimTime::from_micros(500),
            rate_bps: 400e6,
            seek_penalty: SimTime::from_millis(4),
        }
    }
}

/// Commands are serviced one at a time in arrival order.
#[derive(Debug, Clone)]
pub struct Disk {
    cfg: DiskConfig,
    busy_until: SimTime,
    next_lba: Option<u64>,
    seeks: u64,
}

impl Disk {
    pub fn new(cfg: DiskConfig) -> Self {
        Disk {
            cfg,
            busy_until: SimTime::ZERO,
            next_lba: None,
            seeks: 0,
        }
    }

    pub fn seeks(&self) -> u64 {
        self.seeks
    }

    /// Service time alone, for a command that does or does not seek.
    pub fn service_time(cfg: &DiskConfig, len: u64, seek: bool) -> SimTime {
        let transfer = SimTime::from_secs_f64(len as f64 * 8.0 / cfg.rate_bps);
        let mut t = cfg.overhead + transfer;
        if seek {
            t += cfg.seek_penalty;
        }
        t
    }

    /// Queues a command and returns when it finishes.
    pub fn submit(&mut self, now: SimTime, cmd: &ScsiCommand) -> SimTime {
        let seek = self.next_lba.is_some_and(|l| l != cmd.lba);
        if seek {
            self.seeks += 1;
        }
        self.next_lba = Some(cmd.lba + cmd.len.div_ceil(BLOCK_BYTES));
        let start = now.max(self.busy_until);
        self.busy_until = start + Self::service_time(&self.cfg, cmd.len, seek);
        self.busy_until
    }
}
