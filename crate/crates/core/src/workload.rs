//! Block-level workload generators: clustered sequential I/O, Postmark-style
//! small-file transactions, and Bonnie-style rewrite and seek loops.
//!
//! Generators only produce requests and react to completions; the testbed
//! drives them in simulated time. Writes are asynchronous up to a dirty
//! limit and drained at the end (an fsync). Reads block the issuing process.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::iscsi::{Direction, IoRequest, BLOCK_BYTES, CLUSTER_BYTES};
use crate::sim::{RngStream, SimTime};

/// A request tagged with a generator-local token for completion routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Issued {
    pub token: u64,
    pub req: IoRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadReport {
    pub name: &'static str,
    pub commands: u64,
    pub bytes_written: u64,
    pub bytes_read: u64,
    /// Seeks or transactions, depending on the generator.
    pub ops: u64,
    pub started: SimTime,
    pub finished: Option<SimTime>,
    pub counters: BTreeMap<&'static str, u64>,
}

impl WorkloadReport {
    pub fn elapsed(&self) -> Option<SimTime> {
        self.finished.map(|f| f - self.started)
    }

    /// Payload bytes per simulated second.
    pub fn throughput(&self) -> Option<f64> {
        let secs = self.elapsed()?.as_secs_f64();
        (secs > 0.0).then(|| (self.bytes_read + self.bytes_written) as f64 / secs)
    }

    pub fn ops_per_sec(&self) -> Option<f64> {
        let secs = self.elapsed()?.as_secs_f64();
        (secs > 0.0).then(|| self.ops as f64 / secs)
    }
}

pub trait Workload: Send {
    /// Pushes every request that can be issued at `now`. Called once at
    /// start and again after each completion.
    fn poll(&mut self, now: SimTime, out: &mut Vec<Issued>);
    fn on_complete(&mut self, now: SimTime, token: u64);
    fn is_finished(&self) -> bool;
    fn report(&self) -> WorkloadReport;
}

/// Outstanding-request bookkeeping shared by the generators.
#[derive(Debug, Clone)]
struct Tracker {
    name: &'static str,
    next_token: u64,
    outstanding: HashMap<u64, IoRequest>,
    reads_out: usize,
    writes_out: usize,
    commands: u64,
    bytes_written: u64,
    bytes_read: u64,
    started: Option<SimTime>,
    finished: Option<SimTime>,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Tracker {
            name,
            next_token: 0,
            outstanding: HashMap::new(),
            reads_out: 0,
            writes_out: 0,
            commands: 0,
            bytes_written: 0,
            bytes_read: 0,
            started: None,
            finished: None,
        }
    }

    fn start(&mut self, now: SimTime) {
        self.started.get_or_insert(now);
    }

    fn issue(&mut self, req: IoRequest, out: &mut Vec<Issued>) -> u64 {
        let token = self.next_token;
        self.next_token += 1;
        match req.dir {
            Direction::Read => self.reads_out += 1,
            Direction::Write => self.writes_out += 1,
        }
        self.commands += 1;
        self.outstanding.insert(token, req);
        out.push(Issued { token, req });
        token
    }

    fn complete(&mut self, token: u64) -> IoRequest {
        let req = self
            .outstanding
            .remove(&token)
            .unwrap_or_else(|| panic!("{}: completion for unknown token {token}", self.name));
        match req.dir {
            Direction::Read => {
                self.reads_out -= 1;
                self.bytes_read += req.len;
            }
            Direction::Write => {
                self.writes_out -= 1;
                self.bytes_written += req.len;
            }
        }
        req
    }

    fn idle(&self) -> bool {
        self.outstanding.is_empty()
    }

    fn finish_if(&mut self, now: SimTime, done: bool) {
        if done && self.finished.is_none() {
            self.finished = Some(now);
        }
    }

    fn report(&self, ops: u64, counters: BTreeMap<&'static str, u64>) -> WorkloadReport {
        WorkloadReport {
            name: self.name,
            commands: self.commands,
            bytes_written: self.bytes_written,
            bytes_read: self.bytes_read,
            ops,
            started: self.started.unwrap_or(SimTime::ZERO),
            finished: self.finished,
            counters,
        }
    }
}

/// Whole-file sequential transfer in 128KB clusters.
#[derive(Debug, Clone)]
pub struct Sequential {
    t: Tracker,
    dir: Direction,
    base_lba: u64,
    file_size: u64,
    next_offset: u64,
    depth: usize,
}

impl Sequential {
    /// Write-back: up to `depth` clusters in flight, then a barrier.
    pub fn write(file_size: u64, base_lba: u64, depth: usize) -> Self {
        Self::new("seq_write", Direction::Write, file_size, base_lba, depth.max(1))
    }

    /// The block layer holds a single read at a time.
    pub fn read(file_size: u64, base_lba: u64) -> Self {
        Self::new("seq_read", Direction::Read, file_size, base_lba, 1)
    }

    fn new(name: &'static str, dir: Direction, file_size: u64, base_lba: u64, depth: usize) -> Self {
        Sequential {
            t: Tracker::new(name),
            dir,
            base_lba,
            file_size,
            next_offset: 0,
            depth,
        }
    }
}

impl Workload for Sequential {
    fn poll(&mut self, now: SimTime, out: &mut Vec<Issued>) {
        self.t.start(now);
        while self.t.outstanding.len() < self.depth && self.next_offset < self.file_size {
            let len = CLUSTER_BYTES.min(self.file_size - self.next_offset);
            let lba = self.base_lba + self.next_offset / BLOCK_BYTES;
            self.t.issue(IoRequest { dir: self.dir, lba, len }, out);
            self.next_offset += len;
        }
        let done = self.next_offset >= self.file_size && self.t.idle();
        self.t.finish_if(now, done);
    }

    fn on_complete(&mut self, now: SimTime, token: u64) {
        self.t.complete(token);
        let done = self.next_offset >= self.file_size && self.t.idle();
        self.t.finish_if(now, done);
    }

    fn is_finished(&self) -> bool {
        self.t.finished.is_some()
    }

    fn report(&self) -> WorkloadReport {
        self.t.report(self.t.commands, BTreeMap::new())
    }
}

/// Read each cluster, wait, then write it back.
#[derive(Debug, Clone)]
pub struct Rewrite {
    t: Tracker,
    base_lba: u64,
    file_size: u64,
    next_offset: u64,
    depth: usize,
    to_write: VecDeque<IoRequest>,
}

impl Rewrite {
    pub fn new(file_size: u64, base_lba: u64, depth: usize) -> Self {
        Rewrite {
            t: Tracker::new("rewrite"),
            base_lba,
            file_size,
            next_offset: 0,
            depth: depth.max(1),
            to_write: VecDeque::new(),
        }
    }

    fn done(&self) -> bool {
        self.next_offset >= self.file_size && self.to_write.is_empty() && self.t.idle()
    }
}

impl Workload for Rewrite {
    fn poll(&mut self, now: SimTime, out: &mut Vec<Issued>) {
        self.t.start(now);
        while self.t.writes_out < self.depth {
            let Some(w) = self.to_write.pop_front() else { break };
            self.t.issue(w, out);
        }
        if self.t.reads_out == 0 && self.t.writes_out < self.depth && self.next_offset < self.file_size {
            let len = CLUSTER_BYTES.min(self.file_size - self.next_offset);
            let lba = self.base_lba + self.next_offset / BLOCK_BYTES;
            self.t.issue(IoRequest { dir: Direction::Read, lba, len }, out);
            self.next_offset += len;
        }
        let done = self.done();
        self.t.finish_if(now, done);
    }

    fn on_complete(&mut self, now: SimTime, token: u64) {
        let req = self.t.complete(token);
        if req.dir == Direction::Read {
            self.to_write.push_back(IoRequest {
                dir: Direction::Write,
                ..req
            });
        }
        let done = self.done();
        self.t.finish_if(now, done);
    }

    fn is_finished(&self) -> bool {
        self.t.finished.is_some()
    }

    fn report(&self) -> WorkloadReport {
        self.t.report(self.t.commands, BTreeMap::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeekParams {
    pub n_seekers: usize,
    pub total_seeks: u64,
    pub block_bytes: u64,
    /// Fraction of seeks whose block is dirtied and written back.
    pub rewrite_fraction: f64,
}

impl Default for SeekParams {
    fn default() -> Self {
        SeekParams {
            n_seekers: 3,
            total_seeks: 8000,
            block_bytes: 8192,
            rewrite_fraction: 0.1,
        }
    }
}


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seeker {
    Idle,
    Reading,
    WriteDue(IoRequest),
    Writing,
}

/// Independent random-read loops over a file.
#[derive(Debug, Clone)]
pub struct Seek {
    t: Tracker,
    p: SeekParams,
    base_lba: u64,
    file_blocks: u64,
    rng: RngStream,
    seekers: Vec<Seeker>,
    owner: HashMap<u64, usize>,
    started_seeks: u64,
    done_seeks: u64,
}

impl Seek {
    pub fn new(file_size: u64, base_lba: u64, p: SeekParams, rng: RngStream) -> Self {
        Seek {
            t: Tracker::new("seek"),
            file_blocks: (file_size / p.block_bytes).max(1),
            p,
            base_lba,
            rng,
            seekers: vec![Seeker::Idle; p.n_seekers.max(1)],
            owner: HashMap::new(),
            started_seeks: 0,
            done_seeks: 0,
        }
    }

    fn done(&self) -> bool {
        self.done_seeks >= self.p.total_seeks && self.t.idle()
    }
}

impl Workload for Seek {
    fn poll(&mut self, now: SimTime, out: &mut Vec<Issued>) {
        self.t.start(now);
        for i in 0..self.seekers.len() {
            let req = match self.seekers[i] {
                Seeker::WriteDue(req) => {
                    self.seekers[i] = Seeker::Writing;
                    req
                }
                Seeker::Idle if self.started_seeks < self.p.total_seeks => {
                    let block = self.rng.range_inclusive(0, self.file_blocks - 1);
                    self.seekers[i] = Seeker::Reading;
                    self.started_seeks += 1;
                    IoRequest {
                        dir: Direction::Read,
                        lba: self.base_lba + block * self.p.block_bytes / BLOCK_BYTES,
                        len: self.p.block_bytes,
                    }
                }
                _ => continue,
            };
            let token = self.t.issue(req, out);
            self.owner.insert(token, i);
        }
        let done = self.done();
        self.t.finish_if(now, done);
    }

    fn on_complete(&mut self, now: SimTime, token: u64) {
        let req = self.t.complete(token);
        let i = self.owner.remove(&token).expect("token has an owner");
        if self.seekers[i] == Seeker::Reading && self.rng.uniform() < self.p.rewrite_fraction {
            self.seekers[i] = Seeker::WriteDue(IoRequest {
                dir: Direction::Write,
                ..req
            });
        } else {
            self.seekers[i] = Seeker::Idle;
            self.done_seeks += 1;
        }
        let done = self.done();
        self.t.finish_if(now, done);
    }

    fn is_finished(&self) -> bool {
        self.t.finished.is_some()
    }

    fn report(&self) -> WorkloadReport {
        self.t.report(self.done_seeks, BTreeMap::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostmarkParams {
    pub n_files: u64,
    pub size_min: u64,
    pub size_max: u64,
    pub n_transactions: u64,
}

impl Default for PostmarkParams {
    fn default() -> Self {
        PostmarkParams {
            n_files: 2000,
            size_min: 500,
            size_max: 100 * 1024,
            n_transactions: 5000,
        }
    }
}

impl PostmarkParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(format!(
                "postmark sizes must satisfy 0 < size_min <= size_max (got {}..{})",
                self.size_min, self.size_max
            ));
        }
        if self.n_files == 0 {
            return Err("postmark needs at least one file".into());
        }
        Ok(())
    }
}

pub const POSTMARK_METADATA_BYTES: u64 = 4096;
const APPEND_MIN: u64 = 512;

#[derive(Debug, Clone, Copy)]
struct File {
    lba: u64,
    size: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PostmarkCounts {
    pub created: u64,
    pub deleted: u64,
    pub reads: u64,
    pub appends: u64,
    pub transactions: u64,
}

/// Postmark-style pool of small files: a create phase, then transactions
/// pairing (create | delete) with (read | append).
#[derive(Debug, Clone)]
pub struct Postmark {
    t: Tracker,
    p: PostmarkParams,
    depth: usize,
    rng: RngStream,
    base_lba: u64,
    disk_blocks: u64,
    files: Vec<File>,
    ops: VecDeque<IoRequest>,
    initial_files: u64,
    counts: PostmarkCounts,
    /// Requests generated, for offline inspection of the stream.
    log: Option<Vec<IoRequest>>,
}

impl Postmark {
    pub fn new(p: PostmarkParams, base_lba: u64, depth: usize, rng: RngStream) -> Self {
        // files are scattered over twice the expected data volume
        let disk_blocks = (p.n_files * (p.size_min + p.size_max) / BLOCK_BYTES).max(1);
        Postmark {
            t: Tracker::new("postmark"),
            p,
            depth: depth.max(1),
            rng,
            base_lba,
            disk_blocks,
            files: Vec::new(),
            ops: VecDeque::new(),
            initial_files: 0,
            counts: PostmarkCounts::default(),
            log: None,
        }
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn counts(&self) -> PostmarkCounts {
        self.counts
    }

    pub fn pool_size(&self) -> usize {
        self.files.len()
    }

    pub fn log(&self) -> Option<&[IoRequest]> {
        self.log.as_deref()
    }

    fn random_lba(&mut self) -> u64 {
        self.base_lba + self.rng.range_inclusive(0, self.disk_blocks - 1)
    }

    fn push_op(&mut self, req: IoRequest) {
        if let Some(log) = self.log.as_mut() {
            log.push(req);
        }
        self.ops.push_back(req);
    }

    /// Queues one request per cluster of `len` bytes starting at `lba`.
    fn push_extent(&mut self, dir: Direction, lba: u64, len: u64) {
        let mut off = 0;
        while off < len {
            let chunk = CLUSTER_BYTES.min(len - off);
            self.push_op(IoRequest {
                dir,
                lba: lba + off / BLOCK_BYTES,
                len: chunk,
            });
            off += chunk;
        }
    }

    fn create(&mut self) {
        let size = self.rng.range_inclusive(self.p.size_min, self.p.size_max);
        let lba = self.random_lba();
        self.files.push(File { lba, size });
        self.counts.created += 1;
        self.push_extent(Direction::Write, lba, size);
    }

    fn delete(&mut self) {
        if self.files.len() <= 1 {
            self.create();
            return;
        }
        let idx = self.rng.index(self.files.len());
        self.files.swap_remove(idx);
        self.counts.deleted += 1;
        let lba = self.random_lba();
        self.push_op(IoRequest {
            dir: Direction::Write,
            lba,
            len: POSTMARK_METADATA_BYTES,
        });
    }

    fn read_or_append(&mut self) {
        let idx = self.rng.index(self.files.len());
        let f = self.files[idx];
        if self.rng.coin() {
            self.counts.reads += 1;
            self.push_extent(Direction::Read, f.lba, f.size);
        } else {
            let room = self.p.size_max.saturating_sub(f.size).max(APPEND_MIN);
            let len = self.rng.range_inclusive(APPEND_MIN, room);
            self.counts.appends += 1;
            self.files[idx].size += len;
            self.push_extent(Direction::Write, f.lba + f.size.div_ceil(BLOCK_BYTES), len);
        }
    }

    /// Generates the next logical step. Returns false once everything has
    /// been generated.
    fn generate(&mut self) -> bool {
        if self.initial_files < self.p.n_files {
            self.initial_files += 1;
            self.create();
            return true;
        }
        if self.counts.transactions < self.p.n_transactions {
            self.counts.transactions += 1;
            if self.rng.coin() {
                self.create();
            } else {
                self.delete();
            }
            self.read_or_append();
            return true;
        }
        false
    }

    fn done(&self) -> bool {
        self.ops.is_empty()
            && self.t.idle()
            && self.initial_files >= self.p.n_files
            && self.counts.transactions >= self.p.n_transactions
    }
}

impl Workload for Postmark {
    fn poll(&mut self, now: SimTime, out: &mut Vec<Issued>) {
        self.t.start(now);
        loop {
            // reads are synchronous: nothing else until they return
            if self.t.reads_out > 0 {
                break;
            }
            if self.ops.is_empty() && !self.generate() {
                break;
            }
            let Some(&op) = self.ops.front() else { break };
            match op.dir {
                Direction::Write => {
                    if self.t.writes_out >= self.depth {
                        break;
                    }
                    self.ops.pop_front();
                    self.t.issue(op, out);
                }
                Direction::Read => {
                    // a multi-cluster read goes out in one go
                    while self.ops.front().is_some_and(|o| o.dir == Direction::Read) {
                        let r = self.ops.pop_front().expect("front exists");
                        self.t.issue(r, out);
                    }
                }
            }
        }
        let done = self.done();
        self.t.finish_if(now, done);
    }

    fn on_complete(&mut self, now: SimTime, token: u64) {
        self.t.complete(token);
        let done = self.done();
        self.t.finish_if(now, done);
    }

    fn is_finished(&self) -> bool {
        self.t.finished.is_some()
    }

    fn report(&self) -> WorkloadReport {
        let c = self.counts;
        let counters = BTreeMap::from([
            ("created", c.created),
            ("deleted", c.deleted),
            ("reads", c.reads),
            ("appends", c.appends),
            ("pool", self.files.len() as u64),
        ]);
        self.t.report(c.transactions, counters)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkloadKind {
    SeqWrite,
    SeqRead,
    Postmark,
    PostmarkMulti,
    Rewrite,
    Seek,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 6] = [
        WorkloadKind::SeqWrite,
        WorkloadKind::SeqRead,
        WorkloadKind::Postmark,
        WorkloadKind::PostmarkMulti,
        WorkloadKind::Rewrite,
        WorkloadKind::Seek,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadKind::SeqWrite => "seq_write",
            WorkloadKind::SeqRead => "seq_read",
            WorkloadKind::Postmark => "postmark",
            WorkloadKind::PostmarkMulti => "postmark_multi",
            WorkloadKind::Rewrite => "rewrite",
            WorkloadKind::Seek => "seek",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadParams {
    pub kind: WorkloadKind,
    pub file_size: u64,
    /// Application write size. Clustering makes it irrelevant to the
    /// command stream; kept so runs can be labelled by it.
    pub block_size: u64,
    /// Dirty-write limit per process.
    pub depth: usize,
    pub postmark: PostmarkParams,
    pub seek: SeekParams,
    /// Processes for the multiprocess variants.
    pub n_processes: usize,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            kind: WorkloadKind::SeqWrite,
            file_size: 64 << 20,
            block_size: 4096,
            depth: 32,
            postmark: PostmarkParams::default(),
            seek: SeekParams::default(),
            n_processes: 10,
        }
    }
}

impl WorkloadParams {
    pub fn processes(&self) -> usize {
        match self.kind {
            WorkloadKind::PostmarkMulti => self.n_processes.max(1),
            _ => 1,
        }
    }

    /// One generator per process, each with its own random stream and its
    /// own region of the disk.
    pub fn build(&self, seed: u64) -> Vec<Box<dyn Workload>> {
        let region = (2 * self.file_size.max(self.postmark.n_files * self.postmark.size_max)) / BLOCK_BYTES;
        (0..self.processes())
            .map(|i| {
                let rng = RngStream::new(seed, crate::sim::streams::WORKLOAD_BASE + i as u64);
                let base = i as u64 * region;
                let w: Box<dyn Workload> = match self.kind {
                    WorkloadKind::SeqWrite => Box::new(Sequential::write(self.file_size, base, self.depth)),
                    WorkloadKind::SeqRead => Box::new(Sequential::read(self.file_size, base)),
                    WorkloadKind::Postmark | WorkloadKind::PostmarkMulti => {
                        Box::new(Postmark::new(self.postmark, base, self.depth, rng))
                    }
                    WorkloadKind::Rewrite => Box::new(Rewrite::new(self.file_size, base, self.depth)),
                    WorkloadKind::Seek => Box::new(Seek::new(self.file_size, base, self.seek, rng)),
                };
                w
            })
            .collect()
    }
}

/// Runs a generator against an instant block device, completing requests
/// in issue order. Returns every request issued.
pub fn drain_instant(w: &mut dyn Workload) -> Vec<IoRequest> {
    let mut issued = Vec::new();
    let mut queue: VecDeque<Issued> = VecDeque::new();
    let mut buf = Vec::new();
    w.poll(SimTime::ZERO, &mut buf);
    queue.extend(buf.drain(..));
    while let Some(i) = queue.pop_front() {
        issued.push(i.req);
        w.on_complete(SimTime::ZERO, i.token);
        w.poll(SimTime::ZERO, &mut buf);
        queue.extend(buf.drain(..));
    }
    issued
}
