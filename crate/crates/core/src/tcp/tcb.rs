use std::collections::{BTreeMap, HashSet, VecDeque};

use arrayvec::ArrayVec;
use thiserror::Error;

use super::rtt::RttEstimator;
use super::{SackBlock, Segment, TcpConfig, MAX_SACK_BLOCKS};
use crate::ensemble::{EnsembleRegistry, HostPair, InitialState};
use crate::error::EnsembleError;
use crate::sim::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TcpError {
    #[error("connection is closed")]
    Closed,
    #[error("ack {ack} beyond highest sequence sent {snd_max}")]
    AckBeyondSent { ack: u64, snd_max: u64 },
    #[error("segment carries no ack")]
    NotAnAck,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Congestion and RTT state owned by a standalone connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OwnCongestionState {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub rtt: RttEstimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CongestionRef {
    Own(OwnCongestionState),
    Ensemble(HostPair),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetxKind {
    Fast,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub segment: Segment,
    pub retx: Option<RetxKind>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TimerCmd {
    #[default]
    Keep,
    /// (Re)start the retransmission timer to fire after the given delay.
    Arm(SimTime),
    Stop,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TcpOutput {
    pub transmissions: Vec<Transmission>,
    pub ack: Option<Segment>,
    pub timer: TimerCmd,
    /// Send-buffer bytes released by a cumulative ack.
    pub newly_acked: u64,
    /// In-order bytes handed to the application.
    pub delivered: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TcpStats {
    pub segments_sent: u64,
    pub new_bytes_sent: u64,
    pub retx_fast: u64,
    pub retx_timeout: u64,
    pub timeouts: u64,
    pub stale_timeouts: u64,
    pub fast_recoveries: u64,
    pub dupacks: u64,
    pub rtt_samples: u64,
    /// RTT samples whose segment had been retransmitted. Must stay zero.
    pub karn_violations: u64,
    pub bytes_delivered: u64,
    pub duplicate_segments: u64,
}

impl TcpStats {
    pub fn retransmits(&self) -> u64 {
        self.retx_fast + self.retx_timeout
    }
}

/// Window after a new-data ack, for checking growth against a calculator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CwndEvent {
    pub acked: u64,
    pub cwnd: u64,
    pub ssthresh: u64,
    pub in_recovery: bool,
}

#[derive(Debug, Clone)]
struct SentSeg {
    seq: u64,
    len: u32,
    sent_at: SimTime,
    retransmitted: bool,
    sacked: bool,
}

impl SentSeg {
    fn end(&self) -> u64 {
        self.seq + self.len as u64
    }
}

/// Connection control block for one endpoint of a full-duplex connection.
#[derive(Debug, Clone)]
pub struct Tcb {
    conn: usize,
    cfg: TcpConfig,
    closed: bool,

    // send side
    snd_una: u64,
    snd_nxt: u64,
    snd_max: u64,
    app_end: u64,
    segs: VecDeque<SentSeg>,
    sacked_bytes: u64,
    high_sacked: u64,
    dupacks: u32,
    in_recovery: bool,
    recovery_point: u64,
    rexmit_cursor: u64,
    recovery_inflation: u64,
    backoff: u32,
    timer_running: bool,
    cc: CongestionRef,
    retx_seqs: HashSet<u64>,

    // receive side
    rcv_nxt: u64,
    ooo: BTreeMap<u64, u64>,

    stats: TcpStats,
    cwnd_log: Option<Vec<CwndEvent>>,
}

impl Tcb {
    pub fn new(conn: usize, cfg: TcpConfig) -> Self {
        Tcb {
            conn,
            cfg,
            closed: false,
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            app_end: 0,
            segs: VecDeque::new(),
            sacked_bytes: 0,
            high_sacked: 0,
            dupacks: 0,
            in_recovery: false,
            recovery_point: 0,
            rexmit_cursor: 0,
            recovery_inflation: 0,
            backoff: 0,
            timer_running: false,
            cc: CongestionRef::Own(OwnCongestionState {
                cwnd: cfg.initial_cwnd,
                ssthresh: cfg.initial_ssthresh,
                rtt: RttEstimator::new(cfg.initial_rto),
            }),
            retx_seqs: HashSet::new(),
            rcv_nxt: 0,
            ooo: BTreeMap::new(),
            stats: TcpStats::default(),
            cwnd_log: cfg.trace_cwnd.then(Vec::new),
        }
    }

    pub fn conn(&self) -> usize {
        self.conn
    }

    pub fn config(&self) -> &TcpConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &TcpStats {
        &self.stats
    }

    pub fn congestion(&self) -> &CongestionRef {
        &self.cc
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn snd_max(&self) -> u64 {
        self.snd_max
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn in_recovery(&self) -> bool {
        self.in_recovery
    }

    pub fn dupacks(&self) -> u32 {
        self.dupacks
    }

    pub fn sacked_bytes(&self) -> u64 {
        self.sacked_bytes
    }

    pub fn backoff(&self) -> u32 {
        self.backoff
    }

    pub fn cwnd_log(&self) -> Option<&[CwndEvent]> {
        self.cwnd_log.as_deref()
    }

    /// Bytes sent and neither cumulatively acked nor SACKed.
    pub fn flight(&self) -> u64 {
        self.snd_nxt - self.snd_una - self.sacked_bytes
    }

    /// Unacknowledged data exists.
    pub fn has_outstanding(&self) -> bool {
        self.snd_max > self.snd_una
    }

    pub fn send_buffer_used(&self) -> u64 {
        self.app_end - self.snd_una
    }

    pub fn send_buffer_free(&self) -> u64 {
        self.cfg.send_buffer - self.send_buffer_used()
    }

    /// Bytes accepted from the application but not yet sent for the first time.
    pub fn unsent(&self) -> u64 {
        self.app_end - self.snd_max
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Strips the connection of its own congestion and RTT state and hands
    /// it to the ensemble for `pair`.
    pub fn join_ensemble(&mut self, ens: &mut EnsembleRegistry, pair: HostPair) -> Result<(), TcpError> {
        let own = match self.cc {
            CongestionRef::Own(s) => s,
            CongestionRef::Ensemble(_) => return Err(EnsembleError::AlreadyMember { conn: self.conn }.into()),
        };
        ens.join(
            pair,
            self.conn,
            InitialState {
                cwnd: own.cwnd,
                ssthresh: own.ssthresh,
                rtt: own.rtt,
            },
        )?;
        self.cc = CongestionRef::Ensemble(pair);
        Ok(())
    }

    /// Leaves the ensemble, keeping the last allocation as private state.
    pub fn leave_ensemble(&mut self, ens: &mut EnsembleRegistry) -> Result<(), TcpError> {
        let CongestionRef::Ensemble(pair) = self.cc else {
            return Ok(());
        };
        let share = ens.allocate_share(pair, self.conn)?;
        let rtt = ens.rtt(pair, self.conn)?;
        ens.leave(pair, self.conn)?;
        self.cc = CongestionRef::Own(OwnCongestionState {
            cwnd: share.cwnd,
            ssthresh: share.ssthresh.max(2 * self.cfg.mss64()),
            rtt,
        });
        Ok(())
    }

    /// Window from the congestion source, before the recovery allowance.
    pub fn base_cwnd(&self, ens: &EnsembleRegistry) -> Result<u64, TcpError> {
        Ok(match self.cc {
            CongestionRef::Own(s) => s.cwnd,
            CongestionRef::Ensemble(pair) => ens.allocate_share(pair, self.conn)?.cwnd,
        })
    }

    pub fn ssthresh(&self, ens: &EnsembleRegistry) -> Result<u64, TcpError> {
        Ok(match self.cc {
            CongestionRef::Own(s) => s.ssthresh,
            CongestionRef::Ensemble(pair) => ens.allocate_share(pair, self.conn)?.ssthresh,
        })
    }

    /// Window in force, including the three-segment allowance while in
    /// fast recovery.
    pub fn effective_cwnd(&self, ens: &EnsembleRegistry) -> Result<u64, TcpError> {
        Ok(self.base_cwnd(ens)? + self.recovery_inflation)
    }

    pub fn allowed_window(&self, ens: &EnsembleRegistry) -> Result<u64, TcpError> {
        let wnd = self.effective_cwnd(ens)?.min(self.cfg.rwnd);
        Ok(wnd.saturating_sub(self.flight()))
    }

    pub fn rtt(&self, ens: &EnsembleRegistry) -> Result<RttEstimator, TcpError> {
        Ok(match self.cc {
            CongestionRef::Own(s) => s.rtt,
            CongestionRef::Ensemble(pair) => ens.rtt(pair, self.conn)?,
        })
    }

    /// Current timer duration, with exponential backoff applied.
    pub fn current_rto(&self, ens: &EnsembleRegistry) -> Result<SimTime, TcpError> {
        let base = self.rtt(ens)?.rto();
        Ok(base.shl_saturating(self.backoff).min(self.cfg.rto_bounds.max))
    }

    /// Appends up to `bytes` to the send buffer. Returns the count accepted;
    /// call [`poll`](Self::poll) afterwards to transmit.
    pub fn app_send(&mut self, bytes: u64) -> Result<u64, TcpError> {
        if self.closed {
            return Err(TcpError::Closed);
        }
        let accepted = bytes.min(self.send_buffer_free());
        self.app_end += accepted;
        Ok(accepted)
    }

    /// Sends whatever the window allows: holes first while in recovery,
    /// then go-back-N resends after a timeout, then new data.
    pub fn poll(&mut self, now: SimTime, ens: &EnsembleRegistry, out: &mut TcpOutput) -> Result<(), TcpError> {
        let mut budget = self.allowed_window(ens)?;
        let mut sent = false;
        loop {
            if self.in_recovery {
                if let Some(idx) = self.next_hole() {
                    let len = self.segs[idx].len as u64;
                    if len > budget {
                        break;
                    }
                    self.rexmit_cursor = self.segs[idx].end();
                    self.retransmit(idx, now, RetxKind::Fast, out);
                    budget -= len;
                    sent = true;
                    continue;
                }
            }
            if self.snd_nxt < self.snd_max {
                let idx = self.segs.partition_point(|s| s.seq < self.snd_nxt);
                debug_assert_eq!(self.segs[idx].seq, self.snd_nxt);
                let len = self.segs[idx].len as u64;
                if len > budget {
                    break;
                }
                self.snd_nxt += len;
                self.retransmit(idx, now, RetxKind::Timeout, out);
                budget -= len;
                sent = true;
                continue;
            }
            let avail = self.app_end - self.snd_nxt;
            if avail == 0 {
                break;
            }
            let len = avail.min(self.cfg.mss64());
            if len > budget {
                break;
            }
            let seg = SentSeg {
                seq: self.snd_nxt,
                len: len as u32,
                sent_at: now,
                retransmitted: false,
                sacked: false,
            };
            out.transmissions.push(Transmission {
                segment: Segment::data(seg.seq, seg.len),
                retx: None,
            });
            self.segs.push_back(seg);
            self.snd_nxt += len;
            self.snd_max = self.snd_nxt;
            self.stats.segments_sent += 1;
            self.stats.new_bytes_sent += len;
            budget -= len;
            sent = true;
        }
        if sent && !self.timer_running {
            self.arm_timer(ens, out)?;
        }
        Ok(())
    }

    fn next_hole(&self) -> Option<usize> {
        let start = self.segs.partition_point(|s| s.seq < self.rexmit_cursor);
        self.segs
            .iter()
            .enumerate()
            .skip(start)
            .take_while(|(_, s)| s.seq < self.high_sacked && s.end() <= self.snd_nxt)
            .find(|(_, s)| !s.sacked)
            .map(|(i, _)| i)
    }

    fn retransmit(&mut self, idx: usize, now: SimTime, kind: RetxKind, out: &mut TcpOutput) {
        let seg = &mut self.segs[idx];
        seg.retransmitted = true;
        seg.sent_at = now;
        self.retx_seqs.insert(seg.seq);
        out.transmissions.push(Transmission {
            segment: Segment::data(seg.seq, seg.len),
            retx: Some(kind),
        });
        self.stats.segments_sent += 1;
        match kind {
            RetxKind::Fast => self.stats.retx_fast += 1,
            RetxKind::Timeout => self.stats.retx_timeout += 1,
        }
    }

    fn arm_timer(&mut self, ens: &EnsembleRegistry, out: &mut TcpOutput) -> Result<(), TcpError> {
        out.timer = TimerCmd::Arm(self.current_rto(ens)?);
        self.timer_running = true;
        Ok(())
    }

    fn mark_sacked(&mut self, blocks: &[SackBlock]) {
        for b in blocks {
            let start = self.segs.partition_point(|s| s.seq < b.start);
            for s in self.segs.iter_mut().skip(start) {
                if s.end() > b.end || s.end() > self.snd_nxt {
                    break;
                }
                if !s.sacked {
                    s.sacked = true;
                    self.sacked_bytes += s.len as u64;
                    self.high_sacked = self.high_sacked.max(s.end());
                }
            }
        }
    }

    fn sample_rtt(&mut self, sample: SimTime, ens: &mut EnsembleRegistry) -> Result<(), TcpError> {
        let bounds = self.cfg.rto_bounds;
        match &mut self.cc {
            CongestionRef::Own(s) => s.rtt.update(sample, bounds),
            CongestionRef::Ensemble(pair) => {
                let pair = *pair;
                let mut est = ens.rtt(pair, self.conn)?;
                est.update(sample, bounds);
                let (srtt, rttvar) = (est.srtt().expect("updated"), est.rttvar().expect("updated"));
                ens.report_rtt(pair, self.conn, srtt, rttvar)?;
            }
        }
        self.stats.rtt_samples += 1;
        self.backoff = 0;
        Ok(())
    }

    fn grow(&mut self, acked: u64, ens: &mut EnsembleRegistry) -> Result<(), TcpError> {
        let mss = self.cfg.mss64();
        match &mut self.cc {
            CongestionRef::Own(s) => {
                if s.cwnd < s.ssthresh {
                    s.cwnd += acked.min(mss);
                } else {
                    s.cwnd += (mss * mss / s.cwnd).max(1);
                }
            }
            CongestionRef::Ensemble(pair) => ens.on_member_ack(*pair, self.conn, acked)?,
        }
        Ok(())
    }

    fn enter_recovery(&mut self, now: SimTime, ens: &mut EnsembleRegistry, out: &mut TcpOutput) -> Result<(), TcpError> {
        let mss = self.cfg.mss64();
        match &mut self.cc {
            CongestionRef::Own(s) => {
                s.ssthresh = (s.cwnd / 2).max(2 * mss);
                s.cwnd = s.ssthresh;
            }
            CongestionRef::Ensemble(pair) => {
                ens.on_member_loss(*pair, self.conn, now)?;
            }
        }
        self.in_recovery = true;
        self.recovery_point = self.snd_max;
        self.recovery_inflation = self.cfg.dupack_threshold as u64 * mss;
        self.stats.fast_recoveries += 1;
        // the segment at snd_una is resent regardless of the window
        if let Some(front) = self.segs.front() {
            if front.seq == self.snd_una && !front.sacked && front.end() <= self.snd_nxt {
                self.rexmit_cursor = front.end();
                self.retransmit(0, now, RetxKind::Fast, out);
            }
        }
        if !self.timer_running {
            self.arm_timer(ens, out)?;
        }
        Ok(())
    }

    /// Processes an acknowledgement from the peer.
    pub fn on_ack(&mut self, now: SimTime, seg: &Segment, ens: &mut EnsembleRegistry) -> Result<TcpOutput, TcpError> {
        if !seg.flags.ack {
            return Err(TcpError::NotAnAck);
        }
        if seg.ack > self.snd_max {
            return Err(TcpError::AckBeyondSent {
                ack: seg.ack,
                snd_max: self.snd_max,
            });
        }
        let mut out = TcpOutput::default();
        self.mark_sacked(&seg.sack);

        if seg.ack > self.snd_una {
            let acked = seg.ack - self.snd_una;
            let mut any_retx = false;
            let mut any_sacked = false;
            let mut newest: Option<(u64, SimTime, bool)> = None;
            while self.segs.front().is_some_and(|s| s.end() <= seg.ack) {
                let s = self.segs.pop_front().expect("front exists");
                any_retx |= s.retransmitted;
                any_sacked |= s.sacked;
                if s.sacked {
                    self.sacked_bytes -= s.len as u64;
                }
                let was_retx = self.retx_seqs.remove(&s.seq);
                newest = Some((s.seq, s.sent_at, was_retx));
            }
            self.snd_una = seg.ack;
            self.snd_nxt = self.snd_nxt.max(self.snd_una);
            self.dupacks = 0;
            out.newly_acked = acked;

            if let Some((_, sent_at, was_retx)) = newest {
                if !any_retx && !any_sacked && now > sent_at {
                    if was_retx {
                        self.stats.karn_violations += 1;
                    }
                    self.sample_rtt(now - sent_at, ens)?;
                }
            }

            if self.in_recovery {
                if seg.ack >= self.recovery_point {
                    self.in_recovery = false;
                    self.recovery_inflation = 0;
                    if let CongestionRef::Own(s) = &mut self.cc {
                        s.cwnd = s.ssthresh;
                    }
                }
            } else {
                self.grow(acked, ens)?;
            }

            if let (Some(log), CongestionRef::Own(s)) = (self.cwnd_log.as_mut(), &self.cc) {
                log.push(CwndEvent {
                    acked,
                    cwnd: s.cwnd,
                    ssthresh: s.ssthresh,
                    in_recovery: self.in_recovery,
                });
            }

            if self.has_outstanding() {
                self.arm_timer(ens, &mut out)?;
            } else {
                out.timer = TimerCmd::Stop;
                self.timer_running = false;
            }
        } else if seg.ack == self.snd_una && seg.len == 0 && self.has_outstanding() {
            self.dupacks += 1;
            self.stats.dupacks += 1;
            if !self.in_recovery && self.dupacks == self.cfg.dupack_threshold {
                self.enter_recovery(now, ens, &mut out)?;
            }
        }

        self.poll(now, ens, &mut out)?;
        Ok(out)
    }

    /// Retransmission timer expiry. Ignored when nothing is outstanding.
    pub fn on_timeout(&mut self, now: SimTime, ens: &mut EnsembleRegistry) -> Result<TcpOutput, TcpError> {
        self.timer_running = false;
        let mut out = TcpOutput::default();
        if !self.has_outstanding() {
            self.stats.stale_timeouts += 1;
            return Ok(out);
        }
        let mss = self.cfg.mss64();
        match &mut self.cc {
            CongestionRef::Own(s) => {
                s.ssthresh = (s.cwnd / 2).max(2 * mss);
                s.cwnd = mss;
            }
            CongestionRef::Ensemble(pair) => ens.on_member_timeout(*pair, self.conn, now)?,
        }
        let max_rto = self.cfg.rto_bounds.max;
        if self.rtt(ens)?.rto().shl_saturating(self.backoff) < max_rto {
            self.backoff += 1;
        }
        self.snd_nxt = self.snd_una;
        for s in self.segs.iter_mut() {
            s.sacked = false;
        }
        self.sacked_bytes = 0;
        self.high_sacked = 0;
        self.in_recovery = false;
        self.recovery_inflation = 0;
        self.dupacks = 0;
        self.stats.timeouts += 1;

        self.poll(now, ens, &mut out)?;
        if !self.timer_running {
            self.arm_timer(ens, &mut out)?;
        }
        Ok(out)
    }

    /// Receiver side: consumes a data segment and returns the immediate ack.
    pub fn on_segment_arrival(&mut self, seg: &Segment) -> TcpOutput {
        let mut out = TcpOutput::default();
        let (start, end) = (seg.seq, seg.end());
        let before = self.rcv_nxt;
        let mut ooo_block = None;
        if end <= self.rcv_nxt {
            self.stats.duplicate_segments += 1;
        } else if start <= self.rcv_nxt {
            self.rcv_nxt = end;
            while let Some((&s, &e)) = self.ooo.first_key_value() {
                if s > self.rcv_nxt {
                    break;
                }
                self.rcv_nxt = self.rcv_nxt.max(e);
                self.ooo.remove(&s);
            }
        } else {
            ooo_block = Some(self.insert_ooo(start, end));
        }
        out.delivered = self.rcv_nxt - before;
        self.stats.bytes_delivered += out.delivered;

        let mut blocks: ArrayVec<SackBlock, MAX_SACK_BLOCKS> = ArrayVec::new();
        if let Some(b) = ooo_block {
            blocks.push(b);
        }
        for (&s, &e) in &self.ooo {
            if blocks.is_full() {
                break;
            }
            if ooo_block.is_some_and(|b| b.start == s) {
                continue;
            }
            blocks.push(SackBlock { start: s, end: e });
        }
        out.ack = Some(Segment::pure_ack(self.rcv_nxt, &blocks));
        out
    }

    /// Inserts `[start, end)` into the out-of-order map, merging neighbours,
    /// and returns the resulting block.
    fn insert_ooo(&mut self, mut start: u64, mut end: u64) -> SackBlock {
        if let Some((&s, &e)) = self.ooo.range(..=start).next_back() {
            if e >= start {
                start = s;
                end = end.max(e);
                self.ooo.remove(&s);
            }
        }
        while let Some((&s, &e)) = self.ooo.range(start..).next() {
            if s > end {
                break;
            }
            end = end.max(e);
            self.ooo.remove(&s);
        }
        self.ooo.insert(start, end);
        SackBlock { start, end }
    }
}
