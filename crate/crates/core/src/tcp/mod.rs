//! Reno congestion control with SACK-based loss recovery.
//!
//! The congestion window and RTT estimate are either owned by the
//! connection or borrowed from an [`EnsembleRegistry`](crate::ensemble::EnsembleRegistry).

pub mod rtt;
mod tcb;

use arrayvec::ArrayVec;

use crate::sim::SimTime;

pub use rtt::{RtoBounds, RttEstimator};
pub use tcb::{
    CongestionRef, CwndEvent, OwnCongestionState, RetxKind, Tcb, TcpError, TcpOutput, TcpStats, TimerCmd,
    Transmission,
};

/// 1500-byte frames less 40 bytes of TCP/IP headers.
pub const MSS: u32 = 1460;
pub const MAX_SACK_BLOCKS: usize = 4;

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SackBlock {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub data: bool,
    pub ack: bool,
    pub fin: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub seq: u64,
    pub len: u32,
    pub ack: u64,
    pub sack: ArrayVec<SackBlock, MAX_SACK_BLOCKS>,
    pub flags: Flags,
}

impl Segment {
    pub fn data(seq: u64, len: u32) -> Self {
        Segment {
            seq,
            len,
            ack: 0,
            sack: ArrayVec::new(),
            flags: Flags {
                data: true,
                ..Flags::default()
            },
        }
    }

    pub fn pure_ack(ack: u64, sack: &[SackBlock]) -> Self {
        Segment {
            seq: 0,
            len: 0,
            ack,
            sack: sack.iter().copied().take(MAX_SACK_BLOCKS).collect(),
            flags: Flags {
                ack: true,
                ..Flags::default()
            },
        }
    }

    pub fn end(&self) -> u64 {
        self.seq + self.len as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpConfig {
    pub mss: u32,
    pub initial_cwnd: u64,
    pub initial_ssthresh: u64,
    /// Receive window advertised by the peer; fixed for the whole run.
    pub rwnd: u64,
    pub send_buffer: u64,
    pub initial_rto: SimTime,
    pub rto_bounds: RtoBounds,
    pub dupack_threshold: u32,
    /// Record `(acked, cwnd)` after every ack (standard mode only).
    pub trace_cwnd: bool,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            mss: MSS,
            initial_cwnd: 2 * MSS as u64,
            initial_ssthresh: 512 * 1024,
            rwnd: 512 * 1024,
            send_buffer: 512 * 1024,
            initial_rto: SimTime::from_secs(1),
            rto_bounds: RtoBounds::default(),
            dupack_threshold: 3,
            trace_cwnd: false,
        }
    }
}

impl TcpConfig {
    pub(crate) fn mss64(&self) -> u64 {
        self.mss as u64
    }
}
