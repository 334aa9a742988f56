//! Ensemble control blocks: congestion and RTT state shared by every
//! connection between one pair of hosts.
//!
//! Member connections keep only their reliability state (sequence numbers,
//! SACK scoreboard, retransmission timer). The window, slow-start threshold
//! and RTT estimate live in the [`Ecb`], and each member is allocated
//!
//! ```text
//! conn_cwnd     = ecb_cwnd / ref_cnt
//! conn_ssthresh = ecb_ssthresh / ref_cnt
//! conn_srtt     = ecb_srtt
//! conn_rttvar   = ecb_rttvar
//! ```
//!
//! Window shares are handed out in whole-MSS granules. When `ecb_cwnd`
//! does not divide evenly, members with the lowest connection ids receive
//! one extra granule and the sub-MSS residue goes to the first member
//! without one, so shares differ by at most one MSS and sum to `ecb_cwnd`.
//!
//! A loss reported by any member halves the aggregate. Reductions closer
//! than one smoothed RTT to the previous one, and triggered by a different
//! member, are treated as the same congestion event and skipped.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::EnsembleError;
use crate::sim::SimTime;
use crate::tcp::rtt::{rto_from, RtoBounds, RttEstimator};

/// Key of an ensemble: (local host, remote host).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HostPair {
    pub local: u32,
    pub remote: u32,
}

impl HostPair {
    pub fn new(local: u32, remote: u32) -> Self {
        HostPair { local, remote }
    }
}

/// How the aggregate window grows in congestion avoidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowthMode {
    /// Each member ack adds `MSS*MSS/(ecb_cwnd/ref_cnt)`: the aggregate
    /// gains about `ref_cnt` MSS per RTT, like `ref_cnt` Reno flows.
    #[default]
    PerMember,
    /// Each member ack adds `MSS*MSS/ecb_cwnd`: the aggregate behaves like
    /// a single Reno flow.
    AggregateOneFlow,
}

impl GrowthMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GrowthMode::PerMember => "per_member",
            GrowthMode::AggregateOneFlow => "aggregate_one_flow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_member" => Some(GrowthMode::PerMember),
            "aggregate_one_flow" => Some(GrowthMode::AggregateOneFlow),
            _ => None,
        }
    }
}

/// Values a connection brings when it creates a new ensemble.
#[derive(Debug, Clone, Copy)]
pub struct InitialState {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub rtt: RttEstimator,
}

/// Per-member allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub srtt: Option<SimTime>,
    pub rttvar: Option<SimTime>,
    pub rto: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcbSnapshot {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub ref_cnt: usize,
    pub srtt: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct Ecb {
    host_pair: HostPair,
    cwnd: u64,
    ssthresh: u64,
    rtt: RttEstimator,
    members: BTreeSet<usize>,
    growth_mode: GrowthMode,
    last_reduction: Option<(SimTime, usize)>,
    reductions: u64,
    coalesced: u64,
}

impl Ecb {
    pub fn host_pair(&self) -> HostPair {
        self.host_pair
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> u64 {
        self.ssthresh
    }

    pub fn ref_cnt(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    /// Multiplicative decreases applied / skipped as part of an earlier event.
    pub fn reduction_counts(&self) -> (u64, u64) {
        (self.reductions, self.coalesced)
    }

    fn snapshot(&self) -> EcbSnapshot {
        EcbSnapshot {
            cwnd: self.cwnd,
            ssthresh: self.ssthresh,
            ref_cnt: self.ref_cnt(),
            srtt: self.rtt.srtt(),
        }
    }

    fn clamp(&mut self, mss: u64) {
        let n = self.ref_cnt() as u64;
        self.cwnd = self.cwnd.max(n * mss);
        self.ssthresh = self.ssthresh.max(2 * n * mss);
    }

    fn share(&self, conn: usize, mss: u64) -> Option<Share> {
        let rank = self.members.range(..conn).count();
        if !self.members.contains(&conn) {
            return None;
        }
        let n = self.ref_cnt() as u64;
        let granules = self.cwnd / mss;
        let residue = self.cwnd % mss;
        let base = granules / n;
        let extra = granules % n;
        let rank = rank as u64;
        let mut cwnd = base * mss;
        if rank < extra {
            cwnd += mss;
        } else if rank == extra {
            cwnd += residue;
        }
        Some(Share {
            cwnd: cwnd.max(mss),
            ssthresh: self.ssthresh / n,
            srtt: self.rtt.srtt(),
            rttvar: self.rtt.rttvar(),
            rto: self.rtt.rto(),
        })
    }
}

/// All ensembles on one host, keyed by host pair.
#[derive(Debug)]
pub struct EnsembleRegistry {
    ecbs: BTreeMap<HostPair, Ecb>,
    mss: u64,
    bounds: RtoBounds,
    growth_mode: GrowthMode,
    accesses: Cell<u64>,
}

impl EnsembleRegistry {
    pub fn new(mss: u32, bounds: RtoBounds, growth_mode: GrowthMode) -> Self {
        EnsembleRegistry {
            ecbs: BTreeMap::new(),
            mss: mss as u64,
            bounds,
            growth_mode,
            accesses: Cell::new(0),
        }
    }

    /// Number of calls into the registry. Stays zero when no connection
    /// runs in ensemble mode.
    pub fn accesses(&self) -> u64 {
        self.accesses.get()
    }

    fn touch(&self) {
        self.accesses.set(self.accesses.get() + 1);
    }

    pub fn get(&self, pair: HostPair) -> Option<&Ecb> {
        self.ecbs.get(&pair)
    }

    pub fn len(&self) -> usize {
        self.ecbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ecbs.is_empty()
    }

    pub fn snapshot(&self, pair: HostPair) -> Option<EcbSnapshot> {
        self.ecbs.get(&pair).map(Ecb::snapshot)
    }

    fn member_mut(&mut self, pair: HostPair, conn: usize) -> Result<&mut Ecb, EnsembleError> {
        self.touch();
        match self.ecbs.get_mut(&pair) {
            Some(ecb) if ecb.members.contains(&conn) => Ok(ecb),
            _ => Err(EnsembleError::NotMember {
                conn,
                pair: (pair.local, pair.remote),
            }),
        }
    }

    /// Adds `conn` to the ensemble for `pair`, creating it from `init` if
    /// none exists. An existing ensemble keeps its values; only the
    /// `ref_cnt * MSS` floor on the window is re-applied.
    pub fn join(&mut self, pair: HostPair, conn: usize, init: InitialState) -> Result<(), EnsembleError> {
        self.touch();
        let mss = self.mss;
        match self.ecbs.get_mut(&pair) {
            Some(ecb) => {
                if !ecb.members.insert(conn) {
                    return Err(EnsembleError::AlreadyMember { conn });
                }
                ecb.clamp(mss);
            }
            None => {
                let mut ecb = Ecb {
                    host_pair: pair,
                    cwnd: init.cwnd,
                    ssthresh: init.ssthresh,
                    rtt: init.rtt,
                    members: BTreeSet::from([conn]),
                    growth_mode: self.growth_mode,
                    last_reduction: None,
                    reductions: 0,
                    coalesced: 0,
                };
                ecb.clamp(mss);
                self.ecbs.insert(pair, ecb);
            }
        }
        Ok(())
    }

    /// Removes `conn`. The last member's departure destroys the ensemble;
    /// nothing is cached for later joins.
    pub fn leave(&mut self, pair: HostPair, conn: usize) -> Result<(), EnsembleError> {
        let mss = self.mss;
        let ecb = self.member_mut(pair, conn)?;
        ecb.members.remove(&conn);
        if ecb.members.is_empty() {
            self.ecbs.remove(&pair);
        } else {
            ecb.clamp(mss);
        }
        Ok(())
    }

    pub fn allocate_share(&self, pair: HostPair, conn: usize) -> Result<Share, EnsembleError> {
        self.touch();
        self.ecbs
            .get(&pair)
            .and_then(|ecb| ecb.share(conn, self.mss))
            .ok_or(EnsembleError::NotMember {
                conn,
                pair: (pair.local, pair.remote),
            })
    }

    /// Aggregate window growth for `newly_acked` bytes acknowledged to a
    /// member that is not in loss recovery.
    pub fn on_member_ack(&mut self, pair: HostPair, conn: usize, newly_acked: u64) -> Result<(), EnsembleError> {
        let mss = self.mss;
        let ecb = self.member_mut(pair, conn)?;
        if newly_acked == 0 {
            return Ok(());
        }
        if ecb.cwnd < ecb.ssthresh {
            ecb.cwnd += newly_acked.min(mss);
        } else {
            let per_flow = match ecb.growth_mode {
                GrowthMode::PerMember => ecb.cwnd / ecb.ref_cnt() as u64,
                GrowthMode::AggregateOneFlow => ecb.cwnd,
            };
            ecb.cwnd += (mss * mss / per_flow.max(1)).max(1);
        }
        Ok(())
    }

    /// Triple-dupack loss on a member. Returns whether the aggregate was
    /// reduced (false when folded into a recent reduction).
    pub fn on_member_loss(&mut self, pair: HostPair, conn: usize, now: SimTime) -> Result<bool, EnsembleError> {
        let mss = self.mss;
        let ecb = self.member_mut(pair, conn)?;
        let window = ecb.rtt.srtt().unwrap_or(SimTime::ZERO);
        if let Some((at, by)) = ecb.last_reduction {
            if by != conn && now.saturating_sub(at) < window {
                ecb.coalesced += 1;
                return Ok(false);
            }
        }
        let n = ecb.ref_cnt() as u64;
        ecb.ssthresh = (ecb.cwnd / 2).max(2 * n * mss);
        ecb.cwnd = ecb.ssthresh;
        ecb.last_reduction = Some((now, conn));
        ecb.reductions += 1;
        Ok(true)
    }

    /// Retransmission timeout on a member: every member restarts from one
    /// MSS. The timer backoff is kept by the member itself.
    pub fn on_member_timeout(&mut self, pair: HostPair, conn: usize, now: SimTime) -> Result<(), EnsembleError> {
        let mss = self.mss;
        let ecb = self.member_mut(pair, conn)?;
        let n = ecb.ref_cnt() as u64;
        ecb.ssthresh = (ecb.cwnd / 2).max(2 * n * mss);
        ecb.cwnd = n * mss;
        ecb.last_reduction = Some((now, conn));
        ecb.reductions += 1;
        Ok(())
    }

    /// Overwrites the shared RTT estimate with a member's latest values.
    pub fn report_rtt(&mut self, pair: HostPair, conn: usize, srtt: SimTime, rttvar: SimTime) -> Result<(), EnsembleError> {
        let bounds = self.bounds;
        let ecb = self.member_mut(pair, conn)?;
        ecb.rtt = RttEstimator::from_parts(srtt, rttvar, rto_from(srtt, rttvar, bounds));
        Ok(())
    }

    /// The shared estimator as seen by a member.
    pub fn rtt(&self, pair: HostPair, conn: usize) -> Result<RttEstimator, EnsembleError> {
        self.touch();
        match self.ecbs.get(&pair) {
            Some(ecb) if ecb.members.contains(&conn) => Ok(ecb.rtt),
            _ => Err(EnsembleError::NotMember {
                conn,
                pair: (pair.local, pair.remote),
            }),
        }
    }

    #[cfg(test)]
    pub(crate) fn force_window(&mut self, pair: HostPair, cwnd: u64, ssthresh: u64) {
        let ecb = self.ecbs.get_mut(&pair).expect("ensemble exists");
        ecb.cwnd = cwnd;
        ecb.ssthresh = ssthresh;
    }
}
