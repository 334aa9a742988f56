//! WAN path model for the three-node testbed: initiator, router, target.
//!
//! Each direction is two links. The host access links are lossless and
//! undelayed with an unbounded host queue; the router egress links carry the
//! emulated propagation delay, a drop-tail queue and Bernoulli loss.

use std::collections::VecDeque;

use crate::error::SimError;
use crate::sim::{streams, RngStream, SimTime};
use crate::tcp::Segment;

/// Ethernet frame size.
pub const FRAME_BYTES: u32 = 1500;
/// TCP/IP header bytes charged to every packet.
pub const HEADER_BYTES: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Initiator,
    Router,
    Target,
}

impl Node {
    pub fn id(self) -> u32 {
        match self {
            Node::Initiator => 0,
            Node::Router => 1,
            Node::Target => 2,
        }
    }

    pub fn peer(self) -> Node {
        match self {
            Node::Initiator => Node::Target,
            Node::Target => Node::Initiator,
            Node::Router => Node::Router,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub src: Node,
    pub dst: Node,
    pub conn: usize,
    pub size_bytes: u32,
    pub segment: Segment,
    pub enqueue_time: SimTime,
}

impl Packet {
    pub fn new(src: Node, dst: Node, conn: usize, segment: Segment, now: SimTime) -> Self {
        Packet {
            src,
            dst,
            conn,
            size_bytes: segment.len + HEADER_BYTES,
            segment,
            enqueue_time: now,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub bandwidth_bps: u64,
    pub one_way_delay: SimTime,
    pub queue_capacity_pkts: usize,
    pub loss_prob: f64,
}

impl LinkConfig {
    pub fn serialization(&self, size_bytes: u32) -> SimTime {
        SimTime(size_bytes as u64 * 8 * 1_000_000_000 / self.bandwidth_bps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    QueueFull,
    RandomLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    DeliveredAt(SimTime),
    Dropped(DropReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub offered: u64,
    pub delivered: u64,
    pub random_loss: u64,
    pub queue_full: u64,
}

#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    busy_until: SimTime,
    // serialization start times of packets not yet being serialized
    waiting: VecDeque<SimTime>,
    rng: Option<RngStream>,
    stats: LinkStats,
}

impl Link {
    /// `rng` is required when `loss_prob > 0`.
    pub fn new(cfg: LinkConfig, rng: Option<RngStream>) -> Result<Self, SimError> {
        if cfg.bandwidth_bps == 0 {
            return Err(SimError::Config("link bandwidth must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.loss_prob) {
            return Err(SimError::Config(format!(
                "loss probability {} outside [0, 1]",
                cfg.loss_prob
            )));
        }
        if cfg.loss_prob > 0.0 && rng.is_none() {
            return Err(SimError::Config("lossy link needs a random stream".into()));
        }
        Ok(Link {
            cfg,
            busy_until: SimTime::ZERO,
            waiting: VecDeque::new(),
            rng,
            stats: LinkStats::default(),
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Packets waiting behind the one currently on the wire.
    pub fn queue_len(&mut self, now: SimTime) -> usize {
        while self.waiting.front().is_some_and(|&start| start <= now) {
            self.waiting.pop_front();
        }
        self.waiting.len()
    }

    pub fn transmit(&mut self, now: SimTime, pkt: &Packet) -> Result<Delivery, SimError> {
        self.transmit_bytes(now, pkt.size_bytes)
    }

    pub fn transmit_bytes(&mut self, now: SimTime, size_bytes: u32) -> Result<Delivery, SimError> {
        if size_bytes > FRAME_BYTES {
            return Err(SimError::Config(format!(
                "packet of {size_bytes} bytes exceeds the {FRAME_BYTES}-byte frame"
            )));
        }
        self.stats.offered += 1;
        if self.cfg.loss_prob > 0.0 {
            let rng = self.rng.as_mut().expect("checked in Link::new");
            if rng.uniform() < self.cfg.loss_prob {
                self.stats.random_loss += 1;
                return Ok(Delivery::Dropped(DropReason::RandomLoss));
            }
        }
        let start = now.max(self.busy_until);
        if start > now {
            if self.queue_len(now) >= self.cfg.queue_capacity_pkts {
                self.stats.queue_full += 1;
                return Ok(Delivery::Dropped(DropReason::QueueFull));
            }
            self.waiting.push_back(start);
        }
        let finish = start + self.cfg.serialization(size_bytes);
        self.busy_until = finish;
        self.stats.delivered += 1;
        Ok(Delivery::DeliveredAt(finish + self.cfg.one_way_delay))
    }
}

/// Round-trip time of a `size_bytes` packet over `forward` followed by a
/// 40-byte ACK over `reverse`, on idle links.
pub fn path_rtt(forward: [&LinkConfig; 2], reverse: [&LinkConfig; 2], size_bytes: u32) -> SimTime {
    let fwd = forward
        .iter()
        .fold(SimTime::ZERO, |t, l| t + l.serialization(size_bytes) + l.one_way_delay);
    reverse
        .iter()
        .fold(fwd, |t, l| t + l.serialization(HEADER_BYTES) + l.one_way_delay)
}

/// User-facing description of the emulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub bandwidth_bps: u64,
    /// Delay added by the router, in milliseconds.
    pub delay_ms: f64,
    /// When false, `delay_ms` is a round-trip figure split across directions.
    pub delay_is_one_way: bool,
    pub loss_prob: f64,
    pub router_queue_pkts: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            bandwidth_bps: 1_000_000_000,
            delay_ms: 0.0,
            delay_is_one_way: true,
            loss_prob: 0.027,
            router_queue_pkts: 100,
        }
    }
}

impl PathConfig {
    pub fn router_one_way_delay(&self) -> SimTime {
        let ms = if self.delay_is_one_way {
            self.delay_ms
        } else {
            self.delay_ms / 2.0
        };
        SimTime::from_secs_f64(ms / 1e3)
    }

    pub fn access_link(&self) -> LinkConfig {
        LinkConfig {
            bandwidth_bps: self.bandwidth_bps,
            one_way_delay: SimTime::ZERO,
            queue_capacity_pkts: usize::MAX,
            loss_prob: 0.0,
        }
    }

    pub fn router_egress(&self) -> LinkConfig {
        LinkConfig {
            bandwidth_bps: self.bandwidth_bps,
            one_way_delay: self.router_one_way_delay(),
            queue_capacity_pkts: self.router_queue_pkts,
            loss_prob: self.loss_prob,
        }
    }

    /// Idle-path RTT for a full data packet and its ACK.
    pub fn rtt(&self, size_bytes: u32) -> SimTime {
        let a = self.access_link();
        let r = self.router_egress();
        path_rtt([&a, &r], [&a, &r], size_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkId {
    InitiatorToRouter = 0,
    RouterToTarget = 1,
    TargetToRouter = 2,
    RouterToInitiator = 3,
}

impl LinkId {
    /// Node at the receiving end of the link.
    pub fn far_end(self) -> Node {
        match self {
            LinkId::InitiatorToRouter | LinkId::TargetToRouter => Node::Router,
            LinkId::RouterToTarget => Node::Target,
            LinkId::RouterToInitiator => Node::Initiator,
        }
    }
}

/// The four directed links of the testbed.
#[derive(Debug, Clone)]
pub struct Topology {
    links: [Link; 4],
}

impl Topology {
    pub fn new(path: &PathConfig, seed: u64) -> Result<Self, SimError> {
        let lossy = path.loss_prob > 0.0;
        let stream = |id| lossy.then(|| RngStream::new(seed, id));
        Ok(Topology {
            links: [
                Link::new(path.access_link(), None)?,
                Link::new(path.router_egress(), stream(streams::LOSS_TO_TARGET))?,
                Link::new(path.access_link(), None)?,
                Link::new(path.router_egress(), stream(streams::LOSS_TO_INITIATOR))?,
            ],
        })
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id as usize]
    }

    pub fn link_mut(&mut self, id: LinkId) -> &mut Link {
        &mut self.links[id as usize]
    }

    /// Link a packet takes out of `at` on its way to `dst`.
    pub fn next_hop(at: Node, dst: Node) -> LinkId {
        match (at, dst) {
            (Node::Initiator, _) => LinkId::InitiatorToRouter,
            (Node::Target, _) => LinkId::TargetToRouter,
            (Node::Router, Node::Target) => LinkId::RouterToTarget,
            (Node::Router, _) => LinkId::RouterToInitiator,
        }
    }

    /// Combined stats of the two lossy router egress links.
    pub fn router_stats(&self) -> LinkStats {
        let a = self.link(LinkId::RouterToTarget).stats();
        let b = self.link(LinkId::RouterToInitiator).stats();
        LinkStats {
            offered: a.offered + b.offered,
            delivered: a.delivered + b.delivered,
            random_loss: a.random_loss + b.random_loss,
            queue_full: a.queue_full + b.queue_full,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gig(delay_ms: u64, cap: usize, loss: f64) -> LinkConfig {
        LinkConfig {
            bandwidth_bps: 1_000_000_000,
            one_way_delay: SimTime::from_millis(delay_ms),
            queue_capacity_pkts: cap,
            loss_prob: loss,
        }
    }

    #[test]
    fn full_frame_arrival_time() {
        let mut l = Link::new(gig(4, 100, 0.0), None).unwrap();
        let now = SimTime::from_millis(1);
        let d = l.transmit_bytes(now, 1500).unwrap();
        assert_eq!(
            d,
            Delivery::DeliveredAt(now + SimTime::from_micros(12) + SimTime::from_millis(4))
        );
    }

    #[test]
    fn back_to_back_packets_queue_fifo() {
        let mut l = Link::new(gig(0, 1, 0.0), None).unwrap();
        let a = l.transmit_bytes(SimTime::ZERO, 1500).unwrap();
        let b = l.transmit_bytes(SimTime::ZERO, 1500).unwrap();
        assert_eq!(a, Delivery::DeliveredAt(SimTime::from_micros(12)));
        assert_eq!(b, Delivery::DeliveredAt(SimTime::from_micros(24)));
        // the single queue slot is taken
        let c = l.transmit_bytes(SimTime::ZERO, 1500).unwrap();
        assert_eq!(c, Delivery::Dropped(DropReason::QueueFull));
        // once the second packet is on the wire the slot frees up
        let d = l.transmit_bytes(SimTime::from_micros(13), 1500).unwrap();
        assert_eq!(d, Delivery::DeliveredAt(SimTime::from_micros(36)));
    }

    #[test]
    fn certain_loss_drops_everything() {
        let mut l = Link::new(gig(0, 100, 1.0), Some(RngStream::new(1, 1))).unwrap();
        for i in 0..100 {
            assert_eq!(
                l.transmit_bytes(SimTime::from_millis(i), 1500).unwrap(),
                Delivery::Dropped(DropReason::RandomLoss)
            );
        }
    }

    #[test]
    fn zero_bandwidth_rejected() {
        let mut cfg = gig(0, 1, 0.0);
        cfg.bandwidth_bps = 0;
        assert!(Link::new(cfg, None).is_err());
    }

    #[test]
    fn oversize_packet_rejected() {
        let mut l = Link::new(gig(0, 1, 0.0), None).unwrap();
        assert!(l.transmit_bytes(SimTime::ZERO, 1501).is_err());
    }

    #[test]
    fn empirical_loss_rate() {
        let mut l = Link::new(gig(0, usize::MAX, 0.027), Some(RngStream::new(3, 1))).unwrap();
        let n = 200_000u64;
        for i in 0..n {
            l.transmit_bytes(SimTime::from_micros(i * 20), 1500).unwrap();
        }
        let rate = l.stats().random_loss as f64 / n as f64;
        assert!((rate - 0.027).abs() < 0.003, "rate {rate}");
    }

    #[test]
    fn no_queueing_below_line_rate() {
        let mut l = Link::new(gig(2, 100, 0.0), None).unwrap();
        for i in 0..1000u64 {
            let now = SimTime::from_micros(i * 13);
            let d = l.transmit_bytes(now, 1500).unwrap();
            assert_eq!(
                d,
                Delivery::DeliveredAt(now + SimTime::from_micros(12) + SimTime::from_millis(2))
            );
        }
    }

    #[test]
    fn rtt_of_undelayed_path() {
        let a = gig(0, 100, 0.0);
        let rtt = path_rtt([&a, &a], [&a, &a], 1500);
        assert_eq!(rtt, SimTime::from_nanos(2 * 12_000 + 2 * 320));
    }

    #[test]
    fn rtt_with_delay_on_every_hop() {
        let a = gig(4, 100, 0.0);
        assert!(path_rtt([&a, &a], [&a, &a], 1500) >= SimTime::from_millis(16));
        let b = gig(8, 100, 0.0);
        let z = gig(0, 100, 0.0);
        let prop = |l: &LinkConfig| path_rtt([l, l], [l, l], 1500) - path_rtt([&z, &z], [&z, &z], 1500);
        assert_eq!(prop(&b), SimTime(prop(&a).0 * 2));
    }

    #[test]
    fn round_trip_delay_is_split() {
        let mut p = PathConfig {
            delay_ms: 4.0,
            ..PathConfig::default()
        };
        assert_eq!(p.router_one_way_delay(), SimTime::from_millis(4));
        p.delay_is_one_way = false;
        assert_eq!(p.router_one_way_delay(), SimTime::from_millis(2));
    }

    #[test]
    fn routing() {
        assert_eq!(Topology::next_hop(Node::Initiator, Node::Target), LinkId::InitiatorToRouter);
        assert_eq!(Topology::next_hop(Node::Router, Node::Target), LinkId::RouterToTarget);
        assert_eq!(Topology::next_hop(Node::Router, Node::Initiator), LinkId::RouterToInitiator);
        assert_eq!(LinkId::RouterToInitiator.far_end(), Node::Initiator);
    }
}
