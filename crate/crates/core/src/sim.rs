//! Deterministic discrete-event engine.
//!
//! Time is an integer count of nanoseconds so that microsecond serialization
//! delays and millisecond propagation delays add without drift. Events that
//! fire at the same instant are processed in insertion order.
//!
//! Random streams use ChaCha8 keyed by the run seed, with the ChaCha stream
//! word set to the stream id. The same `(seed, stream_id)` pair yields the
//! same sequence on every platform.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// Nanoseconds since the start of a simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn abs_diff(self, other: SimTime) -> SimTime {
        SimTime(self.0.abs_diff(other.0))
    }

    /// `self * 2^exp`, saturating.
    pub fn shl_saturating(self, exp: u32) -> SimTime {
        if exp >= 64 {
            return if self.0 == 0 { self } else { SimTime::MAX };
        }
        SimTime(self.0.saturating_mul(1u64 << exp))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}ms", self.as_millis_f64())
    }
}

/// Handle returned by [`EventQueue::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

#[derive(Debug)]
struct Entry<E> {
    fire_at: SimTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.seq) == (other.fire_at, other.seq)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// Bookkeeping used to check that no event is ever lost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueCounters {
    pub scheduled: u64,
    pub processed: u64,
    pub cancelled: u64,
}

/// Ordered event queue with a monotonic clock.
#[derive(Debug)]
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: HashSet<u64>,
    counters: QueueCounters,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            counters: QueueCounters::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn counters(&self) -> QueueCounters {
        self.counters
    }

    /// Live events still waiting in the queue.
    pub fn pending(&self) -> u64 {
        self.heap.len() as u64 - self.cancelled.len() as u64
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> Result<EventId, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                now: self.now,
                fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry {
            fire_at,
            seq,
            payload,
        }));
        self.counters.scheduled += 1;
        Ok(EventId(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> Result<EventId, SimError> {
        self.schedule(self.now + delay, payload)
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq || self.cancelled.contains(&id.0) {
            return false;
        }
        if !self.heap.iter().any(|Reverse(e)| e.seq == id.0) {
            return false;
        }
        self.cancelled.insert(id.0);
        self.counters.cancelled += 1;
        true
    }

    /// Cancel without the liveness scan. The caller guarantees `id` has not
    /// fired yet (e.g. it tracks its own timer handle and clears it on fire).
    pub(crate) fn cancel_pending(&mut self, id: EventId) {
        if self.cancelled.insert(id.0) {
            self.counters.cancelled += 1;
        }
    }

    /// Pops the next live event with `fire_at <= end` and advances the clock
    /// to it.
    pub fn pop_due(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        loop {
            let head = self.heap.peek()?;
            if head.0.fire_at > end {
                return None;
            }
            let Reverse(entry) = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.fire_at >= self.now);
            self.now = entry.fire_at;
            self.counters.processed += 1;
            return Some((entry.fire_at, entry.payload));
        }
    }

    /// Processes every event with `fire_at <= end` in `(fire_at, seq)`
    /// order. The handler may schedule further events, including ones that
    /// fall inside the window. Afterwards the clock reads `max(now, end)`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Self, E) -> Result<(), SimError>,
    {
        if end < self.now {
            return Err(SimError::ScheduleInPast {
                now: self.now,
                fire_at: end,
            });
        }
        let mut n = 0;
        while let Some((_, ev)) = self.pop_due(end) {
            handler(self, ev)?;
            n += 1;
        }
        self.now = self.now.max(end);
        Ok(n)
    }
}

/// One independent pseudo-random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform real in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.gen_range(lo..=hi)
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.gen::<bool>()
    }
}

/// Stream ids, one per stochastic source.
pub mod streams {
    pub const LOSS_TO_TARGET: u64 = 1;
    pub const LOSS_TO_INITIATOR: u64 = 2;
    pub const WORKLOAD_BASE: u64 = 100;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_fires_exactly_at_time() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(4), "a").unwrap();
        let mut seen = Vec::new();
        q.run_until(SimTime::from_millis(10), |q, e| {
            seen.push((q.now(), e));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(SimTime::from_millis(4), "a")]);
    }

    #[test]
    fn fifo_tie_break() {
        let mut q = EventQueue::new();
        let t = SimTime::from_millis(1);
        q.schedule(t, 'A').unwrap();
        q.schedule(t, 'B').unwrap();
        let mut seen = String::new();
        q.run_until(t, |_, e| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, "AB");
    }

    #[test]
    fn cancelled_event_never_runs() {
        let mut q = EventQueue::new();
        let h = q.schedule(SimTime::from_millis(2), 1).unwrap();
        q.schedule(SimTime::from_millis(3), 2).unwrap();
        assert!(q.cancel(h));
        assert!(!q.cancel(h));
        let mut seen = vec![];
        q.run_until(SimTime::from_millis(5), |_, e| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![2]);
        let c = q.counters();
        assert_eq!(c.scheduled, c.processed + c.cancelled + q.pending());
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(SimTime::from_millis(5), |_, _| Ok(())).unwrap();
        assert!(matches!(
            q.schedule(SimTime::from_millis(1), ()),
            Err(SimError::ScheduleInPast { .. })
        ));
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        let n = q.run_until(SimTime::from_millis(10), |_, _| Ok(())).unwrap();
        assert_eq!(n, 0);
        assert_eq!(q.now(), SimTime::from_millis(10));
    }

    #[test]
    fn run_until_stops_at_end() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(1), ()).unwrap();
        q.schedule(SimTime::from_millis(2), ()).unwrap();
        let n = q
            .run_until(SimTime::from_micros(1500), |_, _| Ok(()))
            .unwrap();
        assert_eq!(n, 1);
        assert_eq!(q.now(), SimTime::from_micros(1500));
        assert_eq!(q.pending(), 1);
    }

    #[test]
    fn handler_scheduled_events_run_in_window() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(1), 0u32).unwrap();
        let mut seen = vec![];
        q.run_until(SimTime::from_millis(5), |q, e| {
            seen.push((q.now().as_nanos() / 1_000_000, e));
            if e == 0 {
                q.schedule(SimTime::from_millis(3), 1).unwrap();
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(1, 0), (3, 1)]);
    }

    #[test]
    fn rng_replays() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn rng_mean_is_half() {
        let mut r = RngStream::new(1, 1);
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| r.uniform()).sum();
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    /// Chi-square test of independence on a 10x10 contingency table built
    /// from paired draws of two streams with the same seed.
    #[test]
    fn rng_streams_are_independent() {
        let mut a = RngStream::new(9, 1);
        let mut b = RngStream::new(9, 2);
        let n = 100_000;
        let mut table = [[0u32; 10]; 10];
        for _ in 0..n {
            let i = (a.uniform() * 10.0) as usize;
            let j = (b.uniform() * 10.0) as usize;
            table[i][j] += 1;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u32>() as f64).collect();
        let cols: Vec<f64> = (0..10)
            .map(|j| table.iter().map(|r| r[j]).sum::<u32>() as f64)
            .collect();
        let mut chi2 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let expected = rows[i] * cols[j] / n as f64;
                let d = table[i][j] as f64 - expected;
                chi2 += d * d / expected;
            }
        }
        // 81 degrees of freedom; the 99.9th percentile is about 126.
        assert!(chi2 < 126.0, "chi2 = {chi2}");
        // identical streams would be perfectly dependent
        assert_ne!(RngStream::new(9, 1).uniform(), RngStream::new(9, 2).uniform());
    }
}
