//! The emulated path: idle RTT per configured delay, serialization cost, the
//! drop-tail queue under a burst, and the empirical random-loss rate.

use fairtcp_sim::netem::{Delivery, Link, PathConfig};
use fairtcp_sim::sim::RngStream;
use fairtcp_sim::SimTime;

fn main() {
    for delay in [0.0, 2.0, 4.0, 10.0] {
        let p = PathConfig { delay_ms: delay, ..Default::default() };
        println!("delay {delay:>4}ms: idle RTT for a 1500B packet {}", p.rtt(1500));
    }

    let p = PathConfig::default();
    let egress = p.router_egress();
    println!("1500B serializes in {} at {} bit/s", egress.serialization(1500), egress.bandwidth_bps);

    let mut link = Link::new(PathConfig { loss_prob: 0.0, ..p }.router_egress(), None).unwrap();
    let burst: Vec<Delivery> = (0..150).map(|_| link.transmit_bytes(SimTime::ZERO, 1500).unwrap()).collect();
    let dropped = burst.iter().filter(|d| matches!(d, Delivery::Dropped(_))).count();
    println!("150-packet burst into a {}-packet queue: {dropped} dropped", egress.queue_capacity_pkts);

    let mut lossy = Link::new(egress, Some(RngStream::new(7, 1))).unwrap();
    let mut t = SimTime::ZERO;
    for _ in 0..200_000 {
        t += SimTime::from_micros(20);
        lossy.transmit_bytes(t, 1500).unwrap();
    }
    let s = lossy.stats();
    println!(
        "{} packets offered, {} lost at random: rate {:.4} (configured {})",
        s.offered,
        s.random_loss,
        s.random_loss as f64 / s.offered as f64,
        egress.loss_prob
    );
}
