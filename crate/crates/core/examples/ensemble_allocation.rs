//! Walks one ensemble through joins, acks, a loss, a timeout and leaves,
//! printing each member's share after every step.

use fairtcp_sim::ensemble::{EnsembleRegistry, GrowthMode, HostPair, InitialState};
use fairtcp_sim::tcp::{RtoBounds, RttEstimator, MSS};
use fairtcp_sim::SimTime;

fn show(reg: &EnsembleRegistry, pair: HostPair, what: &str) {
    let Some(s) = reg.snapshot(pair) else {
        println!("{what:<28} ensemble gone");
        return;
    };
    let ecb = reg.get(pair).expect("live");
    let shares: Vec<String> = ecb
        .members()
        .map(|c| {
            let sh = reg.allocate_share(pair, c).expect("member");
            format!("{c}:{}", sh.cwnd / MSS as u64)
        })
        .collect();
    println!(
        "{what:<28} cwnd {:>3} ssthresh {:>3} ref_cnt {}  shares [{}]",
        s.cwnd / MSS as u64,
        s.ssthresh / MSS as u64,
        s.ref_cnt,
        shares.join(" ")
    );
}

fn main() {
    let m = MSS as u64;
    let mut reg = EnsembleRegistry::new(MSS, RtoBounds::default(), GrowthMode::PerMember);
    let pair = HostPair::new(1, 2);
    let init = InitialState {
        cwnd: 2 * m,
        ssthresh: 32 * m,
        rtt: RttEstimator::new(SimTime::from_secs(1)),
    };

    reg.join(pair, 0, init).unwrap();
    show(&reg, pair, "conn 0 creates ensemble");
    for _ in 0..38 {
        reg.on_member_ack(pair, 0, m).unwrap();
    }
    show(&reg, pair, "38 acks on conn 0");
    for c in 1..4 {
        reg.join(pair, c, init).unwrap();
    }
    show(&reg, pair, "conns 1-3 join");

    let mut now = SimTime::from_secs(1);
    reg.report_rtt(pair, 2, SimTime::from_millis(9), SimTime::from_millis(2)).unwrap();
    reg.on_member_loss(pair, 1, now).unwrap();
    show(&reg, pair, "loss on conn 1");
    now = now + SimTime::from_millis(1);
    let applied = reg.on_member_loss(pair, 3, now).unwrap();
    show(&reg, pair, &format!("loss on conn 3 (applied {applied})"));

    for _ in 0..40 {
        for c in 0..4 {
            reg.on_member_ack(pair, c, m).unwrap();
        }
    }
    show(&reg, pair, "40 acks per member");
    reg.on_member_timeout(pair, 2, now + SimTime::from_secs(1)).unwrap();
    show(&reg, pair, "timeout on conn 2");

    for c in [3, 0, 1, 2] {
        reg.leave(pair, c).unwrap();
        show(&reg, pair, &format!("conn {c} leaves"));
    }
    println!("ensemble accesses: {}", reg.accesses());
}
