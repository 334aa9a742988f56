//! Smoothed RTT and retransmission timeout (Jacobson/Karels).
//!
//! ```text
//! first sample:  srtt = s, rttvar = s/2
//! afterwards:    rttvar = 3/4 rttvar + 1/4 |s - srtt|
//!                srtt   = 7/8 srtt   + 1/8 s
//! rto = clamp(srtt + 4 rttvar, min_rto, max_rto)
//! ```

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RtoBounds {
    pub min: SimTime,
    pub max: SimTime,
}

impl Default for RtoBounds {
    fn default() -> Self {
        RtoBounds {
            min: SimTime::from_millis(200),
            max: SimTime::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RttEstimator {
    srtt: SimTime,
    rttvar: SimTime,
    rto: SimTime,
    initialized: bool,
}

impl RttEstimator {
    pub fn new(initial_rto: SimTime) -> Self {
        RttEstimator {
            srtt: SimTime::ZERO,
            rttvar: SimTime::ZERO,
            rto: initial_rto,
            initialized: false,
        }
    }

    /// Builds an estimator from shared values.
    pub fn from_parts(srtt: SimTime, rttvar: SimTime, rto: SimTime) -> Self {
        RttEstimator {
            srtt,
            rttvar,
            rto,
            initialized: srtt > SimTime::ZERO,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.initialized.then_some(self.srtt)
    }

    pub fn rttvar(&self) -> Option<SimTime> {
        self.initialized.then_some(self.rttvar)
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn update(&mut self, sample: SimTime, bounds: RtoBounds) {
        debug_assert!(sample > SimTime::ZERO);
        if !self.initialized {
            self.srtt = sample;
            self.rttvar = SimTime(sample.0 / 2);
            self.initialized = true;
        } else {
            let err = self.srtt.abs_diff(sample);
            self.rttvar = SimTime((3 * self.rttvar.0 + err.0) / 4);
            self.srtt = SimTime((7 * self.srtt.0 + sample.0) / 8);
        }
        self.rto = rto_from(self.srtt, self.rttvar, bounds);
    }
}

pub fn rto_from(srtt: SimTime, rttvar: SimTime, bounds: RtoBounds) -> SimTime {
    (srtt + SimTime(rttvar.0.saturating_mul(4))).clamp(bounds.min, bounds.max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    #[test]
    fn first_sample_initializes() {
        let mut e = RttEstimator::new(SimTime::from_secs(1));
        assert_eq!(e.srtt(), None);
        e.update(ms(40), RtoBounds::default());
        assert_eq!(e.srtt(), Some(ms(40)));
        assert_eq!(e.rttvar(), Some(ms(20)));
        assert_eq!(e.rto(), ms(120).max(ms(200)));
        let mut low = RttEstimator::new(SimTime::from_secs(1));
        low.update(
            ms(40),
            RtoBounds {
                min: ms(1),
                max: SimTime::from_secs(60),
            },
        );
        assert_eq!(low.rto(), ms(120));
    }

    #[test]
    fn ewma_step() {
        let mut e = RttEstimator::from_parts(ms(100), ms(25), ms(200));
        e.update(ms(140), RtoBounds::default());
        assert_eq!(e.rttvar(), Some(SimTime::from_micros(28_750)));
        assert_eq!(e.srtt(), Some(ms(105)));
    }

    #[test]
    fn constant_samples_converge() {
        let mut e = RttEstimator::new(SimTime::from_secs(1));
        for _ in 0..500 {
            e.update(ms(30), RtoBounds::default());
        }
        assert_eq!(e.srtt(), Some(ms(30)));
        assert!(e.rttvar().unwrap() < SimTime::from_micros(1));
        assert_eq!(e.rto(), ms(200));
    }
}
