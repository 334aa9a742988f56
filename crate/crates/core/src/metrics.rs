//! Time series and summary statistics.

use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples to summarize")]
    Empty,
    #[error("series {a} and {b} are not sampled at the same instants")]
    Misaligned { a: String, b: String },
    #[error("series {name}: sample at {at} does not follow {prev}")]
    NotIncreasing { name: String, at: SimTime, prev: SimTime },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    name: String,
    samples: Vec<(SimTime, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        MetricSeries {
            name: name.into(),
            samples: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn push(&mut self, at: SimTime, value: f64) -> Result<(), MetricsError> {
        if let Some(&(prev, _)) = self.samples.last() {
            if at <= prev {
                return Err(MetricsError::NotIncreasing {
                    name: self.name.clone(),
                    at,
                    prev,
                });
            }
        }
        self.samples.push((at, value));
        Ok(())
    }

    pub fn samples(&self) -> &[(SimTime, f64)] {
        &self.samples
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn summary(&self) -> Result<SummaryStats, MetricsError> {
        summarize(self.values())
    }

    /// Same samples with every value scaled, e.g. bytes to segments.
    pub fn scaled(&self, factor: f64) -> MetricSeries {
        MetricSeries {
            name: self.name.clone(),
            samples: self.samples.iter().map(|&(t, v)| (t, v * factor)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    /// `100 * sd / mean`; undefined for a zero mean.
    pub pct_sd: Option<f64>,
    pub n: usize,
}

pub fn summarize(values: impl IntoIterator<Item = f64>) -> Result<SummaryStats, MetricsError> {
    // Welford, for long traces
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let sd = (m2 / n as f64).max(0.0).sqrt();
    Ok(SummaryStats {
        mean,
        sd,
        pct_sd: (mean != 0.0).then(|| 100.0 * sd / mean),
        n,
    })
}

/// Pointwise `a - b`.
pub fn window_difference(a: &MetricSeries, b: &MetricSeries) -> Result<(MetricSeries, SummaryStats), MetricsError> {
    let misaligned = || MetricsError::Misaligned {
        a: a.name.clone(),
        b: b.name.clone(),
    };
    if a.len() != b.len() {
        return Err(misaligned());
    }
    let mut diff = MetricSeries::new(format!("{}-{}", a.name, b.name));
    for (&(ta, va), &(tb, vb)) in a.samples.iter().zip(&b.samples) {
        if ta != tb {
            return Err(misaligned());
        }
        diff.samples.push((ta, va - vb));
    }
    let stats = diff.summary()?;
    Ok((diff, stats))
}

/// Largest `max - min` across the series at any common sample instant.
pub fn max_spread(series: &[MetricSeries]) -> Result<f64, MetricsError> {
    let Some(first) = series.first() else {
        return Ok(0.0);
    };
    let mut worst = 0.0f64;
    for (i, &(t, _)) in first.samples.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in series {
            let &(ts, v) = s.samples.get(i).ok_or_else(|| MetricsError::Misaligned {
                a: first.name.clone(),
                b: s.name.clone(),
            })?;
            if ts != t {
                return Err(MetricsError::Misaligned {
                    a: first.name.clone(),
                    b: s.name.clone(),
                });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetransmitCounts {
    pub fast: u64,
    pub timeout: u64,
}

impl RetransmitCounts {
    pub fn total(&self) -> u64 {
        self.fast + self.timeout
    }
}

impl std::ops::AddAssign for RetransmitCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.fast += rhs.fast;
        self.timeout += rhs.timeout;
    }
}

/// Bytes per second of simulated time.
pub fn throughput(bytes: u64, elapsed: SimTime) -> Option<f64> {
    let secs = elapsed.as_secs_f64();
    (secs > 0.0).then(|| bytes as f64 / secs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(name: &str, vals: &[f64]) -> MetricSeries {
        let mut s = MetricSeries::new(name);
        for (i, &v) in vals.iter().enumerate() {
            s.push(SimTime::from_millis(10 * (i as u64 + 1)), v).unwrap();
        }
        s
    }

    #[test]
    fn population_sd() {
        let s = summarize([2.0, 4.0, 6.0]).unwrap();
        assert_eq!(s.mean, 4.0);
        // sqrt(((2-4)^2 + 0 + (6-4)^2) / 3)
        let oracle = (8.0f64 / 3.0).sqrt();
        assert!((s.sd - oracle).abs() < 1e-12);
        assert!((s.sd - 1.633).abs() < 1e-3);
        assert!((s.pct_sd.unwrap() - 100.0 * oracle / 4.0).abs() < 1e-9);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(summarize([7.0]).unwrap().sd, 0.0);
        assert_eq!(summarize(std::iter::empty()), Err(MetricsError::Empty));
        assert_eq!(summarize([0.0, 0.0]).unwrap().pct_sd, None);
    }

    #[test]
    fn pct_sd_convention() {
        // 100 * 4.3 / 13.2
        let pct: f64 = 100.0 * 4.3 / 13.2;
        assert_eq!(pct.round(), 33.0);
    }

    #[test]
    fn constant_series_has_no_spread() {
        let s = series("c", &[5.0; 20]).summary().unwrap();
        assert_eq!(s.sd, 0.0);
    }

    #[test]
    fn difference_of_equal_series_is_zero() {
        let a = series("a", &[1.0, 5.0, 3.0]);
        let (d, st) = window_difference(&a, &a.clone()).unwrap();
        assert!(d.values().all(|v| v == 0.0));
        assert_eq!((st.mean, st.sd), (0.0, 0.0));
    }

    #[test]
    fn anticorrelated_difference_spreads_more() {
        let a = series("a", &[1.0, 3.0, 1.0, 3.0]);
        let b = series("b", &[3.0, 1.0, 3.0, 1.0]);
        let (_, st) = window_difference(&a, &b).unwrap();
        assert!(st.sd > a.summary().unwrap().sd);
        assert_eq!(st.mean, 0.0);
    }

    #[test]
    fn misaligned_series_rejected() {
        let a = series("a", &[1.0, 2.0]);
        let b = series("b", &[1.0]);
        assert!(matches!(window_difference(&a, &b), Err(MetricsError::Misaligned { .. })));
        let mut c = MetricSeries::new("c");
        c.push(SimTime::from_millis(3), 1.0).unwrap();
        c.push(SimTime::from_millis(4), 1.0).unwrap();
        assert!(window_difference(&a, &c).is_err());
    }

    #[test]
    fn timestamps_must_increase() {
        let mut s = MetricSeries::new("s");
        s.push(SimTime::from_millis(10), 1.0).unwrap();
        assert!(s.push(SimTime::from_millis(10), 1.0).is_err());
    }

    #[test]
    fn spread_across_series() {
        let a = series("a", &[1.0, 5.0]);
        let b = series("b", &[2.0, 1.0]);
        let c = series("c", &[1.5, 3.0]);
        assert_eq!(max_spread(&[a, b, c]).unwrap(), 4.0);
    }

    #[test]
    fn throughput_definition() {
        let t = throughput(64 << 20, SimTime::from_secs(8)).unwrap();
        assert_eq!(t, 8.0 * (1 << 20) as f64);
        assert_eq!(throughput(1, SimTime::ZERO), None);
    }
}
