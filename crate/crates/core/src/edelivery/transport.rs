use rand::Rng;

use super::DeliveryError;

/// Uniform per-hop delay in `[min_ms, max_ms]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayModel {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl DelayModel {
    pub fn fixed(ms: u64) -> Self {
        Self { min_ms: ms, max_ms: ms }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        if self.min_ms == self.max_ms {
            self.min_ms
        } else {
            rng.gen_range(self.min_ms..=self.max_ms)
        }
    }
}

/// Half-open interval `[start_ms, end_ms)` during which receiving access
/// points drop everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Downtime {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Downtime {
    pub fn contains(&self, ms: u64) -> bool {
        self.start_ms <= ms && ms < self.end_ms
    }
}

/// Retransmission with exponential backoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub initial_timeout_ms: u64,
    pub backoff_cap_ms: u64,
    /// Retransmissions after the first attempt.
    pub max_retries: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            initial_timeout_ms: 250,
            backoff_cap_ms: 16_000,
            max_retries: 16,
        }
    }
}

impl RetryPolicy {
    /// Timeout after attempt `attempt` (1-based).
    pub fn timeout_after(&self, attempt: u32) -> u64 {
        let shift = attempt.saturating_sub(1).min(32);
        self.initial_timeout_ms
            .saturating_mul(1u64 << shift)
            .min(self.backoff_cap_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub loss: f64,
    pub duplication: f64,
    /// Probability that a transmitted envelope has one bit flipped in flight.
    pub corruption: f64,
    pub delay: DelayModel,
    pub seed: u64,
    pub downtime: Vec<Downtime>,
    pub retry: RetryPolicy,
    /// Bound on remembered message ids at each receiving access point.
    /// `None` keeps every id. A small bound lets a late duplicate through.
    pub dedup_retention: Option<usize>,
    /// Qualified registered delivery: qualified access point certificates and
    /// qualified evidence timestamps.
    pub qualified: bool,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            loss: 0.0,
            duplication: 0.0,
            corruption: 0.0,
            delay: DelayModel { min_ms: 5, max_ms: 50 },
            seed: 0,
            downtime: Vec::new(),
            retry: RetryPolicy::default(),
            dedup_retention: None,
            qualified: false,
        }
    }
}

impl TransportConfig {
    pub fn check(&self) -> Result<(), DeliveryError> {
        for (name, p) in [
            ("loss", self.loss),
            ("duplication", self.duplication),
            ("corruption", self.corruption),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DeliveryError::InvalidConfig(format!("{name} probability {p} outside [0,1]")));
            }
        }
        if self.delay.min_ms > self.delay.max_ms {
            return Err(DeliveryError::InvalidConfig("delay min exceeds max".into()));
        }
        if self.downtime.iter().any(|w| w.start_ms >= w.end_ms) {
            return Err(DeliveryError::InvalidConfig("empty downtime window".into()));
        }
        if self.retry.initial_timeout_ms == 0 {
            return Err(DeliveryError::InvalidConfig("retry timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn is_down(&self, ms: u64) -> bool {
        self.downtime.iter().any(|w| w.contains(ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_up_to_cap() {
        let p = RetryPolicy {
            initial_timeout_ms: 100,
            backoff_cap_ms: 1000,
            max_retries: 16,
        };
        let seq: Vec<u64> = (1..=6).map(|a| p.timeout_after(a)).collect();
        assert_eq!(seq, vec![100, 200, 400, 800, 1000, 1000]);
        assert_eq!(p.timeout_after(60), 1000);
    }

    #[test]
    fn probabilities_are_range_checked() {
        let c = TransportConfig {
            loss: 1.5,
            ..Default::default()
        };
        assert!(c.check().is_err());
        assert!(TransportConfig::default().check().is_ok());
    }
}
