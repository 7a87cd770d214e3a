//! Sliding-window command quota.
//!
//! The firmware allows N commands per rolling window; extra commands are
//! answered with an error and — importantly — do not consume quota, so a
//! client that backs off recovers as soon as old admissions age out. Time is
//! passed in, never read, so tests drive the window with a synthetic clock.

use std::collections::VecDeque;

use super::RateLimitConfig;

#[derive(Debug)]
pub struct RateLimiter {
    quota: usize,
    window_ms: u64,
    admitted: VecDeque<u64>,
}

impl RateLimiter {
    pub fn new(config: RateLimitConfig) -> Self {
        RateLimiter {
            quota: config.quota as usize,
            window_ms: config.window_ms,
            admitted: VecDeque::with_capacity(config.quota as usize),
        }
    }

    /// Admit or reject a command arriving at `now_ms` (monotonic, caller's
    /// choice of epoch). Only admissions are recorded. An admission at time
    /// `t` occupies the window `[t, t + window)`.
    pub fn admit(&mut self, now_ms: u64) -> bool {
        while self
            .admitted
            .front()
            .is_some_and(|&t| t + self.window_ms <= now_ms)
        {
            self.admitted.pop_front();
        }
        if self.admitted.len() < self.quota {
            self.admitted.push_back(now_ms);
            true
        } else {
            false
        }
    }

    /// Admissions still inside the window as of the last `admit` call.
    pub fn in_flight(&self) -> usize {
        self.admitted.len()
    }
}
