use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::retry::Sleeper;

/// Requests-per-minute limiter. Capacity equals one minute's worth of
/// requests; tokens refill continuously.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<BucketState>,
}

#[derive(Debug)]
struct BucketState {
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn per_minute(requests: u32) -> Self {
        Self::new(requests as f64, requests as f64 / 60.0, Instant::now())
    }

    pub fn new(capacity: f64, per_second: f64, now: Instant) -> Self {
        TokenBucket {
            capacity,
            per_second,
            state: Mutex::new(BucketState {
                tokens: capacity,
                last: now,
            }),
        }
    }

    /// Takes one token if available at `now`; otherwise returns how long to wait.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut s = self.state.lock().expect("bucket lock");
        let elapsed = now.saturating_duration_since(s.last).as_secs_f64();
        s.tokens = (s.tokens + elapsed * self.per_second).min(self.capacity);
        s.last = s.last.max(now);
        if s.tokens >= 1.0 {
            s.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - s.tokens) / self.per_second))
        }
    }

    pub fn acquire(&self, sleeper: &dyn Sleeper) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            sleeper.sleep(wait);
        }
    }
}

/// Caps the number of concurrent requests to one backend.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut n = self.current.lock().expect("in-flight lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
        InFlightPermit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().expect("in-flight lock")
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.current.lock().expect("in-flight lock");
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}
