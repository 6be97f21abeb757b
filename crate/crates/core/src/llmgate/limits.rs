use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Exponential backoff: `base · 2^i`, each delay capped at `max_delay`,
/// and the running total never exceeding `ceiling`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub ceiling: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
            ceiling: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { max_retries: 0, ..Default::default() }
    }

    /// Delays between attempts; the last one is truncated to fit the ceiling.
    pub fn delays(&self) -> impl Iterator<Item = Duration> {
        let policy = *self;
        let mut spent = Duration::ZERO;
        (0..policy.max_retries).map_while(move |i| {
            let remaining = policy.ceiling.saturating_sub(spent);
            if remaining.is_zero() {
                return None;
            }
            let exp = policy.base_delay.saturating_mul(2u32.saturating_pow(i));
            let d = exp.min(policy.max_delay).min(remaining);
            spent += d;
            Some(d)
        })
    }
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Token bucket refilled continuously at `rate` requests per second.
pub struct RateLimiter {
    capacity: f64,
    rate: f64,
    bucket: Mutex<Bucket>,
}

impl RateLimiter {
    /// Bucket of one minute's worth of requests (at least one).
    pub fn per_minute(requests_per_minute: f64) -> Self {
        assert!(requests_per_minute > 0.0, "rate must be positive");
        Self::new(requests_per_minute.max(1.0), requests_per_minute / 60.0, Instant::now())
    }

    pub fn new(capacity: f64, rate_per_second: f64, now: Instant) -> Self {
        RateLimiter { capacity, rate: rate_per_second, bucket: Mutex::new(Bucket { tokens: capacity, last: now }) }
    }

    /// Takes a token at `now`, or returns how long until one is available.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut b = self.bucket.lock().expect("rate limiter poisoned");
        let elapsed = now.saturating_duration_since(b.last).as_secs_f64();
        b.tokens = (b.tokens + elapsed * self.rate).min(self.capacity);
        b.last = now.max(b.last);
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - b.tokens) / self.rate))
        }
    }

    pub fn acquire(&self, sleeper: &dyn Sleeper) {
        loop {
            match self.try_acquire_at(Instant::now()) {
                Ok(()) => return,
                Err(wait) => sleeper.sleep(wait),
            }
        }
    }
}

/// Counting semaphore bounding concurrent provider calls.
pub struct InflightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InflightLimit);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().expect("semaphore poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

impl InflightLimit {
    pub fn new(max: usize) -> Self {
        assert!(max > 0, "in-flight limit must be positive");
        InflightLimit { max, current: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().expect("semaphore poisoned");
        while *n >= self.max {
            n = self.freed.wait(n).expect("semaphore poisoned");
        }
        *n += 1;
        Permit(self)
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().expect("semaphore poisoned")
    }
}
