use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// Time source for rate limiting, backoff and record timestamps.
pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
    fn unix_seconds(&self) -> u64;
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn unix_seconds(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
    }
}

/// Clock that only moves when slept on. Records every sleep.
#[derive(Default)]
pub struct ManualClock {
    state: Mutex<(Duration, Vec<Duration>)>,
    epoch: u64,
}

impl ManualClock {
    pub fn at_unix(epoch: u64) -> Self {
        ManualClock { state: Mutex::default(), epoch }
    }

    pub fn advance(&self, d: Duration) {
        self.state.lock().expect("clock lock").0 += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().expect("clock lock").1.clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        self.state.lock().expect("clock lock").0
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().expect("clock lock");
        s.0 += d;
        s.1.push(d);
    }

    fn unix_seconds(&self) -> u64 {
        self.epoch + self.now().as_secs()
    }
}
