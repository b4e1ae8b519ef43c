//! CPU-time stopwatch for solver regions.
//!
//! Solvers run on a single thread, so the calling thread's CPU clock measures
//! exactly the solver's work even when other runs share the process.

use std::time::Duration;

/// CPU time consumed so far by the calling thread.
#[cfg(unix)]
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return fallback();
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[cfg(not(unix))]
pub fn thread_cpu_time() -> Duration {
    fallback()
}

fn fallback() -> Duration {
    use std::sync::OnceLock;
    use std::time::Instant;
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed()
}

/// Accumulates CPU time over explicitly bracketed regions.
#[derive(Clone, Debug, Default)]
pub struct CpuStopwatch {
    total: Duration,
    started: Option<Duration>,
}

impl CpuStopwatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start(&mut self) {
        self.started = Some(thread_cpu_time());
    }

    pub fn stop(&mut self) {
        if let Some(t0) = self.started.take() {
            self.total += thread_cpu_time().saturating_sub(t0);
        }
    }

    /// Accumulated seconds, excluding any region still open.
    pub fn seconds(&self) -> f64 {
        self.total.as_secs_f64()
    }
}
