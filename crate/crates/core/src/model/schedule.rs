use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration as StdDuration;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use parking_lot::{Condvar, Mutex};

use super::ModelError;

/// Source of "now" for the scheduler.
pub trait Clock: Send + Sync + 'static {
    fn now(&self) -> DateTime<Utc>;
    /// Blocks for at most `max` or until `deadline`, whichever is sooner.
    fn wait_until(&self, deadline: DateTime<Utc>, max: StdDuration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn wait_until(&self, deadline: DateTime<Utc>, max: StdDuration) {
        let left = (deadline - Utc::now()).to_std().unwrap_or_default();
        std::thread::sleep(left.min(max));
    }
}

/// Manually advanced clock for deterministic tests.
#[derive(Debug)]
pub struct SimulatedClock {
    now: Mutex<DateTime<Utc>>,
    moved: Condvar,
}

impl SimulatedClock {
    pub fn new(start: DateTime<Utc>) -> Arc<Self> {
        Arc::new(SimulatedClock { now: Mutex::new(start), moved: Condvar::new() })
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock() += by;
        self.moved.notify_all();
    }
}

impl Clock for SimulatedClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock()
    }

    fn wait_until(&self, deadline: DateTime<Utc>, max: StdDuration) {
        let mut now = self.now.lock();
        if *now < deadline {
            self.moved.wait_for(&mut now, max);
        }
    }
}

#[derive(Debug, Default)]
struct State {
    pending: u64,
    running: bool,
    runs: u64,
    failures: u64,
    cancelled: bool,
    /// Clock reading the scheduler has fully processed.
    observed: Option<DateTime<Utc>>,
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
    cancelled: AtomicBool,
}

/// Handle to a recurring refresh. Dropping it cancels the schedule.
pub struct RefreshHandle {
    shared: Arc<Shared>,
    clock: Arc<dyn Clock>,
    first_due: DateTime<Utc>,
    threads: Vec<JoinHandle<()>>,
}

/// Midnight UTC of `day_of_year` in `year`; day 366 of a common year is
/// clamped to 31 December.
fn day_in_year(year: i32, day_of_year: u32) -> DateTime<Utc> {
    let last = if NaiveDate::from_ymd_opt(year, 12, 31).is_some_and(|d| d.ordinal() == 366) { 366 } else { 365 };
    let date = NaiveDate::from_yo_opt(year, day_of_year.min(last)).expect("ordinal in range");
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
}

/// Runs `job` first on the next `day_of_year` (midnight UTC, strictly after
/// the clock's current time) and then every `interval_days`. Runs go through
/// a single worker, so a trigger that arrives while a run is active waits
/// for it instead of overlapping.
pub fn schedule_refresh<F>(
    day_of_year: u32,
    interval_days: u32,
    clock: Arc<dyn Clock>,
    job: F,
) -> Result<RefreshHandle, ModelError>
where
    F: Fn() -> Result<(), String> + Send + 'static,
{
    if !(1..=366).contains(&day_of_year) {
        return Err(ModelError::Schedule(format!("day of year must be in 1..=366, got {day_of_year}")));
    }
    if interval_days == 0 {
        return Err(ModelError::Schedule("interval must be at least one day".into()));
    }
    let interval = Duration::days(interval_days as i64);
    let now = clock.now();
    let mut first_due = day_in_year(now.year(), day_of_year);
    if first_due <= now {
        first_due = day_in_year(now.year() + 1, day_of_year);
    }

    let shared = Arc::new(Shared {
        state: Mutex::new(State::default()),
        changed: Condvar::new(),
        cancelled: AtomicBool::new(false),
    });

    let sched = {
        let shared = shared.clone();
        let clock = clock.clone();
        std::thread::Builder::new().name("gaps-refresh-timer".into()).spawn(move || {
            let mut due = first_due;
            while !shared.cancelled.load(Ordering::SeqCst) {
                let now = clock.now();
                let mut fired = 0;
                while due <= now {
                    fired += 1;
                    due += interval;
                }
                {
                    let mut st = shared.state.lock();
                    st.pending += fired;
                    st.observed = Some(now);
                }
                shared.changed.notify_all();
                clock.wait_until(due, StdDuration::from_millis(20));
            }
        })?
    };

    let worker = {
        let shared = shared.clone();
        std::thread::Builder::new().name("gaps-refresh-worker".into()).spawn(move || loop {
            {
                let mut st = shared.state.lock();
                while st.pending == 0 && !st.cancelled {
                    shared.changed.wait(&mut st);
                }
                if st.cancelled {
                    return;
                }
                st.pending -= 1;
                st.running = true;
            }
            let result = job();
            let mut st = shared.state.lock();
            st.running = false;
            st.runs += 1;
            if let Err(e) = result {
                tracing::warn!(error = %e, "scheduled refresh failed");
                st.failures += 1;
            }
            drop(st);
            shared.changed.notify_all();
        })?
    };

    Ok(RefreshHandle { shared, clock, first_due, threads: vec![sched, worker] })
}

impl RefreshHandle {
    pub fn first_due(&self) -> DateTime<Utc> {
        self.first_due
    }

    /// Completed runs, successful or not.
    pub fn run_count(&self) -> u64 {
        self.shared.state.lock().runs
    }

    pub fn failure_count(&self) -> u64 {
        self.shared.state.lock().failures
    }

    /// Queues an extra run now.
    pub fn trigger_now(&self) {
        self.shared.state.lock().pending += 1;
        self.shared.changed.notify_all();
    }

    /// Waits until the scheduler has seen the current clock time and every
    /// queued run has finished. Returns false on timeout.
    pub fn wait_idle(&self, timeout: StdDuration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        let target = self.clock.now();
        let mut st = self.shared.state.lock();
        loop {
            let caught_up = st.observed.is_some_and(|o| o >= target);
            if (caught_up && st.pending == 0 && !st.running) || st.cancelled {
                return true;
            }
            if self.shared.changed.wait_until(&mut st, deadline).timed_out() {
                return false;
            }
        }
    }

    /// Stops the schedule. A run in progress completes; queued runs are
    /// dropped.
    pub fn cancel(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.cancelled.store(true, Ordering::SeqCst);
        self.shared.state.lock().cancelled = true;
        self.shared.changed.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for RefreshHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
