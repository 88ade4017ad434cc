//! Operation counters for the sparse-dense kernel.
//!
//! Every [`spmm`](crate::sparse::CsrMatrix::spmm) call increments a
//! process-wide ledger and every ledger currently opened on the calling
//! thread with [`scoped`]. Calls are tagged by the column count of the dense
//! operand so `c`-wide label propagation and `d`-wide feature diffusion can
//! be told apart.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Default)]
pub struct SpmmLedger {
    calls: AtomicU64,
    by_width: Mutex<BTreeMap<usize, u64>>,
}

impl SpmmLedger {
    pub const fn new() -> Self {
        SpmmLedger {
            calls: AtomicU64::new(0),
            by_width: Mutex::new(BTreeMap::new()),
        }
    }

    fn record(&self, width: usize) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut map = self.by_width.lock().unwrap_or_else(|e| e.into_inner());
        *map.entry(width).or_insert(0) += 1;
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            spmm_calls: self.calls.load(Ordering::Relaxed),
            by_width: self.by_width.lock().unwrap_or_else(|e| e.into_inner()).clone(),
        }
    }
}

/// Frozen copy of a ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub spmm_calls: u64,
    pub by_width: BTreeMap<usize, u64>,
}

impl CounterSnapshot {
    pub fn width(&self, cols: usize) -> u64 {
        self.by_width.get(&cols).copied().unwrap_or(0)
    }

    pub fn absorb(&mut self, other: &CounterSnapshot) {
        self.spmm_calls += other.spmm_calls;
        for (&w, &c) in &other.by_width {
            *self.by_width.entry(w).or_insert(0) += c;
        }
    }
}

static GLOBAL: SpmmLedger = SpmmLedger::new();

thread_local! {
    static ACTIVE: RefCell<Vec<Arc<SpmmLedger>>> = const { RefCell::new(Vec::new()) };
}

pub(crate) fn record_spmm(width: usize) {
    GLOBAL.record(width);
    ACTIVE.with(|stack| {
        for ledger in stack.borrow().iter() {
            ledger.record(width);
        }
    });
}

/// Process-wide totals since start-up.
pub fn global() -> CounterSnapshot {
    GLOBAL.snapshot()
}

/// Run `f` while counting every SpMM issued from this thread.
///
/// Scopes nest: an inner scope's calls are also visible to outer scopes.
pub fn scoped<R>(f: impl FnOnce() -> R) -> (R, CounterSnapshot) {
    let ledger = Arc::new(SpmmLedger::new());
    ACTIVE.with(|stack| stack.borrow_mut().push(Arc::clone(&ledger)));
    struct Pop;
    impl Drop for Pop {
        fn drop(&mut self) {
            ACTIVE.with(|stack| {
                stack.borrow_mut().pop();
            });
        }
    }
    let guard = Pop;
    let out = f();
    drop(guard);
    (out, ledger.snapshot())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_scopes_accumulate() {
        let ((_, inner), outer) = scoped(|| {
            record_spmm(3);
            scoped(|| {
                record_spmm(3);
                record_spmm(5);
            })
        });
        assert_eq!(inner.spmm_calls, 2);
        assert_eq!(outer.spmm_calls, 3);
        assert_eq!(outer.width(3), 2);
        assert_eq!(outer.width(5), 1);
        assert_eq!(outer.width(7), 0);
    }

    #[test]
    fn scopes_are_thread_local() {
        let (_, snap) = scoped(|| {
            std::thread::spawn(|| record_spmm(2)).join().unwrap();
        });
        assert_eq!(snap.spmm_calls, 0);
    }
}
