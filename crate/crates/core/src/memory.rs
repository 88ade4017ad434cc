//! Peak-memory estimates: an allocator wrapper with live/peak byte counters,
//! and resident-set sampling when the wrapper is not installed.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static INSTALLED: AtomicBool = AtomicBool::new(false);

/// `System` plus byte accounting. A binary opts in with
/// `#[global_allocator] static A: TrackingAllocator = TrackingAllocator;`.
pub struct TrackingAllocator;

fn grow(bytes: usize) {
    let live = LIVE.fetch_add(bytes, Ordering::Relaxed) + bytes;
    PEAK.fetch_max(live, Ordering::Relaxed);
    if !INSTALLED.load(Ordering::Relaxed) {
        INSTALLED.store(true, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
            grow(new_size);
        }
        p
    }
}

/// Where a [`PeakMemory`] figure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    Allocator,
    ResidentSet,
    Unavailable,
}

/// Peak bytes since the last [`reset_peak`]; always an estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeakMemory {
    pub bytes: Option<u64>,
    pub source: MemorySource,
}

impl std::fmt::Display for PeakMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.bytes, self.source) {
            (Some(b), MemorySource::Allocator) => write!(f, "~{:.1} MiB (heap)", b as f64 / 1048576.0),
            (Some(b), _) => write!(f, "~{:.1} MiB (rss)", b as f64 / 1048576.0),
            (None, _) => f.write_str("n/a"),
        }
    }
}

pub fn allocator_installed() -> bool {
    INSTALLED.load(Ordering::Relaxed)
}

/// Start a new measurement window.
pub fn reset_peak() {
    if allocator_installed() {
        PEAK.store(LIVE.load(Ordering::Relaxed), Ordering::Relaxed);
    } else {
        // Resets VmHWM on Linux; harmless elsewhere.
        let _ = std::fs::write("/proc/self/clear_refs", "5");
    }
}

pub fn peak() -> PeakMemory {
    if allocator_installed() {
        return PeakMemory {
            bytes: Some(PEAK.load(Ordering::Relaxed) as u64),
            source: MemorySource::Allocator,
        };
    }
    match resident_high_water() {
        Some(b) => PeakMemory {
            bytes: Some(b),
            source: MemorySource::ResidentSet,
        },
        None => PeakMemory {
            bytes: None,
            source: MemorySource::Unavailable,
        },
    }
}

fn resident_high_water() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falls_back_without_the_allocator() {
        // The test binary does not install the wrapper.
        assert!(!allocator_installed());
        reset_peak();
        let p = peak();
        assert_ne!(p.source, MemorySource::Allocator);
        if cfg!(target_os = "linux") {
            assert!(p.bytes.unwrap() > 0);
        }
    }
}
