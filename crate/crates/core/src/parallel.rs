//! Index-ordered parallel map with a worker cap.
//!
//! Results land in input order regardless of scheduling, so callers that
//! reduce over the returned vector keep a fixed reduction order. The worker
//! count honours the `FUSIONFORGE_THREADS` environment variable; on wasm the
//! map always runs sequentially.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Worker cap: `FUSIONFORGE_THREADS` if set, otherwise the machine's
/// available parallelism.
pub fn worker_count() -> usize {
    if cfg!(target_arch = "wasm32") {
        return 1;
    }
    if let Ok(v) = std::env::var("FUSIONFORGE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Applies `f` to every index in `0..n`, returning results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let workers = worker_count().min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                if tx.send((i, f(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });

    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    for (i, r) in rx {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|s| s.expect("worker result")).collect()
}
