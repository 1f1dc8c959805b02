//! Identifiers for runs, bundles and service records.

#[cfg(feature = "ids")]
pub fn fresh_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Without the `ids` feature (wasm builds) identifiers are unique per process:
/// wall-clock nanoseconds, where a clock exists, plus a counter.
#[cfg(not(feature = "ids"))]
pub fn fresh_id() -> String {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    // std has no clock on wasm32-unknown-unknown; calling it panics.
    #[cfg(not(target_arch = "wasm32"))]
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or_default();
    #[cfg(target_arch = "wasm32")]
    let nanos = 0u64;
    format!("{nanos:016x}{n:016x}")
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    #[test]
    fn ids_are_unique_across_threads() {
        let ids: Vec<String> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| s.spawn(|| (0..500).map(|_| super::fresh_id()).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        let unique: HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len());
        assert!(ids.iter().all(|id| id.len() == 32));
    }
}
