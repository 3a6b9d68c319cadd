use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use parking_lot::Mutex;

use crate::clock::EpochMs;

/// Sliding-window counter: at most `limit` accepted events per key within
/// any `window_ms` span. Refused attempts are not counted.
#[derive(Debug)]
pub struct RateLimiter<K> {
    limit: usize,
    window_ms: i64,
    hits: Mutex<HashMap<K, VecDeque<EpochMs>>>,
}

impl<K: Eq + Hash + Clone> RateLimiter<K> {
    pub fn new(limit: usize, window_ms: i64) -> Self {
        Self {
            limit,
            window_ms,
            hits: Mutex::new(HashMap::new()),
        }
    }

    /// Records an attempt at `now`; returns false if the key is over its limit.
    pub fn try_acquire(&self, key: &K, now: EpochMs) -> bool {
        let mut hits = self.hits.lock();
        let queue = hits.entry(key.clone()).or_default();
        while queue.front().is_some_and(|&t| now - t >= self.window_ms) {
            queue.pop_front();
        }
        if queue.len() >= self.limit {
            return false;
        }
        queue.push_back(now);
        true
    }
}
