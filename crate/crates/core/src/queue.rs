//! Bounded FIFO that sheds perishable items first when full.
//!
//! Used for the client's inbound scene queue and for the simulator's per-client
//! outboxes: scans go first, pose streams next, maps and paths never.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use tokio::sync::Notify;

pub trait Perishable {
    /// Eviction rank: 0 is never evicted; among full-queue candidates the oldest
    /// item of the highest rank goes first.
    fn perishability(&self) -> u8;
}

#[derive(Debug)]
pub struct DropQueue<T> {
    items: Mutex<VecDeque<T>>,
    capacity: usize,
    notify: Notify,
    dropped: AtomicU64,
    closed: AtomicBool,
}

impl<T: Perishable> DropQueue<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Mutex::new(VecDeque::new()),
            capacity: capacity.max(1),
            notify: Notify::new(),
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        }
    }

    /// Enqueues `item`. When at capacity the oldest item of the highest rank is
    /// evicted, unless `item` itself outranks everything queued, in which case it
    /// is refused. Rank-0 items are always admitted, over capacity if need be.
    /// Returns false if `item` itself was dropped.
    pub fn push(&self, item: T) -> bool {
        let mut q = self.items.lock().unwrap_or_else(|e| e.into_inner());
        if q.len() >= self.capacity {
            let victim = q
                .iter()
                .enumerate()
                .filter(|(_, x)| x.perishability() > 0)
                .max_by_key(|(i, x)| (x.perishability(), std::cmp::Reverse(*i)))
                .map(|(i, x)| (i, x.perishability()));
            match victim {
                Some((_, rank)) if item.perishability() > rank => {
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                    return false;
                }
                Some((i, _)) => {
                    q.remove(i);
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                }
                None if item.perishability() > 0 => {
                    self.dropped.fetch_add(1, Ordering::Relaxed);
                    return false;
                }
                None => {}
            }
        }
        q.push_back(item);
        drop(q);
        self.notify.notify_one();
        true
    }

    pub fn drain(&self) -> Vec<T> {
        self.items.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect()
    }

    pub fn pop(&self) -> Option<T> {
        self.items.lock().unwrap_or_else(|e| e.into_inner()).pop_front()
    }

    pub fn len(&self) -> usize {
        self.items.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.notify.notify_waiters();
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    /// Waits until an item is pushed (or one is already queued) or the queue is closed.
    pub async fn ready(&self) {
        loop {
            if !self.is_empty() || self.is_closed() {
                return;
            }
            self.notify.notified().await;
        }
    }
}
