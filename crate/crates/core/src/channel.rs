//! Channel contracts between the runtime loops.
//!
//! * [`BoundedFifo`]: in-order delivery, bounded, drops the oldest item on
//!   overflow and counts the drops.
//! * [`Mailbox`]: single slot, the writer overwrites and the reader takes the
//!   most recent value.
//! * [`Broadcast`]: fan-out to any number of [`BoundedFifo`] subscribers.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

struct FifoInner<T> {
    queue: Mutex<VecDeque<T>>,
    ready: Condvar,
    capacity: usize,
    overflowed: AtomicU64,
    closed: AtomicBool,
}

pub struct BoundedFifo<T> {
    inner: Arc<FifoInner<T>>,
}

impl<T> Clone for BoundedFifo<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T> BoundedFifo<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            inner: Arc::new(FifoInner {
                queue: Mutex::new(VecDeque::with_capacity(capacity)),
                ready: Condvar::new(),
                capacity,
                overflowed: AtomicU64::new(0),
                closed: AtomicBool::new(false),
            }),
        }
    }

    pub fn push(&self, item: T) {
        let mut q = self.inner.queue.lock().unwrap();
        if q.len() == self.inner.capacity {
            q.pop_front();
            self.inner.overflowed.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(item);
        drop(q);
        self.inner.ready.notify_one();
    }

    pub fn try_pop(&self) -> Option<T> {
        self.inner.queue.lock().unwrap().pop_front()
    }

    /// Waits up to `timeout` for an item.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let q = self.inner.queue.lock().unwrap();
        let (mut q, _) = self
            .inner
            .ready
            .wait_timeout_while(q, timeout, |q| q.is_empty() && !self.is_closed())
            .unwrap();
        q.pop_front()
    }

    pub fn len(&self) -> usize {
        self.inner.queue.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items discarded because the queue was full.
    pub fn overflowed(&self) -> u64 {
        self.inner.overflowed.load(Ordering::Relaxed)
    }

    pub fn close(&self) {
        self.inner.closed.store(true, Ordering::Release);
        self.inner.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::Acquire)
    }
}

pub struct Mailbox<T> {
    slot: Arc<Mutex<Option<T>>>,
}

impl<T> Clone for Mailbox<T> {
    fn clone(&self) -> Self {
        Self {
            slot: Arc::clone(&self.slot),
        }
    }
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            slot: Arc::new(Mutex::new(None)),
        }
    }
}

impl<T> Mailbox<T> {
    pub fn put(&self, value: T) {
        *self.slot.lock().unwrap() = Some(value);
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().unwrap().take()
    }
}

pub struct Broadcast<T> {
    subscribers: Arc<Mutex<Vec<BoundedFifo<T>>>>,
}

impl<T> Clone for Broadcast<T> {
    fn clone(&self) -> Self {
        Self {
            subscribers: Arc::clone(&self.subscribers),
        }
    }
}

impl<T> Default for Broadcast<T> {
    fn default() -> Self {
        Self {
            subscribers: Arc::new(Mutex::new(Vec::new())),
        }
    }
}

impl<T: Clone> Broadcast<T> {
    pub fn subscribe(&self, capacity: usize) -> BoundedFifo<T> {
        let fifo = BoundedFifo::new(capacity);
        self.subscribers.lock().unwrap().push(fifo.clone());
        fifo
    }

    /// Delivers to every open subscriber and forgets closed ones.
    pub fn send(&self, value: T) {
        let mut subs = self.subscribers.lock().unwrap();
        subs.retain(|s| !s.is_closed());
        for s in subs.iter() {
            s.push(value.clone());
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.lock().unwrap().iter().filter(|s| !s.is_closed()).count()
    }
}
