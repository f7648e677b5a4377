use std::sync::{Arc, Mutex, PoisonError};

/// Single-slot latest-value channel. Publishing replaces the stored value;
/// readers always get the most recent one.
#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Mutex<Option<Arc<T>>>,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            slot: Mutex::new(None),
        }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, value: Arc<T>) {
        *self.slot.lock().unwrap_or_else(PoisonError::into_inner) = Some(value);
    }

    pub fn latest(&self) -> Option<Arc<T>> {
        self.slot
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .clone()
    }
}
