use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding concurrent work.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            available: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("semaphore poisoned");
        while *n == 0 {
            n = self.cv.wait(n).expect("semaphore poisoned");
        }
        *n -= 1;
        Permit { sem: self }
    }
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().expect("semaphore poisoned") += 1;
        self.sem.cv.notify_one();
    }
}
