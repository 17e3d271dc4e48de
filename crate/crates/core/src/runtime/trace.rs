use std::collections::VecDeque;
use std::sync::Mutex;

use serde::Serialize;

/// One runtime event. Events are totally ordered by the order in which
/// they were recorded.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Spawn { task: usize, parent: usize },
    TaskEnd { task: usize },
    FinishEnter { task: usize },
    FinishExit { task: usize },
    /// A task passed a barrier into `generation`.
    Advance { task: usize, clock: usize, generation: u64 },
    Write { task: usize, global: String, index: i64, value: i64 },
    Idle { task: usize, value: i64 },
}

/// Bounded event log that keeps the most recent events.
pub(crate) struct Trace {
    events: Mutex<VecDeque<Event>>,
    capacity: usize,
}

impl Trace {
    pub fn new(capacity: usize) -> Trace {
        Trace {
            events: Mutex::new(VecDeque::new()),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&self, ev: Event) {
        let mut q = self.events.lock().unwrap();
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(ev);
    }

    pub fn take(&self) -> Vec<Event> {
        std::mem::take(&mut *self.events.lock().unwrap()).into()
    }
}
