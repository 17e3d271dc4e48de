/// Barrier bookkeeping for one clock. Callers hold the engine lock.
#[derive(Clone, Debug, Default)]
pub(crate) struct ClockState {
    pub registered: usize,
    pub arrived: usize,
    pub generation: u64,
}

impl ClockState {
    pub fn new_registered() -> ClockState {
        ClockState {
            registered: 1,
            ..ClockState::default()
        }
    }

    /// Records one arrival and returns the generation to wait past. The
    /// second value is true when this arrival released the barrier.
    pub fn arrive(&mut self) -> (u64, bool) {
        let g = self.generation;
        self.arrived += 1;
        (g, self.try_release())
    }

    /// A registered task leaves; may release the others.
    pub fn deregister(&mut self) -> bool {
        debug_assert!(self.registered > 0);
        self.registered -= 1;
        self.try_release()
    }

    fn try_release(&mut self) -> bool {
        if self.arrived > 0 && self.arrived >= self.registered {
            self.arrived = 0;
            self.generation += 1;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_arrival_releases() {
        let mut c = ClockState::new_registered();
        c.registered = 3;
        assert_eq!(c.arrive(), (0, false));
        assert_eq!(c.arrive(), (0, false));
        assert_eq!(c.arrive(), (0, true));
        assert_eq!(c.generation, 1);
        assert_eq!(c.arrived, 0);
    }

    #[test]
    fn leaving_can_release_waiters() {
        let mut c = ClockState::new_registered();
        c.registered = 2;
        c.arrive();
        assert!(c.deregister());
        assert_eq!(c.generation, 1);
        assert!(!c.deregister());
    }
}
