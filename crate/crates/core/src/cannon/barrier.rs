use std::sync::{Condvar, Mutex};

/// Reusable generation barrier that can be broken.
///
/// Once broken, every current and future waiter returns `Err`, so a failed
/// worker cannot leave its peers parked forever.
pub(crate) struct RoundBarrier {
    parties: usize,
    state: Mutex<State>,
    cvar: Condvar,
}

struct State {
    arrived: usize,
    generation: u64,
    broken: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BarrierBroken;

impl RoundBarrier {
    pub(crate) fn new(parties: usize) -> Self {
        assert!(parties > 0);
        Self {
            parties,
            state: Mutex::new(State {
                arrived: 0,
                generation: 0,
                broken: false,
            }),
            cvar: Condvar::new(),
        }
    }

    pub(crate) fn wait(&self) -> Result<(), BarrierBroken> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if st.broken {
            return Err(BarrierBroken);
        }
        let generation = st.generation;
        st.arrived += 1;
        if st.arrived == self.parties {
            st.arrived = 0;
            st.generation += 1;
            self.cvar.notify_all();
            return Ok(());
        }
        while st.generation == generation && !st.broken {
            st = self.cvar.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if st.generation == generation {
            Err(BarrierBroken)
        } else {
            Ok(())
        }
    }

    pub(crate) fn break_barrier(&self) {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        st.broken = true;
        self.cvar.notify_all();
    }
}
