//! Moving-window reissue schedule for sinks at an epoch rollover.
//!
//! With a chain of `L` intervals a rollover runs `L + 1` steps:
//!
//! * step 1 drops the chain from two epochs back and installs the new one,
//!   keeping the just-finished chain as `previous`;
//! * step `s` in `2..=L+1` reissues every node that authenticated in interval
//!   `s - 2` (zero based) of the previous chain;
//! * step `L + 1` also drops the previous chain.
//!
//! Step `s >= 2` runs at the start of interval `s - 2` of the new chain, so the
//! reissue load is spread over the epoch.

use super::KeychainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowAction {
    InstallNewChain,
    Reissue { interval: u32, discard_previous: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovingWindow {
    intervals: u32,
    next_step: u32,
}

impl MovingWindow {
    pub fn begin(intervals: u32) -> Self {
        Self { intervals, next_step: 1 }
    }

    pub fn last_step(&self) -> u32 {
        self.intervals + 1
    }

    pub fn next_step(&self) -> Option<u32> {
        (self.next_step <= self.last_step()).then_some(self.next_step)
    }

    pub fn is_complete(&self) -> bool {
        self.next_step > self.last_step()
    }

    /// Offset from the new chain's creation at which `step` runs.
    pub fn step_offset(step: u32, interval_len: u64) -> u64 {
        step.saturating_sub(2) as u64 * interval_len
    }

    pub fn advance(&mut self, step: u32) -> Result<WindowAction, KeychainError> {
        if step != self.next_step || self.is_complete() {
            return Err(KeychainError::Protocol(format!("moving window step {step} out of order (expected {})", self.next_step)));
        }
        self.next_step += 1;
        Ok(if step == 1 {
            WindowAction::InstallNewChain
        } else {
            WindowAction::Reissue { interval: step - 2, discard_previous: step == self.last_step() }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_interval_schedule() {
        let mut w = MovingWindow::begin(3);
        assert_eq!(w.advance(1).unwrap(), WindowAction::InstallNewChain);
        assert_eq!(w.advance(2).unwrap(), WindowAction::Reissue { interval: 0, discard_previous: false });
        assert_eq!(w.advance(3).unwrap(), WindowAction::Reissue { interval: 1, discard_previous: false });
        assert_eq!(w.advance(4).unwrap(), WindowAction::Reissue { interval: 2, discard_previous: true });
        assert!(w.is_complete());
        assert!(w.advance(5).is_err());
    }

    #[test]
    fn out_of_order_rejected() {
        let mut w = MovingWindow::begin(3);
        assert!(w.advance(2).is_err());
        w.advance(1).unwrap();
        assert!(w.advance(1).is_err());
    }

    #[test]
    fn offsets() {
        assert_eq!(MovingWindow::step_offset(1, 8), 0);
        assert_eq!(MovingWindow::step_offset(2, 8), 0);
        assert_eq!(MovingWindow::step_offset(4, 8), 16);
    }
}
