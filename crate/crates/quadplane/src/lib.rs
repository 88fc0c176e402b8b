//! Configuration files, output writers and the command-line interface for
//! the quad-plane simulator.

pub mod cli;
pub mod config;
pub mod output;

pub use config::Config;

/// Wall clock for solver budgets and timing.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(std::time::Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(std::time::Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl quadplane_core::clock::Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
