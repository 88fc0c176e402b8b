use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("euler rate matrix is singular at pitch {theta} rad (|cos θ| ≤ 1e-6)")]
    GimbalLock { theta: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("hover trim infeasible: required rotor speed {required:.1} rad/s exceeds the {max:.1} rad/s limit")]
    TrimInfeasible { required: f64, max: f64 },
    #[error("simulation diverged at t = {time:.3} s: {reason}")]
    Diverged { time: f64, reason: String },
}

pub type Result<T> = core::result::Result<T, Error>;
