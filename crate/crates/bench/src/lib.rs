//! Fixtures shared by the benchmarks.

use ffbath::protocols::ChainParams;
use ffbath::ramp::{build_schedule, RampSchedule};

/// Two oscillators with the Fig. 3 ramp at a normalized speed.
pub fn two_oscillator(speed: f64) -> (ChainParams, RampSchedule) {
    let p = ChainParams::two_oscillator(3.0, 0.02);
    let s = build_schedule(-0.67, 0.67, 0.134, speed * 3.0 * 0.02 * 0.02).unwrap();
    (p, s)
}

/// A chain of `n` bath sites ramped across its bandwidth.
pub fn chain(n: usize, speed: f64) -> (ChainParams, RampSchedule) {
    let p = ChainParams::chain(n, 2f64.sqrt(), 0.025, 0.025);
    let unit = p.omega_b * p.gamma_sb * p.gamma_sb;
    let s = build_schedule(-0.05, 0.05, 0.01, speed * unit).unwrap();
    (p, s)
}
