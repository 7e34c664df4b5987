//! Detuning schedules lambda(t).
//!
//! The speed profile rises from zero to `speed` through a degree-11
//! smoothstep, stays flat, then falls back mirrored. The smoothstep has five
//! vanishing derivatives at both ends, so lambda^(1)..lambda^(6) vanish at
//! the schedule boundaries. lambda itself is the exact antiderivative, a
//! piecewise polynomial.
//!
//! The smoothstep acts in time over a window `tau_r = 2 delta_lambda / |speed|`,
//! which traverses exactly `delta_lambda` because the profile integrates to 1/2.

use crate::error::{Error, Result};
use crate::jet::{Jet, JET_LEN};
use serde::{Deserialize, Serialize};

const SMOOTH_ORDER: usize = 5;
const POLY_LEN: usize = 2 * SMOOTH_ORDER + 3; // antiderivative has degree 12

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients (ascending powers) of the antiderivative of the smoothstep
/// and of its first `POLY_LEN - 1` derivatives.
fn profile_tables() -> [[f64; POLY_LEN]; POLY_LEN] {
    let n = SMOOTH_ORDER;
    let mut s = [0.0; POLY_LEN];
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s[n + 1 + k] = sign * binom(n + k, k) * binom(2 * n + 1, n - k);
    }
    let mut p = [0.0; POLY_LEN];
    for d in 0..POLY_LEN - 1 {
        p[d + 1] = s[d] / (d + 1) as f64;
    }
    let mut tables = [[0.0; POLY_LEN]; POLY_LEN];
    tables[0] = p;
    for m in 1..POLY_LEN {
        for d in 0..POLY_LEN - 1 {
            tables[m][d] = tables[m - 1][d + 1] * (d + 1) as f64;
        }
    }
    tables
}

fn horner(c: &[f64; POLY_LEN], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &x| acc * u + x)
}

/// Serialized form of a schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub delta_lambda: f64,
    pub speed: f64,
}

/// Piecewise-polynomial detuning schedule starting at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RampSpec", try_from = "RampSpec")]
pub struct RampSchedule {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub delta_lambda: f64,
    pub speed: f64,
    /// Piece boundaries t0 = 0 < t1 < t2 < t3 = tau_p.
    pub t: [f64; 4],
    tau_r: f64,
    tables: [[f64; POLY_LEN]; POLY_LEN],
}

impl From<RampSchedule> for RampSpec {
    fn from(s: RampSchedule) -> Self {
        s.spec()
    }
}

impl TryFrom<RampSpec> for RampSchedule {
    type Error = Error;
    fn try_from(s: RampSpec) -> Result<Self> {
        build_schedule(s.lambda_i, s.lambda_f, s.delta_lambda, s.speed)
    }
}

/// Builds the three-piece schedule from `lambda_i` to `lambda_f`.
pub fn build_schedule(
    lambda_i: f64,
    lambda_f: f64,
    delta_lambda: f64,
    speed: f64,
) -> Result<RampSchedule> {
    if speed == 0.0 || !speed.is_finite() {
        return Err(Error::ZeroSpeed);
    }
    let span = lambda_f - lambda_i;
    if span == 0.0 || span.signum() != speed.signum() {
        return Err(Error::InconsistentDirection);
    }
    let limit = 0.2 * span.abs();
    if !(delta_lambda > 0.0) || delta_lambda > limit * (1.0 + 1e-12) {
        return Err(Error::RampWidthTooLarge {
            delta: delta_lambda,
            limit,
        });
    }
    let v = speed.abs();
    let tau_r = 2.0 * delta_lambda / v;
    let t1 = tau_r;
    let t2 = t1 + (span.abs() - 2.0 * delta_lambda) / v;
    let t3 = t2 + tau_r;
    Ok(RampSchedule {
        lambda_i,
        lambda_f,
        delta_lambda,
        speed,
        t: [0.0, t1, t2, t3],
        tau_r,
        tables: profile_tables(),
    })
}

impl RampSchedule {
    pub fn spec(&self) -> RampSpec {
        RampSpec {
            lambda_i: self.lambda_i,
            lambda_f: self.lambda_f,
            delta_lambda: self.delta_lambda,
            speed: self.speed,
        }
    }

    /// Total duration tau_p.
    pub fn duration(&self) -> f64 {
        self.t[3]
    }

    /// Duration of each smoothstep window.
    pub fn ramp_time(&self) -> f64 {
        self.tau_r
    }

    /// Schedule with the direction reversed: lambda_rev(t) = lambda(tau_p - t).
    pub fn reversed(&self) -> RampSchedule {
        build_schedule(self.lambda_f, self.lambda_i, self.delta_lambda, -self.speed)
            .expect("reversal of a valid schedule is valid")
    }

    /// Derivatives lambda^(k)(t) for k = 0..JET_LEN-1, with t clamped to the
    /// schedule (constant continuation outside).
    fn derivs(&self, t: f64) -> [f64; JET_LEN] {
        let mut d = [0.0; JET_LEN];
        let v = self.speed;
        let tr = self.tau_r;
        let t = t.clamp(0.0, self.t[3]);
        if t <= self.t[1] {
            let u = t / tr;
            let mut scale = v * tr;
            for (k, slot) in d.iter_mut().enumerate() {
                *slot = scale * horner(&self.tables[k], u);
                scale /= tr;
            }
            d[0] += self.lambda_i;
        } else if t < self.t[2] {
            d[0] = self.lambda_i + v * (0.5 * tr + (t - self.t[1]));
            d[1] = v;
        } else {
            let u = (self.t[3] - t) / tr;
            let mut scale = -v * tr;
            for (k, slot) in d.iter_mut().enumerate() {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                *slot = sign * scale * horner(&self.tables[k], u);
                scale /= tr;
            }
            d[0] += self.lambda_f;
        }
        d
    }

    /// lambda(t).
    pub fn lambda(&self, t: f64) -> f64 {
        self.derivs(t)[0]
    }

    /// Exact k-th derivative of lambda at t, k <= 6.
    pub fn lambda_derivatives(&self, t: f64, k: usize) -> Result<f64> {
        if k > 6 {
            return Err(Error::OrderTooHigh(k));
        }
        let tol = 1e-12 * self.t[3].max(1.0);
        if t < -tol || t > self.t[3] + tol {
            return Err(Error::OutOfRange { t, tau: self.t[3] });
        }
        Ok(self.derivs(t)[k])
    }

    /// Taylor jet of lambda around t (orders 0..7).
    pub fn jet(&self, t: f64) -> Jet {
        Jet::from_derivatives(&self.derivs(t))
    }

    /// Time at which lambda crosses `target` (bisection on the monotone schedule).
    pub fn time_at(&self, target: f64) -> Option<f64> {
        let s = (self.lambda_f - self.lambda_i).signum();
        let (lo_v, hi_v) = (self.lambda_i * s, self.lambda_f * s);
        let x = target * s;
        if x < lo_v || x > hi_v {
            return None;
        }
        let (mut a, mut b) = (0.0, self.t[3]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.lambda(m) * s < x {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

/// omega_S^2 = omega_B^2 (1 + lambda).
pub fn system_frequency(lambda: f64, omega_b: f64) -> Result<f64> {
    if 1.0 + lambda <= 0.0 {
        return Err(Error::UnstableFrequency(1.0 + lambda));
    }
    Ok(omega_b * omega_b * (1.0 + lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3(speed: f64) -> RampSchedule {
        build_schedule(-0.67, 0.67, 0.1, speed).unwrap()
    }

    #[test]
    fn smoothstep_profile_is_normalized() {
        let tab = profile_tables();
        assert!((horner(&tab[0], 1.0) - 0.5).abs() < 1e-14);
        assert!((horner(&tab[1], 1.0) - 1.0).abs() < 1e-13);
        for k in 2..=6 {
            assert!(horner(&tab[k], 1.0).abs() < 1e-9, "order {k}");
            assert!(horner(&tab[k], 0.0).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoints_and_boundary_derivatives() {
        let s = fig3(0.05);
        assert_eq!(s.lambda(0.0), -0.67);
        assert!((s.lambda(s.duration()) - 0.67).abs() < 1e-12);
        for k in 1..=6 {
            assert!(s.lambda_derivatives(0.0, k).unwrap().abs() < 1e-12);
            assert!(s.lambda_derivatives(s.duration(), k).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn duration_matches_piecewise_integral() {
        let s = fig3(0.3);
        let expect = (1.34 - 0.2) / 0.3 + 2.0 * (0.2 / 0.3);
        assert!((s.duration() - expect).abs() < 1e-12);
    }

    #[test]
    fn linear_piece_runs_at_full_speed() {
        let s = fig3(0.3);
        let tm = 0.5 * s.duration();
        assert!((s.lambda(tm)).abs() < 1e-12);
        assert_eq!(s.lambda_derivatives(tm, 1).unwrap(), 0.3);
        let tc = s.time_at(0.0).unwrap();
        assert!((s.lambda_derivatives(tc, 1).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn derivatives_continuous_across_pieces() {
        let s = fig3(0.2);
        for &tb in &[s.t[1], s.t[2]] {
            let a = s.derivs(tb - 1e-12);
            let b = s.derivs(tb + 1e-12);
            for k in 0..=6 {
                assert!((a[k] - b[k]).abs() < 1e-6 * (1.0 + a[k].abs()), "k={k}");
            }
        }
    }

    #[test]
    fn finite_differences_agree() {
        let s = fig3(0.2);
        let h = 1e-4;
        for &t in &[0.3, 0.77, s.duration() - 0.41] {
            for k in 1..=6 {
                let fd = (s.derivs(t + h)[k - 1] - s.derivs(t - h)[k - 1]) / (2.0 * h);
                let ex = s.derivs(t)[k];
                assert!(
                    (fd - ex).abs() < 1e-6 * ex.abs().max(1e-3 * s.speed.abs()),
                    "t={t} k={k} fd={fd} ex={ex}"
                );
            }
        }
    }

    #[test]
    fn reversal_is_time_mirror() {
        let s = fig3(0.2);
        let r = s.reversed();
        assert!((r.duration() - s.duration()).abs() < 1e-12);
        for i in 0..=20 {
            let t = s.duration() * i as f64 / 20.0;
            assert!((r.lambda(t) - s.lambda(s.duration() - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn input_validation() {
        assert_eq!(build_schedule(0.0, 1.0, 0.1, 0.0), Err(Error::ZeroSpeed));
        assert_eq!(
            build_schedule(0.0, 1.0, 0.1, -1.0),
            Err(Error::InconsistentDirection)
        );
        assert!(matches!(
            build_schedule(0.0, 1.0, 0.3, 1.0),
            Err(Error::RampWidthTooLarge { .. })
        ));
        let s = fig3(1.0);
        assert_eq!(s.lambda_derivatives(0.1, 7), Err(Error::OrderTooHigh(7)));
        assert!(s.lambda_derivatives(-1.0, 0).is_err());
    }

    #[test]
    fn system_frequency_examples() {
        assert_eq!(system_frequency(0.0, 3.0).unwrap(), 9.0);
        assert!((system_frequency(0.67, 3.0).unwrap() - 15.03).abs() < 1e-12);
        assert!(system_frequency(-1.0, 3.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = fig3(0.2);
        let spec = s.spec();
        let back = RampSchedule::try_from(spec).unwrap();
        assert_eq!(back, s);
    }
}
