//! Driving protocols for the system oscillator S attached to the bath chain.
//!
//! Phase-space ordering is `z = (X, x_1..x_N, P, p_1..p_N)`: index 0 is S,
//! index `j` is bath site `j`, and the bath oscillator B is the site
//! `attach_site`. Every protocol produces a [`ChainCoefficients`] value; the
//! chain part of the Hamiltonian is the same for all of them.

use crate::error::{Error, Result};
use crate::jet::{Jet, Real};
use crate::ramp::RampSchedule;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Bath chain and coupling constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Number of bath oscillators.
    pub n_bath: usize,
    pub omega_b: f64,
    pub gamma_sb: f64,
    pub gamma_bb: f64,
    /// 1-based index of B; `None` picks the chain midpoint ceil(N/2).
    #[serde(default)]
    pub attach_site: Option<usize>,
}

impl ChainParams {
    /// S plus a single bath oscillator.
    pub fn two_oscillator(omega_b: f64, gamma_sb: f64) -> Self {
        ChainParams {
            n_bath: 1,
            omega_b,
            gamma_sb,
            gamma_bb: 0.0,
            attach_site: None,
        }
    }

    pub fn chain(n_bath: usize, omega_b: f64, gamma_sb: f64, gamma_bb: f64) -> Self {
        ChainParams {
            n_bath,
            omega_b,
            gamma_sb,
            gamma_bb,
            attach_site: None,
        }
    }

    /// Mode count n = N + 1.
    pub fn modes(&self) -> usize {
        self.n_bath + 1
    }

    /// 1-based site of B.
    pub fn site(&self) -> usize {
        self.attach_site.unwrap_or(self.n_bath.div_ceil(2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bath == 0 {
            return Err(Error::InvalidParams("n_bath must be at least 1".into()));
        }
        if !(self.omega_b > 0.0) {
            return Err(Error::InvalidParams("omega_b must be positive".into()));
        }
        if !(self.gamma_sb > 0.0) {
            return Err(Error::InvalidParams("gamma_sb must be positive".into()));
        }
        if self.gamma_sb > 0.2 {
            log::warn!("gamma_sb = {} is outside the weak-coupling regime", self.gamma_sb);
        }
        if !(0.0..0.5).contains(&self.gamma_bb) {
            return Err(Error::InvalidParams("gamma_bb must lie in [0, 0.5)".into()));
        }
        let s = self.site();
        if s == 0 || s > self.n_bath {
            return Err(Error::InvalidParams(format!("attach_site {s} outside 1..={}", self.n_bath)));
        }
        Ok(())
    }
}

/// Symmetric coefficient matrix of H = z^T H z / 2.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticForm {
    pub h: DMatrix<f64>,
    pub n: usize,
}

impl QuadraticForm {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let dim = h.nrows();
        if dim != h.ncols() || dim % 2 != 0 {
            return Err(Error::AsymmetricForm);
        }
        let scale = h.amax().max(1.0);
        for i in 0..dim {
            for j in 0..i {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::AsymmetricForm);
                }
            }
        }
        Ok(QuadraticForm { n: dim / 2, h })
    }

    /// Classical value z^T H z / 2.
    pub fn energy(&self, z: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(z);
        0.5 * v.dot(&(&self.h * &v))
    }

    /// True when the momentum block is the identity and no x-p terms appear.
    pub fn has_unit_kinetic_block(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            (0..n).all(|j| {
                let kin = self.h[(n + i, n + j)] - if i == j { 1.0 } else { 0.0 };
                kin.abs() < 1e-12
            })
        })
    }
}

/// Coefficients of a protocol Hamiltonian on the chain:
///
/// H = P^2/2 + ws2 X^2/2 - coupling X x_B + b1 X P + b2 X p_B + b3 x_B P
///     + b4 x_B p_B + bath_shift x_B^2/2 + H_bath.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChainCoefficients {
    pub ws2: f64,
    /// gamma_SB(t) omega_B^2.
    pub coupling: f64,
    pub bath_shift: f64,
    pub b: [f64; 4],
}

impl ChainCoefficients {
    /// Dense quadratic form over the full chain.
    pub fn form(&self, params: &ChainParams) -> QuadraticForm {
        let n = params.modes();
        let nb = params.n_bath;
        let w2 = params.omega_b * params.omega_b;
        let g = params.gamma_bb * w2;
        let bsite = params.site();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h[(0, 0)] = self.ws2;
        for j in 1..=nb {
            h[(j, j)] = w2;
            if j < nb {
                h[(j, j + 1)] = -g;
                h[(j + 1, j)] = -g;
            }
        }
        h[(bsite, bsite)] += self.bath_shift;
        h[(0, bsite)] = -self.coupling;
        h[(bsite, 0)] = -self.coupling;
        for i in 0..n {
            h[(n + i, n + i)] = 1.0;
        }
        let pairs = [(0, n), (0, n + bsite), (bsite, n), (bsite, n + bsite)];
        for (k, &(r, c)) in pairs.iter().enumerate() {
            h[(r, c)] += self.b[k];
            h[(c, r)] += self.b[k];
        }
        QuadraticForm { h, n }
    }
}

/// Protocol family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Unassisted ramp of omega_S with constant coupling.
    Ua,
    /// Counter-diabatic drive with the exact gauge potential.
    CdExact,
    /// Counter-diabatic drive with the weak-coupling gauge potential.
    CdWeak,
    /// Rotating-wave fast-forward.
    Rwff,
    /// Floquet-engineered fast-forward.
    Feff,
    /// The fast-forward Hamiltonian with the bath frequency modulated
    /// directly (the infinite-Omega limit of `Feff`).
    Ffp,
}

impl ProtocolKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProtocolKind::Ua => "ua",
            ProtocolKind::CdExact => "cd-exact",
            ProtocolKind::CdWeak => "cd-weak",
            ProtocolKind::Rwff => "rwff",
            ProtocolKind::Feff => "feff",
            ProtocolKind::Ffp => "ffp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ProtocolKind::Ua,
            ProtocolKind::CdExact,
            ProtocolKind::CdWeak,
            ProtocolKind::Rwff,
            ProtocolKind::Feff,
            ProtocolKind::Ffp,
        ]
        .into_iter()
        .find(|k| k.label() == s)
    }
}

/// Which gauge coefficients feed a synthesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffMode {
    Exact,
    Weak,
}

/// A protocol together with its tuning knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: ProtocolKind,
    /// Gauge coefficients used by the fast-forward syntheses.
    #[serde(default = "default_coeff_mode")]
    pub coeff_mode: CoeffMode,
    /// Floquet drive frequency.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Floquet phase: the drive is cos(omega t + phase).
    #[serde(default)]
    pub phase: f64,
    /// Below |lambda'| < eps_reg |speed| the fast-forward Hamiltonian is
    /// replaced by H0(lambda).
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
    /// Negative z^2 down to -z2_tol omega_B^2 is clamped to zero.
    #[serde(default = "default_z2_tol")]
    pub z2_tol: f64,
}

fn default_coeff_mode() -> CoeffMode {
    CoeffMode::Weak
}
fn default_omega() -> f64 {
    480.0
}
fn default_eps_reg() -> f64 {
    1e-6
}
fn default_z2_tol() -> f64 {
    Z2_TOL
}

impl Protocol {
    pub fn new(kind: ProtocolKind) -> Self {
        Protocol {
            kind,
            coeff_mode: default_coeff_mode(),
            omega: default_omega(),
            phase: 0.0,
            eps_reg: default_eps_reg(),
            z2_tol: default_z2_tol(),
        }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_coeff_mode(mut self, mode: CoeffMode) -> Self {
        self.coeff_mode = mode;
        self
    }

    pub fn with_z2_tol(mut self, tol: f64) -> Self {
        self.z2_tol = tol;
        self
    }

    /// Hamiltonian coefficients at time t.
    pub fn coefficients(
        &self,
        params: &ChainParams,
        schedule: &RampSchedule,
        t: f64,
    ) -> Result<ChainCoefficients> {
        let w2 = params.omega_b * params.omega_b;
        let bare = params.gamma_sb * w2;
        let lam = schedule.jet(t);
        let l = lam.value();
        if 1.0 + l <= 0.0 {
            return Err(Error::UnstableFrequency(1.0 + l));
        }
        let h0 = ChainCoefficients {
            ws2: w2 * (1.0 + l),
            coupling: bare,
            bath_shift: 0.0,
            b: [0.0; 4],
        };
        match self.kind {
            ProtocolKind::Ua => Ok(h0),
            ProtocolKind::CdExact | ProtocolKind::CdWeak => {
                let a = if self.kind == ProtocolKind::CdExact {
                    gauge_coefficients_exact(l, params.gamma_sb)?
                } else {
                    gauge_coefficients_weak(l, params.gamma_sb)?
                };
                let ld = lam.derivative(1);
                Ok(ChainCoefficients {
                    b: [ld * a.a1, ld * a.a2, ld * a.a3, ld * a.a4],
                    ..h0
                })
            }
            ProtocolKind::Rwff => {
                let (ws2, g) = rwff_couplings_jet(lam, params.omega_b, params.gamma_sb)?;
                Ok(ChainCoefficients {
                    ws2,
                    coupling: g * w2,
                    ..h0
                })
            }
            ProtocolKind::Feff | ProtocolKind::Ffp => {
                if lam.derivative(1).abs() < self.eps_reg * schedule.speed.abs() {
                    return Ok(h0);
                }
                let fe = fe_from_jet(lam, params.omega_b, params.gamma_sb, self.coeff_mode, t, self.z2_tol)?;
                if self.kind == ProtocolKind::Ffp {
                    Ok(ChainCoefficients {
                        ws2: fe.lambda_prime,
                        coupling: fe.c_prime,
                        bath_shift: fe.z2,
                        b: [0.0; 4],
                    })
                } else {
                    let (ws2, g) = feff_couplings(&fe, t, self.omega, self.phase, params.omega_b)?;
                    Ok(ChainCoefficients {
                        ws2,
                        coupling: g * w2,
                        ..h0
                    })
                }
            }
        }
    }

    /// Dense form at time t.
    pub fn form(&self, params: &ChainParams, schedule: &RampSchedule, t: f64) -> Result<QuadraticForm> {
        Ok(self.coefficients(params, schedule, t)?.form(params))
    }

    /// Largest step compatible with resolving the Floquet drive.
    pub fn step_ceiling(&self) -> Option<f64> {
        (self.kind == ProtocolKind::Feff).then(|| 2.0 * std::f64::consts::PI / self.omega / 40.0)
    }

    /// Emits a warning when the Floquet frequency is not the largest scale.
    pub fn check_omega(&self, params: &ChainParams, schedule: &RampSchedule) -> bool {
        if self.kind != ProtocolKind::Feff {
            return true;
        }
        let lmax = schedule.lambda_i.max(schedule.lambda_f);
        let ws = params.omega_b * (1.0 + lmax).max(0.0).sqrt();
        let ok = self.omega >= 20.0 * ws.max(params.omega_b);
        if !ok {
            log::warn!("Floquet frequency {} is not well above the system frequencies", self.omega);
        }
        ok
    }
}

/// Gauge-potential coefficients: A = a1 {X,P}/2 + a2 X p_B + a3 x_B P + a4 {x_B,p_B}/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeCoefficients<T = f64> {
    pub a1: T,
    pub a2: T,
    pub a3: T,
    pub a4: T,
}

/// Exact coefficients for the two-oscillator Hamiltonian.
pub fn gauge_coefficients_exact<T: Real>(lambda: T, gamma: f64) -> Result<GaugeCoefficients<T>> {
    let g2 = gamma * gamma;
    let one = T::cst(1.0);
    let d = lambda * lambda + T::cst(4.0 * g2);
    let q = one + lambda - T::cst(g2);
    if q.value() <= 0.0 || d.value() <= 0.0 {
        return Err(Error::SingularDenominator);
    }
    let den = T::cst(4.0) * q * d;
    let a1 = -(lambda * lambda + T::cst(g2) * (T::cst(2.0) - lambda)) / den;
    let a2 = T::cst(gamma) * (T::cst(4.0) * (one + lambda) + lambda - T::cst(6.0 * g2)) / den;
    let a3 = -(T::cst(gamma) * (T::cst(4.0) * (one + lambda) - lambda - T::cst(2.0 * g2))) / den;
    let a4 = -(T::cst(g2) * (T::cst(2.0) + lambda)) / den;
    Ok(GaugeCoefficients { a1, a2, a3, a4 })
}

/// Weak-coupling coefficients.
pub fn gauge_coefficients_weak<T: Real>(lambda: T, gamma: f64) -> Result<GaugeCoefficients<T>> {
    let one = T::cst(1.0);
    let d = lambda * lambda + T::cst(4.0 * gamma * gamma);
    if (one + lambda).value() <= 0.0 || d.value() <= 0.0 {
        return Err(Error::SingularDenominator);
    }
    let a2 = T::cst(gamma) / d;
    Ok(GaugeCoefficients {
        a1: -(one / (T::cst(4.0) * (one + lambda))),
        a2,
        a3: -a2,
        a4: T::cst(0.0),
    })
}

fn gauge<T: Real>(lambda: T, gamma: f64, mode: CoeffMode) -> Result<GaugeCoefficients<T>> {
    match mode {
        CoeffMode::Exact => gauge_coefficients_exact(lambda, gamma),
        CoeffMode::Weak => gauge_coefficients_weak(lambda, gamma),
    }
}

/// Two-oscillator H0 and dH0/dlambda as dense forms, plus the gauge form.
pub fn two_oscillator_forms(
    lambda: f64,
    gamma: f64,
    omega_b: f64,
    a: &GaugeCoefficients,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let w2 = omega_b * omega_b;
    let mut h0 = DMatrix::zeros(4, 4);
    h0[(0, 0)] = w2 * (1.0 + lambda);
    h0[(1, 1)] = w2;
    h0[(0, 1)] = -gamma * w2;
    h0[(1, 0)] = -gamma * w2;
    h0[(2, 2)] = 1.0;
    h0[(3, 3)] = 1.0;
    let mut dh = DMatrix::zeros(4, 4);
    dh[(0, 0)] = w2;
    let mut q = DMatrix::zeros(4, 4);
    for &(r, c, v) in &[(0, 2, a.a1), (0, 3, a.a2), (1, 2, a.a3), (1, 3, a.a4)] {
        q[(r, c)] = v;
        q[(c, r)] = v;
    }
    (h0, dh, q)
}

/// Relative Frobenius residual of [H0, i dH0 + [H0, A]] in the matrix
/// representation G = J Q, normalized by |H0|_F^2.
pub fn gauge_residual(lambda: f64, gamma: f64, omega_b: f64, a: &GaugeCoefficients) -> f64 {
    let (h0, dh, q) = two_oscillator_forms(lambda, gamma, omega_b, a);
    let j = crate::dynamics::symplectic_unit(2);
    let g0 = &j * &h0;
    let gd = &j * &dh;
    let ga = &j * &q;
    let comm = |x: &DMatrix<f64>, y: &DMatrix<f64>| x * y - y * x;
    let inner = &gd + comm(&g0, &ga);
    comm(&g0, &inner).norm() / h0.norm().powi(2)
}

/// RW-FF couplings (omega_S^2, gamma_SB) from a lambda jet.
///
/// The phase of the RW coupling is arctan f with f = 2 lambda' / (omega_B D),
/// D = lambda^2 + 4 gamma^2; its rate shifts the system frequency.
pub fn rwff_couplings_jet(lam: Jet, omega_b: f64, gamma: f64) -> Result<(f64, f64)> {
    rwff_couplings_scaled(lam, omega_b, gamma, 2.0)
}

/// RW-FF couplings with an explicit numerator factor in the phase argument.
#[doc(hidden)]
pub fn rwff_couplings_scaled(lam: Jet, omega_b: f64, gamma: f64, phase_factor: f64) -> Result<(f64, f64)> {
    let d = lam * lam + Jet::constant(4.0 * gamma * gamma);
    if d.value() <= 0.0 {
        return Err(Error::SingularDenominator);
    }
    let ld = lam.deriv();
    let f = (ld / d).scale(1.0 / omega_b);
    let phase = f.scale(phase_factor);
    let one = Jet::constant(1.0);
    let rate = phase.deriv() / (one + phase * phase);
    let w2 = omega_b * omega_b;
    let ws2 = w2 * (1.0 + lam.value()) + 2.0 * omega_b * rate.value();
    let g = gamma * (1.0 + (2.0 * f.value()).powi(2)).sqrt();
    Ok((ws2, g))
}

/// RW-FF couplings from plain values of lambda and its first two derivatives.
pub fn rwff_couplings(
    lambda: f64,
    lambda_dot: f64,
    lambda_ddot: f64,
    omega_b: f64,
    gamma: f64,
) -> Result<(f64, f64)> {
    rwff_couplings_jet(Jet::from_derivatives(&[lambda, lambda_dot, lambda_ddot]), omega_b, gamma)
}

/// Intermediate scalars of the fast-forward construction at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FEIntermediates {
    pub eta: f64,
    pub mu: f64,
    /// Effective mass M.
    pub m_mass: f64,
    pub lambda_bar: f64,
    pub k_prime: f64,
    pub z2: f64,
    pub xi: f64,
    pub lambda_prime: f64,
    pub c_prime: f64,
}

/// Tolerance below zero tolerated for z^2, relative to omega_B^2.
pub const Z2_TOL: f64 = 1e-12;

/// Fast-forward intermediates at time t from the schedule.
pub fn feff_intermediates(
    params: &ChainParams,
    schedule: &RampSchedule,
    t: f64,
    mode: CoeffMode,
) -> Result<FEIntermediates> {
    fe_from_jet(schedule.jet(t), params.omega_b, params.gamma_sb, mode, t, Z2_TOL)
}

fn fe_from_jet(lam: Jet, omega_b: f64, gamma: f64, mode: CoeffMode, t: f64, z2_tol: f64) -> Result<FEIntermediates> {
    let w2 = omega_b * omega_b;
    let c = gamma * w2;
    let ld = lam.deriv();
    let a = gauge(lam, gamma, mode)?;
    let (b1, b2, b3, b4) = (ld * a.a1, ld * a.a2, ld * a.a3, ld * a.a4);
    let diff = b2 - b3;
    let one = Jet::constant(1.0);
    let eta = (b2.deriv() + b1 * b3 + b2 * b4) / diff;
    let mu = diff.scale(1.0 / c);
    let lambda_bar = (one + lam).scale(w2) + eta * eta - b1 * b1 - b2 * b2 - eta.deriv() - b1.deriv();
    let z2 = b2 * b2 - (b2 * b3).scale(2.0) - b4 * b4 - b4.deriv();
    let minv = one + (eta * mu).scale(2.0) + lambda_bar * mu * mu + mu.deriv();
    if !(minv.value() > 0.0) {
        return Err(Error::SingularEta { t });
    }
    let xi = eta + mu * lambda_bar + minv.ln().deriv().scale(0.5);
    let lambda_prime = lambda_bar * minv - xi * xi + xi.deriv();
    let mut z2v = z2.value();
    if z2v < 0.0 {
        if z2v < -z2_tol * w2 {
            return Err(Error::NegativeZSquared { t, z2: z2v });
        }
        z2v = 0.0;
    }
    Ok(FEIntermediates {
        eta: eta.value(),
        mu: mu.value(),
        m_mass: 1.0 / minv.value(),
        lambda_bar: lambda_bar.value(),
        k_prime: w2 + z2v,
        z2: z2v,
        xi: xi.value(),
        lambda_prime: lambda_prime.value(),
        c_prime: c * minv.value().sqrt(),
    })
}

/// Floquet-engineered couplings (omega_S^2, gamma_SB(t)).
pub fn feff_couplings(
    fe: &FEIntermediates,
    t: f64,
    omega: f64,
    phase: f64,
    omega_b: f64,
) -> Result<(f64, f64)> {
    if fe.z2 < 0.0 {
        return Err(Error::NegativeZSquared { t, z2: fe.z2 });
    }
    let ws2 = fe.lambda_prime - fe.z2;
    let g = (fe.c_prime - (2.0 * fe.z2).sqrt() * omega * (omega * t + phase).cos()) / (omega_b * omega_b);
    Ok((ws2, g))
}

/// Emergent speed scales (omega_B gamma_SB^2, omega_B).
pub fn speed_scales(params: &ChainParams) -> (f64, f64) {
    (params.omega_b * params.gamma_sb * params.gamma_sb, params.omega_b)
}

/// Unassisted form at time t.
pub fn build_ua(params: &ChainParams, schedule: &RampSchedule, t: f64) -> Result<QuadraticForm> {
    Protocol::new(ProtocolKind::Ua).form(params, schedule, t)
}

/// Counter-diabatic form at time t.
pub fn build_cd(params: &ChainParams, schedule: &RampSchedule, t: f64, mode: CoeffMode) -> Result<QuadraticForm> {
    let kind = match mode {
        CoeffMode::Exact => ProtocolKind::CdExact,
        CoeffMode::Weak => ProtocolKind::CdWeak,
    };
    Protocol::new(kind).form(params, schedule, t)
}

/// RW-FF form at time t.
pub fn build_rwff(params: &ChainParams, schedule: &RampSchedule, t: f64) -> Result<QuadraticForm> {
    Protocol::new(ProtocolKind::Rwff).form(params, schedule, t)
}

/// FE-FF form at time t.
pub fn build_feff(params: &ChainParams, schedule: &RampSchedule, t: f64, omega: f64) -> Result<QuadraticForm> {
    Protocol::new(ProtocolKind::Feff).with_omega(omega).form(params, schedule, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ramp::build_schedule;

    #[test]
    fn weak_coefficients_at_resonance() {
        let a = gauge_coefficients_weak(0.0, 0.02).unwrap();
        assert!((a.a2 - 12.5).abs() < 1e-12);
        assert!((a.a3 + 12.5).abs() < 1e-12);
        assert_eq!(a.a4, 0.0);
        assert!((a.a1 + 0.25).abs() < 1e-15);
        let far = gauge_coefficients_weak(0.5, 0.02).unwrap();
        assert!((far.a2 / (0.02 / 0.25) - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_coefficients_reduce_to_weak_limits() {
        let a = gauge_coefficients_exact(0.0, 0.02).unwrap();
        assert!((a.a2 / 12.5 - 1.0).abs() < 0.05);
        let d = gauge_coefficients_exact(0.3, 1e-7).unwrap();
        assert!((d.a1 + 1.0 / (4.0 * 1.3)).abs() < 1e-9);
        assert!(d.a2.abs() < 1e-5 && d.a3.abs() < 1e-5 && d.a4.abs() < 1e-12);
    }

    #[test]
    fn exact_gauge_satisfies_commutator_condition() {
        for &(l, g) in &[(0.3, 0.05), (-0.5, 0.02), (0.0, 0.1), (0.9, 0.001)] {
            let a = gauge_coefficients_exact(l, g).unwrap();
            assert!(gauge_residual(l, g, 1.7, &a) < 1e-12);
        }
        let w = gauge_coefficients_weak(0.01, 0.05).unwrap();
        assert!(gauge_residual(0.01, 0.05, 1.0, &w) > 1e-6);
    }

    #[test]
    fn single_oscillator_dilation_potential_satisfies_condition() {
        // gamma -> 0 leaves the dilated-oscillator potential, which must
        // satisfy the condition on its own.
        let a = GaugeCoefficients {
            a1: -1.0 / (4.0 * 1.4),
            a2: 0.0,
            a3: 0.0,
            a4: 0.0,
        };
        assert!(gauge_residual(0.4, 0.0, 2.0, &a) < 1e-14);
    }

    #[test]
    fn rwff_examples() {
        let (ws2, g) = rwff_couplings(0.2, 0.0, 0.0, 3.0, 0.02).unwrap();
        assert!((ws2 - 9.0 * 1.2).abs() < 1e-12);
        assert_eq!(g, 0.02);
        let (_, g) = rwff_couplings(0.0, 2.0 * 3.0 * 0.02 * 0.02, 0.0, 3.0, 0.02).unwrap();
        assert!((g - 0.02 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rwff_coupling_depends_on_scaled_speed_only() {
        let gamma = 0.03;
        let w = 2.0;
        let (_, g1) = rwff_couplings(0.05, 0.01, 0.0, w, gamma).unwrap();
        // Double D and double the speed: same ratio.
        let lam2 = (2.0 * (0.05f64.powi(2) + 4.0 * gamma * gamma) - 4.0 * gamma * gamma).sqrt();
        let (_, g2) = rwff_couplings(lam2, 0.02, 0.0, w, gamma).unwrap();
        assert!((g1 - g2).abs() < 1e-14);
        assert!(g1 >= gamma);
    }

    #[test]
    fn fe_intermediates_identities() {
        let p = ChainParams::two_oscillator(3.0, 0.02);
        let s = build_schedule(-0.67, 0.67, 0.1, 0.3).unwrap();
        for &t in &[0.5, 1.0, 2.2, 3.0] {
            let fe = feff_intermediates(&p, &s, t, CoeffMode::Weak).unwrap();
            assert!((fe.k_prime - 9.0 - fe.z2).abs() < 1e-12);
            assert!(fe.z2 >= 0.0);
        }
    }

    #[test]
    fn ff_forms_match_h0_at_boundaries() {
        let p = ChainParams::two_oscillator(3.0, 0.02);
        let s = build_schedule(-0.67, 0.67, 0.1, 0.3).unwrap();
        let ua0 = build_ua(&p, &s, 0.0).unwrap();
        for kind in [ProtocolKind::Rwff, ProtocolKind::Feff, ProtocolKind::Ffp, ProtocolKind::CdExact] {
            let f = Protocol::new(kind).form(&p, &s, 0.0).unwrap();
            assert!((&f.h - &ua0.h).norm() < 1e-12, "{kind:?}");
            let f = Protocol::new(kind).form(&p, &s, s.duration()).unwrap();
            let ua1 = build_ua(&p, &s, s.duration()).unwrap();
            assert!((&f.h - &ua1.h).norm() < 1e-9, "{kind:?}");
        }
    }

    #[test]
    fn forms_are_symmetric_with_unit_kinetic_block() {
        let p = ChainParams::chain(5, 1.4, 0.025, 0.03);
        let s = build_schedule(-0.1, 0.1, 0.01, 0.01).unwrap();
        for kind in [ProtocolKind::Ua, ProtocolKind::Rwff, ProtocolKind::Feff, ProtocolKind::Ffp] {
            let f = Protocol::new(kind).form(&p, &s, 7.3).unwrap();
            assert!(QuadraticForm::new(f.h.clone()).is_ok());
            assert!(f.has_unit_kinetic_block());
        }
    }

    #[test]
    fn decoupled_ua_form_is_block_diagonal() {
        let mut p = ChainParams::chain(3, 1.0, 0.02, 0.0);
        p.gamma_sb = 1e-300;
        let s = build_schedule(-0.1, 0.1, 0.01, 0.01).unwrap();
        let f = build_ua(&p, &s, 1.0).unwrap();
        assert!(f.h[(0, 2)].abs() < 1e-200);
        let mut p = ChainParams::two_oscillator(3.0, 0.02);
        p.gamma_sb = 0.02;
        let f = build_ua(&p, &s, 0.0).unwrap();
        assert!((f.h[(0, 1)] + 0.02 * 9.0).abs() < 1e-15);
    }

    #[test]
    fn floquet_amplitude_scales_with_omega() {
        let p = ChainParams::two_oscillator(3.0, 0.02);
        let s = build_schedule(-0.67, 0.67, 0.1, 0.3).unwrap();
        let t = s.time_at(0.0).unwrap();
        let fe = feff_intermediates(&p, &s, t, CoeffMode::Weak).unwrap();
        let amp = |om: f64| {
            let (_, g0) = feff_couplings(&fe, 0.0, om, 0.0, 3.0).unwrap();
            (g0 * 9.0 - fe.c_prime).abs()
        };
        assert!((amp(200.0) / amp(100.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn speed_scale_examples() {
        let (l1, l2) = speed_scales(&ChainParams::two_oscillator(3.0, 0.02));
        assert!((l1 - 1.2e-3).abs() < 1e-15);
        assert_eq!(l2, 3.0);
        let (l1, _) = speed_scales(&ChainParams::two_oscillator(2f64.sqrt(), 0.025));
        assert!((l1 - 8.84e-4).abs() < 1e-6);
    }
}
