//! Brute-force Schrödinger evolution of S and B in a truncated Fock space.
//!
//! The site basis uses ladder operators with reference frequency omega_B:
//! x = (a + a^dag)/sqrt(2 omega_B), p = i sqrt(omega_B/2)(a^dag - a).
//! Nothing here shares code with the moment pipeline except the integrator
//! and the protocol forms.

use crate::dynamics::bogoliubov_map;
use crate::error::{Error, Result};
use crate::integrator::{Dop853, IntegratorConfig};
use crate::protocols::{ChainParams, Protocol};
use crate::ramp::RampSchedule;
use crate::states::{energy_infidelity, two_mode_basis, FockSpec, ModeBasis};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

type CVec = Vec<Complex64>;

/// Two truncated oscillators, states indexed by m_S (n_max+1) + m_B.
#[derive(Clone, Debug)]
pub struct FockSpace {
    pub n_max: usize,
    pub omega_ref: f64,
}

impl FockSpace {
    pub fn new(n_max: usize, omega_ref: f64) -> Self {
        FockSpace { n_max, omega_ref }
    }

    pub fn dim(&self) -> usize {
        (self.n_max + 1) * (self.n_max + 1)
    }

    fn split(&self, idx: usize) -> [usize; 2] {
        [idx / (self.n_max + 1), idx % (self.n_max + 1)]
    }

    fn join(&self, m: [usize; 2]) -> usize {
        m[0] * (self.n_max + 1) + m[1]
    }

    /// dst = a_mode (or a_mode^dag) src; amplitude pushed past n_max is lost.
    pub fn ladder(&self, mode: usize, dagger: bool, src: &[Complex64]) -> CVec {
        let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
        for (idx, &amp) in src.iter().enumerate() {
            if amp == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut m = self.split(idx);
            if dagger {
                if m[mode] == self.n_max {
                    continue;
                }
                m[mode] += 1;
                dst[self.join(m)] += amp * (m[mode] as f64).sqrt();
            } else {
                if m[mode] == 0 {
                    continue;
                }
                let f = (m[mode] as f64).sqrt();
                m[mode] -= 1;
                dst[self.join(m)] += amp * f;
            }
        }
        dst
    }

    /// Phase-space operator z_i (X, x_B, P, p_B) applied to a state.
    fn coordinate(&self, i: usize, src: &[Complex64]) -> CVec {
        let mode = i % 2;
        let up = self.ladder(mode, true, src);
        let down = self.ladder(mode, false, src);
        let w = self.omega_ref;
        if i < 2 {
            let s = 1.0 / (2.0 * w).sqrt();
            up.iter().zip(&down).map(|(u, d)| (u + d) * s).collect()
        } else {
            let s = Complex64::new(0.0, (0.5 * w).sqrt());
            up.iter().zip(&down).map(|(u, d)| (u - d) * s).collect()
        }
    }

    /// (z^T H z / 2) psi for a symmetric 4x4 form.
    pub fn apply_form(&self, h: &DMatrix<f64>, psi: &[Complex64]) -> CVec {
        let zs: Vec<CVec> = (0..4).map(|j| self.coordinate(j, psi)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        for i in 0..4 {
            let mut w = vec![Complex64::new(0.0, 0.0); psi.len()];
            let mut any = false;
            for j in 0..4 {
                let hij = h[(i, j)];
                if hij != 0.0 {
                    any = true;
                    for (a, b) in w.iter_mut().zip(&zs[j]) {
                        *a += b * hij;
                    }
                }
            }
            if any {
                for (o, v) in out.iter_mut().zip(self.coordinate(i, &w)) {
                    *o += v * 0.5;
                }
            }
        }
        out
    }

    /// Site-ladder basis at the reference frequency.
    fn site_basis(&self) -> ModeBasis {
        let w = self.omega_ref;
        let (s, si) = (w.sqrt(), 1.0 / w.sqrt());
        let t = DMatrix::from_diagonal(&DVector::from_vec(vec![s, s, si, si]));
        let ti = DMatrix::from_diagonal(&DVector::from_vec(vec![si, si, s, s]));
        ModeBasis {
            frequencies: vec![w, w],
            transform: t,
            inverse: ti,
        }
    }

    /// Coefficients (U, V) of normal-mode annihilators in site ladders.
    fn normal_ladders(&self, normal: &ModeBasis) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
        let map = bogoliubov_map(&DMatrix::identity(4, 4), &self.site_basis(), normal)?;
        Ok((map.u, map.v))
    }

    /// b_alpha psi (dagger = false) or b_alpha^dag psi.
    fn normal_ladder(
        &self,
        uv: &(DMatrix<Complex64>, DMatrix<Complex64>),
        alpha: usize,
        dagger: bool,
        psi: &[Complex64],
    ) -> CVec {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        for k in 0..2 {
            let (cu, cv) = if dagger {
                (uv.0[(alpha, k)].conj(), uv.1[(alpha, k)].conj())
            } else {
                (uv.0[(alpha, k)], uv.1[(alpha, k)])
            };
            // b = U a + V a^dag ; b^dag = U* a^dag + V* a
            let (first, second) = if dagger { (true, false) } else { (false, true) };
            for (o, v) in out.iter_mut().zip(self.ladder(k, first, psi)) {
                *o += cu * v;
            }
            for (o, v) in out.iter_mut().zip(self.ladder(k, second, psi)) {
                *o += cv * v;
            }
        }
        out
    }

    /// Normalized Fock state |n_-, n_+> of the given normal modes.
    pub fn normal_fock_state(&self, normal: &ModeBasis, occ: &[u32]) -> Result<CVec> {
        let uv = self.normal_ladders(normal)?;
        let (u, v) = (&uv.0, &uv.1);
        let uinv = u.clone().try_inverse().ok_or(Error::InvalidMap(f64::INFINITY))?;
        let z = -(uinv * v);
        // exp(a^dag Z a^dag / 2)|0>: c_{m+e_k} sqrt(m_k+1) = sum_l Z_kl sqrt(m_l) c_{m-e_l}
        let n1 = self.n_max + 1;
        let mut c = vec![Complex64::new(0.0, 0.0); self.dim()];
        c[0] = Complex64::new(1.0, 0.0);
        for total in 0..(2 * self.n_max) {
            for ms in 0..=total.min(self.n_max) {
                let mb = total - ms;
                if mb > self.n_max {
                    continue;
                }
                let m = [ms, mb];
                for k in 0..2 {
                    if m[k] == self.n_max {
                        continue;
                    }
                    let mut target = m;
                    target[k] += 1;
                    let tidx = self.join(target);
                    if c[tidx] != Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in 0..2 {
                        if m[l] == 0 {
                            continue;
                        }
                        let mut src = m;
                        src[l] -= 1;
                        acc += z[(k, l)] * (m[l] as f64).sqrt() * c[src[0] * n1 + src[1]];
                    }
                    c[tidx] = acc / ((m[k] + 1) as f64).sqrt();
                }
            }
        }
        normalize(&mut c);
        for (alpha, &n) in occ.iter().enumerate() {
            for _ in 0..n {
                c = self.normal_ladder(&uv, alpha, true, &c);
            }
        }
        normalize(&mut c);
        Ok(c)
    }

    /// Probability in the two highest shells of either mode.
    pub fn leakage(&self, psi: &[Complex64]) -> f64 {
        psi.iter()
            .enumerate()
            .filter(|(i, _)| {
                let m = self.split(*i);
                m[0] + 1 >= self.n_max || m[1] + 1 >= self.n_max
            })
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }
}

fn norm_sqr(psi: &[Complex64]) -> f64 {
    psi.iter().map(|a| a.norm_sqr()).sum()
}

fn normalize(psi: &mut [Complex64]) {
    let n = norm_sqr(psi).sqrt();
    psi.iter_mut().for_each(|a| *a /= n);
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Final observables of an oracle run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub energy: f64,
    pub sigma2: f64,
    pub e_ad: f64,
    pub w: f64,
    /// <n_-> and <n_+> at lambda_f.
    pub occupations: Vec<f64>,
    pub norm_drift: f64,
    pub leakage: f64,
}

/// Integrates i dpsi/dt = H(t) psi for a two-oscillator protocol.
pub fn evolve_fock(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    fock: &FockSpec,
    n_max: usize,
    cfg: &IntegratorConfig,
) -> Result<OracleOutcome> {
    if params.n_bath != 1 {
        return Err(Error::InvalidParams("the oracle handles a single bath oscillator".into()));
    }
    let nmax_occ = fock.occupations.iter().copied().max().unwrap_or(0) as usize;
    if n_max < 4 * nmax_occ + 8 {
        return Err(Error::InvalidParams(format!("n_max {n_max} below 4 max(n) + 8")));
    }
    let space = FockSpace::new(n_max, params.omega_b);
    let bi = two_mode_basis(schedule.lambda_i, params.gamma_sb, params.omega_b)?;
    let bf = two_mode_basis(schedule.lambda_f, params.gamma_sb, params.omega_b)?;
    let psi0 = space.normal_fock_state(&bi, &fock.occupations)?;
    let dim = space.dim();

    let mut y: Vec<f64> = psi0.iter().map(|a| a.re).chain(psi0.iter().map(|a| a.im)).collect();
    let mut cfg = cfg.clone();
    if let Some(ceiling) = protocol.step_ceiling() {
        cfg.max_step = Some(cfg.max_step.map_or(ceiling, |m| m.min(ceiling)));
    }
    let failure = std::cell::RefCell::new(None);
    let rhs = |t: f64, v: &[f64], out: &mut [f64]| {
        let psi: CVec = (0..dim).map(|i| Complex64::new(v[i], v[dim + i])).collect();
        match protocol.form(params, schedule, t.clamp(0.0, schedule.duration())) {
            Ok(form) => {
                let hpsi = space.apply_form(&form.h, &psi);
                // dpsi/dt = -i H psi
                for i in 0..dim {
                    out[i] = hpsi[i].im;
                    out[dim + i] = -hpsi[i].re;
                }
            }
            Err(e) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                failure.borrow_mut().get_or_insert(e);
            }
        }
    };
    Dop853::new(cfg).integrate(rhs, 0.0, schedule.duration(), &mut y, None)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let psi: CVec = (0..dim).map(|i| Complex64::new(y[i], y[dim + i])).collect();
    let norm_drift = (norm_sqr(&psi) - 1.0).abs();
    if norm_drift > 1e-8 {
        return Err(Error::NormDrift(norm_drift));
    }
    let leakage = space.leakage(&psi);
    if leakage > 1e-6 {
        return Err(Error::TruncationLeakage(leakage));
    }
    let hf = Protocol::new(crate::protocols::ProtocolKind::Ua).form(params, schedule, schedule.duration())?;
    let hpsi = space.apply_form(&hf.h, &psi);
    let energy = inner(&psi, &hpsi).re;
    let sigma2 = (norm_sqr(&hpsi) - energy * energy).max(0.0);
    let uv = space.normal_ladders(&bf)?;
    let occupations = (0..2)
        .map(|a| norm_sqr(&space.normal_ladder(&uv, a, false, &psi)))
        .collect();
    let e_ad = bf.fock_energy(&fock.occupations);
    Ok(OracleOutcome {
        energy,
        sigma2,
        e_ad,
        w: energy_infidelity(energy, sigma2, e_ad, params.omega_b)?,
        occupations,
        norm_drift,
        leakage,
    })
}

/// Number-conserving part sum_kl h_kl a_k^dag a_l of a form, in site ladders.
pub fn rw_projection(h: &DMatrix<f64>, omega_ref: f64) -> DMatrix<Complex64> {
    // z_i = sum_k alpha_ik a_k + h.c.
    let mut alpha = DMatrix::from_element(4, 2, Complex64::new(0.0, 0.0));
    for k in 0..2 {
        alpha[(k, k)] = Complex64::new(1.0 / (2.0 * omega_ref).sqrt(), 0.0);
        alpha[(k + 2, k)] = Complex64::new(0.0, -(0.5 * omega_ref).sqrt());
    }
    let hc = h.map(|x| Complex64::new(x, 0.0));
    alpha.adjoint() * hc * alpha
}

/// Largest drift of total site quanta while evolving under the RW-projected protocol.
pub fn rw_quanta_drift(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    site_occupations: [usize; 2],
    n_max: usize,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let space = FockSpace::new(n_max, params.omega_b);
    let dim = space.dim();
    let mut y = vec![0.0; 2 * dim];
    y[space.join(site_occupations)] = 1.0;
    let n0 = (site_occupations[0] + site_occupations[1]) as f64;
    let failure = std::cell::RefCell::new(None);
    let rhs = |t: f64, v: &[f64], out: &mut [f64]| {
        let psi: CVec = (0..dim).map(|i| Complex64::new(v[i], v[dim + i])).collect();
        match protocol.form(params, schedule, t.clamp(0.0, schedule.duration())) {
            Ok(form) => {
                let h = rw_projection(&form.h, params.omega_b);
                let mut hpsi = vec![Complex64::new(0.0, 0.0); dim];
                for k in 0..2 {
                    for l in 0..2 {
                        let down = space.ladder(l, false, &psi);
                        for (o, u) in hpsi.iter_mut().zip(space.ladder(k, true, &down)) {
                            *o += h[(k, l)] * u;
                        }
                    }
                }
                for i in 0..dim {
                    out[i] = hpsi[i].im;
                    out[dim + i] = -hpsi[i].re;
                }
            }
            Err(e) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                failure.borrow_mut().get_or_insert(e);
            }
        }
    };
    let mut drift: f64 = 0.0;
    let mut stepper = Dop853::new(cfg.clone());
    let mut h = None;
    let segments = 8;
    for j in 1..=segments {
        let t0 = schedule.duration() * (j - 1) as f64 / segments as f64;
        let t1 = schedule.duration() * j as f64 / segments as f64;
        h = Some(stepper.integrate(&rhs, t0, t1, &mut y, h)?.next_h);
        let quanta: f64 = (0..dim)
            .map(|i| {
                let m = space.split(i);
                (m[0] + m[1]) as f64 * (y[i] * y[i] + y[dim + i] * y[dim + i])
            })
            .sum();
        drift = drift.max((quanta - n0).abs());
    }
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(drift)
}
