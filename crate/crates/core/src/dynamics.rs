//! Linear phase-space dynamics of quadratic Hamiltonians.
//!
//! The propagator solves dM/dt = A(t) M with A = J H. For protocol forms the
//! generator is applied through the chain structure in O(n) per column, so a
//! step costs O(n^2) instead of a dense matrix product.

use crate::error::{Error, Result};
use crate::integrator::{Dop853, IntegratorConfig};
use crate::protocols::{ChainCoefficients, ChainParams, Protocol, QuadraticForm};
use crate::ramp::RampSchedule;
use crate::states::{GaussianState, ModeBasis};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::cell::RefCell;

/// Symplectic defect above which a propagation is rejected.
pub const DEFECT_LIMIT: f64 = 1e-6;

/// J = [[0, I], [-I, 0]] for n modes.
pub fn symplectic_unit(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// A = J H.
pub fn generator(form: &QuadraticForm) -> Result<DMatrix<f64>> {
    let checked = QuadraticForm::new(form.h.clone())?;
    Ok(symplectic_unit(checked.n) * &checked.h)
}

/// |M^T J M - J|_F.
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = symplectic_unit(m.nrows() / 2);
    (m.transpose() * &j * m - &j).norm()
}

/// Transfer matrix over [t_start, t_end].
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticPropagator {
    pub m: DMatrix<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub n: usize,
}

impl SymplecticPropagator {
    pub fn identity(n: usize, t: f64) -> Self {
        SymplecticPropagator {
            m: DMatrix::identity(2 * n, 2 * n),
            t_start: t,
            t_end: t,
            n,
        }
    }

    pub fn defect(&self) -> f64 {
        symplectic_defect(&self.m)
    }

    /// `later` applied after `self`.
    pub fn then(&self, later: &SymplecticPropagator) -> SymplecticPropagator {
        SymplecticPropagator {
            m: &later.m * &self.m,
            t_start: self.t_start,
            t_end: later.t_end,
            n: self.n,
        }
    }
}

/// Writes A(t) z into `out` for one phase-space vector of the chain.
pub fn apply_chain(params: &ChainParams, c: &ChainCoefficients, z: &[f64], out: &mut [f64]) {
    let n = params.modes();
    let nb = params.n_bath;
    let w2 = params.omega_b * params.omega_b;
    let g = params.gamma_bb * w2;
    let (x, p) = z.split_at(n);
    let (dx, dp) = out.split_at_mut(n);
    dx.copy_from_slice(p);
    for j in 1..=nb {
        let mut f = -w2 * x[j];
        if j > 1 {
            f += g * x[j - 1];
        }
        if j < nb {
            f += g * x[j + 1];
        }
        dp[j] = f;
    }
    let s = params.site();
    let [b1, b2, b3, b4] = c.b;
    dx[0] += b1 * x[0] + b3 * x[s];
    dx[s] += b2 * x[0] + b4 * x[s];
    dp[0] = -c.ws2 * x[0] + c.coupling * x[s] - b1 * p[0] - b2 * p[s];
    dp[s] += -c.bath_shift * x[s] + c.coupling * x[0] - b3 * p[0] - b4 * p[s];
}

/// Applies A to every column of a column-major 2n x k block.
fn apply_chain_columns(params: &ChainParams, c: &ChainCoefficients, m: &[f64], out: &mut [f64]) {
    let dim = 2 * params.modes();
    for (col, o) in m.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        apply_chain(params, c, col, o);
    }
}

/// Result of a protocol propagation with optional intermediate snapshots.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub propagator: SymplecticPropagator,
    /// (t, M(t)) at each requested checkpoint time.
    pub checkpoints: Vec<(f64, DMatrix<f64>)>,
    pub steps: usize,
}

/// Propagates the chain under time-dependent coefficients from t0 to t1,
/// starting from `m0` (2n x k, column-major), stopping at each checkpoint.
pub fn propagate_columns<F>(
    params: &ChainParams,
    coeffs: F,
    t0: f64,
    t1: f64,
    m0: DMatrix<f64>,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
) -> Result<(DMatrix<f64>, Vec<(f64, DMatrix<f64>)>, usize)>
where
    F: Fn(f64) -> Result<ChainCoefficients>,
{
    let dim = 2 * params.modes();
    if m0.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: m0.nrows(),
        });
    }
    let ncols = m0.ncols();
    let mut y: Vec<f64> = m0.as_slice().to_vec();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let rhs = |t: f64, m: &[f64], out: &mut [f64]| match coeffs(t) {
        Ok(c) => apply_chain_columns(params, &c, m, out),
        Err(e) => {
            out.iter_mut().for_each(|v| *v = 0.0);
            failure.borrow_mut().get_or_insert(e);
        }
    };
    let mut stepper = Dop853::new(cfg.clone());
    let mut stops: Vec<f64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| (c - t0) * (t1 - t0) > 0.0 && (t1 - c) * (t1 - t0) >= 0.0)
        .collect();
    stops.sort_by(|a, b| ((a - t0).abs()).total_cmp(&(b - t0).abs()));
    let mut snaps = Vec::with_capacity(stops.len());
    let mut t = t0;
    let mut h = None;
    let mut steps = 0;
    for &stop in stops.iter().chain(std::iter::once(&t1)) {
        if stop != t {
            let st = stepper.integrate(rhs, t, stop, &mut y, h)?;
            steps += st.accepted;
            h = Some(st.next_h);
            t = stop;
        }
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if checkpoints.contains(&stop) {
            snaps.push((stop, DMatrix::from_column_slice(dim, ncols, &y)));
        }
    }
    Ok((DMatrix::from_column_slice(dim, ncols, &y), snaps, steps))
}

/// M(t) for a protocol over the full schedule, with snapshots at the
/// given times.
pub fn propagate(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
) -> Result<Propagation> {
    propagate_interval(protocol, params, schedule, 0.0, schedule.duration(), cfg, checkpoints)
}

/// M over [t0, t1] of the schedule.
pub fn propagate_interval(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
) -> Result<Propagation> {
    params.validate()?;
    protocol.check_omega(params, schedule);
    let mut cfg = cfg.clone();
    if let Some(ceiling) = protocol.step_ceiling() {
        let ceiling = ceiling * 40.0 / cfg.floquet_substeps.max(1) as f64;
        cfg.max_step = Some(cfg.max_step.map_or(ceiling, |m| m.min(ceiling)));
    }
    let n = params.modes();
    let coeffs = |t: f64| protocol.coefficients(params, schedule, t.clamp(0.0, schedule.duration()));
    let (m, checkpoints, steps) =
        propagate_columns(params, coeffs, t0, t1, DMatrix::identity(2 * n, 2 * n), &cfg, checkpoints)?;
    let defect = symplectic_defect(&m);
    if defect > DEFECT_LIMIT {
        return Err(Error::SymplecticDefectExceeded(defect));
    }
    Ok(Propagation {
        propagator: SymplecticPropagator {
            m,
            t_start: t0,
            t_end: t1,
            n,
        },
        checkpoints,
        steps,
    })
}

/// Times at which the schedule passes the given lambda values.
pub fn checkpoint_times(schedule: &RampSchedule, lambdas: &[f64]) -> Vec<f64> {
    lambdas.iter().filter_map(|&l| schedule.time_at(l)).collect()
}

/// M for a static dense form over [0, tau].
pub fn propagate_static(form: &QuadraticForm, tau: f64, cfg: &IntegratorConfig) -> Result<SymplecticPropagator> {
    let a = generator(form)?;
    let dim = 2 * form.n;
    let mut y: Vec<f64> = DMatrix::<f64>::identity(dim, dim).as_slice().to_vec();
    let mut stepper = Dop853::new(cfg.clone());
    stepper.integrate(
        |_, m, out| {
            let mm = DMatrix::from_column_slice(dim, dim, m);
            out.copy_from_slice((&a * mm).as_slice());
        },
        0.0,
        tau,
        &mut y,
        None,
    )?;
    Ok(SymplecticPropagator {
        m: DMatrix::from_column_slice(dim, dim, &y),
        t_start: 0.0,
        t_end: tau,
        n: form.n,
    })
}

/// Exact evolution under a static Hamiltonian whose normal modes are `basis`.
pub fn free_evolution(basis: &ModeBasis, tau: f64) -> SymplecticPropagator {
    let n = basis.frequencies.len();
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for (k, &w) in basis.frequencies.iter().enumerate() {
        let (s, c) = (w * tau).sin_cos();
        r[(k, k)] = c;
        r[(k, n + k)] = s;
        r[(n + k, k)] = -s;
        r[(n + k, n + k)] = c;
    }
    SymplecticPropagator {
        m: &basis.inverse * r * &basis.transform,
        t_start: 0.0,
        t_end: tau,
        n,
    }
}

/// mean -> M mean, cov -> M cov M^T.
pub fn evolve_gaussian(m: &DMatrix<f64>, state: &GaussianState) -> Result<GaussianState> {
    if m.nrows() != state.cov.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: state.cov.nrows(),
        });
    }
    state.check_psd()?;
    Ok(GaussianState {
        mean: m * &state.mean,
        cov: m * &state.cov * m.transpose(),
        statistics: state.statistics,
    })
}

/// b_f = U a_i + V a_i^dagger in normal-mode ladder operators.
#[derive(Clone, Debug, PartialEq)]
pub struct BogoliubovMap {
    pub u: DMatrix<Complex64>,
    pub v: DMatrix<Complex64>,
}

impl BogoliubovMap {
    /// max |U U^dag - V V^dag - 1|.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.u.nrows();
        let r = &self.u * self.u.adjoint() - &self.v * self.v.adjoint() - DMatrix::<Complex64>::identity(n, n);
        r.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |U V^T - (U V^T)^T|.
    pub fn symmetry_residual(&self) -> f64 {
        let w = &self.u * self.v.transpose();
        (&w - w.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Bogoliubov coefficients of M between two normal-mode bases.
pub fn bogoliubov_map(m: &DMatrix<f64>, basis_i: &ModeBasis, basis_f: &ModeBasis) -> Result<BogoliubovMap> {
    let dim = m.nrows();
    if basis_i.transform.nrows() != dim || basis_f.transform.nrows() != dim || m.ncols() != dim {
        return Err(Error::BasisMismatch);
    }
    let n = dim / 2;
    let k = &basis_f.transform * m * &basis_i.inverse;
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (qq, qp, pq, pp) = (k[(a, b)], k[(a, n + b)], k[(n + a, b)], k[(n + a, n + b)]);
            u[(a, b)] = Complex64::new(0.5 * (qq + pp), 0.5 * (pq - qp));
            v[(a, b)] = Complex64::new(0.5 * (qq - pp), 0.5 * (pq + qp));
        }
    }
    Ok(BogoliubovMap { u, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::ProtocolKind;
    use crate::ramp::build_schedule;
    use crate::states::{bath_basis, ModeBasis};

    #[test]
    fn single_oscillator_generator() {
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 0)] = 4.0;
        h[(1, 1)] = 1.0;
        let a = generator(&QuadraticForm::new(h).unwrap()).unwrap();
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(1, 0)], -4.0);
        assert_eq!(a[(0, 0)], 0.0);
    }

    #[test]
    fn asymmetric_form_rejected() {
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 1)] = 1.0;
        assert_eq!(QuadraticForm::new(h).unwrap_err(), Error::AsymmetricForm);
    }

    #[test]
    fn fast_apply_matches_dense_generator() {
        let mut p = ChainParams::chain(6, 1.3, 0.04, 0.07);
        p.attach_site = Some(2);
        let c = ChainCoefficients {
            ws2: 1.9,
            coupling: 0.05,
            bath_shift: 0.3,
            b: [0.11, -0.2, 0.37, 0.05],
        };
        let a = generator(&c.form(&p)).unwrap();
        let z: Vec<f64> = (0..14).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3 + i as f64 * 0.01).collect();
        let mut out = vec![0.0; 14];
        apply_chain(&p, &c, &z, &mut out);
        let dense = &a * nalgebra::DVector::from_vec(z);
        for i in 0..14 {
            assert!((out[i] - dense[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn defect_of_identity_and_perturbed() {
        let m = DMatrix::<f64>::identity(4, 4);
        assert_eq!(symplectic_defect(&m), 0.0);
        let mut m2 = m.clone();
        m2[(0, 0)] = 1.01;
        assert!(symplectic_defect(&m2) > 0.0);
    }

    #[test]
    fn free_evolution_matches_integration() {
        let p = ChainParams::chain(4, 1.1, 0.02, 0.1);
        let basis = bath_basis(4, 1.1, 0.1).unwrap();
        let free = free_evolution(&basis, 3.7);
        let c = ChainCoefficients::default();
        let form = c.form(&p);
        let num = propagate_static(&form, 3.7, &IntegratorConfig::default()).unwrap();
        // compare the bath block (indices 1..=4 and 6..=9)
        for i in 0..4 {
            for j in 0..4 {
                for (oi, oj) in [(0, 0), (0, 4), (4, 0), (4, 4)] {
                    let a = free.m[(i + oi, j + oj)];
                    let b = num.m[(1 + i + oi + oi / 4, 1 + j + oj + oj / 4)];
                    assert!((a - b).abs() < 1e-8, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn composition_across_checkpoint() {
        let p = ChainParams::two_oscillator(1.0, 0.05);
        let s = build_schedule(-0.5, 0.5, 0.05, 0.2).unwrap();
        let proto = Protocol::new(ProtocolKind::Ua);
        let cfg = IntegratorConfig::default();
        let whole = propagate(&proto, &p, &s, &cfg, &[]).unwrap();
        let tm = 2.1;
        let a = propagate_interval(&proto, &p, &s, 0.0, tm, &cfg, &[]).unwrap();
        let b = propagate_interval(&proto, &p, &s, tm, s.duration(), &cfg, &[]).unwrap();
        let comp = a.propagator.then(&b.propagator);
        assert!((&comp.m - &whole.propagator.m).norm() < 1e-8);
        let snap = propagate(&proto, &p, &s, &cfg, &[tm]).unwrap();
        assert!((&snap.checkpoints[0].1 - &a.propagator.m).norm() < 1e-8);
    }

    #[test]
    fn bogoliubov_identity() {
        let b = ModeBasis::from_form(&ChainCoefficients {
            ws2: 2.0,
            coupling: 0.1,
            ..Default::default()
        }
        .form(&ChainParams::two_oscillator(1.0, 0.1)))
        .unwrap();
        let map = bogoliubov_map(&DMatrix::identity(4, 4), &b, &b).unwrap();
        assert!(map.unitarity_residual() < 1e-12);
        assert!(map.v.iter().all(|z| z.norm() < 1e-12));
        for i in 0..2 {
            assert!((map.u[(i, i)].re - 1.0).abs() < 1e-12);
        }
    }
}
