//! Normal modes, Gaussian and Fock initial states, and energy observables.

use crate::dynamics::{symplectic_unit, BogoliubovMap};
use crate::error::{Error, Result};
use crate::protocols::{ChainCoefficients, ChainParams, QuadraticForm};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Normal-mode frequencies and the symplectic map z -> (Q, Pi).
///
/// In normal coordinates H = sum_k omega_k (Q_k^2 + Pi_k^2) / 2.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeBasis {
    /// Ascending.
    pub frequencies: Vec<f64>,
    pub transform: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl ModeBasis {
    /// Builds T = diag(D^1/2 O^T, D^-1/2 O^T) from an orthogonal O whose
    /// columns are the eigenvectors of the potential block.
    pub fn from_orthogonal(o: &DMatrix<f64>, omega2: &[f64]) -> Result<Self> {
        let n = omega2.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| omega2[a].total_cmp(&omega2[b]));
        let mut freqs = Vec::with_capacity(n);
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        let mut ti = DMatrix::zeros(2 * n, 2 * n);
        for (k, &col) in idx.iter().enumerate() {
            let w2 = omega2[col];
            if !(w2 > 0.0) {
                return Err(Error::UnstableMode(w2));
            }
            let w = w2.sqrt();
            freqs.push(w);
            let (s, si) = (w.sqrt(), 1.0 / w.sqrt());
            for j in 0..n {
                let v = o[(j, col)];
                t[(k, j)] = s * v;
                t[(n + k, n + j)] = si * v;
                ti[(j, k)] = si * v;
                ti[(n + j, n + k)] = s * v;
            }
        }
        Ok(ModeBasis {
            frequencies: freqs,
            transform: t,
            inverse: ti,
        })
    }

    /// Normal modes of a form with unit kinetic block and no x-p terms.
    pub fn from_form(form: &QuadraticForm) -> Result<Self> {
        let n = form.n;
        if !form.has_unit_kinetic_block() || form.h.view((0, n), (n, n)).amax() > 1e-12 {
            return Err(Error::InvalidParams("normal modes need a unit-mass form without x-p terms".into()));
        }
        let v = form.h.view((0, 0), (n, n)).into_owned();
        let eig = SymmetricEigen::new(v);
        let mut o = eig.eigenvectors;
        // deterministic sign: largest component positive
        for c in 0..n {
            let mut col = o.column_mut(c);
            let imax = col.iamax();
            if col[imax] < 0.0 {
                col.neg_mut();
            }
        }
        Self::from_orthogonal(&o, eig.eigenvalues.as_slice())
    }

    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    /// Sum of omega_k (n_k + 1/2) for a Fock configuration.
    pub fn fock_energy(&self, occ: &[u32]) -> f64 {
        self.frequencies
            .iter()
            .zip(occ)
            .map(|(w, &n)| w * (n as f64 + 0.5))
            .sum()
    }
}

/// omega_+-^2 = omega_B^2 (1 + lambda/2 +- sqrt(lambda^2/4 + gamma^2)).
pub fn two_mode_frequencies(lambda: f64, gamma: f64, omega_b: f64) -> (f64, f64) {
    let w2 = omega_b * omega_b;
    let r = (0.25 * lambda * lambda + gamma * gamma).sqrt();
    (w2 * (1.0 + 0.5 * lambda - r), w2 * (1.0 + 0.5 * lambda + r))
}

/// Normal modes of S coupled to a single bath oscillator; mode 0 is the
/// lower branch.
pub fn two_mode_basis(lambda: f64, gamma: f64, omega_b: f64) -> Result<ModeBasis> {
    let (wm, wp) = two_mode_frequencies(lambda, gamma, omega_b);
    if !(wm > 0.0) {
        return Err(Error::UnstableMode(wm));
    }
    let w2 = omega_b * omega_b;
    // eigenvector of [[w2(1+l), -g w2], [-g w2, w2]] for the upper branch
    let (a, b) = (w2 * (1.0 + lambda) - wp, -gamma * w2);
    let (mut ux, mut ub) = if b.abs() > 0.0 {
        (-b, a)
    } else if lambda > 0.0 {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (ux * ux + ub * ub).sqrt();
    ux /= norm;
    ub /= norm;
    if ux.abs() >= ub.abs() && ux < 0.0 || ub.abs() > ux.abs() && ub < 0.0 {
        ux = -ux;
        ub = -ub;
    }
    // lower branch orthogonal to the upper one
    let o = DMatrix::from_row_slice(2, 2, &[-ub, ux, ux, ub]);
    ModeBasis::from_orthogonal(&o, &[wm, wp])
}

/// Sine-transform normal modes of the open chain.
pub fn bath_basis(n: usize, omega_b: f64, gamma_bb: f64) -> Result<ModeBasis> {
    let w2 = omega_b * omega_b;
    let scale = (2.0 / (n as f64 + 1.0)).sqrt();
    let mut o = DMatrix::zeros(n, n);
    let mut omega2 = Vec::with_capacity(n);
    for k in 1..=n {
        let th = std::f64::consts::PI * k as f64 / (n as f64 + 1.0);
        omega2.push(w2 * (1.0 - 2.0 * gamma_bb * th.cos()));
        for j in 1..=n {
            o[(j - 1, k - 1)] = scale * (th * j as f64).sin();
        }
    }
    ModeBasis::from_orthogonal(&o, &omega2)
}

/// Normal modes of the full chain (S plus bath) for static coefficients.
pub fn chain_basis(params: &ChainParams, c: &ChainCoefficients) -> Result<ModeBasis> {
    ModeBasis::from_form(&c.form(params))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Quantum,
    Classical,
}

/// First and symmetrized second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub statistics: Statistics,
}

impl GaussianState {
    pub fn zero(n: usize, statistics: Statistics) -> Self {
        GaussianState {
            mean: DVector::zeros(2 * n),
            cov: DMatrix::zeros(2 * n, 2 * n),
            statistics,
        }
    }

    pub fn modes(&self) -> usize {
        self.mean.len() / 2
    }

    /// Symmetry and positive semidefiniteness up to roundoff.
    pub fn check_psd(&self) -> Result<()> {
        let scale = self.cov.amax().max(1e-300);
        if (&self.cov - self.cov.transpose()).amax() > 1e-9 * scale {
            return Err(Error::NonPsdInput);
        }
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let min = SymmetricEigen::new(sym).eigenvalues.min();
        if min < -1e-9 * scale {
            return Err(Error::NonPsdInput);
        }
        Ok(())
    }

    /// Second moments <z z^T> including the mean.
    pub fn moments(&self) -> DMatrix<f64> {
        &self.cov + &self.mean * self.mean.transpose()
    }

    /// <z^T H z / 2>.
    pub fn energy(&self, h: &DMatrix<f64>) -> f64 {
        0.5 * (h.component_mul(&self.moments())).sum()
    }

    /// Variance of z^T H z / 2 for a zero-mean state.
    pub fn energy_variance(&self, h: &DMatrix<f64>) -> f64 {
        let hs = h * &self.cov;
        let mut var = 0.5 * (&hs * &hs).trace();
        if self.statistics == Statistics::Quantum {
            let j = symplectic_unit(self.modes());
            let hj = h * &j;
            var += 0.125 * (&hj * &hj).trace();
        }
        let hm = h * &self.mean;
        var + hm.dot(&(&self.cov * &hm))
    }

    /// Sub-state over the given mode indices, in (x..., p...) order.
    pub fn select(&self, modes: &[usize]) -> GaussianState {
        let n = self.modes();
        let idx: Vec<usize> = modes.iter().copied().chain(modes.iter().map(|m| m + n)).collect();
        let k = idx.len();
        GaussianState {
            mean: DVector::from_fn(k, |i, _| self.mean[idx[i]]),
            cov: DMatrix::from_fn(k, k, |i, j| self.cov[(idx[i], idx[j])]),
            statistics: self.statistics,
        }
    }
}

/// Thermal state of the modes in `basis`, in site coordinates.
pub fn thermal_state(t: f64, basis: &ModeBasis, statistics: Statistics) -> Result<GaussianState> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTemperature);
    }
    let occ: Vec<f64> = basis
        .frequencies
        .iter()
        .map(|&w| match statistics {
            Statistics::Classical => t / w,
            Statistics::Quantum => 1.0 / (w / t).exp_m1(),
        })
        .collect();
    Ok(state_from_occupations(basis, &occ, statistics))
}

/// Diagonal Gaussian with the given mean occupations per normal mode.
pub fn state_from_occupations(basis: &ModeBasis, occ: &[f64], statistics: Statistics) -> GaussianState {
    let n = basis.modes();
    let half = if statistics == Statistics::Quantum { 0.5 } else { 0.0 };
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for (k, &o) in occ.iter().enumerate() {
        c[(k, k)] = o + half;
        c[(n + k, n + k)] = o + half;
    }
    GaussianState {
        mean: DVector::zeros(2 * n),
        cov: &basis.inverse * c * basis.inverse.transpose(),
        statistics,
    }
}

/// Moment embedding of a Fock configuration (same second moments).
pub fn fock_moments(basis: &ModeBasis, occ: &[u32]) -> GaussianState {
    let o: Vec<f64> = occ.iter().map(|&n| n as f64).collect();
    state_from_occupations(basis, &o, Statistics::Quantum)
}

/// <n_k> per normal mode.
pub fn mean_occupations(state: &GaussianState, basis: &ModeBasis) -> Result<Vec<f64>> {
    let n = basis.modes();
    if state.modes() != n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: state.mean.len(),
        });
    }
    let t = &basis.transform;
    let m = t * state.moments() * t.transpose();
    let half = if state.statistics == Statistics::Quantum { 0.5 } else { 0.0 };
    Ok((0..n).map(|k| 0.5 * (m[(k, k)] + m[(n + k, n + k)]) - half).collect())
}

/// Per-mode occupations at lambda_i.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpec {
    pub occupations: Vec<u32>,
}

/// <n| o_{k_1} ... o_{k_m} |n> for ladder strings on a product Fock state.
///
/// `ops[i] = (mode, dagger)`, applied right to left.
pub fn fock_string_expectation(occ: &[u32], ops: &[(usize, bool)]) -> f64 {
    let mut value = 1.0;
    for (mode, &n0) in occ.iter().enumerate() {
        let mut level = n0 as i64;
        let mut amp = 1.0;
        for &(m, dag) in ops.iter().rev() {
            if m != mode {
                continue;
            }
            if dag {
                level += 1;
                amp *= (level as f64).sqrt();
            } else {
                if level == 0 {
                    return 0.0;
                }
                amp *= (level as f64).sqrt();
                level -= 1;
            }
        }
        if level != n0 as i64 {
            return 0.0;
        }
        value *= amp;
    }
    value
}

/// Means and covariance of the final normal-mode numbers b_a^dag b_a after
/// a Bogoliubov map acting on a product Fock state.
pub fn fock_number_moments(fock: &FockSpec, map: &BogoliubovMap) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = map.u.nrows();
    if fock.occupations.len() != n {
        return Err(Error::BasisMismatch);
    }
    let res = map.unitarity_residual();
    if res > 1e-6 {
        return Err(Error::InvalidMap(res));
    }
    let occ = &fock.occupations;
    // ladder index i < n is a_i, i >= n is a_{i-n}^dag
    let op = |i: usize| (i % n, i >= n);
    let dag = |i: usize| if i < n { i + n } else { i - n };
    let coef = |a: usize| -> Vec<Complex64> {
        (0..2 * n)
            .map(|i| if i < n { map.u[(a, i)] } else { map.v[(a, i - n)] })
            .collect()
    };
    let coefs: Vec<Vec<Complex64>> = (0..n).map(coef).collect();
    // N_a = sum_ij conj(c_i) c_j o_dag(i) o_j
    let nz: Vec<Vec<(usize, usize, Complex64)>> = coefs
        .iter()
        .map(|c| {
            let mut terms = Vec::new();
            for i in 0..2 * n {
                for j in 0..2 * n {
                    let w = c[i].conj() * c[j];
                    if w.norm() > 0.0 {
                        terms.push((dag(i), j, w));
                    }
                }
            }
            terms
        })
        .collect();
    let mut mean_n = vec![0.0; n];
    for a in 0..n {
        let s: Complex64 = nz[a]
            .iter()
            .map(|&(p, q, w)| w * fock_string_expectation(occ, &[op(p), op(q)]))
            .sum();
        mean_n[a] = s.re;
    }
    let mut cov = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for &(p, q, wa) in &nz[a] {
                for &(r, t, wb) in &nz[b] {
                    let e = fock_string_expectation(occ, &[op(p), op(q), op(r), op(t)]);
                    if e != 0.0 {
                        s += wa * wb * e;
                    }
                }
            }
            cov[(a, b)] = s.re - mean_n[a] * mean_n[b];
        }
    }
    Ok((mean_n, cov))
}

/// Energy and variance of H(lambda_f) = sum omega_a (b_a^dag b_a + 1/2)
/// after a Bogoliubov map acting on a product Fock state.
pub fn fock_energy_stats(fock: &FockSpec, map: &BogoliubovMap, final_basis: &ModeBasis) -> Result<(f64, f64)> {
    let n = map.u.nrows();
    if final_basis.modes() != n {
        return Err(Error::BasisMismatch);
    }
    let (mean_n, cov) = fock_number_moments(fock, map)?;
    let w = &final_basis.frequencies;
    let energy: f64 = (0..n).map(|a| w[a] * (mean_n[a] + 0.5)).sum();
    let mut second = 0.0;
    for a in 0..n {
        for b in 0..n {
            second += w[a] * w[b] * cov[(a, b)];
        }
    }
    Ok((energy, second.max(0.0)))
}

/// W = ((E - E_ad)^2 + sigma^2) / omega_B^2.
pub fn energy_infidelity(e: f64, sigma2: f64, e_ad: f64, omega_b: f64) -> Result<f64> {
    if sigma2 < 0.0 {
        return Err(Error::NegativeVariance(sigma2));
    }
    Ok(((e - e_ad).powi(2) + sigma2) / (omega_b * omega_b))
}

/// Dense form of H_bath for the chain (S excluded), 2N x 2N.
pub fn bath_form(params: &ChainParams) -> DMatrix<f64> {
    let nb = params.n_bath;
    let w2 = params.omega_b * params.omega_b;
    let g = params.gamma_bb * w2;
    let mut h = DMatrix::zeros(2 * nb, 2 * nb);
    for j in 0..nb {
        h[(j, j)] = w2;
        h[(nb + j, nb + j)] = 1.0;
        if j + 1 < nb {
            h[(j, j + 1)] = -g;
            h[(j + 1, j)] = -g;
        }
    }
    h
}

/// <H_bath> for a chain state (S at mode 0) or a bath-only state.
pub fn bath_energy(state: &GaussianState, params: &ChainParams) -> Result<f64> {
    let nb = params.n_bath;
    let sub = match state.modes() {
        m if m == nb + 1 => state.select(&(1..=nb).collect::<Vec<_>>()),
        m if m == nb => state.clone(),
        _ => {
            return Err(Error::DimensionMismatch {
                expected: 2 * (nb + 1),
                got: state.mean.len(),
            })
        }
    };
    Ok(sub.energy(&bath_form(params)))
}

/// Signed heat: energy gained by the bath.
pub fn heat_signed(before: f64, after: f64) -> f64 {
    after - before
}

/// Q = |Delta <H_bath>|.
pub fn heat(before: f64, after: f64) -> f64 {
    heat_signed(before, after).abs()
}
