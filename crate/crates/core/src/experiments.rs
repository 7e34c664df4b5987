//! Figure-level experiments built from the library pieces.

use crate::dynamics::{bogoliubov_map, propagate};
use crate::error::Result;
use crate::integrator::IntegratorConfig;
use crate::protocols::{ChainParams, Protocol};
use crate::ramp::RampSchedule;
use crate::engine::{run_cycle_with, CycleResult, EngineConfig, StrokeMaps};
use crate::states::{energy_infidelity, fock_energy_stats, fock_number_moments, two_mode_basis, FockSpec};
use rayon::prelude::*;
use serde::Serialize;

/// Final-state observables of a two-oscillator ramp from a Fock state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityOutcome {
    pub energy: f64,
    pub sigma2: f64,
    pub e_ad: f64,
    pub w: f64,
    /// <n_-> and <n_+> at lambda_f.
    pub occupations: Vec<f64>,
    pub defect: f64,
    pub steps: usize,
}

/// Runs one ramp of S plus a single bath oscillator and scores it.
pub fn fidelity_run(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    fock: &FockSpec,
    cfg: &IntegratorConfig,
) -> Result<FidelityOutcome> {
    let prop = propagate(protocol, params, schedule, cfg, &[])?;
    let bi = two_mode_basis(schedule.lambda_i, params.gamma_sb, params.omega_b)?;
    let bf = two_mode_basis(schedule.lambda_f, params.gamma_sb, params.omega_b)?;
    let map = bogoliubov_map(&prop.propagator.m, &bi, &bf)?;
    let (energy, sigma2) = fock_energy_stats(fock, &map, &bf)?;
    let e_ad = bf.fock_energy(&fock.occupations);
    let occupations = (0..2)
        .map(|a| {
            (0..2)
                .map(|k| {
                    let n = fock.occupations[k] as f64;
                    map.u[(a, k)].norm_sqr() * n + map.v[(a, k)].norm_sqr() * (n + 1.0)
                })
                .sum()
        })
        .collect();
    Ok(FidelityOutcome {
        energy,
        sigma2,
        e_ad,
        w: energy_infidelity(energy, sigma2, e_ad, params.omega_b)?,
        occupations,
        defect: prop.propagator.defect(),
        steps: prop.steps,
    })
}

/// Pipeline versus brute-force oracle on one two-oscillator instance.
#[derive(Clone, Debug, Serialize)]
pub struct OracleAgreement {
    pub pipeline: FidelityOutcome,
    pub oracle: crate::oracle::OracleOutcome,
    /// Largest relative gap over E, sigma_E^2 and <n_+->.
    pub max_relative: f64,
}

/// Relative gap with floors omega_B (E), omega_B^2 (sigma^2) and 1 (occupations).
pub fn oracle_agreement(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    fock: &FockSpec,
    n_max: usize,
    cfg: &IntegratorConfig,
) -> Result<OracleAgreement> {
    let pipeline = fidelity_run(protocol, params, schedule, fock, cfg)?;
    let oracle = crate::oracle::evolve_fock(protocol, params, schedule, fock, n_max, cfg)?;
    let w = params.omega_b;
    let rel = |a: f64, b: f64, floor: f64| (a - b).abs() / b.abs().max(floor);
    let mut worst = rel(pipeline.energy, oracle.energy, w).max(rel(pipeline.sigma2, oracle.sigma2, w * w));
    for (a, b) in pipeline.occupations.iter().zip(&oracle.occupations) {
        worst = worst.max(rel(*a, *b, 1.0));
    }
    Ok(OracleAgreement {
        pipeline,
        oracle,
        max_relative: worst,
    })
}

/// Final <H_S>/T after one ramp across the bath bandwidth.
#[derive(Clone, Debug, Serialize)]
pub struct ThermalizationOutcome {
    pub speed: f64,
    pub energy_over_t: f64,
    pub defect: f64,
    pub steps: usize,
}

/// S starts uncorrelated with occupation 2T/omega_S(lambda_f); the chain starts
/// classically thermal at T. lambda runs from -2 gamma_BB to 2 gamma_BB.
pub fn thermalization_run(
    protocol: &Protocol,
    params: &ChainParams,
    speed: f64,
    temperature: f64,
    delta_fraction: f64,
    cfg: &IntegratorConfig,
) -> Result<ThermalizationOutcome> {
    let edge = 2.0 * params.gamma_bb;
    let unit = params.omega_b * params.gamma_sb * params.gamma_sb;
    let schedule = crate::ramp::build_schedule(-edge, edge, delta_fraction * 2.0 * edge, speed * unit)?;
    let nb = params.n_bath;
    let n = nb + 1;
    let w_i = crate::ramp::system_frequency(-edge, params.omega_b)?.sqrt();
    let w_f = crate::ramp::system_frequency(edge, params.omega_b)?.sqrt();
    let occ = 2.0 * temperature / w_f;
    let bath = crate::states::thermal_state(
        temperature,
        &crate::states::bath_basis(nb, params.omega_b, params.gamma_bb)?,
        crate::states::Statistics::Classical,
    )?;
    let mut cov = nalgebra::DMatrix::zeros(2 * n, 2 * n);
    cov[(0, 0)] = occ / w_i;
    cov[(n, n)] = occ * w_i;
    let idx: Vec<usize> = (1..=nb).chain(n + 1..n + 1 + nb).collect();
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            cov[(i, j)] = bath.cov[(a, b)];
        }
    }
    let prop = propagate(protocol, params, &schedule, cfg, &[])?;
    let m = &prop.propagator.m;
    // only the S rows of M Sigma M^T are needed
    let rows = nalgebra::DMatrix::from_fn(2, 2 * n, |r, c| m[(if r == 0 { 0 } else { n }, c)]);
    let s = &rows * cov * rows.transpose();
    let energy = 0.5 * (w_f * w_f * s[(0, 0)] + s[(1, 1)]);
    Ok(ThermalizationOutcome {
        speed,
        energy_over_t: energy / temperature,
        defect: prop.propagator.defect(),
        steps: prop.steps,
    })
}

/// Log-spaced grid from `lo` to `hi` inclusive with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    if !(lo > 0.0 && hi >= lo) || per_decade == 0 {
        return vec![];
    }
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round() as usize;
    if n == 0 {
        return vec![lo];
    }
    (0..=n)
        .map(|k| lo * 10f64.powf(decades * k as f64 / n as f64))
        .collect()
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One ramp shape shared by the two-oscillator sweeps; speeds are in
/// units of omega_B gamma_SB^2.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampTemplate {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub delta_fraction: f64,
}

impl RampTemplate {
    pub fn schedule(&self, params: &ChainParams, speed: f64) -> Result<RampSchedule> {
        let span = self.lambda_f - self.lambda_i;
        let unit = params.omega_b * params.gamma_sb * params.gamma_sb;
        crate::ramp::build_schedule(
            self.lambda_i,
            self.lambda_f,
            self.delta_fraction * span.abs(),
            speed * unit * span.signum(),
        )
    }
}

/// W for every (speed, protocol) pair, in grid order.
pub struct FidelitySweep {
    pub speeds: Vec<f64>,
    /// cells[speed][protocol]
    pub cells: Vec<Vec<Result<FidelityOutcome>>>,
}

pub fn fidelity_sweep(
    protocols: &[Protocol],
    params: &ChainParams,
    ramp: &RampTemplate,
    speeds: &[f64],
    fock: &FockSpec,
    cfg: &IntegratorConfig,
) -> FidelitySweep {
    let jobs: Vec<(usize, usize)> = (0..speeds.len())
        .flat_map(|i| (0..protocols.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<FidelityOutcome>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let schedule = ramp.schedule(params, speeds[i])?;
            fidelity_run(&protocols[j], params, &schedule, fock, cfg)
        })
        .collect();
    let mut it = results.into_iter();
    let cells = speeds
        .iter()
        .map(|_| (0..protocols.len()).map(|_| it.next().unwrap()).collect())
        .collect();
    FidelitySweep {
        speeds: speeds.to_vec(),
        cells,
    }
}

/// W against 1/Omega for the Floquet protocol at one speed.
pub struct FeConvergence {
    pub omegas: Vec<f64>,
    pub cells: Vec<Result<FidelityOutcome>>,
    /// Log-log slope of W against 1/Omega over the successful points.
    pub slope: Option<f64>,
}

pub fn fe_convergence(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    omegas: &[f64],
    fock: &FockSpec,
    cfg: &IntegratorConfig,
) -> FeConvergence {
    let cells: Vec<Result<FidelityOutcome>> = omegas
        .par_iter()
        .map(|&om| fidelity_run(&protocol.clone().with_omega(om), params, schedule, fock, cfg))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = omegas
        .iter()
        .zip(&cells)
        .filter_map(|(om, c)| c.as_ref().ok().map(|o| (1.0 / om, o.w)))
        .unzip();
    FeConvergence {
        omegas: omegas.to_vec(),
        slope: log_log_slope(&x, &y),
        cells,
    }
}

/// <H_S>/T for every (speed, protocol) pair, in grid order.
pub struct ThermalizationSweep {
    pub speeds: Vec<f64>,
    pub cells: Vec<Vec<Result<ThermalizationOutcome>>>,
}

pub fn thermalization_sweep(
    protocols: &[Protocol],
    params: &ChainParams,
    speeds: &[f64],
    temperature: f64,
    delta_fraction: f64,
    cfg: &IntegratorConfig,
) -> ThermalizationSweep {
    let jobs: Vec<(usize, usize)> = (0..speeds.len())
        .flat_map(|i| (0..protocols.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<ThermalizationOutcome>> = jobs
        .par_iter()
        .map(|&(i, j)| thermalization_run(&protocols[j], params, speeds[i], temperature, delta_fraction, cfg))
        .collect();
    let mut it = results.into_iter();
    let cells = speeds
        .iter()
        .map(|_| (0..protocols.len()).map(|_| it.next().unwrap()).collect())
        .collect();
    ThermalizationSweep {
        speeds: speeds.to_vec(),
        cells,
    }
}

/// Speed at which a curve first covers `fraction` of the way from its first
/// to its last value, interpolated in log speed.
pub fn crossing_speed(speeds: &[f64], values: &[f64], fraction: f64) -> Option<f64> {
    if speeds.len() < 2 || speeds.len() != values.len() {
        return None;
    }
    let (a, b) = (values[0], *values.last().unwrap());
    let level = a + fraction * (b - a);
    let up = b > a;
    for k in 1..values.len() {
        let (v0, v1) = (values[k - 1], values[k]);
        let crossed = if up { v0 < level && v1 >= level } else { v0 > level && v1 <= level };
        if crossed {
            let f = (level - v0) / (v1 - v0);
            let (l0, l1) = (speeds[k - 1].ln(), speeds[k].ln());
            return Some((l0 + f * (l1 - l0)).exp());
        }
    }
    None
}

/// One engine cycle per (speed, r) point; stroke maps are shared across r.
pub struct EngineSweep {
    pub speeds: Vec<f64>,
    pub ratios: Vec<f64>,
    /// cells[speed][r]
    pub cells: Vec<Vec<Result<CycleResult>>>,
}

pub fn engine_sweep(base: &EngineConfig, speeds: &[f64], ratios: &[f64]) -> EngineSweep {
    let cells = speeds
        .par_iter()
        .map(|&s| {
            let cfg = EngineConfig { speed: s, ..base.clone() };
            match StrokeMaps::compute(&cfg) {
                Ok(maps) => ratios
                    .iter()
                    .map(|&r| run_cycle_with(&cfg.clone().with_r(r), &maps))
                    .collect(),
                Err(e) => ratios.iter().map(|_| Err(e.clone())).collect(),
            }
        })
        .collect();
    EngineSweep {
        speeds: speeds.to_vec(),
        ratios: ratios.to_vec(),
        cells,
    }
}

/// Variance of the final (+) normal-mode number after a two-oscillator ramp.
#[derive(Clone, Debug, Serialize)]
pub struct NumberVariance {
    pub mean_plus: f64,
    pub var_plus: f64,
    pub defect: f64,
}

pub fn number_variance_run(
    protocol: &Protocol,
    params: &ChainParams,
    schedule: &RampSchedule,
    fock: &FockSpec,
    cfg: &IntegratorConfig,
) -> Result<NumberVariance> {
    let prop = propagate(protocol, params, schedule, cfg, &[])?;
    let bi = two_mode_basis(schedule.lambda_i, params.gamma_sb, params.omega_b)?;
    let bf = two_mode_basis(schedule.lambda_f, params.gamma_sb, params.omega_b)?;
    let map = bogoliubov_map(&prop.propagator.m, &bi, &bf)?;
    let (mean, cov) = fock_number_moments(fock, &map)?;
    Ok(NumberVariance {
        mean_plus: mean[1],
        var_plus: cov[(1, 1)].max(0.0),
        defect: prop.propagator.defect(),
    })
}

/// Number variance against normalized speed for several gamma_SB.
pub struct CollapseCheck {
    pub speeds: Vec<f64>,
    pub gammas: Vec<f64>,
    /// cells[speed][gamma]
    pub cells: Vec<Vec<Result<NumberVariance>>>,
}

pub fn collapse_check(
    protocol: &Protocol,
    omega_b: f64,
    gammas: &[f64],
    ramp: &RampTemplate,
    speeds: &[f64],
    fock: &FockSpec,
    cfg: &IntegratorConfig,
) -> CollapseCheck {
    let jobs: Vec<(usize, usize)> = (0..speeds.len())
        .flat_map(|i| (0..gammas.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<NumberVariance>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let params = ChainParams::two_oscillator(omega_b, gammas[j]);
            let schedule = ramp.schedule(&params, speeds[i])?;
            number_variance_run(protocol, &params, &schedule, fock, cfg)
        })
        .collect();
    let mut it = results.into_iter();
    let cells = speeds
        .iter()
        .map(|_| (0..gammas.len()).map(|_| it.next().unwrap()).collect())
        .collect();
    CollapseCheck {
        speeds: speeds.to_vec(),
        gammas: gammas.to_vec(),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_both_ends() {
        let g = log_grid(0.1, 1e3, 2);
        assert_eq!(g.len(), 9);
        assert!((g[0] - 0.1).abs() < 1e-15);
        assert!((g[8] - 1e3).abs() < 1e-9);
        assert!((g[2] - 1.0).abs() < 1e-12);
        assert!(log_grid(1.0, 0.5, 2).is_empty());
        assert_eq!(log_grid(2.0, 2.0, 4), vec![2.0]);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 1.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&[1.0], &[1.0]), None);
        assert_eq!(log_log_slope(&[1.0, 2.0], &[0.0, -1.0]), None);
    }

    #[test]
    fn crossing_interpolates_in_log_speed() {
        let s = [1.0, 10.0, 100.0];
        let v = [0.0, 0.0, 1.0];
        let c = crossing_speed(&s, &v, 0.5).unwrap();
        assert!((c - 10f64.powf(1.5)).abs() < 1e-9);
        let down = [1.0, 1.0, 0.0];
        assert!((crossing_speed(&s, &down, 0.5).unwrap() - c).abs() < 1e-9);
        assert_eq!(crossing_speed(&s, &[1.0, 1.0, 1.0], 0.5), None);
    }
}
