//! Four-stroke oscillator engine between two optical-phonon chains.
//!
//! Phase-space layout of the full state: mode 0 is S, modes 1..=N the cold
//! chain, modes N+1..=2N the hot chain; x block first, then p block.

use crate::dynamics::{free_evolution, propagate};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::protocols::{ChainParams, CoeffMode, Protocol, ProtocolKind};
use crate::ramp::build_schedule;
use crate::states::{bath_basis, bath_form, thermal_state, GaussianState, Statistics};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RelaxPolicy {
    /// Idle until the bath has been disconnected for factor/(omega gamma_BB).
    Wait { factor: f64 },
    /// Attach S to an unperturbed thermal segment before every stroke.
    FreshSite,
}

impl Default for RelaxPolicy {
    fn default() -> Self {
        RelaxPolicy::Wait { factor: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub omega_c: f64,
    pub omega_h: f64,
    pub t_c: f64,
    pub t_h: f64,
    pub n_bath: usize,
    pub gamma_sb: f64,
    pub gamma_bb: f64,
    /// lambda' in units of omega_stroke * gamma_SB^2.
    pub speed: f64,
    pub protocol: ProtocolKind,
    pub coeff_mode: CoeffMode,
    pub relax: RelaxPolicy,
    /// Strokes simulated before the measured cold + hot pair.
    pub warmup_strokes: usize,
    /// Ramp-up width as a fraction of the stroke span.
    pub delta_fraction: f64,
    /// Stroke edge |lambda|; None picks the default.
    pub lambda_edge: Option<f64>,
    /// Start the measured cycle in its exact periodic state (fresh-site only).
    pub steady_state: bool,
    pub integrator: IntegratorConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            omega_c: 1.0,
            omega_h: 2.0,
            t_c: 48.0,
            t_h: 100.0,
            n_bath: 100,
            gamma_sb: 0.02,
            gamma_bb: 0.03,
            speed: 10.0,
            protocol: ProtocolKind::CdExact,
            coeff_mode: CoeffMode::Exact,
            relax: RelaxPolicy::default(),
            warmup_strokes: 4,
            delta_fraction: 0.1,
            lambda_edge: None,
            steady_state: false,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl EngineConfig {
    /// r = (T_C/T_H)/(omega_C/omega_H).
    pub fn r(&self) -> f64 {
        (self.t_c / self.t_h) / (self.omega_c / self.omega_h)
    }

    /// Sets T_C so that the config has the given r.
    pub fn with_r(mut self, r: f64) -> Self {
        self.t_c = r * self.t_h * self.omega_c / self.omega_h;
        self
    }

    pub fn eta_carnot(&self) -> f64 {
        1.0 - self.t_c / self.t_h
    }

    /// Switch threshold 3 max(gamma_SB, gamma_BB).
    pub fn switch_limit(&self) -> f64 {
        3.0 * self.gamma_sb.max(self.gamma_bb)
    }

    /// |lambda| at both stroke ends: the bandwidth plus 2 gamma_SB, pushed out
    /// to the switch threshold when that is larger.
    pub fn edge(&self) -> f64 {
        self.lambda_edge
            .unwrap_or_else(|| (2.0 * self.gamma_bb + 2.0 * self.gamma_sb).max(self.switch_limit()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if !(self.omega_c > 0.0 && self.omega_c < self.omega_h) {
            return bad("need 0 < omega_C < omega_H");
        }
        if !(self.t_c > 0.0 && self.t_c < self.t_h) {
            return bad("need 0 < T_C < T_H");
        }
        if !(self.r() > 0.0 && self.r() <= 1.0 + 1e-12) {
            return bad("need 0 < r <= 1");
        }
        if self.n_bath < 3 {
            return bad("need at least three bath sites");
        }
        if !(self.speed > 0.0) {
            return bad("speed must be positive");
        }
        if !(self.delta_fraction > 0.0 && self.delta_fraction <= 0.2) {
            return bad("delta_fraction must lie in (0, 0.2]");
        }
        if self.steady_state && self.relax != RelaxPolicy::FreshSite {
            return bad("steady_state needs the fresh-site policy");
        }
        let edge = self.edge();
        if edge < self.switch_limit() {
            return Err(Error::SwitchTooCloseToResonance {
                lambda: edge,
                limit: self.switch_limit(),
            });
        }
        if edge >= 1.0 {
            return bad("stroke edge must stay below 1");
        }
        let r0 = r_0(self.omega_c, self.omega_h, self.gamma_bb);
        if self.r() >= r0 {
            log::warn!("r = {} is at or beyond the fast breakdown ratio {}", self.r(), r0);
        }
        Ok(())
    }

    fn chain(&self, bath: Bath) -> ChainParams {
        ChainParams::chain(self.n_bath, self.omega(bath), self.gamma_sb, self.gamma_bb)
    }

    pub fn omega(&self, bath: Bath) -> f64 {
        match bath {
            Bath::Cold => self.omega_c,
            Bath::Hot => self.omega_h,
        }
    }

    pub fn temperature(&self, bath: Bath) -> f64 {
        match bath {
            Bath::Cold => self.t_c,
            Bath::Hot => self.t_h,
        }
    }

    /// Absolute |lambda'| of a stroke with the given bath.
    pub fn lambda_dot(&self, bath: Bath) -> f64 {
        self.speed * self.omega(bath) * self.gamma_sb * self.gamma_sb
    }

    /// Bound 2 omega |lambda_f - lambda_i| gamma_BB on |lambda'|.
    pub fn speed_bound(&self, bath: Bath) -> f64 {
        2.0 * self.omega(bath) * 2.0 * self.edge() * self.gamma_bb
    }

    pub fn stroke_duration(&self, bath: Bath) -> Result<f64> {
        Ok(self.schedule(bath)?.duration())
    }

    fn schedule(&self, bath: Bath) -> Result<crate::ramp::RampSchedule> {
        let l = self.edge();
        let v = self.lambda_dot(bath);
        let delta = self.delta_fraction * 2.0 * l;
        match bath {
            Bath::Cold => build_schedule(-l, l, delta, v),
            Bath::Hot => build_schedule(l, -l, delta, -v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bath {
    Cold,
    Hot,
}

impl Bath {
    fn other(self) -> Bath {
        match self {
            Bath::Cold => Bath::Hot,
            Bath::Hot => Bath::Cold,
        }
    }
}

/// Endpoint record of one thermal stroke.
#[derive(Clone, Debug, Serialize)]
pub struct StrokeTrace {
    pub bath: Bath,
    pub duration: f64,
    /// Extra idle time spent before the stroke.
    pub idle: f64,
    pub bath_energy_before: f64,
    pub bath_energy_after: f64,
    pub system_energy_before: f64,
    pub system_energy_after: f64,
    pub n_system_before: f64,
    pub n_system_after: f64,
    /// Interaction energy present when S is connected.
    pub switch_on_energy: f64,
    /// Interaction energy removed when S is disconnected.
    pub switch_off_energy: f64,
    /// Work done by the controls: retune, switches and ramp.
    pub control_work: f64,
    pub defect: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CycleResult {
    /// Heat drawn from H and dumped into C, positive in normal operation.
    pub q_h: f64,
    pub q_c: f64,
    pub w: f64,
    pub eta: f64,
    pub power: f64,
    pub tau: f64,
    /// Work done on S and the baths by the controls over the measured cycle.
    pub work_drive: f64,
    /// Change of <H_S> over the measured cycle.
    pub delta_system: f64,
    /// Total |switch-off energy| over the measured cycle.
    pub switch_energy: f64,
    /// Relative mismatch between the control work and the heat balance.
    pub bookkeeping_residual: f64,
    pub speed_bound_exceeded: bool,
    pub max_defect: f64,
    pub strokes: Vec<StrokeTrace>,
}

/// Full-cycle state and bookkeeping.
struct Engine<'a> {
    cfg: &'a EngineConfig,
    n: usize,
    state: GaussianState,
    /// Time since each bath was last connected (cold, hot).
    idle_since: [f64; 2],
    /// S frequency squared right now.
    ws2: f64,
    /// Stroke propagators, computed once per bath.
    maps: [Option<StrokeMap>; 2],
}

#[derive(Clone, Debug)]
struct StrokeMap {
    /// Chain-ordered propagator of S plus the active bath.
    chain: DMatrix<f64>,
    /// Full-layout map including free evolution of the idle bath.
    full: DMatrix<f64>,
    tau: f64,
    defect: f64,
    steps: usize,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a EngineConfig, first: Bath) -> Result<Self> {
        let nb = cfg.n_bath;
        let n = 2 * nb + 1;
        let mut state = GaussianState::zero(n, Statistics::Classical);
        for bath in [Bath::Cold, Bath::Hot] {
            let th = thermal_state(cfg.temperature(bath), &bath_basis(nb, cfg.omega(bath), cfg.gamma_bb)?, Statistics::Classical)?;
            let idx = bath_indices(nb, bath);
            embed_cov(&mut state.cov, &th.cov, &idx);
        }
        // S carries what an ideal stroke with the other bath would leave
        let l = cfg.edge();
        let prev = first.other();
        let edge = match prev {
            Bath::Cold => 1.0 + l,
            Bath::Hot => 1.0 - l,
        };
        let occ = cfg.temperature(prev) / (cfg.omega(prev) * edge.sqrt());
        let ws2 = start_ws2(cfg, first);
        let w = ws2.sqrt();
        state.cov[(0, 0)] = occ / w;
        state.cov[(n, n)] = occ * w;
        let wait = match cfg.relax {
            RelaxPolicy::Wait { factor } => factor / (cfg.omega_c.min(cfg.omega_h) * cfg.gamma_bb),
            RelaxPolicy::FreshSite => 0.0,
        };
        Ok(Engine {
            cfg,
            n,
            state,
            idle_since: [wait; 2],
            ws2,
            maps: [None, None],
        })
    }

    fn system_energy(&self) -> f64 {
        0.5 * (self.ws2 * self.state.cov[(0, 0)] + self.state.cov[(self.n, self.n)])
    }

    fn system_occupation(&self) -> f64 {
        self.system_energy() / self.ws2.sqrt()
    }

    fn bath_energy(&self, bath: Bath) -> f64 {
        let idx = bath_indices(self.cfg.n_bath, bath);
        let h = bath_form(&self.cfg.chain(bath));
        let mut e = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                e += h[(a, b)] * self.state.cov[(i, j)];
            }
        }
        0.5 * e
    }

    /// -coupling <X x_B> with the bare coupling of `bath`.
    fn interaction_energy(&self, bath: Bath) -> f64 {
        let p = self.cfg.chain(bath);
        let site = bath_indices(self.cfg.n_bath, bath)[p.site() - 1];
        -p.gamma_sb * p.omega_b * p.omega_b * self.state.cov[(0, site)]
    }

    /// Applies a symplectic map acting on the listed phase-space indices.
    fn apply_block(&mut self, m: &DMatrix<f64>, idx: &[usize]) {
        let dim = 2 * self.n;
        let mut full = DMatrix::identity(dim, dim);
        for (a, &i) in idx.iter().enumerate() {
            full[(i, i)] = 0.0;
            for (b, &j) in idx.iter().enumerate() {
                full[(i, j)] = m[(a, b)];
            }
        }
        self.apply_full(&full);
    }

    fn apply_full(&mut self, full: &DMatrix<f64>) {
        self.state.mean = full * &self.state.mean;
        let c = full * &self.state.cov * full.transpose();
        self.state.cov = (&c + c.transpose()) * 0.5;
    }

    /// Free evolution of everything for tau with S decoupled.
    fn idle(&mut self, tau: f64) -> Result<()> {
        if tau <= 0.0 {
            return Ok(());
        }
        let nb = self.cfg.n_bath;
        let dim = 2 * self.n;
        let mut full = DMatrix::zeros(dim, dim);
        for bath in [Bath::Cold, Bath::Hot] {
            let f = free_evolution(&bath_basis(nb, self.cfg.omega(bath), self.cfg.gamma_bb)?, tau);
            place(&mut full, &f.m, &bath_indices(nb, bath));
        }
        let w = self.ws2.sqrt();
        let (s, c) = (w * tau).sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, s / w, -w * s, c]);
        place(&mut full, &rot, &[0, self.n]);
        self.apply_full(&full);
        for t in self.idle_since.iter_mut() {
            *t += tau;
        }
        Ok(())
    }

    /// Ideal isolated frequency change of S preserving its action.
    fn retune(&mut self, ws2_new: f64) {
        let k = (self.ws2 / ws2_new).sqrt().sqrt();
        let m = DMatrix::from_row_slice(2, 2, &[k, 0.0, 0.0, 1.0 / k]);
        self.apply_block(&m, &[0, self.n]);
        self.ws2 = ws2_new;
    }

    fn refresh(&mut self, bath: Bath) -> Result<()> {
        let nb = self.cfg.n_bath;
        let idx = bath_indices(nb, bath);
        for &i in &idx {
            for j in 0..2 * self.n {
                self.state.cov[(i, j)] = 0.0;
                self.state.cov[(j, i)] = 0.0;
            }
            self.state.mean[i] = 0.0;
        }
        let th = thermal_state(self.cfg.temperature(bath), &bath_basis(nb, self.cfg.omega(bath), self.cfg.gamma_bb)?, Statistics::Classical)?;
        embed_cov(&mut self.state.cov, &th.cov, &idx);
        Ok(())
    }

    fn total_energy(&self) -> f64 {
        self.system_energy() + self.bath_energy(Bath::Cold) + self.bath_energy(Bath::Hot)
    }

    fn ensure_map(&mut self, bath: Bath) -> Result<()> {
        if self.maps[bath as usize].is_some() {
            return Ok(());
        }
        let cfg = self.cfg;
        let nb = cfg.n_bath;
        let params = cfg.chain(bath);
        let schedule = cfg.schedule(bath)?;
        let protocol = Protocol::new(cfg.protocol).with_coeff_mode(cfg.coeff_mode);
        let prop = propagate(&protocol, &params, &schedule, &cfg.integrator, &[])?;
        let tau = schedule.duration();
        let dim = 2 * self.n;
        let mut full = DMatrix::zeros(dim, dim);
        place(&mut full, &prop.propagator.m, &chain_indices(nb, bath));
        let other = bath.other();
        let f = free_evolution(&bath_basis(nb, cfg.omega(other), cfg.gamma_bb)?, tau);
        place(&mut full, &f.m, &bath_indices(nb, other));
        self.maps[bath as usize] = Some(StrokeMap {
            defect: prop.propagator.defect(),
            chain: prop.propagator.m,
            full,
            tau,
            steps: prop.steps,
        });
        Ok(())
    }

    /// Puts S into the periodic state of a fresh-site cycle, starting just
    /// before the cold stroke: Sigma = K Sigma K^T + C over one cycle.
    fn enter_steady_cycle(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let nb = cfg.n_bath;
        let mut k = DMatrix::<f64>::identity(2, 2);
        let mut c = DMatrix::<f64>::zeros(2, 2);
        let mut ws2 = end_ws2(cfg, Bath::Hot);
        for bath in [Bath::Cold, Bath::Hot] {
            self.ensure_map(bath)?;
            let m = &self.maps[bath as usize].as_ref().expect("map computed").chain;
            let s_idx = [0, nb + 1];
            let b_idx: Vec<usize> = (1..=nb).chain(nb + 2..2 * nb + 2).collect();
            let mss = DMatrix::from_fn(2, 2, |i, j| m[(s_idx[i], s_idx[j])]);
            let msb = DMatrix::from_fn(2, 2 * nb, |i, j| m[(s_idx[i], b_idx[j])]);
            let th = thermal_state(cfg.temperature(bath), &bath_basis(nb, cfg.omega(bath), cfg.gamma_bb)?, Statistics::Classical)?;
            let q = (ws2 / start_ws2(cfg, bath)).sqrt().sqrt();
            let retune = DMatrix::from_row_slice(2, 2, &[q, 0.0, 0.0, 1.0 / q]);
            let kb = &mss * retune;
            c = &kb * c * kb.transpose() + &msb * th.cov * msb.transpose();
            k = &kb * k;
            ws2 = end_ws2(cfg, bath);
        }
        let lhs = DMatrix::<f64>::identity(4, 4) - k.kronecker(&k);
        let vec_c = nalgebra::DVector::from_column_slice(c.as_slice());
        let sol = lhs
            .lu()
            .solve(&vec_c)
            .ok_or_else(|| Error::InvalidParams("cycle map has no periodic state".into()))?;
        let sigma = DMatrix::from_column_slice(2, 2, sol.as_slice());
        let n = self.n;
        for i in [0, n] {
            for j in 0..2 * n {
                self.state.cov[(i, j)] = 0.0;
                self.state.cov[(j, i)] = 0.0;
            }
            self.state.mean[i] = 0.0;
        }
        let s = [0, n];
        for i in 0..2 {
            for j in 0..2 {
                self.state.cov[(s[i], s[j])] = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            }
        }
        self.ws2 = end_ws2(cfg, Bath::Hot);
        Ok(())
    }

    fn stroke(&mut self, bath: Bath) -> Result<StrokeTrace> {
        let cfg = self.cfg;
        let e0 = self.total_energy();
        self.retune(start_ws2(cfg, bath));
        let retune_work = self.total_energy() - e0;
        let mut idle = 0.0;
        match cfg.relax {
            RelaxPolicy::Wait { factor } => {
                let need = factor / (cfg.omega(bath) * cfg.gamma_bb);
                let have = self.idle_since[bath as usize];
                if have < need {
                    idle = need - have;
                    self.idle(idle)?;
                }
            }
            RelaxPolicy::FreshSite => self.refresh(bath)?,
        }
        let bath_before = self.bath_energy(bath);
        let sys_before = self.system_energy();
        let switch_on = self.interaction_energy(bath);
        let e_start = self.total_energy() + switch_on;
        let n_before = self.system_occupation();
        self.ensure_map(bath)?;
        let map = self.maps[bath as usize].take().expect("map computed");
        let (tau, defect, steps) = (map.tau, map.defect, map.steps);
        self.apply_full(&map.full);
        self.maps[bath as usize] = Some(map);
        let other = bath.other();
        self.idle_since[other as usize] += tau;
        self.idle_since[bath as usize] = 0.0;
        self.ws2 = end_ws2(cfg, bath);
        let switch_off = self.interaction_energy(bath);
        let ramp_work = self.total_energy() + switch_off - e_start;

        Ok(StrokeTrace {
            bath,
            duration: tau,
            idle,
            bath_energy_before: bath_before,
            bath_energy_after: self.bath_energy(bath),
            system_energy_before: sys_before,
            system_energy_after: self.system_energy(),
            n_system_before: n_before,
            n_system_after: self.system_occupation(),
            switch_on_energy: switch_on,
            switch_off_energy: switch_off,
            control_work: retune_work + switch_on + ramp_work - switch_off,
            defect,
            steps,
        })
    }
}

fn start_ws2(cfg: &EngineConfig, bath: Bath) -> f64 {
    let w = cfg.omega(bath);
    match bath {
        Bath::Cold => w * w * (1.0 - cfg.edge()),
        Bath::Hot => w * w * (1.0 + cfg.edge()),
    }
}

fn end_ws2(cfg: &EngineConfig, bath: Bath) -> f64 {
    start_ws2(cfg, bath.other()) * (cfg.omega(bath) / cfg.omega(bath.other())).powi(2)
}

/// Phase-space indices of one bath in the full layout.
fn bath_indices(nb: usize, bath: Bath) -> Vec<usize> {
    let n = 2 * nb + 1;
    let off = match bath {
        Bath::Cold => 1,
        Bath::Hot => 1 + nb,
    };
    (off..off + nb).chain(off + n..off + n + nb).collect()
}

/// Full indices of the active chain (S, bath sites) in chain ordering.
fn chain_indices(nb: usize, bath: Bath) -> Vec<usize> {
    let n = 2 * nb + 1;
    let b = bath_indices(nb, bath);
    std::iter::once(0)
        .chain(b[..nb].iter().copied())
        .chain(std::iter::once(n))
        .chain(b[nb..].iter().copied())
        .collect()
}

fn place(full: &mut DMatrix<f64>, block: &DMatrix<f64>, idx: &[usize]) {
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            full[(i, j)] = block[(a, b)];
        }
    }
}

fn embed_cov(cov: &mut DMatrix<f64>, block: &DMatrix<f64>, idx: &[usize]) {
    place(cov, block, idx);
}

/// Both stroke propagators of a configuration. They do not depend on the
/// temperatures or on the relaxation policy, so one set serves an r sweep.
#[derive(Clone, Debug)]
pub struct StrokeMaps {
    key: EngineConfig,
    maps: [StrokeMap; 2],
}

impl StrokeMaps {
    pub fn compute(cfg: &EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let mut eng = Engine::new(cfg, Bath::Cold)?;
        eng.ensure_map(Bath::Cold)?;
        eng.ensure_map(Bath::Hot)?;
        let [c, h] = eng.maps;
        Ok(StrokeMaps {
            key: dynamics_key(cfg),
            maps: [c.expect("cold map"), h.expect("hot map")],
        })
    }

    pub fn matches(&self, cfg: &EngineConfig) -> bool {
        self.key == dynamics_key(cfg)
    }

    pub fn max_defect(&self) -> f64 {
        self.maps.iter().map(|m| m.defect).fold(0.0, f64::max)
    }
}

fn dynamics_key(cfg: &EngineConfig) -> EngineConfig {
    EngineConfig {
        t_c: 1.0,
        t_h: 2.0,
        relax: RelaxPolicy::FreshSite,
        warmup_strokes: 0,
        steady_state: false,
        ..cfg.clone()
    }
}

/// Simulates warm-up strokes and then one measured cold + hot cycle.
pub fn run_cycle(cfg: &EngineConfig) -> Result<CycleResult> {
    run_cycle_inner(cfg, None)
}

/// run_cycle reusing precomputed stroke propagators.
pub fn run_cycle_with(cfg: &EngineConfig, maps: &StrokeMaps) -> Result<CycleResult> {
    if !maps.matches(cfg) {
        return Err(Error::InvalidParams("stroke maps belong to a different configuration".into()));
    }
    run_cycle_inner(cfg, Some(maps))
}

fn run_cycle_inner(cfg: &EngineConfig, maps: Option<&StrokeMaps>) -> Result<CycleResult> {
    cfg.validate()?;
    let first = if cfg.warmup_strokes % 2 == 0 { Bath::Cold } else { Bath::Hot };
    let mut eng = Engine::new(cfg, first)?;
    if let Some(m) = maps {
        eng.maps = [Some(m.maps[0].clone()), Some(m.maps[1].clone())];
    }
    let mut bath = first;
    for _ in 0..cfg.warmup_strokes {
        eng.stroke(bath)?;
        bath = bath.other();
    }
    if cfg.steady_state {
        eng.enter_steady_cycle()?;
    }
    let sys0 = eng.system_energy();
    let strokes = vec![eng.stroke(Bath::Cold)?, eng.stroke(Bath::Hot)?];
    let q_c = strokes[0].bath_energy_after - strokes[0].bath_energy_before;
    let q_h = strokes[1].bath_energy_before - strokes[1].bath_energy_after;
    let w = q_h - q_c;
    let delta_system = eng.system_energy() - sys0;
    let tau: f64 = strokes.iter().map(|s| s.duration + s.idle).sum();
    let work_drive: f64 = strokes.iter().map(|s| s.control_work).sum();
    let bookkeeping_residual = (work_drive - (delta_system - w)).abs() / w.abs().max(f64::MIN_POSITIVE);
    let switch_energy = strokes.iter().map(|s| s.switch_off_energy.abs()).sum();
    let speed_bound_exceeded = [Bath::Cold, Bath::Hot]
        .iter()
        .any(|&b| cfg.lambda_dot(b) > cfg.speed_bound(b));
    if speed_bound_exceeded {
        log::warn!("ramp speed above 2 omega |lambda_f - lambda_i| gamma_BB");
    }
    let max_defect = strokes.iter().map(|s| s.defect).fold(0.0, f64::max);
    Ok(CycleResult {
        q_h,
        q_c,
        w,
        eta: if q_h > 0.0 { w / q_h } else { f64::NAN },
        power: power(w, tau),
        tau,
        work_drive,
        delta_system,
        switch_energy,
        bookkeeping_residual,
        speed_bound_exceeded,
        max_defect,
        strokes,
    })
}

/// P = W / tau.
pub fn power(w: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        0.0
    } else {
        w / tau
    }
}

/// Slow-limit heats with the exact bandwidth logarithm.
pub fn q_slow(cfg: &EngineConfig) -> (f64, f64) {
    let g = cfg.gamma_bb;
    let a = cfg.t_h / cfg.omega_h - cfg.t_c / cfg.omega_c;
    let ln = ((1.0 + g) / (1.0 - g)).ln();
    (cfg.omega_h * a + cfg.t_h * ln, cfg.omega_c * a + cfg.t_c * ln)
}

/// Slow-limit efficiency with ln((1+g)/(1-g)) replaced by 2g.
pub fn eta_slow(cfg: &EngineConfig) -> f64 {
    let r = cfg.r();
    cfg.eta_carnot() - (cfg.t_c / cfg.t_h) * (1.0 - r).powi(2) / (r * (1.0 - r + 2.0 * cfg.gamma_bb))
}

/// Fast-limit (Q_H, Q_C) including bandwidth corrections.
pub fn q_fast(cfg: &EngineConfig) -> (f64, f64) {
    let g2 = cfg.gamma_bb * cfg.gamma_bb;
    let a = cfg.t_h / cfg.omega_h - cfg.t_c / cfg.omega_c;
    (
        cfg.omega_h * a * (1.0 + g2) - 2.0 * cfg.t_h * g2,
        cfg.omega_c * a * (1.0 + g2) + 2.0 * cfg.t_c * g2,
    )
}

pub fn eta_fast(cfg: &EngineConfig) -> Result<f64> {
    let r = cfg.r();
    let r0 = r_0(cfg.omega_c, cfg.omega_h, cfg.gamma_bb);
    if r >= r0 {
        return Err(Error::BeyondBreakdown { r, r0 });
    }
    let g2 = cfg.gamma_bb * cfg.gamma_bb;
    let num = (1.0 - r) * (1.0 + g2) + 2.0 * r * g2;
    let den = (1.0 - r) * (1.0 + g2) - 2.0 * g2;
    Ok(1.0 - cfg.omega_c / cfg.omega_h * num / den)
}

/// eta_C - eta in the fast limit.
pub fn eta_gap(cfg: &EngineConfig) -> Result<f64> {
    let r = cfg.r();
    let r0 = r_0(cfg.omega_c, cfg.omega_h, cfg.gamma_bb);
    if r >= r0 {
        return Err(Error::BeyondBreakdown { r, r0 });
    }
    let g2 = cfg.gamma_bb * cfg.gamma_bb;
    let num = (1.0 - r).powi(2) * (1.0 + g2) + 4.0 * r * g2;
    let den = (1.0 - r) * (1.0 + g2) - 2.0 * g2;
    Ok(cfg.omega_c / cfg.omega_h * num / den)
}

/// r minimizing the fast-limit gap.
pub fn r_min(gamma_bb: f64) -> f64 {
    let g2 = gamma_bb * gamma_bb;
    (1.0 - 2.0 * gamma_bb - g2) / (1.0 + g2)
}

/// Fast-limit breakdown ratio where Q_H = Q_C.
pub fn r_0(omega_c: f64, omega_h: f64, gamma_bb: f64) -> f64 {
    1.0 - 2.0 * (omega_h + omega_c) / (omega_h - omega_c) * gamma_bb * gamma_bb
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EngineConfig {
        EngineConfig {
            n_bath: 12,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn r_min_and_r0_values() {
        assert!((r_min(0.02) - 0.9592).abs() < 1e-4);
        assert!((r_0(1.0, 2.0, 0.02) - 0.9976).abs() < 1e-12);
        assert!((r_min(0.03) - 0.9383).abs() < 1e-4);
    }

    #[test]
    fn slow_efficiency_limits() {
        let c = cfg().with_r(1.0);
        assert!((eta_slow(&c) - c.eta_carnot()).abs() < 1e-14);
        let mut c = cfg().with_r(0.8);
        c.gamma_bb = 0.0;
        let expect = c.eta_carnot() - (c.t_c / c.t_h) * 0.2 / 0.8;
        assert!((eta_slow(&c) - expect).abs() < 1e-12);
        // the exact logarithm agrees with 2 gamma to O(gamma^3)
        let c = cfg().with_r(0.9);
        let (qh, qc) = q_slow(&c);
        assert!(((1.0 - qc / qh) - eta_slow(&c)).abs() < 1e-4);
    }

    #[test]
    fn fast_heats_reduce_to_otto() {
        let mut c = cfg().with_r(0.9);
        c.gamma_bb = 0.0;
        let (qh, qc) = q_fast(&c);
        assert!((1.0 - qc / qh - (1.0 - c.omega_c / c.omega_h)).abs() < 1e-14);
        let c = cfg().with_r(0.9);
        let (qh, qc) = q_fast(&c);
        assert!((1.0 - qc / qh - eta_fast(&c).unwrap()).abs() < 1e-12);
        assert!((c.eta_carnot() - eta_fast(&c).unwrap() - eta_gap(&c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn work_sign_flips_at_r0() {
        let base = cfg();
        let r0 = r_0(base.omega_c, base.omega_h, base.gamma_bb);
        let (qh, qc) = q_fast(&base.clone().with_r(r0 - 1e-3));
        assert!(qh > qc);
        let (qh, qc) = q_fast(&base.clone().with_r(r0 + 1e-3));
        assert!(qh < qc);
        assert!(matches!(eta_fast(&base.with_r(r0 + 1e-4)), Err(Error::BeyondBreakdown { .. })));
    }

    #[test]
    fn gap_collapses_with_frequency_ratio() {
        let a = EngineConfig { omega_c: 0.6, omega_h: 2.0, ..cfg() }.with_r(0.9);
        let b = EngineConfig { omega_c: 1.0, omega_h: 2.0, ..cfg() }.with_r(0.9);
        let ga = eta_gap(&a).unwrap() * a.omega_h / a.omega_c;
        let gb = eta_gap(&b).unwrap() * b.omega_h / b.omega_c;
        assert!((ga - gb).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(cfg().validate().is_ok());
        let bad = EngineConfig { lambda_edge: Some(0.05), ..cfg() };
        assert!(matches!(bad.validate(), Err(Error::SwitchTooCloseToResonance { .. })));
        let bad = EngineConfig { t_c: 150.0, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn layout_indices() {
        let c = chain_indices(3, Bath::Hot);
        assert_eq!(c, vec![0, 4, 5, 6, 7, 11, 12, 13]);
        assert_eq!(bath_indices(3, Bath::Cold), vec![1, 2, 3, 8, 9, 10]);
    }

    #[test]
    fn fast_cycle_balances_energy() {
        let c = EngineConfig {
            speed: 2000.0,
            relax: RelaxPolicy::FreshSite,
            warmup_strokes: 1,
            ..cfg()
        }
        .with_r(0.9);
        let out = run_cycle(&c).unwrap();
        assert!(out.bookkeeping_residual < 1e-6, "{out:?}");
        assert!(out.max_defect < 1e-9);
        assert!(out.w > 0.0 && out.eta < c.eta_carnot());
    }

    #[test]
    fn steady_cycle_is_periodic() {
        let c = EngineConfig {
            speed: 300.0,
            relax: RelaxPolicy::FreshSite,
            steady_state: true,
            warmup_strokes: 0,
            ..cfg()
        }
        .with_r(0.9);
        let out = run_cycle(&c).unwrap();
        assert!(out.delta_system.abs() < 1e-9 * out.q_h.abs(), "{out:?}");
        // warm-up strokes converge to the same cycle
        let maps = StrokeMaps::compute(&c).unwrap();
        let w = run_cycle_with(&EngineConfig { steady_state: false, warmup_strokes: 400, ..c.clone() }, &maps).unwrap();
        assert!(run_cycle_with(&EngineConfig { speed: 1.0, ..c.clone() }, &maps).is_err());
        assert!((w.q_h - out.q_h).abs() < 1e-6 * out.q_h, "{} {}", w.q_h, out.q_h);
    }
}
