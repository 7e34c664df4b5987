//! Executes a resolved experiment into a table plus a JSON summary.

use crate::config::*;
use ffbath::engine::{eta_gap, eta_slow, q_fast, q_slow, r_0, r_min, EngineConfig};
use ffbath::experiments::*;
use ffbath::states::FockSpec;
use ffbath::Error;
use serde_json::{json, Value};

/// Tabular result of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest round-trip decimal form, so reruns compare byte for byte.
fn nums(v: Vec<f64>) -> Vec<String> {
    v.into_iter().map(|x| x.to_string()).collect()
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub table: Table,
    pub summary: Value,
    /// Failures of the numerics themselves (defect, truncation, stepper).
    pub numerical: Vec<String>,
    /// Grid points where the protocol is undefined; written as NaN.
    pub undefined: Vec<String>,
}

pub fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::SymplecticDefectExceeded(_)
            | Error::TruncationLeakage(_)
            | Error::NormDrift(_)
            | Error::StepSizeUnderflow { .. }
            | Error::MaxSteps { .. }
            | Error::InvalidMap(_)
    )
}

struct Failures {
    numerical: Vec<String>,
    undefined: Vec<String>,
}

impl Failures {
    fn new() -> Self {
        Failures {
            numerical: vec![],
            undefined: vec![],
        }
    }

    fn value<T>(&mut self, what: impl FnOnce() -> String, r: &ffbath::Result<T>, f: impl Fn(&T) -> f64) -> f64 {
        match r {
            Ok(v) => f(v),
            Err(e) => {
                let msg = format!("{}: {e}", what());
                if is_numerical(e) {
                    self.numerical.push(msg)
                } else {
                    self.undefined.push(msg)
                }
                f64::NAN
            }
        }
    }
}

fn fock(occ: &[u32]) -> FockSpec {
    FockSpec {
        occupations: occ.to_vec(),
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn run(cfg: &ExperimentConfig) -> RunOutput {
    let mut fails = Failures::new();
    let (table, summary) = match cfg {
        ExperimentConfig::FidelitySweep(c) => fidelity(c, &mut fails),
        ExperimentConfig::FeConvergence(c) => fe(c, &mut fails),
        ExperimentConfig::ThermalizationSweep(c) => thermalization(c, &mut fails),
        ExperimentConfig::EngineSweep(c) => engine(c, &mut fails),
        ExperimentConfig::CollapseCheck(c) => collapse(c, &mut fails),
    };
    RunOutput {
        table,
        summary,
        numerical: fails.numerical,
        undefined: fails.undefined,
    }
}

const SPEED_COL: &str = "speed [lambda'/(omega_B gamma_SB^2)]";

fn fidelity(c: &FidelityConfig, fails: &mut Failures) -> (Table, Value) {
    let protocols: Vec<_> = c.protocols.iter().map(|k| c.options.build(*k)).collect();
    let speeds = c.speeds.points();
    let sw = fidelity_sweep(&protocols, &c.params, &c.ramp, &speeds, &fock(&c.fock), &c.integrator);
    let mut header = vec![SPEED_COL.to_string()];
    header.extend(c.protocols.iter().map(|k| format!("W_{} [omega_B^2]", k.label())));
    header.push("max_defect".into());
    let mut rows = vec![];
    let mut max_w = vec![0.0f64; protocols.len()];
    for (s, cells) in speeds.iter().zip(&sw.cells) {
        let mut row = vec![*s];
        let mut defect = 0.0f64;
        for (j, cell) in cells.iter().enumerate() {
            let label = c.protocols[j].label();
            let w = fails.value(|| format!("{label} at speed {s}"), cell, |o| o.w);
            if let Ok(o) = cell {
                defect = defect.max(o.defect);
            }
            if w.is_finite() {
                max_w[j] = max_w[j].max(w);
            }
            row.push(w);
        }
        row.push(defect);
        rows.push(nums(row));
    }
    let summary = json!({
        "max_w": c.protocols.iter().zip(&max_w).map(|(k, w)| (k.label().to_string(), json!(w))).collect::<serde_json::Map<_, _>>(),
        "speed_scales": { "lambda_dot_1": c.params.omega_b * c.params.gamma_sb.powi(2), "lambda_dot_2": c.params.omega_b },
    });
    (Table { header, rows }, summary)
}

fn fe(c: &FeConvergenceConfig, fails: &mut Failures) -> (Table, Value) {
    let schedule = match c.ramp.schedule(&c.params, c.speed) {
        Ok(s) => s,
        Err(e) => {
            fails.undefined.push(format!("schedule: {e}"));
            return (
                Table {
                    header: vec![],
                    rows: vec![],
                },
                json!({}),
            );
        }
    };
    let protocol = c.options.build(ffbath::protocols::ProtocolKind::Feff);
    let out = fe_convergence(&protocol, &c.params, &schedule, &c.omegas, &fock(&c.fock), &c.integrator);
    let header = vec!["inv_omega [1/Omega]".into(), "omega [Omega]".into(), "W_feff [omega_B^2]".into(), "defect".into()];
    let rows = out
        .omegas
        .iter()
        .zip(&out.cells)
        .map(|(om, cell)| {
            let w = fails.value(|| format!("Omega {om}"), cell, |o| o.w);
            let d = cell.as_ref().map_or(f64::NAN, |o| o.defect);
            nums(vec![1.0 / om, *om, w, d])
        })
        .collect();
    let summary = json!({ "log_log_slope": out.slope, "expected_slope": 1.0 });
    (Table { header, rows }, summary)
}

fn thermalization(c: &ThermalizationConfig, fails: &mut Failures) -> (Table, Value) {
    let protocols: Vec<_> = c.protocols.iter().map(|k| c.options.build(*k)).collect();
    let speeds = c.speeds.points();
    let sw = thermalization_sweep(&protocols, &c.params, &speeds, c.temperature, c.delta_fraction, &c.integrator);
    let mut header = vec![SPEED_COL.to_string()];
    header.extend(c.protocols.iter().map(|k| format!("H_S_over_T_{} [<H_S(lambda_f)>/T]", k.label())));
    header.push("max_defect".into());
    let mut columns = vec![vec![]; protocols.len()];
    let mut rows = vec![];
    for (s, cells) in speeds.iter().zip(&sw.cells) {
        let mut row = vec![*s];
        let mut defect = 0.0f64;
        for (j, cell) in cells.iter().enumerate() {
            let label = c.protocols[j].label();
            let v = fails.value(|| format!("{label} at speed {s}"), cell, |o| o.energy_over_t);
            if let Ok(o) = cell {
                defect = defect.max(o.defect);
            }
            columns[j].push(v);
            row.push(v);
        }
        row.push(defect);
        rows.push(nums(row));
    }
    let per: serde_json::Map<String, Value> = c
        .protocols
        .iter()
        .zip(&columns)
        .map(|(k, col)| {
            (
                k.label().to_string(),
                json!({
                    "slowest": finite_or_null(col[0]),
                    "fastest": finite_or_null(*col.last().unwrap()),
                    "onset_speed_10pct": crossing_speed(&speeds, col, 0.1),
                    "half_rise_speed": crossing_speed(&speeds, col, 0.5),
                }),
            )
        })
        .collect();
    let summary = json!({
        "protocols": per,
        "ff_plateau_estimate": 1.0 + c.params.gamma_bb,
        "peel_off_estimate": c.params.gamma_bb / c.params.gamma_sb,
    });
    (Table { header, rows }, summary)
}

fn engine(c: &EngineSweepConfig, fails: &mut Failures) -> (Table, Value) {
    let speeds = c.speeds.points();
    let header = [
        "protocol",
        SPEED_COL,
        "r [(T_C/T_H)/(omega_C/omega_H)]",
        "Q_H [energy]",
        "Q_C [energy]",
        "W [energy]",
        "eta",
        "eta_over_etac",
        "P [energy/time]",
        "tau [time]",
        "switch_energy [energy]",
        "max_defect",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = vec![];
    for kind in &c.protocols {
        let base = EngineConfig {
            protocol: *kind,
            ..c.engine.clone()
        };
        let sw = engine_sweep(&base, &speeds, &c.ratios);
        for (s, cells) in speeds.iter().zip(&sw.cells) {
            for (r, cell) in c.ratios.iter().zip(cells) {
                let label = kind.label();
                let q_h = fails.value(|| format!("{label} at speed {s}, r {r}"), cell, |o| o.q_h);
                let etac = base.clone().with_r(*r).eta_carnot();
                let get = |f: &dyn Fn(&ffbath::engine::CycleResult) -> f64| cell.as_ref().map_or(f64::NAN, f);
                let eta = get(&|o| o.eta);
                let mut row = vec![label.to_string()];
                row.extend(nums(vec![
                    *s,
                    *r,
                    q_h,
                    get(&|o| o.q_c),
                    get(&|o| o.w),
                    eta,
                    eta / etac,
                    get(&|o| o.power),
                    get(&|o| o.tau),
                    get(&|o| o.switch_energy),
                    get(&|o| o.max_defect),
                ]));
                rows.push(row);
            }
        }
    }
    let closed: Vec<Value> = c
        .ratios
        .iter()
        .map(|r| {
            let cfg = c.engine.clone().with_r(*r);
            let (qhs, qcs) = q_slow(&cfg);
            let (qhf, qcf) = q_fast(&cfg);
            json!({
                "r": r,
                "eta_carnot": cfg.eta_carnot(),
                "eta_slow": eta_slow(&cfg),
                "q_slow": [qhs, qcs],
                "q_fast": [qhf, qcf],
                "eta_gap_fast": eta_gap(&cfg).ok(),
            })
        })
        .collect();
    let summary = json!({
        "protocols": c.protocols.iter().map(|k| k.label()).collect::<Vec<_>>(),
        "r_min": r_min(c.engine.gamma_bb),
        "r_0": r_0(c.engine.omega_c, c.engine.omega_h, c.engine.gamma_bb),
        "closed_forms": closed,
    });
    (Table { header, rows }, summary)
}

fn collapse(c: &CollapseConfig, fails: &mut Failures) -> (Table, Value) {
    let speeds = c.speeds.points();
    let protocol = ffbath::protocols::Protocol::new(ffbath::protocols::ProtocolKind::Ua);
    let out = collapse_check(&protocol, c.omega_b, &c.gammas, &c.ramp, &speeds, &fock(&c.fock), &c.integrator);
    let mut header = vec![SPEED_COL.to_string()];
    header.extend(c.gammas.iter().map(|g| format!("var_n_plus_gamma_{g} [quanta^2]")));
    let mut rows = vec![];
    for (s, cells) in speeds.iter().zip(&out.cells) {
        let mut row = vec![*s];
        for (g, cell) in c.gammas.iter().zip(cells) {
            row.push(fails.value(|| format!("gamma {g} at speed {s}"), cell, |o| o.var_plus));
        }
        rows.push(row);
    }
    // largest relative spread between curves where lambda' <= 0.01 omega_B
    let gmax = c.gammas.iter().copied().fold(0.0, f64::max);
    let limit = 0.01 / (gmax * gmax);
    let spread = rows
        .iter()
        .filter(|r| r[0] <= limit)
        .map(|r| {
            let v = &r[1..];
            let hi = v.iter().copied().fold(f64::MIN, f64::max);
            let lo = v.iter().copied().fold(f64::MAX, f64::min);
            (hi - lo) / hi.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0f64, f64::max);
    let summary = json!({ "max_relative_spread_below_0.01_omega_B": spread, "speed_limit_normalized": limit });
    let rows = rows.into_iter().map(nums).collect();
    (Table { header, rows }, summary)
}
