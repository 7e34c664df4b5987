//! Experiment configs: one JSON document per run, with dotted-path overrides.

use ffbath::engine::{EngineConfig, RelaxPolicy};
use ffbath::experiments::{log_grid, RampTemplate};
use ffbath::integrator::IntegratorConfig;
use ffbath::protocols::{ChainParams, CoeffMode, Protocol, ProtocolKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FidelitySweep,
    FeConvergence,
    ThermalizationSweep,
    EngineSweep,
    CollapseCheck,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::FidelitySweep => "fidelity-sweep",
            ExperimentKind::FeConvergence => "fe-convergence",
            ExperimentKind::ThermalizationSweep => "thermalization-sweep",
            ExperimentKind::EngineSweep => "engine-sweep",
            ExperimentKind::CollapseCheck => "collapse-check",
        }
    }
}

/// Speeds in units of omega_B gamma_SB^2: explicit values, or a log grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedGrid {
    pub min: f64,
    pub max: f64,
    pub per_decade: usize,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl SpeedGrid {
    pub fn log(min: f64, max: f64, per_decade: usize) -> Self {
        SpeedGrid {
            min,
            max,
            per_decade,
            values: None,
        }
    }

    pub fn list(values: &[f64]) -> Self {
        SpeedGrid {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(0.0, f64::max),
            per_decade: 1,
            values: Some(values.to_vec()),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match &self.values {
            Some(v) => v.clone(),
            None => log_grid(self.min, self.max, self.per_decade),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let pts = self.points();
        if pts.is_empty() || pts.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(ConfigError::Invalid("speed grid must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Knobs shared by every protocol of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolOptions {
    pub coeff_mode: CoeffMode,
    /// Floquet drive frequency Omega.
    pub omega: f64,
    pub z2_tol: f64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        let p = Protocol::new(ProtocolKind::Ua);
        ProtocolOptions {
            coeff_mode: p.coeff_mode,
            omega: p.omega,
            z2_tol: p.z2_tol,
        }
    }
}

impl ProtocolOptions {
    pub fn build(&self, kind: ProtocolKind) -> Protocol {
        Protocol::new(kind)
            .with_coeff_mode(self.coeff_mode)
            .with_omega(self.omega)
            .with_z2_tol(self.z2_tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    pub params: ChainParams,
    pub ramp: RampTemplate,
    pub protocols: Vec<ProtocolKind>,
    pub options: ProtocolOptions,
    pub speeds: SpeedGrid,
    pub fock: Vec<u32>,
    pub integrator: IntegratorConfig,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig {
            params: ChainParams::two_oscillator(3.0, 0.02),
            ramp: RampTemplate {
                lambda_i: -0.67,
                lambda_f: 0.67,
                delta_fraction: 0.1,
            },
            protocols: vec![ProtocolKind::Ua, ProtocolKind::Rwff, ProtocolKind::Feff, ProtocolKind::CdExact],
            options: ProtocolOptions::default(),
            speeds: SpeedGrid::log(0.1, 1e3, 4),
            fock: vec![3, 1],
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeConvergenceConfig {
    pub params: ChainParams,
    pub ramp: RampTemplate,
    pub options: ProtocolOptions,
    /// lambda' in units of omega_B gamma_SB^2.
    pub speed: f64,
    pub omegas: Vec<f64>,
    pub fock: Vec<u32>,
    pub integrator: IntegratorConfig,
}

impl Default for FeConvergenceConfig {
    fn default() -> Self {
        let fid = FidelityConfig::default();
        FeConvergenceConfig {
            params: fid.params,
            ramp: fid.ramp,
            options: ProtocolOptions {
                coeff_mode: CoeffMode::Exact,
                z2_tol: 1e-3,
                ..ProtocolOptions::default()
            },
            speed: 500.0,
            omegas: vec![60.0, 120.0, 240.0, 480.0, 960.0],
            fock: fid.fock,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalizationConfig {
    pub params: ChainParams,
    pub protocols: Vec<ProtocolKind>,
    pub options: ProtocolOptions,
    pub speeds: SpeedGrid,
    pub temperature: f64,
    pub delta_fraction: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ThermalizationConfig {
    fn default() -> Self {
        ThermalizationConfig {
            params: ChainParams::chain(100, 2f64.sqrt(), 0.025, 0.025),
            protocols: vec![ProtocolKind::Ua, ProtocolKind::CdExact],
            options: ProtocolOptions::default(),
            speeds: SpeedGrid::log(0.1, 1e3, 2),
            temperature: 1.0,
            delta_fraction: 0.1,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSweepConfig {
    /// Base engine; speed, protocol and T_C are overwritten per grid point.
    pub engine: EngineConfig,
    pub protocols: Vec<ProtocolKind>,
    pub speeds: SpeedGrid,
    /// r = (T_C/T_H)/(omega_C/omega_H), tuned through T_C.
    pub ratios: Vec<f64>,
}

impl Default for EngineSweepConfig {
    fn default() -> Self {
        EngineSweepConfig {
            engine: EngineConfig {
                relax: RelaxPolicy::FreshSite,
                steady_state: true,
                ..EngineConfig::default()
            },
            protocols: vec![ProtocolKind::CdExact, ProtocolKind::Ua],
            speeds: SpeedGrid::list(&[10.0, 30.0, 100.0, 300.0, 1000.0]),
            ratios: vec![0.84, 0.96, 0.997],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    pub omega_b: f64,
    pub gammas: Vec<f64>,
    pub ramp: RampTemplate,
    pub speeds: SpeedGrid,
    pub fock: Vec<u32>,
    pub integrator: IntegratorConfig,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        CollapseConfig {
            omega_b: 5f64.sqrt(),
            gammas: vec![0.1, 0.01],
            ramp: RampTemplate {
                lambda_i: -0.8,
                lambda_f: 0.8,
                delta_fraction: 0.1,
            },
            speeds: SpeedGrid::log(0.1, 1e3, 2),
            fock: vec![3, 1],
            integrator: IntegratorConfig::default(),
        }
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "config", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    FidelitySweep(FidelityConfig),
    FeConvergence(FeConvergenceConfig),
    ThermalizationSweep(ThermalizationConfig),
    EngineSweep(EngineSweepConfig),
    CollapseCheck(CollapseConfig),
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::FidelitySweep => ExperimentConfig::FidelitySweep(Default::default()),
            ExperimentKind::FeConvergence => ExperimentConfig::FeConvergence(Default::default()),
            ExperimentKind::ThermalizationSweep => ExperimentConfig::ThermalizationSweep(Default::default()),
            ExperimentKind::EngineSweep => ExperimentConfig::EngineSweep(Default::default()),
            ExperimentKind::CollapseCheck => ExperimentConfig::CollapseCheck(Default::default()),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentConfig::FidelitySweep(_) => ExperimentKind::FidelitySweep,
            ExperimentConfig::FeConvergence(_) => ExperimentKind::FeConvergence,
            ExperimentConfig::ThermalizationSweep(_) => ExperimentKind::ThermalizationSweep,
            ExperimentConfig::EngineSweep(_) => ExperimentKind::EngineSweep,
            ExperimentConfig::CollapseCheck(_) => ExperimentKind::CollapseCheck,
        }
    }

    /// Defaults for `kind`, overlaid with a config file body (plain or an
    /// earlier run's echo) and then with `key=value` overrides.
    pub fn resolve(kind: ExperimentKind, file: Option<&str>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = config_body(&Self::default_for(kind))?;
        if let Some(text) = file {
            let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            let body = match v.get("experiment") {
                Some(tag) => {
                    if tag.as_str() != Some(kind.label()) {
                        return Err(ConfigError::Invalid(format!(
                            "config is for {tag}, command is {}",
                            kind.label()
                        )));
                    }
                    v.get("config").cloned().unwrap_or(Value::Null)
                }
                None => v,
            };
            if !body.is_null() {
                merge(&mut doc, body);
            }
        }
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        let tagged = serde_json::json!({ "experiment": kind.label(), "config": doc });
        let cfg: ExperimentConfig = serde_json::from_value(tagged).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set_protocols(&mut self, kinds: Vec<ProtocolKind>) -> Result<(), ConfigError> {
        match self {
            ExperimentConfig::FidelitySweep(c) => c.protocols = kinds,
            ExperimentConfig::ThermalizationSweep(c) => c.protocols = kinds,
            ExperimentConfig::EngineSweep(c) => c.protocols = kinds,
            _ => return Err(ConfigError::Invalid("this experiment has a fixed protocol".into())),
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        let params_ok = |p: &ChainParams| p.validate().map_err(|e| ConfigError::Invalid(e.to_string()));
        match self {
            ExperimentConfig::FidelitySweep(c) => {
                params_ok(&c.params)?;
                if c.params.n_bath != 1 {
                    return bad("fidelity sweeps use a single bath oscillator (n_bath = 1)");
                }
                if c.protocols.is_empty() {
                    return bad("protocol list is empty");
                }
                check_fock(&c.fock)?;
                c.speeds.check()
            }
            ExperimentConfig::FeConvergence(c) => {
                params_ok(&c.params)?;
                check_fock(&c.fock)?;
                if c.omegas.is_empty() || c.omegas.iter().any(|o| !(*o > 0.0)) {
                    return bad("omegas must be non-empty and positive");
                }
                if !(c.speed > 0.0) {
                    return bad("speed must be positive");
                }
                Ok(())
            }
            ExperimentConfig::ThermalizationSweep(c) => {
                params_ok(&c.params)?;
                if c.protocols.is_empty() {
                    return bad("protocol list is empty");
                }
                if !(c.temperature > 0.0) {
                    return bad("temperature must be positive");
                }
                c.speeds.check()
            }
            ExperimentConfig::EngineSweep(c) => {
                if c.protocols.is_empty() || c.ratios.is_empty() {
                    return bad("protocol and r lists must be non-empty");
                }
                c.speeds.check()?;
                for &r in &c.ratios {
                    c.engine
                        .clone()
                        .with_r(r)
                        .validate()
                        .map_err(|e| ConfigError::Invalid(format!("r = {r}: {e}")))?;
                }
                Ok(())
            }
            ExperimentConfig::CollapseCheck(c) => {
                if c.gammas.is_empty() || c.gammas.iter().any(|g| !(*g > 0.0)) {
                    return bad("gammas must be non-empty and positive");
                }
                check_fock(&c.fock)?;
                c.speeds.check()
            }
        }
    }
}

fn check_fock(occ: &[u32]) -> Result<(), ConfigError> {
    if occ.len() != 2 {
        return Err(ConfigError::Invalid("fock needs two occupations (n_-, n_+)".into()));
    }
    Ok(())
}

fn config_body(cfg: &ExperimentConfig) -> Result<Value, ConfigError> {
    let v = serde_json::to_value(cfg).map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok(v.get("config").cloned().unwrap_or(Value::Null))
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            _ => return Err(ConfigError::Invalid(format!("`{key}`: `{part}` is not inside an object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in [
            ExperimentKind::FidelitySweep,
            ExperimentKind::FeConvergence,
            ExperimentKind::ThermalizationSweep,
            ExperimentKind::EngineSweep,
            ExperimentKind::CollapseCheck,
        ] {
            ExperimentConfig::default_for(kind).validate().unwrap();
        }
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = ExperimentConfig::resolve(
            ExperimentKind::FidelitySweep,
            None,
            &["params.gamma_sb=0.05".into(), "speeds.values=[1,2]".into(), "options.coeff_mode=exact".into()],
        )
        .unwrap();
        let ExperimentConfig::FidelitySweep(c) = cfg else { panic!() };
        assert_eq!(c.params.gamma_sb, 0.05);
        assert_eq!(c.speeds.points(), vec![1.0, 2.0]);
        assert_eq!(c.options.coeff_mode, CoeffMode::Exact);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::resolve(ExperimentKind::CollapseCheck, None, &["gammas=[0.2]".into()]).unwrap();
        let echo = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::resolve(ExperimentKind::CollapseCheck, Some(&echo), &[]).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_input() {
        let k = ExperimentKind::FidelitySweep;
        assert!(matches!(ExperimentConfig::resolve(k, Some("{"), &[]), Err(ConfigError::Parse(_))));
        assert!(matches!(ExperimentConfig::resolve(k, None, &["nokey".into()]), Err(ConfigError::Override(_))));
        assert!(matches!(ExperimentConfig::resolve(k, None, &["bogus=1".into()]), Err(ConfigError::Parse(_))));
        assert!(matches!(
            ExperimentConfig::resolve(k, None, &["speeds.values=[]".into()]),
            Err(ConfigError::Invalid(_))
        ));
        let other = r#"{"experiment": "engine-sweep", "config": {}}"#;
        assert!(matches!(ExperimentConfig::resolve(k, Some(other), &[]), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn log_grid_spans_endpoints() {
        let g = SpeedGrid::log(0.1, 1e3, 2).points();
        assert_eq!(g.len(), 9);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[8] - 1e3).abs() < 1e-9);
    }
}
