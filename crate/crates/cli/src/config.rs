use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Type1Sweep,
    PowerSweep,
    PhdVsSme,
    PairedDiffInvariance,
    Counterexample,
    RegressShift,
    AbcRun,
    FreqnetDiag,
    TwoSample,
    Fixtures,
}

impl ExperimentKind {
    pub fn dir_name(self) -> &'static str {
        match self {
            ExperimentKind::Type1Sweep => "type1_sweep",
            ExperimentKind::PowerSweep => "power_sweep",
            ExperimentKind::PhdVsSme => "phd_vs_sme",
            ExperimentKind::PairedDiffInvariance => "paired_diff_invariance",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::RegressShift => "regress_shift",
            ExperimentKind::AbcRun => "abc_run",
            ExperimentKind::FreqnetDiag => "freqnet_diag",
            ExperimentKind::TwoSample => "two_sample",
            ExperimentKind::Fixtures => "fixtures",
        }
    }
}

/// Contents of a `--config` file. `parameters` overlays the experiment's own defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.runs == Some(0) {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        if let Some(a) = cfg.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(CliError::Config(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        Ok(cfg)
    }
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// `defaults` with `parameters` merged over it, field by field.
pub fn overlay<T: Serialize + for<'de> Deserialize<'de>>(defaults: &T, parameters: &Map<String, Value>) -> Result<T, CliError> {
    let mut v = serde_json::to_value(defaults).map_err(|e| CliError::Config(e.to_string()))?;
    merge(&mut v, &Value::Object(parameters.clone()));
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("invalid parameters: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use phasekit::experiments::SweepConfig;

    #[test]
    fn partial_parameters_keep_preset_defaults() {
        let params: Map<String, Value> = serde_json::from_str(r#"{"sample_sizes": [500], "me": {"j": 3}}"#).unwrap();
        let cfg = overlay(&SweepConfig::power(), &params).unwrap();
        assert_eq!(cfg.sample_sizes, vec![500]);
        assert_eq!(cfg.me.j, 3);
        assert_eq!(cfg.dof_y, 8.0);
        assert_eq!(cfg.me.iterations, SweepConfig::power().me.iterations);
    }

    #[test]
    fn bad_parameter_types_are_config_errors() {
        let params: Map<String, Value> = serde_json::from_str(r#"{"runs": "many"}"#).unwrap();
        assert!(matches!(overlay(&SweepConfig::type1(), &params), Err(CliError::Config(_))));
    }
}
