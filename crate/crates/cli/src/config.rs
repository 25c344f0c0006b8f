//! Scenario configuration: a TOML file with one section per module, layered
//! over the built-in defaults and then over `--key value` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityKindName {
    PowerGap,
    ExpGap,
    Bounded,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityConfig {
    pub kind: Option<IntensityKindName>,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKindName {
    Zero,
    Constant,
    /// `scale · λ(t)`; unbounded, ODE scenarios only.
    LambdaMultiple,
    ExpMinusLambda,
    /// `(1 + sin W_t) / 2`.
    SinW,
    /// `value + Σ_k cos_k cos(kπt/T) + sin_k sin(kπt/T)`.
    Trig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    pub kind: Option<PhiKindName>,
    pub value: Option<f64>,
    pub scale: Option<f64>,
    pub cos: Option<Vec<f64>>,
    pub sin: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKindName {
    Identity,
    ExpUtility,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub kind: Option<DriverKindName>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSchemeName {
    Uniform,
    LambdaEquidistributed,
    GeometricTail,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub scheme: Option<GridSchemeName>,
    pub n: Option<usize>,
    pub lambda_max: Option<f64>,
    pub ratio: Option<f64>,
    pub eps_min: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub degree: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeModeName {
    Ode,
    Regression,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub mode: Option<SchemeModeName>,
    pub schedule: Option<Vec<f64>>,
    pub t0: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    pub y0: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub terminal: Option<f64>,
    pub intensity: Option<IntensityConfig>,
    pub phi: Option<PhiConfig>,
    pub driver: Option<DriverConfig>,
    pub grid: Option<GridConfig>,
    pub mc: Option<McConfig>,
    pub scheme: Option<SchemeSection>,
    pub family: Option<FamilySection>,
}

/// Short flag names and the config keys they set.
pub const ALIASES: &[(&str, &str)] = &[
    ("terminal", "terminal"),
    ("alpha", "driver.alpha"),
    ("driver", "driver.kind"),
    ("c", "family.c"),
    ("y0", "family.y0"),
    ("r", "family.r"),
    ("sigma", "family.sigma"),
    ("gamma", "intensity.gamma"),
    ("p", "intensity.p"),
    ("horizon", "intensity.horizon"),
    ("intensity", "intensity.kind"),
    ("phi", "phi.kind"),
    ("phi_value", "phi.value"),
    ("phi_scale", "phi.scale"),
    ("seed", "mc.seed"),
    ("paths", "mc.paths"),
    ("degree", "mc.degree"),
    ("n", "grid.n"),
    ("lambda_max", "grid.lambda_max"),
    ("grid", "grid.scheme"),
    ("mode", "scheme.mode"),
    ("schedule", "scheme.schedule"),
    ("t0", "scheme.t0"),
    ("tol", "scheme.tol"),
    ("out", "output_dir"),
];

impl ScenarioConfig {
    /// Parses a config file; errors carry the line and column of the fault.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    }

    fn to_table(&self) -> Table {
        match Value::try_from(self) {
            Ok(Value::Table(t)) => t,
            _ => Table::new(),
        }
    }

    /// `other` wins wherever it sets a value.
    pub fn overlay(&self, other: &ScenarioConfig) -> Result<Self, CliError> {
        let mut base = self.to_table();
        merge(&mut base, other.to_table());
        Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    /// Applies one `--key value` override. `key` is an alias from
    /// [`ALIASES`] or a dotted path such as `grid.n`.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self, CliError> {
        let path = ALIASES
            .iter()
            .find(|(k, _)| *k == key)
            .map_or(key, |(_, p)| *p);
        let value = parse_value(raw);
        let mut table = Table::new();
        insert_path(&mut table, path, value);
        let patch: ScenarioConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("--{key} {raw}: {}", e.message().trim())))?;
        self.overlay(&patch)
    }

    /// Stable TOML rendering, echoed into `report.txt`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

fn merge(base: &mut Table, patch: Table) {
    for (k, v) in patch {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(p)) => merge(b, p),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn insert_path(table: &mut Table, path: &str, value: Value) {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().unwrap_or(path);
    let mut cur = table;
    for p in parts {
        cur = match cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => unreachable!("fresh entries are tables"),
        };
    }
    cur.insert(last.to_string(), value);
}

/// TOML literal if it parses as one, a float list for `a,b,c`, else a string.
fn parse_value(raw: &str) -> Value {
    let literal = if raw.contains(',') && !raw.trim_start().starts_with('[') {
        format!("v = [{raw}]")
    } else {
        format!("v = {raw}")
    };
    match toml::from_str::<Table>(&literal) {
        Ok(mut t) => match t.remove("v") {
            Some(Value::Array(items)) => Value::Array(
                items
                    .into_iter()
                    .map(|v| match v {
                        Value::Integer(i) => Value::Float(i as f64),
                        other => other,
                    })
                    .collect(),
            ),
            Some(v) => v,
            None => Value::String(raw.to_string()),
        },
        Err(_) => Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_reports_line() {
        let err = ScenarioConfig::from_toml_str("terminal = 0.0\n[grid]\nnodes = 3\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("nodes"), "{msg}");
    }

    #[test]
    fn wrong_type_reports_field() {
        let err = ScenarioConfig::from_toml_str("[mc]\npaths = \"many\"\n", "cfg.toml").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn overrides_use_aliases_and_paths() {
        let c = ScenarioConfig::default()
            .with_override("terminal", "1")
            .unwrap()
            .with_override("grid.n", "17")
            .unwrap()
            .with_override("y0", "0,1,3")
            .unwrap()
            .with_override("driver", "exp_utility")
            .unwrap();
        assert_eq!(c.terminal, Some(1.0));
        assert_eq!(c.grid.unwrap().n, Some(17));
        assert_eq!(c.family.unwrap().y0, Some(vec![0.0, 1.0, 3.0]));
        assert_eq!(c.driver.unwrap().kind, Some(DriverKindName::ExpUtility));
    }

    #[test]
    fn bad_override_names_flag() {
        let err = ScenarioConfig::default().with_override("n", "-3").unwrap_err();
        assert!(err.to_string().contains("--n -3"), "{err}");
        assert!(ScenarioConfig::default().with_override("bogus", "1").is_err());
    }

    #[test]
    fn overlay_keeps_unset_fields() {
        let base = ScenarioConfig::default().with_override("grid.n", "5").unwrap().with_override("grid.lambda_max", "3").unwrap();
        let top = ScenarioConfig::default().with_override("grid.n", "9").unwrap();
        let g = base.overlay(&top).unwrap().grid.unwrap();
        assert_eq!((g.n, g.lambda_max), (Some(9), Some(3.0)));
    }
}
