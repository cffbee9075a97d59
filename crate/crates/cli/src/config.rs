//! Run configuration: a TOML tree merged over the defaults of its experiment
//! kind, then patched with `--set` overrides. Keys absent from the defaults
//! are rejected, so typos fail loudly instead of being ignored.

use std::path::Path;

use opm_core::experiments::cessi::{CessiConfig, TippingConfig};
use opm_core::experiments::rb::{RbConfig, Reference};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CessiClosure,
    CessiTipping,
    RbPredict,
    RbBaseline,
    DefectScan,
    ModelInfo,
}

impl ExperimentKind {
    fn parse(s: &str) -> Result<Self, CliError> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| CliError::Config(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Cessi,
    Rb9d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub format: Format,
    /// Keep every n-th sample of written trajectories.
    pub stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfoConfig {
    pub model: ModelName,
    /// Rayleigh number for the convection model.
    pub r: f64,
}

/// The resolved configuration. Only the sections relevant to `experiment`
/// are present in the tree; the typed views below read them.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub tree: Value,
}

fn section<T: for<'de> Deserialize<'de>>(tree: &Value, key: &str) -> Result<T, CliError> {
    let v = tree.get(key).cloned().ok_or_else(|| CliError::Config(format!("missing section [{key}]")))?;
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("[{key}]: {e}")))
}

impl RunConfig {
    pub fn seed(&self) -> Result<u64, CliError> {
        section(&self.tree, "seed")
    }
    pub fn output(&self) -> Result<OutputConfig, CliError> {
        section(&self.tree, "output")
    }
    pub fn cessi(&self) -> Result<CessiConfig, CliError> {
        let mut c: CessiConfig = section(&self.tree, "cessi")?;
        c.seed = self.seed()?;
        Ok(c)
    }
    pub fn tipping(&self) -> Result<TippingConfig, CliError> {
        let mut c: TippingConfig = section(&self.tree, "tipping")?;
        c.seed = self.seed()?;
        Ok(c)
    }
    pub fn rb(&self) -> Result<RbConfig, CliError> {
        section(&self.tree, "rb")
    }
    pub fn validate_full(&self) -> Result<bool, CliError> {
        section(&self.tree, "validate")
    }
    pub fn references(&self) -> Result<Vec<Reference>, CliError> {
        section(&self.tree, "references")
    }
    pub fn model(&self) -> Result<ModelName, CliError> {
        section(&self.tree, "model")
    }
    pub fn model_info(&self) -> Result<ModelInfoConfig, CliError> {
        Ok(ModelInfoConfig { model: self.model()?, r: section(&self.tree, "r")? })
    }

    /// Type-check every section the experiment reads and run the cheap
    /// argument checks, so bad input fails before anything is written.
    pub fn check(&self) -> Result<(), CliError> {
        self.seed()?;
        let out = self.output()?;
        if out.stride == 0 {
            return Err(CliError::Config("output.stride must be at least 1".into()));
        }
        let cfg_err = |e: opm_core::OpmError| CliError::Config(e.to_string());
        match self.kind {
            ExperimentKind::CessiClosure => self.cessi()?.validate().map_err(cfg_err)?,
            ExperimentKind::CessiTipping => {
                self.cessi()?.validate().map_err(cfg_err)?;
                let t = self.tipping()?;
                if t.n_realizations == 0 || t.bins == 0 {
                    return Err(CliError::Config("tipping needs n_realizations >= 1 and bins >= 1".into()));
                }
                if !(t.kappa > 0.0) || !(t.sigma >= 0.0) {
                    return Err(CliError::Config("tipping needs kappa > 0 and sigma >= 0".into()));
                }
            }
            ExperimentKind::RbPredict => {
                self.rb()?.validate().map_err(cfg_err)?;
                self.validate_full()?;
            }
            ExperimentKind::RbBaseline => {
                self.rb()?.validate().map_err(cfg_err)?;
                self.references()?;
            }
            ExperimentKind::DefectScan => match self.model()? {
                ModelName::Cessi => self.cessi()?.validate().map_err(cfg_err)?,
                ModelName::Rb9d => self.rb()?.validate().map_err(cfg_err)?,
            },
            ExperimentKind::ModelInfo => {
                self.model_info()?;
            }
        }
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("default configs serialize")
}

/// Default tree for `kind`.
pub fn defaults(kind: ExperimentKind) -> Value {
    let mut m = Map::new();
    m.insert("experiment".into(), to_value(&kind));
    m.insert("seed".into(), Value::from(7u64));
    m.insert("output".into(), to_value(&OutputConfig { format: Format::Csv, stride: 10 }));
    match kind {
        ExperimentKind::CessiClosure => {
            m.insert("cessi".into(), to_value(&CessiConfig::default()));
        }
        ExperimentKind::CessiTipping => {
            m.insert("cessi".into(), to_value(&CessiConfig::default()));
            m.insert("tipping".into(), to_value(&TippingConfig::default()));
        }
        ExperimentKind::RbPredict => {
            m.insert("rb".into(), to_value(&RbConfig::experiment_one()));
            m.insert("validate".into(), Value::Bool(true));
        }
        ExperimentKind::RbBaseline => {
            m.insert("rb".into(), to_value(&RbConfig::experiment_two()));
            m.insert("references".into(), to_value(&[Reference::SteadyState, Reference::MeanState]));
        }
        ExperimentKind::DefectScan => {
            m.insert("model".into(), to_value(&ModelName::Rb9d));
            m.insert("cessi".into(), to_value(&CessiConfig::default()));
            // In-sample closure: prediction and training at the same r.
            m.insert("rb".into(), to_value(&RbConfig { r_p: 13.91, ..RbConfig::experiment_one() }));
        }
        ExperimentKind::ModelInfo => {
            m.insert("model".into(), to_value(&ModelName::Cessi));
            m.insert("r".into(), Value::from(14.0));
            m.insert("cessi".into(), to_value(&CessiConfig::default()));
            m.insert("rb".into(), to_value(&RbConfig::experiment_one()));
        }
    }
    Value::Object(m)
}

/// Overwrite `base` with `patch`, recursing into tables. Every key of
/// `patch` must already exist in `base`, except where `base` holds `null`
/// (an unset optional) or an array.
pub fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(CliError::Config(format!("unknown key {here}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            if slot.is_object() && !v.is_object() {
                return Err(CliError::Config(format!("{path} is a table")));
            }
            *slot = v.clone();
            Ok(())
        }
    }
}

/// Parse the right-hand side of `--set key=value` as a TOML value, falling
/// back to a bare string.
fn parse_scalar(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(t) => toml_to_json(&t["v"]),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn toml_to_json(v: &toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::String(s.clone()),
        toml::Value::Integer(i) => Value::from(*i),
        toml::Value::Float(f) if f.is_infinite() && *f > 0.0 => Value::String("inf".into()),
        toml::Value::Float(f) => serde_json::Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
        toml::Value::Boolean(b) => Value::Bool(*b),
        toml::Value::Datetime(d) => Value::String(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}

/// Apply one `a.b.c=value` override.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let mut patch = parse_scalar(raw.trim());
    for part in key.rsplit('.') {
        if part.is_empty() {
            return Err(CliError::Config(format!("bad override key {key:?}")));
        }
        let mut m = Map::new();
        m.insert(part.to_string(), patch);
        patch = Value::Object(m);
    }
    // A bare key that is not top-level is looked up in the experiment's
    // main section, so `--set n_realizations=10` works.
    if !key.contains('.') && tree.get(key).is_none() {
        for sec in ["tipping", "cessi", "rb"] {
            if tree.get(sec).and_then(|s| s.get(key)).is_some() {
                let mut m = Map::new();
                m.insert(sec.to_string(), patch);
                return merge(tree, &Value::Object(m), "");
            }
        }
    }
    merge(tree, &patch, "")
}

/// Load `path`, merge it over the defaults of its kind, then apply the
/// overrides in order.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    from_toml(&text, overrides)
}

pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let user = toml_to_json(&toml::Value::Table(table));
    let kind_name = user
        .get("experiment")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Config("config lacks `experiment = \"<kind>\"`".into()))?;
    let kind = ExperimentKind::parse(kind_name)?;
    let mut tree = defaults(kind);
    merge(&mut tree, &user, "")?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    if tree.get("experiment") != Some(&to_value(&kind)) {
        return Err(CliError::Config("the experiment kind cannot be overridden".into()));
    }
    let cfg = RunConfig { kind, tree };
    cfg.check()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_and_bare_keys() {
        let cfg = from_toml(
            "experiment = \"cessi-tipping\"\n[tipping]\nkappa = 1e-3\n",
            &["n_realizations=10".into(), "cessi.tau=inf".into(), "seed=3".into()],
        )
        .unwrap();
        let t = cfg.tipping().unwrap();
        assert_eq!(t.n_realizations, 10);
        assert_eq!(t.kappa, 1e-3);
        assert_eq!(t.seed, 3);
        assert_eq!(cfg.cessi().unwrap().tau, Some(f64::INFINITY));
    }

    #[test]
    fn nested_defaults_survive_partial_tables() {
        let cfg = from_toml("experiment = \"cessi-closure\"\n[cessi.search]\npoints = 40\n", &[]).unwrap();
        let c = cfg.cessi().unwrap();
        assert_eq!(c.search.points, 40);
        assert!(c.search.with_memory);
    }

    #[test]
    fn unknown_keys_and_kinds_are_config_errors() {
        for text in [
            "experiment = \"cessi-closure\"\n[cessi]\nmu_typo = 1.0\n",
            "experiment = \"warp-drive\"\n",
            "experiment = \"cessi-closure\"\n[cessi]\ndt = -1.0\n",
            "experiment = [",
        ] {
            assert!(matches!(from_toml(text, &[]), Err(CliError::Config(_))), "{text}");
        }
        assert!(from_toml("experiment = \"cessi-closure\"\n", &["nonsense=1".into()]).is_err());
    }
}
