//! Dotted-key overrides (`--set key=value`) for scenario documents and
//! planner parameters.
//!
//! Keys under `planner.` address [`PlannerParams`]; every other key addresses
//! the scenario document, with numeric segments indexing arrays
//! (`nominal_path.0.psi_deg`).

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::params::PlannerParams;
use crate::world::ScenarioFile;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Override {
    pub key: String,
    pub value: String,
}

impl std::str::FromStr for Override {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::invalid("--set", format!("expected key=value, got `{s}`")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::invalid("--set", "empty key"));
        }
        Ok(Override {
            key: key.to_string(),
            value: v.trim().to_string(),
        })
    }
}

/// Parses `raw` as a value of the same JSON kind as `old`.
fn coerce(key: &str, old: &Value, raw: &str) -> Result<Value> {
    let bad = |what: &str| Error::invalid(key, format!("expected {what}, got `{raw}`"));
    Ok(match old {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("a boolean"))?),
        Value::Number(n) if n.is_u64() => match raw.parse::<u64>() {
            Ok(u) => Value::from(u),
            Err(_) => {
                let f: f64 = raw.parse().map_err(|_| bad("a number"))?;
                serde_json::Number::from_f64(f).map(Value::Number).ok_or_else(|| bad("a finite number"))?
            }
        },
        Value::Number(_) => {
            let f: f64 = raw.parse().map_err(|_| bad("a number"))?;
            serde_json::Number::from_f64(f).map(Value::Number).ok_or_else(|| bad("a finite number"))?
        }
        Value::String(_) => Value::String(raw.to_string()),
        Value::Null => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
        Value::Array(_) | Value::Object(_) => {
            let v: Value = serde_json::from_str(raw).map_err(|_| bad("JSON"))?;
            if std::mem::discriminant(&v) != std::mem::discriminant(old) {
                return Err(bad(if old.is_array() { "a JSON array" } else { "a JSON object" }));
            }
            v
        }
    })
}

fn set_path(root: &mut Value, full_key: &str, path: &str, raw: &str) -> Result<()> {
    let unknown = || Error::invalid(full_key, "unknown key");
    let mut cur = root;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(seg).ok_or_else(unknown)?,
            Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(|| Error::invalid(full_key, "index out of range"))?
            }
            _ => return Err(unknown()),
        };
    }
    *cur = coerce(full_key, cur, raw)?;
    Ok(())
}

fn apply_to<T: Serialize + DeserializeOwned>(target: &mut T, sets: &[(&Override, &str)]) -> Result<()> {
    if sets.is_empty() {
        return Ok(());
    }
    let mut v = serde_json::to_value(&*target).map_err(|e| Error::Parse(e.to_string()))?;
    for (o, path) in sets {
        set_path(&mut v, &o.key, path, &o.value)?;
    }
    *target = serde_json::from_value(v).map_err(|e| Error::invalid(sets[0].0.key.clone(), e.to_string()))?;
    Ok(())
}

/// Applies overrides in order. Unknown keys and mistyped values are rejected
/// before anything changes.
pub fn apply_overrides(doc: &mut ScenarioFile, params: &mut PlannerParams, overrides: &[Override]) -> Result<()> {
    let mut d = doc.clone();
    let mut p = params.clone();
    let mut for_doc = Vec::new();
    let mut for_params = Vec::new();
    for o in overrides {
        match o.key.strip_prefix("planner.") {
            Some(rest) => for_params.push((o, rest)),
            None => for_doc.push((o, o.key.as_str())),
        }
    }
    apply_to(&mut d, &for_doc)?;
    apply_to(&mut p, &for_params)?;
    p.validate()?;
    *doc = d;
    *params = p;
    Ok(())
}
