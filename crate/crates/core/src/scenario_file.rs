//! Versioned JSON scenario files.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::sim::Scenario;

pub const SCHEMA_VERSION: u64 = 1;

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut v: Value = serde_json::from_str(text)?;
    let obj = v.as_object_mut().ok_or_else(|| Error::ConfigInvalid("scenario must be a JSON object".into()))?;
    match obj.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(Error::ConfigInvalid(format!("unsupported schema_version {other}"))),
        None => return Err(Error::ConfigInvalid("missing schema_version".into())),
    }
    let sc: Scenario = serde_json::from_value(v)?;
    sc.validate()?;
    Ok(sc)
}

pub fn scenario_to_string(sc: &Scenario) -> Result<String> {
    let mut v = serde_json::to_value(sc)?;
    if let Value::Object(obj) = &mut v {
        obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}
