//! Scenario files and dotted-key overrides.
//!
//! A file holds `{"scenario": {...}, "tax": [[...]], "Q": 0}`; `tax` and `Q`
//! are optional. Override keys are `scenario.<field>`, `scenario.p.<j>`,
//! `scenario.m.<i>`, `tax.<i>.<j>` and `Q`, with 1-based indices. A bare
//! scenario field name such as `D0` is shorthand for `scenario.D0`.

use std::path::Path;

use orbit_core::{Scenario, TaxSchedule};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

const SCENARIO_FIELDS: [&str; 11] = [
    "n_markets", "n_sectors", "p", "m", "k", "d", "D0", "Dbar", "X", "c", "treaty_parties",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub scenario: Scenario,
    pub taxes: TaxSchedule,
    pub abatement: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tax: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "Q")]
    abatement: f64,
}

pub fn load_scenario(path: &Path, overrides: &[(String, String)]) -> CliResult<Bundle> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_bundle(&text, overrides)
}

pub fn parse_bundle(text: &str, overrides: &[(String, String)]) -> CliResult<Bundle> {
    let mut root: Value = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    for (key, value) in overrides {
        apply_override(&mut root, key, value)?;
    }
    bundle_from_value(root)
}

fn bundle_from_value(root: Value) -> CliResult<Bundle> {
    let file: BundleFile = serde_json::from_value(root).map_err(|e| CliError::Parse(e.to_string()))?;
    file.scenario.ensure_valid()?;
    let taxes = match file.tax {
        Some(rows) => TaxSchedule::new(rows)?,
        None => TaxSchedule::zeros_for(&file.scenario),
    };
    taxes.check_dims(&file.scenario)?;
    if !file.abatement.is_finite() {
        return Err(CliError::Parse(format!("Q must be finite, got {}", file.abatement)));
    }
    Ok(Bundle {
        scenario: file.scenario,
        taxes,
        abatement: file.abatement,
    })
}

/// Lossless JSON form of a bundle.
pub fn emit_bundle(b: &Bundle) -> String {
    let file = BundleFile {
        scenario: b.scenario.clone(),
        tax: Some(b.taxes.rows().to_vec()),
        abatement: b.abatement,
    };
    serde_json::to_string_pretty(&file).expect("bundle serializes")
}

/// Applies `key=value` to a bundle and revalidates it.
pub fn with_override(b: &Bundle, key: &str, value: &str) -> CliResult<Bundle> {
    let mut root: Value = serde_json::from_str(&emit_bundle(b)).expect("emitted bundle parses");
    apply_override(&mut root, key, value)?;
    bundle_from_value(root)
}

fn normalize(key: &str) -> String {
    if SCENARIO_FIELDS.contains(&key) {
        format!("scenario.{key}")
    } else {
        key.to_string()
    }
}

fn index(key: &str, raw: &str, len: usize) -> CliResult<usize> {
    match raw.parse::<usize>() {
        Ok(i) if (1..=len).contains(&i) => Ok(i - 1),
        _ => Err(CliError::Override {
            key: key.to_string(),
            message: format!("index `{raw}` must be in 1..={len}"),
        }),
    }
}

fn dim(root: &Value, field: &str) -> usize {
    root["scenario"][field].as_u64().unwrap_or(0) as usize
}

pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> CliResult<()> {
    let key = normalize(key);
    let err = |message: String| CliError::Override {
        key: key.clone(),
        message,
    };
    let value: Value =
        serde_json::from_str(raw).map_err(|_| err(format!("`{raw}` is not a JSON value")))?;
    let number = || {
        value
            .as_f64()
            .map(Value::from)
            .ok_or_else(|| err(format!("`{raw}` is not a number")))
    };
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["Q"] => root["Q"] = number()?,
        ["scenario", field] if SCENARIO_FIELDS.contains(field) => {
            root["scenario"][*field] = value.clone();
        }
        ["scenario", field @ ("p" | "m"), idx] => {
            let v = number()?;
            let arr = root["scenario"][*field]
                .as_array_mut()
                .ok_or_else(|| err(format!("scenario.{field} is not an array")))?;
            let i = index(&key, idx, arr.len())?;
            arr[i] = v;
        }
        ["tax", i, j] => {
            let (ns, nm) = (dim(root, "n_sectors"), dim(root, "n_markets"));
            let (i, j) = (index(&key, i, ns)?, index(&key, j, nm)?);
            let v = number()?;
            if !root["tax"].is_array() {
                root["tax"] = serde_json::to_value(vec![vec![0.0; nm]; ns]).expect("zeros");
            }
            let cell = root["tax"]
                .get_mut(i)
                .and_then(|row| row.get_mut(j))
                .ok_or_else(|| err("tax matrix is smaller than the scenario".into()))?;
            *cell = v;
        }
        _ => return Err(err("unknown key".into())),
    }
    Ok(())
}
