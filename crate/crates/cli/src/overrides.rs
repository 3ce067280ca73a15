//! Dotted-path `key=value` overrides applied to a JSON config document.
//!
//! The path must name a key that already exists in the document (configs
//! serialize with every field present, so a miss means a typo). The value
//! parses as JSON when possible (`0.2`, `true`, `null`, `[4,8]`) and falls
//! back to a plain string otherwise (`desk`, `conv3_3`).

use vhs2hdtv_core::{Error, Result};

pub fn apply(cfg: &mut serde_json::Value, specs: &[String]) -> Result<()> {
    for spec in specs {
        let (key, raw) = spec.split_once('=').ok_or_else(|| {
            Error::Config(format!("override `{}` must look like key=value", spec))
        })?;
        let mut cur = &mut *cfg;
        let mut parts = key.split('.').peekable();
        while let Some(part) = parts.next() {
            let here = cur;
            let slot = here
                .as_object_mut()
                .and_then(|obj| obj.get_mut(part))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "no config key `{}` (while applying override `{}`)",
                        part, spec
                    ))
                })?;
            if parts.peek().is_none() {
                *slot = serde_json::from_str(raw)
                    .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
                break;
            }
            cur = slot;
        }
    }
    Ok(())
}

/// Deserialize a JSON value into a config type, reporting failures as
/// usage errors rather than runtime errors.
pub fn into_config<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("invalid config after overrides: {}", e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vhs2hdtv_core::trainer::TrainConfig;

    fn base() -> serde_json::Value {
        serde_json::to_value(TrainConfig::default()).unwrap()
    }

    #[test]
    fn overrides_replace_nested_and_top_level_keys() {
        let mut v = base();
        apply(
            &mut v,
            &[
                "lr=0.0002".to_string(),
                "weights.lambda_cyc=0.3".to_string(),
                "model.feature_tap=conv3_3".to_string(),
                "res_steps_per_cycle_step=0".to_string(),
            ],
        )
        .unwrap();
        let cfg: TrainConfig = into_config(v).unwrap();
        assert_eq!(cfg.lr, 2e-4);
        assert_eq!(cfg.weights.lambda_cyc, 0.3);
        assert_eq!(cfg.model.feature_tap, "conv3_3");
        assert_eq!(cfg.res_steps_per_cycle, 0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        let mut v = base();
        let err = apply(&mut v, &["no_such_key=1".to_string()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(format!("{}", err).contains("no_such_key"));

        let err = apply(&mut v, &["lr".to_string()]).unwrap_err();
        assert!(format!("{}", err).contains("key=value"));

        let mut v = base();
        apply(&mut v, &["lr=not_a_number".to_string()]).unwrap();
        let err = into_config::<TrainConfig>(v).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
