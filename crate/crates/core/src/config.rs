//! Reading and writing the scenario configuration as TOML.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::Real;

/// Parses a scenario configuration from TOML text.
pub fn from_toml_str<S: Real + DeserializeOwned>(text: &str) -> Result<ScenarioConfig<S>> {
    let config: ScenarioConfig<S> =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Loads and validates a scenario configuration from a file.
pub fn load<S: Real + DeserializeOwned>(path: &std::path::Path) -> Result<ScenarioConfig<S>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_toml_str(&text)
}

/// Serializes a configuration to TOML text.
pub fn to_toml_string<S: Real + Serialize>(config: &ScenarioConfig<S>) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::InvalidConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_default_scenario;

    #[test]
    fn default_config_round_trips_through_toml() {
        let config = build_default_scenario::<f64>();
        let text = to_toml_string(&config).unwrap();
        let parsed: ScenarioConfig<f64> = from_toml_str(&text).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn invalid_documents_are_reported_as_config_errors() {
        assert!(matches!(
            from_toml_str::<f64>("not toml at all ["),
            Err(Error::InvalidConfig(_))
        ));
        // Structurally valid TOML that violates an invariant.
        let mut config = build_default_scenario::<f64>();
        config.update_distance_m = -1.0;
        let text = to_toml_string(&config).unwrap();
        assert!(matches!(
            from_toml_str::<f64>(&text),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn missing_files_surface_an_io_error() {
        assert!(matches!(
            load::<f64>(std::path::Path::new("/nonexistent/scenario.toml")),
            Err(Error::Io { .. })
        ));
    }
}
