//! Versioned JSON container for fitted forests.

use serde::{Deserialize, Serialize};

use super::data::schema_hash;
use super::forest::SurvivalForestModel;
use super::SurvivalError;

pub const MODEL_FORMAT: &str = "oncosurv-rsf";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container<M> {
    format: String,
    version: u32,
    schema_hash: String,
    model: M,
}

pub fn serialize_model(model: &SurvivalForestModel) -> Result<Vec<u8>, SurvivalError> {
    let c = Container {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        schema_hash: model.schema_hash.clone(),
        model,
    };
    serde_json::to_vec(&c).map_err(|e| SurvivalError::Serialization(e.to_string()))
}

pub fn deserialize_model(bytes: &[u8]) -> Result<SurvivalForestModel, SurvivalError> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_slice(bytes).map_err(|e| SurvivalError::Serialization(e.to_string()))?;
    if h.format != MODEL_FORMAT {
        return Err(SurvivalError::Serialization(format!("not a model file (format {:?})", h.format)));
    }
    if h.version != MODEL_VERSION {
        return Err(SurvivalError::VersionMismatch { found: h.version, supported: MODEL_VERSION });
    }
    let c: Container<SurvivalForestModel> =
        serde_json::from_slice(bytes).map_err(|e| SurvivalError::Serialization(e.to_string()))?;
    let computed = schema_hash(&c.model.feature_names);
    for stored in [&c.schema_hash, &c.model.schema_hash] {
        if *stored != computed {
            return Err(SurvivalError::SchemaHashMismatch { stored: stored.clone(), computed });
        }
    }
    Ok(c.model)
}
