//! Model checkpoints in the binary container.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::state::{ModelSpec, ModelState, Param, ParamGroup};
use crate::container::Container;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Meta {
    spec: ModelSpec,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    group: ParamGroup,
    trainable: bool,
}

pub fn to_container(state: &ModelState) -> Container {
    let meta = Meta {
        spec: state.spec.clone(),
        params: state
            .params
            .iter()
            .map(|p| ParamMeta {
                name: p.name.clone(),
                group: p.group,
                trainable: p.trainable,
            })
            .collect(),
    };
    Container {
        metadata: serde_json::to_string(&meta).expect("serializable metadata"),
        entries: state.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
    }
}

pub fn from_container(c: &Container) -> Result<ModelState> {
    let meta: Meta =
        serde_json::from_str(&c.metadata).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    if meta.params.len() != c.entries.len() {
        return Err(Error::Checkpoint("parameter list and entries differ".into()));
    }
    let params = meta
        .params
        .into_iter()
        .zip(&c.entries)
        .map(|(m, (name, value))| {
            if &m.name != name {
                return Err(Error::Checkpoint(format!("entry {name} where {} expected", m.name)));
            }
            Ok(Param {
                name: m.name,
                group: m.group,
                value: value.clone(),
                trainable: m.trainable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelState { spec: meta.spec, params })
}

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    to_container(state).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    from_container(&Container::load(path)?)
}
