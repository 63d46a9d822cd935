//! Versioned JSON envelope for persisted models.
//!
//! Every saved model records the container format, a model kind tag, and a
//! schema version; loading anything that does not match fails loudly instead
//! of misreading tensors.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "trendlab-model";

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    kind: String,
    version: u32,
    payload: T,
}

pub fn write_model<T: Serialize, W: Write>(
    mut w: W,
    kind: &str,
    version: u32,
    payload: &T,
) -> Result<()> {
    let envelope = Envelope {
        format: FORMAT.to_string(),
        kind: kind.to_string(),
        version,
        payload,
    };
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::ModelContainer(format!("serialize failed: {e}")))?;
    w.write_all(text.as_bytes())?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_model<T: DeserializeOwned, R: Read>(mut r: R, kind: &str, version: u32) -> Result<T> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let envelope: Envelope<serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| Error::ModelContainer(format!("unreadable container: {e}")))?;
    if envelope.format != FORMAT {
        return Err(Error::ModelContainer(format!(
            "format '{}' is not '{FORMAT}'",
            envelope.format
        )));
    }
    if envelope.kind != kind {
        return Err(Error::ModelContainer(format!(
            "container holds a '{}' model, expected '{kind}'",
            envelope.kind
        )));
    }
    if envelope.version != version {
        return Err(Error::ModelContainer(format!(
            "container version {} does not match supported version {version}",
            envelope.version
        )));
    }
    serde_json::from_value(envelope.payload)
        .map_err(|e| Error::ModelContainer(format!("payload decode failed: {e}")))
}
