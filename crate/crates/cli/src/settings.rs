//! Run settings, resolved from three layers: built-in defaults, then the
//! optional TOML settings file, then command-line flags. Later layers win.
//!
//! The defaults describe the primary evaluation setup: companded 8-bit
//! telephone audio, one hidden bit per code, fixed-layout headers at a fixed
//! zero offset, 160-code frames, and an acknowledgment for every segment.

use std::path::{Path, PathBuf};

use undertone::engine::SessionConfig;
use undertone::stego::{EmbedAlgorithm, Placement, PlacementMode};
use undertone::{CodecId, Error, HeaderDesign, Result};

/// Everything a command needs to know after the layers are merged.
#[derive(Clone, Debug)]
pub struct Settings {
    pub codec: CodecId,
    pub alg: EmbedAlgorithm,
    pub header: HeaderDesign,
    pub embedding: PlacementMode,
    /// Embed offset in codes (the initial offset under chained placement).
    pub offset: usize,
    /// Cover codes per packet.
    pub frame: usize,
    /// Drop probability applied to this endpoint's outgoing packets.
    pub loss: f64,
    /// Adjacent-swap probability applied to outgoing packets.
    pub reorder: f64,
    pub seed: u64,
    /// Acknowledge every n-th newly filled data segment.
    pub ack_every: usize,
    pub peer: Option<String>,
    pub input: Option<PathBuf>,
    pub payload: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub pesq_tool: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            codec: CodecId::Ulaw,
            alg: EmbedAlgorithm::Lsb1,
            header: HeaderDesign::Static,
            embedding: PlacementMode::Fixed,
            offset: 0,
            frame: 160,
            loss: 0.0,
            reorder: 0.0,
            seed: 0,
            ack_every: 1,
            peer: None,
            input: None,
            payload: None,
            report: None,
            pesq_tool: None,
        }
    }
}

impl Settings {
    /// Overwrites every field the layer actually sets.
    pub fn apply(&mut self, layer: &Overrides) {
        if let Some(v) = layer.codec {
            self.codec = v;
        }
        if let Some(v) = layer.alg {
            self.alg = v;
        }
        if let Some(v) = layer.header {
            self.header = v;
        }
        if let Some(v) = layer.embedding {
            self.embedding = v;
        }
        if let Some(v) = layer.offset {
            self.offset = v;
        }
        if let Some(v) = layer.frame {
            self.frame = v;
        }
        if let Some(v) = layer.loss {
            self.loss = v;
        }
        if let Some(v) = layer.reorder {
            self.reorder = v;
        }
        if let Some(v) = layer.seed {
            self.seed = v;
        }
        if let Some(v) = layer.ack_every {
            self.ack_every = v;
        }
        if let Some(v) = &layer.peer {
            self.peer = Some(v.clone());
        }
        if let Some(v) = &layer.input {
            self.input = Some(v.clone());
        }
        if let Some(v) = &layer.payload {
            self.payload = Some(v.clone());
        }
        if let Some(v) = &layer.report {
            self.report = Some(v.clone());
        }
        if let Some(v) = &layer.pesq_tool {
            self.pesq_tool = Some(v.clone());
        }
    }

    /// Builds and validates the protocol session these settings describe.
    pub fn session(&self) -> Result<SessionConfig> {
        let cfg = SessionConfig {
            header_design: self.header,
            codec: self.codec,
            alg: self.alg,
            placement: Placement {
                mode: self.embedding,
                initial_offset_codes: self.offset,
            },
            frame_codes: self.frame,
            ack_every_n: self.ack_every,
            seed: self.seed,
            ..SessionConfig::baseline()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One layer of optional settings; `None` means "not given here".
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub codec: Option<CodecId>,
    pub alg: Option<EmbedAlgorithm>,
    pub header: Option<HeaderDesign>,
    pub embedding: Option<PlacementMode>,
    pub offset: Option<usize>,
    pub frame: Option<usize>,
    pub loss: Option<f64>,
    pub reorder: Option<f64>,
    pub seed: Option<u64>,
    pub ack_every: Option<usize>,
    pub peer: Option<String>,
    pub input: Option<PathBuf>,
    pub payload: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub pesq_tool: Option<PathBuf>,
}

/// Reads one TOML settings file into an override layer.
pub fn read_config_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Argument(msg) => Error::Argument(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses the settings file body. Keys mirror the long flags (underscores
/// instead of dashes); unknown keys are rejected so typos surface instead of
/// silently keeping a default.
fn parse_config(text: &str) -> Result<Overrides> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::Argument(format!("not valid TOML: {e}")))?;
    let mut over = Overrides::default();
    for (key, value) in &table {
        match key.as_str() {
            "codec" => over.codec = Some(parse_codec(str_value(key, value)?)?),
            "alg" => over.alg = Some(str_value(key, value)?.parse()?),
            "header" => over.header = Some(parse_header(str_value(key, value)?)?),
            "embedding" => over.embedding = Some(str_value(key, value)?.parse()?),
            "offset" => over.offset = Some(usize_value(key, value)?),
            "frame" => over.frame = Some(usize_value(key, value)?),
            "loss" => over.loss = Some(float_value(key, value)?),
            "reorder" => over.reorder = Some(float_value(key, value)?),
            "seed" => over.seed = Some(u64_value(key, value)?),
            "ack_every" => over.ack_every = Some(usize_value(key, value)?),
            "peer" => over.peer = Some(str_value(key, value)?.to_string()),
            "input" => over.input = Some(path_value(key, value)?),
            "payload" => over.payload = Some(path_value(key, value)?),
            "report" => over.report = Some(path_value(key, value)?),
            "pesq_tool" => over.pesq_tool = Some(path_value(key, value)?),
            other => return Err(Error::Argument(format!("unknown setting `{other}`"))),
        }
    }
    Ok(over)
}

pub fn parse_codec(s: &str) -> Result<CodecId> {
    match s.to_ascii_lowercase().as_str() {
        "ulaw" => Ok(CodecId::Ulaw),
        "dvi" => Ok(CodecId::Dvi),
        other => Err(Error::Argument(format!(
            "unknown codec {other:?} (expected ulaw or dvi)"
        ))),
    }
}

pub fn parse_header(s: &str) -> Result<HeaderDesign> {
    match s.to_ascii_lowercase().as_str() {
        "static" => Ok(HeaderDesign::Static),
        "dynamic" => Ok(HeaderDesign::Dynamic),
        other => Err(Error::Argument(format!(
            "unknown header design {other:?} (expected static or dynamic)"
        ))),
    }
}

fn str_value<'v>(key: &str, value: &'v toml::Value) -> Result<&'v str> {
    value
        .as_str()
        .ok_or_else(|| Error::Argument(format!("`{key}` must be a string")))
}

fn path_value(key: &str, value: &toml::Value) -> Result<PathBuf> {
    Ok(PathBuf::from(str_value(key, value)?))
}

fn u64_value(key: &str, value: &toml::Value) -> Result<u64> {
    value
        .as_integer()
        .and_then(|i| u64::try_from(i).ok())
        .ok_or_else(|| Error::Argument(format!("`{key}` must be a non-negative integer")))
}

fn usize_value(key: &str, value: &toml::Value) -> Result<usize> {
    Ok(u64_value(key, value)? as usize)
}

fn float_value(key: &str, value: &toml::Value) -> Result<f64> {
    value
        .as_float()
        .or_else(|| value.as_integer().map(|i| i as f64))
        .ok_or_else(|| Error::Argument(format!("`{key}` must be a number")))
}
