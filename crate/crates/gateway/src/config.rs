//! Server configuration file.
//!
//! Plain `key = value` lines. `#` starts a comment when it begins a line or
//! follows whitespace. Relative paths resolve against the config file's
//! directory.
//!
//! ```text
//! port = 8080
//! scenes = ./scenes
//! backend = mock
//! mock_script = ./scripts/indoor.txt
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use npc_spatial::chat::mock::ScriptedBackend;
use npc_spatial::chat::{BackendKind, LlmBackendConfig};
use npc_spatial::panorama::DEFAULT_SEGMENTATION_TIMEOUT;
use npc_spatial::radial::DEFAULT_RADIUS_M;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentationSource {
    Fixture,
    Http { url: String, timeout: Duration },
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    pub scenes_dir: PathBuf,
    pub backend: LlmBackendConfig,
    pub segmentation: SegmentationSource,
    /// `None` uses the bundled prompt.
    pub support_prompt: Option<PathBuf>,
    pub radius_m: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            scenes_dir: PathBuf::from("scenes"),
            backend: LlmBackendConfig::default(),
            segmentation: SegmentationSource::Fixture,
            support_prompt: None,
            radius_m: DEFAULT_RADIUS_M,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        message: e.to_string(),
    })
}

fn strip_comment(line: &str) -> &str {
    if line.trim_start().starts_with('#') {
        return "";
    }
    match line.find(" #").or_else(|| line.find("\t#")) {
        Some(i) => &line[..i],
        None => line,
    }
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = ServerConfig::default();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        let mut seg_url: Option<String> = None;
        let mut seg_timeout = DEFAULT_SEGMENTATION_TIMEOUT;

        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("expected key = value, got {line:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "host" => cfg.host = value.to_string(),
                "port" => cfg.port = parse_num(key, value)?,
                "scenes" => cfg.scenes_dir = resolve(value),
                "support_prompt" => cfg.support_prompt = Some(resolve(value)),
                "radius" => cfg.radius_m = parse_num(key, value)?,
                "backend" => {
                    cfg.backend.kind = match value {
                        "mock" => BackendKind::Mock,
                        "http" => BackendKind::Http,
                        other => {
                            return Err(ConfigError::Value {
                                key: key.into(),
                                message: format!("expected mock or http, got {other:?}"),
                            })
                        }
                    }
                }
                "llm_endpoint" => cfg.backend.endpoint = Some(value.to_string()),
                "llm_model" => cfg.backend.model = Some(value.to_string()),
                "api_key_env" => cfg.backend.api_key_env = value.to_string(),
                "temperature" => cfg.backend.temperature = parse_num(key, value)?,
                "max_tokens" => cfg.backend.max_tokens = parse_num(key, value)?,
                "timeout_secs" => cfg.backend.timeout_secs = parse_num(key, value)?,
                "mock_script" => {
                    let path = resolve(value);
                    let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path, source })?;
                    cfg.backend.script = ScriptedBackend::parse_script(&text).map_err(|message| ConfigError::Value {
                        key: key.into(),
                        message,
                    })?;
                }
                "segmentation" => {
                    seg_url = match value {
                        "fixture" | "mock" => None,
                        url => Some(url.to_string()),
                    }
                }
                "segmentation_timeout_secs" => {
                    seg_timeout = Duration::from_secs_f64(parse_num(key, value)?);
                }
                other => {
                    return Err(ConfigError::Syntax {
                        line: i + 1,
                        message: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        if let Some(url) = seg_url {
            cfg.segmentation = SegmentationSource::Http {
                url,
                timeout: seg_timeout,
            };
        }
        cfg.backend.validate().map_err(|e| ConfigError::Value {
            key: "backend".into(),
            message: e.to_string(),
        })?;
        if !(cfg.radius_m.is_finite() && cfg.radius_m > 0.0) {
            return Err(ConfigError::Value {
                key: "radius".into(),
                message: "must be positive".into(),
            });
        }
        Ok(cfg)
    }
}
