//! Run configuration: `key = value` lines with `#` comments. Every key can
//! be overridden by an environment variable `SYNLM_<KEY>` (upper case).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::decoder::BeamConfig;
use crate::error::Error;
use crate::reestimation::TrainConfig;

pub const ENV_PREFIX: &str = "SYNLM_";

pub const KEYS: &[&str] = &[
    "dev",
    "check",
    "test",
    "head_rules",
    "output_dir",
    "vocab_size",
    "drop_labels",
    "beam_depth",
    "beam_threshold",
    "eos_epsilon",
    "bucket_edges",
    "lambda_iters",
    "first_pass_iters",
    "l2r_iters",
    "workers",
    "interpolation_weight",
];

/// A failure reported to the user as one machine-parsable line.
#[derive(Debug, Error, PartialEq)]
#[error("error kind={kind} key={} msg={}", key.as_deref().unwrap_or("-"), msg.replace('\n', " "))]
pub struct RunError {
    pub kind: &'static str,
    pub key: Option<String>,
    pub msg: String,
}

impl RunError {
    pub fn new(kind: &'static str, key: Option<&str>, msg: impl Into<String>) -> Self {
        RunError {
            kind,
            key: key.map(str::to_string),
            msg: msg.into(),
        }
    }

    pub fn config(key: &str, msg: impl Into<String>) -> Self {
        Self::new("config", Some(key), msg)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::Io(_) => "io",
            Error::TreebankSyntax { .. } | Error::Format { .. } => "format",
            Error::VocabMismatch(..) => "vocab",
            Error::SearchFailure(_) => "search",
            Error::InvalidArgument(_) => "argument",
            _ => "model",
        };
        RunError::new(kind, None, e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::new("io", None, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dev: PathBuf,
    pub check: PathBuf,
    pub test: Option<PathBuf>,
    pub head_rules: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub vocab_size: usize,
    pub drop_labels: Vec<String>,
    pub train: TrainConfig,
    /// 0 selects the available parallelism.
    pub workers: usize,
    /// Trigram weight for interpolated perplexity; fitted on check data
    /// when absent.
    pub interpolation_weight: Option<f64>,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, RunError> {
    v.parse()
        .map_err(|_| RunError::config(key, format!("cannot parse `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, RunError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl RunConfig {
    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, env: &BTreeMap<String, String>) -> Result<Self, RunError> {
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RunError::new("config", None, format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(RunError::config(k, "unknown key"));
            }
            values.insert(k.to_string(), v.trim().to_string());
        }
        for (k, v) in env {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                let key = key.to_ascii_lowercase();
                if !KEYS.contains(&key.as_str()) {
                    return Err(RunError::config(&key, format!("unknown key from environment variable {k}")));
                }
                values.insert(key, v.clone());
            }
        }

        let path = |key: &str| -> Option<PathBuf> { values.get(key).map(|v| base.join(v)) };
        let required = |key: &str| path(key).ok_or_else(|| RunError::config(key, "missing required key"));
        let defaults = TrainConfig::default();
        let num = |key: &str| values.get(key).map(|v| v.as_str());

        let beam = BeamConfig::new(
            num("beam_depth").map_or(Ok(defaults.beam.max_stack_depth), |v| parse_num("beam_depth", v))?,
            num("beam_threshold").map_or(Ok(defaults.beam.logprob_threshold), |v| parse_num("beam_threshold", v))?,
        )
        .map_err(|e| RunError::config("beam_depth", e.to_string()))?;
        let eos_epsilon: f64 = num("eos_epsilon").map_or(Ok(defaults.eos_epsilon), |v| parse_num("eos_epsilon", v))?;
        if !(eos_epsilon > 0.0 && eos_epsilon < 1.0) {
            return Err(RunError::config("eos_epsilon", "must lie in (0, 1)"));
        }
        let bucket_edges = num("bucket_edges").map_or(Ok(defaults.bucket_edges.clone()), |v| parse_list("bucket_edges", v))?;
        crate::smoothing::LambdaBuckets::new(0, &bucket_edges).map_err(|e| RunError::config("bucket_edges", e.to_string()))?;
        let lambda_iters: usize = num("lambda_iters").map_or(Ok(defaults.lambda_iters), |v| parse_num("lambda_iters", v))?;
        if lambda_iters == 0 {
            return Err(RunError::config("lambda_iters", "must be at least 1"));
        }
        let interpolation_weight = num("interpolation_weight")
            .map(|v| parse_num::<f64>("interpolation_weight", v))
            .transpose()?;
        if interpolation_weight.is_some_and(|l| !(0.0..=1.0).contains(&l)) {
            return Err(RunError::config("interpolation_weight", "must lie in [0, 1]"));
        }
        let vocab_size: usize = num("vocab_size").map_or(Ok(10_000), |v| parse_num("vocab_size", v))?;
        if vocab_size == 0 {
            return Err(RunError::config("vocab_size", "must be at least 1"));
        }

        let cfg = RunConfig {
            dev: required("dev")?,
            check: required("check")?,
            test: path("test"),
            head_rules: path("head_rules"),
            output_dir: required("output_dir")?,
            vocab_size,
            drop_labels: num("drop_labels")
                .unwrap_or("-NONE-")
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
            train: TrainConfig {
                beam,
                first_pass_iters: num("first_pass_iters")
                    .map_or(Ok(defaults.first_pass_iters), |v| parse_num("first_pass_iters", v))?,
                l2r_iters: num("l2r_iters").map_or(Ok(defaults.l2r_iters), |v| parse_num("l2r_iters", v))?,
                lambda_iters,
                bucket_edges,
                eos_epsilon,
                parser_mode: defaults.parser_mode,
            },
            workers: num("workers").map_or(Ok(0), |v| parse_num("workers", v))?,
            interpolation_weight,
        };
        for (key, p) in [("dev", Some(&cfg.dev)), ("check", Some(&cfg.check)), ("test", cfg.test.as_ref()), ("head_rules", cfg.head_rules.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(RunError::config(key, format!("no such file: {}", p.display())));
                }
            }
        }
        Ok(cfg)
    }

    /// Reads a config file, applying `SYNLM_*` overrides from the process
    /// environment.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::new("io", None, format!("{}: {e}", path.display())))?;
        let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (tempfile::TempDir, String) {
        let dir = tempfile::tempdir().unwrap();
        for f in ["dev.mrg", "check.mrg"] {
            std::fs::write(dir.path().join(f), "(S (X a))\n").unwrap();
        }
        (dir, "dev = dev.mrg\ncheck = check.mrg # held out\noutput_dir = out\n".to_string())
    }

    #[test]
    fn defaults_and_relative_paths() {
        let (dir, text) = setup();
        let cfg = RunConfig::parse(&text, dir.path(), &BTreeMap::new()).unwrap();
        assert_eq!(cfg.dev, dir.path().join("dev.mrg"));
        assert_eq!(cfg.train.beam, BeamConfig::default());
        assert_eq!(cfg.drop_labels, vec!["-NONE-".to_string()]);
        assert_eq!(cfg.vocab_size, 10_000);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let (dir, text) = setup();
        let err = RunConfig::parse(&(text + "beam_width = 3\n"), dir.path(), &BTreeMap::new()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("beam_width"));
        assert!(err.to_string().starts_with("error kind=config key=beam_width msg="));
    }

    #[test]
    fn missing_file_names_the_key() {
        let (dir, text) = setup();
        let err = RunConfig::parse(&(text + "test = nowhere.mrg\n"), dir.path(), &BTreeMap::new()).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("test"));
    }

    #[test]
    fn environment_overrides_file() {
        let (dir, text) = setup();
        let env = BTreeMap::from([("SYNLM_BEAM_DEPTH".to_string(), "7".to_string())]);
        let cfg = RunConfig::parse(&(text + "beam_depth = 3\n"), dir.path(), &env).unwrap();
        assert_eq!(cfg.train.beam.max_stack_depth, 7);
        let env = BTreeMap::from([("SYNLM_NOPE".to_string(), "1".to_string())]);
        assert!(RunConfig::parse(&setup().1, dir.path(), &env).is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        let (dir, text) = setup();
        for extra in ["eos_epsilon = 0", "beam_depth = 0", "bucket_edges = 1,2", "interpolation_weight = 2", "lambda_iters = x"] {
            assert!(RunConfig::parse(&format!("{text}{extra}\n"), dir.path(), &BTreeMap::new()).is_err(), "{extra}");
        }
    }
}
