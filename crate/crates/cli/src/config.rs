//! Flat `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use spo2cam_core::calibration::{AlphaMode, CalibrationConfig, WindowMode};
use spo2cam_core::eval::{EvalConfig, Method};
use spo2cam_core::preprocess::FramePolicy;
use spo2cam_core::{Error, Result};

/// Every accepted key with its default, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("method", "vc2s"),
    ("dataset", ""),
    ("test_dataset", ""),
    ("frame_policy", "uniform_1hz"),
    ("roi_width", "100"),
    ("roi_height", "60"),
    ("calibration", "auto"),
    ("fixed_alpha", "2"),
    ("window", "first_n"),
    ("window_size", "270"),
    ("color_check", "on"),
    ("epochs", "15"),
    ("learning_rate", "0.001"),
    ("batch_size", "32"),
    ("weight_decay", "0.01"),
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.999"),
    ("adam_eps", "1e-8"),
    ("seed", "0"),
    ("train_stride", "1"),
    ("smooth_predictions", "true"),
    ("m2_samples", "300"),
    ("m2_seed", "0"),
    ("max_lag_s", "10"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::UnknownConfigKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: n as u64 + 1,
                msg: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse().map_err(|_| Error::Invalid(format!("{key}: cannot parse `{v}`")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "on" | "yes" => Ok(true),
            "false" | "off" | "no" => Ok(false),
            v => Err(Error::Invalid(format!("{key}: expected on/off, got `{v}`"))),
        }
    }

    pub fn paths(&self, key: &str) -> Vec<PathBuf> {
        self.get(key).split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.num("seed")
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let mut cfg = EvalConfig {
            method: self.get("method").parse::<Method>()?,
            frame_policy: self.get("frame_policy").parse::<FramePolicy>()?,
            roi_size: (self.num("roi_width")?, self.num("roi_height")?),
            color_check: self.flag("color_check")?,
            train_stride: self.num("train_stride")?,
            smooth_predictions: self.flag("smooth_predictions")?,
            m2_samples: self.num("m2_samples")?,
            m2_seed: self.num("m2_seed")?,
            max_lag_s: self.num("max_lag_s")?,
            ..EvalConfig::default()
        };
        let mode = self.get("window").parse::<WindowMode>()?;
        let count: usize = self.num("window_size")?;
        cfg.calibration = match self.get("calibration") {
            "auto" => CalibrationConfig { mode, count, alpha: AlphaMode::Auto },
            "fixed" => CalibrationConfig { mode, count, alpha: AlphaMode::Fixed(self.num("fixed_alpha")?) },
            "none" => CalibrationConfig { mode, count: 0, alpha: AlphaMode::Auto },
            v => return Err(Error::Invalid(format!("calibration: expected auto, fixed or none, got `{v}`"))),
        };
        let t = &mut cfg.train;
        t.epochs = self.num("epochs")?;
        t.learning_rate = self.num("learning_rate")?;
        t.batch_size = self.num("batch_size")?;
        t.weight_decay = self.num("weight_decay")?;
        t.adam_beta1 = self.num("adam_beta1")?;
        t.adam_beta2 = self.num("adam_beta2")?;
        t.adam_eps = self.num("adam_eps")?;
        t.rng_seed = self.seed()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved configuration in the file grammar.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = RunConfig::parse("# run\nmethod = baseline  # tissue model\n\nepochs=3\n", Path::new("c.txt")).unwrap();
        assert_eq!(cfg.get("method"), "baseline");
        let e = cfg.eval_config().unwrap();
        assert_eq!(e.method, Method::Baseline);
        assert_eq!(e.train.epochs, 3);
        assert_eq!(e.roi_size, (100, 60));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("epochz = 3\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(err, Error::UnknownConfigKey(ref k) if k == "epochz"));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply("calibration=none").unwrap();
        let again = RunConfig::parse(&cfg.echo(), Path::new("echo")).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.eval_config().unwrap().calibration.count, 0);
    }

    #[test]
    fn defaults_are_valid() {
        let e = RunConfig::default().eval_config().unwrap();
        assert_eq!(e, EvalConfig::default());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = RunConfig::parse("seed = 1\nnonsense\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
