//! `key = value` pipeline configuration with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sg2v::KernelMode;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: String,
    pub name: Option<String>,
    pub directed: bool,
    pub degree: usize,
    pub compress: bool,
    pub dimensions: usize,
    pub epochs: usize,
    pub neg_count: usize,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub threads: usize,
    pub mode: KernelMode,
    pub normalize: bool,
    pub classify: bool,
    pub repeats: usize,
    pub train_frac: f64,
    pub folds: usize,
    pub c_grid: Vec<f64>,
    pub tol: f64,
    pub cluster: bool,
    pub damping: f64,
    pub preference: Option<f64>,
    pub max_iter: usize,
    pub window: usize,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::new(),
            format: "tu".into(),
            name: None,
            directed: false,
            degree: 2,
            compress: false,
            dimensions: 32,
            epochs: 10,
            neg_count: 5,
            lr_initial: 0.025,
            lr_min: 1e-4,
            seed: 0,
            threads: 1,
            mode: KernelMode::Deep,
            normalize: false,
            classify: true,
            repeats: 5,
            train_frac: 0.9,
            folds: 5,
            c_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            tol: 1e-3,
            cluster: false,
            damping: 0.9,
            preference: None,
            max_iter: 1000,
            window: 50,
            output_dir: PathBuf::from("sg2v-out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("line {line}: invalid value {value:?} for `{key}`")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "line {line}: `{key}` expects true or false, got {value:?}"
        ))),
    }
}

pub fn parse_grid(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("invalid grid value {t:?}")))
        .collect()
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = PipelineConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("line {ln}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), ln).is_some() {
                return Err(CliError::Usage(format!("line {ln}: duplicate key `{key}`")));
            }
            match key {
                "input" => cfg.input = PathBuf::from(value),
                "format" => cfg.format = value.to_string(),
                "name" => cfg.name = Some(value.to_string()),
                "directed" => cfg.directed = parse_bool(key, value, ln)?,
                "degree" => cfg.degree = parse(key, value, ln)?,
                "compress" => cfg.compress = parse_bool(key, value, ln)?,
                "dimensions" => cfg.dimensions = parse(key, value, ln)?,
                "epochs" => cfg.epochs = parse(key, value, ln)?,
                "neg_count" => cfg.neg_count = parse(key, value, ln)?,
                "lr_initial" => cfg.lr_initial = parse(key, value, ln)?,
                "lr_min" => cfg.lr_min = parse(key, value, ln)?,
                "seed" => cfg.seed = parse(key, value, ln)?,
                "threads" => cfg.threads = parse(key, value, ln)?,
                "mode" => {
                    cfg.mode = value
                        .parse()
                        .map_err(|_| CliError::Usage(format!("line {ln}: mode must be wl or deep")))?
                }
                "normalize" => cfg.normalize = parse_bool(key, value, ln)?,
                "classify" => cfg.classify = parse_bool(key, value, ln)?,
                "repeats" => cfg.repeats = parse(key, value, ln)?,
                "train_frac" => cfg.train_frac = parse(key, value, ln)?,
                "folds" => cfg.folds = parse(key, value, ln)?,
                "c_grid" => cfg.c_grid = parse_grid(value).map_err(|e| CliError::Usage(format!("line {ln}: {e}")))?,
                "tol" => cfg.tol = parse(key, value, ln)?,
                "cluster" => cfg.cluster = parse_bool(key, value, ln)?,
                "damping" => cfg.damping = parse(key, value, ln)?,
                "preference" => {
                    cfg.preference = if value == "median" {
                        None
                    } else {
                        Some(parse(key, value, ln)?)
                    }
                }
                "max_iter" => cfg.max_iter = parse(key, value, ln)?,
                "window" => cfg.window = parse(key, value, ln)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                _ => return Err(CliError::Usage(format!("line {ln}: unknown key `{key}`"))),
            }
        }
        if !seen.contains_key("input") {
            return Err(CliError::Usage("config must set `input`".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths are resolved against the config file's directory.
        if let Some(base) = path.parent() {
            if cfg.input.is_relative() {
                cfg.input = base.join(&cfg.input);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = base.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = PipelineConfig::parse(
            "# run\ninput = data/MUTAG  # inline\nmode = wl\nc_grid = 1, 10\nnormalize = yes\npreference = -2.5\n",
        )
        .unwrap();
        assert_eq!(cfg.input, PathBuf::from("data/MUTAG"));
        assert_eq!(cfg.mode, KernelMode::Wl);
        assert_eq!(cfg.c_grid, vec![1.0, 10.0]);
        assert!(cfg.normalize);
        assert_eq!(cfg.preference, Some(-2.5));
        assert_eq!(cfg.degree, 2);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(PipelineConfig::parse("input = x\nbogus = 1\n").is_err());
        assert!(PipelineConfig::parse("input = x\ndegree = two\n").is_err());
        assert!(PipelineConfig::parse("input = x\ninput = y\n").is_err());
        assert!(PipelineConfig::parse("degree = 1\n").is_err());
        assert!(PipelineConfig::parse("input\n").is_err());
    }
}
