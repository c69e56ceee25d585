//! Flat `key = value` experiment configuration.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Keys are
//! validated against [`KNOWN_KEYS`], and [`ExperimentConfig::to_text`] writes the
//! pairs back in their original order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::objectives::{Arrangement, TWO_CLASS_N, TWO_CLASS_NOISE_STD};
use crate::simulator::{Algorithm, GmeSource};

pub const KNOWN_KEYS: &[&str] = &[
    "name",
    "out",
    "algorithm",
    "topology",
    "n",
    "rows",
    "cols",
    "keep_fraction",
    "edge_file",
    "objective",
    "arrangement",
    "d",
    "m",
    "replicate_period",
    "noise_var",
    "steps",
    "lr",
    "lr_relative",
    "period",
    "sketch_dim",
    "alternate",
    "momentum",
    "window",
    "reps",
    "seed",
    "mixing",
    "grad_mixing",
    "gme_source",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Raw ordered key-value pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExperimentConfig {
    entries: Vec<(String, String)>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", lineno + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return err(format!("line {}: unknown key `{key}`", lineno + 1));
            }
            if value.is_empty() {
                return err(format!("line {}: empty value for key `{key}`", lineno + 1));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return err(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(ExperimentConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Sets or replaces a key, keeping the position of an existing entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return err(format!("unknown key `{key}`"));
        }
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }

    fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key `{key}`")))
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError(format!("invalid value `{v}` for key `{key}`"))),
        }
    }

    fn required_typed<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.required(key)?;
        Ok(self.typed(key)?.expect("checked present"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Ring { n: usize },
    Path { n: usize },
    Torus { rows: usize, cols: usize },
    Complete { n: usize },
    Random { n: usize, keep_fraction: f64 },
    EdgeFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Random { d: usize, m: usize },
    Replicated { d: usize, m: usize, period: usize },
    TwoClass { d: usize, shuffled: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingChoice {
    MetropolisHastings,
    SpectralGap,
    /// Uniform averaging over consecutive node pairs `(2k, 2k+1)`.
    Pairs,
}

impl MixingChoice {
    fn parse(key: &str, s: &str) -> Result<Self, ConfigError> {
        match s {
            "mh" => Ok(MixingChoice::MetropolisHastings),
            "spectral_gap" => Ok(MixingChoice::SpectralGap),
            "pairs" => Ok(MixingChoice::Pairs),
            _ => err(format!("invalid value `{s}` for key `{key}` (expected mh, spectral_gap or pairs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Absolute(f64),
    /// Multiple of `1/L`.
    Relative(f64),
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub out: PathBuf,
    pub algorithm: Algorithm,
    pub topology: TopologySpec,
    pub objective: ObjectiveSpec,
    pub noise_var: f64,
    pub steps: usize,
    pub lr: LearningRate,
    pub period: usize,
    pub sketch_dim: usize,
    pub alternate: bool,
    pub momentum: f64,
    pub window: usize,
    pub reps: usize,
    pub seed: u64,
    pub mixing: MixingChoice,
    /// Gradient-mixing matrix of the decoupled algorithm; `None` reuses `mixing`.
    pub grad_mixing: Option<MixingChoice>,
    pub gme_source: GmeSource,
}

impl Experiment {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self, ConfigError> {
        let name = c.required("name")?.to_string();
        if name.contains(['/', '\\']) {
            return err(format!("name `{name}` must not contain path separators"));
        }
        let out = PathBuf::from(c.required("out")?);
        let alg_name = c.required("algorithm")?;
        let algorithm = Algorithm::parse(alg_name).ok_or_else(|| {
            ConfigError(format!(
                "invalid value `{alg_name}` for key `algorithm` (expected dsgd, hadsgd, decoupled or hadsgd_momentum)"
            ))
        })?;

        let topology = match c.required("topology")? {
            "ring" => TopologySpec::Ring { n: c.required_typed("n")? },
            "path" => TopologySpec::Path { n: c.required_typed("n")? },
            "complete" => TopologySpec::Complete { n: c.required_typed("n")? },
            "torus" => TopologySpec::Torus {
                rows: c.required_typed("rows")?,
                cols: c.required_typed("cols")?,
            },
            "random" => {
                let keep_fraction = c.typed("keep_fraction")?.unwrap_or(0.5);
                if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
                    return err(format!("keep_fraction must be in (0, 1], got {keep_fraction}"));
                }
                TopologySpec::Random {
                    n: c.required_typed("n")?,
                    keep_fraction,
                }
            }
            "edge_file" => TopologySpec::EdgeFile {
                path: PathBuf::from(c.required("edge_file")?),
            },
            other => {
                return err(format!(
                    "invalid value `{other}` for key `topology` (expected ring, path, torus, complete, random or edge_file)"
                ))
            }
        };

        let d: usize = c.typed("d")?.unwrap_or(10);
        let m: usize = c.typed("m")?.unwrap_or(d);
        if d == 0 || m == 0 {
            return err("d and m must be >= 1");
        }
        let objective_name = c.required("objective")?;
        let objective = match objective_name {
            "random" => ObjectiveSpec::Random { d, m },
            "replicated" => ObjectiveSpec::Replicated {
                d,
                m,
                period: c.typed("replicate_period")?.unwrap_or(3),
            },
            "two_class" => {
                let shuffled = match c.get("arrangement").unwrap_or("alternating") {
                    "alternating" => false,
                    "shuffled" => true,
                    other => {
                        return err(format!(
                            "invalid value `{other}` for key `arrangement` (expected alternating or shuffled)"
                        ))
                    }
                };
                ObjectiveSpec::TwoClass { d, shuffled }
            }
            other => {
                return err(format!(
                    "invalid value `{other}` for key `objective` (expected random, replicated or two_class)"
                ))
            }
        };
        if objective_name != "two_class" && c.get("arrangement").is_some() {
            return err("key `arrangement` only applies to objective = two_class");
        }
        if let (ObjectiveSpec::TwoClass { .. }, Some(n)) = (&objective, c.typed::<usize>("n")?) {
            if n != TWO_CLASS_N {
                return err(format!("objective two_class needs n = {TWO_CLASS_N}, got {n}"));
            }
        }

        let default_noise = match objective {
            ObjectiveSpec::TwoClass { .. } => TWO_CLASS_NOISE_STD * TWO_CLASS_NOISE_STD,
            _ => 0.0,
        };
        let noise_var: f64 = c.typed("noise_var")?.unwrap_or(default_noise);
        if noise_var.is_nan() || noise_var < 0.0 || noise_var.is_infinite() {
            return err(format!("noise_var must be finite and >= 0, got {noise_var}"));
        }

        let steps: usize = c.required_typed("steps")?;
        let lr = match (c.typed::<f64>("lr")?, c.typed::<f64>("lr_relative")?) {
            (Some(_), Some(_)) => return err("set only one of `lr` and `lr_relative`"),
            (Some(v), None) => LearningRate::Absolute(v),
            (None, Some(v)) => LearningRate::Relative(v),
            (None, None) => return err("missing required key `lr` (or `lr_relative`)"),
        };
        let lr_value = match lr {
            LearningRate::Absolute(v) | LearningRate::Relative(v) => v,
        };
        if !lr_value.is_finite() || lr_value <= 0.0 {
            return err(format!("learning rate must be finite and > 0, got {lr_value}"));
        }

        let mixing = match c.get("mixing") {
            Some(v) => MixingChoice::parse("mixing", v)?,
            None => MixingChoice::MetropolisHastings,
        };
        let grad_mixing = c.get("grad_mixing").map(|v| MixingChoice::parse("grad_mixing", v)).transpose()?;
        if grad_mixing.is_some() && algorithm != Algorithm::Decoupled {
            return err("key `grad_mixing` only applies to algorithm = decoupled");
        }
        let gme_source = match c.get("gme_source").unwrap_or("local_stochastic") {
            "local_stochastic" => GmeSource::LocalStochastic,
            "local_exact" => GmeSource::LocalExact,
            "mean_exact" => GmeSource::MeanExact,
            other => {
                return err(format!(
                    "invalid value `{other}` for key `gme_source` (expected local_stochastic, local_exact or mean_exact)"
                ))
            }
        };

        let reps: usize = c.typed("reps")?.unwrap_or(1);
        if reps == 0 {
            return err("reps must be >= 1");
        }

        Ok(Experiment {
            name,
            out,
            algorithm,
            topology,
            objective,
            noise_var,
            steps,
            lr,
            period: c.typed("period")?.unwrap_or(100),
            sketch_dim: c.typed("sketch_dim")?.unwrap_or(100),
            alternate: c.typed("alternate")?.unwrap_or(true),
            momentum: c.typed("momentum")?.unwrap_or(0.9),
            window: c.typed("window")?.unwrap_or(5),
            reps,
            seed: c.typed("seed")?.unwrap_or(0),
            mixing,
            grad_mixing,
            gme_source,
        })
    }

    pub fn arrangement(&self, arrangement_seed: u64) -> Option<Arrangement> {
        match self.objective {
            ObjectiveSpec::TwoClass { shuffled: false, .. } => Some(Arrangement::Alternating),
            ObjectiveSpec::TwoClass { shuffled: true, .. } => Some(Arrangement::Shuffled {
                seed: arrangement_seed,
            }),
            _ => None,
        }
    }
}
