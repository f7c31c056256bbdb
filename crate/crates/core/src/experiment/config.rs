//! `key=value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lloyd;
use crate::spin::{uniform_offsets, BlochVector, EnsembleSpec};

/// How the codebook and mapping of a discrete run are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    #[default]
    Random,
    UniformForward,
    FromLloyd,
}

impl InitStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Random => "random",
            InitStrategy::UniformForward => "uniform_forward",
            InitStrategy::FromLloyd => "from_lloyd",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitStrategy::Random),
            "uniform_forward" => Ok(InitStrategy::UniformForward),
            "from_lloyd" => Ok(InitStrategy::FromLloyd),
            other => Err(Error::invalid(format!(
                "unknown init strategy {other:?} (expected random, uniform_forward or from_lloyd)"
            ))),
        }
    }
}

pub const CONTINUOUS_MAX_ITERS: usize = 5000;
pub const DISCRETE_MAX_ITERS: usize = 2000;

/// Parameters shared by every subcommand. Frequencies are in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub omega_max_hz: f64,
    pub omega0_hz: f64,
    pub tf_s: f64,
    pub dt_s: f64,
    pub n_off: usize,
    pub m: usize,
    pub n_realizations: usize,
    pub seed: u64,
    /// `None` selects the per-optimizer default.
    pub max_iters: Option<usize>,
    pub tol_delta_phi: f64,
    pub lloyd_epsilon: f64,
    pub init: InitStrategy,
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            omega_max_hz: 1.0e4,
            omega0_hz: 1.0e4,
            tf_s: 1.8e-4,
            dt_s: 0.5e-6,
            n_off: 200,
            m: 4,
            n_realizations: 100,
            seed: 1,
            max_iters: None,
            tol_delta_phi: 1e-8,
            lloyd_epsilon: lloyd::DEFAULT_EPSILON,
            init: InitStrategy::Random,
            workers: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn number<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{key}: {value:?} is not a valid number"),
    })
}

fn finite(line: usize, key: &str, value: &str) -> Result<f64> {
    let x: f64 = number(line, key, value)?;
    if !x.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{key}: {value:?} is not finite"),
        });
    }
    Ok(x)
}

impl ExperimentConfig {
    /// Parse configuration text. Keys absent from `text` keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected key=value, found {content:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("{key}: missing value"),
                });
            }
            match key {
                "omega_max_hz" => cfg.omega_max_hz = finite(line, key, value)?,
                "omega0_hz" => cfg.omega0_hz = finite(line, key, value)?,
                "tf_s" => cfg.tf_s = finite(line, key, value)?,
                "dt_s" => cfg.dt_s = finite(line, key, value)?,
                "n_off" => cfg.n_off = number(line, key, value)?,
                "m" => cfg.m = number(line, key, value)?,
                "n_realizations" => cfg.n_realizations = number(line, key, value)?,
                "seed" => cfg.seed = number(line, key, value)?,
                "max_iters" => cfg.max_iters = Some(number(line, key, value)?),
                "tol_delta_phi" => cfg.tol_delta_phi = finite(line, key, value)?,
                "lloyd_epsilon" => cfg.lloyd_epsilon = finite(line, key, value)?,
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
            if seen.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key {key:?}"),
                });
            }
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, message } => Error::File {
                path: path.to_path_buf(),
                message: format!("line {line}: {message}"),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("omega_max_hz", self.omega_max_hz),
            ("omega0_hz", self.omega0_hz),
            ("tf_s", self.tf_s),
            ("dt_s", self.dt_s),
            ("tol_delta_phi", self.tol_delta_phi),
            ("lloyd_epsilon", self.lloyd_epsilon),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {x}")));
            }
        }
        if self.n_off == 0 || self.m == 0 || self.n_realizations == 0 {
            return Err(Error::invalid("n_off, m and n_realizations must be >= 1"));
        }
        if self.max_iters == Some(0) {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be >= 1"));
        }
        self.n_steps().map(|_| ())
    }

    /// Number of slices; `tf_s` must be a whole number of `dt_s`.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.tf_s / self.dt_s;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n || n > u32::MAX as f64 {
            return Err(Error::invalid(format!(
                "tf_s = {} is not a whole number of dt_s = {}",
                self.tf_s, self.dt_s
            )));
        }
        Ok(n as usize)
    }

    /// Inversion problem `+z → −z` over equally spaced offsets.
    pub fn ensemble(&self) -> Result<EnsembleSpec> {
        use std::f64::consts::TAU;
        EnsembleSpec::new(
            uniform_offsets(TAU * self.omega_max_hz, self.n_off),
            TAU * self.omega0_hz,
            self.tf_s,
            self.n_steps()?,
            BlochVector::PLUS_Z,
            BlochVector::MINUS_Z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.n_steps().unwrap(), 360);
        assert_eq!(cfg.ensemble().unwrap(), EnsembleSpec::broadband_inversion());
    }

    #[test]
    fn single_override() {
        let cfg = ExperimentConfig::parse("# test\n\nn_off=2\n").unwrap();
        assert_eq!(cfg.n_off, 2);
        assert_eq!(ExperimentConfig { n_off: 200, ..cfg }, ExperimentConfig::default());
    }

    #[test]
    fn inline_comment_and_spaces() {
        let cfg = ExperimentConfig::parse("  m = 8   # codebook\nseed=42").unwrap();
        assert_eq!((cfg.m, cfg.seed), (8, 42));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match ExperimentConfig::parse(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("n_off=2\ndt_s=abc"), 2);
        assert_eq!(line_of("# c\nfoo=1"), 2);
        assert_eq!(line_of("m"), 1);
        assert_eq!(line_of("m=\n"), 1);
        assert_eq!(line_of("m=4\nm=8"), 2);
        assert_eq!(line_of("n_off=1.5"), 1);
        assert_eq!(line_of("tf_s=inf"), 1);
    }

    #[test]
    fn incommensurate_grid_is_rejected() {
        assert!(ExperimentConfig::parse("dt_s=7e-7").is_err());
        assert!(ExperimentConfig::parse("n_off=0").is_err());
        assert!(ExperimentConfig::parse("omega0_hz=-1").is_err());
    }

    #[test]
    fn init_round_trip() {
        for s in [InitStrategy::Random, InitStrategy::UniformForward, InitStrategy::FromLloyd] {
            assert_eq!(s.as_str().parse::<InitStrategy>().unwrap(), s);
        }
        assert!("lloyd".parse::<InitStrategy>().is_err());
    }
}
