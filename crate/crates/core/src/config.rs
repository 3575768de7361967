//! Run configuration: a JSON file and/or command-line flags, validated into a [`RunConfig`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Scheme;
use crate::error::{Error, Result};
use crate::gibbs::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Kernels,
    Sample,
    Evolve,
    Invariance,
    Monotonicity,
    Scatter,
    Tails,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Kernels => "kernels",
            Experiment::Sample => "sample",
            Experiment::Evolve => "evolve",
            Experiment::Invariance => "invariance",
            Experiment::Monotonicity => "monotonicity",
            Experiment::Scatter => "scatter",
            Experiment::Tails => "tails",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

/// Observables understood by the invariance experiment.
pub const INVARIANCE_OBSERVABLES: [&str; 5] = [
    "sn_l4_pow4",
    "renormalized_mass",
    "hs_norm_-0.2",
    "abs_c0_sq",
    "re_c0_conj_c1",
];

/// Statistics understood by the tails experiment.
pub const TAIL_STATISTICS: [&str; 4] = ["wsp_0.1_6", "hs_norm_-0.2", "smoothing_0.1_0.3", "spacetime_sup_0.1"];

/// The on-disk schema. Every key is optional; absent keys take the defaults
/// documented on [`RunConfig`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    #[serde(rename = "N")]
    pub cutoff: Option<usize>,
    pub k: Option<u32>,
    pub kappa0: Option<i32>,
    pub scheme: Option<Scheme>,
    pub dt: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    #[serde(rename = "zeta_R")]
    pub zeta_r: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub observables: Option<Vec<String>>,
    pub oversample: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub negative_control: Option<bool>,
    pub ess_floor: Option<f64>,
    pub radius: Option<f64>,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(json_path_hint(&e), e.to_string()))
    }

    /// Keys set in `other` replace those in `self`.
    pub fn merge(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            experiment: other.experiment.or(self.experiment),
            cutoff: other.cutoff.or(self.cutoff),
            k: other.k.or(self.k),
            kappa0: other.kappa0.or(self.kappa0),
            scheme: other.scheme.or(self.scheme),
            dt: other.dt.or(self.dt),
            samples: other.samples.or(self.samples),
            seed: other.seed.or(self.seed),
            zeta_r: other.zeta_r.or(self.zeta_r),
            times: other.times.or(self.times),
            observables: other.observables.or(self.observables),
            oversample: other.oversample.or(self.oversample),
            output_dir: other.output_dir.or(self.output_dir),
            workers: other.workers.or(self.workers),
            negative_control: other.negative_control.or(self.negative_control),
            ess_floor: other.ess_floor.or(self.ess_floor),
            radius: other.radius.or(self.radius),
        }
    }
}

fn json_path_hint(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`').nth(1).map_or_else(|| "<root>".to_owned(), str::to_owned)
}

/// A validated configuration with every default applied.
///
/// Defaults: `N = 16`, `k = 3`, `kappa0 = +1`, `scheme = lawson_rk4`,
/// `dt = 1e-3`, `samples = 2000`, `seed = 1`, `zeta_R = 3`, `oversample = 8`,
/// `times = [1.0]`, `output_dir = "out"`, `ess_floor = 50`. Per experiment:
/// monotonicity uses `k = 7`, `times = [0.5]`, `samples = 4000`; scatter uses
/// `k = 5`, `samples = 100`; tails uses `N = 64`, `samples = 10000`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(rename = "N")]
    pub cutoff: usize,
    pub k: u32,
    pub kappa0: i32,
    pub scheme: Scheme,
    pub dt: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(rename = "zeta_R")]
    pub zeta_r: f64,
    pub times: Vec<f64>,
    pub observables: Vec<String>,
    pub oversample: usize,
    pub output_dir: PathBuf,
    /// Not echoed into reports: results do not depend on it.
    #[serde(skip)]
    pub workers: Option<usize>,
    pub negative_control: bool,
    pub ess_floor: f64,
    pub radius: Option<f64>,
}

impl RunConfig {
    /// Defaults for `experiment` with nothing overridden.
    pub fn defaults(experiment: Experiment) -> Self {
        ConfigFile {
            experiment: Some(experiment),
            ..ConfigFile::default()
        }
        .resolve()
        .expect("defaults are valid")
    }

    pub fn variant(&self) -> Variant {
        if self.kappa0 == -1 {
            Variant::Focusing
        } else {
            Variant::Defocusing
        }
    }
}

impl ConfigFile {
    pub fn resolve(self) -> Result<RunConfig> {
        use Experiment::*;
        let experiment = self.experiment.ok_or_else(|| {
            Error::config(
                "experiment",
                "missing; expected one of kernels, sample, evolve, invariance, monotonicity, scatter, tails",
            )
        })?;
        let cutoff = self.cutoff.unwrap_or(if experiment == Tails { 64 } else { 16 });
        let k = self.k.unwrap_or(match experiment {
            Monotonicity => 7,
            Scatter => 5,
            _ => 3,
        });
        let samples = self.samples.unwrap_or(match experiment {
            Monotonicity => 4000,
            Scatter => 100,
            Tails => 10_000,
            _ => 2000,
        });
        let times = self
            .times
            .unwrap_or_else(|| vec![if experiment == Monotonicity { 0.5 } else { 1.0 }]);
        let observables = self.observables.unwrap_or_else(|| {
            let names: &[&str] = match experiment {
                Tails => &TAIL_STATISTICS,
                _ => &INVARIANCE_OBSERVABLES,
            };
            names.iter().map(|s| (*s).to_owned()).collect()
        });
        let cfg = RunConfig {
            experiment,
            cutoff,
            k,
            kappa0: self.kappa0.unwrap_or(1),
            scheme: self.scheme.unwrap_or_default(),
            dt: self.dt.unwrap_or(1e-3),
            samples,
            seed: self.seed.unwrap_or(1),
            zeta_r: self.zeta_r.unwrap_or(3.0),
            times,
            observables,
            oversample: self.oversample.unwrap_or(crate::hermite::DEFAULT_OVERSAMPLE),
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            workers: self.workers,
            negative_control: self.negative_control.unwrap_or(false),
            ess_floor: self.ess_floor.unwrap_or(crate::gibbs::DEFAULT_ESS_FLOOR),
            radius: self.radius,
        };
        validate(&cfg)?;
        Ok(cfg)
    }
}

fn validate(cfg: &RunConfig) -> Result<()> {
    use Experiment::*;
    if cfg.k < 3 || cfg.k.is_multiple_of(2) {
        return Err(Error::config("k", format!("must be odd and at least 3, got {}", cfg.k)));
    }
    if cfg.kappa0 != 1 && cfg.kappa0 != -1 {
        return Err(Error::config("kappa0", format!("must be +1 or -1, got {}", cfg.kappa0)));
    }
    if cfg.kappa0 == -1 && cfg.k != 3 {
        return Err(Error::config(
            "kappa0",
            format!(
                "the focusing case (kappa0 = -1) is restricted to k = 3, got k = {}",
                cfg.k
            ),
        ));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::config("dt", format!("must be positive, got {}", cfg.dt)));
    }
    if cfg.samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    if !(cfg.zeta_r > 0.0 && cfg.zeta_r.is_finite()) {
        return Err(Error::config("zeta_R", format!("must be positive, got {}", cfg.zeta_r)));
    }
    if cfg.oversample < 2 {
        return Err(Error::config(
            "oversample",
            format!("must be at least 2, got {}", cfg.oversample),
        ));
    }
    if cfg.workers == Some(0) {
        return Err(Error::config("workers", "must be at least 1"));
    }
    if !(cfg.ess_floor >= 0.0) {
        return Err(Error::config("ess_floor", "must be nonnegative"));
    }
    if let Some((i, t)) = cfg.times.iter().enumerate().find(|(_, t)| !t.is_finite()) {
        return Err(Error::config(format!("times[{i}]"), format!("must be finite, got {t}")));
    }
    if let Some(r) = cfg.radius {
        if !(r > 0.0) {
            return Err(Error::config("radius", format!("must be positive, got {r}")));
        }
    }
    let known: &[&str] = match cfg.experiment {
        Tails => &TAIL_STATISTICS,
        _ => &INVARIANCE_OBSERVABLES,
    };
    if let Some((i, o)) = cfg
        .observables
        .iter()
        .enumerate()
        .find(|(_, o)| !known.contains(&o.as_str()))
    {
        return Err(Error::config(
            format!("observables[{i}]"),
            format!("unknown name `{o}`; expected one of {known:?}"),
        ));
    }
    match cfg.experiment {
        Monotonicity | Scatter => {
            if cfg.k < 5 {
                return Err(Error::config(
                    "k",
                    format!("the lens-transformed experiments need k >= 5, got {}", cfg.k),
                ));
            }
            if cfg.kappa0 != 1 {
                return Err(Error::config(
                    "kappa0",
                    "the lens-transformed flow is defocusing (kappa0 = +1)",
                ));
            }
        }
        Tails if cfg.samples < 10_000 => {
            return Err(Error::config(
                "samples",
                format!("tail estimation needs at least 10000 samples, got {}", cfg.samples),
            ));
        }
        _ => {}
    }
    if cfg.experiment == Monotonicity {
        let t = cfg.times.first().copied().unwrap_or(0.0);
        if !(t > 0.0 && t < std::f64::consts::FRAC_PI_4) {
            return Err(Error::config(
                "times[0]",
                format!("monotonicity needs 0 < t < pi/4, got {t}"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = ConfigFile::from_json(r#"{"experiment": "kernels"}"#)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.cutoff, 16);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.kappa0, 1);
        assert_eq!(cfg.scheme, Scheme::LawsonRk4);
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.samples, 2000);
        assert_eq!(cfg.oversample, 8);
        assert_eq!(cfg.zeta_r, 3.0);
    }

    #[test]
    fn focusing_needs_cubic() {
        let err = ConfigFile::from_json(r#"{"experiment": "invariance", "kappa0": -1, "k": 5}"#)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().contains("focusing"), "{err}");
        assert!(
            ConfigFile::from_json(r#"{"experiment": "invariance", "kappa0": -1, "k": 3}"#)
                .unwrap()
                .resolve()
                .is_ok()
        );
    }

    #[test]
    fn nonpositive_dt_rejected() {
        for dt in ["0", "-0.1"] {
            let text = format!(r#"{{"experiment": "evolve", "dt": {dt}}}"#);
            assert!(ConfigFile::from_json(&text).unwrap().resolve().is_err());
        }
    }

    #[test]
    fn unknown_keys_rejected_with_field_name() {
        let err = ConfigFile::from_json(r#"{"experiment": "kernels", "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = ConfigFile::from_json(r#"{"experiment": "kernels", "observables": ["nope"]}"#)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().contains("observables[0]"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile::from_json(r#"{"experiment": "evolve", "N": 8, "seed": 3}"#).unwrap();
        let flags = ConfigFile {
            seed: Some(9),
            ..ConfigFile::default()
        };
        let cfg = file.merge(flags).resolve().unwrap();
        assert_eq!(cfg.cutoff, 8);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn per_experiment_defaults() {
        let m = RunConfig::defaults(Experiment::Monotonicity);
        assert_eq!((m.k, m.samples, m.times.clone()), (7, 4000, vec![0.5]));
        assert_eq!(RunConfig::defaults(Experiment::Scatter).k, 5);
        assert_eq!(RunConfig::defaults(Experiment::Tails).cutoff, 64);
        assert_eq!("tails".parse::<Experiment>().unwrap(), Experiment::Tails);
        assert!("nope".parse::<Experiment>().is_err());
    }
}
