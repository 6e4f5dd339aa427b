use std::path::{Path, PathBuf};

use ate_fusion::nuisance::{
    BehaviorPolicy, SequentialNuisanceSpec, StaticNuisanceSpec, SwitchbackDesign,
};
use ate_fusion::simulation::StudyConfig;
use ate_fusion::Method;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    EstimateStatic,
    EstimateSequential,
    Simulate,
    Coverage,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::EstimateStatic => "estimate-static",
            Mode::EstimateSequential => "estimate-sequential",
            Mode::Simulate => "simulate",
            Mode::Coverage => "coverage",
        }
    }

    fn default_output(self) -> &'static str {
        match self {
            Mode::EstimateStatic | Mode::EstimateSequential => "estimates.csv",
            Mode::Simulate => "mse.csv",
            Mode::Coverage => "coverage.csv",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub experimental: PathBuf,
    pub historical: PathBuf,
}

/// Experimental behavior policy for sequential estimation.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BehaviorConfig {
    Switchback {
        span: usize,
        #[serde(default = "half")]
        p1: f64,
        #[serde(default = "alternating")]
        design: SwitchbackDesign,
    },
    Markov {
        p1: f64,
    },
}

fn half() -> f64 {
    0.5
}

fn alternating() -> SwitchbackDesign {
    SwitchbackDesign::Alternating
}

impl BehaviorConfig {
    pub fn policy(&self, clip: f64) -> ate_fusion::Result<BehaviorPolicy> {
        match *self {
            BehaviorConfig::Switchback { span, p1, design } => {
                BehaviorPolicy::switchback(span, p1, design)
            }
            BehaviorConfig::Markov { p1 } => Ok(BehaviorPolicy::Markov(
                ate_fusion::nuisance::known_propensity(p1, clip)?,
            )),
        }
    }
}

/// Raw file contents; the nuisance block is interpreted per mode.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    data: Option<DataPaths>,
    nuisance: Option<toml::Table>,
    behavior: Option<BehaviorConfig>,
    methods: Option<Vec<Method>>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    lambdas: Vec<f64>,
    split_seed: Option<u64>,
    output: Option<PathBuf>,
    study: Option<StudyConfig>,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone)]
pub enum Job {
    Static {
        data: DataPaths,
        nuisance: StaticNuisanceSpec,
        methods: Vec<Method>,
        split_seed: Option<u64>,
    },
    Sequential {
        data: DataPaths,
        nuisance: SequentialNuisanceSpec,
        behavior: BehaviorConfig,
        methods: Vec<Method>,
        split_seed: Option<u64>,
    },
    Study(StudyConfig),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub alpha: f64,
    pub output: PathBuf,
    pub job: Job,
    /// SHA-256 of the configuration file bytes, hex encoded.
    pub config_hash: String,
}

impl RunConfig {
    pub fn seed(&self) -> Option<u64> {
        match &self.job {
            Job::Static { split_seed, .. } | Job::Sequential { split_seed, .. } => *split_seed,
            Job::Study(s) => Some(s.master_seed),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn with_lasso(mut methods: Vec<Method>, lambdas: &[f64]) -> Result<Vec<Method>, CliError> {
    for &lambda in lambdas {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(config_err(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        methods.push(Method::Lasso { lambda });
    }
    if methods.is_empty() {
        return Err(config_err("method list is empty"));
    }
    Ok(methods)
}

fn nuisance<T: for<'de> Deserialize<'de> + Default>(
    table: Option<toml::Table>,
) -> Result<T, CliError> {
    match table {
        None => Ok(T::default()),
        Some(t) => t
            .try_into()
            .map_err(|e| config_err(format!("[nuisance]: {e}"))),
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Parse a configuration file for `mode`; `seed` overrides the split seed
/// (estimation) or master seed (studies). Relative data paths are taken
/// relative to the configuration file.
pub fn load(path: &Path, mode: Mode, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| config_err(format!("{} is not UTF-8", path.display())))?;
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse(
        raw,
        mode,
        seed,
        path.parent().unwrap_or(Path::new(".")),
        hex_sha256(&bytes),
    )
}

pub fn parse_str(
    text: &str,
    mode: Mode,
    seed: Option<u64>,
    base: &Path,
) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
    parse(raw, mode, seed, base, hex_sha256(text.as_bytes()))
}

fn parse(
    raw: RawConfig,
    mode: Mode,
    seed: Option<u64>,
    base: &Path,
    config_hash: String,
) -> Result<RunConfig, CliError> {
    if let Some(m) = raw.mode {
        if m != mode {
            return Err(config_err(format!(
                "config is for mode {}, but {} was requested",
                m.name(),
                mode.name()
            )));
        }
    }
    if !(raw.alpha > 0.0 && raw.alpha < 1.0) {
        return Err(config_err(format!(
            "alpha must lie in (0, 1), got {}",
            raw.alpha
        )));
    }
    let data = |d: Option<DataPaths>| -> Result<DataPaths, CliError> {
        let d =
            d.ok_or_else(|| config_err(format!("mode {} needs a [data] block", mode.name())))?;
        Ok(DataPaths {
            experimental: resolve(base, d.experimental),
            historical: resolve(base, d.historical),
        })
    };
    let split_seed = seed.or(raw.split_seed);
    let job = match mode {
        Mode::EstimateStatic => {
            let methods = raw.methods.unwrap_or_else(|| {
                vec![
                    Method::Edo,
                    Method::NonPessi,
                    Method::Pessi,
                    Method::Hybrid,
                    Method::Spe,
                ]
            });
            Job::Static {
                data: data(raw.data)?,
                nuisance: nuisance(raw.nuisance)?,
                methods: with_lasso(methods, &raw.lambdas)?,
                split_seed,
            }
        }
        Mode::EstimateSequential => {
            let methods = raw.methods.unwrap_or_else(|| {
                vec![Method::Edo, Method::NonPessi, Method::Pessi, Method::Hybrid]
            });
            if methods.contains(&Method::Spe) {
                return Err(config_err("spe is only defined for non-dynamic data"));
            }
            Job::Sequential {
                data: data(raw.data)?,
                nuisance: nuisance(raw.nuisance)?,
                behavior: raw
                    .behavior
                    .ok_or_else(|| config_err("estimate-sequential needs a [behavior] block"))?,
                methods: with_lasso(methods, &raw.lambdas)?,
                split_seed,
            }
        }
        Mode::Simulate | Mode::Coverage => {
            let mut study = raw.study.unwrap_or_default();
            if let Some(s) = seed {
                study.master_seed = s;
            }
            if raw.methods.is_some() || !raw.lambdas.is_empty() {
                let methods = raw.methods.unwrap_or_else(|| study.method_list());
                study.methods = Some(with_lasso(methods, &raw.lambdas)?);
            }
            study.alpha = raw.alpha;
            Job::Study(study)
        }
    };
    Ok(RunConfig {
        mode,
        alpha: raw.alpha,
        output: raw
            .output
            .unwrap_or_else(|| PathBuf::from(mode.default_output())),
        job,
        config_hash,
    })
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_mismatch_is_a_config_error() {
        let err =
            parse_str("mode = \"simulate\"", Mode::Coverage, None, Path::new(".")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn lambdas_become_lasso_methods() {
        let cfg = parse_str(
            "methods = [\"edo\"]\nlambdas = [0.5]\n[data]\nexperimental = \"e.csv\"\nhistorical = \"h.csv\"",
            Mode::EstimateStatic,
            Some(3),
            Path::new("/tmp"),
        )
        .unwrap();
        let Job::Static {
            methods,
            split_seed,
            data,
            ..
        } = cfg.job
        else {
            panic!()
        };
        assert_eq!(methods, vec![Method::Edo, Method::Lasso { lambda: 0.5 }]);
        assert_eq!(split_seed, Some(3));
        assert_eq!(data.experimental, PathBuf::from("/tmp/e.csv"));
    }

    #[test]
    fn study_block_and_seed_override() {
        let cfg = parse_str(
            "[study]\nreplications = 2\nmaster_seed = 1\nb_h = [0.0]\n[study.dgp]\nkind = \"example1\"\nn_e = 20\n",
            Mode::Simulate,
            Some(99),
            Path::new("."),
        )
        .unwrap();
        let Job::Study(s) = cfg.job else { panic!() };
        assert_eq!(s.master_seed, 99);
        assert_eq!(s.replications, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_str("colour = 1", Mode::Simulate, None, Path::new(".")).is_err());
    }
}
