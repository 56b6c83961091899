//! Pipeline configuration: defaults, then the TOML file, then environment
//! variables, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use oncosurv::cohort::CohortConfig;
use oncosurv::corpus::CorpusConfig;
use oncosurv::extraction::{ExtractionConfig, HttpChatConfig};
use oncosurv::report::SurvivalSettings;
use oncosurv::retrieval::RetrievalConfig;
use oncosurv::synth::corpus::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Regex lexicon, no model needed.
    #[default]
    Rule,
    /// OpenAI-style chat completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub http: HttpChatConfig,
}

/// Input paths default to the files `synthesize` writes under
/// `<output_dir>/data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub output_dir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub emr: Option<PathBuf>,
    pub plans: Option<PathBuf>,
    pub drugs: Option<PathBuf>,
    pub gold: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { output_dir: PathBuf::from("oncosurv-out"), corpus: None, emr: None, plans: None, drugs: None, gold: None }
    }
}

impl Paths {
    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    fn or_data(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.data_dir().join(name))
    }

    pub fn corpus(&self) -> PathBuf {
        self.or_data(&self.corpus, "notes.jsonl")
    }

    pub fn emr(&self) -> PathBuf {
        self.or_data(&self.emr, "emr.csv")
    }

    pub fn plans(&self) -> PathBuf {
        self.or_data(&self.plans, "plans.csv")
    }

    pub fn drugs(&self) -> PathBuf {
        self.or_data(&self.drugs, "drugs.csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Seed for `synthesize`.
    pub seed: u64,
    /// Worker threads for extraction, fitting and prediction; 0 = all cores.
    pub workers: usize,
    /// Skip malformed corpus lines instead of failing.
    pub lenient: bool,
    pub paths: Paths,
    pub corpus: CorpusConfig,
    pub retrieval: RetrievalConfig,
    pub extraction: ExtractionConfig,
    pub backend: BackendConfig,
    pub cohort: CohortConfig,
    pub survival: SurvivalSettings,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            workers: 0,
            lenient: false,
            paths: Paths::default(),
            corpus: CorpusConfig::default(),
            retrieval: RetrievalConfig::default(),
            extraction: ExtractionConfig::default(),
            backend: BackendConfig::default(),
            cohort: CohortConfig::default(),
            survival: SurvivalSettings::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Values that may come from flags or the environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub lenient: bool,
    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub corpus: Option<PathBuf>,
    pub emr: Option<PathBuf>,
    pub plans: Option<PathBuf>,
    pub drugs: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub support_threshold: Option<usize>,
    pub n_patients: Option<usize>,
}

pub const ENV_OUTPUT_DIR: &str = "ONCOSURV_OUTPUT_DIR";
pub const ENV_SEED: &str = "ONCOSURV_SEED";
pub const ENV_WORKERS: &str = "ONCOSURV_WORKERS";
pub const ENV_BACKEND: &str = "ONCOSURV_BACKEND";
pub const ENV_ENDPOINT: &str = "ONCOSURV_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "ONCOSURV_LLM_MODEL";

impl Overrides {
    /// Reads the `ONCOSURV_*` variables through `get`.
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> anyhow::Result<Overrides> {
        let parse = |name: &str| -> anyhow::Result<Option<u64>> {
            get(name).map(|v| v.trim().parse::<u64>().with_context(|| format!("{name}={v:?} is not an integer"))).transpose()
        };
        let backend = match get(ENV_BACKEND) {
            None => None,
            Some(v) => Some(match v.trim().to_ascii_lowercase().as_str() {
                "rule" => BackendKind::Rule,
                "http" => BackendKind::Http,
                _ => bail!("{ENV_BACKEND}={v:?}: expected rule or http"),
            }),
        };
        Ok(Overrides {
            output_dir: get(ENV_OUTPUT_DIR).map(PathBuf::from),
            seed: parse(ENV_SEED)?,
            workers: parse(ENV_WORKERS)?.map(|w| w as usize),
            backend,
            endpoint: get(ENV_ENDPOINT),
            model: get(ENV_MODEL),
            ..Default::default()
        })
    }

    /// Applies every value that is set. `seed` reseeds the synthetic
    /// corpus, the split and the forest.
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(d) = &self.output_dir {
            cfg.paths.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.survival.split_seed = s;
            cfg.survival.forest.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.lenient |= self.lenient;
        if let Some(b) = self.backend {
            cfg.backend.kind = b;
        }
        if let Some(e) = &self.endpoint {
            cfg.backend.http.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            cfg.backend.http.model = m.clone();
        }
        for (dst, src) in [
            (&mut cfg.paths.corpus, &self.corpus),
            (&mut cfg.paths.emr, &self.emr),
            (&mut cfg.paths.plans, &self.plans),
            (&mut cfg.paths.drugs, &self.drugs),
            (&mut cfg.paths.gold, &self.gold),
        ] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if let Some(t) = self.support_threshold {
            cfg.cohort.support_threshold = t;
        }
        if let Some(n) = self.n_patients {
            cfg.synth.n_patients = n;
        }
    }
}

pub fn parse_config(text: &str) -> anyhow::Result<PipelineConfig> {
    Ok(toml::from_str(text)?)
}

pub fn load(file: Option<&Path>, env: &Overrides, flags: &Overrides) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            parse_config(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    env.apply(&mut cfg);
    flags.apply(&mut cfg);
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &PipelineConfig) -> anyhow::Result<()> {
    cfg.corpus.validate()?;
    cfg.retrieval.validate()?;
    cfg.survival.validate()?;
    if cfg.cohort.support_threshold == 0 {
        bail!("cohort.support_threshold must be >= 1");
    }
    if cfg.synth.n_patients == 0 {
        bail!("synth.n_patients must be >= 1");
    }
    if cfg.synth.censor_min_days == 0 || cfg.synth.censor_min_days > cfg.synth.censor_max_days {
        bail!("synth censoring range must satisfy 1 <= censor_min_days <= censor_max_days");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&PipelineConfig::default()).unwrap();
        assert_eq!(parse_config(&text).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("sed = 3").is_err());
        assert!(parse_config("[survival.forest]\nn_tree = 3").is_err());
        assert!(parse_config("[survival.forest]\nn_trees = 3").is_ok());
    }

    #[test]
    fn precedence_flags_env_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "seed = 1\nworkers = 2\n[paths]\noutput_dir = \"from-file\"\n").unwrap();
        let env = Overrides::from_env(|k| match k {
            ENV_SEED => Some("5".into()),
            ENV_OUTPUT_DIR => Some("from-env".into()),
            _ => None,
        })
        .unwrap();
        let flags = Overrides { output_dir: Some("from-flag".into()), ..Default::default() };
        let cfg = load(Some(&file), &env, &flags).unwrap();
        assert_eq!(cfg.paths.output_dir, PathBuf::from("from-flag"));
        assert_eq!((cfg.seed, cfg.survival.split_seed, cfg.survival.forest.seed), (5, 5, 5));
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.cohort.support_threshold, 20);
    }

    #[test]
    fn bad_env_is_an_error() {
        assert!(Overrides::from_env(|k| (k == ENV_SEED).then(|| "x".to_string())).is_err());
        assert!(Overrides::from_env(|k| (k == ENV_BACKEND).then(|| "gpu".to_string())).is_err());
    }
}
