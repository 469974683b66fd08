//! The run manifest: a TOML file with one section per stage that fully
//! determines a run. Two runs with equal manifests produce identical
//! outputs, and every output file declares the hash of the resolved
//! manifest it derives from.

use std::path::{Path, PathBuf};

use anyhow::Context;

use recaudit_core::Error as CoreError;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use recaudit_core::domain::{AgeGrouping, JsdBase};
use recaudit_core::ingest::{Delimiter, LoadOptions, LogFormat};
use recaudit_core::preprocess::{BinarizeMode, SplitStrategy};
use recaudit_core::synth::SynthSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dataset: DatasetSection,
    pub grouping: GroupingSection,
    #[serde(default)]
    pub sample: Option<SampleSection>,
    pub preprocess: PreprocessSection,
    pub split: SplitSection,
    #[serde(default)]
    pub recommenders: RecommendersSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// `files` reads the events/users/genres/vocabulary paths; `synth`
    /// generates the log from the inline spec.
    pub source: String,
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub users: Option<PathBuf>,
    #[serde(default)]
    pub genres: Option<PathBuf>,
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

fn default_delimiter() -> String {
    "tab".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_users: [usize; 3],
    pub n_items: usize,
    pub n_genres: usize,
    /// One preference vector per group (Children, Mainstream, NMA); uniform
    /// when omitted.
    #[serde(default)]
    pub group_preferences: Option<Vec<Vec<f64>>>,
    pub concentration: f64,
    #[serde(default)]
    pub popularity_exponent: f64,
    pub events_min: u32,
    pub events_max: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupingSection {
    pub child_max: u8,
    pub mainstream_max: u8,
    #[serde(default)]
    pub reference_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub stratify_by_age: bool,
    #[serde(default)]
    pub activity_cap_sigma: Option<f64>,
    #[serde(default)]
    pub window_first_before: Option<NaiveDate>,
    #[serde(default)]
    pub window_last_after: Option<NaiveDate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    /// `rating-threshold`, `min-count`, or `keep-all`.
    pub binarize: String,
    #[serde(default)]
    pub rating_threshold: Option<i32>,
    #[serde(default)]
    pub min_count: Option<u32>,
    pub k_user: u32,
    pub k_item: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// `per-user-ratio` or `temporal-global`.
    pub strategy: String,
    #[serde(default)]
    pub train_pct: Option<u32>,
    #[serde(default)]
    pub validation_pct: Option<u32>,
    #[serde(default)]
    pub test_pct: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub train_start: Option<NaiveDate>,
    #[serde(default)]
    pub train_end: Option<NaiveDate>,
    #[serde(default)]
    pub validation_start: Option<NaiveDate>,
    #[serde(default)]
    pub validation_end: Option<NaiveDate>,
    #[serde(default)]
    pub test_start: Option<NaiveDate>,
    #[serde(default)]
    pub test_end: Option<NaiveDate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendersSection {
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    /// Also exclude validation items from test-time candidates.
    #[serde(default)]
    pub exclude_validation: bool,
    #[serde(default)]
    pub rp3beta: Option<Rp3BetaGrid>,
    #[serde(default)]
    pub ials: Option<IalsGrid>,
}

impl Default for RecommendersSection {
    fn default() -> Self {
        Self {
            families: default_families(),
            seed: default_seed(),
            top_n: default_top_n(),
            exclude_validation: false,
            rp3beta: None,
            ials: None,
        }
    }
}

fn default_families() -> Vec<String> {
    vec!["random".into(), "mostpop".into(), "rp3beta".into(), "ials".into()]
}

fn default_seed() -> u64 {
    7
}

fn default_top_n() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rp3BetaGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub top_k_neighbors: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IalsGrid {
    pub factors: Vec<usize>,
    pub regs: Vec<f64>,
    pub alphas: Vec<f64>,
    pub epochs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_jsd_base")]
    pub jsd_base: String,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            jsd_base: default_jsd_base(),
        }
    }
}

fn default_jsd_base() -> String {
    "2".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Parallelism cap; 0 uses every core. Results are identical either way.
    #[serde(default)]
    pub workers: usize,
}

fn config(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::from(CoreError::config(msg))
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read manifest {}", path.display()))?;
        let manifest: RunManifest = toml::from_str(&raw).map_err(|e| {
            anyhow::Error::from(CoreError::config(format!(
                "cannot parse {}: {e}",
                path.display()
            )))
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> anyhow::Result<()> {
        match self.dataset.source.as_str() {
            "files" => {
                for (name, path) in [
                    ("events", &self.dataset.events),
                    ("users", &self.dataset.users),
                    ("genres", &self.dataset.genres),
                    ("vocabulary", &self.dataset.vocabulary),
                ] {
                    if path.is_none() {
                        return Err(config(format!(
                            "dataset.source = \"files\" requires dataset.{name}"
                        )));
                    }
                }
                if self.dataset.format.is_none() {
                    return Err(config("dataset.source = \"files\" requires dataset.format"));
                }
            }
            "synth" => {
                if self.dataset.synth.is_none() {
                    return Err(config("dataset.source = \"synth\" requires a [dataset.synth] section"));
                }
            }
            other => return Err(config(format!("unknown dataset.source '{other}'"))),
        }
        Ok(())
    }

    /// Canonical serialized form with every default made explicit; the
    /// manifest hash is taken over this string.
    pub fn resolved_toml(&self) -> anyhow::Result<String> {
        toml::to_string_pretty(self).context("cannot serialize manifest")
    }

    /// Hash of the resolved manifest with the output directory normalized
    /// away: the hash identifies the experiment configuration, not where
    /// its artifacts land.
    pub fn hash(&self) -> anyhow::Result<String> {
        let mut normalized = self.clone();
        normalized.output.dir = PathBuf::from("<out>");
        let resolved = normalized.resolved_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(resolved.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    pub fn grouping(&self) -> anyhow::Result<AgeGrouping> {
        Ok(AgeGrouping::new(
            self.grouping.child_max,
            self.grouping.mainstream_max,
            self.grouping.reference_date,
        )?)
    }

    pub fn load_options(&self) -> anyhow::Result<LoadOptions> {
        let format = LogFormat::parse(
            self.dataset
                .format
                .as_deref()
                .unwrap_or("implicit-table"),
        )?;
        Ok(LoadOptions {
            format,
            delimiter: Delimiter::parse(&self.dataset.delimiter)?,
            has_header: self.dataset.has_header,
            strict: self.dataset.strict,
        })
    }

    pub fn synth_spec(&self) -> anyhow::Result<SynthSpec> {
        let section = self
            .dataset
            .synth
            .as_ref()
            .context("manifest has no [dataset.synth] section")?;
        let uniform = vec![1.0 / section.n_genres as f64; section.n_genres];
        let prefs = match &section.group_preferences {
            None => [uniform.clone(), uniform.clone(), uniform],
            Some(vectors) => {
                if vectors.len() != 3 {
                    return Err(config("dataset.synth.group_preferences needs exactly 3 vectors"));
                }
                [vectors[0].clone(), vectors[1].clone(), vectors[2].clone()]
            }
        };
        Ok(SynthSpec {
            n_users: section.n_users,
            n_items: section.n_items,
            n_genres: section.n_genres,
            group_preferences: prefs,
            concentration: section.concentration,
            popularity_exponent: section.popularity_exponent,
            events_per_user: (section.events_min, section.events_max),
            seed: section.seed,
        })
    }

    pub fn binarize_mode(&self) -> anyhow::Result<BinarizeMode> {
        Ok(match self.preprocess.binarize.as_str() {
            "rating-threshold" => BinarizeMode::RatingThreshold {
                threshold: self.preprocess.rating_threshold.ok_or_else(|| {
                    config("rating-threshold binarization needs preprocess.rating_threshold")
                })?,
            },
            "min-count" => BinarizeMode::MinCount {
                min: self
                    .preprocess
                    .min_count
                    .ok_or_else(|| config("min-count binarization needs preprocess.min_count"))?,
            },
            "keep-all" => BinarizeMode::KeepAll,
            other => return Err(config(format!("unknown binarize mode '{other}'"))),
        })
    }

    pub fn split_strategy(&self) -> anyhow::Result<SplitStrategy> {
        Ok(match self.split.strategy.as_str() {
            "per-user-ratio" => SplitStrategy::PerUserRatio {
                train_pct: self.split.train_pct.ok_or_else(|| config("split.train_pct missing"))?,
                validation_pct: self
                    .split
                    .validation_pct
                    .ok_or_else(|| config("split.validation_pct missing"))?,
                test_pct: self.split.test_pct.ok_or_else(|| config("split.test_pct missing"))?,
                seed: self.split.seed.ok_or_else(|| config("split.seed missing"))?,
            },
            "temporal-global" => {
                let range = |name: &str, lo: Option<NaiveDate>, hi: Option<NaiveDate>| {
                    match (lo, hi) {
                        (Some(lo), Some(hi)) => Ok((lo, hi)),
                        _ => Err(config(format!("split.{name}_start/_end missing"))),
                    }
                };
                SplitStrategy::TemporalGlobal {
                    train: range("train", self.split.train_start, self.split.train_end)?,
                    validation: range(
                        "validation",
                        self.split.validation_start,
                        self.split.validation_end,
                    )?,
                    test: range("test", self.split.test_start, self.split.test_end)?,
                }
            }
            other => return Err(config(format!("unknown split strategy '{other}'"))),
        })
    }

    pub fn jsd_base(&self) -> anyhow::Result<JsdBase> {
        match self.metrics.jsd_base.as_str() {
            "2" => Ok(JsdBase::Two),
            "e" => Ok(JsdBase::E),
            other => Err(config(format!(
                "metrics.jsd_base must be \"2\" or \"e\", got '{other}'"
            ))),
        }
    }
}
