//! Stage implementations behind the subcommands. Each stage reads persisted
//! intermediates from earlier stages when present (sample, then ingest,
//! then the raw dataset section), so runs can resume without recomputation.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use recaudit_core::domain::{AgeGroup, JsdBase};
use recaudit_core::evaluation::{
    aggregate, evaluate_table, EvaluationContext, Metric, UserEvaluation,
};
use recaudit_core::ingest::{
    load_canonical, load_log, sample_users, write_canonical, DropReport, InteractionLog,
    LogFormat, SampleOptions,
};
use recaudit_core::preprocess::{
    binarize, derive_child_set, kcore, load_bundle, split, write_bundle, BundleManifest,
    SplitBundle,
};
use recaudit_core::profiles::{
    apd, build_agp, build_all_agps, build_profiles, genre_share_samples, igd,
    popularity_profiles, profiles_by_bucket, Bucket,
};
use recaudit_core::recommenders::{
    recommend_topn, tune, AlgoParams, RecommendationTable, TrainMatrix, TrainingVariant,
    TuneOutcome,
};
use recaudit_core::stats::{annotate, grouped_family_tests, per_genre_tests, SignificanceRecord};
use recaudit_core::synth::generate;

use crate::manifest::RunManifest;
use crate::tables::{fmt_exact, fmt_real, read_table, TableWriter};

pub struct Runner {
    pub manifest: RunManifest,
    pub hash: String,
    pub out: PathBuf,
}

impl Runner {
    pub fn new(manifest: RunManifest) -> anyhow::Result<Self> {
        let hash = manifest.hash()?;
        let out = manifest.output.dir.clone();
        std::fs::create_dir_all(&out)?;
        let runner = Self {
            manifest,
            hash,
            out,
        };
        runner.write_manifest_copy()?;
        Ok(runner)
    }

    fn write_manifest_copy(&self) -> anyhow::Result<()> {
        let resolved = self.manifest.resolved_toml()?;
        std::fs::write(self.out.join("manifest.toml"), resolved)?;
        std::fs::write(self.out.join("manifest.sha256"), format!("{}\n", self.hash))?;
        Ok(())
    }

    fn meta(&self) -> Vec<(&'static str, String)> {
        vec![
            ("recaudit_version", env!("CARGO_PKG_VERSION").to_string()),
            ("manifest_sha256", self.hash.clone()),
        ]
    }

    fn source_format(&self) -> anyhow::Result<LogFormat> {
        if self.manifest.dataset.source == "synth" {
            Ok(LogFormat::ImplicitTable)
        } else {
            Ok(self.manifest.load_options()?.format)
        }
    }

    /// Loads the dataset straight from the manifest's dataset section.
    fn ingest_direct(&self) -> anyhow::Result<(InteractionLog, DropReport)> {
        if self.manifest.dataset.source == "synth" {
            let log = generate(&self.manifest.synth_spec()?)?;
            return Ok((log, DropReport::default()));
        }
        let options = self.manifest.load_options()?;
        let grouping = self.manifest.grouping()?;
        let vocabulary = recaudit_core::ingest::read_vocabulary(
            self.manifest.dataset.vocabulary.as_ref().unwrap(),
        )?;
        let (log, drops) = load_log(
            self.manifest.dataset.events.as_ref().unwrap(),
            self.manifest.dataset.users.as_ref().unwrap(),
            self.manifest.dataset.genres.as_ref().unwrap(),
            options,
            grouping,
            vocabulary,
        )?;
        Ok((log, drops))
    }

    /// The freshest persisted log: the sample stage's output, else the
    /// ingest stage's, else a direct in-memory ingest.
    pub fn acquire_log(&self) -> anyhow::Result<(InteractionLog, DropReport)> {
        for stage in ["sample", "ingest"] {
            let dir = self.out.join(stage);
            if dir.join("summary.json").is_file() {
                return Ok(load_canonical(&dir)?);
            }
        }
        self.ingest_direct()
    }

    pub fn cmd_ingest(&self) -> anyhow::Result<PathBuf> {
        let (log, drops) = self.ingest_direct()?;
        let dir = self.out.join("ingest");
        let meta: Vec<(String, String)> = self
            .meta()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        write_canonical(&log, &drops, self.source_format()?, &dir, &meta)?;
        let summary = log.summary();
        println!(
            "ingest: {} users, {} items, {} events ({} rows dropped)",
            summary.users,
            summary.items,
            summary.events,
            drops.total()
        );
        Ok(dir)
    }

    pub fn cmd_sample(&self) -> anyhow::Result<PathBuf> {
        let section = self
            .manifest
            .sample
            .as_ref()
            .context("manifest has no [sample] section")?;
        let base_dir = self.out.join("ingest");
        let (log, drops) = if base_dir.join("summary.json").is_file() {
            load_canonical(&base_dir)?
        } else {
            self.ingest_direct()?
        };
        let window = match (section.window_first_before, section.window_last_after) {
            (Some(first), Some(last)) => Some((first, last)),
            (None, None) => None,
            _ => anyhow::bail!("sample window needs both window_first_before and window_last_after"),
        };
        let sampled = sample_users(
            &log,
            &SampleOptions {
                n: section.n,
                seed: section.seed,
                stratify_by_age: section.stratify_by_age,
                activity_cap_sigma: section.activity_cap_sigma,
                activity_window: window,
            },
        )?;
        let dir = self.out.join("sample");
        let meta: Vec<(String, String)> = self
            .meta()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        write_canonical(&sampled, &drops, self.source_format()?, &dir, &meta)?;
        println!(
            "sample: kept {} of {} users",
            sampled.users().len(),
            log.users().len()
        );
        Ok(dir)
    }

    // -----------------------------------------------------------------
    // Preprocess
    // -----------------------------------------------------------------

    /// Year whose ages define the experiment's groups: the training range's
    /// start year of a temporal split on a reference-dated grouping.
    fn experiment_year(&self) -> anyhow::Result<Option<i32>> {
        use chrono::Datelike;
        if self.manifest.grouping.reference_date.is_none() {
            return Ok(None);
        }
        Ok(match self.manifest.split_strategy()? {
            recaudit_core::preprocess::SplitStrategy::TemporalGlobal { train, .. } => {
                Some(train.0.year())
            }
            _ => None,
        })
    }

    fn preprocess_in_memory(&self) -> anyhow::Result<(InteractionLog, SplitBundle)> {
        let (raw, _) = self.acquire_log()?;
        let raw = match self.experiment_year()? {
            Some(year) => raw.with_ages_in_year(year)?,
            None => raw,
        };
        let binarized = binarize(&raw, self.manifest.binarize_mode()?)?;
        let filtered = kcore(
            &binarized,
            self.manifest.preprocess.k_user,
            self.manifest.preprocess.k_item,
        )?;
        let mut bundle = split(&filtered, &self.manifest.split_strategy()?)?;
        bundle.child_train = derive_child_set(&filtered, &bundle)?;
        Ok((filtered, bundle))
    }

    pub fn cmd_preprocess(&self) -> anyhow::Result<(InteractionLog, SplitBundle)> {
        let (log, bundle) = self.preprocess_in_memory()?;
        let dir = self.out.join("preprocess");
        let meta: Vec<(String, String)> = self
            .meta()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        write_canonical(
            &log,
            &DropReport::default(),
            self.source_format()?,
            &dir.join("log"),
            &meta,
        )?;
        let child_users = bundle
            .child_train
            .iter()
            .map(|e| e.user)
            .collect::<std::collections::BTreeSet<_>>();
        let child_items = bundle
            .child_train
            .iter()
            .map(|e| e.item)
            .collect::<std::collections::BTreeSet<_>>();
        let manifest = BundleManifest {
            metadata: self
                .meta()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            strategy: self.manifest.split_strategy()?,
            binarize: self.manifest.binarize_mode()?,
            k_user: self.manifest.preprocess.k_user,
            k_item: self.manifest.preprocess.k_item,
            users: bundle.surviving_users().len(),
            items: bundle.surviving_items().len(),
            train_events: bundle.train.len(),
            validation_events: bundle.validation.len(),
            test_events: bundle.test.len(),
            child_users: child_users.len(),
            child_items: child_items.len(),
            child_train_events: bundle.child_train.len(),
        };
        write_bundle(&log, &bundle, &manifest, &dir)?;
        println!(
            "preprocess: {} users / {} items; train {} validation {} test {}; child set {} users / {} items",
            manifest.users,
            manifest.items,
            manifest.train_events,
            manifest.validation_events,
            manifest.test_events,
            manifest.child_users,
            manifest.child_items
        );
        Ok((log, bundle))
    }

    /// Persisted bundle when present, else a fresh in-memory preprocess.
    fn acquire_bundle(&self) -> anyhow::Result<(InteractionLog, SplitBundle)> {
        let dir = self.out.join("preprocess");
        if dir.join("bundle_manifest.json").is_file() {
            let (log, _) = load_canonical(&dir.join("log"))?;
            let (bundle, _) = load_bundle(&log, &dir)?;
            return Ok((log, bundle));
        }
        self.preprocess_in_memory()
    }

    // -----------------------------------------------------------------
    // Preference deviation exploration
    // -----------------------------------------------------------------

    pub fn cmd_explore(&self) -> anyhow::Result<PathBuf> {
        let (log, _) = self.acquire_log()?;
        let base = self.manifest.jsd_base()?;
        let dir = self.out.join("explore");
        std::fs::create_dir_all(&dir)?;
        let meta = self.meta();

        let profiles = build_profiles(&log)?;
        let by_bucket = profiles_by_bucket(&profiles);
        let agps = build_all_agps(&profiles);

        // AGP table: one row per (bucket, genre).
        let mut agp_table = TableWriter::create(
            &dir.join("agp_table.tsv"),
            &meta,
            &["bucket", "genre", "mean_share", "members"],
        )?;
        for agp in &agps {
            for (genre_idx, &share) in agp.distribution.weights().iter().enumerate() {
                agp_table.row(&[
                    agp.bucket.to_string(),
                    log.vocabulary().label(genre_idx).to_string(),
                    fmt_real(share),
                    agp.member_count.to_string(),
                ])?;
            }
        }
        agp_table.finish()?;

        // Deviation table: APD for bucket pairs of the same kind plus IGD
        // per bucket.
        let mut deviation = TableWriter::create(
            &dir.join("deviation_table.tsv"),
            &meta,
            &["kind", "bucket_a", "bucket_b", "value"],
        )?;
        let same_kind = |a: &Bucket, b: &Bucket| {
            matches!(
                (a, b),
                (Bucket::Group(_), Bucket::Group(_)) | (Bucket::Age(_), Bucket::Age(_))
            )
        };
        for (i, a) in agps.iter().enumerate() {
            for b in agps.iter().skip(i + 1) {
                if same_kind(&a.bucket, &b.bucket) {
                    deviation.row(&[
                        "apd".into(),
                        a.bucket.to_string(),
                        b.bucket.to_string(),
                        fmt_real(apd(a, b, base)?),
                    ])?;
                }
            }
        }
        for agp in &agps {
            let members = &by_bucket[&agp.bucket];
            deviation.row(&[
                "igd".into(),
                agp.bucket.to_string(),
                String::new(),
                fmt_real(igd(agp, members, base)?),
            ])?;
        }
        deviation.finish()?;

        // Popularity extension with significance letters.
        let pop_profiles = popularity_profiles(&log);
        let pop_metrics = [
            "n_interactions",
            "profile_size",
            "profile_popularity",
            "profile_age_popularity",
        ];
        let value_of = |p: &recaudit_core::profiles::PopularityProfile, name: &str| -> f64 {
            match name {
                "n_interactions" => p.n_interactions as f64,
                "profile_size" => p.profile_size as f64,
                "profile_popularity" => p.profile_popularity,
                _ => p.profile_age_popularity,
            }
        };
        let pop_samples: Vec<[Vec<f64>; 3]> = pop_metrics
            .iter()
            .map(|name| {
                let mut slots: [Vec<f64>; 3] = Default::default();
                for p in &pop_profiles {
                    let slot = AgeGroup::ALL.iter().position(|&g| g == p.group).unwrap();
                    slots[slot].push(value_of(p, name));
                }
                slots
            })
            .collect();
        let pop_names: Vec<String> = pop_metrics.iter().map(|s| s.to_string()).collect();
        let pop_reports = grouped_family_tests("popularity", &pop_names, &pop_samples)?;
        let mut pop_table = TableWriter::create(
            &dir.join("popularity_table.tsv"),
            &meta,
            &["group", "metric", "mean", "n", "significant_vs"],
        )?;
        for (metric_idx, name) in pop_metrics.iter().enumerate() {
            for (slot, group) in AgeGroup::ALL.into_iter().enumerate() {
                let sample = &pop_samples[metric_idx][slot];
                if sample.is_empty() {
                    continue;
                }
                pop_table.row(&[
                    group.name().to_string(),
                    name.to_string(),
                    fmt_real(sample.iter().sum::<f64>() / sample.len() as f64),
                    sample.len().to_string(),
                    pop_reports[metric_idx].letters[slot].clone(),
                ])?;
            }
        }
        pop_table.finish()?;

        // Per-genre significance.
        let genre_samples = genre_share_samples(&profiles, log.vocabulary().len());
        let genre_reports = per_genre_tests(&genre_samples, log.vocabulary().names())?;
        let mut sig = TableWriter::create(
            &dir.join("genre_significance.tsv"),
            &meta,
            &[
                "genre", "kw_statistic", "kw_p", "comparison", "statistic", "p", "corrected_p",
                "significant", "skipped",
            ],
        )?;
        for report in &genre_reports {
            let (kw_stat, kw_p) = report
                .kruskal_wallis
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |kw| (kw.statistic, kw.p));
            for record in &report.pairwise {
                sig.row(&[
                    report.name.clone(),
                    fmt_real(kw_stat),
                    fmt_real(kw_p),
                    record.comparison.clone(),
                    fmt_real(record.statistic),
                    fmt_real(record.p),
                    fmt_real(record.corrected_p),
                    record.significant.to_string(),
                    record.skipped.to_string(),
                ])?;
            }
        }
        sig.finish()?;

        println!(
            "explore: {} profiles, {} buckets, tables under {}",
            profiles.len(),
            agps.len(),
            dir.display()
        );
        Ok(dir)
    }

    // -----------------------------------------------------------------
    // RS experiment
    // -----------------------------------------------------------------

    pub fn cmd_rs_experiment(&self) -> anyhow::Result<PathBuf> {
        let (log, bundle) = self.acquire_bundle()?;
        let base = self.manifest.jsd_base()?;
        let top_n = self.manifest.recommenders.top_n;
        let dir = self.out.join("rs");
        std::fs::create_dir_all(&dir)?;

        let general_matrix = TrainMatrix::from_events(&log, &bundle.train)?;
        let child_matrix = TrainMatrix::from_events(&log, &bundle.child_train)?;

        let ctx = EvaluationContext::new(&log, &bundle.train, &bundle.test, base, top_n)?;

        let mut per_user: Vec<UserEvaluation> = Vec::new();
        let mut tuned_summary: BTreeMap<String, TunedEntry> = BTreeMap::new();
        for family in &self.manifest.recommenders.families {
            for (variant, matrix) in [
                (TrainingVariant::General, &general_matrix),
                (TrainingVariant::Child, &child_matrix),
            ] {
                let grid = self.grid_for(family)?;
                let validation_map = dense_item_map(&bundle.validation, matrix);
                let outcome = tune(&grid, matrix, &validation_map, top_n)?;
                let model = outcome.best.train(matrix)?;
                let exclusions = if self.manifest.recommenders.exclude_validation {
                    Some(dense_item_map(&bundle.validation, matrix))
                } else {
                    None
                };
                let table = recommend_topn(
                    &*model,
                    matrix,
                    exclusions.as_ref(),
                    top_n,
                    variant,
                    &outcome.best,
                );
                write_recommendations(&self.recs_path(&dir, family, variant), self, &log, &table)?;
                write_tuning_trace(&dir, family, variant, &self.hash, &outcome)?;
                tuned_summary.insert(
                    format!("{family}:{variant}"),
                    TunedEntry {
                        best: outcome.best.clone(),
                        objective: outcome.best_objective,
                        grid_points: outcome.trace.len(),
                    },
                );
                per_user.extend(evaluate_table(&log, &ctx, &table)?);
            }
        }

        self.write_rs_outputs(&dir, &log, &per_user)?;
        let metadata = RunMetadata {
            manifest_sha256: self.hash.clone(),
            top_n,
            exclude_validation: self.manifest.recommenders.exclude_validation,
            jsd_base: base.to_string(),
            families: self.manifest.recommenders.families.clone(),
            seed: self.manifest.recommenders.seed,
            tuned: tuned_summary,
        };
        std::fs::write(
            dir.join("run_metadata.json"),
            serde_json::to_string_pretty(&metadata)? + "\n",
        )?;
        println!(
            "rs-experiment: {} per-user evaluations across {} recommenders",
            per_user.len(),
            self.manifest.recommenders.families.len()
        );
        Ok(dir)
    }

    fn recs_path(&self, dir: &Path, family: &str, variant: TrainingVariant) -> PathBuf {
        dir.join("recommendations")
            .join(format!("{family}_{}.tsv", variant.to_string().to_lowercase()))
    }

    fn grid_for(&self, family: &str) -> anyhow::Result<Vec<AlgoParams>> {
        let seed = self.manifest.recommenders.seed;
        if family == "rp3beta" {
            if let Some(grid) = &self.manifest.recommenders.rp3beta {
                let mut points = Vec::new();
                for &alpha in &grid.alphas {
                    for &beta in &grid.betas {
                        points.push(AlgoParams::Rp3Beta {
                            alpha,
                            beta,
                            top_k_neighbors: grid.top_k_neighbors,
                        });
                    }
                }
                anyhow::ensure!(!points.is_empty(), "empty rp3beta grid override");
                return Ok(points);
            }
        }
        if family == "ials" {
            if let Some(grid) = &self.manifest.recommenders.ials {
                let mut points = Vec::new();
                for &factors in &grid.factors {
                    for &reg in &grid.regs {
                        for &alpha in &grid.alphas {
                            points.push(AlgoParams::Ials {
                                factors,
                                reg,
                                alpha,
                                epochs: grid.epochs,
                                seed,
                            });
                        }
                    }
                }
                anyhow::ensure!(!points.is_empty(), "empty ials grid override");
                return Ok(points);
            }
        }
        Ok(AlgoParams::default_grid(family, seed)?)
    }

    fn write_rs_outputs(
        &self,
        dir: &Path,
        log: &InteractionLog,
        per_user: &[UserEvaluation],
    ) -> anyhow::Result<()> {
        let meta = self.meta();
        let mut table = TableWriter::create(
            &dir.join("per_user_metrics.tsv"),
            &meta,
            &[
                "user_id", "group", "recommender", "variant", "ndcg", "mrr", "map", "gmc", "pl",
            ],
        )?;
        for eval in per_user {
            table.row(&[
                log.user_id(eval.user).to_string(),
                eval.group.name().to_string(),
                eval.recommender.clone(),
                eval.variant.to_string(),
                fmt_exact(eval.ndcg),
                fmt_exact(eval.mrr),
                fmt_exact(eval.map),
                fmt_exact(eval.gmc),
                fmt_exact(eval.pl),
            ])?;
        }
        table.finish()?;
        self.write_annotated_tables(dir, per_user)
    }

    fn write_annotated_tables(
        &self,
        dir: &Path,
        per_user: &[UserEvaluation],
    ) -> anyhow::Result<()> {
        let meta = self.meta();
        let (cells, records) = annotate(per_user);
        let mut group_table = TableWriter::create(
            &dir.join("group_metrics.tsv"),
            &meta,
            &[
                "recommender", "variant", "group", "n", "ndcg", "ndcg_sig", "mrr", "mrr_sig",
                "map", "map_sig", "gmc", "gmc_sig", "pl", "pl_sig",
            ],
        )?;
        for entry in &cells {
            let mut row = vec![
                entry.cell.recommender.clone(),
                entry.cell.variant.to_string(),
                entry.cell.group.name().to_string(),
                entry.cell.n.to_string(),
            ];
            for (slot, metric) in Metric::ALL.into_iter().enumerate() {
                row.push(fmt_real(entry.cell.value(metric)));
                let mut sig = entry.letters[slot].clone();
                if entry.asterisks[slot] {
                    sig.push('*');
                }
                row.push(sig);
            }
            group_table.row(&row)?;
        }
        group_table.finish()?;
        write_significance(&dir.join("significance.tsv"), &meta, &records)?;
        Ok(())
    }

    /// Recomputes significance and the annotated group table from the
    /// persisted per-user metrics.
    pub fn cmd_stats(&self) -> anyhow::Result<PathBuf> {
        let dir = self.out.join("rs");
        let per_user = read_per_user_metrics(&dir.join("per_user_metrics.tsv"))?;
        self.write_annotated_tables(&dir, &per_user)?;
        println!("stats: annotated {} per-user evaluations", per_user.len());
        Ok(dir)
    }

    pub fn cmd_synth(&self) -> anyhow::Result<PathBuf> {
        let spec = self.manifest.synth_spec()?;
        let log = generate(&spec)?;
        let dir = self.out.join("synth");
        let meta: Vec<(String, String)> = self
            .meta()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        write_canonical(&log, &DropReport::default(), LogFormat::ImplicitTable, &dir, &meta)?;
        println!(
            "synth: {} users, {} items, {} events under {}",
            log.users().len(),
            log.items().len(),
            log.events().len(),
            dir.display()
        );
        Ok(dir)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TunedEntry {
    best: AlgoParams,
    objective: f64,
    grid_points: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunMetadata {
    manifest_sha256: String,
    top_n: usize,
    exclude_validation: bool,
    jsd_base: String,
    families: Vec<String>,
    seed: u64,
    tuned: BTreeMap<String, TunedEntry>,
}

/// Groups events into dense per-user item lists against a matrix, dropping
/// users and items outside its universe.
fn dense_item_map(
    events: &[recaudit_core::domain::Interaction],
    matrix: &TrainMatrix,
) -> HashMap<u32, Vec<u32>> {
    let mut map: HashMap<u32, Vec<u32>> = HashMap::new();
    for event in events {
        let (Some(user), Some(item)) = (matrix.dense_user(event.user), matrix.dense_item(event.item))
        else {
            continue;
        };
        map.entry(user).or_default().push(item);
    }
    for items in map.values_mut() {
        items.sort_unstable();
        items.dedup();
    }
    map
}

fn write_recommendations(
    path: &Path,
    runner: &Runner,
    log: &InteractionLog,
    table: &RecommendationTable,
) -> anyhow::Result<()> {
    let mut meta = runner.meta();
    meta.push(("recommender", table.recommender.clone()));
    meta.push(("variant", table.variant.to_string()));
    meta.push(("n", table.n.to_string()));
    for (key, value) in &table.hyperparameters {
        meta.push(("hyperparameter", format!("{key}={value}")));
    }
    let mut out = TableWriter::create(path, &meta, &["user_id", "rank", "item_id", "score"])?;
    for rec in &table.lists {
        for (rank, &(item, score)) in rec.items.iter().enumerate() {
            out.row(&[
                log.user_id(rec.user).to_string(),
                (rank + 1).to_string(),
                log.item_id(item).to_string(),
                fmt_real(score),
            ])?;
        }
    }
    out.finish()?;
    Ok(())
}

fn write_tuning_trace(
    dir: &Path,
    family: &str,
    variant: TrainingVariant,
    manifest_sha256: &str,
    outcome: &TuneOutcome,
) -> anyhow::Result<()> {
    let tuning_dir = dir.join("tuning");
    std::fs::create_dir_all(&tuning_dir)?;
    let path = tuning_dir.join(format!(
        "{family}_{}.json",
        variant.to_string().to_lowercase()
    ));
    let envelope = serde_json::json!({
        "manifest_sha256": manifest_sha256,
        "outcome": outcome,
    });
    std::fs::write(path, serde_json::to_string_pretty(&envelope)? + "\n")?;
    Ok(())
}

fn write_significance(
    path: &Path,
    meta: &[(&str, String)],
    records: &[SignificanceRecord],
) -> anyhow::Result<()> {
    let mut table = TableWriter::create(
        path,
        meta,
        &[
            "family", "comparison", "statistic", "p", "corrected_p", "significant", "skipped",
        ],
    )?;
    for record in records {
        table.row(&[
            record.family.clone(),
            record.comparison.clone(),
            fmt_real(record.statistic),
            fmt_real(record.p),
            fmt_real(record.corrected_p),
            record.significant.to_string(),
            record.skipped.to_string(),
        ])?;
    }
    table.finish()
}

/// Parses a per-user metrics table back into evaluations, interning the
/// opaque user ids into dense indices.
pub fn read_per_user_metrics(path: &Path) -> anyhow::Result<Vec<UserEvaluation>> {
    let mut interned: HashMap<String, u32> = HashMap::new();
    let mut user_index = |id: &str| -> u32 {
        let next = interned.len() as u32;
        *interned.entry(id.to_string()).or_insert(next)
    };
    let (_, columns, rows) = read_table(path)?;
    let col = |name: &str| -> anyhow::Result<usize> {
        columns
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("{} lacks column {name}", path.display()))
    };
    let (c_user, c_group, c_rec, c_variant) =
        (col("user_id")?, col("group")?, col("recommender")?, col("variant")?);
    let metric_cols: Vec<usize> = Metric::ALL
        .iter()
        .map(|m| col(m.name()))
        .collect::<anyhow::Result<_>>()?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let group = AgeGroup::from_name(&row[c_group])
            .with_context(|| format!("unknown group '{}'", row[c_group]))?;
        let variant = match row[c_variant].as_str() {
            "General" => TrainingVariant::General,
            "Child" => TrainingVariant::Child,
            other => anyhow::bail!("unknown variant '{other}'"),
        };
        let value = |idx: usize| -> anyhow::Result<f64> {
            row[idx]
                .parse::<f64>()
                .with_context(|| format!("bad metric value '{}'", row[idx]))
        };
        let user = user_index(&row[c_user]);
        out.push(UserEvaluation {
            user,
            group,
            recommender: row[c_rec].clone(),
            variant,
            ndcg: value(metric_cols[0])?,
            mrr: value(metric_cols[1])?,
            map: value(metric_cols[2])?,
            gmc: value(metric_cols[3])?,
            pl: value(metric_cols[4])?,
        });
    }
    Ok(out)
}

/// Group means straight from per-user evaluations; exposed for tests and the
/// report validator.
pub fn group_means(per_user: &[UserEvaluation]) -> Vec<recaudit_core::evaluation::GroupCell> {
    aggregate(per_user)
}

/// Helper assembling AGPs per coarse group; used by acceptance checks.
pub fn coarse_agps(
    profiles: &[recaudit_core::profiles::UserGenreProfile],
) -> BTreeMap<AgeGroup, recaudit_core::profiles::AgeGenreProfile> {
    let by_bucket = profiles_by_bucket(profiles);
    let mut out = BTreeMap::new();
    for group in AgeGroup::ALL {
        if let Some(members) = by_bucket.get(&Bucket::Group(group)) {
            if let Some(agp) = build_agp(members, Bucket::Group(group)) {
                out.insert(group, agp);
            }
        }
    }
    out
}

/// JSD base helper for criterion reconciliation.
pub fn parse_base(label: &str) -> Option<JsdBase> {
    match label {
        "2" => Some(JsdBase::Two),
        "e" => Some(JsdBase::E),
        _ => None,
    }
}
