//! Transforms a raw log into the experiment's train/validation/test
//! partitions: binarization, iterative k-core filtering, split construction,
//! and Child-Set derivation.
//!
//! Pipeline order is fixed: binarize, then k-core, then split, then removal
//! of users lacking any partition, then Child-Set derivation. Binarization
//! runs first because thresholding changes the degrees k-core sees.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{AgeGroup, Interaction};
use crate::error::{Error, Result};
use crate::ingest::InteractionLog;
use crate::rng::sub_rng;

// ---------------------------------------------------------------------------
// Binarization
// ---------------------------------------------------------------------------

/// Positive-signal selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum BinarizeMode {
    /// Keep events with rating strictly above the threshold.
    RatingThreshold { threshold: i32 },
    /// Keep (user, item) pairs consumed at least `min` times, collapsed to a
    /// single unit event carrying the earliest timestamp.
    MinCount { min: u32 },
    /// Keep every event, coercing weights to one.
    KeepAll,
}

/// Reduces the log to unit-weight positive signals.
pub fn binarize(log: &InteractionLog, mode: BinarizeMode) -> Result<InteractionLog> {
    let events = match mode {
        BinarizeMode::RatingThreshold { threshold } => {
            if log.events().iter().all(|e| e.rating.is_none()) {
                return Err(Error::config(
                    "rating-threshold binarization on a log without ratings",
                ));
            }
            log.events()
                .iter()
                .filter(|e| e.rating.is_some_and(|r| r > threshold))
                .map(|e| Interaction { weight: 1, ..*e })
                .collect()
        }
        BinarizeMode::MinCount { min } => {
            let mut totals: HashMap<(u32, u32), (u64, Option<i64>)> = HashMap::new();
            for e in log.events() {
                let entry = totals.entry((e.user, e.item)).or_insert((0, e.timestamp));
                entry.0 += u64::from(e.weight);
                entry.1 = match (entry.1, e.timestamp) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            // One collapsed event per surviving pair, in first-occurrence order.
            let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
            let mut out = Vec::new();
            for e in log.events() {
                let key = (e.user, e.item);
                if seen.contains(&key) {
                    continue;
                }
                let (total, first_ts) = totals[&key];
                if total >= u64::from(min) {
                    out.push(Interaction {
                        user: e.user,
                        item: e.item,
                        weight: 1,
                        rating: None,
                        timestamp: first_ts,
                    });
                }
                seen.insert(key);
            }
            out
        }
        BinarizeMode::KeepAll => log
            .events()
            .iter()
            .map(|e| Interaction { weight: 1, ..*e })
            .collect(),
    };
    log.with_events(events)
}

// ---------------------------------------------------------------------------
// k-core filtering
// ---------------------------------------------------------------------------

/// Iteratively removes users with fewer than `k_user` events and items with
/// fewer than `k_item` events until a fixed point.
pub fn kcore(log: &InteractionLog, k_user: u32, k_item: u32) -> Result<InteractionLog> {
    if k_user < 1 || k_item < 1 {
        return Err(Error::config("k-core thresholds must be at least 1"));
    }
    let mut events: Vec<Interaction> = log.events().to_vec();
    let n_users = log.users().len();
    let n_items = log.items().len();
    let mut trace: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut user_deg = vec![0u32; n_users];
        let mut item_deg = vec![0u32; n_items];
        for e in &events {
            user_deg[e.user as usize] += 1;
            item_deg[e.item as usize] += 1;
        }
        let before = events.len();
        events.retain(|e| {
            user_deg[e.user as usize] >= k_user && item_deg[e.item as usize] >= k_item
        });
        let users_left = events.iter().map(|e| e.user).collect::<BTreeSet<_>>().len();
        let items_left = events.iter().map(|e| e.item).collect::<BTreeSet<_>>().len();
        trace.push((users_left, items_left));
        if events.is_empty() {
            return Err(Error::data(format!(
                "k-core ({k_user}, {k_item}) reached an empty fixed point; trace (users, items) per round: {trace:?}"
            )));
        }
        if events.len() == before {
            break;
        }
    }
    log.with_events(events)
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Partitioning strategy for the experiment splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum SplitStrategy {
    /// Shuffle each user's events with the seed; validation and test take
    /// floor shares, the remainder goes to train.
    PerUserRatio {
        train_pct: u32,
        validation_pct: u32,
        test_pct: u32,
        seed: u64,
    },
    /// Assign events by timestamp into three disjoint, ordered date ranges
    /// (inclusive). Events outside every range are dropped.
    TemporalGlobal {
        train: (NaiveDate, NaiveDate),
        validation: (NaiveDate, NaiveDate),
        test: (NaiveDate, NaiveDate),
    },
}

/// Floor-based cut of `n` events: validation and test take their floor
/// shares, train keeps the remainder so it is never starved.
pub(crate) fn ratio_cut(n: usize, validation_pct: u32, test_pct: u32) -> (usize, usize, usize) {
    let val_n = n * validation_pct as usize / 100;
    let test_n = n * test_pct as usize / 100;
    (n - val_n - test_n, val_n, test_n)
}

/// Train/validation/test event partitions over a preprocessed log, plus the
/// derived Child Set. Event indices refer to the log the bundle was built
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
    /// Train events of Child-group users; empty until derived.
    pub child_train: Vec<Interaction>,
}

impl SplitBundle {
    /// The General Set is the full training partition.
    pub fn general_train(&self) -> &[Interaction] {
        &self.train
    }

    /// Users with at least one event in every partition.
    pub fn surviving_users(&self) -> BTreeSet<u32> {
        self.train.iter().map(|e| e.user).collect()
    }

    /// Items appearing in the training partition (the closed candidate
    /// world).
    pub fn surviving_items(&self) -> BTreeSet<u32> {
        self.train.iter().map(|e| e.item).collect()
    }
}

/// Splits a log into train/validation/test partitions, then removes users
/// lacking any partition and drops validation/test events whose item never
/// appears in train, iterating to a fixed point.
pub fn split(log: &InteractionLog, strategy: &SplitStrategy) -> Result<SplitBundle> {
    let (mut train, mut validation, mut test) = match strategy {
        SplitStrategy::PerUserRatio {
            train_pct,
            validation_pct,
            test_pct,
            seed,
        } => {
            if train_pct + validation_pct + test_pct != 100 {
                return Err(Error::config(format!(
                    "split ratios must sum to 100, got {}",
                    train_pct + validation_pct + test_pct
                )));
            }
            let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); log.users().len()];
            for (pos, e) in log.events().iter().enumerate() {
                per_user[e.user as usize].push(pos);
            }
            let mut train = Vec::new();
            let mut validation = Vec::new();
            let mut test = Vec::new();
            for (user, positions) in per_user.iter().enumerate() {
                let n = positions.len();
                if n == 0 {
                    continue;
                }
                let (train_n, val_n, test_n) = ratio_cut(n, *validation_pct, *test_pct);
                if val_n == 0 || test_n == 0 || train_n == 0 {
                    continue; // cannot populate all three partitions
                }
                let mut shuffled = positions.clone();
                shuffled.shuffle(&mut sub_rng(*seed, user as u64));
                for (i, &pos) in shuffled.iter().enumerate() {
                    let ev = log.events()[pos];
                    if i < train_n {
                        train.push(ev);
                    } else if i < train_n + val_n {
                        validation.push(ev);
                    } else {
                        test.push(ev);
                    }
                }
            }
            (train, validation, test)
        }
        SplitStrategy::TemporalGlobal {
            train: tr,
            validation: va,
            test: te,
        } => {
            for (lo, hi) in [tr, va, te] {
                if lo > hi {
                    return Err(Error::config("temporal range start is after its end"));
                }
            }
            if tr.1 >= va.0 || va.1 >= te.0 {
                return Err(Error::config(
                    "temporal ranges must be disjoint and ordered train < validation < test",
                ));
            }
            if !log.has_timestamps() {
                return Err(Error::config("temporal split on a log without timestamps"));
            }
            let mut train = Vec::new();
            let mut validation = Vec::new();
            let mut test = Vec::new();
            for e in log.events() {
                let Some(date) = e.date() else { continue };
                if date >= tr.0 && date <= tr.1 {
                    train.push(*e);
                } else if date >= va.0 && date <= va.1 {
                    validation.push(*e);
                } else if date >= te.0 && date <= te.1 {
                    test.push(*e);
                }
            }
            (train, validation, test)
        }
    };

    // Closed candidate world: validation/test items must appear in train;
    // users must keep at least one event in every partition. Removing users
    // can orphan more items, so iterate.
    loop {
        let train_items: BTreeSet<u32> = train.iter().map(|e| e.item).collect();
        let before = validation.len() + test.len();
        validation.retain(|e| train_items.contains(&e.item));
        test.retain(|e| train_items.contains(&e.item));
        let dropped_items = before != validation.len() + test.len();

        let users_with = |events: &[Interaction]| -> BTreeSet<u32> {
            events.iter().map(|e| e.user).collect()
        };
        let complete: BTreeSet<u32> = users_with(&train)
            .intersection(&users_with(&validation))
            .copied()
            .collect::<BTreeSet<u32>>()
            .intersection(&users_with(&test))
            .copied()
            .collect();
        let before = train.len() + validation.len() + test.len();
        train.retain(|e| complete.contains(&e.user));
        validation.retain(|e| complete.contains(&e.user));
        test.retain(|e| complete.contains(&e.user));
        let dropped_users = before != train.len() + validation.len() + test.len();

        if !dropped_items && !dropped_users {
            break;
        }
    }

    if train.is_empty() {
        return Err(Error::data("split leaves an empty training partition"));
    }
    Ok(SplitBundle {
        train,
        validation,
        test,
        child_train: Vec::new(),
    })
}

/// Child Set: the training events whose user belongs to the Child group.
/// Validation and test stay untouched; the Child-Set model is evaluated on
/// Child users' existing partitions.
pub fn derive_child_set(log: &InteractionLog, bundle: &SplitBundle) -> Result<Vec<Interaction>> {
    let child_train: Vec<Interaction> = bundle
        .train
        .iter()
        .filter(|e| log.users()[e.user as usize].group == AgeGroup::Child)
        .copied()
        .collect();
    if child_train.is_empty() {
        return Err(Error::data("no Child-group users in the training partition"));
    }
    Ok(child_train)
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Counts and parameters persisted alongside the split files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    /// Free-form annotations, e.g. the run-manifest hash.
    #[serde(default)]
    pub metadata: std::collections::BTreeMap<String, String>,
    pub strategy: SplitStrategy,
    pub binarize: BinarizeMode,
    pub k_user: u32,
    pub k_item: u32,
    pub users: usize,
    pub items: usize,
    pub train_events: usize,
    pub validation_events: usize,
    pub test_events: usize,
    pub child_users: usize,
    pub child_items: usize,
    pub child_train_events: usize,
}

fn write_events(
    log: &InteractionLog,
    events: &[Interaction],
    path: &Path,
    metadata: &[(String, String)],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (key, value) in metadata {
        writeln!(out, "# {key}: {value}")?;
    }
    for e in events {
        match e.timestamp {
            Some(ts) => writeln!(
                out,
                "{}\t{}\t{}\t{}",
                log.user_id(e.user),
                log.item_id(e.item),
                e.weight,
                ts
            )?,
            None => writeln!(
                out,
                "{}\t{}\t{}",
                log.user_id(e.user),
                log.item_id(e.item),
                e.weight
            )?,
        }
    }
    out.flush()?;
    Ok(())
}

fn read_events(log: &InteractionLog, path: &Path) -> Result<Vec<Interaction>> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::data(format!("malformed bundle row: '{line}'")));
        }
        let user = log
            .user_index(fields[0])
            .ok_or_else(|| Error::data(format!("bundle user '{}' not in log", fields[0])))?;
        let item = log
            .item_index(fields[1])
            .ok_or_else(|| Error::data(format!("bundle item '{}' not in log", fields[1])))?;
        let weight: u32 = fields[2]
            .parse()
            .map_err(|_| Error::data(format!("malformed bundle weight: '{line}'")))?;
        let timestamp = fields
            .get(3)
            .and_then(|s| s.parse::<i64>().ok());
        events.push(Interaction {
            user,
            item,
            weight,
            rating: None,
            timestamp,
        });
    }
    Ok(events)
}

/// Persists a bundle as four event files plus `bundle_manifest.json`.
pub fn write_bundle(
    log: &InteractionLog,
    bundle: &SplitBundle,
    manifest: &BundleManifest,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta: Vec<(String, String)> = manifest
        .metadata
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    write_events(log, &bundle.train, &dir.join("train.tsv"), &meta)?;
    write_events(log, &bundle.validation, &dir.join("validation.tsv"), &meta)?;
    write_events(log, &bundle.test, &dir.join("test.tsv"), &meta)?;
    write_events(log, &bundle.child_train, &dir.join("child_train.tsv"), &meta)?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::data(format!("cannot serialize bundle manifest: {e}")))?;
    std::fs::write(dir.join("bundle_manifest.json"), json + "\n")?;
    Ok(())
}

/// Loads a bundle persisted by [`write_bundle`], resolving IDs against the
/// given log.
pub fn load_bundle(log: &InteractionLog, dir: &Path) -> Result<(SplitBundle, BundleManifest)> {
    let raw = std::fs::read_to_string(dir.join("bundle_manifest.json"))
        .map_err(|e| Error::data(format!("cannot read bundle manifest: {e}")))?;
    let manifest: BundleManifest = serde_json::from_str(&raw)
        .map_err(|e| Error::data(format!("cannot parse bundle manifest: {e}")))?;
    let bundle = SplitBundle {
        train: read_events(log, &dir.join("train.tsv"))?,
        validation: read_events(log, &dir.join("validation.tsv"))?,
        test: read_events(log, &dir.join("test.tsv"))?,
        child_train: read_events(log, &dir.join("child_train.tsv"))?,
    };
    Ok((bundle, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AgeGrouping, GenreDistribution, GenreVocabulary, ItemRecord, UserRecord};

    fn unit_log(users: Vec<(u8, &str)>, n_items: usize, events: Vec<(u32, u32)>) -> InteractionLog {
        let grouping = AgeGrouping::new(17, 49, None).unwrap();
        let vocab = GenreVocabulary::new(vec!["A".into()]).unwrap();
        let users = users
            .into_iter()
            .map(|(age, id)| UserRecord::new(id.into(), age, &grouping).unwrap())
            .collect();
        let items = (0..n_items)
            .map(|i| ItemRecord {
                id: format!("i{i}"),
                genres: GenreDistribution::equal_weights(&[0], 1).unwrap(),
            })
            .collect();
        let events = events
            .into_iter()
            .map(|(user, item)| Interaction {
                user,
                item,
                weight: 1,
                rating: None,
                timestamp: None,
            })
            .collect();
        InteractionLog::from_parts(users, items, events, vocab, grouping).unwrap()
    }

    fn rated_log(ratings: &[i32]) -> InteractionLog {
        let grouping = AgeGrouping::new(17, 49, None).unwrap();
        let vocab = GenreVocabulary::new(vec!["A".into()]).unwrap();
        let users = vec![UserRecord::new("u".into(), 20, &grouping).unwrap()];
        let items = (0..ratings.len())
            .map(|i| ItemRecord {
                id: format!("i{i}"),
                genres: GenreDistribution::equal_weights(&[0], 1).unwrap(),
            })
            .collect();
        let events = ratings
            .iter()
            .enumerate()
            .map(|(i, &r)| Interaction {
                user: 0,
                item: i as u32,
                weight: 1,
                rating: Some(r),
                timestamp: None,
            })
            .collect();
        InteractionLog::from_parts(users, items, events, vocab, grouping).unwrap()
    }

    #[test]
    fn binarize_keeps_ratings_above_threshold() {
        let log = rated_log(&[2, 3, 4, 5]);
        let out = binarize(&log, BinarizeMode::RatingThreshold { threshold: 3 }).unwrap();
        assert_eq!(out.events().len(), 2);
        assert!(out.events().iter().all(|e| e.weight == 1));
        let ratings: Vec<i32> = out.events().iter().map(|e| e.rating.unwrap()).collect();
        assert_eq!(ratings, vec![4, 5]);
    }

    #[test]
    fn binarize_threshold_requires_ratings() {
        let log = unit_log(vec![(20, "u")], 1, vec![(0, 0)]);
        match binarize(&log, BinarizeMode::RatingThreshold { threshold: 3 }) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn binarize_min_count_removes_singletons_and_collapses() {
        let grouping = AgeGrouping::new(16, 29, None).unwrap();
        let vocab = GenreVocabulary::new(vec!["A".into()]).unwrap();
        let users = vec![UserRecord::new("u".into(), 20, &grouping).unwrap()];
        let items = vec![
            ItemRecord { id: "twice".into(), genres: GenreDistribution::equal_weights(&[0], 1).unwrap() },
            ItemRecord { id: "once".into(), genres: GenreDistribution::equal_weights(&[0], 1).unwrap() },
        ];
        let events = vec![
            Interaction { user: 0, item: 0, weight: 1, rating: None, timestamp: Some(200) },
            Interaction { user: 0, item: 0, weight: 1, rating: None, timestamp: Some(100) },
            Interaction { user: 0, item: 1, weight: 1, rating: None, timestamp: Some(50) },
        ];
        let log = InteractionLog::from_parts(users, items, events, vocab, grouping).unwrap();
        let out = binarize(&log, BinarizeMode::MinCount { min: 2 }).unwrap();
        assert_eq!(out.events().len(), 1);
        let e = &out.events()[0];
        assert_eq!(out.item_id(e.item), "twice");
        assert_eq!(e.weight, 1);
        assert_eq!(e.timestamp, Some(100)); // first listening event
    }

    #[test]
    fn binarize_keep_all_coerces_weights() {
        let grouping = AgeGrouping::new(17, 49, None).unwrap();
        let vocab = GenreVocabulary::new(vec!["A".into()]).unwrap();
        let users = vec![UserRecord::new("u".into(), 20, &grouping).unwrap()];
        let items = vec![ItemRecord {
            id: "i".into(),
            genres: GenreDistribution::equal_weights(&[0], 1).unwrap(),
        }];
        let events = vec![Interaction { user: 0, item: 0, weight: 7, rating: None, timestamp: None }];
        let log = InteractionLog::from_parts(users, items, events, vocab, grouping).unwrap();
        let out = binarize(&log, BinarizeMode::KeepAll).unwrap();
        assert_eq!(out.events().len(), 1);
        assert_eq!(out.events()[0].weight, 1);
    }

    #[test]
    fn kcore_worked_example() {
        // Users A:{1,2}, B:{1,2,3}, C:{3}; k=2 keeps users {A,B}, items {1,2}.
        let log = unit_log(
            vec![(20, "A"), (25, "B"), (30, "C")],
            3,
            vec![(0, 0), (0, 1), (1, 0), (1, 1), (1, 2), (2, 2)],
        );
        let out = kcore(&log, 2, 2).unwrap();
        let users: Vec<&str> = out.users().iter().map(|u| u.id.as_str()).collect();
        let items: Vec<&str> = out.items().iter().map(|i| i.id.as_str()).collect();
        assert_eq!(users, vec!["A", "B"]);
        assert_eq!(items, vec!["i0", "i1"]);
        assert_eq!(out.events().len(), 4);
    }

    #[test]
    fn kcore_idempotent_and_k1_noop() {
        let log = unit_log(
            vec![(20, "A"), (25, "B")],
            2,
            vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        );
        let once = kcore(&log, 2, 2).unwrap();
        let twice = kcore(&once, 2, 2).unwrap();
        assert_eq!(once.events(), twice.events());
        let k1 = kcore(&log, 1, 1).unwrap();
        assert_eq!(k1.events().len(), log.events().len());
    }

    #[test]
    fn kcore_empty_fixed_point_is_fatal() {
        let log = unit_log(vec![(20, "A")], 1, vec![(0, 0)]);
        assert!(kcore(&log, 5, 5).is_err());
    }

    fn ratio_strategy(seed: u64) -> SplitStrategy {
        SplitStrategy::PerUserRatio {
            train_pct: 60,
            validation_pct: 20,
            test_pct: 20,
            seed,
        }
    }

    #[test]
    fn ratio_cut_exact_division() {
        // 10 events at 60/20/20 cut 6/2/2.
        assert_eq!(ratio_cut(10, 20, 20), (6, 2, 2));
    }

    #[test]
    fn ratio_cut_remainder_goes_to_train() {
        // 9 events: floors give validation 1 and test 1, train takes 7.
        assert_eq!(ratio_cut(9, 20, 20), (7, 1, 1));
    }

    #[test]
    fn ratio_cut_starves_no_partition_silently() {
        let (train_n, val_n, test_n) = ratio_cut(2, 20, 20);
        assert_eq!((val_n, test_n), (0, 0));
        assert_eq!(train_n, 2);
    }

    /// Every user consumes every item, so items always stay in train and the
    /// closed-world filter is inert.
    fn dense_log(users: Vec<(u8, &str)>, n_items: usize) -> InteractionLog {
        let n_users = users.len();
        let events = (0..n_users as u32)
            .flat_map(|u| (0..n_items as u32).map(move |i| (u, i)))
            .collect();
        unit_log(users, n_items, events)
    }

    #[test]
    fn split_partition_sizes_follow_the_cut() {
        let log = dense_log(vec![(20, "u"), (25, "v"), (30, "w"), (35, "x"), (40, "y"), (45, "z")], 10);
        let bundle = split(&log, &ratio_strategy(3)).unwrap();
        let count = |events: &[Interaction], user: u32| events.iter().filter(|e| e.user == user).count();
        for user in 0..6 {
            assert_eq!(count(&bundle.train, user), 6);
            assert_eq!(count(&bundle.validation, user), 2);
            assert_eq!(count(&bundle.test, user), 2);
        }
    }

    #[test]
    fn split_removes_users_that_cannot_fill_partitions() {
        // The last user has 2 events: no validation/test share, removed.
        let mut events: Vec<(u32, u32)> = (0..3u32)
            .flat_map(|u| (0..10u32).map(move |i| (u, i)))
            .collect();
        events.push((3, 0));
        events.push((3, 1));
        let log = unit_log(vec![(20, "u"), (25, "v"), (30, "w"), (35, "x")], 10, events);
        let bundle = split(&log, &ratio_strategy(1)).unwrap();
        assert!(bundle.train.iter().all(|e| e.user != 3));
        assert_eq!(bundle.surviving_users().len(), 3);
    }

    #[test]
    fn split_ratios_must_sum_to_hundred() {
        let log = unit_log(vec![(20, "u")], 5, (0..5).map(|i| (0u32, i as u32)).collect());
        let bad = SplitStrategy::PerUserRatio {
            train_pct: 60,
            validation_pct: 30,
            test_pct: 20,
            seed: 0,
        };
        assert!(split(&log, &bad).is_err());
    }

    #[test]
    fn split_is_deterministic_and_partitions_are_disjoint() {
        let log = dense_log(vec![(20, "u"), (15, "c"), (30, "w"), (40, "x")], 8);
        let a = split(&log, &ratio_strategy(11)).unwrap();
        let b = split(&log, &ratio_strategy(11)).unwrap();
        assert_eq!(a, b);
        let total = a.train.len() + a.validation.len() + a.test.len();
        let mut all: Vec<(u32, u32)> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .map(|e| (e.user, e.item))
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), total);
    }

    fn ts_of(date: &str) -> i64 {
        NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .unwrap()
            .and_hms_opt(12, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp()
    }

    fn temporal_log(user_events: Vec<(u32, u32, &str)>) -> InteractionLog {
        let grouping = AgeGrouping::new(16, 29, None).unwrap();
        let vocab = GenreVocabulary::new(vec!["A".into()]).unwrap();
        let users = vec![
            UserRecord::new("u".into(), 20, &grouping).unwrap(),
            UserRecord::new("v".into(), 25, &grouping).unwrap(),
        ];
        let n_items = user_events.iter().map(|&(_, i, _)| i).max().unwrap() + 1;
        let items = (0..n_items)
            .map(|i| ItemRecord {
                id: format!("i{i}"),
                genres: GenreDistribution::equal_weights(&[0], 1).unwrap(),
            })
            .collect();
        let events = user_events
            .into_iter()
            .map(|(user, item, date)| Interaction {
                user,
                item,
                weight: 1,
                rating: None,
                timestamp: Some(ts_of(date)),
            })
            .collect();
        InteractionLog::from_parts(users, items, events, vocab, grouping).unwrap()
    }

    fn music_ranges() -> SplitStrategy {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        SplitStrategy::TemporalGlobal {
            train: (d("2009-06-01"), d("2009-08-31")),
            validation: (d("2009-09-01"), d("2009-09-30")),
            test: (d("2009-10-01"), d("2009-10-31")),
        }
    }

    #[test]
    fn temporal_split_assigns_september_to_validation() {
        let log = temporal_log(vec![
            (0, 0, "2009-06-15"),
            (0, 1, "2009-07-15"),
            (0, 0, "2009-09-15"),
            (0, 1, "2009-10-15"),
            (1, 0, "2009-06-20"),
            (1, 0, "2009-09-20"),
            (1, 0, "2009-10-20"),
        ]);
        let bundle = split(&log, &music_ranges()).unwrap();
        let september = bundle
            .validation
            .iter()
            .find(|e| e.date().unwrap() == NaiveDate::from_ymd_opt(2009, 9, 15).unwrap());
        assert!(september.is_some());
    }

    #[test]
    fn temporal_split_removes_user_missing_validation() {
        // User 1 has train and test events but nothing in September.
        let log = temporal_log(vec![
            (0, 0, "2009-06-15"),
            (0, 0, "2009-09-15"),
            (0, 0, "2009-10-15"),
            (1, 0, "2009-06-20"),
            (1, 0, "2009-10-20"),
        ]);
        let bundle = split(&log, &music_ranges()).unwrap();
        assert_eq!(bundle.surviving_users().into_iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn closed_world_after_split() {
        let log = temporal_log(vec![
            (0, 0, "2009-06-15"),
            (0, 1, "2009-09-15"),
            (0, 0, "2009-09-16"),
            (0, 2, "2009-10-15"),
            (0, 0, "2009-10-16"),
            (1, 0, "2009-07-01"),
            (1, 0, "2009-09-02"),
            (1, 0, "2009-10-02"),
        ]);
        let bundle = split(&log, &music_ranges()).unwrap();
        let train_items = bundle.surviving_items();
        assert!(bundle.validation.iter().all(|e| train_items.contains(&e.item)));
        assert!(bundle.test.iter().all(|e| train_items.contains(&e.item)));
    }

    #[test]
    fn child_set_contains_only_child_events() {
        let log = dense_log(vec![(15, "child"), (25, "adult"), (30, "v"), (40, "w")], 10);
        let bundle = split(&log, &ratio_strategy(2)).unwrap();
        let child_train = derive_child_set(&log, &bundle).unwrap();
        assert!(!child_train.is_empty());
        assert!(child_train
            .iter()
            .all(|e| log.users()[e.user as usize].group == AgeGroup::Child));
        // Union of child events and non-child train events is train.
        let non_child = bundle
            .train
            .iter()
            .filter(|e| log.users()[e.user as usize].group != AgeGroup::Child)
            .count();
        assert_eq!(non_child + child_train.len(), bundle.train.len());
    }

    #[test]
    fn child_set_requires_children() {
        let log = dense_log(vec![(25, "adult"), (30, "v"), (40, "w")], 10);
        let bundle = split(&log, &ratio_strategy(2)).unwrap();
        assert!(derive_child_set(&log, &bundle).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let log = dense_log(vec![(15, "child"), (25, "adult"), (30, "v"), (40, "w")], 10);
        let mut bundle = split(&log, &ratio_strategy(2)).unwrap();
        bundle.child_train = derive_child_set(&log, &bundle).unwrap();
        let manifest = BundleManifest {
            metadata: Default::default(),
            strategy: ratio_strategy(2),
            binarize: BinarizeMode::KeepAll,
            k_user: 1,
            k_item: 1,
            users: 2,
            items: 10,
            train_events: bundle.train.len(),
            validation_events: bundle.validation.len(),
            test_events: bundle.test.len(),
            child_users: 1,
            child_items: bundle.child_train.iter().map(|e| e.item).collect::<BTreeSet<_>>().len(),
            child_train_events: bundle.child_train.len(),
        };
        let tmp = tempfile::TempDir::new().unwrap();
        write_bundle(&log, &bundle, &manifest, tmp.path()).unwrap();
        let (loaded, loaded_manifest) = load_bundle(&log, tmp.path()).unwrap();
        assert_eq!(loaded, bundle);
        assert_eq!(loaded_manifest.train_events, manifest.train_events);
    }
}
