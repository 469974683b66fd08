//! User and age-group genre profiles, the deviation metrics built on them,
//! and the popularity-extension statistics.
//!
//! A user genre profile (UGP) is the repeat-weighted mean genre distribution
//! of the items a user consumed. An age genre profile (AGP) averages the
//! UGPs of a bucket's members, each user counting once regardless of
//! activity. In-group deviation (IGD) is the mean divergence between an AGP
//! and its members; age preference deviation (APD) is the divergence between
//! two AGPs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{jsd_with_base, AgeGroup, GenreDistribution, JsdBase, MAX_AGE, MIN_AGE};
use crate::error::{Error, Result};
use crate::ingest::InteractionLog;

/// Per-user (or per user-year) genre distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGenreProfile {
    pub user: u32,
    /// Year label for yearly profiles on timestamped logs.
    pub year: Option<i32>,
    /// Age the profile is attributed to.
    pub age: u8,
    pub group: AgeGroup,
    pub distribution: GenreDistribution,
    pub event_count: u64,
}

/// Bucket key for age-group aggregation: either a coarse group or a single
/// age year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    Group(AgeGroup),
    Age(u8),
}

impl std::fmt::Display for Bucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bucket::Group(g) => write!(f, "{g}"),
            Bucket::Age(a) => write!(f, "{a}"),
        }
    }
}

/// Mean genre consumption of the users in one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeGenreProfile {
    pub bucket: Bucket,
    pub distribution: GenreDistribution,
    pub member_count: usize,
}

/// Builds the genre profile of one user. `period` restricts to the events of
/// one calendar year and attributes the profile to the age the user held
/// that year. Returns `None` when the user has no in-scope events (or, for
/// yearly profiles, when the attributed age falls outside the audited
/// range); absent profiles are excluded from aggregation rather than
/// imputed.
pub fn build_ugp(log: &InteractionLog, user: u32, period: Option<i32>) -> Option<UserGenreProfile> {
    let record = &log.users()[user as usize];
    let (age, group) = match period {
        None => (record.age, record.group),
        Some(year) => {
            let age = log.grouping().age_in_year(record.age, year)?;
            if !(i32::from(MIN_AGE)..=i32::from(MAX_AGE)).contains(&age) {
                return None;
            }
            let age = age as u8;
            (age, log.grouping().assign(age).ok()?)
        }
    };
    let mut mass = vec![0.0f64; log.vocabulary().len()];
    let mut event_count = 0u64;
    for ev in log.events() {
        if ev.user != user {
            continue;
        }
        if let Some(year) = period {
            if ev.year() != Some(year) {
                continue;
            }
        }
        let w = f64::from(ev.weight);
        for (slot, &g) in mass.iter_mut().zip(log.items()[ev.item as usize].genres.weights()) {
            *slot += w * g;
        }
        event_count += 1;
    }
    let distribution = GenreDistribution::normalized(mass)?;
    Some(UserGenreProfile {
        user,
        year: period,
        age,
        group,
        distribution,
        event_count,
    })
}

/// Builds every profile for the exploration: one profile per user on
/// unit-age logs, one per (user, year) when the grouping carries a reference
/// date and the log is timestamped.
pub fn build_profiles(log: &InteractionLog) -> Result<Vec<UserGenreProfile>> {
    let yearly = log.grouping().reference_date.is_some();
    if yearly && !log.has_timestamps() {
        return Err(Error::config(
            "grouping has a reference date but the log carries no timestamps",
        ));
    }

    // Single pass: accumulate mass per (user, period) key.
    let n_genres = log.vocabulary().len();
    let mut acc: BTreeMap<(u32, Option<i32>), (Vec<f64>, u64)> = BTreeMap::new();
    for ev in log.events() {
        let period = if yearly {
            match ev.year() {
                Some(y) => Some(y),
                None => continue,
            }
        } else {
            None
        };
        let entry = acc
            .entry((ev.user, period))
            .or_insert_with(|| (vec![0.0; n_genres], 0));
        let w = f64::from(ev.weight);
        for (slot, &g) in entry.0.iter_mut().zip(log.items()[ev.item as usize].genres.weights()) {
            *slot += w * g;
        }
        entry.1 += 1;
    }

    let mut profiles = Vec::with_capacity(acc.len());
    for ((user, period), (mass, event_count)) in acc {
        let record = &log.users()[user as usize];
        let (age, group) = match period {
            None => (record.age, record.group),
            Some(year) => {
                let age = match log.grouping().age_in_year(record.age, year) {
                    Some(a) if (i32::from(MIN_AGE)..=i32::from(MAX_AGE)).contains(&a) => a as u8,
                    _ => continue,
                };
                (age, log.grouping().assign(age)?)
            }
        };
        if let Some(distribution) = GenreDistribution::normalized(mass) {
            profiles.push(UserGenreProfile {
                user,
                year: period,
                age,
                group,
                distribution,
                event_count,
            });
        }
    }
    Ok(profiles)
}

/// Averages member UGPs into an AGP; each profile counts once. Returns
/// `None` for an empty bucket.
pub fn build_agp(members: &[&UserGenreProfile], bucket: Bucket) -> Option<AgeGenreProfile> {
    if members.is_empty() {
        return None;
    }
    let dim = members[0].distribution.dim();
    let mut mean = vec![0.0f64; dim];
    for ugp in members {
        for (slot, &w) in mean.iter_mut().zip(ugp.distribution.weights()) {
            *slot += w;
        }
    }
    let distribution = GenreDistribution::normalized(mean)?;
    Some(AgeGenreProfile {
        bucket,
        distribution,
        member_count: members.len(),
    })
}

/// Bucket membership map: every profile lands in its coarse-group bucket
/// and its age bucket.
pub fn profiles_by_bucket(
    profiles: &[UserGenreProfile],
) -> BTreeMap<Bucket, Vec<&UserGenreProfile>> {
    let mut by_bucket: BTreeMap<Bucket, Vec<&UserGenreProfile>> = BTreeMap::new();
    for p in profiles {
        by_bucket.entry(Bucket::Group(p.group)).or_default().push(p);
        by_bucket.entry(Bucket::Age(p.age)).or_default().push(p);
    }
    by_bucket
}

/// Groups profiles into coarse-group and per-age AGPs.
pub fn build_all_agps(profiles: &[UserGenreProfile]) -> Vec<AgeGenreProfile> {
    profiles_by_bucket(profiles)
        .into_iter()
        .filter_map(|(bucket, members)| build_agp(&members, bucket))
        .collect()
}

/// In-group deviation: mean divergence between the AGP and each member UGP.
/// The members must be exactly the AGP's constituents.
pub fn igd(agp: &AgeGenreProfile, members: &[&UserGenreProfile], base: JsdBase) -> Result<f64> {
    if members.len() != agp.member_count {
        return Err(Error::validation(format!(
            "AGP has {} members but {} profiles were supplied",
            agp.member_count,
            members.len()
        )));
    }
    let rebuilt = build_agp(members, agp.bucket)
        .ok_or_else(|| Error::validation("empty member list for IGD"))?;
    let drift = rebuilt
        .distribution
        .weights()
        .iter()
        .zip(agp.distribution.weights())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if drift > 1e-6 {
        return Err(Error::validation(
            "member profiles do not reproduce the AGP distribution",
        ));
    }
    let mut total = 0.0;
    for ugp in members {
        total += jsd_with_base(&agp.distribution, &ugp.distribution, base)?;
    }
    Ok(total / members.len() as f64)
}

/// Age preference deviation: divergence between two AGPs.
pub fn apd(a: &AgeGenreProfile, b: &AgeGenreProfile, base: JsdBase) -> Result<f64> {
    jsd_with_base(&a.distribution, &b.distribution, base)
}

// ---------------------------------------------------------------------------
// Popularity extension
// ---------------------------------------------------------------------------

/// Per-user popularity statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityProfile {
    pub user: u32,
    pub group: AgeGroup,
    /// Total consumptions, counting repeats.
    pub n_interactions: u64,
    /// Distinct items in the profile.
    pub profile_size: usize,
    /// Mean overall popularity of the profile's items, in (0, 1].
    pub profile_popularity: f64,
    /// Mean same-group popularity of the profile's items, in (0, 1].
    pub profile_age_popularity: f64,
}

/// Item popularity: distinct-user interaction counts normalized by the most
/// interacted-with item.
pub fn item_popularity(log: &InteractionLog) -> Vec<f64> {
    let mut pairs: Vec<(u32, u32)> = log.events().iter().map(|e| (e.item, e.user)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut counts = vec![0u64; log.items().len()];
    for (item, _) in &pairs {
        counts[*item as usize] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    counts.into_iter().map(|c| c as f64 / max).collect()
}

/// Computes the popularity extension for every user: interaction count,
/// profile size, overall profile popularity, and same-group profile
/// popularity. Popularity averages run over distinct profile items; each
/// user is scored against their own group's popularity table.
pub fn popularity_profiles(log: &InteractionLog) -> Vec<PopularityProfile> {
    let n_items = log.items().len();
    let mut pairs: Vec<(u32, u32)> = log.events().iter().map(|e| (e.user, e.item)).collect();
    pairs.sort_unstable();
    pairs.dedup();

    // Distinct-user counts per item, overall and per coarse group.
    let mut global_counts = vec![0u64; n_items];
    let mut group_counts: BTreeMap<AgeGroup, Vec<u64>> = AgeGroup::ALL
        .iter()
        .map(|&g| (g, vec![0u64; n_items]))
        .collect();
    for &(user, item) in &pairs {
        global_counts[item as usize] += 1;
        let group = log.users()[user as usize].group;
        group_counts.get_mut(&group).unwrap()[item as usize] += 1;
    }
    let global_max = global_counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let group_max: BTreeMap<AgeGroup, f64> = group_counts
        .iter()
        .map(|(&g, counts)| (g, counts.iter().copied().max().unwrap_or(1).max(1) as f64))
        .collect();

    let mut interaction_counts = vec![0u64; log.users().len()];
    for ev in log.events() {
        interaction_counts[ev.user as usize] += u64::from(ev.weight);
    }

    let mut profiles = Vec::with_capacity(log.users().len());
    let mut i = 0;
    while i < pairs.len() {
        let user = pairs[i].0;
        let mut j = i;
        let mut pop_sum = 0.0;
        let mut age_pop_sum = 0.0;
        let group = log.users()[user as usize].group;
        let group_counts = &group_counts[&group];
        let group_max = group_max[&group];
        while j < pairs.len() && pairs[j].0 == user {
            let item = pairs[j].1 as usize;
            pop_sum += global_counts[item] as f64 / global_max;
            age_pop_sum += group_counts[item] as f64 / group_max;
            j += 1;
        }
        let size = j - i;
        profiles.push(PopularityProfile {
            user,
            group,
            n_interactions: interaction_counts[user as usize],
            profile_size: size,
            profile_popularity: pop_sum / size as f64,
            profile_age_popularity: age_pop_sum / size as f64,
        });
        i = j;
    }
    profiles
}

/// Per-genre samples of UGP shares, grouped by coarse group in
/// [`AgeGroup::ALL`] order: one observation per profile per genre.
pub fn genre_share_samples(
    profiles: &[UserGenreProfile],
    n_genres: usize,
) -> Vec<[Vec<f64>; 3]> {
    let mut samples: Vec<[Vec<f64>; 3]> =
        (0..n_genres).map(|_| [Vec::new(), Vec::new(), Vec::new()]).collect();
    for p in profiles {
        let slot = AgeGroup::ALL.iter().position(|&g| g == p.group).unwrap();
        for (g, &w) in p.distribution.weights().iter().enumerate() {
            samples[g][slot].push(w);
        }
    }
    samples
}
