//! Core data types shared by all metric modules: the genre vocabulary,
//! probability distributions over genres, user/item/interaction records,
//! age groups, and the Jensen-Shannon divergence primitive.
//!
//! Everything here is immutable after construction. `jsd` and
//! `AgeGrouping::assign` are pure functions and safe to call from any
//! number of threads.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Youngest audited age, inclusive.
pub const MIN_AGE: u8 = 12;
/// Oldest audited age, inclusive.
pub const MAX_AGE: u8 = 65;

/// Tolerance for checking that a distribution sums to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Genre vocabulary and distributions
// ---------------------------------------------------------------------------

/// Fixed, ordered list of genre labels. Every [`GenreDistribution`] in a run
/// has exactly this dimensionality; the ordering never changes during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreVocabulary {
    names: Vec<String>,
}

impl GenreVocabulary {
    /// Builds a vocabulary from ordered labels. Labels must be unique and
    /// non-empty.
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::config("genre vocabulary is empty"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(Error::config("genre vocabulary contains an empty label"));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::config(format!(
                    "genre vocabulary contains duplicate label '{name}'"
                )));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }
}

/// A probability vector over the active genre vocabulary.
///
/// All entries are non-negative and sum to one within [`SUM_TOLERANCE`].
/// Profiles with no in-scope interactions never become distributions; the
/// constructors reject zero-mass input so "empty" is represented by absence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreDistribution {
    weights: Vec<f64>,
}

impl GenreDistribution {
    /// Validates an already-normalized weight vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::validation("genre distribution has zero dimension"));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "genre distribution has invalid entry {w}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::validation(format!(
                "genre distribution sums to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Normalizes a non-negative mass vector. Returns `None` when the total
    /// mass is zero, which callers treat as an absent profile.
    pub fn normalized(mut raw: Vec<f64>) -> Option<Self> {
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return None;
        }
        for w in &mut raw {
            *w /= sum;
        }
        Some(Self { weights: raw })
    }

    /// Equal weighting over the given genre indices: each of the `k` active
    /// genres gets mass `1/k`.
    pub fn equal_weights(active: &[usize], dim: usize) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::validation(
                "item has no assigned genre; it must be dropped at ingestion",
            ));
        }
        let mut weights = vec![0.0; dim];
        let share = 1.0 / active.len() as f64;
        for &g in active {
            if g >= dim {
                return Err(Error::config(format!(
                    "genre index {g} outside vocabulary of size {dim}"
                )));
            }
            if weights[g] != 0.0 {
                return Err(Error::validation(format!(
                    "genre index {g} listed twice for one item"
                )));
            }
            weights[g] = share;
        }
        Ok(Self { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices with positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
    }
}

// ---------------------------------------------------------------------------
// Jensen-Shannon divergence
// ---------------------------------------------------------------------------

/// Logarithm base for the Jensen-Shannon divergence. Base 2 bounds the
/// divergence to [0, 1]; base e bounds it to [0, ln 2].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum JsdBase {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl JsdBase {
    fn log(self, x: f64) -> f64 {
        match self {
            JsdBase::Two => x.log2(),
            JsdBase::E => x.ln(),
        }
    }

    /// Maximum attainable divergence under this base.
    pub fn max_value(self) -> f64 {
        match self {
            JsdBase::Two => 1.0,
            JsdBase::E => std::f64::consts::LN_2,
        }
    }
}

impl std::fmt::Display for JsdBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JsdBase::Two => write!(f, "2"),
            JsdBase::E => write!(f, "e"),
        }
    }
}

fn entropy(p: &[f64], base: JsdBase) -> f64 {
    // 0 * log 0 := 0
    p.iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * base.log(w))
        .sum()
}

/// Jensen-Shannon divergence between two distributions:
/// `H(m) - (H(p) + H(q)) / 2` with `m = (p + q) / 2`.
///
/// Symmetric, zero iff `p == q`, and bounded by [`JsdBase::max_value`].
pub fn jsd_with_base(p: &GenreDistribution, q: &GenreDistribution, base: JsdBase) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::config(format!(
            "distribution dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let m: Vec<f64> = p
        .weights
        .iter()
        .zip(&q.weights)
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    let div = entropy(&m, base) - 0.5 * (entropy(&p.weights, base) + entropy(&q.weights, base));
    // Floating-point noise can push the value a hair outside the closed range.
    Ok(div.clamp(0.0, base.max_value()))
}

/// [`jsd_with_base`] in bits (base 2), the toolkit default.
pub fn jsd(p: &GenreDistribution, q: &GenreDistribution) -> Result<f64> {
    jsd_with_base(p, q, JsdBase::Two)
}

// ---------------------------------------------------------------------------
// Age groups
// ---------------------------------------------------------------------------

/// Coarse age group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    Child,
    Mainstream,
    Nma,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Child, AgeGroup::Mainstream, AgeGroup::Nma];

    /// Single-letter tag used in significance annotations.
    pub fn letter(self) -> char {
        match self {
            AgeGroup::Child => 'c',
            AgeGroup::Mainstream => 'm',
            AgeGroup::Nma => 'n',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgeGroup::Child => "Children",
            AgeGroup::Mainstream => "Mainstream",
            AgeGroup::Nma => "NMA",
        }
    }

    pub fn from_name(name: &str) -> Option<AgeGroup> {
        AgeGroup::ALL.into_iter().find(|g| g.name() == name)
    }
}

impl std::fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Dataset-specific rule mapping an age in years to a coarse group, plus the
/// optional reference date used to attribute per-event ages on timestamped
/// logs (every user is assumed to turn their reported age on January 1 of the
/// reference year).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeGrouping {
    /// Inclusive upper age for the Child group.
    pub child_max: u8,
    /// Inclusive upper age for the Mainstream group.
    pub mainstream_max: u8,
    /// Reference date at which users hold their reported age.
    pub reference_date: Option<NaiveDate>,
}

impl AgeGrouping {
    pub fn new(child_max: u8, mainstream_max: u8, reference_date: Option<NaiveDate>) -> Result<Self> {
        if child_max >= mainstream_max {
            return Err(Error::config(format!(
                "child_max ({child_max}) must be below mainstream_max ({mainstream_max})"
            )));
        }
        Ok(Self {
            child_max,
            mainstream_max,
            reference_date,
        })
    }

    /// Assigns an age to its coarse group. Ages outside the audited range are
    /// a caller error; inputs must be pre-filtered.
    pub fn assign(&self, age: u8) -> Result<AgeGroup> {
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            return Err(Error::validation(format!(
                "age {age} outside the audited range {MIN_AGE}..={MAX_AGE}; filter inputs first"
            )));
        }
        Ok(if age <= self.child_max {
            AgeGroup::Child
        } else if age <= self.mainstream_max {
            AgeGroup::Mainstream
        } else {
            AgeGroup::Nma
        })
    }

    /// Birth-year proxy for a user who holds `reported_age` on the reference
    /// date. Requires a reference date.
    pub fn birth_year(&self, reported_age: u8) -> Option<i32> {
        self.reference_date
            .map(|d| d.year() - i32::from(reported_age))
    }

    /// Age a user with `reported_age` held during calendar year `year`.
    /// Negative results are possible for years before the proxy birth year.
    pub fn age_in_year(&self, reported_age: u8, year: i32) -> Option<i32> {
        self.birth_year(reported_age).map(|b| year - b)
    }
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// A cataloged user. The coarse group is fixed at construction from the
/// active grouping, so it can never drift from the age.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: String,
    /// Reported age in whole years, within [`MIN_AGE`]..=[`MAX_AGE`].
    pub age: u8,
    pub group: AgeGroup,
}

impl UserRecord {
    pub fn new(id: String, age: u8, grouping: &AgeGrouping) -> Result<Self> {
        let group = grouping.assign(age)?;
        Ok(Self { id, age, group })
    }

    /// Fine bucket label; one bucket per reported age year.
    pub fn fine_bucket(&self) -> u8 {
        self.age
    }
}

/// A cataloged item with its equal-weighted genre vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub genres: GenreDistribution,
}

/// One interaction event. `user` and `item` are dense indices into the
/// owning log's catalogs; `(user, item, timestamp)` identifies the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    /// Play or interaction count; 1 for unit-rating datasets.
    pub weight: u32,
    pub rating: Option<i32>,
    /// Epoch seconds.
    pub timestamp: Option<i64>,
}

impl Interaction {
    /// Calendar year of the event under UTC, if timestamped.
    pub fn year(&self) -> Option<i32> {
        self.timestamp
            .and_then(|ts| chrono::DateTime::from_timestamp(ts, 0))
            .map(|dt| dt.year())
    }

    /// Calendar date of the event under UTC, if timestamped.
    pub fn date(&self) -> Option<NaiveDate> {
        self.timestamp
            .and_then(|ts| chrono::DateTime::from_timestamp(ts, 0))
            .map(|dt| dt.date_naive())
    }
}
