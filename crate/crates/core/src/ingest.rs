//! Parsing of the supported log formats plus genre-annotation sidecars into
//! a validated [`InteractionLog`], applying the global user/item filters:
//! only users aged 12 to 65, no items without genre annotations, no events
//! referencing unknown users or items. Dropped rows are always counted in a
//! [`DropReport`]; silent filtering is prohibited so summaries stay
//! auditable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AgeGroup, AgeGrouping, GenreDistribution, GenreVocabulary, Interaction, ItemRecord, UserRecord,
};
use crate::error::{Error, Result};
use crate::rng::sub_rng;

// ---------------------------------------------------------------------------
// Formats
// ---------------------------------------------------------------------------

/// Input log layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogFormat {
    /// `user, item, rating[, timestamp]`; at most one event per (user, item),
    /// later rows overwrite earlier ones.
    RatingTable,
    /// `user, item, count[, timestamp]`; at most one event per (user, item),
    /// weight carries the aggregate count.
    ImplicitTable,
    /// `user, item, count, timestamp`; one row per listening event, repeats
    /// allowed, timestamp required.
    ListeningEvents,
}

impl LogFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            LogFormat::RatingTable => "rating-table",
            LogFormat::ImplicitTable => "implicit-table",
            LogFormat::ListeningEvents => "listening-events",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rating-table" => Ok(LogFormat::RatingTable),
            "implicit-table" => Ok(LogFormat::ImplicitTable),
            "listening-events" => Ok(LogFormat::ListeningEvents),
            other => Err(Error::config(format!("unknown log format '{other}'"))),
        }
    }
}

/// Field separator for the delimiter-separated inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Delimiter {
    #[serde(rename = "tab")]
    Tab,
    #[serde(rename = "comma")]
    Comma,
    /// The `::` separator used by the MovieLens .dat files.
    #[serde(rename = "double-colon")]
    DoubleColon,
}

impl Delimiter {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tab" | "\\t" | "\t" => Ok(Delimiter::Tab),
            "comma" | "," => Ok(Delimiter::Comma),
            "double-colon" | "::" => Ok(Delimiter::DoubleColon),
            other => Err(Error::config(format!("unknown delimiter '{other}'"))),
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Tab => line.split('\t').collect(),
            Delimiter::Comma => line.split(',').collect(),
            Delimiter::DoubleColon => line.split("::").collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Drop report
// ---------------------------------------------------------------------------

/// Counts of rows removed during ingestion, keyed by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    /// Rows that failed to parse.
    pub malformed_row: u64,
    /// User rows with a missing or non-integer age.
    pub invalid_age: u64,
    /// User rows with an age outside 12..=65.
    pub age_out_of_range: u64,
    /// Genre rows whose item resolved to zero vocabulary labels.
    pub item_without_genres: u64,
    /// Genre labels absent from the vocabulary (labels, not rows).
    pub unknown_genre_label: u64,
    /// Events whose user is not in the surviving user catalog.
    pub unknown_user: u64,
    /// Events whose item is not annotated (absent or label-less).
    pub unannotated_item: u64,
    /// Events discarded by the duplicate rule of the active format.
    pub duplicate_event: u64,
    /// Listening events without a timestamp.
    pub missing_timestamp: u64,
}

impl DropReport {
    pub fn total(&self) -> u64 {
        self.malformed_row
            + self.invalid_age
            + self.age_out_of_range
            + self.item_without_genres
            + self.unknown_genre_label
            + self.unknown_user
            + self.unannotated_item
            + self.duplicate_event
            + self.missing_timestamp
    }
}

// ---------------------------------------------------------------------------
// InteractionLog
// ---------------------------------------------------------------------------

/// The canonical event table plus user and item catalogs. Immutable after
/// construction; every event references a cataloged user and item, every
/// user is inside the audited age range, every item has at least one genre.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    users: Vec<UserRecord>,
    items: Vec<ItemRecord>,
    events: Vec<Interaction>,
    vocabulary: GenreVocabulary,
    grouping: AgeGrouping,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

/// Per-group percentage shares, recomputed from the catalogs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogSummary {
    pub users: usize,
    pub items: usize,
    pub events: usize,
    /// Share of users per coarse group, in percent.
    pub user_share: BTreeMap<String, f64>,
    /// Share of events per coarse group, in percent.
    pub event_share: BTreeMap<String, f64>,
}

impl InteractionLog {
    /// Assembles a log from parts, validating the cross-reference and
    /// range invariants. Unreferenced catalog entries are compacted away.
    pub fn from_parts(
        users: Vec<UserRecord>,
        items: Vec<ItemRecord>,
        events: Vec<Interaction>,
        vocabulary: GenreVocabulary,
        grouping: AgeGrouping,
    ) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::data("zero surviving events"));
        }
        for ev in &events {
            if ev.user as usize >= users.len() || ev.item as usize >= items.len() {
                return Err(Error::validation(
                    "event references an uncataloged user or item",
                ));
            }
            if ev.weight == 0 {
                return Err(Error::validation("event with zero weight"));
            }
        }
        for item in &items {
            if item.genres.dim() != vocabulary.len() {
                return Err(Error::config(format!(
                    "item '{}' genre vector has dimension {}, vocabulary has {}",
                    item.id,
                    item.genres.dim(),
                    vocabulary.len()
                )));
            }
        }
        let log = Self::compact(users, items, events, vocabulary, grouping);
        Ok(log)
    }

    /// Drops users/items with no events and reindexes.
    fn compact(
        users: Vec<UserRecord>,
        items: Vec<ItemRecord>,
        events: Vec<Interaction>,
        vocabulary: GenreVocabulary,
        grouping: AgeGrouping,
    ) -> Self {
        let mut user_used = vec![false; users.len()];
        let mut item_used = vec![false; items.len()];
        for ev in &events {
            user_used[ev.user as usize] = true;
            item_used[ev.item as usize] = true;
        }
        let mut user_map = vec![u32::MAX; users.len()];
        let mut item_map = vec![u32::MAX; items.len()];
        let mut kept_users = Vec::new();
        for (i, user) in users.into_iter().enumerate() {
            if user_used[i] {
                user_map[i] = kept_users.len() as u32;
                kept_users.push(user);
            }
        }
        let mut kept_items = Vec::new();
        for (i, item) in items.into_iter().enumerate() {
            if item_used[i] {
                item_map[i] = kept_items.len() as u32;
                kept_items.push(item);
            }
        }
        let events = events
            .into_iter()
            .map(|ev| Interaction {
                user: user_map[ev.user as usize],
                item: item_map[ev.item as usize],
                ..ev
            })
            .collect();
        let user_index = kept_users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.clone(), i as u32))
            .collect();
        let item_index = kept_items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.clone(), i as u32))
            .collect();
        Self {
            users: kept_users,
            items: kept_items,
            events,
            vocabulary,
            grouping,
            user_index,
            item_index,
        }
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn events(&self) -> &[Interaction] {
        &self.events
    }

    pub fn vocabulary(&self) -> &GenreVocabulary {
        &self.vocabulary
    }

    pub fn grouping(&self) -> &AgeGrouping {
        &self.grouping
    }

    pub fn user_id(&self, idx: u32) -> &str {
        &self.users[idx as usize].id
    }

    pub fn item_id(&self, idx: u32) -> &str {
        &self.items[idx as usize].id
    }

    pub fn user_index(&self, id: &str) -> Option<u32> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<u32> {
        self.item_index.get(id).copied()
    }

    /// True when any event carries a timestamp.
    pub fn has_timestamps(&self) -> bool {
        self.events.iter().any(|e| e.timestamp.is_some())
    }

    /// Summary counts and group shares, recomputed from the catalogs rather
    /// than trusted from any input.
    pub fn summary(&self) -> LogSummary {
        let mut user_counts: BTreeMap<AgeGroup, usize> = BTreeMap::new();
        for user in &self.users {
            *user_counts.entry(user.group).or_default() += 1;
        }
        let mut event_counts: BTreeMap<AgeGroup, usize> = BTreeMap::new();
        for ev in &self.events {
            let group = self.users[ev.user as usize].group;
            *event_counts.entry(group).or_default() += 1;
        }
        let pct = |count: usize, total: usize| 100.0 * count as f64 / total as f64;
        let user_share = AgeGroup::ALL
            .iter()
            .map(|g| {
                (
                    g.name().to_string(),
                    pct(user_counts.get(g).copied().unwrap_or(0), self.users.len()),
                )
            })
            .collect();
        let event_share = AgeGroup::ALL
            .iter()
            .map(|g| {
                (
                    g.name().to_string(),
                    pct(event_counts.get(g).copied().unwrap_or(0), self.events.len()),
                )
            })
            .collect();
        LogSummary {
            users: self.users.len(),
            items: self.items.len(),
            events: self.events.len(),
            user_share,
            event_share,
        }
    }

    /// Re-attributes every user's age to the age they held during `year`
    /// (per the grouping's reference date), recomputing groups. Users whose
    /// attributed age falls outside the audited range are dropped with
    /// their events. Used by temporal experiments so groups reflect ages
    /// during the study window rather than at data collection.
    pub fn with_ages_in_year(&self, year: i32) -> Result<Self> {
        if self.grouping.reference_date.is_none() {
            return Err(Error::config(
                "age re-attribution needs a grouping reference date",
            ));
        }
        let mut users = Vec::with_capacity(self.users.len());
        let mut keep = vec![false; self.users.len()];
        let mut index_map = vec![u32::MAX; self.users.len()];
        for (idx, user) in self.users.iter().enumerate() {
            let age = self.grouping.age_in_year(user.age, year).unwrap();
            if (i32::from(crate::domain::MIN_AGE)..=i32::from(crate::domain::MAX_AGE))
                .contains(&age)
            {
                keep[idx] = true;
                index_map[idx] = users.len() as u32;
                users.push(UserRecord::new(user.id.clone(), age as u8, &self.grouping)?);
            }
        }
        let events: Vec<Interaction> = self
            .events
            .iter()
            .filter(|e| keep[e.user as usize])
            .map(|e| Interaction {
                user: index_map[e.user as usize],
                ..*e
            })
            .collect();
        if events.is_empty() {
            return Err(Error::data(format!(
                "no users remain inside the audited age range in {year}"
            )));
        }
        Ok(Self::compact(
            users,
            self.items.clone(),
            events,
            self.vocabulary.clone(),
            self.grouping,
        ))
    }

    /// Restriction of the log to the given user indices; items without
    /// remaining events are compacted away.
    pub fn restrict_to_users(&self, keep: &HashSet<u32>) -> Result<Self> {
        let events: Vec<Interaction> = self
            .events
            .iter()
            .filter(|ev| keep.contains(&ev.user))
            .copied()
            .collect();
        if events.is_empty() {
            return Err(Error::data("user restriction leaves zero events"));
        }
        Ok(Self::compact(
            self.users.clone(),
            self.items.clone(),
            events,
            self.vocabulary.clone(),
            self.grouping,
        ))
    }

    /// Replaces the event set, compacting catalogs. Used by the
    /// preprocessing filters.
    pub fn with_events(&self, events: Vec<Interaction>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::data("filter leaves zero events"));
        }
        Ok(Self::compact(
            self.users.clone(),
            self.items.clone(),
            events,
            self.vocabulary.clone(),
            self.grouping,
        ))
    }
}

// ---------------------------------------------------------------------------
// File readers
// ---------------------------------------------------------------------------

fn data_lines(path: &Path, has_header: bool) -> Result<impl Iterator<Item = Result<String>>> {
    let file = File::open(path).map_err(|e| {
        Error::data(format!("cannot open {}: {e}", path.display()))
    })?;
    let reader = BufReader::new(file);
    let mut skipped_header = !has_header;
    Ok(reader.lines().filter_map(move |line| match line {
        Err(e) => Some(Err(Error::Io(e))),
        Ok(l) => {
            let trimmed = l.trim_end_matches(['\r', '\n']);
            if trimmed.is_empty() || trimmed.starts_with('#') {
                None
            } else if !skipped_header {
                skipped_header = true;
                None
            } else {
                Some(Ok(trimmed.to_string()))
            }
        }
    }))
}

/// Reads a vocabulary file: one label per line, order-defining.
pub fn read_vocabulary(path: &Path) -> Result<GenreVocabulary> {
    let mut names = Vec::new();
    for line in data_lines(path, false)? {
        names.push(line?.trim().to_string());
    }
    GenreVocabulary::new(names)
}

/// Options controlling [`load_log`].
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: LogFormat,
    pub delimiter: Delimiter,
    /// First non-comment line of each data file is a column header.
    pub has_header: bool,
    /// Abort on the first malformed row instead of counting and skipping it.
    pub strict: bool,
}

/// Parses the three input files into a validated log.
///
/// Rows referencing unknown users/items, users with missing or out-of-range
/// ages, and unannotated items are dropped and counted.
pub fn load_log(
    events_path: &Path,
    users_path: &Path,
    genres_path: &Path,
    options: LoadOptions,
    grouping: AgeGrouping,
    vocabulary: GenreVocabulary,
) -> Result<(InteractionLog, DropReport)> {
    let mut drops = DropReport::default();

    // Users: `user_id, age`, extra columns ignored.
    let mut users: Vec<UserRecord> = Vec::new();
    let mut user_index: HashMap<String, u32> = HashMap::new();
    for line in data_lines(users_path, options.has_header)? {
        let line = line?;
        let fields = options.delimiter.split(&line);
        if fields.len() < 2 || fields[0].is_empty() {
            if options.strict {
                return Err(Error::data(format!("malformed user row: '{line}'")));
            }
            drops.malformed_row += 1;
            continue;
        }
        let age: i64 = match fields[1].trim().parse() {
            Ok(a) => a,
            Err(_) => {
                if options.strict {
                    return Err(Error::data(format!("invalid age in user row: '{line}'")));
                }
                drops.invalid_age += 1;
                continue;
            }
        };
        if !(crate::domain::MIN_AGE as i64..=crate::domain::MAX_AGE as i64).contains(&age) {
            drops.age_out_of_range += 1;
            continue;
        }
        let id = fields[0].to_string();
        match user_index.get(&id) {
            // Duplicate user rows: last occurrence wins.
            Some(&idx) => users[idx as usize] = UserRecord::new(id, age as u8, &grouping)?,
            None => {
                user_index.insert(id.clone(), users.len() as u32);
                users.push(UserRecord::new(id, age as u8, &grouping)?);
            }
        }
    }

    // Genres: `item_id, ..., genre_1|genre_2|...` (labels in the last field).
    let mut items: Vec<ItemRecord> = Vec::new();
    let mut item_index: HashMap<String, u32> = HashMap::new();
    for line in data_lines(genres_path, options.has_header)? {
        let line = line?;
        let fields = options.delimiter.split(&line);
        if fields.len() < 2 || fields[0].is_empty() {
            if options.strict {
                return Err(Error::data(format!("malformed genre row: '{line}'")));
            }
            drops.malformed_row += 1;
            continue;
        }
        let labels = fields[fields.len() - 1];
        let mut genre_indices: Vec<usize> = Vec::new();
        for label in labels.split('|') {
            let label = label.trim();
            if label.is_empty() {
                continue;
            }
            match vocabulary.index_of(label) {
                Some(g) if !genre_indices.contains(&g) => genre_indices.push(g),
                Some(_) => {}
                None => drops.unknown_genre_label += 1,
            }
        }
        if genre_indices.is_empty() {
            drops.item_without_genres += 1;
            continue;
        }
        let id = fields[0].to_string();
        let genres = GenreDistribution::equal_weights(&genre_indices, vocabulary.len())?;
        match item_index.get(&id) {
            Some(&idx) => items[idx as usize] = ItemRecord { id, genres },
            None => {
                item_index.insert(id.clone(), items.len() as u32);
                items.push(ItemRecord { id, genres });
            }
        }
    }

    // Events.
    let mut events: Vec<Interaction> = Vec::new();
    let mut pair_index: HashMap<(u32, u32), usize> = HashMap::new();
    let mut triple_seen: HashSet<(u32, u32, i64)> = HashSet::new();
    for line in data_lines(events_path, options.has_header)? {
        let line = line?;
        let fields = options.delimiter.split(&line);
        if fields.len() < 3 {
            if options.strict {
                return Err(Error::data(format!("malformed event row: '{line}'")));
            }
            drops.malformed_row += 1;
            continue;
        }
        let timestamp: Option<i64> = if fields.len() >= 4 && !fields[3].trim().is_empty() {
            match fields[3].trim().parse() {
                Ok(t) => Some(t),
                Err(_) => {
                    if options.strict {
                        return Err(Error::data(format!("invalid timestamp: '{line}'")));
                    }
                    drops.malformed_row += 1;
                    continue;
                }
            }
        } else {
            None
        };
        let (weight, rating) = match options.format {
            LogFormat::RatingTable => match fields[2].trim().parse::<i32>() {
                Ok(r) => (1u32, Some(r)),
                Err(_) => {
                    if options.strict {
                        return Err(Error::data(format!("invalid rating: '{line}'")));
                    }
                    drops.malformed_row += 1;
                    continue;
                }
            },
            LogFormat::ImplicitTable | LogFormat::ListeningEvents => {
                match fields[2].trim().parse::<u32>() {
                    Ok(c) if c >= 1 => (c, None),
                    _ => {
                        if options.strict {
                            return Err(Error::data(format!("invalid count: '{line}'")));
                        }
                        drops.malformed_row += 1;
                        continue;
                    }
                }
            }
        };
        if options.format == LogFormat::ListeningEvents && timestamp.is_none() {
            if options.strict {
                return Err(Error::data(format!(
                    "listening event without timestamp: '{line}'"
                )));
            }
            drops.missing_timestamp += 1;
            continue;
        }
        let user = match user_index.get(fields[0]) {
            Some(&u) => u,
            None => {
                drops.unknown_user += 1;
                continue;
            }
        };
        let item = match item_index.get(fields[1]) {
            Some(&i) => i,
            None => {
                drops.unannotated_item += 1;
                continue;
            }
        };
        let event = Interaction {
            user,
            item,
            weight,
            rating,
            timestamp,
        };
        match options.format {
            LogFormat::ListeningEvents => {
                // (user, item, timestamp) identifies the event.
                if !triple_seen.insert((user, item, timestamp.unwrap_or(0))) {
                    drops.duplicate_event += 1;
                    continue;
                }
                events.push(event);
            }
            LogFormat::RatingTable | LogFormat::ImplicitTable => {
                // Last occurrence wins, mirroring rating-update semantics.
                match pair_index.get(&(user, item)) {
                    Some(&pos) => {
                        drops.duplicate_event += 1;
                        events[pos] = event;
                    }
                    None => {
                        pair_index.insert((user, item), events.len());
                        events.push(event);
                    }
                }
            }
        }
    }

    let log = InteractionLog::from_parts(users, items, events, vocabulary, grouping)?;
    Ok((log, drops))
}

// ---------------------------------------------------------------------------
// Canonical output
// ---------------------------------------------------------------------------

/// Keys stored next to the canonical files so a directory can be re-ingested
/// without outside knowledge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalSummary {
    /// Free-form annotations, e.g. the run-manifest hash.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub format: LogFormat,
    pub child_max: u8,
    pub mainstream_max: u8,
    pub reference_date: Option<NaiveDate>,
    #[serde(flatten)]
    pub counts: LogSummary,
    pub drops: DropReport,
}

/// Writes the canonical log layout: `events.tsv`, `users.tsv`, `genres.tsv`,
/// `vocabulary.txt`, and `summary.json`.
pub fn write_canonical(
    log: &InteractionLog,
    drops: &DropReport,
    format: LogFormat,
    dir: &Path,
    metadata: &[(String, String)],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta_block = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        Ok(())
    };

    let mut out = BufWriter::new(File::create(dir.join("events.tsv"))?);
    meta_block(&mut out)?;
    for ev in log.events() {
        let third = match format {
            LogFormat::RatingTable => ev.rating.unwrap_or(1).to_string(),
            _ => ev.weight.to_string(),
        };
        match ev.timestamp {
            Some(ts) => writeln!(
                out,
                "{}\t{}\t{}\t{}",
                log.user_id(ev.user),
                log.item_id(ev.item),
                third,
                ts
            )?,
            None => writeln!(
                out,
                "{}\t{}\t{}",
                log.user_id(ev.user),
                log.item_id(ev.item),
                third
            )?,
        }
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(dir.join("users.tsv"))?);
    meta_block(&mut out)?;
    for user in log.users() {
        writeln!(out, "{}\t{}", user.id, user.age)?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(dir.join("genres.tsv"))?);
    meta_block(&mut out)?;
    for item in log.items() {
        let labels: Vec<&str> = item
            .genres
            .support()
            .map(|g| log.vocabulary().label(g))
            .collect();
        writeln!(out, "{}\t{}", item.id, labels.join("|"))?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(dir.join("vocabulary.txt"))?);
    meta_block(&mut out)?;
    for name in log.vocabulary().names() {
        writeln!(out, "{name}")?;
    }
    out.flush()?;

    let summary = CanonicalSummary {
        metadata: metadata.iter().cloned().collect(),
        format,
        child_max: log.grouping().child_max,
        mainstream_max: log.grouping().mainstream_max,
        reference_date: log.grouping().reference_date,
        counts: log.summary(),
        drops: drops.clone(),
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::data(format!("cannot serialize summary: {e}")))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

/// Re-ingests a canonical directory written by [`write_canonical`].
pub fn load_canonical(dir: &Path) -> Result<(InteractionLog, DropReport)> {
    let summary_raw = std::fs::read_to_string(dir.join("summary.json"))
        .map_err(|e| Error::data(format!("cannot read {}/summary.json: {e}", dir.display())))?;
    let summary: CanonicalSummary = serde_json::from_str(&summary_raw)
        .map_err(|e| Error::data(format!("cannot parse summary.json: {e}")))?;
    let grouping = AgeGrouping::new(
        summary.child_max,
        summary.mainstream_max,
        summary.reference_date,
    )?;
    let vocabulary = read_vocabulary(&dir.join("vocabulary.txt"))?;
    load_log(
        &dir.join("events.tsv"),
        &dir.join("users.tsv"),
        &dir.join("genres.tsv"),
        LoadOptions {
            format: summary.format,
            delimiter: Delimiter::Tab,
            has_header: false,
            strict: true,
        },
        grouping,
        vocabulary,
    )
}

// ---------------------------------------------------------------------------
// User sampling
// ---------------------------------------------------------------------------

/// Controls for [`sample_users`].
#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    pub n: usize,
    pub seed: u64,
    /// Preserve the pre-sample per-age user proportions.
    pub stratify_by_age: bool,
    /// Exclude users whose event count exceeds mean + sigma * stddev
    /// (population standard deviation over the eligible pool).
    pub activity_cap_sigma: Option<f64>,
    /// Keep only users whose first event is on or before `.0` and whose last
    /// event is on or after `.1`.
    pub activity_window: Option<(NaiveDate, NaiveDate)>,
}

/// Deterministically samples `n` users, optionally stratified by age and
/// restricted by activity window and activity cap.
pub fn sample_users(log: &InteractionLog, options: &SampleOptions) -> Result<InteractionLog> {
    let n_users = log.users().len();
    let mut counts = vec![0u64; n_users];
    let mut first_date: Vec<Option<NaiveDate>> = vec![None; n_users];
    let mut last_date: Vec<Option<NaiveDate>> = vec![None; n_users];
    for ev in log.events() {
        counts[ev.user as usize] += 1;
        if let Some(date) = ev.date() {
            let u = ev.user as usize;
            first_date[u] = Some(first_date[u].map_or(date, |d| d.min(date)));
            last_date[u] = Some(last_date[u].map_or(date, |d| d.max(date)));
        }
    }

    let mut eligible: Vec<u32> = (0..n_users as u32).collect();
    if let Some((first_before, last_after)) = options.activity_window {
        if !log.has_timestamps() {
            return Err(Error::config(
                "activity window requires a timestamped log",
            ));
        }
        eligible.retain(|&u| {
            matches!(
                (first_date[u as usize], last_date[u as usize]),
                (Some(first), Some(last)) if first <= first_before && last >= last_after
            )
        });
    }

    if let Some(sigma) = options.activity_cap_sigma {
        let pool: Vec<f64> = eligible.iter().map(|&u| counts[u as usize] as f64).collect();
        if !pool.is_empty() {
            let mean = pool.iter().sum::<f64>() / pool.len() as f64;
            let var = pool.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / pool.len() as f64;
            let threshold = mean + sigma * var.sqrt();
            eligible.retain(|&u| (counts[u as usize] as f64) <= threshold);
        }
    }

    if options.n > eligible.len() {
        return Err(Error::data(format!(
            "requested {} users but only {} are eligible",
            options.n,
            eligible.len()
        )));
    }

    let chosen: HashSet<u32> = if options.stratify_by_age {
        // Largest-remainder allocation per age keeps every age within one
        // user of its proportional share.
        let mut strata: BTreeMap<u8, Vec<u32>> = BTreeMap::new();
        for &u in &eligible {
            strata.entry(log.users()[u as usize].age).or_default().push(u);
        }
        let total = eligible.len() as f64;
        let mut picked: Vec<u32> = Vec::with_capacity(options.n);
        let mut remainders: Vec<(f64, u8)> = Vec::new();
        let mut allocated: BTreeMap<u8, usize> = BTreeMap::new();
        let mut used = 0usize;
        for (&age, members) in &strata {
            let exact = options.n as f64 * members.len() as f64 / total;
            let base = exact.floor() as usize;
            allocated.insert(age, base);
            used += base;
            remainders.push((exact - base as f64, age));
        }
        // Distribute leftovers by descending fractional remainder, ties by age.
        remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for (frac, age) in remainders {
            if used >= options.n {
                break;
            }
            if frac > 0.0 {
                *allocated.get_mut(&age).unwrap() += 1;
                used += 1;
            }
        }
        for (&age, members) in &strata {
            let take = allocated[&age];
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut sub_rng(options.seed, u64::from(age)));
            picked.extend(shuffled.into_iter().take(take));
        }
        picked.into_iter().collect()
    } else {
        let mut shuffled = eligible.clone();
        shuffled.shuffle(&mut sub_rng(options.seed, 0));
        shuffled.into_iter().take(options.n).collect()
    };

    log.restrict_to_users(&chosen)
}
