//! Time-chunk tag spaces.
//!
//! A tag space maps timestamps (integral UTC seconds) onto the leaves of an identity tree. Two
//! layouts exist: the calendar layout `(year, month, day, chunk)` with fixed 31-day months, and
//! uniform layouts with the same branching factor `B` at each of `L` levels. Optional policy
//! levels may follow the time levels; time containment only ever looks at the time levels.
//!
//! Tag components are 1-based. Leaf indices are 0-based positions in the lexicographic order of
//! the full time-leaf grid (including unused calendar dates such as February 30).

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hibs::IdentityTuple;

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TagError {
    #[error("timestamp {0} lies outside the tag space span")]
    OutOfSpan(i64),
    #[error("tag has {got} components but the space allows at most {max}")]
    TooDeep { got: usize, max: usize },
    #[error("tag is empty")]
    Empty,
    #[error("component {index} = {value} outside 1..={max}")]
    ComponentRange { index: usize, value: u32, max: u32 },
    #[error("leaf index {index} outside 0..{count}")]
    LeafIndex { index: u64, count: u64 },
    #[error("cannot parse tag {0:?}")]
    Parse(String),
    #[error("invalid tag space: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub name: String,
    pub cardinality: u32,
}

impl LevelSpec {
    pub fn new(name: &str, cardinality: u32) -> Self {
        LevelSpec {
            name: name.to_string(),
            cardinality,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Calendar { years: u32, chunks_per_day: u32 },
    Uniform { branching: u32, depth: u32 },
}

/// A tag: a tuple of 1-based components naming a leaf or an internal node.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(Vec<u32>);

impl Tag {
    pub fn new(components: Vec<u32>) -> Self {
        Tag(components)
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, len: usize) -> Tag {
        Tag(self.0[..len.min(self.0.len())].to_vec())
    }

    pub fn is_prefix_of(&self, other: &Tag) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn parent(&self) -> Option<Tag> {
        (self.0.len() > 1).then(|| self.prefix(self.0.len() - 1))
    }

    pub fn child(&self, c: u32) -> Tag {
        let mut v = self.0.clone();
        v.push(c);
        Tag(v)
    }

    /// HIBS identity: each component as its decimal ASCII string.
    pub fn to_identity(&self) -> IdentityTuple {
        IdentityTuple::new(self.0.iter().map(|c| c.to_string().into_bytes()))
            .expect("decimal components are non-empty")
    }

    pub fn from_identity(id: &IdentityTuple) -> Result<Tag, TagError> {
        id.components()
            .iter()
            .map(|c| {
                std::str::from_utf8(c)
                    .ok()
                    .filter(|s| !s.starts_with('0') && !s.starts_with('+'))
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| TagError::Parse(String::from_utf8_lossy(c).into_owned()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Tag)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({self})")
    }
}

impl FromStr for Tag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(TagError::Empty);
        }
        s.split('/')
            .map(|p| {
                if p.is_empty() || p.len() > 10 || !p.bytes().all(|b| b.is_ascii_digit()) || p.starts_with('0') {
                    return Err(TagError::Parse(s.to_string()));
                }
                p.parse::<u32>().map_err(|_| TagError::Parse(s.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Tag)
    }
}

/// Declarative form of a tag space, as read from a config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagSpaceConfig {
    /// `"calendar"` or `"uniform"`.
    pub layout: String,
    /// RFC 3339 start of the span; calendar layouts must start at midnight on 1 January.
    pub epoch_start: String,
    #[serde(default = "default_span_days")]
    pub span_days: u32,
    /// Number of time levels for uniform layouts.
    #[serde(default)]
    pub depth: Option<u32>,
    #[serde(default = "default_chunk_minutes")]
    pub chunk_minutes: u32,
    /// Calendar layouts only; defaults to 24h / chunk_minutes.
    #[serde(default)]
    pub chunks_per_day: Option<u32>,
    #[serde(default)]
    pub policy_levels: Vec<LevelSpec>,
}

fn default_span_days() -> u32 {
    730
}

fn default_chunk_minutes() -> u32 {
    15
}

impl TagSpaceConfig {
    pub fn build(&self) -> Result<TagSpace, TagError> {
        let start = chrono::DateTime::parse_from_rfc3339(&self.epoch_start)
            .map_err(|e| TagError::Config(format!("epoch_start: {e}")))?
            .timestamp();
        let space = match self.layout.as_str() {
            "calendar" => {
                if !self.span_days.is_multiple_of(365) && !self.span_days.is_multiple_of(366) {
                    return Err(TagError::Config("calendar span must be whole years".into()));
                }
                let years = (self.span_days / 365).max(1);
                let cpd = self
                    .chunks_per_day
                    .unwrap_or(24 * 60 / self.chunk_minutes.max(1));
                TagSpace::calendar(start, years, cpd)?
            }
            "uniform" => {
                let depth = self
                    .depth
                    .ok_or_else(|| TagError::Config("uniform layout needs depth".into()))?;
                let chunk = i64::from(self.chunk_minutes) * 60;
                if chunk == 0 || (SECONDS_PER_DAY % chunk) != 0 {
                    return Err(TagError::Config("chunk_minutes must divide a day".into()));
                }
                let leaves = u64::from(self.span_days) * (SECONDS_PER_DAY / chunk) as u64;
                TagSpace::uniform(start, chunk, leaves, depth)?
            }
            other => return Err(TagError::Config(format!("unknown layout {other:?}"))),
        };
        space.with_policy_levels(self.policy_levels.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSpace {
    layout: Layout,
    time_levels: Vec<LevelSpec>,
    policy_levels: Vec<LevelSpec>,
    epoch_start: i64,
    span_end: i64,
    /// Seconds per leaf for uniform layouts; nominal (rounded down) for calendar layouts.
    chunk_duration: i64,
}

impl TagSpace {
    /// `(year, month, day, chunk)` with `years` years starting at `epoch_start` (which must be
    /// midnight UTC on 1 January).
    pub fn calendar(epoch_start: i64, years: u32, chunks_per_day: u32) -> Result<Self, TagError> {
        if years == 0 || chunks_per_day == 0 || chunks_per_day > SECONDS_PER_DAY as u32 {
            return Err(TagError::Config("calendar needs years ≥ 1 and 1 ≤ chunks ≤ 86400".into()));
        }
        let start = Utc
            .timestamp_opt(epoch_start, 0)
            .single()
            .ok_or_else(|| TagError::Config("bad epoch".into()))?;
        if start.ordinal() != 1 || epoch_start.rem_euclid(SECONDS_PER_DAY) != 0 {
            return Err(TagError::Config("calendar epoch must be 1 January 00:00 UTC".into()));
        }
        let end_year = start.year() + years as i32;
        let span_end = NaiveDate::from_ymd_opt(end_year, 1, 1)
            .ok_or_else(|| TagError::Config("span too large".into()))?
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
            .timestamp();
        Ok(TagSpace {
            layout: Layout::Calendar {
                years,
                chunks_per_day,
            },
            time_levels: vec![
                LevelSpec::new("year", years),
                LevelSpec::new("month", 12),
                LevelSpec::new("day", 31),
                LevelSpec::new("chunk", chunks_per_day),
            ],
            policy_levels: Vec::new(),
            epoch_start,
            span_end,
            chunk_duration: SECONDS_PER_DAY / i64::from(chunks_per_day),
        })
    }

    /// Equal branching at every level, sized by [`uniform_branching`]; the span covers exactly
    /// `leaf_target` chunks even though the tree has `B^L ≥ leaf_target` leaves.
    pub fn uniform(
        epoch_start: i64,
        chunk_duration: i64,
        leaf_target: u64,
        depth: u32,
    ) -> Result<Self, TagError> {
        if depth == 0 || leaf_target == 0 || chunk_duration <= 0 {
            return Err(TagError::Config("uniform layout needs depth, leaves and chunk > 0".into()));
        }
        let branching = uniform_branching(leaf_target, depth);
        let span = i64::try_from(leaf_target)
            .ok()
            .and_then(|n| n.checked_mul(chunk_duration))
            .ok_or_else(|| TagError::Config("span overflow".into()))?;
        Ok(TagSpace {
            layout: Layout::Uniform { branching, depth },
            time_levels: (1..=depth)
                .map(|l| LevelSpec::new(&format!("level{l}"), branching))
                .collect(),
            policy_levels: Vec::new(),
            epoch_start,
            span_end: epoch_start + span,
            chunk_duration,
        })
    }

    /// A uniform space with exactly `B^L` leaves, all inside the span.
    pub fn uniform_full(epoch_start: i64, chunk_duration: i64, branching: u32, depth: u32) -> Result<Self, TagError> {
        let leaves = u64::from(branching)
            .checked_pow(depth)
            .ok_or_else(|| TagError::Config("too many leaves".into()))?;
        let space = Self::uniform(epoch_start, chunk_duration, leaves, depth)?;
        debug_assert_eq!(space.branching(), branching);
        Ok(space)
    }

    pub fn with_policy_levels(mut self, levels: Vec<LevelSpec>) -> Result<Self, TagError> {
        if levels.iter().any(|l| l.cardinality == 0) {
            return Err(TagError::Config("policy level with zero cardinality".into()));
        }
        self.policy_levels = levels;
        Ok(self)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn epoch_start(&self) -> i64 {
        self.epoch_start
    }

    pub fn span_end(&self) -> i64 {
        self.span_end
    }

    pub fn chunk_duration(&self) -> i64 {
        self.chunk_duration
    }

    pub fn time_depth(&self) -> usize {
        self.time_levels.len()
    }

    /// Total HIBS depth: time levels plus policy levels.
    pub fn depth(&self) -> usize {
        self.time_levels.len() + self.policy_levels.len()
    }

    pub fn levels(&self) -> impl Iterator<Item = &LevelSpec> {
        self.time_levels.iter().chain(&self.policy_levels)
    }

    /// Number of children of any node at `level` (0 = root).
    pub fn cardinality(&self, level: usize) -> u32 {
        self.levels().nth(level).map_or(0, |l| l.cardinality)
    }

    /// Largest branching factor over all levels.
    pub fn branching(&self) -> u32 {
        self.levels().map(|l| l.cardinality).max().unwrap_or(0)
    }

    /// Leaves in the full time grid.
    pub fn leaf_count(&self) -> u64 {
        self.time_levels
            .iter()
            .map(|l| u64::from(l.cardinality))
            .product()
    }

    pub fn validate(&self, tag: &Tag) -> Result<(), TagError> {
        if tag.is_empty() {
            return Err(TagError::Empty);
        }
        if tag.len() > self.depth() {
            return Err(TagError::TooDeep {
                got: tag.len(),
                max: self.depth(),
            });
        }
        for (index, (&value, level)) in tag.0.iter().zip(self.levels()).enumerate() {
            if value == 0 || value > level.cardinality {
                return Err(TagError::ComponentRange {
                    index,
                    value,
                    max: level.cardinality,
                });
            }
        }
        Ok(())
    }

    pub fn leaf_index(&self, tag: &Tag) -> Result<u64, TagError> {
        self.validate(tag)?;
        if tag.len() < self.time_depth() {
            return Err(TagError::Parse(format!("{tag} is not a time leaf")));
        }
        Ok(self
            .time_levels
            .iter()
            .zip(&tag.0)
            .fold(0u64, |acc, (l, &c)| acc * u64::from(l.cardinality) + u64::from(c - 1)))
    }

    pub fn leaf_at(&self, index: u64) -> Result<Tag, TagError> {
        let count = self.leaf_count();
        if index >= count {
            return Err(TagError::LeafIndex { index, count });
        }
        let mut rest = index;
        let mut comps = vec![0u32; self.time_depth()];
        for (slot, level) in comps.iter_mut().zip(&self.time_levels).rev() {
            let card = u64::from(level.cardinality);
            *slot = (rest % card) as u32 + 1;
            rest /= card;
        }
        Ok(Tag(comps))
    }

    /// Leaves `from..=to` in lexicographic order.
    pub fn lex_range(&self, from: u64, to: u64) -> Result<Vec<Tag>, TagError> {
        let count = self.leaf_count();
        if from > to || to >= count {
            return Err(TagError::LeafIndex { index: to.max(from), count });
        }
        (from..=to).map(|i| self.leaf_at(i)).collect()
    }

    /// `τ(t)`: the unique time leaf whose chunk contains `t`.
    pub fn tag_of_time(&self, t: i64) -> Result<Tag, TagError> {
        if t < self.epoch_start || t >= self.span_end {
            return Err(TagError::OutOfSpan(t));
        }
        match self.layout {
            Layout::Uniform { .. } => {
                let index = ((t - self.epoch_start) / self.chunk_duration) as u64;
                self.leaf_at(index)
            }
            Layout::Calendar { chunks_per_day, .. } => {
                let dt = Utc.timestamp_opt(t, 0).single().ok_or(TagError::OutOfSpan(t))?;
                let start_year = self.start_year();
                let sec_of_day = t.rem_euclid(SECONDS_PER_DAY);
                let chunk = (sec_of_day * i64::from(chunks_per_day) / SECONDS_PER_DAY) as u32 + 1;
                Ok(Tag(vec![
                    (dt.year() - start_year + 1) as u32,
                    dt.month(),
                    dt.day(),
                    chunk,
                ]))
            }
        }
    }

    fn start_year(&self) -> i32 {
        Utc.timestamp_opt(self.epoch_start, 0)
            .single()
            .map_or(1970, |d| d.year())
    }

    /// Half-open time interval `[start, end)` covered by a leaf or internal tag, considering only
    /// the time levels. `None` for tags naming unused calendar dates or invalid tags.
    pub fn time_range(&self, tag: &Tag) -> Option<(i64, i64)> {
        self.validate(tag).ok()?;
        let time = tag.prefix(self.time_depth());
        match self.layout {
            Layout::Uniform { .. } => {
                let below = self.time_depth() - time.len();
                let width = self
                    .time_levels
                    .iter()
                    .skip(time.len())
                    .map(|l| i64::from(l.cardinality))
                    .product::<i64>();
                let mut padded = time.0.clone();
                padded.extend(std::iter::repeat_n(1, below));
                let first = self.leaf_index(&Tag(padded)).ok()? as i64;
                let start = self.epoch_start + first * self.chunk_duration;
                Some((start, start + width * self.chunk_duration))
            }
            Layout::Calendar { chunks_per_day, .. } => {
                let year = self.start_year() + time.0[0] as i32 - 1;
                let ts = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
                match time.0.as_slice() {
                    [_] => Some((
                        ts(NaiveDate::from_ymd_opt(year, 1, 1)?),
                        ts(NaiveDate::from_ymd_opt(year + 1, 1, 1)?),
                    )),
                    [_, m] => {
                        let first = NaiveDate::from_ymd_opt(year, *m, 1)?;
                        let next = if *m == 12 {
                            NaiveDate::from_ymd_opt(year + 1, 1, 1)?
                        } else {
                            NaiveDate::from_ymd_opt(year, m + 1, 1)?
                        };
                        Some((ts(first), ts(next)))
                    }
                    [_, m, d] => {
                        let day = ts(NaiveDate::from_ymd_opt(year, *m, *d)?);
                        Some((day, day + SECONDS_PER_DAY))
                    }
                    [_, m, d, c] => {
                        let day = ts(NaiveDate::from_ymd_opt(year, *m, *d)?);
                        let n = i64::from(chunks_per_day);
                        let bound = |k: i64| day + (k * SECONDS_PER_DAY + n - 1) / n;
                        Some((bound(i64::from(*c) - 1), bound(i64::from(*c))))
                    }
                    _ => None,
                }
            }
        }
    }

    /// `t ⊏ τ`: whether the chunk(s) named by `tag` contain `t`.
    pub fn contains(&self, tag: &Tag, t: i64) -> bool {
        if t < self.epoch_start || t >= self.span_end {
            return false;
        }
        self.time_range(tag)
            .is_some_and(|(start, end)| start <= t && t < end)
    }

    /// Whether a time leaf names a real chunk (calendar layouts leave e.g. February 30 unused).
    pub fn is_valid_leaf(&self, tag: &Tag) -> bool {
        tag.len() == self.time_depth()
            && self
                .time_range(tag)
                .is_some_and(|(s, _)| s >= self.epoch_start && s < self.span_end)
    }
}

/// Smallest `B` with `B^depth ≥ leaf_target`.
pub fn uniform_branching(leaf_target: u64, depth: u32) -> u32 {
    if leaf_target <= 1 || depth == 0 {
        return 1;
    }
    let fits = |b: u64| b.checked_pow(depth).is_some_and(|p| p >= leaf_target);
    // Float estimate, then correct by stepping.
    let mut b = (leaf_target as f64).powf(1.0 / f64::from(depth)).round().max(1.0) as u64;
    while b > 1 && fits(b - 1) {
        b -= 1;
    }
    while !fits(b) {
        b += 1;
    }
    b as u32
}

/// Uniform layout of the requested depth holding at least `leaf_target` leaves, with default
/// 15-minute chunks starting at the Unix epoch.
pub fn uniform_layout(leaf_target: u64, depth: u32) -> Result<TagSpace, TagError> {
    TagSpace::uniform(0, 900, leaf_target, depth)
}
