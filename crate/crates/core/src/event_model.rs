//! Client event timelines and the shelter-use definitions built on them:
//! stays, episodes, the chronic label, the active-client test and
//! per-client access statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Consecutive stays closer than this many days belong to one episode.
pub const EPISODE_GAP_DAYS: i64 = 30;
/// Look-back used by the active-client test.
pub const ACTIVE_WINDOW_DAYS: i64 = 30;

/// Trailing-window criteria of the federal chronic definition:
/// (window length in days, minimum stays inside it).
pub const CHRONIC_SHORT: (i64, usize) = (365, 180);
pub const CHRONIC_LONG: (i64, usize) = (1095, 546);

pub const EVENT_CSV_HEADER: [&str; 13] = [
    "client_id",
    "date",
    "entry_type",
    "violence",
    "overdose",
    "police_justice",
    "mental_health",
    "physical_health",
    "ems",
    "addiction",
    "conflict",
    "bar_kw",
    "supports",
];

const DATE_FMT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub String);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClientId {
    fn from(s: &str) -> Self {
        ClientId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntryType {
    Sleep,
    Log,
    Bar,
    Counsel,
}

impl EntryType {
    pub const ALL: [EntryType; 4] = [
        EntryType::Sleep,
        EntryType::Log,
        EntryType::Bar,
        EntryType::Counsel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntryType::Sleep => "sleep",
            EntryType::Log => "log",
            EntryType::Bar => "bar",
            EntryType::Counsel => "counsel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sleep" => Some(EntryType::Sleep),
            "log" => Some(EntryType::Log),
            "bar" => Some(EntryType::Bar),
            "counsel" => Some(EntryType::Counsel),
            _ => None,
        }
    }
}

/// Keyword categories flagged on scrubbed comment fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Keyword {
    Violence,
    Overdose,
    PoliceJustice,
    MentalHealth,
    PhysicalHealth,
    Ems,
    Addiction,
    Conflict,
    BarKeyword,
    Supports,
}

impl Keyword {
    pub const COUNT: usize = 10;
    pub const ALL: [Keyword; Keyword::COUNT] = [
        Keyword::Violence,
        Keyword::Overdose,
        Keyword::PoliceJustice,
        Keyword::MentalHealth,
        Keyword::PhysicalHealth,
        Keyword::Ems,
        Keyword::Addiction,
        Keyword::Conflict,
        Keyword::BarKeyword,
        Keyword::Supports,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The ten keyword flags of one event, packed into a bitmask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeywordFlags(u16);

impl KeywordFlags {
    pub fn none() -> Self {
        KeywordFlags(0)
    }

    pub fn from_bools(flags: [bool; Keyword::COUNT]) -> Self {
        let mut bits = 0u16;
        for (i, f) in flags.iter().enumerate() {
            if *f {
                bits |= 1 << i;
            }
        }
        KeywordFlags(bits)
    }

    pub fn get(self, kw: Keyword) -> bool {
        self.0 >> kw.index() & 1 == 1
    }

    pub fn set(&mut self, kw: Keyword, value: bool) {
        if value {
            self.0 |= 1 << kw.index();
        } else {
            self.0 &= !(1 << kw.index());
        }
    }

    pub fn with(mut self, kw: Keyword) -> Self {
        self.set(kw, true);
        self
    }
}

/// One timestamped interaction between a client and the shelter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub client_id: ClientId,
    pub date: NaiveDate,
    pub entry_type: EntryType,
    pub flags: KeywordFlags,
}

impl EventRecord {
    pub fn new(client_id: impl Into<ClientId>, date: NaiveDate, entry_type: EntryType) -> Self {
        EventRecord {
            client_id: client_id.into(),
            date,
            entry_type,
            flags: KeywordFlags::none(),
        }
    }

    pub fn with_flags(mut self, flags: KeywordFlags) -> Self {
        self.flags = flags;
        self
    }
}

impl From<String> for ClientId {
    fn from(s: String) -> Self {
        ClientId(s)
    }
}

/// Inclusive calendar range that every event must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyInterval {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Smallest interval covering every event, or `None` for an empty log.
    pub fn spanning(events: &[EventRecord]) -> Option<Self> {
        let start = events.iter().map(|e| e.date).min()?;
        let end = events.iter().map(|e| e.date).max()?;
        Some(StudyInterval { start, end })
    }
}

#[derive(Debug, Error)]
pub enum EventParseError {
    #[error("event CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("event CSV header must be `{}`", EVENT_CSV_HEADER.join(","))]
    BadHeader,
    #[error("row {row} (line {line}): {msg}")]
    Row { row: u64, line: u64, msg: String },
}

impl EventParseError {
    /// Data-row number (1-based, header excluded) for row-level errors.
    pub fn row(&self) -> Option<u64> {
        match self {
            EventParseError::Row { row, .. } => Some(*row),
            _ => None,
        }
    }
}

/// Reads an event CSV. Rows outside `interval` (when given) are rejected.
pub fn read_events<R: io::Read>(
    reader: R,
    interval: Option<&StudyInterval>,
) -> Result<Vec<EventRecord>, EventParseError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?;
    if header.len() != EVENT_CSV_HEADER.len()
        || header.iter().zip(EVENT_CSV_HEADER).any(|(a, b)| a != b)
    {
        return Err(EventParseError::BadHeader);
    }

    let mut events = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0u64;
    loop {
        let more = match rdr.read_record(&mut record) {
            Ok(more) => more,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(EventParseError::Row {
                    row: row + 1,
                    line,
                    msg: e.to_string(),
                });
            }
        };
        if !more {
            break;
        }
        row += 1;
        let line = record.position().map_or(row + 1, |p| p.line());
        let fail = |msg: String| EventParseError::Row { row, line, msg };

        if record.len() != EVENT_CSV_HEADER.len() {
            return Err(fail(format!(
                "expected {} fields, found {}",
                EVENT_CSV_HEADER.len(),
                record.len()
            )));
        }
        let client = &record[0];
        if client.is_empty() {
            return Err(fail("empty client_id".into()));
        }
        let date = NaiveDate::parse_from_str(&record[1], DATE_FMT)
            .map_err(|_| fail(format!("malformed date `{}`", &record[1])))?;
        if let Some(iv) = interval {
            if !iv.contains(date) {
                return Err(fail(format!(
                    "date {date} outside study interval {}..={}",
                    iv.start, iv.end
                )));
            }
        }
        let entry_type = EntryType::parse(&record[2])
            .ok_or_else(|| fail(format!("unknown entry_type `{}`", &record[2])))?;
        let mut flags = KeywordFlags::none();
        for (kw, field) in Keyword::ALL.iter().zip(record.iter().skip(3)) {
            match field {
                "0" => {}
                "1" => flags.set(*kw, true),
                other => {
                    return Err(fail(format!("keyword flag must be 0 or 1, found `{other}`")));
                }
            }
        }
        events.push(EventRecord {
            client_id: ClientId(client.to_owned()),
            date,
            entry_type,
            flags,
        });
    }
    Ok(events)
}

pub fn write_events<W: io::Write>(writer: W, events: &[EventRecord]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(EVENT_CSV_HEADER)?;
    for e in events {
        let date = e.date.format(DATE_FMT).to_string();
        let mut fields: Vec<&str> = Vec::with_capacity(EVENT_CSV_HEADER.len());
        fields.push(&e.client_id.0);
        fields.push(&date);
        fields.push(e.entry_type.as_str());
        for kw in Keyword::ALL {
            fields.push(if e.flags.get(kw) { "1" } else { "0" });
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()
}

/// All events of one client, in date order, plus the derived stay dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientTimeline {
    pub client_id: ClientId,
    events: Vec<EventRecord>,
    stay_dates: Vec<NaiveDate>,
}

impl ClientTimeline {
    /// Builds a timeline; events are stably sorted by date.
    pub fn new(client_id: ClientId, mut events: Vec<EventRecord>) -> Self {
        events.sort_by_key(|e| e.date);
        let stay_dates = segment_stays(&events);
        ClientTimeline {
            client_id,
            events,
            stay_dates,
        }
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn stay_dates(&self) -> &[NaiveDate] {
        &self.stay_dates
    }

    pub fn first_event_date(&self) -> Option<NaiveDate> {
        self.events.first().map(|e| e.date)
    }

    pub fn first_stay_date(&self) -> Option<NaiveDate> {
        self.stay_dates.first().copied()
    }

    /// Events dated in the half-open range `[from, to)`.
    pub fn events_between(&self, from: NaiveDate, to: NaiveDate) -> &[EventRecord] {
        let lo = self.events.partition_point(|e| e.date < from);
        let hi = self.events.partition_point(|e| e.date < to);
        &self.events[lo..hi.max(lo)]
    }

    pub fn chronic_label(&self) -> ChronicLabel {
        label_chronic(&self.stay_dates)
    }
}

/// Groups a flat event stream into per-client timelines, ordered by id.
pub fn build_timelines(events: impl IntoIterator<Item = EventRecord>) -> Vec<ClientTimeline> {
    let mut by_client: BTreeMap<ClientId, Vec<EventRecord>> = BTreeMap::new();
    for e in events {
        by_client.entry(e.client_id.clone()).or_default().push(e);
    }
    by_client
        .into_iter()
        .map(|(id, evs)| ClientTimeline::new(id, evs))
        .collect()
}

/// Distinct days carrying at least one Sleep event, ascending.
pub fn segment_stays(events: &[EventRecord]) -> Vec<NaiveDate> {
    let mut days: Vec<NaiveDate> = events
        .iter()
        .filter(|e| e.entry_type == EntryType::Sleep)
        .map(|e| e.date)
        .collect();
    days.sort_unstable();
    days.dedup();
    days
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Episode {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub stay_count: usize,
}

/// Splits ascending distinct stay dates at every gap of 30 days or more.
pub fn segment_episodes(stay_dates: &[NaiveDate]) -> Vec<Episode> {
    let mut episodes: Vec<Episode> = Vec::new();
    for &day in stay_dates {
        match episodes.last_mut() {
            Some(ep) if (day - ep.end_date).num_days() < EPISODE_GAP_DAYS => {
                ep.end_date = day;
                ep.stay_count += 1;
            }
            _ => episodes.push(Episode {
                start_date: day,
                end_date: day,
                stay_count: 1,
            }),
        }
    }
    episodes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChronicLabel {
    pub is_chronic: bool,
    pub first_qualifying_day: Option<NaiveDate>,
}

/// Earliest stay date `d` whose trailing window `[d - (window_days-1), d]`
/// holds at least `min_stays` stays.
pub fn first_window_hit(
    stay_dates: &[NaiveDate],
    window_days: i64,
    min_stays: usize,
) -> Option<NaiveDate> {
    if min_stays == 0 {
        return stay_dates.first().copied();
    }
    let mut lo = 0;
    for (hi, &day) in stay_dates.iter().enumerate() {
        while (day - stay_dates[lo]).num_days() >= window_days {
            lo += 1;
        }
        if hi + 1 - lo >= min_stays {
            return Some(day);
        }
    }
    None
}

/// Applies both trailing-window criteria; the label's day is the earlier hit.
pub fn label_chronic(stay_dates: &[NaiveDate]) -> ChronicLabel {
    let short = first_window_hit(stay_dates, CHRONIC_SHORT.0, CHRONIC_SHORT.1);
    let long = first_window_hit(stay_dates, CHRONIC_LONG.0, CHRONIC_LONG.1);
    let first = match (short, long) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    ChronicLabel {
        is_chronic: first.is_some(),
        first_qualifying_day: first,
    }
}

/// True iff the client has any event in `[meeting - 30 days, meeting)`.
pub fn is_active(timeline: &ClientTimeline, meeting: NaiveDate) -> bool {
    let from = meeting - Duration::days(ACTIVE_WINDOW_DAYS);
    !timeline.events_between(from, meeting).is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientStats {
    pub total_stays: usize,
    pub total_episodes: usize,
    pub tenure_days: i64,
    pub usage_pct: f64,
    /// Mean gap in days between consecutive stay dates (0 for a single stay).
    pub avg_gap_days: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("client has no stays")]
pub struct NoStays;

pub fn client_stats(stay_dates: &[NaiveDate]) -> Result<ClientStats, NoStays> {
    let (first, last) = match (stay_dates.first(), stay_dates.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(NoStays),
    };
    let tenure_days = (last - first).num_days() + 1;
    let total_stays = stay_dates.len();
    let avg_gap_days = if total_stays > 1 {
        (last - first).num_days() as f64 / (total_stays - 1) as f64
    } else {
        0.0
    };
    Ok(ClientStats {
        total_stays,
        total_episodes: segment_episodes(stay_dates).len(),
        tenure_days,
        usage_pct: 100.0 * total_stays as f64 / tenure_days as f64,
        avg_gap_days,
    })
}
