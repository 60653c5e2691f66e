//! Per-window attribute summary tables keyed on the monthly meeting schedule.

use std::fmt;
use std::io;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use rayon::prelude::*;
use thiserror::Error;

use crate::event_model::{is_active, ClientId, ClientTimeline, EntryType, EventRecord, Keyword};

/// Window sizes, in days, that tables and rule sets may be built for.
pub const WINDOW_SIZES: [u32; 4] = [30, 60, 90, 120];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TabulateError {
    #[error("window must be one of 30, 60, 90, 120 days, got {0}")]
    InvalidWindow(u32),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("attribute schema is empty")]
    EmptySchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowSize(u32);

impl WindowSize {
    pub fn new(days: u32) -> Result<Self, TabulateError> {
        if WINDOW_SIZES.contains(&days) {
            Ok(WindowSize(days))
        } else {
            Err(TabulateError::InvalidWindow(days))
        }
    }

    pub fn days(self) -> u32 {
        self.0
    }
}

impl fmt::Display for WindowSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A countable event attribute: an entry type or a keyword flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    EntrySleep,
    EntryLog,
    EntryBar,
    EntryConsl,
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

impl Attribute {
    pub const ALL: [Attribute; 14] = [
        Attribute::EntrySleep,
        Attribute::EntryLog,
        Attribute::EntryBar,
        Attribute::EntryConsl,
        Attribute::Violence,
        Attribute::Overdose,
        Attribute::PoliceJustice,
        Attribute::MentalHealth,
        Attribute::PhysicalHealth,
        Attribute::Ems,
        Attribute::Addiction,
        Attribute::Conflict,
        Attribute::BarKeyword,
        Attribute::Supports,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::EntrySleep => "EntrySleep",
            Attribute::EntryLog => "EntryLog",
            Attribute::EntryBar => "EntryBar",
            Attribute::EntryConsl => "EntryConsl",
            Attribute::Violence => "Violence",
            Attribute::Overdose => "Overdose",
            Attribute::PoliceJustice => "PoliceJustice",
            Attribute::MentalHealth => "MentalHealth",
            Attribute::PhysicalHealth => "PhysicalHealth",
            Attribute::Ems => "EMS",
            Attribute::Addiction => "Addiction",
            Attribute::Conflict => "Conflict",
            Attribute::BarKeyword => "BarKeyword",
            Attribute::Supports => "Supports",
        }
    }

    fn keyword(self) -> Option<Keyword> {
        Some(match self {
            Attribute::Violence => Keyword::Violence,
            Attribute::Overdose => Keyword::Overdose,
            Attribute::PoliceJustice => Keyword::PoliceJustice,
            Attribute::MentalHealth => Keyword::MentalHealth,
            Attribute::PhysicalHealth => Keyword::PhysicalHealth,
            Attribute::Ems => Keyword::Ems,
            Attribute::Addiction => Keyword::Addiction,
            Attribute::Conflict => Keyword::Conflict,
            Attribute::BarKeyword => Keyword::BarKeyword,
            Attribute::Supports => Keyword::Supports,
            _ => return None,
        })
    }

    /// Whether `event` contributes one to this attribute's count.
    pub fn matches(self, event: &EventRecord) -> bool {
        match self {
            Attribute::EntrySleep => event.entry_type == EntryType::Sleep,
            Attribute::EntryLog => event.entry_type == EntryType::Log,
            Attribute::EntryBar => event.entry_type == EntryType::Bar,
            Attribute::EntryConsl => event.entry_type == EntryType::Counsel,
            kw => event.flags.get(kw.keyword().expect("keyword attribute")),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = TabulateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| TabulateError::UnknownAttribute(s.to_owned()))
    }
}

/// Ordered, duplicate-free list of the attributes a table counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttributeSchema {
    attrs: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attrs: Vec<Attribute>) -> Result<Self, TabulateError> {
        if attrs.is_empty() {
            return Err(TabulateError::EmptySchema);
        }
        for (i, a) in attrs.iter().enumerate() {
            if attrs[..i].contains(a) {
                return Err(TabulateError::DuplicateAttribute(a.name().to_owned()));
            }
        }
        Ok(AttributeSchema { attrs })
    }

    /// All fourteen attributes in default order.
    pub fn full() -> Self {
        AttributeSchema {
            attrs: Attribute::ALL.to_vec(),
        }
    }

    pub fn core() -> Self {
        AttributeSchema {
            attrs: vec![
                Attribute::EntrySleep,
                Attribute::EntryBar,
                Attribute::EntryConsl,
            ],
        }
    }

    pub fn extended() -> Self {
        AttributeSchema {
            attrs: vec![
                Attribute::EntrySleep,
                Attribute::EntryBar,
                Attribute::EntryConsl,
                Attribute::Violence,
                Attribute::Overdose,
                Attribute::Addiction,
            ],
        }
    }

    /// `core`, `extended`, `all`, or a comma-separated attribute list.
    pub fn from_selector(selector: &str) -> Result<Self, TabulateError> {
        match selector.trim() {
            "core" => Ok(Self::core()),
            "extended" => Ok(Self::extended()),
            "all" => Ok(Self::full()),
            list => AttributeSchema::new(
                list.split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()?,
            ),
        }
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn index_of(&self, attr: Attribute) -> Option<usize> {
        self.attrs.iter().position(|a| *a == attr)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.attrs.iter().map(|a| a.name()).collect()
    }

    /// Counts of each schema attribute over `events`.
    pub fn count(&self, events: &[EventRecord]) -> Vec<u32> {
        self.attrs
            .iter()
            .map(|a| events.iter().filter(|e| a.matches(e)).count() as u32)
            .collect()
    }
}

/// First-of-month dates in `(start, end]`.
pub fn meeting_schedule(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = first_of_next_month(start);
    while d <= end {
        out.push(d);
        d = first_of_next_month(d);
    }
    out
}

fn first_of_next_month(d: NaiveDate) -> NaiveDate {
    let (y, m) = if d.month() == 12 {
        (d.year() + 1, 1)
    } else {
        (d.year(), d.month() + 1)
    };
    NaiveDate::from_ymd_opt(y, m, 1).expect("valid first of month")
}

/// Attribute counts of `timeline` over the `window` days before `meeting`.
pub fn window_counts(
    timeline: &ClientTimeline,
    schema: &AttributeSchema,
    window: WindowSize,
    meeting: NaiveDate,
) -> Vec<u32> {
    let from = meeting - Duration::days(window.days() as i64);
    schema.count(timeline.events_between(from, meeting))
}

/// True when `meeting` is at least `window` days after the client's first
/// event and the client is active there.
pub fn is_eligible(timeline: &ClientTimeline, window: WindowSize, meeting: NaiveDate) -> bool {
    match timeline.first_event_date() {
        Some(first) => {
            (meeting - first).num_days() >= window.days() as i64 && is_active(timeline, meeting)
        }
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeRow {
    pub client_id: ClientId,
    pub meeting: NaiveDate,
    pub counts: Vec<u32>,
    pub chronic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSummaryTable {
    pub window: WindowSize,
    pub schema: AttributeSchema,
    pub rows: Vec<AttributeRow>,
}

impl AttributeSummaryTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.chronic).count()
    }

    /// Column `attr` as f64 values, one per row.
    pub fn column(&self, attr: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.counts[attr] as f64).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.chronic).collect()
    }

    /// CSV with header `client_id,<attributes>,chronic`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["client_id"];
        header.extend(self.schema.names());
        header.push("chronic");
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(row.client_id.0.clone());
            rec.extend(row.counts.iter().map(u32::to_string));
            rec.push(if row.chronic { "1" } else { "0" }.to_owned());
            wtr.write_record(&rec)?;
        }
        wtr.flush()
    }
}

/// One row per client, taken at the first meeting where the client has been
/// known for at least `window` days and is active. Rows come out in
/// ascending client order.
pub fn build_attribute_table(
    timelines: &[ClientTimeline],
    window: WindowSize,
    schema: &AttributeSchema,
    meetings: &[NaiveDate],
) -> AttributeSummaryTable {
    let mut rows: Vec<AttributeRow> = timelines
        .par_iter()
        .filter_map(|tl| {
            let meeting = *meetings.iter().find(|&&d| is_eligible(tl, window, d))?;
            Some(AttributeRow {
                client_id: tl.client_id.clone(),
                meeting,
                counts: window_counts(tl, schema, window, meeting),
                chronic: tl.chronic_label().is_chronic,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    AttributeSummaryTable {
        window,
        schema: schema.clone(),
        rows,
    }
}
