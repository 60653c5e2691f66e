//! Seeded synthetic cohorts of shelter clients.
//!
//! Chronic clients get a dense onset phase that crosses the 180-stays-in-a-
//! year line, followed by alternating in-shelter runs and geometric gaps
//! until their drawn stay count is used up. Non-chronic clients draw a stay
//! count below the chronic threshold from a log-uniform law, with a minority
//! of heavy short-term users who sleep densely at first and leave. Bar,
//! counsel and log events are emitted per stay day at class-specific rates
//! and carry independent keyword flags.
//!
//! Config keys (TOML, all optional):
//!
//! | key | meaning |
//! |---|---|
//! | `population_size` | number of clients |
//! | `chronic_fraction` | share of chronic clients, rounded to a count |
//! | `seed` | RNG seed |
//! | `study_start`, `study_span_days` | first day and length of the study |
//! | `chronic_median_stays`, `chronic_stays_sigma` | log-normal total stays, before truncation at the study end |
//! | `chronic_median_usage_pct`, `chronic_usage_sigma` | log-normal usage % of the post-onset phase |
//! | `chronic_onset_density_min/max` | stay density before qualifying |
//! | `chronic_run_mean_days` | mean in-shelter run length |
//! | `nonchronic_light_max_stays` | log-uniform cap for light users |
//! | `nonchronic_heavy_fraction` | share of heavy short-term users |
//! | `nonchronic_heavy_min_stays/max_stays` | their stay count range |
//! | `nonchronic_heavy_density_min/max` | their stay density |
//! | `nonchronic_run_mean_days` | mean run length |
//! | `{chronic,light,heavy}_{log,bar,counsel}_rate` | events per stay day |
//! | `rate_jitter_sigma` | per-client log-normal rate multiplier |
//! | `duplicate_sleep_prob` | chance of a second sleep entry on a stay day |
//! | `{log,bar,counsel}_keyword_probs` | ten flag probabilities per event |

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{
    build_timelines, client_stats, ClientId, ClientStats, ClientTimeline,
    EntryType, EventRecord, Keyword, KeywordFlags, CHRONIC_SHORT,
};
use crate::stats::{mean, median, percentile_nearest_rank};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("population_size must be at least 1")]
    EmptyPopulation,
    #[error("study span must be at least 365 days, got {0}")]
    SpanTooShort(u32),
    #[error("invalid cohort config: {0}")]
    Invalid(String),
    #[error("cohort config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("no events to describe")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub population_size: usize,
    pub chronic_fraction: f64,
    pub seed: u64,
    pub study_start: NaiveDate,
    pub study_span_days: u32,

    pub chronic_median_stays: f64,
    pub chronic_stays_sigma: f64,
    pub chronic_median_usage_pct: f64,
    pub chronic_usage_sigma: f64,
    pub chronic_onset_density_min: f64,
    pub chronic_onset_density_max: f64,
    pub chronic_run_mean_days: f64,

    pub nonchronic_light_max_stays: u32,
    pub nonchronic_heavy_fraction: f64,
    pub nonchronic_heavy_min_stays: u32,
    pub nonchronic_heavy_max_stays: u32,
    pub nonchronic_heavy_density_min: f64,
    pub nonchronic_heavy_density_max: f64,
    pub nonchronic_run_mean_days: f64,

    pub chronic_log_rate: f64,
    pub chronic_bar_rate: f64,
    pub chronic_counsel_rate: f64,
    pub light_log_rate: f64,
    pub light_bar_rate: f64,
    pub light_counsel_rate: f64,
    pub heavy_log_rate: f64,
    pub heavy_bar_rate: f64,
    pub heavy_counsel_rate: f64,
    pub rate_jitter_sigma: f64,
    pub duplicate_sleep_prob: f64,

    pub log_keyword_probs: [f64; Keyword::COUNT],
    pub bar_keyword_probs: [f64; Keyword::COUNT],
    pub counsel_keyword_probs: [f64; Keyword::COUNT],
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            population_size: 2000,
            chronic_fraction: 0.099,
            seed: 20200120,
            study_start: NaiveDate::from_ymd_opt(2008, 7, 1).expect("valid date"),
            study_span_days: 4220,

            chronic_median_stays: 780.0,
            chronic_stays_sigma: 0.8,
            chronic_median_usage_pct: 28.0,
            chronic_usage_sigma: 0.7,
            chronic_onset_density_min: 0.55,
            chronic_onset_density_max: 0.95,
            chronic_run_mean_days: 12.0,

            nonchronic_light_max_stays: 18,
            nonchronic_heavy_fraction: 0.12,
            nonchronic_heavy_min_stays: 40,
            nonchronic_heavy_max_stays: 175,
            nonchronic_heavy_density_min: 0.3,
            nonchronic_heavy_density_max: 0.8,
            nonchronic_run_mean_days: 6.0,

            chronic_log_rate: 0.15,
            chronic_bar_rate: 0.015,
            chronic_counsel_rate: 0.01,
            light_log_rate: 0.2,
            light_bar_rate: 0.03,
            light_counsel_rate: 0.04,
            heavy_log_rate: 0.2,
            heavy_bar_rate: 0.05,
            heavy_counsel_rate: 0.06,
            rate_jitter_sigma: 0.5,
            duplicate_sleep_prob: 0.02,

            // Violence, Overdose, PoliceJustice, MentalHealth, PhysicalHealth,
            // EMS, Addiction, Conflict, BarKeyword, Supports
            log_keyword_probs: [0.05, 0.02, 0.04, 0.06, 0.05, 0.02, 0.05, 0.06, 0.02, 0.04],
            bar_keyword_probs: [0.5, 0.05, 0.3, 0.1, 0.05, 0.05, 0.15, 0.4, 0.6, 0.0],
            counsel_keyword_probs: [0.02, 0.05, 0.05, 0.3, 0.15, 0.02, 0.2, 0.02, 0.0, 0.5],
        }
    }
}

impl CohortConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CohortError> {
        let cfg: CohortConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn study_end(&self) -> NaiveDate {
        self.study_start + Duration::days(self.study_span_days as i64 - 1)
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        if self.population_size == 0 {
            return Err(CohortError::EmptyPopulation);
        }
        if self.study_span_days < 365 {
            return Err(CohortError::SpanTooShort(self.study_span_days));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CohortError::Invalid(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("chronic_fraction", self.chronic_fraction)?;
        unit("nonchronic_heavy_fraction", self.nonchronic_heavy_fraction)?;
        unit("duplicate_sleep_prob", self.duplicate_sleep_prob)?;
        for p in self
            .log_keyword_probs
            .iter()
            .chain(&self.bar_keyword_probs)
            .chain(&self.counsel_keyword_probs)
        {
            unit("keyword probability", *p)?;
        }
        if !(0.0 < self.chronic_onset_density_min
            && self.chronic_onset_density_min <= self.chronic_onset_density_max
            && self.chronic_onset_density_max <= 1.0)
        {
            return Err(CohortError::Invalid(
                "onset densities must satisfy 0 < min <= max <= 1".into(),
            ));
        }
        if !(0.0 < self.nonchronic_heavy_density_min
            && self.nonchronic_heavy_density_min <= self.nonchronic_heavy_density_max
            && self.nonchronic_heavy_density_max <= 1.0)
        {
            return Err(CohortError::Invalid(
                "heavy densities must satisfy 0 < min <= max <= 1".into(),
            ));
        }
        let positive = [
            ("chronic_median_stays", self.chronic_median_stays),
            ("chronic_median_usage_pct", self.chronic_median_usage_pct),
            ("chronic_run_mean_days", self.chronic_run_mean_days),
            ("nonchronic_run_mean_days", self.nonchronic_run_mean_days),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CohortError::Invalid(format!("{name} must be > 0")));
            }
        }
        let rates = [
            self.chronic_stays_sigma,
            self.chronic_usage_sigma,
            self.chronic_log_rate,
            self.chronic_bar_rate,
            self.chronic_counsel_rate,
            self.light_log_rate,
            self.light_bar_rate,
            self.light_counsel_rate,
            self.heavy_log_rate,
            self.heavy_bar_rate,
            self.heavy_counsel_rate,
            self.rate_jitter_sigma,
        ];
        if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(CohortError::Invalid("rates and sigmas must be >= 0".into()));
        }
        if self.nonchronic_light_max_stays == 0
            || self.nonchronic_heavy_min_stays == 0
            || self.nonchronic_heavy_min_stays > self.nonchronic_heavy_max_stays
        {
            return Err(CohortError::Invalid("non-chronic stay ranges are empty".into()));
        }
        let cap = CHRONIC_SHORT.1 as u32;
        if self.nonchronic_light_max_stays >= cap || self.nonchronic_heavy_max_stays >= cap {
            return Err(CohortError::Invalid(format!(
                "non-chronic stay counts must stay below {cap}"
            )));
        }
        Ok(())
    }
}

/// Generated events plus the class each client was generated as.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub events: Vec<EventRecord>,
    pub classes: Vec<(ClientId, bool)>,
}

#[derive(Debug, Clone, Copy)]
struct EventRates {
    log: f64,
    bar: f64,
    counsel: f64,
}

/// Days (offsets) of a run/gap process starting at `start`, at most `count`
/// stays, none at or after `limit`.
fn place_stays<R: Rng>(
    rng: &mut R,
    start: i64,
    count: usize,
    density: f64,
    run_mean: f64,
    limit: i64,
) -> Vec<i64> {
    let density = density.clamp(1e-3, 1.0);
    let run = Geometric::new(1.0 / run_mean.max(1.0)).expect("valid run probability");
    let gap_mean = run_mean.max(1.0) * (1.0 - density) / density;
    let gap = Geometric::new(1.0 / (1.0 + gap_mean)).expect("valid gap probability");
    let mut days = Vec::with_capacity(count);
    let mut day = start;
    while days.len() < count && day < limit {
        let len = 1 + run.sample(rng) as i64;
        for _ in 0..len {
            if days.len() == count || day >= limit {
                break;
            }
            days.push(day);
            day += 1;
        }
        day += gap.sample(rng) as i64;
    }
    days
}

fn chronic_stays<R: Rng>(rng: &mut R, cfg: &CohortConfig, span: i64) -> Vec<i64> {
    let stays_law = LogNormal::new(cfg.chronic_median_stays.ln(), cfg.chronic_stays_sigma)
        .expect("valid stays law");
    let usage_law = LogNormal::new(
        (cfg.chronic_median_usage_pct / 100.0).ln(),
        cfg.chronic_usage_sigma,
    )
    .expect("valid usage law");
    let start = rng.random_range(0..=span - 365);
    let target = (stays_law.sample(rng).round() as usize).clamp(200, (span - start) as usize);
    let usage = usage_law.sample(rng).clamp(0.08, 1.0);
    let (min_stays, window) = (CHRONIC_SHORT.1, CHRONIC_SHORT.0);

    // Onset: dense enough to cross 180 stays inside some 365-day window
    // before the study ends.
    let mut onset = Vec::new();
    for _ in 0..32 {
        let density =
            rng.random_range(cfg.chronic_onset_density_min..=cfg.chronic_onset_density_max);
        let n = min_stays + rng.random_range(0..20);
        let cand = place_stays(rng, start, n, density, cfg.chronic_run_mean_days, span);
        if cand.len() == n && cand[n - 1] - cand[n - min_stays] < window {
            onset = cand;
            break;
        }
    }
    if onset.is_empty() {
        onset = (start..start + min_stays as i64).collect();
    }

    let last = *onset.last().expect("non-empty onset");
    let remaining = target.saturating_sub(onset.len());
    if remaining > 0 {
        let available = span - last - 1;
        let wanted_days = (target as f64 / usage) as i64 - (last - start);
        let hi = available.max(1);
        let rest_days = wanted_days.clamp((remaining as i64).min(hi), hi);
        let density = (remaining as f64 / rest_days as f64).min(1.0);
        let gap = Geometric::new(0.5).expect("valid").sample(rng) as i64;
        onset.extend(place_stays(
            rng,
            last + 1 + gap,
            remaining,
            density,
            cfg.chronic_run_mean_days,
            span,
        ));
    }
    onset
}

fn nonchronic_stays<R: Rng>(rng: &mut R, cfg: &CohortConfig, span: i64, heavy: bool) -> Vec<i64> {
    let start = rng.random_range(0..span);
    let (count, density) = if heavy {
        (
            rng.random_range(cfg.nonchronic_heavy_min_stays..=cfg.nonchronic_heavy_max_stays),
            rng.random_range(cfg.nonchronic_heavy_density_min..=cfg.nonchronic_heavy_density_max),
        )
    } else {
        let u: f64 = rng.random();
        let max = cfg.nonchronic_light_max_stays as f64;
        let count = ((u * (max + 1.0).ln()).exp().floor() as u32).clamp(1, cfg.nonchronic_light_max_stays);
        (count, rng.random_range(0.05..=1.0))
    };
    place_stays(
        rng,
        start,
        count as usize,
        density,
        cfg.nonchronic_run_mean_days,
        span,
    )
}

fn poisson_count<R: Rng>(rng: &mut R, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid rate").sample(rng) as u32
}

fn draw_flags<R: Rng>(rng: &mut R, probs: &[f64; Keyword::COUNT]) -> KeywordFlags {
    let mut flags = KeywordFlags::none();
    for kw in Keyword::ALL {
        if rng.random::<f64>() < probs[kw.index()] {
            flags.set(kw, true);
        }
    }
    flags
}

/// Generates a cohort; identical configs produce identical output.
/// Events come out sorted by (client_id, date).
pub fn generate_cohort(cfg: &CohortConfig) -> Result<SyntheticCohort, CohortError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.population_size;
    let n_chronic = (n as f64 * cfg.chronic_fraction).round() as usize;
    let mut is_chronic: Vec<bool> = (0..n).map(|i| i < n_chronic).collect();
    is_chronic.shuffle(&mut rng);

    let span = cfg.study_span_days as i64;
    let jitter = LogNormal::new(0.0, cfg.rate_jitter_sigma).expect("valid jitter");
    let mut events = Vec::new();
    let mut classes = Vec::with_capacity(n);
    for (i, &chronic) in is_chronic.iter().enumerate() {
        let id = ClientId(format!("C{:06}", i + 1));
        let (stays, base) = if chronic {
            let rates = EventRates {
                log: cfg.chronic_log_rate,
                bar: cfg.chronic_bar_rate,
                counsel: cfg.chronic_counsel_rate,
            };
            (chronic_stays(&mut rng, cfg, span), rates)
        } else if rng.random::<f64>() < cfg.nonchronic_heavy_fraction {
            let rates = EventRates {
                log: cfg.heavy_log_rate,
                bar: cfg.heavy_bar_rate,
                counsel: cfg.heavy_counsel_rate,
            };
            (nonchronic_stays(&mut rng, cfg, span, true), rates)
        } else {
            let rates = EventRates {
                log: cfg.light_log_rate,
                bar: cfg.light_bar_rate,
                counsel: cfg.light_counsel_rate,
            };
            (nonchronic_stays(&mut rng, cfg, span, false), rates)
        };
        let rates = EventRates {
            log: base.log * jitter.sample(&mut rng),
            bar: base.bar * jitter.sample(&mut rng),
            counsel: base.counsel * jitter.sample(&mut rng),
        };
        for day in stays {
            let date = cfg.study_start + Duration::days(day);
            let sleep = EventRecord::new(id.clone(), date, EntryType::Sleep);
            if rng.random::<f64>() < cfg.duplicate_sleep_prob {
                events.push(sleep.clone());
            }
            events.push(sleep);
            let aux = [
                (EntryType::Log, rates.log, &cfg.log_keyword_probs),
                (EntryType::Bar, rates.bar, &cfg.bar_keyword_probs),
                (EntryType::Counsel, rates.counsel, &cfg.counsel_keyword_probs),
            ];
            for (kind, rate, probs) in aux {
                for _ in 0..poisson_count(&mut rng, rate) {
                    let flags = draw_flags(&mut rng, probs);
                    events.push(EventRecord::new(id.clone(), date, kind).with_flags(flags));
                }
            }
        }
        classes.push((id, chronic));
    }
    Ok(SyntheticCohort { events, classes })
}

/// Average, median and nearest-rank 10th/90th percentiles of one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub average: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        Some(Summary {
            average: mean(values)?,
            median: median(values)?,
            p10: percentile_nearest_rank(values, 10.0)?,
            p90: percentile_nearest_rank(values, 90.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub clients: usize,
    pub total_stays: Summary,
    pub total_episodes: Summary,
    pub tenure_days: Summary,
    pub usage_pct: Summary,
    pub avg_gap_days: Summary,
}

impl ClassSummary {
    pub fn rows(&self) -> [(&'static str, Summary); 5] {
        [
            ("Total Stays", self.total_stays),
            ("Total Episodes", self.total_episodes),
            ("Tenure (days)", self.tenure_days),
            ("Usage Percentage", self.usage_pct),
            ("Avg. Gap Length (days)", self.avg_gap_days),
        ]
    }
}

/// Summary over clients that have at least one stay.
pub fn summarize<'a>(timelines: impl IntoIterator<Item = &'a ClientTimeline>) -> Option<ClassSummary> {
    let stats: Vec<ClientStats> = timelines
        .into_iter()
        .filter_map(|tl| client_stats(tl.stay_dates()).ok())
        .collect();
    let col = |f: fn(&ClientStats) -> f64| stats.iter().map(f).collect::<Vec<_>>();
    Some(ClassSummary {
        clients: stats.len(),
        total_stays: Summary::of(&col(|s| s.total_stays as f64))?,
        total_episodes: Summary::of(&col(|s| s.total_episodes as f64))?,
        tenure_days: Summary::of(&col(|s| s.tenure_days as f64))?,
        usage_pct: Summary::of(&col(|s| s.usage_pct))?,
        avg_gap_days: Summary::of(&col(|s| s.avg_gap_days))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub chronic: Option<ClassSummary>,
    pub non_chronic: Option<ClassSummary>,
}

/// Per-class access statistics, classes assigned by the chronic definition.
pub fn describe_cohort(events: &[EventRecord]) -> Result<CohortSummary, CohortError> {
    if events.is_empty() {
        return Err(CohortError::Empty);
    }
    let timelines = build_timelines(events.iter().cloned());
    Ok(describe_timelines(&timelines))
}

pub fn describe_timelines(timelines: &[ClientTimeline]) -> CohortSummary {
    let (chronic, rest): (Vec<&ClientTimeline>, Vec<&ClientTimeline>) = timelines
        .iter()
        .partition(|tl| tl.chronic_label().is_chronic);
    CohortSummary {
        chronic: summarize(chronic),
        non_chronic: summarize(rest),
    }
}
