//! Disjunctive rule sets learned by repeated search on uncovered rows.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::features::{CoverageTable, Feature, Operator};
use crate::opus::{search_in_par, MetricCounts, Rule, SearchConfig, SearchError, SearchOptions};
use crate::tabulate::{Attribute, AttributeSchema, TabulateError, WindowSize};

#[derive(Debug, Error)]
pub enum RuleSetError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("no rule covers any positive example")]
    NoCoveringRule,
    #[error("expected {expected} attribute counts, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("rule JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule JSON: {0}")]
    Schema(#[from] TabulateError),
    #[error("rule JSON: {0}")]
    Invalid(String),
}

/// One rule of a set: all conjuncts must hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjunction {
    pub conjuncts: Vec<Feature>,
}

impl Conjunction {
    pub fn holds(&self, counts: &[u32]) -> bool {
        self.conjuncts.iter().all(|f| f.holds(counts))
    }

    pub fn describe(&self, attrs: &[Attribute]) -> String {
        self.conjuncts
            .iter()
            .map(|f| f.describe(attrs))
            .collect::<Vec<_>>()
            .join(" AND ")
    }
}

/// Per-rule search results and the set's counts on the full training table.
#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub rules: Vec<Rule>,
    pub aggregate: MetricCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub window: WindowSize,
    pub schema: AttributeSchema,
    pub rules: Vec<Conjunction>,
    /// Present for freshly learned sets, absent when loaded from JSON.
    pub training: Option<Training>,
}

/// Covering loop over the rows in `mask`: search, keep the rule, drop every
/// row it covers, repeat. Stops when all positives are covered, the set is
/// full, or the best remaining rule covers no positive.
pub fn learn_rules(
    coverage: &CoverageTable,
    mask: &Bits,
    config: &SearchConfig,
) -> Result<Vec<Rule>, RuleSetError> {
    config.validate()?;
    let mut remaining = mask.clone();
    let mut rules = Vec::new();
    while rules.len() < config.max_set_size {
        if remaining.and_count(coverage.labels()) == 0 {
            break;
        }
        let rule = search_in_par(coverage, &remaining, config, SearchOptions::default())?;
        if rule.counts.tp == 0 {
            break;
        }
        remaining.and_not_assign(&rule.coverage(coverage));
        rules.push(rule);
    }
    if rules.is_empty() {
        return Err(RuleSetError::NoCoveringRule);
    }
    Ok(rules)
}

/// Union of the rows covered by `rules`.
pub fn union_coverage(coverage: &CoverageTable, rules: &[Rule]) -> Bits {
    let mut bits = Bits::zeros(coverage.num_rows());
    for r in rules {
        bits.or_assign(&r.coverage(coverage));
    }
    bits
}

/// Counts of a prediction vector against the table labels, over `mask`.
pub fn counts_on(coverage: &CoverageTable, predicted: &Bits, mask: &Bits) -> MetricCounts {
    let labels = coverage.labels();
    let pos_total = mask.and_count(labels);
    let in_mask = predicted.and(mask);
    let tp = in_mask.and_count(labels);
    MetricCounts {
        tp,
        fp: in_mask.count_ones() - tp,
        pos_total,
        neg_total: mask.count_ones() - pos_total,
    }
}

impl RuleSet {
    /// Learns on the whole coverage table built for `window` and `schema`.
    pub fn learn(
        coverage: &CoverageTable,
        config: &SearchConfig,
        window: WindowSize,
        schema: &AttributeSchema,
    ) -> Result<Self, RuleSetError> {
        let all = Bits::ones(coverage.num_rows());
        let rules = learn_rules(coverage, &all, config)?;
        let aggregate = counts_on(coverage, &union_coverage(coverage, &rules), &all);
        Ok(RuleSet {
            window,
            schema: schema.clone(),
            rules: rules
                .iter()
                .map(|r| Conjunction {
                    conjuncts: r.conjuncts.clone(),
                })
                .collect(),
            training: Some(Training { rules, aggregate }),
        })
    }

    /// True iff some rule holds on `counts` (schema order).
    pub fn apply(&self, counts: &[u32]) -> Result<bool, RuleSetError> {
        if counts.len() != self.schema.len() {
            return Err(RuleSetError::LengthMismatch {
                expected: self.schema.len(),
                got: counts.len(),
            });
        }
        Ok(self.matches(counts))
    }

    /// [`apply`](Self::apply) without the length check.
    pub fn matches(&self, counts: &[u32]) -> bool {
        self.rules.iter().any(|r| r.holds(counts))
    }

    pub fn to_json(&self) -> String {
        let attrs = self.schema.attributes();
        let doc = RuleSetDoc {
            window_days: self.window.days(),
            attributes: self.schema.names().into_iter().map(str::to_owned).collect(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleDoc {
                    conjuncts: r
                        .conjuncts
                        .iter()
                        .map(|f| ConjunctDoc {
                            attr: attrs[f.attribute].name().to_owned(),
                            op: f.op,
                            threshold: f.threshold,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("rule set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RuleSetError> {
        let doc: RuleSetDoc = serde_json::from_str(text)?;
        let window = WindowSize::new(doc.window_days)?;
        let schema = AttributeSchema::new(
            doc.attributes
                .iter()
                .map(|a| a.parse())
                .collect::<Result<_, _>>()?,
        )?;
        if doc.rules.is_empty() {
            return Err(RuleSetError::Invalid("rule set has no rules".into()));
        }
        let mut rules = Vec::with_capacity(doc.rules.len());
        for r in doc.rules {
            if r.conjuncts.is_empty() {
                return Err(RuleSetError::Invalid("rule has no conjuncts".into()));
            }
            let mut conjuncts = Vec::with_capacity(r.conjuncts.len());
            for c in r.conjuncts {
                let attr: Attribute = c.attr.parse()?;
                let index = schema.index_of(attr).ok_or_else(|| {
                    RuleSetError::Invalid(format!("`{}` is not in the attribute list", c.attr))
                })?;
                if !c.threshold.is_finite() {
                    return Err(RuleSetError::Invalid("threshold must be finite".into()));
                }
                conjuncts.push(Feature::new(index, c.op, c.threshold));
            }
            rules.push(Conjunction { conjuncts });
        }
        Ok(RuleSet {
            window,
            schema,
            rules,
            training: None,
        })
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let attrs = self.schema.attributes();
        let grouped = self.rules.len() > 1;
        let text: Vec<String> = self
            .rules
            .iter()
            .map(|r| match r.describe(attrs) {
                d if grouped && r.conjuncts.len() > 1 => format!("({d})"),
                d => d,
            })
            .collect();
        f.write_str(&text.join(" OR "))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSetDoc {
    window_days: u32,
    attributes: Vec<String>,
    rules: Vec<RuleDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    conjuncts: Vec<ConjunctDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConjunctDoc {
    attr: String,
    op: Operator,
    threshold: f64,
}
