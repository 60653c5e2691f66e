//! Threshold features over attribute tables, the binary coverage tables they
//! induce, and the correlation-pairing attribute retention order.

use std::fmt;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::tabulate::{Attribute, AttributeSummaryTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("table needs at least one positive and one negative row")]
    OneClass,
    #[error("feature references attribute index {index}, table has {width}")]
    UnknownAttribute { index: usize, width: usize },
    #[error("need at least two attributes with nonzero variance, found {0}")]
    TooFewVaryingAttributes(usize),
    #[error("coverage shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Ge => ">=",
            Operator::Lt => "<",
        }
    }

    #[inline]
    pub fn test(self, value: f64, threshold: f64) -> bool {
        match self {
            Operator::Ge => value >= threshold,
            Operator::Lt => value < threshold,
        }
    }
}

/// A threshold test on one attribute column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub attribute: usize,
    pub op: Operator,
    pub threshold: f64,
}

impl Feature {
    pub fn new(attribute: usize, op: Operator, threshold: f64) -> Self {
        Feature {
            attribute,
            op,
            threshold,
        }
    }

    /// Evaluates the test on a count vector in schema order.
    #[inline]
    pub fn holds(&self, counts: &[u32]) -> bool {
        self.op.test(counts[self.attribute] as f64, self.threshold)
    }

    /// Human-readable form, e.g. `EntrySleep >= 78`.
    pub fn describe(&self, attrs: &[Attribute]) -> String {
        let name = attrs
            .get(self.attribute)
            .map_or_else(|| format!("#{}", self.attribute), |a| a.name().to_owned());
        format!("{name} {} {}", self.op.symbol(), self.threshold)
    }
}

/// Discriminating midpoint features, ordered by (attribute, threshold,
/// operator) with `>=` before `<`.
///
/// A midpoint between two adjacent distinct values is kept when a positive
/// row sits at one of the two values and a negative row at the other, so
/// thresholds only appear at class boundaries.
pub fn generate_features(table: &AttributeSummaryTable) -> Result<Vec<Feature>, FeatureError> {
    let pos = table.positives();
    if pos == 0 || pos == table.len() {
        return Err(FeatureError::OneClass);
    }
    let mut out = Vec::new();
    for attr in 0..table.schema.len() {
        // (value, has_pos, has_neg) over distinct values, ascending
        let mut values: Vec<(u32, bool)> = table
            .rows
            .iter()
            .map(|r| (r.counts[attr], r.chronic))
            .collect();
        values.sort_unstable();
        let mut distinct: Vec<(u32, bool, bool)> = Vec::new();
        for (v, label) in values {
            match distinct.last_mut() {
                Some(last) if last.0 == v => {
                    last.1 |= label;
                    last.2 |= !label;
                }
                _ => distinct.push((v, label, !label)),
            }
        }
        for i in 0..distinct.len().saturating_sub(1) {
            let (lo, hi) = (distinct[i], distinct[i + 1]);
            if (lo.1 && hi.2) || (lo.2 && hi.1) {
                let t = (distinct[i].0 as f64 + distinct[i + 1].0 as f64) / 2.0;
                out.push(Feature::new(attr, Operator::Ge, t));
                out.push(Feature::new(attr, Operator::Lt, t));
            }
        }
    }
    Ok(out)
}

/// Binary matrix of feature outcomes per row, stored column-wise.
#[derive(Debug, Clone)]
pub struct CoverageTable {
    features: Vec<Feature>,
    columns: Vec<Bits>,
    labels: Bits,
}

impl CoverageTable {
    /// Assembles a table from precomputed columns.
    pub fn new(features: Vec<Feature>, columns: Vec<Bits>, labels: Bits) -> Result<Self, FeatureError> {
        if features.len() != columns.len() {
            return Err(FeatureError::Shape(format!(
                "{} features but {} columns",
                features.len(),
                columns.len()
            )));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != labels.len()) {
            return Err(FeatureError::Shape(format!(
                "column of {} rows, labels of {}",
                c.len(),
                labels.len()
            )));
        }
        Ok(CoverageTable {
            features,
            columns,
            labels,
        })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn column(&self, j: usize) -> &Bits {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Bits] {
        &self.columns
    }

    pub fn labels(&self) -> &Bits {
        &self.labels
    }

    pub fn num_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.count_ones()
    }

    pub fn negative_count(&self) -> usize {
        self.num_rows() - self.positive_count()
    }

    /// Bits as a `0/1` CSV, one column per feature plus the label.
    pub fn write_debug_csv<W: io::Write>(&self, writer: W, attrs: &[Attribute]) -> io::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.features.iter().map(|f| f.describe(attrs)).collect();
        header.push("chronic".into());
        wtr.write_record(&header)?;
        for r in 0..self.num_rows() {
            let rec: Vec<&str> = self
                .columns
                .iter()
                .chain(std::iter::once(&self.labels))
                .map(|c| if c.get(r) { "1" } else { "0" })
                .collect();
            wtr.write_record(&rec)?;
        }
        wtr.flush()
    }
}

impl fmt::Display for CoverageTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} rows x {} features ({} positive)",
            self.num_rows(),
            self.num_features(),
            self.positive_count()
        )
    }
}

/// Applies each feature to every table row.
pub fn build_coverage(
    table: &AttributeSummaryTable,
    features: &[Feature],
) -> Result<CoverageTable, FeatureError> {
    let width = table.schema.len();
    if let Some(f) = features.iter().find(|f| f.attribute >= width) {
        return Err(FeatureError::UnknownAttribute {
            index: f.attribute,
            width,
        });
    }
    let columns = features
        .par_iter()
        .map(|f| Bits::from_fn(table.len(), |r| f.holds(&table.rows[r].counts)))
        .collect();
    let labels = Bits::from_fn(table.len(), |r| table.rows[r].chronic);
    CoverageTable::new(features.to_vec(), columns, labels)
}

/// Attributes ordered from most to least worth keeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetentionOrder(pub Vec<Attribute>);

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn has_variance(x: &[f64]) -> bool {
    x.windows(2).any(|w| w[0] != w[1])
}

/// Repeatedly pairs surviving attributes by decreasing |cross-correlation|
/// and discards the member of each pair less correlated with the label.
/// The retention order is the reverse of the discard order.
pub fn prune_attributes(table: &AttributeSummaryTable) -> Result<RetentionOrder, FeatureError> {
    let attrs = table.schema.attributes();
    let columns: Vec<Vec<f64>> = (0..attrs.len()).map(|j| table.column(j)).collect();
    let label: Vec<f64> = table
        .rows
        .iter()
        .map(|r| if r.chronic { 1.0 } else { 0.0 })
        .collect();
    if !has_variance(&label) {
        return Err(FeatureError::OneClass);
    }
    let varying: Vec<bool> = columns.iter().map(|c| has_variance(c)).collect();
    let n_varying = varying.iter().filter(|v| **v).count();
    if n_varying < 2 {
        return Err(FeatureError::TooFewVaryingAttributes(n_varying));
    }
    let k = attrs.len();
    let mut cross = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let c = pearson(&columns[i], &columns[j]);
            cross[i][j] = c;
            cross[j][i] = c;
        }
    }
    let label_corr: Vec<f64> = columns.iter().map(|c| pearson(c, &label)).collect();
    let names: Vec<&str> = attrs.iter().map(|a| a.name()).collect();
    let order = retention_from_correlations(&names, &cross, &label_corr, &varying);
    Ok(RetentionOrder(order.into_iter().map(|i| attrs[i]).collect()))
}

/// The pairing procedure on precomputed correlations. Returns attribute
/// indices, most valuable first. Zero-variance attributes are discarded
/// before any pairing round; ties fall back to attribute names.
pub fn retention_from_correlations(
    names: &[&str],
    cross: &[Vec<f64>],
    label_corr: &[f64],
    varying: &[bool],
) -> Vec<usize> {
    let k = names.len();
    let mut discarded: Vec<usize> = Vec::with_capacity(k);

    let mut constant: Vec<usize> = (0..k).filter(|&i| !varying[i]).collect();
    constant.sort_by_key(|&i| names[i]);
    discarded.extend(constant);

    let mut survivors: Vec<usize> = (0..k).filter(|&i| varying[i]).collect();
    while survivors.len() > 1 {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (a, &i) in survivors.iter().enumerate() {
            for &j in &survivors[a + 1..] {
                let (x, y) = if names[i] <= names[j] { (i, j) } else { (j, i) };
                pairs.push((x, y));
            }
        }
        pairs.sort_by(|&(a, b), &(c, d)| {
            cross[c][d]
                .abs()
                .total_cmp(&cross[a][b].abs())
                .then_with(|| (names[a], names[b]).cmp(&(names[c], names[d])))
        });
        let mut paired = vec![false; k];
        for (a, b) in pairs {
            if paired[a] || paired[b] {
                continue;
            }
            paired[a] = true;
            paired[b] = true;
            // the pair is name-ordered, so on a tie the later name goes
            let loser = if label_corr[b].abs() <= label_corr[a].abs() { b } else { a };
            discarded.push(loser);
        }
        survivors.retain(|i| !discarded.contains(i));
    }
    discarded.extend(survivors);
    discarded.reverse();
    discarded
}
