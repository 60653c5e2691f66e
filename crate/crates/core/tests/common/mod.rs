//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use chronorules_core::features::{CoverageTable, Feature, Operator};
use chronorules_core::opus::{compare_candidates, fbeta, MetricCounts};
use chronorules_core::tabulate::AttributeSummaryTable;
use chronorules_core::Bits;
use rand::Rng;
use std::cmp::Ordering;

pub fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).unwrap()
}

pub fn day(n: i64) -> NaiveDate {
    day0() + Duration::days(n)
}

/// Coverage table with placeholder features, one per column.
pub fn coverage_from(columns: &[Vec<bool>], labels: &[bool]) -> CoverageTable {
    let features = (0..columns.len())
        .map(|j| Feature::new(0, Operator::Ge, j as f64))
        .collect();
    let cols = columns
        .iter()
        .map(|c| Bits::from_fn(c.len(), |i| c[i]))
        .collect();
    CoverageTable::new(features, cols, Bits::from_fn(labels.len(), |i| labels[i])).unwrap()
}

/// Random table with at least one positive row, covered by column 0.
/// Column densities vary so that both sparse and dense features appear.
pub fn random_coverage<R: Rng>(rng: &mut R, max_rows: usize, max_features: usize) -> CoverageTable {
    let n = rng.random_range(2..=max_rows);
    let l = rng.random_range(1..=max_features);
    let pos_rate = rng.random_range(0.1..0.6);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(pos_rate)).collect();
    let forced = rng.random_range(0..n);
    labels[forced] = true;
    let mut columns: Vec<Vec<bool>> = (0..l)
        .map(|_| {
            let density = rng.random_range(0.2..0.95);
            (0..n).map(|_| rng.random_bool(density)).collect()
        })
        .collect();
    columns[0][forced] = true;
    coverage_from(&columns, &labels)
}

fn subsets(l: usize, max_len: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let start = prefix.last().map_or(0, |&x| x + 1);
    for j in start..l {
        prefix.push(j);
        out.push(prefix.clone());
        if prefix.len() < max_len {
            subsets(l, max_len, prefix, out);
        }
        prefix.pop();
    }
}

/// Every conjunction of 1..=max_len distinct features, scored on `mask`;
/// returns the canonical best (score, indices, tp, fp).
pub fn brute_force_best(
    cov: &CoverageTable,
    mask: &Bits,
    beta2: f64,
    max_len: usize,
) -> (f64, Vec<usize>, usize, usize) {
    let pos_total = mask.and_count(cov.labels());
    let neg_total = mask.count_ones() - pos_total;
    let mut all = Vec::new();
    subsets(cov.num_features(), max_len, &mut Vec::new(), &mut all);
    let mut best: Option<(f64, Vec<usize>, usize, usize)> = None;
    for idx in all {
        let mut c = mask.clone();
        for &j in &idx {
            c.and_assign(cov.column(j));
        }
        let tp = c.and_count(cov.labels());
        let fp = c.count_ones() - tp;
        let counts = MetricCounts {
            tp,
            fp,
            pos_total,
            neg_total,
        };
        let s = fbeta(&counts, beta2).unwrap();
        let better = match &best {
            None => true,
            Some((bs, bi, _, _)) => compare_candidates(s, &idx, *bs, bi) == Ordering::Less,
        };
        if better {
            best = Some((s, idx, tp, fp));
        }
    }
    best.unwrap()
}

/// Earliest day whose trailing `window`-day span holds `min` stays, checked
/// for every calendar day from the first stay on with a per-day prefix count.
pub fn window_oracle(stays: &[NaiveDate], window: i64, min: usize) -> Option<NaiveDate> {
    let first = *stays.first()?;
    let span = (*stays.last()? - first).num_days() as usize + 1;
    let mut prefix = vec![0usize; span + 1];
    for &s in stays {
        prefix[(s - first).num_days() as usize + 1] += 1;
    }
    for i in 1..=span {
        prefix[i] += prefix[i - 1];
    }
    (0..span).find_map(|d| {
        let lo = (d + 1).saturating_sub(window as usize);
        (prefix[d + 1] - prefix[lo] >= min).then(|| first + Duration::days(d as i64))
    })
}

/// Both chronic criteria, earliest hit wins.
pub fn chronic_oracle(stays: &[NaiveDate]) -> Option<NaiveDate> {
    match (window_oracle(stays, 365, 180), window_oracle(stays, 1095, 546)) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Midpoints between adjacent distinct values with a positive row at one
/// value and a negative row at the other, found by scanning all rows.
pub fn naive_midpoints(table: &AttributeSummaryTable) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for a in 0..table.schema.len() {
        let mut values: Vec<u32> = table.rows.iter().map(|r| r.counts[a]).collect();
        values.sort_unstable();
        values.dedup();
        for w in values.windows(2) {
            let has = |v: u32, label: bool| {
                table
                    .rows
                    .iter()
                    .any(|r| r.counts[a] == v && r.chronic == label)
            };
            if (has(w[0], true) && has(w[1], false)) || (has(w[0], false) && has(w[1], true)) {
                out.push((a, (w[0] as f64 + w[1] as f64) / 2.0));
            }
        }
    }
    out
}
