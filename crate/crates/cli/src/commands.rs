use crate::error::CliError;
use crate::settings::{self, Settings};
use chrono::NaiveDate;
use chronorules_core::eval::{baseline_tti, cross_validate, replay, CvReport};
use chronorules_core::event_model::{build_timelines, read_events, write_events, ClientTimeline, StudyInterval};
use chronorules_core::features::{build_coverage, generate_features, prune_attributes, CoverageTable};
use chronorules_core::synthgen::{describe_timelines, generate_cohort, summarize, ClassSummary};
use chronorules_core::tabulate::{build_attribute_table, meeting_schedule, AttributeSchema, AttributeSummaryTable};
use chronorules_core::{RuleSet, SearchConfig, WindowSize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Loaded events grouped per client, with the monthly meeting dates over
/// the span they cover.
struct Cohort {
    timelines: Vec<ClientTimeline>,
    meetings: Vec<NaiveDate>,
}

fn load_cohort(path: &Path) -> Result<Cohort, CliError> {
    let file = File::open(path).map_err(CliError::io(path.display().to_string()))?;
    let events = read_events(BufReader::new(file), None)?;
    let meetings = StudyInterval::spanning(&events)
        .map(|span| meeting_schedule(span.start, span.end))
        .unwrap_or_default();
    Ok(Cohort {
        timelines: build_timelines(events),
        meetings,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(path.display().to_string()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(contents)
        .and_then(|_| w.flush())
        .map_err(CliError::io(path.display().to_string()))
}

fn table_and_coverage(
    cohort: &Cohort,
    window: WindowSize,
    schema: &AttributeSchema,
) -> Result<(AttributeSummaryTable, CoverageTable), CliError> {
    let table = build_attribute_table(&cohort.timelines, window, schema, &cohort.meetings);
    let features = generate_features(&table)?;
    let coverage = build_coverage(&table, &features)?;
    Ok((table, coverage))
}

pub fn gen(s: &Settings) -> Result<(), CliError> {
    let cohort = generate_cohort(&s.cohort)?;
    let out = s.out_or("events.csv");
    let mut w = create(&out)?;
    write_events(&mut w, &cohort.events)
        .and_then(|_| w.flush())
        .map_err(CliError::io(out.display().to_string()))?;
    let chronic = cohort.classes.iter().filter(|(_, c)| *c).count();
    println!("seed: {}", s.cohort.seed);
    println!(
        "clients: {} ({} chronic), events: {}",
        cohort.classes.len(),
        chronic,
        cohort.events.len()
    );
    println!("wrote {}", out.display());
    Ok(())
}

pub fn tabulate(s: &Settings) -> Result<(), CliError> {
    let cohort = load_cohort(s.events_path()?)?;
    let window = s.window_or_default()?;
    let schema = s.schema()?;
    let table = build_attribute_table(&cohort.timelines, window, &schema, &cohort.meetings);
    let out = s.out_or("table.csv");
    let mut w = create(&out)?;
    table
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(out.display().to_string()))?;
    println!(
        "window: {} days, rows: {} ({} chronic)",
        window.days(),
        table.len(),
        table.positives()
    );
    match prune_attributes(&table) {
        Ok(order) => {
            let names: Vec<&str> = order.0.iter().map(|a| a.name()).collect();
            println!("retention order: {}", names.join(", "));
        }
        Err(e) => println!("retention order: unavailable ({e})"),
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn learn(s: &Settings) -> Result<(), CliError> {
    let cohort = load_cohort(s.events_path()?)?;
    let window = s.window_or_default()?;
    let schema = s.schema()?;
    let (table, coverage) = table_and_coverage(&cohort, window, &schema)?;
    let rules = RuleSet::learn(&coverage, &s.search(), window, &schema)?;
    let out = s.out_or("rules.json");
    write_file(&out, format!("{}\n", rules.to_json()).as_bytes())?;

    println!(
        "window: {} days, attributes: {}",
        window.days(),
        schema.names().join(",")
    );
    println!(
        "rows: {} ({} chronic), features: {}",
        table.len(),
        table.positives(),
        coverage.num_features()
    );
    let training = rules.training.as_ref().expect("freshly learned");
    println!("rule,tp,fp,fscore");
    for (conj, rule) in rules.rules.iter().zip(&training.rules) {
        println!(
            "{},{},{},{:.4}",
            conj.describe(schema.attributes()),
            rule.counts.tp,
            rule.counts.fp,
            rule.score
        );
    }
    println!(
        "training precision: {:.4}, recall: {:.4}",
        training.aggregate.precision(),
        training.aggregate.recall()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cv_csv(report: &CvReport) -> String {
    let mut text = String::from("fold,tp,fp,pos_total,neg_total,precision,recall\n");
    for (i, f) in report.folds.iter().enumerate() {
        let _ = writeln!(
            text,
            "{i},{},{},{},{},{:.4},{:.4}",
            f.tp,
            f.fp,
            f.pos_total,
            f.neg_total,
            f.precision(),
            f.recall()
        );
    }
    text
}

pub fn crossval(s: &Settings) -> Result<(), CliError> {
    let cohort = load_cohort(s.events_path()?)?;
    let window = s.window_or_default()?;
    let schema = s.schema()?;
    let (_, coverage) = table_and_coverage(&cohort, window, &schema)?;
    let report = cross_validate(&coverage, &s.search(), s.folds, s.seed)?;
    let csv = cv_csv(&report);
    println!("seed: {}", s.seed);
    print!("{csv}");
    println!(
        "mean precision: {:.4}, mean recall: {:.4}",
        report.mean_precision, report.mean_recall
    );
    if let Some(out) = &s.out {
        write_file(out, csv.as_bytes())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn load_rules(path: &Path) -> Result<RuleSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
    Ok(RuleSet::from_json(&text)?)
}

/// `report.json` -> `report_clients.csv` in the same directory.
pub fn clients_csv_path(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map_or_else(|| "replay".into(), |s| s.to_string_lossy().into_owned());
    report.with_file_name(format!("{stem}_clients.csv"))
}

fn fmt_days(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |d| format!("{d:.1}"))
}

pub fn replay_cmd(s: &Settings) -> Result<(), CliError> {
    let cohort = load_cohort(s.events_path()?)?;
    let rules = load_rules(s.rules_path()?)?;
    let window = match s.window {
        Some(days) => settings::window(days)?,
        None => rules.window,
    };
    let report = replay(&cohort.timelines, &rules, window, &cohort.meetings)?;
    let out = s.out_or("replay.json");
    write_file(&out, format!("{}\n", report.to_json()).as_bytes())?;
    let clients_path = clients_csv_path(&out);
    let mut w = create(&clients_path)?;
    report
        .write_clients_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(clients_path.display().to_string()))?;

    println!("window: {} days, meetings: {}", window.days(), report.meetings.len());
    println!("rules: {rules}");
    println!("tp,fn,fp,tn");
    println!("{},{},{},{}", report.tp, report.fn_, report.fp, report.tn);
    println!(
        "precision: {:.4}, recall: {:.4}, clients per month: {:.4}",
        report.precision, report.recall, report.clients_per_month
    );
    println!(
        "median tti: {} days, baseline: {} days",
        fmt_days(report.median_tti_days),
        fmt_days(baseline_tti(&cohort.timelines).ok())
    );
    println!("wrote {} and {}", out.display(), clients_path.display());
    Ok(())
}

fn grid<T: Clone>(given: &Option<Vec<T>>, default: T, name: &str) -> Result<Vec<T>, CliError> {
    match given {
        Some(v) if v.is_empty() => Err(CliError::Usage(format!("empty {name} grid"))),
        Some(v) => Ok(v.clone()),
        None => Ok(vec![default]),
    }
}

pub fn sweep(s: &Settings) -> Result<(), CliError> {
    let windows = grid(&s.grid.windows, s.window.unwrap_or(settings::DEFAULT_WINDOW), "window")?;
    let betas = grid(&s.grid.beta2, s.beta2, "beta2")?;
    let attr_sets = grid(&s.grid.attrs, s.attrs.clone(), "attrs")?;
    let lens = grid(&s.grid.max_rule_len, s.max_rule_len, "max-rule-len")?;
    let sizes = grid(&s.grid.max_set_size, s.max_set_size, "max-set-size")?;
    // validate the whole grid before the expensive part
    for &w in &windows {
        settings::window(w)?;
    }
    for a in &attr_sets {
        settings::schema(a)?;
    }

    let cohort = load_cohort(s.events_path()?)?;
    let out = s.out_or("sweep.csv");
    let mut csv = String::from("w,beta2,attrs,max_rule_len,max_set_size,precision,recall,rule\n");
    println!("seed: {}", s.seed);
    print!("{csv}");
    let mut tables = BTreeMap::new();
    for &w in &windows {
        for &beta2 in &betas {
            for attrs in &attr_sets {
                for &max_rule_len in &lens {
                    for &max_set_size in &sizes {
                        let window = settings::window(w)?;
                        let schema = settings::schema(attrs)?;
                        let key = (w, schema.names().join(","));
                        if !tables.contains_key(&key) {
                            let built = table_and_coverage(&cohort, window, &schema)?;
                            tables.insert(key.clone(), built.1);
                        }
                        let coverage = &tables[&key];
                        let config = SearchConfig {
                            beta2,
                            max_rule_len,
                            max_set_size,
                        };
                        let cv = cross_validate(coverage, &config, s.folds, s.seed)?;
                        let rules = RuleSet::learn(coverage, &config, window, &schema)?;
                        let row = format!(
                            "{w},{beta2},{},{max_rule_len},{max_set_size},{:.4},{:.4},{}\n",
                            quote(attrs),
                            cv.mean_precision,
                            cv.mean_recall,
                            quote(&rules.to_string())
                        );
                        print!("{row}");
                        csv.push_str(&row);
                    }
                }
            }
        }
    }
    write_file(&out, csv.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}

fn summary_rows(text: &mut String, class: &str, summary: Option<&ClassSummary>) {
    let Some(summary) = summary else {
        return;
    };
    for (name, v) in summary.rows() {
        let _ = writeln!(
            text,
            "{class},{name},{:.1},{:.1},{:.1},{:.1}",
            v.average, v.median, v.p10, v.p90
        );
    }
}

pub fn describe(s: &Settings) -> Result<(), CliError> {
    let cohort = load_cohort(s.events_path()?)?;
    let summary = describe_timelines(&cohort.timelines);
    let mut csv = String::from("class,statistic,average,median,p10,p90\n");
    summary_rows(&mut csv, "chronic", summary.chronic.as_ref());
    summary_rows(&mut csv, "non_chronic", summary.non_chronic.as_ref());
    let count = |c: &Option<ClassSummary>| c.as_ref().map_or(0, |c| c.clients);
    println!(
        "clients: {} chronic, {} non-chronic",
        count(&summary.chronic),
        count(&summary.non_chronic)
    );

    if let Some(path) = &s.rules {
        let rules = load_rules(path)?;
        let window = match s.window {
            Some(days) => settings::window(days)?,
            None => rules.window,
        };
        let report = replay(&cohort.timelines, &rules, window, &cohort.meetings)?;
        let fp: Vec<&ClientTimeline> = cohort
            .timelines
            .iter()
            .zip(&report.clients)
            .filter(|(_, c)| !c.chronic && c.detected.is_some())
            .map(|(tl, _)| tl)
            .collect();
        println!("false positives: {}", fp.len());
        summary_rows(&mut csv, "false_positive", summarize(fp).as_ref());
    }
    print!("{csv}");
    if let Some(out) = &s.out {
        write_file(out, csv.as_bytes())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
