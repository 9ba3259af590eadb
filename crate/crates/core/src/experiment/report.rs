use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use log::warn;

use super::design::{DesignRow, Factor, FACTOR_COUNT};
use super::runner::{ExperimentResults, TrialRecord};
use super::stats::{anova, range_analysis, significance, Anova, FactorRange, Observation};
use crate::error::{Error, Result};
use crate::safety::{Indicator, IndicatorTable};

const STATUS_OK: &str = "ok";
const STATUS_FAILED: &str = "failed";

/// Values of `which` over completed trials.
pub fn observations(results: &ExperimentResults, which: Indicator) -> Vec<Observation> {
    results
        .completed()
        .map(|(t, i)| Observation {
            levels: t.design.levels,
            value: i.get(which) as f64,
        })
        .collect()
}

pub struct Analysis {
    pub indicator: Indicator,
    pub ranges: Vec<FactorRange>,
    pub anova: Anova,
}

pub fn analyze_results(results: &ExperimentResults) -> Vec<Analysis> {
    if results.failed() > 0 {
        warn!(
            "{} failed trial(s) excluded; level means use the remaining counts",
            results.failed()
        );
    }
    Indicator::ALL
        .iter()
        .map(|&indicator| {
            let obs = observations(results, indicator);
            Analysis {
                indicator,
                ranges: range_analysis(&obs),
                anova: anova(&obs),
            }
        })
        .collect()
}

fn csv_header() -> Vec<String> {
    let mut h = vec!["row".to_string(), "replication".to_string()];
    h.extend(Factor::ALL.iter().map(|f| f.name().to_string()));
    h.push("status".to_string());
    h.extend(Indicator::ALL.iter().map(|i| i.name().to_string()));
    h
}

pub fn write_indicators_csv<W: Write>(w: W, results: &ExperimentResults) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(csv_header())?;
    for t in results.trials.values() {
        let mut rec = vec![t.design.row.to_string(), t.replication.to_string()];
        rec.extend(Factor::ALL.iter().map(|&f| t.design.label(f).to_string()));
        match &t.indicators {
            Some(i) => {
                rec.push(STATUS_OK.into());
                rec.extend(Indicator::ALL.iter().map(|&k| i.get(k).to_string()));
            }
            None => {
                rec.push(STATUS_FAILED.into());
                rec.extend(Indicator::ALL.iter().map(|_| String::new()));
            }
        }
        out.write_record(rec)?;
    }
    out.flush().map_err(|e| Error::io("writing indicator table", e))
}

/// Parses an indicator table written by [`write_indicators_csv`] (or an
/// external table with the same columns).
pub fn read_indicators_csv<R: Read>(reader: R, source: &str) -> Result<ExperimentResults> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = csv_header();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut trials = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        if rec.len() != expected.len() {
            return Err(bad(format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let row: u8 = rec[0].trim().parse().map_err(|e| bad(format!("column row: {e}")))?;
        let replication: u32 = rec[1]
            .trim()
            .parse()
            .map_err(|e| bad(format!("column replication: {e}")))?;
        let mut levels = [0; FACTOR_COUNT];
        for (k, f) in Factor::ALL.iter().enumerate() {
            levels[k] = f
                .level_of(&rec[2 + k])
                .ok_or_else(|| bad(format!("column {}: unknown level {:?}", f.name(), &rec[2 + k])))?;
        }
        let status_col = 2 + FACTOR_COUNT;
        let indicators = match rec[status_col].trim() {
            STATUS_OK => {
                let mut t = IndicatorTable::default();
                for (k, ind) in Indicator::ALL.iter().enumerate() {
                    let v: u64 = rec[status_col + 1 + k]
                        .trim()
                        .parse()
                        .map_err(|e| bad(format!("column {}: {e}", ind.name())))?;
                    t.set(*ind, v);
                }
                if !t.is_consistent() {
                    warn!("{source}:{line}: indicator totals do not add up");
                }
                Some(t)
            }
            STATUS_FAILED => None,
            other => return Err(bad(format!("column status: unknown value {other:?}"))),
        };
        let design = DesignRow { row, levels };
        if trials
            .insert(
                (row, replication),
                TrialRecord {
                    design,
                    replication,
                    indicators,
                },
            )
            .is_some()
        {
            return Err(bad(format!("duplicate trial {row}/{replication}")));
        }
    }
    Ok(ExperimentResults { trials })
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.4}")
    }
}

fn fmt_p(p: f64) -> String {
    if p.is_nan() {
        String::new()
    } else {
        format!("{p:.6}")
    }
}

pub fn write_range_csv<W: Write>(w: W, analyses: &[Analysis], any_data: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["indicator", "factor", "level", "count", "sum", "mean", "range", "rank"])?;
    if any_data {
        for a in analyses {
            for r in &a.ranges {
                for (l, label) in r.factor.levels().iter().enumerate() {
                    out.write_record([
                        a.indicator.name().to_string(),
                        r.factor.name().to_string(),
                        label.to_string(),
                        r.counts[l].to_string(),
                        fmt_num(r.sums[l]),
                        fmt_num(r.means[l]),
                        fmt_num(r.range),
                        r.rank.to_string(),
                    ])?;
                }
            }
        }
    }
    out.flush().map_err(|e| Error::io("writing range analysis", e))
}

/// p-value grid: one row per factor, one column per indicator.
pub fn write_anova_csv<W: Write>(w: W, analyses: &[Analysis], any_data: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["factor".to_string(), "df".to_string()];
    header.extend(analyses.iter().map(|a| a.indicator.name().to_string()));
    out.write_record(&header)?;
    if any_data {
        for (k, f) in Factor::ALL.iter().enumerate() {
            let mut rec = vec![f.name().to_string(), analyses[0].anova.rows[k].df.to_string()];
            rec.extend(analyses.iter().map(|a| fmt_p(a.anova.rows[k].p)));
            out.write_record(rec)?;
        }
    }
    out.flush().map_err(|e| Error::io("writing ANOVA table", e))
}

/// Level label with the lowest mean (ties to the first level).
fn best_level(r: &FactorRange) -> Option<&'static str> {
    r.means
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_nan())
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(l, _)| r.factor.levels()[l])
}

pub fn summary_text(results: &ExperimentResults, analyses: &[Analysis]) -> String {
    let completed = results.completed().count();
    let mut s = String::new();
    let _ = writeln!(s, "work-zone orthogonal experiment");
    let _ = writeln!(
        s,
        "trials: {} recorded, {} completed, {} failed",
        results.trials.len(),
        completed,
        results.failed()
    );
    if let Some(a) = analyses.first() {
        let df_factors: usize = a.anova.rows.iter().map(|r| r.df).sum();
        let _ = writeln!(
            s,
            "ANOVA: main effects only, no intercept row; df factors = {df_factors}, df error = {}, df total = {}",
            a.anova.df_error, a.anova.df_total
        );
    }
    let _ = writeln!(s, "significance: * p < 0.05, ** p < 0.01");
    if completed == 0 {
        let _ = writeln!(s, "\nno completed trials");
        return s;
    }
    for a in analyses {
        let _ = writeln!(s, "\n[{}]", a.indicator);
        let _ = writeln!(
            s,
            "grand mean {:.4}, SS total {:.4}, SS error {:.4}{}",
            a.anova.grand_mean,
            a.anova.ss_total,
            a.anova.ss_error,
            if a.anova.degenerate { " (zero error variance)" } else { "" }
        );
        let _ = writeln!(
            s,
            "{:<24} {:>10} {:>4} {:>3} {:>10} {:>9} {:<3} lowest-mean level",
            "factor", "range", "rank", "df", "F", "p", "sig"
        );
        for (r, row) in a.ranges.iter().zip(&a.anova.rows) {
            let _ = writeln!(
                s,
                "{:<24} {:>10.4} {:>4} {:>3} {:>10} {:>9.6} {:<3} {}",
                r.factor.name(),
                r.range,
                r.rank,
                row.df,
                fmt_num(row.f),
                row.p,
                significance(row.p),
                best_level(r).unwrap_or("-")
            );
        }
    }
    let total = analyses
        .iter()
        .find(|a| a.indicator == Indicator::TotalConflicts)
        .expect("all indicators analysed");
    let _ = writeln!(s, "\noptimal levels (lowest mean totalConflicts)");
    for r in &total.ranges {
        let _ = writeln!(s, "{:<24} {}", r.factor.name(), best_level(r).unwrap_or("-"));
    }
    s
}

/// Writes indicators.csv, range_analysis.csv, anova.csv and summary.txt
/// into `dir`.
pub fn emit_report(results: &ExperimentResults, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let analyses = analyze_results(results);
    let any = results.completed().next().is_some();
    let open = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))
    };
    write_indicators_csv(open("indicators.csv")?, results)?;
    write_range_csv(open("range_analysis.csv")?, &analyses, any)?;
    write_anova_csv(open("anova.csv")?, &analyses, any)?;
    let path = dir.join("summary.txt");
    fs::write(&path, summary_text(results, &analyses))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Re-reads an indicator table and regenerates the full report.
pub fn analyze_file(indicators: &Path, dir: &Path) -> Result<ExperimentResults> {
    let file = File::open(indicators).map_err(|e| Error::io(format!("opening {}", indicators.display()), e))?;
    let results = read_indicators_csv(file, &indicators.display().to_string())?;
    emit_report(&results, dir)?;
    Ok(results)
}
