//! CSV output of experiment results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{plot, ExperimentOutput, StatSummary, Trace, TrialRecord};
use crate::recognizer::{trace_header, write_trace_row};
use crate::{Error, Result};

pub const RECORDS_HEADER: &str = "object,method,policy,beta,trial,grasps,decided,correct,capped";
pub const SUMMARY_HEADER: &str = "object,method,policy,beta,min,max,avg,median,error_pct,capped";

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = format!("{RECORDS_HEADER}\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.object,
            r.method,
            r.policy,
            r.beta,
            r.trial,
            r.grasps,
            r.decided.as_deref().unwrap_or(""),
            r.correct,
            r.capped
        )
        .unwrap();
    }
    out
}

/// Parses the output of [`records_csv`].
pub fn read_records_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(Error::Parse("records CSV: unexpected header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || Error::Parse(format!("records CSV line {}: `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad());
            }
            Ok(TrialRecord {
                object: f[0].to_string(),
                method: f[1].parse().map_err(|_| bad())?,
                policy: f[2].parse().map_err(|_| bad())?,
                beta: f[3].parse().map_err(|_| bad())?,
                trial: f[4].parse().map_err(|_| bad())?,
                grasps: f[5].parse().map_err(|_| bad())?,
                decided: (!f[6].is_empty()).then(|| f[6].to_string()),
                correct: f[7].parse().map_err(|_| bad())?,
                capped: f[8].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn summary_csv(summaries: &[StatSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.4},{:.1},{:.2},{}",
            s.object,
            s.method,
            s.policy,
            s.beta,
            s.min,
            s.max,
            s.avg,
            s.median,
            s.error_pct,
            s.capped
        )
        .unwrap();
    }
    out
}

pub fn traces_csv(traces: &[Trace], objects: &[String]) -> String {
    let mut out = format!("object,method,policy,{}", trace_header(objects));
    let mut row = String::new();
    for t in traces {
        for r in &t.rows {
            row.clear();
            write_trace_row(&mut row, r);
            write!(
                out,
                "{},{},{},{row}",
                objects[t.spec.object], t.spec.method, t.spec.policy
            )
            .unwrap();
        }
    }
    out
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `records.csv`, `summary.csv`, `traces.csv` (when traces were
/// kept) and the SVG figures into `dir`, returning the written paths.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write_file(dir.join("records.csv"), &records_csv(&output.records))?,
        write_file(dir.join("summary.csv"), &summary_csv(&output.summaries))?,
    ];
    if !output.traces.is_empty() {
        written.push(write_file(
            dir.join("traces.csv"),
            &traces_csv(&output.traces, &output.objects),
        )?);
    }
    written.extend(emit_plots(&output.summaries, &output.records, dir)?);
    Ok(written)
}

/// Writes every SVG figure into `dir`.
pub fn emit_plots(
    summaries: &[StatSummary],
    records: &[TrialRecord],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    plot::figures(summaries, records)
        .into_iter()
        .map(|(name, svg)| write_file(dir.join(name), &svg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::Policy;
    use crate::features::Method;

    fn records() -> Vec<TrialRecord> {
        vec![
            TrialRecord {
                object: "bowl".into(),
                method: Method::PointNormal,
                policy: Policy::Active,
                beta: 0.95,
                trial: 3,
                grasps: 4,
                decided: Some("bowl".into()),
                correct: true,
                capped: false,
            },
            TrialRecord {
                object: "mug".into(),
                method: Method::Point,
                policy: Policy::Passive,
                beta: 0.5,
                trial: 0,
                grasps: 500,
                decided: None,
                correct: false,
                capped: true,
            },
        ]
    }

    #[test]
    fn records_round_trip() {
        let text = records_csv(&records());
        assert!(text.starts_with(RECORDS_HEADER));
        assert_eq!(read_records_csv(&text).unwrap(), records());
    }

    #[test]
    fn summary_columns() {
        let s = super::super::summarize(&records()).unwrap();
        let text = summary_csv(&s);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SUMMARY_HEADER));
        assert_eq!(
            lines.next(),
            Some("bowl,PN,active,0.95,4,4,4.0000,4.0,0.00,0")
        );
        assert_eq!(
            lines.next(),
            Some("mug,P,passive,0.5,500,500,500.0000,500.0,100.00,1")
        );
    }

    #[test]
    fn malformed_records_are_rejected() {
        assert!(read_records_csv("nope\n").is_err());
        let bad = format!("{RECORDS_HEADER}\nbowl,PN,active,x,0,1,bowl,true,false\n");
        assert!(read_records_csv(&bad).is_err());
    }
}
