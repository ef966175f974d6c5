//! CSV and Markdown output of study results.
//!
//! Hold-out CSV columns: `condition, kind, k, A_hat, A_se, E_hat, E_se, C, r,
//! slope, intercept, n2, sigma2`, one line per `(condition, kind, k)`. Floats
//! are written in shortest round-trip form, so the fits can be recomputed
//! bit-for-bit from the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ConditionSpec, EstimatorKind, KEstimate, ResultRow, ToyRegime, ToyRow};
use crate::stats::Estimate;

pub const HOLDOUT_HEADER: [&str; 13] = [
    "condition",
    "kind",
    "k",
    "A_hat",
    "A_se",
    "E_hat",
    "E_se",
    "C",
    "r",
    "slope",
    "intercept",
    "n2",
    "sigma2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Serialize, Deserialize)]
struct HoldOutRecord {
    condition: String,
    kind: String,
    k: usize,
    #[serde(rename = "A_hat")]
    a_hat: f64,
    #[serde(rename = "A_se")]
    a_se: f64,
    #[serde(rename = "E_hat")]
    e_hat: f64,
    #[serde(rename = "E_se")]
    e_se: f64,
    #[serde(rename = "C")]
    c: f64,
    r: f64,
    slope: f64,
    intercept: f64,
    n2: usize,
    sigma2: f64,
}

fn ensure_rows<T>(rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Parameter("no result rows to report".into()));
    }
    Ok(())
}

pub fn holdout_csv(rows: &[ResultRow]) -> Result<String> {
    ensure_rows(rows)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        for e in &row.estimates {
            w.serialize(HoldOutRecord {
                condition: row.condition.to_string(),
                kind: row.kind.label().into(),
                k: e.k,
                a_hat: e.approx.value,
                a_se: e.approx.se,
                e_hat: e.estimation.value,
                e_se: e.estimation.se,
                c: row.approx_fit.c,
                r: row.approx_fit.r,
                slope: row.estimation_fit.slope,
                intercept: row.estimation_fit.intercept,
                n2: row.n2,
                sigma2: row.noise_variance,
            })?;
        }
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(format!("non UTF-8 CSV output: {e}")))
}

/// Parses hold-out CSV and refits every row from the raw estimates. Stored
/// coefficients that disagree with the refit are reported as an error.
pub fn parse_holdout_csv(text: &str) -> Result<Vec<ResultRow>> {
    let records = read_holdout_records(text)?;
    let rows = refit_holdout_records(&records)?;
    let mut at = 0;
    for row in &rows {
        for _ in &row.estimates {
            let r = &records[at];
            at += 1;
            let stored = [r.c, r.r, r.slope, r.intercept];
            let fitted = [
                row.approx_fit.c,
                row.approx_fit.r,
                row.estimation_fit.slope,
                row.estimation_fit.intercept,
            ];
            if stored != fitted {
                return Err(Error::Config(format!(
                    "line {at}: stored coefficients {stored:?} differ from the refit {fitted:?}"
                )));
            }
        }
    }
    Ok(rows)
}

/// Parses hold-out CSV ignoring the stored coefficients and fits again.
pub fn refit_holdout_csv(text: &str) -> Result<Vec<ResultRow>> {
    refit_holdout_records(&read_holdout_records(text)?)
}

fn read_holdout_records(text: &str) -> Result<Vec<HoldOutRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != HOLDOUT_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let records = reader
        .deserialize()
        .collect::<std::result::Result<Vec<HoldOutRecord>, _>>()
        .map_err(|e| Error::Config(format!("malformed CSV: {e}")))?;
    ensure_rows(&records)?;
    Ok(records)
}

fn refit_holdout_records(records: &[HoldOutRecord]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut i = 0;
    while i < records.len() {
        let head = &records[i];
        let condition: ConditionSpec = head.condition.parse()?;
        let kind: EstimatorKind = head.kind.parse()?;
        let mut estimates = Vec::new();
        while i < records.len()
            && records[i].condition == head.condition
            && records[i].kind == head.kind
        {
            let r = &records[i];
            if r.n2 != head.n2 || r.sigma2 != head.sigma2 {
                return Err(Error::Config(format!(
                    "inconsistent n2/sigma2 within {condition} {}",
                    head.kind
                )));
            }
            estimates.push(KEstimate {
                k: r.k,
                approx: Estimate::new(r.a_hat, r.a_se),
                estimation: Estimate::new(r.e_hat, r.e_se),
            });
            i += 1;
        }
        rows.push(ResultRow::from_estimates(
            condition,
            kind,
            head.n2,
            head.sigma2,
            estimates,
        )?);
    }
    Ok(rows)
}

fn format_coefficient(v: f64) -> String {
    if v != 0.0 && (v.abs() < 0.01 || v.abs() >= 1000.0) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Conditions down, tree and forest across; each cell reads
/// `C/k^r + slope·σ²k/n₂`.
pub fn holdout_markdown(rows: &[ResultRow]) -> Result<String> {
    ensure_rows(rows)?;
    let mut conditions: Vec<ConditionSpec> = Vec::new();
    for r in rows {
        if !conditions.contains(&r.condition) {
            conditions.push(r.condition);
        }
    }
    let cell = |c: &ConditionSpec, kind: EstimatorKind| {
        rows.iter()
            .find(|r| r.condition == *c && r.kind == kind)
            .map_or_else(
                || "–".to_string(),
                |r| {
                    format!(
                        "{}/k^{} + {}·σ²k/n₂",
                        format_coefficient(r.approx_fit.c),
                        format_coefficient(r.approx_fit.r),
                        format_coefficient(r.estimation_fit.slope)
                    )
                },
            )
    };
    let mut out = String::from("| Condition | Tree | Forest |\n|---|---|---|\n");
    for c in &conditions {
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            c.describe(),
            cell(c, EstimatorKind::Tree),
            cell(c, EstimatorKind::Forest)
        );
    }
    out.push_str("\nRaw estimates:\n\n| Condition | Kind | k | A | E |\n|---|---|---|---|---|\n");
    for r in rows {
        for e in &r.estimates {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4e} ± {:.1e} | {:.4e} ± {:.1e} |",
                r.condition.describe(),
                r.kind.label(),
                e.k,
                e.approx.value,
                e.approx.se,
                e.estimation.value,
                e.estimation.se
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ToyRecord {
    regime: String,
    k: usize,
    n: usize,
    a: usize,
    trees: usize,
    sigma2: f64,
    #[serde(rename = "A_closed")]
    a_closed: f64,
    #[serde(rename = "E_closed")]
    e_closed: f64,
    #[serde(rename = "A_hat")]
    a_hat: f64,
    #[serde(rename = "A_se")]
    a_se: f64,
    #[serde(rename = "E_hat")]
    e_hat: f64,
    #[serde(rename = "E_se")]
    e_se: f64,
    delta_hat: f64,
    delta_se: f64,
    risk_hat: f64,
    risk_se: f64,
    #[serde(rename = "A_agrees")]
    a_agrees: bool,
    #[serde(rename = "E_agrees")]
    e_agrees: bool,
    boundary_warning: bool,
    small_subsample_warning: bool,
}

pub fn toy_csv(rows: &[ToyRow]) -> Result<String> {
    ensure_rows(rows)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(ToyRecord {
            regime: r.regime.label().into(),
            k: r.k,
            n: r.n,
            a: r.a,
            trees: r.trees,
            sigma2: r.noise_variance,
            a_closed: r.approx_closed,
            e_closed: r.estimation_closed,
            a_hat: r.approx.value,
            a_se: r.approx.se,
            e_hat: r.estimation.value,
            e_se: r.estimation.se,
            delta_hat: r.delta.value,
            delta_se: r.delta.se,
            risk_hat: r.risk.value,
            risk_se: r.risk.se,
            a_agrees: r.approx_agrees,
            e_agrees: r.estimation_agrees,
            boundary_warning: r.boundary_warning,
            small_subsample_warning: r.small_subsample_warning,
        })?;
    }
    into_string(w)
}

pub fn parse_toy_csv(text: &str) -> Result<Vec<ToyRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader
        .deserialize()
        .map(|rec| {
            let r: ToyRecord = rec.map_err(|e| Error::Config(format!("malformed CSV: {e}")))?;
            Ok(ToyRow {
                regime: r.regime.parse::<ToyRegime>()?,
                k: r.k,
                n: r.n,
                a: r.a,
                trees: r.trees,
                noise_variance: r.sigma2,
                approx_closed: r.a_closed,
                estimation_closed: r.e_closed,
                approx: Estimate::new(r.a_hat, r.a_se),
                estimation: Estimate::new(r.e_hat, r.e_se),
                delta: Estimate::new(r.delta_hat, r.delta_se),
                risk: Estimate::new(r.risk_hat, r.risk_se),
                approx_agrees: r.a_agrees,
                estimation_agrees: r.e_agrees,
                boundary_warning: r.boundary_warning,
                small_subsample_warning: r.small_subsample_warning,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ensure_rows(&rows)?;
    Ok(rows)
}

pub fn toy_markdown(rows: &[ToyRow]) -> Result<String> {
    ensure_rows(rows)?;
    let mut out = String::from(
        "| Regime | k | A closed | A MC | E closed | E MC | Δ MC | agrees (A/E) |\n|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3e} | {:.3e} ± {:.1e} | {:.3e} | {:.3e} ± {:.1e} | {:.1e} | {}/{} |",
            r.regime.label(),
            r.k,
            r.approx_closed,
            r.approx.value,
            r.approx.se,
            r.estimation_closed,
            r.estimation.value,
            r.estimation.se,
            r.delta.value,
            if r.approx_agrees { "yes" } else { "no" },
            if r.estimation_agrees { "yes" } else { "no" },
        );
    }
    Ok(out)
}

/// Writes `<stem>.csv` or `<stem>.md` into `dir`, creating it if needed.
pub fn write_report(
    dir: &Path,
    stem: &str,
    format: ReportFormat,
    contents: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(match format {
        ReportFormat::Csv => format!("{stem}.csv"),
        ReportFormat::Markdown => format!("{stem}.md"),
    });
    fs::write(&path, contents)?;
    Ok(path)
}

/// Renders hold-out rows in `format` and writes them under `dir`.
pub fn emit_report(rows: &[ResultRow], format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    let text = match format {
        ReportFormat::Csv => holdout_csv(rows)?,
        ReportFormat::Markdown => holdout_markdown(rows)?,
    };
    write_report(dir, "horf", format, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ToyRow;

    fn row(cond: ConditionSpec, kind: EstimatorKind, scale: f64) -> ResultRow {
        let estimates = [32, 64, 128, 256]
            .iter()
            .map(|&k| KEstimate {
                k,
                approx: Estimate::new(
                    scale * 0.13 * (k as f64).powf(-0.17) + 1e-17,
                    1.0 / 3.0 * 1e-4,
                ),
                estimation: Estimate::new(0.1 * (1.04 * k as f64 + 0.3) / 25600.0 / 16.0, 2e-7),
            })
            .collect();
        ResultRow::from_estimates(cond, kind, 25600, 0.0625, estimates).unwrap()
    }

    fn rows() -> Vec<ResultRow> {
        ConditionSpec::defaults(5)
            .into_iter()
            .flat_map(|c| {
                [
                    row(c, EstimatorKind::Tree, 1.0),
                    row(c, EstimatorKind::Forest, 0.7),
                ]
            })
            .collect()
    }

    #[test]
    fn csv_round_trip() {
        let rows = rows();
        let text = holdout_csv(&rows).unwrap();
        assert!(text
            .starts_with("condition,kind,k,A_hat,A_se,E_hat,E_se,C,r,slope,intercept,n2,sigma2\n"));
        assert_eq!(text.lines().count(), 1 + 8 * 4);
        assert_eq!(parse_holdout_csv(&text).unwrap(), rows);
    }

    #[test]
    fn tampered_coefficients_detected() {
        let text = holdout_csv(&rows()).unwrap();
        let line = text.lines().nth(1).unwrap();
        let mut fields: Vec<&str> = line.split(',').collect();
        fields[8] = "0.5";
        let tampered = text.replacen(line, &fields.join(","), 1);
        assert!(parse_holdout_csv(&tampered).is_err());
        assert_eq!(refit_holdout_csv(&tampered).unwrap(), rows());
    }

    #[test]
    fn markdown_layout() {
        let md = holdout_markdown(&rows()).unwrap();
        let table: Vec<&str> = md.lines().take_while(|l| !l.is_empty()).collect();
        assert_eq!(table.len(), 2 + 4);
        assert!(
            table[2].starts_with("| No bootstrap, mtry=5 | 0.13/k^0.17 + 0.10·σ²k/n₂"),
            "{}",
            table[2]
        );
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(holdout_csv(&[]).is_err());
        assert!(holdout_markdown(&[]).is_err());
        assert!(toy_csv(&[]).is_err());
        assert!(parse_holdout_csv(&HOLDOUT_HEADER.join(",")).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_holdout_csv("a,b\n1,2\n").unwrap_err().is_config());
    }

    #[test]
    fn toy_round_trip() {
        let r = ToyRow {
            regime: ToyRegime::RandomForest,
            k: 16,
            n: 32768,
            a: 32768,
            trees: 1024,
            noise_variance: 1.0,
            approx_closed: 1.0 / 36.0 / 65536.0,
            estimation_closed: 32.0 / 98304.0,
            approx: Estimate::new(4.1e-7, 3e-8),
            estimation: Estimate::new(3.3e-4, 2e-6),
            delta: Estimate::new(1e-9, 1e-10),
            risk: Estimate::new(3.31e-4, 2e-6),
            approx_agrees: true,
            estimation_agrees: true,
            boundary_warning: false,
            small_subsample_warning: false,
        };
        let rows = vec![
            r,
            ToyRow {
                regime: ToyRegime::FixedTree,
                ..r
            },
        ];
        let text = toy_csv(&rows).unwrap();
        assert_eq!(parse_toy_csv(&text).unwrap(), rows);
        assert_eq!(toy_markdown(&rows).unwrap().lines().count(), 4);
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        let p = emit_report(&rows(), ReportFormat::Csv, &out).unwrap();
        assert_eq!(
            parse_holdout_csv(&fs::read_to_string(p).unwrap()).unwrap(),
            rows()
        );
        let p = emit_report(&rows(), ReportFormat::Markdown, &out).unwrap();
        assert!(p.ends_with("horf.md"));
        let blocked = dir.path().join("file");
        fs::write(&blocked, "x").unwrap();
        assert!(matches!(
            emit_report(&rows(), ReportFormat::Csv, &blocked),
            Err(Error::Io(_))
        ));
    }
}
