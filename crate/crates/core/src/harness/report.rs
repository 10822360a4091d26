//! Comparison reports and plot data, computed from a result store.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::experiment::{write_curve_csv, ResultStore};
use crate::error::{Error, Result};
use crate::metrics::{compare, ComparisonReport, CurvePoint, Metric};
use crate::rankers::RankerKind;

/// `baseline:method`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pairing {
    pub baseline: String,
    pub method: String,
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((b, m)) if !b.is_empty() && !m.is_empty() => Ok(Pairing {
                baseline: b.to_string(),
                method: m.to_string(),
            }),
            _ => Err(Error::invalid(format!("pairing `{s}` is not of the form baseline:method"))),
        }
    }
}

/// Comma separated `baseline:method` list.
pub fn parse_pairings(s: &str) -> Result<Vec<Pairing>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse()).collect()
}

/// The baseline ranker against every other ranker in the store.
pub fn default_pairings(store: &ResultStore) -> Vec<Pairing> {
    let Ok(curves) = store.curves() else {
        return Vec::new();
    };
    let base = RankerKind::Baseline.name();
    if !curves.contains_key(base) {
        return Vec::new();
    }
    curves
        .keys()
        .filter(|k| k.as_str() != base)
        .map(|k| Pairing {
            baseline: base.to_string(),
            method: k.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub baseline: String,
    pub auc_ratio: f64,
    pub auclog_ratio: f64,
    /// A number, or the string `undefined` when the curves never share a
    /// quality level.
    pub questions_saved: serde_json::Value,
}

impl From<&ComparisonReport> for ReportRow {
    fn from(c: &ComparisonReport) -> Self {
        ReportRow {
            method: c.method.clone(),
            baseline: c.baseline.clone(),
            auc_ratio: c.auc_ratio,
            auclog_ratio: c.auclog_ratio,
            questions_saved: c
                .questions_saved
                .map_or_else(|| "undefined".into(), serde_json::Value::from),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub config_hash: String,
    pub metric: Metric,
    pub curves: std::collections::BTreeMap<String, Vec<CurvePoint>>,
    pub comparisons: Vec<ReportRow>,
    #[serde(skip)]
    pub raw: Vec<ComparisonReport>,
}

/// Compute every requested comparison.
pub fn build_report(store: &ResultStore, pairings: &[Pairing]) -> Result<Report> {
    let curves = store.curves()?;
    let mut raw = Vec::with_capacity(pairings.len());
    for p in pairings {
        let get = |name: &str| {
            curves
                .get(name)
                .ok_or_else(|| Error::invalid(format!("no curve named `{name}` in the store")))
        };
        raw.push(compare(&p.method, get(&p.method)?, &p.baseline, get(&p.baseline)?)?);
    }
    Ok(Report {
        config_hash: store.config_hash.clone(),
        metric: store.metric,
        curves: curves.iter().map(|(k, c)| (k.clone(), c.points().to_vec())).collect(),
        comparisons: raw.iter().map(ReportRow::from).collect(),
        raw,
    })
}

/// Write `report.json`, `report.csv` and `plot/<curve>.csv` into `out`.
pub fn emit_report(store: &ResultStore, pairings: &[Pairing], out: &Path) -> Result<Report> {
    let report = build_report(store, pairings)?;
    fs::create_dir_all(out.join("plot"))?;
    for (name, curve) in store.curves()? {
        write_curve_csv(&curve, &store.config_hash, &out.join("plot").join(format!("{name}.csv")))?;
    }
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut csv = format!("# config_hash={}\nmethod,baseline,auc_ratio,auclog_ratio,questions_saved\n", store.config_hash);
    for c in &report.raw {
        let saved = c.questions_saved.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.method, c.baseline, c.auc_ratio, c.auclog_ratio, saved
        ));
    }
    fs::write(out.join("report.csv"), csv)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::CellResult;
    use crate::loops::Scenario;

    fn cell(ranker: RankerKind, budget: f64, questions: usize, quality: f64) -> CellResult {
        CellResult {
            ranker,
            scenario: Scenario::Iterative,
            budget,
            repetition: 0,
            budget_questions: questions,
            questions,
            votes: questions,
            quality: Some(quality),
            crowd_quality: None,
            model_quality: None,
            error: None,
            log: None,
        }
    }

    fn store(cells: Vec<CellResult>) -> ResultStore {
        ResultStore {
            config_hash: "abc".into(),
            metric: Metric::F1,
            cells,
        }
    }

    #[test]
    fn identical_curves_give_unit_ratios() {
        let mut cells = Vec::new();
        for k in [RankerKind::Baseline, RankerKind::Uncertainty] {
            cells.push(cell(k, 0.1, 10, 0.6));
            cells.push(cell(k, 0.5, 50, 0.8));
        }
        let r = build_report(&store(cells), &parse_pairings("baseline:uncertainty").unwrap()).unwrap();
        assert_eq!(r.comparisons.len(), 1);
        assert_eq!(r.raw[0].auc_ratio, 1.0);
        assert_eq!(r.raw[0].auclog_ratio, 1.0);
        assert_eq!(r.raw[0].questions_saved, Some(1.0));
    }

    #[test]
    fn one_curve_no_pairings() {
        let s = store(vec![cell(RankerKind::Uncertainty, 0.1, 10, 0.6), cell(RankerKind::Uncertainty, 0.2, 20, 0.7)]);
        assert!(default_pairings(&s).is_empty());
        let dir = tempfile::tempdir().unwrap();
        let r = emit_report(&s, &[], dir.path()).unwrap();
        assert!(r.comparisons.is_empty());
        assert!(dir.path().join("plot/uncertainty.csv").is_file());
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn undefined_saved_is_a_token() {
        let s = store(vec![
            cell(RankerKind::Baseline, 0.1, 10, 0.1),
            cell(RankerKind::Baseline, 0.2, 20, 0.2),
            cell(RankerKind::Uncertainty, 0.1, 10, 0.8),
            cell(RankerKind::Uncertainty, 0.2, 20, 0.9),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let pairs = default_pairings(&s);
        assert_eq!(pairs.len(), 1);
        emit_report(&s, &pairs, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert!(csv.lines().last().unwrap().ends_with(",undefined"));
        let json = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(json.contains("\"questions_saved\": \"undefined\""));
        assert!(parse_pairings("nocolon").is_err());
    }
}
