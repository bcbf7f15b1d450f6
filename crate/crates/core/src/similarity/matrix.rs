use serde::{Deserialize, Serialize};

use super::{tversky_score, FeatureKind, FeatureSet, SimilarityError, TverskyParams};
use crate::item_model::ItemId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub kind: FeatureKind,
    pub params: TverskyParams,
    pub item_ids: Vec<ItemId>,
    pub values: Vec<Vec<f64>>,
}

/// Full grid, diagonal included, over `sets` in the given order.
pub fn pairwise_matrix(sets: &[FeatureSet], kind: FeatureKind, params: &TverskyParams) -> Result<SimilarityMatrix, SimilarityError> {
    if sets.len() < 2 {
        return Err(SimilarityError::TooFewItems);
    }
    params.validate()?;
    if let Some(s) = sets.iter().find(|s| s.kind != kind) {
        return Err(SimilarityError::MissingFeatureSet { item: s.item_id.clone(), kind });
    }
    let values = sets
        .iter()
        .map(|a| sets.iter().map(|b| tversky_score(a, b, params)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimilarityMatrix {
        kind,
        params: *params,
        item_ids: sets.iter().map(|s| s.item_id.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub pairs: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl PairStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(PairStats {
            pairs: values.len(),
            mean,
            sd: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Off-diagonal summaries: every unordered pair, and the pairs that
/// involve the first item (the prototype).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub all_pairs: PairStats,
    pub prototype_pairs: PairStats,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|i| (0..i).all(|j| self.values[i][j] == self.values[j][i]))
    }

    pub fn upper_pairs(&self) -> Vec<f64> {
        let n = self.len();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.values[i][j]).collect()
    }

    pub fn summary(&self) -> Option<MatrixSummary> {
        let proto: Vec<f64> = (1..self.len()).map(|j| self.values[0][j]).collect();
        Some(MatrixSummary {
            all_pairs: PairStats::of(&self.upper_pairs())?,
            prototype_pairs: PairStats::of(&proto)?,
        })
    }

    /// CSV with an id header row and column. `decimals = None` writes the
    /// shortest exact representation.
    pub fn to_csv(&self, decimals: Option<usize>) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("").chain(self.item_ids.iter().map(ItemId::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (id, row) in self.item_ids.iter().zip(&self.values) {
            let mut record = vec![id.to_string()];
            record.extend(row.iter().map(|v| format_value(*v, decimals)));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Compares the upper triangle, diagonal included, against a reported
    /// grid of the same order.
    pub fn errata(&self, reported: &ReportedGrid, tolerance: f64) -> Result<ErrataReport, SimilarityError> {
        let n = self.len();
        if reported.values.len() != n || reported.values.iter().any(|r| r.len() != n) {
            return Err(SimilarityError::Grid(format!("expected a {n}x{n} grid")));
        }
        let mut report = ErrataReport { checked: 0, mismatches: Vec::new() };
        for i in 0..n {
            for j in i..n {
                report.checked += 1;
                let (computed, stated) = (self.values[i][j], reported.values[i][j]);
                if (computed - stated).abs() > tolerance {
                    report.mismatches.push(ErrataCell {
                        row: i + 1,
                        col: j + 1,
                        row_label: reported.labels[i].clone(),
                        col_label: reported.labels[j].clone(),
                        computed,
                        reported: stated,
                    });
                }
            }
        }
        Ok(report)
    }
}

fn format_value(v: f64, decimals: Option<usize>) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    match decimals {
        Some(d) => format!("{v:.d$}"),
        None => v.to_string(),
    }
}

/// A published grid read from CSV, header row and column carrying labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportedGrid {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn parse_reported_grid(text: &str) -> Result<ReportedGrid, SimilarityError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| SimilarityError::Grid(e.to_string()))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| SimilarityError::Grid(e.to_string()))?;
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.trim().replace(',', ".").parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SimilarityError::Grid(e.to_string()))?;
        if row.len() != labels.len() {
            return Err(SimilarityError::Grid(format!("row {} has {} values", values.len() + 1, row.len())));
        }
        values.push(row);
    }
    if values.len() != labels.len() {
        return Err(SimilarityError::Grid("grid is not square".into()));
    }
    Ok(ReportedGrid { labels, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrataCell {
    /// 1-based.
    pub row: usize,
    pub col: usize,
    pub row_label: String,
    pub col_label: String,
    pub computed: f64,
    pub reported: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrataReport {
    pub checked: usize,
    pub mismatches: Vec<ErrataCell>,
}

impl ErrataReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}
