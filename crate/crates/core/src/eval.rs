//! Evaluation: per-location train/test splits, distance-error
//! statistics, error CDFs, scenario sweeps, and summary tables.

use crate::error::{Error, Result};
use crate::radiomap::{build_dataset, decimate, FeatureMode, LabeledDataset, LocationGrid, RadioMap};
use crate::svm::{MulticlassModel, SvmParams};
use std::collections::BTreeMap;

/// One evaluation configuration: a grid density, an AP subset, and a
/// feature layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioSpec {
    /// Grid decimation factor (1 keeps every location).
    pub decimation: u32,
    /// Indices into the radio map's AP list.
    pub ap_indices: Vec<usize>,
    pub feature_mode: FeatureMode,
}

impl ScenarioSpec {
    pub fn label(&self) -> String {
        let feats = match self.feature_mode {
            FeatureMode::RssOnly => "RSS",
            FeatureMode::RssPlusChannel => "RSS+channel",
        };
        format!("{} AP, {}", self.ap_indices.len(), feats)
    }
}

/// The twelve-cell sweep: three grid densities by four feature
/// configurations (1 or 2 APs, with or without channel taps).
pub fn standard_scenarios() -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for decimation in [1u32, 2, 3] {
        for (ap_indices, feature_mode) in [
            (vec![0], FeatureMode::RssOnly),
            (vec![0], FeatureMode::RssPlusChannel),
            (vec![0, 1], FeatureMode::RssOnly),
            (vec![0, 1], FeatureMode::RssPlusChannel),
        ] {
            out.push(ScenarioSpec { decimation, ap_indices, feature_mode });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy_pct: f64,
    pub mean_error_m: f64,
    pub errors: Vec<f64>,
    pub predictions: Vec<u32>,
    pub truths: Vec<u32>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Split each location's rows into the first `train_per_location` for
/// training and the remainder for testing, preserving order.
pub fn split_per_location(
    ds: &LabeledDataset,
    train_per_location: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut train = LabeledDataset {
        features: Vec::new(),
        labels: Vec::new(),
        feature_mode: ds.feature_mode,
        ap_set: ds.ap_set.clone(),
    };
    let mut test = train.clone();
    for (row, &label) in ds.features.iter().zip(&ds.labels) {
        let seen = counts.entry(label).or_insert(0);
        let target = if *seen < train_per_location { &mut train } else { &mut test };
        target.features.push(row.clone());
        target.labels.push(label);
        *seen += 1;
    }
    if train.features.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    if test.features.is_empty() {
        return Err(Error::Empty("test split".into()));
    }
    Ok((train, test))
}

/// Euclidean distance in meters between predicted and true locations.
pub fn distance_error(grid: &LocationGrid, predicted: u32, actual: u32) -> Result<f64> {
    grid.distance(predicted, actual)
}

/// Classify every test row and summarize accuracy and distance error.
pub fn evaluate(
    model: &MulticlassModel,
    test: &LabeledDataset,
    grid: &LocationGrid,
) -> Result<EvalReport> {
    if test.features.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let predictions = model.predict_batch(&test.features)?;
    let mut errors = Vec::with_capacity(predictions.len());
    let mut correct = 0usize;
    for (&pred, &truth) in predictions.iter().zip(&test.labels) {
        if pred == truth {
            correct += 1;
        }
        errors.push(distance_error(grid, pred, truth)?);
    }
    let n = predictions.len();
    Ok(EvalReport {
        accuracy_pct: 100.0 * correct as f64 / n as f64,
        mean_error_m: errors.iter().sum::<f64>() / n as f64,
        errors,
        predictions,
        truths: test.labels.clone(),
        n_train: 0,
        n_test: n,
    })
}

/// Decimate, build features, split, train, and evaluate one scenario.
pub fn run_scenario(
    map: &RadioMap,
    spec: &ScenarioSpec,
    params: &SvmParams,
    train_per_location: usize,
) -> Result<EvalReport> {
    let map = decimate(map, spec.decimation);
    let ap_set: Vec<_> = spec
        .ap_indices
        .iter()
        .map(|&i| {
            map.aps
                .get(i)
                .cloned()
                .ok_or_else(|| Error::Config(format!("AP index {i} out of range")))
        })
        .collect::<Result<_>>()?;
    let ds = build_dataset(&map, &ap_set, spec.feature_mode)?;
    let (train, test) = split_per_location(&ds, train_per_location)?;
    let model = MulticlassModel::train(&train.features, &train.labels, params)?;
    let mut report = evaluate(&model, &test, &map.grid)?;
    report.n_train = train.features.len();
    Ok(report)
}

/// Empirical CDF over distance errors: sorted unique values paired
/// with the cumulative fraction at or below each value.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    if errors.is_empty() {
        return Vec::new();
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    out
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub grid_points: usize,
    pub scenario: String,
    pub accuracy_pct: f64,
    pub mean_error_m: f64,
}

/// Accuracy with one decimal and a percent sign, e.g. `32.3%`.
pub fn fmt_accuracy(pct: f64) -> String {
    format!("{pct:.1}%")
}

/// Mean error with two significant digits and trailing zeros trimmed,
/// e.g. `3.1`, `0.75`, `2`.
pub fn fmt_error(m: f64) -> String {
    if m == 0.0 || !m.is_finite() {
        return if m == 0.0 { "0".into() } else { m.to_string() };
    }
    let exp = m.abs().log10().floor() as i32;
    let decimals = (1 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, m);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Fixed-width text table with a header row.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let header = ["grid_points", "feature_set", "accuracy", "mean_error_m"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.grid_points.to_string(),
                r.scenario.clone(),
                fmt_accuracy(r.accuracy_pct),
                fmt_error(r.mean_error_m),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let emit = |out: &mut String, cols: &[String]| {
        let line: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:<width$}", c, width = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    emit(&mut out, &header.map(String::from));
    for row in &cells {
        emit(&mut out, row);
    }
    out
}

/// Machine-readable variant of [`summary_table`].
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("grid_points,feature_set,accuracy_pct,mean_error_m\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.1},{}\n",
            r.grid_points,
            r.scenario,
            r.accuracy_pct,
            fmt_error(r.mean_error_m)
        ));
    }
    out
}
