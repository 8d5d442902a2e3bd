//! Support vector machine classifier: [-1, 1] feature scaling, a
//! simplified SMO solver for the binary soft-margin dual, and
//! one-vs-one multiclass voting with lowest-id tie-break.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Serialized model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    /// RBF with the library default gamma = 1 / n_features.
    pub fn rbf_auto(n_features: usize) -> Kernel {
        Kernel::Rbf { gamma: 1.0 / n_features.max(1) as f64 }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Consecutive sweeps without an update before stopping.
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: Kernel::Rbf { gamma: 1.0 },
            tol: 1e-3,
            max_passes: 10,
        }
    }
}

/// Per-feature affine map onto [-1, 1] fit on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<FeatureScaler> {
        let first = rows.first().ok_or_else(|| Error::Empty("training set".into()))?;
        let n = first.len();
        let mut mins = vec![f64::INFINITY; n];
        let mut maxs = vec![f64::NEG_INFINITY; n];
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension { expected: n, got: row.len() });
            }
            for (k, &v) in row.iter().enumerate() {
                mins[k] = mins[k].min(v);
                maxs[k] = maxs[k].max(v);
            }
        }
        Ok(FeatureScaler { mins, maxs })
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mins.len() {
            return Err(Error::Dimension { expected: self.mins.len(), got: row.len() });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let span = self.maxs[k] - self.mins[k];
                if span <= 0.0 {
                    // Constant training feature carries no information.
                    0.0
                } else {
                    2.0 * (v - self.mins[k]) / span - 1.0
                }
            })
            .collect())
    }
}

/// Trained binary machine: support vectors with signed dual
/// coefficients alpha_i * y_i, plus the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    /// Train on rows with labels y in {-1, +1} using simplified SMO.
    pub fn train(rows: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<BinarySvm> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("binary training set".into()));
        }
        if y.len() != n {
            return Err(Error::Dimension { expected: n, got: y.len() });
        }
        if !y.iter().all(|&v| v == 1.0 || v == -1.0) {
            return Err(Error::Train("binary labels must be +/-1".into()));
        }
        if !(y.contains(&1.0) && y.contains(&-1.0)) {
            return Err(Error::Train("both classes required".into()));
        }

        // Gram matrix; OvO sub-problems are small, so dense is fine.
        let k: Vec<Vec<f64>> = rows
            .iter()
            .map(|a| rows.iter().map(|b| params.kernel.eval(a, b)).collect())
            .collect();

        let c = params.c;
        let tol = params.tol;
        let mut alpha = vec![0.0f64; n];
        let mut b = 0.0f64;

        let f = |alpha: &[f64], b: f64, i: usize| -> f64 {
            let mut acc = b;
            for j in 0..n {
                if alpha[j] != 0.0 {
                    acc += alpha[j] * y[j] * k[i][j];
                }
            }
            acc
        };

        let mut passes = 0usize;
        let max_sweeps = 200 * n.max(50);
        let mut sweeps = 0usize;
        while passes < params.max_passes && sweeps < max_sweeps {
            sweeps += 1;
            let mut changed = 0usize;
            for i in 0..n {
                let e_i = f(&alpha, b, i) - y[i];
                let violates = (y[i] * e_i < -tol && alpha[i] < c)
                    || (y[i] * e_i > tol && alpha[i] > 0.0);
                if !violates {
                    continue;
                }
                // Deterministic partner selection: largest |E_i - E_j|
                // first (biggest Newton step), then every remaining
                // index as a fallback.
                let errs: Vec<f64> = (0..n).map(|j| f(&alpha, b, j) - y[j]).collect();
                let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                order.sort_by(|&a, &b2| {
                    (errs[b2] - e_i)
                        .abs()
                        .partial_cmp(&(errs[a] - e_i).abs())
                        .unwrap()
                });
                for j in order {
                    let e_j = errs[j];
                    let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
                    let (lo, hi) = if y[i] != y[j] {
                        ((a_j_old - a_i_old).max(0.0), (c + a_j_old - a_i_old).min(c))
                    } else {
                        ((a_i_old + a_j_old - c).max(0.0), (a_i_old + a_j_old).min(c))
                    };
                    if hi - lo < 1e-12 {
                        continue;
                    }
                    let eta = 2.0 * k[i][j] - k[i][i] - k[j][j];
                    if eta >= -1e-12 {
                        continue;
                    }
                    let mut a_j = a_j_old - y[j] * (e_i - e_j) / eta;
                    a_j = a_j.clamp(lo, hi);
                    if (a_j - a_j_old).abs() < 1e-12 {
                        continue;
                    }
                    let a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j);
                    alpha[i] = a_i;
                    alpha[j] = a_j;
                    let b1 = b - e_i
                        - y[i] * (a_i - a_i_old) * k[i][i]
                        - y[j] * (a_j - a_j_old) * k[i][j];
                    let b2 = b - e_j
                        - y[i] * (a_i - a_i_old) * k[i][j]
                        - y[j] * (a_j - a_j_old) * k[j][j];
                    b = if a_i > 0.0 && a_i < c {
                        b1
                    } else if a_j > 0.0 && a_j < c {
                        b2
                    } else {
                        (b1 + b2) / 2.0
                    };
                    changed += 1;
                    break;
                }
            }
            if changed == 0 {
                passes += 1;
            } else {
                passes = 0;
            }
        }

        // Recompute the bias from the final alphas. Free support
        // vectors pin it exactly; if every alpha sits on a box bound
        // the KKT conditions only constrain b to an interval, and the
        // running SMO update can drift outside it.
        let g: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum::<f64>())
            .collect();
        let free: Vec<usize> = (0..n)
            .filter(|&i| alpha[i] > 1e-10 && alpha[i] < c - 1e-10)
            .collect();
        b = if !free.is_empty() {
            free.iter().map(|&i| y[i] - g[i]).sum::<f64>() / free.len() as f64
        } else {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..n {
                let bound = y[i] - g[i];
                let at_zero = alpha[i] <= 1e-10;
                // alpha = 0 requires y_i f >= 1; alpha = C requires <= 1.
                if (at_zero && y[i] > 0.0) || (!at_zero && y[i] < 0.0) {
                    lo = lo.max(bound);
                } else {
                    hi = hi.min(bound);
                }
            }
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => (lo + hi) / 2.0,
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => b,
            }
        };

        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for i in 0..n {
            if alpha[i] > 1e-10 {
                support_vectors.push(rows[i].clone());
                coefficients.push(alpha[i] * y[i]);
            }
        }
        Ok(BinarySvm { support_vectors, coefficients, bias: b })
    }

    /// Signed decision value f(x); the predicted label is its sign.
    pub fn decision_value(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, &c)| c * kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

/// Largest KKT violation of a trained machine over its training set.
///
/// Checks the dual box bounds, the equality constraint sum alpha_i y_i
/// = 0, and the margin conditions: alpha = 0 requires y f(x) >= 1,
/// 0 < alpha < C requires y f(x) = 1, alpha = C requires y f(x) <= 1.
/// A solution is optimal iff the returned violation is 0; callers
/// compare it against their tolerance.
pub fn kkt_violation(
    machine: &BinarySvm,
    kernel: &Kernel,
    c: f64,
    rows: &[Vec<f64>],
    y: &[f64],
) -> f64 {
    let mut worst = machine.coefficients.iter().sum::<f64>().abs();
    for (row, &yi) in rows.iter().zip(y) {
        let alpha = machine
            .support_vectors
            .iter()
            .position(|sv| sv == row)
            .map(|i| machine.coefficients[i].abs())
            .unwrap_or(0.0);
        let margin = yi * machine.decision_value(kernel, row);
        let v = if alpha <= 1e-9 {
            (1.0 - margin).max(0.0)
        } else if alpha >= c - 1e-9 {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v).max(-alpha).max(alpha - c);
    }
    worst
}

/// One-vs-one multiclass model over u32 class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub format_version: u32,
    pub params: SvmParams,
    pub scaler: FeatureScaler,
    pub classes: Vec<u32>,
    /// One machine per unordered class pair (index pairs into
    /// `classes`), in lexicographic pair order.
    pub machines: Vec<(usize, usize, BinarySvm)>,
}

impl MulticlassModel {
    pub fn train(rows: &[Vec<f64>], labels: &[u32], params: &SvmParams) -> Result<MulticlassModel> {
        if rows.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dimension { expected: rows.len(), got: labels.len() });
        }
        let scaler = FeatureScaler::fit(rows)?;
        let scaled: Vec<Vec<f64>> =
            rows.iter().map(|r| scaler.transform(r)).collect::<Result<_>>()?;

        let mut classes: Vec<u32> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Train("need at least two classes".into()));
        }

        let mut machines = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
        for a in 0..classes.len() {
            for b in a + 1..classes.len() {
                let mut sub_rows = Vec::new();
                let mut sub_y = Vec::new();
                for (row, &label) in scaled.iter().zip(labels) {
                    if label == classes[a] {
                        sub_rows.push(row.clone());
                        sub_y.push(1.0);
                    } else if label == classes[b] {
                        sub_rows.push(row.clone());
                        sub_y.push(-1.0);
                    }
                }
                machines.push((a, b, BinarySvm::train(&sub_rows, &sub_y, params)?));
            }
        }
        Ok(MulticlassModel {
            format_version: MODEL_FORMAT_VERSION,
            params: *params,
            scaler,
            classes,
            machines,
        })
    }

    pub fn predict(&self, row: &[f64]) -> Result<u32> {
        let x = self.scaler.transform(row)?;
        let mut votes = vec![0u32; self.classes.len()];
        for (a, b, machine) in &self.machines {
            if machine.decision_value(&self.params.kernel, &x) >= 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
        }
        Ok(self.classes[vote_winner(&votes)])
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<u32>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?)
    }

    pub fn from_json(text: &str) -> Result<MulticlassModel> {
        let model: MulticlassModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MulticlassModel> {
        MulticlassModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Index of the winning vote count; ties go to the lowest index, i.e.
/// the lowest class id.
pub(crate) fn vote_winner(votes: &[u32]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}
