//! Pairwise conditional answer distributions `P(A_i = s_k | A_j = s_l)`.
//!
//! Three constructions are provided: the exact matrix implied by agent
//! accuracies under the shuffled conditional-independence model, the
//! empirical conditional frequencies of a prediction matrix, and the
//! empirical matrix with one question held out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, PredictionMatrix};

/// Where a [`SecondOrderMatrix`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Source {
    Exact {
        accuracies: Vec<f64>,
    },
    /// Averaged over a difficulty mixture.
    Mixture,
    Empirical {
        questions: usize,
        smoothing: f64,
    },
    LeaveOneOut {
        questions: usize,
        excluded: usize,
    },
    Imported,
}

/// Dense `N x N x K x K` table of conditional answer probabilities.
///
/// Entry `(i, j, k, l)` is `P(A_i = s_k | A_j = s_l)`. Diagonal blocks
/// (`i == j`) hold the identity and are never used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderMatrix {
    n: usize,
    k: usize,
    probs: Vec<f64>,
    imputed: Vec<bool>,
    source: Source,
}

/// Same-label entry `P(A_i = s | A_j = s)` of the exact model.
pub fn same_label_prob(xi: f64, xj: f64, k: usize) -> f64 {
    xi * xj + (1.0 - xi) * (1.0 - xj) / (k as f64 - 1.0)
}

/// Cross-label entry `P(A_i = s | A_j = t)`, `s != t`, of the exact model.
pub fn cross_label_prob(xi: f64, xj: f64, k: usize) -> f64 {
    let km1 = k as f64 - 1.0;
    (xi * (1.0 - xj) + (1.0 - xi) * xj) / km1
        + (k as f64 - 2.0) * (1.0 - xi) * (1.0 - xj) / (km1 * km1)
}

impl SecondOrderMatrix {
    #[inline]
    fn idx(&self, i: usize, j: usize, s: Label, t: Label) -> usize {
        ((i * self.n + j) * self.k + s) * self.k + t
    }

    /// Build from a function of `(i, j, s, t)`; diagonal blocks are filled
    /// with the identity regardless of `f`.
    pub fn from_fn(
        n: usize,
        k: usize,
        source: Source,
        mut f: impl FnMut(usize, usize, Label, Label) -> f64,
    ) -> Self {
        let mut probs = Vec::with_capacity(n * n * k * k);
        for i in 0..n {
            for j in 0..n {
                for s in 0..k {
                    for t in 0..k {
                        probs.push(if i == j {
                            f64::from(u8::from(s == t))
                        } else {
                            f(i, j, s, t)
                        });
                    }
                }
            }
        }
        Self {
            n,
            k,
            imputed: vec![false; probs.len()],
            probs,
            source,
        }
    }

    /// Assemble from raw parts (used by deserialization). Validates shape,
    /// range and column normalization.
    pub fn from_parts(
        n: usize,
        k: usize,
        probs: Vec<f64>,
        imputed: Vec<bool>,
        source: Source,
    ) -> Result<Self> {
        let len = n * n * k * k;
        if probs.len() != len {
            return Err(Error::dim("second-order entries", len, probs.len()));
        }
        if imputed.len() != len {
            return Err(Error::dim("second-order imputed flags", len, imputed.len()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!(
                "second-order entry {p} outside [0, 1]"
            )));
        }
        let out = Self {
            n,
            k,
            probs,
            imputed,
            source,
        };
        if let Some(err) = out.max_column_error().filter(|e| *e > 1e-9) {
            return Err(Error::Domain(format!(
                "columns do not sum to one (max error {err:e})"
            )));
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    /// `P(A_i = s | A_j = t)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, s: Label, t: Label) -> f64 {
        self.probs[self.idx(i, j, s, t)]
    }

    pub fn is_imputed(&self, i: usize, j: usize, s: Label, t: Label) -> bool {
        self.imputed[self.idx(i, j, s, t)]
    }

    pub fn imputed_count(&self) -> usize {
        self.imputed.iter().filter(|&&b| b).count()
    }

    pub fn entries(&self) -> &[f64] {
        &self.probs
    }

    /// Iterate `(i, j, s, t, prob, imputed)` in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Label, Label, f64, bool)> + '_ {
        let (n, k) = (self.n, self.k);
        (0..n * n * k * k).map(move |idx| {
            let t = idx % k;
            let s = (idx / k) % k;
            let j = (idx / (k * k)) % n;
            let i = idx / (k * k * n);
            (i, j, s, t, self.probs[idx], self.imputed[idx])
        })
    }

    /// Largest deviation from one of any column sum `sum_s P(A_i=s|A_j=t)`.
    pub fn max_column_error(&self) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for i in 0..self.n {
            for j in 0..self.n {
                for t in 0..self.k {
                    let sum: f64 = (0..self.k).map(|s| self.get(i, j, s, t)).sum();
                    let e = (sum - 1.0).abs();
                    worst = Some(worst.map_or(e, |w| w.max(e)));
                }
            }
        }
        worst
    }

    /// Max-norm distance between two matrices of the same shape.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::Input("second-order matrices differ in shape".into()));
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Check an answer vector is scoreable against this matrix.
    pub(crate) fn check_answers(&self, answers: &[Label]) -> Result<()> {
        if answers.len() != self.n {
            return Err(Error::dim(
                "answer vector vs second-order agents",
                self.n,
                answers.len(),
            ));
        }
        if let Some(&bad) = answers.iter().find(|&&a| a >= self.k) {
            return Err(Error::Domain(format!(
                "answer index {bad} outside second-order labels [0, {})",
                self.k
            )));
        }
        Ok(())
    }
}

/// Second-order matrix implied by accuracies under the shuffled model.
///
/// Accuracies may sit anywhere in `[0, 1]`; the oracle relies on the
/// degenerate values `1` and `1/K` being representable.
pub fn exact_second_order(accuracies: &[f64], k: usize) -> Result<SecondOrderMatrix> {
    if k < 2 {
        return Err(Error::Domain(format!(
            "label count must be at least 2, got {k}"
        )));
    }
    if let Some(x) = accuracies.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("accuracy {x} outside [0, 1]")));
    }
    let same: Vec<Vec<f64>> = accuracies
        .iter()
        .map(|&xi| {
            accuracies
                .iter()
                .map(|&xj| same_label_prob(xi, xj, k))
                .collect()
        })
        .collect();
    let cross: Vec<Vec<f64>> = accuracies
        .iter()
        .map(|&xi| {
            accuracies
                .iter()
                .map(|&xj| cross_label_prob(xi, xj, k))
                .collect()
        })
        .collect();
    Ok(SecondOrderMatrix::from_fn(
        accuracies.len(),
        k,
        Source::Exact {
            accuracies: accuracies.to_vec(),
        },
        |i, j, s, t| if s == t { same[i][j] } else { cross[i][j] },
    ))
}

/// Joint and marginal answer counts, the sufficient statistics of the
/// empirical estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderCounts {
    n: usize,
    k: usize,
    m: usize,
    /// `#{A_i = s, A_j = t}` at `((i*n + j)*k + s)*k + t`.
    joint: Vec<u64>,
    /// `#{A_j = t}` at `j*k + t`.
    marginal: Vec<u64>,
}

impl SecondOrderCounts {
    pub fn from_matrix(pm: &PredictionMatrix) -> Self {
        let (n, k) = (pm.n(), pm.k());
        let mut counts = Self {
            n,
            k,
            m: 0,
            joint: vec![0; n * n * k * k],
            marginal: vec![0; n * k],
        };
        for row in pm.rows() {
            counts.add_row(row, 1);
        }
        counts
    }

    fn add_row(&mut self, row: &[Label], sign: i64) {
        let (n, k) = (self.n, self.k);
        let bump = |c: &mut u64| *c = c.wrapping_add_signed(sign);
        for (j, &t) in row.iter().enumerate() {
            bump(&mut self.marginal[j * k + t]);
            for (i, &s) in row.iter().enumerate() {
                bump(&mut self.joint[((i * n + j) * k + s) * k + t]);
            }
        }
        self.m = self.m.wrapping_add_signed(sign as isize);
    }

    pub fn questions(&self) -> usize {
        self.m
    }

    pub fn joint(&self, i: usize, j: usize, s: Label, t: Label) -> u64 {
        self.joint[((i * self.n + j) * self.k + s) * self.k + t]
    }

    pub fn marginal(&self, j: usize, t: Label) -> u64 {
        self.marginal[j * self.k + t]
    }

    /// Counts with one question's row removed.
    pub fn without_row(&self, row: &[Label]) -> Self {
        let mut out = self.clone();
        out.add_row(row, -1);
        out
    }

    /// Conditional frequencies with additive smoothing `alpha >= 0`.
    /// Columns with no observations get `1/K` and are flagged as imputed.
    pub fn to_matrix(&self, alpha: f64, source: Source) -> SecondOrderMatrix {
        let (n, k) = (self.n, self.k);
        let mut imputed = vec![false; n * n * k * k];
        let uniform = 1.0 / k as f64;
        let mut so = SecondOrderMatrix::from_fn(n, k, source, |i, j, s, t| {
            let denom = self.marginal(j, t);
            if denom == 0 {
                imputed[((i * n + j) * k + s) * k + t] = true;
                uniform
            } else {
                (self.joint(i, j, s, t) as f64 + alpha) / (denom as f64 + k as f64 * alpha)
            }
        });
        so.imputed = imputed;
        so
    }
}

/// Empirical conditional frequencies `#{A_i=s_k, A_j=s_l} / #{A_j=s_l}`.
pub fn empirical_second_order(pm: &PredictionMatrix) -> SecondOrderMatrix {
    empirical_second_order_smoothed(pm, 0.0).expect("zero smoothing is valid")
}

/// Empirical estimator with additive smoothing `alpha` (0 disables it).
pub fn empirical_second_order_smoothed(
    pm: &PredictionMatrix,
    alpha: f64,
) -> Result<SecondOrderMatrix> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!(
            "smoothing must be finite and non-negative, got {alpha}"
        )));
    }
    Ok(SecondOrderCounts::from_matrix(pm).to_matrix(
        alpha,
        Source::Empirical {
            questions: pm.m(),
            smoothing: alpha,
        },
    ))
}

/// Empirical estimator on every question except `exclude_question`.
pub fn loo_second_order(
    pm: &PredictionMatrix,
    exclude_question: usize,
) -> Result<SecondOrderMatrix> {
    if pm.m() < 2 {
        return Err(Error::Input(format!(
            "leave-one-out needs at least 2 questions, got {}",
            pm.m()
        )));
    }
    if exclude_question >= pm.m() {
        return Err(Error::Input(format!(
            "question {exclude_question} out of range for {} questions",
            pm.m()
        )));
    }
    Ok(SecondOrderCounts::from_matrix(pm)
        .without_row(pm.row(exclude_question))
        .to_matrix(
            0.0,
            Source::LeaveOneOut {
                questions: pm.m(),
                excluded: exclude_question,
            },
        ))
}
