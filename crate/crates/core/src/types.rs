//! Shared domain types: the label set, the answer grid and per-agent
//! parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigma::{sigma_k, sigma_k_inverse};

/// Index of a label inside a [`LabelSpace`].
pub type Label = usize;

/// The `K` candidate labels of a question set, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::Input(format!(
                "a label space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Input("labels must be non-empty strings".into()));
            }
            if labels[..i].contains(l) {
                return Err(Error::Input(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels named `s1..sK`.
    pub fn indexed(k: usize) -> Result<Self> {
        Self::new((1..=k).map(|i| format!("s{i}")))
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, label: Label) -> &str {
        &self.labels[label]
    }

    pub fn index_of(&self, name: &str) -> Option<Label> {
        self.labels.iter().position(|l| l == name)
    }
}

/// `M` questions answered by `N` agents, stored row-major (one row per
/// question), plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    space: LabelSpace,
    agents: Vec<String>,
    /// `None` means the ids are `0..M`.
    question_ids: Option<Vec<String>>,
    answers: Vec<Label>,
    truth: Option<Vec<Label>>,
}

impl PredictionMatrix {
    /// Build from one answer row per question. Agents are named `a1..aN`.
    pub fn from_rows(
        space: LabelSpace,
        rows: Vec<Vec<Label>>,
        truth: Option<Vec<Label>>,
    ) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let agents = (1..=n).map(|i| format!("a{i}")).collect();
        let mut answers = Vec::with_capacity(rows.len() * n);
        for (q, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Input(format!(
                    "question {q} has {} answers, expected {n}",
                    row.len()
                )));
            }
            answers.extend_from_slice(row);
        }
        Self::from_flat(space, agents, None, answers, truth)
    }

    /// Build from a flat row-major answer buffer.
    pub fn from_flat(
        space: LabelSpace,
        agents: Vec<String>,
        question_ids: Option<Vec<String>>,
        answers: Vec<Label>,
        truth: Option<Vec<Label>>,
    ) -> Result<Self> {
        let n = agents.len();
        if n == 0 {
            return Err(Error::Input("at least one agent is required".into()));
        }
        if !answers.len().is_multiple_of(n) {
            return Err(Error::Input(format!(
                "answer buffer of length {} is not a multiple of {n} agents",
                answers.len()
            )));
        }
        let m = answers.len() / n;
        let k = space.k();
        if let Some(bad) = answers.iter().find(|&&a| a >= k) {
            return Err(Error::Domain(format!(
                "answer index {bad} outside [0, {k})"
            )));
        }
        if let Some(t) = &truth {
            if t.len() != m {
                return Err(Error::dim("truth length", m, t.len()));
            }
            if let Some(bad) = t.iter().find(|&&a| a >= k) {
                return Err(Error::Domain(format!("truth index {bad} outside [0, {k})")));
            }
        }
        if let Some(ids) = &question_ids {
            if ids.len() != m {
                return Err(Error::dim("question id count", m, ids.len()));
            }
        }
        let question_ids =
            question_ids.filter(|ids| !ids.iter().enumerate().all(|(i, id)| *id == i.to_string()));
        Ok(Self {
            space,
            agents,
            question_ids,
            answers,
            truth,
        })
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }

    /// Number of questions.
    pub fn m(&self) -> usize {
        self.answers.len() / self.agents.len()
    }

    /// Number of agents.
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn row(&self, question: usize) -> &[Label] {
        let n = self.n();
        &self.answers[question * n..(question + 1) * n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Label]> + '_ {
        self.answers.chunks_exact(self.n())
    }

    pub fn answer(&self, question: usize, agent: usize) -> Label {
        self.answers[question * self.n() + agent]
    }

    pub fn truth(&self) -> Option<&[Label]> {
        self.truth.as_deref()
    }

    pub fn question_id(&self, question: usize) -> String {
        match &self.question_ids {
            Some(ids) => ids[question].clone(),
            None => question.to_string(),
        }
    }

    /// The same answers with the truth column removed.
    pub fn without_truth(&self) -> Self {
        Self {
            truth: None,
            ..self.clone()
        }
    }

    pub fn with_truth(mut self, truth: Option<Vec<Label>>) -> Result<Self> {
        if let Some(t) = &truth {
            if t.len() != self.m() {
                return Err(Error::dim("truth length", self.m(), t.len()));
            }
        }
        self.truth = truth;
        Ok(self)
    }

    /// Keep only the given agent columns, in the given order.
    pub fn select_agents(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Input("agent selection is empty".into()));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n()) {
            return Err(Error::Input(format!("agent column {bad} does not exist")));
        }
        let answers = self
            .rows()
            .flat_map(|row| columns.iter().map(move |&c| row[c]))
            .collect();
        Ok(Self {
            space: self.space.clone(),
            agents: columns.iter().map(|&c| self.agents[c].clone()).collect(),
            question_ids: self.question_ids.clone(),
            answers,
            truth: self.truth.clone(),
        })
    }

    /// Rows `questions` of the matrix, in the given order.
    pub fn select_questions(&self, questions: &[usize]) -> Self {
        let answers = questions
            .iter()
            .flat_map(|&q| self.row(q).iter().copied())
            .collect();
        let ids = questions.iter().map(|&q| self.question_id(q)).collect();
        let truth = self
            .truth
            .as_ref()
            .map(|t| questions.iter().map(|&q| t[q]).collect());
        Self::from_flat(
            self.space.clone(),
            self.agents.clone(),
            Some(ids),
            answers,
            truth,
        )
        .expect("subset of a valid matrix is valid")
    }

    pub(crate) fn answers_flat(&self) -> &[Label] {
        &self.answers
    }

    pub(crate) fn replace_labels(&self, answers: Vec<Label>, truth: Option<Vec<Label>>) -> Self {
        Self {
            answers,
            truth,
            ..self.clone()
        }
    }

    /// Fraction of questions on which each agent matches the truth.
    pub fn agent_accuracies(&self) -> Option<Vec<f64>> {
        let truth = self.truth.as_ref()?;
        let m = self.m() as f64;
        Some(
            (0..self.n())
                .map(|i| {
                    let hits = self
                        .rows()
                        .zip(truth)
                        .filter(|(row, &t)| row[i] == t)
                        .count();
                    hits as f64 / m
                })
                .collect(),
        )
    }
}

/// Accuracy clamp applied before taking inverse sigmoids.
///
/// Accuracies are clamped into `[1/K + eps, 1 - eps]`; anything at the floor
/// gets weight exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamp {
    pub eps: f64,
}

impl Default for Clamp {
    fn default() -> Self {
        Self { eps: 1e-6 }
    }
}

impl Clamp {
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        (1.0 / k as f64 + self.eps, 1.0 - self.eps)
    }

    pub fn apply(&self, x: f64, k: usize) -> f64 {
        let (lo, hi) = self.bounds(k);
        x.clamp(lo, hi)
    }

    /// OW weight for an accuracy: zero at the floor, logit otherwise.
    pub fn weight(&self, x: f64, k: usize) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("accuracy {x} outside [0, 1]")));
        }
        let (lo, _) = self.bounds(k);
        let c = self.apply(x, k);
        if c <= lo {
            Ok(0.0)
        } else {
            sigma_k_inverse(c, k)
        }
    }
}

/// Per-agent first-order parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    /// Clamped accuracy `x_i`.
    pub accuracy: Vec<f64>,
    /// Ability `beta_i`; for profiles built from accuracies this is the
    /// ability with `sigma_K(beta_i) = x_i`.
    pub ability: Vec<f64>,
    /// Aggregation weight.
    pub weight: Vec<f64>,
}

impl AgentProfile {
    /// OW profile: weights are inverse sigmoids of the clamped accuracies.
    pub fn from_accuracies(accuracies: &[f64], k: usize, clamp: Clamp) -> Result<Self> {
        let weight = accuracies
            .iter()
            .map(|&x| clamp.weight(x, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            accuracy: accuracies.iter().map(|&x| clamp.apply(x, k)).collect(),
            ability: weight.clone(),
            weight,
        })
    }

    /// EOW profile: weights are the abilities. The reported accuracy is the
    /// one at unit difficulty, `sigma_K(beta_i)`.
    pub fn from_abilities(abilities: &[f64], k: usize) -> Result<Self> {
        if let Some(b) = abilities.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::Domain(format!(
                "ability {b} must be finite and non-negative"
            )));
        }
        let accuracy = abilities
            .iter()
            .map(|&b| sigma_k(b, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            accuracy,
            ability: abilities.to_vec(),
            weight: abilities.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.weight.len()
    }

    /// Weights rescaled to sum to one (diagnostics only; argmax ignores scale).
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weight.iter().sum();
        if total == 0.0 {
            return vec![0.0; self.weight.len()];
        }
        self.weight.iter().map(|w| w / total).collect()
    }
}
