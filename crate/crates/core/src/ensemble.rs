//! Validation accuracy of prompt ensembles over an offline prediction matrix.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Error, OracleError, Result};
use crate::game::Utility;

const PROBABILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    instances: Vec<(String, usize)>,
    num_labels: usize,
}

impl ValidationSet {
    pub fn new(instances: Vec<(String, usize)>, num_labels: usize) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::Invalid("num_labels must be positive".into()));
        }
        if instances.is_empty() {
            return Err(Error::Invalid("validation set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for (id, gold) in &instances {
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("duplicate instance id {id:?}")));
            }
            if *gold >= num_labels {
                return Err(Error::Invalid(format!("gold label {gold} of {id:?} is not below {num_labels}")));
            }
        }
        Ok(Self { instances, num_labels })
    }

    pub fn instances(&self) -> &[(String, usize)] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HardLabel,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq)]
enum Cells {
    Hard(Vec<usize>),
    /// Row-major `[prompt][instance][label]`.
    Probabilistic(Vec<f64>),
}

/// Per-prompt, per-instance predictions. Each row is one sub-classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    prompt_ids: Vec<String>,
    instance_ids: Vec<String>,
    num_labels: usize,
    cells: Cells,
}

impl PredictionMatrix {
    /// `rows[p][j]` is prompt `p`'s label for instance `j`.
    pub fn hard(
        prompt_ids: Vec<String>,
        instance_ids: Vec<String>,
        num_labels: usize,
        rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        check_shape(&prompt_ids, &instance_ids, rows.iter().map(Vec::len), rows.len())?;
        let cells: Vec<usize> = rows.into_iter().flatten().collect();
        if let Some(bad) = cells.iter().find(|&&l| l >= num_labels) {
            return Err(Error::Invalid(format!("hard label {bad} is not below {num_labels}")));
        }
        Ok(Self { prompt_ids, instance_ids, num_labels, cells: Cells::Hard(cells) })
    }

    /// `rows[p][j]` is prompt `p`'s probability vector for instance `j`.
    pub fn probabilistic(
        prompt_ids: Vec<String>,
        instance_ids: Vec<String>,
        num_labels: usize,
        rows: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        check_shape(&prompt_ids, &instance_ids, rows.iter().map(Vec::len), rows.len())?;
        let mut cells = Vec::with_capacity(prompt_ids.len() * instance_ids.len() * num_labels);
        for (p, row) in rows.iter().enumerate() {
            for (j, probs) in row.iter().enumerate() {
                if probs.len() != num_labels {
                    return Err(Error::Invalid(format!(
                        "prompt {:?}, instance {:?}: {} probabilities for {num_labels} labels",
                        prompt_ids[p],
                        instance_ids[j],
                        probs.len()
                    )));
                }
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (total - 1.0).abs() > PROBABILITY_TOL {
                    return Err(Error::Invalid(format!(
                        "prompt {:?}, instance {:?}: not a probability vector",
                        prompt_ids[p], instance_ids[j]
                    )));
                }
                cells.extend_from_slice(probs);
            }
        }
        Ok(Self { prompt_ids, instance_ids, num_labels, cells: Cells::Probabilistic(cells) })
    }

    pub fn mode(&self) -> Mode {
        match self.cells {
            Cells::Hard(_) => Mode::HardLabel,
            Cells::Probabilistic(_) => Mode::Probabilistic,
        }
    }

    pub fn prompt_ids(&self) -> &[String] {
        &self.prompt_ids
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn num_prompts(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.instance_ids.iter().position(|x| x == id)
    }

    /// Hard label of `prompt` on instance column `j`; probability rows are
    /// argmaxed, ties going to the lowest label index.
    pub fn label(&self, prompt: usize, j: usize) -> usize {
        match &self.cells {
            Cells::Hard(c) => c[prompt * self.instance_ids.len() + j],
            Cells::Probabilistic(_) => argmax(self.probabilities(prompt, j).unwrap()),
        }
    }

    pub fn probabilities(&self, prompt: usize, j: usize) -> Option<&[f64]> {
        match &self.cells {
            Cells::Hard(_) => None,
            Cells::Probabilistic(c) => {
                let start = (prompt * self.instance_ids.len() + j) * self.num_labels;
                Some(&c[start..start + self.num_labels])
            }
        }
    }

    fn check_coalition(&self, coalition: &Coalition) -> Result<()> {
        if coalition.players() != self.num_prompts() {
            return Err(Error::Consistency(format!(
                "coalition over {} prompts used with a {}-prompt matrix",
                coalition.players(),
                self.num_prompts()
            )));
        }
        if coalition.is_empty() {
            return Err(Error::Precondition("ensemble of an empty coalition; use u_empty".into()));
        }
        Ok(())
    }

    fn column(&self, instance: &str) -> Result<usize> {
        self.instance_index(instance)
            .ok_or_else(|| Error::Consistency(format!("instance {instance:?} is not a matrix column")))
    }
}

fn check_shape(
    prompt_ids: &[String],
    instance_ids: &[String],
    row_lengths: impl Iterator<Item = usize>,
    rows: usize,
) -> Result<()> {
    if rows != prompt_ids.len() {
        return Err(Error::Shape { expected: prompt_ids.len(), got: rows });
    }
    for len in row_lengths {
        if len != instance_ids.len() {
            return Err(Error::Shape { expected: instance_ids.len(), got: len });
        }
    }
    let unique: BTreeSet<&String> = prompt_ids.iter().collect();
    if unique.len() != prompt_ids.len() {
        return Err(Error::Invalid("duplicate prompt ids".into()));
    }
    let unique: BTreeSet<&String> = instance_ids.iter().collect();
    if unique.len() != instance_ids.len() {
        return Err(Error::Invalid("duplicate instance ids".into()));
    }
    Ok(())
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// How a vote with several labels sharing first place is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// No prediction; counted as incorrect.
    #[default]
    Abstain,
    LowestLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Vote,
    AverageArgmax,
}

/// 1 iff a prediction was made and it equals the gold label.
pub fn discriminant(predicted: Option<usize>, gold: usize) -> u8 {
    u8::from(predicted == Some(gold))
}

fn vote_column(matrix: &PredictionMatrix, coalition: &Coalition, j: usize, tie: TieRule, counts: &mut [u32]) -> Option<usize> {
    counts.iter_mut().for_each(|c| *c = 0);
    for p in coalition.members() {
        counts[matrix.label(p, j)] += 1;
    }
    let top = *counts.iter().max()?;
    let mut leaders = counts.iter().enumerate().filter(|(_, &c)| c == top).map(|(l, _)| l);
    let first = leaders.next()?;
    match (leaders.next(), tie) {
        (None, _) | (Some(_), TieRule::LowestLabel) => Some(first),
        (Some(_), TieRule::Abstain) => None,
    }
}

fn average_column(matrix: &PredictionMatrix, coalition: &Coalition, j: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut k = 0usize;
    for p in coalition.members() {
        for (o, &x) in out.iter_mut().zip(matrix.probabilities(p, j).unwrap()) {
            *o += x;
        }
        k += 1;
    }
    let k = k as f64;
    out.iter_mut().for_each(|x| *x /= k);
}

/// Plurality label of the coalition's rows on one instance.
pub fn ensemble_vote(matrix: &PredictionMatrix, coalition: &Coalition, instance: &str, tie: TieRule) -> Result<Option<usize>> {
    matrix.check_coalition(coalition)?;
    let j = matrix.column(instance)?;
    let mut counts = vec![0u32; matrix.num_labels()];
    Ok(vote_column(matrix, coalition, j, tie, &mut counts))
}

/// Mean probability vector of the coalition's rows on one instance.
pub fn ensemble_average(matrix: &PredictionMatrix, coalition: &Coalition, instance: &str) -> Result<Vec<f64>> {
    matrix.check_coalition(coalition)?;
    if matrix.mode() != Mode::Probabilistic {
        return Err(Error::Precondition("probability averaging needs a probabilistic matrix".into()));
    }
    let j = matrix.column(instance)?;
    let mut out = vec![0.0; matrix.num_labels()];
    average_column(matrix, coalition, j, &mut out);
    Ok(out)
}

/// Validation accuracy of a prompt ensemble, as a utility oracle.
#[derive(Debug, Clone)]
pub struct EnsembleUtility<'a> {
    matrix: &'a PredictionMatrix,
    gold: Vec<(usize, usize)>,
    rule: Rule,
    tie: TieRule,
    u_empty: f64,
}

impl<'a> EnsembleUtility<'a> {
    pub fn new(matrix: &'a PredictionMatrix, validation: &ValidationSet, rule: Rule, tie: TieRule) -> Result<Self> {
        if validation.num_labels() != matrix.num_labels() {
            return Err(Error::Consistency(format!(
                "validation declares {} labels, matrix {}",
                validation.num_labels(),
                matrix.num_labels()
            )));
        }
        if rule == Rule::AverageArgmax && matrix.mode() != Mode::Probabilistic {
            return Err(Error::Consistency("average-argmax rule needs a probabilistic matrix".into()));
        }
        let gold = validation
            .instances()
            .iter()
            .map(|(id, g)| Ok((matrix.column(id)?, *g)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { matrix, gold, rule, tie, u_empty: 0.0 })
    }

    /// Value reported for the empty coalition (default 0).
    pub fn with_u_empty(mut self, u_empty: f64) -> Self {
        self.u_empty = u_empty;
        self
    }

    pub fn u_empty(&self) -> f64 {
        self.u_empty
    }

    /// Number of validation instances the coalition gets right.
    pub fn correct(&self, coalition: &Coalition) -> Result<usize> {
        self.matrix.check_coalition(coalition)?;
        let labels = self.matrix.num_labels();
        let mut counts = vec![0u32; labels];
        let mut probs = vec![0.0; labels];
        let mut correct = 0usize;
        for &(j, gold) in &self.gold {
            let predicted = match self.rule {
                Rule::Vote => vote_column(self.matrix, coalition, j, self.tie, &mut counts),
                Rule::AverageArgmax => {
                    average_column(self.matrix, coalition, j, &mut probs);
                    Some(argmax(&probs))
                }
            };
            correct += usize::from(discriminant(predicted, gold));
        }
        Ok(correct)
    }

    pub fn accuracy(&self, coalition: &Coalition) -> Result<f64> {
        if coalition.is_empty() && coalition.players() == self.matrix.num_prompts() {
            return Ok(self.u_empty);
        }
        Ok(self.correct(coalition)? as f64 / self.gold.len() as f64)
    }
}

impl Utility for EnsembleUtility<'_> {
    fn players(&self) -> usize {
        self.matrix.num_prompts()
    }

    fn evaluate(&self, coalition: &Coalition) -> core::result::Result<f64, OracleError> {
        self.accuracy(coalition).map_err(|e| OracleError::new(alloc::string::ToString::to_string(&e)))
    }
}

/// Accuracy of `coalition` on `validation`; the empty coalition is worth `u_empty`.
pub fn utility_accuracy(
    matrix: &PredictionMatrix,
    validation: &ValidationSet,
    coalition: &Coalition,
    rule: Rule,
    tie: TieRule,
    u_empty: f64,
) -> Result<f64> {
    if coalition.is_empty() {
        return Ok(u_empty);
    }
    EnsembleUtility::new(matrix, validation, rule, tie)?.accuracy(coalition)
}
