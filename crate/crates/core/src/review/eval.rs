use serde::{Deserialize, Serialize};

use super::{LabeledPair, PairScore, PairScorer};
use crate::corpus::PairId;
use crate::error::{Error, Result};

/// Binary confusion matrix with `suitable` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(gold: &[bool], predicted: &[bool]) -> Self {
        let mut m = Self::default();
        for (&g, &p) in gold.iter().zip(predicted) {
            match (g, p) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (true, false) => m.fn_ += 1,
                (false, false) => m.tn += 1,
            }
        }
        m
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl From<ConfusionMatrix> for ClassifierEval {
    fn from(confusion: ConfusionMatrix) -> Self {
        Self {
            f1: confusion.f1(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            accuracy: confusion.accuracy(),
            confusion,
        }
    }
}

/// Scores every test pair with `scorer` and compares against gold labels.
pub fn evaluate_classifier<S: PairScorer + ?Sized>(scorer: &S, test_set: &[LabeledPair]) -> Result<ClassifierEval> {
    if test_set.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let scores = test_set
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let id = p.pair_id.clone().unwrap_or_else(|| PairId::new(format!("test-{i}")));
            scorer.score_texts(id, &p.hs, &p.cn)
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_scores(&scores, test_set)
}

/// Evaluation for scores obtained elsewhere (e.g. from a remote scorer);
/// `scores[i]` judges `test_set[i]`.
pub fn evaluate_scores(scores: &[PairScore], test_set: &[LabeledPair]) -> Result<ClassifierEval> {
    if test_set.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if scores.len() != test_set.len() {
        return Err(Error::InvalidConfig(format!(
            "{} scores for {} test pairs",
            scores.len(),
            test_set.len()
        )));
    }
    let gold: Vec<bool> = test_set.iter().map(|p| p.label.is_suitable()).collect();
    let predicted: Vec<bool> = scores.iter().map(|s| s.label.is_suitable()).collect();
    Ok(ConfusionMatrix::from_predictions(&gold, &predicted).into())
}
