//! Scoring for open set predictions.
//!
//! Precision, recall, and F are pooled over the known classes only: a known
//! instance sent to the unknown bucket costs its class a false negative, and
//! an unknown instance claimed by a class costs that class a false positive.
//! Discovering unknowns therefore only pays off through fewer false
//! positives, never through direct credit.

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::osr::Prediction;

/// Micro-averaged scores over the known classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Fraction measuring how far a problem is from closed-set conditions:
/// `1 - sqrt(2 * training / (testing + target))`, where `training` and
/// `testing` count the classes seen in each phase and `target` counts the
/// classes to be recognized. Zero means every test class was trained on.
pub fn openness(training: usize, testing: usize, target: usize) -> Result<f64> {
    if training == 0 || testing == 0 || target == 0 {
        return Err(Error::invalid(
            "openness needs positive training, testing, and target class counts",
        ));
    }
    if 2 * training > testing + target {
        return Err(Error::invalid(format!(
            "openness is undefined for 2 * {training} training classes against \
             {testing} testing + {target} target classes"
        )));
    }
    Ok(1.0 - (2.0 * training as f64 / (testing + target) as f64).sqrt())
}

/// Micro-averaged precision, recall, and F over the known classes. `truth`
/// holds `Some(label)` for instances of a trained class and `None` for
/// instances that belong to no trained class.
pub fn micro_f(predictions: &[Prediction], truth: &[Option<ClassLabel>]) -> Result<Scores> {
    if predictions.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions against {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (pred, actual) in predictions.iter().zip(truth) {
        match (pred, actual) {
            (Prediction::Known(p), Some(t)) if p == t => tp += 1,
            (Prediction::Known(_), Some(_)) => {
                // Wrong class: a false positive for the predicted class and
                // a false negative for the true one.
                fp += 1;
                fn_ += 1;
            }
            (Prediction::Known(_), None) => fp += 1,
            (Prediction::Unknown(_), Some(_)) => fn_ += 1,
            (Prediction::Unknown(_), None) => {}
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Scores {
        precision,
        recall,
        f_measure,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    })
}
