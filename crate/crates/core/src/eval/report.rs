//! Scoring a test set and the train-family × test-family matrix.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::data::{FamilyData, Label, Sample};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{forward_traced, JdfdParams};
use crate::par;
use crate::tensor::Tensor;

use super::metrics::{auc, roc_points, RocCurve};

/// Samples per inference forward. Infer-mode outputs do not depend on the
/// batch, so this only affects speed.
const EVAL_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSample {
    pub id: u64,
    pub label: Label,
    /// Fake-class probability.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub train_family: String,
    pub test_family: String,
    pub seed: u64,
    pub auc: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub scores: Vec<ScoredSample>,
    pub roc: RocCurve,
}

/// Fake-class probability of every sample, in input order.
pub fn score_samples(params: &JdfdParams, samples: &[Sample]) -> Result<Vec<f64>> {
    let chunks: Vec<&[Sample]> = samples.chunks(EVAL_CHUNK).collect();
    let parts = par::map_indexed(chunks.len(), |i| -> Result<Vec<f64>> {
        let x = Tensor::stack(chunks[i].iter().map(|s| &s.image))?;
        let pass = forward_traced(&x, params, Mode::Infer)?;
        Ok(pass.output.probabilities.data().chunks(2).map(|p| p[1]).collect())
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    if let Some(i) = out.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score of sample {}", samples[i].id)));
    }
    Ok(out)
}

/// Score a labeled test set and summarize it.
pub fn evaluate(
    params: &JdfdParams,
    test: &[Sample],
    train_family: &str,
    test_family: &str,
    seed: u64,
) -> Result<EvalReport> {
    let labels: Vec<Label> = test
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::invalid(format!("test sample {} is unlabeled", s.id))))
        .collect::<Result<_>>()?;
    let scores = score_samples(params, test)?;
    let n_fake = labels.iter().filter(|&&l| l == Label::Fake).count();
    Ok(EvalReport {
        train_family: train_family.to_string(),
        test_family: test_family.to_string(),
        seed,
        auc: auc(&scores, &labels)?,
        roc: roc_points(&scores, &labels)?,
        n_real: labels.len() - n_fake,
        n_fake,
        scores: test
            .iter()
            .zip(&labels)
            .zip(&scores)
            .map(|((s, &label), &score)| ScoredSample { id: s.id, label, score })
            .collect(),
    })
}

/// Evaluate a model trained on `train_family` against the test split of
/// every family. Fails if any test image also appears in `train`.
pub fn cross_matrix(
    params: &JdfdParams,
    train_family: &str,
    train: &[Sample],
    families: &[&FamilyData],
    seed: u64,
) -> Result<Vec<EvalReport>> {
    let seen: HashSet<(&str, u64)> = train.iter().map(|s| (s.family.as_str(), s.id)).collect();
    families
        .iter()
        .map(|fam| {
            if let Some(s) = fam.test.iter().find(|s| seen.contains(&(s.family.as_str(), s.id))) {
                return Err(Error::invalid(format!("test sample {}/{} is also a training sample", s.family, s.id)));
            }
            evaluate(params, &fam.test, train_family, fam.name(), seed)
        })
        .collect()
}

pub const REPORT_HEADER: &str = "train_family,test_family,auc,n_real,n_fake,seed";

pub fn report_row(r: &EvalReport) -> String {
    format!("{},{},{:.6},{},{},{}", r.train_family, r.test_family, r.auc, r.n_real, r.n_fake, r.seed)
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        writeln!(out, "{}", report_row(r)).expect("write to string");
    }
    out
}

pub fn roc_csv(roc: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for (t, (fpr, tpr)) in roc.thresholds.iter().zip(&roc.points) {
        writeln!(out, "{t},{fpr},{tpr}").expect("write to string");
    }
    out
}

/// Per-sample scores with full precision, so the AUC can be re-derived.
pub fn scores_csv(r: &EvalReport) -> String {
    let mut out = String::from("id,label,score\n");
    for s in &r.scores {
        writeln!(out, "{},{},{}", s.id, s.label.index(), s.score).expect("write to string");
    }
    out
}
