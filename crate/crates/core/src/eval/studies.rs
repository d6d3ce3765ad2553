//! The two ablation studies: removing the decoder, and mixing unlabeled
//! samples from other families into training.

use std::fmt::Write as _;

use crate::data::FamilyData;
use crate::error::{Error, Result};
use crate::train::{train, TrainSettings};

use super::report::{cross_matrix, EvalReport};

/// One evaluated cell of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    /// `joint`/`baseline`, or the foreign ratio.
    pub variant: String,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    /// Unlabeled samples that received classification gradient (expected 0).
    pub foreign_cro_terms: usize,
    pub foreign_seen: usize,
}

impl StudyResult {
    /// Mean AUC of a variant on a test family over all seeds.
    pub fn mean_auc(&self, variant: &str, test_family: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant && r.report.test_family == test_family)
            .map(|r| r.report.auc)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    fn variants(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.variant.as_str()) {
                out.push(&r.variant);
            }
        }
        out
    }

    fn test_families(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.report.test_family.as_str()) {
                out.push(&r.report.test_family);
            }
        }
        out
    }

    /// One line per (variant, test family, seed).
    pub fn csv(&self, variant_column: &str) -> String {
        let mut out = format!("{variant_column},train_family,test_family,auc,n_real,n_fake,seed\n");
        for row in &self.rows {
            let r = &row.report;
            writeln!(
                out,
                "{},{},{},{:.6},{},{},{}",
                row.variant, r.train_family, r.test_family, r.auc, r.n_real, r.n_fake, r.seed
            )
            .expect("write to string");
        }
        out
    }

    /// Seed-averaged AUC per (variant, test family).
    pub fn means_csv(&self, variant_column: &str) -> String {
        let mut out = format!("{variant_column},test_family,mean_auc,seeds\n");
        for v in self.variants() {
            for t in self.test_families() {
                let n = self.rows.iter().filter(|r| r.variant == v && r.report.test_family == t).count();
                let m = self.mean_auc(v, t).unwrap_or(f64::NAN);
                writeln!(out, "{v},{t},{m:.6},{n}").expect("write to string");
            }
        }
        out
    }
}

fn find<'a>(families: &[&'a FamilyData], name: &str) -> Result<&'a FamilyData> {
    families
        .iter()
        .copied()
        .find(|f| f.name() == name)
        .ok_or_else(|| Error::invalid(format!("family `{name}` is missing")))
}

/// Train the joint model and the decoder-free baseline on `train_family`
/// with each seed; both variants of a seed share initialization of the
/// common parts and the batch order.
pub fn ablate_decoder(
    base: &TrainSettings,
    train_family: &str,
    families: &[&FamilyData],
    seeds: &[u64],
) -> Result<StudyResult> {
    let primary = find(families, train_family)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        for (variant, baseline) in [("joint", false), ("baseline", true)] {
            let settings = TrainSettings { seed, baseline, foreign_ratio: 0.0, ..*base };
            let outcome = train(&settings, &primary.train, &[])?;
            for report in cross_matrix(&outcome.params, train_family, &primary.train, families, seed)? {
                rows.push(StudyRow { variant: variant.to_string(), report });
            }
        }
    }
    Ok(StudyResult { rows, foreign_cro_terms: 0, foreign_seen: 0 })
}

/// Train on `train_family` with label-stripped samples from every other
/// family at each ratio, for each seed.
pub fn augmentation_study(
    base: &TrainSettings,
    train_family: &str,
    families: &[&FamilyData],
    ratios: &[f64],
    seeds: &[u64],
) -> Result<StudyResult> {
    let primary = find(families, train_family)?;
    let foreign: Vec<&[crate::data::Sample]> =
        families.iter().filter(|f| f.name() != train_family).map(|f| f.train.as_slice()).collect();
    let mut result = StudyResult { rows: Vec::new(), foreign_cro_terms: 0, foreign_seen: 0 };
    for &seed in seeds {
        for &ratio in ratios {
            let settings = TrainSettings { seed, baseline: false, foreign_ratio: ratio, ..*base };
            let outcome = train(&settings, &primary.train, &foreign)?;
            result.foreign_cro_terms += outcome.foreign_cro_terms;
            result.foreign_seen += outcome.foreign_seen;
            for report in cross_matrix(&outcome.params, train_family, &primary.train, families, seed)? {
                result.rows.push(StudyRow { variant: format!("{ratio}"), report });
            }
        }
    }
    Ok(result)
}
