//! Additive separability tests with and without monotonicity.
//!
//! Two models are fitted: a *joint* one where `U ∪ V` is a single group and a
//! *separated* one where `U` and `V` are separate groups. The plain test
//! compares their accuracy. The monotonicity-aware test also requires both
//! fits to satisfy the full constraint set. A separated model can satisfy a
//! strong pair spanning `U` and `V` only through its additive terms, which the
//! audit checks on the product lattice of the two groups.

use serde::{Deserialize, Serialize};

use crate::certifier::{certify_with, CertifyConfig, Hazard};
use crate::dataio::{split, Dataset};
use crate::error::{Error, Result};
use crate::grove::{GroveModel, Task};
use crate::metrics::{classification_error, mse};
use crate::schema::{derive_groups, GroveArchitecture, MonotoneSpec};
use crate::trainer::{fit, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparabilityConfig {
    pub train: TrainConfig,
    /// Largest accuracy gap still counted as separable.
    pub threshold_eps: f64,
    /// Share of rows held out for the accuracy comparison; `None` compares in-sample.
    pub holdout: Option<f64>,
    pub hidden: Vec<usize>,
}

impl Default for SeparabilityConfig {
    fn default() -> Self {
        SeparabilityConfig {
            train: TrainConfig::default(),
            threshold_eps: 0.005,
            holdout: None,
            hidden: vec![2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityVerdict {
    pub acc_joint: f64,
    pub acc_separated: f64,
    pub threshold_eps: f64,
    /// Accuracy criterion alone.
    pub accuracy_separable: bool,
    pub monotone_feasible: bool,
    pub separable: bool,
    pub joint_certified: bool,
    pub separated_certified: bool,
    pub hazards: Vec<Hazard>,
    pub degenerate: bool,
}

/// Accuracy for classification, negative mean squared error for regression.
pub fn accuracy(model: &GroveModel, data: &Dataset) -> Result<f64> {
    let mut pred = Vec::with_capacity(data.len());
    for x in &data.x {
        let p = model.predict(x)?;
        pred.push(p.probability.unwrap_or(p.score));
    }
    match model.task {
        Task::BinaryClassification => Ok(1.0 - classification_error(&pred, &data.y, 0.5)?),
        Task::Regression => Ok(-mse(&pred, &data.y)?),
    }
}

fn architecture(data: &Dataset, spec: &MonotoneSpec, blocks: &[Vec<usize>], hidden: &[usize]) -> Result<GroveArchitecture> {
    let taken: Vec<usize> = blocks.iter().flatten().copied().collect();
    let base = derive_groups(&data.schema, spec, hidden)?;
    let mut groups: Vec<Vec<usize>> = base
        .groups
        .iter()
        .map(|g| g.features.iter().copied().filter(|f| !taken.contains(f)).collect())
        .collect();
    groups.extend(blocks.iter().filter(|b| !b.is_empty()).cloned());
    Ok(GroveArchitecture::from_groups(groups, hidden))
}

/// Training spec for the separated model: pairs spanning `U` and `V` become
/// weak when both sides are single features and are dropped otherwise.
fn separated_spec(spec: &MonotoneSpec, u: &[String], v: &[String]) -> MonotoneSpec {
    let cross = |a: &String, b: &String| (u.contains(a) && v.contains(b)) || (v.contains(a) && u.contains(b));
    let singles = u.len() == 1 && v.len() == 1;
    let mut out = MonotoneSpec {
        individual: spec.individual.clone(),
        weak_pairs: Vec::new(),
        strong_pairs: Vec::new(),
    };
    for p in &spec.weak_pairs {
        if !cross(&p.0, &p.1) || singles {
            out.weak_pairs.push(p.clone());
        }
    }
    for p in &spec.strong_pairs {
        if !cross(&p.0, &p.1) {
            out.strong_pairs.push(p.clone());
        } else if singles && !out.weak_pairs.contains(p) {
            out.weak_pairs.push(p.clone());
        }
    }
    out
}

pub fn test_separability(
    data: &Dataset,
    spec: &MonotoneSpec,
    group_u: &[String],
    group_v: &[String],
    task: Task,
    cfg: &SeparabilityConfig,
) -> Result<SeparabilityVerdict> {
    if !(cfg.threshold_eps > 0.0) {
        return Err(Error::InvalidConfig("threshold_eps must be positive".into()));
    }
    let idx = |names: &[String]| names.iter().map(|n| data.schema.index_of(n)).collect::<Result<Vec<_>>>();
    let (u, v) = (idx(group_u)?, idx(group_v)?);
    if u.iter().any(|f| v.contains(f)) {
        return Err(Error::InvalidConfig("U and V overlap".into()));
    }
    let (train, eval) = match cfg.holdout {
        Some(f) => {
            let (a, b) = split(data, 1.0 - f, cfg.train.seed)?;
            (a, b)
        }
        None => (data.clone(), data.clone()),
    };
    let certify_cfg = CertifyConfig {
        grid: cfg.train.audit_grid(),
        ..CertifyConfig::default()
    };

    let joint_block: Vec<usize> = u.iter().chain(&v).copied().collect();
    let joint_arch = architecture(&train, spec, &[joint_block], &cfg.hidden)?;
    let joint = fit(&train, spec, &joint_arch, task, &cfg.train)?.model;
    let acc_joint = accuracy(&joint, &eval)?;
    let joint_certified = certify_with(&joint, spec, &certify_cfg)?.passed();

    if u.is_empty() || v.is_empty() {
        return Ok(SeparabilityVerdict {
            acc_joint,
            acc_separated: acc_joint,
            threshold_eps: cfg.threshold_eps,
            accuracy_separable: true,
            monotone_feasible: true,
            separable: true,
            joint_certified,
            separated_certified: joint_certified,
            hazards: Vec::new(),
            degenerate: true,
        });
    }

    let sep_spec = separated_spec(spec, group_u, group_v);
    let sep_arch = architecture(&train, &sep_spec, &[u.clone(), v.clone()], &cfg.hidden)?;
    let separated = fit(&train, &sep_spec, &sep_arch, task, &cfg.train)?.model;
    let acc_separated = accuracy(&separated, &eval)?;
    let sep_report = certify_with(&separated, spec, &certify_cfg)?;

    let accuracy_separable = (acc_joint - acc_separated).abs() < cfg.threshold_eps;
    let monotone_feasible = sep_report.structural.is_empty() && sep_report.passed() && joint_certified;
    Ok(SeparabilityVerdict {
        acc_joint,
        acc_separated,
        threshold_eps: cfg.threshold_eps,
        accuracy_separable,
        monotone_feasible,
        separable: accuracy_separable && monotone_feasible,
        joint_certified,
        separated_certified: sep_report.passed(),
        hazards: sep_report.structural,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn cross_pairs_are_demoted_or_dropped() {
        let spec = MonotoneSpec {
            individual: s(&["a", "b", "c"]),
            weak_pairs: vec![],
            strong_pairs: vec![("a".into(), "b".into()), ("b".into(), "c".into())],
        };
        let singles = separated_spec(&spec, &s(&["a"]), &s(&["b"]));
        assert_eq!(singles.weak_pairs, vec![("a".to_string(), "b".to_string())]);
        assert_eq!(singles.strong_pairs, vec![("b".to_string(), "c".to_string())]);
        let multi = separated_spec(&spec, &s(&["a", "c"]), &s(&["b"]));
        assert!(multi.weak_pairs.is_empty() && multi.strong_pairs.is_empty());
    }
}
