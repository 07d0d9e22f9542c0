//! Discretized monotonicity penalties.
//!
//! For a constraint with violation measure `Δ(x)` (see [`crate::grid`]) the
//! penalty is the mean over its lattice of `max(ε, Δ(x) + m)²`. `ε` is the
//! floor of the hinge; `m` is a shift used during training to demand a strict
//! margin (`m = 0` gives the reported functional). Each family value
//! `h1` (individual), `h2` (weak pairs), `h3` (strong pairs) averages the
//! per-constraint means of its family, so an empty family contributes zero.
//!
//! With `ε = 0, m = 0` a penalty is exactly zero iff no lattice point violates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::Workspace;
use crate::error::Result;
use crate::grid::{build_sites, ConstraintKind, GridSpec, Site, SiteMode};
use crate::grove::GroveModel;
use crate::schema::Constraints;

const CHUNK: usize = 256;

/// Hinge parameters for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub epsilon: f64,
    pub margin: f64,
}

impl Hinge {
    /// `ε = 0, m = 0`: the exact violation functional.
    pub const EXACT: Hinge = Hinge {
        epsilon: 0.0,
        margin: 0.0,
    };

    pub fn floor(epsilon: f64) -> Hinge {
        Hinge { epsilon, margin: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPenalty {
    pub label: String,
    pub kind: ConstraintKind,
    pub value: f64,
    /// Smallest `−Δ` on the lattice; negative means violated.
    pub min_margin: f64,
    pub worst_point: Vec<(String, f64)>,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub epsilon_used: f64,
    pub margin_used: f64,
    pub constraints: Vec<ConstraintPenalty>,
}

impl PenaltyReport {
    pub fn values(&self) -> [f64; 3] {
        [self.h1, self.h2, self.h3]
    }
}

/// Penalty values, optional gradients (flat model layout) and the report.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    pub values: [f64; 3],
    pub grads: Option<[Vec<f64>; 3]>,
    pub report: PenaltyReport,
}

/// Prepared penalty sites for one architecture and grid.
#[derive(Debug, Clone)]
pub struct Penalties {
    sites: Vec<Site>,
    family_sizes: [usize; 3],
}

struct SiteSum {
    value: f64,
    grad: Vec<f64>,
    worst_delta: f64,
    worst_k: usize,
}

impl Penalties {
    pub fn new(model: &GroveModel, constraints: &Constraints, grid: &GridSpec) -> Result<Self> {
        Self::with_mode(model, constraints, grid, SiteMode::Penalty)
    }

    pub fn with_mode(model: &GroveModel, constraints: &Constraints, grid: &GridSpec, mode: SiteMode) -> Result<Self> {
        let sites = build_sites(model, constraints, grid, mode)?;
        let mut family_sizes = [0; 3];
        for s in &sites {
            family_sizes[s.kind.family()] += 1;
        }
        Ok(Penalties { sites, family_sizes })
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn evaluate(&self, model: &GroveModel, hinge: Hinge, with_grad: bool) -> PenaltyEval {
        let p = model.param_len();
        let offsets = model.param_offsets();
        let mut values = [0.0; 3];
        let mut grads = if with_grad {
            Some([vec![0.0; p], vec![0.0; p], vec![0.0; p]])
        } else {
            None
        };
        let mut constraints = Vec::with_capacity(self.sites.len());
        for site in &self.sites {
            let fam = site.kind.family();
            let n = site.len();
            let weight = 1.0 / (n as f64 * self.family_sizes[fam] as f64);
            let sum = site_sum(model, &offsets, site, hinge, with_grad.then_some(weight));
            values[fam] += sum.value / n as f64 / self.family_sizes[fam] as f64;
            if let Some(g) = grads.as_mut() {
                for (acc, v) in g[fam].iter_mut().zip(&sum.grad) {
                    *acc += v;
                }
            }
            let mut coords = Vec::new();
            site.point(sum.worst_k, &mut coords);
            constraints.push(ConstraintPenalty {
                label: site.kind.label(model),
                kind: site.kind,
                value: sum.value / n as f64,
                min_margin: -sum.worst_delta,
                worst_point: site.describe(model, &coords),
                points: n,
            });
        }
        PenaltyEval {
            values,
            grads,
            report: PenaltyReport {
                h1: values[0],
                h2: values[1],
                h3: values[2],
                epsilon_used: hinge.epsilon,
                margin_used: hinge.margin,
                constraints,
            },
        }
    }
}

/// Sum of hinge terms over a site's lattice; gradient scaled by `grad_scale`.
fn site_sum(model: &GroveModel, offsets: &[usize], site: &Site, hinge: Hinge, grad_scale: Option<f64>) -> SiteSum {
    let n = site.len();
    let p = model.param_len();
    let chunks: Vec<SiteSum> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut ws: Vec<Workspace> = site
                .groups
                .iter()
                .map(|sg| Workspace::new(model.subnets[sg.group].shape()))
                .collect();
            let mut coords = Vec::new();
            let mut input = Vec::new();
            let mut acc = SiteSum {
                value: 0.0,
                grad: if grad_scale.is_some() { vec![0.0; p] } else { Vec::new() },
                worst_delta: f64::NEG_INFINITY,
                worst_k: 0,
            };
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                site.point(k, &mut coords);
                let mut delta = 0.0;
                for (sg, w) in site.groups.iter().zip(ws.iter_mut()) {
                    site.group_input(sg, &coords, &mut input);
                    let net = &model.subnets[sg.group];
                    net.forward(&input, w);
                    delta += net.tangent(&sg.direction, w);
                }
                if delta > acc.worst_delta {
                    acc.worst_delta = delta;
                    acc.worst_k = k;
                }
                let shifted = delta + hinge.margin;
                let term = shifted.max(hinge.epsilon);
                acc.value += term * term;
                if let Some(scale) = grad_scale {
                    if shifted > hinge.epsilon {
                        let coef = 2.0 * shifted * scale;
                        for (sg, w) in site.groups.iter().zip(ws.iter_mut()) {
                            site.group_input(sg, &coords, &mut input);
                            let net = &model.subnets[sg.group];
                            let off = offsets[sg.group];
                            net.directional_grad_into(
                                &input,
                                &sg.direction,
                                w,
                                coef,
                                &mut acc.grad[off..off + net.param_len()],
                            );
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = SiteSum {
        value: 0.0,
        grad: vec![0.0; if grad_scale.is_some() { p } else { 0 }],
        worst_delta: f64::NEG_INFINITY,
        worst_k: 0,
    };
    for ch in chunks {
        total.value += ch.value;
        for (a, b) in total.grad.iter_mut().zip(&ch.grad) {
            *a += b;
        }
        if ch.worst_delta > total.worst_delta {
            total.worst_delta = ch.worst_delta;
            total.worst_k = ch.worst_k;
        }
    }
    total
}

fn family(model: &GroveModel, c: Constraints, grid: &GridSpec, eps: f64, fam: usize) -> Result<(f64, Vec<f64>)> {
    let pen = Penalties::new(model, &c, grid)?;
    let eval = pen.evaluate(model, Hinge::floor(eps), true);
    let [g1, g2, g3] = eval.grads.unwrap();
    Ok((eval.values[fam], [g1, g2, g3][fam].clone()))
}

/// Individual-monotonicity penalty and its gradient over the flat model parameters.
pub fn h1(model: &GroveModel, c: &Constraints, grid: &GridSpec, eps: f64) -> Result<(f64, Vec<f64>)> {
    let only = Constraints {
        individual: c.individual.clone(),
        ..Constraints::default()
    };
    family(model, only, grid, eps, 0)
}

/// Weak pairwise penalty, evaluated on the tied axis `x_u = x_v`.
pub fn h2(model: &GroveModel, c: &Constraints, grid: &GridSpec, eps: f64) -> Result<(f64, Vec<f64>)> {
    let only = Constraints {
        weak: c.weak.clone(),
        ..Constraints::default()
    };
    family(model, only, grid, eps, 1)
}

/// Strong pairwise penalty over the full lattice of each pair's group.
pub fn h3(model: &GroveModel, c: &Constraints, grid: &GridSpec, eps: f64) -> Result<(f64, Vec<f64>)> {
    let only = Constraints {
        strong: c.strong.clone(),
        declared_strong: c.declared_strong.clone(),
        ..Constraints::default()
    };
    family(model, only, grid, eps, 2)
}
