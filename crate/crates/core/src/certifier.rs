//! Post-hoc monotonicity audits.
//!
//! [`certify`] checks the derivative conditions on an audit lattice using
//! exact input derivatives. [`certify_discrete`] checks the definitions
//! directly on function values with integer increments `c`:
//!
//! * individual: `f(x) ≤ f(x + c·e_α)`
//! * weak pair `(u, v)`, only where `x_u = x_v`: `f(x + c·e_v) ≤ f(x + c·e_u)`
//! * strong pair `(y, z)`, everywhere: `f(x + c·e_z) ≤ f(x + c·e_y)`
//!
//! The value check is brute force and serves as the oracle for the derivative
//! check on count domains.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{linspace, ConstraintKind, GridSpec, SiteMode};
use crate::grove::GroveModel;
use crate::penalty::{Hinge, Penalties};
use crate::schema::{Constraints, FeatureKind, FeatureSchema, MonotoneSpec};

/// Upper bound on value comparisons in [`certify_discrete`].
pub const MAX_COMPARISONS: u64 = 1_000_000;

/// Violations listed per constraint by the value check, in lattice order.
pub const MAX_LISTED_VIOLATIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub grid: GridSpec,
    /// A finding is DME-shaped only if its last difference is below this share of the first.
    pub tail_threshold: f64,
    /// Dominant slopes below this flag a separated strong pair.
    pub slope_floor: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            grid: GridSpec::default().audit(),
            tail_threshold: 0.5,
            slope_floor: 1e-3,
        }
    }
}

/// Where a check failed. For value checks `f(lower) > f(upper)` although the
/// definition requires the opposite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<(String, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<(String, f64)>>,
    /// `(f(lower), f(upper))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<(f64, f64)>,
}

impl Witness {
    fn coords(&self, which: &Option<Vec<(String, f64)>>) -> Option<Vec<f64>> {
        which.as_ref().map(|v| v.iter().map(|(_, x)| *x).collect())
    }

    /// Coordinates of the point that should have the smaller value.
    pub fn lower_coords(&self) -> Option<Vec<f64>> {
        self.coords(&self.lower)
    }

    pub fn upper_coords(&self) -> Option<Vec<f64>> {
        self.coords(&self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub label: String,
    pub kind: ConstraintKind,
    pub pass: bool,
    /// Smallest derivative (difference) or value gap found; `pass ⇔ min_margin ≥ 0`.
    pub min_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Value check only: failing comparisons, up to [`MAX_LISTED_VIOLATIONS`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Witness>,
    /// Lattice points (derivative check) or value comparisons (value check).
    pub checked: u64,
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmeFinding {
    pub feature: String,
    pub is_dme: bool,
    pub first_differences: Vec<f64>,
}

/// A strong pair placed in different groups whose dominant member is nearly flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hazard {
    pub dominant: String,
    pub dominated: String,
    pub dominant_min_slope: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Derivative,
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub method: Method,
    pub constraints: Vec<ConstraintResult>,
    pub dme_findings: Vec<DmeFinding>,
    pub structural: Vec<Hazard>,
}

impl CertificationReport {
    /// Every constraint passed.
    pub fn passed(&self) -> bool {
        self.constraints.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintResult> {
        self.constraints.iter().filter(|c| !c.pass)
    }

    pub fn find(&self, kind: ConstraintKind) -> Option<&ConstraintResult> {
        self.constraints.iter().find(|c| c.kind == kind)
    }
}

fn fmt_point(p: &[(String, f64)]) -> String {
    let inner: Vec<String> = p.iter().map(|(n, v)| format!("{n}={v}")).collect();
    format!("({})", inner.join(", "))
}

impl fmt::Display for CertificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.constraints {
            write!(
                f,
                "{} {:<32} min_margin {:+.6}",
                if c.pass { "PASS" } else { "FAIL" },
                c.label,
                c.min_margin
            )?;
            if let Some(w) = &c.witness {
                match (&w.lower, &w.upper, w.values) {
                    (Some(lo), Some(hi), Some((a, b))) => {
                        write!(f, "  f{} = {a:.4} > f{} = {b:.4}", fmt_point(lo), fmt_point(hi))?
                    }
                    _ => write!(f, "  at {}", fmt_point(&w.point))?,
                }
            }
            writeln!(f)?;
        }
        for h in &self.structural {
            writeln!(f, "HAZARD {}", h.message)?;
        }
        for d in &self.dme_findings {
            if d.is_dme {
                writeln!(f, "DME    {}", d.feature)?;
            }
        }
        Ok(())
    }
}

/// Derivative audit with the default thresholds on `grid`.
pub fn certify(model: &GroveModel, spec: &MonotoneSpec, grid: &GridSpec) -> Result<CertificationReport> {
    certify_with(
        model,
        spec,
        &CertifyConfig {
            grid: *grid,
            ..CertifyConfig::default()
        },
    )
}

pub fn certify_with(model: &GroveModel, spec: &MonotoneSpec, cfg: &CertifyConfig) -> Result<CertificationReport> {
    let c = spec.resolve(&model.schema)?;
    let pen = Penalties::with_mode(model, &c, &cfg.grid, SiteMode::Audit)?;
    let eval = pen.evaluate(model, Hinge::EXACT, false);
    let constraints: Vec<ConstraintResult> = eval
        .report
        .constraints
        .into_iter()
        .zip(pen.sites())
        .map(|(cp, site)| {
            let pass = cp.min_margin >= 0.0;
            ConstraintResult {
                label: cp.label,
                kind: cp.kind,
                pass,
                min_margin: cp.min_margin,
                witness: (!pass).then(|| Witness {
                    point: cp.worst_point,
                    increment: None,
                    lower: None,
                    upper: None,
                    values: None,
                }),
                violations: Vec::new(),
                checked: cp.points as u64,
                exhaustive: site.is_exhaustive(),
            }
        })
        .collect();
    let mut report = CertificationReport {
        method: Method::Derivative,
        constraints,
        dme_findings: Vec::new(),
        structural: Vec::new(),
    };
    report.structural = split_pair_guard(model, &c, &report, cfg.slope_floor)?;
    for &a in &c.individual {
        if !model.schema.is_binary(a) {
            report.dme_findings.push(detect_dme(model, a, &cfg.grid, cfg.tail_threshold)?);
        }
    }
    Ok(report)
}

/// Function access for the value-based check.
pub trait DiscreteScorer: Sync {
    fn schema(&self) -> &FeatureSchema;

    fn score_at(&self, x: &[f64]) -> f64;

    /// Features that can change `f(x + a) − f(x + b)` when `a` and `b` only
    /// touch `moved`. The rest are held at their lower bounds.
    fn relevant(&self, moved: &[usize]) -> Vec<usize> {
        let _ = moved;
        (0..self.schema().len()).collect()
    }
}

impl DiscreteScorer for GroveModel {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn score_at(&self, x: &[f64]) -> f64 {
        self.score(x).expect("lattice points match the schema")
    }

    // additivity: groups not containing a moved feature cancel
    fn relevant(&self, moved: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = moved
            .iter()
            .filter_map(|&f| self.arch.group_of(f))
            .flat_map(|g| self.arch.groups[g].features.clone())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A scorer backed by a closure, e.g. a lookup table.
pub struct FnScorer<F> {
    schema: FeatureSchema,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnScorer<F> {
    pub fn new(schema: FeatureSchema, f: F) -> Self {
        FnScorer { schema, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> DiscreteScorer for FnScorer<F> {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn score_at(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Admissible values per feature; `None` marks a continuous feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDomains {
    pub values: Vec<Option<Vec<f64>>>,
}

impl DiscreteDomains {
    /// Integers of each count domain and `{0, 1}` for binaries.
    pub fn from_schema(schema: &FeatureSchema) -> Self {
        let values = schema
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Binary => Some(vec![0.0, 1.0]),
                FeatureKind::Count => {
                    let (a, b) = (f.lo().ceil() as i64, f.hi().floor() as i64);
                    Some((a..=b).map(|v| v as f64).collect())
                }
                FeatureKind::Continuous => None,
            })
            .collect();
        DiscreteDomains { values }
    }
}

/// Value-based check on the schema's count/binary domains.
pub fn certify_discrete<S: DiscreteScorer>(scorer: &S, spec: &MonotoneSpec) -> Result<CertificationReport> {
    certify_discrete_on(scorer, spec, &DiscreteDomains::from_schema(scorer.schema()))
}

pub fn certify_discrete_on<S: DiscreteScorer>(
    scorer: &S,
    spec: &MonotoneSpec,
    domains: &DiscreteDomains,
) -> Result<CertificationReport> {
    let schema = scorer.schema();
    if domains.values.len() != schema.len() {
        return Err(Error::DimensionMismatch {
            expected: schema.len(),
            found: domains.values.len(),
        });
    }
    let c = spec.resolve(schema)?;
    let kinds = c
        .individual
        .iter()
        .map(|&a| ConstraintKind::Individual(a))
        .chain(c.weak.iter().map(|&(u, v)| ConstraintKind::Weak(u, v)))
        .chain(c.strong.iter().map(|&(y, z)| ConstraintKind::Strong(y, z)));
    let constraints = kinds
        .map(|k| check_values(scorer, domains, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(CertificationReport {
        method: Method::Value,
        constraints,
        dme_findings: Vec::new(),
        structural: Vec::new(),
    })
}

fn check_values<S: DiscreteScorer>(scorer: &S, domains: &DiscreteDomains, kind: ConstraintKind) -> Result<ConstraintResult> {
    let schema = scorer.schema();
    let (up, down, tied) = match kind {
        ConstraintKind::Individual(a) => (a, None, false),
        ConstraintKind::Weak(u, v) => (u, Some(v), true),
        ConstraintKind::Strong(y, z) => (y, Some(z), false),
    };
    let moved: Vec<usize> = std::iter::once(up).chain(down).collect();
    let rel = scorer.relevant(&moved);
    let mut axes = Vec::with_capacity(rel.len());
    for &f in &rel {
        match &domains.values[f] {
            Some(v) if !v.is_empty() => axes.push(v.clone()),
            _ => {
                return Err(Error::Schema(format!(
                    "feature `{}` needs a finite discrete domain",
                    schema.feature(f).name
                )))
            }
        }
    }
    let lattice: u64 = axes.iter().map(|a| a.len() as u64).product();
    let max_inc = moved
        .iter()
        .map(|&f| domains.values[f].as_ref().map_or(0, |v| v.len() as u64))
        .max()
        .unwrap_or(0);
    let bound = lattice.saturating_mul(max_inc.saturating_sub(1));
    if bound > MAX_COMPARISONS {
        return Err(Error::DomainTooLarge {
            comparisons: bound,
            limit: MAX_COMPARISONS,
        });
    }

    let mut base: Vec<f64> = domains
        .values
        .iter()
        .zip(schema.features())
        .map(|(v, f)| v.as_ref().and_then(|v| v.first().copied()).unwrap_or(f.lo()))
        .collect();
    let pos = |f: usize| rel.iter().position(|&r| r == f).expect("moved features are relevant");
    let ip = pos(up);
    let contains = |f: usize, x: f64| domains.values[f].as_ref().is_some_and(|v| v.contains(&x));

    let named = |x: &[f64]| -> Vec<(String, f64)> { rel.iter().map(|&f| (schema.feature(f).name.clone(), x[f])).collect() };
    let witness = |b: &[f64], c: f64, lo: &[f64], hi: &[f64], fl: f64, fh: f64| Witness {
        point: named(b),
        increment: Some(c),
        lower: Some(named(lo)),
        upper: Some(named(hi)),
        values: Some((fl, fh)),
    };
    let mut violations = Vec::new();
    let mut worst: Option<(f64, Vec<f64>, f64, Vec<f64>, Vec<f64>, f64, f64)> = None;
    let mut checked = 0u64;
    let mut idx = vec![0usize; axes.len()];
    loop {
        for (k, &f) in rel.iter().enumerate() {
            base[f] = axes[k][idx[k]];
        }
        let skip = tied && base[up] != base[down.unwrap()];
        if !skip {
            for &target in &axes[ip] {
                let c = target - base[up];
                if c <= 0.0 {
                    continue;
                }
                let mut hi = base.clone();
                hi[up] += c;
                let lo = match down {
                    None => base.clone(),
                    Some(d) => {
                        if !contains(d, base[d] + c) {
                            continue;
                        }
                        let mut lo = base.clone();
                        lo[d] += c;
                        lo
                    }
                };
                let (fl, fh) = (scorer.score_at(&lo), scorer.score_at(&hi));
                let gap = fh - fl;
                checked += 1;
                if gap < 0.0 && violations.len() < MAX_LISTED_VIOLATIONS {
                    violations.push(witness(&base, c, &lo, &hi, fl, fh));
                }
                if worst.as_ref().is_none_or(|w| gap < w.0) {
                    worst = Some((gap, base.clone(), c, lo, hi, fl, fh));
                }
            }
        }
        // odometer over the relevant lattice, last axis fastest
        let mut k = axes.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            if k == 0 {
                k = usize::MAX;
                break;
            }
        }
        if k == usize::MAX || axes.is_empty() {
            break;
        }
    }
    let (min_margin, worst_witness) = match worst {
        None => (0.0, None),
        Some((gap, b, c, lo, hi, fl, fh)) => (gap, (gap < 0.0).then(|| witness(&b, c, &lo, &hi, fl, fh))),
    };
    Ok(ConstraintResult {
        label: label(schema, kind),
        kind,
        pass: min_margin >= 0.0,
        min_margin,
        witness: worst_witness,
        violations,
        checked,
        exhaustive: true,
    })
}

fn label(schema: &FeatureSchema, kind: ConstraintKind) -> String {
    let n = |i: usize| schema.feature(i).name.as_str();
    match kind {
        ConstraintKind::Individual(a) => format!("individual({})", n(a)),
        ConstraintKind::Weak(u, v) => format!("weak({} > {})", n(u), n(v)),
        ConstraintKind::Strong(y, z) => format!("strong({} > {})", n(y), n(z)),
    }
}

/// Classifies a sequence of contribution values by its first differences.
pub fn dme_from_values(feature: &str, values: &[f64], tail_threshold: f64) -> Result<DmeFinding> {
    if values.len() < 3 {
        return Err(Error::EmptyGrid(format!("DME check on `{feature}` needs at least 3 points")));
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let positive = d.iter().all(|&x| x > 0.0);
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    let tail = d[d.len() - 1] < tail_threshold * d[0];
    Ok(DmeFinding {
        feature: feature.to_owned(),
        is_dme: positive && decreasing && tail,
        first_differences: d,
    })
}

/// Marginal contribution of `feature` along its axis, other group members at
/// their lower bounds. Count axes use the integers of the domain.
pub fn marginal_curve(model: &GroveModel, feature: usize, grid: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = model.schema.feature(feature);
    let xs = match f.kind {
        FeatureKind::Count => {
            let (a, b) = (f.lo().ceil() as i64, f.hi().floor() as i64);
            (a..=b).map(|v| v as f64).collect()
        }
        _ => linspace(f.lo(), f.hi(), grid.points_1d),
    };
    let g = model
        .arch
        .group_of(feature)
        .ok_or_else(|| Error::Schema(format!("feature `{}` has no group", f.name)))?;
    let group = &model.arch.groups[g];
    let mut slice: Vec<f64> = group.features.iter().map(|&k| model.schema.feature(k).lo()).collect();
    let p = group.features.iter().position(|&k| k == feature).unwrap();
    let mut ys = Vec::with_capacity(xs.len());
    for &x in &xs {
        slice[p] = x;
        ys.push(model.subnet_contribution(g, &slice)?);
    }
    Ok((xs, ys))
}

pub fn detect_dme(model: &GroveModel, feature: usize, grid: &GridSpec, tail_threshold: f64) -> Result<DmeFinding> {
    let (_, ys) = marginal_curve(model, feature, grid)?;
    dme_from_values(&model.schema.feature(feature).name, &ys, tail_threshold)
}

/// Flags strong pairs split across groups (and not both binary) whose
/// dominant member has a minimum slope below `slope_floor`. An additive form
/// can then only satisfy the pair with a constant dominated term.
pub fn split_pair_guard(
    model: &GroveModel,
    c: &Constraints,
    report: &CertificationReport,
    slope_floor: f64,
) -> Result<Vec<Hazard>> {
    let mut out = Vec::new();
    for &(y, z) in &c.strong {
        let split = model.arch.group_of(y) != model.arch.group_of(z);
        if !split || (model.schema.is_binary(y) && model.schema.is_binary(z)) {
            continue;
        }
        let slope = match report.find(ConstraintKind::Individual(y)) {
            Some(r) => r.min_margin,
            None => {
                let only = Constraints {
                    individual: vec![y],
                    ..Constraints::default()
                };
                let pen = Penalties::with_mode(model, &only, &GridSpec::default().audit(), SiteMode::Audit)?;
                pen.evaluate(model, Hinge::EXACT, false).report.constraints[0].min_margin
            }
        };
        if slope < slope_floor {
            let (ny, nz) = (&model.schema.feature(y).name, &model.schema.feature(z).name);
            out.push(Hazard {
                dominant: ny.clone(),
                dominated: nz.clone(),
                dominant_min_slope: slope,
                message: format!(
                    "strong pair ({ny}, {nz}) is split across groups while `{ny}` has minimum slope {slope:.2e}; \
                     an additive form forces the `{nz}` term to be constant"
                ),
            });
        }
    }
    Ok(out)
}
