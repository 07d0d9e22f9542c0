//! Feature declarations, monotonicity constraints and grove group structure.
//!
//! Constraints are always *increasing*. A decreasing relationship is handled
//! by flipping the sign of the column during preprocessing.
//!
//! Grouping rule: features joined by pairwise constraints form connected
//! components. A component that contains a strong pair whose members are not
//! both binary becomes one multi-feature group; every other feature is a
//! singleton. Binary strong pairs can stay apart because on `{0,1}` the weak
//! and strong conditions coincide and an additive form can satisfy them.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::diffcore::SubnetShape;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Count,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    /// Closed interval `[lo, hi]` the feature ranges over.
    pub domain: (f64, f64),
    /// Cap applied to count features during preprocessing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
}

impl Feature {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Feature {
            name: name.to_owned(),
            kind: FeatureKind::Continuous,
            domain: (lo, hi),
            truncation: None,
        }
    }

    pub fn count(name: &str, hi: f64) -> Self {
        Feature {
            name: name.to_owned(),
            kind: FeatureKind::Count,
            domain: (0.0, hi),
            truncation: Some(hi),
        }
    }

    pub fn binary(name: &str) -> Self {
        Feature {
            name: name.to_owned(),
            kind: FeatureKind::Binary,
            domain: (0.0, 1.0),
            truncation: None,
        }
    }

    pub fn lo(&self) -> f64 {
        self.domain.0
    }

    pub fn hi(&self) -> f64 {
        self.domain.1
    }
}

/// Ordered list of input columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let schema = FeatureSchema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            let (lo, hi) = f.domain;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Schema(format!(
                    "feature `{}` needs lo < hi, got [{lo}, {hi}]",
                    f.name
                )));
            }
            if f.kind == FeatureKind::Binary && f.domain != (0.0, 1.0) {
                return Err(Error::Schema(format!("binary feature `{}` must have domain [0, 1]", f.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, idx: usize) -> &Feature {
        &self.features[idx]
    }

    pub fn feature_mut(&mut self, idx: usize) -> &mut Feature {
        &mut self.features[idx]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_owned()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn is_binary(&self, idx: usize) -> bool {
        self.features[idx].kind == FeatureKind::Binary
    }
}

/// Named monotonicity constraints. Pairs read `(dominant, dominated)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneSpec {
    #[serde(default)]
    pub individual: Vec<String>,
    #[serde(default)]
    pub weak_pairs: Vec<(String, String)>,
    #[serde(default)]
    pub strong_pairs: Vec<(String, String)>,
}

impl MonotoneSpec {
    pub fn is_empty(&self) -> bool {
        self.individual.is_empty() && self.weak_pairs.is_empty() && self.strong_pairs.is_empty()
    }

    /// Same constraints with every strong pair demoted to a weak pair.
    pub fn strong_as_weak(&self) -> MonotoneSpec {
        let mut weak = self.weak_pairs.clone();
        for p in &self.strong_pairs {
            if !weak.contains(p) {
                weak.push(p.clone());
            }
        }
        MonotoneSpec {
            individual: self.individual.clone(),
            weak_pairs: weak,
            strong_pairs: Vec::new(),
        }
    }

    /// Checks the spec against a schema and maps names to column indices.
    ///
    /// The strong list of the result is the transitive closure of the declared
    /// strong pairs.
    pub fn resolve(&self, schema: &FeatureSchema) -> Result<Constraints> {
        let idx = |name: &String| schema.index_of(name);
        let individual = self.individual.iter().map(idx).collect::<Result<Vec<_>>>()?;
        let pairs = |list: &[(String, String)], what: &str| -> Result<Vec<(usize, usize)>> {
            list.iter()
                .map(|(a, b)| {
                    let (ia, ib) = (idx(a)?, idx(b)?);
                    if ia == ib {
                        return Err(Error::InvalidSpec(format!("{what} pair lists `{a}` against itself")));
                    }
                    for (n, i) in [(a, ia), (b, ib)] {
                        if !individual.contains(&i) {
                            return Err(Error::InvalidSpec(format!(
                                "`{n}` appears in a {what} pair but not in the individual list"
                            )));
                        }
                    }
                    Ok((ia, ib))
                })
                .collect()
        };
        let weak = pairs(&self.weak_pairs, "weak")?;
        let declared_strong = pairs(&self.strong_pairs, "strong")?;
        let strong = closure_indices(&declared_strong, |i| schema.feature(i).name.clone())?;
        let mut individual = individual;
        dedup_keep_order(&mut individual);
        let mut weak = weak;
        dedup_keep_order(&mut weak);
        Ok(Constraints {
            individual,
            weak,
            strong,
            declared_strong,
        })
    }
}

fn dedup_keep_order<T: PartialEq + Clone>(v: &mut Vec<T>) {
    let mut out: Vec<T> = Vec::with_capacity(v.len());
    for x in v.drain(..) {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    *v = out;
}

/// Index-resolved constraints; `strong` is closed under transitivity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Constraints {
    pub individual: Vec<usize>,
    pub weak: Vec<(usize, usize)>,
    pub strong: Vec<(usize, usize)>,
    pub declared_strong: Vec<(usize, usize)>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        self.individual.is_empty() && self.weak.is_empty() && self.strong.is_empty()
    }
}

/// All strong orderings implied by transitivity, as `(above, below)` names.
pub fn transitive_closure_strong(spec: &MonotoneSpec) -> Result<Vec<(String, String)>> {
    let mut names: Vec<String> = Vec::new();
    let id = |n: &String, names: &mut Vec<String>| match names.iter().position(|m| m == n) {
        Some(i) => i,
        None => {
            names.push(n.clone());
            names.len() - 1
        }
    };
    let mut pairs = Vec::with_capacity(spec.strong_pairs.len());
    for (a, b) in &spec.strong_pairs {
        if a == b {
            return Err(Error::Cycle(a.clone()));
        }
        let ia = id(a, &mut names);
        let ib = id(b, &mut names);
        pairs.push((ia, ib));
    }
    let closed = closure_indices(&pairs, |i| names[i].clone())?;
    Ok(closed
        .into_iter()
        .map(|(a, b)| (names[a].clone(), names[b].clone()))
        .collect())
}

/// Transitive closure over index pairs. Declared pairs keep their order and
/// come first; implied pairs follow, sorted.
fn closure_indices(pairs: &[(usize, usize)], name: impl Fn(usize) -> String) -> Result<Vec<(usize, usize)>> {
    let mut succ: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in pairs {
        succ.entry(a).or_default().insert(b);
    }
    let mut reach: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &start in succ.keys() {
        let mut stack: Vec<usize> = succ[&start].iter().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == start {
                return Err(Error::Cycle(name(start)));
            }
            if seen.insert(n) {
                reach.insert((start, n));
                if let Some(next) = succ.get(&n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
    }
    let mut out = Vec::with_capacity(reach.len());
    for &p in pairs {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    for p in reach {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// One additive term of the grove: a subset of features and its subnet shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    /// Column indices, ascending.
    pub features: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl Group {
    pub fn is_singleton(&self) -> bool {
        self.features.len() == 1
    }

    pub fn subnet_shape(&self) -> Result<SubnetShape> {
        SubnetShape::new(self.features.len(), self.hidden.clone())
    }
}

/// Partition of the features into singleton and multi-feature groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroveArchitecture {
    pub groups: Vec<Group>,
}

impl GroveArchitecture {
    /// Builds an architecture from feature-index groups, sorted canonically
    /// (features ascending within a group, groups by their first feature).
    pub fn from_groups(mut groups: Vec<Vec<usize>>, hidden: &[usize]) -> Self {
        for g in &mut groups {
            g.sort_unstable();
            g.dedup();
        }
        groups.retain(|g| !g.is_empty());
        groups.sort();
        GroveArchitecture {
            groups: groups
                .into_iter()
                .map(|features| Group {
                    features,
                    hidden: hidden.to_vec(),
                })
                .collect(),
        }
    }

    /// Every feature its own group (a plain additive model).
    pub fn singletons(n_features: usize, hidden: &[usize]) -> Self {
        Self::from_groups((0..n_features).map(|i| vec![i]).collect(), hidden)
    }

    /// One group holding every feature (the fully connected baseline).
    pub fn fully_connected(n_features: usize, hidden: &[usize]) -> Self {
        Self::from_groups(vec![(0..n_features).collect()], hidden)
    }

    pub fn n_features(&self) -> usize {
        self.groups.iter().map(|g| g.features.len()).sum()
    }

    /// `feature → (group index, position within group)`.
    pub fn locate(&self) -> HashMap<usize, (usize, usize)> {
        let mut map = HashMap::new();
        for (gi, g) in self.groups.iter().enumerate() {
            for (pos, &f) in g.features.iter().enumerate() {
                map.insert(f, (gi, pos));
            }
        }
        map
    }

    pub fn group_of(&self, feature: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.features.contains(&feature))
    }

    pub fn group_name(&self, schema: &FeatureSchema, gi: usize) -> String {
        self.groups[gi]
            .features
            .iter()
            .map(|&f| schema.feature(f).name.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn find_group(&self, schema: &FeatureSchema, name: &str) -> Result<usize> {
        (0..self.groups.len())
            .find(|&gi| self.group_name(schema, gi) == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_owned()))
    }

    /// Structural consistency with a schema: a partition of all columns.
    pub fn check_partition(&self, n_features: usize) -> Result<()> {
        let mut seen = vec![false; n_features];
        for g in &self.groups {
            if g.features.is_empty() {
                return Err(Error::Schema("empty group".into()));
            }
            for &f in &g.features {
                if f >= n_features {
                    return Err(Error::Schema(format!("group references column {f} of {n_features}")));
                }
                if std::mem::replace(&mut seen[f], true) {
                    return Err(Error::Schema(format!("column {f} appears in two groups")));
                }
            }
        }
        if let Some(f) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!("column {f} is not covered by any group")));
        }
        Ok(())
    }
}

/// Connected components of the pairwise-constraint graph that must be grouped.
fn required_components(schema: &FeatureSchema, c: &Constraints) -> Vec<BTreeSet<usize>> {
    let n = schema.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut i = i;
        while parent[i] != r {
            let next = parent[i];
            parent[i] = r;
            i = next;
        }
        r
    }
    for &(a, b) in c.weak.iter().chain(&c.strong) {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut comps: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().insert(i);
    }
    comps
        .into_values()
        .filter(|comp| {
            c.strong.iter().any(|&(a, b)| {
                comp.contains(&a) && !(schema.is_binary(a) && schema.is_binary(b))
            })
        })
        .collect()
}

/// Derives the grove architecture implied by the constraints.
pub fn derive_groups(schema: &FeatureSchema, spec: &MonotoneSpec, hidden: &[usize]) -> Result<GroveArchitecture> {
    let c = spec.resolve(schema)?;
    let comps = required_components(schema, &c);
    let mut grouped = vec![false; schema.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for comp in comps {
        for &f in &comp {
            grouped[f] = true;
        }
        groups.push(comp.into_iter().collect());
    }
    groups.extend((0..schema.len()).filter(|&f| !grouped[f]).map(|f| vec![f]));
    Ok(GroveArchitecture::from_groups(groups, hidden))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A non-binary strong pair is split across groups: an additive split forces
    /// the dominated term flat wherever the dominant one saturates.
    SplitStrongPair,
    /// A pairwise relation touching a grouped component is split across groups,
    /// so a multi-dimensional term is compared against a one-dimensional one.
    UnfairComparison,
    /// The groups do not partition the features.
    Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub features: Vec<String>,
    pub message: String,
}

/// Checks an architecture against the grouping invariants. Empty means valid.
pub fn validate(schema: &FeatureSchema, spec: &MonotoneSpec, arch: &GroveArchitecture) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = arch.check_partition(schema.len()) {
        out.push(Violation {
            kind: ViolationKind::Partition,
            features: Vec::new(),
            message: e.to_string(),
        });
        return out;
    }
    let c = match spec.resolve(schema) {
        Ok(c) => c,
        Err(e) => {
            out.push(Violation {
                kind: ViolationKind::Partition,
                features: Vec::new(),
                message: e.to_string(),
            });
            return out;
        }
    };
    let comps = required_components(schema, &c);
    let name = |i: usize| schema.feature(i).name.clone();
    let mut report = |a: usize, b: usize, strong: bool| {
        if arch.group_of(a) == arch.group_of(b) {
            return;
        }
        let exempt = schema.is_binary(a) && schema.is_binary(b);
        let (kind, message) = if strong && !exempt {
            (
                ViolationKind::SplitStrongPair,
                format!("strong pair ({}, {}) is split across groups", name(a), name(b)),
            )
        } else {
            (
                ViolationKind::UnfairComparison,
                format!("pair ({}, {}) touches a grouped component but is split", name(a), name(b)),
            )
        };
        out.push(Violation {
            kind,
            features: vec![name(a), name(b)],
            message,
        });
    };
    for comp in &comps {
        for &(a, b) in &c.declared_strong {
            if comp.contains(&a) {
                report(a, b, true);
            }
        }
        for &(a, b) in &c.weak {
            if comp.contains(&a) {
                report(a, b, false);
            }
        }
    }
    out
}

/// On-disk constraint file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintFile {
    /// Optional column declarations; pins column order and kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<FeatureDecl>>,
    #[serde(default)]
    pub individual: Vec<String>,
    #[serde(default)]
    pub weak_pairs: Vec<(String, String)>,
    #[serde(default)]
    pub strong_pairs: Vec<(String, String)>,
    #[serde(default)]
    pub subnet: SubnetConfig,
}

impl ConstraintFile {
    pub fn spec(&self) -> MonotoneSpec {
        MonotoneSpec {
            individual: self.individual.clone(),
            weak_pairs: self.weak_pairs.clone(),
            strong_pairs: self.strong_pairs.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubnetConfig {
    pub hidden: Vec<usize>,
}

impl Default for SubnetConfig {
    fn default() -> Self {
        SubnetConfig { hidden: vec![2] }
    }
}

/// A column declaration: name and kind, with an optional fixed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
}
