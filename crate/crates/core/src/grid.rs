//! Evaluation lattices and constraint sites.
//!
//! A *site* describes where one monotonicity constraint is checked: which
//! subnets take part, the lattice of their inputs, and the signed direction
//! whose derivative must be non-positive. For a constraint with violation
//! measure `Δ(x)` (e.g. `Δ = −∂f/∂x_α` for individual monotonicity,
//! `Δ = −∂f/∂x_u + ∂f/∂x_v` for pairs) the margin is `−Δ`.
//!
//! Features outside the participating groups never enter a site: by
//! additivity they cannot change any of the derivatives involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grove::GroveModel;
use crate::schema::{Constraints, Feature, FeatureKind};

/// Lattice densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points on a lattice with a single axis.
    pub points_1d: usize,
    /// Points per axis on multi-axis lattices.
    pub points_group: usize,
    /// Sub-steps between consecutive integers on count axes.
    pub count_subdivisions: usize,
    /// Above this many points a lattice is thinned by a fixed stride.
    pub max_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points_1d: 64,
            points_group: 16,
            count_subdivisions: 1,
            max_points: 200_000,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points_1d < 2 || self.points_group < 2 {
            return Err(Error::InvalidConfig("grids need at least 2 points per axis".into()));
        }
        if self.count_subdivisions < 1 || self.max_points < 1 {
            return Err(Error::InvalidConfig("count_subdivisions and max_points must be >= 1".into()));
        }
        Ok(())
    }

    /// `factor`× denser on continuous axes; every point of `self` stays on the
    /// new lattice. Count axes keep their subdivision.
    pub fn refined(&self, factor: usize) -> GridSpec {
        let f = factor.max(1);
        GridSpec {
            points_1d: f * (self.points_1d - 1) + 1,
            points_group: f * (self.points_group - 1) + 1,
            count_subdivisions: self.count_subdivisions,
            max_points: self.max_points.saturating_mul(f),
        }
    }

    /// The default audit grid: four times denser.
    pub fn audit(&self) -> GridSpec {
        self.refined(4)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

/// Axis over `[lo, hi]`: integers (with sub-steps) for counts, equispaced otherwise.
fn axis(kind: FeatureKind, lo: f64, hi: f64, points: usize, subdivisions: usize) -> Vec<f64> {
    if kind == FeatureKind::Count {
        let (a, b) = (lo.ceil(), hi.floor());
        if b > a {
            let s = subdivisions as f64;
            let steps = ((b - a) * s).round() as usize;
            return (0..=steps).map(|k| a + k as f64 / s).collect();
        }
    }
    linspace(lo, hi, points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "features")]
pub enum ConstraintKind {
    Individual(usize),
    Weak(usize, usize),
    Strong(usize, usize),
}

impl ConstraintKind {
    pub fn family(&self) -> usize {
        match self {
            ConstraintKind::Individual(_) => 0,
            ConstraintKind::Weak(..) => 1,
            ConstraintKind::Strong(..) => 2,
        }
    }

    pub fn label(&self, model: &GroveModel) -> String {
        let n = |i: usize| model.schema.feature(i).name.as_str();
        match *self {
            ConstraintKind::Individual(a) => format!("individual({})", n(a)),
            ConstraintKind::Weak(u, v) => format!("weak({} > {})", n(u), n(v)),
            ConstraintKind::Strong(y, z) => format!("strong({} > {})", n(y), n(z)),
        }
    }
}

/// How strictly sites are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteMode {
    /// Training: pairs must be co-grouped (or singleton/binary with a shared axis).
    Penalty,
    /// Auditing: any placement is accepted; split strong pairs use the product lattice.
    Audit,
}

/// One participating subnet: its group and the lattice coordinate feeding each input.
#[derive(Debug, Clone)]
pub struct SiteGroup {
    pub group: usize,
    pub coord_of_input: Vec<usize>,
    /// Coefficients of `Δ` in the subnet's own input coordinates.
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Site {
    pub kind: ConstraintKind,
    /// Features fed by each lattice coordinate (two when a pair is tied).
    pub coord_features: Vec<Vec<usize>>,
    pub axes: Vec<Vec<f64>>,
    pub groups: Vec<SiteGroup>,
    pub max_points: usize,
}

impl Site {
    pub fn build(model: &GroveModel, kind: ConstraintKind, grid: &GridSpec, mode: SiteMode) -> Result<Site> {
        let locate = |f: usize| {
            model
                .arch
                .group_of(f)
                .ok_or_else(|| Error::Schema(format!("feature {f} has no group")))
        };
        let schema = &model.schema;
        let (involved, signs, tie): (Vec<usize>, Vec<(usize, f64)>, Option<(usize, usize)>) = match kind {
            ConstraintKind::Individual(a) => (vec![locate(a)?], vec![(a, -1.0)], None),
            ConstraintKind::Weak(u, v) | ConstraintKind::Strong(u, v) => {
                let (gu, gv) = (locate(u)?, locate(v)?);
                let strong = matches!(kind, ConstraintKind::Strong(..));
                let both_binary = schema.is_binary(u) && schema.is_binary(v);
                let singles = model.arch.groups[gu].is_singleton() && model.arch.groups[gv].is_singleton();
                let tie = if strong {
                    if gu != gv && both_binary {
                        Some((u, v))
                    } else {
                        None
                    }
                } else {
                    Some((u, v))
                };
                if mode == SiteMode::Penalty && gu != gv {
                    if strong && !both_binary {
                        return Err(Error::Penalty(format!(
                            "strong pair ({}, {}) is neither co-grouped nor binary",
                            schema.feature(u).name,
                            schema.feature(v).name
                        )));
                    }
                    if !singles {
                        return Err(Error::Penalty(format!(
                            "pair ({}, {}) spans a singleton and a multi-feature group",
                            schema.feature(u).name,
                            schema.feature(v).name
                        )));
                    }
                }
                let mut groups = vec![gu];
                if gv != gu {
                    groups.push(gv);
                }
                (groups, vec![(u, -1.0), (v, 1.0)], tie)
            }
        };

        // lattice coordinates: one per feature of the involved groups, tied pair shares one
        let mut coord_features: Vec<Vec<usize>> = Vec::new();
        let mut coord_of = std::collections::HashMap::new();
        for &g in &involved {
            for &f in &model.arch.groups[g].features {
                if coord_of.contains_key(&f) {
                    continue;
                }
                if let Some((a, b)) = tie {
                    if f == a || f == b {
                        let c = coord_features.len();
                        coord_of.insert(a, c);
                        coord_of.insert(b, c);
                        coord_features.push(vec![a, b]);
                        continue;
                    }
                }
                coord_of.insert(f, coord_features.len());
                coord_features.push(vec![f]);
            }
        }
        let points = if coord_features.len() == 1 {
            grid.points_1d
        } else {
            grid.points_group
        };
        let axes = coord_features
            .iter()
            .map(|fs| coord_axis(schema.features(), fs, points, grid.count_subdivisions))
            .collect::<Result<Vec<_>>>()?;

        let groups = involved
            .iter()
            .map(|&g| {
                let feats = &model.arch.groups[g].features;
                let mut direction = vec![0.0; feats.len()];
                for &(f, s) in &signs {
                    if let Some(pos) = feats.iter().position(|&x| x == f) {
                        direction[pos] += s;
                    }
                }
                SiteGroup {
                    group: g,
                    coord_of_input: feats.iter().map(|f| coord_of[f]).collect(),
                    direction,
                }
            })
            .collect();
        Ok(Site {
            kind,
            coord_features,
            axes,
            groups,
            max_points: grid.max_points,
        })
    }

    /// Size of the full lattice.
    pub fn full_len(&self) -> u128 {
        self.axes.iter().map(|a| a.len() as u128).product()
    }

    pub fn is_exhaustive(&self) -> bool {
        self.full_len() <= self.max_points as u128
    }

    /// Number of points actually evaluated.
    pub fn len(&self) -> usize {
        self.full_len().min(self.max_points as u128) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of the `k`-th evaluated point.
    pub fn point(&self, k: usize, out: &mut Vec<f64>) {
        let full = self.full_len();
        let mut idx = if self.is_exhaustive() {
            k as u128
        } else {
            k as u128 * full / self.max_points as u128
        };
        out.clear();
        // last axis varies fastest
        out.resize(self.axes.len(), 0.0);
        for (c, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.len() as u128;
            out[c] = axis[(idx % n) as usize];
            idx /= n;
        }
    }

    /// Fills a subnet input from lattice coordinates.
    pub fn group_input(&self, sg: &SiteGroup, coords: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(sg.coord_of_input.iter().map(|&c| coords[c]));
    }

    /// Named coordinates of a lattice point.
    pub fn describe(&self, model: &GroveModel, coords: &[f64]) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (fs, &v) in self.coord_features.iter().zip(coords) {
            for &f in fs {
                out.push((model.schema.feature(f).name.clone(), v));
            }
        }
        out
    }
}

fn coord_axis(features: &[Feature], fs: &[usize], points: usize, subdivisions: usize) -> Result<Vec<f64>> {
    let lo = fs.iter().map(|&f| features[f].lo()).fold(f64::NEG_INFINITY, f64::max);
    let hi = fs.iter().map(|&f| features[f].hi()).fold(f64::INFINITY, f64::min);
    if !(lo < hi) {
        let names: Vec<_> = fs.iter().map(|&f| features[f].name.as_str()).collect();
        return Err(Error::EmptyGrid(format!("domains of {names:?} do not overlap")));
    }
    let kind = if fs.iter().all(|&f| features[f].kind == FeatureKind::Count) {
        FeatureKind::Count
    } else {
        FeatureKind::Continuous
    };
    Ok(axis(kind, lo, hi, points, subdivisions))
}

/// Sites for every constraint, in the order individual, weak, strong.
pub fn build_sites(model: &GroveModel, c: &Constraints, grid: &GridSpec, mode: SiteMode) -> Result<Vec<Site>> {
    grid.validate()?;
    let kinds = c
        .individual
        .iter()
        .map(|&a| ConstraintKind::Individual(a))
        .chain(c.weak.iter().map(|&(u, v)| ConstraintKind::Weak(u, v)))
        .chain(c.strong.iter().map(|&(y, z)| ConstraintKind::Strong(y, z)));
    kinds.map(|k| Site::build(model, k, grid, mode)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(-1.0, 2.0, 2), vec![-1.0, 2.0]);
    }

    #[test]
    fn count_axes_use_integers() {
        assert_eq!(axis(FeatureKind::Count, 0.0, 4.0, 64, 1), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(axis(FeatureKind::Count, 0.0, 2.0, 64, 2), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(axis(FeatureKind::Continuous, 0.0, 1.0, 3, 7), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn refinement_nests_the_training_lattice() {
        let g = GridSpec::default();
        let a = g.audit();
        assert_eq!(a.points_1d, 253);
        assert_eq!(a.points_group, 61);
        assert_eq!(a.count_subdivisions, 1);
        let coarse = linspace(-2.0, 3.0, g.points_1d);
        let fine = linspace(-2.0, 3.0, a.points_1d);
        for (i, x) in coarse.iter().enumerate() {
            assert!((fine[4 * i] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_grid_rejected() {
        let g = GridSpec {
            points_1d: 1,
            ..GridSpec::default()
        };
        assert!(g.validate().is_err());
    }
}
