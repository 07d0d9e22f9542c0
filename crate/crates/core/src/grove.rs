//! Grove of neural additive terms: `f(x) = α + Σ_p f_p(x_p) + Σ_q f_q(x_q)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{logistic, Activation, SubnetParams, SubnetShape, Workspace};
use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, GroveArchitecture};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `f(x)`; a logit for classification.
    pub score: f64,
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroveModel {
    pub task: Task,
    pub schema: FeatureSchema,
    pub arch: GroveArchitecture,
    pub intercept: f64,
    pub subnets: Vec<SubnetParams>,
    /// Amount moved from each subnet into the intercept by [`GroveModel::center`].
    pub centering: Vec<f64>,
}

impl GroveModel {
    fn check_arch(schema: &FeatureSchema, arch: &GroveArchitecture) -> Result<()> {
        arch.check_partition(schema.len())
    }

    /// All subnets zero.
    pub fn zeros(task: Task, schema: FeatureSchema, arch: GroveArchitecture) -> Result<Self> {
        Self::check_arch(&schema, &arch)?;
        let subnets = arch
            .groups
            .iter()
            .map(|g| SubnetParams::zeros(g.subnet_shape()?))
            .collect::<Result<Vec<_>>>()?;
        let centering = vec![0.0; subnets.len()];
        Ok(GroveModel {
            task,
            schema,
            arch,
            intercept: 0.0,
            subnets,
            centering,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        task: Task,
        schema: FeatureSchema,
        arch: GroveArchitecture,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_arch(&schema, &arch)?;
        let subnets = arch
            .groups
            .iter()
            .map(|g| SubnetParams::random(g.subnet_shape()?, rng))
            .collect::<Result<Vec<_>>>()?;
        let centering = vec![0.0; subnets.len()];
        Ok(GroveModel {
            task,
            schema,
            arch,
            intercept: 0.0,
            subnets,
            centering,
        })
    }

    /// Assembles a model from explicit subnets; each must match its group's arity.
    pub fn from_parts(
        task: Task,
        schema: FeatureSchema,
        arch: GroveArchitecture,
        intercept: f64,
        subnets: Vec<SubnetParams>,
    ) -> Result<Self> {
        Self::check_arch(&schema, &arch)?;
        if subnets.len() != arch.groups.len() {
            return Err(Error::DimensionMismatch {
                expected: arch.groups.len(),
                found: subnets.len(),
            });
        }
        for (g, s) in arch.groups.iter().zip(&subnets) {
            if g.features.len() != s.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: g.features.len(),
                    found: s.input_dim(),
                });
            }
        }
        let centering = vec![0.0; subnets.len()];
        Ok(GroveModel {
            task,
            schema,
            arch,
            intercept,
            subnets,
            centering,
        })
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn n_groups(&self) -> usize {
        self.subnets.len()
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Gathers a group's coordinates from a full input vector.
    pub fn slice(&self, group: usize, x: &[f64]) -> Vec<f64> {
        self.arch.groups[group].features.iter().map(|&f| x[f]).collect()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let mut buf = Vec::new();
        let mut total = self.intercept;
        for (gi, net) in self.subnets.iter().enumerate() {
            buf.clear();
            buf.extend(self.arch.groups[gi].features.iter().map(|&f| x[f]));
            total += net.eval(&buf)?;
        }
        Ok(total)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let score = self.score(x)?;
        Ok(Prediction {
            score,
            probability: match self.task {
                Task::BinaryClassification => Some(logistic(score)),
                Task::Regression => None,
            },
        })
    }

    /// Value of one additive term on its own coordinates.
    pub fn subnet_contribution(&self, group: usize, x_slice: &[f64]) -> Result<f64> {
        let net = self
            .subnets
            .get(group)
            .ok_or_else(|| Error::UnknownGroup(group.to_string()))?;
        net.eval(x_slice)
    }

    /// `∇_x f`; each coordinate comes from the subnet of its own group.
    pub fn input_partials(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut out = vec![0.0; x.len()];
        for (gi, net) in self.subnets.iter().enumerate() {
            let features = &self.arch.groups[gi].features;
            let grad = net.input_grad(&self.slice(gi, x))?;
            for (&f, g) in features.iter().zip(grad) {
                out[f] = g;
            }
        }
        Ok(out)
    }

    /// Flat parameter vector: intercept, then each subnet's flat parameters in group order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_len());
        v.push(self.intercept);
        for net in &self.subnets {
            v.extend_from_slice(net.as_slice());
        }
        v
    }

    pub fn param_len(&self) -> usize {
        1 + self.subnets.iter().map(SubnetParams::param_len).sum::<usize>()
    }

    /// Start offset of each subnet inside [`GroveModel::flatten`].
    pub fn param_offsets(&self) -> Vec<usize> {
        let mut off = 1;
        self.subnets
            .iter()
            .map(|n| {
                let o = off;
                off += n.param_len();
                o
            })
            .collect()
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_len(),
                found: theta.len(),
            });
        }
        self.intercept = theta[0];
        let mut off = 1;
        for net in &mut self.subnets {
            let n = net.param_len();
            net.as_mut_slice().copy_from_slice(&theta[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Shifts each subnet so it is zero at the lower corner of its domain,
    /// absorbing the shift into the intercept. Predictions are unchanged.
    pub fn center(&mut self) -> Result<()> {
        for gi in 0..self.subnets.len() {
            let anchor: Vec<f64> = self.arch.groups[gi]
                .features
                .iter()
                .map(|&f| self.schema.feature(f).lo())
                .collect();
            let shift = self.subnets[gi].eval(&anchor)?;
            let bias = self.subnets[gi].head_bias();
            self.subnets[gi].set_head_bias(bias - shift);
            self.intercept += shift;
            self.centering[gi] += shift;
        }
        Ok(())
    }

    /// Workspaces for every subnet, for hot loops.
    pub(crate) fn workspaces(&self) -> Vec<Workspace> {
        self.subnets.iter().map(|n| Workspace::new(n.shape())).collect()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            task: self.task,
            schema: self.schema.clone(),
            arch: self.arch.clone(),
            activation: self.subnets.first().map(|n| n.shape().activation).unwrap_or_default(),
            intercept: self.intercept,
            params: self.subnets.iter().map(SubnetParams::flatten).collect(),
            centering_offsets: self.centering.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Malformed(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        file.schema.validate()?;
        if file.params.len() != file.arch.groups.len() {
            return Err(Error::Malformed("one parameter vector per group expected".into()));
        }
        let subnets = file
            .arch
            .groups
            .iter()
            .zip(file.params)
            .map(|(g, theta)| {
                let shape = SubnetShape::new(g.features.len(), g.hidden.clone())?.with_activation(file.activation);
                SubnetParams::unflatten(shape, theta)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::from_parts(file.task, file.schema, file.arch, file.intercept, subnets)?;
        if file.centering_offsets.len() == model.centering.len() {
            model.centering = file.centering_offsets;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// Serialized form of a [`GroveModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub task: Task,
    pub schema: FeatureSchema,
    pub arch: GroveArchitecture,
    #[serde(default)]
    pub activation: Activation,
    pub intercept: f64,
    /// Flattened subnet parameters, one vector per group.
    pub params: Vec<Vec<f64>>,
    pub centering_offsets: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Feature;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema4() -> FeatureSchema {
        FeatureSchema::new(vec![
            Feature::count("a", 2.0),
            Feature::count("b", 2.0),
            Feature::count("c", 2.0),
            Feature::continuous("d", -1.0, 1.0),
        ])
        .unwrap()
    }

    fn random_model(seed: u64) -> GroveModel {
        let arch = GroveArchitecture::from_groups(vec![vec![0, 1, 2], vec![3]], &[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GroveModel::random(Task::BinaryClassification, schema4(), arch, &mut rng).unwrap()
    }

    #[test]
    fn zero_subnets_give_intercept() {
        let mut m = GroveModel::zeros(Task::BinaryClassification, schema4(), GroveArchitecture::singletons(4, &[2])).unwrap();
        m.intercept = 0.3;
        assert_eq!(m.predict(&[1.0, 2.0, 0.0, 0.5]).unwrap().score, 0.3);
        m.intercept = 0.0;
        let p = m.predict(&[0.0; 4]).unwrap();
        assert_eq!(p.probability, Some(0.5));
        assert_eq!(m.input_partials(&[0.2; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(m.subnet_contribution(0, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn score_is_sum_of_subnets() {
        let m = random_model(3);
        let x = [1.0, 0.0, 2.0, -0.4];
        let direct = m.intercept + m.subnets[0].eval(&[1.0, 0.0, 2.0]).unwrap() + m.subnets[1].eval(&[-0.4]).unwrap();
        assert!((m.score(&x).unwrap() - direct).abs() < 1e-12);
        let via_contrib =
            m.intercept + m.subnet_contribution(0, &m.slice(0, &x)).unwrap() + m.subnet_contribution(1, &m.slice(1, &x)).unwrap();
        assert_eq!(via_contrib, m.score(&x).unwrap());
    }

    #[test]
    fn changing_one_group_only_moves_its_term() {
        let m = random_model(4);
        let x = [1.0, 1.0, 1.0, 0.0];
        let mut y = x;
        y[3] = 0.9;
        assert_eq!(m.subnet_contribution(0, &m.slice(0, &x)).unwrap(), m.subnet_contribution(0, &m.slice(0, &y)).unwrap());
        let dx = m.score(&y).unwrap() - m.score(&x).unwrap();
        let dterm = m.subnets[1].eval(&[0.9]).unwrap() - m.subnets[1].eval(&[0.0]).unwrap();
        assert!((dx - dterm).abs() < 1e-12);
    }

    #[test]
    fn partials_match_finite_differences() {
        let m = random_model(5);
        let x = [0.7, 1.3, 0.2, 0.1];
        let g = m.input_partials(&x).unwrap();
        let h = 1e-5;
        for j in 0..4 {
            let mut p = x;
            let mut q = x;
            p[j] += h;
            q[j] -= h;
            let fd = (m.score(&p).unwrap() - m.score(&q).unwrap()) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "j={j} fd={fd} an={}", g[j]);
        }
    }

    #[test]
    fn singleton_partials_concatenate() {
        let arch = GroveArchitecture::singletons(2, &[1]);
        let schema = FeatureSchema::new(vec![Feature::continuous("a", 0.0, 1.0), Feature::continuous("b", 0.0, 1.0)]).unwrap();
        let a = SubnetParams::from_layers(1, Activation::Identity, &[(vec![2.0], vec![0.0])], &[1.0], 0.0).unwrap();
        let b = SubnetParams::from_layers(1, Activation::Identity, &[(vec![-3.0], vec![0.0])], &[1.0], 0.0).unwrap();
        let m = GroveModel::from_parts(Task::Regression, schema, arch, 0.0, vec![a, b]).unwrap();
        assert_eq!(m.input_partials(&[0.4, 0.1]).unwrap(), vec![2.0, -3.0]);
    }

    #[test]
    fn centering_anchors_lower_corner() {
        let mut m = random_model(6);
        let x = [2.0, 1.0, 0.0, 0.3];
        let before = m.score(&x).unwrap();
        m.center().unwrap();
        assert!((m.score(&x).unwrap() - before).abs() < 1e-12);
        assert!(m.subnet_contribution(0, &[0.0, 0.0, 0.0]).unwrap().abs() < 1e-12);
        assert!(m.subnet_contribution(1, &[-1.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let m = random_model(7);
        assert!(m.predict(&[0.0; 3]).is_err());
        assert!(m.subnet_contribution(0, &[0.0]).is_err());
        assert!(matches!(m.subnet_contribution(9, &[0.0]), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut m = random_model(8);
        m.center().unwrap();
        let text = m.to_json().unwrap();
        let back = GroveModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(text.contains("\"format_version\": 1"));
    }

    #[test]
    fn param_vector_roundtrip() {
        let mut m = random_model(9);
        let theta = m.flatten();
        assert_eq!(theta.len(), m.param_len());
        let shifted: Vec<f64> = theta.iter().map(|t| t + 1.0).collect();
        m.set_params(&shifted).unwrap();
        assert_eq!(m.flatten(), shifted);
        assert!(m.set_params(&theta[1..]).is_err());
    }
}
