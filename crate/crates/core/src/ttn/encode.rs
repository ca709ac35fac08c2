//! Product-state encoding of raw feature vectors.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{ModelError, TreeTopology};
use crate::scalar::Scalar;

/// How a raw column is brought onto `[0, 1]` before the local map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// `x / x_max`.
    Continuous,
    /// Charges in `[-1, 1]` shifted to `(q + 1) / 2`; `x_max` is 1.
    Charge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub name: String,
    pub kind: FeatureKind,
    pub x_max: f64,
}

impl FeatureEncoding {
    /// Rescaled value `x'` clamped to `[0, 1]`.
    pub fn rescale(&self, x: f64) -> f64 {
        let shifted = match self.kind {
            FeatureKind::Continuous => x,
            FeatureKind::Charge => 0.5 * (x + 1.0),
        };
        (shifted / self.x_max).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub features: Vec<FeatureEncoding>,
}

impl FeatureSpec {
    pub fn new(features: Vec<FeatureEncoding>) -> Result<Self, ModelError> {
        for f in &features {
            if !(f.x_max > 0.0 && f.x_max.is_finite()) {
                return Err(ModelError::FeatureSpec(format!(
                    "feature '{}' has non-positive x_max {}",
                    f.name, f.x_max
                )));
            }
        }
        Ok(Self { features })
    }

    /// Unit-scale continuous features named `f0, f1, ...`.
    pub fn unit(n: usize) -> Self {
        Self {
            features: (0..n)
                .map(|i| FeatureEncoding {
                    name: format!("f{i}"),
                    kind: FeatureKind::Continuous,
                    x_max: 1.0,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }
}

/// Local embedding of a rescaled scalar into a unit 2-vector.
pub trait FeatureMap {
    fn local_state(&self, x_scaled: f64) -> [f64; 2];
}

/// `[cos(pi x / 2), sin(pi x / 2)]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpinMap;

impl FeatureMap for SpinMap {
    #[inline]
    fn local_state(&self, x_scaled: f64) -> [f64; 2] {
        let (s, c) = (FRAC_PI_2 * x_scaled).sin_cos();
        [c, s]
    }
}

/// One physical state per leaf (padding leaves hold `[1, 0]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample<T> {
    pub local_states: Vec<[T; 2]>,
    pub features: Vec<f64>,
}

impl<T: Scalar> EncodedSample<T> {
    pub fn n_leaves(&self) -> usize {
        self.local_states.len()
    }

    /// Builds a sample straight from leaf states, with no raw features attached.
    pub fn from_states(local_states: Vec<[T; 2]>) -> Self {
        Self {
            local_states,
            features: Vec::new(),
        }
    }
}

pub fn encode<T: Scalar>(
    features: &[f64],
    spec: &FeatureSpec,
    topology: &TreeTopology,
) -> Result<EncodedSample<T>, ModelError> {
    encode_with(&SpinMap, features, spec, topology)
}

pub fn encode_with<T: Scalar, M: FeatureMap + ?Sized>(
    map: &M,
    features: &[f64],
    spec: &FeatureSpec,
    topology: &TreeTopology,
) -> Result<EncodedSample<T>, ModelError> {
    if features.len() != spec.len() || spec.len() != topology.n_features() {
        return Err(ModelError::FeatureCount {
            expected: topology.n_features(),
            actual: features.len(),
        });
    }
    let mut local_states = vec![[T::one(), T::zero()]; topology.n_leaves()];
    for (f, (&x, enc)) in features.iter().zip(&spec.features).enumerate() {
        if !x.is_finite() {
            return Err(ModelError::NonFinite { feature: f, value: x });
        }
        let [c, s] = map.local_state(enc.rescale(x));
        local_states[topology.feature_leaf(f)] = [T::of(c), T::of(s)];
    }
    Ok(EncodedSample {
        local_states,
        features: features.to_vec(),
    })
}
