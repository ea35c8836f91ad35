use serde::{Deserialize, Serialize};

/// How states are turned into network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingMode {
    OneHot,
    NormalizedScalar,
    TupleNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureEncoding {
    pub mode: EncodingMode,
    pub dimension: usize,
}

/// Precomputed feature vectors, one row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    encoding: FeatureEncoding,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn one_hot(num_states: usize) -> Self {
        let mut data = vec![0.0; num_states * num_states];
        for s in 0..num_states {
            data[s * num_states + s] = 1.0;
        }
        Self { encoding: FeatureEncoding { mode: EncodingMode::OneHot, dimension: num_states }, data }
    }

    /// `s / (num_states - 1)`, a single coordinate in `[0, 1]`.
    pub fn normalized_scalar(num_states: usize) -> Self {
        let denom = (num_states.max(2) - 1) as f64;
        let data = (0..num_states).map(|s| s as f64 / denom).collect();
        Self { encoding: FeatureEncoding { mode: EncodingMode::NormalizedScalar, dimension: 1 }, data }
    }

    /// Each state is a tuple of integer coordinates; coordinate `k` is divided by `maxima[k]`.
    pub fn tuple_normalized(tuples: &[Vec<usize>], maxima: &[usize]) -> Self {
        let dim = maxima.len();
        let mut data = Vec::with_capacity(tuples.len() * dim);
        for t in tuples {
            assert_eq!(t.len(), dim, "tuple arity");
            for (v, &m) in t.iter().zip(maxima) {
                data.push(if m == 0 { 0.0 } else { *v as f64 / m as f64 });
            }
        }
        Self { encoding: FeatureEncoding { mode: EncodingMode::TupleNormalized, dimension: dim }, data }
    }

    pub fn encoding(&self) -> FeatureEncoding {
        self.encoding
    }

    pub fn dimension(&self) -> usize {
        self.encoding.dimension
    }

    pub fn num_states(&self) -> usize {
        self.data.len() / self.encoding.dimension
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let d = self.encoding.dimension;
        &self.data[state * d..(state + 1) * d]
    }
}
