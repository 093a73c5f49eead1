//! Learnable parameters, kept outside any tape.
//!
//! A model owns a [`ParamSet`]; each training step binds the parameters
//! into a fresh [`Tape`](crate::tape::Tape) as gradient-requiring leaves,
//! runs forward/backward, and reads the gradients back out by binding
//! order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::NnError;
use crate::tape::{Tape, Var};

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, values: Vec<f64>) -> Result<Self, NnError> {
        let name = name.into();
        if dims.iter().product::<usize>() != values.len() {
            return Err(NnError::InvalidArg(format!(
                "param {name}: dims {dims:?} do not hold {} values",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite {
                op: "param",
                what: "values",
            });
        }
        Ok(Param { name, dims, values })
    }

    /// Kaiming-uniform fan-in initialization: U(−b, b) with b = √(6/fan_in),
    /// the standard choice under ReLU activations.
    pub fn kaiming(
        name: impl Into<String>,
        dims: Vec<usize>,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if fan_in == 0 {
            return Err(NnError::InvalidArg("fan_in must be positive".into()));
        }
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = dims.iter().product();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Param::new(name, dims, values)
    }

    pub fn zeros(name: impl Into<String>, dims: Vec<usize>) -> Self {
        let n: usize = dims.iter().product();
        Param {
            name: name.into(),
            dims,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered collection of parameters with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn push(&mut self, p: Param) -> Result<usize, NnError> {
        if self.params.iter().any(|q| q.name == p.name) {
            return Err(NnError::InvalidArg(format!("duplicate param {}", p.name)));
        }
        self.params.push(p);
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Bind every parameter into the tape as a gradient-requiring leaf;
    /// the returned handles are ordered like the set.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>, NnError> {
        self.params
            .iter()
            .map(|p| tape.leaf(&p.dims, p.values.clone(), true))
            .collect()
    }

    /// Collect gradients for bound parameters after backward; zero for
    /// parameters the loss never touched.
    pub fn gradients(&self, tape: &Tape, bound: &[Var]) -> Result<Vec<Vec<f64>>, NnError> {
        if bound.len() != self.params.len() {
            return Err(NnError::InvalidArg(format!(
                "{} bound vars for {} params",
                bound.len(),
                self.params.len()
            )));
        }
        Ok(self
            .params
            .iter()
            .zip(bound)
            .map(|(p, &v)| {
                tape.grad(v)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; p.len()])
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn kaiming_respects_bound_and_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Param::kaiming("k", vec![4, 3, 5, 5], 75, &mut rng).unwrap();
        let bound = (6.0 / 75.0f64).sqrt();
        assert!(p.values.iter().all(|v| v.abs() < bound));
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let q = Param::kaiming("k", vec![4, 3, 5, 5], 75, &mut rng2).unwrap();
        assert_eq!(p.values, q.values);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut set = ParamSet::new();
        set.push(Param::zeros("w", vec![2])).unwrap();
        assert!(set.push(Param::zeros("w", vec![3])).is_err());
    }

    #[test]
    fn bind_and_gradients_round_trip() {
        let mut set = ParamSet::new();
        set.push(Param::new("a", vec![1, 1, 2], vec![1.0, 2.0]).unwrap())
            .unwrap();
        set.push(Param::new("b", vec![1, 1, 2], vec![3.0, 4.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let bound = set.bind(&mut tape).unwrap();
        let s = tape.sum(bound[0]).unwrap();
        tape.backward(s).unwrap();
        let grads = set.gradients(&tape, &bound).unwrap();
        assert_eq!(grads[0], vec![1.0, 1.0]);
        assert_eq!(grads[1], vec![0.0, 0.0]); // untouched param
    }
}
