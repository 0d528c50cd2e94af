use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    /// Running statistics are stored alongside weights but never updated by
    /// the optimiser.
    pub trainable: bool,
}

/// Where one parameter lives in the flat little-endian blob.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>, trainable: bool) -> ParamId {
        self.params.push(Param {
            name: name.to_string(),
            value,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All values concatenated in registration order, row-major.
    pub fn flatten(&self) -> (Vec<f64>, Vec<ParamLayout>) {
        let mut flat = Vec::with_capacity(self.n_values());
        let mut layout = Vec::with_capacity(self.params.len());
        for p in &self.params {
            layout.push(ParamLayout {
                name: p.name.clone(),
                offset: flat.len(),
                rows: p.value.nrows(),
                cols: p.value.ncols(),
                trainable: p.trainable,
            });
            flat.extend(p.value.iter());
        }
        (flat, layout)
    }

    /// Overwrites values from a flat blob; names and shapes must match.
    pub fn load_flat(&mut self, flat: &[f64], layout: &[ParamLayout]) -> Result<()> {
        if layout.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} parameters, network has {}",
                layout.len(),
                self.params.len()
            )));
        }
        for (p, l) in self.params.iter_mut().zip(layout) {
            if p.name != l.name || p.value.nrows() != l.rows || p.value.ncols() != l.cols {
                return Err(Error::invalid(format!(
                    "checkpoint parameter `{}` {}x{} does not match `{}` {:?}",
                    l.name,
                    l.rows,
                    l.cols,
                    p.name,
                    p.value.shape()
                )));
            }
            let end = l.offset + l.rows * l.cols;
            let slice = flat
                .get(l.offset..end)
                .ok_or_else(|| Error::parse(format!("parameter blob too short for `{}`", l.name)))?;
            p.value = Array2::from_shape_vec((l.rows, l.cols), slice.to_vec())
                .map_err(|e| Error::parse(e.to_string()))?;
        }
        Ok(())
    }
}

/// Uniform Glorot initialisation for a `fan_in × fan_out` weight.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("std is positive");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}
