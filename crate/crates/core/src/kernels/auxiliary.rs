//! Auxiliary inputs `X`, possibly with GP-LVM columns learned per object.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryData {
    /// Observed columns, `N x D_obs`.
    pub observed: Tensor,
    /// One flag per column of the full `X`; `false` marks a GP-LVM column.
    pub observed_mask: Vec<bool>,
    /// Object index of each row; selects the GP-LVM vector broadcast to it.
    pub object_id: Vec<usize>,
    /// GP-LVM vectors, one row per object (`P x M`).
    pub latent: Option<Tensor>,
}

/// GP-LVM vectors registered as trainable leaves for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct GplvmHandle {
    pub var: Var,
    pub objects: usize,
    pub dims: usize,
}

impl AuxiliaryData {
    /// Fully observed inputs.
    pub fn observed(x: Tensor) -> Self {
        let n = x.rows();
        let d = x.cols();
        Self {
            observed: x,
            observed_mask: vec![true; d],
            object_id: vec![0; n],
            latent: None,
        }
    }

    /// Observed columns plus per-object GP-LVM vectors; `mask` fixes where
    /// each kind of column sits in the assembled `X`.
    pub fn with_latent(
        observed: Tensor,
        observed_mask: Vec<bool>,
        object_id: Vec<usize>,
        latent: Tensor,
    ) -> Result<Self> {
        let n_obs = observed_mask.iter().filter(|m| **m).count();
        let n_lat = observed_mask.len() - n_obs;
        if observed.cols() != n_obs || latent.cols() != n_lat {
            return Err(Error::Shape(format!(
                "mask declares {n_obs} observed / {n_lat} latent columns, got {} / {}",
                observed.cols(),
                latent.cols()
            )));
        }
        if object_id.len() != observed.rows() {
            return Err(Error::Shape("object_id length differs from row count".into()));
        }
        if let Some(bad) = object_id.iter().find(|&&o| o >= latent.rows()) {
            return Err(Error::InvalidArgument(format!("object id {bad} has no GP-LVM vector")));
        }
        Ok(Self {
            observed,
            observed_mask,
            object_id,
            latent: Some(latent),
        })
    }

    pub fn len(&self) -> usize {
        self.object_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object_id.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observed_mask.len()
    }

    pub fn has_latent(&self) -> bool {
        self.observed_mask.iter().any(|m| !m)
    }

    /// Contiguous runs of `(observed?, start, len)` over the column mask.
    fn runs(&self) -> Vec<(bool, usize, usize)> {
        let mut runs: Vec<(bool, usize, usize)> = Vec::new();
        let (mut oi, mut li) = (0, 0);
        for &m in &self.observed_mask {
            let idx = if m { &mut oi } else { &mut li };
            match runs.last_mut() {
                Some(r) if r.0 == m => r.2 += 1,
                _ => runs.push((m, *idx, 1)),
            }
            *idx += 1;
        }
        runs
    }

    /// Assembles rows `rows` of `X` on the graph; `latent` is the bound
    /// GP-LVM matrix when there is one.
    pub fn rows_var(&self, g: &mut Graph, latent: Option<Var>, rows: &[usize]) -> Result<Var> {
        if !self.has_latent() {
            return Ok(g.constant(self.observed.select_rows(rows)));
        }
        let lat = match latent {
            Some(v) => v,
            None => g.constant(self.latent.clone().expect("latent columns")),
        };
        let ids: Vec<usize> = rows.iter().map(|&r| self.object_id[r]).collect();
        let obs = self.observed.select_rows(rows);
        let mut parts = Vec::new();
        let gathered = g.gather_rows(lat, &ids);
        for (is_obs, start, len) in self.runs() {
            if is_obs {
                parts.push(g.constant(obs.slice_cols(start, len)));
            } else if len == g.shape(gathered).1 {
                parts.push(gathered);
            } else {
                parts.push(g.slice_cols(gathered, start, len));
            }
        }
        Ok(if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts) })
    }

    /// Dense `X` with the current GP-LVM values.
    pub fn dense(&self) -> Tensor {
        let mut g = Graph::new();
        let all: Vec<usize> = (0..self.len()).collect();
        let v = self.rows_var(&mut g, None, &all).expect("consistent auxiliary data");
        g.value(v).clone()
    }

    /// Rows of `X` for new inputs: observed values plus the GP-LVM vector of
    /// the given objects.
    pub fn assemble(&self, observed: &Tensor, object_id: &[usize]) -> Result<Tensor> {
        let tmp = Self {
            observed: observed.clone(),
            observed_mask: self.observed_mask.clone(),
            object_id: object_id.to_vec(),
            latent: self.latent.clone(),
        };
        Ok(tmp.dense())
    }
}

/// Registers the GP-LVM vectors of `aux` as trainable leaves.
pub fn gplvm_params(aux: &AuxiliaryData, g: &mut Graph) -> Result<GplvmHandle> {
    let latent = match (&aux.latent, aux.has_latent()) {
        (Some(l), true) => l,
        _ => {
            return Err(Error::InvalidArgument(
                "auxiliary data is fully observed; there are no GP-LVM parameters".into(),
            ))
        }
    };
    Ok(GplvmHandle {
        var: g.param(latent.clone()),
        objects: latent.rows(),
        dims: latent.cols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_observed_has_no_gplvm() {
        let aux = AuxiliaryData::observed(Tensor::zeros(4, 2));
        let mut g = Graph::new();
        assert!(gplvm_params(&aux, &mut g).is_err());
    }

    #[test]
    fn rotated_digit_layout() {
        let p = 400;
        let q = 3;
        let angles = Tensor::from_fn(p * q, 1, |i, _| (i % q) as f64);
        let ids: Vec<usize> = (0..p * q).map(|i| i / q).collect();
        let mut mask = vec![true];
        mask.extend(std::iter::repeat_n(false, 8));
        let aux = AuxiliaryData::with_latent(angles, mask, ids, Tensor::zeros(p, 8)).unwrap();
        let mut g = Graph::new();
        let h = gplvm_params(&aux, &mut g).unwrap();
        assert_eq!((h.objects, h.dims), (400, 8));
        assert_eq!(g.shape(h.var), (400, 8));
    }

    #[test]
    fn single_object_scalar() {
        let aux = AuxiliaryData::with_latent(
            Tensor::zeros(2, 0),
            vec![false],
            vec![0, 0],
            Tensor::scalar(0.5),
        )
        .unwrap();
        let mut g = Graph::new();
        let h = gplvm_params(&aux, &mut g).unwrap();
        assert_eq!(g.shape(h.var), (1, 1));
    }

    #[test]
    fn interleaved_columns_assemble_in_mask_order() {
        let observed = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let latent = Tensor::from_rows(&[vec![10.0], vec![20.0]]).unwrap();
        let aux = AuxiliaryData::with_latent(observed, vec![true, false, true], vec![1, 0], latent).unwrap();
        let x = aux.dense();
        assert_eq!(x.to_rows(), vec![vec![1.0, 20.0, 2.0], vec![3.0, 10.0, 4.0]]);
    }

    #[test]
    fn gplvm_gradient_scatters_to_objects() {
        let aux = AuxiliaryData::with_latent(
            Tensor::zeros(3, 0),
            vec![false],
            vec![0, 1, 0],
            Tensor::column(vec![1.0, 2.0]),
        )
        .unwrap();
        let mut g = Graph::new();
        let h = gplvm_params(&aux, &mut g).unwrap();
        let x = aux.rows_var(&mut g, Some(h.var), &[0, 1, 2]).unwrap();
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(h.var).data(), &[2.0, 1.0]);
    }
}
