use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// `M` code vectors of width `code_dim`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: Array2<f64>,
}

impl Codebook {
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() < 2 || vectors.ncols() == 0 {
            return Err(Error::invalid(format!(
                "codebook needs at least 2 codes of positive width, got {:?}",
                vectors.dim()
            )));
        }
        Ok(Self { vectors })
    }

    pub fn size(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn code(&self, k: usize) -> &[f64] {
        let d = self.code_dim();
        &self.vectors.as_slice().expect("standard layout")[k * d..(k + 1) * d]
    }

    fn flat(&self) -> &[f64] {
        self.vectors.as_slice().expect("standard layout")
    }

    /// True when every pair of codes differs somewhere.
    pub fn codes_distinct(&self) -> bool {
        let mut seen = HashMap::new();
        for k in 0..self.size() {
            let key: Vec<u64> = self.code(k).iter().map(|v| v.to_bits()).collect();
            if seen.insert(key, k).is_some() {
                return false;
            }
        }
        true
    }
}

/// Index of the code nearest to `slot` in squared Euclidean distance,
/// lowest index on ties. `codes` is a row-major `M × code_dim` buffer.
pub fn nearest_code(slot: &[f64], codes: &[f64], code_dim: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in codes.chunks_exact(code_dim).enumerate() {
        let d: f64 = slot.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn check_slots(len: usize, codebook: &Codebook, slots: usize) -> Result<()> {
    if slots == 0 || len != slots * codebook.code_dim() {
        return Err(Error::invalid(format!(
            "latent of width {len} cannot be split into {slots} slots of width {}",
            codebook.code_dim()
        )));
    }
    Ok(())
}

/// Replaces each of the `slots` contiguous pieces of `z_e` by its nearest
/// code. Returns the quantized vector and the chosen index per slot.
pub fn quantize(z_e: &[f64], codebook: &Codebook, slots: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    check_slots(z_e.len(), codebook, slots)?;
    let d = codebook.code_dim();
    let mut out = Vec::with_capacity(z_e.len());
    let mut idx = Vec::with_capacity(slots);
    for slot in z_e.chunks_exact(d) {
        let k = nearest_code(slot, codebook.flat(), d);
        out.extend_from_slice(codebook.code(k));
        idx.push(k);
    }
    Ok((out, idx))
}

/// The deterministic categorical posterior: one one-hot row of length `M`
/// per slot, with the unit entry at the nearest code.
pub fn posterior(z_e: &[f64], codebook: &Codebook, slots: usize) -> Result<Vec<Vec<f64>>> {
    check_slots(z_e.len(), codebook, slots)?;
    let d = codebook.code_dim();
    let m = codebook.size();
    Ok(z_e
        .chunks_exact(d)
        .map(|slot| {
            let mut row = vec![0.0; m];
            row[nearest_code(slot, codebook.flat(), d)] = 1.0;
            row
        })
        .collect())
}

/// `exp(H)` of the empirical code-usage distribution.
pub fn codebook_perplexity(indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::invalid("perplexity of an empty index list"));
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &i in indices {
        *counts.entry(i).or_default() += 1;
    }
    let n = indices.len() as f64;
    let mut keys: Vec<_> = counts.into_iter().collect();
    keys.sort_unstable();
    let h: f64 = keys
        .iter()
        .map(|&(_, c)| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok(h.exp())
}
