//! Structured feedback gains: sparsity patterns from a communication graph and
//! gains whose entries vanish off the pattern.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Boolean `m × n` mask of admissible gain entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    nnz: usize,
}

impl SparsityPattern {
    /// Row-major mask.
    pub fn from_mask(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        check_dim("pattern mask length", rows * cols, mask.len())?;
        let nnz = mask.iter().filter(|&&b| b).count();
        if nnz == 0 {
            return Err(Error::InvalidArgument("sparsity pattern has no admissible entries".into()));
        }
        Ok(Self { rows, cols, mask, nnz })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_mask(rows, cols, vec![true; rows * cols]).expect("full pattern is nonempty")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn is_full(&self) -> bool {
        self.nnz == self.rows * self.cols
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    /// Admissible `(row, col)` positions in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / cols, i % cols))
    }
}

/// Mask built from agent blocks: block `(a, b)` is admissible iff `a == b`
/// (with `include_self`) or `{a, b}` is an edge.
pub fn pattern_from_graph(
    edges: &[(usize, usize)],
    state_dims: &[usize],
    input_dims: &[usize],
    include_self: bool,
) -> Result<SparsityPattern> {
    let agents = state_dims.len();
    check_dim("pattern_from_graph agents", agents, input_dims.len())?;
    let mut adjacent = vec![false; agents * agents];
    for &(a, b) in edges {
        if a >= agents || b >= agents {
            return Err(Error::InvalidArgument(format!("edge ({a}, {b}) references a missing agent")));
        }
        adjacent[a * agents + b] = true;
        adjacent[b * agents + a] = true;
    }
    if include_self {
        for a in 0..agents {
            adjacent[a * agents + a] = true;
        }
    }
    let offsets = |dims: &[usize]| {
        let mut acc = 0;
        dims.iter()
            .map(|d| {
                let start = acc;
                acc += d;
                start
            })
            .collect::<Vec<_>>()
    };
    let (row_off, col_off) = (offsets(input_dims), offsets(state_dims));
    let rows: usize = input_dims.iter().sum();
    let cols: usize = state_dims.iter().sum();
    let mut mask = vec![false; rows * cols];
    for a in 0..agents {
        for b in 0..agents {
            if !adjacent[a * agents + b] {
                continue;
            }
            for i in row_off[a]..row_off[a] + input_dims[a] {
                for j in col_off[b]..col_off[b] + state_dims[b] {
                    mask[i * cols + j] = true;
                }
            }
        }
    }
    SparsityPattern::from_mask(rows, cols, mask)
}

/// Gain matrix paired with its pattern; entries off the pattern are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGain {
    pattern: SparsityPattern,
    values: DMatrix<f64>,
}

impl StructuredGain {
    pub fn new(pattern: SparsityPattern, values: DMatrix<f64>) -> Result<Self> {
        check_dim("gain rows", pattern.rows, values.nrows())?;
        check_dim("gain cols", pattern.cols, values.ncols())?;
        for i in 0..pattern.rows {
            for j in 0..pattern.cols {
                if !pattern.allows(i, j) && values[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "gain entry ({i}, {j}) = {} lies outside the pattern",
                        values[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: SparsityPattern) -> Self {
        let values = DMatrix::zeros(pattern.rows, pattern.cols);
        Self { pattern, values }
    }

    /// Inverse of [`StructuredGain::nonzeros`].
    pub fn from_nonzeros(pattern: SparsityPattern, entries: &[f64]) -> Result<Self> {
        check_dim("nonzero entries", pattern.nnz, entries.len())?;
        let mut values = DMatrix::zeros(pattern.rows, pattern.cols);
        for ((i, j), &v) in pattern.positions().zip(entries) {
            values[(i, j)] = v;
        }
        Ok(Self { pattern, values })
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn nonzeros(&self) -> Vec<f64> {
        self.pattern.positions().map(|(i, j)| self.values[(i, j)]).collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    pub fn dot(&self, other: &StructuredGain) -> f64 {
        self.values.dot(&other.values)
    }

    /// `self + alpha · other`, staying on this gain's pattern.
    pub fn add_scaled(&self, other: &StructuredGain, alpha: f64) -> StructuredGain {
        let mut out = self.clone();
        out.add_scaled_mut(other, alpha);
        out
    }

    pub fn add_scaled_mut(&mut self, other: &StructuredGain, alpha: f64) {
        assert_eq!(self.pattern, other.pattern, "gains must share a pattern");
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> StructuredGain {
        StructuredGain {
            pattern: self.pattern.clone(),
            values: &self.values * alpha,
        }
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &StructuredGain) -> f64 {
        (&self.values - &other.values).norm()
    }
}

/// Entrywise product of `dense` with the mask.
pub fn project_structure(dense: &DMatrix<f64>, pattern: &SparsityPattern) -> Result<StructuredGain> {
    check_dim("projection rows", pattern.rows, dense.nrows())?;
    check_dim("projection cols", pattern.cols, dense.ncols())?;
    let mut values = dense.clone();
    for i in 0..pattern.rows {
        for j in 0..pattern.cols {
            if !pattern.allows(i, j) {
                values[(i, j)] = 0.0;
            }
        }
    }
    Ok(StructuredGain {
        pattern: pattern.clone(),
        values,
    })
}

/// Uniform draw from the unit Frobenius sphere of the pattern's coordinate
/// subspace.
pub fn sample_unit_perturbation<R: Rng + ?Sized>(pattern: &SparsityPattern, rng: &mut R) -> StructuredGain {
    let mut entries = vec![0.0; pattern.nnz];
    loop {
        for e in entries.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let norm = entries.iter().map(|e| e * e).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for e in entries.iter_mut() {
                *e /= norm;
            }
            break;
        }
    }
    StructuredGain::from_nonzeros(pattern.clone(), &entries).expect("entries match nnz")
}
