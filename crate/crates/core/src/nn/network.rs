//! Feed-forward ReLU networks with sparse weights and the composition calculus.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::sparse::SparseMatrix;

/// One affine map `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: SparseMatrix,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: SparseMatrix, bias: Vec<f64>) -> Result<Self> {
        check_dim(weights.rows(), bias.len(), "Layer bias length")?;
        Ok(Self { weights, bias })
    }

    /// Layer with zero bias.
    pub fn linear(weights: SparseMatrix) -> Self {
        let bias = vec![0.0; weights.rows()];
        Self { weights, bias }
    }

    pub fn weights(&self) -> &SparseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Non-zero weights plus non-zero biases.
    pub fn num_params(&self) -> usize {
        self.weights.count_nonzero() + self.bias.iter().filter(|b| **b != 0.0).count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.weights.matvec_into(x, y);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
    }
}

/// A ReLU network: ReLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Checks that consecutive layer dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Network("a network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            check_dim(w[0].output_dim(), w[1].input_dim(), "Network layer chain")?;
        }
        Ok(Self { layers })
    }

    /// Single-layer network `x ↦ W x + b`.
    pub fn affine(weights: SparseMatrix, bias: Vec<f64>) -> Result<Self> {
        Ok(Self { layers: vec![Layer::new(weights, bias)?] })
    }

    /// Single-layer network `x ↦ W x`.
    pub fn linear(weights: SparseMatrix) -> Self {
        Self { layers: vec![Layer::linear(weights)] }
    }

    /// Two-layer exact identity on `R^n`: `x = ρ(x) − ρ(−x)`.
    pub fn identity(n: usize) -> Self {
        Self::identity_with_depth(n, 2)
    }

    /// Exact identity on `R^n` with the given depth (`depth = 1` is affine).
    pub fn identity_with_depth(n: usize, depth: usize) -> Self {
        let depth = depth.max(1);
        if depth == 1 {
            return Self::linear(SparseMatrix::identity(n));
        }
        let id = SparseMatrix::identity(n);
        let neg = id.clone().scaled(-1.0);
        let mut layers = vec![Layer::linear(SparseMatrix::vstack(&[&id, &neg]).expect("same width"))];
        for _ in 2..depth {
            layers.push(Layer::linear(SparseMatrix::identity(2 * n)));
        }
        layers.push(Layer::linear(SparseMatrix::hstack(&[&id, &neg]).expect("same height")));
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Number of non-zero parameters `M`.
    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Widths `N_0, N_1, .., N_L`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Layer::output_dim));
        w
    }

    pub fn realize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len(), "Network::realize input")?;
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.output_dim()];
            layer.apply(&cur, &mut next);
            if l < last {
                for v in &mut next {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Realization of many inputs; output order follows input order.
    pub fn realize_batch<E: Executor>(&self, xs: &[Vec<f64>], exec: &E) -> Result<Vec<Vec<f64>>> {
        exec.map(xs.len(), |i| self.realize(&xs[i])).into_iter().collect()
    }

    /// Plain concatenation `self • inner`: the last layer of `inner` is merged
    /// into the first layer of `self`, so `L = L₁ + L₂ − 1`.
    pub fn concat(&self, inner: &Network) -> Result<Network> {
        self.clone().compose(inner.clone())
    }

    /// Same as [`Network::concat`], reusing the layers of both operands.
    pub fn compose(self, inner: Network) -> Result<Network> {
        check_dim(self.input_dim(), inner.output_dim(), "Network::concat")?;
        let mut layers = inner.layers;
        let lastin = layers.pop().expect("networks are non-empty");
        let mut outer = self.layers.into_iter();
        let first = outer.next().expect("networks are non-empty");
        let w = first.weights.matmul(&lastin.weights)?;
        let mut b = first.weights.matvec(&lastin.bias)?;
        for (bi, ci) in b.iter_mut().zip(&first.bias) {
            *bi += ci;
        }
        layers.push(Layer::new(w, b)?);
        layers.extend(outer);
        Ok(Network { layers })
    }

    /// Sparse concatenation `self ⊙ inner = self • Id • inner` with the
    /// two-layer identity in between, so `L = L₁ + L₂`.
    pub fn sparse_concat(&self, inner: &Network) -> Result<Network> {
        self.clone().sparse_compose(inner.clone())
    }

    /// Same as [`Network::sparse_concat`], reusing the layers of both operands.
    pub fn sparse_compose(self, inner: Network) -> Result<Network> {
        check_dim(self.input_dim(), inner.output_dim(), "Network::sparse_concat")?;
        let id = Network::identity(inner.output_dim());
        self.compose(id.compose(inner)?)
    }

    /// Sparse concatenation of a chain given in application order:
    /// `nets[k-1] ⊙ … ⊙ nets[0]`.
    pub fn sparse_chain(nets: Vec<Network>) -> Result<Network> {
        let mut it = nets.into_iter();
        let mut acc = it.next().ok_or_else(|| Error::Network("empty chain".into()))?;
        for n in it {
            acc = n.sparse_compose(acc)?;
        }
        Ok(acc)
    }

    /// Parallelization of networks of equal depth. With `shared_input` all
    /// networks read the same input, which is the same as composing with the
    /// fan-out `([Id; …; Id], 0)` and merging it into the first layer.
    pub fn parallelize(nets: &[&Network], shared_input: bool) -> Result<Network> {
        let first = nets.first().ok_or_else(|| Error::Network("nothing to parallelize".into()))?;
        let depth = first.depth();
        for n in nets {
            if n.depth() != depth {
                return Err(Error::Network(format!("parallelize needs equal depths, got {} and {}", depth, n.depth())));
            }
            if shared_input {
                check_dim(first.input_dim(), n.input_dim(), "Network::parallelize shared input")?;
            }
        }
        let mut layers = Vec::with_capacity(depth);
        for l in 0..depth {
            let ws: Vec<&SparseMatrix> = nets.iter().map(|n| &n.layers[l].weights).collect();
            let w = if l == 0 && shared_input { SparseMatrix::vstack(&ws)? } else { SparseMatrix::block_diag(&ws)? };
            let b: Vec<f64> = nets.iter().flat_map(|n| n.layers[l].bias.iter().copied()).collect();
            layers.push(Layer::new(w, b)?);
        }
        Ok(Network { layers })
    }

    /// `k` parallel copies of `self` acting on consecutive input blocks.
    pub fn copies(&self, k: usize) -> Result<Network> {
        let refs: Vec<&Network> = (0..k).map(|_| self).collect();
        Network::parallelize(&refs, false)
    }
}
