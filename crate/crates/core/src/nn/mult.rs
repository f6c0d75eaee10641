//! Approximate multiplication by ReLU networks.
//!
//! Squaring on `[0, 1]` uses the sawtooth expansion
//! `sq_m(u) = u − Σ_{s=1..m} g^{(s)}(u) / 4^s` with the hat
//! `g(u) = 2ρ(u) − 4ρ(u − 1/2)`; `0 ≤ sq_m(u) − u² ≤ 4^{-m-1}`.
//! Products follow from polarization with inputs scaled by their bounds:
//!
//! ```text
//! x y = Zx Zy [ (|x/Zx + y/Zy| / 2)² − (|x/Zx − y/Zy| / 2)² ]
//! ```
//!
//! so for `|x| ≤ Zx`, `|y| ≤ Zy` the error is at most `Zx Zy 4^{-m-1}`.
//! A product network has depth `m + 2`.

use alloc::vec;
use alloc::vec::Vec;

use super::network::{Layer, Network};
use crate::error::{check_dim, Error, Result};
use crate::sparse::SparseMatrix;

/// Largest sawtooth order accepted by the constructions.
pub const MAX_ORDER: usize = 60;

/// Sup-error of `sq_m` on `[0, 1]`.
pub fn square_error(m: usize) -> f64 {
    libm::pow(4.0, -(m as f64) - 1.0)
}

/// Smallest order `m` with `scale · 4^{-m-1} ≤ eps`.
pub fn order_for(eps: f64, scale: f64) -> Result<usize> {
    if !(eps > 0.0) || !(scale > 0.0) || !eps.is_finite() || !scale.is_finite() {
        return Err(Error::InvalidTolerance(alloc::format!("need eps > 0 and scale > 0, got {eps}, {scale}")));
    }
    (0..=MAX_ORDER)
        .find(|&m| scale * square_error(m) <= eps)
        .ok_or_else(|| Error::InvalidTolerance(alloc::format!("tolerance {eps} needs more than {MAX_ORDER} sawtooth stages")))
}

/// One approximate product of input coordinates `x` and `y` with bounds `zx`, `zy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Product {
    pub x: usize,
    pub y: usize,
    pub zx: f64,
    pub zy: f64,
}

/// Hidden layers that evaluate many products side by side and carry selected
/// inputs unchanged; the caller supplies the final affine read-out.
pub(crate) struct ProductStack {
    layers: Vec<Layer>,
    m: usize,
    n_products: usize,
    products_scale: Vec<f64>,
}

fn sorted_row(mut r: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    r.sort_unstable_by_key(|e| e.0);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(r.len());
    for (j, v) in r {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}

fn layer_from_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>, bias: Vec<f64>) -> Result<Layer> {
    let n = rows.len();
    let w = SparseMatrix::from_sorted_rows(n, cols, rows.into_iter().map(sorted_row))?;
    Layer::new(w, bias)
}

impl ProductStack {
    pub(crate) fn new(n_in: usize, products: &[Product], carry: &[usize], m: usize) -> Result<Self> {
        for p in products {
            if p.x >= n_in || p.y >= n_in {
                return Err(Error::DimensionMismatch { expected: n_in, found: p.x.max(p.y), context: "product input index" });
            }
        }
        let np = products.len();
        let nc = carry.len();
        let mut layers = Vec::with_capacity(m + 1);

        // |x/Zx ± y/Zy| / 2 split into positive and negative parts.
        let width = 4 * np + 2 * nc;
        let mut rows = Vec::with_capacity(width);
        for p in products {
            let (wx, wy) = (0.5 / p.zx, 0.5 / p.zy);
            rows.push(vec![(p.x as u32, wx), (p.y as u32, wy)]);
            rows.push(vec![(p.x as u32, -wx), (p.y as u32, -wy)]);
            rows.push(vec![(p.x as u32, wx), (p.y as u32, -wy)]);
            rows.push(vec![(p.x as u32, -wx), (p.y as u32, wy)]);
        }
        for &c in carry {
            rows.push(vec![(c as u32, 1.0)]);
            rows.push(vec![(c as u32, -1.0)]);
        }
        layers.push(layer_from_rows(n_in, rows, vec![0.0; width])?);

        let mut prev_block = 4;
        for s in 1..=m {
            let block = if s == 1 { 4 } else { 6 };
            let width = block * np + 2 * nc;
            let prev_width = prev_block * np + 2 * nc;
            let mut rows = Vec::with_capacity(width);
            let mut bias = Vec::with_capacity(width);
            for k in 0..np {
                let base = (k * prev_block) as u32;
                for sq in 0..2u32 {
                    if s == 1 {
                        let (a, b) = (base + 2 * sq, base + 2 * sq + 1);
                        rows.push(vec![(a, 1.0), (b, 1.0)]);
                        bias.push(0.0);
                        rows.push(vec![(a, 1.0), (b, 1.0)]);
                        bias.push(-0.5);
                    } else {
                        let half = (prev_block / 2) as u32;
                        let p = base + sq * half;
                        let q = p + 1;
                        rows.push(vec![(p, 2.0), (q, -4.0)]);
                        bias.push(0.0);
                        rows.push(vec![(p, 2.0), (q, -4.0)]);
                        bias.push(-0.5);
                        let w = libm::pow(4.0, -((s - 1) as f64));
                        if s == 2 {
                            // The running sum starts at u, which is the unit p itself.
                            rows.push(vec![(p, 1.0 - 2.0 * w), (q, 4.0 * w)]);
                        } else {
                            rows.push(vec![(p + 2, 1.0), (p, -2.0 * w), (q, 4.0 * w)]);
                        }
                        bias.push(0.0);
                    }
                }
            }
            let cbase = (prev_block * np) as u32;
            for c in 0..nc as u32 {
                rows.push(vec![(cbase + 2 * c, 1.0)]);
                bias.push(0.0);
                rows.push(vec![(cbase + 2 * c + 1, 1.0)]);
                bias.push(0.0);
            }
            layers.push(layer_from_rows(prev_width, rows, bias)?);
            prev_block = block;
        }
        let products_scale = products.iter().map(|p| p.zx * p.zy).collect();
        Ok(Self { layers, m, n_products: np, products_scale })
    }

    fn block(&self) -> usize {
        if self.m >= 2 {
            6
        } else {
            4
        }
    }

    fn width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Appends `scale · product_k` as read-out terms over the last hidden layer.
    pub(crate) fn product_terms(&self, k: usize, scale: f64, out: &mut Vec<(u32, f64)>) {
        let z = scale * self.products_scale[k];
        let b = self.block();
        let base = (k * b) as u32;
        if self.m == 0 {
            out.extend_from_slice(&[(base, z), (base + 1, z), (base + 2, -z), (base + 3, -z)]);
            return;
        }
        let w = libm::pow(4.0, -(self.m as f64));
        let half = (b / 2) as u32;
        for (sq, sign) in [(0u32, 1.0), (1u32, -1.0)] {
            let p = base + sq * half;
            let q = p + 1;
            let c = sign * z;
            if self.m == 1 {
                out.push((p, c * (1.0 - 2.0 * w)));
                out.push((q, c * 4.0 * w));
            } else {
                out.push((p + 2, c));
                out.push((p, -c * 2.0 * w));
                out.push((q, c * 4.0 * w));
            }
        }
    }

    /// Appends `scale · carry_c` as read-out terms.
    pub(crate) fn carry_terms(&self, c: usize, scale: f64, out: &mut Vec<(u32, f64)>) {
        let base = (self.block() * self.n_products + 2 * c) as u32;
        out.push((base, scale));
        out.push((base + 1, -scale));
    }

    /// Completes the network with the read-out layer.
    pub(crate) fn finish(self, rows: Vec<Vec<(u32, f64)>>, bias: Vec<f64>) -> Result<Network> {
        check_dim(rows.len(), bias.len(), "ProductStack read-out bias")?;
        let width = self.width();
        let mut layers = self.layers;
        layers.push(layer_from_rows(width, rows, bias)?);
        Network::new(layers)
    }
}

/// Network `(x, y) ↦ ×̃(x, y)` with `|×̃(x, y) − x y| ≤ eps` for `|x|, |y| ≤ z`.
pub fn scalar_mult_network(eps: f64, z: f64) -> Result<Network> {
    let m = order_for(eps, z * z)?;
    let stack = ProductStack::new(2, &[Product { x: 0, y: 1, zx: z, zy: z }], &[], m)?;
    let mut row = Vec::new();
    stack.product_terms(0, 1.0, &mut row);
    stack.finish(vec![row], vec![0.0])
}

/// Network taking `vec(A) ‖ vec(B)` for `A ∈ R^{n×k}`, `B ∈ R^{k×m}` with
/// entries bounded by `z` and returning an approximation of `vec(AB)` with
/// Frobenius (hence spectral) error at most `eps`.
///
/// With `symmetric` (requires `n = m`) every entry `(i, j)` with `i > j` is
/// read out from the very same units as `(j, i)`, so the output matrix is
/// exactly symmetric whenever `AB` is.
pub fn matrix_mult_network(n: usize, k: usize, m: usize, eps: f64, z: f64, symmetric: bool) -> Result<Network> {
    if n == 0 || k == 0 || m == 0 {
        return Err(Error::InvalidGeometry("matrix dimensions must be positive".into()));
    }
    if symmetric && n != m {
        return Err(Error::DimensionMismatch { expected: n, found: m, context: "symmetric matrix_mult_network" });
    }
    let scale = libm::sqrt((n * m) as f64) * k as f64 * z * z;
    let order = order_for(eps, scale)?;
    let b_off = n * k;
    let mut products = Vec::new();
    let mut first = vec![usize::MAX; n * m];
    for j in 0..m {
        for i in 0..n {
            if symmetric && i > j {
                continue;
            }
            first[i + j * n] = products.len();
            for p in 0..k {
                products.push(Product { x: i + p * n, y: b_off + p + j * k, zx: z, zy: z });
            }
        }
    }
    let stack = ProductStack::new(n * k + k * m, &products, &[], order)?;
    let mut rows = Vec::with_capacity(n * m);
    for j in 0..m {
        for i in 0..n {
            let (a, b) = if symmetric && i > j { (j, i) } else { (i, j) };
            let start = first[a + b * n];
            let mut row = Vec::with_capacity(6 * k);
            for p in 0..k {
                stack.product_terms(start + p, 1.0, &mut row);
            }
            rows.push(row);
        }
    }
    stack.finish(rows, vec![0.0; n * m])
}
