mod common;

use common::{rng, spec_norm};
use lodnn_core::dense::DenseMatrix;
use lodnn_core::nn::{self, Layer, Network};
use lodnn_core::sparse::SparseMatrix;
use proptest::prelude::*;
use rand::Rng;

/// Straight-line interpreter working from dense copies of the weights.
fn interpret(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let last = net.depth() - 1;
    for (l, layer) in net.layers().iter().enumerate() {
        let w = layer.weights().to_dense();
        let mut next = layer.bias().to_vec();
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                next[i] += w.get(i, j) * cur[j];
            }
        }
        if l < last {
            next.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        cur = next;
    }
    cur
}

fn random_sparse(r: &mut impl Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if r.gen_bool(density) {
                t.push((i, j, r.gen_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).unwrap()
}

fn random_net(r: &mut impl Rng, input: usize, depth: usize, output: usize) -> Network {
    let mut dims = vec![input];
    for _ in 1..depth {
        dims.push(r.gen_range(1..6));
    }
    dims.push(output);
    let layers = (0..depth)
        .map(|l| {
            let w = random_sparse(r, dims[l + 1], dims[l], 0.6);
            let b = (0..dims[l + 1]).map(|_| if r.gen_bool(0.5) { r.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            Layer::new(w, b).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

fn random_vec(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-3.0..3.0)).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

#[test]
fn realization_examples() {
    let two = Network::linear(SparseMatrix::identity(2).scaled(2.0));
    assert_eq!(two.realize(&[1.0, -3.0]).unwrap(), vec![2.0, -6.0]);
    let relu_then_id = Network::new(vec![Layer::linear(SparseMatrix::identity(2)), Layer::linear(SparseMatrix::identity(2))]).unwrap();
    assert_eq!(relu_then_id.realize(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    assert!(two.realize(&[1.0]).is_err());
    let bad = Network::new(vec![Layer::linear(SparseMatrix::identity(2)), Layer::linear(SparseMatrix::identity(3))]);
    assert!(bad.is_err());
}

#[test]
fn realization_matches_second_interpreter() {
    let mut r = rng(1);
    for _ in 0..50 {
        let net = random_net(&mut r, 4, 3, 3);
        let x = random_vec(&mut r, 4);
        assert!(close(&net.realize(&x).unwrap(), &interpret(&net, &x), 1e-14));
    }
}

#[test]
fn parameter_counting() {
    for n in 1..6 {
        let id = Network::identity(n);
        assert_eq!((id.depth(), id.num_params()), (2, 4 * n));
        assert_eq!(id.widths(), vec![n, 2 * n, n]);
        assert_eq!(Network::linear(SparseMatrix::identity(n)).num_params(), n);
    }
    let w = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]).unwrap();
    let full = Network::affine(w, vec![1.0, 0.0]).unwrap();
    let w0 = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 0.0), (1, 1, 3.0)]).unwrap();
    let zeroed = Network::affine(w0, vec![1.0, 0.0]).unwrap();
    assert_eq!(full.num_params(), 4);
    assert_eq!(zeroed.num_params(), full.num_params() - 1);
}

#[test]
fn identity_network_is_exact() {
    let id = Network::identity(3);
    assert_eq!(id.realize(&[-5.0, 0.0, 7.0]).unwrap(), vec![-5.0, 0.0, 7.0]);
    let mut r = rng(2);
    for depth in 1..5 {
        let id = Network::identity_with_depth(4, depth);
        assert_eq!(id.depth(), depth);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(-1e6..1e6)).collect();
            assert_eq!(id.realize(&x).unwrap(), x);
        }
    }
}

#[test]
fn concat_examples() {
    let a = Network::linear(SparseMatrix::identity(3).scaled(2.0));
    let b = Network::linear(SparseMatrix::identity(3).scaled(3.0));
    assert_eq!(a.concat(&b).unwrap(), Network::linear(SparseMatrix::identity(3).scaled(6.0)));
    let mut r = rng(3);
    let outer = random_net(&mut r, 3, 3, 2);
    let inner = random_net(&mut r, 4, 2, 3);
    let c = outer.concat(&inner).unwrap();
    assert_eq!(c.depth(), outer.depth() + inner.depth() - 1);
    for _ in 0..20 {
        let x = random_vec(&mut r, 4);
        let want = outer.realize(&inner.realize(&x).unwrap()).unwrap();
        assert!(close(&c.realize(&x).unwrap(), &want, 1e-13));
    }
    assert!(inner.concat(&outer).is_err());
}

#[test]
fn permutation_concat_is_neutral() {
    let mut r = rng(4);
    for _ in 0..100 {
        let out = r.gen_range(1..6);
        let depth = r.gen_range(1..4);
        let net = random_net(&mut r, 3, depth, out);
        let mut perm: Vec<usize> = (0..out).collect();
        for i in (1..out).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let q = SparseMatrix::from_triplets(out, out, perm.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect()).unwrap();
        let c = Network::linear(q).concat(&net).unwrap();
        assert_eq!((c.depth(), c.num_params()), (net.depth(), net.num_params()));
        let x = random_vec(&mut r, 3);
        let y = net.realize(&x).unwrap();
        let z = c.realize(&x).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert_eq!(z[i], y[j]);
        }
    }
}

#[test]
fn parallelization_examples() {
    let id = Network::identity(2);
    let p = Network::parallelize(&[&id, &id], false).unwrap();
    assert_eq!(p.realize(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    let shared = Network::parallelize(&[&id, &id], true).unwrap();
    assert_eq!(shared.realize(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0, 1.0, 2.0]);
    assert_eq!(shared.num_params(), 2 * id.num_params());
    assert!(Network::parallelize(&[&id, &Network::identity_with_depth(2, 3)], false).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sparse_concat_depth_and_size(seed in 0u64..1_000_000, la in 1usize..4, lb in 1usize..4, mid in 1usize..5) {
        let mut r = rng(seed);
        let a = random_net(&mut r, mid, la, 2);
        let b = random_net(&mut r, 3, lb, mid);
        let c = a.sparse_concat(&b).unwrap();
        prop_assert_eq!(c.depth(), a.depth() + b.depth());
        prop_assert!(c.num_params() <= 2 * a.num_params() + 2 * b.num_params());
        for _ in 0..5 {
            let x = random_vec(&mut r, 3);
            let want = a.realize(&b.realize(&x).unwrap()).unwrap();
            prop_assert!(close(&c.realize(&x).unwrap(), &want, 1e-13));
        }
    }

    #[test]
    fn parallelization_is_additive(seed in 0u64..1_000_000, depth in 1usize..4, shared in any::<bool>()) {
        let mut r = rng(seed);
        let a = random_net(&mut r, 3, depth, 2);
        let b = random_net(&mut r, if shared { 3 } else { 2 }, depth, 4);
        let p = Network::parallelize(&[&a, &b], shared).unwrap();
        prop_assert_eq!(p.depth(), depth);
        prop_assert_eq!(p.num_params(), a.num_params() + b.num_params());
        let x = random_vec(&mut r, 3);
        let y = if shared { x.clone() } else { random_vec(&mut r, 2) };
        let mut input = x.clone();
        if !shared {
            input.extend_from_slice(&y);
        }
        let mut want = a.realize(&x).unwrap();
        want.extend(b.realize(&y).unwrap());
        prop_assert!(close(&p.realize(&input).unwrap(), &want, 1e-13));
    }

    #[test]
    fn identity_exact_everywhere(x in proptest::collection::vec(-1e9f64..1e9, 1..8)) {
        prop_assert_eq!(Network::identity(x.len()).realize(&x).unwrap(), x);
    }
}

#[test]
fn vectorization_helpers() {
    let m = DenseMatrix::from_row_major(2, 2, vec![1.0, 3.0, 2.0, 4.0]).unwrap();
    assert_eq!(nn::vec(&m), vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!(nn::mat(&nn::vec(&m), 2, 2).unwrap(), m);
    let mut r = rng(5);
    for _ in 0..10 {
        let (rows, cols) = (r.gen_range(1..6), r.gen_range(1..6));
        let a = DenseMatrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0));
        let q = nn::transpose_permutation(rows, cols);
        assert_eq!(q.matvec(&nn::vec(&a)).unwrap(), nn::vec(&a.transpose()));
    }
}

#[test]
fn scalar_multiplication_accuracy() {
    let eps = 1e-3;
    let z = 4.0;
    let net = nn::scalar_mult_network(eps, z).unwrap();
    assert!((net.realize(&[1.5, -2.0]).unwrap()[0] + 3.0).abs() <= eps);
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (x, y) = (r.gen_range(-z..=z), r.gen_range(-z..=z));
        worst = worst.max((net.realize(&[x, y]).unwrap()[0] - x * y).abs());
        assert!(net.realize(&[0.0, y]).unwrap()[0].abs() <= eps);
    }
    for i in 0..=80 {
        for j in 0..=80 {
            let (x, y) = (-z + 0.1 * i as f64, -z + 0.1 * j as f64);
            worst = worst.max((net.realize(&[x, y]).unwrap()[0] - x * y).abs());
        }
    }
    assert!(worst <= eps, "{worst}");
    // Depth grows logarithmically in Z²/eps.
    for (e, zz) in [(1e-1, 1.0), (1e-4, 1.0), (1e-8, 2.0)] {
        let n = nn::scalar_mult_network(e, zz).unwrap();
        let m = (zz * zz / e).log(4.0).ceil() as usize;
        assert!(n.depth() <= m + 2);
    }
    assert!(nn::scalar_mult_network(0.0, 1.0).is_err());
}

#[test]
fn matrix_multiplication_accuracy() {
    let mut r = rng(7);
    let n = 3;
    let eps = 1e-2;
    let net = nn::matrix_mult_network(n, n, n, eps, 1.0, false).unwrap();
    let id = DenseMatrix::identity(n);
    for _ in 0..20 {
        let a = DenseMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let b = DenseMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let mut input = nn::vec(&a);
        input.extend(nn::vec(&b));
        let out = nn::mat(&net.realize(&input).unwrap(), n, n).unwrap();
        assert!(spec_norm(&out.sub(&a.matmul(&b).unwrap()).unwrap()) <= eps);
        let mut input = nn::vec(&id);
        input.extend(nn::vec(&b));
        let out = nn::mat(&net.realize(&input).unwrap(), n, n).unwrap();
        assert!(spec_norm(&out.sub(&b).unwrap()) <= eps);
    }
    let rect = nn::matrix_mult_network(2, 4, 3, eps, 1.0, false).unwrap();
    assert_eq!((rect.input_dim(), rect.output_dim()), (8 + 12, 6));
    let sym = nn::matrix_mult_network(n, n, n, eps, 1.0, true).unwrap();
    for _ in 0..20 {
        let g = DenseMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (g.get(i, j) + g.get(j, i)));
        let mut input = nn::vec(&a);
        input.extend(nn::vec(&a));
        let out = nn::mat(&sym.realize(&input).unwrap(), n, n).unwrap();
        assert!(out.is_symmetric());
        for i in 0..n {
            for j in 0..n {
                assert_eq!(out.get(i, j).to_bits(), out.get(j, i).to_bits());
            }
        }
        assert!(spec_norm(&out.sub(&a.matmul(&a).unwrap()).unwrap()) <= eps);
    }
}
