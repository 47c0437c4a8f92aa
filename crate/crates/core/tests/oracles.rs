//! Library results against dense reference computations.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use svgpvae::kernels::{build_low_rank, kronecker_inputs, low_rank_solve, Kernel, KernelKind};
use svgpvae::numerics::Tensor;
use svgpvae::sparse_gp::{
    exact_log_marginal, exact_posterior, hensman_elbo, mc_estimators, sparse_predict, titsias_elbo, titsias_optimal,
    InducingPoints, LatentDataset,
};

#[test]
fn bound_chain_on_random_instances() {
    let mut r = rng(11);
    for _ in 0..20 {
        let n = r.random_range(3..=20);
        let l = r.random_range(1..=3);
        let m = r.random_range(1..=n.min(8));
        let d = random_dataset(&mut r, n, l, 0.3);
        let k = random_kernel(&mut r);
        let u = InducingPoints::new(random_inducing(&mut r, m)).unwrap();
        let post = titsias_optimal(&d, &u, &k).unwrap();
        for c in 0..l {
            let lt = titsias_elbo(&d, &u, &k, c).unwrap();
            let lh = hensman_elbo(&d, &post, &k, c, n).unwrap();
            let lz = exact_log_marginal(&d, &k, c).unwrap();
            assert!((lh - lt).abs() < 1e-8, "L_H {lh} vs L_T {lt}");
            assert!(lt <= lz + 1e-8, "L_T {lt} above log Z {lz}");
            assert!((lt - dense_titsias(&d, &u.u, &k, c)).abs() < 1e-8);
            assert!((lz - dense_log_z(&d, &k, c)).abs() < 1e-8);
        }
    }
}

#[test]
fn hensman_matches_dense_at_arbitrary_posterior() {
    let mut r = rng(5);
    let d = random_dataset(&mut r, 9, 1, 0.4);
    let k = random_kernel(&mut r);
    let u = random_inducing(&mut r, 4);
    let mu = DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0));
    let b = DMatrix::from_fn(4, 4, |_, _| r.random_range(-0.5..0.5));
    let a = &b * b.transpose() + DMatrix::identity(4, 4) * 0.2;
    let post = svgpvae::sparse_gp::SparsePosterior {
        inducing: InducingPoints::new(u.clone()).unwrap(),
        mu: Tensor::from_fn(4, 1, |i, _| mu[i]),
        a: vec![Tensor::from_fn(4, 4, |i, j| a[(i, j)])],
    };
    let lib = hensman_elbo(&d, &post, &k, 0, 9).unwrap();
    assert!((lib - dense_hensman(&d, &u, &k, 0, &mu, &a)).abs() < 1e-9);
}

/// Sorted inputs with gaps in `[0.3, 0.8)`, so `K_NN` stays well conditioned.
fn separated_dataset(r: &mut rand_chacha::ChaCha8Rng, n: usize, l: usize) -> LatentDataset {
    let mut x = 0.0;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            x += r.random_range(0.3..0.8);
            x
        })
        .collect();
    let y = Tensor::from_fn(n, l, |_, _| r.random_range(-1.5..1.5));
    let s = Tensor::from_fn(n, l, |_, _| 0.3 + r.random::<f64>());
    LatentDataset::new(Tensor::column(xs), y, s).unwrap()
}

#[test]
fn full_rank_inducing_set_recovers_exact_posterior() {
    let mut r = rng(23);
    for _ in 0..20 {
        let n = r.random_range(2..=10);
        let l = r.random_range(1..=3);
        let d = separated_dataset(&mut r, n, l);
        let k = Kernel::rbf(1, r.random_range(0.5..1.2), r.random_range(0.5..1.5));
        let xs = Tensor::from_fn(5, 1, |_, _| r.random_range(0.0..6.0));
        let post = titsias_optimal(&d, &InducingPoints::new(d.x.clone()).unwrap(), &k).unwrap();
        let sp = sparse_predict(&post, &k, &xs).unwrap();
        let ex = exact_posterior(&d, &k, &xs).unwrap();
        for c in 0..l {
            let (dm_, dc) = dense_posterior(&d, &k, c, &xs);
            for i in 0..5 {
                assert!((sp.mean.get(i, c) - ex.mean.get(i, c)).abs() < 1e-6);
                assert!((ex.mean.get(i, c) - dm_[i]).abs() < 1e-8);
            }
            assert!(tensor_dm_diff(&sp.cov[c], &dm(&ex.cov[c])) < 1e-6);
            assert!(tensor_dm_diff(&ex.cov[c], &dc) < 1e-8);
        }
    }
}

#[test]
fn full_batch_estimators_match_closed_form() {
    let mut r = rng(3);
    for _ in 0..10 {
        let n = r.random_range(2..=12);
        let d = random_dataset(&mut r, n, 2, 0.3);
        let k = random_kernel(&mut r);
        let u = random_inducing(&mut r, 3);
        let all: Vec<usize> = (0..n).collect();
        for c in 0..2 {
            let e = mc_estimators(&d, &InducingPoints::new(u.clone()).unwrap(), &k, c, n).unwrap();
            let o = dense_estimators(&d, &all, &u, &k, c, n);
            let scale = max_abs(&o.a).max(1.0);
            assert!(tensor_dm_diff(&e.sigma, &o.sigma) < 1e-10 * max_abs(&o.sigma).max(1.0));
            assert!(tensor_dm_diff(&e.mu, &DMatrix::from_column_slice(3, 1, o.mu.as_slice())) < 1e-10 * scale);
            assert!(tensor_dm_diff(&e.a, &o.a) < 1e-10 * scale);
        }
    }
}

#[test]
fn subset_enumeration_unbiased_sigma_small_cov_bias() {
    // damped regime: every precision σ̃⁻² scaled by 0.01
    let mut r = rng(8);
    let n = 8;
    let d = random_dataset(&mut r, n, 1, 4.0);
    let k = Kernel::rbf(1, 1.5, 1.0);
    let u = random_inducing(&mut r, 3);
    let ip = InducingPoints::new(u.clone()).unwrap();
    let full = mc_estimators(&d, &ip, &k, 0, n).unwrap();
    let mut last = f64::INFINITY;
    for b in 1..n {
        let subs = subsets(n, b);
        let mut sigma = DMatrix::zeros(3, 3);
        let mut a = DMatrix::zeros(3, 3);
        for s in &subs {
            let e = mc_estimators(&d.subset(s), &ip, &k, 0, n).unwrap();
            sigma += dm(&e.sigma);
            a += dm(&e.a);
        }
        sigma /= subs.len() as f64;
        a /= subs.len() as f64;
        assert!(tensor_dm_diff(&full.sigma, &sigma) < 1e-10 * max_abs(&sigma));
        let rel = tensor_dm_diff(&full.a, &a) / max_abs(&dm(&full.a));
        assert!(rel <= 0.05, "b = {b}: relative A bias {rel}");
        assert!(rel < last, "bias should shrink as b grows");
        last = rel;
    }
}

#[test]
fn importance_sampling_agrees_with_log_marginal() {
    // log Z = log E_{f ~ GP prior}[N(y | f, V)], estimated by plain Monte Carlo.
    let mut r = rng(17);
    let d = random_dataset(&mut r, 3, 1, 0.8);
    let k = Kernel::rbf(1, 1.2, 1.0);
    let kn = kmat(&k, &d.x, &d.x).cholesky().unwrap().l();
    let draws = 200_000;
    let mut logs = Vec::with_capacity(draws);
    for _ in 0..draws {
        let e = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut r));
        let f = &kn * e;
        let mut lp = 0.0;
        for i in 0..3 {
            let v = d.sigma_tilde.get(i, 0).powi(2);
            lp += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * (d.y_tilde.get(i, 0) - f[i]).powi(2) / v;
        }
        logs.push(lp);
    }
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let est = mx + (logs.iter().map(|l| (l - mx).exp()).sum::<f64>() / draws as f64).ln();
    let exact = exact_log_marginal(&d, &k, 0).unwrap();
    assert!((est - exact).abs() < 0.01, "{est} vs {exact}");
}

/// Random product periodic-linear instance on a `P x Q` grid.
pub fn low_rank_case(r: &mut rand_chacha::ChaCha8Rng, p: usize, q: usize) -> (Kernel, Tensor, Tensor) {
    let p1 = 2;
    let k = Kernel::new(
        KernelKind::ProductPeriodicLinear { view_dims: 1 },
        1 + p1,
        r.random_range(0.8..2.0),
        r.random_range(0.5..1.5),
    )
    .unwrap();
    let objects = Tensor::from_fn(p, p1, |_, _| r.random_range(-1.0..1.0));
    let views = Tensor::from_fn(q, 1, |i, _| std::f64::consts::TAU * (i + 1) as f64 / q as f64);
    (k, objects, views)
}

#[test]
fn low_rank_solve_matches_dense_on_every_small_grid() {
    let mut r = rng(31);
    for p in 1..=5 {
        for q in 1..=5 {
            let (k, objects, views) = low_rank_case(&mut r, p, q);
            let f = build_low_rank(&k, &objects, &views).unwrap();
            let x = kronecker_inputs(&objects, &views);
            let n = p * q;
            let knn = kmat(&k, &x, &x);
            let vvt = dm(&f.v) * dm(&f.v).transpose();
            assert!(max_abs(&(&vvt - &knn)) < 1e-8, "P={p} Q={q}");
            let noise = Tensor::from_fn(n, 1, |_, _| r.random_range(0.1..1.0));
            let rhs = Tensor::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0));
            let (sol, logdet) = low_rank_solve(&f, &noise, &rhs).unwrap();
            let c = knn + DMatrix::from_diagonal(&DVector::from_vec(noise.data().to_vec()));
            let ch = c.clone().cholesky().unwrap();
            let want = ch.solve(&dm(&rhs));
            let want_ld = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            assert!(max_abs(&(dm(&sol) - want)) < 1e-8, "P={p} Q={q}");
            assert!((logdet - want_ld).abs() < 1e-8, "P={p} Q={q}");
        }
    }
}
