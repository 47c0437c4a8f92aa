//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Environment:
//! - `SVGPVAE_ACCEPT_EPOCHS`: epoch budget of the moving-ball runs
//!   (default 300; the desk budget is 2000).
//! - `SVGPVAE_ACCEPT_ONLY`: comma-separated criterion numbers to run.

mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use rand::Rng;
use svgpvae::config::{DataSource, ExperimentConfig, InducingInit};
use svgpvae::kernels::{build_low_rank, kronecker_inputs, low_rank_solve, Kernel, KernelKind};
use svgpvae::models::{checkpoint, ModelKind, ParamGroup};
use svgpvae::numerics::Tensor;
use svgpvae::sparse_gp::{
    exact_log_marginal, exact_posterior, hensman_elbo, mc_estimators, sparse_predict, titsias_elbo, titsias_optimal,
    InducingPoints, LatentDataset,
};
use svgpvae::training::{
    build_experiment, evaluate_experiment, gradient_check_all, train, vanishing_phi, EvalReport, RunStatus,
};

const DESK_EPOCHS: usize = 2000;
const DEFAULT_EPOCHS: usize = 300;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/digits")
}

fn separated(r: &mut rand_chacha::ChaCha8Rng, n: usize, l: usize) -> LatentDataset {
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

fn bound_chain() -> Outcome {
    let mut r = rng(101);
    let (mut gap, mut excess) = (0.0f64, f64::NEG_INFINITY);
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
            gap = gap.max((lh - lt).abs());
            excess = excess.max(lt - exact_log_marginal(&d, &k, c).unwrap());
        }
    }
    outcome(
        gap <= 1e-8 && excess <= 1e-8,
        format!("max |L_H - L_T| = {gap:.1e}, max (L_T - log Z) = {excess:.1e}"),
    )
}

fn full_rank_collapse() -> Outcome {
    let mut r = rng(202);
    let (mut dm_, mut dc) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = r.random_range(2..=10);
        let l = r.random_range(1..=3);
        let d = separated(&mut r, n, l);
        let k = Kernel::rbf(1, r.random_range(0.5..1.2), r.random_range(0.5..1.5));
        let xs = Tensor::from_fn(5, 1, |_, _| r.random_range(0.0..6.0));
        let post = titsias_optimal(&d, &InducingPoints::new(d.x.clone()).unwrap(), &k).unwrap();
        let sp = sparse_predict(&post, &k, &xs).unwrap();
        let ex = exact_posterior(&d, &k, &xs).unwrap();
        dm_ = dm_.max(sp.mean.zip_map(&ex.mean, |a, b| (a - b).abs()).max_abs());
        for c in 0..l {
            dc = dc.max(sp.cov[c].zip_map(&ex.cov[c], |a, b| (a - b).abs()).max_abs());
        }
    }
    outcome(
        dm_ <= 1e-6 && dc <= 1e-6,
        format!("max mean error {dm_:.1e}, max covariance error {dc:.1e}"),
    )
}

fn estimators() -> Outcome {
    let mut r = rng(303);
    let mut closed = 0.0f64;
    for _ in 0..10 {
        let n = r.random_range(2..=12);
        let d = random_dataset(&mut r, n, 2, 0.3);
        let k = random_kernel(&mut r);
        let u = random_inducing(&mut r, 3);
        let ip = InducingPoints::new(u.clone()).unwrap();
        let all: Vec<usize> = (0..n).collect();
        for c in 0..2 {
            let e = mc_estimators(&d, &ip, &k, c, n).unwrap();
            let o = dense_estimators(&d, &all, &u, &k, c, n);
            let rel = |t: &Tensor, m: &nalgebra::DMatrix<f64>| tensor_dm_diff(t, m) / max_abs(m).max(1.0);
            closed = closed
                .max(rel(&e.sigma, &o.sigma))
                .max(rel(&e.mu, &nalgebra::DMatrix::from_column_slice(3, 1, o.mu.as_slice())))
                .max(rel(&e.a, &o.a));
        }
    }
    let n = 8;
    let (mut sig, mut abias) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let mut r = rng(310 + seed);
        let d = damped(random_dataset(&mut r, n, 1, 0.3));
        let k = random_kernel(&mut r);
        let ip = InducingPoints::new(random_inducing(&mut r, 3)).unwrap();
        let full = mc_estimators(&d, &ip, &k, 0, n).unwrap();
        for b in 1..n {
            let subs = subsets(n, b);
            let mut s = Tensor::zeros(3, 3);
            let mut a = Tensor::zeros(3, 3);
            for rows in &subs {
                let e = mc_estimators(&d.subset(rows), &ip, &k, 0, n).unwrap();
                s = s.zip_map(&e.sigma, |x, y| x + y);
                a = a.zip_map(&e.a, |x, y| x + y);
            }
            let cnt = subs.len() as f64;
            let s = s.map(|v| v / cnt);
            let a = a.map(|v| v / cnt);
            sig = sig.max(s.zip_map(&full.sigma, |x, y| (x - y).abs()).max_abs() / full.sigma.max_abs());
            abias = abias.max(a.zip_map(&full.a, |x, y| (x - y).abs()).max_abs() / full.a.max_abs());
        }
    }
    outcome(
        closed <= 1e-10 && sig <= 1e-10 && abias <= 0.05,
        format!("b=N vs closed form {closed:.1e}; subset means: Sigma {sig:.1e}, A relative bias {abias:.3}"),
    )
}

fn vanishing() -> Outcome {
    let runs: Vec<_> = (0..10).map(|s| vanishing_phi(s).unwrap()).collect();
    let lph = runs.iter().map(|v| v.lph).fold(0.0, f64::max);
    let nonzero = runs.iter().filter(|v| v.svgpvae > 1e-8).count();
    outcome(
        lph <= 1e-12 && nonzero >= 9,
        format!("max |grad_phi L_PH| = {lph:.1e}; SVGP-VAE encoder gradient > 1e-8 on {nonzero}/10 seeds"),
    )
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut groups = BTreeSet::new();
    let mut kinds = 0;
    for seed in 0..2 {
        for r in gradient_check_all(seed).unwrap() {
            kinds += 1;
            worst = worst.max(r.max_rel_error);
            for g in &r.groups {
                groups.insert(format!("{:?}", g.group));
            }
        }
    }
    let needed = [
        ParamGroup::Encoder,
        ParamGroup::Decoder,
        ParamGroup::Kernel,
        ParamGroup::Inducing,
        ParamGroup::Gplvm,
    ];
    let covered = needed.iter().all(|g| groups.contains(&format!("{g:?}")));
    outcome(
        worst <= 1e-4 && covered,
        format!(
            "{kinds} objective checks, max relative error {worst:.1e}, groups {:?}",
            groups
        ),
    )
}

struct BallRun {
    report: EvalReport,
    initial_std: Option<f64>,
}

fn ball_run(kind: ModelKind, m: usize, epochs: usize, init: InducingInit) -> BallRun {
    let mut cfg = ExperimentConfig::default();
    cfg.model.kind = kind;
    cfg.model.inducing = m;
    cfg.training.epochs = epochs;
    cfg.init.inducing = init;
    let mut e = build_experiment(&cfg, Path::new(".")).unwrap();
    let initial_std = e.state.inducing().map(|u| svgpvae::training::inducing_summary(u).std);
    let log = train(&mut e, |_, _, _| Ok(())).unwrap();
    assert_eq!(log.status, RunStatus::Completed, "{kind:?} m={m} aborted");
    BallRun {
        report: evaluate_experiment(&e).unwrap(),
        initial_std,
    }
}

struct Sweep {
    runs: Vec<BallRun>,
    exact: BallRun,
    minutes: f64,
    epochs: usize,
}

fn sweep(epochs: usize) -> Sweep {
    let t = Instant::now();
    let runs = [5, 10, 15, 20]
        .iter()
        .map(|&m| ball_run(ModelKind::Svgpvae, m, epochs, InducingInit::Grid))
        .collect();
    let exact = ball_run(ModelKind::Pearce, 1, epochs, InducingInit::Grid);
    Sweep {
        runs,
        exact,
        minutes: t.elapsed().as_secs_f64() / 60.0,
        epochs,
    }
}

fn moving_ball(s: &Sweep) -> Outcome {
    let rmse: Vec<f64> = s.runs.iter().map(|r| r.report.value).collect();
    let monotone = rmse.windows(2).all(|w| w[1] <= 1.10 * w[0]);
    let exact = s.exact.report.value;
    let r15 = rmse[2];
    let close = (r15 - exact).abs() <= 0.10 * exact;
    let projected = s.minutes * DESK_EPOCHS as f64 / s.epochs as f64;
    let in_time = s.minutes <= 30.0;
    let mut detail = format!(
        "{} epochs x 35 videos: RMSE m=5,10,15,20 = {:.4}, {:.4}, {:.4}, {:.4}; exact {exact:.4}; \
         m=15 vs exact {:+.1}%; 5 runs took {:.1} min",
        s.epochs,
        rmse[0],
        rmse[1],
        rmse[2],
        rmse[3],
        100.0 * (r15 - exact) / exact,
        s.minutes
    );
    if s.epochs < DESK_EPOCHS {
        detail += &format!(
            " (reduced budget; the {DESK_EPOCHS}-epoch budget projects to {projected:.0} min on this machine)"
        );
    }
    outcome(monotone && close && in_time, detail)
}

fn lengthscale(s: &Sweep) -> Outcome {
    let l: Vec<f64> = s.runs.iter().map(|r| r.report.lengthscale).collect();
    let big_ok = l[2..].iter().all(|v| (1.6..=2.4).contains(v));
    let inflated = l[0] > l[2].max(l[3]);
    outcome(
        big_ok && inflated,
        format!(
            "length scale m=5,10,15,20 = {:.3}, {:.3}, {:.3}, {:.3}; exact {:.3}",
            l[0], l[1], l[2], l[3], s.exact.report.lengthscale
        ),
    )
}

fn spreading(epochs: usize) -> Outcome {
    let m = 15;
    let run = ball_run(ModelKind::Svgpvae, m, epochs, InducingInit::Clustered);
    let cfg = ExperimentConfig::default();
    let times = cfg.data.moving_ball.render.times();
    let span = times.get(times.rows() - 1, 0) - times.get(0, 0);
    let grid_gap = span / (m - 1) as f64;
    let s = run.report.inducing.clone().unwrap();
    let init = run.initial_std.unwrap();
    outcome(
        s.min_gap >= 0.5 * grid_gap && s.std >= 3.0 * init,
        format!(
            "{epochs} epochs: min gap {:.3} (need >= {:.3}), std {:.3} vs initial {:.3} ({:.1}x)",
            s.min_gap,
            0.5 * grid_gap,
            s.std,
            init,
            s.std / init
        ),
    )
}

fn rotated() -> Outcome {
    let t = Instant::now();
    let dir = fixtures();
    let mse = |kind: ModelKind| {
        let mut cfg = ExperimentConfig::preset(DataSource::RotatedDigits);
        cfg.model.kind = kind;
        cfg.data.rotated.images = dir.join("images-idx3-ubyte");
        cfg.data.rotated.labels = dir.join("labels-idx1-ubyte");
        let mut e = build_experiment(&cfg, Path::new(".")).unwrap();
        let log = train(&mut e, |_, _, _| Ok(())).unwrap();
        assert_eq!(log.status, RunStatus::Completed, "{kind:?} aborted");
        evaluate_experiment(&e).unwrap().value
    };
    let svgp = mse(ModelKind::Svgpvae);
    let vae = mse(ModelKind::PlainVae);
    let deep = mse(ModelKind::DeepSvigp);
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let rel = (deep - svgp).abs() / svgp;
    outcome(
        svgp < vae && rel <= 0.15 && minutes <= 30.0,
        format!(
            "held-out MSE: SVGP-VAE {svgp:.4}, plain VAE {vae:.4}, deep SVIGP {deep:.4} ({:+.1}% vs SVGP-VAE); {minutes:.1} min",
            100.0 * (deep - svgp) / svgp
        ),
    )
}

fn low_rank() -> Outcome {
    let mut r = rng(1010);
    let (mut sol_err, mut ld_err) = (0.0f64, 0.0f64);
    for p in 1..=5 {
        for q in 1..=5 {
            let k = Kernel::new(
                KernelKind::ProductPeriodicLinear { view_dims: 1 },
                3,
                r.random_range(0.8..2.0),
                r.random_range(0.5..1.5),
            )
            .unwrap();
            let objects = Tensor::from_fn(p, 2, |_, _| r.random_range(-1.0..1.0));
            let views = Tensor::from_fn(q, 1, |i, _| std::f64::consts::TAU * (i + 1) as f64 / q as f64);
            let f = build_low_rank(&k, &objects, &views).unwrap();
            let x = kronecker_inputs(&objects, &views);
            let n = p * q;
            let noise = Tensor::from_fn(n, 1, |_, _| r.random_range(0.1..1.0));
            let rhs = Tensor::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0));
            let (sol, ld) = low_rank_solve(&f, &noise, &rhs).unwrap();
            let c = kmat(&k, &x, &x) + nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(noise.data().to_vec()));
            let ch = c.cholesky().unwrap();
            sol_err = sol_err.max(tensor_dm_diff(&sol, &ch.solve(&dm(&rhs))));
            ld_err = ld_err.max((ld - 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()).abs());
        }
    }
    outcome(
        sol_err <= 1e-8 && ld_err <= 1e-8,
        format!("25 grids: max solve error {sol_err:.1e}, max log-det error {ld_err:.1e}"),
    )
}

fn determinism() -> Outcome {
    let toy = {
        let mut c = ExperimentConfig::preset(DataSource::ToyRegression);
        c.training.epochs = 20;
        c.training.batch_size = 10;
        c.geco.enabled = true;
        c
    };
    let ball = {
        let mut c = ExperimentConfig::default();
        c.training.epochs = 2;
        c.data.moving_ball.videos_per_epoch = 4;
        c
    };
    let rot = {
        let mut c = ExperimentConfig::preset(DataSource::RotatedDigits);
        c.training.epochs = 2;
        c.data.rotated.images = fixtures().join("images-idx3-ubyte");
        c.data.rotated.labels = fixtures().join("labels-idx1-ubyte");
        c
    };
    let run = |cfg: &ExperimentConfig| {
        let mut e = build_experiment(cfg, Path::new(".")).unwrap();
        let log = train(&mut e, |_, _, _| Ok(())).unwrap();
        (log.to_json(), checkpoint::to_container(&e.state).to_bytes())
    };
    let mut same = 0;
    for cfg in [&toy, &ball, &rot] {
        if run(cfg) == run(cfg) {
            same += 1;
        }
    }
    outcome(
        same == 3,
        format!("{same}/3 configs (toy, moving ball, rotated digits) gave identical run logs and checkpoints"),
    )
}

fn main() {
    let epochs = std::env::var("SVGPVAE_ACCEPT_EPOCHS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_EPOCHS);
    let only: Option<BTreeSet<usize>> = std::env::var("SVGPVAE_ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |c: usize| only.as_ref().is_none_or(|s| s.contains(&c));

    let names = [
        "bound chain",
        "full-rank collapse",
        "estimator consistency and bias",
        "vanishing encoder gradient",
        "gradient integrity",
        "moving-ball sweep",
        "length-scale recovery",
        "inducing-point spreading",
        "rotated-digit ordering",
        "low-rank algebra",
        "determinism",
    ];
    let limits = [10.0, 10.0, 60.0, 30.0, 120.0, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, 5.0, f64::INFINITY];
    let mut sweep_cache: Option<Sweep> = None;
    let mut failures = 0;
    println!("acceptance: moving-ball budget {epochs} epochs");
    for c in 1..=11 {
        if !wanted(c) {
            continue;
        }
        let t = Instant::now();
        let o = match c {
            1 => bound_chain(),
            2 => full_rank_collapse(),
            3 => estimators(),
            4 => vanishing(),
            5 => gradients(),
            6 | 7 => {
                let s = sweep_cache.get_or_insert_with(|| sweep(epochs));
                if c == 6 {
                    moving_ball(s)
                } else {
                    lengthscale(s)
                }
            }
            8 => spreading(epochs),
            9 => rotated(),
            10 => low_rank(),
            _ => determinism(),
        };
        let secs = t.elapsed().as_secs_f64();
        let timely = secs <= limits[c - 1];
        let pass = o.pass && timely;
        if !pass {
            failures += 1;
        }
        let timing = if timely {
            format!("{secs:.1}s")
        } else {
            format!("{secs:.1}s exceeds {:.0}s", limits[c - 1])
        };
        println!(
            "criterion {c:>2} {}: {} [{timing}] {}",
            if pass { "PASS" } else { "FAIL" },
            names[c - 1],
            o.detail
        );
    }
    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
