//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gapgp --test acceptance`. The process exits
//! non-zero when any criterion fails.

use std::time::Instant;

use gapgp::design::{maximin_lhd, LhdConfig};
use gapgp::gp::{self, Channel, ChannelObservations, Conditioned, Hyperparameters, Model, ModelVariant, SpaceTimeDesign};
use gapgp::kernel_mrna::MrnaKernel;
use gapgp::kernel_protein::{kuu_protein, kyu_protein};
use gapgp::metrics::{coverage, q2, smse, ChannelScores};
use gapgp::oracle::{self, ArgPair, OracleParams, PdeGrid};
use gapgp::specfun::{erf, erfc, faddeeva};
use gapgp::{GreensConfig, KernelParams, MechanisticParams, SpaceTimePoint};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn toy_kernel() -> KernelParams {
    KernelParams::new(1.0, 0.3, 0.3).unwrap()
}

fn toy_mech() -> MechanisticParams {
    MechanisticParams::new(1.0, 0.1, 0.01).unwrap()
}

fn toy_model(variant: ModelVariant, n_terms: usize) -> Model {
    Model::new(variant, Hyperparameters::new(toy_mech(), toy_kernel()), GreensConfig::new(1.0, n_terms).unwrap())
}

fn pt(x: f64, t: f64) -> SpaceTimePoint {
    SpaceTimePoint::new(x, t)
}

/// The 4×4×4×4 toy grid of argument combinations.
fn toy_grid() -> Vec<(SpaceTimePoint, SpaceTimePoint)> {
    let xs = [0.2, 0.4, 0.6, 0.8];
    let ts = [0.25, 0.5, 0.75, 1.0];
    let mut out = Vec::new();
    for &x in &xs {
        for &t in &ts {
            for &xp in &xs {
                for &tp in &ts {
                    out.push((pt(x, t), pt(xp, tp)));
                }
            }
        }
    }
    out
}

fn special_functions() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let z = Complex64::new(-4.0 + 8.0 * i as f64 / 9.0, -4.0 + 8.0 * j as f64 / 9.0);
            let (a, b) = (faddeeva(z).unwrap(), oracle::faddeeva_toms680(z));
            worst = worst.max((a - b).norm() / b.norm());
        }
    }
    for y in [0.5, 1.0, 2.0] {
        let w = faddeeva(Complex64::new(0.0, y)).unwrap();
        worst = worst.max(rel(w.re, (y * y).exp() * oracle::erfc_oracle(y)));
    }
    for k in 1..=60 {
        let x = 0.05 * k as f64;
        worst = worst.max(rel(erf(x).unwrap(), oracle::erf_series(x)));
        worst = worst.max(rel(erf(-x).unwrap(), oracle::erf_series(-x)));
    }
    for k in 0..=40 {
        let x = 2.0 + 0.5 * k as f64;
        worst = worst.max(rel(erfc(x).unwrap(), oracle::erfc_continued_fraction(x)));
    }
    Outcome { pass: worst <= 1e-10, detail: format!("worst relative error {worst:.2e} (tol 1e-10)") }
}

fn protein_operator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let kp = KernelParams::new(rng.random_range(0.5..2.0), rng.random_range(0.2..0.6), rng.random_range(0.2..0.6)).unwrap();
        let mech = MechanisticParams::new(rng.random_range(0.5..2.0), rng.random_range(0.0..0.5), rng.random_range(0.0..0.05)).unwrap();
        let p = OracleParams { sigma2: kp.sigma2, theta_x: kp.theta_x, theta_t: kp.theta_t, s_rate: mech.s_rate, lambda: mech.lambda, diff: mech.diff, domain_len: 1.0, n_terms: 1 };
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let (p1, p2) = (pt(a[0], a[1]), pt(a[2], a[3]));
        let surf = oracle::se_surface(&p);
        // errors relative to the kernel's own scale at these parameters
        let su = kuu_protein(p1, p1, &kp, &mech).unwrap();
        let syu = (kp.sigma2 * su).sqrt();
        let fd_uu = oracle::fd_operator_apply(&surf, ArgPair::Both, &p, 1e-2, a);
        let fd_yu = oracle::fd_operator_apply(&surf, ArgPair::Second, &p, 1e-3, a);
        worst = worst.max((kuu_protein(p1, p2, &kp, &mech).unwrap() - fd_uu).abs() / su);
        worst = worst.max((kyu_protein(p1, p2, &kp, &mech).unwrap() - fd_yu).abs() / syu);
    }
    Outcome { pass: worst <= 1e-5, detail: format!("100 configurations, worst scaled error {worst:.2e} (tol 1e-5)") }
}

fn mrna_quadrature() -> Outcome {
    let k = MrnaKernel::new(toy_kernel(), toy_mech(), GreensConfig::new(1.0, 5).unwrap()).unwrap();
    let p = OracleParams::toy(5);
    let (mut worst, mut count) = (0.0f64, 0);
    let (mut conv, mut scale) = ([0.0f64; 2], [0.0f64; 2]);
    for (a, b) in toy_grid() {
        let qy = oracle::quad_kyy((a.x, a.t), (b.x, b.t), &p, 512).unwrap();
        let qu = oracle::quad_kyu((a.x, a.t), (b.x, b.t), &p, 512).unwrap();
        worst = worst.max(rel(k.kyy(a, b).unwrap(), qy.value)).max(rel(k.kyu(a, b).unwrap(), qu.value));
        for (i, q) in [qy, qu].iter().enumerate() {
            conv[i] = conv[i].max(q.error_estimate);
            scale[i] = scale[i].max(q.value.abs());
        }
        count += 2;
    }
    let conv = (conv[0] / scale[0]).max(conv[1] / scale[1]);
    Outcome {
        pass: worst <= 1e-3 && conv <= 1e-5,
        detail: format!("{count} comparisons, worst relative error {worst:.2e} (tol 1e-3); quadrature self-convergence {conv:.1e} of kernel scale (tol 1e-5)"),
    }
}

fn boundary_zeroing() -> Outcome {
    let k = MrnaKernel::new(toy_kernel(), toy_mech(), GreensConfig::new(1.0, 20).unwrap()).unwrap();
    let g: Vec<SpaceTimePoint> = (0..9).flat_map(|j| (0..9).map(move |i| pt(i as f64 / 8.0, j as f64 / 8.0))).collect();
    let on_edge = |p: &SpaceTimePoint| p.x == 0.0 || p.x == 1.0 || p.t == 0.0;
    let scale_yy = g.iter().map(|p| k.kyy(*p, *p).unwrap()).fold(0.0, f64::max);
    let scale_yu = (scale_yy * toy_kernel().sigma2).sqrt();
    let (mut worst, mut n) = (0.0f64, 0);
    for p in g.iter().filter(|p| on_edge(p)) {
        for q in &g {
            worst = worst.max(k.kyy(*p, *q).unwrap().abs() / scale_yy);
            worst = worst.max(k.kyy(*q, *p).unwrap().abs() / scale_yy);
            worst = worst.max(k.kyu(*p, *q).unwrap().abs() / scale_yu);
            n += 3;
        }
    }
    Outcome { pass: worst <= 1e-10, detail: format!("{n} evaluations, worst |k|/scale {worst:.2e} (tol 1e-10)") }
}

fn truncation() -> Outcome {
    let k20 = MrnaKernel::new(toy_kernel(), toy_mech(), GreensConfig::new(1.0, 20).unwrap()).unwrap();
    let k40 = MrnaKernel::new(toy_kernel(), toy_mech(), GreensConfig::new(1.0, 40).unwrap()).unwrap();
    let (mut wyy, mut wyu) = (0.0f64, 0.0f64);
    for (a, b) in toy_grid() {
        wyy = wyy.max(rel(k20.kyy(a, b).unwrap(), k40.kyy(a, b).unwrap()));
        wyu = wyu.max(rel(k20.kyu(a, b).unwrap(), k40.kyu(a, b).unwrap()));
    }
    let worst = wyy.max(wyu);
    Outcome { pass: worst <= 1e-4, detail: format!("worst relative change N=20 vs 40: kyy {wyy:.2e}, kyu {wyu:.2e} (tol 1e-4)") }
}

fn psd() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for variant in [ModelVariant::Mrna, ModelVariant::Protein] {
        let kernel = toy_model(variant, 20).kernel().unwrap();
        for _ in 0..20 {
            let mut draw = || SpaceTimeDesign::new((0..30).map(|_| pt(rng.random(), rng.random())).collect());
            let (du, dy) = (draw(), draw());
            let m = gp::assemble_joint(&kernel, &du, &dy).unwrap().joint();
            let mean_diag = m.diagonal().mean();
            match gp::cholesky_with_jitter(&m) {
                Ok(c) => worst = worst.max(c.jitter / mean_diag),
                Err(_) => failures += 1,
            }
        }
    }
    Outcome {
        pass: failures == 0 && worst <= 1e-6,
        detail: format!("40 joint matrices, {failures} failures, largest jitter {worst:.1e}·mean(diag) (tol 1e-6)"),
    }
}

/// Per seed: truth on the 41×41 grid plus 40-point maximin LHD training sets.
struct ToyRun {
    grid: SpaceTimeDesign,
    train_u: ChannelObservations,
    train_y: ChannelObservations,
    truth_u: Vec<f64>,
    truth_y: Vec<f64>,
}

fn lhd(n: usize, seed: u64) -> SpaceTimeDesign {
    maximin_lhd(&LhdConfig::new(n, 2, seed)).unwrap().to_box((0.0, 1.0), (0.0, 1.0)).unwrap()
}

fn toy_run(model: &Model, seed: u64) -> ToyRun {
    let grid = SpaceTimeDesign::grid(41, 41, (0.0, 1.0), (0.0, 1.0));
    let (lu, ly) = (lhd(40, 2 * seed), lhd(40, 2 * seed + 1));
    let du = SpaceTimeDesign::new(lu.points.iter().chain(&grid.points).copied().collect());
    let dy = SpaceTimeDesign::new(ly.points.iter().chain(&grid.points).copied().collect());
    let (mut u, mut y) = gp::sample_joint(model, &du, &dy, seed).unwrap();
    let truth_u = u.split_off(40);
    let truth_y = y.split_off(40);
    ToyRun {
        grid,
        train_u: ChannelObservations::new(Channel::U, lu, u, 0.0).unwrap(),
        train_y: ChannelObservations::new(Channel::Y, ly, y, 0.0).unwrap(),
        truth_u,
        truth_y,
    }
}

/// Scores on the grid for (u, y) given a training regime.
fn scores(model: &Model, run: &ToyRun, obs: &[ChannelObservations]) -> (ChannelScores, ChannelScores) {
    let c = Conditioned::new(model, obs).unwrap();
    let pu = c.predict(Channel::U, &run.grid).unwrap();
    let py = c.predict(Channel::Y, &run.grid).unwrap();
    (
        ChannelScores::compute(&run.truth_u, &pu.mean, &pu.variance).unwrap(),
        ChannelScores::compute(&run.truth_y, &py.mean, &py.variance).unwrap(),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct RegimeScores {
    both: Vec<(ChannelScores, ChannelScores)>,
    u_only: Vec<(ChannelScores, ChannelScores)>,
    y_only: Vec<(ChannelScores, ChannelScores)>,
}

fn regime_scores(variant: ModelVariant) -> RegimeScores {
    let model = toy_model(variant, 10);
    let mut r = RegimeScores { both: vec![], u_only: vec![], y_only: vec![] };
    for seed in 0..10 {
        let run = toy_run(&model, seed);
        r.both.push(scores(&model, &run, &[run.train_u.clone(), run.train_y.clone()]));
        r.u_only.push(scores(&model, &run, std::slice::from_ref(&run.train_u)));
        r.y_only.push(scores(&model, &run, std::slice::from_ref(&run.train_y)));
    }
    r
}

fn toy_reproduction(all: &[(ModelVariant, RegimeScores)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (variant, r) in all {
        let qu = median(r.both.iter().map(|s| s.0.q2).collect());
        let qy = median(r.both.iter().map(|s| s.1.q2).collect());
        let cu = median(r.both.iter().map(|s| s.0.ca).collect());
        let cy = median(r.both.iter().map(|s| s.1.ca).collect());
        pass &= qu >= 0.95 && qy >= 0.95;
        pass &= [cu, cy].iter().all(|c| (0.45..=0.90).contains(c));
        parts.push(format!("{variant:?}: median Q2 u {qu:.4} y {qy:.4}, CA u {cu:.2} y {cy:.2}"));
    }
    Outcome { pass, detail: format!("{} (need Q2 >= 0.95, CA in [0.45, 0.90])", parts.join("; ")) }
}

fn regime_ordering(all: &[(ModelVariant, RegimeScores)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (variant, r) in all {
        for (name, pick) in [("u", 0usize), ("y", 1usize)] {
            let get = |v: &Vec<(ChannelScores, ChannelScores)>| median(v.iter().map(|s| if pick == 0 { s.0.q2 } else { s.1.q2 }).collect());
            let (b, u, y) = (get(&r.both), get(&r.u_only), get(&r.y_only));
            pass &= b >= u && b >= y;
            parts.push(format!("{variant:?} {name}: both {b:.3} u-only {u:.3} y-only {y:.3}"));
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn metric_anchors() -> Outcome {
    let truth = [0.3, -1.2, 2.5, 4.0, 0.0, 7.25];
    let mu = truth.iter().sum::<f64>() / truth.len() as f64;
    let s = smse(&truth, &[mu; 6]).unwrap();
    let q = q2(&truth, &[mu; 6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000;
    let r: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ca = coverage(&r, &vec![0.0; n], &vec![1.0; n], 1.0).unwrap();
    Outcome {
        pass: s == 1.0 && q == 0.0 && (ca - 0.6827).abs() <= 0.01,
        detail: format!("mean-predictor SMSE {s}, Q2 {q}; Monte Carlo CA {ca:.4} (target 0.6827 ± 0.01)"),
    }
}

fn pde_consistency() -> Outcome {
    let model = toy_model(ModelVariant::Mrna, 10);
    let train = SpaceTimeDesign::grid(15, 15, (0.0, 1.0), (0.0, 1.0));
    let (u, y) = gp::sample_joint(&model, &train, &train, 77).unwrap();
    let obs = [
        ChannelObservations::new(Channel::U, train.clone(), u, 1e-8).unwrap(),
        ChannelObservations::new(Channel::Y, train, y, 1e-8).unwrap(),
    ];
    let grid = PdeGrid { nx: 41, nt: 41, domain_len: 1.0, t_max: 1.0 };
    let q = SpaceTimeDesign::grid(grid.nx, grid.nt, (0.0, 1.0), (0.0, 1.0));
    let c = Conditioned::new(&model, &obs).unwrap();
    let mu = c.predict(Channel::U, &q).unwrap().mean;
    let my = c.predict(Channel::Y, &q).unwrap().mean;
    let m = model.hyper.mech;
    let y_cn = oracle::pde_solve(&mu, &grid, m.s_rate, m.lambda, m.diff).unwrap();
    let num: f64 = y_cn.iter().zip(&my).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = my.iter().map(|b| b * b).sum();
    let e = (num / den).sqrt();
    Outcome { pass: e <= 0.10, detail: format!("relative L2 discrepancy {e:.3} (tol 0.10)") }
}

fn report(id: usize, name: &str, limit_s: Option<f64>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = limit_s.is_none_or(|l| secs <= l);
    let pass = o.pass && in_time;
    let limit = limit_s.map(|l| format!(" (limit {l} s)")).unwrap_or_default();
    println!("criterion {id:>2} {}: {name}: {}; {secs:.2} s{limit}", if pass { "PASS" } else { "FAIL" }, o.detail);
    pass
}

fn main() {
    let mut ok = true;
    ok &= report(1, "special functions vs independent oracles", Some(1.0), special_functions);
    ok &= report(2, "GP-Protein kernels vs finite-difference operator", Some(10.0), protein_operator);
    ok &= report(3, "GP-mRNA kernels (N=5) vs quadrature", Some(300.0), mrna_quadrature);
    ok &= report(4, "GP-mRNA boundary/initial zeroing", None, boundary_zeroing);
    ok &= report(5, "truncation stability N=20 vs N=40", None, truncation);
    ok &= report(6, "joint covariance factorisation", None, psd);
    let mut all = Vec::new();
    ok &= report(7, "toy experiment reproduction (includes sampling for 8)", Some(600.0), || {
        all = [ModelVariant::Mrna, ModelVariant::Protein].into_iter().map(|v| (v, regime_scores(v))).collect();
        toy_reproduction(&all)
    });
    ok &= report(8, "regime ordering", None, || regime_ordering(&all));
    ok &= report(9, "metric anchors", None, metric_anchors);
    ok &= report(10, "PDE consistency of posterior means", None, pde_consistency);
    if !ok {
        std::process::exit(1);
    }
}
