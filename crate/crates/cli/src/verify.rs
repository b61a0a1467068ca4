//! Oracle checks behind `gapgp verify`.

use anyhow::Result;
use clap::ValueEnum;
use gapgp::kernel_protein::{kuu_protein, kyu_protein};
use gapgp::oracle::{self, ArgPair, OracleParams};
use gapgp::specfun::{erf, erfc, faddeeva};
use gapgp::{GreensConfig, KernelParams, MechanisticParams, MrnaKernel, SpaceTimePoint};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{VerificationFailed, VerifyArgs};

/// `quick` uses fewer sample points; tolerances are the same.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub evaluations: usize,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub profile: Profile,
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn check(name: &'static str, value: f64, tolerance: f64, evaluations: usize) -> Check {
    Check { name, pass: value <= tolerance, value, tolerance, evaluations }
}

fn toy_kernel() -> KernelParams {
    KernelParams::new(1.0, 0.3, 0.3).expect("valid toy parameters")
}

fn toy_mech() -> MechanisticParams {
    MechanisticParams::new(1.0, 0.1, 0.01).expect("valid toy parameters")
}

fn special_functions() -> Result<Check> {
    let (mut worst, mut n) = (0.0f64, 0);
    for i in 0..10 {
        for j in 0..10 {
            let z = Complex64::new(-4.0 + 8.0 * i as f64 / 9.0, -4.0 + 8.0 * j as f64 / 9.0);
            let (a, b) = (faddeeva(z)?, oracle::faddeeva_toms680(z));
            worst = worst.max((a - b).norm() / b.norm());
            n += 1;
        }
    }
    for k in 1..=60 {
        let x = 0.05 * k as f64;
        worst = worst.max(rel(erf(x)?, oracle::erf_series(x))).max(rel(erf(-x)?, oracle::erf_series(-x)));
        n += 2;
    }
    for k in 0..=40 {
        let x = 2.0 + 0.5 * k as f64;
        worst = worst.max(rel(erfc(x)?, oracle::erfc_continued_fraction(x)));
        n += 1;
    }
    Ok(check("special_functions", worst, 1e-10, n))
}

fn protein_operator(configs: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..configs {
        let kp = KernelParams::new(rng.random_range(0.5..2.0), rng.random_range(0.2..0.6), rng.random_range(0.2..0.6))?;
        let mech = MechanisticParams::new(rng.random_range(0.5..2.0), rng.random_range(0.0..0.5), rng.random_range(0.0..0.05))?;
        let p = OracleParams { sigma2: kp.sigma2, theta_x: kp.theta_x, theta_t: kp.theta_t, s_rate: mech.s_rate, lambda: mech.lambda, diff: mech.diff, domain_len: 1.0, n_terms: 1 };
        let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let (p1, p2) = (SpaceTimePoint::new(a[0], a[1]), SpaceTimePoint::new(a[2], a[3]));
        let surf = oracle::se_surface(&p);
        let su = kuu_protein(p1, p1, &kp, &mech)?;
        let syu = (kp.sigma2 * su).sqrt();
        let fd_uu = oracle::fd_operator_apply(&surf, ArgPair::Both, &p, 1e-2, a);
        let fd_yu = oracle::fd_operator_apply(&surf, ArgPair::Second, &p, 1e-3, a);
        worst = worst.max((kuu_protein(p1, p2, &kp, &mech)? - fd_uu).abs() / su);
        worst = worst.max((kyu_protein(p1, p2, &kp, &mech)? - fd_yu).abs() / syu);
    }
    Ok(check("protein_operator_fd", worst, 1e-5, 2 * configs))
}

fn mrna_quadrature(xs: &[f64], ts: &[f64]) -> Result<[Check; 2]> {
    let k = MrnaKernel::new(toy_kernel(), toy_mech(), GreensConfig::new(1.0, 5)?)?;
    let p = OracleParams::toy(5);
    let (mut worst, mut n) = (0.0f64, 0);
    let (mut conv, mut scale) = ([0.0f64; 2], [0.0f64; 2]);
    for &x in xs {
        for &t in ts {
            for &xp in xs {
                for &tp in ts {
                    let (a, b) = (SpaceTimePoint::new(x, t), SpaceTimePoint::new(xp, tp));
                    let qy = oracle::quad_kyy((x, t), (xp, tp), &p, 512)?;
                    let qu = oracle::quad_kyu((x, t), (xp, tp), &p, 512)?;
                    worst = worst.max(rel(k.kyy(a, b)?, qy.value)).max(rel(k.kyu(a, b)?, qu.value));
                    for (i, q) in [qy, qu].iter().enumerate() {
                        conv[i] = conv[i].max(q.error_estimate);
                        scale[i] = scale[i].max(q.value.abs());
                    }
                    n += 2;
                }
            }
        }
    }
    let conv = (conv[0] / scale[0]).max(conv[1] / scale[1]);
    Ok([check("mrna_kernel_quadrature", worst, 1e-3, n), check("quadrature_self_convergence", conv, 1e-5, n)])
}

fn boundary_zeroing(m: usize) -> Result<Check> {
    let k = MrnaKernel::new(toy_kernel(), toy_mech(), GreensConfig::new(1.0, 20)?)?;
    let h = 1.0 / (m - 1) as f64;
    let g: Vec<SpaceTimePoint> = (0..m).flat_map(|j| (0..m).map(move |i| SpaceTimePoint::new(i as f64 * h, j as f64 * h))).collect();
    let mut scale_yy = 0.0f64;
    for p in &g {
        scale_yy = scale_yy.max(k.kyy(*p, *p)?);
    }
    let scale_yu = scale_yy.sqrt();
    let (mut worst, mut n) = (0.0f64, 0);
    for p in g.iter().filter(|p| p.x == 0.0 || p.x == 1.0 || p.t == 0.0) {
        for q in &g {
            worst = worst.max(k.kyy(*p, *q)?.abs() / scale_yy).max(k.kyy(*q, *p)?.abs() / scale_yy).max(k.kyu(*p, *q)?.abs() / scale_yu);
            n += 3;
        }
    }
    Ok(check("mrna_boundary_zeroing", worst, 1e-10, n))
}

pub fn checks(profile: Profile) -> Result<Vec<Check>> {
    let (configs, xs, ts, m): (usize, &[f64], &[f64], usize) = match profile {
        Profile::Quick => (20, &[0.3, 0.7], &[0.5, 1.0], 5),
        Profile::Full => (100, &[0.2, 0.4, 0.6, 0.8], &[0.25, 0.5, 0.75, 1.0], 9),
    };
    let mut out = vec![special_functions()?, protein_operator(configs)?];
    out.extend(mrna_quadrature(xs, ts)?);
    out.push(boundary_zeroing(m)?);
    Ok(out)
}

pub fn run(a: &VerifyArgs) -> Result<()> {
    let checks = checks(a.profile)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    for c in &checks {
        eprintln!("{} {}: {:.2e} (tol {:.0e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    let report = VerifyReport { profile: a.profile, pass: failed == 0, checks };
    match &a.out {
        Some(p) => gapgp::dataio::write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if failed > 0 {
        return Err(VerificationFailed(failed).into());
    }
    Ok(())
}
