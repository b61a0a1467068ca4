use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gapgp::dataio::{self, AffineMap2, DomainBox, ExpressionRecord, LoadOptions, ModelSpec, Report};
use gapgp::design::{maximin_lhd, LhdConfig};
use gapgp::gp::{self, default_nugget, ChannelObservations, Conditioned, Hyperparameters, Model};
use gapgp::metrics::ChannelScores;
use gapgp::{Channel, SpaceTimeDesign};
use serde::Serialize;

use crate::config::{parse_regime, FileConfig, Regime};
use crate::{DataArgs, DesignArgs, EvalArgs, FitCmd, PredictArgs, SampleArgs};

/// Green's-function terms unless overridden. Shared by every command so that
/// data drawn by `sample` is analysed with the same covariance.
const CLI_TERMS: usize = 10;
const BOTH: [Channel; 2] = [Channel::U, Channel::Y];

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => dataio::write_json(p, value).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn spec(model: &Model) -> ModelSpec {
    ModelSpec { variant: model.variant, domain_len: model.greens.domain_len, n_terms: model.greens.n_terms }
}

fn load_records(path: &Path, data: &DataArgs, file: &FileConfig, domain_len: f64) -> Result<Vec<ExpressionRecord>> {
    let opts = LoadOptions {
        x_range: (0.0, domain_len.max(100.0)),
        exclude_time: data.exclude_time.or(file.exclude_time.map(|[a, b]| (a, b))),
        strict: data.strict,
    };
    let report = dataio::load_csv(path, &opts).with_context(|| format!("loading {}", path.display()))?;
    if !report.rejected.is_empty() {
        eprintln!("{}: skipped {} of {} rows (first: line {}: {})", path.display(), report.rejected.len(), report.rows, report.rejected[0].line, report.rejected[0].reason);
    }
    let records: Vec<_> = match &data.gene {
        Some(g) => report.records.into_iter().filter(|r| &r.gene == g).collect(),
        None => report.records,
    };
    if records.is_empty() {
        bail!("{}: no usable rows", path.display());
    }
    Ok(records)
}

/// Optionally maps the records' bounding box onto `[0, l] × [0, 1]`.
fn prepare(records: Vec<ExpressionRecord>, normalize: bool, domain_len: f64) -> Result<(Vec<ExpressionRecord>, Option<AffineMap2>)> {
    if !normalize {
        return Ok((records, None));
    }
    let source = DomainBox::bounding(&records)?;
    let target = DomainBox::new((0.0, domain_len), (0.0, 1.0))?;
    let (out, map) = dataio::normalize_domain(&records, &source, &target)?;
    Ok((out, Some(map)))
}

/// Observations of the channels allowed by `regime`; nuggets default to a
/// small fraction of each channel's sample variance.
fn build_obs(records: &[ExpressionRecord], regime: Regime, nuggets: [Option<f64>; 2]) -> Result<Vec<ChannelObservations>> {
    let mut obs = Vec::new();
    for (ch, explicit) in BOTH.into_iter().zip(nuggets) {
        if !regime.uses(ch) || !records.iter().any(|r| r.channel == ch) {
            continue;
        }
        let values: Vec<f64> = records.iter().filter(|r| r.channel == ch).map(|r| r.value).collect();
        obs.push(dataio::observations(records, ch, None, explicit.unwrap_or_else(|| default_nugget(&values)))?);
    }
    if obs.is_empty() {
        bail!("no training rows for regime {regime:?}");
    }
    Ok(obs)
}

fn with_nuggets(mut hyper: Hyperparameters, obs: &[ChannelObservations]) -> Hyperparameters {
    for o in obs {
        match o.channel {
            Channel::U => hyper.nugget_u = o.nugget,
            Channel::Y => hyper.nugget_y = o.nugget,
        }
    }
    hyper
}

fn design_of(records: &[ExpressionRecord], ch: Channel) -> (SpaceTimeDesign, Vec<f64>) {
    let sel = records.iter().filter(|r| r.channel == ch);
    (SpaceTimeDesign::new(sel.clone().map(|r| r.point()).collect()), sel.map(|r| r.value).collect())
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let r = a.model.resolve(CLI_TERMS)?;
    let f = &r.file;
    let nx = a.nx.or(f.nx).unwrap_or(41);
    let nt = a.nt.or(f.nt).unwrap_or(41);
    let t_max = a.t_max.or(f.t_max).unwrap_or(1.0);
    let n_obs = a.n_obs.or(f.n_obs).unwrap_or(40);
    if nx < 2 || nt < 2 || !(t_max > 0.0 && t_max.is_finite()) {
        bail!("grid needs nx, nt >= 2 and t_max > 0");
    }
    let l = r.model.greens.domain_len;
    let grid = SpaceTimeDesign::grid(nx, nt, (0.0, l), (0.0, t_max));
    let lhd = |seed: u64| -> Result<SpaceTimeDesign> { Ok(maximin_lhd(&LhdConfig::new(n_obs, 2, seed))?.to_box((0.0, l), (0.0, t_max))?) };
    let (lu, ly) = (lhd(2 * r.seed)?, lhd(2 * r.seed + 1)?);
    let join = |d: &SpaceTimeDesign| SpaceTimeDesign::new(d.points.iter().chain(&grid.points).copied().collect());
    let (u, y) = gp::sample_joint(&r.model, &join(&lu), &join(&ly), r.seed)?;

    let rec = |ch: Channel, p: &gapgp::SpaceTimePoint, v: f64| ExpressionRecord { gene: "synthetic".into(), channel: ch, x: p.x, t: p.t, value: v };
    let data: Vec<_> = lu.points.iter().zip(&u).map(|(p, v)| rec(Channel::U, p, *v)).chain(ly.points.iter().zip(&y).map(|(p, v)| rec(Channel::Y, p, *v))).collect();
    let truth: Vec<_> = grid
        .points
        .iter()
        .zip(&u[n_obs..])
        .map(|(p, v)| rec(Channel::U, p, *v))
        .chain(grid.points.iter().zip(&y[n_obs..]).map(|(p, v)| rec(Channel::Y, p, *v)))
        .collect();
    dataio::save_csv(&a.out_data, &data).with_context(|| format!("writing {}", a.out_data.display()))?;
    dataio::save_csv(&a.out_truth, &truth).with_context(|| format!("writing {}", a.out_truth.display()))?;
    Ok(())
}

pub fn design(a: &DesignArgs) -> Result<()> {
    let cfg = LhdConfig { sa_iterations: a.iterations, ..LhdConfig::new(a.n, 2, a.seed) };
    let d = maximin_lhd(&cfg)?.to_box(a.x_range, a.t_range)?;
    dataio::save_design(&a.out, &d).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

pub fn fit(a: &FitCmd) -> Result<()> {
    let r = a.model.resolve(CLI_TERMS)?;
    let regime = parse_regime(a.data.regime, &r.file)?;
    let l = r.model.greens.domain_len;
    let (records, map) = prepare(load_records(&a.data.data, &a.data, &r.file, l)?, a.normalize, l)?;
    let obs = build_obs(&records, regime, [r.nugget_u, r.nugget_y])?;
    let mut hyper = with_nuggets(r.model.hyper, &obs);
    hyper.frozen = a.fit.mask(&r.file)?;
    let model = r.model.with_hyper(hyper);
    let res = gp::fit(&model, &obs, &a.fit.options(&r.file, r.seed)?)?;
    eprintln!("log marginal likelihood {:.6} -> {:.6}", res.initial_loglik, res.loglik);
    let mut report = Report::from_fit(spec(&model), &res);
    report.domain_map = map;
    emit(a.out.as_deref(), &report)
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let fitted: Report = dataio::read_json(&a.fit).with_context(|| format!("reading {}", a.fit.display()))?;
    let model = Model::new(fitted.model.variant, fitted.hyperparameters, fitted.model.greens()?);
    let no_file = FileConfig::default();
    let l = model.greens.domain_len;
    let raw = load_records(&a.data.data, &a.data, &no_file, l)?;
    let map = fitted.domain_map;
    let forward = |recs: &[ExpressionRecord]| -> Vec<ExpressionRecord> {
        match map {
            None => recs.to_vec(),
            Some(m) => recs
                .iter()
                .map(|r| {
                    let (x, t) = m.apply(r.x, r.t);
                    ExpressionRecord { x, t, ..r.clone() }
                })
                .collect(),
        }
    };
    let regime = parse_regime(a.data.regime, &no_file)?;
    let hyper = model.hyper;
    let obs = build_obs(&forward(&raw), regime, [Some(hyper.nugget_u), Some(hyper.nugget_y)])?;
    let cond = Conditioned::new(&model, &obs)?;
    let channels: Vec<Channel> = if a.channels.is_empty() { BOTH.to_vec() } else { a.channels.clone() };

    let truth = match &a.truth {
        Some(p) => Some(load_records(p, &a.data, &no_file, l)?),
        None => None,
    };
    let shared = match (&a.query, &truth) {
        (Some(q), _) => Some(dataio::load_design(q).with_context(|| format!("reading {}", q.display()))?),
        (None, Some(_)) => None,
        (None, None) => {
            let (nx, nt) = a.grid.unwrap_or((41, 41));
            let b = DomainBox::bounding(&raw)?;
            Some(SpaceTimeDesign::grid(nx, nt, b.x, b.t))
        }
    };

    let mut report = Report { model: fitted.model, hyperparameters: hyper, loglik: fitted.loglik, metrics: BTreeMap::new(), posterior: vec![], trace: vec![], domain_map: map };
    for ch in channels {
        let (design, values) = match (&shared, &truth) {
            (Some(d), _) => (d.clone(), None),
            (None, Some(t)) => {
                let (d, v) = design_of(t, ch);
                if d.is_empty() {
                    continue;
                }
                (d, Some(v))
            }
            (None, None) => unreachable!(),
        };
        let mapped = map.map_or_else(|| design.clone(), |m| m.apply_design(&design));
        let mut field = cond.predict(ch, &mapped)?;
        field.design = design;
        if let Some(v) = values {
            report.metrics.insert(ch, ChannelScores::compute(&v, &field.mean, &field.variance)?);
        }
        report.posterior.push(field);
    }
    emit(a.out.as_deref(), &report)
}

#[derive(Debug, Serialize)]
struct EvalRun {
    seed: u64,
    n_train: usize,
    n_test: usize,
    hyperparameters: Hyperparameters,
    loglik: Option<f64>,
    metrics: BTreeMap<Channel, ChannelScores>,
}

#[derive(Debug, Default, Serialize)]
struct Aggregate {
    q2_mean: f64,
    q2_std: f64,
    ca_mean: f64,
    ca_std: f64,
    smse_mean: f64,
    smse_std: f64,
    runs: usize,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    model: ModelSpec,
    regime: Regime,
    train_frac: f64,
    refit: bool,
    runs: Vec<EvalRun>,
    aggregate: BTreeMap<Channel, Aggregate>,
    domain_map: Option<AffineMap2>,
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn aggregate(runs: &[EvalRun]) -> BTreeMap<Channel, Aggregate> {
    let mut out = BTreeMap::new();
    for ch in BOTH {
        let scores: Vec<ChannelScores> = runs.iter().filter_map(|r| r.metrics.get(&ch).copied()).collect();
        if scores.is_empty() {
            continue;
        }
        let (q2_mean, q2_std) = mean_std(&scores.iter().map(|s| s.q2).collect::<Vec<_>>());
        let (ca_mean, ca_std) = mean_std(&scores.iter().map(|s| s.ca).collect::<Vec<_>>());
        let (smse_mean, smse_std) = mean_std(&scores.iter().map(|s| s.smse).collect::<Vec<_>>());
        out.insert(ch, Aggregate { q2_mean, q2_std, ca_mean, ca_std, smse_mean, smse_std, runs: scores.len() });
    }
    out
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let r = a.model.resolve(CLI_TERMS)?;
    let regime = parse_regime(a.data.regime, &r.file)?;
    let train_frac = a.train_frac.or(r.file.train_frac).unwrap_or(0.30);
    let seeds = a.seeds.or(r.file.seeds).unwrap_or(1);
    if seeds == 0 {
        return Err(gapgp::Error::Config("eval needs at least one seed".into()).into());
    }
    let l = r.model.greens.domain_len;
    let (records, map) = prepare(load_records(&a.data.data, &a.data, &r.file, l)?, a.normalize, l)?;
    let mask = a.fit.mask(&r.file)?;

    let mut runs = Vec::with_capacity(seeds);
    for i in 0..seeds as u64 {
        let seed = r.seed + i;
        let (train_idx, test_idx) = dataio::split_train_test(records.len(), train_frac, seed)?;
        let train: Vec<_> = train_idx.iter().map(|&k| records[k].clone()).filter(|rec| regime.uses(rec.channel)).collect();
        let test: Vec<_> = test_idx.iter().map(|&k| records[k].clone()).collect();
        let obs = build_obs(&train, regime, [r.nugget_u, r.nugget_y])?;
        let mut hyper = with_nuggets(r.model.hyper, &obs);
        hyper.frozen = mask;
        let mut model = r.model.with_hyper(hyper);
        let mut loglik = None;
        if a.refit {
            let res = gp::fit(&model, &obs, &a.fit.options(&r.file, seed)?).with_context(|| format!("split seed {seed}"))?;
            loglik = Some(res.loglik);
            model = model.with_hyper(res.hyper);
        }
        let cond = Conditioned::new(&model, &obs).with_context(|| format!("split seed {seed}"))?;
        let mut metrics = BTreeMap::new();
        for ch in BOTH {
            let (design, truth) = design_of(&test, ch);
            if design.len() < 2 {
                continue;
            }
            let field = cond.predict(ch, &design)?;
            metrics.insert(ch, ChannelScores::compute(&truth, &field.mean, &field.variance).with_context(|| format!("scoring channel {} (seed {seed})", ch.as_str()))?);
        }
        eprintln!(
            "seed {seed}: {}",
            metrics.iter().map(|(c, s)| format!("{} Q2 {:.4} CA {:.3}", c.as_str(), s.q2, s.ca)).collect::<Vec<_>>().join(", ")
        );
        runs.push(EvalRun { seed, n_train: train.len(), n_test: test.len(), hyperparameters: model.hyper, loglik, metrics });
    }
    let report = EvalReport { model: spec(&r.model), regime, train_frac, refit: a.refit, aggregate: aggregate(&runs), runs, domain_map: map };
    emit(a.out.as_deref(), &report)
}
