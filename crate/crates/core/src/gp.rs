//! Joint Gaussian process over the mRNA (`U`) and protein (`Y`) channels.
//!
//! Both model variants expose the same three covariance functions
//! `k_uu`, `k_yu`, `k_yy`; everything here (assembly, sampling, conditioning
//! on any subset of channels, the marginal likelihood and its maximisation)
//! is written once against [`JointKernel`].

use std::cell::RefCell;
use std::collections::HashMap;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_mrna::{GreensConfig, MechanisticParams, MrnaKernel};
use crate::kernel_protein::ProteinKernel;
use crate::kernel_se::{KernelParams, SpaceTimePoint};

type Point = SpaceTimePoint<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// mRNA (driving force).
    U,
    /// Protein (output).
    Y,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::U => "u",
            Channel::Y => "y",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "u" | "mrna" => Ok(Channel::U),
            "y" | "protein" => Ok(Channel::Y),
            other => Err(Error::Config(format!("unknown channel {other:?} (expected u or y)"))),
        }
    }
}

/// Ordered list of `(x, t)` locations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpaceTimeDesign {
    pub points: Vec<Point>,
}

impl SpaceTimeDesign {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    /// `nx × nt` equispaced grid, x varying fastest.
    pub fn grid(nx: usize, nt: usize, x_range: (f64, f64), t_range: (f64, f64)) -> Self {
        let lin = |n: usize, (a, b): (f64, f64), i: usize| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
        let mut points = Vec::with_capacity(nx * nt);
        for j in 0..nt {
            for i in 0..nx {
                points.push(Point::new(lin(nx, x_range, i), lin(nt, t_range, j)));
            }
        }
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { points: idx.iter().map(|&i| self.points[i]).collect() }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.points.iter().position(|p| !(p.x.is_finite() && p.t.is_finite())) {
            Some(i) => Err(Error::Domain { func: "design", arg: format!("point {i} is not finite") }),
            None => Ok(()),
        }
    }
}

/// Observed values of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelObservations {
    pub channel: Channel,
    pub design: SpaceTimeDesign,
    pub values: Vec<f64>,
    /// Observation-noise variance added to the diagonal.
    pub nugget: f64,
}

impl ChannelObservations {
    pub fn new(channel: Channel, design: SpaceTimeDesign, values: Vec<f64>, nugget: f64) -> Result<Self> {
        if design.len() != values.len() {
            return Err(Error::Shape(format!("{} design points but {} values", design.len(), values.len())));
        }
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::param(format!("nugget must be >= 0, got {nugget}")));
        }
        design.check_finite()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain { func: "observations", arg: "non-finite value".into() });
        }
        Ok(Self { channel, design, values, nugget })
    }
}

/// 1e-6 × the sample variance of `values`; the default nugget for real data.
pub fn default_nugget(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    1e-6 * values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Prior on the mRNA, protein covariance via the Green's function.
    Mrna,
    /// Prior on the protein, mRNA covariance via the differential operator.
    Protein,
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mrna" | "gp-mrna" => Ok(ModelVariant::Mrna),
            "protein" | "gp-protein" => Ok(ModelVariant::Protein),
            other => Err(Error::Config(format!("unknown model {other:?} (expected mrna or protein)"))),
        }
    }
}

/// Hyperparameter fields, in the order used by the optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    SRate,
    Lambda,
    Diff,
    Sigma2,
    ThetaX,
    ThetaT,
    NuggetU,
    NuggetY,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::SRate,
        Field::Lambda,
        Field::Diff,
        Field::Sigma2,
        Field::ThetaX,
        Field::ThetaT,
        Field::NuggetU,
        Field::NuggetY,
    ];
}

/// Per-field "keep fixed" flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenMask {
    pub s_rate: bool,
    pub lambda: bool,
    pub diff: bool,
    pub sigma2: bool,
    pub theta_x: bool,
    pub theta_t: bool,
    pub nugget_u: bool,
    pub nugget_y: bool,
}

impl Default for FrozenMask {
    /// Everything free except the nuggets.
    fn default() -> Self {
        Self {
            s_rate: false,
            lambda: false,
            diff: false,
            sigma2: false,
            theta_x: false,
            theta_t: false,
            nugget_u: true,
            nugget_y: true,
        }
    }
}

impl FrozenMask {
    /// Mechanistic constants and nuggets fixed; σ², θx, θt estimated.
    pub fn mechanistic() -> Self {
        Self { s_rate: true, lambda: true, diff: true, ..Self::default() }
    }

    pub fn is_frozen(&self, f: Field) -> bool {
        match f {
            Field::SRate => self.s_rate,
            Field::Lambda => self.lambda,
            Field::Diff => self.diff,
            Field::Sigma2 => self.sigma2,
            Field::ThetaX => self.theta_x,
            Field::ThetaT => self.theta_t,
            Field::NuggetU => self.nugget_u,
            Field::NuggetY => self.nugget_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub mech: MechanisticParams<f64>,
    pub kernel: KernelParams<f64>,
    pub nugget_u: f64,
    pub nugget_y: f64,
    pub frozen: FrozenMask,
}

impl Hyperparameters {
    pub fn new(mech: MechanisticParams<f64>, kernel: KernelParams<f64>) -> Self {
        Self { mech, kernel, nugget_u: 0.0, nugget_y: 0.0, frozen: FrozenMask::default() }
    }

    pub fn get(&self, f: Field) -> f64 {
        match f {
            Field::SRate => self.mech.s_rate,
            Field::Lambda => self.mech.lambda,
            Field::Diff => self.mech.diff,
            Field::Sigma2 => self.kernel.sigma2,
            Field::ThetaX => self.kernel.theta_x,
            Field::ThetaT => self.kernel.theta_t,
            Field::NuggetU => self.nugget_u,
            Field::NuggetY => self.nugget_y,
        }
    }

    pub fn set(&mut self, f: Field, v: f64) {
        match f {
            Field::SRate => self.mech.s_rate = v,
            Field::Lambda => self.mech.lambda = v,
            Field::Diff => self.mech.diff = v,
            Field::Sigma2 => self.kernel.sigma2 = v,
            Field::ThetaX => self.kernel.theta_x = v,
            Field::ThetaT => self.kernel.theta_t = v,
            Field::NuggetU => self.nugget_u = v,
            Field::NuggetY => self.nugget_y = v,
        }
    }

    pub fn nugget(&self, c: Channel) -> f64 {
        match c {
            Channel::U => self.nugget_u,
            Channel::Y => self.nugget_y,
        }
    }

    pub fn free_fields(&self) -> Vec<Field> {
        Field::ALL.iter().copied().filter(|f| !self.frozen.is_frozen(*f)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.mech.validate()?;
        self.kernel.validate()?;
        for (name, v) in [("nugget_u", self.nugget_u), ("nugget_y", self.nugget_y)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Variant, hyperparameters and (for the mRNA variant) series settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub variant: ModelVariant,
    pub hyper: Hyperparameters,
    pub greens: GreensConfig<f64>,
}

impl Model {
    pub fn new(variant: ModelVariant, hyper: Hyperparameters, greens: GreensConfig<f64>) -> Self {
        Self { variant, hyper, greens }
    }

    pub fn kernel(&self) -> Result<JointKernel> {
        self.hyper.validate()?;
        Ok(match self.variant {
            ModelVariant::Mrna => JointKernel::Mrna(MrnaKernel::new(self.hyper.kernel, self.hyper.mech, self.greens)?),
            ModelVariant::Protein => JointKernel::Protein(ProteinKernel::new(self.hyper.kernel, self.hyper.mech)?),
        })
    }

    pub fn with_hyper(&self, hyper: Hyperparameters) -> Self {
        Self { hyper, ..*self }
    }
}

/// Covariance functions of one parameterised model.
#[derive(Debug, Clone)]
pub enum JointKernel {
    Mrna(MrnaKernel<f64>),
    Protein(ProteinKernel<f64>),
}

impl JointKernel {
    /// `cov(a(p), b(q))`.
    pub fn cov(&self, a: Channel, p: Point, b: Channel, q: Point) -> Result<f64> {
        match (self, a, b) {
            (JointKernel::Mrna(k), Channel::U, Channel::U) => Ok(k.kuu(p, q)),
            (JointKernel::Mrna(k), Channel::Y, Channel::Y) => k.kyy(p, q),
            (JointKernel::Mrna(k), Channel::Y, Channel::U) => k.kyu(p, q),
            (JointKernel::Mrna(k), Channel::U, Channel::Y) => k.kyu(q, p),
            (JointKernel::Protein(k), _, _) => {
                let v = match (a, b) {
                    (Channel::U, Channel::U) => k.kuu(p, q),
                    (Channel::Y, Channel::Y) => k.kyy(p, q),
                    (Channel::Y, Channel::U) => k.kyu(p, q),
                    (Channel::U, Channel::Y) => k.kyu(q, p),
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Overflow { context: format!("protein-prior k_{}{}", a.as_str(), b.as_str()) })
                }
            }
        }
    }

    /// Covariance matrix between two labelled point lists, rows in parallel.
    pub fn cross_matrix(&self, rows: &[(Channel, Point)], cols: &[(Channel, Point)]) -> Result<DMatrix<f64>> {
        if let JointKernel::Mrna(k) = self {
            return mrna_matrix(k, rows, cols, false, TIME_CACHE_LIMIT);
        }
        let data: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|&(a, p)| cols.iter().map(|&(b, q)| self.cov(a, p, b, q)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| data[i][j]))
    }

    /// Symmetric covariance of a labelled point list; upper triangle evaluated and mirrored.
    pub fn gram(&self, pts: &[(Channel, Point)]) -> Result<DMatrix<f64>> {
        if let JointKernel::Mrna(k) = self {
            return mrna_matrix(k, pts, pts, true, TIME_CACHE_LIMIT);
        }
        let n = pts.len();
        let data: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| self.cov(pts[i].0, pts[i].1, pts[j].0, pts[j].1)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(mirror(n, &data))
    }

    /// Prior variances at labelled points.
    pub fn diag(&self, pts: &[(Channel, Point)]) -> Result<Vec<f64>> {
        pts.par_iter().map(|&(c, p)| self.cov(c, p, c, p)).collect()
    }
}

fn mirror(n: usize, upper: &[Vec<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            m[(i, i + off)] = *v;
            m[(i + off, i)] = *v;
        }
    }
    m
}

/// Distinct times of the points on one channel, and each point's slot in that list.
fn time_slots(pts: &[(Channel, Point)], ch: Channel) -> (Vec<f64>, Vec<usize>) {
    let mut seen = HashMap::new();
    let mut uniq = Vec::new();
    let slots = pts
        .iter()
        .map(|(c, p)| {
            if *c != ch {
                return usize::MAX;
            }
            *seen.entry(p.t.to_bits()).or_insert_with(|| {
                uniq.push(p.t);
                uniq.len() - 1
            })
        })
        .collect();
    (uniq, slots)
}

/// Upper bound on cached time factors (in f64 values) per assembled matrix.
const TIME_CACHE_LIMIT: usize = 1 << 23;

/// Time factors for every pair of distinct (row time, column time), or none when too large.
fn time_cache(rt: &[f64], ct: &[f64], width: usize, limit: usize, f: impl Fn(f64, f64) -> Result<Vec<f64>> + Sync) -> Result<Option<Vec<Vec<f64>>>> {
    if rt.len() * ct.len() * width > limit {
        return Ok(None);
    }
    let nc = ct.len();
    (0..rt.len() * nc).into_par_iter().map(|i| f(rt[i / nc], ct[i % nc])).collect::<Result<Vec<_>>>().map(Some)
}

/// GP-mRNA assembly: the special-function work of each entry depends only on
/// the two times, so it is shared between all entries with the same time pair.
fn mrna_matrix(
    k: &MrnaKernel<f64>,
    rows: &[(Channel, Point)],
    cols: &[(Channel, Point)],
    symmetric: bool,
    cache_limit: usize,
) -> Result<DMatrix<f64>> {
    let n_terms = k.greens_config().n_terms;
    let vectors = |pts: &[(Channel, Point)]| -> Result<Vec<Vec<f64>>> {
        pts.par_iter()
            .map(|(c, p)| match c {
                Channel::Y => k.sine_vector(p.x),
                Channel::U => k.kyu_space_vector(p.x),
            })
            .collect()
    };
    let rv = vectors(rows)?;
    let cv = if symmetric { rv.clone() } else { vectors(cols)? };
    let (ry, ry_slot) = time_slots(rows, Channel::Y);
    let (ru, ru_slot) = time_slots(rows, Channel::U);
    let (cy, cy_slot) = time_slots(cols, Channel::Y);
    let (cu, cu_slot) = time_slots(cols, Channel::U);
    let yy = time_cache(&ry, &cy, n_terms * n_terms, cache_limit, |a, b| k.kyy_time_block(a, b))?;
    let yu = time_cache(&ry, &cu, n_terms, cache_limit, |a, b| k.kyu_time_vector(a, b))?;
    let uy = if symmetric { None } else { time_cache(&cy, &ru, n_terms, cache_limit, |a, b| k.kyu_time_vector(a, b))? };

    let entry = |i: usize, j: usize| -> Result<f64> {
        let ((a, p), (b, q)) = (rows[i], cols[j]);
        match (a, b) {
            (Channel::U, Channel::U) => Ok(k.kuu(p, q)),
            (Channel::Y, Channel::Y) => match &yy {
                Some(c) => Ok(k.kyy_from_parts(&rv[i], &c[ry_slot[i] * cy.len() + cy_slot[j]], &cv[j])),
                None => Ok(k.kyy_from_parts(&rv[i], &k.kyy_time_block(p.t, q.t)?, &cv[j])),
            },
            (Channel::Y, Channel::U) => match &yu {
                Some(c) => Ok(k.kyu_from_parts(&rv[i], &c[ry_slot[i] * cu.len() + cu_slot[j]], &cv[j])),
                None => Ok(k.kyu_from_parts(&rv[i], &k.kyu_time_vector(p.t, q.t)?, &cv[j])),
            },
            (Channel::U, Channel::Y) => match &uy {
                Some(c) => Ok(k.kyu_from_parts(&cv[j], &c[cy_slot[j] * ru.len() + ru_slot[i]], &rv[i])),
                None => Ok(k.kyu_from_parts(&cv[j], &k.kyu_time_vector(q.t, p.t)?, &rv[i])),
            },
        }
    };
    if symmetric {
        let n = rows.len();
        let data: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| (i..n).map(|j| entry(i, j)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
        Ok(mirror(n, &data))
    } else {
        let data: Vec<Vec<f64>> =
            (0..rows.len()).into_par_iter().map(|i| (0..cols.len()).map(|j| entry(i, j)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| data[i][j]))
    }
}

fn labelled(c: Channel, d: &SpaceTimeDesign) -> impl Iterator<Item = (Channel, Point)> + '_ {
    d.points.iter().map(move |p| (c, *p))
}

/// The three blocks of the joint covariance over a `U` design and a `Y` design.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlocks {
    pub k_uu: DMatrix<f64>,
    /// Rows: `Y` design, columns: `U` design.
    pub k_yu: DMatrix<f64>,
    pub k_yy: DMatrix<f64>,
}

impl CovarianceBlocks {
    /// `[[K_uu, K_yuᵀ], [K_yu, K_yy]]`.
    pub fn joint(&self) -> DMatrix<f64> {
        let nu = self.k_uu.nrows();
        let ny = self.k_yy.nrows();
        let mut m = DMatrix::zeros(nu + ny, nu + ny);
        m.view_mut((0, 0), (nu, nu)).copy_from(&self.k_uu);
        m.view_mut((nu, nu), (ny, ny)).copy_from(&self.k_yy);
        m.view_mut((nu, 0), (ny, nu)).copy_from(&self.k_yu);
        m.view_mut((0, nu), (nu, ny)).copy_from(&self.k_yu.transpose());
        m
    }
}

pub fn assemble_joint(kernel: &JointKernel, du: &SpaceTimeDesign, dy: &SpaceTimeDesign) -> Result<CovarianceBlocks> {
    let pu: Vec<_> = labelled(Channel::U, du).collect();
    let py: Vec<_> = labelled(Channel::Y, dy).collect();
    Ok(CovarianceBlocks { k_uu: kernel.gram(&pu)?, k_yu: kernel.cross_matrix(&py, &pu)?, k_yy: kernel.gram(&py)? })
}

/// Lower Cholesky factor of `m + jitter·I`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    /// Diagonal jitter actually added (0 when `m` factorised as is).
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn l(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    /// log |m + jitter·I|.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky with escalating diagonal jitter.
///
/// Tries `m` itself, then `m + j·I` with `j = 1e-10·mean(diag)` growing
/// tenfold up to `1e-4·mean(diag)`.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if let Some(factor) = Cholesky::new(m.clone()) {
        return Ok(JitteredCholesky { factor, jitter: 0.0 });
    }
    let n = m.nrows();
    let mean_diag = if n == 0 { 1.0 } else { m.diagonal().sum() / n as f64 };
    let scale = if mean_diag > 0.0 && mean_diag.is_finite() { mean_diag } else { 1.0 };
    let mut rel = 1e-10;
    let mut last = 0.0;
    while rel <= 1e-4 * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(shifted) {
            return Ok(JitteredCholesky { factor, jitter });
        }
        last = jitter;
        rel *= 10.0;
    }
    let min_eigenvalue = if m.iter().all(|v| v.is_finite()) {
        SymmetricEigen::new(m.clone()).eigenvalues.min()
    } else {
        f64::NAN
    };
    Err(Error::NotPositiveDefinite { jitter: last, min_eigenvalue })
}

/// One draw of `(u, y)` from the zero-mean joint GP at the given designs.
///
/// Points whose prior variance is zero to rounding (protein values on the
/// boundary or at t = 0 for the mRNA-prior model) are set to exactly 0 and
/// excluded from the factorisation, so they carry no jitter noise.
pub fn sample_joint(model: &Model, du: &SpaceTimeDesign, dy: &SpaceTimeDesign, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let kernel = model.kernel()?;
    let pts: Vec<_> = labelled(Channel::U, du).chain(labelled(Channel::Y, dy)).collect();
    let k = kernel.gram(&pts)?;
    let max_diag = k.diagonal().iter().fold(0.0f64, |a, v| a.max(*v));
    let live: Vec<usize> = (0..pts.len()).filter(|&i| k[(i, i)] > 1e-12 * max_diag).collect();
    let sub = k.select_rows(&live).select_columns(&live);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(live.len(), (0..live.len()).map(|_| StandardNormal.sample(&mut rng)));
    let mut out = vec![0.0; pts.len()];
    if !live.is_empty() {
        let chol = cholesky_with_jitter(&sub)?;
        let draw = chol.l() * z;
        for (slot, &i) in live.iter().enumerate() {
            out[i] = draw[slot];
        }
    }
    let y = out.split_off(du.len());
    Ok((out, y))
}

/// Posterior mean and variance of one channel at query locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorField {
    pub channel: Channel,
    pub design: SpaceTimeDesign,
    pub mean: Vec<f64>,
    /// Non-negative; tiny negative values from cancellation are clamped to 0.
    pub variance: Vec<f64>,
    /// Number of variances that were clamped.
    pub clamped: usize,
}

/// Joint posterior (mean and full covariance) over concatenated queries.
#[derive(Debug, Clone)]
pub struct JointPosterior {
    pub labels: Vec<(Channel, Point)>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A model conditioned on observations, ready for repeated prediction.
#[derive(Debug, Clone)]
pub struct Conditioned {
    kernel: JointKernel,
    train: Vec<(Channel, Point)>,
    chol: JitteredCholesky,
    alpha: DVector<f64>,
}

/// Labelled training points, Gram matrix with nuggets, and stacked values.
type TrainingSystem = (Vec<(Channel, Point)>, DMatrix<f64>, DVector<f64>);

fn training_system(kernel: &JointKernel, obs: &[ChannelObservations]) -> Result<TrainingSystem> {
    if obs.iter().all(|o| o.values.is_empty()) {
        return Err(Error::EmptyObservations);
    }
    let train: Vec<_> = obs.iter().flat_map(|o| labelled(o.channel, &o.design)).collect();
    let mut k = kernel.gram(&train)?;
    let mut i = 0;
    for o in obs {
        for _ in 0..o.values.len() {
            k[(i, i)] += o.nugget;
            i += 1;
        }
    }
    let v = DVector::from_iterator(train.len(), obs.iter().flat_map(|o| o.values.iter().copied()));
    Ok((train, k, v))
}

impl Conditioned {
    pub fn new(model: &Model, obs: &[ChannelObservations]) -> Result<Self> {
        let kernel = model.kernel()?;
        let (train, k, v) = training_system(&kernel, obs)?;
        let chol = cholesky_with_jitter(&k)?;
        let alpha = chol.solve(&v);
        Ok(Self { kernel, train, chol, alpha })
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter
    }

    pub fn predict(&self, channel: Channel, design: &SpaceTimeDesign) -> Result<PosteriorField> {
        if design.is_empty() {
            return Err(Error::Config("empty query design".into()));
        }
        let q: Vec<_> = labelled(channel, design).collect();
        let ks = self.kernel.cross_matrix(&q, &self.train)?;
        let mean = &ks * &self.alpha;
        let prior = self.kernel.diag(&q)?;
        let v = self.chol.factor.l().solve_lower_triangular(&ks.transpose()).expect("triangular factor is non-singular");
        let mut clamped = 0;
        let variance = (0..q.len())
            .map(|i| {
                let s = prior[i] - v.column(i).norm_squared();
                if s < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    s
                }
            })
            .collect();
        Ok(PosteriorField { channel, design: design.clone(), mean: mean.iter().copied().collect(), variance, clamped })
    }

    /// Full posterior covariance across several query blocks at once.
    pub fn predict_joint(&self, queries: &[(Channel, SpaceTimeDesign)]) -> Result<JointPosterior> {
        let labels: Vec<_> = queries.iter().flat_map(|(c, d)| labelled(*c, d)).collect();
        let ks = self.kernel.cross_matrix(&labels, &self.train)?;
        let prior = self.kernel.gram(&labels)?;
        let mean = &ks * &self.alpha;
        let solved = self.chol.factor.solve(&ks.transpose());
        let cov = prior - &ks * solved;
        Ok(JointPosterior { labels, mean, cov })
    }
}

/// Gaussian conditional of each queried channel given all observations.
pub fn condition(model: &Model, obs: &[ChannelObservations], queries: &[(Channel, SpaceTimeDesign)]) -> Result<Vec<PosteriorField>> {
    if queries.is_empty() {
        return Err(Error::Config("no query channels".into()));
    }
    let c = Conditioned::new(model, obs)?;
    queries.iter().map(|(ch, d)| c.predict(*ch, d)).collect()
}

/// `log p(v) = −½ vᵀK⁻¹v − ½ log|K| − (n/2) log 2π` for the observed channels plus nuggets.
pub fn log_marginal_likelihood(model: &Model, obs: &[ChannelObservations]) -> Result<f64> {
    let kernel = model.kernel()?;
    let (_, k, v) = training_system(&kernel, obs)?;
    let chol = cholesky_with_jitter(&k)?;
    let alpha = chol.solve(&v);
    let n = v.len() as f64;
    Ok(-0.5 * v.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Central-difference gradient of the log-likelihood with respect to the log of each free field.
pub fn lml_log_gradient(model: &Model, obs: &[ChannelObservations], step: f64) -> Result<Vec<(Field, f64)>> {
    let fields = model.hyper.free_fields();
    let x0 = to_log(&model.hyper, &fields)?;
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += step;
            xm[i] -= step;
            let lp = log_marginal_likelihood(&model.with_hyper(from_log(&model.hyper, &fields, &xp)), obs)?;
            let lm = log_marginal_likelihood(&model.with_hyper(from_log(&model.hyper, &fields, &xm)), obs)?;
            Ok((*f, (lp - lm) / (2.0 * step)))
        })
        .collect()
}

fn to_log(h: &Hyperparameters, fields: &[Field]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            let v = h.get(*f);
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Config(format!("{f:?} = {v} cannot be optimised in log space; freeze it or start from a positive value")))
            }
        })
        .collect()
}

fn from_log(base: &Hyperparameters, fields: &[Field], x: &[f64]) -> Hyperparameters {
    let mut h = *base;
    for (f, v) in fields.iter().zip(x) {
        h.set(*f, v.exp());
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    NelderMead,
    /// L-BFGS on a central-difference gradient.
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub optimizer: Optimizer,
    /// Iteration cap per restart; a small value acts as early stopping.
    pub max_iters: u64,
    /// Number of starts; the first is the supplied initial point.
    pub restarts: usize,
    /// Standard deviation (log space) of the perturbation for extra starts.
    pub restart_spread: f64,
    /// Initial simplex edge in log space.
    pub simplex_step: f64,
    /// Stop when the standard deviation of simplex costs falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::NelderMead,
            max_iters: 300,
            restarts: 3,
            restart_spread: 0.5,
            simplex_step: 0.3,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub restart: usize,
    pub evaluation: usize,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub hyper: Hyperparameters,
    pub loglik: f64,
    pub initial_loglik: f64,
    /// Every likelihood evaluation (failed factorisations recorded as −∞).
    pub trace: Vec<TracePoint>,
    pub restarts_succeeded: usize,
}

const PENALTY: f64 = 1e100;

struct Objective<'a> {
    model: &'a Model,
    obs: &'a [ChannelObservations],
    fields: &'a [Field],
    restart: usize,
    trace: &'a RefCell<Vec<TracePoint>>,
    fd_step: f64,
}

impl Objective<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        let h = from_log(&self.model.hyper, self.fields, x);
        let ll = log_marginal_likelihood(&self.model.with_hyper(h), self.obs).unwrap_or(f64::NEG_INFINITY);
        let mut tr = self.trace.borrow_mut();
        let evaluation = tr.len();
        tr.push(TracePoint { restart: self.restart, evaluation, loglik: ll });
        if ll.is_finite() {
            -ll
        } else {
            PENALTY
        }
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p))
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok((0..p.len())
            .map(|i| {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += self.fd_step;
                b[i] -= self.fd_step;
                (self.eval(&a) - self.eval(&b)) / (2.0 * self.fd_step)
            })
            .collect())
    }
}

fn run_restart(
    model: &Model,
    obs: &[ChannelObservations],
    fields: &[Field],
    x0: Vec<f64>,
    restart: usize,
    opts: &FitOptions,
) -> (Option<(Vec<f64>, f64)>, Vec<TracePoint>) {
    let trace = RefCell::new(Vec::new());
    let problem = Objective { model, obs, fields, restart, trace: &trace, fd_step: 1e-5 };
    let outcome = match opts.optimizer {
        Optimizer::NelderMead => {
            let mut simplex = vec![x0.clone()];
            for i in 0..x0.len() {
                let mut v = x0.clone();
                v[i] += opts.simplex_step;
                simplex.push(v);
            }
            NelderMead::new(simplex)
                .with_sd_tolerance(opts.tolerance)
                .and_then(|solver| Executor::new(problem, solver).configure(|s| s.max_iters(opts.max_iters)).run())
                .map(|r| (r.state().get_best_param().cloned(), r.state().get_best_cost()))
        }
        Optimizer::Lbfgs => {
            let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7);
            Executor::new(problem, solver)
                .configure(|s| s.param(x0.clone()).max_iters(opts.max_iters))
                .run()
                .map(|r| (r.state().get_best_param().cloned(), r.state().get_best_cost()))
        }
    };
    let trace = trace.into_inner();
    let best = match outcome {
        Ok((Some(p), c)) if c < PENALTY => Some((p, -c)),
        _ => None,
    };
    (best, trace)
}

/// Maximum-likelihood estimate of the free hyperparameters (log-space, multi-start).
///
/// The returned likelihood is never below the likelihood of the initial
/// hyperparameters; frozen fields are returned unchanged.
pub fn fit(model: &Model, obs: &[ChannelObservations], opts: &FitOptions) -> Result<FitResult> {
    if opts.restarts == 0 {
        return Err(Error::Config("restarts must be >= 1".into()));
    }
    let fields = model.hyper.free_fields();
    let x0 = to_log(&model.hyper, &fields)?;
    let initial = log_marginal_likelihood(model, obs);
    if fields.is_empty() {
        let ll = initial?;
        return Ok(FitResult { hyper: model.hyper, loglik: ll, initial_loglik: ll, trace: vec![], restarts_succeeded: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let spread = Normal::new(0.0, opts.restart_spread.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let starts: Vec<Vec<f64>> = (0..opts.restarts)
        .map(|r| if r == 0 { x0.clone() } else { x0.iter().map(|v| v + spread.sample(&mut rng)).collect() })
        .collect();
    let runs: Vec<_> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, s)| run_restart(model, obs, &fields, s, r, opts))
        .collect();
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut ok = 0;
    for (outcome, tr) in runs {
        trace.extend(tr);
        if let Some((p, ll)) = outcome {
            ok += 1;
            if best.as_ref().is_none_or(|(_, b)| ll > *b) {
                best = Some((p, ll));
            }
        }
    }
    match (best, initial) {
        (Some((p, ll)), Ok(init)) if ll >= init => {
            Ok(FitResult { hyper: from_log(&model.hyper, &fields, &p), loglik: ll, initial_loglik: init, trace, restarts_succeeded: ok })
        }
        (_, Ok(init)) => Ok(FitResult { hyper: model.hyper, loglik: init, initial_loglik: init, trace, restarts_succeeded: ok }),
        (Some((p, ll)), Err(_)) => Ok(FitResult {
            hyper: from_log(&model.hyper, &fields, &p),
            loglik: ll,
            initial_loglik: f64::NEG_INFINITY,
            trace,
            restarts_succeeded: ok,
        }),
        (None, Err(e)) => Err(Error::Fit { restarts: opts.restarts, message: format!("no start produced a factorisable covariance ({e}); {} evaluations traced", trace.len()) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_hyper() -> Hyperparameters {
        Hyperparameters::new(MechanisticParams::new(1.0, 0.1, 0.01).unwrap(), KernelParams::new(1.0, 0.3, 0.3).unwrap())
    }

    fn protein_model() -> Model {
        Model::new(ModelVariant::Protein, toy_hyper(), GreensConfig::new(1.0, 10).unwrap())
    }

    #[test]
    fn mrna_assembly_matches_entrywise_covariance() {
        let model = Model::new(ModelVariant::Mrna, toy_hyper(), GreensConfig::new(1.0, 8).unwrap());
        let JointKernel::Mrna(k) = model.kernel().unwrap() else { unreachable!() };
        let jk = JointKernel::Mrna(k.clone());
        let g = SpaceTimeDesign::grid(3, 3, (0.0, 1.0), (0.0, 1.0));
        let mut pts: Vec<_> = labelled(Channel::Y, &g).chain(labelled(Channel::U, &g)).collect();
        pts.push((Channel::Y, Point::new(0.37, 0.81)));
        let cols: Vec<_> = pts.iter().rev().take(7).copied().collect();
        for limit in [0, TIME_CACHE_LIMIT] {
            let gram = mrna_matrix(&k, &pts, &pts, true, limit).unwrap();
            let cross = mrna_matrix(&k, &pts, &cols, false, limit).unwrap();
            for (i, a) in pts.iter().enumerate() {
                for (j, b) in pts.iter().enumerate() {
                    assert_relative_eq!(gram[(i, j)], jk.cov(a.0, a.1, b.0, b.1).unwrap(), epsilon = 1e-15, max_relative = 1e-13);
                }
                for (j, b) in cols.iter().enumerate() {
                    assert_relative_eq!(cross[(i, j)], jk.cov(a.0, a.1, b.0, b.1).unwrap(), epsilon = 1e-15, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn protein_overflow_is_reported() {
        let mut h = toy_hyper();
        h.kernel.theta_x = 1e-80;
        let k = Model::new(ModelVariant::Protein, h, GreensConfig::default()).kernel().unwrap();
        let p = Point::new(0.5, 0.5);
        let err = k.cov(Channel::U, p, Channel::U, p).unwrap_err();
        assert!(err.is_numerical(), "{err}");
        assert!(k.cov(Channel::Y, p, Channel::Y, p).is_ok());
    }

    #[test]
    fn identity_factor_has_no_jitter() {
        let c = cholesky_with_jitter(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(c.jitter, 0.0);
        assert_eq!(c.l(), DMatrix::identity(4, 4));
    }

    #[test]
    fn rank_one_needs_jitter() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let c = cholesky_with_jitter(&m).unwrap();
        assert!(c.jitter > 0.0);
    }

    #[test]
    fn indefinite_matrix_reports_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match cholesky_with_jitter(&m) {
            Err(Error::NotPositiveDefinite { min_eigenvalue, .. }) => assert_relative_eq!(min_eigenvalue, -1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_observation_likelihood() {
        let mut h = toy_hyper();
        h.nugget_u = 0.5;
        let model = Model::new(ModelVariant::Protein, h, GreensConfig::default());
        let p = Point::new(0.3, 0.3);
        let kuu = model.kernel().unwrap().cov(Channel::U, p, Channel::U, p).unwrap();
        let obs = ChannelObservations::new(Channel::U, SpaceTimeDesign::new(vec![p]), vec![0.0], 0.5).unwrap();
        let ll = log_marginal_likelihood(&model, &[obs]).unwrap();
        let expected = -0.5 * (kuu + 0.5f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(ll, expected, max_relative = 1e-12);
    }

    #[test]
    fn interpolates_noise_free_data() {
        let model = protein_model();
        let d = SpaceTimeDesign::new(vec![Point::new(0.2, 0.3), Point::new(0.7, 0.8)]);
        let obs = ChannelObservations::new(Channel::Y, d.clone(), vec![0.4, -1.1], 0.0).unwrap();
        let post = condition(&model, &[obs], &[(Channel::Y, d)]).unwrap();
        assert_relative_eq!(post[0].mean[0], 0.4, epsilon = 1e-8);
        assert_relative_eq!(post[0].mean[1], -1.1, epsilon = 1e-8);
        assert!(post[0].variance.iter().all(|v| *v <= 1e-8));
    }

    #[test]
    fn empty_observations_rejected() {
        assert!(matches!(condition(&protein_model(), &[], &[(Channel::U, SpaceTimeDesign::grid(2, 2, (0.0, 1.0), (0.0, 1.0)))]), Err(Error::EmptyObservations)));
        assert!(ChannelObservations::new(Channel::U, SpaceTimeDesign::default(), vec![1.0], 0.0).is_err());
        assert!(ChannelObservations::new(Channel::U, SpaceTimeDesign::default(), vec![], -1.0).is_err());
    }

    #[test]
    fn joint_block_layout() {
        let model = protein_model();
        let k = model.kernel().unwrap();
        let pu = Point::new(0.2, 0.4);
        let py = Point::new(0.6, 0.1);
        let b = assemble_joint(&k, &SpaceTimeDesign::new(vec![pu]), &SpaceTimeDesign::new(vec![py])).unwrap();
        let j = b.joint();
        assert_eq!(j.shape(), (2, 2));
        assert_eq!(j[(0, 0)], k.cov(Channel::U, pu, Channel::U, pu).unwrap());
        assert_eq!(j[(1, 1)], k.cov(Channel::Y, py, Channel::Y, py).unwrap());
        assert_eq!(j[(1, 0)], k.cov(Channel::Y, py, Channel::U, pu).unwrap());
        assert_eq!(j[(0, 1)], j[(1, 0)]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = protein_model();
        let d = SpaceTimeDesign::grid(4, 4, (0.0, 1.0), (0.0, 1.0));
        let a = sample_joint(&model, &d, &d, 11).unwrap();
        let b = sample_joint(&model, &d, &d, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_joint(&model, &d, &d, 12).unwrap());
    }

    #[test]
    fn frozen_fields_survive_fit() {
        let model = protein_model();
        let d = SpaceTimeDesign::grid(4, 4, (0.0, 1.0), (0.0, 1.0));
        let (u, y) = sample_joint(&model, &d, &d, 3).unwrap();
        let obs = vec![
            ChannelObservations::new(Channel::U, d.clone(), u, 1e-6).unwrap(),
            ChannelObservations::new(Channel::Y, d.clone(), y, 1e-6).unwrap(),
        ];
        let mut start = model;
        start.hyper.frozen = FrozenMask::mechanistic();
        start.hyper.kernel.sigma2 = 2.0;
        let opts = FitOptions { restarts: 1, max_iters: 40, ..FitOptions::default() };
        let r = fit(&start, &obs, &opts).unwrap();
        assert_eq!(r.hyper.mech, start.hyper.mech);
        assert!(r.loglik >= r.initial_loglik);
        assert!(!r.trace.is_empty());
    }

    #[test]
    fn zero_valued_free_field_rejected() {
        let mut m = protein_model();
        m.hyper.mech.lambda = 0.0;
        let d = SpaceTimeDesign::grid(2, 2, (0.0, 1.0), (0.0, 1.0));
        let obs = vec![ChannelObservations::new(Channel::U, d, vec![0.1, 0.2, 0.3, 0.4], 1e-6).unwrap()];
        assert!(matches!(fit(&m, &obs, &FitOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn parses_enums() {
        assert_eq!("U".parse::<Channel>().unwrap(), Channel::U);
        assert!("z".parse::<Channel>().is_err());
        assert_eq!("gp-mrna".parse::<ModelVariant>().unwrap(), ModelVariant::Mrna);
    }
}
