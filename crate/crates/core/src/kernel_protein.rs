//! Covariances of the model with the GP prior on the protein.
//!
//! Writing the PDE as `u = (1/S)·[∂ₜy + λy − D·∂ₓₓy]`, the mRNA covariances
//! follow by applying that operator to the SE prior on `y`: once (in the
//! primed arguments) for `k_yu`, and in both argument pairs for `k_uu`. The
//! derivatives are the closed forms of [`SeKernel`](crate::kernel_se::SeKernel).
//!
//! No initial or boundary conditions are imposed here, so posterior fields
//! of this model need not vanish at `x ∈ {0, l}` or `t = 0`.

use crate::error::Result;
use crate::kernel_mrna::MechanisticParams;
use crate::kernel_se::{separable_prior, KernelParams, SpaceTimePoint};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProteinKernel<T> {
    kp: KernelParams<T>,
    mech: MechanisticParams<T>,
}

impl<T: Scalar> ProteinKernel<T> {
    pub fn new(kp: KernelParams<T>, mech: MechanisticParams<T>) -> Result<Self> {
        kp.validate()?;
        mech.validate()?;
        Ok(Self { kp, mech })
    }

    pub fn kernel_params(&self) -> &KernelParams<T> {
        &self.kp
    }

    pub fn mechanistic(&self) -> &MechanisticParams<T> {
        &self.mech
    }

    /// σ²·k(x, x')·k(t, t').
    pub fn kyy(&self, p1: SpaceTimePoint<T>, p2: SpaceTimePoint<T>) -> T {
        separable_prior(p1, p2, &self.kp)
    }

    /// `(σ²/S²)·{[D²·k⁽⁴⁾(x,x') − 2Dλ·k⁽²⁾(x,x')]·k(t,t') − [k⁽²⁾(t,t') − λ²·k(t,t')]·k(x,x')}`.
    pub fn kuu(&self, p1: SpaceTimePoint<T>, p2: SpaceTimePoint<T>) -> T {
        let MechanisticParams { s_rate, lambda, diff } = self.mech;
        let (sx, st) = (self.kp.space(), self.kp.time());
        let kx = sx.value(p1.x, p2.x);
        let kt = st.value(p1.t, p2.t);
        let space = (diff * diff * sx.d4(p1.x, p2.x) - T::lit(2.0) * diff * lambda * sx.d2(p1.x, p2.x)) * kt;
        let time = (st.d2(p1.t, p2.t) - lambda * lambda * kt) * kx;
        self.kp.sigma2 / (s_rate * s_rate) * (space - time)
    }

    /// `cov(y(py), u(pu)) = (σ²/S)·[λ·k(x,x')k(t,t') − k(x,x')·k⁽¹⁾(t,t') − D·k⁽²⁾(x,x')·k(t,t')]`,
    /// derivatives taken in the protein-side (first) arguments.
    pub fn kyu(&self, py: SpaceTimePoint<T>, pu: SpaceTimePoint<T>) -> T {
        let MechanisticParams { s_rate, lambda, diff } = self.mech;
        let (sx, st) = (self.kp.space(), self.kp.time());
        let kx = sx.value(py.x, pu.x);
        let kt = st.value(py.t, pu.t);
        self.kp.sigma2 / s_rate * (lambda * kx * kt - kx * st.d1(py.t, pu.t) - diff * sx.d2(py.x, pu.x) * kt)
    }
}

pub fn kyy_protein<T: Scalar>(p1: SpaceTimePoint<T>, p2: SpaceTimePoint<T>, kp: &KernelParams<T>) -> Result<T> {
    kp.validate()?;
    Ok(separable_prior(p1, p2, kp))
}

pub fn kuu_protein<T: Scalar>(
    p1: SpaceTimePoint<T>,
    p2: SpaceTimePoint<T>,
    kp: &KernelParams<T>,
    mech: &MechanisticParams<T>,
) -> Result<T> {
    Ok(ProteinKernel::new(*kp, *mech)?.kuu(p1, p2))
}

pub fn kyu_protein<T: Scalar>(
    py: SpaceTimePoint<T>,
    pu: SpaceTimePoint<T>,
    kp: &KernelParams<T>,
    mech: &MechanisticParams<T>,
) -> Result<T> {
    Ok(ProteinKernel::new(*kp, *mech)?.kyu(py, pu))
}
