//! Separable squared-exponential prior and its input derivatives.
//!
//! **Length-scale convention:** `k(z, z') = exp(-(z - z')² / θ²)`, with no
//! factor ½ in the denominator. Most GP libraries use `exp(-d²/(2ℓ²))`;
//! convert with `θ = √2·ℓ`. Every parameter set shipped with this crate
//! (toy settings and the Becker presets) is expressed in the θ convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A location `(x, t)` in the space-time domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpaceTimePoint<T> {
    pub x: T,
    pub t: T,
}

impl<T: Scalar> SpaceTimePoint<T> {
    pub fn new(x: T, t: T) -> Self {
        Self { x, t }
    }
}

/// Prior variance σ² and the two length-scales of the separable SE kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<T> {
    pub sigma2: T,
    pub theta_x: T,
    pub theta_t: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(sigma2: T, theta_x: T, theta_t: T) -> Result<Self> {
        let kp = Self { sigma2, theta_x, theta_t };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma2", self.sigma2), ("theta_x", self.theta_x), ("theta_t", self.theta_t)] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::param(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn space(&self) -> SeKernel<T> {
        SeKernel { theta: self.theta_x }
    }

    pub fn time(&self) -> SeKernel<T> {
        SeKernel { theta: self.theta_t }
    }
}

/// One-dimensional SE kernel with a validated length-scale.
///
/// Derivatives are taken with respect to the first argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel<T> {
    theta: T,
}

impl<T: Scalar> SeKernel<T> {
    pub fn new(theta: T) -> Result<Self> {
        if theta.is_finite() && theta > T::zero() {
            Ok(Self { theta })
        } else {
            Err(Error::param(format!("length-scale must be finite and > 0, got {theta}")))
        }
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    #[inline]
    pub fn value(&self, z: T, z2: T) -> T {
        let r = (z - z2) / self.theta;
        (-r * r).exp()
    }

    #[inline]
    pub fn d1(&self, z: T, z2: T) -> T {
        let d = z - z2;
        let th2 = self.theta * self.theta;
        -T::lit(2.0) * d / th2 * self.value(z, z2)
    }

    #[inline]
    pub fn d2(&self, z: T, z2: T) -> T {
        let d = z - z2;
        let th2 = self.theta * self.theta;
        (-T::lit(2.0) / th2 + T::lit(4.0) * d * d / (th2 * th2)) * self.value(z, z2)
    }

    #[inline]
    pub fn d4(&self, z: T, z2: T) -> T {
        let d2 = (z - z2) * (z - z2);
        let th2 = self.theta * self.theta;
        let th4 = th2 * th2;
        (T::lit(12.0) / th4 - T::lit(48.0) * d2 / (th4 * th2) + T::lit(16.0) * d2 * d2 / (th4 * th4))
            * self.value(z, z2)
    }
}

pub fn se<T: Scalar>(z: T, z2: T, theta: T) -> Result<T> {
    Ok(SeKernel::new(theta)?.value(z, z2))
}

pub fn se_d1<T: Scalar>(z: T, z2: T, theta: T) -> Result<T> {
    Ok(SeKernel::new(theta)?.d1(z, z2))
}

pub fn se_d2<T: Scalar>(z: T, z2: T, theta: T) -> Result<T> {
    Ok(SeKernel::new(theta)?.d2(z, z2))
}

pub fn se_d4<T: Scalar>(z: T, z2: T, theta: T) -> Result<T> {
    Ok(SeKernel::new(theta)?.d4(z, z2))
}

/// σ²·k(x, x')·k(t, t'): the prior over whichever channel carries it.
#[inline]
pub fn separable_prior<T: Scalar>(p1: SpaceTimePoint<T>, p2: SpaceTimePoint<T>, kp: &KernelParams<T>) -> T {
    kp.sigma2 * kp.space().value(p1.x, p2.x) * kp.time().value(p1.t, p2.t)
}
