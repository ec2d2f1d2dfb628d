//! Undamaged strain-energy densities ψ⁰.
//!
//! Two isotropic energies are provided, a compressible neo-Hooke model and an
//! isochoric Yeoh model. Both are available for a full 3×3 deformation
//! gradient and restricted to the uniaxial path `F = diag[F, 1, 1]`, which is
//! also the response of a single microsphere fiber.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    NeoHooke,
    Yeoh,
}

/// Energy constants plus the two damage parameters.
///
/// `lambda`/`mu` are read for neo-Hooke, `c1..c3` for Yeoh; the others are
/// ignored. `d0` and `dinf` parametrize the damage function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub kind: EnergyKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub mu: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub c1: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub c2: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub c3: f64,
    pub d0: f64,
    pub dinf: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl MaterialParams {
    pub fn neo_hooke(lambda: f64, mu: f64, d0: f64, dinf: f64) -> Self {
        Self { kind: EnergyKind::NeoHooke, lambda, mu, c1: 0.0, c2: 0.0, c3: 0.0, d0, dinf }
    }

    pub fn yeoh(c1: f64, c2: f64, c3: f64, d0: f64, dinf: f64) -> Self {
        Self { kind: EnergyKind::Yeoh, lambda: 0.0, mu: 0.0, c1, c2, c3, d0, dinf }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            EnergyKind::NeoHooke => self.mu > 0.0 && self.lambda >= 0.0,
            EnergyKind::Yeoh => self.c1 > 0.0 && self.c2 >= 0.0 && self.c3 >= 0.0,
        };
        if !ok {
            return Err(Error::Spec(format!("non-positive elastic constants in {self:?}")));
        }
        if !(self.d0 > 0.0) {
            return Err(Error::Spec(format!("d0 must be positive, got {}", self.d0)));
        }
        if !(self.dinf > 0.0 && self.dinf < 1.0) {
            return Err(Error::Spec(format!("dinf must lie in (0, 1), got {}", self.dinf)));
        }
        Ok(())
    }
}

/// Invariants of the right Cauchy-Green tensor used by the energies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Invariants {
    pub i1: f64,
    pub i3: f64,
    pub j: f64,
}

pub fn invariants(f: &Matrix3<f64>) -> Result<Invariants> {
    let j = f.determinant();
    if !(j > 0.0) || !j.is_finite() {
        return Err(Error::InvalidDeformation(format!("det F = {j}")));
    }
    let c = f.transpose() * f;
    Ok(Invariants { i1: c.trace(), i3: j * j, j })
}

pub fn psi0(f: &Matrix3<f64>, params: &MaterialParams) -> Result<f64> {
    let inv = invariants(f)?;
    Ok(match params.kind {
        EnergyKind::NeoHooke => {
            let lnj = inv.j.ln();
            0.5 * params.mu * (inv.i1 - 3.0) - params.mu * lnj + 0.5 * params.lambda * lnj * lnj
        }
        EnergyKind::Yeoh => {
            let x = inv.i1 * inv.i3.powf(-1.0 / 3.0) - 3.0;
            yeoh_poly(params, x)
        }
    })
}

fn yeoh_poly(p: &MaterialParams, x: f64) -> f64 {
    x * (p.c1 + x * (p.c2 + x * p.c3))
}

fn check_stretch(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDeformation(format!("stretch {f}")))
    }
}

/// ψ⁰ and its first two derivatives along the uniaxial path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uniaxial {
    pub psi: f64,
    pub dpsi: f64,
    pub d2psi: f64,
}

/// Evaluates ψ⁰(diag[F,1,1]) with first and second stretch derivatives.
/// The caller guarantees `f > 0`.
#[inline]
pub(crate) fn uniaxial_unchecked(f: f64, p: &MaterialParams) -> Uniaxial {
    match p.kind {
        EnergyKind::NeoHooke => {
            let lnf = f.ln();
            let inv = 1.0 / f;
            Uniaxial {
                psi: 0.5 * p.mu * (f * f - 1.0) - p.mu * lnf + 0.5 * p.lambda * lnf * lnf,
                dpsi: p.mu * (f - inv) + p.lambda * lnf * inv,
                d2psi: p.mu * (1.0 + inv * inv) + p.lambda * (1.0 - lnf) * inv * inv,
            }
        }
        EnergyKind::Yeoh => {
            // x = I1 I3^(-1/3) - 3 on the uniaxial path
            let c = f.cbrt();
            let x = c * f + 2.0 / (c * c) - 3.0;
            let dx = 4.0 / 3.0 * (c - 1.0 / (c * c * f));
            let dx2 = 4.0 / 9.0 / (c * c) + 20.0 / 9.0 / (c * c * f * f);
            let g1 = p.c1 + x * (2.0 * p.c2 + 3.0 * p.c3 * x);
            let g2 = 2.0 * p.c2 + 6.0 * p.c3 * x;
            Uniaxial { psi: yeoh_poly(p, x), dpsi: g1 * dx, d2psi: g2 * dx * dx + g1 * dx2 }
        }
    }
}

pub fn uniaxial(f: f64, params: &MaterialParams) -> Result<Uniaxial> {
    check_stretch(f)?;
    Ok(uniaxial_unchecked(f, params))
}

pub fn psi0_uniaxial(f: f64, params: &MaterialParams) -> Result<f64> {
    uniaxial(f, params).map(|u| u.psi)
}

pub fn dpsi0_df(f: f64, params: &MaterialParams) -> Result<f64> {
    uniaxial(f, params).map(|u| u.dpsi)
}

pub fn d2psi0_df2(f: f64, params: &MaterialParams) -> Result<f64> {
    uniaxial(f, params).map(|u| u.d2psi)
}
