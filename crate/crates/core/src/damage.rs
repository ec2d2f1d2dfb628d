//! Damage function, its antiderivative and the condensed incremental
//! potential of the (1−D) model.
//!
//! The internal variable β is the largest undamaged energy seen so far. With
//! `D(β) = D∞ (1 − exp(−β/D0))` the condensed increment of the work over one
//! load step reads
//!
//! `W(F) = ψ(F, D) − ψ(F_k, D_k) + β D − β_k D_k − D̄(β) + D̄(β_k)`
//!
//! with `β = max(β_k, ψ⁰(F))` and `D̄` the antiderivative of `D`.

use crate::error::{Error, Result};
use crate::hyperelastic::{uniaxial, MaterialParams};

#[inline]
pub(crate) fn damage_unchecked(beta: f64, p: &MaterialParams) -> f64 {
    p.dinf * -(-beta / p.d0).exp_m1()
}

/// `D̄(β) = D∞ (β + D0 e^{−β/D0}) − D∞ D0`, written so that it stays accurate
/// for small β.
#[inline]
pub(crate) fn antiderivative_unchecked(beta: f64, p: &MaterialParams) -> f64 {
    p.dinf * (beta + p.d0 * (-beta / p.d0).exp_m1())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("internal variable must be non-negative, got {beta}")))
    }
}

pub fn damage(beta: f64, params: &MaterialParams) -> Result<f64> {
    check_beta(beta)?;
    Ok(damage_unchecked(beta, params))
}

pub fn damage_antiderivative(beta: f64, params: &MaterialParams) -> Result<f64> {
    check_beta(beta)?;
    Ok(antiderivative_unchecked(beta, params))
}

/// Internal variable after a trial stretch: `max(β_k, ψ⁰(F))`.
pub fn condense_beta(f_trial: f64, beta_k: f64, params: &MaterialParams) -> Result<f64> {
    check_beta(beta_k)?;
    Ok(beta_k.max(uniaxial(f_trial, params)?.psi))
}

/// Internal variable together with the damage and antiderivative it implies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamageState {
    pub beta: f64,
    pub d: f64,
    pub dbar: f64,
}

impl DamageState {
    pub fn at(beta: f64, params: &MaterialParams) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            beta,
            d: damage_unchecked(beta, params),
            dbar: antiderivative_unchecked(beta, params),
        })
    }
}

/// The committed state the next increment starts from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementAnchor {
    pub f_k: f64,
    pub beta_k: f64,
    pub d_k: f64,
    pub dbar_k: f64,
}

impl IncrementAnchor {
    pub fn new(f_k: f64, beta_k: f64, params: &MaterialParams) -> Result<Self> {
        let s = DamageState::at(beta_k, params)?;
        Ok(Self { f_k, beta_k, d_k: s.d, dbar_k: s.dbar })
    }

    pub fn virgin(params: &MaterialParams) -> Self {
        Self::new(1.0, 0.0, params).expect("zero is a valid internal variable")
    }
}

pub fn incremental_potential(f_trial: f64, anchor: &IncrementAnchor, params: &MaterialParams) -> Result<f64> {
    let psi = uniaxial(f_trial, params)?.psi;
    let psi_k = uniaxial(anchor.f_k, params)?.psi;
    let beta = anchor.beta_k.max(psi);
    let s = DamageState::at(beta, params)?;
    Ok((1.0 - s.d) * psi - (1.0 - anchor.d_k) * psi_k + beta * s.d - anchor.beta_k * anchor.d_k - s.dbar
        + anchor.dbar_k)
}

/// Incremental dissipation `ψ⁰(F) (D − D_k)` of an accepted step.
pub fn incremental_dissipation(psi0: f64, d: f64, d_k: f64) -> f64 {
    psi0 * (d - d_k)
}
