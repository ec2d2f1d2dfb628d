//! Reconvexified damage routine for a single uniaxial point or fiber.
//!
//! Each load increment starts from a committed [`PointHistory`]. The condensed
//! incremental potential of that anchor is sampled on the convexification grid
//! and its lower hull is kept in the history, so trial evaluations inside a
//! Newton loop are cheap lookups. A trial stretch inside a non-trivial hull
//! segment is a two-phase mixture of a weakly damaged phase `F−` (pinned after
//! the first relaxed increment) and a strongly damaged phase `F+` (free to move
//! as the hull is rebuilt every increment). Once the non-convexity disappears
//! the point is fully damaged and its stress is frozen. Below the largest
//! stretch reached, the point unloads along `η ψ⁰`.

use std::cell::RefCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::convexify::{lower_hull_indices, GridSpec, RELAXED_MIN_SPAN};
use crate::damage::{antiderivative_unchecked, damage_unchecked};
use crate::error::{Error, Result};
use crate::hyperelastic::{uniaxial, uniaxial_unchecked, MaterialParams, Uniaxial};

/// Which energy the point works with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Condensed potential without any convexification.
    Unrelaxed,
    /// Hull of the first relaxed increment is kept for the rest of the run.
    FixedHull,
    /// Hull rebuilt every increment with the weak phase pinned.
    Reconvexified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Convex,
    Relaxed,
    FullyDamaged,
    Unloading,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Convex => "convex",
            Regime::Relaxed => "relaxed",
            Regime::FullyDamaged => "fully-damaged",
            Regime::Unloading => "unloading",
        }
    }
}

/// A relaxed piece of the lower hull, in the anchor-independent energy frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HullSegment {
    pub f_minus: f64,
    pub f_plus: f64,
    pub w_minus: f64,
    pub slope: f64,
}

/// State carried from one converged increment to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct PointHistory {
    pub f_k: f64,
    pub beta_k: f64,
    pub beta_plus_k: f64,
    pub beta_minus_k: f64,
    pub f_minus_k: f64,
    pub f_plus_k: f64,
    pub xi_k: f64,
    pub d_k: f64,
    pub p_k: f64,
    pub a_k: f64,
    /// True unless the previous loading increment was relaxed.
    pub first: bool,
    pub eta_k: f64,
    pub f_max_k: f64,
    pub frozen: bool,
    /// Hull no longer rebuilt (fixed-hull variant after its first relaxed step).
    pub hull_fixed: bool,
    /// Relaxed hull pieces of the potential anchored at `beta_k`.
    pub segments: Vec<HullSegment>,
}

/// Trial response of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointResponse {
    pub p: f64,
    pub a: f64,
    pub sigma: f64,
    pub xi: f64,
    pub d: f64,
    pub beta: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    pub regime: Regime,
    /// Incremental energy up to a constant fixed by the history.
    pub energy: f64,
}

/// ψ⁰ and `ψ⁰ − D̄(ψ⁰)` tabulated on the grid; the hull of any anchor is
/// assembled from these without re-evaluating the energy.
#[derive(Debug)]
struct Table {
    x: Vec<f64>,
    psi: Vec<f64>,
    g: Vec<f64>,
}

thread_local! {
    /// Scratch buffers of `relaxed_segments`: potential values, hull indices.
    static HULL_SCRATCH: RefCell<(Vec<f64>, Vec<usize>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Material law plus convexification settings, shared by all points.
#[derive(Clone, Debug)]
pub struct MaterialModel {
    pub params: MaterialParams,
    pub variant: Variant,
    pub grid: GridSpec,
    table: Arc<Table>,
}

/// Stretch tolerance of the unloading test.
pub const UNLOAD_TOL: f64 = 1e-9;

impl MaterialModel {
    pub fn new(params: MaterialParams, variant: Variant, grid: GridSpec) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        if grid.f_min <= 0.0 {
            return Err(Error::Spec(format!("grid must stay at positive stretches, got f_min = {}", grid.f_min)));
        }
        let (mut x, mut psi, mut g) = (Vec::new(), Vec::new(), Vec::new());
        if variant != Variant::Unrelaxed {
            for i in 0..grid.n_points {
                let p = uniaxial_unchecked(grid.abscissa(i), &params).psi;
                x.push(grid.abscissa(i));
                psi.push(p);
                g.push(p - antiderivative_unchecked(p, &params));
            }
        }
        Ok(Self { params, variant, grid, table: Arc::new(Table { x, psi, g }) })
    }

    /// Relaxed hull pieces of the potential anchored at `beta_k`.
    pub fn relaxed_segments(&self, beta_k: f64) -> Vec<HullSegment> {
        let t = &self.table;
        let dk = damage_unchecked(beta_k, &self.params);
        let shift = antiderivative_unchecked(beta_k, &self.params) - beta_k * dk;
        HULL_SCRATCH.with_borrow_mut(|(w, hull)| {
            w.clear();
            w.extend(t.psi.iter().zip(&t.g).map(|(&p, &g)| if p <= beta_k { (1.0 - dk) * p } else { g + shift }));
            let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let tol = 1e-14 * scale * (self.grid.f_max - self.grid.f_min);
            lower_hull_indices(w.len(), |i| t.x[i], w, tol, hull);
            hull.windows(2)
                .filter(|e| e[1] - e[0] > RELAXED_MIN_SPAN)
                .map(|e| {
                    let (fa, fb) = (t.x[e[0]], t.x[e[1]]);
                    HullSegment { f_minus: fa, f_plus: fb, w_minus: w[e[0]], slope: (w[e[1]] - w[e[0]]) / (fb - fa) }
                })
                .collect()
        })
    }

    pub fn virgin_history(&self) -> PointHistory {
        PointHistory {
            f_k: 1.0,
            beta_k: 0.0,
            beta_plus_k: 0.0,
            beta_minus_k: 0.0,
            f_minus_k: 1.0,
            f_plus_k: 1.0,
            xi_k: 0.0,
            d_k: 0.0,
            p_k: 0.0,
            a_k: uniaxial_unchecked(1.0, &self.params).d2psi,
            first: true,
            eta_k: 1.0,
            f_max_k: 1.0,
            frozen: false,
            hull_fixed: false,
            segments: if self.variant == Variant::Unrelaxed { Vec::new() } else { self.relaxed_segments(0.0) },
        }
    }

    /// Condensed potential of the anchor at `beta_k`, energy-frame shifted.
    fn condensed(&self, u: &Uniaxial, beta_k: f64) -> (f64, f64, f64, f64) {
        let p = &self.params;
        if u.psi <= beta_k {
            let dk = damage_unchecked(beta_k, p);
            ((1.0 - dk) * u.psi, (1.0 - dk) * u.dpsi, (1.0 - dk) * u.d2psi, beta_k)
        } else {
            let dk = damage_unchecked(beta_k, p);
            let d = damage_unchecked(u.psi, p);
            let dd = p.dinf / p.d0 * (-u.psi / p.d0).exp();
            let w = u.psi - antiderivative_unchecked(u.psi, p) - beta_k * dk + antiderivative_unchecked(beta_k, p);
            (w, (1.0 - d) * u.dpsi, (1.0 - d) * u.d2psi - dd * u.dpsi * u.dpsi, u.psi)
        }
    }

    fn is_unloading(&self, f: f64, h: &PointHistory) -> bool {
        self.variant != Variant::Unrelaxed
            && h.f_max_k > 1.0 + UNLOAD_TOL
            && f < h.f_max_k - UNLOAD_TOL
            && (h.xi_k > 0.0 || h.beta_k > 0.0)
    }

    fn loading(&self, f: f64, u: &Uniaxial, h: &PointHistory) -> Result<PointResponse> {
        let mut r = PointResponse {
            p: 0.0,
            a: 0.0,
            sigma: 0.0,
            xi: h.xi_k,
            d: h.d_k,
            beta: h.beta_k.max(u.psi),
            beta_plus: h.beta_plus_k,
            beta_minus: h.beta_minus_k,
            f_minus: h.f_minus_k,
            f_plus: h.f_plus_k,
            regime: Regime::Convex,
            energy: 0.0,
        };
        if h.frozen {
            r.p = h.p_k;
            r.a = h.a_k;
            r.energy = h.p_k * (f - h.f_k);
            r.regime = Regime::FullyDamaged;
        } else if self.variant == Variant::Unrelaxed {
            let (w, p, a, beta) = self.condensed(u, h.beta_k);
            (r.energy, r.p, r.a, r.beta) = (w, p, a, beta);
        } else {
            if !self.grid.contains(f) {
                return Err(Error::Range { value: f, min: self.grid.f_min, max: self.grid.f_max });
            }
            if let Some(s) = h.segments.iter().find(|s| s.f_minus <= f && f <= s.f_plus) {
                let f_minus = if h.first { s.f_minus } else { h.f_minus_k };
                r.p = s.slope;
                r.a = 0.0;
                r.energy = s.w_minus + s.slope * (f - s.f_minus);
                r.f_minus = f_minus;
                r.f_plus = s.f_plus;
                r.xi = (f - f_minus) / (s.f_plus - f_minus);
                r.d = (s.f_plus - f_minus) / f;
                r.beta_minus = uniaxial_unchecked(f_minus, &self.params).psi;
                r.beta_plus = h.beta_plus_k.max(uniaxial_unchecked(s.f_plus, &self.params).psi);
                r.regime = Regime::Relaxed;
            } else if !h.first && self.variant == Variant::Reconvexified {
                r.p = h.p_k;
                r.a = h.a_k;
                r.energy = h.p_k * (f - h.f_k);
                r.regime = Regime::FullyDamaged;
            } else {
                let (w, p, a, beta) = self.condensed(u, h.beta_k);
                (r.energy, r.p, r.a, r.beta) = (w, p, a, beta);
                r.beta_plus = beta;
                r.beta_minus = beta;
            }
        }
        r.sigma = r.p;
        Ok(r)
    }

    /// Trial response at stretch `f`; the history is not modified.
    pub fn response(&self, f: f64, h: &PointHistory) -> Result<PointResponse> {
        let u = uniaxial(f, &self.params)?;
        if self.is_unloading(f, h) {
            let top = self.loading(h.f_max_k, &uniaxial_unchecked(h.f_max_k, &self.params), h)?;
            let psi_max = uniaxial_unchecked(h.f_max_k, &self.params).psi;
            let p = h.eta_k * u.dpsi;
            return Ok(PointResponse {
                p,
                a: h.eta_k * u.d2psi,
                sigma: p,
                xi: h.xi_k,
                d: h.d_k,
                beta: h.beta_k.max(u.psi),
                beta_plus: h.beta_plus_k,
                beta_minus: h.beta_minus_k,
                f_minus: h.f_minus_k,
                f_plus: h.f_plus_k,
                regime: Regime::Unloading,
                energy: h.eta_k * (u.psi - psi_max) + top.energy,
            });
        }
        let r = self.loading(f, &u, h)?;
        if !(r.p.is_finite() && r.a.is_finite()) {
            return Err(Error::Numerical(format!("non-finite response at F = {f}: {r:?}, history {h:?}")));
        }
        Ok(r)
    }

    /// Response at `f` together with the history to commit if the increment
    /// is accepted.
    pub fn evaluate(&self, f: f64, h: &PointHistory) -> Result<(PointResponse, PointHistory)> {
        let r = self.response(f, h)?;
        let mut n = h.clone();
        n.f_k = f;
        n.beta_k = r.beta.max(h.beta_k);
        n.p_k = r.p;
        n.a_k = r.a;
        match r.regime {
            Regime::Relaxed => {
                n.f_minus_k = r.f_minus;
                n.f_plus_k = r.f_plus;
                n.beta_minus_k = r.beta_minus;
                n.beta_plus_k = r.beta_plus;
                n.xi_k = r.xi;
                n.d_k = r.d;
                n.first = false;
                if self.variant == Variant::FixedHull {
                    n.hull_fixed = true;
                }
            }
            Regime::Convex => {
                n.beta_plus_k = r.beta_plus;
                n.beta_minus_k = r.beta_minus;
                n.first = true;
            }
            Regime::FullyDamaged => n.frozen = true,
            Regime::Unloading => {}
        }
        if r.regime != Regime::Unloading && f >= h.f_max_k - UNLOAD_TOL {
            n.f_max_k = h.f_max_k.max(f);
            n.eta_k = capture_unloading_eta(&n, f, &self.params)?;
        }
        if self.variant != Variant::Unrelaxed && !n.hull_fixed && !n.frozen && n.beta_k != h.beta_k {
            n.segments = self.relaxed_segments(n.beta_k);
        }
        Ok((r, n))
    }

    /// Stress derivative by finite differences with the history held fixed.
    ///
    /// Central differences are used unless the two probes fall into different
    /// regimes, in which case the one-sided difference on the side of `f` is
    /// taken.
    pub fn tangent(&self, f: f64, h: &PointHistory) -> Result<f64> {
        let step = 1e-5 * f.max(1.0);
        let mid = self.response(f, h)?;
        let up = self.response(f + step, h)?;
        let down = self.response(f - step, h)?;
        Ok(match (up.regime == mid.regime, down.regime == mid.regime) {
            (true, true) | (false, false) => (up.p - down.p) / (2.0 * step),
            (true, false) => (up.p - mid.p) / step,
            (false, true) => (mid.p - down.p) / step,
        })
    }
}

/// Secant factor that makes the unloading stress `η ψ⁰'` continuous at the
/// turning point `f_turn`, using the committed stress `hist.p_k`.
pub fn capture_unloading_eta(hist: &PointHistory, f_turn: f64, params: &MaterialParams) -> Result<f64> {
    let dpsi = uniaxial(f_turn, params)?.dpsi;
    let eta = if dpsi.abs() < 1e-12 { 1.0 - damage_unchecked(hist.beta_k, params) } else { hist.p_k / dpsi };
    Ok(eta.clamp(0.0, 1.0))
}

/// One row of a material-point trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub f: f64,
    pub response: PointResponse,
}

/// Drives a single point through a stretch program, committing every step.
pub fn run_program(model: &MaterialModel, stretches: &[f64]) -> Result<Vec<TraceRow>> {
    let mut h = model.virgin_history();
    let mut out = Vec::with_capacity(stretches.len());
    for (step, &f) in stretches.iter().enumerate() {
        let (r, n) = model.evaluate(f, &h).map_err(|e| Error::Solver { step, message: e.to_string() })?;
        h = n;
        out.push(TraceRow { step, f, response: r });
    }
    Ok(out)
}
