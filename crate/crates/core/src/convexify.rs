//! Lower convex envelope of a sampled one-dimensional potential.
//!
//! The potential is sampled on a uniform grid and its lower hull is built with
//! a single monotone-chain pass. Hull segments longer than two grid spacings
//! are the relaxed (phase-mixture) intervals; shorter ones are treated as
//! discretization noise of a convex stretch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain and resolution of the convexification grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub f_min: f64,
    pub f_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(f_min: f64, f_max: f64, n_points: usize) -> Self {
        Self { f_min, f_max, n_points }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_min < self.f_max) || !self.f_min.is_finite() || !self.f_max.is_finite() {
            return Err(Error::Spec(format!("grid needs f_min < f_max, got [{}, {}]", self.f_min, self.f_max)));
        }
        if self.n_points < 3 {
            return Err(Error::Spec(format!("grid needs at least 3 points, got {}", self.n_points)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.f_max - self.f_min) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn abscissa(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.f_max
        } else {
            self.f_min + i as f64 * self.spacing()
        }
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_min && f <= self.f_max
    }
}

/// A potential sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ConvexGrid {
    pub fn abscissa(&self, i: usize) -> f64 {
        self.spec.abscissa(i)
    }
}

/// Supporting points of the hull piece containing a queried stretch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexSegment {
    pub f_minus: f64,
    pub w_minus: f64,
    pub f_plus: f64,
    pub w_plus: f64,
    pub slope: f64,
    /// Fraction of the strongly strained phase.
    pub xi: f64,
    /// Spread of the two phases relative to the queried stretch.
    pub d: f64,
}

impl ConvexSegment {
    pub fn is_relaxed(&self) -> bool {
        self.f_plus > self.f_minus
    }
}

pub fn sample_potential<E>(eval: E, spec: GridSpec) -> Result<ConvexGrid>
where
    E: Fn(f64) -> Result<f64>,
{
    spec.validate()?;
    let values = (0..spec.n_points)
        .map(|i| {
            let v = eval(spec.abscissa(i)).map_err(|e| Error::Sample { index: i, source: Box::new(e) })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Sample { index: i, source: Box::new(Error::Numerical(format!("non-finite value {v}"))) })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvexGrid { spec, values })
}

/// Lower hull of points with strictly increasing abscissae, returned as
/// indices. Points within `tol` of a hull edge are dropped.
pub(crate) fn lower_hull_indices<X>(n: usize, x: X, y: &[f64], tol: f64, out: &mut Vec<usize>)
where
    X: Fn(usize) -> f64,
{
    out.clear();
    for i in 0..n {
        let (xi, yi) = (x(i), y[i]);
        while out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let cross = (x(b) - x(a)) * (yi - y[a]) - (y[b] - y[a]) * (xi - x(a));
            if cross <= tol {
                out.pop();
            } else {
                break;
            }
        }
        out.push(i);
    }
}

fn cross_tolerance(grid: &ConvexGrid) -> f64 {
    let scale = grid.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    1e-14 * scale * (grid.spec.f_max - grid.spec.f_min)
}

pub fn lower_convex_hull(grid: &ConvexGrid) -> Vec<usize> {
    let mut out = Vec::with_capacity(grid.values.len());
    lower_hull_indices(grid.values.len(), |i| grid.abscissa(i), &grid.values, cross_tolerance(grid), &mut out);
    out
}

/// Number of grid spacings a hull edge must exceed to count as relaxed.
pub const RELAXED_MIN_SPAN: usize = 2;

pub fn query_segment(hull: &[usize], grid: &ConvexGrid, f: f64) -> Result<ConvexSegment> {
    let spec = &grid.spec;
    if !spec.contains(f) || hull.len() < 2 {
        return Err(Error::Range { value: f, min: spec.f_min, max: spec.f_max });
    }
    // last hull vertex with abscissa <= f
    let k = hull.partition_point(|&i| grid.abscissa(i) <= f).clamp(1, hull.len() - 1) - 1;
    let (a, b) = (hull[k], hull[k + 1]);
    let (fa, fb) = (grid.abscissa(a), grid.abscissa(b));
    let (wa, wb) = (grid.values[a], grid.values[b]);
    let slope = (wb - wa) / (fb - fa);
    if b - a > RELAXED_MIN_SPAN {
        let xi = (f - fa) / (fb - fa);
        return Ok(ConvexSegment { f_minus: fa, w_minus: wa, f_plus: fb, w_plus: wb, slope, xi, d: (fb - fa) / f });
    }
    let node = if f - fa <= fb - f { fa } else { fb };
    let w = wa + slope * (node - fa);
    Ok(ConvexSegment { f_minus: node, w_minus: w, f_plus: node, w_plus: w, slope, xi: 0.0, d: 0.0 })
}

/// Tangent construction from a fixed left support point.
///
/// Returns the segment from `(f_anchor, w_anchor)` to the grid node right of
/// the anchor (and not left of `search_from`) with the smallest secant slope.
pub fn anchored_hull(grid: &ConvexGrid, f_anchor: f64, w_anchor: f64, search_from: f64) -> Result<ConvexSegment> {
    let lo = f_anchor.max(search_from);
    let mut best: Option<(usize, f64)> = None;
    for (i, &w) in grid.values.iter().enumerate() {
        let g = grid.abscissa(i);
        if g <= f_anchor || g < lo {
            continue;
        }
        let s = (w - w_anchor) / (g - f_anchor);
        if best.is_none_or(|(_, bs)| s < bs) {
            best = Some((i, s));
        }
    }
    let (i, slope) = best.ok_or(Error::Range { value: lo, min: grid.spec.f_min, max: grid.spec.f_max })?;
    let f_plus = grid.abscissa(i);
    Ok(ConvexSegment {
        f_minus: f_anchor,
        w_minus: w_anchor,
        f_plus,
        w_plus: grid.values[i],
        slope,
        xi: 0.0,
        d: (f_plus - f_anchor) / lo.max(f_anchor),
    })
}
