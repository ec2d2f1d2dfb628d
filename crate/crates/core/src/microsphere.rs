//! Unit-sphere quadrature and homogenization of fiber responses.
//!
//! Every direction `A` of a [`SphereScheme`] carries a uniaxial material
//! point stretched by `|F A|`. Stress and tangent follow from differentiating
//! the averaged fiber energy `Σ w W(|F A|)`:
//!
//! `P = Σ w P^α a ⊗ A`, with `a = F A / |F A|`,
//!
//! and the tangent picks up the geometric term from the rotation of `a`.

use std::path::Path;

use nalgebra::{Matrix2, Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::material_point::{MaterialModel, PointHistory, PointResponse, Regime};

/// Fourth-order tangent stored as a 9×9 matrix, row `3i+J`, column `3k+L`.
pub type Tangent3 = SMatrix<f64, 9, 9>;
pub type Tangent2 = SMatrix<f64, 4, 4>;

/// Directions and weights of a quadrature rule on the unit sphere.
///
/// Antipodal pairs are merged on load (fiber responses are even in the
/// direction), so `len()` may be half the number of tabulated points.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereScheme {
    pub name: String,
    pub directions: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    /// Number of points in the tabulated (unmerged) rule.
    pub tabulated_points: usize,
}

const BUILTIN: &[(&str, &str)] = &[
    ("BazantOh-2x21", include_str!("../data/spheres/BazantOh-2x21.txt")),
    ("BazantOh-61x2", include_str!("../data/spheres/BazantOh-61x2.txt")),
    ("SpherialDesign-225", include_str!("../data/spheres/SpherialDesign-225.txt")),
];

impl SphereScheme {
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    /// Loads a bundled scheme by name, or a scheme file if `name` is a path.
    pub fn by_name(name: &str) -> Result<Self> {
        if let Some((n, text)) = BUILTIN.iter().find(|(n, _)| *n == name) {
            return Self::parse(n, text);
        }
        let path = Path::new(name);
        if path.is_file() {
            let text = std::fs::read_to_string(path)?;
            return Self::parse(name, &text);
        }
        let known: Vec<_> = Self::builtin_names().collect();
        Err(Error::Spec(format!("unknown sphere scheme {name:?}; bundled schemes: {known:?}")))
    }

    /// Parses `x y z w` lines; `#` starts a comment.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Spec(format!("scheme {name}, line {}: {e}", lineno + 1)))?;
            if nums.len() != 4 {
                return Err(Error::Spec(format!("scheme {name}, line {}: expected x y z w", lineno + 1)));
            }
            let v = Vector3::new(nums[0], nums[1], nums[2]);
            let norm = v.norm();
            if !(norm > 0.0) || !(nums[3] > 0.0) {
                return Err(Error::Spec(format!("scheme {name}, line {}: zero direction or weight", lineno + 1)));
            }
            pts.push((v / norm, nums[3]));
        }
        let tabulated_points = pts.len();
        let mut directions: Vec<Vector3<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (v, w) in pts {
            match directions.iter().position(|d| (d + v).norm() < 1e-12) {
                Some(k) => weights[k] += w,
                None => {
                    directions.push(v);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let scheme = Self { name: name.to_string(), directions, weights, tabulated_points };
        let err = (scheme.dyad_sum() - Matrix3::identity() / 3.0).abs().max();
        if err > 1e-6 {
            return Err(Error::Spec(format!("scheme {name} violates Σ w A⊗A = I/3 by {err:e}")));
        }
        Ok(scheme)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Merges each direction with its mirror image in the x3 = 0 plane.
    ///
    /// Under plane strain both directions of such a pair see the same stretch
    /// and carry the same in-plane stress, tangent and energy; only the
    /// out-of-plane shear terms differ in sign, and they cancel. Results of
    /// the reduced scheme are valid for those in-plane quantities only.
    pub fn plane_strain_reduced(&self) -> Self {
        let mut directions: Vec<Vector3<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (d, &w) in self.directions.iter().zip(&self.weights) {
            let m = Vector3::new(d.x, d.y, d.z.abs());
            match directions.iter().position(|e| (e - m).norm() < 1e-12 || (e + m).norm() < 1e-12) {
                Some(k) => weights[k] += w,
                None => {
                    directions.push(m);
                    weights.push(w);
                }
            }
        }
        Self { name: self.name.clone(), directions, weights, tabulated_points: self.tabulated_points }
    }

    pub fn dyad_sum(&self) -> Matrix3<f64> {
        self.directions.iter().zip(&self.weights).fold(Matrix3::zeros(), |m, (a, w)| m + *w * a * a.transpose())
    }
}

pub fn fiber_stretch(f: &Matrix3<f64>, a: &Vector3<f64>) -> f64 {
    (f * a).norm()
}

/// Embeds an in-plane deformation gradient into 3D with `F33 = 1`.
pub fn plane_strain_embed(f2: &Matrix2<f64>) -> Matrix3<f64> {
    let mut f = Matrix3::identity();
    f.fixed_view_mut::<2, 2>(0, 0).copy_from(f2);
    f
}

/// Extracts the in-plane part of a 3D tangent (rows `2i+J`, columns `2k+L`).
pub fn plane_tangent(a: &Tangent3) -> Tangent2 {
    let mut out = Tangent2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + j, 2 * k + l)] = a[(3 * i + j, 3 * k + l)];
                }
            }
        }
    }
    out
}

/// One history per direction of a scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberBundleHistory {
    pub fibers: Vec<PointHistory>,
}

impl FiberBundleHistory {
    pub fn virgin(model: &MaterialModel, scheme: &SphereScheme) -> Self {
        let h = model.virgin_history();
        Self { fibers: vec![h; scheme.len()] }
    }
}

/// Homogenized response of a bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleResponse {
    pub energy: f64,
    pub p: Matrix3<f64>,
    pub a: Tangent3,
    /// Weighted fiber averages of ξ and β, used for field output.
    pub xi: f64,
    pub beta: f64,
    pub relaxed_fraction: f64,
}

#[derive(Clone)]
struct Partial {
    energy: f64,
    p: Matrix3<f64>,
    a: Tangent3,
    geo: Matrix3<f64>,
    xi: f64,
    beta: f64,
    relaxed: f64,
}

impl Partial {
    fn zero() -> Self {
        Self {
            energy: 0.0,
            p: Matrix3::zeros(),
            a: Tangent3::zeros(),
            geo: Matrix3::zeros(),
            xi: 0.0,
            beta: 0.0,
            relaxed: 0.0,
        }
    }

    fn add(mut self, o: &Partial) -> Self {
        self.energy += o.energy;
        self.p += o.p;
        self.a += o.a;
        self.geo += o.geo;
        self.xi += o.xi;
        self.beta += o.beta;
        self.relaxed += o.relaxed;
        self
    }

    fn accumulate(&mut self, f: &Matrix3<f64>, dir: &Vector3<f64>, w: f64, lam: f64, r: &PointResponse) {
        let a = f * dir / lam;
        let mut v = SMatrix::<f64, 9, 1>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                v[3 * i + j] = a[i] * dir[j];
            }
        }
        let ratio = r.p / lam;
        self.energy += w * r.energy;
        for (k, vk) in v.iter().enumerate() {
            self.p[(k / 3, k % 3)] += w * r.p * vk;
        }
        self.a.ger(w * (r.a - ratio), &v, &v, 1.0);
        self.geo += (w * ratio) * dir * dir.transpose();
        self.xi += w * r.xi;
        self.beta += w * r.beta;
        if r.regime == Regime::Relaxed {
            self.relaxed += w;
        }
    }

    fn finish(mut self) -> BundleResponse {
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    self.a[(3 * i + j, 3 * i + l)] += self.geo[(j, l)];
                }
            }
        }
        BundleResponse {
            energy: self.energy,
            p: self.p,
            a: self.a,
            xi: self.xi,
            beta: self.beta,
            relaxed_fraction: self.relaxed,
        }
    }
}

const LEAF: usize = 16;

fn pairwise<E>(range: std::ops::Range<usize>, leaf: &mut E) -> Result<Partial>
where
    E: FnMut(std::ops::Range<usize>) -> Result<Partial>,
{
    if range.len() <= LEAF {
        return leaf(range);
    }
    let mid = range.start + range.len() / 2;
    let left = pairwise(range.start..mid, leaf)?;
    let right = pairwise(mid..range.end, leaf)?;
    Ok(left.add(&right))
}

fn check_f(f: &Matrix3<f64>) -> Result<()> {
    let j = f.determinant();
    if j > 0.0 && j.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDeformation(format!("det F = {j}")))
    }
}

/// Trial response of a bundle; histories are not modified.
pub fn homogenize_trial(
    f: &Matrix3<f64>,
    bundle: &FiberBundleHistory,
    scheme: &SphereScheme,
    model: &MaterialModel,
) -> Result<BundleResponse> {
    check_f(f)?;
    let mut leaf = |range: std::ops::Range<usize>| {
        let mut part = Partial::zero();
        for k in range {
            let lam = fiber_stretch(f, &scheme.directions[k]);
            let r = model
                .response(lam, &bundle.fibers[k])
                .map_err(|e| Error::Fiber { direction: k, source: Box::new(e) })?;
            part.accumulate(f, &scheme.directions[k], scheme.weights[k], lam, &r);
        }
        Ok(part)
    };
    Ok(pairwise(0..scheme.len(), &mut leaf)?.finish())
}

/// Response of a bundle together with the histories to commit.
pub fn homogenize(
    f: &Matrix3<f64>,
    bundle: &FiberBundleHistory,
    scheme: &SphereScheme,
    model: &MaterialModel,
) -> Result<(BundleResponse, FiberBundleHistory)> {
    check_f(f)?;
    let mut next = Vec::with_capacity(scheme.len());
    let mut leaf = |range: std::ops::Range<usize>| {
        let mut part = Partial::zero();
        for k in range {
            let lam = fiber_stretch(f, &scheme.directions[k]);
            let (r, h) = model
                .evaluate(lam, &bundle.fibers[k])
                .map_err(|e| Error::Fiber { direction: k, source: Box::new(e) })?;
            part.accumulate(f, &scheme.directions[k], scheme.weights[k], lam, &r);
            next.push(h);
        }
        Ok(part)
    };
    let resp = pairwise(0..scheme.len(), &mut leaf)?.finish();
    Ok((resp, FiberBundleHistory { fibers: next }))
}
