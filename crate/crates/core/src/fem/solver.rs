//! Total-Lagrangian assembly and a Newton driver for Dirichlet load programs.
//!
//! Equilibrium is sought as a minimizer of the incremental energy
//! `Σ_gp w |J| W(F)`; each Newton direction is checked with an Armijo line
//! search on that energy. After convergence the free-free stiffness is
//! inspected and, if it has a negative pivot, the state is pushed along the
//! corresponding direction and re-minimized, so that unstable homogeneous
//! states give way to localized ones.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use super::skyline::Skyline;
use crate::damage::damage_unchecked;
use crate::error::{Error, Result};
use crate::hyperelastic::uniaxial_unchecked;
use crate::material_point::{MaterialModel, PointHistory, Regime};
use crate::microsphere::{
    homogenize, homogenize_trial, plane_strain_embed, FiberBundleHistory, SphereScheme, Tangent3,
};

/// One prescribed displacement component on a node set, applied
/// proportionally to the load factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub set: String,
    pub component: usize,
    #[serde(default)]
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletProgram {
    pub n_steps: usize,
    pub constraints: Vec<Constraint>,
    /// Constraint (index into `constraints`) whose reaction is reported.
    #[serde(default)]
    pub driven: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_bisections: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub stability_check: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            max_bisections: 4,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 20,
            stability_check: true,
        }
    }
}

/// Material state at one quadrature point.
#[derive(Clone, Debug, PartialEq)]
pub enum GpState {
    Point(PointHistory),
    Bundle(FiberBundleHistory),
}

#[derive(Clone, Debug)]
struct GaussPoint {
    dndx: Vec<[f64; 3]>,
    wdet: f64,
}

/// Mesh plus materials, with precomputed reference gradients.
#[derive(Clone, Debug)]
pub struct FeProblem {
    pub mesh: Mesh,
    /// One model per element group.
    pub materials: Vec<MaterialModel>,
    pub scheme: Option<SphereScheme>,
    geom: Vec<Vec<GaussPoint>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub load_factor: f64,
    pub displacement: f64,
    pub reaction: f64,
    /// Reaction on all other constrained dofs of the driven component.
    pub reaction_other: f64,
    pub iterations: usize,
    pub residual: f64,
    pub perturbations: usize,
    pub min_dissipation: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementField {
    pub element: usize,
    /// Volume-averaged Cauchy stress: xx, yy, zz, xy, yz, xz.
    pub sigma: [f64; 6],
    pub xi: f64,
    pub beta: f64,
    pub relaxed_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub steps: Vec<StepReport>,
    pub fields: Vec<ElementField>,
    pub displacements: Vec<f64>,
    /// Diagnostic of the step that could not be solved, if any.
    pub failure: Option<String>,
}

struct Assembly {
    energy: f64,
    residual: Vec<f64>,
    stiffness: Option<Skyline>,
}

struct ElementOut {
    energy: f64,
    r: Vec<f64>,
    k: Vec<f64>,
}

/// Drops the out-of-plane shear of a plane-strain stress, which vanishes
/// for the full scheme and is not represented by the reduced one.
fn in_plane(dim: usize, mut p: Matrix3<f64>) -> Matrix3<f64> {
    if dim == 2 {
        for k in 0..2 {
            p[(k, 2)] = 0.0;
            p[(2, k)] = 0.0;
        }
    }
    p
}

/// Material response at a quadrature point in a dimension-independent form.
struct GpResponse {
    energy: f64,
    p: Matrix3<f64>,
    a: Tangent3,
}

impl FeProblem {
    pub fn new(mesh: Mesh, materials: Vec<MaterialModel>, scheme: Option<SphereScheme>) -> Result<Self> {
        mesh.check()?;
        let groups = mesh.elements.iter().map(|e| e.group).max().map_or(0, |g| g + 1);
        if materials.len() < groups {
            return Err(Error::Spec(format!("mesh uses {groups} material groups, {} given", materials.len())));
        }
        if mesh.dim > 1 && scheme.is_none() {
            return Err(Error::Spec("2D and 3D problems need a sphere scheme".into()));
        }
        let d = mesh.dim;
        let mut geom = Vec::with_capacity(mesh.elements.len());
        let (mut n, mut dn) = (Vec::new(), Vec::new());
        for el in &mesh.elements {
            let mut gps = Vec::new();
            for (xi, w) in el.kind.gauss_rule() {
                el.kind.shape(xi, &mut n, &mut dn);
                let mut j = nalgebra::DMatrix::<f64>::zeros(d, d);
                for (a, &node) in el.nodes.iter().enumerate() {
                    for r in 0..d {
                        for c in 0..d {
                            j[(r, c)] += mesh.nodes[node][r] * dn[a][c];
                        }
                    }
                }
                let det = j.determinant();
                let jinv = j.try_inverse().ok_or_else(|| Error::Spec("singular element map".into()))?;
                let dndx = dn
                    .iter()
                    .map(|g| {
                        let mut out = [0.0; 3];
                        for c in 0..d {
                            out[c] = (0..d).map(|r| g[r] * jinv[(r, c)]).sum();
                        }
                        out
                    })
                    .collect();
                gps.push(GaussPoint { dndx, wdet: w * det });
            }
            geom.push(gps);
        }
        let scheme = if mesh.dim == 2 { scheme.map(|s| s.plane_strain_reduced()) } else { scheme };
        Ok(Self { mesh, materials, scheme, geom })
    }

    pub fn virgin_states(&self) -> Vec<Vec<GpState>> {
        self.mesh
            .elements
            .iter()
            .zip(&self.geom)
            .map(|(el, gps)| {
                let model = &self.materials[el.group];
                let s = match &self.scheme {
                    Some(sch) if self.mesh.dim > 1 => GpState::Bundle(FiberBundleHistory::virgin(model, sch)),
                    _ => GpState::Point(model.virgin_history()),
                };
                vec![s; gps.len()]
            })
            .collect()
    }

    fn deformation(&self, e: usize, gp: &GaussPoint, u: &[f64]) -> Matrix3<f64> {
        let d = self.mesh.dim;
        let mut f = Matrix3::identity();
        for (a, &node) in self.mesh.elements[e].nodes.iter().enumerate() {
            for i in 0..d {
                let ui = u[node * d + i];
                for j in 0..d {
                    f[(i, j)] += ui * gp.dndx[a][j];
                }
            }
        }
        f
    }

    fn gp_response(&self, e: usize, f: &Matrix3<f64>, state: &GpState) -> Result<GpResponse> {
        let model = &self.materials[self.mesh.elements[e].group];
        match state {
            GpState::Point(h) => {
                let r = model.response(f[(0, 0)], h)?;
                let mut p = Matrix3::zeros();
                let mut a = Tangent3::zeros();
                p[(0, 0)] = r.p;
                a[(0, 0)] = r.a;
                Ok(GpResponse { energy: r.energy, p, a })
            }
            GpState::Bundle(b) => {
                let scheme = self.scheme.as_ref().expect("checked at construction");
                let f3 = if self.mesh.dim == 2 {
                    plane_strain_embed(&f.fixed_view::<2, 2>(0, 0).into_owned())
                } else {
                    *f
                };
                let r = homogenize_trial(&f3, b, scheme, model)?;
                Ok(GpResponse { energy: r.energy, p: in_plane(self.mesh.dim, r.p), a: r.a })
            }
        }
    }

    fn element(&self, e: usize, u: &[f64], states: &[GpState], want_k: bool) -> Result<ElementOut> {
        let d = self.mesh.dim;
        let nn = self.mesh.elements[e].nodes.len();
        let nd = nn * d;
        let mut out = ElementOut { energy: 0.0, r: vec![0.0; nd], k: if want_k { vec![0.0; nd * nd] } else { Vec::new() } };
        for (g, gp) in self.geom[e].iter().enumerate() {
            let f = self.deformation(e, gp, u);
            let resp = self
                .gp_response(e, &f, &states[g])
                .map_err(|err| Error::Material { element: e, point: g, source: Box::new(err) })?;
            out.energy += gp.wdet * resp.energy;
            for a in 0..nn {
                for i in 0..d {
                    let mut s = 0.0;
                    for j in 0..d {
                        s += resp.p[(i, j)] * gp.dndx[a][j];
                    }
                    out.r[a * d + i] += gp.wdet * s;
                }
            }
            if want_k {
                let mut t = [[0.0; 3]; 3];
                for a in 0..nn {
                    for i in 0..d {
                        for (k, tk) in t.iter_mut().enumerate().take(d) {
                            for (l, tkl) in tk.iter_mut().enumerate().take(d) {
                                *tkl = (0..d).map(|j| gp.dndx[a][j] * resp.a[(3 * i + j, 3 * k + l)]).sum::<f64>();
                            }
                        }
                        let row = (a * d + i) * nd;
                        for b in 0..nn {
                            for k in 0..d {
                                let v: f64 = (0..d).map(|l| t[k][l] * gp.dndx[b][l]).sum();
                                out.k[row + b * d + k] += gp.wdet * v;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn element_dofs(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let d = self.mesh.dim;
        self.mesh.elements[e].nodes.iter().flat_map(move |&n| (0..d).map(move |c| n * d + c))
    }

    fn assemble(&self, u: &[f64], states: &[Vec<GpState>], dofs: &DofMap, want_k: bool) -> Result<Assembly> {
        let outs: Vec<ElementOut> = (0..self.mesh.elements.len())
            .into_par_iter()
            .map(|e| self.element(e, u, &states[e], want_k))
            .collect::<Result<_>>()?;
        let mut residual = vec![0.0; self.mesh.n_dofs()];
        let mut stiffness = want_k.then(|| Skyline::with_profile(dofs.profile.clone()));
        let mut energy = 0.0;
        for (e, out) in outs.iter().enumerate() {
            energy += out.energy;
            let gdofs: Vec<usize> = self.element_dofs(e).collect();
            for (a, &ga) in gdofs.iter().enumerate() {
                residual[ga] += out.r[a];
            }
            if let Some(k) = stiffness.as_mut() {
                let nd = gdofs.len();
                for (a, &ga) in gdofs.iter().enumerate() {
                    let Some(fa) = dofs.free[ga] else { continue };
                    for (b, &gb) in gdofs.iter().enumerate() {
                        let Some(fb) = dofs.free[gb] else { continue };
                        if fa <= fb {
                            k.add(fa, fb, out.k[a * nd + b]);
                        }
                    }
                }
            }
        }
        Ok(Assembly { energy, residual, stiffness })
    }

    /// Internal energy, internal force vector and free-dof stiffness at `u`.
    pub fn assemble_dense(
        &self,
        u: &[f64],
        states: &[Vec<GpState>],
        program: &DirichletProgram,
    ) -> Result<(f64, Vec<f64>, nalgebra::DMatrix<f64>, Vec<usize>)> {
        let dofs = DofMap::new(self, program)?;
        let asm = self.assemble(u, states, &dofs, true)?;
        let nf = dofs.n_free;
        let k = asm.stiffness.expect("requested");
        let dense = nalgebra::DMatrix::from_fn(nf, nf, |i, j| k.get(i, j));
        let free: Vec<usize> = (0..self.mesh.n_dofs()).filter(|&g| dofs.free[g].is_some()).collect();
        Ok((asm.energy, asm.residual, dense, free))
    }

    fn commit(&self, u: &[f64], states: &[Vec<GpState>]) -> Result<(Vec<Vec<GpState>>, Vec<ElementField>, f64)> {
        let res: Vec<(Vec<GpState>, ElementField, f64)> = (0..self.mesh.elements.len())
            .into_par_iter()
            .map(|e| self.commit_element(e, u, &states[e]))
            .collect::<Result<_>>()?;
        let mut min_diss = f64::INFINITY;
        let mut new_states = Vec::with_capacity(res.len());
        let mut fields = Vec::with_capacity(res.len());
        for (s, f, d) in res {
            new_states.push(s);
            fields.push(f);
            min_diss = min_diss.min(d);
        }
        Ok((new_states, fields, min_diss))
    }

    fn commit_element(&self, e: usize, u: &[f64], states: &[GpState]) -> Result<(Vec<GpState>, ElementField, f64)> {
        let model = &self.materials[self.mesh.elements[e].group];
        let dissipation = |f: f64, old: &PointHistory, new: &PointHistory| {
            let psi = uniaxial_unchecked(f, &model.params).psi;
            psi * (damage_unchecked(new.beta_k, &model.params) - damage_unchecked(old.beta_k, &model.params))
        };
        let mut out = Vec::with_capacity(states.len());
        let mut field = ElementField { element: e, sigma: [0.0; 6], xi: 0.0, beta: 0.0, relaxed_fraction: 0.0 };
        let mut vol = 0.0;
        let mut min_diss = f64::INFINITY;
        for (g, gp) in self.geom[e].iter().enumerate() {
            let f = self.deformation(e, gp, u);
            let wrap = |err| Error::Material { element: e, point: g, source: Box::new(err) };
            let (p, xi, beta, relaxed, f3, next) = match &states[g] {
                GpState::Point(h) => {
                    let (r, n) = model.evaluate(f[(0, 0)], h).map_err(wrap)?;
                    min_diss = min_diss.min(dissipation(f[(0, 0)], h, &n));
                    let mut p = Matrix3::zeros();
                    p[(0, 0)] = r.p;
                    // uniaxial path: J = F, so σ = P
                    let mut f1 = Matrix3::identity();
                    f1[(0, 0)] = f[(0, 0)];
                    let rel = if r.regime == Regime::Relaxed { 1.0 } else { 0.0 };
                    (p, r.xi, r.beta, rel, f1, GpState::Point(n))
                }
                GpState::Bundle(b) => {
                    let scheme = self.scheme.as_ref().expect("checked at construction");
                    let f3 = if self.mesh.dim == 2 {
                        plane_strain_embed(&f.fixed_view::<2, 2>(0, 0).into_owned())
                    } else {
                        f
                    };
                    let (r, n) = homogenize(&f3, b, scheme, model).map_err(wrap)?;
                    for (k, (old, new)) in b.fibers.iter().zip(&n.fibers).enumerate() {
                        let lam = (f3 * scheme.directions[k]).norm();
                        min_diss = min_diss.min(dissipation(lam, old, new));
                    }
                    (in_plane(self.mesh.dim, r.p), r.xi, r.beta, r.relaxed_fraction, f3, GpState::Bundle(n))
                }
            };
            let sigma = if self.mesh.dim == 1 {
                p
            } else {
                p * f3.transpose() / f3.determinant()
            };
            let comps = [sigma[(0, 0)], sigma[(1, 1)], sigma[(2, 2)], sigma[(0, 1)], sigma[(1, 2)], sigma[(0, 2)]];
            for (acc, c) in field.sigma.iter_mut().zip(comps) {
                *acc += gp.wdet * c;
            }
            field.xi += gp.wdet * xi;
            field.beta += gp.wdet * beta;
            field.relaxed_fraction += gp.wdet * relaxed;
            vol += gp.wdet;
            out.push(next);
        }
        field.sigma.iter_mut().for_each(|s| *s /= vol);
        field.xi /= vol;
        field.beta /= vol;
        field.relaxed_fraction /= vol;
        Ok((out, field, min_diss))
    }
}

struct DofMap {
    free: Vec<Option<usize>>,
    n_free: usize,
    profile: Vec<usize>,
    /// (global dof, final prescribed value)
    prescribed: Vec<(usize, f64)>,
    driven: Vec<usize>,
    other_same_component: Vec<usize>,
}

impl DofMap {
    fn new(problem: &FeProblem, program: &DirichletProgram) -> Result<Self> {
        let mesh = &problem.mesh;
        let d = mesh.dim;
        let mut value: Vec<Option<f64>> = vec![None; mesh.n_dofs()];
        let mut owner: Vec<Option<usize>> = vec![None; mesh.n_dofs()];
        for (ci, c) in program.constraints.iter().enumerate() {
            if c.component >= d {
                return Err(Error::Spec(format!("constraint on component {} of a {d}D mesh", c.component)));
            }
            for &n in mesh.set(&c.set)? {
                let g = n * d + c.component;
                match value[g] {
                    Some(v) if v != c.value => {
                        return Err(Error::Spec(format!(
                            "node {n} component {} prescribed twice with different values ({v} and {})",
                            c.component, c.value
                        )))
                    }
                    _ => {
                        value[g] = Some(c.value);
                        owner[g].get_or_insert(ci);
                    }
                }
            }
        }
        let driven_c = program
            .constraints
            .get(program.driven)
            .ok_or_else(|| Error::Spec(format!("driven constraint index {} out of range", program.driven)))?;
        let driven: Vec<usize> = mesh.set(&driven_c.set)?.iter().map(|n| n * d + driven_c.component).collect();
        let other_same_component = (0..mesh.n_dofs())
            .filter(|g| g % d == driven_c.component && value[*g].is_some() && !driven.contains(g))
            .collect();
        let mut free = vec![None; mesh.n_dofs()];
        let mut n_free = 0;
        for g in 0..mesh.n_dofs() {
            if value[g].is_none() {
                free[g] = Some(n_free);
                n_free += 1;
            }
        }
        let mut profile: Vec<usize> = (0..n_free).collect();
        for e in 0..mesh.elements.len() {
            let fdofs: Vec<usize> = problem.element_dofs(e).filter_map(|g| free[g]).collect();
            if let Some(&lo) = fdofs.iter().min() {
                for &f in &fdofs {
                    profile[f] = profile[f].min(lo);
                }
            }
        }
        let prescribed = value.iter().enumerate().filter_map(|(g, v)| v.map(|v| (g, v))).collect();
        Ok(Self { free, n_free, profile, prescribed, driven, other_same_component })
    }

    fn free_part(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (g, f) in self.free.iter().enumerate() {
            if let Some(f) = f {
                out[*f] = full[g];
            }
        }
        out
    }

    fn add_free(&self, u: &mut [f64], delta: &[f64], alpha: f64) {
        for (g, f) in self.free.iter().enumerate() {
            if let Some(f) = f {
                u[g] += alpha * delta[*f];
            }
        }
    }

    fn apply(&self, u: &mut [f64], load: f64) {
        for &(g, v) in &self.prescribed {
            u[g] = v * load;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton direction for `K Δ = -r`.
///
/// Pivots that are zero relative to `k_ref` are pinned, so flat directions
/// (relaxed material has no stiffness) do not pick up arbitrary motion. If
/// the matrix is indefinite, the smallest shift `K + μI` with positive pivots
/// is used instead.
fn direction(k: &Skyline, r: &[f64], k_ref: f64, allow_pinning: bool) -> Result<Vec<f64>> {
    let floor = 1e-10 * k_ref;
    let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
    if let Ok(f) = k.factor_pinned(allow_pinning.then_some(floor)) {
        if f.d.iter().all(|&d| d > floor) {
            return Ok(f.solve(&neg_r));
        }
    }
    let mut mu = 1e-8 * k_ref;
    for _ in 0..24 {
        let mut ks = k.clone();
        ks.add_diagonal(mu);
        if let Ok(f) = ks.factor() {
            if f.d.iter().all(|&d| d > floor) {
                return Ok(f.solve(&neg_r));
            }
        }
        mu *= 10.0;
    }
    Err(Error::Numerical("stiffness could not be regularized".into()))
}

enum NewtonEnd {
    Converged { iterations: usize, residual: f64, asm: Assembly },
    Failed(String),
}

struct Driver<'a> {
    problem: &'a FeProblem,
    dofs: DofMap,
    settings: &'a SolverSettings,
    /// Stiffness scale of the virgin state, for pivot thresholds.
    k_ref: f64,
}

/// Residual (relative to `1 + r0`) up to which a stagnated Newton loop is
/// still accepted as converged.
const STAGNATION_RESIDUAL: f64 = 1e-5;

impl Driver<'_> {
    fn newton(&self, u: &mut Vec<f64>, states: &[Vec<GpState>], first: Option<Assembly>) -> NewtonEnd {
        let s = self.settings;
        let mut asm = match first {
            Some(a) => a,
            None => match self.problem.assemble(u, states, &self.dofs, true) {
                Ok(a) => a,
                Err(e) => return NewtonEnd::Failed(e.to_string()),
            },
        };
        let mut r = self.dofs.free_part(&asm.residual);
        let r0 = norm(&r);
        let tol = s.tolerance * (1.0 + r0);
        for it in 0..=s.max_iterations {
            let rn = norm(&r);
            if rn <= tol {
                return NewtonEnd::Converged { iterations: it, residual: rn, asm };
            }
            if it == s.max_iterations {
                break;
            }
            let k = asm.stiffness.as_ref().expect("full assembly");
            let mut delta = match direction(k, &r, self.k_ref, true) {
                Ok(d) => d,
                Err(e) => return NewtonEnd::Failed(e.to_string()),
            };
            let mut slope = dot(&r, &delta);
            if slope.abs() <= 1e-12 * (1.0 + asm.energy.abs()) {
                if rn <= STAGNATION_RESIDUAL * (1.0 + r0) {
                    return NewtonEnd::Converged { iterations: it, residual: rn, asm };
                }
                delta = match direction(k, &r, self.k_ref, false) {
                    Ok(d) => d,
                    Err(e) => return NewtonEnd::Failed(e.to_string()),
                };
                slope = dot(&r, &delta);
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            let mut fallback = None;
            for _ in 0..=s.max_backtracks {
                let mut ut = u.clone();
                self.dofs.add_free(&mut ut, &delta, alpha);
                if let Ok(trial) = self.problem.assemble(&ut, states, &self.dofs, true) {
                    if slope < 0.0 && trial.energy <= asm.energy + s.armijo * alpha * slope {
                        accepted = Some((ut, trial));
                        break;
                    }
                    let tr = norm(&self.dofs.free_part(&trial.residual));
                    if tr < rn && fallback.is_none() {
                        fallback = Some((ut, trial));
                    }
                }
                alpha *= s.backtrack;
            }
            let Some((ut, trial)) = accepted.or(fallback) else {
                return NewtonEnd::Failed(format!("line search failed at iteration {it}, residual {rn:e}"));
            };
            let step_norm = alpha * delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let u_scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let stagnated = (trial.energy - asm.energy).abs() <= 1e-12 * (1.0 + asm.energy.abs())
                && step_norm <= 1e-10 * (1.0 + u_scale)
                && norm(&self.dofs.free_part(&trial.residual)) <= STAGNATION_RESIDUAL * (1.0 + r0);
            *u = ut;
            asm = trial;
            r = self.dofs.free_part(&asm.residual);
            if stagnated {
                let rn = norm(&r);
                return NewtonEnd::Converged { iterations: it + 1, residual: rn, asm };
            }
        }
        NewtonEnd::Failed(format!("no convergence in {} iterations, residual {:e}", s.max_iterations, norm(&r)))
    }

    /// Newton followed by escapes from unstable equilibria.
    fn solve_stable(&self, u: &mut Vec<f64>, states: &[Vec<GpState>]) -> (NewtonEnd, usize) {
        let mut end = self.newton(u, states, None);
        let mut perturbations = 0;
        if !self.settings.stability_check {
            return (end, perturbations);
        }
        while perturbations < 3 {
            let NewtonEnd::Converged { iterations, asm, .. } = &end else { break };
            let k = asm.stiffness.as_ref().expect("full assembly");
            let Ok(f) = k.factor_pinned(Some(1e-10 * self.k_ref)) else { break };
            let Some((dj, v)) = f.negative_curvature() else { break };
            if dj >= -1e-8 * self.k_ref {
                break;
            }
            let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let u_scale = u.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
            let amp = 1e-3 * u_scale / vmax;
            let mut best: Option<(Vec<f64>, Assembly)> = None;
            for sign in [1.0, -1.0] {
                let mut ut = u.clone();
                self.dofs.add_free(&mut ut, &v, sign * amp);
                if let Ok(a) = self.problem.assemble(&ut, states, &self.dofs, true) {
                    if a.energy < asm.energy && best.as_ref().is_none_or(|(_, b)| a.energy < b.energy) {
                        best = Some((ut, a));
                    }
                }
            }
            let Some((ut, a)) = best else { break };
            let done = *iterations;
            perturbations += 1;
            *u = ut;
            end = match self.newton(u, states, Some(a)) {
                NewtonEnd::Converged { iterations, residual, asm } => {
                    NewtonEnd::Converged { iterations: iterations + done, residual, asm }
                }
                failed => failed,
            };
        }
        (end, perturbations)
    }
}

/// Runs a Dirichlet load program from the undeformed, virgin state.
///
/// `on_step` sees every converged step before the next one starts.
pub fn solve(
    problem: &FeProblem,
    program: &DirichletProgram,
    settings: &SolverSettings,
    mut on_step: impl FnMut(&StepReport),
) -> Result<SolveReport> {
    if program.n_steps == 0 {
        return Err(Error::Spec("load program needs at least one step".into()));
    }
    let dofs = DofMap::new(problem, program)?;
    let mut states = problem.virgin_states();
    let mut u = vec![0.0; problem.mesh.n_dofs()];
    let virgin = problem.assemble(&u, &states, &dofs, true)?;
    let k_ref = virgin.stiffness.as_ref().map_or(0.0, |k| k.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let driver = Driver { problem, dofs, settings, k_ref: if k_ref > 0.0 { k_ref } else { 1.0 } };
    let driven_value = program.constraints[program.driven].value;
    let mut u_prev: Option<(Vec<f64>, f64)> = None;
    let mut report = SolveReport::default();
    let mut load = 0.0;
    let dt_full = 1.0 / program.n_steps as f64;
    for step in 1..=program.n_steps {
        let target = step as f64 * dt_full;
        let mut dt = target - load;
        let mut bisections = 0;
        while load < target - 1e-14 {
            let next = (load + dt).min(target);
            let mut trial = u.clone();
            if let Some((prev, prev_dt)) = &u_prev {
                let ratio = (next - load) / prev_dt;
                for ((t, cur), old) in trial.iter_mut().zip(&u).zip(prev) {
                    *t = cur + ratio * (cur - old);
                }
            }
            driver.dofs.apply(&mut trial, next);
            if u_prev.is_some() && problem.assemble(&trial, &states, &driver.dofs, false).is_err() {
                trial.clone_from(&u);
                driver.dofs.apply(&mut trial, next);
            }
            let (end, perturbations) = driver.solve_stable(&mut trial, &states);
            match end {
                NewtonEnd::Converged { iterations, residual, asm } => {
                    let (new_states, fields, min_diss) = problem.commit(&trial, &states)?;
                    let reaction: f64 = driver.dofs.driven.iter().map(|&g| asm.residual[g]).sum();
                    let reaction_other: f64 = driver.dofs.other_same_component.iter().map(|&g| asm.residual[g]).sum();
                    u_prev = Some((std::mem::replace(&mut u, trial), next - load));
                    states = new_states;
                    load = next;
                    report.fields = fields;
                    if load >= target - 1e-14 {
                        let rep = StepReport {
                            step,
                            load_factor: load,
                            displacement: driven_value * load,
                            reaction,
                            reaction_other,
                            iterations,
                            residual,
                            perturbations,
                            min_dissipation: min_diss,
                            converged: true,
                        };
                        on_step(&rep);
                        report.steps.push(rep);
                    }
                }
                NewtonEnd::Failed(msg) => {
                    if bisections >= settings.max_bisections {
                        report.failure = Some(format!("step {step}: {msg} after {bisections} bisections"));
                        report.displacements = u;
                        return Ok(report);
                    }
                    bisections += 1;
                    dt *= 0.5;
                }
            }
        }
    }
    report.displacements = u;
    Ok(report)
}

/// Convenience accessor for nodal displacement vectors.
pub fn nodal(u: &[f64], dim: usize, node: usize) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for c in 0..dim {
        v[c] = u[node * dim + c];
    }
    v
}
