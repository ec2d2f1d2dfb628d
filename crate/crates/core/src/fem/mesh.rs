//! Structured meshes for the benchmark families.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use super::element::ElementKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub nodes: Vec<usize>,
    /// Index into the scenario's material list.
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    /// Reference coordinates, padded with zeros to three components.
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<Element>,
    pub sets: BTreeMap<String, Vec<usize>>,
}

/// Element group of the perturbed (weaker) part of a two-element mesh.
pub const PERTURBED_GROUP: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    /// Two bars on [0, L]: a lower one of length κL and an upper, perturbed one.
    Bar { kappa: f64, #[serde(default = "one")] length: f64 },
    /// Two unit-section hexahedra stacked along x1, split at x1 = κ.
    TwoHex { kappa: f64 },
    /// Quarter of a square plate of half-width L with a central hole of radius r.
    PlateWithHole { elements: usize, radius_ratio: f64, #[serde(default = "one")] length: f64 },
    /// Unit cube with `n` elements per axis.
    Cube { n: usize, kind: ElementKind },
}

fn one() -> f64 {
    1.0
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa <= 1.0 {
        Ok(())
    } else {
        Err(Error::Spec(format!("kappa must lie in (0, 1], got {kappa}")))
    }
}

impl MeshSpec {
    pub fn generate(&self) -> Result<Mesh> {
        let mesh = match *self {
            MeshSpec::Bar { kappa, length } => bar(kappa, length)?,
            MeshSpec::TwoHex { kappa } => two_hex(kappa)?,
            MeshSpec::PlateWithHole { elements, radius_ratio, length } => plate(elements, radius_ratio, length)?,
            MeshSpec::Cube { n, kind } => cube(n, kind)?,
        };
        mesh.check()?;
        Ok(mesh)
    }
}

fn bar(kappa: f64, length: f64) -> Result<Mesh> {
    check_kappa(kappa)?;
    if !(length > 0.0) {
        return Err(Error::Spec(format!("bar length must be positive, got {length}")));
    }
    let mut sets = BTreeMap::new();
    sets.insert("fixed".to_string(), vec![0]);
    if kappa < 1.0 {
        let nodes = vec![[0.0; 3], [kappa * length, 0.0, 0.0], [length, 0.0, 0.0]];
        let elements = vec![
            Element { kind: ElementKind::Bar2, nodes: vec![0, 1], group: 0 },
            Element { kind: ElementKind::Bar2, nodes: vec![1, 2], group: PERTURBED_GROUP },
        ];
        sets.insert("driven".to_string(), vec![2]);
        Ok(Mesh { dim: 1, nodes, elements, sets })
    } else {
        let nodes = vec![[0.0; 3], [length, 0.0, 0.0]];
        sets.insert("driven".to_string(), vec![1]);
        Ok(Mesh { dim: 1, nodes, elements: vec![Element { kind: ElementKind::Bar2, nodes: vec![0, 1], group: 0 }], sets })
    }
}

fn two_hex(kappa: f64) -> Result<Mesh> {
    check_kappa(kappa)?;
    let levels: Vec<f64> = if kappa < 1.0 { vec![0.0, kappa, 1.0] } else { vec![0.0, 1.0] };
    let mut nodes = Vec::new();
    for &x in &levels {
        for (y, z) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            nodes.push([x, y, z]);
        }
    }
    let mut elements = Vec::new();
    for e in 0..levels.len() - 1 {
        let b = 4 * e;
        let t = 4 * (e + 1);
        // local x1 runs along the stack, so ζ = x1, ξ = x2, η = x3
        let nodes = vec![b, b + 1, b + 2, b + 3, t, t + 1, t + 2, t + 3];
        elements.push(Element { kind: ElementKind::Hex8, nodes, group: if e == 0 { 0 } else { PERTURBED_GROUP } });
    }
    let last = levels.len() - 1;
    let mut sets = BTreeMap::new();
    sets.insert("bottom".to_string(), (0..4).collect());
    sets.insert("top".to_string(), (4 * last..4 * last + 4).collect());
    // empty for a single element so that one load program fits every κ
    sets.insert("middle".to_string(), if last == 2 { (4..8).collect() } else { Vec::new() });
    Ok(Mesh { dim: 3, nodes, elements, sets })
}

fn plate(n_elements: usize, radius_ratio: f64, length: f64) -> Result<Mesh> {
    let m = (1..=64).find(|m| 2 * m * m == n_elements).ok_or_else(|| {
        Error::Spec(format!("plate element count must be 2 m² (8, 32, 128, 512, ...), got {n_elements}"))
    })?;
    if !(radius_ratio > 0.0 && radius_ratio < 1.0) || !(length > 0.0) {
        return Err(Error::Spec(format!("invalid plate geometry: r/L = {radius_ratio}, L = {length}")));
    }
    let r = radius_ratio * length;
    let nr = 2 * m + 1; // nodes along the radial direction
    let nt = 4 * m + 1; // nodes along the angle, both blocks
    let node_id = |j: usize, i: usize| j * nr + i;
    let mut nodes = Vec::with_capacity(nr * nt);
    for j in 0..nt {
        let theta = FRAC_PI_4 * j as f64 / (2 * m) as f64;
        let (s, c) = theta.sin_cos();
        let inner = [r * c, r * s];
        let outer = if j <= 2 * m { [length, length * s / c] } else { [length * c / s, length] };
        if j == 2 * m {
            debug_assert!((outer[0] - length).abs() < 1e-12 && (outer[1] - length).abs() < 1e-12);
        }
        for i in 0..nr {
            let t = i as f64 / (nr - 1) as f64;
            nodes.push([(1.0 - t) * inner[0] + t * outer[0], (1.0 - t) * inner[1] + t * outer[1], 0.0]);
        }
    }
    let mut elements = Vec::with_capacity(n_elements);
    for ej in 0..2 * m {
        for ei in 0..m {
            // ξ runs radially, η along the angle
            let (i, j) = (2 * ei, 2 * ej);
            let nodes = vec![
                node_id(j, i),
                node_id(j, i + 2),
                node_id(j + 2, i + 2),
                node_id(j + 2, i),
                node_id(j, i + 1),
                node_id(j + 1, i + 2),
                node_id(j + 2, i + 1),
                node_id(j + 1, i),
                node_id(j + 1, i + 1),
            ];
            elements.push(Element { kind: ElementKind::Quad9, nodes, group: 0 });
        }
    }
    let mut sets = BTreeMap::new();
    sets.insert("symmetry-y".to_string(), (0..nr).map(|i| node_id(0, i)).collect());
    sets.insert("symmetry-x".to_string(), (0..nr).map(|i| node_id(nt - 1, i)).collect());
    sets.insert("driven-edge".to_string(), (0..=2 * m).map(|j| node_id(j, nr - 1)).collect());
    sets.insert("hole-arc".to_string(), (0..nt).map(|j| node_id(j, 0)).collect());
    Ok(Mesh { dim: 2, nodes, elements, sets })
}

fn cube(n: usize, kind: ElementKind) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::Spec("cube needs at least one element per axis".into()));
    }
    let (step, keep): (usize, fn(usize, usize, usize) -> bool) = match kind {
        ElementKind::Hex8 => (1, |_, _, _| true),
        // serendipity: no face or body centres (at most one odd lattice index)
        ElementKind::Hex20 => (2, |i, j, k| (i % 2) + (j % 2) + (k % 2) <= 1),
        other => return Err(Error::Spec(format!("cube mesh needs a hexahedral element, got {other:?}"))),
    };
    let nl = step * n + 1;
    let h = 1.0 / (step * n) as f64;
    let mut ids = HashMap::new();
    let mut nodes = Vec::new();
    // x slowest so the driven and fixed faces are contiguous blocks
    for i in 0..nl {
        for j in 0..nl {
            for k in 0..nl {
                if keep(i, j, k) {
                    ids.insert((i, j, k), nodes.len());
                    nodes.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }
    }
    let refs = kind.reference_nodes();
    let mut elements = Vec::new();
    for ex in 0..n {
        for ey in 0..n {
            for ez in 0..n {
                let conn = refs
                    .iter()
                    .map(|p| {
                        let lat = |e: usize, c: f64| step * e + ((c + 1.0) * step as f64 / 2.0).round() as usize;
                        ids[&(lat(ex, p[0]), lat(ey, p[1]), lat(ez, p[2]))]
                    })
                    .collect();
                elements.push(Element { kind, nodes: conn, group: 0 });
            }
        }
    }
    let mut sets = BTreeMap::new();
    sets.insert("fixed".to_string(), nodes.iter().enumerate().filter(|(_, x)| x[0] == 0.0).map(|(i, _)| i).collect());
    sets.insert("driven".to_string(), nodes.iter().enumerate().filter(|(_, x)| x[0] == 1.0).map(|(i, _)| i).collect());
    Ok(Mesh { dim: 3, nodes, elements, sets })
}

impl Mesh {
    pub fn n_dofs(&self) -> usize {
        self.nodes.len() * self.dim
    }

    pub fn set(&self, name: &str) -> Result<&[usize]> {
        self.sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Spec(format!("mesh has no node set {name:?}; available: {:?}", self.sets.keys())))
    }

    /// Reference Jacobian determinant at a local point of an element.
    pub fn jacobian_det(&self, e: usize, xi: [f64; 3]) -> f64 {
        let el = &self.elements[e];
        let (mut n, mut dn) = (Vec::new(), Vec::new());
        el.kind.shape(xi, &mut n, &mut dn);
        let d = self.dim;
        let mut j = nalgebra::DMatrix::<f64>::zeros(d, d);
        for (a, &node) in el.nodes.iter().enumerate() {
            for r in 0..d {
                for c in 0..d {
                    j[(r, c)] += self.nodes[node][r] * dn[a][c];
                }
            }
        }
        j.determinant()
    }

    /// Verifies connectivity ranges and positive Jacobians at all Gauss points.
    pub fn check(&self) -> Result<()> {
        for (e, el) in self.elements.iter().enumerate() {
            if el.kind.dim() != self.dim || el.nodes.len() != el.kind.n_nodes() {
                return Err(Error::Spec(format!("element {e} does not match the mesh dimension")));
            }
            if let Some(bad) = el.nodes.iter().find(|&&n| n >= self.nodes.len()) {
                return Err(Error::Spec(format!("element {e} references missing node {bad}")));
            }
            for (xi, _) in el.kind.gauss_rule() {
                let det = self.jacobian_det(e, xi);
                if !(det > 0.0) {
                    return Err(Error::Spec(format!("element {e} has non-positive Jacobian {det} at {xi:?}")));
                }
            }
        }
        Ok(())
    }

    /// Pairs of elements sharing at least two corner nodes.
    pub fn edge_neighbors(&self) -> Vec<Vec<usize>> {
        let mut by_node: HashMap<usize, Vec<usize>> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for &n in &el.nodes[..el.kind.n_corners()] {
                by_node.entry(n).or_default().push(e);
            }
        }
        let mut out = vec![Vec::new(); self.elements.len()];
        for (e, el) in self.elements.iter().enumerate() {
            let mut count: BTreeMap<usize, usize> = BTreeMap::new();
            for n in &el.nodes[..el.kind.n_corners()] {
                for &o in &by_node[n] {
                    if o != e {
                        *count.entry(o).or_default() += 1;
                    }
                }
            }
            out[e] = count.into_iter().filter(|&(_, c)| c >= 2).map(|(o, _)| o).collect();
        }
        out
    }
}
