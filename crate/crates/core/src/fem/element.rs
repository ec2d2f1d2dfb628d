//! Element families, shape functions and Gauss rules.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    /// Two-node linear bar.
    Bar2,
    /// Nine-node biquadratic quadrilateral.
    Quad9,
    /// Eight-node trilinear hexahedron.
    Hex8,
    /// Twenty-node serendipity hexahedron.
    Hex20,
}

const HEX_CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

const HEX20_EDGES: [[f64; 3]; 12] = [
    [0.0, -1.0, -1.0],
    [1.0, 0.0, -1.0],
    [0.0, 1.0, -1.0],
    [-1.0, 0.0, -1.0],
    [0.0, -1.0, 1.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [-1.0, 0.0, 1.0],
    [-1.0, -1.0, 0.0],
    [1.0, -1.0, 0.0],
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
];

const QUAD9: [[f64; 3]; 9] = [
    [-1.0, -1.0, 0.0],
    [1.0, -1.0, 0.0],
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
];

/// Quadratic Lagrange polynomial on {-1, 0, 1} for node `c`, and its slope.
fn lagrange2(c: f64, x: f64) -> (f64, f64) {
    if c < -0.5 {
        (0.5 * x * (x - 1.0), x - 0.5)
    } else if c > 0.5 {
        (0.5 * x * (x + 1.0), x + 0.5)
    } else {
        (1.0 - x * x, -2.0 * x)
    }
}

impl ElementKind {
    pub fn dim(self) -> usize {
        match self {
            ElementKind::Bar2 => 1,
            ElementKind::Quad9 => 2,
            ElementKind::Hex8 | ElementKind::Hex20 => 3,
        }
    }

    pub fn n_nodes(self) -> usize {
        match self {
            ElementKind::Bar2 => 2,
            ElementKind::Quad9 => 9,
            ElementKind::Hex8 => 8,
            ElementKind::Hex20 => 20,
        }
    }

    /// Number of corner nodes; these come first in the connectivity.
    pub fn n_corners(self) -> usize {
        match self {
            ElementKind::Bar2 => 2,
            ElementKind::Quad9 => 4,
            ElementKind::Hex8 | ElementKind::Hex20 => 8,
        }
    }

    /// Reference coordinates of the nodes, in connectivity order.
    pub fn reference_nodes(self) -> Vec<[f64; 3]> {
        match self {
            ElementKind::Bar2 => vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            ElementKind::Quad9 => QUAD9.to_vec(),
            ElementKind::Hex8 => HEX_CORNERS.to_vec(),
            ElementKind::Hex20 => HEX_CORNERS.iter().chain(HEX20_EDGES.iter()).copied().collect(),
        }
    }

    /// Shape function values and reference gradients at `xi`.
    pub fn shape(self, xi: [f64; 3], n: &mut Vec<f64>, dn: &mut Vec<[f64; 3]>) {
        n.clear();
        dn.clear();
        let [x, y, z] = xi;
        match self {
            ElementKind::Bar2 => {
                n.extend([0.5 * (1.0 - x), 0.5 * (1.0 + x)]);
                dn.extend([[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]);
            }
            ElementKind::Quad9 => {
                for c in QUAD9 {
                    let (lx, dx) = lagrange2(c[0], x);
                    let (ly, dy) = lagrange2(c[1], y);
                    n.push(lx * ly);
                    dn.push([dx * ly, lx * dy, 0.0]);
                }
            }
            ElementKind::Hex8 => {
                for c in HEX_CORNERS {
                    let (a, b, d) = (1.0 + c[0] * x, 1.0 + c[1] * y, 1.0 + c[2] * z);
                    n.push(0.125 * a * b * d);
                    dn.push([0.125 * c[0] * b * d, 0.125 * a * c[1] * d, 0.125 * a * b * c[2]]);
                }
            }
            ElementKind::Hex20 => {
                for c in HEX_CORNERS {
                    let (a, b, d) = (1.0 + c[0] * x, 1.0 + c[1] * y, 1.0 + c[2] * z);
                    let s = c[0] * x + c[1] * y + c[2] * z - 2.0;
                    n.push(0.125 * a * b * d * s);
                    dn.push([
                        0.125 * c[0] * b * d * (s + a),
                        0.125 * c[1] * a * d * (s + b),
                        0.125 * c[2] * a * b * (s + d),
                    ]);
                }
                for c in HEX20_EDGES {
                    // the zero coordinate of the edge node carries the bubble factor
                    let f = |k: usize, v: f64| if c[k] == 0.0 { (1.0 - v * v, -2.0 * v) } else { (1.0 + c[k] * v, c[k]) };
                    let ((fx, gx), (fy, gy), (fz, gz)) = (f(0, x), f(1, y), f(2, z));
                    n.push(0.25 * fx * fy * fz);
                    dn.push([0.25 * gx * fy * fz, 0.25 * fx * gy * fz, 0.25 * fx * fy * gz]);
                }
            }
        }
    }

    /// Tensor-product Gauss rule: points and weights.
    pub fn gauss_rule(self) -> Vec<([f64; 3], f64)> {
        let (order, dim) = match self {
            ElementKind::Bar2 => (2, 1),
            ElementKind::Quad9 => (3, 2),
            ElementKind::Hex8 => (2, 3),
            ElementKind::Hex20 => (3, 3),
        };
        let (pts, wts): (Vec<f64>, Vec<f64>) = match order {
            2 => {
                let g = 1.0 / 3f64.sqrt();
                (vec![-g, g], vec![1.0, 1.0])
            }
            _ => {
                let g = (0.6f64).sqrt();
                (vec![-g, 0.0, g], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
        };
        let mut out = Vec::new();
        let m = pts.len();
        let nz = if dim == 3 { m } else { 1 };
        let ny = if dim >= 2 { m } else { 1 };
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..m {
                    let mut w = wts[i];
                    let mut p = [pts[i], 0.0, 0.0];
                    if dim >= 2 {
                        w *= wts[j];
                        p[1] = pts[j];
                    }
                    if dim == 3 {
                        w *= wts[k];
                        p[2] = pts[k];
                    }
                    out.push((p, w));
                }
            }
        }
        out
    }
}
