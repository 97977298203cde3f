//! Trilinear hexahedral element on an axis-aligned cube.
//!
//! Local corner `c` sits at offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`, the
//! same convention as the octree node table.

use std::sync::OnceLock;

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

pub type ElementMatrix = [[f64; 8]; 8];

fn corner_bit(c: usize, axis: usize) -> bool {
    c >> axis & 1 == 1
}

/// Shape function `c` at reference point `xi` in [0,1]^3.
pub fn shape(c: usize, xi: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| if corner_bit(c, a) { xi[a] } else { 1.0 - xi[a] })
        .product()
}

/// Reference gradient of shape function `c` at `xi`.
pub fn shape_grad(c: usize, xi: [f64; 3]) -> [f64; 3] {
    let f = |a: usize| if corner_bit(c, a) { xi[a] } else { 1.0 - xi[a] };
    let d = |a: usize| if corner_bit(c, a) { 1.0 } else { -1.0 };
    [d(0) * f(1) * f(2), f(0) * d(1) * f(2), f(0) * f(1) * d(2)]
}

/// Unit-cube mass and stiffness with unit coefficients, 2x2x2 Gauss.
fn reference() -> &'static (ElementMatrix, ElementMatrix) {
    static REF: OnceLock<(ElementMatrix, ElementMatrix)> = OnceLock::new();
    REF.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        let mut k = [[0.0; 8]; 8];
        // weights are 1/2 per direction on [0,1]
        for &x in &GAUSS2 {
            for &y in &GAUSS2 {
                for &z in &GAUSS2 {
                    let xi = [x, y, z];
                    let n: [f64; 8] = std::array::from_fn(|c| shape(c, xi));
                    let g: [[f64; 3]; 8] = std::array::from_fn(|c| shape_grad(c, xi));
                    for i in 0..8 {
                        for j in 0..8 {
                            m[i][j] += 0.125 * n[i] * n[j];
                            k[i][j] += 0.125 * (g[i][0] * g[j][0] + g[i][1] * g[j][1] + g[i][2] * g[j][2]);
                        }
                    }
                }
            }
        }
        (m, k)
    })
}

/// Consistent mass (`rho_cp * h^3` scaling) and stiffness (`kappa * h`
/// scaling) for a cube of edge `h`.
pub fn element_matrices(h: f64, rho_cp: f64, kappa: f64) -> (ElementMatrix, ElementMatrix) {
    let (m0, k0) = reference();
    let (sm, sk) = (rho_cp * h * h * h, kappa * h);
    (m0.map(|r| r.map(|v| v * sm)), k0.map(|r| r.map(|v| v * sk)))
}
