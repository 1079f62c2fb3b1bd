//! Dense reference integrators for small bases.
//!
//! Nothing here touches the FFT path: basis functions and their gradients
//! are evaluated from their closed forms, the quadratic interaction tensor is
//! assembled by direct quadrature, and time stepping is classical RK4. These
//! routines exist to cross-check the production integrators.

use crate::spectral::{Basis, SpectralField, WaveVector};

/// Closed-form value of basis function `k` at `x`.
pub fn basis_value(k: WaveVector, x: [f64; 2]) -> [f64; 2] {
    let p = k.upper();
    let e = k.polarization();
    let phase = f64::from(p.k1) * x[0] + f64::from(p.k2) * x[1];
    let s = if k.is_upper() {
        phase.cos()
    } else {
        phase.sin()
    } * std::f64::consts::SQRT_2;
    [s * e[0], s * e[1]]
}

/// Closed-form gradient `∂_j (w_k)_i` at `x`, indexed `[i][j]`.
pub fn basis_gradient(k: WaveVector, x: [f64; 2]) -> [[f64; 2]; 2] {
    let p = k.upper();
    let e = k.polarization();
    let phase = f64::from(p.k1) * x[0] + f64::from(p.k2) * x[1];
    let ds = if k.is_upper() {
        -phase.sin()
    } else {
        phase.cos()
    } * std::f64::consts::SQRT_2;
    let kv = [f64::from(p.k1), f64::from(p.k2)];
    [
        [e[0] * ds * kv[0], e[0] * ds * kv[1]],
        [e[1] * ds * kv[0], e[1] * ds * kv[1]],
    ]
}

/// `T[i][j][l] = ((w_j·∇) w_l, w_i)`, so that `P((z·∇)y)_i = Σ T[i][j][l] z_j y_l`.
pub struct InteractionTensor {
    m: usize,
    data: Vec<f64>,
}

impl InteractionTensor {
    /// Quadrature on a `q × q` grid; exact when `q > 3 k_max`.
    pub fn assemble(basis: &Basis, q: usize) -> Self {
        let modes = basis.modes();
        let m = modes.len();
        let h = 2.0 * std::f64::consts::PI / q as f64;
        let points: Vec<[f64; 2]> = (0..q)
            .flat_map(|a| (0..q).map(move |b| [a as f64 * h, b as f64 * h]))
            .collect();
        let values: Vec<Vec<[f64; 2]>> = modes
            .iter()
            .map(|&k| points.iter().map(|&x| basis_value(k, x)).collect())
            .collect();
        let grads: Vec<Vec<[[f64; 2]; 2]>> = modes
            .iter()
            .map(|&k| points.iter().map(|&x| basis_gradient(k, x)).collect())
            .collect();
        let mut data = vec![0.0; m * m * m];
        let norm = 1.0 / points.len() as f64;
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    let mut s = 0.0;
                    for p in 0..points.len() {
                        let z = values[j][p];
                        let g = grads[l][p];
                        let w = values[i][p];
                        for c in 0..2 {
                            s += w[c] * (z[0] * g[c][0] + z[1] * g[c][1]);
                        }
                    }
                    data[(i * m + j) * m + l] = s * norm;
                }
            }
        }
        Self { m, data }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[(i * self.m + j) * self.m + l]
    }

    /// Dense `P((z·∇) y)`.
    pub fn apply(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| {
                let mut s = 0.0;
                for (j, &zj) in z.iter().enumerate() {
                    if zj == 0.0 {
                        continue;
                    }
                    let row = &self.data[(i * m + j) * m..(i * m + j + 1) * m];
                    s += zj * row.iter().zip(y).map(|(t, yl)| t * yl).sum::<f64>();
                }
                s
            })
            .collect()
    }
}

/// Classical RK4 for `y' = f(t, y)` on `[0, t_final]` with `steps` steps,
/// sampling every `stride` steps.
pub fn rk4(
    y0: &[f64],
    t_final: f64,
    steps: usize,
    stride: usize,
    f: impl Fn(f64, &[f64]) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let dt = t_final / steps as f64;
    let axpy = |y: &[f64], s: f64, k: &[f64]| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    let mut y = y0.to_vec();
    let mut out = vec![y.clone()];
    for n in 0..steps {
        let t = n as f64 * dt;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * dt, &axpy(&y, 0.5 * dt, &k1));
        let k3 = f(t + 0.5 * dt, &axpy(&y, 0.5 * dt, &k2));
        let k4 = f(t + dt, &axpy(&y, dt, &k3));
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if (n + 1) % stride == 0 {
            out.push(y.clone());
        }
    }
    out
}

/// Dense Leray-α right-hand side `-A y - P((z·∇) y)`, `z = (I + α²A)⁻¹ y`.
pub fn leray_rhs<'a>(
    tensor: &'a InteractionTensor,
    basis: &'a Basis,
    alpha: f64,
) -> impl Fn(f64, &[f64]) -> Vec<f64> + 'a {
    move |_, y| {
        let lam = basis.eigenvalues();
        let z: Vec<f64> = y
            .iter()
            .zip(lam)
            .map(|(a, l)| a / (1.0 + alpha * alpha * l))
            .collect();
        let adv = tensor.apply(&z, y);
        (0..y.len()).map(|i| -lam[i] * y[i] - adv[i]).collect()
    }
}

/// Dense Oseen right-hand side with drift `h(t)` and spectral forcing `f(t)`.
pub fn oseen_rhs<'a>(
    tensor: &'a InteractionTensor,
    basis: &'a Basis,
    drift: impl Fn(f64) -> Vec<f64> + 'a,
    forcing: impl Fn(f64) -> Vec<f64> + 'a,
) -> impl Fn(f64, &[f64]) -> Vec<f64> + 'a {
    move |t, y| {
        let lam = basis.eigenvalues();
        let adv = tensor.apply(&drift(t), y);
        let f = forcing(t);
        (0..y.len())
            .map(|i| -lam[i] * y[i] - adv[i] + f[i])
            .collect()
    }
}

/// Helper: coefficients of a field as a dense vector.
pub fn dense(u: &SpectralField) -> Vec<f64> {
    u.coeffs().to_vec()
}
