//! Stokes eigenstructure on the periodic torus `[0, 2π)²`.
//!
//! Every divergence-free, zero-mean field is expanded in a real orthonormal
//! basis built from the Fourier modes. For a wavevector `p` in the upper half
//! plane (`p2 > 0`, or `p2 = 0` and `p1 > 0`) with polarization
//! `e(p) = (-p2, p1) / |p|`, the two basis functions are
//!
//! ```text
//! w_p  = √2 cos(p·x) e(p)
//! w_-p = √2 sin(p·x) e(p)
//! ```
//!
//! Both are eigenfunctions of the Stokes operator with eigenvalue `|p|²` and
//! are orthonormal for the mean inner product `(u, v) = ⟨u·v⟩`. Real
//! coefficients on this basis are the same data as conjugate-symmetric
//! complex amplitudes, see [`SpectralField::complex_amplitudes`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{config_err, Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Integer Fourier index on the torus.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct WaveVector {
    pub k1: i32,
    pub k2: i32,
}

impl std::ops::Neg for WaveVector {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.k1, -self.k2)
    }
}

impl WaveVector {
    pub const fn new(k1: i32, k2: i32) -> Self {
        Self { k1, k2 }
    }

    /// Stokes eigenvalue `|k|²`.
    pub fn eigenvalue(self) -> f64 {
        f64::from(self.k1 * self.k1 + self.k2 * self.k2)
    }

    /// Upper half plane representative test; the cosine member of a pair.
    pub fn is_upper(self) -> bool {
        self.k2 > 0 || (self.k2 == 0 && self.k1 > 0)
    }

    pub fn upper(self) -> Self {
        if self.is_upper() {
            self
        } else {
            -self
        }
    }

    pub fn sup_norm(self) -> u32 {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs())
    }

    /// Unit polarization `(-k2, k1)/|k|` of the upper representative.
    pub fn polarization(self) -> [f64; 2] {
        let p = self.upper();
        let norm = p.eigenvalue().sqrt();
        [-f64::from(p.k2) / norm, f64::from(p.k1) / norm]
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k1, self.k2)
    }
}

/// Square 2D FFT built from row transforms and transposes.
struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized transform in place; layout is `j1 * n + j2`.
    fn process(&self, buf: &mut [Complex64], inverse: bool) {
        let fft = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.n);
        fft.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.n);
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ModeSlot {
    /// FFT index of the upper representative `p`.
    plus: usize,
    /// FFT index of `-p`.
    minus: usize,
    polarization: [f64; 2],
    cosine: bool,
}

/// Ordered set of retained Fourier–Stokes modes on an `N × N` grid.
pub struct Basis {
    grid_size: usize,
    k_max: usize,
    modes: Vec<WaveVector>,
    eigenvalues: Vec<f64>,
    slots: Vec<ModeSlot>,
    /// Signed wavenumber per FFT index along one axis.
    wavenumber: Vec<f64>,
    fft: Fft2,
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis")
            .field("grid_size", &self.grid_size)
            .field("k_max", &self.k_max)
            .field("len", &self.modes.len())
            .finish()
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.grid_size == other.grid_size && self.modes == other.modes
    }
}

/// Full dealiased basis: every `k ≠ 0` with `max(|k1|, |k2|) ≤ k_max`.
pub fn build_basis(grid_size: usize, k_max: usize) -> Result<Arc<Basis>> {
    check_grid(grid_size)?;
    if k_max < 1 || k_max > grid_size / 3 {
        return Err(config_err(
            "grid.k_max",
            format!(
                "k_max = {k_max} must lie in [1, {}] for N = {grid_size}",
                grid_size / 3
            ),
        ));
    }
    let k = k_max as i32;
    let modes = (-k..=k)
        .flat_map(|k1| (-k..=k).map(move |k2| WaveVector::new(k1, k2)))
        .filter(|w| *w != WaveVector::new(0, 0))
        .collect();
    Basis::assemble(grid_size, modes)
}

fn check_grid(grid_size: usize) -> Result<()> {
    if grid_size < 8 || !grid_size.is_power_of_two() {
        return Err(config_err(
            "grid.n",
            format!("grid size {grid_size} must be a power of two and at least 8"),
        ));
    }
    Ok(())
}

impl Basis {
    /// Basis restricted to an explicit mode list, for small dense testbeds.
    pub fn from_modes(grid_size: usize, modes: &[WaveVector]) -> Result<Arc<Basis>> {
        check_grid(grid_size)?;
        if modes.is_empty() {
            return Err(config_err("grid.modes", "mode list is empty"));
        }
        for m in modes {
            if m.k1 == 0 && m.k2 == 0 {
                return Err(config_err("grid.modes", "the mean mode (0, 0) is excluded"));
            }
            if m.sup_norm() as usize > grid_size / 3 {
                return Err(config_err(
                    "grid.modes",
                    format!("mode {m} violates the dealiasing margin for N = {grid_size}"),
                ));
            }
        }
        let mut sorted = modes.to_vec();
        sorted.sort_by_key(|m| (m.k1 * m.k1 + m.k2 * m.k2, m.k1, m.k2));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(config_err("grid.modes", "duplicate mode"));
        }
        Basis::assemble(grid_size, sorted)
    }

    fn assemble(grid_size: usize, mut modes: Vec<WaveVector>) -> Result<Arc<Basis>> {
        modes.sort_by_key(|m| (m.k1 * m.k1 + m.k2 * m.k2, m.k1, m.k2));
        let n = grid_size as i32;
        let index = |w: WaveVector| (w.k1.rem_euclid(n) * n + w.k2.rem_euclid(n)) as usize;
        let slots = modes
            .iter()
            .map(|&m| {
                let p = m.upper();
                ModeSlot {
                    plus: index(p),
                    minus: index(-p),
                    polarization: m.polarization(),
                    cosine: m.is_upper(),
                }
            })
            .collect();
        let wavenumber = (0..grid_size)
            .map(|i| {
                if i <= grid_size / 2 {
                    i as f64
                } else {
                    i as f64 - grid_size as f64
                }
            })
            .collect();
        let k_max = modes
            .iter()
            .map(|m| m.sup_norm() as usize)
            .max()
            .unwrap_or(0);
        Ok(Arc::new(Basis {
            grid_size,
            k_max,
            eigenvalues: modes.iter().map(|m| m.eigenvalue()).collect(),
            modes,
            slots,
            wavenumber,
            fft: Fft2::new(grid_size),
        }))
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn index_of(&self, k: WaveVector) -> Option<usize> {
        self.modes.iter().position(|&m| m == k)
    }

    /// Grid coordinate of sample `j` along either axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.grid_size as f64
    }

    /// Component spectra `(U1, U2)` of `Σ a_k w_k`, in the unnormalized
    /// inverse-DFT convention.
    fn velocity_spectrum(&self, coeffs: &[f64]) -> [Vec<Complex64>; 2] {
        let size = self.grid_size * self.grid_size;
        let mut spec = [
            vec![Complex64::default(); size],
            vec![Complex64::default(); size],
        ];
        for (slot, &a) in self.slots.iter().zip(coeffs) {
            if a == 0.0 {
                continue;
            }
            // cosine member: (a/√2)(e^{ip·x} + e^{-ip·x});
            // sine member:   (a/√2)(-i e^{ip·x} + i e^{-ip·x}).
            let c = if slot.cosine {
                Complex64::new(a / SQRT_2, 0.0)
            } else {
                Complex64::new(0.0, -a / SQRT_2)
            };
            for (comp, &e) in spec.iter_mut().zip(&slot.polarization) {
                comp[slot.plus] += c * e;
                comp[slot.minus] += c.conj() * e;
            }
        }
        spec
    }

    fn synthesize(&self, mut comp: Vec<Complex64>) -> Vec<f64> {
        self.fft.process(&mut comp, true);
        comp.into_iter().map(|c| c.re).collect()
    }

    /// Leray projection and truncation of forward-transformed components.
    fn project(&self, spec: &[Vec<Complex64>; 2]) -> Vec<f64> {
        let scale = 1.0 / (self.grid_size * self.grid_size) as f64;
        self.slots
            .iter()
            .map(|slot| {
                let c = (spec[0][slot.plus] * slot.polarization[0]
                    + spec[1][slot.plus] * slot.polarization[1])
                    * scale;
                if slot.cosine {
                    SQRT_2 * c.re
                } else {
                    -SQRT_2 * c.im
                }
            })
            .collect()
    }

    /// Grid rendering of the velocity gradient: `grad[i][j] = ∂_j u_i`.
    pub(crate) fn gradient_grid(&self, coeffs: &[f64]) -> [[Vec<f64>; 2]; 2] {
        let spec = self.velocity_spectrum(coeffs);
        let n = self.grid_size;
        let derivative = |comp: &Vec<Complex64>, axis: usize| {
            let mut out = comp.clone();
            for (idx, c) in out.iter_mut().enumerate() {
                let k = if axis == 0 {
                    self.wavenumber[idx / n]
                } else {
                    self.wavenumber[idx % n]
                };
                *c *= Complex64::new(0.0, k);
            }
            self.synthesize(out)
        };
        [
            [derivative(&spec[0], 0), derivative(&spec[0], 1)],
            [derivative(&spec[1], 0), derivative(&spec[1], 1)],
        ]
    }

    pub(crate) fn project_grid_components(&self, comps: [Vec<f64>; 2]) -> Vec<f64> {
        let spec = comps.map(|c| {
            let mut buf: Vec<Complex64> = c.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
            self.fft.process(&mut buf, false);
            buf
        });
        self.project(&spec)
    }
}

/// Real velocity samples on the uniform `N × N` torus grid.
///
/// Component `c` of sample `(j1, j2)` sits at `data[c N² + j1 N + j2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    n: usize,
    data: Vec<f64>,
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; 2 * n * n],
        }
    }

    pub fn from_components(n: usize, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != n * n || u2.len() != n * n {
            return Err(Error::Length {
                expected: n * n,
                got: u1.len().min(u2.len()),
            });
        }
        let mut data = u1;
        data.extend(u2);
        let g = Self { n, data };
        if !g.is_finite() {
            return Err(Error::NonFinite("grid field sample".into()));
        }
        Ok(g)
    }

    /// Samples `f(x1, x2)` at every grid point.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut g = Self::zeros(n);
        for j1 in 0..n {
            for j2 in 0..n {
                let v = f(j1 as f64 * h, j2 as f64 * h);
                g.data[j1 * n + j2] = v[0];
                g.data[n * n + j1 * n + j2] = v[1];
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.data[c * m..(c + 1) * m]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let m = self.n * self.n;
        &mut self.data[c * m..(c + 1) * m]
    }

    pub fn at(&self, j1: usize, j2: usize) -> [f64; 2] {
        let i = j1 * self.n + j2;
        [self.data[i], self.data[self.n * self.n + i]]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Pointwise maximum of the Euclidean velocity magnitude.
    pub fn sup_norm(&self) -> f64 {
        let (a, b) = self.data.split_at(self.n * self.n);
        a.iter()
            .zip(b)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    /// Grid quadrature of the mean inner product `⟨u·v⟩`.
    pub fn dot(&self, other: &GridField) -> f64 {
        assert_eq!(self.n, other.n, "grid size mismatch");
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        sum / (self.n * self.n) as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Pointwise product with a scalar mask.
    pub fn masked(&self, mask: &[f64]) -> GridField {
        let m = self.n * self.n;
        assert_eq!(mask.len(), m, "mask size mismatch");
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x * mask[i % m])
            .collect();
        GridField { n: self.n, data }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }
}

/// Divergence-free field as real coefficients on a shared [`Basis`].
#[derive(Clone, Debug)]
pub struct SpectralField {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        same_basis(&self.basis, &other.basis) && self.coeffs == other.coeffs
    }
}

pub(crate) fn same_basis(a: &Arc<Basis>, b: &Arc<Basis>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl SpectralField {
    pub fn zeros(basis: &Arc<Basis>) -> Self {
        Self {
            basis: Arc::clone(basis),
            coeffs: vec![0.0; basis.len()],
        }
    }

    pub fn from_coeffs(basis: &Arc<Basis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::Length {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spectral coefficient".into()));
        }
        Ok(Self {
            basis: Arc::clone(basis),
            coeffs,
        })
    }

    /// Field with a single nonzero coefficient on mode `k`.
    pub fn single_mode(basis: &Arc<Basis>, k: WaveVector, amplitude: f64) -> Result<Self> {
        let idx = basis.index_of(k).ok_or_else(|| {
            config_err(
                "initial_condition.k",
                format!("mode {k} is not in the basis"),
            )
        })?;
        let mut f = Self::zeros(basis);
        f.coeffs[idx] = amplitude;
        Ok(f)
    }

    /// Uniform random coefficients in `[-1, 1]`, scaled by `λ^(-decay/2)`.
    pub fn random(basis: &Arc<Basis>, rng: &mut impl Rng, decay: f64) -> Self {
        let coeffs = basis
            .eigenvalues()
            .iter()
            .map(|&lam| rng.random_range(-1.0..=1.0) * lam.powf(-0.5 * decay))
            .collect();
        Self {
            basis: Arc::clone(basis),
            coeffs,
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check(&self, other: &SpectralField) {
        assert!(
            same_basis(&self.basis, &other.basis),
            "fields live on different bases"
        );
    }

    /// `L²` inner product (spectral sum).
    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.check(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        self.check(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|a| *a *= s);
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// Convex or affine blend `(1 - θ) self + θ other`.
    pub fn lerp(&self, other: &SpectralField, theta: f64) -> SpectralField {
        self.check(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs,
        }
    }

    /// Per-mode multiplication by `m(λ_k)`.
    pub fn map_eigen(&self, m: impl Fn(f64) -> f64) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(a, &lam)| a * m(lam))
            .collect();
        SpectralField {
            basis: Arc::clone(&self.basis),
            coeffs,
        }
    }

    /// Conjugate-symmetric complex amplitudes `û_k` of
    /// `u(x) = Σ_k û_k e^{ik·x} e(k)`, one per basis mode.
    pub fn complex_amplitudes(&self) -> Vec<(WaveVector, Complex64)> {
        let idx = |k: WaveVector| {
            self.basis
                .index_of(k)
                .map(|i| self.coeffs[i])
                .unwrap_or(0.0)
        };
        self.basis
            .modes()
            .iter()
            .map(|&k| {
                let p = k.upper();
                let c = Complex64::new(idx(p), -idx(-p)) / SQRT_2;
                (k, if k.is_upper() { c } else { c.conj() })
            })
            .collect()
    }
}

/// Renders `u` on the basis grid.
pub fn to_grid(u: &SpectralField) -> GridField {
    let basis = u.basis();
    let [s1, s2] = basis.velocity_spectrum(u.coeffs());
    let n = basis.grid_size();
    let mut data = basis.synthesize(s1);
    data.extend(basis.synthesize(s2));
    GridField { n, data }
}

/// Forward transform, Leray projection and truncation onto `basis`.
pub fn to_spectral(g: &GridField, basis: &Arc<Basis>) -> Result<SpectralField> {
    if g.n() != basis.grid_size() {
        return Err(Error::Length {
            expected: basis.grid_size(),
            got: g.n(),
        });
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("grid field sample".into()));
    }
    let coeffs = basis.project_grid_components([g.component(0).to_vec(), g.component(1).to_vec()]);
    Ok(SpectralField {
        basis: Arc::clone(basis),
        coeffs,
    })
}

/// `A^r u`, `r ∈ [-2, 2]`.
pub fn apply_stokes_power(u: &SpectralField, r: f64) -> SpectralField {
    assert!(
        (-2.0..=2.0).contains(&r),
        "Stokes power {r} outside [-2, 2]"
    );
    if r == 0.0 {
        return u.clone();
    }
    u.map_eigen(|lam| lam.powf(r))
}

/// `e^{-tA} u`, `t ≥ 0`.
pub fn apply_semigroup(u: &SpectralField, t: f64) -> SpectralField {
    assert!(t >= 0.0, "semigroup time {t} is negative");
    if t == 0.0 {
        return u.clone();
    }
    u.map_eigen(|lam| (-t * lam).exp())
}

/// `(u, A^r u)^{1/2}`, the norm of `D(A^{r/2})`.
pub fn sobolev_norm(u: &SpectralField, r: f64) -> f64 {
    assert!(
        (-2.0..=2.0).contains(&r),
        "Sobolev index {r} outside [-2, 2]"
    );
    u.coeffs()
        .iter()
        .zip(u.basis().eigenvalues())
        .map(|(a, &lam)| if r == 0.0 { a * a } else { lam.powf(r) * a * a })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_basis_enumerates_unit_square() {
        let b = build_basis(8, 1).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.eigenvalues(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        let mut brute: Vec<WaveVector> = (-1..=1)
            .flat_map(|a| (-1..=1).map(move |c| WaveVector::new(a, c)))
            .filter(|w| w.k1 != 0 || w.k2 != 0)
            .collect();
        brute.sort_by_key(|m| (m.k1 * m.k1 + m.k2 * m.k2, m.k1, m.k2));
        assert_eq!(b.modes(), brute.as_slice());
    }

    #[test]
    fn basis_size_and_margin() {
        assert_eq!(build_basis(64, 21).unwrap().len(), 1848);
        assert!(build_basis(8, 4).is_err());
        assert!(build_basis(8, 0).is_err());
        assert!(build_basis(12, 2).is_err());
        assert!(build_basis(4, 1).is_err());
    }

    #[test]
    fn explicit_modes_validated() {
        assert!(Basis::from_modes(8, &[WaveVector::new(0, 0)]).is_err());
        assert!(Basis::from_modes(8, &[WaveVector::new(3, 0)]).is_err());
        assert!(Basis::from_modes(8, &[WaveVector::new(1, 0), WaveVector::new(1, 0)]).is_err());
        let b = Basis::from_modes(8, &[WaveVector::new(0, 1), WaveVector::new(1, 0)]).unwrap();
        assert_eq!(b.modes()[0], WaveVector::new(0, 1));
    }

    #[test]
    fn zero_field_renders_zero() {
        let b = build_basis(16, 5).unwrap();
        let g = to_grid(&SpectralField::zeros(&b));
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_mode_matches_analytic_formula() {
        let b = build_basis(16, 5).unwrap();
        let u = SpectralField::single_mode(&b, WaveVector::new(1, 0), 1.0).unwrap();
        let g = to_grid(&u);
        let expected = GridField::from_fn(16, |x1, _| [0.0, SQRT_2 * x1.cos()]);
        for (a, e) in g.data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-14);
        }
        let s = SpectralField::single_mode(&b, WaveVector::new(-1, -2), 1.0).unwrap();
        let gs = to_grid(&s);
        // sine member of p = (1, 2), polarization (-2, 1)/√5
        let r5 = 5f64.sqrt();
        let expected = GridField::from_fn(16, |x1, x2| {
            let v = SQRT_2 * (x1 + 2.0 * x2).sin();
            [-2.0 * v / r5, v / r5]
        });
        for (a, e) in gs.data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_is_annihilated() {
        let b = build_basis(16, 5).unwrap();
        // ψ = cos(x1), ∇ψ = (-sin x1, 0)
        let g = GridField::from_fn(16, |x1, _| [-x1.sin(), 0.0]);
        let u = to_spectral(&g, &b).unwrap();
        assert!(u.norm() < 1e-14);
    }

    #[test]
    fn gradient_plus_solenoidal_separates() {
        let b = build_basis(32, 10).unwrap();
        let target = SpectralField::single_mode(&b, WaveVector::new(2, 1), 0.7).unwrap();
        let sol = to_grid(&target);
        // ψ = sin(2 x1 + x2) cos(3 x2)
        let grad = GridField::from_fn(32, |x1, x2| {
            let a = 2.0 * x1 + x2;
            [
                2.0 * a.cos() * (3.0 * x2).cos(),
                a.cos() * (3.0 * x2).cos() - 3.0 * a.sin() * (3.0 * x2).sin(),
            ]
        });
        let sum = GridField::from_components(
            32,
            sol.component(0)
                .iter()
                .zip(grad.component(0))
                .map(|(a, b)| a + b)
                .collect(),
            sol.component(1)
                .iter()
                .zip(grad.component(1))
                .map(|(a, b)| a + b)
                .collect(),
        )
        .unwrap();
        let back = to_spectral(&sum, &b).unwrap();
        assert!(back.sub(&target).norm() <= 1e-12 * target.norm());
    }

    #[test]
    fn round_trip_and_parseval() {
        let b = build_basis(32, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let u = SpectralField::random(&b, &mut rng, 1.0);
            let g = to_grid(&u);
            let back = to_spectral(&g, &b).unwrap();
            assert!(back.sub(&u).norm() <= 1e-12 * u.norm());
            assert!((g.l2_norm() - u.norm()).abs() <= 1e-12 * u.norm());
        }
    }

    #[test]
    fn complex_amplitudes_are_conjugate_symmetric() {
        let b = build_basis(16, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = SpectralField::random(&b, &mut rng, 0.0);
        let amps = u.complex_amplitudes();
        for &(k, c) in &amps {
            let (_, cm) = amps.iter().find(|(q, _)| *q == -k).unwrap();
            assert!((c - cm.conj()).norm() < 1e-15);
        }
        let sum: f64 = amps.iter().map(|(_, c)| c.norm_sqr()).sum();
        assert!((sum - u.norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn stokes_power_examples() {
        let b = build_basis(16, 3).unwrap();
        let u = SpectralField::single_mode(&b, WaveVector::new(1, 1), 1.0).unwrap();
        assert_eq!(apply_stokes_power(&u, 1.0).coeffs(), u.scaled(2.0).coeffs());
        assert_eq!(apply_stokes_power(&u, 0.0), u);
        let v = SpectralField::single_mode(&b, WaveVector::new(2, 0), 1.0).unwrap();
        let w = apply_stokes_power(&v, 0.5);
        assert!((w.norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn semigroup_examples() {
        let b = build_basis(16, 3).unwrap();
        let u = SpectralField::single_mode(&b, WaveVector::new(1, 0), 1.0).unwrap();
        assert_eq!(apply_semigroup(&u, 0.0), u);
        let d = apply_semigroup(&u, 1.0);
        assert!((d.norm() - 0.36787944117144233).abs() < 1e-16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = SpectralField::random(&b, &mut rng, 0.0);
        let two = apply_semigroup(&apply_semigroup(&r, 0.3), 0.7);
        let one = apply_semigroup(&r, 1.0);
        assert!(two.sub(&one).norm() <= 1e-12 * r.norm());
    }

    #[test]
    fn sobolev_norm_examples() {
        let b = build_basis(16, 3).unwrap();
        assert_eq!(sobolev_norm(&SpectralField::zeros(&b), 1.3), 0.0);
        let u = SpectralField::single_mode(&b, WaveVector::new(1, 0), 1.0).unwrap();
        assert_eq!(sobolev_norm(&u, 1.0), 1.0);
        let v = SpectralField::single_mode(&b, WaveVector::new(2, 0), -1.0).unwrap();
        assert!((sobolev_norm(&v, 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic]
    fn stokes_power_out_of_range_panics() {
        let b = build_basis(8, 1).unwrap();
        apply_stokes_power(&SpectralField::zeros(&b), 2.5);
    }
}
