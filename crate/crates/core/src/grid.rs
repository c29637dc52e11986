//! Meridional `(r, z)` grid: radial nodes on `(0, 1]`, periodic `z`.
//!
//! Coefficient fields are stored row-major as `n_r x n_z` with `z` fastest.
//! Integrals use the measure `r dr dz`; mixed norms add the `2π` from the
//! azimuthal integration so they match norms of axisymmetric fields on the
//! full cylinder.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measure of the azimuthal circle.
pub const THETA_MEASURE: f64 = 2.0 * PI;

/// `∫ cos²(kNθ) dθ = ∫ sin²(kNθ) dθ` over one period, for `k ≥ 1`.
///
/// The `Ω`-norm of `f(r,z) cos(kNθ)` equals `MODE_PROJECTION_FACTOR / THETA_MEASURE`
/// times the `Ω`-norm of `f` viewed as an axisymmetric field.
pub const MODE_PROJECTION_FACTOR: f64 = PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialScheme {
    /// Nodes `r_j = √s_j` with `s_j` the Gauss–Radau points of `[0, 1]` (fixed at `s = 1`).
    /// Fields are expanded with their axis parity, `F(r²)` or `r F(r²)`.
    #[default]
    GaussRadauParity,
    /// Chebyshev–Gauss–Lobatto points mapped to `[0, 1]` with the axis point removed.
    ChebyshevGaussLobattoMapped,
    /// Uniform nodes `r_i = i/n_r` with second-order differences.
    UniformFd2,
}

/// Behaviour of a coefficient field under `r → −r` (equivalently `θ → θ + π`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Parity of `u^r`, `u^θ` coefficients with azimuthal wavenumber `m`.
    pub fn velocity(m: i64) -> Self {
        if m.rem_euclid(2) == 0 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// Parity of `u^z` and pressure coefficients with azimuthal wavenumber `m`.
    pub fn scalar(m: i64) -> Self {
        Self::velocity(m).flip()
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn times(self, other: Self) -> Self {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Real field sampled on the `(r, z)` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub n_r: usize,
    pub n_z: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n_r: usize, n_z: usize) -> Self {
        Self {
            n_r,
            n_z,
            data: vec![0.0; n_r * n_z],
        }
    }

    pub fn from_fn(grid: &CylGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid.n_r, grid.n_z);
        for i in 0..grid.n_r {
            for j in 0..grid.n_z {
                out.data[i * grid.n_z + j] = f(grid.r[i], grid.z[j]);
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_z + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_z + j] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_r, self.n_z)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_z..(i + 1) * self.n_z]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_r: self.n_r,
            n_z: self.n_z,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            n_r: self.n_r,
            n_z: self.n_z,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert_eq!(self.shape(), x.shape());
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    /// `self += a * x * y` pointwise.
    pub fn add_product(&mut self, a: f64, x: &Self, y: &Self) {
        for ((s, u), v) in self.data.iter_mut().zip(&x.data).zip(&y.data) {
            *s += a * u * v;
        }
    }

    /// `self += a * x * y / r` pointwise.
    pub fn add_product_over_r(&mut self, grid: &CylGrid, a: f64, x: &Self, y: &Self) {
        let n_z = self.n_z;
        for i in 0..self.n_r {
            let c = a / grid.r[i];
            for j in i * n_z..(i + 1) * n_z {
                self.data[j] += c * x.data[j] * y.data[j];
            }
        }
    }
}

/// Meridional grid with cached radial operators and `z` transforms.
#[derive(Clone)]
pub struct CylGrid {
    pub n_r: usize,
    pub n_z: usize,
    pub l_z: f64,
    pub scheme: RadialScheme,
    /// Radial nodes, strictly increasing, last node `r = 1`.
    pub r: Vec<f64>,
    /// `z_j = j L_z / n_z`.
    pub z: Vec<f64>,
    /// Weights for `∫_0^1 g(r) r dr`.
    pub quad_r: Vec<f64>,
    /// Radial differentiation matrix, row-major `n_r x n_r`, interpolating on the nodes
    /// without any parity assumption.
    pub dr: Vec<f64>,
    /// Differentiation matrices for even and odd fields (equal to `dr` for schemes
    /// without parity).
    pub dr_even: Vec<f64>,
    pub dr_odd: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CylGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylGrid")
            .field("n_r", &self.n_r)
            .field("n_z", &self.n_z)
            .field("l_z", &self.l_z)
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl PartialEq for CylGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n_r == other.n_r
            && self.n_z == other.n_z
            && self.l_z == other.l_z
            && self.scheme == other.scheme
    }
}

/// Nodes, `r dr` weights and differentiation matrices of a radial scheme.
#[derive(Debug, Clone)]
pub struct RadialOperators {
    pub r: Vec<f64>,
    pub quad_r: Vec<f64>,
    pub dr: Vec<f64>,
    pub dr_even: Vec<f64>,
    pub dr_odd: Vec<f64>,
}

pub fn radial_operators(n_r: usize, scheme: RadialScheme) -> RadialOperators {
    let (r, quad_r, dr) = match scheme {
        RadialScheme::GaussRadauParity => radau_nodes(n_r),
        RadialScheme::ChebyshevGaussLobattoMapped => chebyshev_radial(n_r),
        RadialScheme::UniformFd2 => uniform_radial(n_r),
    };
    let (dr_even, dr_odd) = match scheme {
        RadialScheme::GaussRadauParity => parity_matrices(&r),
        _ => (dr.clone(), dr.clone()),
    };
    RadialOperators {
        r,
        quad_r,
        dr,
        dr_even,
        dr_odd,
    }
}

/// Gauss–Radau rule on `[0, 1]` in `s` with the node `s = 1`, via Golub–Welsch.
fn gauss_radau_s(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![1.0], vec![1.0]);
    }
    // Monic Legendre recurrence p_{k+1} = x p_k − b_k p_{k−1}, b_k = k²/(4k² − 1).
    let b = |k: usize| {
        let k = k as f64;
        k * k / (4.0 * k * k - 1.0)
    };
    let (mut p_prev, mut p) = (1.0, 1.0);
    for k in 1..n {
        let next = p - if k == 1 { 0.0 } else { b(k - 1) * p_prev };
        p_prev = p;
        p = next;
    }
    // p = p_{n-1}(1), p_prev = p_{n-2}(1)
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = b(k).sqrt();
        j[(k - 1, k)] = off;
        j[(k, k - 1)] = off;
    }
    j[(n - 1, n - 1)] = 1.0 - b(n - 1) * p_prev / p;
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let s = pairs
        .iter()
        .map(|(x, _)| (0.5 * (1.0 + x)).min(1.0))
        .collect::<Vec<_>>();
    let w = pairs.iter().map(|(_, w)| 0.5 * w).collect();
    let mut s = s;
    s[n - 1] = 1.0;
    (s, w)
}

fn radau_nodes(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (s, w) = gauss_radau_s(n);
    let r: Vec<f64> = s.iter().map(|x| x.sqrt()).collect();
    let quad = w.iter().map(|x| 0.5 * x).collect();
    let d = lagrange_derivative(&r);
    (r, quad, d)
}

/// Barycentric weights, with differences scaled by 4 to stay in range on `[0, 1]`.
pub(crate) fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let p: f64 = (0..x.len())
                .filter(|&k| k != j)
                .map(|k| 4.0 * (x[j] - x[k]))
                .product();
            1.0 / p
        })
        .collect()
}

fn derivative_from_weights(x: &[f64], lam: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (lam[j] / lam[i]) / (x[i] - x[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

pub(crate) fn lagrange_derivative(x: &[f64]) -> Vec<f64> {
    derivative_from_weights(x, &barycentric_weights(x))
}

/// Even fields are `F(s)`, odd fields `r G(s)`, both interpolated in `s = r²`.
fn parity_matrices(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = r.len();
    let s: Vec<f64> = r.iter().map(|x| x * x).collect();
    let ds = lagrange_derivative(&s);
    let mut de = vec![0.0; n * n];
    let mut dodd = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            de[i * n + j] = 2.0 * r[i] * ds[i * n + j];
            dodd[i * n + j] = 2.0 * s[i] * ds[i * n + j] / r[j];
        }
        dodd[i * n + i] += 1.0 / r[i];
    }
    (de, dodd)
}

fn chebyshev_radial(m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // Full CGL set x_j = cos(πj/m), j = 0..=m, mapped by r = (1 - x)/2; j = 0 is the axis.
    let theta: Vec<f64> = (0..=m).map(|j| PI * j as f64 / m as f64).collect();
    let r_full: Vec<f64> = theta
        .iter()
        .enumerate()
        .map(|(j, t)| if j == m { 1.0 } else { (0.5 * t).sin().powi(2) })
        .collect();
    let cc = clenshaw_curtis(m);
    let r: Vec<f64> = r_full[1..].to_vec();
    let quad: Vec<f64> = (1..=m).map(|j| 0.5 * cc[j] * r_full[j]).collect();

    // Barycentric weights of the full set are (-1)^j δ_j; dropping node 0 multiplies by (r_j - r_0).
    let lam: Vec<f64> = (1..=m)
        .map(|j| {
            let delta = if j == m { 0.5 } else { 1.0 };
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * delta * (r_full[j] - r_full[0])
        })
        .collect();
    let d = derivative_from_weights(&r, &lam);
    (r, quad, d)
}

/// Clenshaw–Curtis weights on `[-1, 1]` for the points `cos(πj/n)`.
fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    let theta: Vec<f64> = (0..=n).map(|j| PI * j as f64 / nf).collect();
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[idx + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (idx, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[idx + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[idx + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (idx, vi) in v.iter().enumerate() {
        w[idx + 1] = 2.0 * vi / nf;
    }
    w
}

fn uniform_radial(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = 1.0 / n as f64;
    let r: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
    let mut quad: Vec<f64> = r.iter().map(|&ri| h * ri).collect();
    quad[n - 1] *= 0.5;
    let mut d = vec![0.0; n * n];
    let c = 1.0 / (2.0 * h);
    d[0] = -3.0 * c;
    d[1] = 4.0 * c;
    d[2] = -c;
    for i in 1..n - 1 {
        d[i * n + i - 1] = -c;
        d[i * n + i + 1] = c;
    }
    let l = (n - 1) * n;
    d[l + n - 1] = 3.0 * c;
    d[l + n - 2] = -4.0 * c;
    d[l + n - 3] = c;
    (r, quad, d)
}

fn apply_radial(d: &[f64], f: &ScalarField) -> ScalarField {
    let (n, nz) = (f.n_r, f.n_z);
    let mut out = ScalarField::zeros(n, nz);
    for i in 0..n {
        let row = &mut out.data[i * nz..(i + 1) * nz];
        for k in 0..n {
            let c = d[i * n + k];
            if c == 0.0 {
                continue;
            }
            let src = &f.data[k * nz..(k + 1) * nz];
            for (o, s) in row.iter_mut().zip(src) {
                *o += c * s;
            }
        }
    }
    out
}

/// Builds the meridional grid.
pub fn build_grid(n_r: usize, n_z: usize, l_z: f64, scheme: RadialScheme) -> Result<CylGrid> {
    if n_r < 4 {
        return Err(Error::InvalidGrid(format!("n_r = {n_r} < 4")));
    }
    if n_z < 4 || n_z % 2 != 0 {
        return Err(Error::InvalidGrid(format!(
            "n_z = {n_z} must be even and >= 4"
        )));
    }
    if !(l_z > 0.0) || !l_z.is_finite() {
        return Err(Error::InvalidGrid(format!("L_z = {l_z} must be positive")));
    }
    let ops = radial_operators(n_r, scheme);
    let z = (0..n_z).map(|j| j as f64 * l_z / n_z as f64).collect();
    let mut planner = FftPlanner::new();
    Ok(CylGrid {
        n_r,
        n_z,
        l_z,
        scheme,
        r: ops.r,
        z,
        quad_r: ops.quad_r,
        dr: ops.dr,
        dr_even: ops.dr_even,
        dr_odd: ops.dr_odd,
        fft_fwd: planner.plan_fft_forward(n_z),
        fft_inv: planner.plan_fft_inverse(n_z),
    })
}

impl CylGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.n_r, self.n_z)
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField::zeros(self.n_r, self.n_z)
    }

    pub fn check(&self, f: &ScalarField) -> Result<()> {
        if f.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: f.shape(),
            });
        }
        Ok(())
    }

    /// `z`-spacing.
    pub fn dz(&self) -> f64 {
        self.l_z / self.n_z as f64
    }

    /// Number of retained one-sided `z` wavenumbers (Nyquist excluded).
    pub fn n_q(&self) -> usize {
        self.n_z / 2
    }

    /// Angular wavenumber `2πq/L_z`.
    pub fn beta(&self, q: usize) -> f64 {
        2.0 * PI * q as f64 / self.l_z
    }

    /// Radial spacing around node `i` (distance to the nearest neighbour, the axis counts).
    pub fn local_dr(&self, i: usize) -> f64 {
        let left = if i == 0 {
            self.r[0]
        } else {
            self.r[i] - self.r[i - 1]
        };
        let right = if i + 1 < self.n_r {
            self.r[i + 1] - self.r[i]
        } else {
            left
        };
        left.min(right)
    }

    /// Whether the scheme expands fields with a definite axis parity.
    pub fn uses_parity(&self) -> bool {
        self.scheme == RadialScheme::GaussRadauParity
    }

    pub fn dr_matrix(&self, parity: Parity) -> &[f64] {
        match parity {
            Parity::Even => &self.dr_even,
            Parity::Odd => &self.dr_odd,
        }
    }

    /// Applies the radial differentiation matrix that assumes no parity.
    pub fn d_r(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        Ok(apply_radial(&self.dr, f))
    }

    /// `∂_r` of a field with the given axis parity.
    pub fn d_r_par(&self, f: &ScalarField, parity: Parity) -> Result<ScalarField> {
        self.check(f)?;
        Ok(self.d_r_unchecked(f, parity))
    }

    pub(crate) fn d_r_unchecked(&self, f: &ScalarField, parity: Parity) -> ScalarField {
        apply_radial(self.dr_matrix(parity), f)
    }

    /// Spectral `∂_z`; the Nyquist component is discarded.
    pub fn d_z(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check(f)?;
        Ok(self.d_z_unchecked(f))
    }

    pub(crate) fn d_z_unchecked(&self, f: &ScalarField) -> ScalarField {
        let mut spec = self.z_spectrum(f);
        let nq = self.n_z / 2 + 1;
        for i in 0..self.n_r {
            for q in 0..nq {
                let c = &mut spec[i * nq + q];
                *c = if q == self.n_z / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    *c * Complex64::new(0.0, self.beta(q))
                };
            }
        }
        self.z_synthesize(&spec)
    }

    /// `∂_z^j f`.
    pub fn d_z_pow(&self, f: &ScalarField, j: usize) -> ScalarField {
        if j == 0 {
            return f.clone();
        }
        let mut spec = self.z_spectrum(f);
        let nq = self.n_z / 2 + 1;
        for i in 0..self.n_r {
            for q in 0..nq {
                let c = &mut spec[i * nq + q];
                *c = if q == self.n_z / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    *c * Complex64::new(0.0, self.beta(q)).powu(j as u32)
                };
            }
        }
        self.z_synthesize(&spec)
    }

    /// One-sided `z` spectrum per radial row, `n_r x (n_z/2 + 1)`, normalised so that
    /// `f(z) = Σ_q c_q e^{iβ_q z}` over the two-sided range.
    pub fn z_spectrum(&self, f: &ScalarField) -> Vec<Complex64> {
        let (n, nz) = (self.n_r, self.n_z);
        let nq = nz / 2 + 1;
        let mut out = Vec::with_capacity(n * nq);
        let mut buf = vec![Complex64::new(0.0, 0.0); nz];
        let scale = 1.0 / nz as f64;
        for i in 0..n {
            for (b, v) in buf.iter_mut().zip(f.row(i)) {
                *b = Complex64::new(*v, 0.0);
            }
            self.fft_fwd.process(&mut buf);
            out.extend(buf[..nq].iter().map(|c| c * scale));
        }
        out
    }

    /// Inverse of [`CylGrid::z_spectrum`] assuming Hermitian symmetry.
    pub fn z_synthesize(&self, spec: &[Complex64]) -> ScalarField {
        let (n, nz) = (self.n_r, self.n_z);
        let nq = nz / 2 + 1;
        let mut out = ScalarField::zeros(n, nz);
        let mut buf = vec![Complex64::new(0.0, 0.0); nz];
        for i in 0..n {
            let s = &spec[i * nq..(i + 1) * nq];
            buf[0] = Complex64::new(s[0].re, 0.0);
            for q in 1..nq {
                buf[q] = s[q];
                if q != nz - q {
                    buf[nz - q] = s[q].conj();
                }
            }
            buf[nz / 2] = Complex64::new(s[nz / 2].re, 0.0);
            self.fft_inv.process(&mut buf);
            for (o, b) in out.data[i * nz..(i + 1) * nz].iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }

    /// Largest `z` wavenumber index kept by [`CylGrid::z_dealias`]: `3 q_max < n_z`.
    pub fn q_dealias(&self) -> usize {
        (self.n_z - 1) / 3
    }

    /// Two-thirds rule: removes `z` wavenumbers above [`CylGrid::q_dealias`]. Pointwise
    /// products of two filtered fields are then alias free in the retained band.
    pub fn z_dealias(&self, f: &ScalarField) -> ScalarField {
        let nq = self.n_z / 2 + 1;
        let keep = self.q_dealias();
        let mut spec = self.z_spectrum(f);
        for i in 0..self.n_r {
            for q in keep + 1..nq {
                spec[i * nq + q] = Complex64::new(0.0, 0.0);
            }
        }
        self.z_synthesize(&spec)
    }

    /// `∫∫ f r dr dz`.
    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        self.check(f)?;
        Ok(self.integrate_unchecked(f))
    }

    pub(crate) fn integrate_unchecked(&self, f: &ScalarField) -> f64 {
        let dz = self.dz();
        let mut s = 0.0;
        for i in 0..self.n_r {
            let row: f64 = f.row(i).iter().sum();
            s += self.quad_r[i] * row;
        }
        s * dz
    }

    /// `∫∫ f g r dr dz`.
    pub fn inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        let dz = self.dz();
        let nz = self.n_z;
        let mut s = 0.0;
        for i in 0..self.n_r {
            let a = &f.data[i * nz..(i + 1) * nz];
            let b = &g.data[i * nz..(i + 1) * nz];
            let row: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            s += self.quad_r[i] * row;
        }
        s * dz
    }

    /// `∫∫ (f/r)(g/r) r dr dz`.
    pub fn inner_over_r2(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        let dz = self.dz();
        let nz = self.n_z;
        let mut s = 0.0;
        for i in 0..self.n_r {
            let a = &f.data[i * nz..(i + 1) * nz];
            let b = &g.data[i * nz..(i + 1) * nz];
            let row: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            s += self.quad_r[i] * row / (self.r[i] * self.r[i]);
        }
        s * dz
    }

    /// `‖f‖_{L^p_h(L^q_v)}` of the axisymmetric field `f`: inner `L^q` in `z`, outer
    /// `L^p` over the disk including the `2π` azimuthal factor. `p`, `q` may be infinite.
    pub fn norm_lp_h_lq_v(&self, f: &ScalarField, p: f64, q: f64) -> Result<f64> {
        self.check(f)?;
        for e in [p, q] {
            if !(e >= 1.0) {
                return Err(Error::InvalidExponent(e));
            }
        }
        let dz = self.dz();
        let g: Vec<f64> = (0..self.n_r)
            .map(|i| {
                let row = f.row(i);
                if q.is_infinite() {
                    row.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
                } else {
                    (row.iter().map(|v| v.abs().powf(q)).sum::<f64>() * dz).powf(1.0 / q)
                }
            })
            .collect();
        if p.is_infinite() {
            return Ok(g.iter().fold(0.0_f64, |m, v| m.max(*v)));
        }
        let s: f64 = g
            .iter()
            .zip(&self.quad_r)
            .map(|(gi, w)| w * gi.powf(p))
            .sum();
        Ok((THETA_MEASURE * s).powf(1.0 / p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [RadialScheme; 3] = [
        RadialScheme::GaussRadauParity,
        RadialScheme::ChebyshevGaussLobattoMapped,
        RadialScheme::UniformFd2,
    ];

    fn cheb(n_r: usize, n_z: usize) -> CylGrid {
        build_grid(
            n_r,
            n_z,
            2.0 * PI,
            RadialScheme::ChebyshevGaussLobattoMapped,
        )
        .unwrap()
    }

    #[test]
    fn nodes_are_increasing_and_end_at_one() {
        for scheme in ALL {
            let g = build_grid(17, 8, 1.0, scheme).unwrap();
            assert!(g.r.windows(2).all(|w| w[1] > w[0]));
            assert!(g.r[0] > 0.0);
            assert_eq!(*g.r.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn weights_sum_to_half_lz() {
        for scheme in ALL {
            let g = build_grid(12, 6, 3.0, scheme).unwrap();
            let one = ScalarField::from_fn(&g, |_, _| 1.0);
            assert!((g.integrate(&one).unwrap() - 1.5).abs() < 1e-13);
        }
    }

    #[test]
    fn quadrature_reference_integrals() {
        let g = cheb(24, 16);
        let one = ScalarField::from_fn(&g, |_, _| 1.0);
        let r = ScalarField::from_fn(&g, |r, _| r);
        let s = ScalarField::from_fn(&g, |r, z| r * (z).sin().powi(2));
        assert!((g.integrate(&one).unwrap() - PI).abs() < 1e-12);
        assert!((g.integrate(&r).unwrap() - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!((g.integrate(&s).unwrap() - 2.0 * PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn radial_derivative_of_polynomials() {
        let g = cheb(16, 4);
        let f = ScalarField::from_fn(&g, |r, _| r * r);
        let d = g.d_r(&f).unwrap();
        for i in 0..g.n_r {
            assert!((d.at(i, 0) - 2.0 * g.r[i]).abs() < 1e-10);
        }
        let f = ScalarField::from_fn(&g, |r, _| r.powi(9) - 3.0 * r.powi(4));
        let d = g.d_r(&f).unwrap();
        for i in 0..g.n_r {
            let r = g.r[i];
            assert!((d.at(i, 0) - (9.0 * r.powi(8) - 12.0 * r.powi(3))).abs() < 1e-10);
        }
    }

    #[test]
    fn radau_rule_exact_to_degree_2n_minus_2_in_s() {
        let n = 7;
        let g = build_grid(n, 4, 1.0, RadialScheme::GaussRadauParity).unwrap();
        // ∫_0^1 s^d r dr = 1 / (2d + 2)
        for d in 0..=(2 * n - 2) {
            let f = ScalarField::from_fn(&g, |r, _| r.powi(2 * d as i32));
            let exact = 1.0 / (2.0 * d as f64 + 2.0);
            let got = g.integrate(&f).unwrap();
            assert!((got - exact).abs() < 1e-14, "degree {d}: {got} vs {exact}");
        }
        let f = ScalarField::from_fn(&g, |r, _| r.powi(4 * n as i32 - 2));
        assert!((g.integrate(&f).unwrap() - 1.0 / (4.0 * n as f64)).abs() > 1e-8);
        // Radau endpoint weight 1/n² on [0, 1] in s.
        assert!((g.quad_r[n - 1] - 0.5 / (n * n) as f64).abs() < 1e-15);
    }

    #[test]
    fn parity_derivatives() {
        let g = build_grid(9, 4, 1.0, RadialScheme::GaussRadauParity).unwrap();
        let even = ScalarField::from_fn(&g, |r, _| 1.0 - 3.0 * r.powi(4) + r.powi(16));
        let odd = ScalarField::from_fn(&g, |r, _| r.powi(3) - 2.0 * r.powi(17));
        let de = g.d_r_par(&even, Parity::Even).unwrap();
        let dodd = g.d_r_par(&odd, Parity::Odd).unwrap();
        for i in 0..g.n_r {
            let r = g.r[i];
            assert!((de.at(i, 0) - (-12.0 * r.powi(3) + 16.0 * r.powi(15))).abs() < 1e-11);
            assert!((dodd.at(i, 0) - (3.0 * r * r - 34.0 * r.powi(16))).abs() < 1e-11);
        }
        assert_eq!(Parity::velocity(0), Parity::Odd);
        assert_eq!(Parity::velocity(-3), Parity::Even);
        assert_eq!(Parity::scalar(4), Parity::Even);
        assert_eq!(Parity::Odd.times(Parity::Odd), Parity::Even);
    }

    #[test]
    fn fd2_derivative_exact_on_quadratics() {
        let g = build_grid(10, 4, 1.0, RadialScheme::UniformFd2).unwrap();
        let f = ScalarField::from_fn(&g, |r, _| 1.0 + r - 2.0 * r * r);
        let d = g.d_r(&f).unwrap();
        for i in 0..g.n_r {
            assert!((d.at(i, 1) - (1.0 - 4.0 * g.r[i])).abs() < 1e-11);
        }
    }

    #[test]
    fn spectral_z_derivative() {
        let g = cheb(6, 16);
        let f = ScalarField::from_fn(&g, |_, z| (3.0 * z).sin() + 0.5 * z.cos());
        let d = g.d_z(&f).unwrap();
        let c = g.d_z(&ScalarField::from_fn(&g, |_, _| 2.5)).unwrap();
        for i in 0..g.n_r {
            for j in 0..g.n_z {
                let z = g.z[j];
                assert!((d.at(i, j) - (3.0 * (3.0 * z).cos() - 0.5 * z.sin())).abs() < 1e-10);
                assert!(c.at(i, j).abs() <= 1e-13);
            }
        }
        let d2 = g.d_z_pow(&f, 2);
        for j in 0..g.n_z {
            let z = g.z[j];
            assert!((d2.at(2, j) + 9.0 * (3.0 * z).sin() + 0.5 * z.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_norms_of_constants() {
        let g = cheb(8, 8);
        let one = ScalarField::from_fn(&g, |_, _| 1.0);
        assert!((g.norm_lp_h_lq_v(&one, 2.0, 2.0).unwrap() - PI * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            g.norm_lp_h_lq_v(&one, f64::INFINITY, f64::INFINITY)
                .unwrap(),
            1.0
        );
        assert!(matches!(
            g.norm_lp_h_lq_v(&one, 0.5, 2.0),
            Err(Error::InvalidExponent(_))
        ));
    }

    #[test]
    fn invalid_grids_rejected() {
        let s = RadialScheme::ChebyshevGaussLobattoMapped;
        assert!(build_grid(3, 8, 1.0, s).is_err());
        assert!(build_grid(8, 7, 1.0, s).is_err());
        assert!(build_grid(8, 2, 1.0, s).is_err());
        assert!(build_grid(8, 8, 0.0, s).is_err());
    }

    #[test]
    fn shape_mismatch_reported() {
        let g = cheb(8, 8);
        let f = ScalarField::zeros(7, 8);
        assert!(matches!(g.d_r(&f), Err(Error::ShapeMismatch { .. })));
    }
}
