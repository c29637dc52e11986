//! Ratio checks for the anisotropic Sobolev inequalities on the unit disk.
//!
//! Every check returns `lhs / rhs` for one function; a bounded ratio over a family is
//! numerical evidence for the constant. The disk checks run on their own
//! Gauss–Legendre × uniform-θ grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lagrange_derivative, CylGrid, ScalarField};

const BOUNDARY_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-12;

/// Tensor grid on the unit disk: Gauss–Legendre nodes in `r`, uniform in `θ`.
#[derive(Clone)]
pub struct DiskGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub r: Vec<f64>,
    /// Weights for `∫_0^1 g(r) r dr`.
    pub quad_r: Vec<f64>,
    pub theta: Vec<f64>,
    dr: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DiskGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiskGrid")
            .field("n_r", &self.n_r)
            .field("n_theta", &self.n_theta)
            .finish()
    }
}

fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let off = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k - 1, k)] = off;
        j[(k, k - 1)] = off;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (1.0 + eig.eigenvalues[i]), v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

impl DiskGrid {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 2 {
            return Err(Error::InvalidGrid(format!("disk n_r = {n_r} < 2")));
        }
        if n_theta < 4 {
            return Err(Error::InvalidGrid(format!("disk n_theta = {n_theta} < 4")));
        }
        let (r, w) = gauss_legendre_unit(n_r);
        let quad_r = r.iter().zip(&w).map(|(r, w)| r * w).collect();
        let theta = (0..n_theta)
            .map(|l| 2.0 * PI * l as f64 / n_theta as f64)
            .collect();
        let dr = lagrange_derivative(&r);
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_r,
            n_theta,
            quad_r,
            theta,
            dr,
            fft_fwd: planner.plan_fft_forward(n_theta),
            fft_inv: planner.plan_fft_inverse(n_theta),
            r,
        })
    }

    /// The same family one level finer in both directions.
    pub fn refined(&self) -> Result<Self> {
        Self::new(2 * self.n_r, 2 * self.n_theta)
    }

    fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        let mut out = vec![0.0; f.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); nt];
        for (src, dst) in f.chunks(nt).zip(out.chunks_mut(nt)) {
            for (b, v) in buf.iter_mut().zip(src) {
                *b = Complex64::new(*v, 0.0);
            }
            self.fft_fwd.process(&mut buf);
            for (m, b) in buf.iter_mut().enumerate() {
                let wave = if 2 * m < nt {
                    m as f64
                } else if 2 * m > nt {
                    m as f64 - nt as f64
                } else {
                    0.0
                };
                *b *= Complex64::new(0.0, wave / nt as f64);
            }
            self.fft_inv.process(&mut buf);
            for (d, b) in dst.iter_mut().zip(&buf) {
                *d = b.re;
            }
        }
        out
    }

    fn d_r(&self, f: &[f64]) -> Vec<f64> {
        let (n, nt) = (self.n_r, self.n_theta);
        let mut out = vec![0.0; f.len()];
        for i in 0..n {
            for k in 0..n {
                let c = self.dr[i * n + k];
                for l in 0..nt {
                    out[i * nt + l] += c * f[k * nt + l];
                }
            }
        }
        out
    }

    /// `‖v‖_{L^p}` over the disk for samples laid out row-major by `r`.
    pub fn norm_lp(&self, v: &[f64], p: f64) -> f64 {
        let nt = self.n_theta;
        let dth = 2.0 * PI / nt as f64;
        if p.is_infinite() {
            return v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        }
        let s: f64 = v
            .chunks(nt)
            .zip(&self.quad_r)
            .map(|(row, w)| w * row.iter().map(|x| x.abs().powf(p)).sum::<f64>())
            .sum();
        (s * dth).powf(1.0 / p)
    }

    fn over_r(&self, v: &[f64]) -> Vec<f64> {
        let nt = self.n_theta;
        v.chunks(nt)
            .zip(&self.r)
            .flat_map(|(row, r)| row.iter().map(move |x| x / r))
            .collect()
    }
}

/// One `g(r) cos(nθ)` or `g(r) sin(nθ)` term with `g(r) = Σ_i c_i r^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub mode: usize,
    pub sine: bool,
    pub coeffs: Vec<f64>,
}

impl TrigTerm {
    pub fn radial(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    pub fn radial_derivative(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * r + i as f64 * c)
    }

    fn angular(&self, th: f64) -> f64 {
        let a = self.mode as f64 * th;
        if self.sine {
            a.sin()
        } else {
            a.cos()
        }
    }
}

/// Function on the unit disk that vanishes at `r = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction2D {
    Terms(Vec<TrigTerm>),
    /// Values on a [`DiskGrid`] with these dimensions, row-major by `r`.
    Samples {
        n_r: usize,
        n_theta: usize,
        values: Vec<f64>,
    },
}

/// Samples of a function and its derivatives on a [`DiskGrid`].
#[derive(Debug, Clone)]
pub struct DiskSample {
    pub f: Vec<f64>,
    pub dr: Vec<f64>,
    pub dth_over_r: Vec<f64>,
}

impl TestFunction2D {
    pub fn radial_poly(coeffs: Vec<f64>) -> Self {
        Self::Terms(vec![TrigTerm {
            mode: 0,
            sine: false,
            coeffs,
        }])
    }

    pub fn scaled(&self, a: f64) -> Self {
        match self {
            Self::Terms(t) => Self::Terms(
                t.iter()
                    .map(|t| TrigTerm {
                        coeffs: t.coeffs.iter().map(|c| a * c).collect(),
                        ..t.clone()
                    })
                    .collect(),
            ),
            Self::Samples {
                n_r,
                n_theta,
                values,
            } => Self::Samples {
                n_r: *n_r,
                n_theta: *n_theta,
                values: values.iter().map(|v| a * v).collect(),
            },
        }
    }

    /// Largest `|f(1, θ)|`; samples are extrapolated by the radial interpolant.
    pub fn boundary_value(&self, grid: &DiskGrid) -> Result<f64> {
        match self {
            Self::Terms(t) => Ok(grid
                .theta
                .iter()
                .map(|&th| {
                    t.iter()
                        .map(|t| t.radial(1.0) * t.angular(th))
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max)),
            Self::Samples { values, .. } => {
                self.check_shape(grid)?;
                let r = &grid.r;
                let lam: Vec<f64> = (0..r.len())
                    .map(|j| {
                        let p: f64 = (0..r.len())
                            .filter(|&k| k != j)
                            .map(|k| 4.0 * (r[j] - r[k]))
                            .product();
                        1.0 / p
                    })
                    .collect();
                let c: Vec<f64> = r.iter().zip(&lam).map(|(r, l)| l / (1.0 - r)).collect();
                let denom: f64 = c.iter().sum();
                let nt = grid.n_theta;
                Ok((0..nt)
                    .map(|l| {
                        let num: f64 = c
                            .iter()
                            .enumerate()
                            .map(|(i, c)| c * values[i * nt + l])
                            .sum();
                        (num / denom).abs()
                    })
                    .fold(0.0, f64::max))
            }
        }
    }

    fn check_shape(&self, grid: &DiskGrid) -> Result<()> {
        if let Self::Samples {
            n_r,
            n_theta,
            values,
        } = self
        {
            let expected = (grid.n_r, grid.n_theta);
            if (*n_r, *n_theta) != expected || values.len() != n_r * n_theta {
                return Err(Error::ShapeMismatch {
                    expected,
                    got: (*n_r, *n_theta),
                });
            }
        }
        Ok(())
    }

    /// Evaluates the function and its derivatives; `∂_θ` always goes through the FFT.
    pub fn sample(&self, grid: &DiskGrid) -> Result<DiskSample> {
        let scale = self
            .values(grid)?
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let b = self.boundary_value(grid)?;
        if b > BOUNDARY_TOL * scale.max(1e-300) && b > 0.0 {
            return Err(Error::BoundaryViolation(b));
        }
        let f = self.values(grid)?;
        let dr = match self {
            Self::Terms(t) => {
                let mut out = Vec::with_capacity(f.len());
                for &r in &grid.r {
                    for &th in &grid.theta {
                        out.push(
                            t.iter()
                                .map(|t| t.radial_derivative(r) * t.angular(th))
                                .sum(),
                        );
                    }
                }
                out
            }
            Self::Samples { .. } => grid.d_r(&f),
        };
        let dth_over_r = grid.over_r(&grid.d_theta(&f));
        Ok(DiskSample { f, dr, dth_over_r })
    }

    fn values(&self, grid: &DiskGrid) -> Result<Vec<f64>> {
        match self {
            Self::Terms(t) => {
                let mut out = Vec::with_capacity(grid.n_r * grid.n_theta);
                for &r in &grid.r {
                    for &th in &grid.theta {
                        out.push(t.iter().map(|t| t.radial(r) * t.angular(th)).sum());
                    }
                }
                Ok(out)
            }
            Self::Samples { values, .. } => {
                self.check_shape(grid)?;
                Ok(values.clone())
            }
        }
    }
}

fn check_p(p: f64, lo: f64, hi: f64, hi_inclusive: bool) -> Result<()> {
    let ok = p >= lo && if hi_inclusive { p <= hi } else { p < hi };
    if ok && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

fn scale_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn check_zero_theta_mean(grid: &DiskGrid, s: &DiskSample) -> Result<()> {
    let scale = scale_of(&s.f);
    let nt = grid.n_theta;
    for (i, row) in s.f.chunks(nt).enumerate() {
        let mean = row.iter().sum::<f64>() / nt as f64;
        if mean.abs() > MEAN_TOL * scale {
            return Err(Error::Precondition(format!(
                "θ-mean {mean:e} at r = {:.6} exceeds {MEAN_TOL:e} of the function scale {scale:e}",
                grid.r[i]
            )));
        }
    }
    Ok(())
}

fn check_radial(grid: &DiskGrid, s: &DiskSample) -> Result<()> {
    let scale = scale_of(&s.f);
    let nt = grid.n_theta;
    for row in s.f.chunks(nt) {
        let spread = row.iter().fold(0.0_f64, |m, v| m.max((v - row[0]).abs()));
        if spread > MEAN_TOL * scale {
            return Err(Error::Precondition(format!(
                "function is not radial (θ-variation {spread:e})"
            )));
        }
    }
    Ok(())
}

/// `‖f‖_{L^p} / (‖f‖^{2/p} ‖∇_h f‖^{1−2/p})`, `2 ≤ p < ∞`.
pub fn ratio_isotropic(grid: &DiskGrid, f: &TestFunction2D, p: f64) -> Result<f64> {
    check_p(p, 2.0, f64::INFINITY, false)?;
    let s = f.sample(grid)?;
    let lhs = grid.norm_lp(&s.f, p);
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let l2 = grid.norm_lp(&s.f, 2.0);
    let grad = grid
        .norm_lp(&s.dr, 2.0)
        .hypot(grid.norm_lp(&s.dth_over_r, 2.0));
    Ok(lhs / (l2.powf(2.0 / p) * grad.powf(1.0 - 2.0 / p)))
}

/// Anisotropic bound for zero θ-mean functions, `2 ≤ p ≤ 6`:
/// `‖f‖_{L^p}` against `‖f‖^{2/p} · ½(‖∂_r f‖^s + ‖∂_θ f/r‖^s) · ‖∂_θ f/r‖^s`, `s = 1/2 − 1/p`.
pub fn ratio_zero_mean(grid: &DiskGrid, f: &TestFunction2D, p: f64) -> Result<f64> {
    check_p(p, 2.0, 6.0, true)?;
    let s = f.sample(grid)?;
    check_zero_theta_mean(grid, &s)?;
    let lhs = grid.norm_lp(&s.f, p);
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let e = 0.5 - 1.0 / p;
    let l2 = grid.norm_lp(&s.f, 2.0);
    let a = grid.norm_lp(&s.dr, 2.0);
    let b = grid.norm_lp(&s.dth_over_r, 2.0);
    Ok(lhs / (l2.powf(2.0 / p) * 0.5 * (a.powf(e) + b.powf(e)) * b.powf(e)))
}

/// `‖f/r‖ / ‖∂_θ f/r‖` for zero θ-mean `f`; bounded by `2π`.
pub fn poincare_ratio(grid: &DiskGrid, f: &TestFunction2D) -> Result<f64> {
    let s = f.sample(grid)?;
    check_zero_theta_mean(grid, &s)?;
    let num = grid.norm_lp(&grid.over_r(&s.f), 2.0);
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / grid.norm_lp(&s.dth_over_r, 2.0))
}

fn radial_ratio(grid: &DiskGrid, g: &TestFunction2D, p: f64) -> Result<f64> {
    let s = g.sample(grid)?;
    check_radial(grid, &s)?;
    let lhs = grid.norm_lp(&s.f, p);
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let e = 0.5 - 1.0 / p;
    let l2 = grid.norm_lp(&s.f, 2.0);
    let a = grid.norm_lp(&s.dr, 2.0);
    let c = grid.norm_lp(&grid.over_r(&s.f), 2.0);
    Ok(lhs / (l2.powf(2.0 / p) * 0.5 * (a.powf(e) + c.powf(e)) * c.powf(e)))
}

/// Radial `L⁴` bound: `‖g‖_{L⁴}` against `‖g‖^{1/2} · ½(‖∂_r g‖^{1/4} + ‖g/r‖^{1/4}) · ‖g/r‖^{1/4}`.
pub fn ratio_radial_l4(grid: &DiskGrid, g: &TestFunction2D) -> Result<f64> {
    radial_ratio(grid, g, 4.0)
}

/// Radial bound for every `p ≥ 2`, with `‖g/r‖` in place of the angular derivative.
pub fn ratio_radial(grid: &DiskGrid, g: &TestFunction2D, p: f64) -> Result<f64> {
    check_p(p, 2.0, f64::INFINITY, false)?;
    radial_ratio(grid, g, p)
}

/// Periodic zero-mean analogue of `‖f‖_{L^∞_v} ≲ ‖f‖^{1/2}_{L²_v} ‖∂_z f‖^{1/2}_{L²_v}`,
/// evaluated on every radial row and maximised over rows.
pub fn ratio_vertical_interp(
    grid: &CylGrid,
    f: &ScalarField,
    enforce_zero_mean: bool,
) -> Result<f64> {
    grid.check(f)?;
    let dz_f = grid.d_z(f)?;
    let scale = f.max_abs();
    let h = grid.dz();
    let mut best = 0.0_f64;
    for i in 0..grid.n_r {
        let row = f.row(i);
        let mean = row.iter().sum::<f64>() / grid.n_z as f64;
        if enforce_zero_mean && mean.abs() > MEAN_TOL * scale {
            return Err(Error::Precondition(format!(
                "z-mean {mean:e} at r = {:.6} (periodic analogue needs zero mean)",
                grid.r[i]
            )));
        }
        let sup = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup == 0.0 {
            continue;
        }
        let l2 = (row.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        let d2 = (dz_f.row(i).iter().map(|v| v * v).sum::<f64>() * h).sqrt();
        best = best.max(sup / (l2 * d2).sqrt());
    }
    Ok(best)
}

/// Which inequality a scan exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Isotropic,
    ZeroMean,
    RadialL4,
    Radial,
    VerticalInterp,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Self::Isotropic => "isotropic",
            Self::ZeroMean => "zero_mean",
            Self::RadialL4 => "radial_l4",
            Self::Radial => "radial",
            Self::VerticalInterp => "vertical_interp_periodic",
        }
    }
}

/// Random family: `Σ a_t r^{n_t} (1 − r) Q_t(r) trig(n_t θ)` with `log10 a_t` uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySpec {
    pub max_degree: usize,
    pub max_mode: usize,
    pub max_terms: usize,
    pub log10_amplitude: [f64; 2],
    pub zero: bool,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            max_degree: 12,
            max_mode: 8,
            max_terms: 3,
            log10_amplitude: [-3.0, 3.0],
            zero: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub check: Check,
    pub p: f64,
    pub trials: usize,
    pub seed: u64,
    pub family: FamilySpec,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            check: Check::ZeroMean,
            p: 4.0,
            trials: 100,
            seed: 0,
            family: FamilySpec::default(),
            n_r: 24,
            n_theta: 64,
            n_z: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub check: String,
    pub p: f64,
    pub trials: usize,
    pub seed: u64,
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// `|max_fine − max| / max_fine` between the two grid levels.
    pub refinement_delta: f64,
    pub fine_max_ratio: f64,
    pub fine_median_ratio: f64,
    /// Coarse and fine grid sizes: `(n_r, n_θ)` for disk checks, `(n_r, n_z)` otherwise.
    pub grids: [[usize; 2]; 2],
    /// Nodes where `|f| > |f/r|`; zero unless something is badly wrong.
    pub pointwise_violations: usize,
    pub poincare_max: Option<f64>,
    pub periodic_surrogate: bool,
    pub family: FamilySpec,
}

fn random_poly(rng: &mut ChaCha8Rng, lead_power: usize, max_degree: usize, amp: f64) -> Vec<f64> {
    let room = max_degree.saturating_sub(lead_power + 1);
    let deg = rng.gen_range(0..=room);
    let q: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // r^lead (1 − r) Q(r)
    let mut c = vec![0.0; lead_power + deg + 2];
    for (i, qi) in q.iter().enumerate() {
        c[lead_power + i] += amp * qi;
        c[lead_power + i + 1] -= amp * qi;
    }
    c
}

fn amplitude(rng: &mut ChaCha8Rng, fam: &FamilySpec) -> f64 {
    if fam.zero {
        return 0.0;
    }
    let [lo, hi] = fam.log10_amplitude;
    10f64.powf(if hi > lo { rng.gen_range(lo..hi) } else { lo })
}

/// Draws one member of the family for `check`.
pub fn draw_function(check: Check, fam: &FamilySpec, rng: &mut ChaCha8Rng) -> TestFunction2D {
    match check {
        Check::RadialL4 | Check::Radial => {
            let amp = amplitude(rng, fam);
            TestFunction2D::radial_poly(random_poly(rng, 1, fam.max_degree, amp))
        }
        Check::Isotropic | Check::ZeroMean | Check::VerticalInterp => {
            let lo = usize::from(check == Check::ZeroMean);
            let terms = rng.gen_range(1..=fam.max_terms.max(1));
            TestFunction2D::Terms(
                (0..terms)
                    .map(|_| {
                        let mode = rng.gen_range(lo..=fam.max_mode.max(lo));
                        let sine = mode > 0 && rng.gen_bool(0.5);
                        let amp = amplitude(rng, fam);
                        TrigTerm {
                            mode,
                            sine,
                            coeffs: random_poly(rng, mode, fam.max_degree, amp),
                        }
                    })
                    .collect(),
            )
        }
    }
}

/// Vertical profile `h(z) = Σ_q a_q cos(qz) + b_q sin(qz)` with zero mean, `1 ≤ q ≤ max_mode`.
fn draw_vertical(fam: &FamilySpec, rng: &mut ChaCha8Rng) -> Vec<(usize, f64, f64)> {
    let terms = rng.gen_range(1..=fam.max_terms.max(1));
    (0..terms)
        .map(|_| {
            let q = rng.gen_range(1..=fam.max_mode.max(1));
            let a = amplitude(rng, fam);
            (
                q,
                a * rng.gen_range(-1.0..1.0),
                a * rng.gen_range(-1.0..1.0),
            )
        })
        .collect()
}

fn pointwise_violations(grid: &DiskGrid, f: &[f64]) -> usize {
    f.chunks(grid.n_theta)
        .zip(&grid.r)
        .map(|(row, r)| row.iter().filter(|v| v.abs() > (*v / r).abs()).count())
        .sum()
}

struct Trial {
    coarse: f64,
    fine: f64,
    violations: usize,
    poincare: Option<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Randomised scan of one inequality at two grid levels. Trials run in parallel, each
/// with its own ChaCha stream of `seed`.
pub fn constant_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParams("scan needs at least one trial".into()));
    }
    let fam = &cfg.family;
    let (disk, disk_fine) = (
        DiskGrid::new(cfg.n_r, cfg.n_theta)?,
        DiskGrid::new(2 * cfg.n_r, 2 * cfg.n_theta)?,
    );
    let (cyl, cyl_fine) = if cfg.check == Check::VerticalInterp {
        let mk = |nz| crate::grid::build_grid(cfg.n_r.max(4), nz, 2.0 * PI, Default::default());
        (Some(mk(cfg.n_z)?), Some(mk(2 * cfg.n_z)?))
    } else {
        (None, None)
    };
    let trials: Vec<Trial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<Trial> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let f = draw_function(cfg.check, fam, &mut rng);
            let violations = pointwise_violations(&disk, &f.sample(&disk)?.f);
            let eval = |g: &DiskGrid| -> Result<f64> {
                match cfg.check {
                    Check::Isotropic => ratio_isotropic(g, &f, cfg.p),
                    Check::ZeroMean => ratio_zero_mean(g, &f, cfg.p),
                    Check::RadialL4 => ratio_radial_l4(g, &f),
                    Check::Radial => ratio_radial(g, &f, cfg.p),
                    Check::VerticalInterp => unreachable!(),
                }
            };
            let (coarse, fine, poincare) = if cfg.check == Check::VerticalInterp {
                let h = draw_vertical(fam, &mut rng);
                let TestFunction2D::Terms(terms) = &f else {
                    unreachable!()
                };
                let g0 = terms[0].clone();
                let eval_v = |g: &CylGrid| {
                    let field = ScalarField::from_fn(g, |r, z| {
                        g0.radial(r)
                            * h.iter()
                                .map(|(q, a, b)| {
                                    a * (*q as f64 * z).cos() + b * (*q as f64 * z).sin()
                                })
                                .sum::<f64>()
                    });
                    ratio_vertical_interp(g, &field, true)
                };
                (
                    eval_v(cyl.as_ref().unwrap())?,
                    eval_v(cyl_fine.as_ref().unwrap())?,
                    None,
                )
            } else {
                let poincare = if cfg.check == Check::ZeroMean {
                    Some(poincare_ratio(&disk, &f)?)
                } else {
                    None
                };
                (eval(&disk)?, eval(&disk_fine)?, poincare)
            };
            Ok(Trial {
                coarse,
                fine,
                violations,
                poincare,
            })
        })
        .collect::<Result<_>>()?;

    let mut coarse: Vec<f64> = trials.iter().map(|t| t.coarse).collect();
    let mut fine: Vec<f64> = trials.iter().map(|t| t.fine).collect();
    let max_ratio = coarse.iter().copied().fold(0.0, f64::max);
    let fine_max_ratio = fine.iter().copied().fold(0.0, f64::max);
    let refinement_delta = if fine_max_ratio > 0.0 {
        (fine_max_ratio - max_ratio).abs() / fine_max_ratio
    } else {
        0.0
    };
    let poincare_max = trials.iter().filter_map(|t| t.poincare).reduce(f64::max);
    let grids = if cfg.check == Check::VerticalInterp {
        let nr = cfg.n_r.max(4);
        [[nr, cfg.n_z], [nr, 2 * cfg.n_z]]
    } else {
        [[cfg.n_r, cfg.n_theta], [2 * cfg.n_r, 2 * cfg.n_theta]]
    };
    Ok(ScanReport {
        check: cfg.check.name().to_string(),
        p: cfg.p,
        trials: cfg.trials,
        seed: cfg.seed,
        max_ratio,
        median_ratio: median(&mut coarse),
        refinement_delta,
        fine_max_ratio,
        fine_median_ratio: median(&mut fine),
        grids,
        pointwise_violations: trials.iter().map(|t| t.violations).sum(),
        poincare_max,
        periodic_surrogate: cfg.check == Check::VerticalInterp,
        family: fam.clone(),
    })
}
