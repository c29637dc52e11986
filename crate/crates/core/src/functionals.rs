//! Weighted energy functionals, decay weights and the diagnostic reports built on them.
//!
//! Per-mode norms follow the coefficient convention: every coefficient field carries the
//! full `2π` azimuthal factor, so `‖u_k‖² = 2π Σ_fields ∫∫ f² r dr dz`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CylGrid, RadialScheme, ScalarField, THETA_MEASURE};
use crate::state::{
    component_parity, slot, InitProfile, ModeState, ModeVelocity, Params, WavenumberConvention,
};
use crate::stepper::Sink;
use crate::stokes::{dissipation, mean_over_r};

/// Norms of `∂_z^j u_k` at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    /// `‖∂_z^j u_k‖²`
    pub energy: f64,
    /// `‖∇̃∂_z^j u_k‖²` with `∇̃ = (∂_r, ∂_z)`
    pub grad: f64,
    /// `‖∂_r∂_z^j u_k‖²`
    pub dr: f64,
    /// `‖∂_z^j u_k / r‖²`
    pub over_r: f64,
    /// `‖(∂_z^j u^r_0, ∂_z^j u^θ_0)/r‖²` (mean mode only)
    pub mean_over_r: f64,
}

/// Mixed norms entering the product estimates, at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedSample {
    /// `‖∂_z^j u_k‖_{L⁴_h(L²_v)}`
    pub h4v2: f64,
    /// `‖∂_z^j u_k‖_{L⁴_h(L^∞_v)}`
    pub h4vinf: f64,
    /// `‖∇̃∂_z^j u_k‖_{L²_h(L^∞_v)}`
    pub grad_h2vinf: f64,
    /// `‖∂_z^j u_k/r‖_{L²_h(L^∞_v)}`, only `(u^r_0, u^θ_0)` for the mean mode
    pub over_r_h2vinf: f64,
}

/// Running sup and time integrals for one `(k, j)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub initial: ModeSample,
    pub last: ModeSample,
    pub sup: f64,
    pub int_grad: f64,
    pub int_dr: f64,
    pub int_over_r: f64,
    pub int_mean_over_r: f64,
    pub last_mixed: Option<MixedSample>,
    /// `∫ ‖·‖⁴_{L⁴_h L²_v} dt`
    pub int4_h4v2: f64,
    /// `∫ ‖·‖⁴_{L⁴_h L^∞_v} dt`
    pub int4_h4vinf: f64,
    /// `∫ ‖∇̃·‖²_{L²_h L^∞_v} dt`
    pub int2_grad_vinf: f64,
    /// `∫ ‖·/r‖²_{L²_h L^∞_v} dt`
    pub int2_over_r_vinf: f64,
    /// Accumulated trapezoid error estimate `Σ dt/12 |Δ²f|` over all integrands.
    pub trapezoid_error: f64,
    #[serde(skip)]
    prev_integrands: Option<[f64; 8]>,
}

impl Track {
    fn integrands(s: &ModeSample, m: Option<&MixedSample>) -> [f64; 8] {
        let m = m.copied().unwrap_or_default();
        [
            s.grad,
            s.dr,
            s.over_r,
            s.mean_over_r,
            m.h4v2.powi(4),
            m.h4vinf.powi(4),
            m.grad_h2vinf.powi(2),
            m.over_r_h2vinf.powi(2),
        ]
    }
}

/// Snapshot history of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyHistory {
    pub params: Params,
    pub times: Vec<f64>,
    /// Orders `j = 0..=j_max` are tracked.
    pub j_max: usize,
    pub mixed: bool,
    /// `tracks[k][j]`
    pub tracks: Vec<Vec<Track>>,
    /// `‖u_k(t)‖` at every snapshot, `series[k][n]`.
    pub series: Vec<Vec<f64>>,
    /// `‖∂_z^j α‖` for `j = 0..`, needed by the reports.
    pub profile_norms: Option<Vec<f64>>,
    pub grid: Option<GridInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub n_r: usize,
    pub n_z: usize,
    pub l_z: f64,
    pub scheme: RadialScheme,
}

impl GridInfo {
    pub fn of(g: &CylGrid) -> Self {
        Self {
            n_r: g.n_r,
            n_z: g.n_z,
            l_z: g.l_z,
            scheme: g.scheme,
        }
    }
}

fn dz_mode(grid: &CylGrid, w: &ModeVelocity, j: usize) -> ModeVelocity {
    ModeVelocity {
        k: w.k,
        fields: w.fields.iter().map(|f| grid.d_z_pow(f, j)).collect(),
    }
}

fn magnitude(grid: &CylGrid, fields: &[ScalarField]) -> ScalarField {
    let mut out = grid.zeros();
    for f in fields {
        for (o, v) in out.data.iter_mut().zip(&f.data) {
            *o += v * v;
        }
    }
    out.map(f64::sqrt)
}

/// Instantaneous norms of `∂_z^j u_k`.
pub fn mode_sample(grid: &CylGrid, w: &ModeVelocity, k_eff: f64, j: usize) -> ModeSample {
    let d = dz_mode(grid, w, j);
    let diss = dissipation(grid, &d, k_eff);
    ModeSample {
        energy: THETA_MEASURE * d.sum_sq(grid),
        grad: THETA_MEASURE * (diss.dr + diss.dz),
        dr: THETA_MEASURE * diss.dr,
        over_r: THETA_MEASURE * diss.over_r,
        mean_over_r: if w.k == 0 {
            THETA_MEASURE * mean_over_r(grid, &d)
        } else {
            0.0
        },
    }
}

/// Instantaneous mixed norms of `∂_z^j u_k`.
pub fn mixed_sample(grid: &CylGrid, w: &ModeVelocity, k_eff: f64, j: usize) -> Result<MixedSample> {
    let d = dz_mode(grid, w, j);
    let mag = magnitude(grid, &d.fields);
    let mut grads = Vec::with_capacity(2 * d.fields.len());
    for (s, fam) in d.families() {
        for (c, f) in fam.iter().enumerate() {
            grads.push(grid.d_r_unchecked(f, component_parity(s * k_eff, c == 2)));
            grads.push(grid.d_z_unchecked(f));
        }
    }
    let grad = magnitude(grid, &grads);
    let over: Vec<ScalarField> = if w.k == 0 {
        vec![d.fields[slot::UR0].clone(), d.fields[slot::UTH0].clone()]
    } else {
        d.fields.clone()
    };
    let mut over_r = magnitude(grid, &over);
    for i in 0..grid.n_r {
        for j in 0..grid.n_z {
            let v = over_r.at(i, j) / grid.r[i];
            over_r.set(i, j, v);
        }
    }
    Ok(MixedSample {
        h4v2: grid.norm_lp_h_lq_v(&mag, 4.0, 2.0)?,
        h4vinf: grid.norm_lp_h_lq_v(&mag, 4.0, f64::INFINITY)?,
        grad_h2vinf: grid.norm_lp_h_lq_v(&grad, 2.0, f64::INFINITY)?,
        over_r_h2vinf: grid.norm_lp_h_lq_v(&over_r, 2.0, f64::INFINITY)?,
    })
}

impl EnergyHistory {
    /// Empty history tracking `j = 0..=j_max`; `mixed` enables the mixed-norm integrals.
    pub fn new(params: Params, j_max: usize, mixed: bool) -> Self {
        Self {
            params,
            times: Vec::new(),
            j_max,
            mixed,
            tracks: vec![vec![Track::default(); j_max + 1]; params.k_max + 1],
            series: vec![Vec::new(); params.k_max + 1],
            profile_norms: None,
            grid: None,
        }
    }

    /// Records `‖∂_z^j α‖` for `j = 0..=n`.
    pub fn with_profile(mut self, profile: &InitProfile, grid: &CylGrid, n: usize) -> Self {
        self.profile_norms = Some((0..=n).map(|j| profile.dz_norm(grid, j)).collect());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_last(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Appends a snapshot and advances the running integrals by the trapezoid rule.
    pub fn accumulate(&mut self, state: &ModeState) -> Result<()> {
        if let Some(t) = self.t_last() {
            if !(state.t > t) {
                return Err(Error::History(format!(
                    "snapshot time {} does not follow {}",
                    state.t, t
                )));
            }
        }
        if state.modes.len() != self.tracks.len() {
            return Err(Error::History(format!(
                "state has {} modes, history tracks {}",
                state.modes.len(),
                self.tracks.len()
            )));
        }
        let g = &state.grid;
        self.grid.get_or_insert(GridInfo::of(g));
        let dt = self.t_last().map(|t| state.t - t);
        for (k, w) in state.modes.iter().enumerate() {
            let keff = self.params.k_eff(k, WavenumberConvention::Scaled);
            for j in 0..=self.j_max {
                let s = mode_sample(g, w, keff, j);
                let m = if self.mixed && j <= 1 {
                    Some(mixed_sample(g, w, keff, j)?)
                } else {
                    None
                };
                let tr = &mut self.tracks[k][j];
                let cur = Track::integrands(&s, m.as_ref());
                match dt {
                    None => {
                        tr.initial = s;
                        tr.sup = s.energy;
                    }
                    Some(dt) => {
                        let prev = Track::integrands(&tr.last, tr.last_mixed.as_ref());
                        let inc: Vec<f64> = prev
                            .iter()
                            .zip(&cur)
                            .map(|(a, b)| 0.5 * dt * (a + b))
                            .collect();
                        tr.int_grad += inc[0];
                        tr.int_dr += inc[1];
                        tr.int_over_r += inc[2];
                        tr.int_mean_over_r += inc[3];
                        tr.int4_h4v2 += inc[4];
                        tr.int4_h4vinf += inc[5];
                        tr.int2_grad_vinf += inc[6];
                        tr.int2_over_r_vinf += inc[7];
                        if let Some(pp) = tr.prev_integrands {
                            tr.trapezoid_error += (0..8)
                                .map(|i| dt / 12.0 * (cur[i] - 2.0 * prev[i] + pp[i]).abs())
                                .sum::<f64>();
                        }
                        tr.sup = tr.sup.max(s.energy);
                    }
                }
                tr.prev_integrands =
                    dt.map(|_| Track::integrands(&tr.last, tr.last_mixed.as_ref()));
                tr.last = s;
                tr.last_mixed = m;
                if j == 0 {
                    self.series[k].push(s.energy.sqrt());
                }
            }
        }
        self.times.push(state.t);
        Ok(())
    }

    /// Largest accumulated trapezoid error estimate over all tracks.
    pub fn trapezoid_error(&self) -> f64 {
        self.tracks
            .iter()
            .flatten()
            .map(|t| t.trapezoid_error)
            .fold(0.0, f64::max)
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j > 1 || j > self.j_max {
            return Err(Error::History(format!(
                "order j = {j} unavailable (functionals use j <= 1, tracked up to {})",
                self.j_max
            )));
        }
        Ok(())
    }
}

impl Sink for EnergyHistory {
    fn snapshot(&mut self, state: &ModeState) -> Result<()> {
        self.accumulate(state)
    }
}

/// Which radial gradient the mode blocks use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gradient {
    Tilde,
    Radial,
}

fn functional(
    h: &EnergyHistory,
    j: usize,
    params: &Params,
    grad: Gradient,
    weight: impl Fn(f64) -> f64,
    at_start: bool,
) -> Result<f64> {
    h.check_j(j)?;
    if h.is_empty() {
        return Ok(0.0);
    }
    let n = params.n as f64;
    let pick = |t: &Track| -> (f64, f64, f64, f64) {
        if at_start {
            (t.initial.energy, 0.0, 0.0, 0.0)
        } else {
            let g = match grad {
                Gradient::Tilde => t.int_grad,
                Gradient::Radial => t.int_dr,
            };
            (t.sup, g, t.int_over_r, t.int_mean_over_r)
        }
    };
    let (s0, g0, _, m0) = pick(&h.tracks[0][j]);
    let mean = n.powf(2.0 * (0.25 - params.eta)) * (s0 + g0 + m0);
    let modes = h.tracks[1..]
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            let k = (i + 1) as f64;
            let (s, g, o, _) = pick(&tr[j]);
            weight(k) * (s + g + 0.5 * k * k * n * n * o)
        })
        .fold(0.0, f64::max);
    Ok(mean + modes)
}

fn e_weight(params: &Params) -> impl Fn(f64) -> f64 {
    let n = params.n as f64;
    let eta = params.eta;
    move |k| k * k * n.powf(2.0 * eta * (k - 2.0))
}

fn d_weight(params: &Params, j: usize) -> impl Fn(f64) -> f64 {
    let n = params.n as f64;
    let p = *params;
    let mj = p.m as f64 - j as f64;
    move |k| {
        k.powf(2.0 * p.sigma * mj)
            * n.powf(2.0 * (p.eta * (k - 2.0)).min((0.5 - p.eta - p.delta) * mj))
    }
}

/// `E_j(t)` at the last snapshot (mode blocks with `∇̃`).
pub fn compute_e(history: &EnergyHistory, j: usize, params: &Params) -> Result<f64> {
    functional(history, j, params, Gradient::Tilde, e_weight(params), false)
}

/// `E_j(0)`: the weighted instantaneous norms of the first snapshot.
pub fn compute_e_initial(history: &EnergyHistory, j: usize, params: &Params) -> Result<f64> {
    functional(history, j, params, Gradient::Tilde, e_weight(params), true)
}

/// `D_j(t)` at the last snapshot (mode blocks with `∂_r`).
pub fn compute_d(history: &EnergyHistory, j: usize, params: &Params) -> Result<f64> {
    functional(
        history,
        j,
        params,
        Gradient::Radial,
        d_weight(params, j),
        false,
    )
}

pub fn compute_d_initial(history: &EnergyHistory, j: usize, params: &Params) -> Result<f64> {
    functional(
        history,
        j,
        params,
        Gradient::Radial,
        d_weight(params, j),
        true,
    )
}

/// `Θ_k`, `Θ̃_k` for `k = 1..=K` and the thresholds `A_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayWeights {
    /// `theta[k-1] = Θ_k`
    pub theta: Vec<f64>,
    pub theta_tilde: Vec<f64>,
    /// `a[j] = A_j` for `j = 0..=m`; `None` when `η = 0` (no threshold).
    pub a: Vec<Option<usize>>,
}

pub fn decay_weights(params: &Params) -> Result<DecayWeights> {
    params.validate()?;
    let n = params.n as f64;
    let (eta, delta, sigma) = (params.eta, params.delta, params.sigma);
    let gap = 0.5 - eta - delta;
    let w = |k: f64, m: f64| k.powf(-sigma * m) * n.powf(-(eta * (k - 2.0)).min(gap * m));
    let m = params.m as f64;
    let ks = (1..=params.k_max).map(|k| k as f64);
    Ok(DecayWeights {
        theta: ks.clone().map(|k| w(k, m)).collect(),
        theta_tilde: ks.map(|k| w(k, m - 1.0)).collect(),
        a: (0..=params.m).map(|j| threshold(params, j)).collect(),
    })
}

/// `A_j = ⌊(1/2 − η − δ)(m − j)/η⌋ + 2`.
pub fn threshold(params: &Params, j: usize) -> Option<usize> {
    if params.eta <= 0.0 {
        return None;
    }
    let x = (0.5 - params.eta - params.delta) * (params.m as f64 - j as f64) / params.eta;
    Some(((x + 1e-12).floor().max(0.0) as usize) + 2)
}

/// Decay envelope of `‖∂_z^j u_k‖ / ‖∂_z^j α‖` without the constant: NS form for `ν > 0`,
/// the piecewise anisotropic form for `ν = 0`.
pub fn decay_envelope(params: &Params, k: usize, j: usize) -> f64 {
    let n = params.n as f64;
    let kf = k as f64;
    let (eta, delta) = (params.eta, params.delta);
    if params.nu > 0.0 {
        return n.powf(-eta * (kf - 1.0) + delta) / kf;
    }
    let mj = params.m as f64 - j as f64;
    let poly = kf.powf(-params.sigma * mj);
    match threshold(params, j) {
        Some(a) if k > a => poly * n.powf(-(0.5 - eta - delta) * mj - eta + delta),
        _ => poly * n.powf(-eta * (kf - 1.0) + delta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEntry {
    pub k: usize,
    pub j: usize,
    /// `sup_t ‖∂_z^j u_k‖`
    pub sup_norm: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRatios {
    /// `sup_t ‖∂_z^j u_0‖ / (N^{−1/4+δ} ‖∂_z^j α‖)` per `j`.
    pub mean: Vec<f64>,
    /// Fitted decrease factor of `sup_t ‖∂_z^j u_k‖` per unit `k` over `k ≥ 2`.
    pub fitted_rate: Vec<Option<f64>>,
    /// Constant fitted on `k = 1` per `j`.
    pub constant: Vec<f64>,
    pub max_ratio: Vec<f64>,
    /// `E_j(t)/E_j(0)` (NS) or `D_j(t)/D_j(0)` (ANS) per `j`.
    pub functional_growth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassFlags {
    pub ratios_finite: bool,
    /// Fitted rate at least `N^η` for every `j`.
    pub rate_at_least_n_eta: bool,
    /// `sup_t ‖u_k‖` non-increasing in `k ≥ 1`.
    pub monotone_envelope: bool,
    /// Every mode other than `k = 1` stayed zero.
    pub no_cascade: bool,
    /// The functional at most doubled.
    pub functional_bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub k_max: usize,
    pub n: usize,
    pub grid: Option<GridInfo>,
    pub horizon: f64,
    pub snapshots: usize,
    /// `sup_t ‖u_K‖ / sup_t ‖u_1‖`
    pub truncation_leakage: f64,
    pub trapezoid_error: f64,
    pub regime: String,
    pub gradient: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub params: Params,
    pub per_mode: Vec<DecayEntry>,
    pub ratios: DecayRatios,
    pub pass_flags: PassFlags,
    pub metadata: ReportMetadata,
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Least-squares slope of `ln y` against `k`, as a decrease factor `e^{−slope}`.
pub fn fitted_rate(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(k, y)| (k as f64, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((-sxy / sxx).exp())
}

pub fn decay_report(history: &EnergyHistory, params: &Params) -> Result<DecayReport> {
    if history.is_empty() {
        return Err(Error::History("empty history".into()));
    }
    let norms = history
        .profile_norms
        .as_ref()
        .ok_or_else(|| Error::History("profile norms not recorded".into()))?;
    let j_top = history.j_max.min(1);
    if norms.len() <= j_top {
        return Err(Error::History("profile norms missing for j = 1".into()));
    }
    let n = params.n as f64;
    let ns = params.nu > 0.0;
    let mut per_mode = Vec::new();
    let mut ratios = DecayRatios {
        mean: Vec::new(),
        fitted_rate: Vec::new(),
        constant: Vec::new(),
        max_ratio: Vec::new(),
        functional_growth: Vec::new(),
    };
    let mut monotone = true;
    let mut rate_ok = true;
    for j in 0..=j_top {
        let a = norms[j];
        let sup = |k: usize| history.tracks[k][j].sup.sqrt();
        let mean_bound = n.powf(-0.25 + params.delta) * a;
        ratios.mean.push(safe_ratio(sup(0), mean_bound));
        per_mode.push(DecayEntry {
            k: 0,
            j,
            sup_norm: sup(0),
            bound: mean_bound,
            ratio: safe_ratio(sup(0), mean_bound),
        });
        let c = if params.k_max >= 1 {
            safe_ratio(sup(1), decay_envelope(params, 1, j) * a)
        } else {
            0.0
        };
        ratios.constant.push(c);
        let mut max_ratio: f64 = 0.0;
        for k in 1..=params.k_max {
            let bound = c * decay_envelope(params, k, j) * a;
            let ratio = safe_ratio(sup(k), bound);
            max_ratio = max_ratio.max(ratio);
            per_mode.push(DecayEntry {
                k,
                j,
                sup_norm: sup(k),
                bound,
                ratio,
            });
            if k >= 2 && sup(k) > sup(k - 1) {
                monotone = false;
            }
        }
        ratios.max_ratio.push(max_ratio);
        let pts: Vec<(usize, f64)> = (2..=params.k_max).map(|k| (k, sup(k))).collect();
        let rate = fitted_rate(&pts);
        if let Some(r) = rate {
            if r < n.powf(params.eta) {
                rate_ok = false;
            }
        }
        ratios.fitted_rate.push(rate);
        let (now, start) = if ns {
            (
                compute_e(history, j, params)?,
                compute_e_initial(history, j, params)?,
            )
        } else {
            (
                compute_d(history, j, params)?,
                compute_d_initial(history, j, params)?,
            )
        };
        ratios.functional_growth.push(safe_ratio(now, start));
    }
    let no_cascade = (0..=params.k_max)
        .filter(|&k| k != 1)
        .all(|k| history.tracks[k].iter().all(|t| t.sup == 0.0));
    let finite =
        per_mode.iter().all(|e| e.ratio.is_finite()) && ratios.mean.iter().all(|r| r.is_finite());
    let sup1 = history.tracks.get(1).map_or(0.0, |t| t[0].sup.sqrt());
    let supk = history.tracks[params.k_max][0].sup.sqrt();
    let t0 = history.times[0];
    Ok(DecayReport {
        params: *params,
        pass_flags: PassFlags {
            ratios_finite: finite,
            rate_at_least_n_eta: rate_ok,
            monotone_envelope: monotone,
            no_cascade,
            functional_bounded: ratios.functional_growth.iter().all(|g| *g <= 2.0),
        },
        per_mode,
        ratios,
        metadata: ReportMetadata {
            k_max: params.k_max,
            n: params.n,
            grid: history.grid,
            horizon: history.t_last().unwrap_or(t0) - t0,
            snapshots: history.times.len(),
            truncation_leakage: safe_ratio(supk, sup1),
            trapezoid_error: history.trapezoid_error(),
            regime: if ns { "NS" } else { "ANS" }.into(),
            gradient: if ns {
                "E_j: mode blocks use (d_r, d_z)"
            } else {
                "D_j: mode blocks use d_r"
            }
            .into(),
        },
    })
}

pub const DECAY_CSV_COLUMNS: [&str; 5] = ["k", "j", "sup_norm", "bound", "ratio"];

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = DECAY_CSV_COLUMNS.join(",");
        s.push('\n');
        for e in &self.per_mode {
            s.push_str(&format!(
                "{},{},{:.17e},{:.17e},{:.17e}\n",
                e.k, e.j, e.sup_norm, e.bound, e.ratio
            ));
        }
        s
    }
}

/// Left sides of the smallness conditions and their verdict against `small_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessCheck {
    /// `(N^{−(1/4−δ)} + N^{−(1/2−δ−η)}) ‖α‖^{1/2} ‖∂_zα‖^{1/2}`
    pub ns_lhs: f64,
    /// `(N^{−(1/4−δ)} + N^{−(1−η)/m}) Σ_{j≤m+1} ‖∂_z^j α‖`
    pub ans_sum_lhs: f64,
    /// `N^{−(1/2−δ−η)} ‖α‖^{1/2} ‖∂_zα‖^{1/2}`
    pub ans_product_lhs: f64,
    pub eps: f64,
    pub ns_pass: bool,
    pub ans_pass: bool,
}

/// Smallness check from `‖∂_z^j α‖`, `j = 0..=m+1`.
pub fn smallness_from_norms(norms: &[f64], params: &Params) -> Result<SmallnessCheck> {
    if norms.len() < params.m + 2 {
        return Err(Error::Precondition(format!(
            "need norms up to j = {}, got {}",
            params.m + 1,
            norms.len()
        )));
    }
    let n = params.n as f64;
    let d = params.delta;
    let eta = params.eta;
    let prod = (norms[0] * norms[1]).sqrt();
    let ns = (n.powf(-(0.25 - d)) + n.powf(-(0.5 - d - eta))) * prod;
    let sum: f64 = norms[..params.m + 2].iter().sum();
    let ans_sum = (n.powf(-(0.25 - d)) + n.powf(-(1.0 - eta) / params.m as f64)) * sum;
    let ans_prod = n.powf(-(0.5 - d - eta)) * prod;
    let eps = params.small_eps;
    Ok(SmallnessCheck {
        ns_lhs: ns,
        ans_sum_lhs: ans_sum,
        ans_product_lhs: ans_prod,
        eps,
        ns_pass: ns <= eps,
        ans_pass: ans_sum <= eps && ans_prod <= eps,
    })
}

pub fn smallness_check(
    profile: &InitProfile,
    grid: &CylGrid,
    params: &Params,
) -> Result<SmallnessCheck> {
    let norms: Vec<f64> = (0..=params.m + 1)
        .map(|j| profile.dz_norm(grid, j))
        .collect();
    smallness_from_norms(&norms, params)
}

/// `𝓗_ℓ(α) = N^{−4(1/4−δ)} Σ_{i≤max(ℓ,1)} ‖∂_z^i α‖⁴ + N^{−4(1−δ)} Σ_{1≤j≤ℓ+1} ‖∂_z^j α‖⁴`.
pub fn h_ell(norms: &[f64], params: &Params, ell: usize) -> Result<f64> {
    let top = ell.max(1).max(ell + 1);
    if norms.len() <= top {
        return Err(Error::Precondition(format!("need norms up to j = {top}")));
    }
    let n = params.n as f64;
    let d = params.delta;
    let a: f64 = norms[..=ell.max(1)].iter().map(|x| x.powi(4)).sum();
    let b: f64 = norms[1..=ell + 1].iter().map(|x| x.powi(4)).sum();
    Ok(n.powf(-4.0 * (0.25 - d)) * a + n.powf(-4.0 * (1.0 - d)) * b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductBound {
    /// `l4_mean`, `linf_mean` for `k = 0`; `l4_mode`, `linf_mode`, `grad_linf_mode` for `k ≥ 1`.
    pub estimate: String,
    pub k: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Measured left sides of the mixed-norm product estimates against their right sides
/// built from `E_0`, `E_1` at the last snapshot.
pub fn product_bounds(history: &EnergyHistory, params: &Params) -> Result<Vec<ProductBound>> {
    if !history.mixed {
        return Err(Error::History("mixed-norm accumulation disabled".into()));
    }
    if history.j_max < 1 {
        return Err(Error::History("product bounds need j = 1".into()));
    }
    let e0 = compute_e(history, 0, params)?;
    let e1 = compute_e(history, 1, params)?;
    let n = params.n as f64;
    let eta = params.eta;
    let mut out = Vec::new();
    let mut push = |estimate: &str, k: usize, j: usize, lhs: f64, rhs: f64| {
        out.push(ProductBound {
            estimate: estimate.into(),
            k,
            j,
            lhs,
            rhs,
            ratio: safe_ratio(lhs, rhs),
        });
    };
    let e = [e0, e1];
    let cross = e0.powf(0.25) * e1.powf(0.25);
    for j in 0..=1 {
        let t = &history.tracks[0][j];
        push(
            "l4_mean",
            0,
            j,
            t.int4_h4v2.powf(0.25),
            n.powf(eta - 0.25) * e[j].sqrt(),
        );
    }
    let t = &history.tracks[0][0];
    push(
        "linf_mean",
        0,
        0,
        t.int4_h4vinf.powf(0.25) + t.int2_grad_vinf.sqrt() + t.int2_over_r_vinf.sqrt(),
        n.powf(eta - 0.25) * cross,
    );
    for k in 1..=params.k_max {
        let kf = k as f64;
        let decay = kf.powf(-1.25) * n.powf(eta * (2.0 - kf) - 0.25);
        for j in 0..=1 {
            let t = &history.tracks[k][j];
            push("l4_mode", k, j, t.int4_h4v2.powf(0.25), decay * e[j].sqrt());
        }
        let t = &history.tracks[k][0];
        push("linf_mode", k, 0, t.int4_h4vinf.powf(0.25), decay * cross);
        push(
            "grad_linf_mode",
            k,
            0,
            t.int2_grad_vinf.sqrt() + kf * n * t.int2_over_r_vinf.sqrt(),
            n.powf(eta * (2.0 - kf)) / kf * cross,
        );
    }
    Ok(out)
}
