//! Least-squares extraction of phonon and qubit parameters from a measured
//! spectrum, with the mean-field spectrum as forward model.
//!
//! The model is `amplitude · S(f) + background`. Minimization is a bounded
//! Levenberg–Marquardt with Marquardt scaling; bounds are enforced by
//! projection. The Jacobian is a forward difference with relative step
//! [`FD_REL_STEP`], evaluated column-parallel.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{spectrum_me, SpectrumGrid};
use crate::error::{Error, Result};
use crate::meanfield::{default_dt, default_t_max, spectrum_meanfield, MeanFieldOptions, SpectrumWindow};
use crate::model::{DriveParams, SystemParams};
use crate::spectroscopy::{find_ait_features, AitFeature, Engine};
use crate::spectrum::SpectrumTrace;

pub const FD_REL_STEP: f64 = 1e-4;

/// Relative singular value below which a direction counts as unidentifiable.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FitParam {
    /// Phonon energy decay rate γ, Hz.
    Gamma,
    /// Qubit–phonon coupling g, Hz.
    GQh,
    /// Qubit decoherence Γ̃, Hz. Realized through Γ₁ at fixed Γ_φ.
    GammaTilde,
    /// Shift of the phonon frequency from its nominal value, Hz.
    OmegaPOffset,
    /// Shift of the qubit frequency from its nominal value, Hz.
    OmegaQOffset,
    Amplitude,
    Background,
}

impl FitParam {
    pub const ALL: [FitParam; 7] = [
        FitParam::Gamma,
        FitParam::GQh,
        FitParam::GammaTilde,
        FitParam::OmegaPOffset,
        FitParam::OmegaQOffset,
        FitParam::Amplitude,
        FitParam::Background,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitParam::Gamma => "gamma",
            FitParam::GQh => "g_qh",
            FitParam::GammaTilde => "gamma_tilde",
            FitParam::OmegaPOffset => "omega_p_offset",
            FitParam::OmegaQOffset => "omega_q_offset",
            FitParam::Amplitude => "amplitude",
            FitParam::Background => "background",
        }
    }

    /// Parameters that carry a frequency unit.
    pub fn is_frequency(self) -> bool {
        !matches!(self, FitParam::Amplitude | FitParam::Background)
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FitParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::param("fit parameter", format!("unknown name {s:?}")))
    }
}

/// A complete assignment of the fit parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitValues {
    pub gamma: f64,
    pub g_qh: f64,
    pub gamma_tilde: f64,
    pub omega_p_offset: f64,
    pub omega_q_offset: f64,
    pub amplitude: f64,
    pub background: f64,
}

impl FitValues {
    /// Values implied by `params` for phonon mode `mode`, unit amplitude and
    /// zero background.
    pub fn nominal(params: &SystemParams, mode: usize) -> Result<Self> {
        let m = params
            .phonon_modes
            .get(mode)
            .ok_or_else(|| Error::param("mode", format!("no phonon mode {mode}")))?;
        Ok(FitValues {
            gamma: m.gamma,
            g_qh: m.g_qh,
            gamma_tilde: params.intrinsic_gamma_tilde(),
            omega_p_offset: 0.0,
            omega_q_offset: 0.0,
            amplitude: 1.0,
            background: 0.0,
        })
    }

    pub fn get(&self, p: FitParam) -> f64 {
        match p {
            FitParam::Gamma => self.gamma,
            FitParam::GQh => self.g_qh,
            FitParam::GammaTilde => self.gamma_tilde,
            FitParam::OmegaPOffset => self.omega_p_offset,
            FitParam::OmegaQOffset => self.omega_q_offset,
            FitParam::Amplitude => self.amplitude,
            FitParam::Background => self.background,
        }
    }

    pub fn set(&mut self, p: FitParam, v: f64) {
        let slot = match p {
            FitParam::Gamma => &mut self.gamma,
            FitParam::GQh => &mut self.g_qh,
            FitParam::GammaTilde => &mut self.gamma_tilde,
            FitParam::OmegaPOffset => &mut self.omega_p_offset,
            FitParam::OmegaQOffset => &mut self.omega_q_offset,
            FitParam::Amplitude => &mut self.amplitude,
            FitParam::Background => &mut self.background,
        };
        *slot = v;
    }

    /// `params` with these values written into mode `mode` and the qubit.
    pub fn apply(&self, params: &SystemParams, mode: usize) -> Result<SystemParams> {
        let mut p = params.clone();
        let m = p
            .phonon_modes
            .get_mut(mode)
            .ok_or_else(|| Error::param("mode", format!("no phonon mode {mode}")))?;
        m.gamma = self.gamma;
        m.g_qh = self.g_qh;
        m.omega_p += self.omega_p_offset;
        p.omega_eg += self.omega_q_offset;
        let gamma1 = 2.0 * (self.gamma_tilde - p.gamma_phi);
        if !(gamma1 >= 0.0) {
            return Err(Error::param("gamma_tilde", "below the pure dephasing rate"));
        }
        p.gamma1 = gamma1;
        p.linewidth = 0.5 * gamma1;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiStart {
    /// Number of starts including the heuristic one.
    pub starts: usize,
    /// Fractional spread of the random starts around the heuristic one.
    pub spread: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub free: Vec<FitParam>,
    /// Phonon mode whose γ, g and frequency are fitted.
    pub mode: usize,
    /// Starting values; anything missing is estimated from the data.
    pub initial: Vec<(FitParam, f64)>,
    /// `(param, lower, upper)`; anything missing gets a default range.
    pub bounds: Vec<(FitParam, f64, f64)>,
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub tolerance: f64,
    pub multi_start: Option<MultiStart>,
    /// Forward model. The master equation is much slower.
    pub engine: Engine,
    /// Correlation window. Unset fields are fixed once from the starting
    /// point so the model stays smooth in the parameters.
    pub window: SpectrumWindow,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            free: vec![
                FitParam::Gamma,
                FitParam::GQh,
                FitParam::OmegaPOffset,
                FitParam::Amplitude,
                FitParam::Background,
            ],
            mode: 0,
            initial: Vec::new(),
            bounds: Vec::new(),
            max_iterations: 200,
            tolerance: 1e-10,
            multi_start: None,
            engine: Engine::MeanField,
            window: SpectrumWindow::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Free parameters in the order of the estimates.
    pub params: Vec<FitParam>,
    pub values: Vec<f64>,
    /// One-sigma uncertainties; infinite where the data do not constrain the
    /// parameter.
    pub uncertainties: Vec<f64>,
    /// Every parameter at the optimum, fixed ones included.
    pub all: FitValues,
    pub initial: FitValues,
    /// Sum of squared residuals at the start and at the optimum.
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The Jacobian at the optimum is rank deficient.
    pub degenerate: bool,
    pub model: SpectrumTrace,
    pub t_max: f64,
    pub dt: f64,
    pub engine: Engine,
    /// Index of the winning start when several were run.
    pub start: usize,
}

impl FitResult {
    /// `(estimate, sigma)` of a free parameter.
    pub fn get(&self, p: FitParam) -> Option<(f64, f64)> {
        let i = self.params.iter().position(|&q| q == p)?;
        Some((self.values[i], self.uncertainties[i]))
    }

    /// `√cost`.
    pub fn residual_norm(&self) -> f64 {
        self.cost.sqrt()
    }

    pub fn initial_residual_norm(&self) -> f64 {
        self.initial_cost.sqrt()
    }

    pub fn dof(&self) -> usize {
        self.model.len().saturating_sub(self.params.len())
    }
}

/// `amplitude · S(f) + background` on the absolute grid `freqs`.
#[allow(clippy::too_many_arguments)]
pub fn forward_model(
    params: &SystemParams,
    drive: &DriveParams,
    freqs: &[f64],
    values: &FitValues,
    mode: usize,
    engine: Engine,
    t_max: f64,
    dt: f64,
) -> Result<SpectrumTrace> {
    let p = values.apply(params, mode)?;
    let grid = SpectrumGrid::Absolute(freqs.to_vec());
    let shape = match engine {
        Engine::MeanField => {
            let window = SpectrumWindow {
                t_max: Some(t_max),
                dt: Some(dt),
                force: false,
            };
            spectrum_meanfield(&p, drive, &grid, &window, &MeanFieldOptions::default())?
        }
        Engine::MasterEquation => {
            if p.phonon_modes.len() > 1 {
                return Err(Error::Model("the master-equation forward model takes one phonon mode".into()));
            }
            spectrum_me(&p, drive, &grid, t_max, dt, false)?
        }
    };
    let v = shape
        .values()
        .iter()
        .map(|s| values.amplitude * s + values.background)
        .collect();
    let mut out = shape.with_values(v)?;
    out.meta = out
        .meta
        .with_note("amplitude", values.amplitude)
        .with_note("background", values.background);
    Ok(out)
}

struct Problem<'a> {
    data: &'a SpectrumTrace,
    params: &'a SystemParams,
    drive: &'a DriveParams,
    config: &'a FitConfig,
    base: FitValues,
    lower: Vec<f64>,
    upper: Vec<f64>,
    scale: Vec<f64>,
    t_max: f64,
    dt: f64,
}

impl Problem<'_> {
    fn values_at(&self, x: &[f64]) -> FitValues {
        let mut v = self.base;
        for (&p, &xi) in self.config.free.iter().zip(x) {
            v.set(p, xi);
        }
        v
    }

    fn model(&self, x: &[f64]) -> Result<SpectrumTrace> {
        forward_model(
            self.params,
            self.drive,
            self.data.frequencies(),
            &self.values_at(x),
            self.config.mode,
            self.config.engine,
            self.t_max,
            self.dt,
        )
    }

    /// Model minus data, or `None` where the model cannot be evaluated.
    fn residuals(&self, x: &[f64]) -> Option<DVector<f64>> {
        let m = self.model(x).ok()?;
        let r: Vec<f64> = m.values().iter().zip(self.data.values()).map(|(a, b)| a - b).collect();
        r.iter().all(|v| v.is_finite()).then(|| DVector::from_vec(r))
    }

    fn clamp(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    fn jacobian(&self, x: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let cols: Vec<DVector<f64>> = (0..x.len())
            .into_par_iter()
            .map(|j| {
                let mut h = FD_REL_STEP * x[j].abs().max(self.scale[j]);
                if x[j] + h > self.upper[j] {
                    h = -h;
                }
                let mut xp = x.to_vec();
                xp[j] += h;
                let rp = self.residuals(&xp).ok_or_else(|| {
                    Error::Model(format!("model undefined near {}", self.config.free[j]))
                })?;
                Ok((rp - r0) / h)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols))
    }
}

struct LmOutcome {
    x: Vec<f64>,
    cost: f64,
    initial_cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(prob: &Problem<'_>, x0: Vec<f64>) -> Result<LmOutcome> {
    let mut x = x0;
    prob.clamp(&mut x);
    let mut r = prob
        .residuals(&x)
        .ok_or_else(|| Error::Model("forward model fails at the starting point".into()))?;
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let n = x.len();
    'outer: while iterations < prob.config.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = prob.jacobian(&x, &r)?;
        let mut jtj = jac.transpose() * &jac;
        let mut grad = jac.transpose() * &r;
        // parameters pinned at a bound by the gradient sit out this step
        for j in 0..n {
            let pinned = (x[j] <= prob.lower[j] && grad[j] > 0.0) || (x[j] >= prob.upper[j] && grad[j] < 0.0);
            if pinned {
                for i in 0..n {
                    jtj[(i, j)] = 0.0;
                    jtj[(j, i)] = 0.0;
                }
                jtj[(j, j)] = 1.0;
                grad[j] = 0.0;
            }
        }
        loop {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            prob.clamp(&mut trial);
            let moved = trial.iter().zip(&x).any(|(a, b)| a != b);
            let trial_r = if moved { prob.residuals(&trial) } else { None };
            match trial_r {
                Some(tr) if tr.norm_squared() < cost => {
                    let new_cost = tr.norm_squared();
                    let gain = cost - new_cost;
                    let small_step = trial
                        .iter()
                        .zip(&x)
                        .zip(&prob.scale)
                        .all(|((a, b), s)| (a - b).abs() <= 1e-12 * (b.abs() + s));
                    x = trial;
                    r = tr;
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-12);
                    if small_step || gain <= prob.config.tolerance * (cost + gain) {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    lambda *= 4.0;
                    // no descent left at working precision
                    if lambda > 1e16 || !moved {
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(LmOutcome {
        x,
        cost,
        initial_cost,
        iterations,
        converged,
    })
}

fn default_bounds(p: FitParam, v: &FitValues, nominal: &FitValues, data_scale: f64) -> (f64, f64) {
    let linewidth = nominal.gamma_tilde.max(nominal.gamma).max(1.0);
    match p {
        FitParam::Gamma => (nominal.gamma.max(v.gamma) / 50.0, 50.0 * nominal.gamma.max(v.gamma).max(1.0)),
        FitParam::GQh => (0.0, 10.0 * nominal.g_qh.abs().max(v.g_qh.abs()).max(linewidth)),
        FitParam::GammaTilde => (0.0, 20.0 * nominal.gamma_tilde.max(v.gamma_tilde).max(1.0)),
        FitParam::OmegaPOffset | FitParam::OmegaQOffset => (-f64::INFINITY, f64::INFINITY),
        FitParam::Amplitude => (0.0, f64::INFINITY),
        FitParam::Background => (-10.0 * data_scale, 10.0 * data_scale),
    }
}

/// Characteristic magnitude of a parameter for step sizes.
fn param_scale(p: FitParam, v: &FitValues, nominal: &FitValues, data_scale: f64) -> f64 {
    let s = match p {
        FitParam::OmegaPOffset => nominal.gamma.max(1.0),
        FitParam::OmegaQOffset => nominal.gamma_tilde.max(1.0),
        FitParam::Background => data_scale.max(f64::MIN_POSITIVE),
        FitParam::Amplitude => v.amplitude.abs(),
        _ => nominal.get(p).abs(),
    };
    if s > 0.0 {
        s
    } else {
        v.get(p).abs().max(1.0)
    }
}

/// Best `(amplitude, background)` for a fixed model shape.
fn linear_scale(shape: &[f64], data: &[f64]) -> Option<(f64, f64)> {
    let n = shape.len() as f64;
    let (sx, sy) = (shape.iter().sum::<f64>(), data.iter().sum::<f64>());
    let sxx: f64 = shape.iter().map(|x| x * x).sum();
    let sxy: f64 = shape.iter().zip(data).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if !(det.abs() > 0.0) {
        return None;
    }
    let a = (n * sxy - sx * sy) / det;
    let b = (sy - a * sx) / n;
    Some((a, b))
}

fn most_prominent(trace: &SpectrumTrace) -> Option<AitFeature> {
    let span = trace.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    find_ait_features(trace, 0.02 * span)
        .ok()?
        .into_iter()
        .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
}

/// Starting point: explicit values first, then the nominal model moved so
/// its dominant feature lines up with the data's, then a linear solve for
/// amplitude and background.
fn initial_values(prob: &Problem<'_>, nominal: &FitValues) -> Result<FitValues> {
    let cfg = prob.config;
    let mut v = *nominal;
    for &(p, x) in &cfg.initial {
        v.set(p, x);
    }
    let given = |p: FitParam| cfg.initial.iter().any(|&(q, _)| q == p);
    let free = |p: FitParam| cfg.free.contains(&p);
    let guess_offset = free(FitParam::OmegaPOffset) && !given(FitParam::OmegaPOffset);
    let guess_gamma = free(FitParam::Gamma) && !given(FitParam::Gamma);
    if guess_offset || guess_gamma {
        let shape = forward_model(
            prob.params,
            prob.drive,
            prob.data.frequencies(),
            &FitValues {
                amplitude: 1.0,
                background: 0.0,
                ..v
            },
            cfg.mode,
            cfg.engine,
            prob.t_max,
            prob.dt,
        )?;
        if let (Some(fd), Some(fm)) = (most_prominent(prob.data), most_prominent(&shape)) {
            if guess_offset {
                v.omega_p_offset += fd.center - fm.center;
            }
            if guess_gamma && fd.fwhm.is_finite() && fm.fwhm.is_finite() {
                v.gamma = (v.gamma + fd.fwhm - fm.fwhm).clamp(v.gamma / 5.0, 5.0 * v.gamma);
            }
        }
    }
    rescale(prob, &mut v)?;
    Ok(v)
}

/// Solves for amplitude and background when they are free and not given.
fn rescale(prob: &Problem<'_>, v: &mut FitValues) -> Result<()> {
    let cfg = prob.config;
    let given = |p: FitParam| cfg.initial.iter().any(|&(q, _)| q == p);
    let fit_a = cfg.free.contains(&FitParam::Amplitude) && !given(FitParam::Amplitude);
    let fit_b = cfg.free.contains(&FitParam::Background) && !given(FitParam::Background);
    if !(fit_a || fit_b) {
        return Ok(());
    }
    let shape = forward_model(
        prob.params,
        prob.drive,
        prob.data.frequencies(),
        &FitValues {
            amplitude: 1.0,
            background: 0.0,
            ..*v
        },
        cfg.mode,
        cfg.engine,
        prob.t_max,
        prob.dt,
    )?;
    let s = shape.values();
    let d = prob.data.values();
    match (fit_a, fit_b) {
        (true, true) => {
            if let Some((a, b)) = linear_scale(s, d) {
                v.amplitude = a;
                v.background = b;
            }
        }
        (true, false) => {
            let num: f64 = s.iter().zip(d).map(|(x, y)| x * (y - v.background)).sum();
            let den: f64 = s.iter().map(|x| x * x).sum();
            if den > 0.0 {
                v.amplitude = num / den;
            }
        }
        (false, true) => {
            let n = s.len() as f64;
            v.background = s.iter().zip(d).map(|(x, y)| y - v.amplitude * x).sum::<f64>() / n;
        }
        (false, false) => {}
    }
    Ok(())
}

/// Covariance `s² (JᵀJ)⁻¹` with `s² = cost / (N − k)`. Columns are
/// normalized before the decomposition; parameters with weight in a null
/// direction get infinite uncertainty.
fn uncertainties(jac: &DMatrix<f64>, cost: f64, n_data: usize) -> (Vec<f64>, bool) {
    let k = jac.ncols();
    if n_data <= k {
        return (vec![f64::INFINITY; k], true);
    }
    let s2 = cost / (n_data - k) as f64;
    let norms: Vec<f64> = (0..k).map(|j| jac.column(j).norm()).collect();
    let mut scaled = jac.clone();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / nj);
        }
    }
    let svd = scaled.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max();
    let mut sigma = vec![0.0; k];
    let mut unidentified = vec![false; k];
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if !(sv > RANK_TOL * smax) {
            for j in 0..k {
                if vt[(i, j)].abs() > 1e-3 {
                    unidentified[j] = true;
                }
            }
            continue;
        }
        for j in 0..k {
            sigma[j] += (vt[(i, j)] / sv).powi(2);
        }
    }
    let mut degenerate = false;
    let out = (0..k)
        .map(|j| {
            if unidentified[j] || norms[j] == 0.0 {
                degenerate = true;
                f64::INFINITY
            } else {
                (s2 * sigma[j]).sqrt() / norms[j]
            }
        })
        .collect();
    (out, degenerate)
}

/// Fits `data` (absolute axis) with the forward model, starting from
/// `params` for everything that is fixed.
pub fn fit_spectrum(
    data: &SpectrumTrace,
    params: &SystemParams,
    drive: &DriveParams,
    config: &FitConfig,
) -> Result<FitResult> {
    let data = &data.to_absolute();
    if config.free.is_empty() {
        return Err(Error::param("free", "no free parameters"));
    }
    for (i, p) in config.free.iter().enumerate() {
        if config.free[..i].contains(p) {
            return Err(Error::param("free", format!("{p} listed twice")));
        }
    }
    if data.len() < 3 * config.free.len() {
        return Err(Error::param("data", "need at least three points per free parameter"));
    }
    if !(config.tolerance > 0.0) || config.max_iterations == 0 {
        return Err(Error::param("tolerance", "need a positive tolerance and iteration budget"));
    }
    let nominal = FitValues::nominal(params, config.mode)?;
    let data_scale = data.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut explicit = nominal;
    for &(p, x) in &config.initial {
        explicit.set(p, x);
    }

    // The window is frozen at a start point with slower decays, so trial
    // points with narrower lines still decay within the record.
    let start_params = explicit.apply(params, config.mode)?;
    let t_max = config.window.t_max.unwrap_or_else(|| {
        let mut slow = start_params.clone();
        for m in &mut slow.phonon_modes {
            m.gamma /= 2.0;
        }
        slow.gamma1 /= 2.0;
        slow.gamma_phi /= 2.0;
        default_t_max(&slow)
    });
    let dt = config.window.dt.unwrap_or_else(|| {
        default_dt(&start_params, drive, &SpectrumGrid::Absolute(data.frequencies().to_vec()))
    });

    let mut prob = Problem {
        data,
        params,
        drive,
        config,
        base: nominal,
        lower: Vec::new(),
        upper: Vec::new(),
        scale: Vec::new(),
        t_max,
        dt,
    };
    let start = initial_values(&prob, &nominal)?;
    prob.base = start;
    for &p in &config.free {
        let (lo, hi) = config
            .bounds
            .iter()
            .find(|b| b.0 == p)
            .map(|b| (b.1, b.2))
            .unwrap_or_else(|| default_bounds(p, &start, &nominal, data_scale));
        if !(lo < hi) || lo.is_nan() || hi.is_nan() {
            return Err(Error::param(p.name(), format!("invalid bounds [{lo}, {hi}]")));
        }
        prob.lower.push(lo);
        prob.upper.push(hi);
        prob.scale.push(param_scale(p, &start, &nominal, data_scale));
    }

    let x0: Vec<f64> = config.free.iter().map(|&p| start.get(p)).collect();
    let mut starts = vec![x0.clone()];
    if let Some(ms) = config.multi_start {
        let mut rng = ChaCha8Rng::seed_from_u64(ms.seed);
        let spread = ms.spread.abs();
        for _ in 1..ms.starts {
            let mut v = start;
            for (j, &p) in config.free.iter().enumerate() {
                if matches!(p, FitParam::Amplitude | FitParam::Background) {
                    continue;
                }
                let x = if matches!(p, FitParam::OmegaPOffset | FitParam::OmegaQOffset) {
                    x0[j] + spread * prob.scale[j] * rng.gen_range(-1.0..=1.0)
                } else {
                    let f: f64 = rng.gen_range(-1.0..=1.0);
                    x0[j] * ((1.0 + spread).ln() * f).exp()
                };
                v.set(p, x.clamp(prob.lower[j], prob.upper[j]));
            }
            rescale(&prob, &mut v)?;
            starts.push(config.free.iter().map(|&p| v.get(p)).collect());
        }
    }

    let mut best: Option<(usize, LmOutcome)> = None;
    let mut first_err = None;
    for (i, x) in starts.into_iter().enumerate() {
        match levenberg_marquardt(&prob, x) {
            Ok(o) => {
                if best.as_ref().is_none_or(|(_, b)| o.cost < b.cost) {
                    best = Some((i, o));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let (start_index, out) = match best {
        Some(b) => b,
        None => return Err(first_err.expect("at least one start")),
    };
    let r = prob
        .residuals(&out.x)
        .ok_or_else(|| Error::Model("forward model fails at the optimum".into()))?;
    let jac = prob.jacobian(&out.x, &r)?;
    let (sigma, degenerate) = uncertainties(&jac, out.cost, data.len());
    let model = prob.model(&out.x)?;
    Ok(FitResult {
        params: config.free.clone(),
        values: out.x.clone(),
        uncertainties: sigma,
        all: prob.values_at(&out.x),
        initial: start,
        initial_cost: out.initial_cost,
        cost: out.cost,
        iterations: out.iterations,
        converged: out.converged,
        degenerate,
        model,
        t_max,
        dt,
        engine: config.engine,
        start: start_index,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSummary {
    /// Data minus model.
    pub residuals: Vec<f64>,
    pub rms: f64,
    pub mean: f64,
    pub max_abs: f64,
    /// Sum of squares over the degrees of freedom.
    pub reduced_cost: f64,
    /// Lag-one autocorrelation; near zero for white residuals.
    pub lag1_autocorrelation: f64,
}

pub fn residual_diagnostics(data: &SpectrumTrace, fit: &FitResult) -> Result<ResidualSummary> {
    let data = data.to_absolute();
    if data.frequencies() != fit.model.frequencies() {
        return Err(Error::param("data", "grid differs from the fitted grid"));
    }
    let residuals: Vec<f64> = data.values().iter().zip(fit.model.values()).map(|(d, m)| d - m).collect();
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let centered: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let var: f64 = centered.iter().map(|r| r * r).sum();
    let lag: f64 = centered.windows(2).map(|w| w[0] * w[1]).sum();
    Ok(ResidualSummary {
        rms: (ss / n).sqrt(),
        mean,
        max_abs: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        reduced_cost: ss / fit.dof().max(1) as f64,
        lag1_autocorrelation: if var > 0.0 { lag / var } else { 0.0 },
        residuals,
    })
}
