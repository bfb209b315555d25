//! Mean-field model: qubit-state-conditioned cavity fields, the dephasing
//! and frequency shift they induce, and the coupled (b, s₋, s_z) equations
//! for one or several phonon modes.
//!
//! In the drive frame, with every rate converted to rad/s:
//!
//! ```text
//! ∂b_k = (iΔ_b,k − γ_k/2) b_k − i g_k s₋
//! ∂s₋  = (iΔ̃_q − Γ̃) s₋ + i s_z Σ_k g_k b_k   [+ i ε_d s_z]
//! ∂s_z = 2i s₋(Σ_k g_k b_k* + ε_d) − 2i s₋*(Σ_k g_k b_k + ε_d) − Γ₁(s_z + 1)
//! ```
//!
//! The bracketed drive term follows from the qubit Hamiltonian but is off by
//! default; it is irrelevant for spectra and is switched on for the driven
//! steady state. With several modes the coupling enters as the sum over
//! modes, which is flagged in trace metadata.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::{sample_times, spectrum_from_correlation, CorrelationSeries, SpectrumGrid};
use crate::error::{Error, Result};
use crate::model::{detunings, DriveParams, SystemParams};
use crate::ode::{integrate, OdeOptions, OdeSystem};
use crate::spectrum::{params_hash, SpectrumTrace};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Cavity amplitudes conditioned on the qubit being in |g⟩ or |e⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityFields {
    pub alpha_g: Complex64,
    pub alpha_e: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldMode {
    /// Fixed points under continuous probing.
    Steady,
    /// Probe switched on at `t = 0` from an empty cavity; value at time `t`.
    Transient(f64),
}

pub fn cavity_fields(params: &SystemParams, drive: &DriveParams, mode: FieldMode) -> Result<CavityFields> {
    let dr = drive.omega_d - params.omega_r;
    let cond = |sign: f64| -> Result<Complex64> {
        // rate of ∂α = λα − iε_p, in rad/s
        let lambda = Complex64::new(-0.5 * TAU * params.kappa, TAU * (dr + sign * params.chi));
        if drive.eps_p == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if lambda.norm() == 0.0 {
            return Err(Error::Model(
                "cavity fixed point diverges (no damping and resonant probe)".into(),
            ));
        }
        let ss = I * (TAU * drive.eps_p) / lambda;
        Ok(match mode {
            FieldMode::Steady => ss,
            FieldMode::Transient(t) => ss * (1.0 - (lambda * t).exp()),
        })
    };
    Ok(CavityFields {
        alpha_g: cond(1.0)?,
        alpha_e: cond(-1.0)?,
    })
}

/// Cavity-induced qubit terms, Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveQubitTerms {
    pub omega_q_cav: f64,
    pub gamma_phi_cav: f64,
    /// Γ_φ + Γ_φ,cav + Γ₁/2.
    pub gamma_tilde: f64,
}

pub fn effective_terms(fields: &CavityFields, params: &SystemParams) -> EffectiveQubitTerms {
    let prod = fields.alpha_g * fields.alpha_e.conj();
    let omega_q_cav = 2.0 * params.chi * prod.re;
    let gamma_phi_cav = 2.0 * params.chi * prod.im;
    EffectiveQubitTerms {
        omega_q_cav,
        gamma_phi_cav,
        gamma_tilde: params.gamma_phi + gamma_phi_cav + 0.5 * params.gamma1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldState {
    pub b: Vec<Complex64>,
    pub s_minus: Complex64,
    pub s_z: f64,
}

impl MeanFieldState {
    /// Qubit and every mode in their ground states.
    pub fn ground(n_modes: usize) -> Self {
        MeanFieldState {
            b: vec![Complex64::new(0.0, 0.0); n_modes],
            s_minus: Complex64::new(0.0, 0.0),
            s_z: -1.0,
        }
    }

    /// The regression bookkeeping state (b, s₋, s_z) = (0, 1, 0).
    pub fn spectrum_initial(n_modes: usize) -> Self {
        MeanFieldState {
            b: vec![Complex64::new(0.0, 0.0); n_modes],
            s_minus: Complex64::new(1.0, 0.0),
            s_z: 0.0,
        }
    }

    /// `|s₋|² − (1 − s_z²)/4`; non-positive inside the Bloch ball.
    pub fn bloch_excess(&self) -> f64 {
        self.s_minus.norm_sqr() - 0.25 * (1.0 - self.s_z * self.s_z)
    }

    pub fn excited_population(&self) -> f64 {
        0.5 * (1.0 + self.s_z)
    }

    fn to_vec(&self) -> Vec<Complex64> {
        let mut v = self.b.clone();
        v.push(self.s_minus);
        v.push(Complex64::new(self.s_z, 0.0));
        v
    }

    fn from_slice(y: &[Complex64]) -> Self {
        let m = y.len() - 2;
        MeanFieldState {
            b: y[..m].to_vec(),
            s_minus: y[m],
            s_z: y[m + 1].re,
        }
    }
}

/// How the probe-populated cavity enters the qubit terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CavityModel {
    Steady,
    Transient,
    /// Intrinsic Γ̃ and Δ_q only.
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanFieldOptions {
    /// Adds `+ i ε_d s_z` to the coherence equation.
    pub drive_term: bool,
    pub cavity: CavityModel,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions {
            drive_term: false,
            cavity: CavityModel::Steady,
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

impl MeanFieldOptions {
    /// Settings for the driven steady state (drive term on).
    pub fn for_population() -> Self {
        MeanFieldOptions {
            drive_term: true,
            ..Self::default()
        }
    }
}

/// Right-hand side coefficients in rad/s.
#[derive(Clone, Debug)]
struct Coefficients {
    /// `iΔ_b,k − γ_k/2`
    mode_rate: Vec<Complex64>,
    g: Vec<f64>,
    delta_q: f64,
    gamma_tilde: f64,
    gamma1: f64,
    eps_d: f64,
    drive_term: bool,
    transient: Option<TransientFields>,
}

#[derive(Clone, Debug)]
struct TransientFields {
    params: SystemParams,
    drive: DriveParams,
    delta_q0: f64,
}

impl Coefficients {
    fn new(params: &SystemParams, drive: &DriveParams, opts: &MeanFieldOptions) -> Result<Self> {
        params.validate()?;
        drive.validate()?;
        let det = detunings(params, drive);
        let terms = match opts.cavity {
            CavityModel::Steady => effective_terms(&cavity_fields(params, drive, FieldMode::Steady)?, params),
            CavityModel::Transient | CavityModel::Off => EffectiveQubitTerms {
                omega_q_cav: 0.0,
                gamma_phi_cav: 0.0,
                gamma_tilde: params.intrinsic_gamma_tilde(),
            },
        };
        let transient = (opts.cavity == CavityModel::Transient).then(|| TransientFields {
            params: params.clone(),
            drive: drive.clone(),
            delta_q0: det.delta_q,
        });
        Ok(Coefficients {
            mode_rate: params
                .phonon_modes
                .iter()
                .zip(&det.delta_b)
                .map(|(m, db)| Complex64::new(-0.5 * TAU * m.gamma, TAU * db))
                .collect(),
            g: params.phonon_modes.iter().map(|m| TAU * m.g_qh).collect(),
            delta_q: TAU * (det.delta_q - terms.omega_q_cav),
            gamma_tilde: TAU * terms.gamma_tilde,
            gamma1: TAU * params.gamma1,
            eps_d: TAU * drive.eps_d,
            drive_term: opts.drive_term,
            transient,
        })
    }

    /// (Δ̃_q, Γ̃) at time `t`, rad/s.
    fn qubit_terms(&self, t: f64) -> (f64, f64) {
        match &self.transient {
            None => (self.delta_q, self.gamma_tilde),
            Some(tf) => {
                let f = cavity_fields(&tf.params, &tf.drive, FieldMode::Transient(t))
                    .expect("validated when the transient model was built");
                let terms = effective_terms(&f, &tf.params);
                (TAU * (tf.delta_q0 - terms.omega_q_cav), TAU * terms.gamma_tilde)
            }
        }
    }
}

impl OdeSystem for Coefficients {
    fn dim(&self) -> usize {
        self.g.len() + 2
    }

    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let m = self.g.len();
        let sm = y[m];
        let sz = y[m + 1].re;
        let (dq, gt) = self.qubit_terms(t);
        let mut gb = Complex64::new(0.0, 0.0);
        let mut gb_conj = Complex64::new(0.0, 0.0);
        for k in 0..m {
            let b = y[k];
            dy[k] = self.mode_rate[k] * b - I * self.g[k] * sm;
            if k == 0 {
                gb = self.g[k] * b;
                gb_conj = self.g[k] * b.conj();
            } else {
                gb += self.g[k] * b;
                gb_conj += self.g[k] * b.conj();
            }
        }
        let mut dsm = Complex64::new(-gt, dq) * sm + I * sz * gb;
        if self.drive_term {
            dsm += I * self.eps_d * sz;
        }
        dy[m] = dsm;
        let dsz = 2.0 * I * sm * (gb_conj + self.eps_d) - 2.0 * I * sm.conj() * (gb + self.eps_d)
            - self.gamma1 * (sz + 1.0);
        // the imaginary part vanishes analytically; dropping it keeps s_z real
        dy[m + 1] = Complex64::new(dsz.re, 0.0);
    }
}

#[derive(Clone, Debug)]
pub struct MeanFieldSeries {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
}

/// Integrates the mean-field equations from `t = 0` and returns the state at
/// each requested time.
pub fn integrate_meanfield(
    params: &SystemParams,
    drive: &DriveParams,
    init: &MeanFieldState,
    times: &[f64],
    opts: &MeanFieldOptions,
) -> Result<MeanFieldSeries> {
    if init.b.len() != params.phonon_modes.len() {
        return Err(Error::DimensionMismatch {
            expected: params.phonon_modes.len(),
            got: init.b.len(),
        });
    }
    let sys = Coefficients::new(params, drive, opts)?;
    let ode = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..OdeOptions::default()
    };
    let out = integrate(&sys, 0.0, &init.to_vec(), times, &ode)?;
    Ok(MeanFieldSeries {
        times: times.to_vec(),
        states: out.iter().map(|y| MeanFieldState::from_slice(y)).collect(),
    })
}

/// Time window of a mean-field spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpectrumWindow {
    /// Length of the correlation record, s. `None` picks ten times the
    /// slowest intrinsic decay time.
    pub t_max: Option<f64>,
    /// Sample spacing, s. `None` resolves the grid and the dynamics with a
    /// fourfold margin over Nyquist.
    pub dt: Option<f64>,
    /// Transform a non-decayed record after tail windowing.
    pub force: bool,
}

/// `10 / (2π r)` with `r` the smallest of Γ̃ and the amplitude decay rates of
/// coupled modes.
pub fn default_t_max(params: &SystemParams) -> f64 {
    let slowest = params
        .phonon_modes
        .iter()
        .filter(|m| m.g_qh != 0.0)
        .map(|m| 0.5 * m.gamma)
        .fold(params.intrinsic_gamma_tilde(), f64::min);
    10.0 / (TAU * slowest)
}

/// Sample spacing covering every frame frequency of interest with margin.
pub fn default_dt(params: &SystemParams, drive: &DriveParams, grid: &SpectrumGrid) -> f64 {
    let det = detunings(params, drive);
    let gt = params.intrinsic_gamma_tilde();
    let mut extent = det.delta_q.abs() + 5.0 * gt;
    for db in &det.delta_b {
        extent = extent.max(db.abs() + 5.0 * gt);
    }
    if let SpectrumGrid::Absolute(f) = grid {
        for x in f {
            extent = extent.max((x - drive.omega_d).abs());
        }
    }
    1.0 / (4.0 * extent)
}

/// The mean-field s₋ record from the bookkeeping state, as a correlation
/// series in the drive frame.
pub fn meanfield_correlation(
    params: &SystemParams,
    drive: &DriveParams,
    t_max: f64,
    dt: f64,
    opts: &MeanFieldOptions,
) -> Result<CorrelationSeries> {
    let n = (t_max / dt).ceil() as usize + 1;
    let times = sample_times(dt * (n - 1) as f64, n)?;
    let series = integrate_meanfield(
        params,
        drive,
        &MeanFieldState::spectrum_initial(params.phonon_modes.len()),
        &times,
        opts,
    )?;
    let values = series.states.iter().map(|s| s.s_minus).collect();
    CorrelationSeries::new(times, values, drive.omega_d)
}

/// Mean-field qubit spectrum on `grid`, using the same one-sided transform
/// as the master-equation route.
pub fn spectrum_meanfield(
    params: &SystemParams,
    drive: &DriveParams,
    grid: &SpectrumGrid,
    window: &SpectrumWindow,
    opts: &MeanFieldOptions,
) -> Result<SpectrumTrace> {
    let t_max = window.t_max.unwrap_or_else(|| default_t_max(params));
    let dt = window.dt.unwrap_or_else(|| default_dt(params, drive, grid));
    let series = meanfield_correlation(params, drive, t_max, dt, opts)?;
    let mut trace = spectrum_from_correlation(&series, grid, window.force)?;
    trace.meta.model = "mean_field".into();
    trace.meta.params_hash = params_hash(&format!("{params:?}{drive:?}{opts:?}"));
    trace.meta.notes.push(("t_max".into(), series.times.last().copied().unwrap_or(0.0).to_string()));
    trace.meta.notes.push(("dt".into(), dt.to_string()));
    trace.meta.notes.push(("drive_term".into(), opts.drive_term.to_string()));
    if params.phonon_modes.len() > 1 {
        trace.meta.notes.push(("multimode_coupling".into(), "sum_over_modes".into()));
    }
    Ok(trace)
}

/// Fixed point residual in real coordinates (b re/im…, s₋ re/im, s_z).
fn real_rhs(sys: &Coefficients, x: &DVector<f64>) -> DVector<f64> {
    let m = sys.g.len();
    let mut y = Vec::with_capacity(m + 2);
    for k in 0..=m {
        y.push(Complex64::new(x[2 * k], x[2 * k + 1]));
    }
    y.push(Complex64::new(x[2 * m + 2], 0.0));
    let mut dy = vec![Complex64::new(0.0, 0.0); m + 2];
    sys.rhs(0.0, &y, &mut dy);
    let mut out = DVector::zeros(2 * m + 3);
    for k in 0..=m {
        out[2 * k] = dy[k].re;
        out[2 * k + 1] = dy[k].im;
    }
    out[2 * m + 2] = dy[m + 1].re;
    out
}

/// Linear-response fixed point with s_z pinned to −1.
fn linear_seed(sys: &Coefficients) -> DVector<f64> {
    let m = sys.g.len();
    let mut denom = Complex64::new(-sys.gamma_tilde, sys.delta_q);
    for k in 0..m {
        denom += sys.g[k] * sys.g[k] / sys.mode_rate[k];
    }
    let sm = I * sys.eps_d / denom;
    let b: Vec<Complex64> = (0..m).map(|k| I * sys.g[k] * sm / sys.mode_rate[k]).collect();
    let x_drive: Complex64 = b.iter().zip(&sys.g).map(|(b, g)| g * b.conj()).sum::<Complex64>() + sys.eps_d;
    let sz = (-1.0 - 4.0 * (sm * x_drive).im / sys.gamma1).clamp(-1.0, 1.0);
    let mut x = DVector::zeros(2 * m + 3);
    for (k, bk) in b.iter().enumerate() {
        x[2 * k] = bk.re;
        x[2 * k + 1] = bk.im;
    }
    x[2 * m] = sm.re;
    x[2 * m + 1] = sm.im;
    x[2 * m + 2] = sz;
    x
}

fn rate_scale(sys: &Coefficients) -> f64 {
    sys.mode_rate
        .iter()
        .map(|r| r.norm())
        .chain([sys.gamma1, sys.gamma_tilde, sys.delta_q.abs()])
        .fold(0.0, f64::max)
}

fn newton(sys: &Coefficients, mut x: DVector<f64>) -> Option<DVector<f64>> {
    let scale = rate_scale(sys);
    let n = x.len();
    for _ in 0..60 {
        let f = real_rhs(sys, &x);
        if f.amax() <= 1e-13 * scale {
            return Some(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1e-6);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (real_rhs(sys, &xp) - real_rhs(sys, &xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = jac.lu().solve(&(-&f))?;
        x += step;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let f = real_rhs(sys, &x);
    (f.amax() <= 1e-10 * scale).then_some(x)
}

/// Steady excited population (1 + s_z)/2 of the driven mean-field equations.
///
/// Newton's method on the fixed point, seeded by linear response, with a
/// fall-back to integration from the ground state when it fails or lands
/// outside the Bloch ball.
pub fn steady_population_meanfield(
    params: &SystemParams,
    drive: &DriveParams,
    opts: &MeanFieldOptions,
) -> Result<f64> {
    let sys = Coefficients::new(params, drive, &MeanFieldOptions {
        cavity: match opts.cavity {
            // the steady state sees the steady fields
            CavityModel::Transient => CavityModel::Steady,
            c => c,
        },
        ..*opts
    })?;
    if sys.eps_d == 0.0 {
        return Ok(0.0);
    }
    let m = sys.g.len();
    if let Some(x) = newton(&sys, linear_seed(&sys)) {
        let state = MeanFieldState {
            b: vec![],
            s_minus: Complex64::new(x[2 * m], x[2 * m + 1]),
            s_z: x[2 * m + 2],
        };
        if state.s_z >= -1.0 - 1e-9 && state.bloch_excess() <= 1e-9 {
            return Ok(state.excited_population().clamp(0.0, 1.0));
        }
    }
    relax_by_integration(&sys, m)
}

fn relax_by_integration(sys: &Coefficients, m: usize) -> Result<f64> {
    let slowest = sys
        .mode_rate
        .iter()
        .map(|r| -r.re)
        .chain([sys.gamma_tilde, 0.5 * sys.gamma1])
        .fold(f64::INFINITY, f64::min);
    let window = 20.0 / slowest;
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-13,
        ..OdeOptions::default()
    };
    let mut y = MeanFieldState::ground(m).to_vec();
    let scale = rate_scale(sys);
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        y = integrate(sys, 0.0, &y, &[window], &opts)?.pop().expect("one output");
        let mut dy = vec![Complex64::new(0.0, 0.0); m + 2];
        sys.rhs(0.0, &y, &mut dy);
        residual = dy.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
        if residual < 1e-11 {
            return Ok(MeanFieldState::from_slice(&y).excited_population().clamp(0.0, 1.0));
        }
    }
    Err(Error::NonConvergence { residual })
}
