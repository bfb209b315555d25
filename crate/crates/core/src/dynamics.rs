//! Master-equation engine: time evolution, steady states, the σ₋σ₊
//! correlation by the regression step, and two-tone population traces.
//!
//! States are evolved as column-stacked vectors, `∂vec(ρ) = L·vec(ρ)`, with
//! `L` in rad/s. Frequencies on the public surface are in Hz.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::{Conj, Mat};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{
    embed, qubit_ops, unvectorize, vectorize, DensityState, HilbertLayout, OperatorMatrix,
    Subsystem, SuperOperatorMatrix, STATE_TOL,
};
use crate::meanfield::{cavity_fields, effective_terms, FieldMode};
use crate::model::{effective_liouvillian, full_liouvillian, DriveParams, SystemParams};
use crate::ode::{integrate, OdeOptions, OdeSystem};
use crate::sparse::CsrMatrix;
use crate::spectrum::{
    one_sided_fft, one_sided_transform, params_hash, tail_ratio, tail_window, FrequencyAxis,
    SpectrumTrace, TraceMeta, DECAY_THRESHOLD,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative residual accepted for a steady state, in units of `‖L‖∞`.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Step cap, seconds. `None` uses a tenth of the fastest decay time in `L`.
    pub max_step: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: None,
        }
    }
}

impl EvolveOptions {
    fn ode_options(&self, l: &CsrMatrix) -> OdeOptions {
        let max_step = self.max_step.unwrap_or_else(|| {
            let fastest = fastest_decay(l);
            if fastest > 0.0 {
                0.1 / fastest
            } else {
                f64::INFINITY
            }
        });
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            max_step,
            ..OdeOptions::default()
        }
    }
}

/// Largest `-Re L_ii`, rad/s.
fn fastest_decay(l: &CsrMatrix) -> f64 {
    l.triplets()
        .filter(|(r, c, _)| r == c)
        .map(|(_, _, v)| -v.re)
        .fold(0.0, f64::max)
}

struct Lindblad<'a> {
    l: &'a CsrMatrix,
}

impl OdeSystem for Lindblad<'_> {
    fn dim(&self) -> usize {
        self.l.nrows()
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        self.l.mul_vec_into(y, dy);
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
}

impl Trajectory {
    pub fn expect(&self, op: &OperatorMatrix) -> Result<Vec<Complex64>> {
        self.states.iter().map(|s| s.expect(op)).collect()
    }

    pub fn last(&self) -> &DensityState {
        self.states.last().expect("trajectories are non-empty")
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::param("times", "empty"));
    }
    if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("times", "must be finite and start at t >= 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("times", "must be strictly increasing"));
    }
    Ok(())
}

fn check_layout(state: &HilbertLayout, l: &SuperOperatorMatrix) -> Result<()> {
    if state != l.layout() {
        return Err(Error::DimensionMismatch {
            expected: l.layout().total_dim(),
            got: state.total_dim(),
        });
    }
    Ok(())
}

/// Integrates the master equation from `t = 0` and returns the state at each
/// requested time (symmetrized to remove round-off anti-Hermitian parts).
pub fn evolve(
    initial: &DensityState,
    l: &SuperOperatorMatrix,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    check_layout(initial.layout(), l)?;
    check_times(times)?;
    initial.validate(STATE_TOL)?;
    let y0 = vectorize(initial.matrix());
    let sys = Lindblad { l: l.matrix() };
    let out = integrate(&sys, 0.0, &y0, times, &opts.ode_options(l.matrix()))?;
    let n = initial.layout().total_dim();
    let states = out
        .into_iter()
        .map(|v| DensityState::symmetrized(initial.layout().clone(), unvectorize(&v, n)))
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

// Symbolic factorizations keyed by sparsity pattern. Sweeps rebuild L with
// the same pattern at every point, so the ordering work is done once.
static SYMBOLIC_CACHE: Mutex<Vec<(u64, SymbolicLu<usize>)>> = Mutex::new(Vec::new());
const SYMBOLIC_CACHE_LEN: usize = 16;

fn pattern_key(m: &CsrMatrix) -> u64 {
    let mut h = DefaultHasher::new();
    m.nrows().hash(&mut h);
    for (r, c, _) in m.triplets() {
        (r, c).hash(&mut h);
    }
    h.finish()
}

struct Factorized {
    lu: Lu<usize, faer::c64>,
}

impl Factorized {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let key = pattern_key(a);
        let mat = a.to_faer()?;
        let cached = {
            let cache = SYMBOLIC_CACHE.lock().expect("cache lock");
            cache.iter().find(|(k, _)| *k == key).map(|(_, s)| s.clone())
        };
        let symbolic = match cached {
            Some(s) => s,
            None => {
                let s = SymbolicLu::try_new(mat.symbolic())
                    .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
                let mut cache = SYMBOLIC_CACHE.lock().expect("cache lock");
                if cache.len() >= SYMBOLIC_CACHE_LEN {
                    cache.remove(0);
                }
                cache.push((key, s.clone()));
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
        Ok(Factorized { lu })
    }

    fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let mut b = Mat::<faer::c64>::from_fn(rhs.len(), 1, |i, _| faer::c64::new(rhs[i].re, rhs[i].im));
        self.lu.solve_in_place_with_conj(Conj::No, b.as_mut());
        (0..rhs.len())
            .map(|i| {
                let v = b[(i, 0)];
                Complex64::new(v.re, v.im)
            })
            .collect()
    }
}

/// `L` with its first row replaced by `scale · vec(I)ᵀ` (the trace functional).
fn trace_augmented(l: &CsrMatrix, n: usize, scale: f64) -> CsrMatrix {
    let mut trip: Vec<(usize, usize, Complex64)> = l.triplets().filter(|(r, _, _)| *r != 0).collect();
    for i in 0..n {
        trip.push((0, i * (n + 1), Complex64::new(scale, 0.0)));
    }
    CsrMatrix::from_triplets(l.nrows(), l.ncols(), trip)
}

fn residual_inf(l: &CsrMatrix, x: &[Complex64]) -> f64 {
    l.mul_vec(x).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn trace_of(x: &[Complex64], n: usize) -> Complex64 {
    (0..n).map(|i| x[i * (n + 1)]).sum()
}

/// Normalizes, symmetrizes and checks a candidate kernel vector.
fn accept(layout: &HilbertLayout, l: &CsrMatrix, x: &[Complex64], scale: f64) -> Result<DensityState> {
    let n = layout.total_dim();
    let tr = trace_of(x, n);
    if !(tr.norm() > 0.0) || x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::LinearSolver("non-finite or traceless solution".into()));
    }
    let x: Vec<Complex64> = x.iter().map(|v| v / tr).collect();
    let res = residual_inf(l, &x);
    if res > STEADY_RESIDUAL_TOL * scale {
        return Err(Error::NonConvergence { residual: res / scale });
    }
    let m = unvectorize(&x, n);
    let herm = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm > STATE_TOL {
        return Err(Error::Model(format!("steady state is not Hermitian (defect {herm:e})")));
    }
    let state = DensityState::symmetrized(layout.clone(), m);
    state.validate(STATE_TOL)?;
    Ok(state)
}

/// Unique stationary state of `L`.
///
/// The trace constraint replaces one row of `L` and the system is solved by
/// sparse LU with one step of iterative refinement. If that fails the
/// kernel is sought by shifted inverse iteration from two different starts;
/// disagreement between them signals a degenerate kernel.
pub fn steady_state(l: &SuperOperatorMatrix) -> Result<DensityState> {
    let layout = l.layout();
    let n = layout.total_dim();
    let m = l.matrix();
    let scale = m.norm_inf();
    if scale == 0.0 {
        return Err(Error::DegenerateSteadyState("Liouvillian is zero".into()));
    }
    let a = trace_augmented(m, n, m.max_abs());
    let mut rhs = vec![ZERO; n * n];
    rhs[0] = Complex64::new(m.max_abs(), 0.0);
    let direct = Factorized::new(&a).and_then(|f| {
        let mut x = f.solve(&rhs);
        let ax = a.mul_vec(&x);
        let r: Vec<Complex64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let dx = f.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
        accept(layout, m, &x, scale)
    });
    match direct {
        Ok(s) => Ok(s),
        Err(_) => inverse_iteration(l, scale),
    }
}

fn inverse_iteration(l: &SuperOperatorMatrix, scale: f64) -> Result<DensityState> {
    let layout = l.layout();
    let n = layout.total_dim();
    let m = l.matrix();
    let shift = 1e-9 * scale;
    let mut trip: Vec<(usize, usize, Complex64)> = m.triplets().collect();
    for i in 0..n * n {
        trip.push((i, i, Complex64::new(-shift, 0.0)));
    }
    let shifted = CsrMatrix::from_triplets(n * n, n * n, trip);
    let f = Factorized::new(&shifted)?;
    let ground = DensityState::ground(layout.clone());
    let mixed = DMatrix::<Complex64>::identity(n, n) / Complex64::new(n as f64, 0.0);
    let mut results = Vec::new();
    for start in [vectorize(ground.matrix()), vectorize(&mixed)] {
        let mut x = start;
        for _ in 0..4 {
            x = f.solve(&x);
            let big = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
            if !(big.is_finite() && big > 0.0) {
                return Err(Error::DegenerateSteadyState("inverse iteration broke down".into()));
            }
            x.iter_mut().for_each(|v| *v /= big);
        }
        let tr = trace_of(&x, n);
        if tr.norm() < 1e-12 {
            return Err(Error::DegenerateSteadyState("kernel vector is traceless".into()));
        }
        results.push(x.iter().map(|v| v / tr).collect::<Vec<_>>());
    }
    let spread = results[0]
        .iter()
        .zip(&results[1])
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if spread > 1e-6 {
        return Err(Error::DegenerateSteadyState(format!(
            "different initial states relax to different stationary states (spread {spread:e})"
        )));
    }
    accept(layout, m, &results[0], scale)
}

/// Excited-state population of the qubit slot.
pub fn qubit_population(state: &DensityState) -> Result<f64> {
    let layout = state.layout();
    let slot = layout
        .slot_of(Subsystem::Qubit)
        .ok_or_else(|| Error::Model("layout has no qubit slot".into()))?;
    let inner: usize = layout.dims()[slot + 1..].iter().product();
    let m = state.matrix();
    let p = (0..layout.total_dim())
        .filter(|i| (i / inner) % 2 == 1)
        .map(|i| m[(i, i)].re)
        .sum();
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Rotating-frame origin (drive frequency), Hz.
    pub frame_hz: f64,
    /// `max |C|` over the last 5% of samples relative to `|C(0)|`.
    pub tail_ratio: f64,
}

impl CorrelationSeries {
    pub fn new(times: Vec<f64>, values: Vec<Complex64>, frame_hz: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::param("times", "need at least two samples"));
        }
        check_times(&times)?;
        if times[0] != 0.0 {
            return Err(Error::param("times", "correlation series start at t = 0"));
        }
        let dt = times[1];
        if times
            .iter()
            .enumerate()
            .any(|(i, t)| (t - i as f64 * dt).abs() > 1e-9 * dt.max(*t))
        {
            return Err(Error::param("times", "sampling must be uniform"));
        }
        let tail_ratio = tail_ratio(&values);
        Ok(CorrelationSeries {
            times,
            values,
            frame_hz,
            tail_ratio,
        })
    }

    pub fn dt(&self) -> f64 {
        self.times[1]
    }

    pub fn decayed(&self) -> bool {
        self.tail_ratio <= DECAY_THRESHOLD
    }
}

/// Uniform sample times `0, dt, …, t_max`.
pub fn sample_times(t_max: f64, n_samples: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && t_max.is_finite()) || n_samples < 2 {
        return Err(Error::param("t_max", "need t_max > 0 and at least two samples"));
    }
    let dt = t_max / (n_samples - 1) as f64;
    Ok((0..n_samples).map(|i| i as f64 * dt).collect())
}

/// `⟨σ₋(t)σ₊(0)⟩` from the regression step: σ₊ρ_s is evolved under `L` and
/// `tr(σ₋ ρ(t))` recorded on a uniform grid. `frame_hz` is stored for the
/// conversion of spectra to absolute frequencies.
pub fn correlation_sigma(
    rho_ss: &DensityState,
    l: &SuperOperatorMatrix,
    t_max: f64,
    n_samples: usize,
    frame_hz: f64,
    opts: &EvolveOptions,
) -> Result<CorrelationSeries> {
    check_layout(rho_ss.layout(), l)?;
    let layout = l.layout();
    let slot = layout
        .slot_of(Subsystem::Qubit)
        .ok_or_else(|| Error::Model("layout has no qubit slot".into()))?;
    let q = qubit_ops();
    let sp = embed(&q.sigma_plus, layout, slot)?;
    let sm = embed(&q.sigma_minus, layout, slot)?;
    let times = sample_times(t_max, n_samples)?;
    let y0 = vectorize(&(sp.matrix() * rho_ss.matrix()));
    let sys = Lindblad { l: l.matrix() };
    let out = integrate(&sys, 0.0, &y0, &times, &opts.ode_options(l.matrix()))?;
    let n = layout.total_dim();
    // tr(σ₋ X) = Σ_ij σ₋[j,i] X[i,j]
    let sm_entries: Vec<(usize, usize, Complex64)> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .filter_map(|(i, j)| {
            let v = sm.matrix()[(j, i)];
            (v != ZERO).then_some((i, j, v))
        })
        .collect();
    let values = out
        .iter()
        .map(|v| sm_entries.iter().map(|&(i, j, s)| s * v[j * n + i]).sum())
        .collect();
    CorrelationSeries::new(times, values, frame_hz)
}

/// Where a spectrum should be evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumGrid {
    /// The zero-padded FFT grid over the full sampled band.
    Fft,
    /// Arbitrary absolute frequencies (Hz), evaluated directly.
    Absolute(Vec<f64>),
}

/// One-sided transform of a correlation series on the absolute axis.
/// Refuses series that have not decayed unless `force` is set, in which case
/// an exponential tail window is applied first.
pub fn spectrum_from_correlation(
    series: &CorrelationSeries,
    grid: &SpectrumGrid,
    force: bool,
) -> Result<SpectrumTrace> {
    let windowed;
    let values = if series.decayed() {
        &series.values
    } else if force {
        windowed = tail_window(&series.values);
        &windowed
    } else {
        return Err(Error::NotDecayed {
            ratio: series.tail_ratio,
        });
    };
    let dt = series.dt();
    let (freqs, vals) = match grid {
        SpectrumGrid::Fft => {
            let (f, v) = one_sided_fft(values, dt);
            (f.into_iter().map(|f| f + series.frame_hz).collect(), v)
        }
        SpectrumGrid::Absolute(f) => {
            let rel: Vec<f64> = f.iter().map(|f| f - series.frame_hz).collect();
            (f.clone(), one_sided_transform(values, dt, &rel))
        }
    };
    let meta = TraceMeta::new("correlation", 0)
        .with_note("frame_hz", series.frame_hz)
        .with_note("tail_ratio", series.tail_ratio)
        .with_note("windowed", !series.decayed());
    SpectrumTrace::new(freqs, vals, FrequencyAxis::Absolute, meta)
}

/// Qubit spectrum from the cavity-eliminated master equation: the probe
/// enters through the steady cavity-induced shift and dephasing, and the
/// correlation is sampled every `dt` up to `t_max` before the one-sided
/// transform.
pub fn spectrum_me(
    params: &SystemParams,
    drive: &DriveParams,
    grid: &SpectrumGrid,
    t_max: f64,
    dt: f64,
    force: bool,
) -> Result<SpectrumTrace> {
    if !(dt > 0.0 && t_max > dt) {
        return Err(Error::param("dt", "need 0 < dt < t_max"));
    }
    let terms = effective_terms(&cavity_fields(params, drive, FieldMode::Steady)?, params);
    let layout = params.effective_layout()?;
    let l = effective_liouvillian(params, drive, &layout, terms.omega_q_cav, terms.gamma_phi_cav)?;
    let rho = steady_state(&l)?;
    let n = (t_max / dt).ceil() as usize + 1;
    let series = correlation_sigma(&rho, &l, dt * (n - 1) as f64, n, drive.omega_d, &EvolveOptions::default())?;
    let mut trace = spectrum_from_correlation(&series, grid, force)?;
    trace.meta.model = "master_equation".into();
    trace.meta.params_hash = params_hash(&format!("{params:?}{drive:?}"));
    trace.meta.notes.push(("dt".into(), dt.to_string()));
    Ok(trace)
}

/// Steady-state excited population of the full model at one drive frequency.
pub fn steady_population_me(params: &SystemParams, drive: &DriveParams) -> Result<f64> {
    let layout = params.layout()?;
    let l = full_liouvillian(params, drive, &layout)?;
    qubit_population(&steady_state(&l)?)
}

/// Two-tone spectroscopy with the full master equation: the drive frame is
/// rebuilt at every grid frequency (absolute Hz) and the steady-state qubit
/// population recorded. Points are evaluated in parallel and assembled in
/// grid order.
pub fn two_tone_trace_me(
    params: &SystemParams,
    drive: &DriveParams,
    grid: &[f64],
    normalize: bool,
) -> Result<SpectrumTrace> {
    params.validate()?;
    drive.validate()?;
    if params.phonon_modes.len() > 1 {
        return Err(Error::Model(format!(
            "the master-equation engine takes one phonon mode, got {}",
            params.phonon_modes.len()
        )));
    }
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&f| {
            steady_population_me(params, &drive.at_frequency(f)).map_err(|e| Error::at_frequency(f, e))
        })
        .collect::<Result<_>>()?;
    let meta = TraceMeta::new("master_equation", params_hash(&format!("{params:?}{drive:?}")))
        .with_note("cavity_dim", params.cavity_dim)
        .with_note("phonon_dim", params.phonon_dim)
        .with_note("normalized", normalize);
    let trace = SpectrumTrace::new(grid.to_vec(), values, FrequencyAxis::Absolute, meta)?;
    Ok(if normalize { trace.normalized() } else { trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{liouvillian, HilbertLayout};
    use crate::model::PhononMode;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::TAU;

    fn qubit_decay(gamma1: f64) -> SuperOperatorMatrix {
        let layout = HilbertLayout::with_kinds(vec![2], vec![Subsystem::Qubit]).unwrap();
        let q = qubit_ops();
        let sm = embed(&q.sigma_minus, &layout, 0).unwrap();
        let h = OperatorMatrix::zeros(&layout);
        liouvillian(&h, &[(TAU * gamma1, &sm)]).unwrap()
    }

    fn excited(l: &SuperOperatorMatrix) -> DensityState {
        DensityState::basis(l.layout().clone(), 1).unwrap()
    }

    #[test]
    fn amplitude_damping_matches_exponential() {
        let g1 = 1e5;
        let l = qubit_decay(g1);
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 1e-6).collect();
        let tr = evolve(&excited(&l), &l, &times, &EvolveOptions::default()).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert_abs_diff_eq!(s.matrix()[(1, 1)].re, (-TAU * g1 * t).exp(), epsilon = 1e-6);
            assert!((s.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_liouvillian_keeps_state() {
        let layout = HilbertLayout::with_kinds(vec![2], vec![Subsystem::Qubit]).unwrap();
        let l = SuperOperatorMatrix::zeros(&layout);
        let psi = nalgebra::DVector::from_vec(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]);
        let s = DensityState::pure(layout, &psi).unwrap();
        let tr = evolve(&s, &l, &[0.0, 1.0, 5.0], &EvolveOptions::default()).unwrap();
        for st in &tr.states {
            assert!((st.matrix() - s.matrix()).camax() < 1e-15);
        }
    }

    #[test]
    fn steady_state_of_decay_is_ground() {
        let l = qubit_decay(1e5);
        let s = steady_state(&l).unwrap();
        assert_abs_diff_eq!(s.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert_eq!(qubit_population(&s).unwrap().abs() < 1e-12, true);
    }

    #[test]
    fn pure_dephasing_is_degenerate() {
        let layout = HilbertLayout::with_kinds(vec![2], vec![Subsystem::Qubit]).unwrap();
        let q = qubit_ops();
        let sz = embed(&q.sigma_z, &layout, 0).unwrap();
        let l = liouvillian(&OperatorMatrix::zeros(&layout), &[(1e5, &sz)]).unwrap();
        match steady_state(&l) {
            Err(Error::DegenerateSteadyState(_)) => {}
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn populations_of_basis_and_mixed_states() {
        let layout = HilbertLayout::tripartite(2, 1, 2).unwrap();
        let g = DensityState::product(
            layout.clone(),
            &[
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(0.3, 0.0), Complex64::new(0.7, 0.0)])),
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(1.0, 0.0), ZERO])),
                DMatrix::identity(2, 2) * Complex64::new(0.5, 0.0),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(qubit_population(&g).unwrap(), 0.0);
        let mixed = DensityState::product(
            layout.clone(),
            &[
                DMatrix::identity(2, 2) * Complex64::new(0.5, 0.0),
                DMatrix::identity(2, 2) * Complex64::new(0.5, 0.0),
                DMatrix::identity(2, 2) * Complex64::new(0.5, 0.0),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(qubit_population(&mixed).unwrap(), 0.5, epsilon = 1e-15);
        // |e⟩ with the cavity and phonon in their ground states
        let e = DensityState::basis(layout, 2).unwrap();
        assert_abs_diff_eq!(qubit_population(&e).unwrap(), 1.0);
    }

    #[test]
    fn steady_state_matches_long_time_integration() {
        let mut p = SystemParams::table_s1();
        p.cavity_dim = 2;
        p.phonon_dim = 3;
        let drive = DriveParams::new(p.phonon_modes[0].omega_p + 50e3, 1e3, 0.0).unwrap();
        let layout = p.layout().unwrap();
        let l = full_liouvillian(&p, &drive, &layout).unwrap();
        let ss = steady_state(&l).unwrap();
        let t_end = 40.0 / (TAU * p.phonon_modes[0].gamma);
        let tr = evolve(&DensityState::ground(layout), &l, &[t_end], &EvolveOptions::default()).unwrap();
        let a = qubit_population(&ss).unwrap();
        let b = qubit_population(tr.last()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        assert!(a > 0.0);
    }

    #[test]
    fn decoupled_correlation_is_damped_oscillation() {
        let mut p = SystemParams::table_s1();
        p.phonon_modes = vec![PhononMode {
            omega_p: 6.064e9,
            gamma: 6.98e3,
            g_qh: 0.0,
        }];
        p.cavity_dim = 2;
        p.phonon_dim = 2;
        let drive = DriveParams::new(6.066e9, 0.0, 0.0).unwrap();
        let layout = p.layout().unwrap();
        let l = full_liouvillian(&p, &drive, &layout).unwrap();
        let ss = steady_state(&l).unwrap();
        let t_max = 8.0 / (TAU * p.intrinsic_gamma_tilde());
        let c = correlation_sigma(&ss, &l, t_max, 801, drive.omega_d, &EvolveOptions::default()).unwrap();
        let dq = drive.omega_d - p.omega_eg;
        let gt = p.intrinsic_gamma_tilde();
        for (t, v) in c.times.iter().zip(&c.values) {
            let exact = Complex64::new(-TAU * gt * t, TAU * dq * t).exp();
            assert!((v - exact).norm() < 1e-6, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn correlation_starts_at_ground_population() {
        let l = qubit_decay(2e5);
        let layout = l.layout().clone();
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.7, 0.0),
                Complex64::new(0.1, 0.2),
                Complex64::new(0.1, -0.2),
                Complex64::new(0.3, 0.0),
            ],
        );
        let s = DensityState::new(layout, m).unwrap();
        let c = correlation_sigma(&s, &l, 1e-6, 11, 0.0, &EvolveOptions::default()).unwrap();
        assert_abs_diff_eq!(c.values[0].re, 0.7, epsilon = 1e-14);
    }

    #[test]
    fn non_decayed_series_is_refused_unless_forced() {
        let times = sample_times(1e-6, 101).unwrap();
        let values = times.iter().map(|_| Complex64::new(1.0, 0.0)).collect();
        let s = CorrelationSeries::new(times, values, 0.0).unwrap();
        assert!(matches!(
            spectrum_from_correlation(&s, &SpectrumGrid::Fft, false),
            Err(Error::NotDecayed { .. })
        ));
        let forced = spectrum_from_correlation(&s, &SpectrumGrid::Fft, true).unwrap();
        assert_eq!(forced.meta.note("windowed"), Some("true"));
    }

    #[test]
    fn multimode_me_is_rejected() {
        let mut p = SystemParams::table_s1();
        p.phonon_modes.push(p.phonon_modes[0].clone());
        let d = DriveParams::new(6.064e9, 1e3, 0.0).unwrap();
        assert!(two_tone_trace_me(&p, &d, &[6.064e9], true).is_err());
    }
}
