//! Adaptive Dormand–Prince 5(4) integration of complex linear and nonlinear
//! systems, with outputs at caller-chosen times.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step, seconds.
    pub max_step: f64,
    /// Smallest step before giving up, relative to the current time scale.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            min_step: 1e-24,
            max_steps: 50_000_000,
        }
    }
}

// Dormand–Prince tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b̂ (error weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stages {
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Stages {
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            y_new: z,
        }
    }
}

/// Integrates from `t0` and returns the state at every entry of `t_out`
/// (which must be non-decreasing and ≥ `t0`). The step is shortened to land
/// exactly on each output time.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[Complex64],
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<Complex64>>> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y0.len(),
        });
    }
    if let Some(w) = t_out.windows(2).find(|w| w[1] < w[0]) {
        return Err(Error::param("times", format!("not sorted: {} > {}", w[0], w[1])));
    }
    if t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::param("times", "output time precedes the initial time"));
    }
    let mut out = Vec::with_capacity(t_out.len());
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut st = Stages::new(n);
    sys.rhs(t, &y, &mut st.k[0]);
    let mut h = initial_step(sys, t, &y, &st.k[0], opts);
    let mut steps = 0usize;

    for &target in t_out {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Integrator {
                    t_reached: t,
                    reason: format!("exceeded {} steps", opts.max_steps),
                });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            let err = try_step(sys, t, &y, h_try, &mut st, opts);
            steps += 1;
            if !err.is_finite() {
                h = 0.25 * h_try;
            } else if err <= 1.0 {
                t = if last { target } else { t + h_try };
                std::mem::swap(&mut y, &mut st.y_new);
                // FSAL: k7 is f(t+h, y_new)
                st.k.swap(0, 6);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a step clipped to hit an output time must not shrink the next one
                h = if last { h.max(h_try * fac) } else { h_try * fac }.min(opts.max_step);
                continue;
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                h = h_try * fac;
            }
            if h < opts.min_step.max(1e-14 * t.abs()) {
                return Err(Error::Integrator {
                    t_reached: t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[Complex64],
    f0: &[Complex64],
    opts: &OdeOptions,
) -> f64 {
    let scale = |v: &Complex64| opts.atol + opts.rtol * v.norm();
    let d0 = rms(y.iter().map(|v| v.norm() / scale(v)));
    let d1 = rms(f0.iter().zip(y).map(|(f, v)| f.norm() / scale(v)));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.max_step);
    let y1: Vec<Complex64> = y.iter().zip(f0).map(|(v, f)| v + f * h0).collect();
    let mut f1 = vec![Complex64::new(0.0, 0.0); y.len()];
    sys.rhs(t + h0, &y1, &mut f1);
    let d2 = rms(f1.iter().zip(f0).zip(y).map(|((a, b), v)| (a - b).norm() / scale(v))) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// One trial step; leaves the proposal in `st.y_new` and `f(t+h, y_new)` in
/// `st.k[6]`. Returns the scaled error norm.
fn try_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[Complex64],
    h: f64,
    st: &mut Stages,
    opts: &OdeOptions,
) -> f64 {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$(($a:expr, $k:expr)),*]) => {{
            for i in 0..n {
                st.tmp[i] = y[i] $(+ st.k[$k][i] * ($a * h))*;
            }
            let (head, tail) = st.k.split_at_mut($dst);
            let _ = head;
            sys.rhs(t + $c * h, &st.tmp, &mut tail[0]);
        }};
    }
    stage!(1, C2, [(A21, 0)]);
    stage!(2, C3, [(A31, 0), (A32, 1)]);
    stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
    stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
    stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
    for i in 0..n {
        st.y_new[i] = y[i]
            + (st.k[0][i] * B1 + st.k[2][i] * B3 + st.k[3][i] * B4 + st.k[4][i] * B5 + st.k[5][i] * B6) * h;
    }
    {
        let (head, tail) = st.k.split_at_mut(6);
        let _ = head;
        sys.rhs(t + h, &st.y_new, &mut tail[0]);
    }
    let mut acc = 0.0;
    for i in 0..n {
        let e = (st.k[0][i] * E1
            + st.k[2][i] * E3
            + st.k[3][i] * E4
            + st.k[4][i] * E5
            + st.k[5][i] * E6
            + st.k[6][i] * E7)
            * h;
        let sc = opts.atol + opts.rtol * y[i].norm().max(st.y_new[i].norm());
        let r = e.norm() / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}
