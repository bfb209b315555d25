//! Sweep orchestration: segmented drive grids, two-tone traces with either
//! engine, qubit-frequency (Stark) maps and transparency-feature extraction.

use rayon::prelude::*;

use crate::dynamics::two_tone_trace_me;
use crate::error::{Error, Result};
use crate::meanfield::{steady_population_meanfield, MeanFieldOptions};
use crate::model::{DriveParams, SystemParams};
use crate::spectrum::{params_hash, FrequencyAxis, SpectrumTrace, TraceMeta};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Segment {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("step", format!("must be > 0, got {step}")));
        }
        if !(start.is_finite() && stop.is_finite() && stop >= start) {
            return Err(Error::param("segment", format!("bad range [{start}, {stop}]")));
        }
        Ok(Segment { start, stop, step })
    }

    /// `span` wide and centred on `center`.
    pub fn centered(center: f64, span: f64, step: f64) -> Result<Self> {
        Self::new(center - 0.5 * span, center + 0.5 * span, step)
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// Union of uniform segments, flattened to strictly increasing points.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    segments: Vec<Segment>,
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::param("segments", "empty"));
        }
        let min_step = segments.iter().map(|s| s.step).fold(f64::INFINITY, f64::min);
        let mut all: Vec<f64> = segments.iter().flat_map(|s| s.points()).collect();
        all.sort_by(f64::total_cmp);
        let tol = 1e-6 * min_step;
        let mut points: Vec<f64> = Vec::with_capacity(all.len());
        for p in all {
            match points.last() {
                Some(&last) if p - last <= tol => {}
                _ => points.push(p),
            }
        }
        Ok(FrequencyGrid { segments, points })
    }

    pub fn uniform(start: f64, stop: f64, step: f64) -> Result<Self> {
        Self::new(vec![Segment::new(start, stop, step)?])
    }

    /// A coarse window with any number of fine windows laid over it.
    pub fn windowed(coarse: Segment, fine: &[Segment]) -> Result<Self> {
        let mut segs = vec![coarse];
        segs.extend_from_slice(fine);
        Self::new(segs)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn fine_step(&self) -> f64 {
        self.segments.iter().map(|s| s.step).fold(f64::INFINITY, f64::min)
    }

    pub fn coarse_step(&self) -> f64 {
        self.segments.iter().map(|s| s.step).fold(0.0, f64::max)
    }
}

/// Fine window around `fine_center` inside a coarse window with the same
/// centre.
pub fn segmented_grid(
    fine_center: f64,
    fine_span: f64,
    fine_step: f64,
    coarse_span: f64,
    coarse_step: f64,
) -> Result<FrequencyGrid> {
    segmented_grid_about(fine_center, fine_span, fine_step, fine_center, coarse_span, coarse_step)
}

/// As [`segmented_grid`] with the coarse window centred elsewhere (usually
/// on the qubit).
pub fn segmented_grid_about(
    fine_center: f64,
    fine_span: f64,
    fine_step: f64,
    coarse_center: f64,
    coarse_span: f64,
    coarse_step: f64,
) -> Result<FrequencyGrid> {
    if !(fine_span > 0.0 && fine_span <= coarse_span) {
        return Err(Error::param(
            "fine_span",
            format!("need 0 < fine_span <= coarse_span, got {fine_span} and {coarse_span}"),
        ));
    }
    if fine_step > coarse_step {
        return Err(Error::param("fine_step", "must not exceed coarse_step"));
    }
    FrequencyGrid::windowed(
        Segment::centered(coarse_center, coarse_span, coarse_step)?,
        &[Segment::centered(fine_center, fine_span, fine_step)?],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engine {
    MasterEquation,
    MeanField,
}

impl Engine {
    pub fn tag(self) -> &'static str {
        match self {
            Engine::MasterEquation => "master_equation",
            Engine::MeanField => "mean_field",
        }
    }
}

/// Steady-state qubit population against drive frequency, normalized to the
/// maximum over the sweep.
pub fn two_tone_sweep(
    params: &SystemParams,
    drive: &DriveParams,
    grid: &FrequencyGrid,
    engine: Engine,
) -> Result<SpectrumTrace> {
    two_tone_sweep_raw(params, drive, grid, engine).map(|t| t.normalized())
}

/// [`two_tone_sweep`] without normalization.
pub fn two_tone_sweep_raw(
    params: &SystemParams,
    drive: &DriveParams,
    grid: &FrequencyGrid,
    engine: Engine,
) -> Result<SpectrumTrace> {
    match engine {
        Engine::MasterEquation => two_tone_trace_me(params, drive, grid.points(), false),
        Engine::MeanField => {
            params.validate()?;
            drive.validate()?;
            let opts = MeanFieldOptions::for_population();
            let values: Vec<f64> = grid
                .points()
                .par_iter()
                .map(|&f| {
                    steady_population_meanfield(params, &drive.at_frequency(f), &opts)
                        .map_err(|e| Error::at_frequency(f, e))
                })
                .collect::<Result<_>>()?;
            let mut meta = TraceMeta::new("mean_field", params_hash(&format!("{params:?}{drive:?}")))
                .with_note("drive_term", true);
            if params.phonon_modes.len() > 1 {
                meta = meta.with_note("multimode_coupling", "sum_over_modes");
            }
            SpectrumTrace::new(grid.points().to_vec(), values, FrequencyAxis::Absolute, meta)
        }
    }
}

/// Affine map from Stark-tone power to qubit frequency,
/// `ω_eg = base + slope · P` with `P` in mW.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarkCalibration {
    pub base_hz: f64,
    pub slope_hz_per_mw: f64,
}

impl StarkCalibration {
    pub fn qubit_frequency(&self, power_dbm: f64) -> f64 {
        self.base_hz + self.slope_hz_per_mw * 10f64.powf(power_dbm / 10.0)
    }

    pub fn qubit_frequencies(&self, powers_dbm: &[f64]) -> Vec<f64> {
        powers_dbm.iter().map(|&p| self.qubit_frequency(p)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarkMap {
    pub qubit_freqs: Vec<f64>,
    pub drive_freqs: FrequencyGrid,
    /// One normalized row per qubit frequency.
    pub response: Vec<Vec<f64>>,
    pub engine: Engine,
}

impl StarkMap {
    pub fn row(&self, i: usize) -> Result<SpectrumTrace> {
        let meta = TraceMeta::new(self.engine.tag(), 0).with_note("omega_eg", self.qubit_freqs[i]);
        SpectrumTrace::new(
            self.drive_freqs.points().to_vec(),
            self.response[i].clone(),
            FrequencyAxis::Absolute,
            meta,
        )
    }

    /// `(qubit_freq, drive_freq, response)` cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.qubit_freqs.iter().zip(&self.response).flat_map(move |(&q, row)| {
            self.drive_freqs.points().iter().zip(row).map(move |(&f, &v)| (q, f, v))
        })
    }
}

/// One two-tone trace per qubit frequency (the Stark tone is absorbed into
/// `omega_eg`).
pub fn stark_sweep(
    params: &SystemParams,
    drive: &DriveParams,
    qubit_freqs: &[f64],
    grid: &FrequencyGrid,
    engine: Engine,
) -> Result<StarkMap> {
    if engine == Engine::MasterEquation && params.phonon_modes.len() > 1 {
        return Err(Error::Model(
            "multimode Stark maps need the mean-field engine".into(),
        ));
    }
    let response = qubit_freqs
        .par_iter()
        .map(|&q| {
            let mut p = params.clone();
            p.omega_eg = q;
            two_tone_sweep(&p, drive, grid, engine).map(|t| t.values().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StarkMap {
        qubit_freqs: qubit_freqs.to_vec(),
        drive_freqs: grid.clone(),
        response,
        engine,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Dip,
    Peak,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AitFeature {
    pub center: f64,
    pub fwhm: f64,
    /// Prominence over `max(|background|, |extremum|)`.
    pub depth: f64,
    pub polarity: Polarity,
    /// Height above (or below) the local background, trace units.
    pub prominence: f64,
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

/// Local background and the fine-window mask.
///
/// On a segmented grid the coarse samples are taken as the background and
/// interpolated linearly across each fine run; a median over many coarse
/// points would sit well below a qubit line narrower than the window. A
/// uniform grid is subsampled to about 40 points and smoothed by a running
/// median of 21 of them before interpolation.
fn background(freqs: &[f64], values: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let n = freqs.len();
    let gaps: Vec<f64> = freqs.windows(2).map(|w| w[1] - w[0]).collect();
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let segmented = max_gap > 2.0 * min_gap;
    let fine: Vec<bool> = (0..n)
        .map(|i| {
            let left = if i > 0 { gaps[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < n { gaps[i] } else { f64::INFINITY };
            segmented && left.min(right) <= 0.5 * max_gap
        })
        .collect();
    let coarse: Vec<usize> = if segmented {
        (0..n).filter(|&i| !fine[i]).collect()
    } else {
        let m = (n / 40).max(1);
        let mut c: Vec<usize> = (0..n).step_by(m).collect();
        if c.last() != Some(&(n - 1)) {
            c.push(n - 1);
        }
        c
    };
    let cb: Vec<f64> = (0..coarse.len())
        .map(|k| {
            if segmented {
                return values[coarse[k]];
            }
            let lo = k.saturating_sub(10);
            let hi = (k + 11).min(coarse.len());
            let mut w: Vec<f64> = coarse[lo..hi].iter().map(|&j| values[j]).collect();
            median(&mut w)
        })
        .collect();
    let bg = (0..n)
        .map(|i| {
            let k = coarse.partition_point(|&j| j <= i);
            match (k.checked_sub(1), coarse.get(k)) {
                (Some(a), _) if coarse[a] == i => cb[a],
                (Some(a), Some(&jb)) => {
                    let ja = coarse[a];
                    let t = (freqs[i] - freqs[ja]) / (freqs[jb] - freqs[ja]);
                    cb[a] + t * (cb[k] - cb[a])
                }
                (Some(a), None) => cb[a],
                (None, _) => cb[0],
            }
        })
        .collect();
    (bg, fine)
}

/// Linear interpolation of the crossing of `level` between samples `a` and `b`.
fn crossing(fa: f64, ra: f64, fb: f64, rb: f64, level: f64) -> f64 {
    if ra == rb {
        return 0.5 * (fa + fb);
    }
    fa + (level - ra) / (rb - ra) * (fb - fa)
}

/// Dips and peaks that stand out from the local background by at least
/// `min_prominence` (trace units), sorted by centre. On segmented grids only
/// points of the fine windows are candidate extrema.
pub fn find_ait_features(trace: &SpectrumTrace, min_prominence: f64) -> Result<Vec<AitFeature>> {
    let f = trace.frequencies();
    let v = trace.values();
    let n = f.len();
    if n < 5 {
        return Err(Error::param("trace", format!("need at least 5 points, got {n}")));
    }
    let (bg, fine) = background(f, v);
    let segmented = fine.iter().any(|&x| x);
    let r: Vec<f64> = v.iter().zip(&bg).map(|(v, b)| v - b).collect();
    let mut found: Vec<(AitFeature, f64, f64)> = Vec::new();
    for i in 1..n - 1 {
        if segmented && !fine[i] {
            continue;
        }
        let polarity = if r[i] < r[i - 1] && r[i] < r[i + 1] && r[i] < 0.0 {
            Polarity::Dip
        } else if r[i] > r[i - 1] && r[i] > r[i + 1] && r[i] > 0.0 {
            Polarity::Peak
        } else {
            continue;
        };
        let p = r[i].abs();
        if p < min_prominence {
            continue;
        }
        let sign = r[i].signum();
        let half = 0.5 * p;
        let walk = |dir: isize| -> Option<f64> {
            let mut j = i as isize;
            loop {
                let k = j + dir;
                if k < 0 || k >= n as isize {
                    return None;
                }
                let (ju, ku) = (j as usize, k as usize);
                if segmented && !fine[ku] {
                    return None;
                }
                if sign * r[ku] < half {
                    return Some(crossing(f[ju], sign * r[ju], f[ku], sign * r[ku], half));
                }
                j = k;
            }
        };
        let (lo, hi) = match (walk(-1), walk(1)) {
            (Some(a), Some(b)) => (a, b),
            (Some(a), None) => (a, 2.0 * f[i] - a),
            (None, Some(b)) => (2.0 * f[i] - b, b),
            (None, None) => continue,
        };
        // parabolic vertex through the three samples around the extremum
        let (x0, x1, x2) = (f[i - 1], f[i], f[i + 1]);
        let (y0, y1, y2) = (r[i - 1], r[i], r[i + 1]);
        let d0 = (y1 - y0) / (x1 - x0);
        let d1 = (y2 - y1) / (x2 - x1);
        let curv = (d1 - d0) / (x2 - x0);
        let center = if curv != 0.0 {
            (0.5 * (x0 + x1) - d0 / (2.0 * curv) + 0.5 * (x1 + x2) - d1 / (2.0 * curv)) / 2.0
        } else {
            x1
        };
        let center = center.clamp(x0, x2);
        let depth = (p / bg[i].abs().max(v[i].abs())).min(1.0);
        found.push((
            AitFeature {
                center,
                fwhm: hi - lo,
                depth,
                polarity,
                prominence: p,
            },
            lo,
            hi,
        ));
    }
    // strongest first; drop weaker same-polarity extrema inside a kept feature
    found.sort_by(|a, b| b.0.prominence.total_cmp(&a.0.prominence).then(a.0.center.total_cmp(&b.0.center)));
    let mut kept: Vec<(AitFeature, f64, f64)> = Vec::new();
    for cand in found {
        let overlaps = kept
            .iter()
            .any(|k| k.0.polarity == cand.0.polarity && cand.1 < k.2 && cand.2 > k.1);
        if !overlaps {
            kept.push(cand);
        }
    }
    let mut out: Vec<AitFeature> = kept.into_iter().map(|k| k.0).collect();
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(out)
}
