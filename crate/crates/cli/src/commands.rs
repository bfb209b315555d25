use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ait_core::dynamics::{spectrum_me, SpectrumGrid};
use ait_core::fitting::{fit_spectrum, residual_diagnostics, FitConfig, FitParam, MultiStart};
use ait_core::meanfield::{default_dt, default_t_max, spectrum_meanfield, MeanFieldOptions, SpectrumWindow};
use ait_core::model::{figures_of_merit, fsr, piezo_fundamental, DriveParams, SystemParams};
use ait_core::spectroscopy::{find_ait_features, stark_sweep, two_tone_sweep, Engine, FrequencyGrid, Polarity};
use ait_core::spectrum::{params_hash, FrequencyAxis, SpectrumTrace, TraceMeta};
use anyhow::{anyhow, bail, Context, Result};

use crate::config::RunConfig;
use crate::output::{commit, csv, key_values, num, read_csv, timestamp, Artifact, Meta};

/// Prominence threshold for feature extraction on normalized traces.
pub const FEATURE_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Design,
    Simulate,
    Sweep,
    Stark,
    Fit,
    Compare,
    EmitConfig,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Design,
        Command::Simulate,
        Command::Sweep,
        Command::Stark,
        Command::Fit,
        Command::Compare,
        Command::EmitConfig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Design => "design",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Stark => "stark",
            Command::Fit => "fit",
            Command::Compare => "compare",
            Command::EmitConfig => "emit-config",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// Files written and the text printed for the user.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub stdout: String,
}

fn grid_hash(points: &[f64]) -> u64 {
    let text: String = points.iter().map(|x| format!("{:016x}", x.to_bits())).collect();
    params_hash(&text)
}

/// CSV header fields. `created_unix` comes last and is the only field that
/// changes between identical runs.
fn header(cmd: Command, config: &RunConfig, model: &str, points: &[f64], params: &SystemParams) -> Meta {
    let mut m = Meta::default();
    m.push("command", cmd.name());
    m.push("engine", config.run.engine.tag());
    m.push("model", model);
    m.push("grid_hash", format!("{:016x}", grid_hash(points)));
    m.push("params_hash", format!("{:016x}", params_hash(&format!("{params:?}"))));
    m.push("ait_sim_version", env!("CARGO_PKG_VERSION"));
    m.push("ait_core_version", ait_core::VERSION);
    m.push("created_unix", timestamp());
    m
}

/// Sidecar: the header, extra run facts and the full resolved config.
fn sidecar(header: &Meta, output: &str, extra: &[(String, String)], config: &RunConfig) -> Vec<u8> {
    let mut m = header.clone();
    m.push("output", output);
    m.pairs.extend(extra.iter().cloned());
    for (k, v) in config.flat() {
        m.push(format!("config.{k}"), v);
    }
    key_values(&m)
}

fn trace_notes(t: &SpectrumTrace) -> Vec<(String, String)> {
    t.meta.notes.iter().map(|(k, v)| (format!("note.{k}"), v.clone())).collect()
}

fn with_sidecar(name: &str, body: Vec<u8>, header: &Meta, extra: &[(String, String)], config: &RunConfig) -> [Artifact; 2] {
    [
        Artifact {
            name: name.to_string(),
            body,
        },
        Artifact {
            name: format!("{name}.meta"),
            body: sidecar(header, name, extra, config),
        },
    ]
}

pub fn run_command(cmd: Command, config: &RunConfig) -> Result<Report> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.threads)
        .build()
        .context("building thread pool")?;
    let (artifacts, stdout) = pool.install(|| match cmd {
        Command::Design => design(config),
        Command::Simulate => simulate(config),
        Command::Sweep => sweep(config),
        Command::Stark => stark(config),
        Command::Fit => fit(config),
        Command::Compare => compare(config),
        Command::EmitConfig => Ok((Vec::new(), config.emit())),
    })?;
    let files = commit(&config.output.dir, &artifacts)?;
    Ok(Report { files, stdout })
}

type Staged = (Vec<Artifact>, String);

/// Four significant digits with an SI prefix for frequencies.
fn hz4(x: f64) -> String {
    let (v, unit) = match x.abs() {
        a if a >= 1e9 => (x / 1e9, "GHz"),
        a if a >= 1e6 => (x / 1e6, "MHz"),
        a if a >= 1e3 => (x / 1e3, "kHz"),
        _ => (x, "Hz"),
    };
    format!("{} {unit}", sig4(v))
}

fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..4).contains(&mag) {
        format!("{:.*}", (3 - mag).max(0) as usize, v)
    } else {
        format!("{v:.3e}")
    }
}

fn design(config: &RunConfig) -> Result<Staged> {
    let params = config.params()?;
    let mut rows: Vec<(String, f64, String)> = Vec::new();
    let d = &config.design;
    if let (Some(v), Some(t)) = (d.v_p, d.t_p) {
        let f0 = piezo_fundamental(v, t)?;
        rows.push(("piezo_fundamental".into(), f0, hz4(f0)));
    }
    if let (Some(v), Some(t)) = (d.v_s, d.t_s) {
        let f = fsr(v, t)?;
        rows.push(("fsr".into(), f, hz4(f)));
    }
    if rows.is_empty() {
        bail!("design needs design.v_s and design.t_s (or design.v_p and design.t_p)");
    }
    let fom = figures_of_merit(&params)?;
    for (k, (q, c)) in fom.quality_factor.iter().zip(&fom.cooperativity).enumerate() {
        rows.push((format!("quality_factor[{k}]"), *q, sig4(*q)));
        rows.push((format!("cooperativity[{k}]"), *c, sig4(*c)));
    }

    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut stdout = String::new();
    let mut body = Meta::default();
    for (name, value, shown) in &rows {
        let _ = writeln!(stdout, "{name:<width$}  {shown}");
        body.push(name, num(*value));
    }
    let mut head = header(Command::Design, config, "design", &[], &params);
    head.pairs.retain(|(k, _)| k != "grid_hash" && k != "engine");
    let artifacts = with_sidecar("design.txt", key_values(&body), &head, &[], config).to_vec();
    Ok((artifacts, stdout))
}

fn window(config: &RunConfig) -> SpectrumWindow {
    SpectrumWindow {
        t_max: config.spectrum.t_max,
        dt: config.spectrum.dt,
        force: false,
    }
}

/// Qubit spectrum under the configured drive with either engine.
pub fn qubit_spectrum(
    params: &SystemParams,
    drive: &DriveParams,
    points: &[f64],
    window: &SpectrumWindow,
    engine: Engine,
) -> Result<SpectrumTrace> {
    let grid = SpectrumGrid::Absolute(points.to_vec());
    Ok(match engine {
        Engine::MeanField => spectrum_meanfield(params, drive, &grid, window, &MeanFieldOptions::default())?,
        Engine::MasterEquation => {
            let t_max = window.t_max.unwrap_or_else(|| default_t_max(params));
            let dt = window.dt.unwrap_or_else(|| default_dt(params, drive, &grid));
            spectrum_me(params, drive, &grid, t_max, dt, window.force)?
        }
    })
}

fn trace_csv(cmd: Command, config: &RunConfig, params: &SystemParams, trace: &SpectrumTrace) -> Result<Staged> {
    let head = header(cmd, config, &trace.meta.model, trace.frequencies(), params);
    let rows = trace.frequencies().iter().zip(trace.values()).map(|(&f, &v)| vec![f, v]);
    let body = csv(&head, &["frequency_hz", "response"], rows)?;
    let name = format!("{}.csv", cmd.name());
    let stdout = format!("{} points -> {name}\n", trace.len());
    let extra = trace_notes(trace);
    Ok((with_sidecar(&name, body, &head, &extra, config).to_vec(), stdout))
}

fn simulate(config: &RunConfig) -> Result<Staged> {
    let params = config.params()?;
    let drive = config.drive_params()?;
    let grid = config.grid.grid()?;
    let trace = qubit_spectrum(&params, &drive, grid.points(), &window(config), config.run.engine)?;
    trace_csv(Command::Simulate, config, &params, &trace)
}

fn sweep(config: &RunConfig) -> Result<Staged> {
    let params = config.params()?;
    let drive = config.drive_params()?;
    let grid = config.grid.grid()?;
    let trace = two_tone_sweep(&params, &drive, &grid, config.run.engine)?;
    trace_csv(Command::Sweep, config, &params, &trace)
}

fn stark(config: &RunConfig) -> Result<Staged> {
    let params = config.params()?;
    let drive = config.drive_params()?;
    let grid = config.grid.grid()?;
    let qubit = config.qubit_frequencies()?;
    let map = stark_sweep(&params, &drive, &qubit, &grid, config.run.engine)?;
    let head = header(Command::Stark, config, map.engine.tag(), grid.points(), &params);
    let rows = map.cells().map(|(q, f, v)| vec![q, f, v]);
    let body = csv(&head, &["qubit_freq_hz", "drive_freq_hz", "response"], rows)?;
    let extra = vec![
        ("rows".to_string(), qubit.len().to_string()),
        ("columns".to_string(), grid.len().to_string()),
    ];
    let stdout = format!("{} x {} cells -> stark.csv\n", qubit.len(), grid.len());
    Ok((with_sidecar("stark.csv", body, &head, &extra, config).to_vec(), stdout))
}

/// Loads a `frequency_hz,response` CSV as an absolute-axis trace.
pub fn load_trace(path: &std::path::Path) -> Result<SpectrumTrace> {
    let (names, mut cols) = read_csv(path)?;
    if names.len() != 2 || names[0] != "frequency_hz" {
        bail!("{}: expected columns frequency_hz,response, got {}", path.display(), names.join(","));
    }
    let values = cols.pop().unwrap_or_default();
    let freqs = cols.pop().unwrap_or_default();
    let meta = TraceMeta::new("data", 0).with_note("source", path.display());
    Ok(SpectrumTrace::new(freqs, values, FrequencyAxis::Absolute, meta)?)
}

pub fn fit_config(config: &RunConfig) -> FitConfig {
    let f = &config.fit;
    FitConfig {
        free: f.free.clone(),
        mode: f.mode,
        max_iterations: f.max_iterations,
        tolerance: f.tolerance,
        multi_start: (f.starts > 0).then_some(MultiStart {
            starts: f.starts,
            spread: f.spread,
            seed: f.seed,
        }),
        engine: config.run.engine,
        window: window(config),
        ..FitConfig::default()
    }
}

fn fit(config: &RunConfig) -> Result<Staged> {
    let params = config.params()?;
    let drive = config.drive_params()?;
    let path = config.fit.data.as_ref().ok_or_else(|| anyhow!("`fit.data` is required by fit"))?;
    let data = load_trace(path)?;
    let cfg = fit_config(config);
    let result = fit_spectrum(&data, &params, &drive, &cfg)?;
    let res = residual_diagnostics(&data, &result)?;

    let mut kv = Meta::default();
    for (p, (v, s)) in result.params.iter().zip(result.values.iter().zip(&result.uncertainties)) {
        kv.push(p.name(), num(*v));
        kv.push(format!("{}_sigma", p.name()), num(*s));
    }
    let fixed: Vec<&str> = FitParam::ALL
        .iter()
        .filter(|p| !result.params.contains(p))
        .map(|p| p.name())
        .collect();
    for p in FitParam::ALL.iter().filter(|p| !result.params.contains(p)) {
        kv.push(format!("{}_fixed", p.name()), num(result.all.get(*p)));
    }
    kv.push("free", result.params.iter().map(|p| p.name()).collect::<Vec<_>>().join(","));
    kv.push("fixed", fixed.join(","));
    kv.push("engine", result.engine.tag());
    kv.push("converged", result.converged);
    kv.push("degenerate", result.degenerate);
    kv.push("iterations", result.iterations);
    kv.push("start", result.start);
    kv.push("cost", num(result.cost));
    kv.push("initial_cost", num(result.initial_cost));
    kv.push("residual_norm", num(result.residual_norm()));
    kv.push("dof", result.dof());
    kv.push("reduced_cost", num(res.reduced_cost));
    kv.push("residual_rms", num(res.rms));
    kv.push("residual_lag1_autocorrelation", num(res.lag1_autocorrelation));
    kv.push("t_max_s", num(result.t_max));
    kv.push("dt_s", num(result.dt));

    let mut stdout = String::new();
    for (p, (v, s)) in result.params.iter().zip(result.values.iter().zip(&result.uncertainties)) {
        let _ = writeln!(stdout, "{:<16} {v:>16.6e} ± {s:.2e}", p.name());
    }
    let _ = writeln!(
        stdout,
        "converged={} iterations={} residual_norm={:.4e}",
        result.converged,
        result.iterations,
        result.residual_norm()
    );

    let head = header(Command::Fit, config, &result.model.meta.model, data.frequencies(), &params);
    let rows = data
        .frequencies()
        .iter()
        .zip(data.values())
        .zip(result.model.values().iter().zip(&res.residuals))
        .map(|((&f, &d), (&m, &r))| vec![f, d, m, r]);
    let residual_csv = csv(&head, &["frequency_hz", "data", "model", "residual"], rows)?;
    let extra = vec![("data".to_string(), path.display().to_string())];
    let mut artifacts = with_sidecar("fit.txt", key_values(&kv), &head, &extra, config).to_vec();
    artifacts.extend(with_sidecar("fit_residuals.csv", residual_csv, &head, &extra, config));
    Ok((artifacts, stdout))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatch {
    pub polarity: Polarity,
    pub center_me: f64,
    pub center_mf: f64,
    pub fwhm_me: f64,
    pub fwhm_mf: f64,
    pub prominence_mf: f64,
}

impl FeatureMatch {
    pub fn center_difference(&self) -> f64 {
        self.center_mf - self.center_me
    }

    pub fn width_ratio(&self) -> f64 {
        self.fwhm_mf / self.fwhm_me
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub me: SpectrumTrace,
    pub mf: SpectrumTrace,
    /// One entry per mean-field feature; `None` where the master equation
    /// shows no feature of the same polarity.
    pub matches: Vec<Option<FeatureMatch>>,
    pub max_abs_difference: f64,
}

impl Comparison {
    pub fn agrees(&self, center_tol: f64, width_tol: f64) -> bool {
        !self.matches.is_empty()
            && self.matches.iter().all(|m| {
                m.as_ref().is_some_and(|m| {
                    m.center_difference().abs() <= center_tol && (m.width_ratio() - 1.0).abs() <= width_tol
                })
            })
    }
}

/// Two-tone sweeps from both engines and their AIT features, matched by
/// polarity and proximity.
pub fn compare_engines(
    params: &SystemParams,
    drive: &DriveParams,
    grid: &FrequencyGrid,
    threshold: f64,
) -> Result<Comparison> {
    let me = two_tone_sweep(params, drive, grid, Engine::MasterEquation)?;
    let mf = two_tone_sweep(params, drive, grid, Engine::MeanField)?;
    let fe = find_ait_features(&me, threshold)?;
    let matches = find_ait_features(&mf, threshold)?
        .into_iter()
        .map(|f| {
            fe.iter()
                .filter(|g| g.polarity == f.polarity)
                .min_by(|a, b| (a.center - f.center).abs().total_cmp(&(b.center - f.center).abs()))
                .map(|g| FeatureMatch {
                    polarity: f.polarity,
                    center_me: g.center,
                    center_mf: f.center,
                    fwhm_me: g.fwhm,
                    fwhm_mf: f.fwhm,
                    prominence_mf: f.prominence,
                })
        })
        .collect();
    let max_abs_difference = me
        .values()
        .iter()
        .zip(mf.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(Comparison {
        me,
        mf,
        matches,
        max_abs_difference,
    })
}

fn compare(config: &RunConfig) -> Result<Staged> {
    let params = config.params()?;
    let drive = config.drive_params()?;
    let grid = config.grid.grid()?;
    let c = compare_engines(&params, &drive, &grid, FEATURE_THRESHOLD)?;

    let mut kv = Meta::default();
    let mut stdout = String::new();
    for (i, m) in c.matches.iter().enumerate() {
        match m {
            Some(m) => {
                let polarity = if m.polarity == Polarity::Dip { "dip" } else { "peak" };
                kv.push(format!("feature.{i}.polarity"), polarity);
                kv.push(format!("feature.{i}.center_me_hz"), num(m.center_me));
                kv.push(format!("feature.{i}.center_mf_hz"), num(m.center_mf));
                kv.push(format!("feature.{i}.center_difference_hz"), num(m.center_difference()));
                kv.push(format!("feature.{i}.fwhm_me_hz"), num(m.fwhm_me));
                kv.push(format!("feature.{i}.fwhm_mf_hz"), num(m.fwhm_mf));
                kv.push(format!("feature.{i}.width_ratio"), num(m.width_ratio()));
                let _ = writeln!(
                    stdout,
                    "{polarity:<4} center me {:.1} Hz mf {:.1} Hz (diff {:.1} Hz), width ratio {:.4}",
                    m.center_me,
                    m.center_mf,
                    m.center_difference(),
                    m.width_ratio()
                );
            }
            None => {
                kv.push(format!("feature.{i}.polarity"), "unmatched");
                let _ = writeln!(stdout, "feature {i}: no master-equation counterpart");
            }
        }
    }
    kv.push("max_abs_difference", num(c.max_abs_difference));
    let agree = c.agrees(250.0, 0.1);
    kv.push("centers_within_250_hz_and_widths_within_10_percent", agree);
    let _ = writeln!(stdout, "max |me - mf| = {:.3e}, agreement: {agree}", c.max_abs_difference);

    let head = header(Command::Compare, config, "master_equation+mean_field", grid.points(), &params);
    let rows = grid
        .points()
        .iter()
        .zip(c.me.values().iter().zip(c.mf.values()))
        .map(|(&f, (&a, &b))| vec![f, a, b]);
    let body = csv(&head, &["frequency_hz", "master_equation", "mean_field"], rows)?;
    let mut artifacts = with_sidecar("compare.csv", body, &head, &[], config).to_vec();
    artifacts.extend(with_sidecar("compare.txt", key_values(&kv), &head, &[], config));
    Ok((artifacts, stdout))
}
