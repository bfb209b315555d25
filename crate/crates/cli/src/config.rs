//! INI-style run configuration.
//!
//! Every physical quantity carries a unit suffix and is normalized to Hz,
//! seconds, metres or m/s on load. Unit conversion shifts the decimal
//! exponent of the literal instead of multiplying, so `2.897 MHz` becomes
//! exactly the double nearest 2 897 000.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use ait_core::fitting::FitParam;
use ait_core::model::{DeviceMetadata, DriveParams, PhononMode, SystemParams};
use ait_core::spectroscopy::{segmented_grid_about, Engine, FrequencyGrid};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Override,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Override => write!(f, "--set"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub location: Option<Location>,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(loc) => write!(f, "{loc}: `{}`: {}", self.key, self.reason),
            None => write!(f, "`{}`: {}", self.key, self.reason),
        }
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    Frequency,
    Time,
    Length,
    Velocity,
}

impl Dim {
    /// Accepted suffixes and their decimal exponents.
    fn units(self) -> &'static [(&'static str, i32)] {
        match self {
            Dim::Frequency => &[("ghz", 9), ("mhz", 6), ("khz", 3), ("hz", 0)],
            Dim::Time => &[("ms", -3), ("us", -6), ("µs", -6), ("ns", -9), ("s", 0)],
            Dim::Length => &[("mm", -3), ("um", -6), ("µm", -6), ("nm", -9), ("m", 0)],
            Dim::Velocity => &[("km/s", 3), ("m/s", 0)],
        }
    }

    fn base(self) -> &'static str {
        match self {
            Dim::Frequency => "hz",
            Dim::Time => "s",
            Dim::Length => "m",
            Dim::Velocity => "m/s",
        }
    }
}

fn shift_exponent(number: &str, shift: i32) -> Option<f64> {
    let x: f64 = number.parse().ok()?;
    if !x.is_finite() {
        return None;
    }
    let (mant, exp) = match number.find(['e', 'E']) {
        Some(i) => (&number[..i], number[i + 1..].parse::<i32>().ok()?),
        None => (number, 0),
    };
    format!("{mant}e{}", exp + shift).parse().ok()
}

fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let text = text.trim();
    let lower = text.to_lowercase();
    let (number, unit) = match lower.split_once(char::is_whitespace) {
        Some((n, u)) => (n.trim().to_string(), u.trim().to_string()),
        None => {
            // "2.897MHz"
            let unit = dim
                .units()
                .iter()
                .map(|(u, _)| *u)
                .filter(|u| lower.ends_with(u) && lower[..lower.len() - u.len()].parse::<f64>().is_ok())
                .max_by_key(|u| u.len());
            match unit {
                Some(u) => (lower[..lower.len() - u.len()].to_string(), u.to_string()),
                None if lower.parse::<f64>().is_ok() => {
                    return Err(format!("missing unit (expected one of {})", unit_list(dim)))
                }
                None => return Err(format!("cannot read `{text}` as a quantity")),
            }
        }
    };
    let shift = dim
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| format!("unknown unit `{unit}` (expected one of {})", unit_list(dim)))?;
    shift_exponent(&number, shift).ok_or_else(|| format!("cannot read `{number}` as a number"))
}

fn unit_list(dim: Dim) -> String {
    dim.units().iter().map(|(u, _)| *u).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug)]
struct Raw {
    value: String,
    location: Location,
}

/// Sectioned key/value pairs before typing.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), Raw>,
}

/// Drops a `#` or `;` comment that starts the line or follows whitespace.
fn strip_comment(line: &str) -> &str {
    let mut prev_space = true;
    for (i, c) in line.char_indices() {
        if prev_space && (c == '#' || c == ';') {
            return &line[..i];
        }
        prev_space = c.is_whitespace();
    }
    line
}

const SECTIONS: [&str; 9] = ["system", "drive", "grid", "spectrum", "design", "stark", "fit", "run", "output"];

impl RawConfig {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let loc = Some(Location::Line(n));
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError {
                    location: loc.clone(),
                    key: line.to_string(),
                    reason: "unterminated section header".into(),
                })?;
                let name = name.trim().to_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(ConfigError {
                        location: loc,
                        key: name,
                        reason: format!("unknown section (expected one of {})", SECTIONS.join(", ")),
                    });
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                location: loc.clone(),
                key: line.to_string(),
                reason: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_lowercase();
            let Some(section) = &section else {
                return Err(ConfigError {
                    location: loc,
                    key,
                    reason: "key outside any section".into(),
                });
            };
            let slot = (section.clone(), key.clone());
            if let Some(prev) = raw.entries.get(&slot) {
                return Err(ConfigError {
                    location: loc,
                    key: format!("{section}.{key}"),
                    reason: format!("duplicate key (first set at {})", prev.location),
                });
            }
            raw.entries.insert(
                slot,
                Raw {
                    value: value.trim().to_string(),
                    location: Location::Line(n),
                },
            );
        }
        Ok(raw)
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> ConfigResult<()> {
        let bad = |reason: &str| ConfigError {
            location: Some(Location::Override),
            key: assignment.to_string(),
            reason: reason.to_string(),
        };
        let (path, value) = assignment.split_once('=').ok_or_else(|| bad("expected section.key=value"))?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| bad("expected section.key=value"))?;
        let section = section.trim().to_lowercase();
        if !SECTIONS.contains(&section.as_str()) {
            return Err(bad("unknown section"));
        }
        self.entries.insert(
            (section, key.trim().to_lowercase()),
            Raw {
                value: value.trim().to_string(),
                location: Location::Override,
            },
        );
        Ok(())
    }
}

/// Typed reader that consumes entries so leftovers can be reported.
struct Reader {
    entries: BTreeMap<(String, String), Raw>,
    seen: BTreeMap<(String, String), Location>,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let slot = (section.to_string(), key.to_string());
        let raw = self.entries.remove(&slot)?;
        self.seen.insert(slot, raw.location);
        Some(raw.value)
    }

    fn error(&self, section: &str, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError {
            location: self.seen.get(&(section.to_string(), key.to_string())).cloned(),
            key: format!("{section}.{key}"),
            reason: reason.into(),
        }
    }

    fn quantity(&mut self, section: &str, key: &str, dim: Dim) -> ConfigResult<Option<f64>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => parse_quantity(&v, dim).map(Some).map_err(|r| self.error(section, key, r)),
        }
    }

    fn required(&mut self, section: &str, key: &str, dim: Dim) -> ConfigResult<f64> {
        self.quantity(section, key, dim)?
            .ok_or_else(|| self.error(section, key, "required key is missing"))
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str, what: &str) -> ConfigResult<Option<T>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.error(section, key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn check(&self, section: &str, key: &str, ok: bool, reason: &str) -> ConfigResult<()> {
        if ok {
            Ok(())
        } else {
            Err(self.error(section, key, reason))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSection {
    pub omega_r: f64,
    pub kappa: f64,
    pub chi: f64,
    pub omega_eg: f64,
    pub linewidth: f64,
    pub gamma1: f64,
    pub gamma_phi: f64,
    /// Frequency of the first phonon mode.
    pub omega_p: f64,
    pub gamma: f64,
    pub g_qh: f64,
    /// Modes sit at `omega_p + k · mode_spacing`, all with the same γ and g.
    pub n_modes: usize,
    pub mode_spacing: f64,
    pub cavity_dim: usize,
    pub phonon_dim: usize,
    pub metadata: DeviceMetadata,
}

impl SystemSection {
    pub fn params(&self) -> ConfigResult<SystemParams> {
        let phonon_modes = (0..self.n_modes)
            .map(|k| PhononMode {
                omega_p: self.omega_p + k as f64 * self.mode_spacing,
                gamma: self.gamma,
                g_qh: self.g_qh,
            })
            .collect();
        let p = SystemParams {
            omega_r: self.omega_r,
            kappa: self.kappa,
            chi: self.chi,
            omega_eg: self.omega_eg,
            linewidth: self.linewidth,
            gamma1: self.gamma1,
            gamma_phi: self.gamma_phi,
            phonon_modes,
            cavity_dim: self.cavity_dim,
            phonon_dim: self.phonon_dim,
            metadata: self.metadata.clone(),
        };
        p.validate().map_err(|e| ConfigError {
            location: None,
            key: "system".into(),
            reason: e.to_string(),
        })?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveSection {
    pub omega_d: f64,
    pub eps_d: f64,
    pub eps_p: f64,
}

/// Fine window inside a coarse window.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSection {
    pub fine_center: f64,
    pub fine_span: f64,
    pub fine_step: f64,
    pub coarse_center: f64,
    pub coarse_span: f64,
    pub coarse_step: f64,
}

impl GridSection {
    pub fn grid(&self) -> ConfigResult<FrequencyGrid> {
        segmented_grid_about(
            self.fine_center,
            self.fine_span,
            self.fine_step,
            self.coarse_center,
            self.coarse_span,
            self.coarse_step,
        )
        .map_err(|e| ConfigError {
            location: None,
            key: "grid".into(),
            reason: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpectrumSection {
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DesignSection {
    pub v_s: Option<f64>,
    pub t_s: Option<f64>,
    pub v_p: Option<f64>,
    pub t_p: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StarkSection {
    pub qubit_start: Option<f64>,
    pub qubit_stop: Option<f64>,
    pub qubit_step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    pub free: Vec<FitParam>,
    pub mode: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Extra random starts; 0 disables multi-start.
    pub starts: usize,
    pub spread: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub engine: Engine,
    /// 0 uses every available core.
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub system: SystemSection,
    pub drive: DriveSection,
    pub grid: GridSection,
    pub spectrum: SpectrumSection,
    pub design: DesignSection,
    pub stark: StarkSection,
    pub fit: FitSection,
    pub run: RunSection,
    pub output: OutputSection,
}

pub fn parse_engine(s: &str) -> Option<Engine> {
    match s.trim().to_lowercase().as_str() {
        "mf" | "mean_field" => Some(Engine::MeanField),
        "me" | "master_equation" => Some(Engine::MasterEquation),
        _ => None,
    }
}

fn engine_tag(e: Engine) -> &'static str {
    match e {
        Engine::MeanField => "mf",
        Engine::MasterEquation => "me",
    }
}

pub fn parse_config(text: &str) -> ConfigResult<RunConfig> {
    RunConfig::from_raw(RawConfig::parse(text)?)
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> ConfigResult<Self> {
        let mut r = Reader {
            entries: raw.entries,
            seen: BTreeMap::new(),
        };
        use Dim::*;

        let s = "system";
        let linewidth = r.required(s, "linewidth", Frequency)?;
        let omega_p = r.required(s, "omega_p", Frequency)?;
        let system = SystemSection {
            omega_r: r.required(s, "omega_r", Frequency)?,
            kappa: r.required(s, "kappa", Frequency)?,
            chi: r.required(s, "chi", Frequency)?,
            omega_eg: r.required(s, "omega_eg", Frequency)?,
            linewidth,
            gamma1: r.quantity(s, "gamma1", Frequency)?.unwrap_or(2.0 * linewidth),
            gamma_phi: r.quantity(s, "gamma_phi", Frequency)?.unwrap_or(0.0),
            omega_p,
            gamma: r.required(s, "gamma", Frequency)?,
            g_qh: r.required(s, "g_qh", Frequency)?,
            n_modes: r.parsed(s, "n_modes", "a mode count")?.unwrap_or(1),
            mode_spacing: r.quantity(s, "mode_spacing", Frequency)?.unwrap_or(0.0),
            cavity_dim: r.parsed(s, "cavity_dim", "an integer dimension")?.unwrap_or(5),
            phonon_dim: r.parsed(s, "phonon_dim", "an integer dimension")?.unwrap_or(5),
            metadata: DeviceMetadata {
                resonator_qubit_detuning: r.quantity(s, "resonator_qubit_detuning", Frequency)?,
                resonator_qubit_coupling: r.quantity(s, "resonator_qubit_coupling", Frequency)?,
                charging_energy: r.quantity(s, "charging_energy", Frequency)?,
                josephson_energy: r.quantity(s, "josephson_energy", Frequency)?,
            },
        };
        for (key, v) in [
            ("omega_r", system.omega_r),
            ("kappa", system.kappa),
            ("omega_eg", system.omega_eg),
            ("linewidth", system.linewidth),
            ("omega_p", system.omega_p),
            ("gamma", system.gamma),
        ] {
            r.check(s, key, v > 0.0, "must be positive")?;
        }
        for (key, v) in [
            ("gamma1", system.gamma1),
            ("gamma_phi", system.gamma_phi),
            ("g_qh", system.g_qh),
        ] {
            r.check(s, key, v >= 0.0, "must not be negative")?;
        }
        r.check(s, "n_modes", system.n_modes >= 1, "need at least one mode")?;
        r.check(
            s,
            "mode_spacing",
            system.n_modes == 1 || system.mode_spacing > 0.0,
            "must be positive when n_modes > 1",
        )?;
        r.check(s, "cavity_dim", system.cavity_dim >= 2, "must be at least 2")?;
        r.check(s, "phonon_dim", system.phonon_dim >= 2, "must be at least 2")?;

        let s = "drive";
        let drive = DriveSection {
            omega_d: r.quantity(s, "omega_d", Frequency)?.unwrap_or(omega_p),
            eps_d: r.quantity(s, "eps_d", Frequency)?.unwrap_or(0.0),
            eps_p: r.quantity(s, "eps_p", Frequency)?.unwrap_or(0.0),
        };
        r.check(s, "omega_d", drive.omega_d > 0.0, "must be positive")?;
        r.check(s, "eps_d", drive.eps_d >= 0.0, "must not be negative")?;
        r.check(s, "eps_p", drive.eps_p >= 0.0, "must not be negative")?;

        let s = "grid";
        let fine_center = r.quantity(s, "fine_center", Frequency)?.unwrap_or(omega_p);
        let grid = GridSection {
            fine_center,
            fine_span: r.quantity(s, "fine_span", Frequency)?.unwrap_or(200e3),
            fine_step: r.quantity(s, "fine_step", Frequency)?.unwrap_or(250.0),
            coarse_center: r.quantity(s, "coarse_center", Frequency)?.unwrap_or(fine_center),
            coarse_span: r.quantity(s, "coarse_span", Frequency)?.unwrap_or(20e6),
            coarse_step: r.quantity(s, "coarse_step", Frequency)?.unwrap_or(250e3),
        };
        for (key, v) in [
            ("fine_span", grid.fine_span),
            ("fine_step", grid.fine_step),
            ("coarse_span", grid.coarse_span),
            ("coarse_step", grid.coarse_step),
        ] {
            r.check(s, key, v > 0.0, "must be positive")?;
        }

        let s = "spectrum";
        let spectrum = SpectrumSection {
            t_max: r.quantity(s, "t_max", Time)?,
            dt: r.quantity(s, "dt", Time)?,
        };
        r.check(s, "t_max", spectrum.t_max.is_none_or(|t| t > 0.0), "must be positive")?;
        r.check(s, "dt", spectrum.dt.is_none_or(|t| t > 0.0), "must be positive")?;

        let s = "design";
        let design = DesignSection {
            v_s: r.quantity(s, "v_s", Velocity)?,
            t_s: r.quantity(s, "t_s", Length)?,
            v_p: r.quantity(s, "v_p", Velocity)?,
            t_p: r.quantity(s, "t_p", Length)?,
        };
        for (key, v) in [("v_s", design.v_s), ("t_s", design.t_s), ("v_p", design.v_p), ("t_p", design.t_p)] {
            r.check(s, key, v.is_none_or(|x| x > 0.0), "must be positive")?;
        }

        let s = "stark";
        let stark = StarkSection {
            qubit_start: r.quantity(s, "qubit_start", Frequency)?,
            qubit_stop: r.quantity(s, "qubit_stop", Frequency)?,
            qubit_step: r.quantity(s, "qubit_step", Frequency)?,
        };
        r.check(s, "qubit_step", stark.qubit_step.is_none_or(|x| x > 0.0), "must be positive")?;
        if let (Some(a), Some(b)) = (stark.qubit_start, stark.qubit_stop) {
            r.check(s, "qubit_stop", b >= a, "must not be below qubit_start")?;
        }

        let s = "fit";
        let free = match r.take(s, "free") {
            None => ait_core::fitting::FitConfig::default().free,
            Some(list) => list
                .split(',')
                .map(|name| name.trim().parse::<FitParam>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| r.error(s, "free", e.to_string()))?,
        };
        let fit = FitSection {
            data: r.take(s, "data").map(PathBuf::from),
            free,
            mode: r.parsed(s, "mode", "a mode index")?.unwrap_or(0),
            max_iterations: r.parsed(s, "max_iterations", "an iteration count")?.unwrap_or(200),
            tolerance: r.parsed(s, "tolerance", "a number")?.unwrap_or(1e-10),
            starts: r.parsed(s, "starts", "a start count")?.unwrap_or(0),
            spread: r.parsed(s, "spread", "a number")?.unwrap_or(0.3),
            seed: r.parsed(s, "seed", "an integer seed")?.unwrap_or(0),
        };
        r.check(s, "free", !fit.free.is_empty(), "need at least one free parameter")?;
        r.check(s, "mode", fit.mode < system.n_modes, "no such phonon mode")?;
        r.check(s, "tolerance", fit.tolerance > 0.0, "must be positive")?;
        r.check(s, "spread", fit.spread > 0.0, "must be positive")?;

        let s = "run";
        let engine = match r.take(s, "engine") {
            None => Engine::MeanField,
            Some(v) => parse_engine(&v).ok_or_else(|| r.error(s, "engine", format!("expected mf or me, got `{v}`")))?,
        };
        let run = RunSection {
            engine,
            threads: r.parsed(s, "threads", "a thread count")?.unwrap_or(0),
        };

        let output = OutputSection {
            dir: r.take("output", "dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };

        if let Some(((section, key), raw)) = r.entries.iter().next() {
            return Err(ConfigError {
                location: Some(raw.location.clone()),
                key: format!("{section}.{key}"),
                reason: "unknown key".into(),
            });
        }

        let config = RunConfig {
            system,
            drive,
            grid,
            spectrum,
            design,
            stark,
            fit,
            run,
            output,
        };
        config.system.params()?;
        Ok(config)
    }

    pub fn params(&self) -> ConfigResult<SystemParams> {
        self.system.params()
    }

    pub fn drive_params(&self) -> ConfigResult<DriveParams> {
        DriveParams::new(self.drive.omega_d, self.drive.eps_d, self.drive.eps_p).map_err(|e| ConfigError {
            location: None,
            key: "drive".into(),
            reason: e.to_string(),
        })
    }

    /// Stark rows from `qubit_start` to `qubit_stop` inclusive.
    pub fn qubit_frequencies(&self) -> ConfigResult<Vec<f64>> {
        let missing = |key: &str| ConfigError {
            location: None,
            key: format!("stark.{key}"),
            reason: "required by the stark command".into(),
        };
        let start = self.stark.qubit_start.ok_or_else(|| missing("qubit_start"))?;
        let stop = self.stark.qubit_stop.ok_or_else(|| missing("qubit_stop"))?;
        let step = self.stark.qubit_step.ok_or_else(|| missing("qubit_step"))?;
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| start + k as f64 * step).collect())
    }

    /// Canonical text form: every resolved value in base units.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (section, entries) in self.entries() {
            let _ = writeln!(out, "[{section}]");
            for (key, value) in entries {
                let _ = writeln!(out, "{key} = {value}");
            }
            out.push('\n');
        }
        out
    }

    /// `(section.key, value)` pairs in emit order.
    pub fn flat(&self) -> Vec<(String, String)> {
        self.entries()
            .into_iter()
            .flat_map(|(section, entries)| entries.into_iter().map(move |(k, v)| (format!("{section}.{k}"), v)))
            .collect()
    }

    fn entries(&self) -> Vec<(&'static str, Vec<(&'static str, String)>)> {
        let q = |v: f64, dim: Dim| format!("{v} {}", dim.base());
        let hz = |v: f64| q(v, Dim::Frequency);
        let mut out = Vec::new();

        let s = &self.system;
        let mut system = vec![
            ("omega_r", hz(s.omega_r)),
            ("kappa", hz(s.kappa)),
            ("chi", hz(s.chi)),
            ("omega_eg", hz(s.omega_eg)),
            ("linewidth", hz(s.linewidth)),
            ("gamma1", hz(s.gamma1)),
            ("gamma_phi", hz(s.gamma_phi)),
            ("omega_p", hz(s.omega_p)),
            ("gamma", hz(s.gamma)),
            ("g_qh", hz(s.g_qh)),
            ("n_modes", s.n_modes.to_string()),
            ("mode_spacing", hz(s.mode_spacing)),
            ("cavity_dim", s.cavity_dim.to_string()),
            ("phonon_dim", s.phonon_dim.to_string()),
        ];
        let m = &s.metadata;
        for (key, v) in [
            ("resonator_qubit_detuning", m.resonator_qubit_detuning),
            ("resonator_qubit_coupling", m.resonator_qubit_coupling),
            ("charging_energy", m.charging_energy),
            ("josephson_energy", m.josephson_energy),
        ] {
            if let Some(v) = v {
                system.push((key, hz(v)));
            }
        }
        out.push(("system", system));

        let d = &self.drive;
        out.push((
            "drive",
            vec![("omega_d", hz(d.omega_d)), ("eps_d", hz(d.eps_d)), ("eps_p", hz(d.eps_p))],
        ));

        let g = &self.grid;
        out.push((
            "grid",
            vec![
                ("fine_center", hz(g.fine_center)),
                ("fine_span", hz(g.fine_span)),
                ("fine_step", hz(g.fine_step)),
                ("coarse_center", hz(g.coarse_center)),
                ("coarse_span", hz(g.coarse_span)),
                ("coarse_step", hz(g.coarse_step)),
            ],
        ));

        let optional = |pairs: Vec<(&'static str, Option<f64>)>, dim: Dim| -> Vec<(&'static str, String)> {
            pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, q(v, dim)))).collect()
        };
        out.push((
            "spectrum",
            optional(vec![("t_max", self.spectrum.t_max), ("dt", self.spectrum.dt)], Dim::Time),
        ));
        let mut design = optional(vec![("v_s", self.design.v_s)], Dim::Velocity);
        design.extend(optional(vec![("t_s", self.design.t_s)], Dim::Length));
        design.extend(optional(vec![("v_p", self.design.v_p)], Dim::Velocity));
        design.extend(optional(vec![("t_p", self.design.t_p)], Dim::Length));
        out.push(("design", design));
        out.push((
            "stark",
            optional(
                vec![
                    ("qubit_start", self.stark.qubit_start),
                    ("qubit_stop", self.stark.qubit_stop),
                    ("qubit_step", self.stark.qubit_step),
                ],
                Dim::Frequency,
            ),
        ));

        let f = &self.fit;
        let mut fit = Vec::new();
        if let Some(path) = &f.data {
            fit.push(("data", path.display().to_string()));
        }
        fit.extend([
            ("free", f.free.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")),
            ("mode", f.mode.to_string()),
            ("max_iterations", f.max_iterations.to_string()),
            ("tolerance", f.tolerance.to_string()),
            ("starts", f.starts.to_string()),
            ("spread", f.spread.to_string()),
            ("seed", f.seed.to_string()),
        ]);
        out.push(("fit", fit));

        out.push((
            "run",
            vec![
                ("engine", engine_tag(self.run.engine).to_string()),
                ("threads", self.run.threads.to_string()),
            ],
        ));
        out.push(("output", vec![("dir", self.output.dir.display().to_string())]));
        out
    }
}
