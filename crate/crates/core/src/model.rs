//! Physical parameters, detunings, Hamiltonian builders and HBAR design
//! formulas.
//!
//! Every user-facing frequency and rate is an ordinary frequency in Hz (the
//! ω/2π value). The Hamiltonian and Liouvillian builders here are the single
//! place where those values are multiplied by 2π.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::hilbert::{
    embed, ladder, liouvillian, qubit_ops, HilbertLayout, OperatorMatrix, Subsystem,
    SuperOperatorMatrix,
};

#[derive(Clone, Debug, PartialEq)]
pub struct PhononMode {
    /// Mode frequency, Hz.
    pub omega_p: f64,
    /// Intrinsic energy decay rate, Hz.
    pub gamma: f64,
    /// Qubit–phonon Jaynes–Cummings coupling, Hz.
    pub g_qh: f64,
}

/// Table entries that no solver uses; carried so configs round-trip.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeviceMetadata {
    /// Resonator/qubit detuning Δ, Hz.
    pub resonator_qubit_detuning: Option<f64>,
    /// The 81.04 MHz table entry; its label and value disagree, stored as-is.
    pub resonator_qubit_coupling: Option<f64>,
    /// E_c/h, Hz.
    pub charging_energy: Option<f64>,
    /// E_J/h, Hz.
    pub josephson_energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    /// Readout resonator frequency, Hz.
    pub omega_r: f64,
    /// Readout resonator linewidth, Hz.
    pub kappa: f64,
    /// Dispersive shift, Hz.
    pub chi: f64,
    /// Qubit transition frequency, Hz.
    pub omega_eg: f64,
    /// Intrinsic qubit linewidth Γ, Hz.
    pub linewidth: f64,
    /// Qubit relaxation rate Γ₁, Hz.
    pub gamma1: f64,
    /// Intrinsic qubit dephasing rate Γ_φ, Hz.
    pub gamma_phi: f64,
    pub phonon_modes: Vec<PhononMode>,
    pub cavity_dim: usize,
    pub phonon_dim: usize,
    pub metadata: DeviceMetadata,
}

impl SystemParams {
    /// Builds a parameter set with Γ₁ = 2Γ, Γ_φ = 0 and truncations (5, 5).
    pub fn new(
        omega_r: f64,
        kappa: f64,
        chi: f64,
        omega_eg: f64,
        linewidth: f64,
        phonon_modes: Vec<PhononMode>,
    ) -> Result<Self> {
        let p = SystemParams {
            omega_r,
            kappa,
            chi,
            omega_eg,
            linewidth,
            gamma1: 2.0 * linewidth,
            gamma_phi: 0.0,
            phonon_modes,
            cavity_dim: 5,
            phonon_dim: 5,
            metadata: DeviceMetadata::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// The measured device: readout resonator, transmon and one HBAR mode.
    pub fn table_s1() -> Self {
        let mut p = SystemParams::new(
            4.910e9,
            2.897e6,
            1.2e6,
            6.067e9,
            425e3,
            vec![PhononMode {
                omega_p: 6.064e9,
                gamma: 6.98e3,
                g_qh: 197e3,
            }],
        )
        .expect("table values are valid");
        p.metadata = DeviceMetadata {
            resonator_qubit_detuning: Some(1.07e9),
            resonator_qubit_coupling: Some(81.04e6),
            charging_energy: Some(260e6),
            josephson_energy: Some(40.2e9),
        };
        p
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_r", self.omega_r),
            ("omega_eg", self.omega_eg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("linewidth", self.linewidth),
            ("gamma1", self.gamma1),
            ("gamma_phi", self.gamma_phi),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        if !self.chi.is_finite() {
            return Err(Error::param("chi", "must be finite"));
        }
        if self.phonon_modes.is_empty() {
            return Err(Error::param("phonon_modes", "at least one mode is required"));
        }
        for (k, m) in self.phonon_modes.iter().enumerate() {
            if !(m.omega_p.is_finite() && m.omega_p > 0.0) {
                return Err(Error::param(&format!("omega_p[{k}]"), "must be > 0"));
            }
            if !(m.gamma.is_finite() && m.gamma >= 0.0) {
                return Err(Error::param(&format!("gamma[{k}]"), "must be >= 0"));
            }
            if !m.g_qh.is_finite() {
                return Err(Error::param(&format!("g_qh[{k}]"), "must be finite"));
            }
        }
        if self.cavity_dim < 2 || self.phonon_dim < 2 {
            return Err(Error::param("truncation", "cavity_dim and phonon_dim must be >= 2"));
        }
        Ok(())
    }

    /// Total intrinsic coherence decay rate Γ_φ + Γ₁/2, Hz.
    pub fn intrinsic_gamma_tilde(&self) -> f64 {
        self.gamma_phi + 0.5 * self.gamma1
    }

    /// Cavity ⊗ qubit ⊗ phonons at the configured truncations.
    pub fn layout(&self) -> Result<HilbertLayout> {
        HilbertLayout::tripartite(self.cavity_dim, self.phonon_modes.len(), self.phonon_dim)
    }

    /// Qubit ⊗ phonons at the configured phonon truncation.
    pub fn effective_layout(&self) -> Result<HilbertLayout> {
        HilbertLayout::qubit_phonons(self.phonon_modes.len(), self.phonon_dim)
    }

    /// The same parameters restricted to one phonon mode.
    pub fn single_mode(&self, k: usize) -> Result<Self> {
        let mode = self
            .phonon_modes
            .get(k)
            .cloned()
            .ok_or_else(|| Error::param("phonon_modes", format!("no mode {k}")))?;
        let mut p = self.clone();
        p.phonon_modes = vec![mode];
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveParams {
    /// Drive (and rotating-frame) frequency, Hz.
    pub omega_d: f64,
    /// Qubit drive amplitude, Hz.
    pub eps_d: f64,
    /// Resonator probe amplitude, Hz.
    pub eps_p: f64,
}

impl DriveParams {
    pub fn new(omega_d: f64, eps_d: f64, eps_p: f64) -> Result<Self> {
        let d = DriveParams { omega_d, eps_d, eps_p };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_d.is_finite() {
            return Err(Error::param("omega_d", "must be finite"));
        }
        for (name, v) in [("eps_d", self.eps_d), ("eps_p", self.eps_p)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn at_frequency(&self, omega_d: f64) -> Self {
        DriveParams {
            omega_d,
            ..self.clone()
        }
    }
}

/// Drive-frame detunings, Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct Detunings {
    pub delta_b: Vec<f64>,
    pub delta_q: f64,
    pub delta_r: f64,
}

pub fn detunings(params: &SystemParams, drive: &DriveParams) -> Detunings {
    Detunings {
        delta_b: params
            .phonon_modes
            .iter()
            .map(|m| drive.omega_d - m.omega_p)
            .collect(),
        delta_q: drive.omega_d - params.omega_eg,
        delta_r: drive.omega_d - params.omega_r,
    }
}

struct Ops {
    a: Option<OperatorMatrix>,
    sz: OperatorMatrix,
    sm: OperatorMatrix,
    sp: OperatorMatrix,
    b: Vec<OperatorMatrix>,
}

fn embedded_ops(layout: &HilbertLayout, with_cavity: bool) -> Result<Ops> {
    let q = qubit_ops();
    let qs = layout
        .slot_of(Subsystem::Qubit)
        .ok_or_else(|| Error::Model("layout has no qubit slot".into()))?;
    let a = if with_cavity {
        let cs = layout
            .slot_of(Subsystem::Cavity)
            .ok_or_else(|| Error::Model("layout has no cavity slot".into()))?;
        Some(embed(&ladder(layout.dims()[cs])?, layout, cs)?)
    } else {
        None
    };
    let mut b = Vec::new();
    for k in 0..layout.n_phonon_modes() {
        let s = layout.slot_of(Subsystem::Phonon(k)).expect("phonon slots are contiguous");
        b.push(embed(&ladder(layout.dims()[s])?, layout, s)?);
    }
    Ok(Ops {
        a,
        sz: embed(&q.sigma_z, layout, qs)?,
        sm: embed(&q.sigma_minus, layout, qs)?,
        sp: embed(&q.sigma_plus, layout, qs)?,
        b,
    })
}

fn check_modes(params: &SystemParams, layout: &HilbertLayout) -> Result<()> {
    if layout.n_phonon_modes() != params.phonon_modes.len() {
        return Err(Error::Model(format!(
            "layout has {} phonon slots but parameters list {} modes",
            layout.n_phonon_modes(),
            params.phonon_modes.len()
        )));
    }
    Ok(())
}

/// Qubit–phonon part shared by both Hamiltonians, in rad/s.
fn qubit_phonon_terms(
    ops: &Ops,
    params: &SystemParams,
    drive: &DriveParams,
    delta_q: f64,
    delta_b: &[f64],
) -> OperatorMatrix {
    let mut h = ops.sz.scale(-0.5 * TAU * delta_q);
    for ((b, mode), db) in ops.b.iter().zip(&params.phonon_modes).zip(delta_b) {
        let n = &b.adjoint() * b;
        h = &h + &n.scale(-TAU * db);
        let jc = &(b * &ops.sp) + &(&b.adjoint() * &ops.sm);
        h = &h + &jc.scale(TAU * mode.g_qh);
    }
    h = &h + &(&ops.sp + &ops.sm).scale(TAU * drive.eps_d);
    h
}

/// Ĥ/ħ of the resonator–qubit–phonon system in the drive frame, rad/s.
pub fn full_hamiltonian(
    params: &SystemParams,
    drive: &DriveParams,
    layout: &HilbertLayout,
) -> Result<OperatorMatrix> {
    check_modes(params, layout)?;
    let ops = embedded_ops(layout, true)?;
    let det = detunings(params, drive);
    let a = ops.a.as_ref().expect("cavity requested");
    let n_a = &a.adjoint() * a;
    let mut h = qubit_phonon_terms(&ops, params, drive, det.delta_q, &det.delta_b);
    h = &h + &n_a.scale(-TAU * det.delta_r);
    h = &h + &(&n_a * &ops.sz).scale(TAU * params.chi);
    h = &h + &(&a.adjoint() + a).scale(TAU * drive.eps_p);
    Ok(h)
}

/// Ĥ_eff/ħ on qubit ⊗ phonons with the qubit detuning reduced by
/// `qubit_shift` (Hz), rad/s.
pub fn effective_hamiltonian(
    params: &SystemParams,
    drive: &DriveParams,
    layout: &HilbertLayout,
    qubit_shift: f64,
) -> Result<OperatorMatrix> {
    check_modes(params, layout)?;
    let ops = embedded_ops(layout, false)?;
    let det = detunings(params, drive);
    Ok(qubit_phonon_terms(
        &ops,
        params,
        drive,
        det.delta_q - qubit_shift,
        &det.delta_b,
    ))
}

/// Liouvillian of the full master equation with collapse set
/// {γ b̂, κ â, Γ₁ σ̂₋, (Γ_φ/2) σ̂_z}, rad/s.
pub fn full_liouvillian(
    params: &SystemParams,
    drive: &DriveParams,
    layout: &HilbertLayout,
) -> Result<SuperOperatorMatrix> {
    params.validate()?;
    drive.validate()?;
    let h = full_hamiltonian(params, drive, layout)?;
    let ops = embedded_ops(layout, true)?;
    let a = ops.a.as_ref().expect("cavity requested");
    let mut collapses: Vec<(f64, &OperatorMatrix)> = vec![
        (TAU * params.kappa, a),
        (TAU * params.gamma1, &ops.sm),
        (TAU * params.gamma_phi / 2.0, &ops.sz),
    ];
    for (b, m) in ops.b.iter().zip(&params.phonon_modes) {
        collapses.push((TAU * m.gamma, b));
    }
    liouvillian(&h, &collapses)
}

/// Liouvillian of the cavity-eliminated qubit–phonon master equation.
/// `extra_dephasing` (Hz) is added to Γ_φ.
pub fn effective_liouvillian(
    params: &SystemParams,
    drive: &DriveParams,
    layout: &HilbertLayout,
    qubit_shift: f64,
    extra_dephasing: f64,
) -> Result<SuperOperatorMatrix> {
    params.validate()?;
    drive.validate()?;
    let h = effective_hamiltonian(params, drive, layout, qubit_shift)?;
    let ops = embedded_ops(layout, false)?;
    let dephasing = params.gamma_phi + extra_dephasing;
    if dephasing < 0.0 {
        return Err(Error::param("gamma_phi", "total dephasing is negative"));
    }
    let mut collapses: Vec<(f64, &OperatorMatrix)> = vec![
        (TAU * params.gamma1, &ops.sm),
        (TAU * dephasing / 2.0, &ops.sz),
    ];
    for (b, m) in ops.b.iter().zip(&params.phonon_modes) {
        collapses.push((TAU * m.gamma, b));
    }
    liouvillian(&h, &collapses)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be > 0, got {v}")))
    }
}

/// Free spectral range `v_s / 2 t_s` of the acoustic cavity, Hz.
pub fn fsr(v_s: f64, t_s: f64) -> Result<f64> {
    positive("v_s", v_s)?;
    positive("t_s", t_s)?;
    Ok(v_s / (2.0 * t_s))
}

/// Fundamental thickness resonance `v_p / 2 t_p` of the piezo layer, Hz.
pub fn piezo_fundamental(v_p: f64, t_p: f64) -> Result<f64> {
    positive("v_p", v_p)?;
    positive("t_p", t_p)?;
    Ok(v_p / (2.0 * t_p))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiguresOfMerit {
    /// `omega_p / gamma` per mode.
    pub quality_factor: Vec<f64>,
    /// `4 g² / (Γ γ)` per mode.
    pub cooperativity: Vec<f64>,
}

pub fn figures_of_merit(params: &SystemParams) -> Result<FiguresOfMerit> {
    positive("linewidth", params.linewidth)?;
    let mut q = Vec::new();
    let mut c = Vec::new();
    for (k, m) in params.phonon_modes.iter().enumerate() {
        positive(&format!("gamma[{k}]"), m.gamma)?;
        q.push(m.omega_p / m.gamma);
        c.push(4.0 * m.g_qh * m.g_qh / (params.linewidth * m.gamma));
    }
    Ok(FiguresOfMerit {
        quality_factor: q,
        cooperativity: c,
    })
}
