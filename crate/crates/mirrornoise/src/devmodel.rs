//! MOS small-signal and noise model spanning weak to strong inversion.
//!
//! The model is a charge-based interpolation: the normalized forward charge
//! `q` relates to the inversion coefficient by `ic = q² + q`, and to the
//! gate overdrive by `(vgs − vth)/(n·Ut) = 2q + ln q`. Both the I-V curve
//! and the transconductance expression come from the same `q`, so closed
//! forms and finite differences of the I-V model agree to rounding error.
//!
//! Weak inversion limit: `id ∝ exp((vgs − vth)/(n·Ut))`, `gm = id/(n·Ut)`.
//! Strong inversion limit: `id = µCox·(W/L)·(vgs − vth)²/(2n)`,
//! `gm = √(2·µCox·(W/L)·id/n)`.
//!
//! Body effect follows `vth = vth0 + λ(√(2Φf + vsb) − √(2Φf))` with
//! `gmb = gm·λ/(2√(2Φf + vsb))`. All equations are written for an NMOS
//! convention; PMOS devices map onto it by magnitude (see [`crate::netlist`]).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;

/// Newton iteration cap for the I-V inversion.
const MAX_NEWTON_ITER: usize = 80;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    /// An input violated a precondition (non-positive value, bad range).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Evaluation outside the model's domain (e.g. vsb below −2Φf).
    #[error("domain error: {0}")]
    Domain(String),
    /// The root finder exceeded its iteration cap.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    /// A voltage argument fell outside the supported range.
    #[error("out of range: {0}")]
    OutOfRange(String),
}

/// Process-level constants shared by every device of one model.
///
/// All values are SI. The defaults are desk-scale short-channel numbers;
/// none of them are calibrated to a foundry process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessParams {
    /// Transconductance factor µCox (A/V²).
    pub mu_cox: f64,
    /// Subthreshold slope factor n (dimensionless).
    pub n_slope: f64,
    /// Zero-bias threshold voltage (V).
    pub vth0: f64,
    /// Body-effect coefficient λ (V^½).
    pub lambda_body: f64,
    /// Surface potential 2Φf (V).
    pub phi_f2: f64,
    /// Thermal-noise excess factor γ (dimensionless).
    pub gamma_noise: f64,
    /// Flicker-noise coefficient Kf (J).
    pub kf: f64,
    /// Gate capacitance per area Cox (F/m²).
    pub cox_area: f64,
    /// Bulk-gate junction capacitance per gate area, used when a device
    /// ties its bulk to its gate (F/m²).
    pub cj_bulk: f64,
    /// Temperature (K).
    pub temperature: f64,
}

impl Default for ProcessParams {
    fn default() -> Self {
        Self {
            mu_cox: 3.0e-4,
            n_slope: 1.3,
            vth0: 0.3,
            lambda_body: 0.4,
            phi_f2: 0.7,
            gamma_noise: 1.0,
            kf: 1.0e-25,
            cox_area: 1.0e-2,
            cj_bulk: 2.0e-3,
            temperature: 300.0,
        }
    }
}

impl ProcessParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("mu_cox", self.mu_cox),
            ("n_slope", self.n_slope),
            ("vth0", self.vth0),
            ("lambda_body", self.lambda_body),
            ("phi_f2", self.phi_f2),
            ("gamma_noise", self.gamma_noise),
            ("kf", self.kf),
            ("cox_area", self.cox_area),
            ("cj_bulk", self.cj_bulk),
            ("temperature", self.temperature),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value <= 0.0 {
                return Err(ModelError::InvalidInput(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        if !(200.0..=400.0).contains(&self.temperature) {
            return Err(ModelError::InvalidInput(format!(
                "temperature {} K outside [200, 400] K",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Thermal voltage kT/q (V).
    pub fn thermal_voltage(&self) -> f64 {
        BOLTZMANN * self.temperature / ELEMENTARY_CHARGE
    }

    /// 4kT at the model temperature (J).
    pub fn four_kt(&self) -> f64 {
        4.0 * BOLTZMANN * self.temperature
    }

    /// Parse the flat `key=value` parameter file format.
    ///
    /// Keys are exactly the field names; unknown keys are an error. Lines
    /// that are blank or start with `#` are skipped.
    pub fn from_key_values(text: &str) -> Result<Self, ModelError> {
        let mut p = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ModelError::InvalidInput(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| {
                ModelError::InvalidInput(format!("line {}: bad number for {key}", lineno + 1))
            })?;
            match key {
                "mu_cox" => p.mu_cox = value,
                "n_slope" => p.n_slope = value,
                "vth0" => p.vth0 = value,
                "lambda_body" => p.lambda_body = value,
                "phi_f2" => p.phi_f2 = value,
                "gamma_noise" => p.gamma_noise = value,
                "kf" => p.kf = value,
                "cox_area" => p.cox_area = value,
                "cj_bulk" => p.cj_bulk = value,
                "temperature" => p.temperature = value,
                other => {
                    return Err(ModelError::InvalidInput(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Device geometry. `series_stack` counts series-connected unit devices,
/// so the effective channel length is `length * series_stack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosGeometry {
    /// Channel width (m).
    pub width: f64,
    /// Unit channel length (m).
    pub length: f64,
    /// Number of series-stacked unit devices (≥ 1).
    #[serde(default = "default_stack")]
    pub series_stack: u32,
}

fn default_stack() -> u32 {
    1
}

impl MosGeometry {
    pub fn new(width: f64, length: f64) -> Self {
        Self {
            width,
            length,
            series_stack: 1,
        }
    }

    pub fn with_stack(width: f64, length: f64, series_stack: u32) -> Self {
        Self {
            width,
            length,
            series_stack,
        }
    }

    /// Effective channel length `length * series_stack` (m).
    pub fn effective_length(&self) -> f64 {
        self.length * self.series_stack as f64
    }

    /// Gate area using the effective length (m²).
    pub fn gate_area(&self) -> f64 {
        self.width * self.effective_length()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.width.is_finite() || self.width <= 0.0 {
            return Err(ModelError::InvalidInput(format!(
                "width must be > 0, got {}",
                self.width
            )));
        }
        if !self.length.is_finite() || self.length <= 0.0 {
            return Err(ModelError::InvalidInput(format!(
                "length must be > 0, got {}",
                self.length
            )));
        }
        if self.series_stack < 1 {
            return Err(ModelError::InvalidInput("series_stack must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Operating-point declaration for one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosBias {
    /// Drain current (A).
    pub id: f64,
    /// Source-bulk voltage (V).
    #[serde(default)]
    pub vsb: f64,
    /// Drain-source voltage (V); informational, used for saturation checks.
    #[serde(default)]
    pub vds: f64,
}

impl MosBias {
    pub fn new(id: f64) -> Self {
        Self {
            id,
            vsb: 0.0,
            vds: 0.0,
        }
    }

    pub fn with_vsb(id: f64, vsb: f64) -> Self {
        Self { id, vsb, vds: 0.0 }
    }

    pub fn validate(&self, p: &ProcessParams) -> Result<(), ModelError> {
        if !self.id.is_finite() || self.id <= 0.0 {
            return Err(ModelError::InvalidInput(format!(
                "id must be > 0, got {}",
                self.id
            )));
        }
        if self.vsb < -p.phi_f2 {
            return Err(ModelError::Domain(format!(
                "vsb {} below −2Φf = {}",
                self.vsb, -p.phi_f2
            )));
        }
        Ok(())
    }
}

/// Small-signal quantities evaluated at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignal {
    /// Gate transconductance (S).
    pub gm: f64,
    /// Bulk transconductance (S).
    pub gmb: f64,
    /// Output conductance (S); zero unless overridden per device.
    pub gds: f64,
    /// Gate-source voltage (V).
    pub vgs: f64,
    /// Effective threshold voltage at the operating vsb (V).
    pub vth: f64,
    /// Saturation voltage (V), clipped below at 3·Ut.
    pub vdsat: f64,
    /// Inversion coefficient (dimensionless).
    pub ic: f64,
}

/// Specific current `2·n·µCox·(W/Leff)·Ut²` that normalizes the drain
/// current into the inversion coefficient.
pub fn specific_current(geom: &MosGeometry, p: &ProcessParams) -> f64 {
    let ut = p.thermal_voltage();
    2.0 * p.n_slope * p.mu_cox * (geom.width / geom.effective_length()) * ut * ut
}

/// Inversion coefficient `ic = id / i_spec`.
pub fn inversion_coefficient(
    geom: &MosGeometry,
    bias: &MosBias,
    p: &ProcessParams,
) -> Result<f64, ModelError> {
    p.validate()?;
    geom.validate()?;
    bias.validate(p)?;
    Ok(bias.id / specific_current(geom, p))
}

/// Normalized forward charge from the inversion coefficient.
///
/// Solves `ic = q² + q` in the cancellation-free form
/// `q = ic / (0.5 + √(0.25 + ic))`.
fn charge_of_ic(ic: f64) -> f64 {
    ic / (0.5 + (0.25 + ic).sqrt())
}

/// Gate transconductance at a declared bias:
/// `gm = (id/(n·Ut)) / (0.5 + √(0.25 + ic))`.
pub fn gm_of_bias(
    geom: &MosGeometry,
    bias: &MosBias,
    p: &ProcessParams,
) -> Result<f64, ModelError> {
    let ic = inversion_coefficient(geom, bias, p)?;
    let ut = p.thermal_voltage();
    Ok(bias.id / (p.n_slope * ut) / (0.5 + (0.25 + ic).sqrt()))
}

/// Threshold voltage with body effect:
/// `vth = vth0 + λ(√(2Φf + vsb) − √(2Φf))`.
pub fn threshold_voltage(vsb: f64, p: &ProcessParams) -> Result<f64, ModelError> {
    if vsb < -p.phi_f2 {
        return Err(ModelError::Domain(format!(
            "vsb {vsb} below −2Φf = {}; threshold undefined",
            -p.phi_f2
        )));
    }
    Ok(p.vth0 + p.lambda_body * ((p.phi_f2 + vsb).sqrt() - p.phi_f2.sqrt()))
}

/// Bulk transconductance `gmb = gm·λ/(2√(2Φf + vsb))`.
pub fn body_transconductance(gm: f64, vsb: f64, p: &ProcessParams) -> Result<f64, ModelError> {
    if !gm.is_finite() || gm <= 0.0 {
        return Err(ModelError::InvalidInput(format!(
            "gm must be > 0, got {gm}"
        )));
    }
    let arg = p.phi_f2 + vsb;
    if arg <= 1.0e-9 {
        return Err(ModelError::Domain(format!(
            "vsb {vsb} too close to −2Φf = {}; gmb singular",
            -p.phi_f2
        )));
    }
    Ok(gm * p.lambda_body / (2.0 * arg.sqrt()))
}

/// Saturation voltage `2·n·Ut·(√(0.25+ic)+0.5)` clipped below at `3·Ut`.
pub fn vdsat_of_ic(ic: f64, p: &ProcessParams) -> f64 {
    let ut = p.thermal_voltage();
    (2.0 * p.n_slope * ut * ((0.25 + ic).sqrt() + 0.5)).max(3.0 * ut)
}

/// Drain current as a function of gate-source voltage.
///
/// Inverts `u = 2q + ln q` for the normalized charge with a safeguarded
/// Newton iteration, then returns `i_spec·(q² + q)`. Strictly increasing
/// in `vgs`.
pub fn id_of_vgs(
    geom: &MosGeometry,
    vgs: f64,
    vsb: f64,
    p: &ProcessParams,
) -> Result<f64, ModelError> {
    p.validate()?;
    geom.validate()?;
    if !(0.0..=2.0).contains(&vgs) {
        return Err(ModelError::OutOfRange(format!(
            "vgs {vgs} outside [0, 2] V"
        )));
    }
    let vth = threshold_voltage(vsb, p)?;
    let ut = p.thermal_voltage();
    let u = (vgs - vth) / (p.n_slope * ut);
    let q = solve_charge(u)?;
    Ok(specific_current(geom, p) * (q * q + q))
}

/// Gate-source voltage that carries a given drain current; the closed-form
/// inverse of [`id_of_vgs`] through the shared charge variable.
pub fn vgs_of_id(geom: &MosGeometry, bias: &MosBias, p: &ProcessParams) -> Result<f64, ModelError> {
    let ic = inversion_coefficient(geom, bias, p)?;
    let vth = threshold_voltage(bias.vsb, p)?;
    let q = charge_of_ic(ic);
    let u = 2.0 * q + q.ln();
    Ok(vth + p.n_slope * p.thermal_voltage() * u)
}

/// Solve `2q + ln q = u` for `q > 0` (Newton in `t = ln q` with a
/// bisection safeguard; the function is strictly increasing).
fn solve_charge(u: f64) -> Result<f64, ModelError> {
    // g(t) = 2·e^t + t − u is convex and strictly increasing in t.
    let mut t = if u > 2.0 {
        (u / 2.0).ln()
    } else {
        u.min(0.0) - 0.5
    };
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for iter in 0..MAX_NEWTON_ITER {
        let e = t.exp();
        let g = 2.0 * e + t - u;
        residual = g.abs();
        if residual <= 1.0e-14 * (1.0 + u.abs()) {
            return Ok(e);
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let step = g / (2.0 * e + 1.0);
        let mut next = t - step;
        if next <= lo || next >= hi {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (false, true) => hi - 1.0,
                (true, false) => lo + 1.0,
                (false, false) => next,
            };
        }
        if next == t && iter > 0 {
            return Ok(e);
        }
        t = next;
    }
    Err(ModelError::NoConvergence {
        iterations: MAX_NEWTON_ITER,
        residual,
    })
}

/// Channel thermal noise current PSD `4kTγ·gm` (A²/Hz).
pub fn channel_thermal_psd(gm: f64, p: &ProcessParams) -> f64 {
    p.four_kt() * p.gamma_noise * gm
}

/// Input-referred channel thermal noise voltage PSD `4kTγ/gm` (V²/Hz).
pub fn channel_thermal_input_psd(gm: f64, p: &ProcessParams) -> f64 {
    p.four_kt() * p.gamma_noise / gm
}

/// Resistor thermal noise as `(S_i, S_v) = (4kT/r, 4kT·r)`.
pub fn resistor_noise(r: f64, p: &ProcessParams) -> Result<(f64, f64), ModelError> {
    if !r.is_finite() || r <= 0.0 {
        return Err(ModelError::InvalidInput(format!(
            "resistance must be > 0, got {r}"
        )));
    }
    Ok((p.four_kt() / r, p.four_kt() * r))
}

/// Flicker noise drain-current PSD `gm²·Kf/(Cox·W·Leff·f)` (A²/Hz).
pub fn flicker_psd(
    geom: &MosGeometry,
    gm: f64,
    f: f64,
    p: &ProcessParams,
) -> Result<f64, ModelError> {
    if !f.is_finite() || f <= 0.0 {
        return Err(ModelError::InvalidInput(format!(
            "frequency must be > 0, got {f}"
        )));
    }
    geom.validate()?;
    Ok(gm * gm * p.kf / (p.cox_area * geom.gate_area() * f))
}

/// Full small-signal evaluation at a declared bias. `gds` is returned as
/// zero; callers that model channel-length modulation override it.
pub fn small_signal(
    geom: &MosGeometry,
    bias: &MosBias,
    p: &ProcessParams,
) -> Result<SmallSignal, ModelError> {
    let ic = inversion_coefficient(geom, bias, p)?;
    let gm = bias.id / (p.n_slope * p.thermal_voltage()) / (0.5 + (0.25 + ic).sqrt());
    let vth = threshold_voltage(bias.vsb, p)?;
    let gmb = body_transconductance(gm, bias.vsb, p)?;
    let vgs = vgs_of_id(geom, bias, p)?;
    Ok(SmallSignal {
        gm,
        gmb,
        gds: 0.0,
        vgs,
        vth,
        vdsat: vdsat_of_ic(ic, p),
        ic,
    })
}

/// Small-signal evaluation for a device with its bulk tied to its gate.
///
/// With bulk and gate shorted the source-bulk voltage equals the negative
/// of the gate-source voltage, so the operating point satisfies
/// `vgs = vth(−vgs) + n·Ut·u(ic)`; that fixed point is solved here and the
/// returned `vgs`, `vth`, and `gmb` are self-consistent.
pub fn small_signal_bulk_tied(
    geom: &MosGeometry,
    id: f64,
    p: &ProcessParams,
) -> Result<SmallSignal, ModelError> {
    let bias0 = MosBias::new(id);
    let ic = inversion_coefficient(geom, &bias0, p)?;
    let ut = p.thermal_voltage();
    let q = charge_of_ic(ic);
    let overdrive = p.n_slope * ut * (2.0 * q + q.ln());

    // Fixed point vgs = vth0 + λ(√(2Φf − vgs) − √(2Φf)) + overdrive.
    // The map contracts (|d/dvgs| = λ/(2√(2Φf − vgs)) < 1 anywhere the
    // junction stays inside its domain).
    let mut vgs = p.vth0 + overdrive;
    let mut converged = false;
    for _ in 0..MAX_NEWTON_ITER {
        if p.phi_f2 - vgs <= 1.0e-9 {
            return Err(ModelError::Domain(format!(
                "bulk-tied vgs {vgs} exceeds 2Φf = {}; junction model invalid",
                p.phi_f2
            )));
        }
        let next = p.vth0 + p.lambda_body * ((p.phi_f2 - vgs).sqrt() - p.phi_f2.sqrt()) + overdrive;
        if (next - vgs).abs() <= 1.0e-15 {
            vgs = next;
            converged = true;
            break;
        }
        vgs = next;
    }
    if !converged {
        return Err(ModelError::NoConvergence {
            iterations: MAX_NEWTON_ITER,
            residual: f64::NAN,
        });
    }

    let vsb = -vgs;
    let gm = id / (p.n_slope * ut) / (0.5 + (0.25 + ic).sqrt());
    let gmb = body_transconductance(gm, vsb, p)?;
    let vth = threshold_voltage(vsb, p)?;
    Ok(SmallSignal {
        gm,
        gmb,
        gds: 0.0,
        vgs,
        vth,
        vdsat: vdsat_of_ic(ic, p),
        ic,
    })
}
