//! Complex-valued modified nodal analysis: AC transfer, loop gain, input
//! impedance, and per-source noise superposition.
//!
//! Unknown ordering is node voltages (ground excluded) followed by one
//! branch current per voltage-defined element (independent voltage sources
//! and macro amplifiers), in element order. Each frequency point is an
//! independent dense LU solve; grids are evaluated in parallel and merged
//! by grid index, so results do not depend on the worker count.

mod solver;

pub use solver::LuFactors;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::devmodel::{self, ModelError, ProcessParams, SmallSignal};
use crate::netlist::{Circuit, Element, ElementKind, NodeId, Severity};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MnaError {
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("singular matrix at {freq} Hz (pivot index {pivot})")]
    SingularMatrix { freq: f64, pivot: usize },
    #[error("unknown element '{0}'")]
    UnknownElement(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("element '{label}' has no {mechanism} noise mechanism")]
    UnknownMechanism { label: String, mechanism: String },
    #[error("source '{0}' has no AC magnitude")]
    NoAcMagnitude(String),
    #[error("missing directive: {0}")]
    MissingDirective(String),
    #[error("element '{0}' is not a controlled source")]
    NotControlledSource(String),
}

/// Process model lookup for the devices of one circuit: a default set of
/// parameters plus optional named overrides selected by `MODEL=`.
#[derive(Debug, Clone, Default)]
pub struct ModelContext {
    pub process: ProcessParams,
    pub models: BTreeMap<String, ProcessParams>,
}

impl ModelContext {
    pub fn new(process: ProcessParams) -> Self {
        Self {
            process,
            models: BTreeMap::new(),
        }
    }

    fn params_for(&self, model: &Option<String>) -> Result<&ProcessParams, MnaError> {
        match model {
            None => Ok(&self.process),
            Some(name) => self
                .models
                .get(name)
                .ok_or_else(|| MnaError::UnknownModel(name.clone())),
        }
    }
}

/// Noise mechanism attached to an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMechanism {
    Thermal,
    Flicker,
    Vnoise,
}

impl NoiseMechanism {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "thermal" => Some(Self::Thermal),
            "flicker" => Some(Self::Flicker),
            "vnoise" => Some(Self::Vnoise),
            _ => None,
        }
    }
}

impl fmt::Display for NoiseMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Thermal => write!(f, "thermal"),
            Self::Flicker => write!(f, "flicker"),
            Self::Vnoise => write!(f, "vnoise"),
        }
    }
}

/// Assembled MNA system at one frequency.
pub struct SystemMatrix {
    /// Number of unknowns: `node_count − 1 + branch_count`.
    pub dimension: usize,
    /// Row-major complex coefficient matrix.
    pub matrix: Vec<Complex64>,
    /// Right-hand side with every independent AC source active.
    pub rhs: Vec<Complex64>,
    /// Number of node-voltage unknowns (the leading block).
    pub node_unknowns: usize,
    /// Labels of the branch-current unknowns, in order.
    pub branch_labels: Vec<String>,
}

/// Frequency response samples of one complex quantity.
#[derive(Debug, Clone)]
pub struct AcResult {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl AcResult {
    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| 20.0 * v.norm().log10())
            .collect()
    }

    pub fn phase_deg(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.arg().to_degrees()).collect()
    }

    /// CSV with columns `freq_hz, re, im, mag_db, phase_deg`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,re,im,mag_db,phase_deg\n");
        for (f, v) in self.freqs.iter().zip(&self.values) {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                f,
                v.re,
                v.im,
                20.0 * v.norm().log10(),
                v.arg().to_degrees()
            ));
        }
        out
    }

    /// CSV with columns `freq_hz, re_ohm, im_ohm, mag_ohm, phase_deg`.
    pub fn to_impedance_csv(&self) -> String {
        let mut out = String::from("freq_hz,re_ohm,im_ohm,mag_ohm,phase_deg\n");
        for (f, v) in self.freqs.iter().zip(&self.values) {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                f,
                v.re,
                v.im,
                v.norm(),
                v.arg().to_degrees()
            ));
        }
        out
    }
}

/// One noise source's output contribution across the grid.
#[derive(Debug, Clone)]
pub struct NoiseContribution {
    pub label: String,
    pub mechanism: NoiseMechanism,
    /// Output-referred PSD (V²/Hz) per frequency point.
    pub psd: Vec<f64>,
}

/// Per-source noise superposition result.
#[derive(Debug, Clone)]
pub struct NoiseReport {
    pub freqs: Vec<f64>,
    pub contributions: Vec<NoiseContribution>,
    /// Total output PSD (V²/Hz); exactly the sum of the contributions.
    pub total: Vec<f64>,
    /// Gain from the input source to the output node, used for referral.
    pub gain: Vec<Complex64>,
    /// Input-referred PSD `total/|gain|²`; NaN where the gain is zero.
    pub input_referred: Vec<f64>,
    /// True when any grid point had zero gain.
    pub zero_gain: bool,
}

impl NoiseReport {
    /// Fraction of the total carried by each source at one grid index.
    pub fn breakdown_at(&self, idx: usize) -> Vec<(String, f64)> {
        let total = self.total[idx];
        self.contributions
            .iter()
            .map(|c| {
                let frac = if total > 0.0 { c.psd[idx] / total } else { 0.0 };
                (
                    format!("{}_{}", c.label.to_ascii_lowercase(), c.mechanism),
                    frac,
                )
            })
            .collect()
    }

    /// CSV with one column per source plus totals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz");
        for c in &self.contributions {
            out.push_str(&format!(
                ",{}_{}_v2hz",
                c.label.to_ascii_lowercase(),
                c.mechanism
            ));
        }
        out.push_str(",total_v2hz,input_referred_v2hz\n");
        for i in 0..self.freqs.len() {
            out.push_str(&format!("{:e}", self.freqs[i]));
            for c in &self.contributions {
                out.push_str(&format!(",{:e}", c.psd[i]));
            }
            out.push_str(&format!(
                ",{:e},{:e}\n",
                self.total[i], self.input_referred[i]
            ));
        }
        out
    }
}

/// Logarithmic frequency grid, endpoints inclusive.
pub fn log_grid(fstart: f64, fstop: f64, points: usize) -> Vec<f64> {
    assert!(
        fstart > 0.0 && fstop > fstart,
        "log grid needs 0 < fstart < fstop"
    );
    if points <= 1 {
        return vec![fstart];
    }
    let l0 = fstart.ln();
    let l1 = fstop.ln();
    let mut grid: Vec<f64> = (0..points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
        .collect();
    grid[0] = fstart;
    *grid.last_mut().unwrap() = fstop;
    grid
}

/// Device evaluation cached per MOSFET element.
#[derive(Debug, Clone, Copy)]
struct DeviceEval {
    ss: SmallSignal,
    /// Bulk-junction capacitance added at the gate for bulk-tied devices (F).
    gate_cap: f64,
    four_kt_gamma_gm: f64,
    flicker_coeff: f64,
}

/// A circuit validated and prepared for analysis: device operating points
/// are resolved once, then shared by every frequency solve.
pub struct Prepared<'c> {
    circuit: &'c Circuit,
    ctx: ModelContext,
    evals: Vec<Option<DeviceEval>>,
    branch_of: BTreeMap<String, usize>,
    node_unknowns: usize,
    dim: usize,
}

/// Validate a circuit, resolve the device operating points, and return an
/// analysis-ready view.
pub fn prepare<'c>(circuit: &'c Circuit, ctx: &ModelContext) -> Result<Prepared<'c>, MnaError> {
    let errors: Vec<String> = circuit
        .validate()
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(MnaError::InvalidCircuit(errors.join("; ")));
    }

    let mut evals = Vec::with_capacity(circuit.elements.len());
    let mut branch_of = BTreeMap::new();
    let mut branches = 0usize;
    for e in &circuit.elements {
        match &e.kind {
            ElementKind::Mosfet {
                geometry,
                bias,
                dtmos,
                gds,
                model,
                ..
            } => {
                let p = ctx.params_for(model)?;
                let mut ss = if *dtmos {
                    devmodel::small_signal_bulk_tied(geometry, bias.id, p)?
                } else {
                    devmodel::small_signal(geometry, bias, p)?
                };
                ss.gds = *gds;
                let gate_cap = if *dtmos {
                    p.cj_bulk * geometry.gate_area()
                } else {
                    0.0
                };
                evals.push(Some(DeviceEval {
                    ss,
                    gate_cap,
                    four_kt_gamma_gm: devmodel::channel_thermal_psd(ss.gm, p),
                    flicker_coeff: ss.gm * ss.gm * p.kf / (p.cox_area * geometry.gate_area()),
                }));
            }
            ElementKind::VSource { .. } | ElementKind::MacroAmp { .. } => {
                branch_of.insert(e.label.clone(), branches);
                branches += 1;
                evals.push(None);
            }
            _ => evals.push(None),
        }
    }
    let node_unknowns = circuit.node_count() - 1;
    Ok(Prepared {
        circuit,
        ctx: ctx.clone(),
        evals,
        branch_of,
        node_unknowns,
        dim: node_unknowns + branches,
    })
}

fn amp_gain(dc_gain: f64, pole_hz: Option<f64>, f: f64) -> Complex64 {
    match pole_hz {
        None => Complex64::new(dc_gain, 0.0),
        Some(pole) => Complex64::new(dc_gain, 0.0) / Complex64::new(1.0, f / pole),
    }
}

impl<'c> Prepared<'c> {
    pub fn circuit(&self) -> &Circuit {
        self.circuit
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Small-signal evaluation of a MOSFET element by label.
    pub fn device_eval(&self, label: &str) -> Option<SmallSignal> {
        let idx = self.circuit.element_index(label)?;
        self.evals[idx].map(|d| d.ss)
    }

    fn unknown_of(&self, node: NodeId) -> Option<usize> {
        if node.is_ground() {
            None
        } else {
            Some(node.0 - 1)
        }
    }

    fn branch_unknown(&self, label: &str) -> usize {
        self.node_unknowns + self.branch_of[label]
    }

    /// Stamp a conductance between two nodes.
    fn stamp_conductance(&self, a: &mut [Complex64], n1: NodeId, n2: NodeId, g: Complex64) {
        let dim = self.dim;
        if let Some(i) = self.unknown_of(n1) {
            a[i * dim + i] += g;
            if let Some(j) = self.unknown_of(n2) {
                a[i * dim + j] -= g;
            }
        }
        if let Some(j) = self.unknown_of(n2) {
            a[j * dim + j] += g;
            if let Some(i) = self.unknown_of(n1) {
                a[j * dim + i] -= g;
            }
        }
    }

    /// Stamp a transconductance: current `g·(V(cp) − V(cn))` flowing from
    /// `out_p` to `out_n`.
    fn stamp_vccs(
        &self,
        a: &mut [Complex64],
        out_p: NodeId,
        out_n: NodeId,
        cp: NodeId,
        cn: NodeId,
        g: Complex64,
    ) {
        let dim = self.dim;
        for (node, sign) in [(out_p, 1.0), (out_n, -1.0)] {
            let Some(row) = self.unknown_of(node) else {
                continue;
            };
            if let Some(col) = self.unknown_of(cp) {
                a[row * dim + col] += sign * g;
            }
            if let Some(col) = self.unknown_of(cn) {
                a[row * dim + col] -= sign * g;
            }
        }
    }

    /// Build the coefficient matrix at frequency `f`. When
    /// `suspend_branch` names a macro amplifier branch, its controlled
    /// gain entries are omitted (used by the return-ratio measurement).
    fn matrix(&self, f: f64, suspend_branch: Option<usize>) -> Vec<Complex64> {
        let dim = self.dim;
        let mut a = vec![Complex64::new(0.0, 0.0); dim * dim];
        let jw = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
        for (idx, e) in self.circuit.elements.iter().enumerate() {
            match &e.kind {
                ElementKind::Resistor { ohms } => {
                    self.stamp_conductance(
                        &mut a,
                        e.terminals[0],
                        e.terminals[1],
                        Complex64::new(1.0 / ohms, 0.0),
                    );
                }
                ElementKind::Capacitor { farads } => {
                    self.stamp_conductance(&mut a, e.terminals[0], e.terminals[1], jw * *farads);
                }
                ElementKind::Mosfet { .. } => {
                    let eval = self.evals[idx].expect("mosfet evaluated at prepare time");
                    let (d, g, s, b) = (
                        e.terminals[0],
                        e.terminals[1],
                        e.terminals[2],
                        e.terminals[3],
                    );
                    self.stamp_vccs(&mut a, d, s, g, s, Complex64::new(eval.ss.gm, 0.0));
                    self.stamp_vccs(&mut a, d, s, b, s, Complex64::new(eval.ss.gmb, 0.0));
                    if eval.ss.gds != 0.0 {
                        self.stamp_conductance(&mut a, d, s, Complex64::new(eval.ss.gds, 0.0));
                    }
                    if eval.gate_cap != 0.0 {
                        self.stamp_conductance(&mut a, g, NodeId::GROUND, jw * eval.gate_cap);
                    }
                }
                ElementKind::VSource { .. } => {
                    let j = self.branch_unknown(&e.label);
                    let (n1, n2) = (e.terminals[0], e.terminals[1]);
                    if let Some(i) = self.unknown_of(n1) {
                        a[i * dim + j] += Complex64::from(1.0);
                        a[j * dim + i] += Complex64::from(1.0);
                    }
                    if let Some(i) = self.unknown_of(n2) {
                        a[i * dim + j] -= Complex64::from(1.0);
                        a[j * dim + i] -= Complex64::from(1.0);
                    }
                }
                ElementKind::ISource { .. } => {}
                ElementKind::MacroAmp {
                    dc_gain, pole_hz, ..
                } => {
                    let j = self.branch_unknown(&e.label);
                    let (out, refn, inp, inn) = (
                        e.terminals[0],
                        e.terminals[1],
                        e.terminals[2],
                        e.terminals[3],
                    );
                    if let Some(i) = self.unknown_of(out) {
                        a[i * dim + j] += Complex64::from(1.0);
                        a[j * dim + i] += Complex64::from(1.0);
                    }
                    if let Some(i) = self.unknown_of(refn) {
                        a[i * dim + j] -= Complex64::from(1.0);
                        a[j * dim + i] -= Complex64::from(1.0);
                    }
                    if suspend_branch != Some(j) {
                        let gain = amp_gain(*dc_gain, *pole_hz, f);
                        if let Some(i) = self.unknown_of(inp) {
                            a[j * dim + i] -= gain;
                        }
                        if let Some(i) = self.unknown_of(inn) {
                            a[j * dim + i] += gain;
                        }
                    }
                }
            }
        }
        a
    }

    /// Right-hand side exciting one independent source at unit magnitude.
    fn rhs_unit_source(&self, element: &Element) -> Vec<Complex64> {
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.dim];
        match &element.kind {
            ElementKind::VSource { .. } => {
                rhs[self.branch_unknown(&element.label)] = Complex64::from(1.0);
            }
            ElementKind::ISource { .. } => {
                // Current flows n1 → n2 inside the source, entering the
                // circuit at n2.
                if let Some(i) = self.unknown_of(element.terminals[1]) {
                    rhs[i] += Complex64::from(1.0);
                }
                if let Some(i) = self.unknown_of(element.terminals[0]) {
                    rhs[i] -= Complex64::from(1.0);
                }
            }
            _ => {}
        }
        rhs
    }

    /// Assemble the full system with every independent AC source active.
    pub fn stamp(&self, f: f64) -> SystemMatrix {
        let matrix = self.matrix(f, None);
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.dim];
        for e in &self.circuit.elements {
            let mag = match &e.kind {
                ElementKind::VSource { ac_mag, .. } | ElementKind::ISource { ac_mag, .. } => {
                    *ac_mag
                }
                _ => continue,
            };
            if mag == 0.0 {
                continue;
            }
            let unit = self.rhs_unit_source(e);
            for (r, u) in rhs.iter_mut().zip(unit) {
                *r += u * mag;
            }
        }
        let mut branch_labels = vec![String::new(); self.branch_of.len()];
        for (label, idx) in &self.branch_of {
            branch_labels[*idx] = label.clone();
        }
        SystemMatrix {
            dimension: self.dim,
            matrix,
            rhs,
            node_unknowns: self.node_unknowns,
            branch_labels,
        }
    }

    fn node_id(&self, name: &str) -> Result<NodeId, MnaError> {
        self.circuit
            .node(name)
            .ok_or_else(|| MnaError::UnknownNode(name.to_string()))
    }

    fn voltage_at(&self, solution: &[Complex64], node: NodeId) -> Complex64 {
        match self.unknown_of(node) {
            Some(i) => solution[i],
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// AC transfer `V(out)/AC(in_src)` over a frequency grid.
    pub fn solve_ac(&self, in_src: &str, out: &str, freqs: &[f64]) -> Result<AcResult, MnaError> {
        let src = self
            .circuit
            .element(in_src)
            .ok_or_else(|| MnaError::UnknownElement(in_src.to_string()))?;
        let mag = match &src.kind {
            ElementKind::VSource { ac_mag, .. } | ElementKind::ISource { ac_mag, .. } => *ac_mag,
            _ => return Err(MnaError::UnknownElement(in_src.to_string())),
        };
        if mag == 0.0 {
            return Err(MnaError::NoAcMagnitude(src.label.clone()));
        }
        let out_node = self.node_id(out)?;
        let unit = self.rhs_unit_source(src);
        let values: Result<Vec<Complex64>, MnaError> = freqs
            .par_iter()
            .map(|&f| {
                let lu = LuFactors::factor(self.matrix(f, None), self.dim, f)?;
                let x = lu.solve(&unit);
                Ok(self.voltage_at(&x, out_node))
            })
            .collect();
        Ok(AcResult {
            freqs: freqs.to_vec(),
            values: values?,
        })
    }

    /// Noise mechanisms available on one element, with their current /
    /// voltage PSD at frequency `f`.
    fn noise_psd(&self, idx: usize, mechanism: NoiseMechanism, f: f64) -> Option<f64> {
        let e = &self.circuit.elements[idx];
        match (&e.kind, mechanism) {
            (ElementKind::Resistor { ohms }, NoiseMechanism::Thermal) => {
                Some(self.ctx.process.four_kt() / ohms)
            }
            (ElementKind::Mosfet { .. }, NoiseMechanism::Thermal) => {
                Some(self.evals[idx].unwrap().four_kt_gamma_gm)
            }
            (ElementKind::Mosfet { .. }, NoiseMechanism::Flicker) => {
                if f > 0.0 {
                    Some(self.evals[idx].unwrap().flicker_coeff / f)
                } else {
                    None
                }
            }
            (
                ElementKind::MacroAmp {
                    input_noise_psd, ..
                },
                NoiseMechanism::Vnoise,
            ) => {
                if *input_noise_psd > 0.0 {
                    Some(*input_noise_psd)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Right-hand side injecting the unit noise excitation of one source.
    fn rhs_noise_source(&self, idx: usize, mechanism: NoiseMechanism, f: f64) -> Vec<Complex64> {
        let e = &self.circuit.elements[idx];
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.dim];
        match (&e.kind, mechanism) {
            // Unit current across the element terminals (resistor thermal
            // noise, MOSFET channel noise between drain and source).
            (ElementKind::Resistor { .. }, _) | (ElementKind::Mosfet { .. }, _) => {
                if let Some(i) = self.unknown_of(e.terminals[0]) {
                    rhs[i] += Complex64::from(1.0);
                }
                if let Some(i) = self.unknown_of(e.terminals[2.min(e.terminals.len() - 1)]) {
                    rhs[i] -= Complex64::from(1.0);
                }
            }
            // Unit voltage in series with the amplifier input: moves
            // A(f)·v_n to the branch constraint's right-hand side.
            (
                ElementKind::MacroAmp {
                    dc_gain, pole_hz, ..
                },
                _,
            ) => {
                rhs[self.branch_unknown(&e.label)] = amp_gain(*dc_gain, *pole_hz, f);
            }
            _ => {}
        }
        rhs
    }

    /// Transfer from one element's noise insertion point to the output node
    /// at a single frequency: volts at `out` per unit injected signal.
    pub fn transfer_from_source(
        &self,
        label: &str,
        mechanism: NoiseMechanism,
        out: &str,
        f: f64,
    ) -> Result<Complex64, MnaError> {
        let idx = self
            .circuit
            .element_index(label)
            .ok_or_else(|| MnaError::UnknownElement(label.to_string()))?;
        if self.noise_psd(idx, mechanism, f.max(1.0)).is_none() {
            return Err(MnaError::UnknownMechanism {
                label: label.to_string(),
                mechanism: mechanism.to_string(),
            });
        }
        let out_node = self.node_id(out)?;
        let lu = LuFactors::factor(self.matrix(f, None), self.dim, f)?;
        let x = lu.solve(&self.rhs_noise_source(idx, mechanism, f));
        Ok(self.voltage_at(&x, out_node))
    }

    /// All noise sources in the circuit except the excluded labels.
    fn noise_source_list(&self, exclude: &[String]) -> Vec<(usize, NoiseMechanism)> {
        let mut sources = Vec::new();
        for (idx, e) in self.circuit.elements.iter().enumerate() {
            if exclude.iter().any(|x| x.eq_ignore_ascii_case(&e.label)) {
                continue;
            }
            match &e.kind {
                ElementKind::Resistor { .. } => sources.push((idx, NoiseMechanism::Thermal)),
                ElementKind::Mosfet { .. } => {
                    sources.push((idx, NoiseMechanism::Thermal));
                    sources.push((idx, NoiseMechanism::Flicker));
                }
                ElementKind::MacroAmp {
                    input_noise_psd, ..
                } if *input_noise_psd > 0.0 => {
                    sources.push((idx, NoiseMechanism::Vnoise));
                }
                _ => {}
            }
        }
        sources
    }

    /// Per-source output noise superposition and input referral.
    ///
    /// `out`, `in_src`, and `exclude` fall back to the circuit's `.noise`
    /// directive when `None`.
    pub fn noise_at_output(
        &self,
        out: Option<&str>,
        in_src: Option<&str>,
        exclude: Option<&[String]>,
        freqs: &[f64],
    ) -> Result<NoiseReport, MnaError> {
        let directive = self.circuit.noise_directive();
        let out = out
            .or_else(|| directive.map(|(o, _, _)| o))
            .ok_or_else(|| MnaError::MissingDirective("noise output node".into()))?;
        let in_src = in_src
            .or_else(|| directive.map(|(_, i, _)| i))
            .ok_or_else(|| MnaError::MissingDirective("noise input source".into()))?;
        let exclude: Vec<String> = exclude
            .map(|e| e.to_vec())
            .or_else(|| directive.map(|(_, _, e)| e.to_vec()))
            .unwrap_or_default();

        let out_node = self.node_id(out)?;
        let src = self
            .circuit
            .element(in_src)
            .ok_or_else(|| MnaError::UnknownElement(in_src.to_string()))?;
        let gain_rhs = self.rhs_unit_source(src);
        let src_mag = match &src.kind {
            ElementKind::VSource { ac_mag, .. } | ElementKind::ISource { ac_mag, .. } => *ac_mag,
            _ => return Err(MnaError::UnknownElement(in_src.to_string())),
        };
        if src_mag == 0.0 {
            return Err(MnaError::NoAcMagnitude(src.label.clone()));
        }
        let sources = self.noise_source_list(&exclude);

        struct Point {
            psds: Vec<f64>,
            gain: Complex64,
        }
        let points: Result<Vec<Point>, MnaError> = freqs
            .par_iter()
            .map(|&f| {
                let lu = LuFactors::factor(self.matrix(f, None), self.dim, f)?;
                let mut psds = Vec::with_capacity(sources.len());
                for (idx, mech) in &sources {
                    let psd = match self.noise_psd(*idx, *mech, f) {
                        Some(s) => {
                            let x = lu.solve(&self.rhs_noise_source(*idx, *mech, f));
                            let h = self.voltage_at(&x, out_node);
                            s * h.norm_sqr()
                        }
                        // Mechanism undefined at this frequency (flicker at DC).
                        None => 0.0,
                    };
                    psds.push(psd);
                }
                let gain = self.voltage_at(&lu.solve(&gain_rhs), out_node);
                Ok(Point { psds, gain })
            })
            .collect();
        let points = points?;

        let mut contributions: Vec<NoiseContribution> = sources
            .iter()
            .map(|(idx, mech)| NoiseContribution {
                label: self.circuit.elements[*idx].label.clone(),
                mechanism: *mech,
                psd: Vec::with_capacity(freqs.len()),
            })
            .collect();
        let mut total = Vec::with_capacity(freqs.len());
        let mut gain = Vec::with_capacity(freqs.len());
        let mut input_referred = Vec::with_capacity(freqs.len());
        let mut zero_gain = false;
        for p in points {
            let mut sum = 0.0;
            for (c, psd) in contributions.iter_mut().zip(&p.psds) {
                c.psd.push(*psd);
                sum += psd;
            }
            total.push(sum);
            let g2 = p.gain.norm_sqr();
            if g2 == 0.0 {
                zero_gain = true;
                input_referred.push(f64::NAN);
            } else {
                input_referred.push(sum / g2);
            }
            gain.push(p.gain);
        }
        Ok(NoiseReport {
            freqs: freqs.to_vec(),
            contributions,
            total,
            gain,
            input_referred,
            zero_gain,
        })
    }

    /// Impedance seen across a port with all independent sources zeroed:
    /// unit test current into the first node, out of the second.
    pub fn input_impedance(&self, port: (&str, &str), freqs: &[f64]) -> Result<AcResult, MnaError> {
        let n1 = self.node_id(port.0)?;
        let n2 = self.node_id(port.1)?;
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.dim];
        if let Some(i) = self.unknown_of(n1) {
            rhs[i] += Complex64::from(1.0);
        }
        if let Some(i) = self.unknown_of(n2) {
            rhs[i] -= Complex64::from(1.0);
        }
        let values: Result<Vec<Complex64>, MnaError> = freqs
            .par_iter()
            .map(|&f| {
                let lu = LuFactors::factor(self.matrix(f, None), self.dim, f)?;
                let x = lu.solve(&rhs);
                Ok(self.voltage_at(&x, n1) - self.voltage_at(&x, n2))
            })
            .collect();
        Ok(AcResult {
            freqs: freqs.to_vec(),
            values: values?,
        })
    }

    /// Return ratio of the controlled source named by the `.loopgain`
    /// directive: the controlled gain is suspended, a unit signal is
    /// enforced at its output port, and the signal arriving back at its
    /// controlling port is measured.
    pub fn loop_gain(&self, freqs: &[f64]) -> Result<AcResult, MnaError> {
        let label = self
            .circuit
            .loopgain_directive()
            .ok_or_else(|| MnaError::MissingDirective(".loopgain".into()))?;
        let element = self
            .circuit
            .element(label)
            .ok_or_else(|| MnaError::UnknownElement(label.to_string()))?;
        let ElementKind::MacroAmp {
            dc_gain, pole_hz, ..
        } = element.kind
        else {
            return Err(MnaError::NotControlledSource(label.to_string()));
        };
        let branch = self.branch_unknown(&element.label);
        let (inp, inn) = (element.terminals[2], element.terminals[3]);
        let mut rhs = vec![Complex64::new(0.0, 0.0); self.dim];
        rhs[branch] = Complex64::from(1.0);
        let values: Result<Vec<Complex64>, MnaError> = freqs
            .par_iter()
            .map(|&f| {
                let lu = LuFactors::factor(self.matrix(f, Some(branch)), self.dim, f)?;
                let x = lu.solve(&rhs);
                let control = self.voltage_at(&x, inp) - self.voltage_at(&x, inn);
                Ok(-amp_gain(dc_gain, pole_hz, f) * control)
            })
            .collect();
        Ok(AcResult {
            freqs: freqs.to_vec(),
            values: values?,
        })
    }
}
