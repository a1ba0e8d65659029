//! Parameterized circuit builders for the mirror, transconductance
//! half-circuit, and full amplifier structures, plus analytic headroom
//! accounting.
//!
//! Builders return ordinary [`Circuit`] values, so every analysis that
//! works on parsed netlists works on built ones. Mirrored-pair devices tie
//! bulk to source and auxiliary amplifiers are macromodels (gain, pole,
//! optional input noise); output conductance defaults to zero so the
//! closed forms in [`crate::oracles`] apply exactly.
//!
//! Bias bookkeeping: operating currents are declared per element. A mirror
//! diode branch carries the current implied by matched current density,
//! and its degeneration resistor is scaled to drop the same voltage as the
//! mirrored side.

use serde::{Deserialize, Serialize};

use crate::devmodel::{self, ModelError, MosBias, MosGeometry, ProcessParams};
use crate::netlist::{Circuit, ElementKind, Polarity};

fn mos(geometry: MosGeometry, id: f64, polarity: Polarity, dtmos: bool) -> ElementKind {
    ElementKind::Mosfet {
        geometry,
        bias: MosBias::new(id),
        polarity,
        dtmos,
        gds: 0.0,
        model: None,
    }
}

fn resistor(ohms: f64) -> ElementKind {
    ElementKind::Resistor { ohms }
}

fn capacitor(farads: f64) -> ElementKind {
    ElementKind::Capacitor { farads }
}

fn vsource(dc: f64, ac_mag: f64) -> ElementKind {
    ElementKind::VSource { dc, ac_mag }
}

/// Whether a builder attaches input drive sources or leaves the input
/// port open for impedance measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputDrive {
    /// Input driven by an AC-active voltage source.
    #[default]
    Voltage,
    /// No input source; the gate port is left open so its impedance can be
    /// probed directly.
    Open,
}

/// Macro-amplifier description used by the builders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroAmpSpec {
    pub gain: f64,
    pub pole_hz: Option<f64>,
    /// Input-referred white voltage noise PSD (V²/Hz).
    pub vnoise: f64,
}

impl MacroAmpSpec {
    pub fn new(gain: f64, pole_hz: f64) -> Self {
        Self {
            gain,
            pole_hz: Some(pole_hz),
            vnoise: 0.0,
        }
    }

    fn kind(&self) -> ElementKind {
        ElementKind::MacroAmp {
            dc_gain: self.gain,
            pole_hz: self.pole_hz,
            input_noise_psd: self.vnoise,
        }
    }
}

/// Noiseless ideal sensing element (unity-style VCVS).
fn ideal_sense(gain: f64) -> ElementKind {
    ElementKind::MacroAmp {
        dc_gain: gain,
        pole_hz: None,
        input_noise_psd: 0.0,
    }
}

/// Mirror flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorKind {
    Conventional,
    Sdcm,
}

/// Standalone current-mirror test structure: diode branch plus mirrored
/// branch with a load, biased by an ideal reference current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorTopoParams {
    pub kind: MirrorKind,
    /// Mirror output device (the noise contributor).
    pub mirror_geom: MosGeometry,
    /// Diode-connected reference device.
    pub diode_geom: MosGeometry,
    /// Source degeneration on the mirrored side (Ω); zero is conventional.
    pub r_de: f64,
    /// Output load (Ω).
    pub r_d: f64,
    /// Mirrored-branch current (A).
    pub i_d: f64,
    /// Supply (V).
    pub vdd: f64,
}

impl MirrorTopoParams {
    /// Conventional mirror as swept in the narrow-width length study.
    pub fn conventional(length: f64) -> Self {
        Self {
            kind: MirrorKind::Conventional,
            mirror_geom: MosGeometry::new(250.0e-9, length),
            diode_geom: MosGeometry::new(250.0e-9, length),
            r_de: 0.0,
            r_d: 1.0e6,
            i_d: 1.0e-6,
            vdd: 0.8,
        }
    }

    /// Degenerated mirror in its wide-device configuration.
    pub fn sdcm(r_de: f64) -> Self {
        Self {
            kind: MirrorKind::Sdcm,
            mirror_geom: MosGeometry::new(20.0e-6, 1.0e-6),
            diode_geom: MosGeometry::new(2.0e-6, 1.0e-6),
            r_de,
            r_d: 1.0e6,
            i_d: 1.0e-6,
            vdd: 0.8,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.mirror_geom.validate()?;
        self.diode_geom.validate()?;
        for (name, v) in [("r_d", self.r_d), ("i_d", self.i_d), ("vdd", self.vdd)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidInput(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !self.r_de.is_finite() || self.r_de < 0.0 {
            return Err(ModelError::InvalidInput(format!(
                "r_de must be ≥ 0, got {}",
                self.r_de
            )));
        }
        if self.kind == MirrorKind::Conventional && self.r_de != 0.0 {
            return Err(ModelError::InvalidInput(
                "conventional mirror requires r_de = 0".to_string(),
            ));
        }
        Ok(())
    }
}

/// Build the standalone mirror. Noise bookkeeping counts only the
/// mirrored branch: the diode branch is excluded through the `.noise`
/// directive because it appears as common mode in the differential
/// amplifier the mirror serves.
pub fn build_mirror(p: &MirrorTopoParams) -> Result<Circuit, ModelError> {
    p.validate()?;
    let title = match p.kind {
        MirrorKind::Conventional => "conventional current mirror",
        MirrorKind::Sdcm => "source-degenerated current mirror",
    };
    let mut c = Circuit::new(title);
    c.add_element("VDD", vsource(p.vdd, 0.0), &["vdd", "0"]);
    c.add_element(
        "IREF",
        ElementKind::ISource {
            dc: p.i_d,
            ac_mag: 1.0,
        },
        &["vdd", "dio"],
    );
    let (diode_src, mirror_src) = if p.r_de > 0.0 {
        ("sdm", "s3")
    } else {
        ("0", "0")
    };
    c.add_element(
        "M3M",
        mos(p.diode_geom, p.i_d, Polarity::Nmos, false),
        &["dio", "dio", diode_src, diode_src],
    );
    c.add_element(
        "M3",
        mos(p.mirror_geom, p.i_d, Polarity::Nmos, false),
        &["out", "dio", mirror_src, mirror_src],
    );
    if p.r_de > 0.0 {
        // Both branches degenerate equally.
        c.add_element("RDEM", resistor(p.r_de), &["sdm", "0"]);
        c.add_element("RDE", resistor(p.r_de), &["s3", "0"]);
    }
    c.add_element("RD", resistor(p.r_d), &["vdd", "out"]);
    let mut exclude = vec!["M3M".to_string()];
    if p.r_de > 0.0 {
        exclude.push("RDEM".into());
    }
    c.directives.push(crate::netlist::Directive::Noise {
        out: "out".into(),
        input: "IREF".into(),
        exclude,
    });
    Ok(c)
}

/// Differential-mode half-circuit of the transconductance stage: input
/// device with its source on the half input resistance, the tail mirror
/// (optionally degenerated), and an output mirror of ratio `m` into a
/// load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcHalfParams {
    /// Input device.
    pub m1: MosGeometry,
    /// Bulk tied to gate on the input device.
    pub dtmos: bool,
    /// Main branch (tail and input device) current (A).
    pub i_main: f64,
    /// Tail mirror output device.
    pub m3: MosGeometry,
    /// Tail mirror diode device.
    pub m3m: MosGeometry,
    /// Tail degeneration resistance (Ω); zero for the conventional tail.
    pub r_de: f64,
    /// Full input resistance (Ω); the half circuit grounds `r_in/2`.
    /// Zero grounds the source node directly.
    pub r_in: f64,
    /// Output mirror ratio m.
    pub mirror_ratio: f64,
    /// Output mirror diode device (output side scales by `m`).
    pub out_mirror: MosGeometry,
    /// Output load (Ω).
    pub r_d: f64,
    /// Fixed gate capacitance at the input port (F).
    pub c_gate: f64,
    /// Supply (V).
    pub vdd: f64,
    /// Input common-mode level (V), used by headroom accounting.
    pub v_in_cm: f64,
    pub input_drive: InputDrive,
}

impl Default for TcHalfParams {
    fn default() -> Self {
        Self {
            m1: MosGeometry::new(500.0e-6, 0.25e-6),
            dtmos: false,
            i_main: 1.0e-6,
            m3: MosGeometry::new(20.0e-6, 1.0e-6),
            m3m: MosGeometry::new(2.0e-6, 1.0e-6),
            r_de: 50.0e3,
            r_in: 4.0e3,
            mirror_ratio: 0.2,
            out_mirror: MosGeometry::new(5.0e-6, 0.5e-6),
            r_d: 1.0e6,
            c_gate: 0.2e-12,
            vdd: 0.8,
            v_in_cm: 0.25,
            input_drive: InputDrive::Voltage,
        }
    }
}

impl TcHalfParams {
    /// Geometry of the scaled output-mirror device.
    pub fn out_mirror_scaled(&self) -> MosGeometry {
        MosGeometry::with_stack(
            self.out_mirror.width * self.mirror_ratio,
            self.out_mirror.length,
            self.out_mirror.series_stack,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.m1.validate()?;
        self.m3.validate()?;
        self.m3m.validate()?;
        self.out_mirror.validate()?;
        for (name, v) in [
            ("i_main", self.i_main),
            ("mirror_ratio", self.mirror_ratio),
            ("r_d", self.r_d),
            ("c_gate", self.c_gate),
            ("vdd", self.vdd),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidInput(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("r_de", self.r_de),
            ("r_in", self.r_in),
            ("v_in_cm", self.v_in_cm),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidInput(format!(
                    "{name} must be ≥ 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Build the transconductance half-circuit.
pub fn build_tc_half(p: &TcHalfParams) -> Result<Circuit, ModelError> {
    p.validate()?;
    let mut c = Circuit::new("tc half-circuit");
    c.add_element("VDD", vsource(p.vdd, 0.0), &["vdd", "0"]);
    if p.input_drive == InputDrive::Voltage {
        c.add_element("VIN", vsource(p.v_in_cm, 1.0), &["in", "0"]);
    }
    c.add_element("CIN", capacitor(p.c_gate), &["in", "0"]);

    // Input device; half input resistance to the differential virtual
    // ground. r_in = 0 collapses the source node onto ground.
    let vs = if p.r_in > 0.0 { "vs" } else { "0" };
    let bulk = if p.dtmos { "in" } else { vs };
    c.add_element(
        "M1",
        mos(p.m1, p.i_main, Polarity::Pmos, p.dtmos),
        &["vd", "in", vs, bulk],
    );
    if p.r_in > 0.0 {
        c.add_element("RIN2", resistor(p.r_in / 2.0), &["vs", "0"]);
    }

    // Tail mirror (PMOS, sourcing from the supply), degenerated when
    // r_de > 0; the diode branch biases the gate and is excluded from the
    // noise sum as common mode.
    let (tail_src, diode_src) = if p.r_de > 0.0 {
        ("sde", "sdm")
    } else {
        ("vdd", "vdd")
    };
    c.add_element(
        "MT",
        mos(p.m3, p.i_main, Polarity::Pmos, false),
        &[vs, "dio", tail_src, tail_src],
    );
    c.add_element(
        "MTM",
        mos(p.m3m, p.i_main, Polarity::Pmos, false),
        &["dio", "dio", diode_src, diode_src],
    );
    if p.r_de > 0.0 {
        c.add_element("RDE", resistor(p.r_de), &["sde", "vdd"]);
        c.add_element("RDEM", resistor(p.r_de), &["sdm", "vdd"]);
    }
    c.add_element(
        "IREF",
        ElementKind::ISource {
            dc: p.i_main,
            ac_mag: 0.0,
        },
        &["dio", "0"],
    );

    // Output mirror: NMOS diode at the input-device drain, ratio-m copy
    // into the load.
    c.add_element(
        "MDIN",
        mos(p.out_mirror, p.i_main, Polarity::Nmos, false),
        &["vd", "vd", "0", "0"],
    );
    c.add_element(
        "MDOUT",
        mos(
            p.out_mirror_scaled(),
            p.i_main * p.mirror_ratio,
            Polarity::Nmos,
            false,
        ),
        &["out", "vd", "0", "0"],
    );
    c.add_element("RD", resistor(p.r_d), &["vdd", "out"]);

    if p.input_drive == InputDrive::Voltage {
        let mut exclude = vec!["MTM".to_string()];
        if p.r_de > 0.0 {
            exclude.push("RDEM".into());
        }
        c.directives.push(crate::netlist::Directive::Noise {
            out: "out".into(),
            input: "VIN".into(),
            exclude,
        });
    }
    Ok(c)
}

/// Full differential amplifier: transconductance stage with regulated
/// input followers and degenerated tail mirrors, transimpedance stage
/// with a regulated cascode current copy into the output resistance, and
/// three auxiliary amplifiers: differential drain regulation in the first
/// stage, cascode regulation and common-mode feedback in the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullIaParams {
    pub m1: MosGeometry,
    pub m2: MosGeometry,
    pub m3: MosGeometry,
    pub m3m: MosGeometry,
    /// Regulated cascode device in the output stage.
    pub m12: MosGeometry,
    /// Common-mode feedback sink.
    pub m13: MosGeometry,
    /// Cascode over the common-mode sink.
    pub m14: MosGeometry,
    /// Input resistance (Ω).
    pub r_in: f64,
    /// Output-to-input resistance ratio (the design fixes 250).
    pub r_out_ratio: f64,
    /// Current-copy ratio m between the follower device and the output
    /// branch; the copy device reuses the follower's length so the ratio
    /// is exact.
    pub mirror_ratio: f64,
    /// Tail degeneration (Ω).
    pub r_de: f64,
    /// Lead compensation across the input resistance (F).
    pub c_lc: f64,
    /// Compensation across the common-mode amplifier (F).
    pub c_c: f64,
    /// Output common-mode sense capacitance per side (F).
    pub c_r: f64,
    /// First-stage dominant-pole capacitance at each regulation sense node (F).
    pub c_g: f64,
    /// Regulation-amplifier compensation in the output stage (F).
    pub c_rc: f64,
    /// Fixed input gate capacitance per side (F).
    pub c_gate: f64,
    /// Composite output resistance of the boosted cascode source loading
    /// each input-device drain (Ω).
    pub r_cascode: f64,
    /// Common-mode sense resistance per side, behind ideal buffers (Ω).
    pub r_cm: f64,
    /// Bias voltages (V).
    pub v_r: f64,
    pub v_l: f64,
    pub v_ref: f64,
    pub v_bn: f64,
    pub v_in_cm: f64,
    /// Tail/main branch current (A).
    pub i_main: f64,
    /// Follower branch current (A).
    pub i_m2: f64,
    /// Auxiliary amplifiers.
    pub amp_ar: MacroAmpSpec,
    pub amp_ag: MacroAmpSpec,
    pub amp_ac: MacroAmpSpec,
    pub dtmos: bool,
    pub vdd: f64,
    pub input_drive: InputDrive,
}

impl Default for FullIaParams {
    fn default() -> Self {
        Self {
            m1: MosGeometry::new(500.0e-6, 0.25e-6),
            m2: MosGeometry::new(30.0e-6, 0.5e-6),
            m3: MosGeometry::new(20.0e-6, 1.0e-6),
            m3m: MosGeometry::new(2.0e-6, 1.0e-6),
            m12: MosGeometry::new(1.0e-6, 0.25e-6),
            m13: MosGeometry::new(0.5e-6, 0.5e-6),
            m14: MosGeometry::with_stack(0.25e-6, 1.0e-6, 4),
            r_in: 4.0e3,
            r_out_ratio: 250.0,
            mirror_ratio: 0.2,
            r_de: 50.0e3,
            c_lc: 750.0e-15,
            c_c: 5.0e-15,
            c_r: 20.0e-15,
            c_g: 5.0e-12,
            c_rc: 10.0e-15,
            c_gate: 0.2e-12,
            r_cascode: 100.0e6,
            r_cm: 100.0e6,
            v_r: 0.1,
            v_l: 0.25,
            v_ref: 0.4,
            v_bn: 0.5,
            v_in_cm: 0.25,
            i_main: 1.0e-6,
            i_m2: 0.5e-6,
            amp_ar: MacroAmpSpec::new(100.0, 1.0e5),
            amp_ag: MacroAmpSpec::new(100.0, 1.0e6),
            amp_ac: MacroAmpSpec::new(50.0, 1.0e5),
            dtmos: true,
            vdd: 0.8,
            input_drive: InputDrive::Voltage,
        }
    }
}

impl FullIaParams {
    pub fn r_out(&self) -> f64 {
        self.r_out_ratio * self.r_in
    }

    /// Ideal closed-loop differential gain `m·R_out/R_in`.
    pub fn ideal_gain(&self) -> f64 {
        self.mirror_ratio * self.r_out_ratio
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for g in [
            &self.m1, &self.m2, &self.m3, &self.m3m, &self.m12, &self.m13, &self.m14,
        ] {
            g.validate()?;
        }
        for (name, v) in [
            ("r_in", self.r_in),
            ("r_out_ratio", self.r_out_ratio),
            ("mirror_ratio", self.mirror_ratio),
            ("c_gate", self.c_gate),
            ("r_cascode", self.r_cascode),
            ("r_cm", self.r_cm),
            ("i_main", self.i_main),
            ("i_m2", self.i_m2),
            ("vdd", self.vdd),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidInput(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.r_de < 0.0 {
            return Err(ModelError::InvalidInput(format!(
                "r_de must be ≥ 0, got {}",
                self.r_de
            )));
        }
        for (name, v) in [
            ("v_r", self.v_r),
            ("v_l", self.v_l),
            ("v_ref", self.v_ref),
            ("v_bn", self.v_bn),
        ] {
            if v >= self.vdd {
                return Err(ModelError::InvalidInput(format!(
                    "bias {name} = {v} must stay below vdd = {}",
                    self.vdd
                )));
            }
        }
        Ok(())
    }
}

/// Build the full differential amplifier.
pub fn build_full_ia(p: &FullIaParams) -> Result<Circuit, ModelError> {
    p.validate()?;
    // The input device carries the tail current plus the follower branch.
    let i_m1 = p.i_main + p.i_m2;
    let i_out_branch = p.mirror_ratio * p.i_m2;
    // The current-copy device shares the follower's gate-source voltage;
    // matched density makes the gm ratio exactly m.
    let m11 = MosGeometry::with_stack(p.m2.width * p.mirror_ratio, p.m2.length, p.m2.series_stack);

    let mut c = Circuit::new("fvf instrumentation amplifier");
    c.add_element("VDD", vsource(p.vdd, 0.0), &["vdd", "0"]);
    c.add_element("VVL", vsource(p.v_l, 0.0), &["vl", "0"]);
    c.add_element("VVR", vsource(p.v_r, 0.0), &["vr", "0"]);
    c.add_element("VVREF", vsource(p.v_ref, 0.0), &["vref", "0"]);
    c.add_element("VBN", vsource(p.v_bn, 0.0), &["bn", "0"]);
    if p.input_drive == InputDrive::Voltage {
        c.add_element("VINP", vsource(p.v_in_cm, 1.0), &["inp", "0"]);
        c.add_element("VINN", vsource(p.v_in_cm, 0.0), &["inn", "0"]);
    }
    c.add_element("CINP", capacitor(p.c_gate), &["inp", "0"]);
    c.add_element("CINN", capacitor(p.c_gate), &["inn", "0"]);

    // Input followers with the input resistance between their sources.
    for (label, input, vs, vd) in [("M1P", "inp", "vsp", "vdp"), ("M1N", "inn", "vsn", "vdn")] {
        let bulk = if p.dtmos { input } else { vs };
        c.add_element(
            label,
            mos(p.m1, i_m1, Polarity::Pmos, p.dtmos),
            &[vd, input, vs, bulk],
        );
    }
    c.add_element("RIN", resistor(p.r_in), &["vsp", "vsn"]);
    if p.c_lc > 0.0 {
        c.add_element("CLC", capacitor(p.c_lc), &["vsp", "vsn"]);
    }

    // Degenerated tail mirrors with a shared diode branch.
    let (tp, tn, dsrc) = if p.r_de > 0.0 {
        ("sdep", "sden", "sdm")
    } else {
        ("vdd", "vdd", "vdd")
    };
    c.add_element(
        "M3P",
        mos(p.m3, p.i_main, Polarity::Pmos, false),
        &["vsp", "dio", tp, tp],
    );
    c.add_element(
        "M3N",
        mos(p.m3, p.i_main, Polarity::Pmos, false),
        &["vsn", "dio", tn, tn],
    );
    c.add_element(
        "M3M",
        mos(p.m3m, p.i_main, Polarity::Pmos, false),
        &["dio", "dio", dsrc, dsrc],
    );
    if p.r_de > 0.0 {
        c.add_element("RDEP", resistor(p.r_de), &["sdep", "vdd"]);
        c.add_element("RDEN", resistor(p.r_de), &["sden", "vdd"]);
        c.add_element("RDEM", resistor(p.r_de), &["sdm", "vdd"]);
    }
    c.add_element(
        "IREF",
        ElementKind::ISource {
            dc: p.i_main,
            ac_mag: 0.0,
        },
        &["dio", "0"],
    );

    // First-stage regulation: one differential amplifier senses the drain
    // imbalance and drives the followers antisymmetrically through an
    // ideal inverter. The boosted cascode sources loading the drains
    // appear as their composite output resistance.
    c.add_element("EAG", p.amp_ag.kind(), &["g2p", "0", "vdp", "vdn"]);
    c.add_element("EAGI", ideal_sense(1.0), &["g2n", "0", "0", "g2p"]);
    c.add_element(
        "M2P",
        mos(p.m2, p.i_m2, Polarity::Pmos, false),
        &["vsp", "g2p", "vdd", "vdd"],
    );
    c.add_element(
        "M2N",
        mos(p.m2, p.i_m2, Polarity::Pmos, false),
        &["vsn", "g2n", "vdd", "vdd"],
    );
    c.add_element("RCASP", resistor(p.r_cascode), &["vdp", "0"]);
    c.add_element("RCASN", resistor(p.r_cascode), &["vdn", "0"]);
    if p.c_g > 0.0 {
        c.add_element("CGP", capacitor(p.c_g), &["vdp", "0"]);
        c.add_element("CGN", capacitor(p.c_g), &["vdn", "0"]);
    }

    // Output stage: exact current copies through regulated cascodes into
    // the output resistance.
    for (side, g2, os, out, gar) in [
        ("P", "g2p", "osp", "outp", "garp"),
        ("N", "g2n", "osn", "outn", "garn"),
    ] {
        c.add_element(
            &format!("M11{side}"),
            mos(m11, i_out_branch, Polarity::Pmos, false),
            &[os, g2, "vdd", "vdd"],
        );
        c.add_element(
            &format!("EAR{side}"),
            p.amp_ar.kind(),
            &[gar, "0", "vr", os],
        );
        c.add_element(
            &format!("M12{side}"),
            mos(p.m12, i_out_branch, Polarity::Pmos, false),
            &[out, gar, os, "vdd"],
        );
        if p.c_rc > 0.0 {
            c.add_element(&format!("CRC{side}"), capacitor(p.c_rc), &[gar, os]);
        }
    }
    c.add_element("ROUT", resistor(p.r_out()), &["outp", "outn"]);

    // Common-mode feedback: buffered resistive sense (the buffers keep the
    // sense network from loading the output), amplifier against the
    // reference, cascoded sinks.
    c.add_element("EBSP", ideal_sense(1.0), &["bsp", "0", "outp", "0"]);
    c.add_element("EBSN", ideal_sense(1.0), &["bsn", "0", "outn", "0"]);
    c.add_element("RCMP", resistor(p.r_cm), &["bsp", "cm"]);
    c.add_element("RCMN", resistor(p.r_cm), &["bsn", "cm"]);
    if p.c_r > 0.0 {
        c.add_element("CRP", capacitor(p.c_r), &["outp", "cm"]);
        c.add_element("CRN", capacitor(p.c_r), &["outn", "cm"]);
    }
    c.add_element("EAC", p.amp_ac.kind(), &["cout", "0", "cm", "vref"]);
    if p.c_c > 0.0 {
        c.add_element("CCC", capacitor(p.c_c), &["cout", "cm"]);
    }
    for (side, xc, out) in [("P", "xcp", "outp"), ("N", "xcn", "outn")] {
        c.add_element(
            &format!("M13{side}"),
            mos(p.m13, i_out_branch, Polarity::Nmos, false),
            &[xc, "cout", "0", "0"],
        );
        c.add_element(
            &format!("M14{side}"),
            mos(p.m14, i_out_branch, Polarity::Nmos, false),
            &[out, "bn", xc, "0"],
        );
    }

    // Ideal differential output sense.
    c.add_element("EDM", ideal_sense(1.0), &["dout", "0", "outp", "outn"]);

    c.directives
        .push(crate::netlist::Directive::LoopGain { amp: "EAG".into() });
    if p.input_drive == InputDrive::Voltage {
        let mut exclude = vec!["M3M".to_string()];
        if p.r_de > 0.0 {
            exclude.push("RDEM".into());
        }
        c.directives.push(crate::netlist::Directive::Noise {
            out: "dout".into(),
            input: "VINP".into(),
            exclude,
        });
    }
    Ok(c)
}

/// Per-device saturation margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatMargin {
    pub device: String,
    /// `V_ds available − V_dsat` (V); negative means out of saturation.
    pub margin: f64,
}

/// Voltage budget accounting for a mirror or half-circuit bias point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadroomReport {
    /// Diode-branch voltage from the far rail: gate-source drop plus the
    /// degeneration drop (V).
    pub v_dio: f64,
    /// `vdd − v_dio` (V).
    pub headroom_diode: f64,
    /// Degeneration penalty `i·r_de` on the mirrored side (V).
    pub v_de: f64,
    pub sat_margins: Vec<SatMargin>,
    /// All saturation margins nonnegative and the diode headroom at or
    /// above the configured minimum.
    pub pass: bool,
}

impl HeadroomReport {
    fn finish(mut self, min_headroom: f64) -> Self {
        self.pass =
            self.headroom_diode >= min_headroom && self.sat_margins.iter().all(|m| m.margin >= 0.0);
        self
    }
}

/// Headroom accounting for the standalone mirror.
pub fn mirror_headroom(
    p: &MirrorTopoParams,
    process: &ProcessParams,
    min_headroom: f64,
) -> Result<HeadroomReport, ModelError> {
    p.validate()?;
    let diode = devmodel::small_signal(&p.diode_geom, &MosBias::new(p.i_d), process)?;
    let mirror = devmodel::small_signal(&p.mirror_geom, &MosBias::new(p.i_d), process)?;
    let v_de = p.i_d * p.r_de;
    let v_dio = diode.vgs + v_de;
    let report = HeadroomReport {
        v_dio,
        headroom_diode: p.vdd - v_dio,
        v_de,
        sat_margins: vec![
            SatMargin {
                device: "M3".into(),
                margin: (p.vdd - p.i_d * p.r_d - v_de) - mirror.vdsat,
            },
            SatMargin {
                device: "M3M".into(),
                margin: diode.vgs - diode.vdsat,
            },
        ],
        pass: false,
    };
    Ok(report.finish(min_headroom))
}

/// Headroom accounting for the transconductance half-circuit.
pub fn tc_half_headroom(
    p: &TcHalfParams,
    process: &ProcessParams,
    min_headroom: f64,
) -> Result<HeadroomReport, ModelError> {
    p.validate()?;
    let diode = devmodel::small_signal(&p.m3m, &MosBias::new(p.i_main), process)?;
    let tail = devmodel::small_signal(&p.m3, &MosBias::new(p.i_main), process)?;
    let m1 = if p.dtmos {
        devmodel::small_signal_bulk_tied(&p.m1, p.i_main, process)?
    } else {
        devmodel::small_signal(&p.m1, &MosBias::new(p.i_main), process)?
    };
    let out_diode = devmodel::small_signal(&p.out_mirror, &MosBias::new(p.i_main), process)?;
    let out_dev = devmodel::small_signal(
        &p.out_mirror_scaled(),
        &MosBias::new(p.i_main * p.mirror_ratio),
        process,
    )?;

    let v_de = p.i_main * p.r_de;
    let v_dio = diode.vgs + v_de;
    // Source of the input device: common mode plus its gate-source drop.
    let v_s1 = p.v_in_cm + m1.vgs;
    // The output-mirror diode pins the input device's drain.
    let v_d1 = out_diode.vgs;
    let report = HeadroomReport {
        v_dio,
        headroom_diode: p.vdd - v_dio,
        v_de,
        sat_margins: vec![
            SatMargin {
                device: "M1".into(),
                margin: (v_s1 - v_d1) - m1.vdsat,
            },
            SatMargin {
                device: "MT".into(),
                margin: (p.vdd - v_de - v_s1) - tail.vdsat,
            },
            SatMargin {
                device: "MTM".into(),
                margin: diode.vgs - diode.vdsat,
            },
            SatMargin {
                device: "MDIN".into(),
                margin: out_diode.vgs - out_diode.vdsat,
            },
            SatMargin {
                device: "MDOUT".into(),
                margin: (p.vdd - p.mirror_ratio * p.i_main * p.r_d) - out_dev.vdsat,
            },
        ],
        pass: false,
    };
    Ok(report.finish(min_headroom))
}
