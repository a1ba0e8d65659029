//! Circuit data model, SPICE-subset text parser, serializer, and validator.
//!
//! The grammar is line oriented. The first line is always the title; `*`
//! starts a comment; `.end` terminates. Identifiers are case-insensitive
//! and canonicalized (node names to lowercase, element labels to
//! uppercase). Ground is the node named `0` and always exists at index 0.
//!
//! ```text
//! R<label> n1 n2 <value>
//! C<label> n1 n2 <value>
//! M<label> nd ng ns nb W=<v> L=<v> ID=<v> [STACK=<int>] [P] [DTMOS]
//!          [VSB=<v>] [VDS=<v>] [GDS=<v>] [MODEL=<name>]
//! E<label> out ref in+ in- GAIN=<v> [POLE=<v>] [VNOISE=<v>]
//! V<label> n1 n2 DC=<v> [AC=<v>]
//! I<label> n1 n2 DC=<v> [AC=<v>]
//! .loopgain E<label>
//! .noise out=<node> in=<src> [exclude=<label>,<label>,...]
//! .end
//! ```
//!
//! Values accept the engineering suffixes `f p n u m k meg g`.

mod parser;

pub use parser::{parse_netlist, parse_value};

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::devmodel::{MosBias, MosGeometry};

/// Diagnostic severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// A positioned, printable diagnostic. Parse-time diagnostics carry a
/// line/column; validation diagnostics carry the element label instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// 1-based line, 0 when not tied to source text.
    pub line: usize,
    /// 1-based column, 0 when not tied to source text.
    pub col: usize,
    /// Offending element label, when known.
    pub label: Option<String>,
}

impl Diagnostic {
    pub fn error(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
            line,
            col,
            label: None,
        }
    }

    pub fn warning(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
            line,
            col,
            label: None,
        }
    }

    pub fn for_element(severity: Severity, label: &str, message: impl Into<String>) -> Self {
        Self {
            severity,
            message: message.into(),
            line: 0,
            col: 0,
            label: Some(label.to_string()),
        }
    }

    /// Render as `file:line:col: severity: message`.
    pub fn display_with_file(&self, file: &str) -> String {
        let subject = match &self.label {
            Some(label) => format!(" [{label}]"),
            None => String::new(),
        };
        format!(
            "{file}:{}:{}: {}: {}{}",
            self.line, self.col, self.severity, self.message, subject
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with_file("<netlist>"))
    }
}

/// Dense node identifier; ground is always `NodeId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const GROUND: NodeId = NodeId(0);

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }
}

/// Channel polarity of a MOS element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Polarity {
    Nmos,
    Pmos,
}

/// What an element is, together with its physical values.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor {
        ohms: f64,
    },
    Capacitor {
        farads: f64,
    },
    Mosfet {
        geometry: MosGeometry,
        bias: MosBias,
        polarity: Polarity,
        /// Bulk tied to gate: boosts the gate path by gmb and adds the
        /// bulk-junction capacitance at the gate node.
        dtmos: bool,
        /// Output conductance override (S); zero keeps the ideal device.
        gds: f64,
        /// Optional named process model; the default model applies when absent.
        model: Option<String>,
    },
    VSource {
        dc: f64,
        ac_mag: f64,
    },
    ISource {
        dc: f64,
        ac_mag: f64,
    },
    MacroAmp {
        dc_gain: f64,
        pole_hz: Option<f64>,
        /// White input-referred voltage noise PSD (V²/Hz).
        input_noise_psd: f64,
    },
}

impl ElementKind {
    /// Number of terminals this kind requires.
    pub fn terminal_count(&self) -> usize {
        match self {
            ElementKind::Mosfet { .. } => 4,
            ElementKind::MacroAmp { .. } => 4,
            _ => 2,
        }
    }

    pub fn type_letter(&self) -> char {
        match self {
            ElementKind::Resistor { .. } => 'R',
            ElementKind::Capacitor { .. } => 'C',
            ElementKind::Mosfet { .. } => 'M',
            ElementKind::VSource { .. } => 'V',
            ElementKind::ISource { .. } => 'I',
            ElementKind::MacroAmp { .. } => 'E',
        }
    }
}

/// One circuit element. Terminal order is fixed per kind:
/// two-terminal kinds use `[n1, n2]`, MOSFETs `[d, g, s, b]`, macro
/// amplifiers `[out, ref, in+, in−]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub label: String,
    pub kind: ElementKind,
    pub terminals: Vec<NodeId>,
}

/// Analysis hints embedded in the netlist.
#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    /// Loop-gain target: the labeled controlled source is suspended and a
    /// unit signal injected at its output port.
    LoopGain { amp: String },
    /// Noise output node and input source, plus labels whose noise is
    /// excluded from the superposition sum.
    Noise {
        out: String,
        input: String,
        exclude: Vec<String>,
    },
}

/// Parsed or programmatically built circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub title: String,
    node_names: Vec<String>,
    pub elements: Vec<Element>,
    pub directives: Vec<Directive>,
}

impl Circuit {
    /// Empty circuit containing only ground.
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            node_names: vec!["0".to_string()],
            elements: Vec::new(),
            directives: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.node_names[id.0]
    }

    /// Look up a node by (case-insensitive) name.
    pub fn node(&self, name: &str) -> Option<NodeId> {
        let canon = name.to_ascii_lowercase();
        self.node_names.iter().position(|n| *n == canon).map(NodeId)
    }

    /// Fetch or create the node with the given name.
    pub fn node_or_insert(&mut self, name: &str) -> NodeId {
        let canon = name.to_ascii_lowercase();
        if let Some(idx) = self.node_names.iter().position(|n| *n == canon) {
            return NodeId(idx);
        }
        self.node_names.push(canon);
        NodeId(self.node_names.len() - 1)
    }

    /// Look up an element by (case-insensitive) label.
    pub fn element(&self, label: &str) -> Option<&Element> {
        let canon = label.to_ascii_uppercase();
        self.elements.iter().find(|e| e.label == canon)
    }

    pub fn element_index(&self, label: &str) -> Option<usize> {
        let canon = label.to_ascii_uppercase();
        self.elements.iter().position(|e| e.label == canon)
    }

    /// Push an element whose terminals are given by node name. Labels are
    /// canonicalized to uppercase. Panics on terminal-count mismatch; use
    /// [`validate`](Self::validate) for full checking.
    pub fn add_element(&mut self, label: &str, kind: ElementKind, terminals: &[&str]) {
        assert_eq!(
            terminals.len(),
            kind.terminal_count(),
            "terminal count for {label}"
        );
        let ids: Vec<NodeId> = terminals.iter().map(|n| self.node_or_insert(n)).collect();
        self.elements.push(Element {
            label: label.to_ascii_uppercase(),
            kind,
            terminals: ids,
        });
    }

    /// The noise directive, if one is present.
    pub fn noise_directive(&self) -> Option<(&str, &str, &[String])> {
        self.directives.iter().find_map(|d| match d {
            Directive::Noise {
                out,
                input,
                exclude,
            } => Some((out.as_str(), input.as_str(), exclude.as_slice())),
            _ => None,
        })
    }

    /// The loop-gain directive target, if one is present.
    pub fn loopgain_directive(&self) -> Option<&str> {
        self.directives.iter().find_map(|d| match d {
            Directive::LoopGain { amp } => Some(amp.as_str()),
            _ => None,
        })
    }

    /// Serialize to canonical netlist text. `parse(serialize(c))` is
    /// structurally equal to `c`, and serialization of a parsed circuit is
    /// idempotent. Numeric values print in shortest round-trip scientific
    /// form; the title line is preserved byte-exactly.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.title);
        out.push('\n');
        for e in &self.elements {
            let t = |i: usize| self.node_name(e.terminals[i]);
            match &e.kind {
                ElementKind::Resistor { ohms } => {
                    out.push_str(&format!("{} {} {} {:e}\n", e.label, t(0), t(1), ohms));
                }
                ElementKind::Capacitor { farads } => {
                    out.push_str(&format!("{} {} {} {:e}\n", e.label, t(0), t(1), farads));
                }
                ElementKind::Mosfet {
                    geometry,
                    bias,
                    polarity,
                    dtmos,
                    gds,
                    model,
                } => {
                    out.push_str(&format!(
                        "{} {} {} {} {} W={:e} L={:e} ID={:e}",
                        e.label,
                        t(0),
                        t(1),
                        t(2),
                        t(3),
                        geometry.width,
                        geometry.length,
                        bias.id
                    ));
                    if geometry.series_stack != 1 {
                        out.push_str(&format!(" STACK={}", geometry.series_stack));
                    }
                    if bias.vsb != 0.0 {
                        out.push_str(&format!(" VSB={:e}", bias.vsb));
                    }
                    if bias.vds != 0.0 {
                        out.push_str(&format!(" VDS={:e}", bias.vds));
                    }
                    if *gds != 0.0 {
                        out.push_str(&format!(" GDS={:e}", gds));
                    }
                    if let Some(model) = model {
                        out.push_str(&format!(" MODEL={model}"));
                    }
                    if *polarity == Polarity::Pmos {
                        out.push_str(" P");
                    }
                    if *dtmos {
                        out.push_str(" DTMOS");
                    }
                    out.push('\n');
                }
                ElementKind::VSource { dc, ac_mag } | ElementKind::ISource { dc, ac_mag } => {
                    out.push_str(&format!("{} {} {} DC={:e}", e.label, t(0), t(1), dc));
                    if *ac_mag != 0.0 {
                        out.push_str(&format!(" AC={:e}", ac_mag));
                    }
                    out.push('\n');
                }
                ElementKind::MacroAmp {
                    dc_gain,
                    pole_hz,
                    input_noise_psd,
                } => {
                    out.push_str(&format!(
                        "{} {} {} {} {} GAIN={:e}",
                        e.label,
                        t(0),
                        t(1),
                        t(2),
                        t(3),
                        dc_gain
                    ));
                    if let Some(pole) = pole_hz {
                        out.push_str(&format!(" POLE={:e}", pole));
                    }
                    if *input_noise_psd != 0.0 {
                        out.push_str(&format!(" VNOISE={:e}", input_noise_psd));
                    }
                    out.push('\n');
                }
            }
        }
        for d in &self.directives {
            match d {
                Directive::LoopGain { amp } => out.push_str(&format!(".loopgain {amp}\n")),
                Directive::Noise {
                    out: o,
                    input,
                    exclude,
                } => {
                    if exclude.is_empty() {
                        out.push_str(&format!(".noise out={o} in={input}\n"));
                    } else {
                        out.push_str(&format!(
                            ".noise out={o} in={input} exclude={}\n",
                            exclude.join(",")
                        ));
                    }
                }
            }
        }
        out.push_str(".end\n");
        out
    }

    /// Check every structural invariant; an empty list means the circuit is
    /// sound. Warnings do not block analysis.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut seen = BTreeMap::new();
        for e in &self.elements {
            if let Some(_first) = seen.insert(e.label.clone(), ()) {
                diags.push(Diagnostic::for_element(
                    Severity::Error,
                    &e.label,
                    "duplicate element label",
                ));
            }
            if e.terminals.len() != e.kind.terminal_count() {
                diags.push(Diagnostic::for_element(
                    Severity::Error,
                    &e.label,
                    format!(
                        "expected {} terminals, found {}",
                        e.kind.terminal_count(),
                        e.terminals.len()
                    ),
                ));
                continue;
            }
            match &e.kind {
                ElementKind::Resistor { ohms } => {
                    if !ohms.is_finite() || *ohms <= 0.0 {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            format!("resistance must be > 0, got {ohms}"),
                        ));
                    }
                }
                ElementKind::Capacitor { farads } => {
                    if !farads.is_finite() || *farads <= 0.0 {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            format!("capacitance must be > 0, got {farads}"),
                        ));
                    }
                }
                ElementKind::Mosfet {
                    geometry,
                    bias,
                    dtmos,
                    ..
                } => {
                    if let Err(err) = geometry.validate() {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            err.to_string(),
                        ));
                    }
                    if !bias.id.is_finite() || bias.id <= 0.0 {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            format!("drain current must be > 0, got {}", bias.id),
                        ));
                    }
                    if *dtmos && e.terminals[3] != e.terminals[1] {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            "DTMOS requires the bulk terminal tied to the gate",
                        ));
                    }
                }
                ElementKind::MacroAmp {
                    dc_gain,
                    pole_hz,
                    input_noise_psd,
                } => {
                    if !dc_gain.is_finite() || *dc_gain == 0.0 {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            "macro amplifier gain must be nonzero",
                        ));
                    }
                    if let Some(pole) = pole_hz {
                        if !pole.is_finite() || *pole <= 0.0 {
                            diags.push(Diagnostic::for_element(
                                Severity::Error,
                                &e.label,
                                format!("pole must be > 0, got {pole}"),
                            ));
                        }
                    }
                    if *input_noise_psd < 0.0 {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            "input noise PSD must be ≥ 0",
                        ));
                    }
                }
                ElementKind::VSource { .. } | ElementKind::ISource { .. } => {}
            }
        }

        // Connectivity: at least one ground-connected element; non-ground
        // nodes touched by fewer than two terminals are dangling.
        let mut touch_count = vec![0usize; self.node_count()];
        for e in &self.elements {
            for t in &e.terminals {
                touch_count[t.0] += 1;
            }
        }
        if !self.elements.is_empty() && touch_count[0] == 0 {
            diags.push(Diagnostic::error(0, 0, "no element connects to ground"));
        }
        for (idx, count) in touch_count.iter().enumerate().skip(1) {
            if *count == 1 {
                diags.push(Diagnostic::warning(
                    0,
                    0,
                    format!(
                        "node '{}' is floating (single connection)",
                        self.node_names[idx]
                    ),
                ));
            }
        }

        for d in &self.directives {
            match d {
                Directive::LoopGain { amp } => match self.element(amp) {
                    None => diags.push(Diagnostic::error(
                        0,
                        0,
                        format!(".loopgain target '{amp}' not found"),
                    )),
                    Some(e) if !matches!(e.kind, ElementKind::MacroAmp { .. }) => {
                        diags.push(Diagnostic::for_element(
                            Severity::Error,
                            &e.label,
                            ".loopgain target is not a controlled source",
                        ));
                    }
                    _ => {}
                },
                Directive::Noise {
                    out,
                    input,
                    exclude,
                } => {
                    if self.node(out).is_none() {
                        diags.push(Diagnostic::error(
                            0,
                            0,
                            format!(".noise output node '{out}' not found"),
                        ));
                    }
                    if self.element(input).is_none() {
                        diags.push(Diagnostic::error(
                            0,
                            0,
                            format!(".noise input source '{input}' not found"),
                        ));
                    }
                    for label in exclude {
                        if self.element(label).is_none() {
                            diags.push(Diagnostic::error(
                                0,
                                0,
                                format!(".noise exclude label '{label}' not found"),
                            ));
                        }
                    }
                }
            }
        }
        diags
    }

    /// True when validation reports no error-severity diagnostics.
    pub fn is_sound(&self) -> bool {
        self.validate()
            .iter()
            .all(|d| d.severity != Severity::Error)
    }
}
