//! Small-signal analysis toolkit for current mirrors and low-power
//! instrumentation amplifiers.
//!
//! The crate combines three views of the same circuits and keeps them in
//! agreement with each other:
//!
//! * [`devmodel`] — a continuous weak-to-strong-inversion MOS model with
//!   body effect, channel thermal noise, flicker noise, and resistor noise.
//! * [`oracles`] — closed-form expressions for mirror and amplifier noise
//!   (conventional mirror, source-degenerated mirror, input stage), used as
//!   independent references.
//! * [`mna`] — a complex-valued modified-nodal-analysis engine for AC
//!   transfer, loop gain, input impedance, and per-source noise
//!   superposition on parsed or programmatically built netlists.
//!
//! On top of those sit [`netlist`] (a SPICE-subset parser and serializer),
//! [`topologies`] (parameterized builders for the mirror, half-circuit, and
//! full amplifier structures plus headroom accounting), [`sweep_opt`]
//! (parameter sweeps and a constrained design optimizer), and [`cli`] (the
//! `mirrornoise` command-line front end).
//!
//! Start with the runnable examples in `examples/`; each one exercises a
//! major capability end to end.

pub mod cli;
pub mod devmodel;
pub mod mna;
pub mod netlist;
pub mod oracles;
pub mod sweep_opt;
pub mod topologies;

pub use devmodel::{MosBias, MosGeometry, ProcessParams, SmallSignal};
pub use mna::{AcResult, NoiseReport};
pub use netlist::{Circuit, Diagnostic, Element, ElementKind};
pub use topologies::{FullIaParams, HeadroomReport, MirrorKind, MirrorTopoParams, TcHalfParams};
