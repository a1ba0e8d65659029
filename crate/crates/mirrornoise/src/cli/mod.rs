//! Command-line front end.
//!
//! Subcommands: `analyze`, `noise`, `zin`, `loopgain`, `sweep`,
//! `optimize`, `topo`, `oracle`, `plot`. Data goes to standard output (or
//! the `--out` file for `plot`); diagnostics go to standard error.
//!
//! Exit codes: 0 success, 1 usage error, 2 netlist/config parse error,
//! 3 numerical failure, 4 infeasible optimization.

pub mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::devmodel::{ModelError, MosGeometry, ProcessParams};
use crate::mna::{self, MnaError, ModelContext};
use crate::netlist::{parse_netlist, parse_value, Circuit, Severity};
use crate::oracles;
use crate::sweep_opt::{self, SweepError};
use crate::topologies::{
    build_full_ia, build_mirror, build_tc_half, FullIaParams, InputDrive, MacroAmpSpec, MirrorKind,
    MirrorTopoParams, TcHalfParams,
};

/// Environment variable capping the worker count (0 = automatic).
pub const THREADS_ENV: &str = "MIRRORNOISE_THREADS";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Parse(String),
    Numerical(String),
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Parse(m)
            | CliError::Numerical(m)
            | CliError::Infeasible(m) => m,
        }
    }
}

impl From<MnaError> for CliError {
    fn from(e: MnaError) -> Self {
        match &e {
            MnaError::SingularMatrix { .. } => CliError::Numerical(e.to_string()),
            MnaError::Model(ModelError::NoConvergence { .. }) => CliError::Numerical(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        fn classify(e: &SweepError) -> i32 {
            match e {
                SweepError::Infeasible { .. } => 4,
                SweepError::Model(ModelError::NoConvergence { .. }) => 3,
                SweepError::Mna(MnaError::SingularMatrix { .. }) => 3,
                SweepError::AtValue { source, .. } => classify(source),
                _ => 2,
            }
        }
        match classify(&e) {
            4 => CliError::Infeasible(e.to_string()),
            3 => CliError::Numerical(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

fn eng(s: &str) -> Result<f64, String> {
    parse_value(s)
}

#[derive(Parser)]
#[command(
    name = "mirrornoise",
    version,
    about = "Small-signal AC, noise, impedance, and design-space analysis for current mirrors \
             and instrumentation amplifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Start frequency (engineering suffixes accepted).
    #[arg(long, value_parser = eng, default_value = "1")]
    fstart: f64,
    /// Stop frequency.
    #[arg(long, value_parser = eng, default_value = "10meg")]
    fstop: f64,
    /// Number of logarithmically spaced points (endpoints inclusive).
    #[arg(long, default_value_t = 61)]
    points: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>, CliError> {
        if self.fstart <= 0.0 || self.fstop <= self.fstart {
            return Err(CliError::Usage(format!(
                "need 0 < fstart < fstop, got {} and {}",
                self.fstart, self.fstop
            )));
        }
        Ok(mna::log_grid(self.fstart, self.fstop, self.points))
    }
}

#[derive(Subcommand)]
enum Command {
    /// AC transfer from a source to a node, as CSV.
    Analyze {
        netlist: PathBuf,
        /// Input source label (must carry an AC magnitude).
        #[arg(long = "in")]
        input: String,
        /// Output node name.
        #[arg(long)]
        out: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Process parameter file (key=value).
        #[arg(long)]
        process: Option<PathBuf>,
    },
    /// Per-source output noise and input-referred totals.
    Noise {
        netlist: PathBuf,
        /// Output node (defaults to the .noise directive).
        #[arg(long)]
        out: Option<String>,
        /// Input source for referral (defaults to the .noise directive).
        #[arg(long = "in")]
        input: Option<String>,
        /// Single-frequency breakdown instead of a grid sweep.
        #[arg(long, value_parser = eng)]
        spot: Option<f64>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        process: Option<PathBuf>,
    },
    /// Input impedance across a port, as CSV.
    Zin {
        netlist: PathBuf,
        /// Port as two comma-separated node names.
        #[arg(long)]
        port: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        process: Option<PathBuf>,
    },
    /// Loop gain of the controlled source named by .loopgain, as CSV.
    Loopgain {
        netlist: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        process: Option<PathBuf>,
    },
    /// Run a sweep described by a JSON spec; CSV to stdout.
    Sweep { spec: PathBuf },
    /// Run the constrained design search; JSON to stdout.
    Optimize { spec: PathBuf },
    /// Emit the netlist of a built-in topology.
    Topo {
        /// One of: conventional, sdcm, tc-half, full-ia.
        kind: String,
        /// key=value parameter file; missing keys use the defaults.
        params: PathBuf,
    },
    /// Evaluate a closed-form expression; JSON to stdout.
    Oracle {
        /// One of: cm_noise, sdcm_gm, sdcm_noise, ia_noise, dtmos_ratio,
        /// appendix, iso_power, nef.
        name: String,
        /// key=value arguments (engineering suffixes accepted).
        args: Vec<String>,
    },
    /// Render a CSV table to a self-contained SVG chart.
    Plot {
        csv: PathBuf,
        /// x column name.
        #[arg(long)]
        x: String,
        /// Comma-separated y column names.
        #[arg(long)]
        y: String,
        #[arg(long)]
        logx: bool,
        #[arg(long)]
        logy: bool,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_circuit(path: &Path) -> Result<Circuit, CliError> {
    let text = read_file(path)?;
    let circuit = parse_netlist(&text)
        .map_err(|d| CliError::Parse(d.display_with_file(&path.display().to_string())))?;
    let mut errors = 0;
    for d in circuit.validate() {
        eprintln!("{}", d.display_with_file(&path.display().to_string()));
        if d.severity == Severity::Error {
            errors += 1;
        }
    }
    if errors > 0 {
        return Err(CliError::Parse(format!("{errors} validation error(s)")));
    }
    Ok(circuit)
}

fn load_context(process: &Option<PathBuf>) -> Result<ModelContext, CliError> {
    let params = match process {
        None => ProcessParams::default(),
        Some(path) => ProcessParams::from_key_values(&read_file(path)?)?,
    };
    Ok(ModelContext::new(params))
}

/// key=value argument list with engineering-notation values.
struct KeyValues(Vec<(String, f64)>);

impl KeyValues {
    fn parse(args: &[String]) -> Result<Self, CliError> {
        let mut out = Vec::new();
        for a in args {
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{a}'")))?;
            let value = parse_value(v).map_err(|e| CliError::Parse(format!("{k}: {e}")))?;
            out.push((k.trim().to_ascii_lowercase(), value));
        }
        Ok(Self(out))
    }

    fn get(&self, key: &str) -> Option<f64> {
        self.0.iter().rev().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    fn require(&self, key: &str) -> Result<f64, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::Usage(format!("missing {key}=")))
    }

    fn check_known(&self, known: &[&str]) -> Result<(), CliError> {
        for (k, _) in &self.0 {
            if !known.contains(&k.as_str()) {
                return Err(CliError::Parse(format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }
}

fn run_oracle(name: &str, args: &[String]) -> Result<String, CliError> {
    let kv = KeyValues::parse(args)?;
    let temperature = kv.get("temperature").unwrap_or(300.0);
    let gamma = kv.get("gamma").unwrap_or(1.0);
    let json = match name {
        "cm_noise" => {
            kv.check_known(&["gm3", "r_d", "gamma", "temperature"])?;
            let p = oracles::MirrorParams {
                gm3: kv.require("gm3")?,
                r_de: 0.0,
                r_d: kv.require("r_d")?,
                gamma_noise: gamma,
                temperature,
            };
            let total = oracles::cm_output_noise(&p);
            serde_json::json!({ "total_v2hz": total, "density_v_rthz": total.sqrt() })
        }
        "sdcm_gm" => {
            kv.check_known(&["gm3", "r_de"])?;
            let eff = oracles::sdcm_effective_gm(kv.require("gm3")?, kv.require("r_de")?);
            serde_json::json!({
                "exact": eff.exact,
                "approx": eff.approx,
                "approx_rel_err": eff.approx_rel_err,
            })
        }
        "sdcm_noise" => {
            kv.check_known(&["gm3", "r_de", "r_d", "gamma", "temperature"])?;
            let p = oracles::MirrorParams {
                gm3: kv.require("gm3")?,
                r_de: kv.require("r_de")?,
                r_d: kv.require("r_d")?,
                gamma_noise: gamma,
                temperature,
            };
            let (exact, approx) = oracles::sdcm_output_noise(&p);
            serde_json::json!({
                "exact_v2hz": exact,
                "approx_v2hz": approx,
                "current_psd_a2hz": oracles::sdcm_output_current_noise(&p),
            })
        }
        "ia_noise" => {
            kv.check_known(&["gm1", "gm3", "r_in", "gamma", "temperature"])?;
            let p = oracles::IaNoiseParams {
                gm1: kv.require("gm1")?,
                gm3: kv.require("gm3")?,
                r_in: kv.require("r_in")?,
                gamma_noise: gamma,
                temperature,
            };
            let total = oracles::ia_input_noise(&p);
            serde_json::json!({ "total_v2hz": total, "density_v_rthz": total.sqrt() })
        }
        "dtmos_ratio" => {
            kv.check_known(&["gm", "gmb"])?;
            let ratio = oracles::dtmos_noise_ratio(kv.require("gm")?, kv.require("gmb")?);
            serde_json::json!({ "ratio": ratio, "rms_reduction": 1.0 - ratio })
        }
        "appendix" => {
            kv.check_known(&["gm3", "r_de"])?;
            let (h_rde, h_m3) =
                oracles::appendix_transfers(kv.require("gm3")?, kv.require("r_de")?);
            serde_json::json!({ "h_rde": h_rde, "h_m3": h_m3, "sum": h_rde + h_m3 })
        }
        "iso_power" => {
            kv.check_known(&["noise_ratio"])?;
            let ratio = sweep_opt::iso_noise_power_ratio(kv.require("noise_ratio")?)?;
            serde_json::json!({ "power_ratio": ratio, "power_saving": 1.0 - ratio })
        }
        "nef" => {
            kv.check_known(&["v_rms", "i_total", "bandwidth", "temperature"])?;
            let p = ProcessParams {
                temperature,
                ..ProcessParams::default()
            };
            let value = sweep_opt::nef(
                kv.require("v_rms")?,
                kv.require("i_total")?,
                kv.require("bandwidth")?,
                &p,
            );
            serde_json::json!({ "nef": value })
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown oracle '{other}' (try cm_noise, sdcm_gm, sdcm_noise, ia_noise, \
                 dtmos_ratio, appendix, iso_power, nef)"
            )))
        }
    };
    Ok(format!("{json}"))
}

fn geometry(kv: &KeyValues, w: &str, l: &str, stack: &str, base: MosGeometry) -> MosGeometry {
    MosGeometry {
        width: kv.get(w).unwrap_or(base.width),
        length: kv.get(l).unwrap_or(base.length),
        series_stack: kv.get(stack).map(|v| v as u32).unwrap_or(base.series_stack),
    }
}

fn run_topo(kind: &str, params: &Path) -> Result<String, CliError> {
    let text = read_file(params)?;
    let pairs: Vec<String> = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.replace(char::is_whitespace, ""))
        .collect();
    let kv = KeyValues::parse(&pairs)?;
    let circuit = match kind {
        "conventional" | "sdcm" => {
            kv.check_known(&[
                "w3", "l3", "stack3", "w3m", "l3m", "stackm", "r_de", "r_d", "i_d", "vdd",
            ])?;
            let mut p = if kind == "sdcm" {
                MirrorTopoParams::sdcm(kv.get("r_de").unwrap_or(50.0e3))
            } else {
                MirrorTopoParams::conventional(kv.get("l3").unwrap_or(1.0e-6))
            };
            p.mirror_geom = geometry(&kv, "w3", "l3", "stack3", p.mirror_geom);
            p.diode_geom = geometry(&kv, "w3m", "l3m", "stackm", p.diode_geom);
            if kind == "conventional" {
                p.r_de = 0.0;
                p.kind = MirrorKind::Conventional;
            }
            p.r_d = kv.get("r_d").unwrap_or(p.r_d);
            p.i_d = kv.get("i_d").unwrap_or(p.i_d);
            p.vdd = kv.get("vdd").unwrap_or(p.vdd);
            build_mirror(&p)?
        }
        "tc-half" => {
            kv.check_known(&[
                "w1",
                "l1",
                "stack1",
                "dtmos",
                "i_main",
                "w3",
                "l3",
                "w3m",
                "l3m",
                "r_de",
                "r_in",
                "mirror_ratio",
                "w_out",
                "l_out",
                "r_d",
                "c_gate",
                "vdd",
                "v_in_cm",
                "open_input",
            ])?;
            let mut p = TcHalfParams::default();
            p.m1 = geometry(&kv, "w1", "l1", "stack1", p.m1);
            p.m3 = geometry(&kv, "w3", "l3", "stack3", p.m3);
            p.m3m = geometry(&kv, "w3m", "l3m", "stackm", p.m3m);
            p.out_mirror = geometry(&kv, "w_out", "l_out", "stack_out", p.out_mirror);
            p.dtmos = kv.get("dtmos").unwrap_or(0.0) != 0.0;
            p.i_main = kv.get("i_main").unwrap_or(p.i_main);
            p.r_de = kv.get("r_de").unwrap_or(p.r_de);
            p.r_in = kv.get("r_in").unwrap_or(p.r_in);
            p.mirror_ratio = kv.get("mirror_ratio").unwrap_or(p.mirror_ratio);
            p.r_d = kv.get("r_d").unwrap_or(p.r_d);
            p.c_gate = kv.get("c_gate").unwrap_or(p.c_gate);
            p.vdd = kv.get("vdd").unwrap_or(p.vdd);
            p.v_in_cm = kv.get("v_in_cm").unwrap_or(p.v_in_cm);
            if kv.get("open_input").unwrap_or(0.0) != 0.0 {
                p.input_drive = InputDrive::Open;
            }
            build_tc_half(&p)?
        }
        "full-ia" => {
            kv.check_known(&[
                "w1",
                "l1",
                "dtmos",
                "r_in",
                "r_out_ratio",
                "mirror_ratio",
                "r_de",
                "c_lc",
                "c_gate",
                "r_cascode",
                "i_main",
                "i_m2",
                "ag_gain",
                "ag_pole",
                "ar_gain",
                "ar_pole",
                "ac_gain",
                "ac_pole",
                "vdd",
                "open_input",
            ])?;
            let mut p = FullIaParams::default();
            p.m1 = geometry(&kv, "w1", "l1", "stack1", p.m1);
            p.dtmos = kv.get("dtmos").map(|v| v != 0.0).unwrap_or(p.dtmos);
            p.r_in = kv.get("r_in").unwrap_or(p.r_in);
            p.r_out_ratio = kv.get("r_out_ratio").unwrap_or(p.r_out_ratio);
            p.mirror_ratio = kv.get("mirror_ratio").unwrap_or(p.mirror_ratio);
            p.r_de = kv.get("r_de").unwrap_or(p.r_de);
            p.c_lc = kv.get("c_lc").unwrap_or(p.c_lc);
            p.c_gate = kv.get("c_gate").unwrap_or(p.c_gate);
            p.r_cascode = kv.get("r_cascode").unwrap_or(p.r_cascode);
            p.i_main = kv.get("i_main").unwrap_or(p.i_main);
            p.i_m2 = kv.get("i_m2").unwrap_or(p.i_m2);
            p.amp_ag = MacroAmpSpec {
                gain: kv.get("ag_gain").unwrap_or(p.amp_ag.gain),
                pole_hz: Some(
                    kv.get("ag_pole")
                        .unwrap_or(p.amp_ag.pole_hz.unwrap_or(1.0e6)),
                ),
                vnoise: p.amp_ag.vnoise,
            };
            p.amp_ar = MacroAmpSpec {
                gain: kv.get("ar_gain").unwrap_or(p.amp_ar.gain),
                pole_hz: Some(
                    kv.get("ar_pole")
                        .unwrap_or(p.amp_ar.pole_hz.unwrap_or(1.0e5)),
                ),
                vnoise: p.amp_ar.vnoise,
            };
            p.amp_ac = MacroAmpSpec {
                gain: kv.get("ac_gain").unwrap_or(p.amp_ac.gain),
                pole_hz: Some(
                    kv.get("ac_pole")
                        .unwrap_or(p.amp_ac.pole_hz.unwrap_or(1.0e5)),
                ),
                vnoise: p.amp_ac.vnoise,
            };
            p.vdd = kv.get("vdd").unwrap_or(p.vdd);
            if kv.get("open_input").unwrap_or(0.0) != 0.0 {
                p.input_drive = InputDrive::Open;
            }
            build_full_ia(&p)?
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown topology '{other}' (try conventional, sdcm, tc-half, full-ia)"
            )))
        }
    };
    Ok(circuit.serialize())
}

fn spot_breakdown(report: &mna::NoiseReport) -> String {
    let mut out = String::from("source,psd_v2hz,fraction\n");
    for (name, frac) in report.breakdown_at(0) {
        let psd = report
            .contributions
            .iter()
            .find(|c| format!("{}_{}", c.label.to_ascii_lowercase(), c.mechanism) == name)
            .map(|c| c.psd[0])
            .unwrap_or(0.0);
        let _ = writeln!(out, "{name},{psd:e},{frac:.3}");
    }
    let _ = writeln!(out, "total,{:e},{:.3}", report.total[0], 1.0);
    let _ = writeln!(out, "input_referred,{:e},", report.input_referred[0]);
    out
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze {
            netlist,
            input,
            out,
            grid,
            process,
        } => {
            let circuit = load_circuit(&netlist)?;
            let ctx = load_context(&process)?;
            let prep = mna::prepare(&circuit, &ctx)?;
            let ac = prep.solve_ac(&input, &out, &grid.grid()?)?;
            print!("{}", ac.to_csv());
            Ok(())
        }
        Command::Noise {
            netlist,
            out,
            input,
            spot,
            grid,
            process,
        } => {
            let circuit = load_circuit(&netlist)?;
            let ctx = load_context(&process)?;
            let prep = mna::prepare(&circuit, &ctx)?;
            let freqs = match spot {
                Some(f) => vec![f],
                None => grid.grid()?,
            };
            let report = prep.noise_at_output(out.as_deref(), input.as_deref(), None, &freqs)?;
            if report.zero_gain {
                eprintln!("warning: zero gain at one or more points; input referral undefined");
            }
            if spot.is_some() {
                print!("{}", spot_breakdown(&report));
            } else {
                print!("{}", report.to_csv());
            }
            Ok(())
        }
        Command::Zin {
            netlist,
            port,
            grid,
            process,
        } => {
            let (a, b) = port
                .split_once(',')
                .ok_or_else(|| CliError::Usage("--port needs n1,n2".to_string()))?;
            let circuit = load_circuit(&netlist)?;
            let ctx = load_context(&process)?;
            let prep = mna::prepare(&circuit, &ctx)?;
            let z = prep.input_impedance((a.trim(), b.trim()), &grid.grid()?)?;
            print!("{}", z.to_impedance_csv());
            Ok(())
        }
        Command::Loopgain {
            netlist,
            grid,
            process,
        } => {
            let circuit = load_circuit(&netlist)?;
            let ctx = load_context(&process)?;
            let prep = mna::prepare(&circuit, &ctx)?;
            let t = prep.loop_gain(&grid.grid()?)?;
            print!("{}", t.to_csv());
            Ok(())
        }
        Command::Sweep { spec } => {
            let spec = sweep_opt::SweepSpec::from_json(&read_file(&spec)?)?;
            let table = sweep_opt::run_sweep(&spec)?;
            print!("{}", table.to_csv());
            Ok(())
        }
        Command::Optimize { spec } => {
            let spec = sweep_opt::DesignSpec::from_json(&read_file(&spec)?)?;
            let optimum = sweep_opt::optimize(&spec)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&optimum)
                    .map_err(|e| CliError::Parse(e.to_string()))?
            );
            Ok(())
        }
        Command::Topo { kind, params } => {
            print!("{}", run_topo(&kind, &params)?);
            Ok(())
        }
        Command::Oracle { name, args } => {
            println!("{}", run_oracle(&name, &args)?);
            Ok(())
        }
        Command::Plot {
            csv,
            x,
            y,
            logx,
            logy,
            out,
        } => {
            let table = plot::CsvTable::parse(&read_file(&csv)?)
                .map_err(|e| CliError::Parse(e.to_string()))?;
            let spec = plot::PlotSpec {
                x,
                y: y.split(',').map(|s| s.trim().to_string()).collect(),
                logx,
                logy,
            };
            let svg = emit_svg_checked(&table, &spec)?;
            std::fs::write(&out, svg)
                .map_err(|e| CliError::Parse(format!("{}: {e}", out.display())))?;
            Ok(())
        }
    }
}

fn emit_svg_checked(table: &plot::CsvTable, spec: &plot::PlotSpec) -> Result<String, CliError> {
    plot::emit_svg(table, spec).map_err(|e| match e {
        plot::PlotError::Csv(_) => CliError::Parse(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })
}

fn configure_threads() {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                // Ignore failure: the pool may already exist in-process.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        } else {
            eprintln!("warning: ignoring non-numeric {THREADS_ENV}={raw}");
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_sdcm_gm_example() {
        let out = run_oracle("sdcm_gm", &["gm3=18u".into(), "r_de=100k".into()]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let exact = v["exact"].as_f64().unwrap();
        let approx = v["approx"].as_f64().unwrap();
        assert!((exact - 6.4286e-6).abs() / 6.4286e-6 < 1e-4);
        assert!((approx - 1.0e-5).abs() < 1e-12);
    }

    #[test]
    fn oracle_iso_power_example() {
        let out = run_oracle("iso_power", &["noise_ratio=0.813".into()]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["power_ratio"].as_f64().unwrap() - 0.661).abs() < 1e-3);
        assert!((v["power_saving"].as_f64().unwrap() - 0.339).abs() < 1e-3);
    }

    #[test]
    fn oracle_rejects_unknown_name_and_keys() {
        assert!(matches!(run_oracle("nope", &[]), Err(CliError::Usage(_))));
        assert!(matches!(
            run_oracle("sdcm_gm", &["gm3=1u".into(), "bogus=2".into()]),
            Err(CliError::Parse(_))
        ));
    }

    #[test]
    fn oracle_dtmos_ratio() {
        let out = run_oracle("dtmos_ratio", &["gm=29.75u".into(), "gmb=6.272u".into()]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["ratio"].as_f64().unwrap() - 0.8259).abs() < 1e-3);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Parse(String::new()).exit_code(), 2);
        assert_eq!(CliError::Numerical(String::new()).exit_code(), 3);
        assert_eq!(CliError::Infeasible(String::new()).exit_code(), 4);
        let e: CliError = MnaError::SingularMatrix {
            freq: 1.0,
            pivot: 0,
        }
        .into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = SweepError::Infeasible {
            binding: "min_headroom_diode".into(),
        }
        .into();
        assert_eq!(e.exit_code(), 4);
    }
}
