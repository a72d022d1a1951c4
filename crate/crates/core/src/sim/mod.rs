//! Simulation driver: builds decks, runs the external SPICE engine in batch
//! mode, and parses its ASCII raw output into typed results.

mod fft;
pub mod rawfile;

pub use fft::compute_fft;

use crate::analysis::AnalysisRequest;
use crate::circuit::{emit_netlist, CircuitError, CircuitIr};
use rawfile::{parse_ascii_rawfile, RawPlot};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Time,
    Frequency,
    Voltage,
}

/// Axis plus named signal vectors from one analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveformSeries {
    pub axis: Vec<f64>,
    pub axis_kind: AxisKind,
    pub signals: BTreeMap<String, Vec<f64>>,
}

impl WaveformSeries {
    pub fn signal(&self, name: &str) -> Option<&[f64]> {
        self.signals.get(&name.to_ascii_lowercase()).map(|v| v.as_slice())
    }

    /// Signal vector for a node, keyed `v(<net>)`.
    pub fn node(&self, net: &str) -> Option<&[f64]> {
        self.signal(&format!("v({})", net.to_ascii_lowercase()))
    }

    pub fn len(&self) -> usize {
        self.axis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MosRegionKind {
    Cutoff,
    Triode,
    Saturation,
}

/// Per-MOSFET operating-point telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceOp {
    pub id: f64,
    pub vgs: f64,
    pub vds: f64,
    pub vth: f64,
    pub gm: f64,
    pub gds: f64,
    pub region: MosRegionKind,
}

/// Typed simulation output.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimulationResult {
    pub node_voltages: BTreeMap<String, f64>,
    pub branch_currents: BTreeMap<String, f64>,
    pub devices: BTreeMap<String, DeviceOp>,
    pub series: BTreeMap<String, WaveformSeries>,
    pub engine_log: String,
    pub converged: bool,
}

impl SimulationResult {
    pub fn node_voltage(&self, net: &str) -> Option<f64> {
        self.node_voltages.get(&net.to_ascii_lowercase()).copied()
    }

    /// Branch current of a named V source (`i(v1)` style lookup).
    pub fn source_current(&self, refdes: &str) -> Option<f64> {
        self.branch_currents
            .get(&refdes.to_ascii_lowercase())
            .copied()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("no SPICE engine found: set engine_path in the config or ANALOGFORGE_SPICE")]
    EngineNotFound,
    #[error("engine timed out after {0:?}")]
    Timeout(Duration),
    #[error("engine failed (exit {code:?}): {log}")]
    EngineFailed { code: Option<i32>, log: String },
    #[error("deck: {0}")]
    Deck(#[from] CircuitError),
    #[error("raw output: {0}")]
    Raw(#[from] rawfile::RawParseError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("signal {0} not present in series")]
    MissingSignal(String),
    #[error("too few samples for FFT: {0} (< 16)")]
    TooFewSamples(usize),
    #[error("{0}")]
    Precondition(String),
}

/// Locates and invokes the external engine.
#[derive(Debug, Clone)]
pub struct SpiceRunner {
    pub engine_path: PathBuf,
    pub timeout: Duration,
}

fn find_in_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| p.is_file())
}

fn bundled_engine() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?;
    // Alongside the current binary, or one level up when running from
    // target/<profile>/deps (the test-binary layout).
    for candidate in [dir.join("minispice"), dir.parent()?.join("minispice")] {
        if candidate.is_file() {
            return Some(candidate);
        }
    }
    None
}

impl SpiceRunner {
    /// Resolution order: explicit path, `ANALOGFORGE_SPICE`, `ngspice` on
    /// PATH, the bundled `minispice` binary next to the executable.
    pub fn resolve(explicit: Option<&Path>) -> Result<SpiceRunner, SimError> {
        let path = if let Some(p) = explicit {
            p.to_path_buf()
        } else if let Some(p) = std::env::var_os("ANALOGFORGE_SPICE") {
            PathBuf::from(p)
        } else if let Some(p) = find_in_path("ngspice") {
            p
        } else if let Some(p) = bundled_engine() {
            p
        } else {
            return Err(SimError::EngineNotFound);
        };
        if !path.is_file() {
            return Err(SimError::EngineNotFound);
        }
        Ok(SpiceRunner {
            engine_path: path,
            timeout: Duration::from_secs(60),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> SpiceRunner {
        self.timeout = timeout;
        self
    }

    /// Runs a deck in `workdir`, returning the raw plots and the engine log.
    pub fn run_raw(&self, deck: &str, workdir: &Path) -> Result<(Vec<RawPlot>, String), SimError> {
        std::fs::create_dir_all(workdir)?;
        let deck_path = workdir.join("deck.cir");
        let raw_path = workdir.join("out.raw");
        std::fs::write(&deck_path, deck)?;
        let _ = std::fs::remove_file(&raw_path);

        let mut child = Command::new(&self.engine_path)
            .arg("-b")
            .arg(&deck_path)
            .arg("-r")
            .arg(&raw_path)
            .current_dir(workdir)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    SimError::EngineNotFound
                } else {
                    SimError::Io(e)
                }
            })?;

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait()? {
                Some(status) => break status,
                None => {
                    if Instant::now() > deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(SimError::Timeout(self.timeout));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
            }
        };

        let mut log = String::new();
        if let Some(mut out) = child.stdout.take() {
            let _ = out.read_to_string(&mut log);
        }
        if let Some(mut err) = child.stderr.take() {
            let mut e = String::new();
            let _ = err.read_to_string(&mut e);
            if !e.is_empty() {
                log.push_str("\n--- stderr ---\n");
                log.push_str(&e);
            }
        }

        let raw_text = std::fs::read_to_string(&raw_path).unwrap_or_default();
        if raw_text.is_empty() {
            return Err(SimError::EngineFailed {
                code: status.code(),
                log: truncate(&log, 2000),
            });
        }
        let plots = parse_ascii_rawfile(&raw_text)?;
        Ok((plots, log))
    }

    /// Emits the deck for `circuit` + `analyses`, runs it, and maps the raw
    /// plots back onto the requests. Non-convergence is reported in-band via
    /// `converged = false`, never as an error.
    pub fn simulate(
        &self,
        circuit: &CircuitIr,
        analyses: &[AnalysisRequest],
        workdir: &Path,
    ) -> Result<SimulationResult, SimError> {
        for a in analyses {
            a.validate()
                .map_err(|e| SimError::Precondition(e.to_string()))?;
        }
        let deck = emit_netlist(circuit, analyses)?;
        let (plots, log) = self.run_raw(&deck, workdir)?;
        let mut result = map_plots(analyses, &plots);
        let errors_in_log = log.lines().any(|l| l.starts_with("ERROR:"));
        result.converged = result.converged && !errors_in_log;
        if !result.converged {
            // Keep a log excerpt for diagnostics.
            result.engine_log = truncate(&log, 4000);
        } else {
            result.engine_log = log;
        }
        Ok(result)
    }

    /// DC transfer curve of `source` with the output recorded.
    pub fn dc_sweep(
        &self,
        circuit: &CircuitIr,
        source: &str,
        start: f64,
        stop: f64,
        steps: usize,
        workdir: &Path,
    ) -> Result<WaveformSeries, SimError> {
        if steps < 2 {
            return Err(SimError::Precondition(format!(
                "dc sweep needs at least 2 steps, got {steps}"
            )));
        }
        if circuit.component(source).is_none() {
            return Err(SimError::Precondition(format!(
                "sweep source {source} not present in circuit"
            )));
        }
        let req = AnalysisRequest::DcSweep {
            source: source.to_string(),
            start,
            stop,
            steps,
        };
        let result = self.simulate(circuit, &[req], workdir)?;
        result
            .series
            .get("dc_sweep")
            .cloned()
            .ok_or(SimError::EngineFailed {
                code: None,
                log: truncate(&result.engine_log, 2000),
            })
    }
}

fn truncate(s: &str, n: usize) -> String {
    if s.len() <= n {
        s.to_string()
    } else {
        format!("{}…", &s[..s.floor_char_boundary(n)])
    }
}

fn plot_to_series(plot: &RawPlot, axis_kind: AxisKind, reverse: bool) -> WaveformSeries {
    let mut axis: Vec<f64> = plot.data[0].iter().map(|(re, _)| *re).collect();
    let mut signals = BTreeMap::new();
    for (i, (name, _ty)) in plot.vars.iter().enumerate().skip(1) {
        let mut vec: Vec<f64> = if plot.complex {
            plot.data[i]
                .iter()
                .map(|(re, im)| (re * re + im * im).sqrt())
                .collect()
        } else {
            plot.data[i].iter().map(|(re, _)| *re).collect()
        };
        if reverse {
            vec.reverse();
        }
        signals.insert(name.clone(), vec);
    }
    if reverse {
        axis.reverse();
    }
    WaveformSeries {
        axis,
        axis_kind,
        signals,
    }
}

/// Zips requested analyses with raw plots, in order. Missing plots mark the
/// result as non-converged.
fn map_plots(analyses: &[AnalysisRequest], plots: &[RawPlot]) -> SimulationResult {
    let mut result = SimulationResult {
        converged: true,
        ..SimulationResult::default()
    };
    let mut iter = plots.iter().peekable();
    let mut next_named = |name: &str| -> Option<RawPlot> {
        match iter.peek() {
            Some(p) if p.plotname.eq_ignore_ascii_case(name) => iter.next().cloned(),
            _ => None,
        }
    };

    for req in analyses {
        match req {
            AnalysisRequest::Op => match next_named("Operating Point") {
                Some(plot) => fill_op(&plot, &mut result),
                None => result.converged = false,
            },
            AnalysisRequest::DcSweep { .. } => match next_named("DC transfer characteristic") {
                Some(plot) => {
                    result.series.insert(
                        "dc_sweep".into(),
                        plot_to_series(&plot, AxisKind::Voltage, false),
                    );
                }
                None => result.converged = false,
            },
            AnalysisRequest::DcTransfer { .. } => {
                match next_named("DC transfer characteristic") {
                    Some(plot) => {
                        result.series.insert(
                            "dc_transfer_up".into(),
                            plot_to_series(&plot, AxisKind::Voltage, false),
                        );
                    }
                    None => result.converged = false,
                }
                match next_named("DC transfer characteristic") {
                    Some(plot) => {
                        // The down sweep is stored ascending.
                        result.series.insert(
                            "dc_transfer_down".into(),
                            plot_to_series(&plot, AxisKind::Voltage, true),
                        );
                    }
                    None => result.converged = false,
                }
            }
            AnalysisRequest::Transient { .. } => match next_named("Transient Analysis") {
                Some(plot) => {
                    result
                        .series
                        .insert("transient".into(), plot_to_series(&plot, AxisKind::Time, false));
                }
                None => result.converged = false,
            },
            AnalysisRequest::Ac { .. } => match next_named("AC Analysis") {
                Some(plot) => {
                    result
                        .series
                        .insert("ac".into(), plot_to_series(&plot, AxisKind::Frequency, false));
                }
                None => result.converged = false,
            },
        }
    }
    result
}

fn fill_op(plot: &RawPlot, result: &mut SimulationResult) {
    let mut device_vals: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (i, (name, _ty)) in plot.vars.iter().enumerate() {
        let value = plot.data[i].first().map(|(re, _)| *re).unwrap_or(0.0);
        if let Some(net) = name.strip_prefix("v(").and_then(|n| n.strip_suffix(')')) {
            result.node_voltages.insert(net.to_string(), value);
        } else if let Some(dev) = name.strip_prefix('@') {
            if let Some((dev, field)) = dev.split_once('[') {
                let field = field.trim_end_matches(']');
                device_vals
                    .entry(dev.to_string())
                    .or_default()
                    .insert(field.to_string(), value);
            }
        } else if let Some(src) = name.strip_suffix("#branch") {
            result.branch_currents.insert(src.to_string(), value);
        }
    }
    for (dev, fields) in device_vals {
        let region = match fields.get("region").copied().unwrap_or(0.0) as i64 {
            1 => MosRegionKind::Triode,
            2 => MosRegionKind::Saturation,
            _ => MosRegionKind::Cutoff,
        };
        result.devices.insert(
            dev,
            DeviceOp {
                id: fields.get("id").copied().unwrap_or(0.0),
                vgs: fields.get("vgs").copied().unwrap_or(0.0),
                vds: fields.get("vds").copied().unwrap_or(0.0),
                vth: fields.get("vth").copied().unwrap_or(0.0),
                gm: fields.get("gm").copied().unwrap_or(0.0),
                gds: fields.get("gds").copied().unwrap_or(0.0),
                region,
            },
        );
    }
}
