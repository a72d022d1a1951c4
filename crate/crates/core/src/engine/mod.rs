//! The bundled `minispice` batch engine.
//!
//! A deliberately small level-1 SPICE: R, C, L, V, I, E, G, M (square-law
//! MOSFET), `.op`, `.dc`, `.tran` (trapezoidal), `.ac` (small-signal about
//! the operating point), `.ic`. Decks come in through the same text format
//! the rest of the framework emits; results leave as ngspice-style ASCII
//! raw files. It exists so the verification and sizing loops run on machines
//! without a system SPICE; when `ngspice` is configured, the driver uses
//! that instead and this module is bypassed entirely.

pub mod mos;
mod rawout;
pub mod solve;

pub use rawout::write_ascii_rawfile;

use crate::circuit::units::parse_spice_value;
use crate::circuit::{parse_netlist, CircuitError};
use nalgebra::DVector;
use solve::{
    build_system, init_tran_state, mos_telemetry, solve_ac, solve_newton, solve_op,
    update_tran_state, StampMode, System,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Op,
    Dc {
        source: String,
        start: f64,
        stop: f64,
        inc: f64,
    },
    Tran {
        step: f64,
        stop: f64,
        uic: bool,
    },
    Ac {
        points_per_decade: usize,
        fstart: f64,
        fstop: f64,
    },
}

#[derive(Debug, Clone)]
pub enum PlotData {
    Real(Vec<Vec<f64>>),
    Complex(Vec<Vec<(f64, f64)>>),
}

/// One analysis result: variable names/types plus columns of values.
#[derive(Debug, Clone)]
pub struct Plot {
    pub name: String,
    pub vars: Vec<(String, String)>,
    pub data: PlotData,
}

impl Plot {
    pub fn points(&self) -> usize {
        match &self.data {
            PlotData::Real(cols) => cols.first().map(|c| c.len()).unwrap_or(0),
            PlotData::Complex(cols) => cols.first().map(|c| c.len()).unwrap_or(0),
        }
    }
}

pub struct EngineOutput {
    pub title: String,
    pub plots: Vec<Plot>,
    pub log: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("deck error: {0}")]
    Deck(#[from] CircuitError),
    #[error("deck error: {0}")]
    Directive(String),
    #[error("build error: {0}")]
    Build(String),
}

/// Extracts analysis directives and `.ic` entries from deck text.
fn parse_directives(deck: &str) -> Result<(Vec<Directive>, BTreeMap<String, f64>), EngineError> {
    let mut directives = Vec::new();
    let mut ics = BTreeMap::new();
    for raw in deck.lines() {
        let line = raw.trim();
        let lower = line.to_ascii_lowercase();
        let toks: Vec<&str> = lower.split_whitespace().collect();
        let bad = |what: &str| EngineError::Directive(format!("malformed {what}: {line}"));
        match toks.first().copied() {
            Some(".op") => directives.push(Directive::Op),
            Some(".dc") => {
                if toks.len() < 5 {
                    return Err(bad(".dc"));
                }
                directives.push(Directive::Dc {
                    source: toks[1].to_string(),
                    start: parse_spice_value(toks[2]).ok_or_else(|| bad(".dc"))?,
                    stop: parse_spice_value(toks[3]).ok_or_else(|| bad(".dc"))?,
                    inc: parse_spice_value(toks[4]).ok_or_else(|| bad(".dc"))?,
                });
            }
            Some(".tran") => {
                if toks.len() < 3 {
                    return Err(bad(".tran"));
                }
                let uic = toks.last() == Some(&"uic");
                directives.push(Directive::Tran {
                    step: parse_spice_value(toks[1]).ok_or_else(|| bad(".tran"))?,
                    stop: parse_spice_value(toks[2]).ok_or_else(|| bad(".tran"))?,
                    uic,
                });
            }
            Some(".ac") => {
                if toks.len() < 5 || toks[1] != "dec" {
                    return Err(bad(".ac"));
                }
                directives.push(Directive::Ac {
                    points_per_decade: toks[2].parse().map_err(|_| bad(".ac"))?,
                    fstart: parse_spice_value(toks[3]).ok_or_else(|| bad(".ac"))?,
                    fstop: parse_spice_value(toks[4]).ok_or_else(|| bad(".ac"))?,
                });
            }
            Some(".ic") => {
                for tok in &toks[1..] {
                    if let Some((key, val)) = tok.split_once('=') {
                        let key = key.trim();
                        if let Some(node) = key
                            .strip_prefix("v(")
                            .and_then(|k| k.strip_suffix(')'))
                        {
                            if let Some(v) = parse_spice_value(val) {
                                ics.insert(node.trim().to_string(), v);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok((directives, ics))
}

/// Output vector layout shared by every plot: node voltages then branch
/// currents, in system order.
fn output_vars(sys: &System) -> Vec<(String, String)> {
    let mut vars = Vec::new();
    for name in &sys.node_names {
        vars.push((format!("v({name})"), "voltage".to_string()));
    }
    for name in &sys.branch_names {
        vars.push((name.clone(), "current".to_string()));
    }
    vars
}

fn snapshot(sys: &System, x: &DVector<f64>, cols: &mut [Vec<f64>], offset: usize) {
    for i in 0..sys.size() {
        cols[offset + i].push(x[i]);
    }
}

/// Runs a full deck: parse, flatten, execute each directive.
pub fn run_deck(deck: &str) -> Result<EngineOutput, EngineError> {
    let parsed = parse_netlist(deck)?;
    let (directives, ics) = parse_directives(deck)?;
    let mut sys = build_system(&parsed.circuit).map_err(|e| EngineError::Build(e.to_string()))?;
    sys.node_ics = ics;

    let mut log = String::new();
    let _ = writeln!(log, "minispice: circuit '{}'", parsed.circuit.title);
    for d in &parsed.diagnostics {
        let _ = writeln!(log, "WARNING: parse: {d}");
    }

    let mut plots = Vec::new();
    let mut last_op: Option<DVector<f64>> = None;

    for directive in &directives {
        match directive {
            Directive::Op => match solve_op(&sys, last_op.as_ref()) {
                Ok(x) => {
                    let mut vars = output_vars(&sys);
                    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); sys.size()];
                    snapshot(&sys, &x, &mut cols, 0);
                    for t in mos_telemetry(&sys, &x) {
                        let dev = &t.name;
                        for (suffix, ty, value) in [
                            ("id", "current", t.id),
                            ("vgs", "voltage", t.vgs),
                            ("vds", "voltage", t.vds),
                            ("vth", "voltage", t.vth),
                            ("gm", "admittance", t.gm),
                            ("gds", "admittance", t.gds),
                            ("region", "notype", t.region.as_f64()),
                        ] {
                            vars.push((format!("@{dev}[{suffix}]"), ty.to_string()));
                            cols.push(vec![value]);
                        }
                    }
                    last_op = Some(x);
                    let _ = writeln!(log, "op: converged, {} unknowns", sys.size());
                    plots.push(Plot {
                        name: "Operating Point".into(),
                        vars,
                        data: PlotData::Real(cols),
                    });
                }
                Err(e) => {
                    let _ = writeln!(log, "ERROR: op did not converge: {e}");
                }
            },
            Directive::Dc {
                source,
                start,
                stop,
                inc,
            } => {
                let found = sys.elems.iter().any(|e| {
                    matches!(e, solve::Elem::VSource { name, .. } if name == source)
                });
                if !found {
                    let _ = writeln!(log, "ERROR: dc: unknown source {source}");
                    continue;
                }
                if *inc == 0.0 || (stop - start).signum() != inc.signum() {
                    let _ = writeln!(log, "ERROR: dc: inconsistent sweep bounds");
                    continue;
                }
                let n = ((stop - start) / inc).round() as usize + 1;
                let mut cols: Vec<Vec<f64>> = vec![Vec::new(); sys.size() + 1];
                let mut warm: Option<DVector<f64>> = last_op.clone();
                let mut failures = 0usize;
                for k in 0..n {
                    let v = start + inc * k as f64;
                    set_source_dc(&mut sys, source, v);
                    match solve_op(&sys, warm.as_ref()) {
                        Ok(x) => {
                            cols[0].push(v);
                            snapshot(&sys, &x, &mut cols, 1);
                            warm = Some(x);
                        }
                        Err(_) => failures += 1,
                    }
                }
                if failures > 0 {
                    let _ = writeln!(log, "WARNING: dc: {failures} of {n} points skipped");
                }
                if cols[0].is_empty() {
                    let _ = writeln!(log, "ERROR: dc: no sweep point converged");
                    continue;
                }
                let mut vars = vec![("v-sweep".to_string(), "voltage".to_string())];
                vars.extend(output_vars(&sys));
                let _ = writeln!(log, "dc {source}: {} points", cols[0].len());
                plots.push(Plot {
                    name: "DC transfer characteristic".into(),
                    vars,
                    data: PlotData::Real(cols),
                });
            }
            Directive::Tran { step, stop, uic } => {
                let x0 = if *uic {
                    let mut x = DVector::zeros(sys.size());
                    for (node, v) in &sys.node_ics {
                        if let Some(i) = sys.node(node) {
                            x[i] = *v;
                        }
                    }
                    x
                } else {
                    match solve_op(&sys, last_op.as_ref()) {
                        Ok(x) => x,
                        Err(e) => {
                            let _ = writeln!(log, "ERROR: tran: initial op failed: {e}");
                            continue;
                        }
                    }
                };
                let mut state = init_tran_state(&sys, &x0, *uic);
                let mut cols: Vec<Vec<f64>> = vec![Vec::new(); sys.size() + 1];
                cols[0].push(0.0);
                snapshot(&sys, &x0, &mut cols, 1);
                let mut x = x0;
                let mut t = 0.0;
                let n_steps = (stop / step).ceil() as usize;
                let mut failed = false;
                for _ in 0..n_steps {
                    let t_next = t + step;
                    match tran_step(&sys, &x, &mut state, t, t_next, 0) {
                        Ok(next) => {
                            x = next;
                            t = t_next;
                            cols[0].push(t);
                            snapshot(&sys, &x, &mut cols, 1);
                        }
                        Err(e) => {
                            let _ = writeln!(log, "ERROR: tran failed at t={t:.6e}: {e}");
                            failed = true;
                            break;
                        }
                    }
                }
                if !failed {
                    let _ = writeln!(log, "tran: {} points", cols[0].len());
                }
                if cols[0].len() > 1 {
                    let mut vars = vec![("time".to_string(), "time".to_string())];
                    vars.extend(output_vars(&sys));
                    plots.push(Plot {
                        name: "Transient Analysis".into(),
                        vars,
                        data: PlotData::Real(cols),
                    });
                }
            }
            Directive::Ac {
                points_per_decade,
                fstart,
                fstop,
            } => {
                let op = match solve_op(&sys, last_op.as_ref()) {
                    Ok(x) => x,
                    Err(e) => {
                        let _ = writeln!(log, "ERROR: ac: operating point failed: {e}");
                        continue;
                    }
                };
                last_op = Some(op.clone());
                let mut cols: Vec<Vec<(f64, f64)>> = vec![Vec::new(); sys.size() + 1];
                let mut f = *fstart;
                let ratio = 10f64.powf(1.0 / *points_per_decade as f64);
                let mut failed = false;
                while f <= fstop * (1.0 + 1e-9) {
                    let w = 2.0 * std::f64::consts::PI * f;
                    match solve_ac(&sys, &op, w) {
                        Ok(xc) => {
                            cols[0].push((f, 0.0));
                            for i in 0..sys.size() {
                                cols[i + 1].push((xc[i].re, xc[i].im));
                            }
                        }
                        Err(e) => {
                            let _ = writeln!(log, "ERROR: ac failed at f={f:.3e}: {e}");
                            failed = true;
                            break;
                        }
                    }
                    f *= ratio;
                }
                if !failed && !cols[0].is_empty() {
                    let _ = writeln!(log, "ac: {} points", cols[0].len());
                    let mut vars = vec![("frequency".to_string(), "frequency".to_string())];
                    vars.extend(output_vars(&sys));
                    plots.push(Plot {
                        name: "AC Analysis".into(),
                        vars,
                        data: PlotData::Complex(cols),
                    });
                }
            }
        }
    }

    if directives.is_empty() {
        let _ = writeln!(log, "WARNING: deck contains no analysis directives");
    }

    Ok(EngineOutput {
        title: parsed.circuit.title,
        plots,
        log,
    })
}

fn set_source_dc(sys: &mut System, source: &str, value: f64) {
    for e in &mut sys.elems {
        if let solve::Elem::VSource { name, dc, .. } = e {
            if name == source {
                *dc = value;
            }
        }
    }
}

/// One trapezoidal step from `t` to `t_next`, halving internally on
/// non-convergence (up to 8 levels).
fn tran_step(
    sys: &System,
    x: &DVector<f64>,
    state: &mut solve::TranState,
    t: f64,
    t_next: f64,
    depth: usize,
) -> Result<DVector<f64>, solve::SolveError> {
    let h = t_next - t;
    let mode = StampMode::Tran {
        h,
        t: t_next,
        state,
    };
    match solve_newton(sys, &mode, x, 1e-12) {
        Ok(next) => {
            update_tran_state(sys, &next, h, state);
            Ok(next)
        }
        Err(e) => {
            if depth >= 8 {
                return Err(e);
            }
            let mid = t + h / 2.0;
            let xm = tran_step(sys, x, state, t, mid, depth + 1)?;
            tran_step(sys, &xm, state, mid, t_next, depth + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: &str = "* META input=Vin\n* META output=Vout\n* META supply=Vdd:5\n* META type=amplifier\n";

    fn col<'a>(plot: &'a Plot, name: &str) -> &'a [f64] {
        let idx = plot.vars.iter().position(|(n, _)| n == name).unwrap();
        match &plot.data {
            PlotData::Real(cols) => &cols[idx],
            PlotData::Complex(_) => panic!("complex plot"),
        }
    }

    fn col_mag(plot: &Plot, name: &str) -> Vec<f64> {
        let idx = plot.vars.iter().position(|(n, _)| n == name).unwrap();
        match &plot.data {
            PlotData::Complex(cols) => cols[idx]
                .iter()
                .map(|(re, im)| (re * re + im * im).sqrt())
                .collect(),
            PlotData::Real(_) => panic!("real plot"),
        }
    }

    #[test]
    fn voltage_divider_op() {
        let deck = format!(
            "divider\n{META}V1 vin 0 DC 5\nR1 vin vmid 10k\nR2 vmid 0 10k\n.op\n.end"
        );
        let out = run_deck(&deck).unwrap();
        assert_eq!(out.plots.len(), 1);
        let vmid = col(&out.plots[0], "v(vmid)")[0];
        assert!((vmid - 2.5).abs() < 1e-6, "vmid = {vmid}");
        // Supply current through V1 is -0.25 mA by SPICE sign convention.
        let i = col(&out.plots[0], "v1#branch")[0];
        assert!((i + 2.5e-4).abs() < 1e-9, "i = {i}");
    }

    #[test]
    fn rc_lowpass_pole() {
        let deck = format!(
            "rc\n{META}V1 vin 0 DC 0 AC 1\nR1 vin vout 1k\nC1 vout 0 1u\n.ac dec 20 1 1meg\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let plot = &out.plots[0];
        let freqs: Vec<f64> = match &plot.data {
            PlotData::Complex(cols) => cols[0].iter().map(|(re, _)| *re).collect(),
            _ => panic!(),
        };
        let mags = col_mag(plot, "v(vout)");
        // Find -3 dB point: |H| = 1/sqrt(2)
        let target = 1.0 / 2f64.sqrt();
        let idx = mags.iter().position(|m| *m < target).unwrap();
        // Log-interpolate between idx-1 and idx.
        let (f0, f1) = (freqs[idx - 1], freqs[idx]);
        let (m0, m1) = (mags[idx - 1], mags[idx]);
        let frac = (m0 - target) / (m0 - m1);
        let fc = f0 * (f1 / f0).powf(frac);
        let expect = 1.0 / (2.0 * std::f64::consts::PI * 1e3 * 1e-6);
        assert!(
            (fc - expect).abs() / expect < 0.02,
            "fc = {fc}, expect {expect}"
        );
    }

    #[test]
    fn lc_tank_sustains_oscillation() {
        // Lossless LC with an initial condition: trapezoidal integration
        // preserves the amplitude.
        let deck = format!(
            "lc tank\n* META input=-\n* META output=Vout\n* META type=oscillator\nC1 vout 0 1u IC=1\nL1 vout 0 1m\nR1 vout 0 100meg\n.tran 5u 2m uic\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let plot = &out.plots[0];
        let v = col(plot, "v(vout)");
        let n = v.len();
        let first_quarter_max = v[..n / 4].iter().cloned().fold(0.0f64, f64::max);
        let last_quarter_max = v[3 * n / 4..].iter().cloned().fold(0.0f64, f64::max);
        assert!(first_quarter_max > 0.9, "{first_quarter_max}");
        assert!(
            last_quarter_max > 0.8 * first_quarter_max,
            "decayed: {last_quarter_max} vs {first_quarter_max}"
        );
        // f = 1/(2*pi*sqrt(LC)) ~ 5.03 kHz; count rising zero crossings.
        let mut crossings = 0;
        for i in 1..n {
            if v[i - 1] <= 0.0 && v[i] > 0.0 {
                crossings += 1;
            }
        }
        let f_est = crossings as f64 / 2e-3;
        let f_expect = 1.0 / (2.0 * std::f64::consts::PI * (1e-3f64 * 1e-6).sqrt());
        assert!((f_est - f_expect).abs() / f_expect < 0.1, "f = {f_est}");
    }

    #[test]
    fn common_source_amp_dc_sweep_monotone() {
        let deck = format!(
            "cs amp\n{META}.model nmos_model nmos level=1 kp=100u vto=0.5\nV1 vdd 0 DC 5\nV2 vin 0 DC 0.7\nM1 vout vin 0 0 nmos_model w=5u l=0.045u\nR1 vout vdd 10k\n.dc v2 0 5 0.05\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let plot = &out.plots[0];
        let vin = col(plot, "v-sweep");
        let vout = col(plot, "v(vout)");
        assert_eq!(vin.len(), 101);
        // Output is monotonically non-increasing.
        for i in 1..vout.len() {
            assert!(
                vout[i] <= vout[i - 1] + 1e-9,
                "non-monotone at vin={}",
                vin[i]
            );
        }
        // At vin=0 the device is off: vout = vdd.
        assert!((vout[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn mos_telemetry_reported() {
        let deck = format!(
            "cs amp\n{META}.model nmos_model nmos level=1 kp=100u vto=0.5\nV1 vdd 0 DC 5\nV2 vin 0 DC 0.2\nM1 vout vin 0 0 nmos_model w=5u l=0.045u\nR1 vout vdd 10k\n.op\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let plot = &out.plots[0];
        assert_eq!(col(plot, "@m1[region]")[0], 0.0); // cutoff at vgs=0.2
        assert_eq!(col(plot, "@m1[vth]")[0], 0.5);
        assert!((col(plot, "@m1[vgs]")[0] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn vcvs_buffer() {
        let deck = format!(
            "buffer\n{META}V1 vin 0 DC 2\nE1 vout 0 vin 0 1\nR1 vout 0 1k\n.dc v1 0 5 0.5\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let plot = &out.plots[0];
        let vin = col(plot, "v-sweep");
        let vout = col(plot, "v(vout)");
        for (a, b) in vin.iter().zip(vout) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sine_source_transient() {
        let deck = format!(
            "sine\n{META}V1 vin 0 DC 0 SIN(0 1 1k)\nR1 vin vout 1k\nR2 vout 0 1meg\n.tran 10u 2m\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let v = col(&out.plots[0], "v(vin)");
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 1.0).abs() < 0.01, "{max}");
        assert!((min + 1.0).abs() < 0.01, "{min}");
    }

    #[test]
    fn floating_gate_flagged() {
        // Gate node with no DC path: op still solves via gmin, telemetry
        // shows the device stuck off; the deck-level warning is the parse
        // diagnostics path, exercised elsewhere.
        let deck = format!(
            "floating\n{META}.model nmos_model nmos kp=100u vto=0.5\nV1 vdd 0 DC 5\nM1 vout gatex 0 0 nmos_model w=1u l=1u\nR1 vout vdd 10k\n.op\n.end"
        );
        let out = run_deck(&deck).unwrap();
        let plot = &out.plots[0];
        // gmin pulls the floating gate to 0 V: cutoff.
        assert_eq!(col(plot, "@m1[region]")[0], 0.0);
    }
}
