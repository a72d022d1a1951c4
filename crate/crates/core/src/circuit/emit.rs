//! SPICE deck serialization.

use super::units::format_spice_value as fv;
use super::{
    CircuitError, CircuitIr, Component, ComponentKind, DeviceModel, ModelKind, TransientSpec,
    GROUND,
};
use crate::analysis::AnalysisRequest;

/// Serializes a circuit into a complete SPICE deck with META directives and
/// analysis control lines. Ordering is deterministic: models by name,
/// components by refdes, subcircuits by name.
pub fn emit_netlist(
    circuit: &CircuitIr,
    analyses: &[AnalysisRequest],
) -> Result<String, CircuitError> {
    check_invariants(circuit)?;

    let mut out = String::new();
    let title = if circuit.title.is_empty() {
        "untitled circuit"
    } else {
        circuit.title.as_str()
    };
    out.push_str(title);
    out.push('\n');

    let meta = &circuit.meta;
    match &meta.input {
        Some(net) => out.push_str(&format!("* META input={net}\n")),
        None => out.push_str("* META input=-\n"),
    }
    out.push_str(&format!("* META output={}\n", meta.output));
    if let Some((net, volts)) = &meta.supply {
        out.push_str(&format!("* META supply={net}:{}\n", fv(*volts)));
    }
    if let Some((net, volts)) = &meta.reference {
        out.push_str(&format!("* META reference={net}:{}\n", fv(*volts)));
    }
    out.push_str(&format!("* META type={}\n", meta.circuit_type.as_str()));

    let mut models: Vec<&DeviceModel> = circuit.models.iter().collect();
    models.sort_by(|a, b| a.name.cmp(&b.name));
    for m in models {
        out.push_str(&render_model(m));
        out.push('\n');
    }

    let mut components: Vec<&Component> = circuit.components.iter().collect();
    components.sort_by(|a, b| a.refdes.to_ascii_lowercase().cmp(&b.refdes.to_ascii_lowercase()));
    for c in components {
        out.push_str(&render_component(c));
        out.push('\n');
    }

    for (name, sub) in &circuit.subcircuits {
        out.push_str(&format!(".subckt {name} {}\n", sub.ports.join(" ")));
        let mut models: Vec<&DeviceModel> = sub.models.iter().collect();
        models.sort_by(|a, b| a.name.cmp(&b.name));
        for m in models {
            out.push_str(&render_model(m));
            out.push('\n');
        }
        let mut body: Vec<&Component> = sub.body.iter().collect();
        body.sort_by(|a, b| a.refdes.to_ascii_lowercase().cmp(&b.refdes.to_ascii_lowercase()));
        for c in body {
            out.push_str(&render_component(c));
            out.push('\n');
        }
        out.push_str(&format!(".ends {name}\n"));
    }

    for a in analyses {
        a.validate()
            .map_err(|e| CircuitError::InvalidCircuit(e.to_string()))?;
        for line in a.control_lines() {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out.push_str(".end\n");
    Ok(out)
}

fn render_model(m: &DeviceModel) -> String {
    let kind = match m.kind {
        ModelKind::Nmos => "nmos",
        ModelKind::Pmos => "pmos",
        ModelKind::Other => "other",
    };
    let mut line = format!(".model {} {kind}", m.name);
    for (k, v) in &m.params {
        line.push_str(&format!(" {k}={}", fv(*v)));
    }
    line
}

fn render_component(c: &Component) -> String {
    let mut line = c.refdes.clone();
    for t in &c.terminals {
        line.push(' ');
        line.push_str(t);
    }
    match c.kind {
        ComponentKind::Resistor | ComponentKind::Capacitor | ComponentKind::Inductor => {
            line.push_str(&format!(" {}", fv(c.value().unwrap_or(0.0))));
            if let Some(ic) = c.initial_condition {
                line.push_str(&format!(" IC={}", fv(ic)));
            }
        }
        ComponentKind::VSource | ComponentKind::ISource => {
            let spec = c.source.clone().unwrap_or_default();
            line.push_str(&format!(" DC {}", fv(spec.dc)));
            if let Some(mag) = spec.ac_mag {
                line.push_str(&format!(" AC {} {}", fv(mag), fv(spec.ac_phase_deg)));
            }
            match &spec.transient {
                Some(TransientSpec::Sine {
                    offset,
                    amplitude,
                    frequency,
                }) => line.push_str(&format!(
                    " SIN({} {} {})",
                    fv(*offset),
                    fv(*amplitude),
                    fv(*frequency)
                )),
                Some(TransientSpec::Pulse {
                    v1,
                    v2,
                    delay,
                    rise,
                    fall,
                    width,
                    period,
                }) => line.push_str(&format!(
                    " PULSE({} {} {} {} {} {} {})",
                    fv(*v1),
                    fv(*v2),
                    fv(*delay),
                    fv(*rise),
                    fv(*fall),
                    fv(*width),
                    fv(*period)
                )),
                None => {}
            }
        }
        ComponentKind::Mosfet => {
            line.push_str(&format!(" {}", c.model.as_deref().unwrap_or("?")));
            for (k, v) in &c.params {
                line.push_str(&format!(" {k}={}", fv(*v)));
            }
        }
        ComponentKind::SubcktInstance => {
            line.push_str(&format!(" {}", c.model.as_deref().unwrap_or("?")));
        }
        ComponentKind::Vcvs | ComponentKind::Vccs => {
            line.push_str(&format!(" {}", fv(c.params.get("gain").copied().unwrap_or(0.0))));
        }
    }
    line
}

fn check_invariants(circuit: &CircuitIr) -> Result<(), CircuitError> {
    if circuit.components.is_empty() {
        return Err(CircuitError::InvalidCircuit(
            "circuit has no components".into(),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &circuit.components {
        if !seen.insert(c.refdes.to_ascii_lowercase()) {
            return Err(CircuitError::InvalidCircuit(format!(
                "duplicate refdes {}",
                c.refdes
            )));
        }
        if let Some(n) = c.kind.terminal_count() {
            if c.terminals.len() != n {
                return Err(CircuitError::InvalidCircuit(format!(
                    "{} expects {n} terminals, has {}",
                    c.refdes,
                    c.terminals.len()
                )));
            }
        }
        if c.kind == ComponentKind::Mosfet {
            for key in ["w", "l"] {
                if let Some(v) = c.params.get(key) {
                    if *v <= 0.0 {
                        return Err(CircuitError::InvalidCircuit(format!(
                            "{}: {key} must be positive",
                            c.refdes
                        )));
                    }
                }
            }
        }
        if c.kind == ComponentKind::SubcktInstance {
            let name = c.model.as_deref().unwrap_or("");
            if !circuit.subcircuits.contains_key(&name.to_ascii_lowercase()) {
                return Err(CircuitError::InvalidCircuit(format!(
                    "{} references undefined subcircuit {name}",
                    c.refdes
                )));
            }
        }
    }
    let grounded = circuit
        .components
        .iter()
        .flat_map(|c| c.terminals.iter())
        .any(|t| t == GROUND)
        || circuit
            .subcircuits
            .values()
            .flat_map(|s| s.body.iter())
            .flat_map(|c| c.terminals.iter())
            .any(|t| t == GROUND);
    if !grounded {
        return Err(CircuitError::InvalidCircuit("no ground net".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::testutil::common_source_amp;
    use super::super::{parse_netlist, structurally_equal, Component, ComponentKind};
    use super::*;

    #[test]
    fn common_source_deck_has_expected_lines() {
        let deck = emit_netlist(&common_source_amp(), &[]).unwrap();
        let m_lines: Vec<&str> = deck.lines().filter(|l| l.starts_with("M")).collect();
        let r_lines: Vec<&str> = deck.lines().filter(|l| l.starts_with("R")).collect();
        let v_lines: Vec<&str> = deck.lines().filter(|l| l.starts_with("V")).collect();
        assert_eq!(m_lines.len(), 1);
        assert_eq!(r_lines.len(), 1);
        assert_eq!(v_lines.len(), 2);
        assert!(deck.contains("* META output=vout"));
        assert!(deck.ends_with(".end\n"));
    }

    #[test]
    fn empty_component_list_rejected() {
        let mut c = common_source_amp();
        c.components.clear();
        assert!(matches!(
            emit_netlist(&c, &[]),
            Err(CircuitError::InvalidCircuit(_))
        ));
    }

    #[test]
    fn roundtrip_structural_identity() {
        let c = common_source_amp();
        let deck = emit_netlist(&c, &[]).unwrap();
        let back = parse_netlist(&deck).unwrap();
        assert!(back.diagnostics.is_empty(), "{:?}", back.diagnostics);
        assert!(structurally_equal(&c, &back.circuit));
    }

    #[test]
    fn subckt_instance_emitted() {
        let mut c = common_source_amp();
        c.subcircuits.insert(
            "opamp".into(),
            super::super::SubcircuitDef {
                name: "opamp".into(),
                ports: vec!["inp".into(), "inn".into(), "out".into()],
                body: vec![
                    Component::new("R1", ComponentKind::Resistor, &["inp", "out"]).with_value(1e3),
                    Component::new("R2", ComponentKind::Resistor, &["inn", "0"]).with_value(1e3),
                ],
                models: vec![],
            },
        );
        c.components.push(
            Component::new("X1", ComponentKind::SubcktInstance, &["vinp", "vinn", "vout"])
                .with_model("opamp"),
        );
        let deck = emit_netlist(&c, &[]).unwrap();
        assert!(deck.contains(".subckt opamp inp inn out"));
        assert!(deck.lines().any(|l| l.starts_with("X1 vinp vinn vout opamp")));
        let back = parse_netlist(&deck).unwrap();
        assert!(structurally_equal(&c, &back.circuit));
    }

    #[test]
    fn undefined_subckt_instance_rejected() {
        let mut c = common_source_amp();
        c.components.push(
            Component::new("X1", ComponentKind::SubcktInstance, &["a", "b", "c"])
                .with_model("ghost"),
        );
        assert!(matches!(
            emit_netlist(&c, &[]),
            Err(CircuitError::InvalidCircuit(_))
        ));
    }
}
