//! Tolerant SPICE deck parser.
//!
//! Accepts LLM-produced decks: case-insensitive, unit suffixes, `+`
//! continuation lines, `* META` directives for node roles. Unparseable lines
//! are collected as diagnostics rather than aborting, as long as at least one
//! component is recovered.

use super::units::parse_spice_value;
use super::{
    canonical_net, CircuitError, CircuitIr, Component, ComponentKind, DeviceModel, ModelKind,
    NodeRoles, SourceSpec, SubcircuitDef, TransientSpec, CircuitType,
};
use std::collections::BTreeMap;

/// Parse result: the circuit plus non-fatal per-line diagnostics.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub circuit: CircuitIr,
    pub diagnostics: Vec<String>,
}

struct MetaFields {
    input: Option<String>,
    output: Option<String>,
    supply: Option<(String, f64)>,
    reference: Option<(String, f64)>,
    circuit_type: Option<CircuitType>,
}

/// Parses a SPICE deck into [`CircuitIr`].
pub fn parse_netlist(deck: &str) -> Result<ParseOutcome, CircuitError> {
    let lines = join_continuations(deck);
    let mut diagnostics = Vec::new();
    let mut meta = MetaFields {
        input: None,
        output: None,
        supply: None,
        reference: None,
        circuit_type: None,
    };
    let mut title = String::new();
    let mut saw_title = false;
    let mut models = Vec::new();
    let mut components: Vec<Component> = Vec::new();
    let mut subcircuits = BTreeMap::new();
    // (name, ports, body, models) while inside a .subckt block
    let mut open_subckt: Option<(String, Vec<String>, Vec<Component>, Vec<DeviceModel>)> = None;

    for (line_no, raw) in &lines {
        let line_no = *line_no;
        let line = strip_trailing_comment(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('*') {
            parse_meta_line(rest, &mut meta, &mut diagnostics, line_no);
            continue;
        }
        if trimmed.starts_with('.') {
            let lower = trimmed.to_ascii_lowercase();
            let mut toks = trimmed.split_whitespace();
            let directive = toks.next().unwrap().to_ascii_lowercase();
            match directive.as_str() {
                ".title" => {
                    title = trimmed[6..].trim().to_string();
                    saw_title = true;
                }
                ".model" => match parse_model(trimmed) {
                    Ok(m) => {
                        if let Some((_, _, _, ms)) = open_subckt.as_mut() {
                            ms.push(m);
                        } else {
                            models.push(m);
                        }
                    }
                    Err(msg) => diagnostics.push(format!("line {line_no}: {msg}")),
                },
                ".subckt" => {
                    if open_subckt.is_some() {
                        diagnostics
                            .push(format!("line {line_no}: nested .subckt not supported"));
                        continue;
                    }
                    let parts: Vec<&str> = trimmed.split_whitespace().skip(1).collect();
                    if parts.len() < 2 {
                        diagnostics
                            .push(format!("line {line_no}: .subckt needs a name and ports"));
                        continue;
                    }
                    let name = parts[0].to_ascii_lowercase();
                    let ports = parts[1..].iter().map(|p| canonical_net(p)).collect();
                    open_subckt = Some((name, ports, Vec::new(), Vec::new()));
                }
                ".ends" => match open_subckt.take() {
                    Some((name, ports, body, ms)) => {
                        subcircuits.insert(
                            name.clone(),
                            SubcircuitDef {
                                name,
                                ports,
                                body,
                                models: ms,
                            },
                        );
                    }
                    None => diagnostics.push(format!("line {line_no}: .ends without .subckt")),
                },
                ".end" => break,
                // Analysis/control directives are framework-controlled;
                // tolerate and drop any that appear in model output.
                ".op" | ".dc" | ".tran" | ".ac" | ".ic" | ".save" | ".options" | ".option"
                | ".print" | ".plot" | ".probe" | ".global" | ".temp" | ".nodeset" => {
                    let _ = lower;
                }
                _ => diagnostics.push(format!(
                    "line {line_no}: unknown directive {directive}"
                )),
            }
            continue;
        }
        let first_content_line =
            !saw_title && components.is_empty() && open_subckt.is_none() && models.is_empty();
        match parse_element(trimmed) {
            // The first content line is the deck title per SPICE convention,
            // unless it parses cleanly as an element line.
            Err(_) if first_content_line => {
                title = trimmed.to_string();
                saw_title = true;
            }
            Ok(c) => {
                let dest = match open_subckt.as_mut() {
                    Some((_, _, body, _)) => body,
                    None => &mut components,
                };
                if dest
                    .iter()
                    .any(|prev| prev.refdes.eq_ignore_ascii_case(&c.refdes))
                {
                    return Err(CircuitError::InvalidCircuit(format!(
                        "duplicate refdes {}",
                        c.refdes
                    )));
                }
                dest.push(c);
            }
            Err(msg) => diagnostics.push(format!("line {line_no}: {msg} [{trimmed}]")),
        }
    }

    if let Some((name, _, _, _)) = open_subckt {
        diagnostics.push(format!("subcircuit {name} missing .ends"));
    }

    if components.is_empty() {
        let (line, snippet) = lines
            .iter()
            .map(|(n, l)| (*n, l.trim().to_string()))
            .find(|(_, l)| !l.is_empty())
            .unwrap_or((0, String::new()));
        return Err(CircuitError::ParseError {
            line,
            message: "no component could be recovered from deck".into(),
            snippet,
        });
    }

    let circuit_type = meta
        .circuit_type
        .ok_or_else(|| CircuitError::MissingMeta("type".into()))?;
    let output = meta
        .output
        .ok_or_else(|| CircuitError::MissingMeta("output".into()))?;

    Ok(ParseOutcome {
        circuit: CircuitIr {
            title,
            models,
            components,
            subcircuits,
            meta: NodeRoles {
                input: meta.input,
                output,
                supply: meta.supply,
                reference: meta.reference,
                circuit_type,
            },
        },
        diagnostics,
    })
}

/// Joins `+` continuation lines, keeping the first physical line's number.
fn join_continuations(deck: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    for (idx, raw) in deck.lines().enumerate() {
        let trimmed = raw.trim_start();
        if let Some(cont) = trimmed.strip_prefix('+') {
            if let Some((_, last)) = out.last_mut() {
                last.push(' ');
                last.push_str(cont.trim());
                continue;
            }
        }
        out.push((idx + 1, raw.to_string()));
    }
    out
}

fn strip_trailing_comment(line: &str) -> &str {
    match line.find(';') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_meta_line(
    rest: &str,
    meta: &mut MetaFields,
    diagnostics: &mut Vec<String>,
    line_no: usize,
) {
    let rest = rest.trim();
    let Some(body) = rest
        .strip_prefix("META")
        .or_else(|| rest.strip_prefix("meta"))
    else {
        return; // ordinary comment
    };
    let Some((key, value)) = body.trim().split_once('=') else {
        diagnostics.push(format!("line {line_no}: malformed META directive"));
        return;
    };
    let key = key.trim().to_ascii_lowercase();
    let value = value.trim();
    match key.as_str() {
        "input" => {
            if value != "-" && !value.is_empty() {
                meta.input = Some(canonical_net(value));
            }
        }
        "output" => meta.output = Some(canonical_net(value)),
        "supply" | "reference" => match parse_net_volts(value) {
            Some(nv) => {
                if key == "supply" {
                    meta.supply = Some(nv);
                } else {
                    meta.reference = Some(nv);
                }
            }
            None => diagnostics.push(format!(
                "line {line_no}: META {key} wants net:volts, got {value}"
            )),
        },
        "type" => match CircuitType::parse(value) {
            Some(t) => meta.circuit_type = Some(t),
            None => diagnostics.push(format!("line {line_no}: unknown circuit type {value}")),
        },
        _ => diagnostics.push(format!("line {line_no}: unknown META key {key}")),
    }
}

fn parse_net_volts(value: &str) -> Option<(String, f64)> {
    let (net, volts) = value.split_once(':')?;
    Some((canonical_net(net.trim()), parse_spice_value(volts.trim())?))
}

fn parse_model(line: &str) -> Result<DeviceModel, String> {
    // .model <name> <type> [(] k=v ... [)]
    let cleaned = line.replace('(', " ").replace(')', " ");
    let mut toks = cleaned.split_whitespace();
    toks.next(); // .model
    let name = toks
        .next()
        .ok_or(".model missing name")?
        .to_ascii_lowercase();
    let type_tok = toks
        .next()
        .ok_or(".model missing type")?
        .to_ascii_lowercase();
    let kind = match type_tok.as_str() {
        "nmos" => ModelKind::Nmos,
        "pmos" => ModelKind::Pmos,
        _ => ModelKind::Other,
    };
    let mut params = BTreeMap::new();
    for tok in toks {
        if let Some((k, v)) = tok.split_once('=') {
            let val = parse_spice_value(v.trim())
                .ok_or_else(|| format!("bad model parameter value {v}"))?;
            params.insert(k.trim().to_ascii_lowercase(), val);
        }
    }
    Ok(DeviceModel { name, kind, params })
}

/// Tokenizes an element line, keeping `FUNC(a b c)` groups intact.
fn element_tokens(line: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut buf = String::new();
    let mut depth = 0usize;
    for ch in line.chars() {
        match ch {
            '(' => {
                depth += 1;
                buf.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                buf.push(ch);
            }
            c if c.is_whitespace() && depth == 0 => {
                if !buf.is_empty() {
                    toks.push(std::mem::take(&mut buf));
                }
            }
            _ => buf.push(ch),
        }
    }
    if !buf.is_empty() {
        toks.push(buf);
    }
    toks
}

fn parse_element(line: &str) -> Result<Component, String> {
    let toks = element_tokens(line);
    let refdes = toks.first().ok_or("empty element line")?.clone();
    let kind = ComponentKind::from_refdes(&refdes)
        .ok_or_else(|| format!("unknown element type {refdes}"))?;
    match kind {
        ComponentKind::Resistor | ComponentKind::Capacitor | ComponentKind::Inductor => {
            parse_two_terminal(&refdes, kind, &toks)
        }
        ComponentKind::VSource | ComponentKind::ISource => parse_source(&refdes, kind, &toks),
        ComponentKind::Mosfet => parse_mosfet(&refdes, &toks),
        ComponentKind::SubcktInstance => parse_instance(&refdes, &toks),
        ComponentKind::Vcvs | ComponentKind::Vccs => parse_controlled(&refdes, kind, &toks),
    }
}

fn parse_two_terminal(
    refdes: &str,
    kind: ComponentKind,
    toks: &[String],
) -> Result<Component, String> {
    if toks.len() < 4 {
        return Err(format!("{refdes} needs 2 nodes and a value"));
    }
    let mut c = Component::new(refdes, kind, &[&toks[1], &toks[2]]);
    c.terminals = vec![canonical_net(&toks[1]), canonical_net(&toks[2])];
    let value =
        parse_spice_value(&toks[3]).ok_or_else(|| format!("{refdes}: bad value {}", toks[3]))?;
    c.params.insert("value".into(), value);
    for tok in &toks[4..] {
        if let Some((k, v)) = tok.split_once('=') {
            let val = parse_spice_value(v).ok_or_else(|| format!("{refdes}: bad {tok}"))?;
            if k.eq_ignore_ascii_case("ic") {
                c.initial_condition = Some(val);
            } else {
                c.params.insert(k.to_ascii_lowercase(), val);
            }
        }
    }
    Ok(c)
}

fn parse_paren_args(tok: &str) -> Option<(String, Vec<f64>)> {
    let open = tok.find('(')?;
    let close = tok.rfind(')')?;
    let name = tok[..open].to_ascii_uppercase();
    let args: Option<Vec<f64>> = tok[open + 1..close]
        .split_whitespace()
        .map(parse_spice_value)
        .collect();
    Some((name, args?))
}

fn parse_source(refdes: &str, kind: ComponentKind, toks: &[String]) -> Result<Component, String> {
    if toks.len() < 3 {
        return Err(format!("{refdes} needs 2 nodes"));
    }
    let mut c = Component::new(refdes, kind, &[]);
    c.terminals = vec![canonical_net(&toks[1]), canonical_net(&toks[2])];
    let mut spec = SourceSpec::default();
    let mut i = 3;
    let mut saw_anything = false;
    while i < toks.len() {
        let tok = &toks[i];
        let upper = tok.to_ascii_uppercase();
        if upper == "DC" {
            let v = toks
                .get(i + 1)
                .and_then(|t| parse_spice_value(t))
                .ok_or_else(|| format!("{refdes}: DC needs a value"))?;
            spec.dc = v;
            saw_anything = true;
            i += 2;
        } else if upper == "AC" {
            let mag = toks
                .get(i + 1)
                .and_then(|t| parse_spice_value(t))
                .unwrap_or(1.0);
            spec.ac_mag = Some(mag);
            i += 2;
            if let Some(ph) = toks.get(i).and_then(|t| parse_spice_value(t)) {
                spec.ac_phase_deg = ph;
                i += 1;
            }
            saw_anything = true;
        } else if upper.starts_with("SIN") {
            let (_, args) = parse_paren_args(tok)
                .ok_or_else(|| format!("{refdes}: malformed SIN descriptor"))?;
            if args.len() < 3 {
                return Err(format!("{refdes}: SIN needs offset, amplitude, frequency"));
            }
            spec.transient = Some(TransientSpec::Sine {
                offset: args[0],
                amplitude: args[1],
                frequency: args[2],
            });
            saw_anything = true;
            i += 1;
        } else if upper.starts_with("PULSE") {
            let (_, args) = parse_paren_args(tok)
                .ok_or_else(|| format!("{refdes}: malformed PULSE descriptor"))?;
            if args.len() < 7 {
                return Err(format!("{refdes}: PULSE needs 7 values"));
            }
            spec.transient = Some(TransientSpec::Pulse {
                v1: args[0],
                v2: args[1],
                delay: args[2],
                rise: args[3],
                fall: args[4],
                width: args[5],
                period: args[6],
            });
            saw_anything = true;
            i += 1;
        } else if let Some(v) = parse_spice_value(tok) {
            spec.dc = v;
            saw_anything = true;
            i += 1;
        } else {
            return Err(format!("{refdes}: unrecognized source token {tok}"));
        }
    }
    if !saw_anything {
        spec.dc = 0.0;
    }
    c.source = Some(spec);
    Ok(c)
}

fn parse_mosfet(refdes: &str, toks: &[String]) -> Result<Component, String> {
    if toks.len() < 6 {
        return Err(format!(
            "{refdes} needs drain, gate, source, bulk and a model"
        ));
    }
    let mut c = Component::new(refdes, ComponentKind::Mosfet, &[]);
    c.terminals = toks[1..5].iter().map(|t| canonical_net(t)).collect();
    c.model = Some(toks[5].to_ascii_lowercase());
    for tok in &toks[6..] {
        if let Some((k, v)) = tok.split_once('=') {
            let val = parse_spice_value(v).ok_or_else(|| format!("{refdes}: bad {tok}"))?;
            c.params.insert(k.to_ascii_lowercase(), val);
        }
    }
    if let Some(w) = c.params.get("w") {
        if *w <= 0.0 {
            return Err(format!("{refdes}: w must be positive"));
        }
    }
    if let Some(l) = c.params.get("l") {
        if *l <= 0.0 {
            return Err(format!("{refdes}: l must be positive"));
        }
    }
    Ok(c)
}

fn parse_instance(refdes: &str, toks: &[String]) -> Result<Component, String> {
    if toks.len() < 3 {
        return Err(format!("{refdes} needs ports and a subcircuit name"));
    }
    let mut c = Component::new(refdes, ComponentKind::SubcktInstance, &[]);
    c.terminals = toks[1..toks.len() - 1]
        .iter()
        .map(|t| canonical_net(t))
        .collect();
    c.model = Some(toks[toks.len() - 1].to_ascii_lowercase());
    Ok(c)
}

fn parse_controlled(
    refdes: &str,
    kind: ComponentKind,
    toks: &[String],
) -> Result<Component, String> {
    if toks.len() < 6 {
        return Err(format!("{refdes} needs 4 nodes and a gain"));
    }
    let mut c = Component::new(refdes, kind, &[]);
    c.terminals = toks[1..5].iter().map(|t| canonical_net(t)).collect();
    let gain =
        parse_spice_value(&toks[5]).ok_or_else(|| format!("{refdes}: bad gain {}", toks[5]))?;
    c.params.insert("gain".into(), gain);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const META_BLOCK: &str = "* META input=Vin\n* META output=Vout\n* META supply=Vdd:5\n* META type=amplifier\n";

    #[test]
    fn resistor_unit_suffix_normalized() {
        let deck = format!("test\n{META_BLOCK}R1 Vout Vdd 10k\nV1 Vin 0 1\nM1 Vout Vin 0 0 nm w=1u l=1u\n.end");
        let out = parse_netlist(&deck).unwrap();
        let r = out.circuit.component("R1").unwrap();
        assert_eq!(r.value().unwrap(), 10_000.0);
    }

    #[test]
    fn case_and_continuation_tolerated() {
        let deck = format!(
            "t\n{META_BLOCK}m1 vout vin 0 0 NMOS_MODEL\n+ W=5U L=0.045u\nr1 vout vdd 10K\nv1 vin 0 dc 0.7\n.END"
        );
        let out = parse_netlist(&deck).unwrap();
        let m = out.circuit.component("m1").unwrap();
        assert_eq!(m.params["w"], 5e-6);
        assert_eq!(m.params["l"], 0.045e-6);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn sin_source_parsed() {
        let deck = format!("t\n{META_BLOCK}V1 Vin 0 DC 2.5 AC 1 SIN(2.5 0.1 1k)\nR1 Vin Vout 1k\nC1 Vout 0 1u IC=0.5\n.end");
        let out = parse_netlist(&deck).unwrap();
        let v = out.circuit.component("V1").unwrap();
        let spec = v.source.as_ref().unwrap();
        assert_eq!(spec.dc, 2.5);
        assert_eq!(spec.ac_mag, Some(1.0));
        assert_eq!(
            spec.transient,
            Some(TransientSpec::Sine {
                offset: 2.5,
                amplitude: 0.1,
                frequency: 1000.0
            })
        );
        assert_eq!(out.circuit.component("C1").unwrap().initial_condition, Some(0.5));
    }

    #[test]
    fn prose_only_is_parse_error() {
        let err = parse_netlist("just some words\nnothing circuit-like here\n").unwrap_err();
        assert!(matches!(err, CircuitError::ParseError { .. }));
    }

    #[test]
    fn missing_meta_reported() {
        let err = parse_netlist("t\nR1 a b 1k\nV1 a 0 1\n.end").unwrap_err();
        assert!(matches!(err, CircuitError::MissingMeta(_)));
    }

    #[test]
    fn duplicate_refdes_rejected() {
        let deck = format!("t\n{META_BLOCK}R1 a b 1k\nR1 b 0 2k\n.end");
        let err = parse_netlist(&deck).unwrap_err();
        assert!(matches!(err, CircuitError::InvalidCircuit(_)));
    }

    #[test]
    fn bad_lines_become_diagnostics() {
        let deck = format!("t\n{META_BLOCK}R1 a b 1k\nQ7 x y z weird\nV1 a 0 1\n.end");
        let out = parse_netlist(&deck).unwrap();
        assert_eq!(out.diagnostics.len(), 1);
        assert!(out.diagnostics[0].contains("Q7"));
    }

    #[test]
    fn subckt_block_parsed() {
        let deck = format!(
            "t\n{META_BLOCK}X1 Vinp Vinn Vout Opamp\nV1 Vin 0 1\n.subckt opamp inp inn out\nR1 inp out 1k\n.model nm nmos kp=1e-4\n.ends\n.end"
        );
        let out = parse_netlist(&deck).unwrap();
        let sub = &out.circuit.subcircuits["opamp"];
        assert_eq!(sub.ports, vec!["inp", "inn", "out"]);
        assert_eq!(sub.body.len(), 1);
        assert_eq!(sub.models.len(), 1);
        let x = out.circuit.component("X1").unwrap();
        assert_eq!(x.terminals.len(), 3);
        assert_eq!(x.model.as_deref(), Some("opamp"));
    }
}
