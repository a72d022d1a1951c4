//! Subcircuit expansion.

use super::{canonical_net, CircuitError, CircuitIr, Component, ComponentKind, GROUND};
use std::collections::BTreeMap;

/// Replaces every subcircuit instance with its body. Internal nets are
/// renamed `<refdes>.<net>`; port nets map to the instance's terminals.
/// Ground and role nets are never renamed. Local models are hoisted with a
/// `<refdes>.` prefix so name collisions between instances cannot occur.
pub fn flatten(circuit: &CircuitIr) -> Result<CircuitIr, CircuitError> {
    let mut out = circuit.clone();
    out.subcircuits.clear();

    let mut flat: Vec<Component> = Vec::new();
    for comp in &circuit.components {
        if comp.kind != ComponentKind::SubcktInstance {
            flat.push(comp.clone());
            continue;
        }
        let sub_name = comp.model.clone().unwrap_or_default().to_ascii_lowercase();
        let def = circuit
            .subcircuits
            .get(&sub_name)
            .ok_or_else(|| CircuitError::UnknownSubcircuit(sub_name.clone()))?;
        if def.ports.len() != comp.terminals.len() {
            return Err(CircuitError::InvalidCircuit(format!(
                "{}: subcircuit {sub_name} has {} ports, instance supplies {}",
                comp.refdes,
                def.ports.len(),
                comp.terminals.len()
            )));
        }
        let prefix = comp.refdes.to_ascii_lowercase();
        let port_map: BTreeMap<String, String> = def
            .ports
            .iter()
            .map(|p| canonical_net(p))
            .zip(comp.terminals.iter().cloned())
            .collect();
        let model_rename: BTreeMap<String, String> = def
            .models
            .iter()
            .map(|m| (m.name.clone(), format!("{prefix}.{}", m.name)))
            .collect();
        for m in &def.models {
            let mut hoisted = m.clone();
            hoisted.name = model_rename[&m.name].clone();
            out.models.push(hoisted);
        }
        for inner in &def.body {
            if inner.kind == ComponentKind::SubcktInstance {
                return Err(CircuitError::InvalidCircuit(format!(
                    "{}: nested subcircuit instances are not supported",
                    inner.refdes
                )));
            }
            let mut c = inner.clone();
            c.refdes = format!("{prefix}.{}", inner.refdes);
            c.terminals = inner
                .terminals
                .iter()
                .map(|t| {
                    let t = canonical_net(t);
                    if t == GROUND {
                        t
                    } else if let Some(mapped) = port_map.get(&t) {
                        mapped.clone()
                    } else {
                        format!("{prefix}.{t}")
                    }
                })
                .collect();
            if let Some(model) = &c.model {
                if let Some(renamed) = model_rename.get(model) {
                    c.model = Some(renamed.clone());
                }
            }
            flat.push(c);
        }
    }
    out.components = flat;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{
        structurally_equal, CircuitIr, Component, ComponentKind, NodeRoles, SubcircuitDef,
        CircuitType,
    };
    use super::*;

    fn opamp_host() -> CircuitIr {
        let mut subs = BTreeMap::new();
        subs.insert(
            "opamp".to_string(),
            SubcircuitDef {
                name: "opamp".into(),
                ports: vec!["inp".into(), "inn".into(), "out".into()],
                body: vec![
                    Component::new("R1", ComponentKind::Resistor, &["inp", "n1"]).with_value(1e3),
                    Component::new("R2", ComponentKind::Resistor, &["n1", "n2"]).with_value(1e3),
                    Component::new("R3", ComponentKind::Resistor, &["n2", "n3"]).with_value(1e3),
                    Component::new("R4", ComponentKind::Resistor, &["n3", "n4"]).with_value(1e3),
                    Component::new("E1", ComponentKind::Vcvs, &["out", "0", "inp", "inn"])
                        .with_param("gain", 1e4),
                    Component::new("R5", ComponentKind::Resistor, &["n4", "0"]).with_value(1e3),
                    Component::new("R6", ComponentKind::Resistor, &["inn", "0"]).with_value(1e3),
                ],
                models: vec![],
            },
        );
        CircuitIr {
            title: "host".into(),
            models: vec![],
            components: vec![
                Component::new("X1", ComponentKind::SubcktInstance, &["vinp", "vinn", "vout"])
                    .with_model("opamp"),
                Component::new("R9", ComponentKind::Resistor, &["vout", "0"]).with_value(10e3),
                Component::new("V1", ComponentKind::VSource, &["vinp", "0"])
                    .with_source(super::super::SourceSpec::dc(1.0)),
                Component::new("R10", ComponentKind::Resistor, &["vinn", "0"]).with_value(1e3),
            ],
            subcircuits: subs,
            meta: NodeRoles {
                input: Some("vinp".into()),
                output: "vout".into(),
                supply: None,
                reference: None,
                circuit_type: CircuitType::Opamp,
            },
        }
    }

    #[test]
    fn no_instances_is_identity() {
        let mut c = opamp_host();
        c.components.retain(|x| x.kind != ComponentKind::SubcktInstance);
        c.subcircuits.clear();
        let flat = flatten(&c).unwrap();
        assert!(structurally_equal(&c, &flat));
    }

    #[test]
    fn internal_nets_prefixed_ports_mapped() {
        let c = opamp_host();
        let flat = flatten(&c).unwrap();
        assert!(flat.subcircuits.is_empty());
        let nets = flat.nets();
        // The opamp body has 4 internal nets n1..n4, renamed x1.n1..x1.n4.
        let internal: Vec<&String> = nets.iter().filter(|n| n.starts_with("x1.")).collect();
        assert_eq!(internal.len(), 4, "{nets:?}");
        // Ports mapped to instance nets, ground untouched.
        assert!(nets.iter().any(|n| n == "vout"));
        assert!(nets.iter().any(|n| n == "0"));
        assert!(!nets.iter().any(|n| n == "inp" || n == "out"));
    }

    #[test]
    fn unknown_subcircuit_errors() {
        let mut c = opamp_host();
        c.subcircuits.clear();
        assert!(matches!(
            flatten(&c),
            Err(CircuitError::UnknownSubcircuit(_))
        ));
    }
}
