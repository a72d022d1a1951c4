//! Structural connectivity diagnostics.

use super::{canonical_net, flatten, CircuitIr, ComponentKind, GROUND};
use std::collections::BTreeMap;

/// Checks the flattened net graph. Returns an empty list iff there are no
/// floating nets, ground exists, and the declared input/output nets appear in
/// the component graph. Diagnostics are ordered by net name, so the result is
/// independent of component order.
pub fn validate_connectivity(circuit: &CircuitIr) -> Vec<String> {
    let flat = match flatten(circuit) {
        Ok(f) => f,
        Err(e) => return vec![format!("cannot flatten circuit: {e}")],
    };

    let mut diagnostics = Vec::new();
    let mut degree: BTreeMap<String, usize> = BTreeMap::new();
    // Nets a source terminal touches are driven by definition.
    let mut driven: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for c in &flat.components {
        for t in &c.terminals {
            *degree.entry(canonical_net(t)).or_insert(0) += 1;
        }
        if matches!(c.kind, ComponentKind::VSource | ComponentKind::ISource) {
            for t in &c.terminals {
                driven.insert(canonical_net(t));
            }
        }
    }

    if !degree.contains_key(GROUND) {
        diagnostics.push("No ground net".to_string());
    }

    let output = canonical_net(&flat.meta.output);
    if !degree.contains_key(&output) {
        diagnostics.push(format!("Missing {} node", flat.meta.output));
    }
    if let Some(input) = &flat.meta.input {
        let input_c = canonical_net(input);
        if !degree.contains_key(&input_c) {
            diagnostics.push(format!("Missing {input} node"));
        }
    }

    for (net, deg) in &degree {
        if *deg == 1 && net != GROUND && !driven.contains(net) {
            diagnostics.push(format!("Floating net {net}"));
        }
    }
    diagnostics
}

#[cfg(test)]
mod tests {
    use super::super::testutil::common_source_amp;
    use super::*;

    #[test]
    fn valid_amp_is_clean() {
        assert!(validate_connectivity(&common_source_amp()).is_empty());
    }

    #[test]
    fn missing_output_reported() {
        let mut c = common_source_amp();
        for comp in &mut c.components {
            for t in &mut comp.terminals {
                if t == "vout" {
                    *t = "vx".into();
                }
            }
        }
        let diags = validate_connectivity(&c);
        assert!(diags.iter().any(|d| d == "Missing vout node"), "{diags:?}");
    }

    #[test]
    fn single_terminal_net_is_floating() {
        let mut c = common_source_amp();
        c.components.retain(|comp| comp.refdes != "R1");
        let diags = validate_connectivity(&c);
        assert!(
            diags.iter().any(|d| d.contains("Floating net vout")),
            "{diags:?}"
        );
    }

    #[test]
    fn order_independent() {
        let mut c = common_source_amp();
        c.components.retain(|comp| comp.refdes != "R1");
        let a = validate_connectivity(&c);
        c.components.reverse();
        let b = validate_connectivity(&c);
        assert_eq!(a, b);
    }
}
