//! Circuit intermediate representation and SPICE netlist conversion.
//!
//! The IR is the hub every other stage talks through: the prompt layer asks an
//! LLM for netlist text, `parse_netlist` lifts it into [`CircuitIr`], the
//! verification pipeline and sizing loop serialize it back out with
//! [`emit_netlist`]. Node-role metadata (input/output/supply/type) rides along
//! as `* META key=value` comment directives so it survives any SPICE tool.

mod connectivity;
mod emit;
mod flatten;
mod parse;
pub mod units;

pub use connectivity::validate_connectivity;
pub use emit::emit_netlist;
pub use flatten::flatten;
pub use parse::{parse_netlist, ParseOutcome};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The 13 benchmark circuit types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitType {
    Amplifier,
    Inverter,
    CurrentMirror,
    Comparator,
    Filter,
    Opamp,
    Mixer,
    Oscillator,
    Integrator,
    Differentiator,
    Adder,
    Subtractor,
    SchmittTrigger,
}

impl CircuitType {
    pub const ALL: [CircuitType; 13] = [
        CircuitType::Amplifier,
        CircuitType::Inverter,
        CircuitType::CurrentMirror,
        CircuitType::Comparator,
        CircuitType::Filter,
        CircuitType::Opamp,
        CircuitType::Mixer,
        CircuitType::Oscillator,
        CircuitType::Integrator,
        CircuitType::Differentiator,
        CircuitType::Adder,
        CircuitType::Subtractor,
        CircuitType::SchmittTrigger,
    ];

    /// Self-generating circuits have no input node.
    pub fn is_self_generating(self) -> bool {
        matches!(self, CircuitType::Oscillator)
    }

    pub fn parse(s: &str) -> Option<CircuitType> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match norm.as_str() {
            "amplifier" | "amp" => CircuitType::Amplifier,
            "inverter" => CircuitType::Inverter,
            "currentmirror" => CircuitType::CurrentMirror,
            "comparator" => CircuitType::Comparator,
            "filter" => CircuitType::Filter,
            "opamp" | "operationalamplifier" => CircuitType::Opamp,
            "mixer" => CircuitType::Mixer,
            "oscillator" => CircuitType::Oscillator,
            "integrator" => CircuitType::Integrator,
            "differentiator" => CircuitType::Differentiator,
            "adder" => CircuitType::Adder,
            "subtractor" => CircuitType::Subtractor,
            "schmitttrigger" | "schmitt" => CircuitType::SchmittTrigger,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CircuitType::Amplifier => "amplifier",
            CircuitType::Inverter => "inverter",
            CircuitType::CurrentMirror => "current_mirror",
            CircuitType::Comparator => "comparator",
            CircuitType::Filter => "filter",
            CircuitType::Opamp => "opamp",
            CircuitType::Mixer => "mixer",
            CircuitType::Oscillator => "oscillator",
            CircuitType::Integrator => "integrator",
            CircuitType::Differentiator => "differentiator",
            CircuitType::Adder => "adder",
            CircuitType::Subtractor => "subtractor",
            CircuitType::SchmittTrigger => "schmitt_trigger",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nmos,
    Pmos,
    Other,
}

/// A `.model` card: named device model with numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub name: String,
    pub kind: ModelKind,
    pub params: BTreeMap<String, f64>,
}

impl DeviceModel {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Mosfet,
    Resistor,
    Capacitor,
    Inductor,
    VSource,
    ISource,
    SubcktInstance,
    Vcvs,
    Vccs,
}

impl ComponentKind {
    pub fn refdes_prefix(self) -> char {
        match self {
            ComponentKind::Mosfet => 'M',
            ComponentKind::Resistor => 'R',
            ComponentKind::Capacitor => 'C',
            ComponentKind::Inductor => 'L',
            ComponentKind::VSource => 'V',
            ComponentKind::ISource => 'I',
            ComponentKind::SubcktInstance => 'X',
            ComponentKind::Vcvs => 'E',
            ComponentKind::Vccs => 'G',
        }
    }

    pub fn from_refdes(refdes: &str) -> Option<ComponentKind> {
        Some(match refdes.chars().next()?.to_ascii_uppercase() {
            'M' => ComponentKind::Mosfet,
            'R' => ComponentKind::Resistor,
            'C' => ComponentKind::Capacitor,
            'L' => ComponentKind::Inductor,
            'V' => ComponentKind::VSource,
            'I' => ComponentKind::ISource,
            'X' => ComponentKind::SubcktInstance,
            'E' => ComponentKind::Vcvs,
            'G' => ComponentKind::Vccs,
            _ => return None,
        })
    }

    /// Required terminal count, `None` for variable (subcircuit instances).
    pub fn terminal_count(self) -> Option<usize> {
        match self {
            ComponentKind::Mosfet => Some(4),
            ComponentKind::Vcvs | ComponentKind::Vccs => Some(4),
            ComponentKind::SubcktInstance => None,
            _ => Some(2),
        }
    }
}

/// Time-domain stimulus descriptor for independent sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum TransientSpec {
    Sine {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    Pulse {
        v1: f64,
        v2: f64,
        delay: f64,
        rise: f64,
        fall: f64,
        width: f64,
        period: f64,
    },
}

/// DC level, AC magnitude/phase, and transient stimulus for V/I sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SourceSpec {
    pub dc: f64,
    pub ac_mag: Option<f64>,
    pub ac_phase_deg: f64,
    pub transient: Option<TransientSpec>,
}

impl SourceSpec {
    pub fn dc(v: f64) -> SourceSpec {
        SourceSpec {
            dc: v,
            ..SourceSpec::default()
        }
    }
}

/// One circuit element. MOSFET terminal order is drain, gate, source, bulk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub refdes: String,
    pub kind: ComponentKind,
    pub terminals: Vec<String>,
    pub model: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub source: Option<SourceSpec>,
    pub initial_condition: Option<f64>,
}

impl Component {
    pub fn new(refdes: impl Into<String>, kind: ComponentKind, terminals: &[&str]) -> Component {
        Component {
            refdes: refdes.into(),
            kind,
            terminals: terminals.iter().map(|s| s.to_string()).collect(),
            model: None,
            params: BTreeMap::new(),
            source: None,
            initial_condition: None,
        }
    }

    pub fn with_value(mut self, value: f64) -> Component {
        self.params.insert("value".into(), value);
        self
    }

    pub fn with_model(mut self, model: &str) -> Component {
        self.model = Some(model.to_string());
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Component {
        self.params.insert(key.into(), value);
        self
    }

    pub fn with_source(mut self, source: SourceSpec) -> Component {
        self.source = Some(source);
        self
    }

    pub fn value(&self) -> Option<f64> {
        self.params.get("value").copied()
    }
}

/// Reusable block: named ports plus a body of components and local models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcircuitDef {
    pub name: String,
    pub ports: Vec<String>,
    pub body: Vec<Component>,
    pub models: Vec<DeviceModel>,
}

/// Node-role metadata carried in `* META` directives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRoles {
    pub input: Option<String>,
    pub output: String,
    pub supply: Option<(String, f64)>,
    pub reference: Option<(String, f64)>,
    pub circuit_type: CircuitType,
}

impl NodeRoles {
    pub fn supply_voltage(&self) -> Option<f64> {
        self.supply.as_ref().map(|(_, v)| *v)
    }
}

/// Canonical ground net name. `gnd`/`GND` parse to this.
pub const GROUND: &str = "0";

pub fn canonical_net(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    if lower == "0" || lower == "gnd" || lower == "ground" {
        GROUND.to_string()
    } else {
        lower
    }
}

/// The circuit intermediate representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitIr {
    pub title: String,
    pub models: Vec<DeviceModel>,
    pub components: Vec<Component>,
    pub subcircuits: BTreeMap<String, SubcircuitDef>,
    pub meta: NodeRoles,
}

impl CircuitIr {
    pub fn component(&self, refdes: &str) -> Option<&Component> {
        self.components
            .iter()
            .find(|c| c.refdes.eq_ignore_ascii_case(refdes))
    }

    pub fn model(&self, name: &str) -> Option<&DeviceModel> {
        self.models
            .iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
    }

    /// All nets touched by top-level components.
    pub fn nets(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.components {
            for t in &c.terminals {
                seen.insert(t.clone());
            }
        }
        seen.into_iter().collect()
    }

    /// The V source whose positive terminal is `net`, if any.
    pub fn source_driving(&self, net: &str) -> Option<&Component> {
        let net = canonical_net(net);
        self.components.iter().find(|c| {
            c.kind == ComponentKind::VSource
                && c.terminals.first().map(|t| canonical_net(t)) == Some(net.clone())
        })
    }

    /// Wraps the whole circuit into a subcircuit definition with the given
    /// ports, dropping the port nets' driving V sources (the caller's
    /// testbench supplies them). Internal supplies are preserved.
    pub fn to_subcircuit(&self, name: &str, ports: &[&str]) -> SubcircuitDef {
        let port_set: std::collections::BTreeSet<String> =
            ports.iter().map(|p| canonical_net(p)).collect();
        let body: Vec<Component> = self
            .components
            .iter()
            .filter(|c| {
                // Keep everything except sources that drive a port net
                // directly against ground (those belong to the testbench).
                if c.kind != ComponentKind::VSource {
                    return true;
                }
                let plus = c.terminals.first().map(|t| canonical_net(t));
                let minus = c.terminals.get(1).map(|t| canonical_net(t));
                !(plus.map(|p| port_set.contains(&p)).unwrap_or(false)
                    && minus.as_deref() == Some(GROUND))
            })
            .cloned()
            .collect();
        SubcircuitDef {
            name: name.to_string(),
            ports: ports.iter().map(|p| canonical_net(p)).collect(),
            body,
            models: self.models.clone(),
        }
    }
}

/// Relative-tolerance float comparison used by structural equality.
fn close(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= 1e-12 * scale.max(1e-300)
}

fn params_close(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> bool {
    a.len() == b.len()
        && a.iter()
            .all(|(k, va)| b.get(k).map(|vb| close(*va, *vb)).unwrap_or(false))
}

fn component_eq(a: &Component, b: &Component) -> bool {
    a.refdes.eq_ignore_ascii_case(&b.refdes)
        && a.kind == b.kind
        && a.terminals.len() == b.terminals.len()
        && a.terminals
            .iter()
            .zip(&b.terminals)
            .all(|(x, y)| canonical_net(x) == canonical_net(y))
        && a.model.as_deref().map(|m| m.to_ascii_lowercase())
            == b.model.as_deref().map(|m| m.to_ascii_lowercase())
        && params_close(&a.params, &b.params)
        && a.source == b.source
        && match (a.initial_condition, b.initial_condition) {
            (Some(x), Some(y)) => close(x, y),
            (None, None) => true,
            _ => false,
        }
}

/// Structural equality: component multiset, models (params within 1e-12
/// relative), subcircuits, and node roles. Component order is irrelevant.
pub fn structurally_equal(a: &CircuitIr, b: &CircuitIr) -> bool {
    if a.components.len() != b.components.len() || a.models.len() != b.models.len() {
        return false;
    }
    let mut used = vec![false; b.components.len()];
    for ca in &a.components {
        let found = b.components.iter().enumerate().find(|(i, cb)| {
            !used[*i] && component_eq(ca, cb)
        });
        match found {
            Some((i, _)) => used[i] = true,
            None => return false,
        }
    }
    for ma in &a.models {
        let Some(mb) = b.model(&ma.name) else {
            return false;
        };
        if ma.kind != mb.kind || !params_close(&ma.params, &mb.params) {
            return false;
        }
    }
    if a.subcircuits.len() != b.subcircuits.len() {
        return false;
    }
    for (name, sa) in &a.subcircuits {
        let Some(sb) = b.subcircuits.get(name) else {
            return false;
        };
        if sa.ports.iter().map(|p| canonical_net(p)).collect::<Vec<_>>()
            != sb.ports.iter().map(|p| canonical_net(p)).collect::<Vec<_>>()
        {
            return false;
        }
        if sa.body.len() != sb.body.len() {
            return false;
        }
        let mut used = vec![false; sb.body.len()];
        for ca in &sa.body {
            let found = sb
                .body
                .iter()
                .enumerate()
                .find(|(i, cb)| !used[*i] && component_eq(ca, cb));
            match found {
                Some((i, _)) => used[i] = true,
                None => return false,
            }
        }
    }
    a.meta.input.as_deref().map(canonical_net) == b.meta.input.as_deref().map(canonical_net)
        && canonical_net(&a.meta.output) == canonical_net(&b.meta.output)
        && match (&a.meta.supply, &b.meta.supply) {
            (Some((na, va)), Some((nb, vb))) => canonical_net(na) == canonical_net(nb) && close(*va, *vb),
            (None, None) => true,
            _ => false,
        }
        && a.meta.circuit_type == b.meta.circuit_type
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn common_source_amp() -> CircuitIr {
        let mut nmos_params = BTreeMap::new();
        nmos_params.insert("level".to_string(), 1.0);
        nmos_params.insert("kp".to_string(), 100e-6);
        nmos_params.insert("vto".to_string(), 0.5);
        CircuitIr {
            title: "common-source amplifier".into(),
            models: vec![DeviceModel {
                name: "nmos_model".into(),
                kind: ModelKind::Nmos,
                params: nmos_params,
            }],
            components: vec![
                Component::new("M1", ComponentKind::Mosfet, &["vout", "vin", "0", "0"])
                    .with_model("nmos_model")
                    .with_param("w", 5e-6)
                    .with_param("l", 0.045e-6),
                Component::new("R1", ComponentKind::Resistor, &["vout", "vdd"]).with_value(10e3),
                Component::new("V1", ComponentKind::VSource, &["vdd", "0"])
                    .with_source(SourceSpec::dc(5.0)),
                Component::new("V2", ComponentKind::VSource, &["vin", "0"])
                    .with_source(SourceSpec::dc(0.7)),
            ],
            subcircuits: BTreeMap::new(),
            meta: NodeRoles {
                input: Some("vin".into()),
                output: "vout".into(),
                supply: Some(("vdd".into(), 5.0)),
                reference: None,
                circuit_type: CircuitType::Amplifier,
            },
        }
    }
}

/// Errors from circuit_ir operations.
#[derive(Debug, thiserror::Error)]
pub enum CircuitError {
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("parse error at line {line}: {message} [{snippet}]")]
    ParseError {
        line: usize,
        message: String,
        snippet: String,
    },
    #[error("missing META directives: {0}")]
    MissingMeta(String),
    #[error("unknown subcircuit: {0}")]
    UnknownSubcircuit(String),
}
