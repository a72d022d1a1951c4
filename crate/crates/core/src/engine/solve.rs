//! MNA assembly and Newton-Raphson solution.

use super::mos::{mos_eval, MosRegion};
use crate::circuit::{
    flatten, CircuitIr, ComponentKind, ModelKind, TransientSpec, GROUND,
};
use nalgebra::{Complex, DMatrix, DVector};
use std::collections::BTreeMap;

pub type NodeId = Option<usize>;

const GMIN: f64 = 1e-12;
const ABSTOL: f64 = 1e-9;
const RELTOL: f64 = 1e-6;
const MAX_ITER: usize = 300;
const VLIMIT: f64 = 1.0;

#[derive(Debug, Clone)]
pub enum Elem {
    Resistor {
        a: NodeId,
        b: NodeId,
        g: f64,
    },
    Capacitor {
        a: NodeId,
        b: NodeId,
        c: f64,
        ic: Option<f64>,
    },
    Inductor {
        a: NodeId,
        b: NodeId,
        l: f64,
        branch: usize,
        ic: Option<f64>,
    },
    VSource {
        name: String,
        a: NodeId,
        b: NodeId,
        branch: usize,
        dc: f64,
        ac: Complex<f64>,
        tran: Option<TransientSpec>,
    },
    ISource {
        a: NodeId,
        b: NodeId,
        dc: f64,
        ac: Complex<f64>,
        tran: Option<TransientSpec>,
    },
    Vcvs {
        p: NodeId,
        n: NodeId,
        cp: NodeId,
        cn: NodeId,
        gain: f64,
        branch: usize,
    },
    Vccs {
        p: NodeId,
        n: NodeId,
        cp: NodeId,
        cn: NodeId,
        gm: f64,
    },
    Mosfet {
        name: String,
        d: NodeId,
        g: NodeId,
        s: NodeId,
        sigma: f64,
        beta: f64,
        vto: f64,
        lambda: f64,
    },
}

/// Circuit lowered to solver form: indexed nodes plus branch equations.
pub struct System {
    pub elems: Vec<Elem>,
    pub node_names: Vec<String>,
    pub node_index: BTreeMap<String, usize>,
    pub n_branches: usize,
    /// Branch index -> V-source name, for `<name>#branch` output vectors.
    pub branch_names: Vec<String>,
    /// .ic node voltage overrides for transient start.
    pub node_ics: BTreeMap<String, f64>,
    /// Nodes that get the convergence-aid conductance (MOSFET terminals),
    /// mirroring how SPICE applies gmin at nonlinear devices only. Linear
    /// circuits stay exact.
    pub gmin_nodes: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("{0}")]
    Build(String),
    #[error("newton iteration did not converge after {0} attempts")]
    NonConvergence(usize),
    #[error("singular matrix (check for floating or shorted nodes)")]
    Singular,
}

impl System {
    pub fn size(&self) -> usize {
        self.node_names.len() + self.n_branches
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.node_index.get(&name.to_ascii_lowercase()).copied()
    }
}

pub fn build_system(circuit: &CircuitIr) -> Result<System, SolveError> {
    let flat = flatten(circuit).map_err(|e| SolveError::Build(e.to_string()))?;

    let mut node_index = BTreeMap::new();
    let mut node_names = Vec::new();
    let intern = |name: &str, idx: &mut BTreeMap<String, usize>, names: &mut Vec<String>| {
        if name == GROUND {
            return None;
        }
        let key = name.to_ascii_lowercase();
        Some(*idx.entry(key.clone()).or_insert_with(|| {
            names.push(key.clone());
            names.len() - 1
        }))
    };

    let mut elems = Vec::new();
    let mut n_branches = 0usize;
    let mut branch_names = Vec::new();
    for comp in &flat.components {
        let term = |i: usize| -> &str { comp.terminals.get(i).map(|s| s.as_str()).unwrap_or(GROUND) };
        match comp.kind {
            ComponentKind::Resistor => {
                let r = comp.value().unwrap_or(0.0);
                if r == 0.0 {
                    return Err(SolveError::Build(format!("{}: zero resistance", comp.refdes)));
                }
                elems.push(Elem::Resistor {
                    a: intern(term(0), &mut node_index, &mut node_names),
                    b: intern(term(1), &mut node_index, &mut node_names),
                    g: 1.0 / r,
                });
            }
            ComponentKind::Capacitor => {
                elems.push(Elem::Capacitor {
                    a: intern(term(0), &mut node_index, &mut node_names),
                    b: intern(term(1), &mut node_index, &mut node_names),
                    c: comp.value().unwrap_or(0.0),
                    ic: comp.initial_condition,
                });
            }
            ComponentKind::Inductor => {
                let branch = n_branches;
                n_branches += 1;
                branch_names.push(format!("{}#branch", comp.refdes.to_ascii_lowercase()));
                elems.push(Elem::Inductor {
                    a: intern(term(0), &mut node_index, &mut node_names),
                    b: intern(term(1), &mut node_index, &mut node_names),
                    l: comp.value().unwrap_or(0.0),
                    branch,
                    ic: comp.initial_condition,
                });
            }
            ComponentKind::VSource => {
                let spec = comp.source.clone().unwrap_or_default();
                let branch = n_branches;
                n_branches += 1;
                branch_names.push(format!("{}#branch", comp.refdes.to_ascii_lowercase()));
                let phase = spec.ac_phase_deg.to_radians();
                elems.push(Elem::VSource {
                    name: comp.refdes.to_ascii_lowercase(),
                    a: intern(term(0), &mut node_index, &mut node_names),
                    b: intern(term(1), &mut node_index, &mut node_names),
                    branch,
                    dc: spec.dc,
                    ac: Complex::from_polar(spec.ac_mag.unwrap_or(0.0), phase),
                    tran: spec.transient,
                });
            }
            ComponentKind::ISource => {
                let spec = comp.source.clone().unwrap_or_default();
                let phase = spec.ac_phase_deg.to_radians();
                elems.push(Elem::ISource {
                    a: intern(term(0), &mut node_index, &mut node_names),
                    b: intern(term(1), &mut node_index, &mut node_names),
                    dc: spec.dc,
                    ac: Complex::from_polar(spec.ac_mag.unwrap_or(0.0), phase),
                    tran: spec.transient,
                });
            }
            ComponentKind::Vcvs => {
                let branch = n_branches;
                n_branches += 1;
                branch_names.push(format!("{}#branch", comp.refdes.to_ascii_lowercase()));
                elems.push(Elem::Vcvs {
                    p: intern(term(0), &mut node_index, &mut node_names),
                    n: intern(term(1), &mut node_index, &mut node_names),
                    cp: intern(term(2), &mut node_index, &mut node_names),
                    cn: intern(term(3), &mut node_index, &mut node_names),
                    gain: comp.params.get("gain").copied().unwrap_or(0.0),
                    branch,
                });
            }
            ComponentKind::Vccs => {
                elems.push(Elem::Vccs {
                    p: intern(term(0), &mut node_index, &mut node_names),
                    n: intern(term(1), &mut node_index, &mut node_names),
                    cp: intern(term(2), &mut node_index, &mut node_names),
                    cn: intern(term(3), &mut node_index, &mut node_names),
                    gm: comp.params.get("gain").copied().unwrap_or(0.0),
                });
            }
            ComponentKind::Mosfet => {
                let model_name = comp.model.clone().unwrap_or_default();
                let model = flat
                    .models
                    .iter()
                    .find(|m| m.name.eq_ignore_ascii_case(&model_name))
                    .ok_or_else(|| {
                        SolveError::Build(format!("{}: unknown model {model_name}", comp.refdes))
                    })?;
                let sigma = match model.kind {
                    ModelKind::Nmos => 1.0,
                    ModelKind::Pmos => -1.0,
                    ModelKind::Other => {
                        return Err(SolveError::Build(format!(
                            "{}: model {model_name} is not a MOSFET",
                            comp.refdes
                        )))
                    }
                };
                let kp = model.param("kp").unwrap_or(2e-5);
                let vto = model.param("vto").unwrap_or(if sigma > 0.0 { 0.5 } else { -0.5 });
                let lambda = model.param("lambda").unwrap_or(0.0);
                let w = comp.params.get("w").copied().unwrap_or(1e-6);
                let l = comp.params.get("l").copied().unwrap_or(1e-6);
                elems.push(Elem::Mosfet {
                    name: comp.refdes.to_ascii_lowercase(),
                    d: intern(term(0), &mut node_index, &mut node_names),
                    g: intern(term(1), &mut node_index, &mut node_names),
                    s: intern(term(2), &mut node_index, &mut node_names),
                    sigma,
                    beta: kp * w / l,
                    vto,
                    lambda,
                });
            }
            ComponentKind::SubcktInstance => {
                return Err(SolveError::Build(format!(
                    "{}: unflattened subcircuit instance",
                    comp.refdes
                )))
            }
        }
    }

    let mut gmin_nodes: Vec<usize> = elems
        .iter()
        .flat_map(|e| match e {
            Elem::Mosfet { d, g, s, .. } => vec![*d, *g, *s],
            _ => vec![],
        })
        .flatten()
        .collect();
    gmin_nodes.sort_unstable();
    gmin_nodes.dedup();

    Ok(System {
        elems,
        node_names,
        node_index,
        n_branches,
        branch_names,
        node_ics: BTreeMap::new(),
        gmin_nodes,
    })
}

/// State carried between transient steps.
#[derive(Clone)]
pub struct TranState {
    /// Per-capacitor (voltage across, current through) at the last accepted point.
    pub caps: Vec<(f64, f64)>,
    /// Per-inductor (current, voltage across).
    pub inds: Vec<(f64, f64)>,
}

pub enum StampMode<'a> {
    /// DC / operating point. Caps open, inductors short.
    Dc { source_scale: f64 },
    /// Transient step of size `h` ending at time `t`.
    Tran { h: f64, t: f64, state: &'a TranState },
}

fn source_value(dc: f64, tran: &Option<TransientSpec>, mode: &StampMode) -> f64 {
    match mode {
        StampMode::Dc { source_scale } => dc * source_scale,
        StampMode::Tran { t, .. } => match tran {
            Some(TransientSpec::Sine {
                offset,
                amplitude,
                frequency,
            }) => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            Some(TransientSpec::Pulse {
                v1,
                v2,
                delay,
                rise,
                fall,
                width,
                period,
            }) => {
                if *t < *delay {
                    *v1
                } else {
                    let mut tau = (t - delay) % period.max(1e-18);
                    if *period <= 0.0 {
                        tau = t - delay;
                    }
                    if tau < *rise {
                        v1 + (v2 - v1) * tau / rise.max(1e-18)
                    } else if tau < rise + width {
                        *v2
                    } else if tau < rise + width + fall {
                        v2 + (v1 - v2) * (tau - rise - width) / fall.max(1e-18)
                    } else {
                        *v1
                    }
                }
            }
            None => dc,
        },
    }
}

/// Assembles the linearized system about iterate `x`.
/// Returns (matrix, rhs, mos telemetry refresh closure inputs).
fn assemble(
    sys: &System,
    x: &DVector<f64>,
    mode: &StampMode,
    gmin: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n_nodes = sys.node_names.len();
    let size = sys.size();
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut z = DVector::<f64>::zeros(size);

    for i in &sys.gmin_nodes {
        a[(*i, *i)] += gmin;
    }

    let v = |id: NodeId, x: &DVector<f64>| -> f64 { id.map(|i| x[i]).unwrap_or(0.0) };
    let add = |m: &mut DMatrix<f64>, r: NodeId, c: NodeId, val: f64| {
        if let (Some(r), Some(c)) = (r, c) {
            m[(r, c)] += val;
        }
    };
    let bidx = |branch: usize| n_nodes + branch;

    let mut cap_counter = 0usize;
    let mut ind_counter = 0usize;
    for elem in &sys.elems {
        match elem {
            Elem::Resistor { a: na, b: nb, g } => {
                add(&mut a, *na, *na, *g);
                add(&mut a, *nb, *nb, *g);
                add(&mut a, *na, *nb, -*g);
                add(&mut a, *nb, *na, -*g);
            }
            Elem::Capacitor { a: na, b: nb, c, .. } => {
                let idx = cap_counter;
                cap_counter += 1;
                if let StampMode::Tran { h, state, .. } = mode {
                    let (v_prev, i_prev) = state.caps[idx];
                    let geq = 2.0 * c / h;
                    let j = geq * v_prev + i_prev;
                    add(&mut a, *na, *na, geq);
                    add(&mut a, *nb, *nb, geq);
                    add(&mut a, *na, *nb, -geq);
                    add(&mut a, *nb, *na, -geq);
                    if let Some(i) = na {
                        z[*i] += j;
                    }
                    if let Some(i) = nb {
                        z[*i] -= j;
                    }
                }
                // DC: open circuit, nothing to stamp.
            }
            Elem::Inductor {
                a: na,
                b: nb,
                l,
                branch,
                ..
            } => {
                let idx = ind_counter;
                ind_counter += 1;
                let br = bidx(*branch);
                add(&mut a, *na, Some(br), 1.0);
                add(&mut a, *nb, Some(br), -1.0);
                add(&mut a, Some(br), *na, 1.0);
                add(&mut a, Some(br), *nb, -1.0);
                match mode {
                    StampMode::Dc { .. } => {
                        // v_a - v_b = 0 (short): row already set, rhs zero.
                    }
                    StampMode::Tran { h, state, .. } => {
                        let (i_prev, v_prev) = state.inds[idx];
                        let req = 2.0 * l / h;
                        a[(br, br)] -= req;
                        z[br] = -req * i_prev - v_prev;
                    }
                }
            }
            Elem::VSource {
                a: na,
                b: nb,
                branch,
                dc,
                tran,
                ..
            } => {
                let br = bidx(*branch);
                add(&mut a, *na, Some(br), 1.0);
                add(&mut a, *nb, Some(br), -1.0);
                add(&mut a, Some(br), *na, 1.0);
                add(&mut a, Some(br), *nb, -1.0);
                z[br] = source_value(*dc, tran, mode);
            }
            Elem::ISource {
                a: na, b: nb, dc, tran, ..
            } => {
                let j = source_value(*dc, tran, mode);
                if let Some(i) = na {
                    z[*i] -= j;
                }
                if let Some(i) = nb {
                    z[*i] += j;
                }
            }
            Elem::Vcvs {
                p,
                n,
                cp,
                cn,
                gain,
                branch,
            } => {
                let br = bidx(*branch);
                add(&mut a, *p, Some(br), 1.0);
                add(&mut a, *n, Some(br), -1.0);
                add(&mut a, Some(br), *p, 1.0);
                add(&mut a, Some(br), *n, -1.0);
                add(&mut a, Some(br), *cp, -gain);
                add(&mut a, Some(br), *cn, *gain);
            }
            Elem::Vccs { p, n, cp, cn, gm } => {
                add(&mut a, *p, *cp, *gm);
                add(&mut a, *p, *cn, -*gm);
                add(&mut a, *n, *cp, -*gm);
                add(&mut a, *n, *cn, *gm);
            }
            Elem::Mosfet {
                d,
                g,
                s,
                sigma,
                beta,
                vto,
                lambda,
                ..
            } => {
                let e = mos_eval(*sigma, v(*g, x), v(*d, x), v(*s, x), *beta, *vto, *lambda);
                // Norton companion: i_d(v) ~ id0 + dIdV . (v - v0)
                let ieq =
                    e.id - e.did_dvg * v(*g, x) - e.did_dvd * v(*d, x) - e.did_dvs * v(*s, x);
                add(&mut a, *d, *g, e.did_dvg);
                add(&mut a, *d, *d, e.did_dvd);
                add(&mut a, *d, *s, e.did_dvs);
                add(&mut a, *s, *g, -e.did_dvg);
                add(&mut a, *s, *d, -e.did_dvd);
                add(&mut a, *s, *s, -e.did_dvs);
                if let Some(i) = d {
                    z[*i] -= ieq;
                }
                if let Some(i) = s {
                    z[*i] += ieq;
                }
            }
        }
    }
    (a, z)
}

fn has_nonlinear(sys: &System) -> bool {
    sys.elems.iter().any(|e| matches!(e, Elem::Mosfet { .. }))
}

/// Newton-Raphson with per-node voltage step limiting.
pub fn solve_newton(
    sys: &System,
    mode: &StampMode,
    x0: &DVector<f64>,
    gmin: f64,
) -> Result<DVector<f64>, SolveError> {
    let n_nodes = sys.node_names.len();
    let mut x = x0.clone();
    let nonlinear = has_nonlinear(sys);
    for _iter in 0..MAX_ITER {
        let (a, z) = assemble(sys, &x, mode, gmin);
        let lu = a.lu();
        let x_new = lu.solve(&z).ok_or(SolveError::Singular)?;
        if !nonlinear {
            return Ok(x_new);
        }
        let mut max_rel = 0.0f64;
        let mut next = x.clone();
        for i in 0..x.len() {
            let mut dx = x_new[i] - x[i];
            if i < n_nodes {
                dx = dx.clamp(-VLIMIT, VLIMIT);
            }
            next[i] = x[i] + dx;
            let denom = ABSTOL + RELTOL * next[i].abs().max(x[i].abs());
            max_rel = max_rel.max((x_new[i] - x[i]).abs() / denom);
        }
        x = next;
        if max_rel < 1.0 {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(SolveError::NonConvergence(MAX_ITER));
            }
            return Ok(x);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolveError::NonConvergence(MAX_ITER));
        }
    }
    Err(SolveError::NonConvergence(MAX_ITER))
}

/// Operating point with gmin and source stepping fallbacks.
pub fn solve_op(sys: &System, warm: Option<&DVector<f64>>) -> Result<DVector<f64>, SolveError> {
    let size = sys.size();
    let zero = DVector::zeros(size);
    let x0 = warm.cloned().unwrap_or(zero);
    let direct = solve_newton(sys, &StampMode::Dc { source_scale: 1.0 }, &x0, GMIN);
    if direct.is_ok() {
        return direct;
    }
    // gmin stepping
    let mut x = x0.clone();
    let mut ok = true;
    for gmin in [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, GMIN] {
        match solve_newton(sys, &StampMode::Dc { source_scale: 1.0 }, &x, gmin) {
            Ok(sol) => x = sol,
            Err(_) => {
                ok = false;
                break;
            }
        }
    }
    if ok {
        return Ok(x);
    }
    // source stepping
    let mut x = DVector::zeros(size);
    for step in 1..=20 {
        let scale = step as f64 / 20.0;
        x = solve_newton(
            sys,
            &StampMode::Dc {
                source_scale: scale,
            },
            &x,
            GMIN,
        )?;
    }
    Ok(x)
}

/// Per-device operating-point telemetry.
pub struct MosTelemetry {
    pub name: String,
    pub id: f64,
    pub vgs: f64,
    pub vds: f64,
    pub vth: f64,
    pub gm: f64,
    pub gds: f64,
    pub region: MosRegion,
}

pub fn mos_telemetry(sys: &System, x: &DVector<f64>) -> Vec<MosTelemetry> {
    let v = |id: NodeId| -> f64 { id.map(|i| x[i]).unwrap_or(0.0) };
    sys.elems
        .iter()
        .filter_map(|e| match e {
            Elem::Mosfet {
                name,
                d,
                g,
                s,
                sigma,
                beta,
                vto,
                lambda,
            } => {
                let eval = mos_eval(*sigma, v(*g), v(*d), v(*s), *beta, *vto, *lambda);
                Some(MosTelemetry {
                    name: name.clone(),
                    id: eval.id,
                    vgs: v(*g) - v(*s),
                    vds: v(*d) - v(*s),
                    vth: *vto,
                    gm: eval.gm,
                    gds: eval.gds,
                    region: eval.region,
                })
            }
            _ => None,
        })
        .collect()
}

/// Initializes transient state from a solution vector (op or UIC zeros).
pub fn init_tran_state(sys: &System, x: &DVector<f64>, uic: bool) -> TranState {
    let v = |id: NodeId| -> f64 { id.map(|i| x[i]).unwrap_or(0.0) };
    let mut caps = Vec::new();
    let mut inds = Vec::new();
    for e in &sys.elems {
        match e {
            Elem::Capacitor { a, b, ic, .. } => {
                let v0 = if uic {
                    ic.unwrap_or(v(*a) - v(*b))
                } else {
                    v(*a) - v(*b)
                };
                caps.push((v0, 0.0));
            }
            Elem::Inductor { a, b, ic, branch, .. } => {
                let i0 = if uic {
                    ic.unwrap_or(0.0)
                } else {
                    x[sys.node_names.len() + branch]
                };
                inds.push((i0, v(*a) - v(*b)));
            }
            _ => {}
        }
    }
    TranState { caps, inds }
}

/// Updates transient memory after an accepted step.
pub fn update_tran_state(sys: &System, x: &DVector<f64>, h: f64, state: &mut TranState) {
    let v = |id: NodeId| -> f64 { id.map(|i| x[i]).unwrap_or(0.0) };
    let mut cap_i = 0usize;
    let mut ind_i = 0usize;
    for e in &sys.elems {
        match e {
            Elem::Capacitor { a, b, c, .. } => {
                let (v_prev, i_prev) = state.caps[cap_i];
                let v_new = v(*a) - v(*b);
                let geq = 2.0 * c / h;
                let i_new = geq * (v_new - v_prev) - i_prev;
                state.caps[cap_i] = (v_new, i_new);
                cap_i += 1;
            }
            Elem::Inductor { a, b, branch, .. } => {
                let i_new = x[sys.node_names.len() + branch];
                let v_new = v(*a) - v(*b);
                state.inds[ind_i] = (i_new, v_new);
                ind_i += 1;
            }
            _ => {}
        }
    }
}

/// Complex small-signal solve at angular frequency `w`, linearized about `op`.
pub fn solve_ac(
    sys: &System,
    op: &DVector<f64>,
    w: f64,
) -> Result<DVector<Complex<f64>>, SolveError> {
    let n_nodes = sys.node_names.len();
    let size = sys.size();
    let mut a = DMatrix::<Complex<f64>>::zeros(size, size);
    let mut z = DVector::<Complex<f64>>::zeros(size);
    let j = Complex::new(0.0, 1.0);

    for i in &sys.gmin_nodes {
        a[(*i, *i)] += Complex::new(GMIN, 0.0);
    }

    let vr = |id: NodeId| -> f64 { id.map(|i| op[i]).unwrap_or(0.0) };
    let add = |m: &mut DMatrix<Complex<f64>>, r: NodeId, c: NodeId, val: Complex<f64>| {
        if let (Some(r), Some(c)) = (r, c) {
            m[(r, c)] += val;
        }
    };
    let bidx = |branch: usize| n_nodes + branch;
    let one = Complex::new(1.0, 0.0);

    for elem in &sys.elems {
        match elem {
            Elem::Resistor { a: na, b: nb, g } => {
                let g = Complex::new(*g, 0.0);
                add(&mut a, *na, *na, g);
                add(&mut a, *nb, *nb, g);
                add(&mut a, *na, *nb, -g);
                add(&mut a, *nb, *na, -g);
            }
            Elem::Capacitor { a: na, b: nb, c, .. } => {
                let y = j * w * *c;
                add(&mut a, *na, *na, y);
                add(&mut a, *nb, *nb, y);
                add(&mut a, *na, *nb, -y);
                add(&mut a, *nb, *na, -y);
            }
            Elem::Inductor {
                a: na, b: nb, l, branch, ..
            } => {
                let br = bidx(*branch);
                add(&mut a, *na, Some(br), one);
                add(&mut a, *nb, Some(br), -one);
                add(&mut a, Some(br), *na, one);
                add(&mut a, Some(br), *nb, -one);
                a[(br, br)] -= j * w * *l;
            }
            Elem::VSource {
                a: na, b: nb, branch, ac, ..
            } => {
                let br = bidx(*branch);
                add(&mut a, *na, Some(br), one);
                add(&mut a, *nb, Some(br), -one);
                add(&mut a, Some(br), *na, one);
                add(&mut a, Some(br), *nb, -one);
                z[br] = *ac;
            }
            Elem::ISource { a: na, b: nb, ac, .. } => {
                if let Some(i) = na {
                    z[*i] -= *ac;
                }
                if let Some(i) = nb {
                    z[*i] += *ac;
                }
            }
            Elem::Vcvs {
                p,
                n,
                cp,
                cn,
                gain,
                branch,
            } => {
                let br = bidx(*branch);
                add(&mut a, *p, Some(br), one);
                add(&mut a, *n, Some(br), -one);
                add(&mut a, Some(br), *p, one);
                add(&mut a, Some(br), *n, -one);
                add(&mut a, Some(br), *cp, Complex::new(-gain, 0.0));
                add(&mut a, Some(br), *cn, Complex::new(*gain, 0.0));
            }
            Elem::Vccs { p, n, cp, cn, gm } => {
                let gm = Complex::new(*gm, 0.0);
                add(&mut a, *p, *cp, gm);
                add(&mut a, *p, *cn, -gm);
                add(&mut a, *n, *cp, -gm);
                add(&mut a, *n, *cn, gm);
            }
            Elem::Mosfet {
                d,
                g,
                s,
                sigma,
                beta,
                vto,
                lambda,
                ..
            } => {
                let e = mos_eval(*sigma, vr(*g), vr(*d), vr(*s), *beta, *vto, *lambda);
                let (gg, gd, gs) = (
                    Complex::new(e.did_dvg, 0.0),
                    Complex::new(e.did_dvd, 0.0),
                    Complex::new(e.did_dvs, 0.0),
                );
                add(&mut a, *d, *g, gg);
                add(&mut a, *d, *d, gd);
                add(&mut a, *d, *s, gs);
                add(&mut a, *s, *g, -gg);
                add(&mut a, *s, *d, -gd);
                add(&mut a, *s, *s, -gs);
            }
        }
    }

    let lu = a.lu();
    lu.solve(&z).ok_or(SolveError::Singular)
}
