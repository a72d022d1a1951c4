// Scratch harness for engine experiments during development.

fn opamp_subckt() -> &'static str {
    "\
.subckt opamp vinp vinn vout
Vddi vddi 0 DC 5
Rb vddi nbias 43k
M5 nbias nbias 0 0 nmos_op w=10u l=1u
M6 ntail nbias 0 0 nmos_op w=10u l=1u
M1 nd1 vinn ntail 0 nmos_op w=50u l=1u
M2 nd2 vinp ntail 0 nmos_op w=50u l=1u
M3 nd1 nd1 vddi vddi pmos_op w=25u l=1u
M4 nd2 nd1 vddi vddi pmos_op w=25u l=1u
M7 vout nd2 vddi vddi pmos_op w=50u l=1u
M8 vout nbias 0 0 nmos_op w=20u l=1u
Cc nd2 vout 5p
.model nmos_op nmos level=1 kp=100u vto=0.5 lambda=0.02
.model pmos_op pmos level=1 kp=50u vto=-0.5 lambda=0.02
.ends
"
}

fn oscillator_deck(rf: &str, kickstart: bool) -> String {
    let kick = if kickstart {
        "Ck vout vref 1n IC=0.1\n"
    } else {
        ""
    };
    format!(
        "rc phase-shift oscillator
* META input=-
* META output=Vout
* META supply=Vdd:5
* META reference=Vref:2.5
* META type=oscillator
Vdd vdd 0 DC 5
Vref vref 0 DC 2.5
X1 vref feedback vout opamp
R1 vout node1 10k
C1 node1 vref 10n
R2 node1 node2 10k
C2 node2 vref 10n
R3 node2 feedback 10k
C3 feedback vref 10n
Rf feedback vout {rf}
Rin feedback vref 10k
{kick}{subckt}
.tran 8u 32m uic
.end",
        subckt = opamp_subckt()
    )
}

fn summarize(tag: &str, deck: &str) {
    let t0 = std::time::Instant::now();
    let out = analogforge::engine::run_deck(deck).unwrap();
    println!("--- {tag} ({:?}) ---", t0.elapsed());
    print!("{}", out.log);
    for plot in &out.plots {
        if let analogforge::engine::PlotData::Real(cols) = &plot.data {
            let vout_idx = plot
                .vars
                .iter()
                .position(|(n, _)| n == "v(vout)")
                .unwrap();
            let v = &cols[vout_idx];
            let n = v.len();
            if n < 8 {
                println!("vout = {v:?}");
                continue;
            }
            let q = n / 4;
            for (name, seg) in [
                ("q1", &v[..q]),
                ("q2", &v[q..2 * q]),
                ("q3", &v[2 * q..3 * q]),
                ("q4", &v[3 * q..]),
            ] {
                let max = seg.iter().cloned().fold(f64::MIN, f64::max);
                let min = seg.iter().cloned().fold(f64::MAX, f64::min);
                println!("{name}: min {min:.4} max {max:.4} ptp {:.4}", max - min);
            }
        }
    }
}

fn opamp_op_check() {
    let deck = format!(
        "opamp dc check
* META input=Vinp
* META output=Vout
* META supply=Vdd:5
* META type=opamp
Vdd vdd 0 DC 5
Vp vinp 0 DC 2.5
X1 vinp vinn vout opamp
Rf vout vinn 100k
Rin vinn 0 100k
{}
.op
.end",
        opamp_subckt()
    );
    let out = analogforge::engine::run_deck(&deck).unwrap();
    print!("{}", out.log);
    if let Some(plot) = out.plots.first() {
        if let analogforge::engine::PlotData::Real(cols) = &plot.data {
            for (i, (name, _)) in plot.vars.iter().enumerate() {
                if name.starts_with("v(") || name.contains("region") || name.contains("[id]") {
                    println!("{name} = {:.6}", cols[i][0]);
                }
            }
        }
    }
}

fn main() {
    opamp_op_check();
    summarize("round1 gain 20 (should decay)", &oscillator_deck("200k", false));
    summarize("round2 gain 100 + kickstart (should sustain)", &oscillator_deck("1meg", true));
}
