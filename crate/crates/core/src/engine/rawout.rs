//! ngspice-style ASCII raw file writer.

use super::{EngineOutput, Plot, PlotData};
use std::fmt::Write;

/// Serializes every plot into one ASCII raw file, the format ngspice
/// produces with `-r` plus `set filetype=ascii`. The date line is fixed so
/// identical runs produce identical bytes.
pub fn write_ascii_rawfile(out: &EngineOutput) -> String {
    let mut s = String::new();
    for plot in &out.plots {
        write_plot(&mut s, &out.title, plot);
    }
    s
}

fn write_plot(s: &mut String, title: &str, plot: &Plot) {
    let points = plot.points();
    let complex = matches!(plot.data, PlotData::Complex(_));
    let _ = writeln!(s, "Title: {title}");
    let _ = writeln!(s, "Date: n/a");
    let _ = writeln!(s, "Plotname: {}", plot.name);
    let _ = writeln!(s, "Flags: {}", if complex { "complex" } else { "real" });
    let _ = writeln!(s, "No. Variables: {}", plot.vars.len());
    let _ = writeln!(s, "No. Points: {points}");
    let _ = writeln!(s, "Variables:");
    for (i, (name, ty)) in plot.vars.iter().enumerate() {
        let _ = writeln!(s, "\t{i}\t{name}\t{ty}");
    }
    let _ = writeln!(s, "Values:");
    for p in 0..points {
        // First value on the index line, remaining values tab-indented.
        let mut first = true;
        for v in plot_row(plot, p) {
            let rendered = match v {
                RawValue::Real(x) => format!("{x:.16e}"),
                RawValue::Complex(re, im) => format!("{re:.16e},{im:.16e}"),
            };
            if first {
                let _ = writeln!(s, "{p}\t{rendered}");
                first = false;
            } else {
                let _ = writeln!(s, "\t{rendered}");
            }
        }
    }
    s.push('\n');
}

enum RawValue {
    Real(f64),
    Complex(f64, f64),
}

fn plot_row<'a>(plot: &'a Plot, point: usize) -> Box<dyn Iterator<Item = RawValue> + 'a> {
    match &plot.data {
        PlotData::Real(cols) => Box::new(cols.iter().map(move |c| RawValue::Real(c[point]))),
        PlotData::Complex(cols) => Box::new(
            cols.iter()
                .map(move |c| RawValue::Complex(c[point].0, c[point].1)),
        ),
    }
}
