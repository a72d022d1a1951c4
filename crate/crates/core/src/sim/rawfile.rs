//! ASCII raw file parser (bit-level contract with the engine).

/// One plot block from a raw file. Values are stored as (re, im) pairs;
/// real plots have im = 0.
#[derive(Debug, Clone)]
pub struct RawPlot {
    pub plotname: String,
    pub complex: bool,
    /// (name, type) per variable, lowercased names.
    pub vars: Vec<(String, String)>,
    /// data[var][point]
    pub data: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RawParseError {
    #[error("raw file: {0}")]
    Malformed(String),
}

fn parse_value(tok: &str) -> Result<(f64, f64), RawParseError> {
    let bad = || RawParseError::Malformed(format!("bad value token {tok}"));
    if let Some((re, im)) = tok.split_once(',') {
        Ok((
            re.trim().parse().map_err(|_| bad())?,
            im.trim().parse().map_err(|_| bad())?,
        ))
    } else {
        Ok((tok.trim().parse().map_err(|_| bad())?, 0.0))
    }
}

/// Normalizes a raw vector name: lowercase, `x#branch` kept as-is, bare node
/// names wrapped as `v(name)` when the type says voltage.
fn canonical_var(name: &str, ty: &str) -> String {
    let name = name.to_ascii_lowercase();
    if ty.eq_ignore_ascii_case("voltage")
        && !name.starts_with("v(")
        && !name.contains('#')
        && !name.starts_with('@')
        && name != "v-sweep"
    {
        format!("v({name})")
    } else {
        name
    }
}

/// Parses a (possibly multi-plot) ASCII raw file.
pub fn parse_ascii_rawfile(text: &str) -> Result<Vec<RawPlot>, RawParseError> {
    let mut plots = Vec::new();
    let mut lines = text.lines().peekable();

    while let Some(line) = lines.next() {
        let line = line.trim_end();
        if !line.starts_with("Title:") {
            continue;
        }
        let mut plotname = String::new();
        let mut complex = false;
        let mut n_vars = 0usize;
        let mut n_points = 0usize;
        let mut vars: Vec<(String, String)> = Vec::new();

        // Header section.
        while let Some(header) = lines.next() {
            let header = header.trim_end();
            if let Some(rest) = header.strip_prefix("Plotname:") {
                plotname = rest.trim().to_string();
            } else if let Some(rest) = header.strip_prefix("Flags:") {
                complex = rest.to_ascii_lowercase().contains("complex");
            } else if let Some(rest) = header.strip_prefix("No. Variables:") {
                n_vars = rest
                    .trim()
                    .parse()
                    .map_err(|_| RawParseError::Malformed("bad variable count".into()))?;
            } else if let Some(rest) = header.strip_prefix("No. Points:") {
                n_points = rest
                    .trim()
                    .parse()
                    .map_err(|_| RawParseError::Malformed("bad point count".into()))?;
            } else if header.starts_with("Variables:") {
                for _ in 0..n_vars {
                    let vline = lines
                        .next()
                        .ok_or_else(|| RawParseError::Malformed("truncated variables".into()))?;
                    let fields: Vec<&str> = vline.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(RawParseError::Malformed(format!(
                            "bad variable line: {vline}"
                        )));
                    }
                    vars.push((
                        canonical_var(fields[1], fields[2]),
                        fields[2].to_ascii_lowercase(),
                    ));
                }
            } else if header.starts_with("Values:") {
                break;
            }
        }
        if vars.len() != n_vars {
            return Err(RawParseError::Malformed(format!(
                "expected {n_vars} variables, found {}",
                vars.len()
            )));
        }

        // Values section: per point, n_vars tokens. The first is prefixed
        // with the point index.
        let mut data: Vec<Vec<(f64, f64)>> = vec![Vec::with_capacity(n_points); n_vars];
        for _ in 0..n_points {
            for v in 0..n_vars {
                let vline = lines
                    .next()
                    .ok_or_else(|| RawParseError::Malformed("truncated values".into()))?;
                let tok = if v == 0 {
                    vline
                        .split_whitespace()
                        .nth(1)
                        .ok_or_else(|| RawParseError::Malformed(format!("bad point line {vline}")))?
                } else {
                    vline.trim()
                };
                data[v].push(parse_value(tok)?);
            }
        }

        plots.push(RawPlot {
            plotname,
            complex,
            vars,
            data,
        });
    }
    Ok(plots)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "Title: divider\nDate: n/a\nPlotname: Operating Point\nFlags: real\nNo. Variables: 2\nNo. Points: 1\nVariables:\n\t0\tv(vmid)\tvoltage\n\t1\tv1#branch\tcurrent\nValues:\n0\t2.5000000000000000e0\n\t-2.5000000000000001e-4\n";

    #[test]
    fn parses_single_real_plot() {
        let plots = parse_ascii_rawfile(SAMPLE).unwrap();
        assert_eq!(plots.len(), 1);
        assert_eq!(plots[0].plotname, "Operating Point");
        assert!(!plots[0].complex);
        assert_eq!(plots[0].vars[0].0, "v(vmid)");
        assert_eq!(plots[0].data[0][0].0, 2.5);
    }

    #[test]
    fn bare_node_names_wrapped() {
        let text = SAMPLE.replace("v(vmid)", "vmid");
        let plots = parse_ascii_rawfile(&text).unwrap();
        assert_eq!(plots[0].vars[0].0, "v(vmid)");
    }

    #[test]
    fn complex_values_parsed() {
        let text = "Title: t\nDate: n/a\nPlotname: AC Analysis\nFlags: complex\nNo. Variables: 2\nNo. Points: 2\nVariables:\n\t0\tfrequency\tfrequency\n\t1\tv(out)\tvoltage\nValues:\n0\t1.0e0,0.0e0\n\t7.07e-1,-7.07e-1\n1\t1.0e1,0.0e0\n\t1.0e-1,-9.9e-1\n";
        let plots = parse_ascii_rawfile(text).unwrap();
        assert!(plots[0].complex);
        assert_eq!(plots[0].data[1][0], (0.707, -0.707));
    }

    #[test]
    fn engine_writer_roundtrip() {
        use crate::engine::{run_deck, write_ascii_rawfile};
        let deck = "divider\n* META input=Vin\n* META output=Vmid\n* META type=amplifier\nV1 vin 0 DC 5\nR1 vin vmid 10k\nR2 vmid 0 10k\n.op\n.dc v1 0 5 1\n.end";
        let out = run_deck(deck).unwrap();
        let raw = write_ascii_rawfile(&out);
        let plots = parse_ascii_rawfile(&raw).unwrap();
        assert_eq!(plots.len(), 2);
        assert_eq!(plots[0].plotname, "Operating Point");
        assert_eq!(plots[1].plotname, "DC transfer characteristic");
        assert_eq!(plots[1].data[0].len(), 6);
        let vmid_idx = plots[0].vars.iter().position(|(n, _)| n == "v(vmid)").unwrap();
        assert!((plots[0].data[vmid_idx][0].0 - 2.5).abs() < 1e-9);
    }
}
