//! Level-1 square-law MOSFET evaluation.

/// Operating region, reported as telemetry (0/1/2 in raw files).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MosRegion {
    Cutoff,
    Triode,
    Saturation,
}

impl MosRegion {
    pub fn as_f64(self) -> f64 {
        match self {
            MosRegion::Cutoff => 0.0,
            MosRegion::Triode => 1.0,
            MosRegion::Saturation => 2.0,
        }
    }
}

/// Square-law drain current for `vds >= 0`.
/// Returns (id, gm, gds, region).
fn square_law(vgs: f64, vds: f64, beta: f64, vt: f64, lambda: f64) -> (f64, f64, f64, MosRegion) {
    let vov = vgs - vt;
    if vov <= 0.0 {
        // Subthreshold is off in level 1; keep a tiny gds for stability.
        return (0.0, 0.0, 0.0, MosRegion::Cutoff);
    }
    let clm = 1.0 + lambda * vds;
    if vds < vov {
        let id = beta * (vov * vds - 0.5 * vds * vds) * clm;
        let gm = beta * vds * clm;
        let gds = beta * (vov - vds) * clm + beta * (vov * vds - 0.5 * vds * vds) * lambda;
        (id, gm, gds, MosRegion::Triode)
    } else {
        let id = 0.5 * beta * vov * vov * clm;
        let gm = beta * vov * clm;
        let gds = 0.5 * beta * vov * vov * lambda;
        (id, gm, gds, MosRegion::Saturation)
    }
}

/// Full evaluation with polarity and reverse-mode handling.
///
/// `sigma` is +1 for NMOS, -1 for PMOS. Voltages are real node voltages.
/// Returns the drain current flowing into the drain terminal plus its
/// partial derivatives with respect to (vg, vd, vs), and telemetry.
pub struct MosEval {
    pub id: f64,
    pub did_dvg: f64,
    pub did_dvd: f64,
    pub did_dvs: f64,
    pub gm: f64,
    pub gds: f64,
    pub region: MosRegion,
}

pub fn mos_eval(
    sigma: f64,
    vg: f64,
    vd: f64,
    vs: f64,
    beta: f64,
    vto: f64,
    lambda: f64,
) -> MosEval {
    // Work in the polarity-transformed space where the device is an NMOS.
    let tg = sigma * vg;
    let td = sigma * vd;
    let ts = sigma * vs;
    let vt = sigma * vto;

    let (id_t, dg, dd, ds, gm, gds, region);
    if td >= ts {
        let (i, g_m, g_ds, reg) = square_law(tg - ts, td - ts, beta, vt, lambda);
        id_t = i;
        dg = g_m;
        dd = g_ds;
        ds = -(g_m + g_ds);
        gm = g_m;
        gds = g_ds;
        region = reg;
    } else {
        // Drain and source exchange roles.
        let (i, g_m, g_ds, reg) = square_law(tg - td, ts - td, beta, vt, lambda);
        id_t = -i;
        dg = -g_m;
        ds = -g_ds;
        dd = g_m + g_ds;
        gm = g_m;
        gds = g_ds;
        region = reg;
    }

    // Map back: sigma cancels in the derivatives (sigma^2 = 1).
    MosEval {
        id: sigma * id_t,
        did_dvg: dg,
        did_dvd: dd,
        did_dvs: ds,
        gm,
        gds,
        region,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmos_regions() {
        let beta = 100e-6 * (5e-6 / 0.045e-6);
        // Cutoff
        let e = mos_eval(1.0, 0.2, 5.0, 0.0, beta, 0.5, 0.0);
        assert_eq!(e.id, 0.0);
        assert_eq!(e.region, MosRegion::Cutoff);
        // Saturation: vgs=0.7, vds=2.5 > vov=0.2
        let e = mos_eval(1.0, 0.7, 2.5, 0.0, beta, 0.5, 0.0);
        assert_eq!(e.region, MosRegion::Saturation);
        let expect = 0.5 * beta * 0.2 * 0.2;
        assert!((e.id - expect).abs() < 1e-12);
        // Triode: vds=0.1 < vov
        let e = mos_eval(1.0, 0.7, 0.1, 0.0, beta, 0.5, 0.0);
        assert_eq!(e.region, MosRegion::Triode);
    }

    #[test]
    fn pmos_mirrors_nmos() {
        let beta = 50e-6 * 10.0;
        // PMOS with source at 5 V, gate at 4.3 V: vsg = 0.7 > |vtp| = 0.5.
        let e = mos_eval(-1.0, 4.3, 2.5, 5.0, beta, -0.5, 0.0);
        assert_eq!(e.region, MosRegion::Saturation);
        // Current flows source->drain, i.e. out of the drain terminal: id < 0.
        assert!(e.id < 0.0);
        let expect = -0.5 * beta * 0.2 * 0.2;
        assert!((e.id - expect).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let beta = 1e-3;
        let h = 1e-7;
        for (vg, vd, vs, sigma, vto) in [
            (0.9, 1.7, 0.0, 1.0, 0.5),
            (0.9, 0.2, 0.0, 1.0, 0.5),
            (0.9, -0.3, 0.0, 1.0, 0.5),
            (4.2, 2.0, 5.0, -1.0, -0.5),
            (4.2, 4.9, 5.0, -1.0, -0.5),
        ] {
            let e = mos_eval(sigma, vg, vd, vs, beta, vto, 0.02);
            let f = |g: f64, d: f64, s: f64| mos_eval(sigma, g, d, s, beta, vto, 0.02).id;
            let num_g = (f(vg + h, vd, vs) - f(vg - h, vd, vs)) / (2.0 * h);
            let num_d = (f(vg, vd + h, vs) - f(vg, vd - h, vs)) / (2.0 * h);
            let num_s = (f(vg, vd, vs + h) - f(vg, vd, vs - h)) / (2.0 * h);
            assert!((e.did_dvg - num_g).abs() < 1e-6, "vg deriv at {vg},{vd},{vs}");
            assert!((e.did_dvd - num_d).abs() < 1e-6, "vd deriv at {vg},{vd},{vs}");
            assert!((e.did_dvs - num_s).abs() < 1e-6, "vs deriv at {vg},{vd},{vs}");
        }
    }
}
