//! Single-sided magnitude spectrum from transient data.

use super::{AxisKind, SimError, WaveformSeries};
use rustfft::{num_complex::Complex, FftPlanner};

/// Computes the single-sided amplitude spectrum of one signal.
///
/// The signal mean is removed before a periodic Hann window is applied and
/// the record is zero-padded to the next power of two; the removed mean is
/// reported as the DC bin. Amplitudes are coherent-gain corrected, so a
/// full-scale sine reads its time-domain amplitude at the peak bin.
/// Nonuniform time axes are linearly resampled onto a uniform grid first.
pub fn compute_fft(series: &WaveformSeries, signal: &str) -> Result<WaveformSeries, SimError> {
    let samples = series
        .signals
        .get(signal)
        .ok_or_else(|| SimError::MissingSignal(signal.to_string()))?;
    if samples.len() < 16 {
        return Err(SimError::TooFewSamples(samples.len()));
    }
    let n = samples.len();
    let t0 = series.axis[0];
    let t1 = series.axis[n - 1];
    let dt = (t1 - t0) / (n as f64 - 1.0);

    // Resample if the grid is visibly nonuniform.
    let uniform = series
        .axis
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt);
    let x: Vec<f64> = if uniform {
        samples.clone()
    } else {
        (0..n)
            .map(|i| {
                let t = t0 + dt * i as f64;
                interp(&series.axis, samples, t)
            })
            .collect()
    };

    let mean = x.iter().sum::<f64>() / n as f64;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    let coherent_gain: f64 = window.iter().sum();

    let m = n.next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|i| {
            if i < n {
                Complex::new((x[i] - mean) * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);

    let fs = 1.0 / dt;
    let half = m / 2;
    let mut axis = Vec::with_capacity(half + 1);
    let mut mag = Vec::with_capacity(half + 1);
    for k in 0..=half {
        axis.push(k as f64 * fs / m as f64);
        let amp = buf[k].norm() / coherent_gain;
        let scaled = if k == 0 {
            mean.abs()
        } else if k == half {
            amp
        } else {
            2.0 * amp
        };
        mag.push(scaled);
    }

    let mut signals = std::collections::BTreeMap::new();
    signals.insert("magnitude".to_string(), mag);
    Ok(WaveformSeries {
        axis,
        axis_kind: AxisKind::Frequency,
        signals,
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => ys[i],
        Err(0) => ys[0],
        Err(i) if i >= xs.len() => ys[ys.len() - 1],
        Err(i) => {
            let frac = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + frac * (ys[i] - ys[i - 1])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{AxisKind, WaveformSeries};
    use super::*;
    use std::collections::BTreeMap;

    fn tone_series(freqs: &[(f64, f64)], fs: f64, n: usize, offset: f64) -> WaveformSeries {
        let axis: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        let data: Vec<f64> = axis
            .iter()
            .map(|t| {
                offset
                    + freqs
                        .iter()
                        .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                        .sum::<f64>()
            })
            .collect();
        let mut signals = BTreeMap::new();
        signals.insert("v(vout)".to_string(), data);
        WaveformSeries {
            axis,
            axis_kind: AxisKind::Time,
            signals,
        }
    }

    #[test]
    fn single_tone_peaks_within_one_bin() {
        let s = tone_series(&[(1000.0, 1.0)], 100e3, 4096, 0.0);
        let spec = compute_fft(&s, "v(vout)").unwrap();
        let bin = spec.axis[1] - spec.axis[0];
        assert!((bin - 100e3 / 4096.0).abs() < 1e-9);
        let peak = spec.signals["magnitude"]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert!((spec.axis[peak] - 1000.0).abs() <= bin, "peak at {}", spec.axis[peak]);
    }

    #[test]
    fn two_tones_resolved() {
        let s = tone_series(&[(1000.0, 1.0), (1100.0, 0.8)], 100e3, 8192, 0.0);
        let spec = compute_fft(&s, "v(vout)").unwrap();
        let mags = &spec.signals["magnitude"];
        let bin = spec.axis[1] - spec.axis[0];
        let near = |f: f64| -> f64 {
            spec.axis
                .iter()
                .enumerate()
                .filter(|(_, x)| (**x - f).abs() <= 2.0 * bin)
                .map(|(i, _)| mags[i])
                .fold(0.0f64, f64::max)
        };
        assert!(near(1000.0) > 0.8);
        assert!(near(1100.0) > 0.6);
        assert!(near(1050.0) < 0.4);
    }

    #[test]
    fn constant_signal_is_pure_dc() {
        let s = tone_series(&[], 100e3, 1024, 2.5);
        let spec = compute_fft(&s, "v(vout)").unwrap();
        let mags = &spec.signals["magnitude"];
        assert!((mags[0] - 2.5).abs() < 1e-12);
        for (i, m) in mags.iter().enumerate().skip(1) {
            assert!(*m < 1e-9 * mags[0], "bin {i} = {m}");
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let s = tone_series(&[(1000.0, 1.0)], 100e3, 8, 0.0);
        assert!(matches!(
            compute_fft(&s, "v(vout)"),
            Err(SimError::TooFewSamples(8))
        ));
    }
}
