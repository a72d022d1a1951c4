//! Analysis requests shared by the deck emitter and the simulation driver.

use serde::{Deserialize, Serialize};

/// One analysis directive for the SPICE engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnalysisRequest {
    Op,
    DcSweep {
        source: String,
        start: f64,
        stop: f64,
        steps: usize,
    },
    Transient {
        step: f64,
        stop: f64,
        use_initial_conditions: bool,
    },
    Ac {
        points_per_decade: usize,
        fstart: f64,
        fstop: f64,
    },
    /// Up-then-down DC sweep pair, used for hysteresis extraction.
    DcTransfer {
        source: String,
        start: f64,
        stop: f64,
        steps: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid analysis request: {0}")]
    Invalid(String),
}

impl AnalysisRequest {
    /// Stable identifier used as the key in simulation results.
    pub fn id(&self) -> &'static str {
        match self {
            AnalysisRequest::Op => "op",
            AnalysisRequest::DcSweep { .. } => "dc_sweep",
            AnalysisRequest::Transient { .. } => "transient",
            AnalysisRequest::Ac { .. } => "ac",
            AnalysisRequest::DcTransfer { .. } => "dc_transfer",
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        match self {
            AnalysisRequest::Op => Ok(()),
            AnalysisRequest::DcSweep {
                start, stop, steps, ..
            }
            | AnalysisRequest::DcTransfer {
                start, stop, steps, ..
            } => {
                if start >= stop {
                    return Err(AnalysisError::Invalid(format!(
                        "sweep start {start} must be below stop {stop}"
                    )));
                }
                if *steps < 2 {
                    return Err(AnalysisError::Invalid(format!(
                        "sweep needs at least 2 steps, got {steps}"
                    )));
                }
                Ok(())
            }
            AnalysisRequest::Transient { step, stop, .. } => {
                if *step <= 0.0 || *stop <= 0.0 || step >= stop {
                    return Err(AnalysisError::Invalid(format!(
                        "transient needs 0 < step < stop, got step={step} stop={stop}"
                    )));
                }
                Ok(())
            }
            AnalysisRequest::Ac {
                points_per_decade,
                fstart,
                fstop,
            } => {
                if *fstart <= 0.0 || fstart >= fstop {
                    return Err(AnalysisError::Invalid(format!(
                        "ac needs 0 < fstart < fstop, got {fstart}..{fstop}"
                    )));
                }
                if *points_per_decade == 0 {
                    return Err(AnalysisError::Invalid("ac needs points per decade".into()));
                }
                Ok(())
            }
        }
    }

    /// Renders the control lines for this request.
    pub fn control_lines(&self) -> Vec<String> {
        use crate::circuit::units::format_spice_value as fv;
        match self {
            AnalysisRequest::Op => vec![".op".into()],
            AnalysisRequest::DcSweep {
                source,
                start,
                stop,
                steps,
            } => {
                let inc = (stop - start) / (*steps as f64 - 1.0);
                vec![format!(
                    ".dc {} {} {} {}",
                    source.to_ascii_lowercase(),
                    fv(*start),
                    fv(*stop),
                    fv(inc)
                )]
            }
            AnalysisRequest::Transient {
                step,
                stop,
                use_initial_conditions,
            } => {
                let uic = if *use_initial_conditions { " uic" } else { "" };
                vec![format!(".tran {} {}{uic}", fv(*step), fv(*stop))]
            }
            AnalysisRequest::Ac {
                points_per_decade,
                fstart,
                fstop,
            } => vec![format!(
                ".ac dec {points_per_decade} {} {}",
                fv(*fstart),
                fv(*fstop)
            )],
            AnalysisRequest::DcTransfer {
                source,
                start,
                stop,
                steps,
            } => {
                let inc = (stop - start) / (*steps as f64 - 1.0);
                let src = source.to_ascii_lowercase();
                vec![
                    format!(".dc {src} {} {} {}", fv(*start), fv(*stop), fv(inc)),
                    format!(".dc {src} {} {} {}", fv(*stop), fv(*start), fv(-inc)),
                ]
            }
        }
    }
}
