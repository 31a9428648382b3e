use thiserror::Error;

use crate::stats::GeeFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),
    #[error("no heartbeats detected")]
    NoBeatsDetected,
    #[error("no breath cycles detected")]
    NoCyclesDetected,
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("degenerate breath cycles: {0}")]
    DegenerateCycle(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("segment at {start_s} s of participant {participant} overlaps more than one label window")]
    AmbiguousLabel { participant: String, start_s: f64 },
    #[error("invalid study metadata: {0}")]
    InvalidMeta(String),
    #[error("column {0} is constant")]
    DegenerateColumn(String),
    #[error("GEE did not converge after {} iterations", .fit.n_iter)]
    NotConverged { fit: Box<GeeFit> },
    #[error("separation detected: {0}")]
    SeparationDetected(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("fit is not usable for inference: {0}")]
    InvalidFit(String),
    #[error("contrast not applicable: {0}")]
    ContrastNotApplicable(String),
}

impl Error {
    /// True for failures of the numerical core (as opposed to bad or short input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::SeparationDetected(_)
                | Error::SingularDesign(_)
                | Error::InvalidFit(_)
        )
    }
}
