use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid with {n} nodes is too coarse for harmonics up to {k_max} (need at least {required})")]
    GridTooCoarse { n: usize, k_max: usize, required: usize },

    /// The loop is (numerically) zero, so `g(a u)` does not depend on `a`.
    #[error("degenerate loop: zero direction")]
    DegenerateLoop,

    /// `h <= V(0)`: the scaling map never falls below the target.
    #[error("energy {h} is not above V(0) = {v_origin}")]
    EnergyNotAboveOrigin { h: f64, v_origin: f64 },

    /// `g(a u)` stays below `h` up to the expansion cap.
    #[error("root not bracketed: g(a u) = {g_max} < h = {h} at a = {a_max}")]
    RootNotBracketed { h: f64, a_max: f64, g_max: f64 },

    #[error("scaling map is not monotone: dg/da = {slope} at a = {a}")]
    NonMonotoneScaling { a: f64, slope: f64 },

    #[error("projection did not reach tolerance: residual {residual} after {iterations} iterations")]
    ProjectionNotConverged { residual: f64, iterations: usize },

    #[error("constraint gradient vanishes; cannot project onto the tangent space")]
    VanishingConstraintGradient,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no start converged ({starts} attempted)")]
    NoConvergedStart { starts: usize },

    #[error("force integral {0} is not positive")]
    NonpositiveForce(f64),

    #[error("integrator blew up at step {step} (|q| = {norm})")]
    IntegratorBlowup { step: usize, norm: f64 },
}

impl Error {
    /// Strips iteration context.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root_cause(),
            other => other,
        }
    }

    /// True for errors meaning the target energy is unreachable by scaling.
    pub fn is_infeasible_energy(&self) -> bool {
        matches!(self.root_cause(), Error::RootNotBracketed { .. } | Error::EnergyNotAboveOrigin { .. })
    }
}
