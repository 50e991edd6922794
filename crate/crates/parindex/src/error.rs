use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("angle {theta} is within the binary-collision guard of ±π/2")]
    SingularAngle { theta: f64 },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step size underflow at τ = {tau}")]
    StepSizeUnderflow { tau: f64 },
    #[error("integration left the domain at τ = {tau}: {reason}")]
    DomainExit { tau: f64, reason: String },
    #[error("no convergence to an equilibrium within τ budget {tau_max}")]
    NoConvergence { tau_max: f64 },
    #[error("approach direction ambiguous (angle to e₋ {angle_minus}°, to e₊ {angle_plus}°)")]
    AmbiguousDirection { angle_minus: f64, angle_plus: f64 },
    #[error("potential is constant: every (±π/2, θ) is an equilibrium")]
    ContinuumEquilibria,
    #[error("θ = {theta} is not a critical point (|𝔘_θ| = {residual})")]
    NotACriticalPoint { theta: f64, residual: f64 },
    #[error("block is not hyperbolic (Δ = {delta})")]
    NonHyperbolicBlock { delta: f64 },
    #[error("critical point at θ = {theta} is degenerate")]
    DegenerateCriticalPoint { theta: f64 },
    #[error("orbit is homothetic (u ≡ 0)")]
    HomotheticOrbit,
    #[error("tangential crossing could not be resolved at τ = {tau}")]
    TangentialCrossingUnresolved { tau: f64 },
    #[error("frame has no graph representation over the q-plane")]
    GraphRepresentationFailed,
    #[error("count not stabilized under window growth ({first} vs {second})")]
    NotStabilized { first: i64, second: i64 },
    #[error("mesh not converged: N = {n} gives {coarse}, 2N gives {fine}")]
    MeshNotConverged { n: usize, coarse: i64, fine: i64 },
}

pub type Result<T> = std::result::Result<T, Error>;
