use thiserror::Error;

use crate::solver::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game document: {0}")]
    Schema(String),

    #[error("player {player}: cost tensor has {found} entries, expected {expected}")]
    CostLength {
        player: usize,
        found: usize,
        expected: usize,
    },

    #[error("player {player}: cost entry {index} is not finite")]
    NonFiniteCost { player: usize, index: usize },

    #[error("player {player}: duplicate strategy label {label:?}")]
    DuplicateLabel { player: usize, label: String },

    #[error("player {player}: edge ({from}, {to}) references a strategy outside 0..{count}")]
    EdgeOutOfRange {
        player: usize,
        from: usize,
        to: usize,
        count: usize,
    },

    #[error("player {player}: self-loop on strategy {vertex}")]
    SelfLoop { player: usize, vertex: usize },

    #[error("profile component {component} = {value} out of range 0..{radix}")]
    ProfileOutOfRange {
        component: usize,
        value: usize,
        radix: usize,
    },

    #[error("profile has {found} components, expected {expected}")]
    ProfileArity { found: usize, expected: usize },

    #[error("profile index {index} out of range 0..{size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("product strategy graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("zero mass at profile {index} while beta > 0")]
    ZeroMass { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration step underflow at t = {t:e} (dt < {dt_min:e})")]
    StepUnderflow {
        t: f64,
        dt_min: f64,
        partial: Box<Trajectory>,
    },

    #[error("no stationary measure found at beta = {beta}: residual {residual:e}")]
    NonConvergence { beta: f64, residual: f64 },

    #[error(
        "stationary measure at beta = {beta} is not determined in double precision: solutions differ by {spread:e}"
    )]
    Unresolved { beta: f64, spread: f64 },

    #[error("game is not a potential game")]
    NotPotential,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
