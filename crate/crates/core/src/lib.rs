//! Equilibrium selection for finite N-player games through the Fokker–Planck
//! gradient flow on the product strategy graph.
//!
//! A [`Game`] and its [`StrategyGraph`] define a flow on the probability
//! simplex over joint profiles. At noise level `β > 0` the flow has a unique
//! stationary measure (the Gibbs measure for potential games); driving
//! `β → 0` ranks the pure Nash equilibria by their limit mass.
//!
//! ```
//! use equiselect::{load_game, Density, SolverConfig, stationary_measure};
//!
//! let game = load_game(r#"{"players": 2, "strategies": [["C","D"],["C","D"]],
//!     "costs": [[1,3,0,2],[1,0,3,2]]}"#).unwrap();
//! let graph = game.graph().unwrap();
//! let s = stationary_measure(&game, &graph, 0.5, &Density::uniform(4), &SolverConfig::new(0.5)).unwrap();
//! assert!(s.density[3] > 0.5);
//! ```

mod density;
mod diagnostics;
mod error;
mod fpe;
mod game;
mod graph;
mod io;
mod jump;
mod selection;
mod solver;
mod steady;

pub use density::{Density, MASS_TOL};
pub use diagnostics::{
    free_energy, h_theorem_check, relative_entropy, relative_fisher, DiagnosticSample, DiagnosticsReport, RateFit,
    FIT_FLOOR,
};
pub use error::{Error, Result};
pub use fpe::{edge_fluxes, fpe_rhs, gibbs_measure, log_partition, rate_matrix_beta0, upwind_weight, EdgeFlux};
pub use game::{
    build_product, detect_potential, detect_potential_with_tol, enumerate_pure_ne, load_game, Game, GameDocument,
    NashSet, PotentialCertificate, PotentialWitness, SwitchEdges, LABEL_SEPARATOR, POTENTIAL_TOL,
};
pub use graph::{Edge, EdgeList, PlayerGraph, StrategyGraph};
pub use io::{density_from_json, density_to_json, read_trajectory_csv, write_trajectory_csv};
pub use jump::{simulate, step_ensemble, Ensemble, SimConfig, SimTrajectory, MAX_EXIT_PROBABILITY};
pub use selection::{
    limit_diagnostics, select_equilibria, AnnealingSchedule, HistoryEntry, LimitEntry, LimitReport, NashMass,
    RankedEquilibria, StopReason, SUPPORT_FLOOR,
};
pub use solver::{
    integrate, stationary_measure, SolverConfig, StationaryMeasure, StationaryMethod, Termination, Trajectory,
    TrajectorySample, RESOLUTION_TOL,
};
