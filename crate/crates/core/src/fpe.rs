//! Right-hand side of the discrete Fokker–Planck equation on a strategy graph.
//!
//! For each player `i` and each switch `x → y ∈ N_i(x)` the noisy cost
//! difference is `d = u_i(x) + β log ρ(x) − u_i(y) − β log ρ(y)`. Mass moves
//! from the side with the higher noisy cost at rate `|d|` times the upwind
//! density, so
//!
//! ```text
//! dρ(x)/dt = Σ_i Σ_{y ∈ N_i(x)} [−d]_+ ρ(y) − [d]_+ ρ(x)
//! ```
//!
//! Fluxes are accumulated once per undirected edge and scattered with
//! opposite signs, which keeps `Σ_x dρ(x)/dt` at rounding level.

use nalgebra::DMatrix;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::game::{check_compatible, Game};
use crate::graph::{Edge, StrategyGraph};

/// Edge density of upwind type: the density on the side with the larger
/// noisy cost, or the average on a tie.
#[inline]
pub fn upwind_weight(d: f64, rho_x: f64, rho_y: f64) -> f64 {
    if d > 0.0 {
        rho_x
    } else if d < 0.0 {
        rho_y
    } else {
        0.5 * (rho_x + rho_y)
    }
}

/// Flux data on one undirected edge `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFlux {
    pub edge: Edge,
    /// `ū_i(x) − ū_i(y)`.
    pub difference: f64,
    /// `g(x, y, ρ)`.
    pub weight: f64,
    /// Net mass rate from `x` to `y`; `m(y, x) = −m(x, y)`.
    pub flux: f64,
}

/// Per-edge noisy-cost differences, upwind weights and fluxes.
pub fn edge_fluxes(game: &Game, graph: &StrategyGraph, rho: &Density, beta: f64) -> Result<Vec<EdgeFlux>> {
    check_inputs(game, graph, rho.as_slice(), beta)?;
    let logs = log_terms(rho.as_slice(), beta)?;
    Ok(graph
        .edges()
        .iter()
        .map(|&edge| {
            let d = noisy_difference(game, edge, &logs, beta);
            let weight = upwind_weight(d, rho[edge.x], rho[edge.y]);
            EdgeFlux {
                edge,
                difference: d,
                weight,
                flux: d * weight,
            }
        })
        .collect())
}

/// `dρ/dt` at `rho`. Requires `rho > 0` everywhere when `beta > 0`.
pub fn fpe_rhs(game: &Game, graph: &StrategyGraph, rho: &Density, beta: f64) -> Result<Vec<f64>> {
    check_inputs(game, graph, rho.as_slice(), beta)?;
    let mut ws = RhsWorkspace::new(graph.size());
    let mut out = vec![0.0; graph.size()];
    ws.eval(game, graph, rho.as_slice(), beta, &mut out)?;
    Ok(out)
}

fn check_inputs(game: &Game, graph: &StrategyGraph, rho: &[f64], beta: f64) -> Result<()> {
    check_compatible(game, graph)?;
    check_beta(beta)?;
    if rho.len() != graph.size() {
        return Err(Error::InvalidDensity(format!(
            "density has {} entries, graph has {} profiles",
            rho.len(),
            graph.size()
        )));
    }
    Ok(())
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "beta must be finite and >= 0, got {beta}"
        )))
    }
}

fn log_terms(rho: &[f64], beta: f64) -> Result<Vec<f64>> {
    if beta == 0.0 {
        return Ok(vec![0.0; rho.len()]);
    }
    rho.iter()
        .enumerate()
        .map(|(index, &r)| {
            if r > 0.0 {
                Ok(r.ln())
            } else {
                Err(Error::ZeroMass { index })
            }
        })
        .collect()
}

#[inline]
fn noisy_difference(game: &Game, e: Edge, logs: &[f64], beta: f64) -> f64 {
    let d = game.cost(e.player, e.x) - game.cost(e.player, e.y);
    if beta == 0.0 {
        d
    } else {
        d + beta * (logs[e.x] - logs[e.y])
    }
}

/// Reusable buffers for repeated right-hand-side evaluations.
#[derive(Debug, Clone)]
pub(crate) struct RhsWorkspace {
    logs: Vec<f64>,
}

impl RhsWorkspace {
    pub(crate) fn new(size: usize) -> Self {
        Self { logs: vec![0.0; size] }
    }

    /// Writes `dρ/dt` into `out`. Fails with `ZeroMass` when `beta > 0` and
    /// some entry of `rho` is not strictly positive.
    pub(crate) fn eval(
        &mut self,
        game: &Game,
        graph: &StrategyGraph,
        rho: &[f64],
        beta: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if beta > 0.0 {
            for (index, (l, &r)) in self.logs.iter_mut().zip(rho).enumerate() {
                if r.is_nan() || r <= 0.0 {
                    return Err(Error::ZeroMass { index });
                }
                *l = r.ln();
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for &e in graph.edges() {
            let d = noisy_difference(game, e, &self.logs, beta);
            let m = if d > 0.0 {
                d * rho[e.x]
            } else if d < 0.0 {
                d * rho[e.y]
            } else {
                continue;
            };
            out[e.x] -= m;
            out[e.y] += m;
        }
        Ok(())
    }
}

/// `dρ/dt` evaluated from log-densities `z = log ρ`; entries of `ρ` far
/// below the smallest normal double are handled without underflow in the
/// noisy costs.
pub(crate) fn fpe_rhs_log(game: &Game, graph: &StrategyGraph, z: &[f64], beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; graph.size()];
    for &e in graph.edges() {
        let d = game.cost(e.player, e.x) - game.cost(e.player, e.y) + beta * (z[e.x] - z[e.y]);
        let m = if d > 0.0 {
            d * z[e.x].exp()
        } else if d < 0.0 {
            d * z[e.y].exp()
        } else {
            continue;
        };
        out[e.x] -= m;
        out[e.y] += m;
    }
    out
}

/// Gibbs measure `e^{−φ/β} / K`, evaluated after shifting `φ` by its minimum.
pub fn gibbs_measure(phi: &[f64], beta: f64) -> Result<Density> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Gibbs measure needs beta > 0, got {beta}"
        )));
    }
    if phi.is_empty() || phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidParameter("potential must be finite and non-empty".into()));
    }
    let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = phi.iter().map(|p| (-(p - min) / beta).exp()).collect();
    Density::normalized(weights)
}

/// `log K` for the Gibbs measure of `φ` at `beta`, computed stably.
pub fn log_partition(phi: &[f64], beta: f64) -> f64 {
    let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let sum: f64 = phi.iter().map(|p| (-(p - min) / beta).exp()).sum();
    -min / beta + sum.ln()
}

/// Generator of the `β = 0` equation `dρ/dt = Qρ`: `Q[(x, y)]` is the jump
/// rate from `y` to `x`, and the diagonal holds minus the column sums.
pub fn rate_matrix_beta0(game: &Game, graph: &StrategyGraph) -> Result<DMatrix<f64>> {
    check_compatible(game, graph)?;
    let n = graph.size();
    let mut q = DMatrix::zeros(n, n);
    for e in graph.edges() {
        let d = game.cost(e.player, e.x) - game.cost(e.player, e.y);
        if d > 0.0 {
            q[(e.y, e.x)] += d;
            q[(e.x, e.x)] -= d;
        } else if d < 0.0 {
            q[(e.x, e.y)] -= d;
            q[(e.y, e.y)] += d;
        }
    }
    Ok(q)
}
