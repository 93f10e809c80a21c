//! Relative entropy, relative Fisher information and free energy along
//! trajectories, with a check of the discrete H-theorem.

use rayon::prelude::*;
use serde::Serialize;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::fpe::gibbs_measure;
use crate::game::{check_compatible, detect_potential, Game};
use crate::graph::StrategyGraph;
use crate::solver::Trajectory;

/// Samples with relative entropy at or below this are excluded from the
/// exponential rate fit.
pub const FIT_FLOOR: f64 = 1e-12;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidDensity(format!("length mismatch: {a} vs {b}")))
    }
}

/// `Σ ρ log(ρ / ref)` with `0 log 0 = 0`; `+∞` when `ref` vanishes where
/// `ρ` does not.
pub fn relative_entropy(rho: &Density, reference: &Density) -> Result<f64> {
    check_lengths(rho.len(), reference.len())?;
    let mut h = 0.0;
    for (&p, &q) in rho.iter().zip(reference.iter()) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        h += p * (p / q).ln();
    }
    // rounding can leave tiny negative values near equality
    Ok(h.max(0.0))
}

/// Sum over ordered adjacent pairs `(x, y)` of
/// `[log(ρ(x)/ref(x)) − log(ρ(y)/ref(y))]_+² ρ(x)`.
pub fn relative_fisher(rho: &Density, reference: &Density, graph: &StrategyGraph) -> Result<f64> {
    check_lengths(rho.len(), reference.len())?;
    check_lengths(rho.len(), graph.size())?;
    if !rho.is_interior() || !reference.is_interior() {
        return Err(Error::InvalidDensity(
            "Fisher information needs strictly positive densities".into(),
        ));
    }
    let log_ratio: Vec<f64> = rho.iter().zip(reference.iter()).map(|(p, q)| (p / q).ln()).collect();
    Ok(graph
        .edges()
        .iter()
        .map(|e| {
            let a = log_ratio[e.x] - log_ratio[e.y];
            if a > 0.0 {
                a * a * rho[e.x]
            } else {
                a * a * rho[e.y]
            }
        })
        .sum())
}

/// `Σ φ ρ + β Σ ρ log ρ` with `0 log 0 = 0`.
pub fn free_energy(rho: &Density, phi: &[f64], beta: f64) -> Result<f64> {
    check_lengths(rho.len(), phi.len())?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let energy: f64 = rho.iter().zip(phi).map(|(p, f)| p * f).sum();
    let entropy: f64 = rho.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    Ok(energy + beta * entropy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSample {
    pub t: f64,
    pub entropy: f64,
    pub fisher: f64,
    pub free_energy: f64,
}

/// Least-squares fit `log H(t) ≈ a − C t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub beta: f64,
    pub samples: Vec<DiagnosticSample>,
    /// `max |ΔH/Δt + β I|` over interior samples, with `ΔH/Δt` a central
    /// difference. `None` with fewer than three samples.
    pub max_defect: Option<f64>,
    /// `None` when fewer than three samples lie in the fit window.
    pub fit: Option<RateFit>,
    /// `−β log K`, the value of `F − β H` along the whole trajectory.
    pub free_energy_floor: f64,
}

/// Evaluates `H`, `I` and `F` against the Gibbs measure of the game's
/// potential along `trajectory`, the H-theorem defect and the exponential
/// decay rate of `H` over the tail.
///
/// The tail is the later half of the samples with `H > FIT_FLOOR`. Fails with
/// [`Error::NotPotential`] for games without a potential.
pub fn h_theorem_check(
    trajectory: &Trajectory,
    game: &Game,
    graph: &StrategyGraph,
    beta: f64,
) -> Result<DiagnosticsReport> {
    check_compatible(game, graph)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "H-theorem check needs beta > 0, got {beta}"
        )));
    }
    let cert = detect_potential(game, graph)?;
    let phi = cert.phi.ok_or(Error::NotPotential)?;
    let gibbs = gibbs_measure(&phi, beta)?;

    let samples: Vec<DiagnosticSample> = trajectory
        .samples
        .par_iter()
        .map(|s| {
            Ok(DiagnosticSample {
                t: s.t,
                entropy: relative_entropy(&s.density, &gibbs)?,
                fisher: relative_fisher(&s.density, &gibbs, graph)?,
                free_energy: free_energy(&s.density, &phi, beta)?,
            })
        })
        .collect::<Result<_>>()?;

    let max_defect = (samples.len() >= 3).then(|| {
        samples
            .windows(3)
            .map(|w| {
                let dh = (w[2].entropy - w[0].entropy) / (w[2].t - w[0].t);
                (dh + beta * w[1].fisher).abs()
            })
            .fold(0.0, f64::max)
    });

    let positive: Vec<&DiagnosticSample> = samples.iter().filter(|s| s.entropy > FIT_FLOOR).collect();
    let tail = &positive[positive.len() / 2..];
    let fit = fit_log_linear(tail);

    // −β log K with K = Σ e^{−φ/β}
    let min_phi = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let log_k = -min_phi / beta + phi.iter().map(|p| (-(p - min_phi) / beta).exp()).sum::<f64>().ln();

    Ok(DiagnosticsReport {
        beta,
        samples,
        max_defect,
        fit,
        free_energy_floor: -beta * log_k,
    })
}

fn fit_log_linear(points: &[&DiagnosticSample]) -> Option<RateFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|s| s.t).sum::<f64>() / n;
    let mean_y = points.iter().map(|s| s.entropy.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for s in points {
        let dt = s.t - mean_t;
        let dy = s.entropy.ln() - mean_y;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Some(RateFit {
        rate: -slope,
        r_squared,
        t_start: points[0].t,
        t_end: points[points.len() - 1].t,
        points: points.len(),
    })
}
