//! JSON bodies emitted by the commands.

use anyhow::Result;
use equiselect::{
    density_to_json, detect_potential, enumerate_pure_ne, DiagnosticsReport, Error, Game, LimitReport,
    RankedEquilibria, StationaryMeasure,
};
use serde_json::{json, Map, Value};

fn labelled(game: &Game, values: &[f64]) -> Value {
    Value::Object(
        game.profile_labels()
            .into_iter()
            .zip(values)
            .map(|(label, &v)| (label, Value::from(v)))
            .collect::<Map<_, _>>(),
    )
}

pub fn inspect(game: &Game) -> Result<Value> {
    let graph = game.graph()?;
    let nash = enumerate_pure_ne(game, &graph)?;
    let mut out = json!({
        "name": game.name(),
        "players": game.num_players(),
        "strategies": game.strategies(),
        "profiles": game.size(),
        "connected": graph.is_connected(),
    });
    if graph.is_connected() {
        let cert = detect_potential(game, &graph)?;
        out["is_potential"] = json!(cert.is_potential);
        out["phi"] = cert.phi.as_deref().map_or(Value::Null, |phi| labelled(game, phi));
        out["max_potential_residual"] = json!(cert.max_residual);
        if let Some(w) = cert.witness {
            out["potential_witness"] = json!({
                "from": game.profile_label(w.x),
                "to": game.profile_label(w.y),
                "player": w.player,
                "residual": w.residual,
            });
        }
    } else {
        out["is_potential"] = Value::Null;
        out["phi"] = Value::Null;
        out["components"] = json!(graph.num_components());
    }
    out["nash"] = json!(nash.profiles.iter().map(|&x| game.profile_label(x)).collect::<Vec<_>>());
    Ok(out)
}

pub fn stationary(game: &Game, measure: &StationaryMeasure) -> Result<Value> {
    Ok(json!({
        "beta": measure.beta,
        "density": density_to_json(game, &measure.density)?,
        "log_density": labelled(game, &measure.log_density),
        "residual": measure.residual,
        "method": measure.method,
        "integration_time": measure.integration_time,
    }))
}

pub fn select(game: &Game, ranked: &RankedEquilibria, limit: &LimitReport) -> Result<Value> {
    let history = ranked
        .history
        .iter()
        .zip(&limit.entries)
        .map(|(h, e)| {
            Ok(json!({
                "beta": h.beta,
                "residual": h.residual,
                "method": h.method,
                "support_entropy": e.support_entropy,
                "nash_mass": e.nash_mass,
                "delta": e.delta,
                "density": density_to_json(game, &h.density)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let extrapolated = match &ranked.extrapolated {
        Some(v) => labelled(game, v),
        None => Value::Null,
    };
    Ok(json!({
        "nash": ranked
            .nash
            .iter()
            .map(|m| json!({"profile": game.profile_label(m.profile), "mass": m.mass}))
            .collect::<Vec<_>>(),
        "order": ranked
            .order
            .iter()
            .map(|class| class.iter().map(|&x| game.profile_label(x)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "residual_mass": ranked.residual_mass,
        "limit_beta": ranked.limit_beta,
        "stop": ranked.stop,
        "non_cauchy": limit.non_cauchy,
        "density": density_to_json(game, &ranked.limit)?,
        "extrapolated": extrapolated,
        "beta_history": history,
    }))
}

pub fn diagnose(report: &DiagnosticsReport) -> Value {
    let fit = report.fit.as_ref();
    json!({
        "beta": report.beta,
        "C": fit.map(|f| f.rate),
        "R2": fit.map(|f| f.r_squared),
        "fit_window": fit.map(|f| [f.t_start, f.t_end]),
        "fit_points": fit.map(|f| f.points),
        "max_defect": report.max_defect,
        "free_energy_floor": report.free_energy_floor,
        "samples": report.samples.len(),
    })
}

/// Error body for failures of the numerical methods; `None` for input errors.
pub fn solver_failure(err: &Error) -> Option<Value> {
    let body = match err {
        Error::NonConvergence { beta, residual } => json!({
            "error": "non_convergence",
            "beta": beta,
            "residual": residual,
        }),
        Error::Unresolved { beta, spread } => json!({
            "error": "unresolved",
            "beta": beta,
            "spread": spread,
        }),
        Error::StepUnderflow { t, dt_min, partial } => json!({
            "error": "step_underflow",
            "t": t,
            "dt_min": dt_min,
            "samples": partial.samples.len(),
        }),
        _ => return None,
    };
    let mut body = body;
    body["message"] = json!(err.to_string());
    Some(body)
}
