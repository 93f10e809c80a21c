//! Finite N-player normal-form games: loading, potential detection and pure
//! Nash equilibrium enumeration.
//!
//! Costs are stored per player as flat tensors over joint profiles in the
//! mixed-radix order of [`StrategyGraph`] (last player fastest). Lower cost is
//! preferred.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeList, StrategyGraph};

/// Residual tolerance used by [`detect_potential`].
pub const POTENTIAL_TOL: f64 = 1e-9;

/// Separator used in profile labels such as `D|D`.
pub const LABEL_SEPARATOR: &str = "|";

/// Per-player switching constraints. `None` for a player means that player
/// may switch between any two strategies.
pub type SwitchEdges = Vec<Option<EdgeList>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    name: Option<String>,
    strategies: Vec<Vec<String>>,
    costs: Vec<Vec<f64>>,
    switch_edges: Option<SwitchEdges>,
}

impl Game {
    pub fn new(strategies: Vec<Vec<String>>, costs: Vec<Vec<f64>>) -> Result<Self> {
        if strategies.is_empty() {
            return Err(Error::Schema("a game needs at least one player".into()));
        }
        if costs.len() != strategies.len() {
            return Err(Error::Schema(format!(
                "{} cost tensors for {} players",
                costs.len(),
                strategies.len()
            )));
        }
        let mut expected = 1usize;
        for (player, labels) in strategies.iter().enumerate() {
            if labels.is_empty() {
                return Err(Error::Schema(format!("player {player} has no strategies")));
            }
            let mut seen = HashSet::new();
            for label in labels {
                if !seen.insert(label.as_str()) {
                    return Err(Error::DuplicateLabel {
                        player,
                        label: label.clone(),
                    });
                }
            }
            expected = expected
                .checked_mul(labels.len())
                .ok_or_else(|| Error::Schema("joint profile space too large".into()))?;
        }
        for (player, tensor) in costs.iter().enumerate() {
            if tensor.len() != expected {
                return Err(Error::CostLength {
                    player,
                    found: tensor.len(),
                    expected,
                });
            }
            if let Some(index) = tensor.iter().position(|c| !c.is_finite()) {
                return Err(Error::NonFiniteCost { player, index });
            }
        }
        Ok(Self {
            name: None,
            strategies,
            costs,
            switch_edges: None,
        })
    }

    /// Attaches switching constraints; they are validated here and used by
    /// [`Game::graph`].
    pub fn with_switch_edges(mut self, edges: SwitchEdges) -> Result<Self> {
        StrategyGraph::from_edge_lists(&self.strategy_counts(), Some(&edges))?;
        self.switch_edges = Some(edges);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn num_players(&self) -> usize {
        self.strategies.len()
    }

    pub fn strategy_counts(&self) -> Vec<usize> {
        self.strategies.iter().map(Vec::len).collect()
    }

    pub fn strategy_names(&self, player: usize) -> &[String] {
        &self.strategies[player]
    }

    pub fn strategies(&self) -> &[Vec<String>] {
        &self.strategies
    }

    /// Number of joint profiles.
    pub fn size(&self) -> usize {
        self.costs[0].len()
    }

    /// `u_i(x)` for profile index `x`.
    #[inline]
    pub fn cost(&self, player: usize, x: usize) -> f64 {
        self.costs[player][x]
    }

    pub fn costs(&self, player: usize) -> &[f64] {
        &self.costs[player]
    }

    pub fn switch_edges(&self) -> Option<&SwitchEdges> {
        self.switch_edges.as_ref()
    }

    /// Product strategy graph honoring the game's own switching constraints.
    pub fn graph(&self) -> Result<StrategyGraph> {
        StrategyGraph::from_edge_lists(&self.strategy_counts(), self.switch_edges.as_deref())
    }

    /// Label of profile index `x`, strategies joined by `|`.
    pub fn profile_label(&self, x: usize) -> String {
        let mut rest = x;
        let mut parts = vec![""; self.num_players()];
        for (player, labels) in self.strategies.iter().enumerate().rev() {
            parts[player] = &labels[rest % labels.len()];
            rest /= labels.len();
        }
        parts.join(LABEL_SEPARATOR)
    }

    pub fn profile_labels(&self) -> Vec<String> {
        (0..self.size()).map(|x| self.profile_label(x)).collect()
    }

    /// Profile index for a label such as `D|D`.
    pub fn profile_by_label(&self, label: &str) -> Option<usize> {
        let parts: Vec<&str> = label.split(LABEL_SEPARATOR).collect();
        if parts.len() != self.num_players() {
            return None;
        }
        let mut index = 0;
        for (labels, part) in self.strategies.iter().zip(parts) {
            let k = labels.iter().position(|l| l == part)?;
            index = index * labels.len() + k;
        }
        Some(index)
    }

    /// Parses a game document (see [`GameDocument`]).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        doc.into_game()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_document(&self) -> GameDocument {
        GameDocument {
            name: self.name.clone(),
            players: self.num_players(),
            strategies: self.strategies.clone(),
            costs: self.costs.clone(),
            edges: self.switch_edges.as_ref().map(|lists| {
                lists
                    .iter()
                    .map(|l| l.as_ref().map(|l| l.iter().map(|&(a, b)| [a, b]).collect()))
                    .collect()
            }),
        }
    }
}

/// On-disk game format.
///
/// `costs[i]` is player `i`'s flat cost tensor of length `∏ M_j`, row-major
/// with the last player's index varying fastest. `edges`, when present, holds
/// one entry per player: a list of `[from, to]` strategy index pairs, or
/// `null` for a complete graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub players: usize,
    pub strategies: Vec<Vec<String>>,
    pub costs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<Option<Vec<[usize; 2]>>>>,
}

impl GameDocument {
    pub fn into_game(self) -> Result<Game> {
        if self.players == 0 {
            return Err(Error::Schema("players must be positive".into()));
        }
        if self.strategies.len() != self.players {
            return Err(Error::Schema(format!(
                "players = {} but {} strategy lists given",
                self.players,
                self.strategies.len()
            )));
        }
        if self.costs.len() != self.players {
            return Err(Error::Schema(format!(
                "players = {} but {} cost tensors given",
                self.players,
                self.costs.len()
            )));
        }
        let mut game = Game::new(self.strategies, self.costs)?;
        game.name = self.name;
        if let Some(edges) = self.edges {
            if edges.len() != self.players {
                return Err(Error::Schema(format!(
                    "players = {} but {} edge lists given",
                    self.players,
                    edges.len()
                )));
            }
            let edges = edges
                .into_iter()
                .map(|l| l.map(|l| l.into_iter().map(|[a, b]| (a, b)).collect()))
                .collect();
            game = game.with_switch_edges(edges)?;
        }
        Ok(game)
    }
}

/// Parses a game document.
pub fn load_game(text: &str) -> Result<Game> {
    Game::from_json(text)
}

/// Product graph of `game`. Omitted edge lists give complete player graphs;
/// the game's own switching constraints are not consulted (use
/// [`Game::graph`] for that).
pub fn build_product(game: &Game, edges: Option<&[Option<EdgeList>]>) -> Result<StrategyGraph> {
    StrategyGraph::from_edge_lists(&game.strategy_counts(), edges)
}

/// Edge on which the potential identity fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialWitness {
    pub x: usize,
    pub y: usize,
    pub player: usize,
    /// `φ(x) − φ(y) − (u_i(x) − u_i(y))` with φ integrated along a spanning tree.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCertificate {
    pub is_potential: bool,
    /// Potential normalized to `min φ = 0`; present iff `is_potential`.
    pub phi: Option<Vec<f64>>,
    pub witness: Option<PotentialWitness>,
    /// Largest absolute residual over all edges.
    pub max_residual: f64,
}

/// Decides whether `game` is a potential game on `graph` with tolerance
/// [`POTENTIAL_TOL`].
pub fn detect_potential(game: &Game, graph: &StrategyGraph) -> Result<PotentialCertificate> {
    detect_potential_with_tol(game, graph, POTENTIAL_TOL)
}

pub fn detect_potential_with_tol(game: &Game, graph: &StrategyGraph, tol: f64) -> Result<PotentialCertificate> {
    check_compatible(game, graph)?;
    if !graph.is_connected() {
        return Err(Error::Disconnected {
            components: graph.num_components(),
        });
    }
    let size = graph.size();
    let mut phi = vec![f64::NAN; size];
    let mut queue = VecDeque::from([0usize]);
    phi[0] = 0.0;
    while let Some(x) = queue.pop_front() {
        for player in 0..graph.num_players() {
            for &y in graph.neighbors_of_player(x, player) {
                if phi[y].is_nan() {
                    phi[y] = phi[x] - (game.cost(player, x) - game.cost(player, y));
                    queue.push_back(y);
                }
            }
        }
    }

    let mut worst: Option<PotentialWitness> = None;
    for e in graph.edges() {
        let residual = phi[e.x] - phi[e.y] - (game.cost(e.player, e.x) - game.cost(e.player, e.y));
        if worst.map_or(true, |w| residual.abs() > w.residual.abs()) {
            worst = Some(PotentialWitness {
                x: e.x,
                y: e.y,
                player: e.player,
                residual,
            });
        }
    }
    let max_residual = worst.map_or(0.0, |w| w.residual.abs());
    if max_residual > tol {
        return Ok(PotentialCertificate {
            is_potential: false,
            phi: None,
            witness: worst,
            max_residual,
        });
    }
    let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    phi.iter_mut().for_each(|p| *p -= min);
    Ok(PotentialCertificate {
        is_potential: true,
        phi: Some(phi),
        witness: None,
        max_residual,
    })
}

/// Pure Nash equilibria relative to the graph neighborhoods `N_i(x)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NashSet {
    pub profiles: Vec<usize>,
    /// `slack[k][i] = min_{y ∈ N_i(x)} u_i(y) − u_i(x)` for `x = profiles[k]`;
    /// `+∞` when player `i` has no available switch.
    pub slack: Vec<Vec<f64>>,
}

impl NashSet {
    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.profiles.contains(&x)
    }
}

pub fn enumerate_pure_ne(game: &Game, graph: &StrategyGraph) -> Result<NashSet> {
    check_compatible(game, graph)?;
    let mut set = NashSet::default();
    for x in 0..graph.size() {
        let slack: Vec<f64> = (0..graph.num_players())
            .map(|i| {
                graph
                    .neighbors_of_player(x, i)
                    .iter()
                    .map(|&y| game.cost(i, y) - game.cost(i, x))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        if slack.iter().all(|&s| s >= 0.0) {
            set.profiles.push(x);
            set.slack.push(slack);
        }
    }
    Ok(set)
}

pub(crate) fn check_compatible(game: &Game, graph: &StrategyGraph) -> Result<()> {
    if game.strategy_counts() != graph.radices() {
        return Err(Error::InvalidParameter(format!(
            "graph radices {:?} do not match game strategy counts {:?}",
            graph.radices(),
            game.strategy_counts()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PD: &str = include_str!("../../../games/prisoners_dilemma.json");
    const ASYM: &str = include_str!("../../../games/asymmetric_2x2.json");
    const RSP: &str = include_str!("../../../games/rsp.json");
    const RSP_C: &str = include_str!("../../../games/rsp_constrained.json");

    fn labels(game: &Game, set: &NashSet) -> Vec<String> {
        set.profiles.iter().map(|&x| game.profile_label(x)).collect()
    }

    #[test]
    fn loads_prisoners_dilemma() {
        let g = load_game(PD).unwrap();
        let dc = g.profile_by_label("D|C").unwrap();
        let cd = g.profile_by_label("C|D").unwrap();
        assert_eq!(g.cost(0, dc), 0.0);
        assert_eq!(g.cost(1, cd), 0.0);
        assert_eq!(g.profile_labels(), vec!["C|C", "C|D", "D|C", "D|D"]);
    }

    #[test]
    fn loads_rsp() {
        let g = load_game(RSP).unwrap();
        let rp = g.profile_by_label("r|p").unwrap();
        assert_eq!(g.cost(0, rp), 1.0);
        assert_eq!(g.cost(1, rp), -1.0);
    }

    #[test]
    fn degenerate_single_strategy_game() {
        let g = load_game(r#"{"players":1,"strategies":[["only"]],"costs":[[0]]}"#).unwrap();
        assert_eq!(g.size(), 1);
        let graph = g.graph().unwrap();
        let cert = detect_potential(&g, &graph).unwrap();
        assert!(cert.is_potential);
        assert_eq!(cert.phi.unwrap(), vec![0.0]);
        assert_eq!(enumerate_pure_ne(&g, &graph).unwrap().profiles, vec![0]);
    }

    #[test]
    fn schema_errors() {
        let bad_len = r#"{"players":2,"strategies":[["a","b"],["a","b"]],"costs":[[1,2,3],[1,2,3,4]]}"#;
        assert!(matches!(
            load_game(bad_len),
            Err(Error::CostLength {
                player: 0,
                found: 3,
                expected: 4
            })
        ));
        let dup = r#"{"players":1,"strategies":[["a","a"]],"costs":[[1,2]]}"#;
        assert!(matches!(load_game(dup), Err(Error::DuplicateLabel { .. })));
        let missing = r#"{"players":1,"strategies":[["a"]]}"#;
        assert!(matches!(load_game(missing), Err(Error::Schema(_))));
        let unknown = r#"{"players":1,"strategies":[["a"]],"costs":[[1]],"payoffs":[]}"#;
        assert!(matches!(load_game(unknown), Err(Error::Schema(_))));
        let arity = r#"{"players":2,"strategies":[["a"]],"costs":[[1]]}"#;
        assert!(matches!(load_game(arity), Err(Error::Schema(_))));
        let huge = r#"{"players":1,"strategies":[["a"]],"costs":[[1e999]]}"#;
        assert!(load_game(huge).is_err());
        let bad_edge = r#"{"players":1,"strategies":[["a","b"]],"costs":[[1,2]],"edges":[[[0,2]]]}"#;
        assert!(matches!(load_game(bad_edge), Err(Error::EdgeOutOfRange { .. })));
        let self_loop = r#"{"players":1,"strategies":[["a","b"]],"costs":[[1,2]],"edges":[[[1,1]]]}"#;
        assert!(matches!(load_game(self_loop), Err(Error::SelfLoop { .. })));
    }

    #[test]
    fn non_finite_costs_rejected() {
        let err = Game::new(vec![vec!["a".into(), "b".into()]], vec![vec![0.0, f64::NAN]]);
        assert!(matches!(err, Err(Error::NonFiniteCost { player: 0, index: 1 })));
    }

    #[test]
    fn prisoners_dilemma_potential() {
        let g = load_game(PD).unwrap();
        let cert = detect_potential(&g, &g.graph().unwrap()).unwrap();
        assert!(cert.is_potential);
        assert_eq!(cert.phi.as_deref(), Some(&[2.0, 1.0, 1.0, 0.0][..]));
        // proportional to −(u_1 + u_2) up to the additive constant
        let phi = cert.phi.unwrap();
        for (x, &p) in phi.iter().enumerate() {
            let shifted = -(g.cost(0, x) + g.cost(1, x)) + 4.0;
            assert_eq!(p, shifted);
        }
    }

    #[test]
    fn single_player_is_potential() {
        let g = Game::new(
            vec![vec!["a".into(), "b".into(), "c".into()]],
            vec![vec![3.0, -1.0, 2.5]],
        )
        .unwrap();
        let cert = detect_potential(&g, &g.graph().unwrap()).unwrap();
        assert_eq!(cert.phi.unwrap(), vec![4.0, 0.0, 3.5]);
    }

    /// Oracle: a potential exists iff the cost differences sum to zero
    /// around every cycle. Single-player triangles always close, so scan the
    /// mixed two-player squares directly.
    #[test]
    fn rsp_not_potential() {
        let g = load_game(RSP).unwrap();
        let graph = g.graph().unwrap();
        let mut any_square_fails = false;
        for x in 0..9 {
            let p = graph.index_profile(x).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    if a == p[0] || b == p[1] {
                        continue;
                    }
                    let q = graph.profile_index(&[a, p[1]]).unwrap();
                    let r = graph.profile_index(&[a, b]).unwrap();
                    let s = graph.profile_index(&[p[0], b]).unwrap();
                    let circ = (g.cost(0, x) - g.cost(0, q))
                        + (g.cost(1, q) - g.cost(1, r))
                        + (g.cost(0, r) - g.cost(0, s))
                        + (g.cost(1, s) - g.cost(1, x));
                    any_square_fails |= circ.abs() > 1e-9;
                }
            }
        }
        assert!(any_square_fails);
        let cert = detect_potential(&g, &graph).unwrap();
        assert!(!cert.is_potential);
        assert!(cert.phi.is_none());
        let w = cert.witness.unwrap();
        assert!(w.residual.abs() > POTENTIAL_TOL);
    }

    #[test]
    fn disconnected_graph_rejected_for_potential() {
        let g = Game::new(vec![vec!["a".into(), "b".into()]], vec![vec![0.0, 1.0]])
            .unwrap()
            .with_switch_edges(vec![Some(vec![])])
            .unwrap();
        let err = detect_potential(&g, &g.graph().unwrap());
        assert!(matches!(err, Err(Error::Disconnected { components: 2 })));
    }

    #[test]
    fn nash_sets_of_corpus() {
        let pd = load_game(PD).unwrap();
        assert_eq!(
            labels(&pd, &enumerate_pure_ne(&pd, &pd.graph().unwrap()).unwrap()),
            vec!["D|D"]
        );
        let asym = load_game(ASYM).unwrap();
        assert_eq!(
            labels(&asym, &enumerate_pure_ne(&asym, &asym.graph().unwrap()).unwrap()),
            vec!["C|C", "D|D"]
        );
        let rsp = load_game(RSP).unwrap();
        assert!(enumerate_pure_ne(&rsp, &rsp.graph().unwrap()).unwrap().is_empty());
    }

    #[test]
    fn rsp_ne_brute_force_over_full_strategy_sets() {
        let rsp = load_game(RSP).unwrap();
        let graph = rsp.graph().unwrap();
        for x in 0..9 {
            let p = graph.index_profile(x).unwrap();
            let best1 = (0..3).all(|a| rsp.cost(0, x) <= rsp.cost(0, graph.profile_index(&[a, p[1]]).unwrap()));
            let best2 = (0..3).all(|b| rsp.cost(1, x) <= rsp.cost(1, graph.profile_index(&[p[0], b]).unwrap()));
            assert!(!(best1 && best2));
        }
    }

    #[test]
    fn constrained_rsp_graph_local_equilibria_match_brute_force() {
        let g = load_game(RSP_C).unwrap();
        let graph = g.graph().unwrap();
        let set = enumerate_pure_ne(&g, &graph).unwrap();
        for x in 0..graph.size() {
            let brute = (0..2).all(|i| {
                graph
                    .neighbors_of_player(x, i)
                    .iter()
                    .all(|&y| g.cost(i, y) >= g.cost(i, x))
            });
            assert_eq!(brute, set.contains(x));
        }
        for (k, &x) in set.profiles.iter().enumerate() {
            assert!(set.slack[k].iter().all(|&s| s >= 0.0), "{}", g.profile_label(x));
        }
    }

    #[test]
    fn document_round_trip() {
        let g = load_game(RSP_C).unwrap();
        let text = serde_json::to_string(&g.to_document()).unwrap();
        assert_eq!(load_game(&text).unwrap(), g);
    }
}
