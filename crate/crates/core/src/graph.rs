//! Strategy graphs: one switching graph per player and their Cartesian
//! product over joint profiles.
//!
//! Joint profiles are indexed in mixed radix with the last player's digit
//! varying fastest, so for two players with two strategies each the order is
//! `(0,0), (0,1), (1,0), (1,1)`.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Undirected edges of one player's strategy graph.
pub type EdgeList = Vec<(usize, usize)>;

/// Undirected switching graph `G_i` of a single player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerGraph {
    player: usize,
    vertices: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl PlayerGraph {
    /// Complete graph `K_m`.
    pub fn complete(player: usize, vertices: usize) -> Self {
        let edges = (0..vertices)
            .flat_map(|a| (a + 1..vertices).map(move |b| (a, b)))
            .collect::<Vec<_>>();
        Self::from_valid_edges(player, vertices, edges)
    }

    /// Graph with the given undirected edges. Duplicates (in either
    /// orientation) are merged.
    pub fn new(player: usize, vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(from, to) in edges {
            if from >= vertices || to >= vertices {
                return Err(Error::EdgeOutOfRange {
                    player,
                    from,
                    to,
                    count: vertices,
                });
            }
            if from == to {
                return Err(Error::SelfLoop { player, vertex: from });
            }
            set.insert((from.min(to), from.max(to)));
        }
        Ok(Self::from_valid_edges(player, vertices, set.into_iter().collect()))
    }

    fn from_valid_edges(player: usize, vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); vertices];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            player,
            vertices,
            edges,
            adjacency,
        }
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, strategy: usize) -> &[usize] {
        &self.adjacency[strategy]
    }

    pub fn degree(&self, strategy: usize) -> usize {
        self.adjacency[strategy].len()
    }
}

/// An undirected edge of the product graph, stored once with `x < y`.
/// `player` is the single coordinate in which the two profiles differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub x: usize,
    pub y: usize,
    pub player: usize,
}

/// The product graph `G = G_1 □ … □ G_N` with per-player directional
/// neighborhoods `N_i(x)`.
#[derive(Debug, Clone)]
pub struct StrategyGraph {
    radices: Vec<usize>,
    strides: Vec<usize>,
    players: Vec<PlayerGraph>,
    edges: Vec<Edge>,
    // neighbors of (x, i) live at targets[offsets[x * n + i]..offsets[x * n + i + 1]]
    offsets: Vec<usize>,
    targets: Vec<usize>,
    component: Vec<usize>,
    components: usize,
}

impl StrategyGraph {
    /// Builds the product of the given player graphs. `player_graphs[i]` must
    /// describe player `i`.
    pub fn from_player_graphs(player_graphs: Vec<PlayerGraph>) -> Result<Self> {
        if player_graphs.is_empty() {
            return Err(Error::InvalidParameter("at least one player is required".into()));
        }
        for (i, g) in player_graphs.iter().enumerate() {
            if g.player != i {
                return Err(Error::InvalidParameter(format!(
                    "player graph at position {i} is labelled as player {}",
                    g.player
                )));
            }
            if g.vertices == 0 {
                return Err(Error::InvalidParameter(format!("player {i} has no strategies")));
            }
        }
        let radices: Vec<usize> = player_graphs.iter().map(|g| g.vertices).collect();
        let n = radices.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1]
                .checked_mul(radices[i + 1])
                .ok_or_else(|| Error::InvalidParameter("joint profile space too large".into()))?;
        }
        let size = strides[0]
            .checked_mul(radices[0])
            .ok_or_else(|| Error::InvalidParameter("joint profile space too large".into()))?;

        let mut offsets = Vec::with_capacity(size * n + 1);
        let mut targets = Vec::new();
        let mut edges = Vec::new();
        let mut digits = vec![0usize; n];
        offsets.push(0);
        for x in 0..size {
            for (i, g) in player_graphs.iter().enumerate() {
                let own = digits[i];
                for &b in g.neighbors(own) {
                    let y = x - own * strides[i] + b * strides[i];
                    targets.push(y);
                    if b > own {
                        edges.push(Edge { x, y, player: i });
                    }
                }
                offsets.push(targets.len());
            }
            // mixed-radix increment, last digit fastest
            for i in (0..n).rev() {
                digits[i] += 1;
                if digits[i] < radices[i] {
                    break;
                }
                digits[i] = 0;
            }
        }

        let mut graph = Self {
            radices,
            strides,
            players: player_graphs,
            edges,
            offsets,
            targets,
            component: Vec::new(),
            components: 0,
        };
        graph.label_components();
        Ok(graph)
    }

    /// Builds the product from strategy counts and optional per-player edge
    /// lists; a missing list (or a `None` entry) means the complete graph.
    pub fn from_edge_lists(radices: &[usize], edges: Option<&[Option<EdgeList>]>) -> Result<Self> {
        if let Some(lists) = edges {
            if lists.len() != radices.len() {
                return Err(Error::Schema(format!(
                    "edges lists {} players, game has {}",
                    lists.len(),
                    radices.len()
                )));
            }
        }
        let graphs = radices
            .iter()
            .enumerate()
            .map(|(i, &m)| match edges.and_then(|lists| lists[i].as_ref()) {
                Some(list) => PlayerGraph::new(i, m, list),
                None => Ok(PlayerGraph::complete(i, m)),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_player_graphs(graphs)
    }

    fn label_components(&mut self) {
        let size = self.size();
        let mut component = vec![usize::MAX; size];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..size {
            if component[start] != usize::MAX {
                continue;
            }
            component[start] = count;
            queue.push_back(start);
            while let Some(x) = queue.pop_front() {
                for &y in self.neighbors(x) {
                    if component[y] == usize::MAX {
                        component[y] = count;
                        queue.push_back(y);
                    }
                }
            }
            count += 1;
        }
        self.component = component;
        self.components = count;
    }

    pub fn num_players(&self) -> usize {
        self.radices.len()
    }

    /// Strategy counts `M_i`.
    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Number of joint profiles `|S|`.
    pub fn size(&self) -> usize {
        self.strides[0] * self.radices[0]
    }

    pub fn player_graph(&self, player: usize) -> &PlayerGraph {
        &self.players[player]
    }

    pub fn player_graphs(&self) -> &[PlayerGraph] {
        &self.players
    }

    /// Undirected edges in a fixed order, each stored once.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Directional neighborhood `N_i(x)`.
    pub fn neighbors_of_player(&self, x: usize, player: usize) -> &[usize] {
        let n = self.num_players();
        let k = x * n + player;
        &self.targets[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Full neighborhood `N(x)`, grouped by player.
    pub fn neighbors(&self, x: usize) -> &[usize] {
        let n = self.num_players();
        &self.targets[self.offsets[x * n]..self.offsets[(x + 1) * n]]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.neighbors(x).len()
    }

    pub fn component_of(&self, x: usize) -> usize {
        self.component[x]
    }

    pub fn num_components(&self) -> usize {
        self.components
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }

    /// Vertices grouped by connected component.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.components];
        for (x, &c) in self.component.iter().enumerate() {
            groups[c].push(x);
        }
        groups
    }

    /// Mixed-radix index of a joint profile.
    pub fn profile_index(&self, profile: &[usize]) -> Result<usize> {
        if profile.len() != self.radices.len() {
            return Err(Error::ProfileArity {
                found: profile.len(),
                expected: self.radices.len(),
            });
        }
        let mut index = 0;
        for (component, ((&value, &radix), &stride)) in profile.iter().zip(&self.radices).zip(&self.strides).enumerate()
        {
            if value >= radix {
                return Err(Error::ProfileOutOfRange {
                    component,
                    value,
                    radix,
                });
            }
            index += value * stride;
        }
        Ok(index)
    }

    /// Inverse of [`profile_index`](Self::profile_index).
    pub fn index_profile(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.size() {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.size(),
            });
        }
        Ok(self
            .radices
            .iter()
            .zip(&self.strides)
            .map(|(&radix, &stride)| (index / stride) % radix)
            .collect())
    }

    /// Strategy played by `player` at profile index `x`.
    pub fn coordinate(&self, x: usize, player: usize) -> usize {
        (x / self.strides[player]) % self.radices[player]
    }
}
