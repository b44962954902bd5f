use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{IncompleteMatrix, ObservationError};

/// Bipartite graph with one vertex per touched row and column and one edge
/// per observed entry. Untouched rows and columns are left out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationGraph {
    pub d: usize,
    pub row_vertices: Vec<usize>,
    pub col_vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl Component {
    pub fn is_complete_bipartite(&self) -> bool {
        self.edges.len() == self.rows.len() * self.cols.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDecomposition {
    pub components: Vec<Component>,
}

impl ComponentDecomposition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn all_complete_bipartite(&self) -> bool {
        self.components.iter().all(Component::is_complete_bipartite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConnectivityClass {
    Connected,
    Disconnected,
    DisconnectedCompleteBipartite,
}

impl ConnectivityClass {
    pub fn is_disconnected(self) -> bool {
        self != ConnectivityClass::Connected
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConnectivityClass::Connected => "connected",
            ConnectivityClass::Disconnected => "disconnected",
            ConnectivityClass::DisconnectedCompleteBipartite => "disconnected-complete-bipartite",
        }
    }
}

impl std::fmt::Display for ConnectivityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns false if already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

pub fn build_observation_graph(m: &IncompleteMatrix) -> ObservationGraph {
    let d = m.d();
    let edges: Vec<(usize, usize)> = m.observed().iter().map(|&(i, j, _)| (i, j)).collect();
    let mut rows: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let mut cols: Vec<usize> = edges.iter().map(|e| e.1).collect();
    rows.sort_unstable();
    rows.dedup();
    cols.sort_unstable();
    cols.dedup();
    ObservationGraph {
        d,
        row_vertices: rows,
        col_vertices: cols,
        edges,
    }
}

/// Components over row vertices `0..d` and column vertices `d..2d`, ordered
/// by their smallest row index.
pub fn connected_components(g: &ObservationGraph) -> ComponentDecomposition {
    let d = g.d;
    let mut dsu = DisjointSets::new(2 * d);
    for &(i, j) in &g.edges {
        dsu.union(i, d + j);
    }
    let mut by_root: Vec<Option<usize>> = vec![None; 2 * d];
    let mut comps: Vec<Component> = Vec::new();
    for &(i, j) in &g.edges {
        let r = dsu.find(i);
        let idx = *by_root[r].get_or_insert_with(|| {
            comps.push(Component {
                rows: Vec::new(),
                cols: Vec::new(),
                edges: Vec::new(),
            });
            comps.len() - 1
        });
        comps[idx].edges.push((i, j));
    }
    for c in &mut comps {
        c.rows = c.edges.iter().map(|e| e.0).collect();
        c.cols = c.edges.iter().map(|e| e.1).collect();
        c.rows.sort_unstable();
        c.rows.dedup();
        c.cols.sort_unstable();
        c.cols.dedup();
    }
    comps.sort_by_key(|c| c.rows[0]);
    ComponentDecomposition { components: comps }
}

pub fn classify_connectivity(m: &IncompleteMatrix) -> Result<ConnectivityClass, ObservationError> {
    if m.n() == 0 {
        return Err(ObservationError::NoObservations);
    }
    let comps = connected_components(&build_observation_graph(m));
    Ok(if comps.len() == 1 {
        ConnectivityClass::Connected
    } else if comps.all_complete_bipartite() {
        ConnectivityClass::DisconnectedCompleteBipartite
    } else {
        ConnectivityClass::Disconnected
    })
}

/// Connectivity of the graph on observed entries, two entries adjacent when
/// they share a row or a column. Breadth-first search, no union-find.
pub fn entry_graph_connected(m: &IncompleteMatrix) -> bool {
    let obs: Vec<(usize, usize)> = m.observed().iter().map(|&(i, j, _)| (i, j)).collect();
    if obs.is_empty() {
        return false;
    }
    let mut seen = vec![false; obs.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(k) = queue.pop_front() {
        let (r, c) = obs[k];
        for (t, &(r2, c2)) in obs.iter().enumerate() {
            if !seen[t] && (r2 == r || c2 == c) {
                seen[t] = true;
                count += 1;
                queue.push_back(t);
            }
        }
    }
    count == obs.len()
}
