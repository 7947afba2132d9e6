//! Lossless radial feeder model.
//!
//! Flows are signed per edge, positive in the parent-to-child direction. At
//! every non-root bus `j` the outgoing flows to its children equal the inflow
//! from its parent plus the bus's net injection `G - E^N - E^BESS`. The root
//! is the slack bus and absorbs the system imbalance.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{BusId, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("topology not a tree: {0}")]
    NotATree(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederTree {
    root: BusId,
    parent: Vec<Option<BusId>>,
    children: Vec<Vec<BusId>>,
    /// Edge index feeding each bus (None for the root).
    edge_into: Vec<Option<usize>>,
    edges: Vec<(BusId, BusId)>,
    /// Buses ordered root-first; reversing it gives a leaf-to-root sweep.
    order: Vec<BusId>,
}

impl FeederTree {
    /// Builds the tree from `(parent, child)` edges. The root is bus 0.
    pub fn from_edges(num_buses: usize, edges: &[(BusId, BusId)]) -> Result<Self, NetworkError> {
        if num_buses == 0 {
            return Err(NetworkError::NotATree("no buses".into()));
        }
        if edges.len() != num_buses - 1 {
            return Err(NetworkError::NotATree(format!(
                "{} edges for {num_buses} buses",
                edges.len()
            )));
        }
        let mut parent = vec![None; num_buses];
        let mut children = vec![Vec::new(); num_buses];
        let mut edge_into = vec![None; num_buses];
        for (k, &(p, c)) in edges.iter().enumerate() {
            if p.0 >= num_buses || c.0 >= num_buses {
                return Err(NetworkError::NotATree(format!("edge ({p}, {c}) out of range")));
            }
            if c.0 == 0 || parent[c.0].is_some() {
                return Err(NetworkError::NotATree(format!("bus {c} has more than one parent")));
            }
            parent[c.0] = Some(p);
            children[p.0].push(c);
            edge_into[c.0] = Some(k);
        }
        let mut order = Vec::with_capacity(num_buses);
        let mut visited = vec![false; num_buses];
        let mut stack = vec![BusId(0)];
        while let Some(b) = stack.pop() {
            if visited[b.0] {
                return Err(NetworkError::NotATree(format!("bus {b} reached twice")));
            }
            visited[b.0] = true;
            order.push(b);
            stack.extend(children[b.0].iter().rev().copied());
        }
        if order.len() != num_buses {
            return Err(NetworkError::NotATree("not all buses reachable from the root".into()));
        }
        Ok(Self {
            root: BusId(0),
            parent,
            children,
            edge_into,
            edges: edges.to_vec(),
            order,
        })
    }

    pub fn root(&self) -> BusId {
        self.root
    }

    pub fn num_buses(&self) -> usize {
        self.parent.len()
    }

    pub fn edges(&self) -> &[(BusId, BusId)] {
        &self.edges
    }

    pub fn parent(&self, bus: BusId) -> Option<BusId> {
        self.parent[bus.0]
    }

    pub fn children(&self, bus: BusId) -> &[BusId] {
        &self.children[bus.0]
    }

    /// Depth-first visiting order starting at the root.
    pub fn dfs_order(&self) -> &[BusId] {
        &self.order
    }

    pub fn edge_into(&self, bus: BusId) -> Option<usize> {
        self.edge_into[bus.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    /// `[edge][hour]`, same edge order as the tree's edge list.
    pub flow: Matrix,
    /// Power delivered into the feeder at the root per hour (the slack).
    pub root_import: Vec<f64>,
}

/// Computes edge flows from nodal net injections with one leaf-to-root sweep.
pub fn compute_flows(tree: &FeederTree, injection: &Matrix) -> Result<FlowResult, NetworkError> {
    let n = tree.num_buses();
    if injection.len() != n {
        return Err(NetworkError::Dimension(format!(
            "injection has {} rows for {n} buses",
            injection.len()
        )));
    }
    let hours = injection[0].len();
    if let Some(bad) = injection.iter().position(|r| r.len() != hours) {
        return Err(NetworkError::Dimension(format!("injection row {bad} has a different length")));
    }

    let mut flow = vec![vec![0.0; hours]; tree.edges.len()];
    let mut root_import = vec![0.0; hours];
    for t in 0..hours {
        // Outflow to children accumulated per bus.
        let mut outflow = vec![0.0; n];
        for &bus in tree.order.iter().rev() {
            let inflow = outflow[bus.0] - injection[bus.0][t];
            match (tree.edge_into[bus.0], tree.parent[bus.0]) {
                (Some(e), Some(p)) => {
                    flow[e][t] = inflow;
                    outflow[p.0] += inflow;
                }
                _ => root_import[t] = inflow,
            }
        }
    }
    Ok(FlowResult { flow, root_import })
}
