//! Spanning-forest extraction from a vertex routing plan.
//!
//! The positive-rate lines of a basic feasible solution form an acyclic
//! subgraph of the bipartite compatibility graph. Each connected component
//! is rooted at its slack server (largest capacity slack, lowest index on
//! ties) and oriented away from the root, so a server's children are queues
//! and vice versa.

use thiserror::Error;

use super::LpProblem;
use crate::model::{RoutingPlan, SpanningForest};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ForestError {
    /// The plan was not produced by the simplex path.
    #[error("spanning forests require a vertex (basic feasible) plan")]
    NotAVertex,
    /// The thresholded support contains a cycle: numerical degeneracy.
    #[error("positive-rate support contains a cycle")]
    CyclicSupport,
}

/// Relative threshold below which a rate is treated as a numerical zero.
const EDGE_THRESHOLD_FACTOR: f64 = 1e-9;

pub fn extract_spanning_forest(
    plan: &RoutingPlan,
    problem: &LpProblem,
) -> Result<SpanningForest, ForestError> {
    if !plan.is_vertex {
        return Err(ForestError::NotAVertex);
    }
    let max_lambda = problem.lambda_hat.iter().cloned().fold(0.0, f64::max);
    let threshold = EDGE_THRESHOLD_FACTOR * max_lambda;

    let num_types = problem.num_types;
    let num_servers = problem.num_servers;
    let mut servers_of_queue = vec![Vec::new(); num_types];
    let mut queues_of_server = vec![Vec::new(); num_servers];

    // Union-find over queues [0, I) and servers [I, I+J).
    let mut parent: Vec<usize> = (0..num_types + num_servers).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }

    for (id, line) in problem.lines.iter().enumerate() {
        if plan.rates[id] > threshold {
            let q = line.customer_type;
            let s = num_types + line.server;
            let (rq, rs) = (find(&mut parent, q), find(&mut parent, s));
            if rq == rs {
                return Err(ForestError::CyclicSupport);
            }
            parent[rq] = rs;
            servers_of_queue[q].push(line.server);
            queues_of_server[line.server].push(q);
        }
    }
    for list in &mut servers_of_queue {
        list.sort_unstable();
    }
    for list in &mut queues_of_server {
        list.sort_unstable();
    }

    let loads = problem.loads(&plan.rates);
    let capacity = 1.0 - problem.epsilon;

    let mut forest = SpanningForest {
        parent_of_queue: vec![None; num_types],
        parent_of_server: vec![None; num_servers],
        children_of_server: vec![Vec::new(); num_servers],
        children_of_queue: vec![Vec::new(); num_types],
        roots: Vec::new(),
    };

    let mut visited_server = vec![false; num_servers];
    for j0 in 0..num_servers {
        if visited_server[j0] || queues_of_server[j0].is_empty() {
            continue;
        }
        // Collect the component's servers.
        let mut component = Vec::new();
        let mut stack = vec![j0];
        let mut seen_queue = vec![false; num_types];
        while let Some(j) = stack.pop() {
            if visited_server[j] {
                continue;
            }
            visited_server[j] = true;
            component.push(j);
            for q in &queues_of_server[j] {
                if !seen_queue[*q] {
                    seen_queue[*q] = true;
                    stack.extend(servers_of_queue[*q].iter().copied());
                }
            }
        }
        component.sort_unstable();

        // Root: maximal slack, lowest index on ties.
        let root = component
            .iter()
            .copied()
            .max_by(|x, y| {
                (capacity - loads[*x])
                    .total_cmp(&(capacity - loads[*y]))
                    .then(y.cmp(x))
            })
            .unwrap();
        forest.roots.push(root);

        // Orient away from the root, alternating server and queue levels.
        let mut frontier_servers = vec![root];
        while !frontier_servers.is_empty() {
            let mut next_servers = Vec::new();
            for &j in &frontier_servers {
                for &q in &queues_of_server[j] {
                    if forest.parent_of_queue[q].is_some() || Some(q) == forest.parent_of_server[j]
                    {
                        continue;
                    }
                    forest.parent_of_queue[q] = Some(j);
                    forest.children_of_server[j].push(q);
                    for &j2 in &servers_of_queue[q] {
                        if j2 == j {
                            continue;
                        }
                        forest.parent_of_server[j2] = Some(q);
                        forest.children_of_queue[q].push(j2);
                        next_servers.push(j2);
                    }
                }
            }
            frontier_servers = next_servers;
        }
    }
    forest.roots.sort_unstable();
    Ok(forest)
}
