//! Maximum flow on small bipartite transport graphs (Dinic).

use std::collections::VecDeque;

struct Edge {
    to: usize,
    cap: f64,
}

pub(crate) struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    pub(crate) fn new(nodes: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0 });
    }

    /// Residual capacities at or below `eps` count as saturated.
    pub(crate) fn max_flow(&mut self, s: usize, t: usize, eps: f64) -> f64 {
        let n = self.adj.len();
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &e in &self.adj[v] {
                    let w = self.edges[e].to;
                    if level[w] == usize::MAX && self.edges[e].cap > eps {
                        level[w] = level[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0; n];
            loop {
                let pushed = self.augment(s, t, f64::INFINITY, eps, &level, &mut next);
                if pushed <= eps {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn augment(&mut self, v: usize, t: usize, limit: f64, eps: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if v == t {
            return limit;
        }
        while next[v] < self.adj[v].len() {
            let e = self.adj[v][next[v]];
            let w = self.edges[e].to;
            if self.edges[e].cap > eps && level[w] == level[v] + 1 {
                let got = self.augment(w, t, limit.min(self.edges[e].cap), eps, level, next);
                if got > eps {
                    self.edges[e].cap -= got;
                    self.edges[e ^ 1].cap += got;
                    return got;
                }
            }
            next[v] += 1;
        }
        0.0
    }
}

/// Largest transport from `supply` to `demand` using only the allowed
/// pairs.
pub(crate) fn bipartite_max_flow(supply: &[f64], demand: &[f64], allowed: impl Fn(usize, usize) -> bool) -> f64 {
    let (p, q) = (supply.len(), demand.len());
    let (s, t) = (p + q, p + q + 1);
    let mut g = FlowGraph::new(p + q + 2);
    for (i, &m) in supply.iter().enumerate() {
        g.add_edge(s, i, m);
    }
    for (j, &m) in demand.iter().enumerate() {
        g.add_edge(p + j, t, m);
    }
    for i in 0..p {
        for j in 0..q {
            if allowed(i, j) {
                g.add_edge(i, p + j, f64::INFINITY);
            }
        }
    }
    let scale = supply.iter().chain(demand).fold(0.0f64, |a, &b| a.max(b));
    g.max_flow(s, t, 1e-15 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_transport() {
        // Hall deficiency: {0, 1} only reach demand 0.
        let f = bipartite_max_flow(&[1.0, 1.0, 1.0], &[1.5, 2.0], |i, j| j == 0 || i == 2);
        assert!((f - 2.5).abs() < 1e-12);
        assert_eq!(bipartite_max_flow(&[1.0], &[1.0], |_, _| false), 0.0);
        let f = bipartite_max_flow(&[0.3, 0.7], &[0.7, 0.3], |_, _| true);
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_graph_with_back_edges() {
        // Classic instance where a greedy path must be undone.
        let mut g = FlowGraph::new(4);
        g.add_edge(0, 1, 1.0);
        g.add_edge(0, 2, 1.0);
        g.add_edge(1, 2, 1.0);
        g.add_edge(1, 3, 1.0);
        g.add_edge(2, 3, 1.0);
        assert_eq!(g.max_flow(0, 3, 0.0), 2.0);
    }
}
