use crate::error::{Error, Result};
use crate::graph::{Aain, NodeId};

const MAX_NODES: usize = 4;
const MAX_EDGES: usize = 4;

/// An ordered edge template over abstract nodes `0..k`. Edge `i` must occur
/// no later than edge `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    edges: Vec<(u8, u8)>,
    nodes: usize,
}

impl Template {
    pub fn new(edges: &[(u8, u8)]) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::UnsupportedTemplate("template has no edges".into()));
        }
        if edges.len() > MAX_EDGES {
            return Err(Error::UnsupportedTemplate(format!(
                "{} edges (at most {MAX_EDGES} supported)",
                edges.len()
            )));
        }
        let nodes = edges
            .iter()
            .map(|&(a, b)| a.max(b) as usize + 1)
            .max()
            .unwrap_or(0);
        if nodes > MAX_NODES {
            return Err(Error::UnsupportedTemplate(format!(
                "{nodes} nodes (at most {MAX_NODES} supported)"
            )));
        }
        let mut seen = [false; MAX_NODES];
        for &(a, b) in edges {
            seen[a as usize] = true;
            seen[b as usize] = true;
        }
        if seen[..nodes].iter().any(|s| !s) {
            return Err(Error::UnsupportedTemplate(
                "node labels must be contiguous from 0".into(),
            ));
        }
        // Connectivity by repeated relaxation; at most four nodes.
        let mut reached = [false; MAX_NODES];
        reached[edges[0].0 as usize] = true;
        for _ in 0..nodes {
            for &(a, b) in edges {
                if reached[a as usize] || reached[b as usize] {
                    reached[a as usize] = true;
                    reached[b as usize] = true;
                }
            }
        }
        if reached[..nodes].iter().any(|r| !r) {
            return Err(Error::UnsupportedTemplate("template is not connected".into()));
        }
        Ok(Template {
            edges: edges.to_vec(),
            nodes,
        })
    }

    pub fn edges(&self) -> &[(u8, u8)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }
}

struct Search<'a> {
    aain: &'a Aain,
    template: &'a Template,
    delta: u64,
    order: Vec<u32>,
    position: Vec<u32>,
    map: [Option<NodeId>; MAX_NODES],
    count: u64,
}

impl Search<'_> {
    fn bind(&mut self, label: u8, node: NodeId) -> Option<bool> {
        match self.map[label as usize] {
            Some(n) if n == node => Some(false),
            Some(_) => None,
            None => {
                if self.map.iter().flatten().any(|&n| n == node) {
                    None
                } else {
                    self.map[label as usize] = Some(node);
                    Some(true)
                }
            }
        }
    }

    fn try_edge(&mut self, step: usize, edge: u32, t_first: u64) {
        let (a, b) = self.template.edges[step];
        let e = *self.aain.edge(edge);
        if (a == b) != (e.src == e.dst) {
            return;
        }
        let Some(new_a) = self.bind(a, e.src) else { return };
        let new_b = if a == b { Some(false) } else { self.bind(b, e.dst) };
        if let Some(new_b) = new_b {
            let t_first = if step == 0 { e.t } else { t_first };
            self.descend(step + 1, self.position[edge as usize], t_first);
            if new_b {
                self.map[b as usize] = None;
            }
        }
        if new_a {
            self.map[a as usize] = None;
        }
    }

    fn descend(&mut self, step: usize, last: u32, t_first: u64) {
        if step == self.template.edges.len() {
            self.count += 1;
            return;
        }
        let limit = t_first.saturating_add(self.delta);
        let (a, b) = self.template.edges[step];
        let anchor = self.map[a as usize].or(self.map[b as usize]);
        let candidates: Vec<u32> = match anchor {
            Some(node) => {
                let inc = self.aain.incident(node);
                let start = inc.partition_point(|&e| self.position[e as usize] <= last);
                inc[start..]
                    .iter()
                    .copied()
                    .take_while(|&e| self.aain.edge(e).t <= limit)
                    .collect()
            }
            None => {
                let start = if step == 0 { 0 } else { last as usize + 1 };
                self.order[start..]
                    .iter()
                    .copied()
                    .take_while(|&e| step == 0 || self.aain.edge(e).t <= limit)
                    .collect()
            }
        };
        for e in candidates {
            self.try_edge(step, e, t_first);
        }
    }
}

/// Counts edge sequences `e1 < e2 < ... < el` (graph total order) that map
/// onto the template under an injective node mapping and span at most
/// `delta` seconds. Brute force; meant for small graphs and test oracles.
pub fn enumerate_generic(aain: &Aain, template: &Template, delta: u64) -> u64 {
    let mut order: Vec<u32> = (0..aain.edges().len() as u32).collect();
    order.sort_by(|&a, &b| aain.edge_order(a, b));
    let mut position = vec![0u32; order.len()];
    for (p, &e) in order.iter().enumerate() {
        position[e as usize] = p as u32;
    }
    let mut search = Search {
        aain,
        template,
        delta,
        order,
        position,
        map: [None; MAX_NODES],
        count: 0,
    };
    search.descend(0, 0, 0);
    search.count
}
