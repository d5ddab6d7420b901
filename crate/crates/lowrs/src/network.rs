//! Agent communication graphs and the link-by-flow routing operator.
//!
//! Agents sit on an undirected graph; every run requires the graph to be
//! connected so local consensus extends network-wide. The traffic-anomaly
//! application additionally needs a 0/1 routing matrix whose column for an
//! origin-destination flow marks every directed link on that flow's path.
//! Each undirected edge contributes two directed links, one per direction,
//! so row ownership by the link's source agent is unambiguous.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::rng::substream;

const CONNECTIVITY_RETRIES: usize = 1000;

/// Undirected agent topology.
#[derive(Clone, Debug)]
pub struct Graph {
    n_nodes: usize,
    /// Unordered node pairs stored as (lo, hi), sorted, deduplicated.
    edges: Vec<(usize, usize)>,
    /// Sorted adjacency lists, one per node.
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut canon: Vec<(usize, usize)> = edges
            .into_iter()
            .map(|(i, j)| {
                assert!(i != j, "self loop {i}");
                assert!(i < n_nodes && j < n_nodes, "node index out of range");
                (i.min(j), i.max(j))
            })
            .collect();
        canon.sort_unstable();
        canon.dedup();
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(i, j) in &canon {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        Self { n_nodes, edges: canon, adjacency }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Breadth-first reachability of every node from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n_nodes == 0 {
            return false;
        }
        self.bfs_distances(0).iter().all(|d| d.is_some())
    }

    /// Hop distances from `start`; `None` marks unreachable nodes.
    pub fn bfs_distances(&self, start: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_nodes];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Draws node positions uniformly on the unit square and connects pairs
/// closer than `comm_range`, resampling with a fresh substream until the
/// graph is connected.
pub fn random_geometric_graph(
    n: usize,
    comm_range: f64,
    rng_seed: u64,
) -> Result<(Graph, Vec<(f64, f64)>)> {
    assert!(n >= 1, "need at least one node");
    assert!(comm_range > 0.0, "communication range must be positive");
    for attempt in 0..CONNECTIVITY_RETRIES {
        let mut rng = substream(rng_seed, &format!("geo-graph-attempt-{attempt}"));
        let positions: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                if (dx * dx + dy * dy).sqrt() < comm_range {
                    edges.push((i, j));
                }
            }
        }
        let graph = Graph::new(n, edges);
        if graph.is_connected() {
            return Ok((graph, positions));
        }
    }
    Err(Error::ConnectivityFailure { attempts: CONNECTIVITY_RETRIES })
}

/// All ordered origin-destination pairs `(s, d)` with `s != d`, in
/// lexicographic order; `n * (n - 1)` of them.
pub fn od_flows(n: usize) -> Vec<(usize, usize)> {
    assert!(n >= 2, "flows need at least two nodes");
    let mut flows = Vec::with_capacity(n * (n - 1));
    for s in 0..n {
        for d in 0..n {
            if s != d {
                flows.push((s, d));
            }
        }
    }
    flows
}

/// The fat 0/1 link-by-flow routing operator together with its row and
/// column labelling.
#[derive(Clone, Debug)]
pub struct RoutingMatrix {
    /// `L x F` matrix with entry 1 when the flow's path crosses the link.
    pub entries: DenseMatrix,
    /// Row index -> directed link (source, target), grouped by source.
    pub links: Vec<(usize, usize)>,
    /// Column index -> ordered OD pair.
    pub flows: Vec<(usize, usize)>,
    /// Directed link -> row index.
    pub link_index: BTreeMap<(usize, usize), usize>,
    /// OD pair -> column index.
    pub flow_index: BTreeMap<(usize, usize), usize>,
}

impl RoutingMatrix {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }
}

/// Single-path routing over hop-count-shortest paths.
///
/// Paths are walked against breadth-first distances to the destination; at
/// every step the lowest-numbered neighbor that moves one hop closer is
/// taken, which makes the whole matrix a deterministic function of the graph
/// and the flow list.
pub fn shortest_path_routing(g: &Graph, flows: &[(usize, usize)]) -> Result<RoutingMatrix> {
    let links: Vec<(usize, usize)> = (0..g.n_nodes())
        .flat_map(|i| g.neighbors(i).iter().map(move |&j| (i, j)))
        .collect();
    let link_index: BTreeMap<(usize, usize), usize> =
        links.iter().enumerate().map(|(row, &l)| (l, row)).collect();
    let flow_index: BTreeMap<(usize, usize), usize> =
        flows.iter().enumerate().map(|(col, &f)| (f, col)).collect();

    let mut entries = DenseMatrix::zeros(links.len(), flows.len());
    let mut dist_cache: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
    for (col, &(s, d)) in flows.iter().enumerate() {
        let dist = dist_cache.entry(d).or_insert_with(|| g.bfs_distances(d));
        if dist[s].is_none() {
            return Err(Error::ConnectivityFailure { attempts: 0 });
        }
        let mut at = s;
        while at != d {
            let here = dist[at].unwrap();
            let next = g
                .neighbors(at)
                .iter()
                .copied()
                .find(|&v| dist[v] == Some(here - 1))
                .expect("BFS distance must decrease along some neighbor");
            entries.set(link_index[&(at, next)], col, 1.0);
            at = next;
        }
    }
    Ok(RoutingMatrix { entries, links, flows: flows.to_vec(), link_index, flow_index })
}

/// Assigns each directed link's row to its source agent. Row ranges are
/// contiguous per agent and restack to the full matrix in agent order.
pub fn partition_rows(g: &Graph, routing: &RoutingMatrix) -> (Vec<Range<usize>>, Vec<DenseMatrix>) {
    let mut ranges = Vec::with_capacity(g.n_nodes());
    let mut blocks = Vec::with_capacity(g.n_nodes());
    let mut start = 0;
    for agent in 0..g.n_nodes() {
        let len = g.degree(agent);
        debug_assert!(routing.links[start..start + len].iter().all(|&(src, _)| src == agent));
        ranges.push(start..start + len);
        blocks.push(routing.entries.row_block(start..start + len));
        start += len;
    }
    debug_assert_eq!(start, routing.n_links());
    (ranges, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, vec![(0, 1), (1, 2)])
    }

    #[test]
    fn connectivity_examples() {
        assert!(Graph::new(1, vec![]).is_connected());
        assert!(!Graph::new(2, vec![]).is_connected());
        assert!(path3().is_connected());
    }

    #[test]
    fn od_flow_examples() {
        assert_eq!(od_flows(2), vec![(0, 1), (1, 0)]);
        assert_eq!(od_flows(3).len(), 6);
        assert_eq!(od_flows(20).len(), 380);
    }

    #[test]
    fn geometric_graph_single_node() {
        let (g, pos) = random_geometric_graph(1, 0.35, 1).unwrap();
        assert!(g.is_connected());
        assert_eq!(pos.len(), 1);
    }

    #[test]
    fn geometric_graph_large_range_is_complete() {
        // sqrt(2) < 2, so every pair connects.
        let (g, _) = random_geometric_graph(5, 2.0, 3).unwrap();
        assert_eq!(g.edges().len(), 10);
    }

    #[test]
    fn geometric_graph_paper_scale_is_connected() {
        let (g, _) = random_geometric_graph(20, 0.35, 7).unwrap();
        assert!(g.is_connected());
        let routing = shortest_path_routing(&g, &od_flows(20)).unwrap();
        assert_eq!(routing.n_links(), 2 * g.edges().len());
        assert_eq!(routing.n_flows(), 380);
    }

    #[test]
    fn geometric_graph_is_deterministic() {
        let (a, pa) = random_geometric_graph(12, 0.4, 99).unwrap();
        let (b, pb) = random_geometric_graph(12, 0.4, 99).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(pa, pb);
    }

    #[test]
    fn geometric_graph_impossible_range_fails() {
        match random_geometric_graph(8, 1e-9, 5) {
            Err(Error::ConnectivityFailure { attempts }) => assert_eq!(attempts, 1000),
            other => panic!("expected ConnectivityFailure, got {other:?}"),
        }
    }

    #[test]
    fn routing_path_graph() {
        let g = path3();
        let routing = shortest_path_routing(&g, &[(0, 2)]).unwrap();
        assert_eq!(routing.entries.get(routing.link_index[&(0, 1)], 0), 1.0);
        assert_eq!(routing.entries.get(routing.link_index[&(1, 2)], 0), 1.0);
        let marked: f64 = routing.entries.data().iter().sum();
        assert_eq!(marked, 2.0);
    }

    #[test]
    fn routing_direct_edge_single_hop() {
        let g = path3();
        let routing = shortest_path_routing(&g, &[(0, 1)]).unwrap();
        let marked: f64 = routing.entries.data().iter().sum();
        assert_eq!(marked, 1.0);
        assert_eq!(routing.entries.get(routing.link_index[&(0, 1)], 0), 1.0);
    }

    #[test]
    fn routing_triangle_prefers_single_hop() {
        let g = Graph::new(3, vec![(0, 1), (0, 2), (1, 2)]);
        let routing = shortest_path_routing(&g, &[(0, 2)]).unwrap();
        let marked: f64 = routing.entries.data().iter().sum();
        assert_eq!(marked, 1.0);
        assert_eq!(routing.entries.get(routing.link_index[&(0, 2)], 0), 1.0);
    }

    #[test]
    fn routing_columns_are_valid_paths() {
        let (g, _) = random_geometric_graph(9, 0.5, 42).unwrap();
        let flows = od_flows(9);
        let routing = shortest_path_routing(&g, &flows).unwrap();
        for (col, &(s, d)) in flows.iter().enumerate() {
            // Collect the column's links and walk them from s to d.
            let mut by_src: BTreeMap<usize, usize> = BTreeMap::new();
            for (row, &(a, b)) in routing.links.iter().enumerate() {
                if routing.entries.get(row, col) == 1.0 {
                    assert!(by_src.insert(a, b).is_none(), "branching path");
                }
            }
            let mut at = s;
            let mut hops = 0;
            while at != d {
                at = *by_src.get(&at).unwrap_or_else(|| panic!("path breaks at {at}"));
                hops += 1;
                assert!(hops <= g.n_nodes(), "path too long");
            }
            assert_eq!(hops, by_src.len(), "stray links in column {col}");
            // Hop-count minimality against BFS distance.
            assert_eq!(hops, g.bfs_distances(d)[s].unwrap());
        }
    }

    #[test]
    fn partition_path_graph() {
        let g = path3();
        let routing = shortest_path_routing(&g, &od_flows(3)).unwrap();
        let (ranges, blocks) = partition_rows(&g, &routing);
        assert_eq!(ranges[1].len(), 2);
        let owned: Vec<_> = ranges[1].clone().map(|r| routing.links[r]).collect();
        assert_eq!(owned, vec![(1, 0), (1, 2)]);
        assert_eq!(blocks[1].rows(), 2);
    }

    #[test]
    fn partition_star_graph() {
        let g = Graph::new(4, vec![(0, 1), (0, 2), (0, 3)]);
        let routing = shortest_path_routing(&g, &od_flows(4)).unwrap();
        let (ranges, _) = partition_rows(&g, &routing);
        assert_eq!(ranges[0].len(), 3);
    }

    #[test]
    fn partition_restacks_exactly() {
        let (g, _) = random_geometric_graph(7, 0.6, 11).unwrap();
        let routing = shortest_path_routing(&g, &od_flows(7)).unwrap();
        let (ranges, blocks) = partition_rows(&g, &routing);
        assert_eq!(ranges.iter().map(|r| r.len()).sum::<usize>(), routing.n_links());
        let restacked = DenseMatrix::vstack(&blocks);
        assert_eq!(restacked, routing.entries);
    }
}
