//! Leiden community detection over weighted modularity.
//!
//! The three phases (local moving, refinement, aggregation) repeat until no
//! node moves. Randomized visit orders come from a seeded stream, so a given
//! `(graph, resolution, seed)` always yields the same partition. Returned
//! communities are post-split into connected components of the input graph,
//! which can only raise modularity and guarantees every cluster is connected.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::RngExt;
use rand_pcg::Pcg64;

use crate::er::ProblemId;
use crate::rng;

use super::{ClusterId, Clustering, ProblemGraph};

const GAIN_EPS: f64 = 1e-12;

/// Flat weighted adjacency. Self-loop weight is tracked separately; a node's
/// degree counts its self-loop twice, as in the usual modularity convention.
#[derive(Debug, Clone)]
struct Adjacency {
    n: usize,
    nbrs: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    /// Sum of all degrees (`2m`).
    total: f64,
}

impl Adjacency {
    fn new(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut nbrs = vec![Vec::new(); n];
        let mut self_loop = vec![0.0; n];
        for (a, b, w) in edges {
            if a == b {
                self_loop[*a] += w;
            } else {
                nbrs[*a].push((*b, *w));
                nbrs[*b].push((*a, *w));
            }
        }
        for list in &mut nbrs {
            list.sort_by_key(|(n, _)| *n);
        }
        let degree: Vec<f64> = (0..n)
            .map(|i| nbrs[i].iter().map(|(_, w)| w).sum::<f64>() + 2.0 * self_loop[i])
            .collect();
        let total = degree.iter().sum();
        Adjacency {
            n,
            nbrs,
            self_loop,
            degree,
            total,
        }
    }
}

/// Weighted modularity of a partition at resolution `gamma`.
fn modularity(adj: &Adjacency, comm: &[usize], gamma: f64) -> f64 {
    if adj.total <= 0.0 {
        return 0.0;
    }
    let n_comms = comm.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; n_comms];
    let mut tot = vec![0.0; n_comms];
    for v in 0..adj.n {
        let c = comm[v];
        tot[c] += adj.degree[v];
        internal[c] += 2.0 * adj.self_loop[v];
        for (u, w) in &adj.nbrs[v] {
            if comm[*u] == c {
                internal[c] += w;
            }
        }
    }
    let m2 = adj.total;
    (0..n_comms)
        .map(|c| internal[c] / m2 - gamma * (tot[c] / m2) * (tot[c] / m2))
        .sum()
}

/// Move score of placing `v` into a community with edge mass `w_vc` and total
/// degree `tot_c` (excluding `v`). Differences of this score are proportional
/// to modularity deltas.
#[inline]
fn move_score(w_vc: f64, deg_v: f64, tot_c: f64, gamma: f64, m2: f64) -> f64 {
    w_vc - gamma * deg_v * tot_c / m2
}

/// Greedy local moving: visit nodes in seeded order, moving each to the
/// neighboring community with the best score until no move improves.
fn local_move(adj: &Adjacency, comm: &mut [usize], gamma: f64, rng: &mut Pcg64) -> bool {
    if adj.total <= 0.0 {
        return false;
    }
    let m2 = adj.total;
    let mut comm_tot = vec![0.0; adj.n];
    for v in 0..adj.n {
        comm_tot[comm[v]] += adj.degree[v];
    }
    let mut order: Vec<usize> = (0..adj.n).collect();
    order.shuffle(rng);
    let mut queued = vec![true; adj.n];
    let mut queue: std::collections::VecDeque<usize> = order.into_iter().collect();
    let mut improved = false;

    let mut w_to = vec![0.0; adj.n];
    let mut touched: Vec<usize> = Vec::new();

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let current = comm[v];
        touched.clear();
        for (u, w) in &adj.nbrs[v] {
            let c = comm[*u];
            if w_to[c] == 0.0 {
                touched.push(c);
            }
            w_to[c] += w;
        }
        touched.sort_unstable();

        let tot_current = comm_tot[current] - adj.degree[v];
        let mut best = current;
        let mut best_score = move_score(w_to[current], adj.degree[v], tot_current, gamma, m2);
        for &c in &touched {
            if c == current {
                continue;
            }
            let score = move_score(w_to[c], adj.degree[v], comm_tot[c], gamma, m2);
            if score > best_score + GAIN_EPS {
                best_score = score;
                best = c;
            }
        }
        for &c in &touched {
            w_to[c] = 0.0;
        }

        if best != current {
            comm_tot[current] -= adj.degree[v];
            comm_tot[best] += adj.degree[v];
            comm[v] = best;
            improved = true;
            for (u, _) in &adj.nbrs[v] {
                if comm[*u] != best && !queued[*u] {
                    queued[*u] = true;
                    queue.push_back(*u);
                }
            }
        }
    }
    improved
}

/// Refinement: within each macro community, re-partition from singletons by
/// constrained moves. A node may only join a sub-community it is connected
/// to, so refined communities stay connected. With `theta` set, the target
/// community is drawn among the improving candidates with probability
/// proportional to `exp(gain / theta)`, which lets restarts explore plateaus
/// a pure greedy pass cannot leave.
fn refine(
    adj: &Adjacency,
    macro_comm: &[usize],
    gamma: f64,
    rng: &mut Pcg64,
    theta: Option<f64>,
) -> Vec<usize> {
    if adj.total <= 0.0 {
        return (0..adj.n).collect();
    }
    let m2 = adj.total;
    let mut refined: Vec<usize> = (0..adj.n).collect();
    let mut comm_tot: Vec<f64> = adj.degree.clone();

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, comm) in macro_comm.iter().enumerate() {
        members.entry(*comm).or_default().push(v);
    }

    let mut w_to = vec![0.0; adj.n];
    let mut touched: Vec<usize> = Vec::new();
    for (_, group) in members {
        if group.len() < 2 {
            continue;
        }
        let mut order = group.clone();
        order.shuffle(rng);
        let mut stable = false;
        let mut rounds = 0;
        while !stable && rounds < 32 {
            stable = true;
            rounds += 1;
            for &v in &order {
                let current = refined[v];
                touched.clear();
                for (u, w) in &adj.nbrs[v] {
                    if macro_comm[*u] != macro_comm[v] {
                        continue;
                    }
                    let c = refined[*u];
                    if w_to[c] == 0.0 {
                        touched.push(c);
                    }
                    w_to[c] += w;
                }
                touched.sort_unstable();

                let tot_current = comm_tot[current] - adj.degree[v];
                let current_score =
                    move_score(w_to[current], adj.degree[v], tot_current, gamma, m2);
                let mut best = current;
                match theta {
                    None => {
                        let mut best_score = current_score;
                        for &c in &touched {
                            if c == current || w_to[c] <= 0.0 {
                                continue;
                            }
                            let score =
                                move_score(w_to[c], adj.degree[v], comm_tot[c], gamma, m2);
                            if score > best_score + GAIN_EPS {
                                best_score = score;
                                best = c;
                            }
                        }
                    }
                    Some(theta) => {
                        let mut candidates: Vec<(usize, f64)> = Vec::new();
                        let mut mass = 0.0;
                        for &c in &touched {
                            if c == current || w_to[c] <= 0.0 {
                                continue;
                            }
                            let gain =
                                move_score(w_to[c], adj.degree[v], comm_tot[c], gamma, m2)
                                    - current_score;
                            if gain > GAIN_EPS {
                                let weight = (gain / theta).min(500.0).exp();
                                mass += weight;
                                candidates.push((c, weight));
                            }
                        }
                        if mass > 0.0 {
                            let mut draw = rng.random::<f64>() * mass;
                            for (c, weight) in candidates {
                                draw -= weight;
                                if draw <= 0.0 {
                                    best = c;
                                    break;
                                }
                            }
                        }
                    }
                }
                for &c in &touched {
                    w_to[c] = 0.0;
                }
                if best != current {
                    comm_tot[current] -= adj.degree[v];
                    comm_tot[best] += adj.degree[v];
                    refined[v] = best;
                    stable = false;
                }
            }
        }
    }
    renumber(&mut refined);
    refined
}

/// Renumber labels to a contiguous `0..k` range, first-seen order.
fn renumber(labels: &mut [usize]) -> usize {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for l in labels.iter_mut() {
        let id = *map.entry(*l).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        *l = id;
    }
    next
}

/// Collapse refined communities into super-nodes. Returns the aggregate
/// adjacency, the node-to-super mapping, and each super-node's macro
/// community.
fn aggregate(
    adj: &Adjacency,
    refined: &[usize],
    macro_comm: &[usize],
) -> (Adjacency, Vec<usize>, Vec<usize>) {
    let n_super = refined.iter().copied().max().map_or(0, |c| c + 1);
    let mut edge_acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in 0..adj.n {
        let sv = refined[v];
        if adj.self_loop[v] != 0.0 {
            *edge_acc.entry((sv, sv)).or_insert(0.0) += adj.self_loop[v];
        }
        for (u, w) in &adj.nbrs[v] {
            if *u < v {
                continue; // each undirected edge once
            }
            let su = refined[*u];
            let key = if sv <= su { (sv, su) } else { (su, sv) };
            *edge_acc.entry(key).or_insert(0.0) += w;
        }
    }
    let edges: Vec<(usize, usize, f64)> =
        edge_acc.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    let agg = Adjacency::new(n_super, &edges);

    let mut super_macro = vec![0usize; n_super];
    for v in 0..adj.n {
        super_macro[refined[v]] = macro_comm[v];
    }
    renumber(&mut super_macro);
    (agg, refined.to_vec(), super_macro)
}

/// Split every community into its connected components, dropping any
/// disconnection greedy moves may have produced. Splitting a community with
/// no internal path never lowers modularity.
fn split_disconnected(adj: &Adjacency, comm: &mut [usize]) {
    let n_comms = comm.iter().copied().max().map_or(0, |c| c + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_comms];
    for v in 0..adj.n {
        members[comm[v]].push(v);
    }
    let mut next = n_comms;
    let mut visited = vec![false; adj.n];
    for (c, group) in members.iter().enumerate() {
        let mut first = true;
        for &start in group {
            if visited[start] {
                continue;
            }
            let mut stack = vec![start];
            visited[start] = true;
            let mut component = vec![start];
            while let Some(v) = stack.pop() {
                for (u, _) in &adj.nbrs[v] {
                    if !visited[*u] && comm[*u] == c {
                        visited[*u] = true;
                        stack.push(*u);
                        component.push(*u);
                    }
                }
            }
            if !first {
                for v in component {
                    comm[v] = next;
                }
                next += 1;
            }
            first = false;
        }
    }
    renumber(comm);
}

/// One hierarchical descent: local moves, refinement, aggregation, repeated
/// until the partition stops shrinking. Starts from `flat_init` (labels over
/// the input nodes), returns a renumbered flat partition.
fn leiden_hierarchical(
    adj: &Adjacency,
    flat_init: Vec<usize>,
    gamma: f64,
    rng: &mut Pcg64,
    max_iters: usize,
    theta: Option<f64>,
) -> Vec<usize> {
    let mut current = adj.clone();
    let mut partition = flat_init;
    let mut to_current: Vec<usize> = (0..adj.n).collect();

    let mut iter = 0;
    loop {
        iter += 1;
        local_move(&current, &mut partition, gamma, rng);
        let mut macro_comm = partition.clone();
        let n_comms = renumber(&mut macro_comm);
        if n_comms == current.n {
            partition = macro_comm;
            break;
        }
        let refined = refine(&current, &macro_comm, gamma, rng, theta);
        let (agg, node2super, super_macro) = aggregate(&current, &refined, &macro_comm);
        for t in to_current.iter_mut() {
            *t = node2super[*t];
        }
        let shrunk = agg.n < current.n;
        current = agg;
        partition = super_macro;
        if !shrunk || iter >= max_iters {
            break;
        }
    }

    let mut flat: Vec<usize> = to_current.iter().map(|t| partition[*t]).collect();
    renumber(&mut flat);
    flat
}

/// Merge the community pair with the largest positive modularity delta, if
/// any. Catches splits that single-node moves cannot repair.
fn best_merge(adj: &Adjacency, comm: &mut [usize], gamma: f64) -> bool {
    let n_comms = comm.iter().copied().max().map_or(0, |c| c + 1);
    if n_comms < 2 {
        return false;
    }
    let m2 = adj.total;
    let mut tot = vec![0.0; n_comms];
    for v in 0..adj.n {
        tot[comm[v]] += adj.degree[v];
    }
    let mut cross: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for v in 0..adj.n {
        for (u, w) in &adj.nbrs[v] {
            if *u <= v {
                continue;
            }
            let (a, b) = (comm[v], comm[*u]);
            if a == b {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            *cross.entry(key).or_insert(0.0) += w;
        }
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for ((a, b), w_ab) in cross {
        let delta = 2.0 * (w_ab / m2 - gamma * tot[a] * tot[b] / (m2 * m2));
        if delta > GAIN_EPS && best.as_ref().is_none_or(|(_, bd)| delta > *bd + GAIN_EPS) {
            best = Some(((a, b), delta));
        }
    }
    match best {
        Some(((a, b), _)) => {
            for c in comm.iter_mut() {
                if *c == b {
                    *c = a;
                }
            }
            true
        }
        None => false,
    }
}

/// Number of independent seeded restarts; the best partition by modularity
/// wins. Greedy local moving can stall in a local optimum, and a different
/// visit order is the standard escape.
const RESTARTS: usize = 16;

fn leiden_partition(adj: &Adjacency, gamma: f64, seed: u64, max_iters: usize) -> Vec<usize> {
    if adj.total <= 0.0 {
        return (0..adj.n).collect();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..RESTARTS {
        let mut rng = rng::stream(seed, "leiden", restart as u64);
        // first restart is pure greedy from singletons; later ones explore
        // near-ties and alternate basins via random initial partitions
        let theta = if restart == 0 { None } else { Some(0.01) };
        let mut flat: Vec<usize> = (0..adj.n).collect();
        if restart >= RESTARTS / 2 && adj.n > 2 {
            let blocks = rng.random_range(2..=adj.n.min(6));
            for label in flat.iter_mut() {
                *label = rng.random_range(0..blocks);
            }
            renumber(&mut flat);
        }
        let mut q = modularity(adj, &flat, gamma);
        // alternate hierarchical descents and community merges until neither
        // improves the flat partition
        for _ in 0..max_iters {
            let mut next =
                leiden_hierarchical(adj, flat.clone(), gamma, &mut rng, max_iters, theta);
            while best_merge(adj, &mut next, gamma) {}
            renumber(&mut next);
            let q_next = modularity(adj, &next, gamma);
            if q_next > q + GAIN_EPS {
                flat = next;
                q = q_next;
            } else {
                break;
            }
        }
        if best.as_ref().is_none_or(|(bq, _)| q > bq + GAIN_EPS) {
            best = Some((q, flat));
        }
    }
    let (_, mut flat) = best.expect("at least one restart");
    split_disconnected(adj, &mut flat);
    flat
}

/// Partition the problem graph by Leiden at the given resolution.
///
/// Deterministic for a fixed `(graph, resolution, seed)`. Every returned
/// cluster is connected in the input graph; an edgeless graph yields all
/// singletons. Cluster ids are ordered by smallest member problem id.
pub fn leiden_cluster(
    graph: &ProblemGraph,
    resolution: f64,
    seed: u64,
    max_iters: usize,
) -> Clustering {
    let ids: Vec<ProblemId> = graph.node_ids().cloned().collect();
    let index: BTreeMap<&ProblemId, usize> =
        ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let edges: Vec<(usize, usize, f64)> = graph
        .edges()
        .map(|((a, b), w)| (index[a], index[b], *w))
        .collect();
    let adj = Adjacency::new(ids.len(), &edges);
    let flat = leiden_partition(&adj, resolution, seed, max_iters.max(1));
    let quality = modularity(&adj, &flat, resolution);

    let mut groups: BTreeMap<usize, Vec<ProblemId>> = BTreeMap::new();
    for (i, c) in flat.iter().enumerate() {
        groups.entry(*c).or_default().push(ids[i].clone());
    }
    let mut ordered: Vec<Vec<ProblemId>> = groups.into_values().collect();
    for g in &mut ordered {
        g.sort();
    }
    ordered.sort_by(|a, b| a[0].cmp(&b[0]));

    let mut assignment = BTreeMap::new();
    let mut clusters = BTreeMap::new();
    for (i, members) in ordered.into_iter().enumerate() {
        let cid = ClusterId(i as u32);
        for m in &members {
            assignment.insert(m.clone(), cid);
        }
        clusters.insert(cid, members);
    }
    Clustering {
        assignment,
        clusters,
        quality,
    }
}

/// Modularity of an arbitrary assignment over the graph, at `resolution`.
/// Problems missing from `assignment` are treated as their own singletons.
pub fn modularity_of(
    graph: &ProblemGraph,
    assignment: &BTreeMap<ProblemId, ClusterId>,
    resolution: f64,
) -> f64 {
    let ids: Vec<ProblemId> = graph.node_ids().cloned().collect();
    let index: BTreeMap<&ProblemId, usize> =
        ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let edges: Vec<(usize, usize, f64)> = graph
        .edges()
        .map(|((a, b), w)| (index[a], index[b], *w))
        .collect();
    let adj = Adjacency::new(ids.len(), &edges);
    let mut labels: Vec<usize> = Vec::with_capacity(ids.len());
    let max_label = assignment.values().map(|c| c.0 as usize).max().unwrap_or(0);
    let mut next = max_label + 1;
    for id in &ids {
        match assignment.get(id) {
            Some(c) => labels.push(c.0 as usize),
            None => {
                labels.push(next);
                next += 1;
            }
        }
    }
    renumber(&mut labels);
    modularity(&adj, &labels, resolution)
}
