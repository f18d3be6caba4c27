//! Call-chain generation, function weighting and diameter-bounded clustering
//! over a call graph whose chains have been ranked by the engine.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::engine::RankOutcome;

/// Separator between caller and callee in a pair chain id.
pub const CHAIN_SEPARATOR: &str = " -> ";

/// Seeds whose `d`-ball is at most this large get an exhaustive search.
const EXACT_BALL_LIMIT: usize = 14;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("function {0:?} is not in the call graph")]
    UnknownFunction(String),
    #[error("cannot parse chain id {0:?}")]
    BadChainId(String),
}

/// Directed call graph. Duplicate edges collapse; a self-loop is kept once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    edge_set: HashSet<(usize, usize)>,
}

impl CallGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut g = Self::new();
        for (a, b) in edges {
            g.add_edge(a.as_ref(), b.as_ref());
        }
        g
    }

    pub fn add_node(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        self.nodes.push(id.to_string());
        self.index.insert(id.to_string(), self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, caller: &str, callee: &str) {
        let a = self.add_node(caller);
        let b = self.add_node(callee);
        if self.edge_set.insert((a, b)) {
            self.edges.push((a, b));
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Edges as `(caller, callee)` in insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges.iter().map(|&(a, b)| (self.nodes[a].as_str(), self.nodes[b].as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Parse `caller callee` lines. Blank lines and `#` comments are skipped;
    /// a line with a single token declares an isolated node.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut g = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [a] => {
                    g.add_node(a);
                }
                [a, b] => g.add_edge(a, b),
                _ => {
                    return Err(GraphError::Parse {
                        line: i + 1,
                        message: format!("expected `caller callee`, found {} fields", parts.len()),
                    })
                }
            }
        }
        Ok(g)
    }
}

/// One function id per line; blank lines and `#` comments skipped, duplicates dropped.
pub fn read_function_list<R: BufRead>(reader: R) -> Result<Vec<String>, GraphError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.split_whitespace().count() != 1 {
            return Err(GraphError::Parse {
                line: i + 1,
                message: "function ids cannot contain whitespace".into(),
            });
        }
        if seen.insert(line.to_string()) {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

/// A single function or a caller/callee pair, rendered as one rankable document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallChain {
    pub functions: Vec<String>,
    pub text: String,
}

impl CallChain {
    pub fn id(&self) -> String {
        self.functions.join(CHAIN_SEPARATOR)
    }

    pub fn to_document(&self, origin_index: usize) -> Document {
        Document::new(self.id(), self.text.clone(), origin_index)
    }
}

/// Split a chain id back into its functions.
pub fn parse_chain_id(id: &str) -> Result<Vec<String>, GraphError> {
    let parts: Vec<String> = id.split(CHAIN_SEPARATOR).map(|p| p.trim().to_string()).collect();
    if parts.is_empty() || parts.len() > 2 || parts.iter().any(String::is_empty) {
        return Err(GraphError::BadChainId(id.to_string()));
    }
    Ok(parts)
}

/// One chain per changed function, then one per edge with both endpoints changed.
///
/// Chain text joins the per-function texts (summaries or definitions); a
/// function with no entry in `texts` contributes its id.
pub fn generate_call_chains(
    graph: &CallGraph,
    changed: &[String],
    texts: &HashMap<String, String>,
) -> Result<Vec<CallChain>, GraphError> {
    let text_of = |f: &str| texts.get(f).cloned().unwrap_or_else(|| f.to_string());
    let mut changed_set = HashSet::new();
    let mut chains = Vec::new();
    for f in changed {
        if !graph.contains(f) {
            return Err(GraphError::UnknownFunction(f.clone()));
        }
        if changed_set.insert(f.as_str()) {
            chains.push(CallChain {
                functions: vec![f.clone()],
                text: text_of(f),
            });
        }
    }
    for (a, b) in graph.edges() {
        if a != b && changed_set.contains(a) && changed_set.contains(b) {
            chains.push(CallChain {
                functions: vec![a.to_string(), b.to_string()],
                text: format!("{a}:\n{}\n\ncalls {b}:\n{}", text_of(a), text_of(b)),
            });
        }
    }
    Ok(chains)
}

/// A chain with its engine outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedChain {
    pub functions: Vec<String>,
    pub rank: usize,
    pub iterations: usize,
}

/// Pull ranked chains out of a ranking outcome whose document ids are chain ids.
pub fn ranked_chains(outcome: &RankOutcome) -> Result<Vec<RankedChain>, GraphError> {
    outcome
        .ranked
        .iter()
        .map(|d| {
            Ok(RankedChain {
                functions: parse_chain_id(&d.id)?,
                rank: d.final_rank,
                iterations: d.iterations_survived,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionWeight {
    pub function: String,
    /// Best (lowest) rank over the chains containing the function.
    pub best_rank: usize,
    /// Most iterations survived by any containing chain.
    pub max_iterations: usize,
    pub weight: f64,
}

/// `w = k / r` per function. With `survivors_only`, chains that never
/// advanced past the first iteration are ignored. Sorted by weight, heaviest first.
pub fn compute_function_weights(chains: &[RankedChain], survivors_only: bool) -> Vec<FunctionWeight> {
    let mut acc: HashMap<&str, (usize, usize)> = HashMap::new();
    for chain in chains {
        if chain.rank == 0 || chain.iterations == 0 || (survivors_only && chain.iterations <= 1) {
            continue;
        }
        for f in &chain.functions {
            let e = acc.entry(f.as_str()).or_insert((usize::MAX, 0));
            e.0 = e.0.min(chain.rank);
            e.1 = e.1.max(chain.iterations);
        }
    }
    let mut out: Vec<FunctionWeight> = acc
        .into_iter()
        .map(|(f, (r, k))| FunctionWeight {
            function: f.to_string(),
            best_rank: r,
            max_iterations: k,
            weight: k as f64 / r as f64,
        })
        .collect();
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.function.cmp(&b.function)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub seed: String,
    /// The diameter bound the cluster was built under.
    pub diameter_bound: usize,
    /// True diameter of the member-induced subgraph.
    pub diameter: usize,
    /// Sorted member ids.
    pub members: Vec<String>,
    pub mass: f64,
    pub density: f64,
    pub score: f64,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// `mass * density`, i.e. `mass^2 / size`.
pub fn cluster_score(mass: f64, size: usize) -> f64 {
    mass * (mass / size as f64)
}

/// Undirected view of the graph restricted to weighted functions.
struct WeightedView<'a> {
    ids: Vec<&'a str>,
    weights: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl<'a> WeightedView<'a> {
    fn new(graph: &CallGraph, weights: &'a [FunctionWeight]) -> Self {
        let mut ids = Vec::new();
        let mut w = Vec::new();
        let mut local: HashMap<&str, usize> = HashMap::new();
        for fw in weights {
            if !graph.contains(&fw.function) {
                log::warn!("weighted function {:?} is not in the call graph; skipped", fw.function);
                continue;
            }
            if local.contains_key(fw.function.as_str()) || fw.weight <= 0.0 {
                continue;
            }
            local.insert(fw.function.as_str(), ids.len());
            ids.push(fw.function.as_str());
            w.push(fw.weight);
        }
        let mut adj = vec![Vec::new(); ids.len()];
        for (a, b) in graph.edges() {
            if a == b {
                continue;
            }
            if let (Some(&x), Some(&y)) = (local.get(a), local.get(b)) {
                if !adj[x].contains(&y) {
                    adj[x].push(y);
                    adj[y].push(x);
                }
            }
        }
        Self { ids, weights: w, adj }
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    /// Diameter of the subgraph induced by `members`; `None` if disconnected.
    fn induced_diameter(&self, members: &[usize]) -> Option<usize> {
        let inside: HashSet<usize> = members.iter().copied().collect();
        let mut diameter = 0;
        for &src in members {
            let mut dist: HashMap<usize, usize> = HashMap::from([(src, 0)]);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u] {
                    if inside.contains(&v) && !dist.contains_key(&v) {
                        dist.insert(v, dist[&u] + 1);
                        queue.push_back(v);
                    }
                }
            }
            if dist.len() != members.len() {
                return None;
            }
            diameter = diameter.max(dist.values().copied().max().unwrap_or(0));
        }
        Some(diameter)
    }

    /// Nodes within graph distance `d` of `seed`, seed first.
    fn ball(&self, seed: usize, d: usize) -> Vec<usize> {
        let mut dist: HashMap<usize, usize> = HashMap::from([(seed, 0)]);
        let mut order = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(u) = queue.pop_front() {
            if dist[&u] == d {
                continue;
            }
            for &v in &self.adj[u] {
                if !dist.contains_key(&v) {
                    dist.insert(v, dist[&u] + 1);
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
        order
    }

    fn heavier(&self, a: usize, b: usize) -> std::cmp::Ordering {
        self.weights[b].total_cmp(&self.weights[a]).then_with(|| self.ids[a].cmp(self.ids[b]))
    }

    /// Greedy growth from `seed`: repeatedly admit the heaviest neighbour that
    /// keeps the induced diameter within `d`. Returns members in admission order.
    fn grow(&self, seed: usize, d: usize) -> Vec<usize> {
        let mut members = vec![seed];
        let mut in_set: HashSet<usize> = HashSet::from([seed]);
        loop {
            let mut frontier: Vec<usize> = members
                .iter()
                .flat_map(|&m| self.adj[m].iter().copied())
                .filter(|v| !in_set.contains(v))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            frontier.sort_by(|&a, &b| self.heavier(a, b));
            let admitted = frontier.into_iter().find(|&v| {
                members.push(v);
                let ok = self.induced_diameter(&members).is_some_and(|dm| dm <= d);
                members.pop();
                ok
            });
            match admitted {
                Some(v) => {
                    members.push(v);
                    in_set.insert(v);
                }
                None => return members,
            }
        }
    }

    fn mass(&self, members: &[usize]) -> f64 {
        members.iter().map(|&m| self.weights[m]).sum()
    }

    /// Highest-scoring member set containing `seed` with induced diameter within `d`.
    ///
    /// Exhaustive over the seed's `d`-ball when it is small enough; otherwise
    /// the best prefix of the greedy growth order.
    fn best_containing(&self, seed: usize, d: usize, greedy: &[usize]) -> Vec<usize> {
        let ball = self.ball(seed, d);
        if ball.len() > EXACT_BALL_LIMIT {
            let mut best = (f64::NEG_INFINITY, 0);
            for len in 1..=greedy.len() {
                let s = cluster_score(self.mass(&greedy[..len]), len);
                if s > best.0 {
                    best = (s, len);
                }
            }
            return greedy[..best.1].to_vec();
        }
        // bitmask adjacency over the ball; bit 0 is the seed
        let pos: HashMap<usize, usize> = ball.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let adj: Vec<u32> = ball
            .iter()
            .map(|&v| self.adj[v].iter().filter_map(|u| pos.get(u)).fold(0u32, |m, &i| m | 1 << i))
            .collect();
        let rest = ball.len() - 1;
        let mut best: Option<(f64, f64, u32)> = None;
        for sub in 0u32..(1 << rest) {
            let mask = (sub << 1) | 1;
            if !mask_diameter_within(mask, &adj, d) {
                continue;
            }
            let mass: f64 = (0..ball.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.weights[ball[i]]).sum();
            let score = cluster_score(mass, mask.count_ones() as usize);
            let better = match best {
                None => true,
                Some((bs, bm, _)) => score > bs || (score == bs && mass > bm),
            };
            if better {
                best = Some((score, mass, mask));
            }
        }
        let mask = best.map_or(1, |b| b.2);
        (0..ball.len()).filter(|i| mask >> i & 1 == 1).map(|i| ball[i]).collect()
    }

    fn cluster(&self, seed: usize, d: usize, members: &[usize]) -> Cluster {
        let mass = self.mass(members);
        let mut ids: Vec<String> = members.iter().map(|&m| self.ids[m].to_string()).collect();
        ids.sort();
        Cluster {
            seed: self.ids[seed].to_string(),
            diameter_bound: d,
            diameter: self.induced_diameter(members).expect("clusters are connected"),
            members: ids,
            mass,
            density: mass / members.len() as f64,
            score: cluster_score(mass, members.len()),
        }
    }
}

/// True when the members in `mask` are connected with all pairwise distances within `d`.
fn mask_diameter_within(mask: u32, adj: &[u32], d: usize) -> bool {
    let mut rem = mask;
    while rem != 0 {
        let src = rem.trailing_zeros() as usize;
        rem &= rem - 1;
        let mut reached = 1u32 << src;
        let mut frontier = reached;
        for _ in 0..d {
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let u = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= adj[u];
            }
            next &= mask & !reached;
            if next == 0 {
                break;
            }
            reached |= next;
            frontier = next;
        }
        if reached != mask {
            return false;
        }
    }
    true
}

/// Build candidate clusters for every weighted seed and every diameter bound.
///
/// Each (seed, d) contributes its greedy maximal growth and the best-scoring
/// set containing the seed. Identical member sets are kept once, at the first
/// (smallest bound, heaviest seed) construction. Output is unsorted; see
/// [`score_clusters`].
pub fn build_clusters(graph: &CallGraph, weights: &[FunctionWeight], diameters: &[usize]) -> Vec<Cluster> {
    let view = WeightedView::new(graph, weights);
    let mut seeds: Vec<usize> = (0..view.len()).collect();
    seeds.sort_by(|&a, &b| view.heavier(a, b));
    let mut bounds = diameters.to_vec();
    bounds.sort_unstable();
    bounds.dedup();

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::new();
    for &d in &bounds {
        for &seed in &seeds {
            let greedy = view.grow(seed, d);
            let best = view.best_containing(seed, d, &greedy);
            for members in [greedy, best] {
                let mut key = members.clone();
                key.sort_unstable();
                if seen.insert(key) {
                    out.push(view.cluster(seed, d, &members));
                }
            }
        }
    }
    out
}

/// Sort by score descending; ties go to larger mass, then seed id.
pub fn score_clusters(mut clusters: Vec<Cluster>) -> Vec<Cluster> {
    clusters.retain(|c| !c.members.is_empty());
    for c in &mut clusters {
        c.density = c.mass / c.members.len() as f64;
        c.score = cluster_score(c.mass, c.members.len());
    }
    clusters.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.mass.total_cmp(&a.mass))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.members.cmp(&b.members))
    });
    clusters
}

/// Write the ranked cluster table as CSV, optionally with a `members` column
/// (space-separated ids).
pub fn write_cluster_table<W: Write>(out: W, clusters: &[Cluster], with_members: bool) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rank", "seed", "diameter", "size", "mass", "density", "score"];
    if with_members {
        header.push("members");
    }
    w.write_record(&header)?;
    for (i, c) in clusters.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            c.seed.clone(),
            c.diameter.to_string(),
            c.size().to_string(),
            format!("{:.2}", c.mass),
            format!("{:.2}", c.density),
            format!("{:.2}", c.score),
        ];
        if with_members {
            row.push(c.members.join(" "));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
