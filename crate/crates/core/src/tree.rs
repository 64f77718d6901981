//! Pair matrices, ultrametric trees, single-linkage clustering and Newick.
//!
//! Node numbering used throughout the crate: leaves are `0..N`, and the
//! internal node created by coalescent event `n` (0-based) is `N + n`. The
//! root is therefore node `2N - 2`.

use std::fmt::Write as _;
use std::sync::Arc;

use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};

/// Shared, immutable list of taxon names.
pub type TaxonSet = Arc<[String]>;

pub fn taxon_set<S: AsRef<str>>(names: &[S]) -> TaxonSet {
    names.iter().map(|s| s.as_ref().to_string()).collect()
}

/// Default names `t0, t1, ...`.
pub fn default_taxa(n: usize) -> TaxonSet {
    (0..n).map(|i| format!("t{i}")).collect()
}

/// Flat index of the unordered pair `{u, v}` among `N(N-1)/2` pairs.
#[inline]
pub fn pair_index(u: usize, v: usize, n: usize) -> usize {
    debug_assert!(u != v && u < n && v < n);
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

/// Inverse of [`pair_index`]: returns `(u, v)` with `u < v`.
pub fn pair_of(idx: usize, n: usize) -> (usize, usize) {
    let mut u = 0;
    let mut start = 0;
    loop {
        let row = n - u - 1;
        if idx < start + row {
            return (u, u + 1 + idx - start);
        }
        start += row;
        u += 1;
    }
}

pub fn n_pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

/// A set of taxon ids stored as a bitset. One inline word covers `N <= 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clade {
    words: SmallVec<[u64; 1]>,
}

impl Clade {
    pub fn empty(n_taxa: usize) -> Self {
        Self {
            words: smallvec![0; n_taxa.div_ceil(64).max(1)],
        }
    }

    pub fn singleton(taxon: usize, n_taxa: usize) -> Self {
        let mut c = Self::empty(n_taxa);
        c.insert(taxon);
        c
    }

    pub fn from_members(members: &[usize], n_taxa: usize) -> Self {
        let mut c = Self::empty(n_taxa);
        for &m in members {
            c.insert(m);
        }
        c
    }

    pub fn full(n_taxa: usize) -> Self {
        let mut c = Self::empty(n_taxa);
        for i in 0..n_taxa {
            c.insert(i);
        }
        c
    }

    #[inline]
    pub fn insert(&mut self, taxon: usize) {
        self.words[taxon / 64] |= 1 << (taxon % 64);
    }

    #[inline]
    pub fn contains(&self, taxon: usize) -> bool {
        self.words
            .get(taxon / 64)
            .is_some_and(|w| w & (1 << (taxon % 64)) != 0)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Smallest member, if any.
    pub fn first(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
    }

    /// Members in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(i * 64 + b)
                }
            })
        })
    }
}

/// The `N(N-1)/2` strictly positive pairwise values `t^{u,v}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    n_taxa: usize,
    values: Vec<f64>,
}

impl PairMatrix {
    pub fn new(n_taxa: usize, values: Vec<f64>) -> Result<Self> {
        if n_taxa < 2 {
            return Err(Error::PairMatrix(format!("need N >= 2, got {n_taxa}")));
        }
        if values.len() != n_pairs(n_taxa) {
            return Err(Error::PairMatrix(format!(
                "expected {} values for N = {n_taxa}, got {}",
                n_pairs(n_taxa),
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            let (a, b) = pair_of(i, n_taxa);
            return Err(Error::PairMatrix(format!(
                "entry {{{a},{b}}} = {v} is not finite and positive"
            )));
        }
        Ok(Self { n_taxa, values })
    }

    pub fn from_fn(n_taxa: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n_pairs(n_taxa));
        for u in 0..n_taxa {
            for v in u + 1..n_taxa {
                values.push(f(u, v));
            }
        }
        Self::new(n_taxa, values)
    }

    pub fn n_taxa(&self) -> usize {
        self.n_taxa
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[pair_index(u, v, self.n_taxa)]
    }
}

/// A rooted binary tree with all leaves at time 0, encoded as the ordered
/// list of coalescent events `{W_n, Z_n}` with nondecreasing times `t_n`.
#[derive(Debug, Clone)]
pub struct UltrametricTree {
    taxa: TaxonSet,
    bipartitions: Vec<(Clade, Clade)>,
    times: Vec<f64>,
    /// children of internal node `N + n`, as node ids
    children: Vec<[usize; 2]>,
    /// parent of every node; `usize::MAX` for the root
    parent: Vec<usize>,
}

impl PartialEq for UltrametricTree {
    fn eq(&self, other: &Self) -> bool {
        self.taxa == other.taxa
            && self.times == other.times
            && self
                .bipartitions
                .iter()
                .zip(&other.bipartitions)
                .all(|((a, b), (c, d))| (a == c && b == d) || (a == d && b == c))
    }
}

impl UltrametricTree {
    /// Validate and build a tree from its bipartition sequence.
    pub fn new(taxa: TaxonSet, bipartitions: Vec<(Clade, Clade)>, times: Vec<f64>) -> Result<Self> {
        let n = taxa.len();
        if n < 2 {
            return Err(Error::Tree(format!("need at least 2 taxa, got {n}")));
        }
        if bipartitions.len() != n - 1 || times.len() != n - 1 {
            return Err(Error::Tree(format!(
                "expected {} events, got {} bipartitions and {} times",
                n - 1,
                bipartitions.len(),
                times.len()
            )));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < prev {
                return Err(Error::Tree(format!(
                    "time {i} = {t} is not finite, non-negative and nondecreasing"
                )));
            }
            prev = t;
        }
        // top[i] = current root node of the subtree holding taxon i
        let mut top: Vec<usize> = (0..n).collect();
        let mut node_clade: Vec<Clade> = (0..n).map(|i| Clade::singleton(i, n)).collect();
        let mut children = Vec::with_capacity(n - 1);
        let mut parent = vec![usize::MAX; 2 * n - 1];
        for (k, (w, z)) in bipartitions.iter().enumerate() {
            if w.is_empty() || z.is_empty() || !w.is_disjoint(z) {
                return Err(Error::Tree(format!("event {k}: sides must be nonempty and disjoint")));
            }
            if w.iter().chain(z.iter()).any(|i| i >= n) {
                return Err(Error::Tree(format!("event {k}: taxon id out of range")));
            }
            let a = top[w.first().unwrap()];
            let b = top[z.first().unwrap()];
            if node_clade[a] != *w || node_clade[b] != *z {
                return Err(Error::Tree(format!(
                    "event {k}: sides are not clades of the partial tree"
                )));
            }
            let node = n + k;
            let merged = w.union(z);
            for i in merged.iter() {
                top[i] = node;
            }
            parent[a] = node;
            parent[b] = node;
            children.push([a, b]);
            node_clade.push(merged);
        }
        if node_clade.last().map(Clade::len) != Some(n) {
            return Err(Error::Tree("last event does not cover every taxon".into()));
        }
        Ok(Self {
            taxa,
            bipartitions,
            times,
            children,
            parent,
        })
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn taxa(&self) -> &TaxonSet {
        &self.taxa
    }

    pub fn bipartitions(&self) -> &[(Clade, Clade)] {
        &self.bipartitions
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Children (node ids) of the internal node of event `n`.
    pub fn children(&self, event: usize) -> [usize; 2] {
        self.children[event]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        let p = self.parent[node];
        (p != usize::MAX).then_some(p)
    }

    pub fn root(&self) -> usize {
        2 * self.n_taxa() - 2
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n_taxa() - 1
    }

    /// Time of a node; leaves sit at 0.
    #[inline]
    pub fn node_time(&self, node: usize) -> f64 {
        let n = self.n_taxa();
        if node < n {
            0.0
        } else {
            self.times[node - n]
        }
    }

    /// Length of the branch above `node` (0 for the root).
    pub fn branch_length(&self, node: usize) -> f64 {
        self.parent(node)
            .map_or(0.0, |p| self.node_time(p) - self.node_time(node))
    }

    /// Same tree with new event times (topology unchanged).
    pub fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        Self::new(self.taxa.clone(), self.bipartitions.clone(), times)
    }

    /// Same tree with the two sides of every bipartition swapped.
    pub fn swapped(&self) -> Self {
        let bip = self
            .bipartitions
            .iter()
            .map(|(w, z)| (z.clone(), w.clone()))
            .collect();
        Self::new(self.taxa.clone(), bip, self.times.clone()).expect("swap preserves validity")
    }

    pub fn taxon_id(&self, name: &str) -> Result<usize> {
        self.taxa
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::UnknownTaxon(name.to_string()))
    }

    /// Index of the event at which taxa `u` and `v` coalesce.
    pub fn coalescence_event(&self, u: usize, v: usize) -> Result<usize> {
        let n = self.n_taxa();
        if u >= n || v >= n || u == v {
            return Err(Error::InvalidArgument(format!("bad taxon pair ({u}, {v})")));
        }
        self.bipartitions
            .iter()
            .position(|(w, z)| (w.contains(u) && z.contains(v)) || (w.contains(v) && z.contains(u)))
            .ok_or_else(|| Error::Tree(format!("pair ({u}, {v}) never coalesces")))
    }

    pub fn coalescent_time_of_pair(&self, u: usize, v: usize) -> Result<f64> {
        Ok(self.times[self.coalescence_event(u, v)?])
    }

    pub fn coalescent_time_by_name(&self, u: &str, v: &str) -> Result<f64> {
        self.coalescent_time_of_pair(self.taxon_id(u)?, self.taxon_id(v)?)
    }

    /// Coalescent time of every pair, in flat pair order. `O(N^2)`.
    pub fn pair_times(&self) -> Vec<f64> {
        let n = self.n_taxa();
        let mut out = vec![0.0; n_pairs(n)];
        for ((w, z), &t) in self.bipartitions.iter().zip(&self.times) {
            for a in w.iter() {
                for b in z.iter() {
                    out[pair_index(a, b, n)] = t;
                }
            }
        }
        out
    }

    /// Sum of all branch lengths.
    pub fn tree_length(&self) -> f64 {
        (0..self.n_nodes()).map(|v| self.branch_length(v)).sum()
    }

    /// The bipartition at the root, as the side holding taxon 0 first.
    pub fn root_split(&self) -> (Clade, Clade) {
        let (w, z) = self.bipartitions.last().unwrap().clone();
        if w.contains(0) {
            (w, z)
        } else {
            (z, w)
        }
    }

    fn smallest_leaf(&self, node: usize) -> usize {
        let n = self.n_taxa();
        if node < n {
            node
        } else {
            let (w, z) = &self.bipartitions[node - n];
            w.first().unwrap().min(z.first().unwrap())
        }
    }

    /// Rooted Newick with time-difference branch lengths. Children are
    /// ordered by their smallest taxon id.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_newick(self.root(), &mut out);
        out.push(';');
        out
    }

    fn write_newick(&self, node: usize, out: &mut String) {
        let n = self.n_taxa();
        if node < n {
            out.push_str(&self.taxa[node]);
        } else {
            let [mut a, mut b] = self.children[node - n];
            if self.smallest_leaf(a) > self.smallest_leaf(b) {
                std::mem::swap(&mut a, &mut b);
            }
            out.push('(');
            self.write_newick(a, out);
            out.push(',');
            self.write_newick(b, out);
            out.push(')');
        }
        if self.parent(node).is_some() {
            let _ = write!(out, ":{}", self.branch_length(node));
        }
    }

    /// Parse rooted binary Newick with branch lengths; taxa get ids in order
    /// of first appearance.
    pub fn from_newick(text: &str) -> Result<Self> {
        let parsed = newick::parse(text)?;
        let mut names = Vec::new();
        parsed.collect_leaves(&mut names);
        Self::from_parsed(&parsed, taxon_set(&names))
    }

    /// Parse Newick against a known taxon set; every taxon must appear once.
    pub fn from_newick_with_taxa(text: &str, taxa: TaxonSet) -> Result<Self> {
        let parsed = newick::parse(text)?;
        Self::from_parsed(&parsed, taxa)
    }

    fn from_parsed(root: &newick::Node, taxa: TaxonSet) -> Result<Self> {
        let n = taxa.len();
        let mut seen = vec![false; n];
        // (clade, height, side clades)
        let mut events: Vec<(f64, Clade, Clade)> = Vec::new();
        fn walk(
            node: &newick::Node,
            taxa: &TaxonSet,
            seen: &mut [bool],
            events: &mut Vec<(f64, Clade, Clade)>,
        ) -> Result<(Clade, f64)> {
            let n = taxa.len();
            match &node.children[..] {
                [] => {
                    let id = taxa
                        .iter()
                        .position(|t| *t == node.name)
                        .ok_or_else(|| Error::UnknownTaxon(node.name.clone()))?;
                    if std::mem::replace(&mut seen[id], true) {
                        return Err(Error::Tree(format!("taxon `{}` appears twice", node.name)));
                    }
                    Ok((Clade::singleton(id, n), 0.0))
                }
                [a, b] => {
                    let (ca, ha) = walk(a, taxa, seen, events)?;
                    let (cb, hb) = walk(b, taxa, seen, events)?;
                    let la = a.length.ok_or_else(|| Error::Tree("missing branch length".into()))?;
                    let lb = b.length.ok_or_else(|| Error::Tree("missing branch length".into()))?;
                    let (xa, xb) = (ha + la, hb + lb);
                    if (xa - xb).abs() > 1e-6 * xa.abs().max(xb.abs()).max(1.0) {
                        return Err(Error::Tree(format!(
                            "not ultrametric: child depths {xa} and {xb} differ"
                        )));
                    }
                    let h = 0.5 * (xa + xb);
                    events.push((h, ca.clone(), cb.clone()));
                    Ok((ca.union(&cb), h))
                }
                _ => Err(Error::Tree(format!(
                    "node with {} children; only binary trees are supported",
                    node.children.len()
                ))),
            }
        }
        walk(root, &taxa, &mut seen, &mut events)?;
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::TaxaMismatch(format!("taxon `{}` absent from tree", taxa[missing])));
        }
        // Post-order already places children before parents; a stable sort by
        // height keeps that order among equal heights.
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let times = events.iter().map(|e| e.0).collect();
        let bip = events.into_iter().map(|(_, w, z)| (w, z)).collect();
        Self::new(taxa, bip, times)
    }

    /// Canonical form: each bipartition ordered with the side containing the
    /// smaller taxon id first.
    pub fn canonical(&self) -> Self {
        let bip = self
            .bipartitions
            .iter()
            .map(|(w, z)| {
                if w.first() < z.first() {
                    (w.clone(), z.clone())
                } else {
                    (z.clone(), w.clone())
                }
            })
            .collect();
        Self::new(self.taxa.clone(), bip, self.times.clone()).expect("reordering is valid")
    }
}

mod newick {
    use crate::error::{Error, Result};

    #[derive(Debug)]
    pub struct Node {
        pub name: String,
        pub length: Option<f64>,
        pub children: Vec<Node>,
    }

    impl Node {
        pub fn collect_leaves(&self, out: &mut Vec<String>) {
            if self.children.is_empty() {
                out.push(self.name.clone());
            }
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    struct Parser<'a> {
        s: &'a [u8],
        pos: usize,
    }

    impl Parser<'_> {
        fn err(&self, message: impl Into<String>) -> Error {
            Error::Newick {
                pos: self.pos,
                message: message.into(),
            }
        }

        fn skip_ws(&mut self) {
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }

        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.s.get(self.pos).copied()
        }

        fn label(&mut self) -> String {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len() && !b"(),:;[".contains(&self.s[self.pos]) {
                self.pos += 1;
            }
            String::from_utf8_lossy(&self.s[start..self.pos]).trim().to_string()
        }

        fn node(&mut self) -> Result<Node> {
            let mut children = Vec::new();
            if self.peek() == Some(b'(') {
                self.pos += 1;
                loop {
                    children.push(self.node()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.err("expected `,` or `)`")),
                    }
                }
            }
            let name = self.label();
            // skip [&...] comments
            if self.peek() == Some(b'[') {
                while self.pos < self.s.len() && self.s[self.pos] != b']' {
                    self.pos += 1;
                }
                self.pos += 1;
            }
            let mut length = None;
            if self.peek() == Some(b':') {
                self.pos += 1;
                let text = self.label();
                length = Some(
                    text.parse::<f64>()
                        .map_err(|_| self.err(format!("bad branch length `{text}`")))?,
                );
            }
            if children.is_empty() && name.is_empty() {
                return Err(self.err("leaf without a name"));
            }
            Ok(Node {
                name,
                length,
                children,
            })
        }
    }

    pub fn parse(text: &str) -> Result<Node> {
        let mut p = Parser {
            s: text.as_bytes(),
            pos: 0,
        };
        let root = p.node()?;
        if p.peek() != Some(b';') {
            return Err(p.err("expected `;`"));
        }
        p.pos += 1;
        if p.peek().is_some() {
            return Err(p.err("trailing characters after `;`"));
        }
        Ok(root)
    }
}

/// Result of clustering: the tree plus, for each event, the flat index of the
/// matrix entry that triggered it.
#[derive(Debug, Clone)]
pub struct Linkage {
    pub tree: UltrametricTree,
    pub selected: Vec<usize>,
}

impl Linkage {
    /// True when some event's minimum is attained by more than one pair, or
    /// two events share a time.
    pub fn has_ties(&self, matrix: &PairMatrix) -> bool {
        let n = matrix.n_taxa();
        let times = self.tree.times();
        if times.windows(2).any(|w| w[0] == w[1]) {
            return true;
        }
        self.tree
            .bipartitions()
            .iter()
            .zip(&self.selected)
            .any(|((w, z), &sel)| {
                let t = matrix.values()[sel];
                w.iter()
                    .any(|a| z.iter().any(|b| pair_index(a, b, n) != sel && matrix.get(a, b) == t))
            })
    }
}

fn build_from_edges(matrix: &PairMatrix, taxa: TaxonSet, edges: &[usize]) -> Result<Linkage> {
    let n = matrix.n_taxa();
    // union-find over taxa with the current clade held at each root
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut clade: Vec<Option<Clade>> = (0..n).map(|i| Some(Clade::singleton(i, n))).collect();
    let mut bip = Vec::with_capacity(n - 1);
    let mut times = Vec::with_capacity(n - 1);
    for &e in edges {
        let (u, v) = pair_of(e, n);
        let (ru, rv) = (find(&mut uf, u), find(&mut uf, v));
        debug_assert_ne!(ru, rv);
        let w = clade[ru].take().unwrap();
        let z = clade[rv].take().unwrap();
        let merged = w.union(&z);
        uf[rv] = ru;
        clade[ru] = Some(merged);
        bip.push((w, z));
        times.push(matrix.values()[e]);
    }
    let tree = UltrametricTree::new(taxa, bip, times)?;
    Ok(Linkage {
        tree,
        selected: edges.to_vec(),
    })
}

fn check_taxa(matrix: &PairMatrix, taxa: &TaxonSet) -> Result<()> {
    if taxa.len() != matrix.n_taxa() {
        return Err(Error::TaxaMismatch(format!(
            "{} taxon names for a {}-taxon matrix",
            taxa.len(),
            matrix.n_taxa()
        )));
    }
    Ok(())
}

/// Single-linkage clustering exactly as the textbook loop: at each step
/// scan every not-yet-coalesced pair for the minimum. `O(N^3)`.
/// Ties go to the lowest flat pair index.
pub fn single_linkage_naive(matrix: &PairMatrix, taxa: TaxonSet) -> Result<Linkage> {
    check_taxa(matrix, &taxa)?;
    let n = matrix.n_taxa();
    let vals = matrix.values();
    let mut comp: Vec<usize> = (0..n).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        let mut best = usize::MAX;
        for (idx, &t) in vals.iter().enumerate() {
            let (u, v) = pair_of(idx, n);
            if comp[u] != comp[v] && (best == usize::MAX || t < vals[best]) {
                best = idx;
            }
        }
        let (u, v) = pair_of(best, n);
        let (cu, cv) = (comp[u], comp[v]);
        for c in comp.iter_mut() {
            if *c == cv {
                *c = cu;
            }
        }
        edges.push(best);
    }
    build_from_edges(matrix, taxa, &edges)
}

/// `O(N^2)` single linkage: Prim's minimum spanning tree under the strict
/// order `(value, flat index)`, then Kruskal-order replay of its edges.
/// Produces exactly the same output as [`single_linkage_naive`].
pub fn single_linkage_detailed(matrix: &PairMatrix, taxa: TaxonSet) -> Result<Linkage> {
    check_taxa(matrix, &taxa)?;
    let n = matrix.n_taxa();
    let vals = matrix.values();
    let less = |a: usize, b: usize| vals[a] < vals[b] || (vals[a] == vals[b] && a < b);
    let mut in_tree = vec![false; n];
    let mut best = vec![usize::MAX; n];
    in_tree[0] = true;
    for (v, b) in best.iter_mut().enumerate().skip(1) {
        *b = pair_index(0, v, n);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 0..n - 1 {
        let mut pick = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (pick == usize::MAX || less(best[v], best[pick])) {
                pick = v;
            }
        }
        in_tree[pick] = true;
        edges.push(best[pick]);
        for v in 0..n {
            if !in_tree[v] {
                let e = pair_index(pick, v, n);
                if less(e, best[v]) {
                    best[v] = e;
                }
            }
        }
    }
    edges.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    build_from_edges(matrix, taxa, &edges)
}

pub fn single_linkage(matrix: &PairMatrix, taxa: TaxonSet) -> Result<UltrametricTree> {
    single_linkage_detailed(matrix, taxa).map(|l| l.tree)
}
