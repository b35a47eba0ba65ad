//! Sparse reply graph over message nodes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Adjacency in compressed sparse row form. Neighbor lists are sorted and
/// deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    symmetric: bool,
    self_loops: bool,
}

/// Construction switches. Both default to on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    pub symmetric: bool,
    pub self_loops: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            symmetric: true,
            self_loops: true,
        }
    }
}

impl Graph {
    pub fn build(edges: &[(usize, usize)], n: usize, opts: GraphOptions) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Invalid(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{n}"
                )));
            }
            // Row i holds the nodes whose messages reply to i.
            lists[b].push(a);
            if opts.symmetric {
                lists[a].push(b);
            }
        }
        if opts.self_loops {
            for (i, l) in lists.iter_mut().enumerate() {
                l.push(i);
            }
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            targets.extend(l);
            offsets.push(targets.len());
        }
        Ok(Self {
            offsets,
            targets,
            symmetric: opts.symmetric,
            self_loops: opts.self_loops,
        })
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored (directed) adjacency entries, self-loops included.
    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    /// CSR offsets: the neighbors of `i` occupy `offsets[i]..offsets[i+1]`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// The graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n());
        let mut lists = vec![Vec::new(); self.n()];
        for i in 0..self.n() {
            lists[perm[i]] = self.neighbors(i).iter().map(|&j| perm[j]).collect();
        }
        let mut offsets = vec![0];
        let mut targets = Vec::with_capacity(self.nnz());
        for mut l in lists {
            l.sort_unstable();
            targets.extend(l);
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            symmetric: self.symmetric,
            self_loops: self.self_loops,
        }
    }
}

/// Number of nodes at each neighborhood size.
pub fn degree_histogram(g: &Graph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for i in 0..g.n() {
        *hist.entry(g.degree(i)).or_insert(0) += 1;
    }
    hist
}
