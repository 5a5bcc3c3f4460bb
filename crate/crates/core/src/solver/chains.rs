use crate::system::SparseSystem;

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] as usize != a {
            let grand = self.parent[self.parent[a] as usize];
            self.parent[a] = grand;
            a = grand as usize;
        }
        a
    }

    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return a;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a as u32;
        self.size[a] += self.size[b];
        a
    }
}

/// A closed group of pattern pixels and the rows that couple them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpipolarChain {
    pub id: usize,
    /// Global column indices, ascending.
    pub variables: Vec<u32>,
    /// System row indices, ascending.
    pub rows: Vec<u32>,
}

impl EpipolarChain {
    /// `(projector, pixel)` of every variable.
    pub fn pixels(&self, system: &SparseSystem) -> Vec<(usize, usize)> {
        self.variables.iter().map(|&c| system.column_var(c as usize)).collect()
    }
}

/// Connected components of the variable–row graph. Chains are numbered in order
/// of their smallest variable.
pub fn extract_chains(system: &SparseSystem) -> Vec<EpipolarChain> {
    let ncols = system.num_cols();
    let mut uf = UnionFind::new(ncols);
    for r in 0..system.num_rows() {
        let (cols, _) = system.row(r);
        if let Some((&first, rest)) = cols.split_first() {
            for &c in rest {
                uf.union(first as usize, c as usize);
            }
        }
    }
    let used = system.used_columns();
    let mut chain_of_root = vec![u32::MAX; ncols];
    let mut chains: Vec<EpipolarChain> = Vec::new();
    for c in (0..ncols).filter(|&c| used[c]) {
        let root = uf.find(c);
        if chain_of_root[root] == u32::MAX {
            chain_of_root[root] = chains.len() as u32;
            chains.push(EpipolarChain {
                id: chains.len(),
                variables: Vec::new(),
                rows: Vec::new(),
            });
        }
        chains[chain_of_root[root] as usize].variables.push(c as u32);
    }
    for r in 0..system.num_rows() {
        let (cols, _) = system.row(r);
        let root = uf.find(cols[0] as usize);
        chains[chain_of_root[root] as usize].rows.push(r as u32);
    }
    chains
}
