//! DRAM-resident inner nodes of the main index.
//!
//! Inner nodes route by separator keys. Each node carries a sorted part and
//! an unsorted append part; split and merge maintenance appends separators
//! instead of reorganizing, and routing over the merged view is equivalent
//! to routing over a fully sorted separator list. The logically last
//! separator of the root chain is the +infinity sentinel. DRAM accesses cost
//! no simulated time.

/// Separator key; `None` is the +infinity sentinel.
pub type Sep = Option<u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildRef {
    Inner(usize),
    Leaf(usize),
}

fn sep_ge(sep: Sep, key: u64) -> bool {
    match sep {
        None => true,
        Some(s) => s >= key,
    }
}

fn sep_lt(a: Sep, b: Sep) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

#[derive(Debug, Default, Clone)]
struct InnerNode {
    sorted: Vec<(Sep, ChildRef)>,
    unsorted: Vec<(Sep, ChildRef)>,
    parent: Option<usize>,
}

impl InnerNode {
    fn len(&self) -> usize {
        self.sorted.len() + self.unsorted.len()
    }

    /// Pairs in logical key order, merging the unsorted part in.
    fn logical(&self) -> Vec<(Sep, ChildRef)> {
        if self.unsorted.is_empty() {
            return self.sorted.clone();
        }
        let mut out = self.sorted.clone();
        for &(sep, child) in &self.unsorted {
            let pos = out.partition_point(|&(s, _)| sep_lt(s, sep));
            out.insert(pos, (sep, child));
        }
        out
    }
}

/// Arena of inner nodes plus the parent map for leaves.
pub struct InnerArena {
    nodes: Vec<InnerNode>,
    free: Vec<usize>,
    root: usize,
    fanout: usize,
    leaf_parent: Vec<usize>,
}

impl InnerArena {
    pub fn new(fanout: usize) -> Self {
        assert!(fanout >= 2);
        InnerArena {
            nodes: vec![InnerNode::default()],
            free: Vec::new(),
            root: 0,
            fanout,
            leaf_parent: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[self.root].len() == 0
    }

    pub fn root_sorted_seps(&self) -> Vec<Sep> {
        self.nodes[self.root].sorted.iter().map(|&(s, _)| s).collect()
    }

    pub fn root_unsorted_seps(&self) -> Vec<Sep> {
        self.nodes[self.root].unsorted.iter().map(|&(s, _)| s).collect()
    }

    fn alloc_node(&mut self, node: InnerNode) -> usize {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = node;
            id
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    fn note_parent(&mut self, child: ChildRef, parent: usize) {
        match child {
            ChildRef::Inner(id) => self.nodes[id].parent = Some(parent),
            ChildRef::Leaf(id) => {
                if self.leaf_parent.len() <= id {
                    self.leaf_parent.resize(id + 1, usize::MAX);
                }
                self.leaf_parent[id] = parent;
            }
        }
    }

    pub fn leaf_parent(&self, leaf: usize) -> usize {
        self.leaf_parent[leaf]
    }

    /// Logical child pairs of the node a leaf hangs off.
    pub fn siblings_of_leaf(&self, leaf: usize) -> Vec<(Sep, ChildRef)> {
        self.nodes[self.leaf_parent(leaf)].logical()
    }

    pub fn children_in_order(&self, node: usize) -> Vec<(Sep, ChildRef)> {
        self.nodes[node].logical()
    }

    pub fn root_ref(&self) -> usize {
        self.root
    }

    /// Descends to the leaf whose key range contains `key`.
    pub fn route(&self, key: u64) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let mut node = self.root;
        loop {
            let pairs = self.nodes[node].logical();
            let chosen = pairs
                .iter()
                .find(|&&(sep, _)| sep_ge(sep, key))
                .or_else(|| pairs.last())
                .copied();
            match chosen {
                Some((_, ChildRef::Inner(id))) => node = id,
                Some((_, ChildRef::Leaf(id))) => return Some(id),
                None => return None,
            }
        }
    }

    /// First leaf in key order.
    pub fn first_leaf(&self) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let mut node = self.root;
        loop {
            match self.nodes[node].logical().first().copied() {
                Some((_, ChildRef::Inner(id))) => node = id,
                Some((_, ChildRef::Leaf(id))) => return Some(id),
                None => return None,
            }
        }
    }

    fn find_pair(&self, node: usize, child: ChildRef) -> Option<(bool, usize)> {
        let n = &self.nodes[node];
        if let Some(i) = n.sorted.iter().position(|&(_, c)| c == child) {
            return Some((true, i));
        }
        n.unsorted.iter().position(|&(_, c)| c == child).map(|i| (false, i))
    }

    /// Rewrites the separator of an existing child in place.
    pub fn set_leaf_sep(&mut self, leaf: usize, sep: Sep) {
        let parent = self.leaf_parent(leaf);
        let (in_sorted, i) = self
            .find_pair(parent, ChildRef::Leaf(leaf))
            .expect("leaf not under recorded parent");
        if in_sorted {
            self.nodes[parent].sorted[i].0 = sep;
        } else {
            self.nodes[parent].unsorted[i].0 = sep;
        }
    }

    /// Appends a new separator pair to a node's unsorted part, splitting the
    /// node upward if the fanout is exceeded.
    pub fn insert_pair(&mut self, node: usize, sep: Sep, child: ChildRef) {
        self.nodes[node].unsorted.push((sep, child));
        self.note_parent(child, node);
        self.fix_overflow(node);
    }

    fn fix_overflow(&mut self, mut node: usize) {
        while self.nodes[node].len() > self.fanout {
            // Reorganizing separators is a DRAM-only operation.
            let mut pairs = self.nodes[node].logical();
            let mid = pairs.len() / 2;
            let upper = pairs.split_off(mid);
            let lower = pairs;
            let lower_sep = lower.last().expect("non-empty").0;
            debug_assert!(lower_sep.is_some(), "infinity sentinel must stay rightmost");
            let parent = self.nodes[node].parent;
            let lower_id = self.alloc_node(InnerNode {
                sorted: lower.clone(),
                unsorted: Vec::new(),
                parent: None,
            });
            for &(_, c) in &lower {
                self.note_parent(c, lower_id);
            }
            self.nodes[node].sorted = upper;
            self.nodes[node].unsorted.clear();
            match parent {
                Some(p) => {
                    self.nodes[lower_id].parent = Some(p);
                    self.nodes[p].unsorted.push((lower_sep, ChildRef::Inner(lower_id)));
                    node = p;
                }
                None => {
                    let new_root = self.alloc_node(InnerNode {
                        sorted: vec![(lower_sep, ChildRef::Inner(lower_id)), (None, ChildRef::Inner(node))],
                        unsorted: Vec::new(),
                        parent: None,
                    });
                    self.nodes[lower_id].parent = Some(new_root);
                    self.nodes[node].parent = Some(new_root);
                    self.root = new_root;
                    return;
                }
            }
        }
    }

    /// Removes a leaf's pair from its parent. Inner nodes emptied by the
    /// removal are unlinked upward.
    pub fn remove_leaf_pair(&mut self, leaf: usize) {
        let parent = self.leaf_parent(leaf);
        self.leaf_parent[leaf] = usize::MAX;
        self.remove_pair(parent, ChildRef::Leaf(leaf));
    }

    fn remove_pair(&mut self, node: usize, child: ChildRef) {
        let (in_sorted, i) = self
            .find_pair(node, child)
            .expect("child not under recorded parent");
        if in_sorted {
            self.nodes[node].sorted.remove(i);
        } else {
            self.nodes[node].unsorted.remove(i);
        }
        if self.nodes[node].len() == 0 {
            if let Some(p) = self.nodes[node].parent {
                self.remove_pair(p, ChildRef::Inner(node));
                self.nodes[node] = InnerNode::default();
                self.free.push(node);
            }
        }
    }

    /// Collapses single-inner-child roots left behind by merges.
    pub fn collapse_root(&mut self) {
        loop {
            let root = &self.nodes[self.root];
            if root.len() != 1 {
                return;
            }
            let (_, child) = root.logical()[0];
            match child {
                ChildRef::Inner(id) => {
                    let old = self.root;
                    self.nodes[id].parent = None;
                    self.root = id;
                    self.nodes[old] = InnerNode::default();
                    self.free.push(old);
                }
                ChildRef::Leaf(_) => return,
            }
        }
    }

    /// Rebuilds the whole routing layer over leaves given in key order with
    /// their separators (last one must be the infinity sentinel).
    pub fn bulk_build(&mut self, leaf_pairs: &[(Sep, usize)]) {
        self.nodes.clear();
        self.free.clear();
        self.leaf_parent.clear();
        if leaf_pairs.is_empty() {
            self.nodes.push(InnerNode::default());
            self.root = 0;
            return;
        }
        debug_assert!(leaf_pairs.last().unwrap().0.is_none());
        let mut level: Vec<(Sep, ChildRef)> = leaf_pairs
            .iter()
            .map(|&(sep, leaf)| (sep, ChildRef::Leaf(leaf)))
            .collect();
        loop {
            let n_nodes = level.len().div_ceil(self.fanout);
            let per = level.len().div_ceil(n_nodes);
            let mut next: Vec<(Sep, ChildRef)> = Vec::with_capacity(n_nodes);
            for chunk in level.chunks(per) {
                let id = self.nodes.len();
                self.nodes.push(InnerNode {
                    sorted: chunk.to_vec(),
                    unsorted: Vec::new(),
                    parent: None,
                });
                for &(_, c) in chunk {
                    self.note_parent(c, id);
                }
                next.push((chunk.last().unwrap().0, ChildRef::Inner(id)));
            }
            if next.len() == 1 {
                let ChildRef::Inner(root) = next[0].1 else { unreachable!() };
                self.root = root;
                self.nodes[root].parent = None;
                return;
            }
            level = next;
        }
    }

    /// All leaves in key order, by following the routing structure.
    pub fn leaves_in_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let mut stack = vec![ChildRef::Inner(self.root)];
        while let Some(c) = stack.pop() {
            match c {
                ChildRef::Leaf(id) => out.push(id),
                ChildRef::Inner(id) => {
                    for &(_, child) in self.nodes[id].logical().iter().rev() {
                        stack.push(child);
                    }
                }
            }
        }
        out
    }

    /// Checks that routing over the merged separator view is a sorted list.
    #[cfg(test)]
    pub fn check_sorted_routing(&self) {
        for node in &self.nodes {
            let pairs = node.logical();
            for w in pairs.windows(2) {
                assert!(
                    sep_lt(w[0].0, w[1].0) || w[0].0 == w[1].0,
                    "separator order violated"
                );
            }
        }
    }
}
