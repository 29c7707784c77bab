//! Hierarchical density-based clustering (HDBSCAN) over dense feature vectors.
//!
//! Brute-force core distances, Prim's minimum spanning tree over mutual
//! reachability, single-linkage hierarchy, condensed tree and
//! excess-of-mass cluster selection. The root cluster is selected only when
//! it never splits; a point is then labeled only if it leaves the root no
//! earlier than anything else does (the `allow_single_cluster` rule of
//! scikit-learn).

use crate::par;

/// Label given to noise points.
pub const NOISE: i32 = -1;

const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbor rank (self included) that defines a point's core distance.
    pub min_samples: usize,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn core_distances(data: &[Vec<f64>], k: usize) -> Vec<f64> {
    let k = k.clamp(1, data.len());
    par::map_range(data.len(), |i| {
        let mut d: Vec<f64> = data.iter().map(|o| distance(&data[i], o)).collect();
        let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
        *kth
    })
}

/// Prim's algorithm on the implicit complete graph. Returns `(a, b, weight)` edges.
fn mutual_reachability_mst(data: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = data.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = distance(&data[current], &data[j]).max(core[current]).max(core[j]);
            if mr < best[j] {
                best[j] = mr;
                from[j] = current;
            }
            if best[j] < next_w {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, next_w));
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// One merge of the single-linkage hierarchy; node ids `>= n` are merges.
#[derive(Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut uf = UnionFind::new(2 * n - 1);
    for s in uf.size.iter_mut().take(n) {
        *s = 1;
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (i, (a, b, w)) in edges.into_iter().enumerate() {
        let ra = uf.find(a);
        let rb = uf.find(b);
        let node = n + i;
        let size = uf.size[ra] + uf.size[rb];
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        uf.size[node] = size;
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: w,
            size,
        });
    }
    merges
}

/// Condensed tree entry: `child` is a point (< n) or a cluster id.
#[derive(Debug, Clone, Copy)]
struct Condensed {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn lambda_of(distance: f64) -> f64 {
    1.0 / distance.max(MIN_DISTANCE)
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> (Vec<Condensed>, usize) {
    let node_size = |id: usize| if id < n { 1 } else { merges[id - n].size };
    let leaves = |root: usize| {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if id < n {
                out.push(id);
            } else {
                let m = merges[id - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    };

    let root_cluster = n;
    let mut next_cluster = n + 1;
    let mut entries = Vec::new();
    // (hierarchy node, cluster label it belongs to)
    let mut stack = vec![(2 * n - 2, root_cluster)];
    while let Some((node, label)) = stack.pop() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let lambda = lambda_of(m.distance);
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let big_l = ls >= min_cluster_size;
        let big_r = rs >= min_cluster_size;
        match (big_l, big_r) {
            (true, true) => {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    let c = next_cluster;
                    next_cluster += 1;
                    entries.push(Condensed {
                        parent: label,
                        child: c,
                        lambda,
                        size,
                    });
                    stack.push((child, c));
                }
            }
            (false, false) => {
                for child in [m.left, m.right] {
                    for p in leaves(child) {
                        entries.push(Condensed {
                            parent: label,
                            child: p,
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
            (true, false) | (false, true) => {
                let (keep, drop) = if big_l { (m.left, m.right) } else { (m.right, m.left) };
                for p in leaves(drop) {
                    entries.push(Condensed {
                        parent: label,
                        child: p,
                        lambda,
                        size: 1,
                    });
                }
                stack.push((keep, label));
            }
        }
    }
    (entries, next_cluster - n)
}

/// Clusters `data` and returns one label per row (`NOISE` for noise).
///
/// Cluster labels are numbered in order of each cluster's smallest member index.
pub fn hdbscan(data: &[Vec<f64>], params: HdbscanParams) -> Vec<i32> {
    let n = data.len();
    let mcs = params.min_cluster_size.max(2);
    if n < mcs || n < 2 {
        return vec![NOISE; n];
    }

    let core = core_distances(data, params.min_samples.max(1));
    let mst = mutual_reachability_mst(data, &core);
    let merges = single_linkage(n, mst);
    let (tree, n_clusters) = condense(n, &merges, mcs);

    // Cluster bookkeeping indexed by (label - n).
    let mut parent = vec![usize::MAX; n_clusters];
    let mut birth = vec![0.0f64; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in tree.iter().filter(|e| e.child >= n) {
        let c = e.child - n;
        parent[c] = e.parent - n;
        birth[c] = e.lambda;
        children[e.parent - n].push(c);
    }
    let mut stability = vec![0.0f64; n_clusters];
    for e in &tree {
        let p = e.parent - n;
        stability[p] += (e.lambda - birth[p]) * e.size as f64;
    }

    // Excess of mass, children before parents (children always carry larger ids).
    let mut selected = vec![false; n_clusters];
    for c in (0..n_clusters).rev() {
        let child_sum: f64 = children[c].iter().map(|&k| stability[k]).sum();
        if children[c].is_empty() || (c != 0 && stability[c] >= child_sum) {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(children[k].iter().copied());
            }
        } else {
            stability[c] = child_sum;
        }
    }

    // Points leave the tree as entries whose child is a point.
    let mut point_parent = vec![0usize; n];
    let mut point_lambda = vec![0.0f64; n];
    for e in tree.iter().filter(|e| e.child < n) {
        point_parent[e.child] = e.parent - n;
        point_lambda[e.child] = e.lambda;
    }
    let root_max_lambda = tree
        .iter()
        .filter(|e| e.parent == n)
        .map(|e| e.lambda)
        .fold(0.0, f64::max);

    let mut raw = vec![NOISE as i64; n];
    for p in 0..n {
        let mut c = point_parent[p];
        loop {
            if selected[c] {
                if c != 0 || point_lambda[p] >= root_max_lambda {
                    raw[p] = c as i64;
                }
                break;
            }
            if parent[c] == usize::MAX {
                break;
            }
            c = parent[c];
        }
    }

    // Renumber by first appearance.
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&r| {
            if r < 0 {
                NOISE
            } else {
                let next = map.len() as i32;
                *map.entry(r).or_insert(next)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(mcs: usize, ms: usize) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size: mcs,
            min_samples: ms,
        }
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let data = vec![vec![0.3, -1.0, 2.0]; 100];
        let labels = hdbscan(&data, params(16, 8));
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn two_blobs_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut data = Vec::new();
        for i in 0..60 {
            let c = if i < 30 { 0.0 } else { 5.0 };
            data.push(vec![c + rng.random::<f64>() * 0.2, rng.random::<f64>() * 0.2]);
        }
        let labels = hdbscan(&data, params(5, 3));
        assert!(labels[..30].iter().all(|&l| l == labels[0]));
        assert!(labels[30..].iter().all(|&l| l == labels[30]));
        assert_ne!(labels[0], labels[30]);
        assert!(labels[0] >= 0 && labels[30] >= 0);
    }

    #[test]
    fn too_few_points_are_noise() {
        let data = vec![vec![0.0]; 3];
        assert_eq!(hdbscan(&data, params(5, 2)), vec![NOISE; 3]);
    }

    #[test]
    fn point_between_clusters_joins_nearer_cluster() {
        let mut data = Vec::new();
        for i in 0..20 {
            data.push(vec![i as f64 * 0.01]);
            data.push(vec![10.0 + i as f64 * 0.01]);
        }
        data.push(vec![5.0]);
        let labels = hdbscan(&data, params(5, 3));
        // It falls out of the left cluster but still belongs to it.
        assert_eq!(labels[40], labels[0]);
        let distinct: std::collections::BTreeSet<_> = labels[..40].iter().collect();
        assert_eq!(distinct.len(), 2);
    }
}
