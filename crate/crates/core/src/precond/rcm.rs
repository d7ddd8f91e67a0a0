use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use std::collections::VecDeque;

/// Reverse Cuthill-McKee ordering of the symmetrized pattern `A + Aᵀ`.
///
/// Returns `perm` with `perm[new] = old`, suitable for
/// [`SparseMatrix::permute_symmetric`]. Each connected component starts from
/// a pseudo-peripheral vertex; neighbours are visited by increasing degree.
pub fn rcm_ordering(a: &SparseMatrix) -> Result<Vec<usize>> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("RCM needs a square matrix".into()));
    }
    let n = a.n_rows();
    let adj = symmetric_adjacency(a);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut scratch = vec![usize::MAX; n];
    // start components from the lowest-degree unplaced vertex
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if placed[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, &degree, seed, &mut scratch);
        placed[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !placed[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                placed[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    Ok(order)
}

fn symmetric_adjacency(a: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = a.n_rows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// BFS levels from `root`; returns (eccentricity, last level).
fn level_structure(adj: &[Vec<usize>], root: usize, level: &mut [usize]) -> (usize, Vec<usize>) {
    let mut visited = vec![root];
    level[root] = 0;
    let mut head = 0;
    while head < visited.len() {
        let v = visited[head];
        head += 1;
        for &u in &adj[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                visited.push(u);
            }
        }
    }
    let depth = level[*visited.last().unwrap()];
    let last = visited
        .iter()
        .copied()
        .filter(|&v| level[v] == depth)
        .collect();
    for &v in &visited {
        level[v] = usize::MAX;
    }
    (depth, last)
}

fn pseudo_peripheral(
    adj: &[Vec<usize>],
    degree: &[usize],
    seed: usize,
    level: &mut [usize],
) -> usize {
    let mut root = seed;
    let (mut depth, mut last) = level_structure(adj, root, level);
    loop {
        let candidate = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let (d, l) = level_structure(adj, candidate, level);
        if d <= depth {
            return root;
        }
        root = candidate;
        depth = d;
        last = l;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pattern(n: usize, edges: &[(usize, usize)]) -> SparseMatrix {
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
        for &(i, j) in edges {
            t.push((i, j, 1.0));
            t.push((j, i, 1.0));
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn is_permutation(p: &[usize], n: usize) -> bool {
        let mut seen = vec![false; n];
        p.len() == n
            && p.iter()
                .all(|&v| v < n && !std::mem::replace(&mut seen[v], true))
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn scrambled_path_recovers_bandwidth_one() {
        let labels = [3, 0, 5, 1, 4, 2, 6];
        let edges: Vec<_> = labels.windows(2).map(|w| (w[0], w[1])).collect();
        let a = pattern(7, &edges);
        assert!(a.bandwidth() > 1);
        let p = rcm_ordering(&a).unwrap();
        assert_eq!(a.permute_symmetric(&p).unwrap().bandwidth(), 1);
    }

    #[test]
    fn star_beats_worst_ordering() {
        // centre stored last
        let a = pattern(6, &[(5, 0), (5, 1), (5, 2), (5, 3), (5, 4)]);
        let bandwidths: Vec<usize> = permutations(6)
            .iter()
            .map(|p| a.permute_symmetric(p).unwrap().bandwidth())
            .collect();
        let worst = *bandwidths.iter().max().unwrap();
        let best = *bandwidths.iter().min().unwrap();
        let p = rcm_ordering(&a).unwrap();
        let got = a.permute_symmetric(&p).unwrap().bandwidth();
        assert!(got < worst && got >= best);
        // the centre ends up next to a leaf rather than at an end
        let centre = p.iter().position(|&v| v == 5).unwrap();
        assert!(centre > 0 && centre < 5);
    }

    #[test]
    fn arrowhead_does_not_grow() {
        let n = 50;
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        let a = pattern(n, &edges);
        let p = rcm_ordering(&a).unwrap();
        assert!(a.permute_symmetric(&p).unwrap().bandwidth() <= a.bandwidth());
    }

    #[test]
    fn disconnected_components_and_isolated_vertices() {
        let a = pattern(6, &[(0, 4), (2, 5)]);
        let p = rcm_ordering(&a).unwrap();
        assert!(is_permutation(&p, 6));
        assert_eq!(a.permute_symmetric(&p).unwrap().bandwidth(), 1);
    }

    #[test]
    fn unsymmetric_pattern_is_symmetrized() {
        let a =
            SparseMatrix::from_triplets(3, 3, &[(0, 2, 1.0), (1, 1, 1.0), (2, 1, 1.0)]).unwrap();
        let p = rcm_ordering(&a).unwrap();
        assert_eq!(a.permute_symmetric(&p).unwrap().bandwidth(), 1);
    }

    proptest! {
        #[test]
        fn always_a_permutation(n in 1usize..40, edges in proptest::collection::vec((0usize..40, 0usize..40), 0..80)) {
            let edges: Vec<_> = edges.into_iter().filter(|&(i, j)| i < n && j < n).collect();
            let p = rcm_ordering(&pattern(n, &edges)).unwrap();
            prop_assert!(is_permutation(&p, n));
        }
    }
}
