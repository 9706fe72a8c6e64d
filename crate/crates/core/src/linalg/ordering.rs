use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-degree fill-reducing ordering of a symmetric graph.
///
/// `adj[i]` lists the neighbours of node `i` (self loops ignored). Returns
/// `perm` with `perm[new] = old`. Ties are broken by lowest node index, so
/// the ordering is deterministic.
pub fn minimum_degree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut graph: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut v: Vec<usize> = a.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = graph
        .iter()
        .enumerate()
        .map(|(i, a)| Reverse((a.len(), i)))
        .collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != graph[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut graph[v])
            .into_iter()
            .filter(|&u| !eliminated[u])
            .collect();
        for &u in &nbrs {
            merged.clear();
            let (a, b) = (&graph[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = if j >= b.len() || (i < a.len() && a[i] < b[j]) {
                    i += 1;
                    a[i - 1]
                } else if i >= a.len() || b[j] < a[i] {
                    j += 1;
                    b[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    a[i - 1]
                };
                if next != u && !eliminated[next] {
                    merged.push(next);
                }
            }
            graph[u].clear();
            graph[u].extend_from_slice(&merged);
            heap.push(Reverse((graph[u].len(), u)));
        }
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_a_permutation() {
        // 2D grid graph 5x5
        let n = 5;
        let id = |i: usize, j: usize| i * n + j;
        let mut adj = vec![Vec::new(); n * n];
        for i in 0..n {
            for j in 0..n {
                if i + 1 < n {
                    adj[id(i, j)].push(id(i + 1, j));
                    adj[id(i + 1, j)].push(id(i, j));
                }
                if j + 1 < n {
                    adj[id(i, j)].push(id(i, j + 1));
                    adj[id(i, j + 1)].push(id(i, j));
                }
            }
        }
        let mut p = minimum_degree(&adj);
        assert_eq!(p[0], 0, "a corner has minimum degree and lowest index");
        p.sort_unstable();
        assert_eq!(p, (0..n * n).collect::<Vec<_>>());
    }
}
