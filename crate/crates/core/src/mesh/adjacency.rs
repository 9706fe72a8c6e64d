use std::collections::BTreeMap;

use super::SimplicialMesh;

/// Vertex and element connectivity graphs; every list is sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub vertex_vertex: Vec<Vec<usize>>,
    /// Elements sharing a facet.
    pub element_element: Vec<Vec<usize>>,
    pub vertex_elements: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn build(mesh: &SimplicialMesh) -> Self {
        let nv = mesh.n_vertices();
        let ne = mesh.n_elements();
        let mut vv = vec![Vec::new(); nv];
        let mut ve = vec![Vec::new(); nv];
        let mut facets: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (e, el) in mesh.elements().enumerate() {
            for (a, &i) in el.iter().enumerate() {
                ve[i].push(e);
                for &j in &el[a + 1..] {
                    vv[i].push(j);
                    vv[j].push(i);
                }
                let mut key: Vec<usize> = el.iter().copied().filter(|&v| v != i).collect();
                key.sort_unstable();
                facets.entry(key).or_default().push(e);
            }
        }
        let mut ee = vec![Vec::new(); ne];
        for owners in facets.values() {
            for (a, &e1) in owners.iter().enumerate() {
                for &e2 in &owners[a + 1..] {
                    ee[e1].push(e2);
                    ee[e2].push(e1);
                }
            }
        }
        for list in vv.iter_mut().chain(ee.iter_mut()).chain(ve.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Adjacency {
            vertex_vertex: vv,
            element_element: ee,
            vertex_elements: ve,
        }
    }

    /// Breadth-first hop distances over the element graph from `sources`.
    pub fn element_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.element_element.len()];
        let mut queue = std::collections::VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(e) = queue.pop_front() {
            for &n in &self.element_element[e] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[e] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn element_edge_count(&self) -> usize {
        self.element_element.iter().map(Vec::len).sum::<usize>() / 2
    }
}
