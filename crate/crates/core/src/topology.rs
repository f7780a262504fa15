//! Skeleton topology of a partitioned mesh: subdomain boundaries, their
//! degrees of freedom, multiplicities and cross-points.

use std::collections::BTreeMap;

use crate::mesh::Mesh;
use crate::partition::Partition;

/// An edge of a subdomain boundary, oriented as in its owning triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceEdge {
    pub a: usize,
    pub b: usize,
    pub triangle: usize,
    /// Lies on the outer boundary of the mesh rather than between two subdomains.
    pub external: bool,
}

#[derive(Debug, Clone)]
pub struct Subdomain {
    pub triangles: Vec<usize>,
    /// Global vertex indices, ascending; position = local volume dof.
    pub vertices: Vec<usize>,
    pub boundary_edges: Vec<InterfaceEdge>,
    /// Global vertex indices of the boundary dofs, ascending.
    pub boundary_dofs: Vec<usize>,
    /// Local volume position of each boundary dof.
    pub boundary_local: Vec<usize>,
    /// Local volume positions of the remaining (interior) dofs, ascending.
    pub interior_local: Vec<usize>,
    /// Skeleton position of each boundary dof.
    pub boundary_skeleton: Vec<usize>,
}

impl Subdomain {
    pub fn num_dofs(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_boundary_dofs(&self) -> usize {
        self.boundary_dofs.len()
    }

    /// Local volume position of a global vertex, if it belongs to the subdomain.
    pub fn local_index(&self, vertex: usize) -> Option<usize> {
        self.vertices.binary_search(&vertex).ok()
    }
}

#[derive(Debug, Clone)]
pub struct SubdomainTopology {
    mesh: Mesh,
    partition: Partition,
    subdomains: Vec<Subdomain>,
    skeleton_dofs: Vec<usize>,
    multiplicity: Vec<usize>,
    on_outer_boundary: Vec<bool>,
    cross_point: Vec<bool>,
}

pub fn extract_topology(mesh: &Mesh, partition: &Partition) -> SubdomainTopology {
    let j_count = partition.num_subdomains();
    let mut edge_owners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_owners.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }

    let mut triangles = vec![Vec::new(); j_count];
    for t in 0..mesh.num_triangles() {
        triangles[partition.subdomain_of(t)].push(t);
    }

    let mut raw = Vec::with_capacity(j_count);
    for (j, tris) in triangles.into_iter().enumerate() {
        let mut vertices: Vec<usize> = tris.iter().flat_map(|&t| mesh.triangles()[t]).collect();
        vertices.sort_unstable();
        vertices.dedup();

        let mut edges = Vec::new();
        for &t in &tris {
            let tri = mesh.triangles()[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let owners = &edge_owners[&(a.min(b), a.max(b))];
                let inside = owners.iter().filter(|&&s| partition.subdomain_of(s) == j).count();
                if inside == 1 {
                    edges.push(InterfaceEdge {
                        a,
                        b,
                        triangle: t,
                        external: owners.len() == 1,
                    });
                }
            }
        }
        let mut dofs: Vec<usize> = edges.iter().flat_map(|e| [e.a, e.b]).collect();
        dofs.sort_unstable();
        dofs.dedup();
        raw.push((tris, vertices, edges, dofs));
    }

    let mut skeleton_dofs: Vec<usize> = raw.iter().flat_map(|r| r.3.iter().copied()).collect();
    skeleton_dofs.sort_unstable();
    skeleton_dofs.dedup();
    let mut multiplicity = vec![0usize; skeleton_dofs.len()];
    for r in &raw {
        for x in &r.3 {
            multiplicity[skeleton_dofs.binary_search(x).unwrap()] += 1;
        }
    }
    let outer = mesh.boundary_vertex_mask();
    let on_outer_boundary: Vec<bool> = skeleton_dofs.iter().map(|&x| outer[x]).collect();
    let cross_point = multiplicity
        .iter()
        .zip(&on_outer_boundary)
        .map(|(&m, &b)| m >= 3 || (m == 2 && b))
        .collect();

    let subdomains = raw
        .into_iter()
        .map(|(triangles, vertices, boundary_edges, boundary_dofs)| {
            let boundary_local = boundary_dofs
                .iter()
                .map(|x| vertices.binary_search(x).unwrap())
                .collect::<Vec<_>>();
            let interior_local = (0..vertices.len())
                .filter(|i| boundary_dofs.binary_search(&vertices[*i]).is_err())
                .collect();
            let boundary_skeleton = boundary_dofs
                .iter()
                .map(|x| skeleton_dofs.binary_search(x).unwrap())
                .collect();
            Subdomain {
                triangles,
                vertices,
                boundary_edges,
                boundary_dofs,
                boundary_local,
                interior_local,
                boundary_skeleton,
            }
        })
        .collect();

    SubdomainTopology {
        mesh: mesh.clone(),
        partition: partition.clone(),
        subdomains,
        skeleton_dofs,
        multiplicity,
        on_outer_boundary,
        cross_point,
    }
}

impl SubdomainTopology {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn num_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn subdomain(&self, j: usize) -> &Subdomain {
        &self.subdomains[j]
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    /// Global vertex indices of dof(Σ), ascending.
    pub fn skeleton_dofs(&self) -> &[usize] {
        &self.skeleton_dofs
    }

    pub fn num_skeleton_dofs(&self) -> usize {
        self.skeleton_dofs.len()
    }

    /// `m(x)` for each skeleton dof.
    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn on_outer_boundary(&self) -> &[bool] {
        &self.on_outer_boundary
    }

    pub fn cross_points(&self) -> &[bool] {
        &self.cross_point
    }

    pub fn has_cross_points(&self) -> bool {
        self.cross_point.iter().any(|&c| c)
    }

    /// Skeleton position of a global vertex.
    pub fn skeleton_index(&self, vertex: usize) -> Option<usize> {
        self.skeleton_dofs.binary_search(&vertex).ok()
    }

    /// Total number of multi-trace dofs, `Σ_j |dof(Γ_j)|`.
    pub fn num_multi_trace_dofs(&self) -> usize {
        self.subdomains.iter().map(|s| s.boundary_dofs.len()).sum()
    }

    /// Total number of broken volume dofs, `Σ_j |dof(Ω_j)|`.
    pub fn num_broken_dofs(&self) -> usize {
        self.subdomains.iter().map(|s| s.vertices.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::structured_square;
    use crate::partition::{quadrants, ring};

    fn two_triangles() -> (Mesh, Partition) {
        let m = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let p = Partition::new(&m, vec![0, 1]).unwrap();
        (m, p)
    }

    #[test]
    fn diagonal_split_has_boundary_cross_points() {
        let (m, p) = two_triangles();
        let topo = extract_topology(&m, &p);
        assert_eq!(topo.subdomain(0).boundary_dofs, vec![0, 1, 2]);
        assert_eq!(topo.subdomain(1).boundary_dofs, vec![0, 2, 3]);
        assert_eq!(topo.multiplicity(), &[2, 1, 2, 1]);
        assert_eq!(topo.cross_points(), &[true, false, true, false]);
        assert!(topo.subdomain(0).interior_local.is_empty());
    }

    #[test]
    fn single_subdomain_boundary_is_outer_boundary() {
        let m = structured_square(3, 1.0);
        let p = Partition::new(&m, vec![0; m.num_triangles()]).unwrap();
        let topo = extract_topology(&m, &p);
        assert_eq!(topo.num_skeleton_dofs(), 12);
        assert!(topo.multiplicity().iter().all(|&k| k == 1));
        assert!(!topo.has_cross_points());
        assert!(topo.subdomain(0).boundary_edges.iter().all(|e| e.external));
    }

    #[test]
    fn quadrant_center_has_multiplicity_four() {
        let m = structured_square(2, 1.0);
        let topo = extract_topology(&m, &quadrants(&m, [0.0, 0.0]).unwrap());
        let center = topo.skeleton_index(4).unwrap();
        assert_eq!(topo.multiplicity()[center], 4);
        assert!(topo.cross_points()[center]);
    }

    #[test]
    fn ring_partition_has_no_cross_points() {
        let m = structured_square(6, 1.0);
        let topo = extract_topology(&m, &ring(&m, [0.0, 0.0], 0.4).unwrap());
        assert!(!topo.has_cross_points());
        assert!(topo.multiplicity().contains(&2));
    }

    #[test]
    fn multiplicities_count_boundary_dofs() {
        let m = structured_square(8, 1.0);
        let p = crate::partition::build_partition(&m, 5, 3).unwrap();
        let topo = extract_topology(&m, &p);
        let total: usize = topo.multiplicity().iter().sum();
        assert_eq!(total, topo.num_multi_trace_dofs());
        // each Γ_j edge is external or shared with exactly one other subdomain
        for (j, s) in topo.subdomains().iter().enumerate() {
            for e in &s.boundary_edges {
                let others = topo
                    .subdomains()
                    .iter()
                    .enumerate()
                    .filter(|(k, o)| {
                        *k != j
                            && o.boundary_edges
                                .iter()
                                .any(|f| (f.a, f.b) == (e.b, e.a) || (f.a, f.b) == (e.a, e.b))
                    })
                    .count();
                assert_eq!(others, usize::from(!e.external));
            }
        }
    }
}
