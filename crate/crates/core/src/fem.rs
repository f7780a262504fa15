//! P1 Lagrange assembly: subdomain Helmholtz operators, H¹ Gram matrices,
//! boundary mass / tangential stiffness matrices and load functionals.

use nalgebra::{DMatrix, RealField};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Mesh;
use crate::topology::{InterfaceEdge, Subdomain, SubdomainTopology};
use crate::{ComplexMatrix, ComplexVector, RealMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("wavenumber must satisfy Re κ ≥ 0 and Im κ ≥ 0, got {0}")]
    InvalidWavenumber(Complex64),
    #[error("coefficient μ must be positive, got {0}")]
    InvalidMu(f64),
    #[error("plane-wave direction must have unit norm, got |d| = {0}")]
    NonUnitDirection(f64),
    #[error("nodal source has {found} values but the mesh has {expected} vertices")]
    SourceLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumSpec {
    pub kappa: Complex64,
    pub mu: f64,
    pub kappa_star: f64,
}

impl MediumSpec {
    pub fn new(kappa: Complex64, mu: f64) -> Result<Self, FemError> {
        if !(kappa.re >= 0.0 && kappa.im >= 0.0) || !kappa.is_finite() {
            return Err(FemError::InvalidWavenumber(kappa));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(FemError::InvalidMu(mu));
        }
        Ok(Self {
            kappa,
            mu,
            kappa_star: kappa.norm().max(1.0),
        })
    }

    /// `κ = 2π/λ + iσ`.
    pub fn from_wavelength(wavelength: f64, absorption: f64, mu: f64) -> Result<Self, FemError> {
        Self::new(Complex64::new(2.0 * std::f64::consts::PI / wavelength, absorption), mu)
    }
}

/// Exact P1 stiffness matrix `∫ ∇φ_a·∇φ_b` of a triangle.
pub fn p1_stiffness<T: RealField + Copy>(p: [[T; 2]; 3]) -> [[T; 3]; 3] {
    let two = T::one() + T::one();
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = area2.abs() / two;
    let mut b = [T::zero(); 3];
    let mut c = [T::zero(); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b[i] = p[j][1] - p[k][1];
        c[i] = p[k][0] - p[j][0];
    }
    let denom = two * two * area;
    let mut k = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b[i] * b[j] + c[i] * c[j]) / denom;
        }
    }
    k
}

/// Exact P1 mass matrix `∫ φ_a φ_b` of a triangle.
pub fn p1_mass<T: RealField + Copy>(p: [[T; 2]; 3]) -> [[T; 3]; 3] {
    let two = T::one() + T::one();
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let twelve = two * two * (two + T::one());
    let off = area2.abs() / two / twelve;
    let mut m = [[off; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = off * two;
    }
    m
}

/// Edge mass `(h/6)[[2,1],[1,2]]`.
pub fn edge_mass<T: RealField + Copy>(h: T) -> [[T; 2]; 2] {
    let six: T = nalgebra::convert(6.0);
    let d = h / six;
    [[d + d, d], [d, d + d]]
}

/// Edge tangential stiffness `(1/h)[[1,−1],[−1,1]]`.
pub fn edge_stiffness<T: RealField + Copy>(h: T) -> [[T; 2]; 2] {
    let d = T::one() / h;
    [[d, -d], [-d, d]]
}

fn edge_length(mesh: &Mesh, a: usize, b: usize) -> f64 {
    let (p, q) = (mesh.vertices()[a], mesh.vertices()[b]);
    (q[0] - p[0]).hypot(q[1] - p[1])
}

/// Real stiffness and mass matrices of one subdomain in its local vertex order.
pub fn assemble_stiffness_mass(mesh: &Mesh, sub: &Subdomain) -> (RealMatrix, RealMatrix) {
    let n = sub.num_dofs();
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for &t in &sub.triangles {
        let pts = mesh.triangle_points(t);
        let ke = p1_stiffness(pts);
        let me = p1_mass(pts);
        let loc = mesh.triangles()[t].map(|v| sub.local_index(v).expect("vertex of own triangle"));
        for a in 0..3 {
            for b in 0..3 {
                k[(loc[a], loc[b])] += ke[a][b];
                m[(loc[a], loc[b])] += me[a][b];
            }
        }
    }
    (k, m)
}

/// `A_j = μ·K_j − κ²·M_j`.
pub fn helmholtz_operator(stiffness: &RealMatrix, mass: &RealMatrix, medium: &MediumSpec) -> ComplexMatrix {
    let k2 = medium.kappa * medium.kappa;
    DMatrix::from_fn(stiffness.nrows(), stiffness.ncols(), |i, j| {
        Complex64::from(medium.mu * stiffness[(i, j)]) - k2 * mass[(i, j)]
    })
}

/// `N_j = K_j + κ*²·M_j`.
pub fn h1_gram(stiffness: &RealMatrix, mass: &RealMatrix, kappa_star: f64) -> RealMatrix {
    stiffness + mass * (kappa_star * kappa_star)
}

fn assemble_edges(mesh: &Mesh, sub: &Subdomain, element: impl Fn(f64) -> [[f64; 2]; 2]) -> RealMatrix {
    let n = sub.num_boundary_dofs();
    let mut out = DMatrix::zeros(n, n);
    for e in &sub.boundary_edges {
        let ke = element(edge_length(mesh, e.a, e.b));
        let loc = [e.a, e.b].map(|v| sub.boundary_dofs.binary_search(&v).expect("edge dof on Γ_j"));
        for a in 0..2 {
            for b in 0..2 {
                out[(loc[a], loc[b])] += ke[a][b];
            }
        }
    }
    out
}

/// Boundary mass `∫_Γj u v dσ` on dof(Γ_j).
pub fn assemble_boundary_mass(topology: &SubdomainTopology, j: usize) -> RealMatrix {
    assemble_edges(topology.mesh(), topology.subdomain(j), edge_mass)
}

/// Boundary tangential stiffness `∫_Γj ∇_Γ u·∇_Γ v dσ` on dof(Γ_j).
pub fn assemble_boundary_tangential_stiffness(topology: &SubdomainTopology, j: usize) -> RealMatrix {
    assemble_edges(topology.mesh(), topology.subdomain(j), edge_stiffness)
}

/// All matrices attached to one subdomain.
#[derive(Debug, Clone)]
pub struct SubdomainForms {
    pub stiffness: RealMatrix,
    pub mass: RealMatrix,
    /// `A_j = μK_j − κ²M_j` (complex symmetric).
    pub operator: ComplexMatrix,
    /// `N_j = K_j + κ*²M_j`.
    pub gram: RealMatrix,
    pub boundary_mass: RealMatrix,
    pub boundary_stiffness: RealMatrix,
}

pub fn assemble_subdomain_forms(topology: &SubdomainTopology, j: usize, medium: &MediumSpec) -> SubdomainForms {
    let (stiffness, mass) = assemble_stiffness_mass(topology.mesh(), topology.subdomain(j));
    SubdomainForms {
        operator: helmholtz_operator(&stiffness, &mass, medium),
        gram: h1_gram(&stiffness, &mass, medium.kappa_star),
        boundary_mass: assemble_boundary_mass(topology, j),
        boundary_stiffness: assemble_boundary_tangential_stiffness(topology, j),
        stiffness,
        mass,
    }
}

pub fn assemble_all_forms(topology: &SubdomainTopology, medium: &MediumSpec) -> Vec<SubdomainForms> {
    (0..topology.num_subdomains())
        .into_par_iter()
        .map(|j| assemble_subdomain_forms(topology, j, medium))
        .collect()
}

/// Conforming operator and H¹ Gram on the whole mesh.
pub fn assemble_global(mesh: &Mesh, medium: &MediumSpec) -> (ComplexMatrix, RealMatrix) {
    let all = Subdomain {
        triangles: (0..mesh.num_triangles()).collect(),
        vertices: (0..mesh.num_vertices()).collect(),
        boundary_edges: Vec::new(),
        boundary_dofs: Vec::new(),
        boundary_local: Vec::new(),
        interior_local: Vec::new(),
        boundary_skeleton: Vec::new(),
    };
    let (k, m) = assemble_stiffness_mass(mesh, &all);
    (helmholtz_operator(&k, &m, medium), h1_gram(&k, &m, medium.kappa_star))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// `f` constant over Ω, no boundary data.
    VolumeConstant(Complex64),
    /// `f` given by its P1 interpolant (one value per mesh vertex).
    VolumeNodal(Vec<Complex64>),
    /// `g = ∂_n u_inc` with `u_inc(x) = exp(iκ d·x)` on ∂Ω, `f = 0`.
    PlaneWave { direction: [f64; 2] },
}

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Outward unit normal of a boundary edge, pointing away from its triangle.
pub fn outward_normal(mesh: &Mesh, e: &InterfaceEdge) -> [f64; 2] {
    let (p, q) = (mesh.vertices()[e.a], mesh.vertices()[e.b]);
    let h = edge_length(mesh, e.a, e.b);
    let mut n = [(q[1] - p[1]) / h, -(q[0] - p[0]) / h];
    let opposite = mesh.triangles()[e.triangle]
        .into_iter()
        .find(|&v| v != e.a && v != e.b)
        .expect("triangle has a third vertex");
    let r = mesh.vertices()[opposite];
    if n[0] * (r[0] - p[0]) + n[1] * (r[1] - p[1]) > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// `∫_e g φ_a dσ` and `∫_e g φ_b dσ` by 2-point Gauss.
pub fn edge_load(p: [f64; 2], q: [f64; 2], g: impl Fn([f64; 2]) -> Complex64) -> [Complex64; 2] {
    let h = (q[0] - p[0]).hypot(q[1] - p[1]);
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for s in GAUSS2 {
        let x = [
            0.5 * (p[0] + q[0]) + 0.5 * s * (q[0] - p[0]),
            0.5 * (p[1] + q[1]) + 0.5 * s * (q[1] - p[1]),
        ];
        let gx = g(x) * (0.5 * h);
        out[0] += gx * (0.5 * (1.0 - s));
        out[1] += gx * (0.5 * (1.0 + s));
    }
    out
}

/// `∂_n u_inc = iκ(d·n) exp(iκ d·x)`.
pub fn plane_wave_flux(kappa: Complex64, d: [f64; 2], n: [f64; 2], x: [f64; 2]) -> Complex64 {
    let i = Complex64::i();
    i * kappa * (d[0] * n[0] + d[1] * n[1]) * (i * kappa * (d[0] * x[0] + d[1] * x[1])).exp()
}

fn check_source(mesh: &Mesh, source: &Source) -> Result<(), FemError> {
    match source {
        Source::PlaneWave { direction } => {
            let norm = direction[0].hypot(direction[1]);
            if (norm - 1.0).abs() > 1e-12 {
                return Err(FemError::NonUnitDirection(norm));
            }
        }
        Source::VolumeNodal(values) if values.len() != mesh.num_vertices() => {
            return Err(FemError::SourceLength {
                expected: mesh.num_vertices(),
                found: values.len(),
            });
        }
        _ => {}
    }
    Ok(())
}

fn subdomain_load(mesh: &Mesh, sub: &Subdomain, medium: &MediumSpec, source: &Source) -> ComplexVector {
    let mut f = ComplexVector::zeros(sub.num_dofs());
    match source {
        Source::VolumeConstant(c) => {
            for &t in &sub.triangles {
                let share = *c * (mesh.triangle_area(t) / 3.0);
                for v in mesh.triangles()[t] {
                    f[sub.local_index(v).unwrap()] += share;
                }
            }
        }
        Source::VolumeNodal(values) => {
            for &t in &sub.triangles {
                let me = p1_mass(mesh.triangle_points(t));
                let tri = mesh.triangles()[t];
                for a in 0..3 {
                    let row: Complex64 = (0..3).map(|b| values[tri[b]] * me[a][b]).sum();
                    f[sub.local_index(tri[a]).unwrap()] += row;
                }
            }
        }
        Source::PlaneWave { direction } => {
            // Neumann data lives on ∂Ω only, never on interfaces between subdomains
            for e in sub.boundary_edges.iter().filter(|e| e.external) {
                let n = outward_normal(mesh, e);
                let (p, q) = (mesh.vertices()[e.a], mesh.vertices()[e.b]);
                let [la, lb] = edge_load(p, q, |x| plane_wave_flux(medium.kappa, *direction, n, x));
                f[sub.local_index(e.a).unwrap()] += la;
                f[sub.local_index(e.b).unwrap()] += lb;
            }
        }
    }
    f
}

/// Load functional `⟨f, v⟩ = Σ_j ∫_Ωj f v_j + ∫_{∂Ωj∩∂Ω} g v_j`, one block per subdomain.
pub fn assemble_load(
    topology: &SubdomainTopology,
    medium: &MediumSpec,
    source: &Source,
) -> Result<Vec<ComplexVector>, FemError> {
    check_source(topology.mesh(), source)?;
    Ok(topology
        .subdomains()
        .iter()
        .map(|sub| subdomain_load(topology.mesh(), sub, medium, source))
        .collect())
}

/// The same functional on the conforming space, indexed by mesh vertex.
pub fn assemble_global_load(
    topology: &SubdomainTopology,
    medium: &MediumSpec,
    source: &Source,
) -> Result<ComplexVector, FemError> {
    let blocks = assemble_load(topology, medium, source)?;
    let mut f = ComplexVector::zeros(topology.mesh().num_vertices());
    for (sub, b) in topology.subdomains().iter().zip(&blocks) {
        for (i, &v) in sub.vertices.iter().enumerate() {
            f[v] += b[i];
        }
    }
    Ok(f)
}
