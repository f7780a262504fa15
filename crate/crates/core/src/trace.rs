//! Broken volume space, multi-trace space and its dual, single-trace skeleton
//! space, and the Boolean operators `B`, `R` between them.
//!
//! Dual multi-traces are stored in the same coefficient basis as primal ones;
//! the flavour parameter only keeps the two from being mixed up.

use std::marker::PhantomData;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::impedance::ImpedanceOperator;
use crate::linalg::LinalgError;
use crate::topology::SubdomainTopology;
use crate::{ComplexVector, RealMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Primal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dual;

/// Element of the multi-trace space (`Primal`) or of its dual (`Dual`),
/// stored as one flat vector of per-subdomain blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrace<F> {
    data: ComplexVector,
    _flavor: PhantomData<F>,
}

impl<F> MultiTrace<F> {
    pub fn from_vector(data: ComplexVector) -> Self {
        Self {
            data,
            _flavor: PhantomData,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_vector(ComplexVector::zeros(len))
    }

    pub fn as_vector(&self) -> &ComplexVector {
        &self.data
    }

    pub fn as_vector_mut(&mut self) -> &mut ComplexVector {
        &mut self.data
    }

    pub fn into_vector(self) -> ComplexVector {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Plain Euclidean coefficient norm (no Gram weighting).
    pub fn coefficient_norm(&self) -> f64 {
        self.data.norm()
    }
}

impl<F> Add for MultiTrace<F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_vector(self.data + rhs.data)
    }
}

impl<F> Add<&MultiTrace<F>> for &MultiTrace<F> {
    type Output = MultiTrace<F>;
    fn add(self, rhs: &MultiTrace<F>) -> MultiTrace<F> {
        MultiTrace::from_vector(&self.data + &rhs.data)
    }
}

impl<F> Sub for MultiTrace<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_vector(self.data - rhs.data)
    }
}

impl<F> Sub<&MultiTrace<F>> for &MultiTrace<F> {
    type Output = MultiTrace<F>;
    fn sub(self, rhs: &MultiTrace<F>) -> MultiTrace<F> {
        MultiTrace::from_vector(&self.data - &rhs.data)
    }
}

impl<F> Neg for MultiTrace<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_vector(-self.data)
    }
}

impl<F> Mul<Complex64> for MultiTrace<F> {
    type Output = Self;
    fn mul(self, rhs: Complex64) -> Self {
        Self::from_vector(self.data * rhs)
    }
}

impl<F> Mul<Complex64> for &MultiTrace<F> {
    type Output = MultiTrace<F>;
    fn mul(self, rhs: Complex64) -> MultiTrace<F> {
        MultiTrace::from_vector(&self.data * rhs)
    }
}

/// `⟨v, p⟩ = Σ v_i p_i`, no conjugation.
pub fn pairing(v: &MultiTrace<Primal>, p: &MultiTrace<Dual>) -> Complex64 {
    v.data.dot(&p.data)
}

/// One coefficient vector per subdomain, over its volume dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenVector {
    pub blocks: Vec<ComplexVector>,
}

impl BrokenVector {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            blocks: sizes.iter().map(|&n| ComplexVector::zeros(n)).collect(),
        }
    }

    /// `Σ_j ⟨u_j, v_j⟩`, no conjugation.
    pub fn pairing(&self, other: &BrokenVector) -> Complex64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }
}

/// A function on dof(Σ), one value per skeleton dof.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonVector(pub ComplexVector);

/// Index maps between the broken, multi-trace and skeleton spaces.
#[derive(Debug, Clone)]
pub struct TraceSpaces {
    offsets: Vec<usize>,
    local: Vec<Vec<usize>>,
    skeleton: Vec<Vec<usize>>,
    volume_sizes: Vec<usize>,
    multiplicity: Vec<usize>,
}

impl TraceSpaces {
    pub fn new(topology: &SubdomainTopology) -> Self {
        let mut offsets = vec![0];
        for s in topology.subdomains() {
            offsets.push(offsets.last().unwrap() + s.num_boundary_dofs());
        }
        Self {
            offsets,
            local: topology.subdomains().iter().map(|s| s.boundary_local.clone()).collect(),
            skeleton: topology
                .subdomains()
                .iter()
                .map(|s| s.boundary_skeleton.clone())
                .collect(),
            volume_sizes: topology.subdomains().iter().map(|s| s.num_dofs()).collect(),
            multiplicity: topology.multiplicity().to_vec(),
        }
    }

    pub fn num_subdomains(&self) -> usize {
        self.local.len()
    }

    /// `Σ_j |dof(Γ_j)|`.
    pub fn multi_trace_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn skeleton_len(&self) -> usize {
        self.multiplicity.len()
    }

    pub fn volume_sizes(&self) -> &[usize] {
        &self.volume_sizes
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    /// Range of block `j` inside a flat multi-trace vector.
    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn block_len(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    /// Local volume positions of the dofs of Γ_j.
    pub fn boundary_local(&self, j: usize) -> &[usize] {
        &self.local[j]
    }

    /// Skeleton positions of the dofs of Γ_j.
    pub fn boundary_skeleton(&self, j: usize) -> &[usize] {
        &self.skeleton[j]
    }

    pub fn block<'a, F>(&self, v: &'a MultiTrace<F>, j: usize) -> &'a [Complex64] {
        &v.data.as_slice()[self.block_range(j)]
    }

    /// `B_j u_j`.
    pub fn trace_block(&self, j: usize, u: &ComplexVector) -> ComplexVector {
        ComplexVector::from_iterator(self.local[j].len(), self.local[j].iter().map(|&i| u[i]))
    }

    /// `B_j* p_j`: scatter into the volume dofs of Ω_j.
    pub fn trace_adjoint_block(&self, j: usize, p: &[Complex64]) -> ComplexVector {
        let mut out = ComplexVector::zeros(self.volume_sizes[j]);
        for (&i, &v) in self.local[j].iter().zip(p) {
            out[i] = v;
        }
        out
    }

    pub fn trace(&self, u: &BrokenVector) -> MultiTrace<Primal> {
        let mut out = ComplexVector::zeros(self.multi_trace_len());
        for j in 0..self.num_subdomains() {
            for (k, &i) in self.local[j].iter().enumerate() {
                out[self.offsets[j] + k] = u.blocks[j][i];
            }
        }
        MultiTrace::from_vector(out)
    }

    pub fn trace_adjoint(&self, p: &MultiTrace<Dual>) -> BrokenVector {
        BrokenVector {
            blocks: (0..self.num_subdomains())
                .map(|j| self.trace_adjoint_block(j, self.block(p, j)))
                .collect(),
        }
    }

    /// `R w` on raw coefficients.
    pub fn restrict_raw(&self, w: &ComplexVector) -> ComplexVector {
        let mut out = ComplexVector::zeros(self.multi_trace_len());
        for j in 0..self.num_subdomains() {
            for (k, &s) in self.skeleton[j].iter().enumerate() {
                out[self.offsets[j] + k] = w[s];
            }
        }
        out
    }

    /// `R* p` on raw coefficients: `(R*p)(x) = Σ_{j: x∈Γj} p_j(x)`.
    pub fn restrict_adjoint_raw(&self, p: &ComplexVector) -> ComplexVector {
        let mut out = ComplexVector::zeros(self.skeleton_len());
        for j in 0..self.num_subdomains() {
            for (k, &s) in self.skeleton[j].iter().enumerate() {
                out[s] += p[self.offsets[j] + k];
            }
        }
        out
    }

    pub fn restrict(&self, w: &SkeletonVector) -> MultiTrace<Primal> {
        MultiTrace::from_vector(self.restrict_raw(&w.0))
    }

    pub fn restrict_adjoint(&self, p: &MultiTrace<Dual>) -> SkeletonVector {
        SkeletonVector(self.restrict_adjoint_raw(&p.data))
    }

    /// Dense `R` (multi-trace × skeleton, 0/1 entries).
    pub fn restriction_matrix(&self) -> RealMatrix {
        let mut r = RealMatrix::zeros(self.multi_trace_len(), self.skeleton_len());
        for j in 0..self.num_subdomains() {
            for (k, &s) in self.skeleton[j].iter().enumerate() {
                r[(self.offsets[j] + k, s)] = 1.0;
            }
        }
        r
    }

    /// Coefficient distance from `v` to the single-valued traces `X_h(Σ)`.
    pub fn single_trace_defect(&self, v: &MultiTrace<Primal>) -> f64 {
        let mean = self
            .restrict_adjoint_raw(&v.data)
            .iter()
            .zip(&self.multiplicity)
            .map(|(s, &m)| s / m as f64)
            .collect::<Vec<_>>();
        let back = self.restrict_raw(&ComplexVector::from_vec(mean));
        (&back - &v.data).norm()
    }
}

/// `q = p − T*R(R*T*R)⁻¹R*p`; `R*q = 0`.
pub fn project_onto_polar(
    p: &MultiTrace<Dual>,
    impedance: &ImpedanceOperator,
) -> Result<MultiTrace<Dual>, LinalgError> {
    impedance.project_onto_polar(p)
}
