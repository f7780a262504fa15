//! Block-diagonal impedance operators `T = diag(T_1, …, T_J)` built from a
//! declarative description, together with `Ts = (T + Tᴴ)/2` and the norms it
//! induces on multi-traces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{MediumSpec, SubdomainForms};
use crate::linalg::{extremal_generalized_eig, hermitian_part, max_abs, Cholesky, Factorization, LinalgError, Lu};
use crate::topology::SubdomainTopology;
use crate::trace::{Dual, MultiTrace, Primal, SkeletonVector, TraceSpaces};
use crate::{ComplexMatrix, ComplexVector, RealMatrix};

/// Threshold on the smallest Rayleigh quotient of `Ts` against the boundary mass.
pub const COERCIVITY_THRESHOLD: f64 = 1e-12;

/// Relative tolerance for treating `T` as self-adjoint.
pub const SELF_ADJOINT_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImpedanceError {
    #[error("impedance is not coercive: smallest Rayleigh quotient of Ts is {min_rayleigh:e}")]
    NotCoercive { min_rayleigh: f64 },
    #[error("scale factor z = {0} must have a positive real part")]
    NonPositiveScale(Complex64),
    #[error("rotation angle θ = {0} must lie in (−π/2, π/2)")]
    AngleOutOfRange(f64),
    #[error("expected {expected} per-subdomain factors, found {found}")]
    FactorCount { expected: usize, found: usize },
    #[error("block {block} has size {found}, expected {expected}")]
    BlockSize {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Declarative description of an impedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImpedanceSpec {
    /// `T_j = Id` on the boundary coefficients.
    IdentityD,
    /// `T_j = z·M_Γj`.
    ScaledMass { z: Complex64 },
    /// `T_j = K_Γj/(2|κ|) + |κ|·M_Γj`.
    SecondOrder,
    /// `e^{−iθ}` times the second-order impedance.
    RotatedSecondOrder { theta: f64 },
    /// `z` times another catalog entry.
    ScaledReference {
        z: Complex64,
        reference: Box<ImpedanceSpec>,
    },
    /// `T_j = z_j·M_Γj`.
    PerSubdomainScaledMass { z: Vec<Complex64> },
}

impl ImpedanceSpec {
    /// Cheap checks that do not need any assembled matrix.
    pub fn validate(&self) -> Result<(), ImpedanceError> {
        match self {
            ImpedanceSpec::IdentityD | ImpedanceSpec::SecondOrder => Ok(()),
            ImpedanceSpec::ScaledMass { z } => check_scale(*z),
            ImpedanceSpec::RotatedSecondOrder { theta } => {
                if theta.abs() < std::f64::consts::FRAC_PI_2 {
                    Ok(())
                } else {
                    Err(ImpedanceError::AngleOutOfRange(*theta))
                }
            }
            ImpedanceSpec::ScaledReference { z, reference } => {
                check_scale(*z)?;
                reference.validate()
            }
            ImpedanceSpec::PerSubdomainScaledMass { z } => z.iter().try_for_each(|&z| check_scale(z)),
        }
    }

    /// Raw blocks `T_j`, without any coercivity check.
    pub fn blocks(&self, forms: &[SubdomainForms], medium: &MediumSpec) -> Result<Vec<ComplexMatrix>, ImpedanceError> {
        let k = medium.kappa.norm();
        Ok(match self {
            ImpedanceSpec::IdentityD => forms
                .iter()
                .map(|f| ComplexMatrix::identity(f.boundary_mass.nrows(), f.boundary_mass.ncols()))
                .collect(),
            ImpedanceSpec::ScaledMass { z } => forms.iter().map(|f| complexify(&f.boundary_mass) * *z).collect(),
            ImpedanceSpec::SecondOrder => forms
                .iter()
                .map(|f| complexify(&(&f.boundary_stiffness / (2.0 * k) + &f.boundary_mass * k)))
                .collect(),
            ImpedanceSpec::RotatedSecondOrder { theta } => {
                let rot = Complex64::from_polar(1.0, -theta);
                ImpedanceSpec::SecondOrder
                    .blocks(forms, medium)?
                    .into_iter()
                    .map(|b| b * rot)
                    .collect()
            }
            ImpedanceSpec::ScaledReference { z, reference } => {
                reference.blocks(forms, medium)?.into_iter().map(|b| b * *z).collect()
            }
            ImpedanceSpec::PerSubdomainScaledMass { z } => {
                if z.len() != forms.len() {
                    return Err(ImpedanceError::FactorCount {
                        expected: forms.len(),
                        found: z.len(),
                    });
                }
                forms
                    .iter()
                    .zip(z)
                    .map(|(f, &z)| complexify(&f.boundary_mass) * z)
                    .collect()
            }
        })
    }
}

fn check_scale(z: Complex64) -> Result<(), ImpedanceError> {
    if z.re > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(ImpedanceError::NonPositiveScale(z))
    }
}

fn complexify(m: &RealMatrix) -> ComplexMatrix {
    m.map(Complex64::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub coercive: bool,
    pub min_rayleigh: f64,
}

/// Smallest eigenvalue of `Ts_j` relative to `M_Γj` over all blocks.
pub fn verify_coercivity(
    blocks: &[ComplexMatrix],
    boundary_mass: &[RealMatrix],
) -> Result<CoercivityReport, LinalgError> {
    let mut min_rayleigh = f64::INFINITY;
    for (t, m) in blocks.iter().zip(boundary_mass) {
        if t.nrows() == 0 {
            continue;
        }
        let (lo, _) = extremal_generalized_eig(&hermitian_part(t), &complexify(m))?;
        min_rayleigh = min_rayleigh.min(lo);
    }
    Ok(CoercivityReport {
        coercive: min_rayleigh > COERCIVITY_THRESHOLD,
        min_rayleigh,
    })
}

/// `T` per subdomain, `Ts` with its Cholesky factors, and the skeleton
/// factorizations of `RᴴTᴴR` and `RᴴTR`.
#[derive(Debug, Clone)]
pub struct ImpedanceOperator {
    spaces: TraceSpaces,
    blocks: Vec<ComplexMatrix>,
    hermitian: Vec<ComplexMatrix>,
    factors: Vec<Cholesky<Complex64>>,
    skeleton: Lu<Complex64>,
    skeleton_adjoint: Lu<Complex64>,
    self_adjoint: bool,
}

/// Builds the catalog impedance after checking coercivity against the boundary mass.
pub fn build_impedance(
    spec: &ImpedanceSpec,
    topology: &SubdomainTopology,
    forms: &[SubdomainForms],
    medium: &MediumSpec,
) -> Result<ImpedanceOperator, ImpedanceError> {
    spec.validate()?;
    let blocks = spec.blocks(forms, medium)?;
    let masses: Vec<RealMatrix> = forms.iter().map(|f| f.boundary_mass.clone()).collect();
    let report = verify_coercivity(&blocks, &masses)?;
    if !report.coercive {
        return Err(ImpedanceError::NotCoercive {
            min_rayleigh: report.min_rayleigh,
        });
    }
    ImpedanceOperator::from_blocks(TraceSpaces::new(topology), blocks)
}

/// `RᴴTR` (or `RᴴTᴴR`), dense on dof(Σ).
fn skeleton_matrix(spaces: &TraceSpaces, blocks: &[ComplexMatrix], adjoint: bool) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(spaces.skeleton_len(), spaces.skeleton_len());
    for (j, b) in blocks.iter().enumerate() {
        let idx = spaces.boundary_skeleton(j);
        for (a, &sa) in idx.iter().enumerate() {
            for (c, &sc) in idx.iter().enumerate() {
                out[(sa, sc)] += if adjoint { b[(c, a)].conj() } else { b[(a, c)] };
            }
        }
    }
    out
}

impl ImpedanceOperator {
    /// Wraps user-supplied blocks; fails unless every `Ts_j` is positive definite.
    pub fn from_blocks(spaces: TraceSpaces, blocks: Vec<ComplexMatrix>) -> Result<Self, ImpedanceError> {
        for (j, b) in blocks.iter().enumerate() {
            let n = spaces.block_len(j);
            if b.nrows() != n || b.ncols() != n {
                return Err(ImpedanceError::BlockSize {
                    block: j,
                    expected: n,
                    found: b.nrows(),
                });
            }
        }
        let hermitian: Vec<ComplexMatrix> = blocks.iter().map(hermitian_part).collect();
        let mut factors = Vec::with_capacity(blocks.len());
        for h in &hermitian {
            match Cholesky::new(h) {
                Ok(c) => factors.push(c),
                Err(_) => {
                    let eig = nalgebra::SymmetricEigen::new(h.clone());
                    let min_rayleigh = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                    return Err(ImpedanceError::NotCoercive { min_rayleigh });
                }
            }
        }
        let scale = blocks.iter().map(max_abs).fold(0.0, f64::max);
        let skew = blocks.iter().map(|b| max_abs(&(b - b.adjoint()))).fold(0.0, f64::max);
        Ok(Self {
            skeleton: Lu::new(skeleton_matrix(&spaces, &blocks, false))?,
            skeleton_adjoint: Lu::new(skeleton_matrix(&spaces, &blocks, true))?,
            spaces,
            blocks,
            hermitian,
            factors,
            self_adjoint: skew <= SELF_ADJOINT_RTOL * scale,
        })
    }

    pub fn spaces(&self) -> &TraceSpaces {
        &self.spaces
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn hermitian_blocks(&self) -> &[ComplexMatrix] {
        &self.hermitian
    }

    /// `T = Tᴴ` up to [`SELF_ADJOINT_RTOL`].
    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    fn blockwise(&self, x: &ComplexVector, f: impl Fn(usize, ComplexVector) -> ComplexVector) -> ComplexVector {
        let mut out = ComplexVector::zeros(x.len());
        for j in 0..self.blocks.len() {
            let r = self.spaces.block_range(j);
            let y = f(j, x.rows(r.start, r.len()).into_owned());
            out.rows_mut(r.start, r.len()).copy_from(&y);
        }
        out
    }

    pub fn apply_raw(&self, v: &ComplexVector) -> ComplexVector {
        self.blockwise(v, |j, x| &self.blocks[j] * x)
    }

    pub fn apply_adjoint_raw(&self, v: &ComplexVector) -> ComplexVector {
        self.blockwise(v, |j, x| self.blocks[j].ad_mul(&x))
    }

    pub fn apply_hermitian_raw(&self, v: &ComplexVector) -> ComplexVector {
        self.blockwise(v, |j, x| &self.hermitian[j] * x)
    }

    /// `Ts⁻¹ p`.
    pub fn solve_hermitian_raw(&self, p: &ComplexVector) -> ComplexVector {
        self.blockwise(p, |j, x| {
            let y = self.factors[j].solve_lower(&x).expect("block dimensions");
            self.factors[j].solve_lower_adjoint(&y).expect("block dimensions")
        })
    }

    /// `L⁻¹ p` where `Ts = L Lᴴ`; `|L⁻¹p|₂ = ‖p‖_Ts⁻¹`.
    pub fn whiten_dual(&self, p: &ComplexVector) -> ComplexVector {
        self.blockwise(p, |j, x| self.factors[j].solve_lower(&x).expect("block dimensions"))
    }

    /// Inverse of [`ImpedanceOperator::whiten_dual`].
    pub fn unwhiten_dual(&self, y: &ComplexVector) -> ComplexVector {
        self.blockwise(y, |j, x| self.factors[j].mul_lower(&x))
    }

    pub fn apply(&self, v: &MultiTrace<Primal>) -> MultiTrace<Dual> {
        MultiTrace::from_vector(self.apply_raw(v.as_vector()))
    }

    pub fn apply_adjoint(&self, v: &MultiTrace<Primal>) -> MultiTrace<Dual> {
        MultiTrace::from_vector(self.apply_adjoint_raw(v.as_vector()))
    }

    pub fn apply_hermitian(&self, v: &MultiTrace<Primal>) -> MultiTrace<Dual> {
        MultiTrace::from_vector(self.apply_hermitian_raw(v.as_vector()))
    }

    pub fn solve_hermitian(&self, p: &MultiTrace<Dual>) -> MultiTrace<Primal> {
        MultiTrace::from_vector(self.solve_hermitian_raw(p.as_vector()))
    }

    /// `‖v‖_Ts`.
    pub fn norm_ts(&self, v: &MultiTrace<Primal>) -> f64 {
        self.norm_ts_raw(v.as_vector())
    }

    /// `‖p‖_Ts⁻¹`.
    pub fn norm_ts_dual(&self, p: &MultiTrace<Dual>) -> f64 {
        self.norm_ts_dual_raw(p.as_vector())
    }

    pub fn norm_ts_raw(&self, v: &ComplexVector) -> f64 {
        self.blockwise(v, |j, x| self.factors[j].mul_lower_adjoint(&x)).norm()
    }

    pub fn norm_ts_dual_raw(&self, p: &ComplexVector) -> f64 {
        self.whiten_dual(p).norm()
    }

    /// `(RᴴTR)⁻¹ w`.
    pub fn solve_skeleton(&self, w: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        self.skeleton.solve(w)
    }

    /// `(RᴴTᴴR)⁻¹ w`.
    pub fn solve_skeleton_adjoint(&self, w: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        self.skeleton_adjoint.solve(w)
    }

    /// `q = p − TᴴR(RᴴTᴴR)⁻¹Rᴴp`, so that `Rᴴq = 0`.
    pub fn project_onto_polar(&self, p: &MultiTrace<Dual>) -> Result<MultiTrace<Dual>, LinalgError> {
        let w = self.solve_skeleton_adjoint(&self.spaces.restrict_adjoint_raw(p.as_vector()))?;
        let back = self.apply_adjoint_raw(&self.spaces.restrict_raw(&w));
        Ok(MultiTrace::from_vector(p.as_vector() - back))
    }

    /// Splits `v = Rw + r` with `RᴴT r = 0`; returns `(w, Rw, r)`.
    pub fn decompose_primal(
        &self,
        v: &MultiTrace<Primal>,
    ) -> Result<(SkeletonVector, MultiTrace<Primal>, MultiTrace<Primal>), LinalgError> {
        let w = self.solve_skeleton(&self.spaces.restrict_adjoint_raw(&self.apply_raw(v.as_vector())))?;
        let x = self.spaces.restrict_raw(&w);
        let r = v.as_vector() - &x;
        Ok((
            SkeletonVector(w),
            MultiTrace::from_vector(x),
            MultiTrace::from_vector(r),
        ))
    }

    fn dense_from(&self, blocks: &[ComplexMatrix]) -> ComplexMatrix {
        let n = self.spaces.multi_trace_len();
        let mut out = ComplexMatrix::zeros(n, n);
        for (j, b) in blocks.iter().enumerate() {
            let r = self.spaces.block_range(j);
            out.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(b);
        }
        out
    }

    /// Dense block-diagonal `T`.
    pub fn dense(&self) -> ComplexMatrix {
        self.dense_from(&self.blocks)
    }

    /// Dense block-diagonal `Ts`.
    pub fn dense_hermitian(&self) -> ComplexMatrix {
        self.dense_from(&self.hermitian)
    }

    /// Cholesky factor of the whole `Ts`, assembled from the block factors.
    pub fn hermitian_factorization(&self) -> Cholesky<Complex64> {
        let lower: Vec<ComplexMatrix> = self.factors.iter().map(|f| f.lower().clone()).collect();
        Cholesky::from_lower(self.dense_from(&lower))
    }
}
