//! Constants of the convergence theory: the harmonic lifting `B†` and its
//! boundary energy `Λ`, trace bounds `t±`, skew bound `t*`, inf-sup constants,
//! the Cauchy-data projector `P`, and the coercivity constant `γ`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{check_dense, Characterization, DenseError};
use crate::fem::{assemble_global, MediumSpec, SubdomainForms};
use crate::impedance::{ImpedanceError, ImpedanceOperator, ImpedanceSpec, SELF_ADJOINT_RTOL};
use crate::linalg::{
    extremal_generalized_eig, max_abs, weighted_singular_values, Cholesky, Factorization, LinalgError, Lu, Metric,
};
use crate::mesh::Mesh;
use crate::scattering::robin_matrix;
use crate::skeleton::{scatter_conforming, OperatorSet};
use crate::topology::SubdomainTopology;
use crate::trace::{BrokenVector, Dual, MultiTrace, Primal, TraceSpaces};
use crate::{ComplexMatrix, ComplexVector, RealMatrix};

/// Allowed shortfall of `γ` below its lower bounds.
pub const GAMMA_SLACK: f64 = 1e-9;
/// Allowed excursion of field-of-values samples outside the predicted region.
pub const FIELD_OF_VALUES_SLACK: f64 = 1e-10;
/// Largest accepted discrepancy in the factorization identity.
pub const FACTORIZATION_RTOL: f64 = 1e-8;
/// Inf-sup constants at or below this value mean the discrete problem is not well posed.
pub const ALPHA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstantsError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Impedance(#[from] ImpedanceError),
    #[error("discrete inf-sup constant {0:e} is not positive; the global problem is not well posed")]
    InfSup(f64),
    #[error("field-of-values samples must be nonzero")]
    ZeroSample,
}

/// Minimal-energy right inverse of the trace: boundary values are kept, interior
/// values solve the homogeneous H¹ Gram system.
#[derive(Debug, Clone)]
pub struct HarmonicLifting {
    spaces: TraceSpaces,
    schur: Vec<ComplexMatrix>,
    /// `−N_II⁻¹N_IΓ` per subdomain.
    extension: Vec<ComplexMatrix>,
    interior: Vec<Vec<usize>>,
}

fn schur_block(
    gram: &RealMatrix,
    boundary: &[usize],
    interior: &[usize],
) -> Result<(ComplexMatrix, ComplexMatrix), LinalgError> {
    let n_gg = gram.select_rows(boundary).select_columns(boundary);
    if interior.is_empty() {
        return Ok((n_gg.map(Complex64::from), ComplexMatrix::zeros(0, boundary.len())));
    }
    let n_ii = gram.select_rows(interior).select_columns(interior);
    let n_ig = gram.select_rows(interior).select_columns(boundary);
    let chol = Cholesky::new_checked(&n_ii)?;
    let mut ext = RealMatrix::zeros(interior.len(), boundary.len());
    for k in 0..boundary.len() {
        ext.set_column(k, &-chol.solve(&n_ig.column(k).into_owned())?);
    }
    let s = n_gg + n_ig.transpose() * &ext;
    let s = (&s + s.transpose()) * 0.5;
    Ok((s.map(Complex64::from), ext.map(Complex64::from)))
}

pub fn build_lifting(topology: &SubdomainTopology, forms: &[SubdomainForms]) -> Result<HarmonicLifting, LinalgError> {
    let parts = topology
        .subdomains()
        .par_iter()
        .zip(forms.par_iter())
        .map(|(s, f)| schur_block(&f.gram, &s.boundary_local, &s.interior_local))
        .collect::<Result<Vec<_>, _>>()?;
    let (schur, extension) = parts.into_iter().unzip();
    Ok(HarmonicLifting {
        spaces: TraceSpaces::new(topology),
        schur,
        extension,
        interior: topology.subdomains().iter().map(|s| s.interior_local.clone()).collect(),
    })
}

impl HarmonicLifting {
    pub fn spaces(&self) -> &TraceSpaces {
        &self.spaces
    }

    /// The blocks `Λ_j`.
    pub fn schur_blocks(&self) -> &[ComplexMatrix] {
        &self.schur
    }

    pub fn lift_raw(&self, v: &ComplexVector) -> BrokenVector {
        let blocks = (0..self.spaces.num_subdomains())
            .map(|j| {
                let vj = v
                    .rows(self.spaces.block_range(j).start, self.spaces.block_len(j))
                    .into_owned();
                let mut u = self.spaces.trace_adjoint_block(j, vj.as_slice());
                let interior = &self.extension[j] * &vj;
                for (&i, x) in self.interior[j].iter().zip(interior.iter()) {
                    u[i] = *x;
                }
                u
            })
            .collect();
        BrokenVector { blocks }
    }

    /// `B†v`.
    pub fn lift(&self, v: &MultiTrace<Primal>) -> BrokenVector {
        self.lift_raw(v.as_vector())
    }

    /// `‖v‖_Λ = ‖B†v‖_{H¹}`.
    pub fn norm_lambda(&self, v: &MultiTrace<Primal>) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.schur.len() {
            let vj = ComplexVector::from_column_slice(self.spaces.block(v, j));
            sum += vj.dotc(&(&self.schur[j] * &vj)).re;
        }
        sum.max(0.0).sqrt()
    }

    /// `Λ` itself, as an impedance.
    pub fn as_impedance(&self) -> Result<ImpedanceOperator, ImpedanceError> {
        ImpedanceOperator::from_blocks(self.spaces.clone(), self.schur.clone())
    }
}

/// `(t⁻, t⁺)`: extreme values of `‖v‖_Ts / ‖v‖_Λ`.
pub fn compute_trace_bounds(
    impedance: &ImpedanceOperator,
    lifting: &HarmonicLifting,
) -> Result<(f64, f64), LinalgError> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (ts, lambda) in impedance.hermitian_blocks().iter().zip(lifting.schur_blocks()) {
        let (a, b) = extremal_generalized_eig(ts, lambda)?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok((lo.max(0.0).sqrt(), hi.max(0.0).sqrt()))
}

/// `t* = sup ‖((T − Tᴴ)/2)v‖_{Ts⁻¹} / ‖v‖_Ts`.
pub fn compute_skew_bound(impedance: &ImpedanceOperator) -> Result<f64, LinalgError> {
    let mut best: f64 = 0.0;
    for (t, ts) in impedance.blocks().iter().zip(impedance.hermitian_blocks()) {
        let k = (t - t.adjoint()) * Complex64::from(0.5);
        if max_abs(&k) == 0.0 {
            continue;
        }
        let chol = Cholesky::new_checked(ts)?;
        let s = weighted_singular_values(&k, Metric::InverseGram(&chol), Metric::Gram(&chol))?;
        best = best.max(s.first().copied().unwrap_or(0.0));
    }
    Ok(best)
}

/// Singular values of `K` from `(·, ‖·‖_N)` into the dual `(·, ‖·‖_{N⁻¹})`, descending.
fn dual_singular_values(k: &ComplexMatrix, gram: &RealMatrix) -> Result<Vec<f64>, LinalgError> {
    let chol = Cholesky::new_checked(&gram.map(Complex64::from))?;
    weighted_singular_values(k, Metric::InverseGram(&chol), Metric::Gram(&chol))
}

/// `α_h = inf_u sup_v |⟨Au, v⟩| / ‖u‖_{H¹}‖v‖_{H¹}` on the conforming space.
pub fn compute_infsup_alpha(operator: &ComplexMatrix, gram: &RealMatrix) -> Result<f64, ConstantsError> {
    let alpha = dual_singular_values(operator, gram)?.last().copied().unwrap_or(0.0);
    if alpha <= ALPHA_FLOOR {
        return Err(ConstantsError::InfSup(alpha));
    }
    Ok(alpha)
}

/// `‖a‖` on the broken space.
pub fn compute_continuity(forms: &[SubdomainForms]) -> Result<f64, LinalgError> {
    let norms = forms
        .par_iter()
        .map(|f| dual_singular_values(&f.operator, &f.gram).map(|s| s.first().copied().unwrap_or(0.0)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// `β_h`: inf-sup constant of `A − iBᴴTB` on the broken space.
pub fn compute_beta(ops: &OperatorSet) -> Result<f64, LinalgError> {
    let t = ops.impedance.blocks();
    let mins = (0..ops.forms.len())
        .into_par_iter()
        .map(|j| {
            let robin = robin_matrix(&ops.spaces, j, &ops.forms[j].operator, &t[j]);
            dual_singular_values(&robin, &ops.forms[j].gram).map(|s| s.last().copied().unwrap_or(0.0))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mins.into_iter().fold(f64::INFINITY, f64::min))
}

/// Membership tests for an image `(u_D, u_N) = P(v, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCheck {
    /// `(u_D, u_N)` is Cauchy data.
    pub cauchy: Characterization,
    /// `u_D − v` is single-valued.
    pub single_trace: Characterization,
    /// `u_N − p` annihilates single traces.
    pub polar: Characterization,
}

impl ProjectionCheck {
    pub fn holds(&self) -> bool {
        self.cauchy.holds && self.single_trace.holds && self.polar.holds
    }
}

/// Projector onto Cauchy data along `X_h(Σ) × X_h(Σ)°`.
pub struct CauchyProjector<'a> {
    ops: &'a OperatorSet,
    lifting: &'a HarmonicLifting,
    global: Lu<Complex64>,
}

impl<'a> CauchyProjector<'a> {
    /// `operator` is the conforming matrix `A` indexed by mesh vertex.
    pub fn new(
        ops: &'a OperatorSet,
        lifting: &'a HarmonicLifting,
        operator: ComplexMatrix,
    ) -> Result<Self, LinalgError> {
        Ok(Self {
            ops,
            lifting,
            global: Lu::new(operator)?,
        })
    }

    pub fn assemble(ops: &'a OperatorSet, lifting: &'a HarmonicLifting) -> Result<Self, LinalgError> {
        let (operator, _) = assemble_global(ops.topology.mesh(), &ops.medium);
        Self::new(ops, lifting, operator)
    }

    /// Volume field `u = ũ + B†p_D` of the construction.
    fn volume(&self, p_d: &ComplexVector, p_n: &ComplexVector) -> Result<BrokenVector, LinalgError> {
        let ops = self.ops;
        let mut u = self.lifting.lift_raw(p_d);
        let bp = ops.spaces.trace_adjoint(&MultiTrace::<Dual>::from_vector(p_n.clone()));
        let mut rhs = ComplexVector::zeros(ops.topology.mesh().num_vertices());
        for (j, s) in ops.topology.subdomains().iter().enumerate() {
            let r = &bp.blocks[j] - &ops.forms[j].operator * &u.blocks[j];
            for (&v, x) in s.vertices.iter().zip(r.iter()) {
                rhs[v] += x;
            }
        }
        let w = scatter_conforming(&ops.topology, &self.global.solve(&rhs)?);
        for (uj, wj) in u.blocks.iter_mut().zip(w.blocks) {
            *uj += wj;
        }
        Ok(u)
    }

    pub fn apply_raw(
        &self,
        p_d: &ComplexVector,
        p_n: &ComplexVector,
    ) -> Result<(ComplexVector, ComplexVector), LinalgError> {
        let u = self.volume(p_d, p_n)?;
        let spaces = &self.ops.spaces;
        let u_d = spaces.trace(&u).into_vector();
        // interior rows of Au vanish, so Au = Bᵀu_N with u_N its boundary rows
        let au = BrokenVector {
            blocks: u
                .blocks
                .iter()
                .zip(self.ops.forms.iter())
                .map(|(uj, f)| &f.operator * uj)
                .collect(),
        };
        Ok((u_d, spaces.trace(&au).into_vector()))
    }

    pub fn apply(
        &self,
        v: &MultiTrace<Primal>,
        p: &MultiTrace<Dual>,
    ) -> Result<(MultiTrace<Primal>, MultiTrace<Dual>), LinalgError> {
        let (u_d, u_n) = self.apply_raw(v.as_vector(), p.as_vector())?;
        Ok((MultiTrace::from_vector(u_d), MultiTrace::from_vector(u_n)))
    }

    /// Checks that `P(v, p)` is Cauchy data differing from `(v, p)` by an element of `X_h(Σ) × X_h(Σ)°`.
    pub fn check(&self, v: &MultiTrace<Primal>, p: &MultiTrace<Dual>) -> Result<ProjectionCheck, LinalgError> {
        let (u_d, u_n) = self.apply(v, p)?;
        let spaces = &self.ops.spaces;
        let scale = v.coefficient_norm() + p.coefficient_norm() + u_d.coefficient_norm() + u_n.coefficient_norm();
        let jump = spaces.single_trace_defect(&(&u_d - v));
        let polar = spaces.restrict_adjoint(&(&u_n - p)).0.norm();
        Ok(ProjectionCheck {
            cauchy: self.ops.scattering.check_cauchy(&u_d, &u_n),
            single_trace: Characterization::new(jump, scale),
            polar: Characterization::new(polar, scale),
        })
    }

    /// Operator norm of `P` in the product metric `Ts × Ts⁻¹`.
    pub fn norm(&self) -> Result<f64, ConstantsError> {
        let n = self.ops.spaces.multi_trace_len();
        check_dense(n)?;
        let chol = self.ops.impedance.hermitian_factorization();
        let mut m = ComplexMatrix::zeros(2 * n, 2 * n);
        for k in 0..2 * n {
            let mut e = ComplexVector::zeros(n);
            e[k % n] = Complex64::from(1.0);
            let (v, p) = if k < n {
                (chol.solve_lower_adjoint(&e)?, ComplexVector::zeros(n))
            } else {
                (ComplexVector::zeros(n), chol.mul_lower(&e))
            };
            let (u_d, u_n) = self.apply_raw(&v, &p)?;
            let mut col = m.column_mut(k);
            col.rows_mut(0, n).copy_from(&chol.mul_lower_adjoint(&u_d));
            col.rows_mut(n, n).copy_from(&chol.solve_lower(&u_n)?);
        }
        let svd = nalgebra::SVD::try_new(m, false, false, 1e-15, 0).ok_or(LinalgError::NoConvergence)?;
        Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
    }
}

/// Constants entering the explicit lower bounds on `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub t_minus: f64,
    pub t_plus: f64,
    pub t_star: f64,
    pub alpha: f64,
    pub norm_a: f64,
    pub beta: f64,
}

impl TheoryConstants {
    /// `((t⁺)² + (2‖a‖/t⁻)²)/α`, an upper bound on `‖P‖`.
    pub fn projector_bound(&self) -> f64 {
        (self.t_plus.powi(2) + (2.0 * self.norm_a / self.t_minus).powi(2)) / self.alpha
    }

    /// `2α/([1 + (1 + t*)²]·[(t⁺)² + (2‖a‖/t⁻)²])`.
    pub fn gamma_bound(&self) -> f64 {
        2.0 / ((1.0 + (1.0 + self.t_star).powi(2)) * self.projector_bound())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimates {
    pub exact: f64,
    pub bound_thm: f64,
    /// `1/‖P‖`, only for self-adjoint impedances.
    pub bound_hpd: Option<f64>,
}

/// `system` is the dense matrix of `Id + ΠS`.
pub fn compute_gamma(
    system: &ComplexMatrix,
    impedance: &ImpedanceOperator,
    theory: &TheoryConstants,
    norm_p: f64,
) -> Result<GammaEstimates, LinalgError> {
    let chol = impedance.hermitian_factorization();
    let s = weighted_singular_values(system, Metric::InverseGram(&chol), Metric::InverseGram(&chol))?;
    Ok(GammaEstimates {
        exact: s.last().copied().unwrap_or(0.0),
        bound_thm: theory.gamma_bound(),
        bound_hpd: impedance.is_self_adjoint().then(|| 1.0 / norm_p),
    })
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
    ComplexVector::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Largest relative `Ts⁻¹` discrepancy between `(Id + ΠS)⁻¹f` and `(i/2)𝒯′P𝒯Ts⁻¹f`
/// over `samples` random `f`.
pub fn verify_factorization(
    system: &ComplexMatrix,
    projector: &CauchyProjector<'_>,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, LinalgError> {
    let lu = Lu::new(system.clone())?;
    let t = &projector.ops.impedance;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let f = random_trace(rng, system.nrows());
        let x = lu.solve(&f)?;
        let y = factorized_inverse(projector, &f)?;
        worst = worst.max(t.norm_ts_dual_raw(&(&x - &y)) / t.norm_ts_dual_raw(&x));
    }
    Ok(worst)
}

/// `(i/2)𝒯′P𝒯Ts⁻¹f` with `𝒯v = (v, −iTᴴv)` and `𝒯′(v, p) = p − iTv`.
pub fn factorized_inverse(projector: &CauchyProjector<'_>, f: &ComplexVector) -> Result<ComplexVector, LinalgError> {
    let t = &projector.ops.impedance;
    let i = Complex64::i();
    let w = t.solve_hermitian_raw(f);
    let p_n = t.apply_adjoint_raw(&w) * -i;
    let (u_d, u_n) = projector.apply_raw(&w, &p_n)?;
    Ok((u_n - t.apply_raw(&u_d) * i) * (i * 0.5))
}

/// `qᴴTs⁻¹(Id + ΠS)q / qᴴTs⁻¹q`.
pub fn field_of_values_point(
    system: &ComplexMatrix,
    impedance: &ImpedanceOperator,
    q: &ComplexVector,
) -> Result<Complex64, ConstantsError> {
    let y = impedance.whiten_dual(q);
    let norm2 = y.norm_squared();
    if norm2 == 0.0 {
        return Err(ConstantsError::ZeroSample);
    }
    Ok(y.dotc(&impedance.whiten_dual(&(system * q))) / norm2)
}

pub fn sample_field_of_values(
    system: &ComplexMatrix,
    impedance: &ImpedanceOperator,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Complex64>, ConstantsError> {
    let n = system.nrows();
    (0..samples)
        .map(|_| {
            let y = random_trace(rng, n);
            let q = impedance.unwhiten_dual(&(&y / Complex64::from(y.norm())));
            field_of_values_point(system, impedance, &q)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfValuesSummary {
    pub samples: usize,
    /// `max |λ − 1|`.
    pub max_distance_from_one: f64,
    pub min_real_part: f64,
    /// `γ²/2`.
    pub real_part_floor: f64,
    pub contained: bool,
}

impl FieldOfValuesSummary {
    pub fn new(points: &[Complex64], gamma: f64) -> Self {
        let max_distance_from_one = points.iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max);
        let min_real_part = points.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let real_part_floor = gamma * gamma / 2.0;
        Self {
            samples: points.len(),
            max_distance_from_one,
            min_real_part,
            real_part_floor,
            contained: points.iter().all(|z| {
                (z - 1.0).norm() <= 1.0 + FIELD_OF_VALUES_SLACK && z.re >= real_part_floor - FIELD_OF_VALUES_SLACK
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub factorization_samples: usize,
    pub field_of_values_samples: usize,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            factorization_samples: 50,
            field_of_values_samples: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub mesh: String,
    pub num_subdomains: usize,
    pub volume_dofs: usize,
    pub multi_trace_dofs: usize,
    pub impedance: Option<ImpedanceSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub gamma_slack: f64,
    pub field_of_values_slack: f64,
    pub factorization_rtol: f64,
    pub alpha_floor: f64,
    pub self_adjoint_rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gamma_slack: GAMMA_SLACK,
            field_of_values_slack: FIELD_OF_VALUES_SLACK,
            factorization_rtol: FACTORIZATION_RTOL,
            alpha_floor: ALPHA_FLOOR,
            self_adjoint_rtol: SELF_ADJOINT_RTOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportChecks {
    pub trace_bounds_ordered: bool,
    pub gamma_positive: bool,
    pub gamma_above_thm: bool,
    pub gamma_above_hpd: Option<bool>,
    pub projector_bound: bool,
    pub factorization: bool,
    pub field_of_values: bool,
}

impl ReportChecks {
    pub fn all(&self) -> bool {
        self.trace_bounds_ordered
            && self.gamma_positive
            && self.gamma_above_thm
            && self.gamma_above_hpd.unwrap_or(true)
            && self.projector_bound
            && self.factorization
            && self.field_of_values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<ReportMetadata>,
    pub t_minus: f64,
    pub t_plus: f64,
    pub t_star: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub norm_a: f64,
    pub gamma_exact: f64,
    pub gamma_bound_thm: f64,
    pub gamma_bound_hpd: Option<f64>,
    #[serde(rename = "norm_P")]
    pub norm_p: f64,
    pub projector_bound: f64,
    pub factorization_residual: f64,
    pub field_of_values: FieldOfValuesSummary,
    pub checks: ReportChecks,
    pub tolerances: Tolerances,
}

/// Every constant and estimate for one operator set, computed densely.
/// `seed` drives the random samples of the factorization and field-of-values checks.
pub fn compute_constants(
    ops: &OperatorSet,
    config: &ConstantsConfig,
    seed: u64,
) -> Result<ConstantsReport, ConstantsError> {
    check_dense(ops.spaces.multi_trace_len())?;
    let global = GlobalProblem::new(ops.topology.mesh(), &ops.medium)?;
    compute_constants_with(ops, &global, config, seed)
}

/// The undecomposed operator with its inf-sup constant, shared by every
/// impedance on one mesh and medium.
#[derive(Debug, Clone)]
pub struct GlobalProblem {
    pub operator: ComplexMatrix,
    pub gram: RealMatrix,
    pub alpha: f64,
}

impl GlobalProblem {
    pub fn new(mesh: &Mesh, medium: &MediumSpec) -> Result<Self, ConstantsError> {
        let (operator, gram) = assemble_global(mesh, medium);
        let alpha = compute_infsup_alpha(&operator, &gram)?;
        Ok(Self { operator, gram, alpha })
    }
}

/// [`compute_constants`] with the global problem supplied by the caller.
pub fn compute_constants_with(
    ops: &OperatorSet,
    global: &GlobalProblem,
    config: &ConstantsConfig,
    seed: u64,
) -> Result<ConstantsReport, ConstantsError> {
    check_dense(ops.spaces.multi_trace_len())?;
    let lifting = build_lifting(&ops.topology, &ops.forms)?;
    let (t_minus, t_plus) = compute_trace_bounds(&ops.impedance, &lifting)?;
    let theory = TheoryConstants {
        t_minus,
        t_plus,
        t_star: compute_skew_bound(&ops.impedance)?,
        alpha: global.alpha,
        norm_a: compute_continuity(&ops.forms)?,
        beta: compute_beta(ops)?,
    };
    let projector = CauchyProjector::new(ops, &lifting, global.operator.clone())?;
    let norm_p = projector.norm()?;
    let system = ops.system_to_dense()?;
    let gamma = compute_gamma(&system, &ops.impedance, &theory, norm_p)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factorization_residual = verify_factorization(&system, &projector, config.factorization_samples, &mut rng)?;
    let points = sample_field_of_values(&system, &ops.impedance, config.field_of_values_samples, &mut rng)?;
    let field_of_values = FieldOfValuesSummary::new(&points, gamma.exact);

    let checks = ReportChecks {
        trace_bounds_ordered: t_minus <= t_plus,
        gamma_positive: gamma.exact > 0.0,
        gamma_above_thm: gamma.exact >= gamma.bound_thm - GAMMA_SLACK,
        gamma_above_hpd: gamma.bound_hpd.map(|b| gamma.exact >= b - GAMMA_SLACK),
        projector_bound: norm_p <= theory.projector_bound() + GAMMA_SLACK,
        factorization: factorization_residual <= FACTORIZATION_RTOL,
        field_of_values: field_of_values.contained,
    };
    Ok(ConstantsReport {
        metadata: None,
        t_minus,
        t_plus,
        t_star: theory.t_star,
        alpha_h: theory.alpha,
        beta_h: theory.beta,
        norm_a: theory.norm_a,
        gamma_exact: gamma.exact,
        gamma_bound_thm: gamma.bound_thm,
        gamma_bound_hpd: gamma.bound_hpd,
        norm_p,
        projector_bound: theory.projector_bound(),
        factorization_residual,
        field_of_values,
        checks,
        tolerances: Tolerances::default(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{assemble_all_forms, MediumSpec};
    use crate::mesh::{structured_square, Mesh};
    use crate::partition::{build_partition, quadrants, strips, Partition};
    use crate::testing::{choices, lossy, random_vector, rng};
    use crate::topology::extract_topology;

    fn ops_for(mesh: &Mesh, partition: &Partition, medium: MediumSpec, spec: &ImpedanceSpec) -> OperatorSet {
        let topology = Arc::new(extract_topology(mesh, partition));
        OperatorSet::build(topology, medium, spec).unwrap()
    }

    fn quadrant_ops(spec: &ImpedanceSpec) -> OperatorSet {
        let mesh = structured_square(6, 0.5);
        let partition = quadrants(&mesh, [0.0, 0.0]).unwrap();
        ops_for(&mesh, &partition, lossy(), spec)
    }

    fn lifting_for(ops: &OperatorSet) -> HarmonicLifting {
        build_lifting(&ops.topology, &ops.forms).unwrap()
    }

    fn h1_norm(forms: &[SubdomainForms], u: &BrokenVector) -> f64 {
        u.blocks
            .iter()
            .zip(forms)
            .map(|(uj, f)| uj.dotc(&(f.gram.map(Complex64::from) * uj)).re)
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn lifting_without_interior_is_the_gram() {
        let mesh = structured_square(1, 0.5);
        let partition = Partition::new(&mesh, vec![0, 1]).unwrap();
        let topology = extract_topology(&mesh, &partition);
        let forms = assemble_all_forms(&topology, &lossy());
        let lifting = build_lifting(&topology, &forms).unwrap();
        for (j, s) in topology.subdomains().iter().enumerate() {
            assert!(s.interior_local.is_empty());
            let n = forms[j]
                .gram
                .select_rows(&s.boundary_local)
                .select_columns(&s.boundary_local);
            assert_eq!(lifting.schur_blocks()[j], n.map(Complex64::from));
        }
        let v = MultiTrace::<Primal>::from_vector(random_vector(&mut rng(1), lifting.spaces().multi_trace_len()));
        let u = lifting.lift(&v);
        for (j, s) in topology.subdomains().iter().enumerate() {
            for (k, &i) in s.boundary_local.iter().enumerate() {
                assert_eq!(u.blocks[j][i], lifting.spaces().block(&v, j)[k]);
            }
        }
    }

    #[test]
    fn lifting_is_a_right_inverse_of_the_trace() {
        let ops = quadrant_ops(&ImpedanceSpec::SecondOrder);
        let lifting = lifting_for(&ops);
        let mut r = rng(2);
        for _ in 0..100 {
            let v = MultiTrace::<Primal>::from_vector(random_vector(&mut r, ops.spaces.multi_trace_len()));
            assert_eq!(ops.spaces.trace(&lifting.lift(&v)), v);
        }
    }

    #[test]
    fn lifting_has_minimal_energy() {
        let ops = quadrant_ops(&ImpedanceSpec::SecondOrder);
        let lifting = lifting_for(&ops);
        let mut r = rng(3);
        for _ in 0..100 {
            let v = MultiTrace::<Primal>::from_vector(random_vector(&mut r, ops.spaces.multi_trace_len()));
            let lifted = lifting.lift(&v);
            let mut competitor = lifted.clone();
            for (j, s) in ops.topology.subdomains().iter().enumerate() {
                let bump = random_vector(&mut r, s.interior_local.len()) * Complex64::from(r.random_range(0.0..2.0));
                for (&i, b) in s.interior_local.iter().zip(bump.iter()) {
                    competitor.blocks[j][i] += b;
                }
            }
            assert_eq!(ops.spaces.trace(&competitor), v);
            let best = h1_norm(&ops.forms, &lifted);
            let other = h1_norm(&ops.forms, &competitor);
            assert!(other - best >= -1e-12 * other, "{other} < {best}");
            let lambda = lifting.norm_lambda(&v);
            assert!((lambda - best).abs() <= 1e-11 * best);
        }
    }

    #[test]
    fn impedance_equal_to_lambda_gives_unit_trace_bounds() {
        let ops = quadrant_ops(&ImpedanceSpec::SecondOrder);
        let lifting = lifting_for(&ops);
        let t = lifting.as_impedance().unwrap();
        let (lo, hi) = compute_trace_bounds(&t, &lifting).unwrap();
        assert!((lo - 1.0).abs() <= 1e-9 && (hi - 1.0).abs() <= 1e-9, "{lo} {hi}");
        let scaled: Vec<_> = lifting
            .schur_blocks()
            .iter()
            .map(|b| b * Complex64::from(4.0))
            .collect();
        let t4 = ImpedanceOperator::from_blocks(ops.spaces.clone(), scaled).unwrap();
        let (lo, hi) = compute_trace_bounds(&t4, &lifting).unwrap();
        assert!((lo - 2.0).abs() <= 1e-9 && (hi - 2.0).abs() <= 1e-9, "{lo} {hi}");
    }

    /// Extreme Rayleigh quotients of `Ts_j` against `Λ_j` by power iteration on
    /// `Λ⁻¹Ts` and `Ts⁻¹Λ`.
    fn rayleigh_extremes(ts: &ComplexMatrix, lambda: &ComplexMatrix, r: &mut ChaCha8Rng) -> (f64, f64) {
        let quotient = |x: &ComplexVector| (x.dotc(&(ts * x)).re / x.dotc(&(lambda * x)).re).sqrt();
        let lu_l = Lu::new(lambda.clone()).unwrap();
        let lu_t = Lu::new(ts.clone()).unwrap();
        let mut up = random_vector(r, ts.nrows());
        let mut down = up.clone();
        for _ in 0..3000 {
            up = lu_l.solve(&(ts * &up)).unwrap();
            up /= Complex64::from(up.norm());
            down = lu_t.solve(&(lambda * &down)).unwrap();
            down /= Complex64::from(down.norm());
        }
        (quotient(&down), quotient(&up))
    }

    #[test]
    fn trace_bounds_match_rayleigh_iteration() {
        let mesh = structured_square(10, 0.5);
        let partition = build_partition(&mesh, 4, 0).unwrap();
        let ops = ops_for(&mesh, &partition, lossy(), &ImpedanceSpec::SecondOrder);
        let lifting = lifting_for(&ops);
        let (lo, hi) = compute_trace_bounds(&ops.impedance, &lifting).unwrap();
        assert!(0.0 < lo && lo <= hi);
        let mut r = rng(4);
        let mut olo = f64::INFINITY;
        let mut ohi: f64 = 0.0;
        for (ts, l) in ops.impedance.hermitian_blocks().iter().zip(lifting.schur_blocks()) {
            let (a, b) = rayleigh_extremes(ts, l, &mut r);
            olo = olo.min(a);
            ohi = ohi.max(b);
        }
        assert!((olo - lo).abs() <= 0.02 * lo, "{olo} vs {lo}");
        assert!((ohi - hi).abs() <= 0.02 * hi, "{ohi} vs {hi}");
        for _ in 0..100 {
            let v = MultiTrace::<Primal>::from_vector(random_vector(&mut r, ops.spaces.multi_trace_len()));
            let ratio = ops.impedance.norm_ts(&v) / lifting.norm_lambda(&v);
            assert!(ratio >= lo * (1.0 - 1e-12) && ratio <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn skew_bound_closed_forms() {
        let ops = quadrant_ops(&ImpedanceSpec::SecondOrder);
        assert_eq!(compute_skew_bound(&ops.impedance).unwrap(), 0.0);
        for theta in [0.3f64, -0.7] {
            let ops = quadrant_ops(&ImpedanceSpec::RotatedSecondOrder { theta });
            let t = compute_skew_bound(&ops.impedance).unwrap();
            assert!((t - theta.tan().abs()).abs() <= 1e-10, "{t}");
        }
        let z = Complex64::new(2.0, -3.0);
        let ops = quadrant_ops(&ImpedanceSpec::ScaledMass { z });
        let t = compute_skew_bound(&ops.impedance).unwrap();
        assert!((t - 1.5).abs() <= 1e-10, "{t}");
    }

    #[test]
    fn dissipative_medium_has_unit_inf_sup() {
        // κ = 2i gives A = K + 4M, which is the H¹ Gram itself
        let medium = MediumSpec::new(Complex64::new(0.0, 2.0), 1.0).unwrap();
        let mesh = structured_square(6, 0.5);
        let partition = quadrants(&mesh, [0.0, 0.0]).unwrap();
        let ops = ops_for(&mesh, &partition, medium, &ImpedanceSpec::SecondOrder);
        let (a, n) = assemble_global(&mesh, &medium);
        let alpha = compute_infsup_alpha(&a, &n).unwrap();
        let norm_a = compute_continuity(&ops.forms).unwrap();
        assert!((alpha - 1.0).abs() <= 1e-10 && (norm_a - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn continuity_dominates_inf_sup_and_beta_is_positive() {
        let mesh = structured_square(6, 0.5);
        let partition = quadrants(&mesh, [0.0, 0.0]).unwrap();
        let medium = lossy();
        let (a, n) = assemble_global(&mesh, &medium);
        let alpha = compute_infsup_alpha(&a, &n).unwrap();
        for spec in choices(&medium) {
            let ops = ops_for(&mesh, &partition, medium, &spec);
            assert!(compute_continuity(&ops.forms).unwrap() >= alpha);
            assert!(compute_beta(&ops).unwrap() > 0.0);
        }
    }

    #[test]
    fn singular_global_operator_is_refused() {
        let a = ComplexMatrix::zeros(3, 3);
        let n = RealMatrix::identity(3, 3);
        assert!(matches!(compute_infsup_alpha(&a, &n), Err(ConstantsError::InfSup(_))));
    }

    #[test]
    fn projector_fixes_cauchy_data_and_kills_its_kernel() {
        let medium = lossy();
        for spec in choices(&medium) {
            let ops = quadrant_ops(&spec);
            let lifting = lifting_for(&ops);
            let p = CauchyProjector::assemble(&ops, &lifting).unwrap();
            let n = ops.spaces.multi_trace_len();
            let mut r = rng(5);
            for _ in 0..10 {
                let q = MultiTrace::<Dual>::from_vector(random_vector(&mut r, n));
                let (v, pn) = ops.scattering.cauchy_member(&q).unwrap();
                let (ud, un) = p.apply(&v, &pn).unwrap();
                let scale = v.coefficient_norm() + pn.coefficient_norm();
                assert!((&ud - &v).coefficient_norm() <= 1e-9 * scale);
                assert!((&un - &pn).coefficient_norm() <= 1e-9 * scale);

                let w = crate::trace::SkeletonVector(random_vector(&mut r, ops.spaces.skeleton_len()));
                let single = ops.spaces.restrict(&w);
                let polar = ops
                    .impedance
                    .project_onto_polar(&MultiTrace::from_vector(random_vector(&mut r, n)))
                    .unwrap();
                let (zd, zn) = p.apply(&single, &polar).unwrap();
                let scale = single.coefficient_norm() + polar.coefficient_norm();
                assert!(zd.coefficient_norm() <= 1e-9 * scale && zn.coefficient_norm() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn projector_is_idempotent_onto_cauchy_data() {
        let ops = quadrant_ops(&ImpedanceSpec::RotatedSecondOrder { theta: 0.3 });
        let lifting = lifting_for(&ops);
        let p = CauchyProjector::assemble(&ops, &lifting).unwrap();
        let n = ops.spaces.multi_trace_len();
        let mut r = rng(6);
        for _ in 0..20 {
            let v = MultiTrace::<Primal>::from_vector(random_vector(&mut r, n));
            let q = MultiTrace::<Dual>::from_vector(random_vector(&mut r, n));
            let check = p.check(&v, &q).unwrap();
            assert!(check.holds(), "{check:?}");
            let (ud, un) = p.apply(&v, &q).unwrap();
            let (ud2, un2) = p.apply(&ud, &un).unwrap();
            let scale = ud.coefficient_norm() + un.coefficient_norm();
            assert!((&ud2 - &ud).coefficient_norm() + (&un2 - &un).coefficient_norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn projector_norm_respects_its_bound() {
        let mesh = structured_square(6, 0.5);
        let medium = lossy();
        let single = Partition::new(&mesh, vec![0; mesh.num_triangles()]).unwrap();
        let four = quadrants(&mesh, [0.0, 0.0]).unwrap();
        for partition in [&single, &four] {
            for spec in choices(&medium).into_iter().skip(1) {
                let ops = ops_for(&mesh, partition, medium, &spec);
                let lifting = lifting_for(&ops);
                let (t_minus, t_plus) = compute_trace_bounds(&ops.impedance, &lifting).unwrap();
                let (a, n) = assemble_global(&mesh, &medium);
                let theory = TheoryConstants {
                    t_minus,
                    t_plus,
                    t_star: compute_skew_bound(&ops.impedance).unwrap(),
                    alpha: compute_infsup_alpha(&a, &n).unwrap(),
                    norm_a: compute_continuity(&ops.forms).unwrap(),
                    beta: compute_beta(&ops).unwrap(),
                };
                let p = CauchyProjector::new(&ops, &lifting, a).unwrap();
                let norm = p.norm().unwrap();
                assert!(norm.is_finite() && norm >= 1.0 - 1e-9);
                assert!(
                    norm <= theory.projector_bound() + 1e-9,
                    "{norm} > {}",
                    theory.projector_bound()
                );
            }
        }
    }

    #[test]
    fn factorization_of_the_inverse() {
        for spec in [
            ImpedanceSpec::SecondOrder,
            ImpedanceSpec::RotatedSecondOrder { theta: 0.3 },
        ] {
            let ops = quadrant_ops(&spec);
            let lifting = lifting_for(&ops);
            let p = CauchyProjector::assemble(&ops, &lifting).unwrap();
            let zero = factorized_inverse(&p, &ComplexVector::zeros(ops.spaces.multi_trace_len())).unwrap();
            assert_eq!(zero.norm(), 0.0);
            let system = ops.system_to_dense().unwrap();
            let residual = verify_factorization(&system, &p, 50, &mut rng(7)).unwrap();
            assert!(residual <= FACTORIZATION_RTOL, "{residual}");
        }
    }

    #[test]
    fn report_invariants_hold_for_every_choice() {
        let mesh = structured_square(8, 0.5);
        let partition = build_partition(&mesh, 4, 1).unwrap();
        let medium = lossy();
        for spec in choices(&medium) {
            let ops = ops_for(&mesh, &partition, medium, &spec);
            let report = compute_constants(&ops, &ConstantsConfig::default(), 0).unwrap();
            assert!(report.checks.all(), "{spec:?}: {report:?}");
            assert_eq!(
                report.gamma_bound_hpd.is_some(),
                matches!(spec, ImpedanceSpec::SecondOrder)
            );
            assert_eq!(report.field_of_values.samples, 500);
            let json = serde_json::to_string(&report).unwrap();
            assert!(json.contains("\"norm_P\""));
            let back: ConstantsReport = serde_json::from_str(&json).unwrap();
            assert_eq!(back, report);
        }
    }

    #[test]
    fn polar_inputs_stay_in_the_disk() {
        let ops = quadrant_ops(&ImpedanceSpec::RotatedSecondOrder { theta: 0.3 });
        let system = ops.system_to_dense().unwrap();
        let mut r = rng(8);
        for _ in 0..20 {
            let q = ops
                .impedance
                .project_onto_polar(&MultiTrace::from_vector(random_vector(
                    &mut r,
                    ops.spaces.multi_trace_len(),
                )))
                .unwrap();
            let z = field_of_values_point(&system, &ops.impedance, q.as_vector()).unwrap();
            assert!((z - 1.0).norm() <= 1.0 + FIELD_OF_VALUES_SLACK);
        }
    }

    #[test]
    fn zero_sample_is_rejected() {
        let ops = quadrant_ops(&ImpedanceSpec::SecondOrder);
        let system = ops.system_to_dense().unwrap();
        let zero = ComplexVector::zeros(ops.spaces.multi_trace_len());
        assert_eq!(
            field_of_values_point(&system, &ops.impedance, &zero),
            Err(ConstantsError::ZeroSample)
        );
    }

    #[test]
    fn large_skeletons_are_refused() {
        let mesh = structured_square(40, 0.5);
        let partition = strips(&mesh, 20).unwrap();
        let ops = ops_for(&mesh, &partition, lossy(), &ImpedanceSpec::SecondOrder);
        assert!(ops.spaces.multi_trace_len() > crate::exchange::MAX_DENSE_TRACE_DOFS);
        assert!(matches!(
            compute_constants(&ops, &ConstantsConfig::default(), 0),
            Err(ConstantsError::Dense(DenseError::TooLarge { .. }))
        ));
    }
}
