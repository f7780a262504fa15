//! The skeleton equation `(Id + ΠS)q = g`: right-hand side, Richardson and
//! GMRES solvers, volume reconstruction and the monolithic reference solve.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{dense_map, DenseError, ExchangeOperator};
use crate::fem::{assemble_all_forms, assemble_global, MediumSpec, SubdomainForms};
use crate::impedance::{build_impedance, ImpedanceError, ImpedanceOperator, ImpedanceSpec};
use crate::linalg::{Factorization, LinalgError, Lu};
use crate::scattering::{RobinFactorization, ScatteringOperator};
use crate::topology::SubdomainTopology;
use crate::trace::{BrokenVector, Dual, MultiTrace, TraceSpaces};
use crate::{ComplexMatrix, ComplexVector, RealMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Impedance(#[from] ImpedanceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("relaxation must lie in (0, 1], got {0}")]
    Relaxation(f64),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("restart length must be positive")]
    Restart,
    #[error("load has {found} blocks, expected {expected}")]
    LoadShape { expected: usize, found: usize },
}

/// Everything needed to apply `Π`, `S` and the Robin solves on one partition.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub topology: Arc<SubdomainTopology>,
    pub medium: MediumSpec,
    pub forms: Arc<Vec<SubdomainForms>>,
    pub spaces: TraceSpaces,
    pub impedance: Arc<ImpedanceOperator>,
    pub robin: Arc<RobinFactorization>,
    pub exchange: ExchangeOperator,
    pub scattering: ScatteringOperator,
}

impl OperatorSet {
    pub fn build(
        topology: Arc<SubdomainTopology>,
        medium: MediumSpec,
        spec: &ImpedanceSpec,
    ) -> Result<Self, SolverError> {
        let forms = Arc::new(assemble_all_forms(&topology, &medium));
        let impedance = build_impedance(spec, &topology, &forms, &medium)?;
        Self::with_impedance(topology, medium, forms, impedance)
    }

    pub fn with_impedance(
        topology: Arc<SubdomainTopology>,
        medium: MediumSpec,
        forms: Arc<Vec<SubdomainForms>>,
        impedance: ImpedanceOperator,
    ) -> Result<Self, SolverError> {
        let impedance = Arc::new(impedance);
        let operators: Arc<Vec<ComplexMatrix>> = Arc::new(forms.iter().map(|f| f.operator.clone()).collect());
        let robin = Arc::new(RobinFactorization::new(&operators, &impedance)?);
        Ok(Self {
            spaces: impedance.spaces().clone(),
            exchange: ExchangeOperator::new(impedance.clone()),
            scattering: ScatteringOperator::new(impedance.clone(), robin.clone(), operators),
            topology,
            medium,
            forms,
            impedance,
            robin,
        })
    }

    /// `(Id + ΠS) q`.
    pub fn apply_system_raw(&self, q: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        Ok(q + self.exchange.apply_raw(&self.scattering.apply_raw(q))?)
    }

    pub fn apply_system(&self, q: &MultiTrace<Dual>) -> Result<MultiTrace<Dual>, LinalgError> {
        self.apply_system_raw(q.as_vector()).map(MultiTrace::from_vector)
    }

    pub fn system_to_dense(&self) -> Result<ComplexMatrix, DenseError> {
        dense_map(self.spaces.multi_trace_len(), |e| self.apply_system_raw(e))
    }

    fn check_load(&self, f: &BrokenVector) -> Result<(), SolverError> {
        if f.blocks.len() != self.spaces.num_subdomains() {
            return Err(SolverError::LoadShape {
                expected: self.spaces.num_subdomains(),
                found: f.blocks.len(),
            });
        }
        Ok(())
    }

    /// `g = −2iΠTsB(A − iBᴴTB)⁻¹f`.
    pub fn compute_rhs(&self, f: &BrokenVector) -> Result<MultiTrace<Dual>, SolverError> {
        self.check_load(f)?;
        let u = self.robin.solve(f)?;
        let v = self.spaces.trace(&u);
        let ts = self.impedance.apply_hermitian_raw(v.as_vector()) * Complex64::new(0.0, -2.0);
        Ok(MultiTrace::from_vector(self.exchange.apply_raw(&ts)?))
    }

    /// `u = (A − iBᴴTB)⁻¹(Bᴴq + f)` and `p = q + iTBu`.
    pub fn reconstruct(
        &self,
        q: &MultiTrace<Dual>,
        f: &BrokenVector,
    ) -> Result<(BrokenVector, MultiTrace<Dual>), SolverError> {
        self.check_load(f)?;
        let mut rhs = self.spaces.trace_adjoint(q);
        for (r, fj) in rhs.blocks.iter_mut().zip(&f.blocks) {
            *r += fj;
        }
        let u = self.robin.solve(&rhs)?;
        let v = self.spaces.trace(&u);
        let p = q + &(self.impedance.apply(&v) * Complex64::i());
        Ok((u, p))
    }

    /// `‖Au − Bᴴp − f‖ / (‖f‖ + ‖Bᴴp‖)` over all blocks.
    pub fn volume_residual(&self, u: &BrokenVector, p: &MultiTrace<Dual>, f: &BrokenVector) -> f64 {
        let bp = self.spaces.trace_adjoint(p);
        let mut num = 0.0;
        for j in 0..u.blocks.len() {
            let r = &self.forms[j].operator * &u.blocks[j] - &bp.blocks[j] - &f.blocks[j];
            num += r.norm_squared();
        }
        let scale = f.norm() + bp.norm();
        if scale == 0.0 {
            num.sqrt()
        } else {
            num.sqrt() / scale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Richardson,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub method: Method,
    pub relax: f64,
    pub tol: f64,
    pub maxit: usize,
    pub restart: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: Method::Richardson,
            relax: std::f64::consts::FRAC_1_SQRT_2,
            tol: 1e-6,
            maxit: 20_000,
            restart: 200,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.relax > 0.0 && self.relax <= 1.0) {
            return Err(SolverError::Relaxation(self.relax));
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::Tolerance(self.tol));
        }
        if self.restart == 0 {
            return Err(SolverError::Restart);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    /// `(n, res(n))` with `res(n) = ‖g − (Id+ΠS)q⁽ⁿ⁾‖_Ts⁻¹ / ‖g‖_Ts⁻¹`.
    pub residuals: Vec<(usize, f64)>,
    pub converged: bool,
    pub iterations: usize,
    /// GMRES only: a restart cycle made no progress.
    pub stagnated: bool,
}

impl ConvergenceHistory {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().map_or(0.0, |r| r.1)
    }

    fn trivial() -> Self {
        Self {
            residuals: vec![(0, 0.0)],
            converged: true,
            iterations: 0,
            stagnated: false,
        }
    }
}

/// Dispatches on [`SolveConfig::method`].
pub fn solve(
    ops: &OperatorSet,
    g: &MultiTrace<Dual>,
    config: &SolveConfig,
) -> Result<(MultiTrace<Dual>, ConvergenceHistory), SolverError> {
    match config.method {
        Method::Richardson => richardson(ops, g, config, |_, _| {}),
        Method::Gmres => gmres(ops, g, config),
    }
}

/// `q⁽ⁿ⁺¹⁾ = q⁽ⁿ⁾ + α(g − (Id+ΠS)q⁽ⁿ⁾)` from `q⁽⁰⁾ = 0`; `observe(n, q⁽ⁿ⁾)` sees every iterate.
pub fn richardson(
    ops: &OperatorSet,
    g: &MultiTrace<Dual>,
    config: &SolveConfig,
    mut observe: impl FnMut(usize, &MultiTrace<Dual>),
) -> Result<(MultiTrace<Dual>, ConvergenceHistory), SolverError> {
    config.validate()?;
    let mut q = MultiTrace::<Dual>::zeros(g.len());
    let g_norm = ops.impedance.norm_ts_dual(g);
    if g_norm == 0.0 {
        observe(0, &q);
        return Ok((q, ConvergenceHistory::trivial()));
    }
    let alpha = Complex64::from(config.relax);
    let mut history = ConvergenceHistory {
        residuals: Vec::new(),
        converged: false,
        iterations: 0,
        stagnated: false,
    };
    for n in 0..=config.maxit {
        let r = g.as_vector() - ops.apply_system_raw(q.as_vector())?;
        let res = ops.impedance.norm_ts_dual_raw(&r) / g_norm;
        history.residuals.push((n, res));
        history.iterations = n;
        observe(n, &q);
        if res < config.tol {
            history.converged = true;
            break;
        }
        if n == config.maxit {
            break;
        }
        *q.as_vector_mut() += r * alpha;
    }
    Ok((q, history))
}

/// Restarted GMRES in the `Ts⁻¹` inner product.
///
/// Runs on whitened coordinates `y = L⁻¹q` (`Ts = LLᴴ`), where the Euclidean
/// inner product is the `Ts⁻¹` one, so Arnoldi uses plain modified Gram–Schmidt.
pub fn gmres(
    ops: &OperatorSet,
    g: &MultiTrace<Dual>,
    config: &SolveConfig,
) -> Result<(MultiTrace<Dual>, ConvergenceHistory), SolverError> {
    config.validate()?;
    let t = &ops.impedance;
    let n = g.len();
    let b = t.whiten_dual(g.as_vector());
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok((MultiTrace::zeros(n), ConvergenceHistory::trivial()));
    }
    let op = |y: &ComplexVector| -> Result<ComplexVector, LinalgError> {
        Ok(t.whiten_dual(&ops.apply_system_raw(&t.unwhiten_dual(y))?))
    };

    let mut y = ComplexVector::zeros(n);
    let mut history = ConvergenceHistory {
        residuals: vec![(0, 1.0)],
        converged: false,
        iterations: 0,
        stagnated: false,
    };
    let mut total = 0usize;
    loop {
        let r = &b - op(&y)?;
        let beta = r.norm();
        if beta / b_norm < config.tol {
            history.converged = true;
            break;
        }
        if total >= config.maxit {
            break;
        }
        let m = config.restart.min(config.maxit - total).min(n);
        let mut basis = vec![r / Complex64::from(beta)];
        let mut h = ComplexMatrix::zeros(m + 1, m);
        let mut cs = vec![0.0; m];
        let mut sn = vec![Complex64::from(0.0); m];
        let mut rhs = ComplexVector::zeros(m + 1);
        rhs[0] = Complex64::from(beta);
        let mut k_used = 0;
        let start_res = beta / b_norm;
        for k in 0..m {
            let mut w = op(&basis[k])?;
            for (i, v) in basis.iter().enumerate() {
                let hik = v.dotc(&w);
                h[(i, k)] = hik;
                w -= v * hik;
            }
            let w_norm = w.norm();
            h[(k + 1, k)] = Complex64::from(w_norm);
            for i in 0..k {
                let (a, c) = (h[(i, k)], h[(i + 1, k)]);
                h[(i, k)] = a * cs[i] + sn[i] * c;
                h[(i + 1, k)] = -sn[i].conj() * a + c * cs[i];
            }
            let (a, c) = (h[(k, k)], h[(k + 1, k)]);
            let rho = (a.norm_sqr() + c.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[k] = 0.0;
                sn[k] = Complex64::from(1.0);
            } else {
                cs[k] = a.norm() / rho;
                sn[k] = a / a.norm() * c.conj() / rho;
            }
            h[(k, k)] = a * cs[k] + sn[k] * c;
            h[(k + 1, k)] = Complex64::from(0.0);
            rhs[k + 1] = -sn[k].conj() * rhs[k];
            rhs[k] *= cs[k];

            total += 1;
            k_used = k + 1;
            let res = rhs[k + 1].norm() / b_norm;
            history.residuals.push((total, res));
            if res < config.tol || w_norm <= 1e-14 * beta {
                break;
            }
            basis.push(w / Complex64::from(w_norm));
        }
        // back substitution on the triangular k_used × k_used system
        let mut z = ComplexVector::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut s = rhs[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * z[j];
            }
            z[i] = s / h[(i, i)];
        }
        for (i, zi) in z.iter().enumerate() {
            y += &basis[i] * *zi;
        }
        let end_res = history.final_residual();
        if end_res >= start_res * (1.0 - 1e-12) {
            history.stagnated = true;
            break;
        }
    }
    history.iterations = total;
    // report the true residual of the returned iterate
    let q = t.unwhiten_dual(&y);
    let true_res = t.norm_ts_dual_raw(&(g.as_vector() - ops.apply_system_raw(&q)?)) / t.norm_ts_dual(g);
    if let Some(last) = history.residuals.last_mut() {
        last.1 = true_res;
    }
    history.converged = true_res < config.tol;
    Ok((MultiTrace::from_vector(q), history))
}

/// Restriction of a conforming vector to each subdomain (`u_j = u|Ω_j`).
pub fn scatter_conforming(topology: &SubdomainTopology, u: &ComplexVector) -> BrokenVector {
    BrokenVector {
        blocks: topology
            .subdomains()
            .iter()
            .map(|s| ComplexVector::from_iterator(s.num_dofs(), s.vertices.iter().map(|&v| u[v])))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlueReport {
    /// Conforming vector indexed by mesh vertex.
    pub values: ComplexVector,
    /// Largest difference between two subdomain values at a shared vertex.
    pub max_jump: f64,
}

/// Averages duplicated interface values into one conforming vector.
pub fn glue(topology: &SubdomainTopology, u: &BrokenVector) -> GlueReport {
    let nv = topology.mesh().num_vertices();
    let mut sum = ComplexVector::zeros(nv);
    let mut count = vec![0usize; nv];
    let mut lo: Vec<Option<Complex64>> = vec![None; nv];
    let mut max_jump: f64 = 0.0;
    for (s, block) in topology.subdomains().iter().zip(&u.blocks) {
        for (i, &v) in s.vertices.iter().enumerate() {
            sum[v] += block[i];
            count[v] += 1;
            match lo[v] {
                None => lo[v] = Some(block[i]),
                Some(first) => max_jump = max_jump.max((first - block[i]).norm()),
            }
        }
    }
    for (x, &c) in sum.iter_mut().zip(&count) {
        if c > 0 {
            *x /= c as f64;
        }
    }
    GlueReport { values: sum, max_jump }
}

/// Conforming operator, H¹ Gram, and the direct solution of `A u = f`.
#[derive(Debug, Clone)]
pub struct MonolithicSolution {
    pub operator: ComplexMatrix,
    pub gram: RealMatrix,
    pub solution: ComplexVector,
}

pub fn monolithic_solve(
    topology: &SubdomainTopology,
    medium: &MediumSpec,
    load: &ComplexVector,
) -> Result<MonolithicSolution, SolverError> {
    let (operator, gram) = assemble_global(topology.mesh(), medium);
    let solution = Lu::new(operator.clone())?.solve(load)?;
    Ok(MonolithicSolution {
        operator,
        gram,
        solution,
    })
}

/// `‖u − v‖_N / ‖v‖_N` in the H¹ Gram `N`.
pub fn relative_h1_error(gram: &RealMatrix, u: &ComplexVector, reference: &ComplexVector) -> f64 {
    let n = gram.map(Complex64::from);
    let e = u - reference;
    let num = e.dotc(&(&n * &e)).re.max(0.0).sqrt();
    let den = reference.dotc(&(&n * reference)).re.max(0.0).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
