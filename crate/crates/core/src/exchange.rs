//! The exchange operator `Π = (T + Tᴴ)R(RᴴTᴴR)⁻¹Rᴴ − Id`, its local
//! counterpart `Π_loc`, and the transmission-condition characterization.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impedance::ImpedanceOperator;
use crate::linalg::{densify, max_abs, LinalgError, Lu};
use crate::trace::{Dual, MultiTrace, Primal, TraceSpaces};
use crate::{ComplexMatrix, ComplexVector};

/// Largest multi-trace dimension for which operators are densified.
pub const MAX_DENSE_TRACE_DOFS: usize = 1500;

/// Relative tolerance of the characterization predicates.
pub const CHARACTERIZATION_RTOL: f64 = 1e-9;

/// Relative tolerance of the locality criteria.
pub const LOCALITY_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("{dofs} multi-trace dofs exceed the dense limit of {limit}")]
    TooLarge { dofs: usize, limit: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub(crate) fn check_dense(n: usize) -> Result<(), DenseError> {
    if n > MAX_DENSE_TRACE_DOFS {
        Err(DenseError::TooLarge {
            dofs: n,
            limit: MAX_DENSE_TRACE_DOFS,
        })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExchangeOperator {
    impedance: Arc<ImpedanceOperator>,
}

impl ExchangeOperator {
    pub fn new(impedance: Arc<ImpedanceOperator>) -> Self {
        Self { impedance }
    }

    pub fn impedance(&self) -> &ImpedanceOperator {
        &self.impedance
    }

    fn combine(&self, p: &ComplexVector, w: &ComplexVector) -> ComplexVector {
        let sp = self.impedance.spaces();
        self.impedance.apply_hermitian_raw(&sp.restrict_raw(w)) * Complex64::from(2.0) - p
    }

    pub fn apply_raw(&self, p: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        let sp = self.impedance.spaces();
        let w = self.impedance.solve_skeleton_adjoint(&sp.restrict_adjoint_raw(p))?;
        Ok(self.combine(p, &w))
    }

    /// `Π⁻¹ = (T + Tᴴ)R(RᴴTR)⁻¹Rᴴ − Id`.
    pub fn apply_inverse_raw(&self, p: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        let sp = self.impedance.spaces();
        let w = self.impedance.solve_skeleton(&sp.restrict_adjoint_raw(p))?;
        Ok(self.combine(p, &w))
    }

    pub fn apply(&self, p: &MultiTrace<Dual>) -> Result<MultiTrace<Dual>, LinalgError> {
        self.apply_raw(p.as_vector()).map(MultiTrace::from_vector)
    }

    pub fn apply_inverse(&self, p: &MultiTrace<Dual>) -> Result<MultiTrace<Dual>, LinalgError> {
        self.apply_inverse_raw(p.as_vector()).map(MultiTrace::from_vector)
    }

    pub fn to_dense(&self) -> Result<ComplexMatrix, DenseError> {
        dense_map(self.impedance.spaces().multi_trace_len(), |e| self.apply_raw(e))
    }

    pub fn inverse_to_dense(&self) -> Result<ComplexMatrix, DenseError> {
        dense_map(self.impedance.spaces().multi_trace_len(), |e| self.apply_inverse_raw(e))
    }

    /// Whether `−p + iTu = Π(p + iTᴴu)`, i.e. `(u, p) ∈ X_h(Σ) × X_h(Σ)°`.
    pub fn check_transmission(
        &self,
        u: &MultiTrace<Primal>,
        p: &MultiTrace<Dual>,
    ) -> Result<Characterization, LinalgError> {
        let t = &self.impedance;
        let i = Complex64::i();
        let lhs = t.apply_raw(u.as_vector()) * i - p.as_vector();
        let rhs = self.apply_raw(&(p.as_vector() + t.apply_adjoint_raw(u.as_vector()) * i))?;
        let residual = t.norm_ts_dual_raw(&(lhs - rhs));
        let scale = t.norm_ts_dual(p) + t.norm_ts(u);
        Ok(Characterization::new(residual, scale))
    }
}

/// Densifies a fallible linear map on multi-traces, refusing oversized problems.
pub(crate) fn dense_map(
    n: usize,
    apply: impl Fn(&ComplexVector) -> Result<ComplexVector, LinalgError>,
) -> Result<ComplexMatrix, DenseError> {
    check_dense(n)?;
    let mut out = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = ComplexVector::zeros(n);
        e[k] = Complex64::from(1.0);
        out.set_column(k, &apply(&e)?);
    }
    Ok(out)
}

/// Outcome of a characterization predicate: residual against its natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub holds: bool,
    pub residual: f64,
    pub scale: f64,
}

impl Characterization {
    pub fn new(residual: f64, scale: f64) -> Self {
        Self {
            holds: residual <= CHARACTERIZATION_RTOL * scale,
            residual,
            scale,
        }
    }
}

/// `Π_loc p`: at each dof `x` of `Γ_j`, `−p_j(x) + (2/m(x))·Σ_{k: x∈Γk} p_k(x)`.
pub fn apply_local_swap(spaces: &TraceSpaces, p: &MultiTrace<Dual>) -> MultiTrace<Dual> {
    let mut sums = spaces.restrict_adjoint_raw(p.as_vector());
    for (s, &m) in sums.iter_mut().zip(spaces.multiplicity()) {
        *s *= 2.0 / m as f64;
    }
    MultiTrace::from_vector(spaces.restrict_raw(&sums) - p.as_vector())
}

/// Dense `Π_loc = 2R·diag(1/m)·Rᴴ − Id`.
pub fn local_swap_matrix(spaces: &TraceSpaces) -> ComplexMatrix {
    densify(spaces.multi_trace_len(), |e| {
        apply_local_swap(spaces, &MultiTrace::from_vector(e.clone())).into_vector()
    })
}

/// Dense `Π` for an arbitrary (not necessarily block-diagonal) impedance matrix.
pub fn exchange_matrix(spaces: &TraceSpaces, t: &ComplexMatrix) -> Result<ComplexMatrix, DenseError> {
    let n = spaces.multi_trace_len();
    check_dense(n)?;
    let r = spaces.restriction_matrix().map(Complex64::from);
    let lu = Lu::new(r.adjoint() * t.adjoint() * &r)?;
    let inner = lu.solve_matrix(&r.adjoint())?;
    Ok((t + t.adjoint()) * &r * inner - ComplexMatrix::identity(n, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    /// `Π_loc TᴴR = TR`.
    pub trace_identity: bool,
    /// `Π_loc T = TᴴΠ_locᴴ`.
    pub commutation: bool,
    /// `‖Π − Π_loc‖_max`.
    pub exchange_deviation: f64,
}

/// Tests whether the exchange operator of `t` reduces to the local swap.
pub fn check_locality_criterion(spaces: &TraceSpaces, t: &ComplexMatrix) -> Result<LocalityReport, DenseError> {
    let pl = local_swap_matrix(spaces);
    let r = spaces.restriction_matrix().map(Complex64::from);
    let tr = t * &r;
    let trace_gap = max_abs(&(&pl * t.adjoint() * &r - &tr));
    let comm_gap = max_abs(&(&pl * t - t.adjoint() * pl.adjoint()));
    let pi = exchange_matrix(spaces, t)?;
    Ok(LocalityReport {
        trace_identity: trace_gap <= LOCALITY_RTOL * max_abs(&tr),
        commutation: comm_gap <= LOCALITY_RTOL * max_abs(t),
        exchange_deviation: max_abs(&(pi - pl)),
    })
}

/// Text interchange: one `row col re im` line per nonzero entry, 0-based.
pub fn write_matrix<W: std::io::Write>(m: &ComplexMatrix, mut out: W) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if z.re != 0.0 || z.im != 0.0 {
                writeln!(out, "{i} {j} {:.16e} {:.16e}", z.re, z.im)?;
            }
        }
    }
    Ok(())
}
