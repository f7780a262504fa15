//! Robin subproblems `A_j − iB_jᴴT_jB_j` and the scattering operator
//! `S = Id + 2iTsB(A − iBᴴTB)⁻¹Bᴴ`, which is block-diagonal by subdomain.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exchange::{dense_map, Characterization, DenseError};
use crate::impedance::ImpedanceOperator;
use crate::linalg::{Factorization, LinalgError, Lu};
use crate::trace::{BrokenVector, Dual, MultiTrace, Primal, TraceSpaces};
use crate::{ComplexMatrix, ComplexVector};

/// Per-subdomain LU factors of `A_j − iB_jᴴT_jB_j`, plus the boundary
/// responses `G_j = B_j(A_j − iB_jᴴT_jB_j)⁻¹B_jᴴ`.
#[derive(Debug, Clone)]
pub struct RobinFactorization {
    factors: Vec<Lu<Complex64>>,
    responses: Vec<ComplexMatrix>,
}

/// `A_j − iB_jᴴT_jB_j` as a dense matrix on the volume dofs of `Ω_j`.
pub fn robin_matrix(spaces: &TraceSpaces, j: usize, operator: &ComplexMatrix, t: &ComplexMatrix) -> ComplexMatrix {
    let mut m = operator.clone();
    let local = spaces.boundary_local(j);
    for (a, &ia) in local.iter().enumerate() {
        for (b, &ib) in local.iter().enumerate() {
            m[(ia, ib)] -= Complex64::i() * t[(a, b)];
        }
    }
    m
}

impl RobinFactorization {
    pub fn new(operators: &[ComplexMatrix], impedance: &ImpedanceOperator) -> Result<Self, LinalgError> {
        let sp = impedance.spaces();
        let built: Result<Vec<_>, LinalgError> = operators
            .par_iter()
            .enumerate()
            .map(|(j, a)| {
                let lu = Lu::new(robin_matrix(sp, j, a, &impedance.blocks()[j]))?;
                let local = sp.boundary_local(j);
                let rhs = ComplexMatrix::from_fn(a.nrows(), local.len(), |i, k| {
                    if local[k] == i {
                        Complex64::from(1.0)
                    } else {
                        Complex64::from(0.0)
                    }
                });
                let sol = lu.solve_matrix(&rhs)?;
                let g = ComplexMatrix::from_fn(local.len(), local.len(), |r, c| sol[(local[r], c)]);
                Ok((lu, g))
            })
            .collect();
        let (factors, responses) = built?.into_iter().unzip();
        Ok(Self { factors, responses })
    }

    pub fn num_subdomains(&self) -> usize {
        self.factors.len()
    }

    pub fn solve_block(&self, j: usize, rhs: &ComplexVector) -> Result<ComplexVector, LinalgError> {
        self.factors[j].solve(rhs)
    }

    /// `(A − iBᴴTB)⁻¹ f`, one subdomain per task.
    pub fn solve(&self, f: &BrokenVector) -> Result<BrokenVector, LinalgError> {
        let blocks: Result<Vec<_>, _> = f
            .blocks
            .par_iter()
            .enumerate()
            .map(|(j, b)| self.solve_block(j, b))
            .collect();
        Ok(BrokenVector { blocks: blocks? })
    }

    /// `G_j`.
    pub fn boundary_response(&self, j: usize) -> &ComplexMatrix {
        &self.responses[j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    /// `‖S p‖²_Ts⁻¹`.
    pub outgoing: f64,
    /// `4|Im⟨Au, ū⟩|`.
    pub dissipated: f64,
    /// `‖p‖²_Ts⁻¹`.
    pub incoming: f64,
}

impl EnergyBalance {
    /// `|outgoing + dissipated − incoming| / incoming`.
    pub fn relative_residual(&self) -> f64 {
        if self.incoming == 0.0 {
            return (self.outgoing + self.dissipated).abs();
        }
        (self.outgoing + self.dissipated - self.incoming).abs() / self.incoming
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringOperator {
    impedance: Arc<ImpedanceOperator>,
    robin: Arc<RobinFactorization>,
    operators: Arc<Vec<ComplexMatrix>>,
}

impl ScatteringOperator {
    pub fn new(
        impedance: Arc<ImpedanceOperator>,
        robin: Arc<RobinFactorization>,
        operators: Arc<Vec<ComplexMatrix>>,
    ) -> Self {
        Self {
            impedance,
            robin,
            operators,
        }
    }

    pub fn impedance(&self) -> &ImpedanceOperator {
        &self.impedance
    }

    pub fn robin(&self) -> &RobinFactorization {
        &self.robin
    }

    pub fn apply_raw(&self, p: &ComplexVector) -> ComplexVector {
        let sp = self.impedance.spaces();
        let two_i = Complex64::new(0.0, 2.0);
        let parts: Vec<ComplexVector> = (0..sp.num_subdomains())
            .into_par_iter()
            .map(|j| {
                let r = sp.block_range(j);
                let pj = p.rows(r.start, r.len());
                let v = &self.robin.responses[j] * pj;
                pj + &self.impedance.hermitian_blocks()[j] * v * two_i
            })
            .collect();
        let mut out = ComplexVector::zeros(p.len());
        for (j, part) in parts.iter().enumerate() {
            out.rows_mut(sp.block_range(j).start, part.len()).copy_from(part);
        }
        out
    }

    pub fn apply(&self, p: &MultiTrace<Dual>) -> MultiTrace<Dual> {
        MultiTrace::from_vector(self.apply_raw(p.as_vector()))
    }

    pub fn to_dense(&self) -> Result<ComplexMatrix, DenseError> {
        dense_map(self.impedance.spaces().multi_trace_len(), |e| Ok(self.apply_raw(e)))
    }

    /// `u = (A − iBᴴTB)⁻¹Bᴴp`.
    pub fn volume_response(&self, p: &MultiTrace<Dual>) -> Result<BrokenVector, LinalgError> {
        self.robin.solve(&self.impedance.spaces().trace_adjoint(p))
    }

    pub fn energy_balance(&self, p: &MultiTrace<Dual>) -> Result<EnergyBalance, LinalgError> {
        let u = self.volume_response(p)?;
        let im: f64 = u
            .blocks
            .iter()
            .zip(self.operators.iter())
            .map(|(uj, a)| uj.dotc(&(a * uj)).im)
            .sum();
        let t = &self.impedance;
        Ok(EnergyBalance {
            outgoing: t.norm_ts_dual_raw(&self.apply_raw(p.as_vector())).powi(2),
            dissipated: 4.0 * im.abs(),
            incoming: t.norm_ts_dual(p).powi(2),
        })
    }

    /// An element `(v, p)` of the Cauchy data space generated from `q`:
    /// `u = (A − iBᴴTB)⁻¹Bᴴq`, `v = Bu`, `p = q + iTv`.
    pub fn cauchy_member(&self, q: &MultiTrace<Dual>) -> Result<(MultiTrace<Primal>, MultiTrace<Dual>), LinalgError> {
        let u = self.volume_response(q)?;
        let v = self.impedance.spaces().trace(&u);
        let p = q + &(self.impedance.apply(&v) * Complex64::i());
        Ok((v, p))
    }

    /// Whether `p + iTᴴv = S(p − iTv)`.
    pub fn check_cauchy(&self, v: &MultiTrace<Primal>, p: &MultiTrace<Dual>) -> Characterization {
        let t = &self.impedance;
        let i = Complex64::i();
        let outgoing = p.as_vector() + t.apply_adjoint_raw(v.as_vector()) * i;
        let incoming = p.as_vector() - t.apply_raw(v.as_vector()) * i;
        let residual = t.norm_ts_dual_raw(&(outgoing - self.apply_raw(&incoming)));
        Characterization::new(residual, t.norm_ts_dual(p) + t.norm_ts(v))
    }
}
