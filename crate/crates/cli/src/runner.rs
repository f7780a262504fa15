//! Orchestration of the four run modes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use osm_lab::constants::{
    build_lifting, compute_constants, compute_trace_bounds, verify_factorization, CauchyProjector, ConstantsError,
    ReportMetadata, FACTORIZATION_RTOL,
};
use osm_lab::exchange::{local_swap_matrix, DenseError, MAX_DENSE_TRACE_DOFS};
use osm_lab::fem::{assemble_all_forms, assemble_global_load, assemble_load, MediumSpec};
use osm_lab::impedance::{build_impedance, ImpedanceSpec};
use osm_lab::linalg::max_abs;
use osm_lab::mesh::{load_mesh_file, structured_square, Mesh};
use osm_lab::partition::{build_partition, load_partition_file};
use osm_lab::scattering::robin_matrix;
use osm_lab::skeleton::{glue, gmres, monolithic_solve, relative_h1_error, solve, Method, OperatorSet, SolveConfig};
use osm_lab::topology::{extract_topology, SubdomainTopology};
use osm_lab::trace::{BrokenVector, Dual, MultiTrace, Primal, SkeletonVector};
use osm_lab::{Complex64, ComplexMatrix, ComplexVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{MeshConfig, Mode, PartitionConfig, RunConfig};
use crate::report::{write_json, write_operator, write_residual_history, write_solution_csv, write_sweep, write_vtk};
use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    CheckFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => 2,
            Status::CheckFailed => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub artifacts: Vec<PathBuf>,
    pub message: String,
}

/// Mesh, partition topology, medium and load of one configured problem.
pub struct Problem {
    pub label: String,
    pub topology: Arc<SubdomainTopology>,
    pub medium: MediumSpec,
    pub load: BrokenVector,
}

impl Problem {
    pub fn mesh(&self) -> &Mesh {
        self.topology.mesh()
    }

    fn metadata(&self, impedance: Option<ImpedanceSpec>) -> ReportMetadata {
        ReportMetadata {
            mesh: self.label.clone(),
            num_subdomains: self.topology.num_subdomains(),
            volume_dofs: self.mesh().num_vertices(),
            multi_trace_dofs: self.topology.num_multi_trace_dofs(),
            impedance,
        }
    }
}

pub fn prepare(config: &RunConfig) -> Result<Problem, RunError> {
    config.validate()?;
    let (mesh, label) = match &config.mesh {
        MeshConfig::Structured { n, half_width } => (
            structured_square(*n, *half_width),
            format!("structured_square(n={n}, half_width={half_width})"),
        ),
        MeshConfig::File { path, format } => {
            let mesh = load_mesh_file(path, *format).map_err(|source| RunError::Mesh {
                path: path.clone(),
                source,
            })?;
            (mesh, path.display().to_string())
        }
    };
    let partition = match &config.partition {
        PartitionConfig::Grown { subdomains, seed } => build_partition(&mesh, *subdomains, *seed),
        PartitionConfig::File { path } => load_partition_file(path, &mesh),
    }?;
    let topology = Arc::new(extract_topology(&mesh, &partition));
    let medium = config.medium.to_medium()?;
    let load = BrokenVector {
        blocks: assemble_load(&topology, &medium, &config.source)?,
    };
    Ok(Problem {
        label,
        topology,
        medium,
        load,
    })
}

fn output_dir(config: &RunConfig) -> Result<&Path, RunError> {
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir)
}

pub fn run(config: &RunConfig, mode: Mode) -> Result<Outcome, RunError> {
    if let Some(m) = config.mode {
        if m != mode {
            return Err(RunError::Config(format!(
                "mode: config asks for {} but the command is {}",
                m.name(),
                mode.name()
            )));
        }
    }
    let problem = prepare(config)?;
    let dir = output_dir(config)?;
    match mode {
        Mode::Solve => run_solve(config, &problem, dir),
        Mode::Verify => run_verify(config, &problem, dir),
        Mode::Constants => run_constants(config, &problem, dir),
        Mode::SweepTheta => run_sweep(config, &problem, dir),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub mesh: String,
    pub num_subdomains: usize,
    pub volume_dofs: usize,
    pub multi_trace_dofs: usize,
    pub impedance: ImpedanceSpec,
    pub solver: SolveConfig,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub stagnated: bool,
    /// Largest disagreement between subdomain values at shared vertices.
    pub max_interface_jump: f64,
    /// Relative H¹ distance to the direct solve of the undecomposed problem.
    pub oracle_h1_error: Option<f64>,
}

fn run_solve(config: &RunConfig, problem: &Problem, dir: &Path) -> Result<Outcome, RunError> {
    let ops = OperatorSet::build(problem.topology.clone(), problem.medium, &config.impedance)?;
    let g = ops.compute_rhs(&problem.load)?;
    let (q, history) = solve(&ops, &g, &config.solver)?;
    let (u, _) = ops.reconstruct(&q, &problem.load)?;
    let glued = glue(&problem.topology, &u);
    let oracle_h1_error = if config.outputs.oracle {
        let f = assemble_global_load(&problem.topology, &problem.medium, &config.source)?;
        let reference = monolithic_solve(&problem.topology, &problem.medium, &f)?;
        Some(relative_h1_error(&reference.gram, &glued.values, &reference.solution))
    } else {
        None
    };

    let mut artifacts = vec![
        write_residual_history(&dir.join("residual_history.csv"), &history)?,
        write_solution_csv(&dir.join("solution.csv"), &glued.values)?,
    ];
    if config.outputs.vtk {
        artifacts.push(write_vtk(&dir.join("solution.vtk"), problem.mesh(), &glued.values)?);
    }
    let summary = SolveSummary {
        mesh: problem.label.clone(),
        num_subdomains: problem.topology.num_subdomains(),
        volume_dofs: problem.mesh().num_vertices(),
        multi_trace_dofs: problem.topology.num_multi_trace_dofs(),
        impedance: config.impedance.clone(),
        solver: config.solver,
        converged: history.converged,
        iterations: history.iterations,
        final_residual: history.final_residual(),
        stagnated: history.stagnated,
        max_interface_jump: glued.max_jump,
        oracle_h1_error,
    };
    artifacts.push(write_json(&dir.join("summary.json"), &summary)?);
    let message = format!(
        "{} after {} iterations, residual {:.3e}",
        if history.converged {
            "converged"
        } else {
            "not converged"
        },
        history.iterations,
        history.final_residual()
    );
    Ok(Outcome {
        status: if history.converged {
            Status::Ok
        } else {
            Status::NotConverged
        },
        artifacts,
        message,
    })
}

fn run_constants(config: &RunConfig, problem: &Problem, dir: &Path) -> Result<Outcome, RunError> {
    let ops = OperatorSet::build(problem.topology.clone(), problem.medium, &config.impedance)?;
    let mut report = match compute_constants(&ops, &config.constants, config.seed) {
        Err(ConstantsError::Dense(DenseError::TooLarge { dofs, limit })) => {
            return Err(RunError::Config(format!(
                "constants mode supports at most {limit} multi-trace dofs, this problem has {dofs}"
            )))
        }
        other => other?,
    };
    report.metadata = Some(problem.metadata(Some(config.impedance.clone())));
    let path = write_json(&dir.join("constants.json"), &report)?;
    let ok = report.checks.all();
    Ok(Outcome {
        status: if ok { Status::Ok } else { Status::CheckFailed },
        artifacts: vec![path],
        message: format!(
            "gamma = {:.6e} (bound {:.6e}), t- = {:.6e}, t+ = {:.6e}",
            report.gamma_exact, report.gamma_bound_thm, report.t_minus, report.t_plus
        ),
    })
}

fn run_sweep(config: &RunConfig, problem: &Problem, dir: &Path) -> Result<Outcome, RunError> {
    let forms = Arc::new(assemble_all_forms(&problem.topology, &problem.medium));
    let mut rows = Vec::new();
    for theta in config.sweep.thetas() {
        // e^{−iθ} times the configured impedance
        let spec = ImpedanceSpec::ScaledReference {
            z: Complex64::from_polar(1.0, -theta),
            reference: Box::new(config.impedance.clone()),
        };
        let impedance = build_impedance(&spec, &problem.topology, &forms, &problem.medium)?;
        let ops = OperatorSet::with_impedance(problem.topology.clone(), problem.medium, forms.clone(), impedance)?;
        let g = ops.compute_rhs(&problem.load)?;
        let (_, history) = solve(&ops, &g, &config.solver)?;
        rows.push((theta, history.converged.then_some(history.iterations)));
    }
    let path = write_sweep(&dir.join("sweep.csv"), &rows)?;
    Ok(Outcome {
        status: Status::Ok,
        artifacts: vec![path],
        message: describe_minimizer(&rows),
    })
}

/// Where the fewest iterations occur, and whether that is away from `θ = 0`.
pub fn describe_minimizer(rows: &[(f64, Option<usize>)]) -> String {
    let best = rows
        .iter()
        .filter_map(|&(t, n)| n.map(|n| (t, n)))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.abs().total_cmp(&b.0.abs())));
    let at_zero = rows.iter().find(|r| r.0.abs() < 1e-12).and_then(|r| r.1);
    match (best, at_zero) {
        (None, _) => "no angle converged".into(),
        (Some((t, n)), Some(n0)) if n < n0 => format!("minimum n = {n} at theta = {t:.4} (n = {n0} at theta = 0)"),
        (Some((t, n)), _) => format!("minimum n = {n} at theta = {t:.4}"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the suite's measure.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl SuiteResult {
    fn measured(name: &str, worst: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            tolerance,
            samples,
            skipped: None,
        }
    }

    fn skipped(name: &str, reason: String) -> Self {
        Self {
            name: name.into(),
            passed: true,
            worst: 0.0,
            tolerance: 0.0,
            samples: 0,
            skipped: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub metadata: ReportMetadata,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
    ComplexVector::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn dual(v: ComplexVector) -> MultiTrace<Dual> {
    MultiTrace::from_vector(v)
}

fn primal(v: ComplexVector) -> MultiTrace<Primal> {
    MultiTrace::from_vector(v)
}

/// Every invariant suite on the configured problem.
pub fn verify_suites(config: &RunConfig, problem: &Problem) -> Result<Vec<SuiteResult>, RunError> {
    let ops = OperatorSet::build(problem.topology.clone(), problem.medium, &config.impedance)?;
    let t = &ops.impedance;
    let n = ops.spaces.multi_trace_len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut suites = Vec::new();

    let ts = t.dense_hermitian();
    let defect = max_abs(&(t.hermitian_factorization().reconstruct() - &ts)) / max_abs(&ts);
    suites.push(SuiteResult::measured("hermitian_factorization", defect, 1e-12, 1));

    let mut worst: f64 = 0.0;
    for j in 0..ops.spaces.num_subdomains() {
        let robin = robin_matrix(&ops.spaces, j, &ops.forms[j].operator, &t.blocks()[j]);
        let b = random_vector(&mut rng, robin.nrows());
        let x = ops.robin.solve_block(j, &b)?;
        worst = worst.max((&robin * x - &b).norm() / b.norm());
    }
    suites.push(SuiteResult::measured(
        "robin_solve",
        worst,
        1e-10,
        ops.spaces.num_subdomains(),
    ));

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_vector(&mut rng, n);
        let np = t.norm_ts_dual_raw(&p);
        worst = worst.max((t.norm_ts_dual_raw(&ops.exchange.apply_raw(&p)?) - np).abs() / np);
    }
    suites.push(SuiteResult::measured("exchange_isometry", worst, 1e-10, 100));

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = dual(random_vector(&mut rng, n));
        worst = worst.max(ops.scattering.energy_balance(&p)?.relative_residual());
    }
    suites.push(SuiteResult::measured("scattering_energy", worst, 1e-9, 100));

    // members must satisfy the predicate, unit perturbations of unit members must not
    let mut misclassified = 0usize;
    for _ in 0..50 {
        let v = ops
            .spaces
            .restrict(&SkeletonVector(random_vector(&mut rng, ops.spaces.skeleton_len())));
        let p = t.project_onto_polar(&dual(random_vector(&mut rng, n)))?;
        let s = 1.0 / (t.norm_ts(&v) + t.norm_ts_dual(&p));
        let (v, p) = (v * Complex64::from(s), p * Complex64::from(s));
        if !ops.exchange.check_transmission(&v, &p)?.holds {
            misclassified += 1;
        }
        let e = random_vector(&mut rng, n);
        let e = dual(&e / Complex64::from(t.norm_ts_dual_raw(&e)));
        if ops.exchange.check_transmission(&v, &(&p + &e))?.holds {
            misclassified += 1;
        }
    }
    suites.push(SuiteResult::measured(
        "transmission_characterization",
        misclassified as f64,
        0.0,
        100,
    ));

    let mut misclassified = 0usize;
    for _ in 0..50 {
        let (v, p) = ops.scattering.cauchy_member(&dual(random_vector(&mut rng, n)))?;
        let s = 1.0 / (t.norm_ts(&v) + t.norm_ts_dual(&p));
        let (v, p) = (v * Complex64::from(s), p * Complex64::from(s));
        if !ops.scattering.check_cauchy(&v, &p).holds {
            misclassified += 1;
        }
        let e = random_vector(&mut rng, n);
        let e = primal(&e / Complex64::from(t.norm_ts_raw(&e)));
        if ops.scattering.check_cauchy(&(&v + &e), &p).holds {
            misclassified += 1;
        }
    }
    suites.push(SuiteResult::measured(
        "cauchy_characterization",
        misclassified as f64,
        0.0,
        100,
    ));

    let lifting = build_lifting(&ops.topology, &ops.forms)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = primal(random_vector(&mut rng, n));
        if ops.spaces.trace(&lifting.lift(&v)) != v {
            worst = f64::INFINITY;
        }
    }
    suites.push(SuiteResult::measured("harmonic_lifting", worst, 0.0, 100));

    let (lo, hi) = compute_trace_bounds(t, &lifting)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let v = primal(random_vector(&mut rng, n));
        let r = t.norm_ts(&v) / lifting.norm_lambda(&v);
        worst = worst.max((lo - r) / lo).max((r - hi) / hi);
    }
    suites.push(SuiteResult::measured("trace_bounds", worst.max(0.0), 1e-12, 100));

    if n > MAX_DENSE_TRACE_DOFS {
        let reason = format!("{n} multi-trace dofs exceed the dense limit {MAX_DENSE_TRACE_DOFS}");
        suites.push(SuiteResult::skipped("local_swap_involution", reason.clone()));
        suites.push(SuiteResult::skipped("factorization_theorem", reason));
    } else {
        let swap = local_swap_matrix(&ops.spaces);
        let defect = max_abs(&(&swap * &swap - ComplexMatrix::identity(n, n)));
        suites.push(SuiteResult::measured("local_swap_involution", defect, 1e-12, 1));
        let system = ops.system_to_dense()?;
        let projector = CauchyProjector::assemble(&ops, &lifting)?;
        let residual = verify_factorization(&system, &projector, 50, &mut rng)?;
        suites.push(SuiteResult::measured(
            "factorization_theorem",
            residual,
            FACTORIZATION_RTOL,
            50,
        ));
    }

    let f = assemble_global_load(&problem.topology, &problem.medium, &config.source)?;
    let reference = monolithic_solve(&problem.topology, &problem.medium, &f)?;
    let g = ops.compute_rhs(&problem.load)?;
    let strict = SolveConfig {
        method: Method::Gmres,
        tol: 1e-10,
        ..config.solver
    };
    let (q, _) = gmres(&ops, &g, &strict)?;
    let (u, _) = ops.reconstruct(&q, &problem.load)?;
    let err = relative_h1_error(
        &reference.gram,
        &glue(&problem.topology, &u).values,
        &reference.solution,
    );
    suites.push(SuiteResult::measured("oracle_equivalence", err, 1e-6, 1));
    Ok(suites)
}

fn run_verify(config: &RunConfig, problem: &Problem, dir: &Path) -> Result<Outcome, RunError> {
    let suites = verify_suites(config, problem)?;
    let passed = suites.iter().all(|s| s.passed);
    let failed: Vec<String> = suites.iter().filter(|s| !s.passed).map(|s| s.name.clone()).collect();
    let report = VerifyReport {
        metadata: problem.metadata(Some(config.impedance.clone())),
        passed,
        suites,
    };
    let mut artifacts = vec![write_json(&dir.join("verify.json"), &report)?];
    if config.outputs.operators {
        let ops = OperatorSet::build(problem.topology.clone(), problem.medium, &config.impedance)?;
        artifacts.push(write_operator(&dir.join("exchange.txt"), &ops.exchange.to_dense()?)?);
        artifacts.push(write_operator(
            &dir.join("local_swap.txt"),
            &local_swap_matrix(&ops.spaces),
        )?);
        artifacts.push(write_operator(
            &dir.join("scattering.txt"),
            &ops.scattering.to_dense()?,
        )?);
    }
    Ok(Outcome {
        status: if passed { Status::Ok } else { Status::CheckFailed },
        artifacts,
        message: if passed {
            format!("all {} suites passed", report.suites.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    })
}
