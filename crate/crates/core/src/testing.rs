use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{assemble_all_forms, MediumSpec, SubdomainForms};
use crate::impedance::{build_impedance, ImpedanceOperator, ImpedanceSpec};
use crate::mesh::Mesh;
use crate::partition::Partition;
use crate::topology::{extract_topology, SubdomainTopology};
use crate::ComplexVector;

pub struct Fixture {
    pub topology: SubdomainTopology,
    pub forms: Vec<SubdomainForms>,
    pub medium: MediumSpec,
}

impl Fixture {
    pub fn new(mesh: &Mesh, partition: &Partition, medium: MediumSpec) -> Self {
        let topology = extract_topology(mesh, partition);
        let forms = assemble_all_forms(&topology, &medium);
        Self {
            topology,
            forms,
            medium,
        }
    }

    pub fn impedance(&self, spec: &ImpedanceSpec) -> ImpedanceOperator {
        build_impedance(spec, &self.topology, &self.forms, &self.medium).unwrap()
    }
}

pub fn lossy() -> MediumSpec {
    MediumSpec::from_wavelength(0.2, 1.0, 1.0).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> ComplexVector {
    ComplexVector::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn choices(medium: &MediumSpec) -> Vec<ImpedanceSpec> {
    vec![
        ImpedanceSpec::ScaledMass { z: medium.kappa },
        ImpedanceSpec::SecondOrder,
        ImpedanceSpec::RotatedSecondOrder {
            theta: std::f64::consts::PI / 10.0,
        },
    ]
}
