//! A Stark chain with a fixed sector and initial configuration, evaluated at
//! any field.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::basis::{Configuration, InitialState, LatticeSpec, SectorBasis};
use crate::dynamics::{
    diagonalize, occupation_profile, single_particle_occupations, site_occupations, OccupationProfile,
    ParametricEvolution, QuantumState,
};
use crate::error::{Error, Result};
use crate::fisher::{long_time_fisher, LongTimeFisher, LongTimeWindow};
use crate::hamiltonian::{
    build_single_particle, build_xxz_sector, gradient_generator, single_particle_generator,
    GradientGenerator, HamiltonianMatrix, MemoryBudget, Sector,
};

/// Field-independent description of a probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub sites: usize,
    pub hopping: f64,
    pub anisotropy: f64,
    pub sector: Sector,
    pub initial: InitialState,
}

impl ProbeSpec {
    pub fn single_particle(sites: usize, initial: InitialState) -> Self {
        Self {
            sites,
            hopping: 1.0,
            anisotropy: 0.0,
            sector: Sector::SingleParticle,
            initial,
        }
    }

    pub fn many_body(sites: usize, excitations: usize, anisotropy: f64, initial: InitialState) -> Self {
        Self {
            sites,
            hopping: 1.0,
            anisotropy,
            sector: Sector::Excitations(excitations),
            initial,
        }
    }
}

/// A probe ready to be evaluated at any field. Single-particle chains work
/// on the site basis directly and carry no enumerated sector.
#[derive(Debug, Clone)]
pub struct StarkProbe {
    spec: ProbeSpec,
    basis: Option<SectorBasis>,
    initial: Configuration,
    initial_index: usize,
    generator: GradientGenerator,
    budget: MemoryBudget,
}

impl StarkProbe {
    pub fn new(spec: ProbeSpec) -> Result<Self> {
        Self::with_budget(spec, MemoryBudget::default())
    }

    pub fn with_budget(spec: ProbeSpec, budget: MemoryBudget) -> Result<Self> {
        LatticeSpec::new(spec.sites, spec.hopping, 0.0, spec.anisotropy)?;
        let initial = spec.initial.resolve(spec.sites)?;
        if initial.excitations() != spec.sector.excitations() {
            return Err(Error::domain(format!(
                "initial state {initial} has {} excitations, sector {:?}",
                initial.excitations(),
                spec.sector
            )));
        }
        let (basis, initial_index, generator) = match spec.sector {
            Sector::SingleParticle => {
                budget.check(spec.sites, &format!("single-particle chain of L={}", spec.sites))?;
                let site = initial.occupied_sites()[0];
                (None, site - 1, single_particle_generator(spec.sites))
            }
            Sector::Excitations(_) => {
                let basis = spec.sector.basis(spec.sites)?;
                budget.check(basis.dim(), &format!("{:?} sector of L={}", spec.sector, spec.sites))?;
                let index = basis.index_of_config(&initial)?;
                let generator = gradient_generator(spec.sector, &basis)?;
                (Some(basis), index, generator)
            }
        };
        Ok(Self {
            spec,
            basis,
            initial,
            initial_index,
            generator,
            budget,
        })
    }

    pub fn spec(&self) -> &ProbeSpec {
        &self.spec
    }

    pub fn sites(&self) -> usize {
        self.spec.sites
    }

    pub fn excitations(&self) -> usize {
        self.spec.sector.excitations()
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// The enumerated sector; `None` for a single particle.
    pub fn basis(&self) -> Option<&SectorBasis> {
        self.basis.as_ref()
    }

    /// Occupation words of the basis states, for any sector. Single-particle
    /// chains longer than 63 sites have no `u64` words and return an error.
    pub fn words(&self) -> Result<Vec<u64>> {
        match &self.basis {
            Some(b) => Ok(b.configs().to_vec()),
            None if self.spec.sites <= crate::basis::MAX_SITES => Ok((0..self.spec.sites).map(|l| 1u64 << l).collect()),
            None => Err(Error::domain(format!(
                "a {}-site chain has no 64-bit configuration words",
                self.spec.sites
            ))),
        }
    }

    /// `P_1..P_L` of a state given in this probe's basis.
    pub fn occupations(&self, amplitudes: &[C64]) -> Result<Vec<f64>> {
        match &self.basis {
            Some(b) => site_occupations(amplitudes, b),
            None if amplitudes.len() == self.dim() => Ok(single_particle_occupations(amplitudes)),
            None => Err(Error::domain(format!(
                "state has dimension {}, chain {}",
                amplitudes.len(),
                self.dim()
            ))),
        }
    }

    /// Site occupations of the evolving initial state at `field`.
    pub fn occupation_profile(&self, field: f64, times: &[f64]) -> Result<OccupationProfile> {
        let d = diagonalize(&self.hamiltonian(field)?)?;
        occupation_profile(&d, &self.initial_state(field), times, |a| self.occupations(a))
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn generator(&self) -> &GradientGenerator {
        &self.generator
    }

    pub fn seminorm(&self) -> f64 {
        self.generator.seminorm()
    }

    pub fn lattice(&self, field: f64) -> Result<LatticeSpec> {
        LatticeSpec::new(self.spec.sites, self.spec.hopping, field, self.spec.anisotropy)
    }

    pub fn initial_state(&self, field: f64) -> QuantumState {
        QuantumState::basis_vector(self.dim(), self.initial_index, field)
            .expect("initial index lies in the basis")
    }

    pub fn hamiltonian(&self, field: f64) -> Result<HamiltonianMatrix> {
        let lattice = self.lattice(field)?;
        match &self.basis {
            None => build_single_particle(&lattice),
            Some(basis) => build_xxz_sector(&lattice, basis, &self.budget),
        }
    }

    /// Diagonalises `H(field)` and prepares the parametric evolution of the
    /// initial configuration.
    pub fn evolution(&self, field: f64) -> Result<ParametricEvolution> {
        let d = diagonalize(&self.hamiltonian(field)?)?;
        ParametricEvolution::new(d, &self.generator, &self.initial_state(field).amplitudes)
    }

    pub fn long_time(&self, field: f64, window: &LongTimeWindow, with_cfi: bool) -> Result<LongTimeFisher> {
        let evo = self.evolution(field)?;
        long_time_fisher(&evo, field, self.seminorm(), window, with_cfi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excitation_mismatch_is_rejected() {
        let spec = ProbeSpec::many_body(6, 2, 0.0, InitialState::Neel);
        assert!(matches!(StarkProbe::new(spec), Err(Error::Domain(_))));
    }

    #[test]
    fn budget_is_enforced() {
        let spec = ProbeSpec::many_body(16, 8, 0.0, InitialState::Neel);
        let err = StarkProbe::with_budget(spec, MemoryBudget::new(1 << 20)).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn long_single_particle_chain() {
        let p = StarkProbe::new(ProbeSpec::single_particle(100, InitialState::Site { site: 50 })).unwrap();
        assert_eq!(p.dim(), 100);
        assert!(p.basis().is_none());
        assert!(p.words().is_err());
        let prof = p.occupation_profile(0.5, &[0.0]).unwrap();
        assert!((prof.rows[0][49] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_particle_layout() {
        let p = StarkProbe::new(ProbeSpec::single_particle(9, InitialState::CentralSite)).unwrap();
        assert_eq!(p.dim(), 9);
        assert_eq!(p.initial().occupied_sites(), vec![5]);
        assert_eq!(p.seminorm(), 8.0);
        let psi = p.initial_state(0.1);
        assert_eq!(psi.amplitudes[4].re, 1.0);
    }
}
