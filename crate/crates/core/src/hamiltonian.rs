//! Dense real-symmetric Hamiltonians of the Stark chain.
//!
//! Two builders share one layout: the single-particle tight-binding chain
//! `-J sum(|l><l+1| + h.c.) + h sum l |l><l|`, and the XXZ chain restricted to
//! a fixed-excitation sector, where `-(J/2)(XX + YY)` becomes a `-J` swap of
//! neighbouring `01 <-> 10` and the Ising term is diagonal.
//!
//! Both are affine in the field, `H(h) = H(0) + h * diag(g)`, with `g` the
//! site-weighted occupation returned by [`gradient_generator`].

use std::io::{BufRead, Write};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_sector, LatticeSpec, SectorBasis};
use crate::error::{Error, Result};

/// Which Hilbert space a matrix acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    /// The site basis `|l>` of one excitation.
    SingleParticle,
    /// The fixed-`N` sector of the XXZ chain.
    Excitations(usize),
}

impl Sector {
    pub fn excitations(&self) -> usize {
        match self {
            Sector::SingleParticle => 1,
            Sector::Excitations(n) => *n,
        }
    }

    pub fn basis(&self, sites: usize) -> Result<SectorBasis> {
        enumerate_sector(sites, self.excitations())
    }
}

/// Dense `f64` matrices the diagonalisation pipeline keeps alive at once:
/// Hamiltonian, eigenvectors, generator in the eigenbasis, solver workspace.
const DENSE_COPIES: u64 = 4;

/// Upper bound on memory spent on dense `dim x dim` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBudget {
    pub bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        Self { bytes: 8 << 30 }
    }
}

impl MemoryBudget {
    pub fn new(bytes: u64) -> Self {
        Self { bytes }
    }

    pub fn dense_requirement(dim: usize) -> u64 {
        (dim as u64)
            .saturating_mul(dim as u64)
            .saturating_mul(std::mem::size_of::<f64>() as u64)
            .saturating_mul(DENSE_COPIES)
    }

    pub fn check(&self, dim: usize, what: &str) -> Result<()> {
        let required = Self::dense_requirement(dim);
        if required > self.bytes {
            return Err(Error::Resource {
                what: what.to_string(),
                required,
                available: self.bytes,
            });
        }
        Ok(())
    }
}

/// A real symmetric Hamiltonian in the configuration basis of its sector.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    spec: LatticeSpec,
    sector: Sector,
    matrix: Mat<f64>,
}

impl HamiltonianMatrix {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| self.matrix[(i, j)] == self.matrix[(j, i)]))
    }

    /// Writes `dim` on the first line, then one whitespace-separated row per
    /// line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        write_matrix_dump(&self.matrix, &mut out)
    }
}

pub fn write_matrix_dump<W: Write>(m: &Mat<f64>, out: &mut W) -> Result<()> {
    let n = m.nrows();
    writeln!(out, "{n}")?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads the dump format back; the dim must be followed by exactly `dim^2`
/// values.
pub fn read_matrix_dump<R: BufRead>(input: R) -> Result<Mat<f64>> {
    let mut tokens = Vec::new();
    for line in input.lines() {
        let line = line?;
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    let dim: usize = it
        .next()
        .ok_or_else(|| Error::domain("empty matrix dump"))?
        .parse()
        .map_err(|_| Error::domain("matrix dump must start with an integer dim"))?;
    let values: Vec<f64> = it
        .map(|t| t.parse::<f64>().map_err(|_| Error::domain(format!("bad value '{t}'"))))
        .collect::<Result<_>>()?;
    if values.len() != dim * dim {
        return Err(Error::domain(format!(
            "matrix dump declares dim {dim} but holds {} values",
            values.len()
        )));
    }
    Ok(Mat::from_fn(dim, dim, |i, j| values[i * dim + j]))
}

/// Tight-binding chain with a linear potential, open boundaries.
pub fn build_single_particle(spec: &LatticeSpec) -> Result<HamiltonianMatrix> {
    spec.validate()?;
    let n = spec.sites;
    let mut m = Mat::<f64>::zeros(n, n);
    for l in 0..n {
        m[(l, l)] = spec.field * (l + 1) as f64;
        if l + 1 < n {
            m[(l, l + 1)] = -spec.hopping;
            m[(l + 1, l)] = -spec.hopping;
        }
    }
    Ok(HamiltonianMatrix {
        spec: *spec,
        sector: Sector::SingleParticle,
        matrix: m,
    })
}

/// XXZ chain with a linear field, restricted to the sector spanned by `basis`.
pub fn build_xxz_sector(
    spec: &LatticeSpec,
    basis: &SectorBasis,
    budget: &MemoryBudget,
) -> Result<HamiltonianMatrix> {
    spec.validate()?;
    if basis.sites() != spec.sites {
        return Err(Error::domain(format!(
            "basis has {} sites, spec has {}",
            basis.sites(),
            spec.sites
        )));
    }
    let dim = basis.dim();
    budget.check(
        dim,
        &format!("XXZ sector (L={}, N={})", spec.sites, basis.excitations()),
    )?;
    let sites = spec.sites;
    let ising = -0.5 * spec.hopping * spec.anisotropy;
    let mut m = Mat::<f64>::zeros(dim, dim);
    for (row, &w) in basis.configs().iter().enumerate() {
        let mut bonds = 0.0;
        for l in 0..sites - 1 {
            let a = (w >> l) & 1;
            let b = (w >> (l + 1)) & 1;
            bonds += if a == b { 1.0 } else { -1.0 };
            if a != b {
                let partner = w ^ (0b11 << l);
                // Popcount is preserved by a swap, so the partner is in the sector.
                let col = basis
                    .index_of(partner)
                    .expect("adjacent swap leaves the sector");
                if col > row {
                    m[(row, col)] = -spec.hopping;
                    m[(col, row)] = -spec.hopping;
                }
            }
        }
        m[(row, row)] = ising * bonds + spec.field * site_weight(w, sites);
    }
    Ok(HamiltonianMatrix {
        spec: *spec,
        sector: Sector::Excitations(basis.excitations()),
        matrix: m,
    })
}

/// `sum_l l * n_l` of an occupation word.
fn site_weight(word: u64, sites: usize) -> f64 {
    (0..sites)
        .filter(|i| word >> i & 1 == 1)
        .map(|i| (i + 1) as f64)
        .sum()
}

/// Diagonal of the gradient term `H2 = sum_l l n_l` in basis order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientGenerator {
    pub sector: Sector,
    pub sites: usize,
    pub diag: Vec<f64>,
}

impl GradientGenerator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `lambda_max - lambda_min`; bounds `F_Q <= t^2 * seminorm^2`.
    pub fn seminorm(&self) -> f64 {
        seminorm(self)
    }
}

pub fn gradient_generator(sector: Sector, basis: &SectorBasis) -> Result<GradientGenerator> {
    if basis.excitations() != sector.excitations() {
        return Err(Error::domain(format!(
            "basis holds {} excitations, sector {:?}",
            basis.excitations(),
            sector
        )));
    }
    let sites = basis.sites();
    let diag = basis
        .configs()
        .iter()
        .map(|&w| site_weight(w, sites))
        .collect();
    Ok(GradientGenerator {
        sector,
        sites,
        diag,
    })
}

/// `diag(1, 2, ..., L)` on the site basis of one excitation.
pub fn single_particle_generator(sites: usize) -> GradientGenerator {
    GradientGenerator {
        sector: Sector::SingleParticle,
        sites,
        diag: (1..=sites).map(|l| l as f64).collect(),
    }
}

pub fn seminorm(g: &GradientGenerator) -> f64 {
    let (lo, hi) = g
        .diag
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if g.diag.is_empty() {
        0.0
    } else {
        hi - lo
    }
}
