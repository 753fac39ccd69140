//! Exact unitary dynamics from a dense eigendecomposition.
//!
//! Everything here works from one [`SpectralDecomposition`] per Hamiltonian:
//! evolution to any time costs two `O(dim^2)` basis changes, and the
//! parametric derivative `d psi / dh` needs the field generator in the
//! eigenbasis once (`O(dim^3)`), then `O(dim^2)` per time.

pub mod bessel;

use std::f64::consts::PI;
use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::csv_float;
use crate::basis::SectorBasis;
use crate::error::{Error, Result};
use crate::fisher::{qfi_pure, ProbabilityVector};
use crate::hamiltonian::{GradientGenerator, HamiltonianMatrix};

pub use bessel::bessel_j;

/// Relative gap below which two levels count as degenerate in the
/// derivative kernel.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Below this `|gap * t|` the derivative kernel switches from the divided
/// difference to its sinc form, which does not cancel.
const SINC_PHASE: f64 = 1.0;

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a real
/// symmetric matrix.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    energies: Vec<f64>,
    vectors: Mat<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vectors(&self) -> &Mat<f64> {
        &self.vectors
    }

    /// Column `m`, the eigenvector of `energies[m]`.
    pub fn vector(&self, m: usize) -> &[f64] {
        self.vectors.col_as_slice(m)
    }

    /// `V^T psi`.
    pub fn to_eigenbasis(&self, psi: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|m| {
                self.vector(m)
                    .iter()
                    .zip(psi)
                    .fold(ZERO, |acc, (&v, &p)| acc + p * v)
            })
            .collect()
    }

    /// `V c`.
    pub fn from_eigenbasis(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim()];
        for (m, &c) in coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(self.vector(m)) {
                *o += c * v;
            }
        }
        out
    }

    /// `V^T diag(d) V`, a diagonal operator expressed in the eigenbasis.
    pub fn transform_diagonal(&self, diag: &[f64]) -> Mat<f64> {
        let n = self.dim();
        let scaled = Mat::from_fn(n, n, |i, j| diag[i] * self.vectors[(i, j)]);
        self.vectors.transpose() * &scaled
    }

    /// `||V diag(E) V^T - H||_F / ||H||_F`.
    pub fn reconstruction_error(&self, h: &Mat<f64>) -> f64 {
        let n = self.dim();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.energies[j]);
        let rebuilt = &scaled * self.vectors.transpose();
        let diff = &rebuilt - h;
        let norm = h.norm_l2();
        if norm == 0.0 {
            diff.norm_l2()
        } else {
            diff.norm_l2() / norm
        }
    }

    /// `max |V^T V - 1|`.
    pub fn orthogonality_error(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors;
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Full eigendecomposition of a Hamiltonian.
pub fn diagonalize(h: &HamiltonianMatrix) -> Result<SpectralDecomposition> {
    diagonalize_symmetric(h.matrix())
}

pub fn diagonalize_symmetric(m: &Mat<f64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::domain(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| {
        Error::numeric(
            n,
            format!("symmetric eigensolver did not converge ({e:?}); Frobenius norm {:e}", m.norm_l2()),
        )
    })?;
    let energies: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::numeric(n, "eigensolver returned non-finite eigenvalues"));
    }
    Ok(SpectralDecomposition {
        energies,
        vectors: evd.U().to_owned(),
    })
}

/// Complex amplitudes over a configuration (or site) basis, tagged with the
/// time and field they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<C64>,
    pub time: f64,
    pub field: f64,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<C64>, time: f64, field: f64) -> Self {
        Self {
            amplitudes,
            time,
            field,
        }
    }

    /// The basis vector at `index`, at `t = 0`.
    pub fn basis_vector(dim: usize, index: usize, field: f64) -> Result<Self> {
        if index >= dim {
            return Err(Error::domain(format!("basis index {index} outside 0..{dim}")));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self::new(amplitudes, 0.0, field))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn check_dim(d: &SpectralDecomposition, len: usize) -> Result<()> {
    if d.dim() != len {
        return Err(Error::domain(format!(
            "state has dimension {len}, Hamiltonian {}",
            d.dim()
        )));
    }
    Ok(())
}

/// `psi(t) = V exp(-i E t) V^T psi0`.
pub fn evolve(d: &SpectralDecomposition, psi0: &QuantumState, t: f64) -> Result<QuantumState> {
    check_dim(d, psi0.dim())?;
    let coeffs = d.to_eigenbasis(&psi0.amplitudes);
    let rotated: Vec<C64> = coeffs
        .iter()
        .zip(d.energies())
        .map(|(&c, &e)| c * C64::from_polar(1.0, -e * t))
        .collect();
    Ok(QuantumState::new(
        d.from_eigenbasis(&rotated),
        psi0.time + t,
        psi0.field,
    ))
}

/// `d psi(t) / dh` for an `h`-independent initial state. Builds the
/// generator in the eigenbasis, so prefer [`ParametricEvolution`] when many
/// times are needed.
pub fn evolve_derivative(
    d: &SpectralDecomposition,
    generator: &GradientGenerator,
    psi0: &QuantumState,
    t: f64,
) -> Result<Vec<C64>> {
    let evo = ParametricEvolution::new(d.clone(), generator, &psi0.amplitudes)?;
    Ok(evo.derivative(t))
}

/// Entry `(m, n)` of `U^dagger`-free derivative kernel:
/// `(e^{-i E_m t} - e^{-i E_n t}) / (E_m - E_n)`, which tends to
/// `-i t e^{-i E_m t}` as the levels merge. `pm`, `pn` are the phases
/// `e^{-i E t}`.
#[inline]
fn derivative_kernel(em: f64, en: f64, pm: C64, pn: C64, t: f64) -> C64 {
    let gap = em - en;
    let scale = 1f64.max(em.abs()).max(en.abs());
    if gap.abs() < DEGENERACY_TOL * scale {
        return -I * t * pm;
    }
    let phase = gap * t;
    if phase.abs() < SINC_PHASE {
        // e^{-i (E_m + E_n) t / 2} = pm e^{i gap t / 2}
        let half = 0.5 * phase;
        return -I * t * pm * C64::from_polar(half.sin() / half, half);
    }
    (pm - pn) / gap
}

/// Evolution of a fixed initial state under `H(h)`, with the exact
/// derivative with respect to `h`.
///
/// In the eigenbasis, `d/dh <m|U(t)|n> = G_mn K_mn(t)` where `G = V^T H2 V`
/// and `K` is [`derivative_kernel`]: the first-order expansion of
/// `-i int_0^t e^{-iH(t-s)} H2 e^{-iHs} ds`.
#[derive(Debug, Clone)]
pub struct ParametricEvolution {
    decomposition: SpectralDecomposition,
    generator: Mat<f64>,
    coeffs: Vec<C64>,
}

impl ParametricEvolution {
    pub fn new(
        decomposition: SpectralDecomposition,
        generator: &GradientGenerator,
        psi0: &[C64],
    ) -> Result<Self> {
        check_dim(&decomposition, psi0.len())?;
        check_dim(&decomposition, generator.dim())?;
        let coeffs = decomposition.to_eigenbasis(psi0);
        let generator = decomposition.transform_diagonal(&generator.diag);
        Ok(Self {
            decomposition,
            generator,
            coeffs,
        })
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomposition
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn phases(&self, t: f64) -> Vec<C64> {
        self.decomposition
            .energies()
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * t))
            .collect()
    }

    /// Amplitudes of `psi(t)` in the eigenbasis.
    pub fn eigen_state(&self, t: f64) -> Vec<C64> {
        self.phases(t)
            .iter()
            .zip(&self.coeffs)
            .map(|(p, c)| p * c)
            .collect()
    }

    /// Amplitudes of `d psi(t) / dh` in the eigenbasis.
    pub fn eigen_derivative(&self, t: f64) -> Vec<C64> {
        let n = self.dim();
        let e = self.decomposition.energies();
        let phases = self.phases(t);
        let mut out = vec![ZERO; n];
        if t == 0.0 {
            return out;
        }
        // Column-major walk over the symmetric generator: G_mn = G_nm.
        for (col, &c) in self.coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let g = self.generator.col_as_slice(col);
            for m in 0..n {
                let k = derivative_kernel(e[m], e[col], phases[m], phases[col], t);
                out[m] += g[m] * k * c;
            }
        }
        out
    }

    pub fn state(&self, t: f64) -> Vec<C64> {
        self.decomposition.from_eigenbasis(&self.eigen_state(t))
    }

    pub fn derivative(&self, t: f64) -> Vec<C64> {
        self.decomposition.from_eigenbasis(&self.eigen_derivative(t))
    }

    /// Pure-state QFI at time `t`, evaluated in the eigenbasis.
    pub fn qfi(&self, t: f64) -> Result<f64> {
        qfi_pure(&self.eigen_state(t), &self.eigen_derivative(t))
    }

    /// QFI together with the configuration-measurement distribution and its
    /// derivative at time `t`.
    pub fn qfi_and_probabilities(&self, t: f64) -> Result<(f64, ProbabilityVector)> {
        let a = self.eigen_state(t);
        let da = self.eigen_derivative(t);
        let qfi = qfi_pure(&a, &da)?;
        let psi = self.decomposition.from_eigenbasis(&a);
        let dpsi = self.decomposition.from_eigenbasis(&da);
        Ok((qfi, ProbabilityVector::from_state(&psi, Some(&dpsi))))
    }
}

/// Site occupations `P_l = sum_{z : n_l(z) = 1} |psi_z|^2`, sites 1..=L.
pub fn site_occupations(amplitudes: &[C64], basis: &SectorBasis) -> Result<Vec<f64>> {
    if amplitudes.len() != basis.dim() {
        return Err(Error::domain(format!(
            "state has dimension {}, basis {}",
            amplitudes.len(),
            basis.dim()
        )));
    }
    let mut p = vec![0.0; basis.sites()];
    for (&w, a) in basis.configs().iter().zip(amplitudes) {
        let weight = a.norm_sqr();
        let mut bits = w;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            p[i] += weight;
            bits &= bits - 1;
        }
    }
    Ok(p)
}

/// Site occupations sampled on a time grid. Rows are times, columns sites.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationProfile {
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl OccupationProfile {
    pub fn sites(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// CSV with header `t,P_1,...,P_L`, preceded by `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.sites()).map(|l| format!("P_{l}")));
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.rows) {
            let mut rec = vec![csv_float(*t)];
            rec.extend(row.iter().map(|&x| csv_float(x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `P_l = |psi_l|^2` on the site basis of one excitation.
pub fn single_particle_occupations(amplitudes: &[C64]) -> Vec<f64> {
    amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// Occupations of `psi(t)` at each time; `occupations` maps amplitudes to
/// `P_1..P_L` for the basis in use.
pub fn occupation_profile<F>(
    d: &SpectralDecomposition,
    psi0: &QuantumState,
    times: &[f64],
    occupations: F,
) -> Result<OccupationProfile>
where
    F: Fn(&[C64]) -> Result<Vec<f64>>,
{
    check_dim(d, psi0.dim())?;
    let coeffs = d.to_eigenbasis(&psi0.amplitudes);
    let rows = times
        .iter()
        .map(|&t| {
            let rotated: Vec<C64> = coeffs
                .iter()
                .zip(d.energies())
                .map(|(&c, &e)| c * C64::from_polar(1.0, -e * t))
                .collect();
            occupations(&d.from_eigenbasis(&rotated))
        })
        .collect::<Result<_>>()?;
    Ok(OccupationProfile {
        times: times.to_vec(),
        rows,
    })
}

/// `K(t) = V exp(-i E t) V^T`.
pub fn propagator(d: &SpectralDecomposition, t: f64) -> Mat<C64> {
    let n = d.dim();
    let phases: Vec<C64> = d.energies().iter().map(|&e| C64::from_polar(1.0, -e * t)).collect();
    let mut k = Mat::<C64>::zeros(n, n);
    for m in 0..n {
        let v = d.vector(m);
        let p = phases[m];
        for j in 0..n {
            let pv = p * v[j];
            for i in 0..n {
                k[(i, j)] += pv * v[i];
            }
        }
    }
    k
}

/// `T_Bloch = 2 pi / h`.
pub fn bloch_period(field: f64) -> Result<f64> {
    if !(field > 0.0) || !field.is_finite() {
        return Err(Error::domain(format!("Bloch period needs a positive field, got {field}")));
    }
    Ok(2.0 * PI / field)
}

/// Infinite-chain Wannier-Stark state truncated to a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub struct WannierStarkState {
    /// Real amplitudes on sites 1..=L, unit norm.
    pub amplitudes: Vec<f64>,
    /// Center site `m`.
    pub center: usize,
    /// Energy `m h` of the infinite-chain state.
    pub energy: f64,
    /// `m` lies within `4J/h` of a boundary; the truncation is not faithful.
    pub near_edge: bool,
}

impl WannierStarkState {
    pub fn to_state(&self, field: f64) -> QuantumState {
        QuantumState::new(
            self.amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect(),
            0.0,
            field,
        )
    }
}

/// `|E_m> = sum_l J_{l-m}(2J/h) |l>`, renormalised on `L` sites.
pub fn wannier_stark_analytic(
    sites: usize,
    hopping: f64,
    field: f64,
    center: usize,
) -> Result<WannierStarkState> {
    if !(field > 0.0) {
        return Err(Error::domain(format!("Wannier-Stark states need h > 0, got {field}")));
    }
    if center == 0 || center > sites {
        return Err(Error::domain(format!("center {center} outside 1..={sites}")));
    }
    let x = 2.0 * hopping / field;
    let mut amplitudes: Vec<f64> = (1..=sites)
        .map(|l| bessel_j(l as i32 - center as i32, x))
        .collect();
    let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    amplitudes.iter_mut().for_each(|a| *a /= norm);
    let width = 4.0 * hopping / field;
    let near_edge = ((center - 1) as f64) < width || ((sites - center) as f64) < width;
    Ok(WannierStarkState {
        amplitudes,
        center,
        energy: center as f64 * field,
        near_edge,
    })
}
