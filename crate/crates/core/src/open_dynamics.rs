//! Dephasing master equation in a fixed excitation sector.
//!
//! Both supported jump-operator families are diagonal in the configuration
//! basis, so the dissipator only damps coherences:
//! `(D rho)_{zz'} = -(gamma/2) sum_l (d_z - d_z')^2 rho_{zz'}`. The fast
//! path precomputes that damping matrix once; the triple-product form is
//! kept for cross-checks.

use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::csv_float;
use crate::basis::SectorBasis;
use crate::error::{Error, Result};
use crate::fisher::qfi_mixed;
use crate::hamiltonian::Sector;
use crate::probe::StarkProbe;

const TRACE_RENORMALISE: f64 = 1e-8;
const TRACE_FAIL: f64 = 1e-6;
const NEGATIVITY_FAIL: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DephasingForm {
    /// `L_l = sigma^z_l`, `+1` on occupied sites.
    SigmaZ,
    /// `L_l = 1 - 2|l><l|`; single-particle sector only.
    Projector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingSpec {
    pub gamma: f64,
    pub form: DephasingForm,
}

impl DephasingSpec {
    pub fn new(gamma: f64, form: DephasingForm) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::domain(format!("dephasing rate must be >= 0, got {gamma}")));
        }
        Ok(Self { gamma, form })
    }

    pub fn sigma_z(gamma: f64) -> Result<Self> {
        Self::new(gamma, DephasingForm::SigmaZ)
    }
}

/// Diagonals of the jump operators on the basis of `probe`, one vector per
/// site.
pub fn jump_diagonals(form: DephasingForm, probe: &StarkProbe) -> Result<Vec<Vec<f64>>> {
    if form == DephasingForm::Projector && probe.spec().sector != Sector::SingleParticle {
        return Err(Error::domain("the projector form is only defined for a single excitation"));
    }
    match probe.basis() {
        Some(basis) => Ok(sector_jump_diagonals(form, basis)),
        // Site basis: state k has its excitation on site k + 1.
        None => Ok((0..probe.sites())
            .map(|l| {
                (0..probe.sites())
                    .map(|k| sign(form, k == l))
                    .collect()
            })
            .collect()),
    }
}

fn sign(form: DephasingForm, occupied: bool) -> f64 {
    match (form, occupied) {
        (DephasingForm::SigmaZ, true) | (DephasingForm::Projector, false) => 1.0,
        _ => -1.0,
    }
}

/// Jump-operator diagonals over an enumerated sector.
pub fn sector_jump_diagonals(form: DephasingForm, basis: &SectorBasis) -> Vec<Vec<f64>> {
    (0..basis.sites())
        .map(|l| {
            basis
                .configs()
                .iter()
                .map(|&w| {
                    let occupied = (w >> l) & 1 == 1;
                    sign(form, occupied)
                })
                .collect()
        })
        .collect()
}

/// `Gamma_{zz'} = (gamma/2) sum_l (d_z - d_z')^2`.
pub fn damping_matrix(gamma: f64, diagonals: &[Vec<f64>]) -> Mat<f64> {
    let n = diagonals.first().map_or(0, Vec::len);
    Mat::from_fn(n, n, |i, j| {
        0.5 * gamma
            * diagonals
                .iter()
                .map(|d| (d[i] - d[j]).powi(2))
                .sum::<f64>()
    })
}

/// A density matrix in a configuration basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub matrix: Mat<C64>,
    pub time: f64,
}

impl DensityMatrix {
    pub fn from_pure(psi: &[C64], time: f64) -> Self {
        let n = psi.len();
        Self {
            matrix: Mat::from_fn(n, n, |i, j| psi[i] * psi[j].conj()),
            time,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += self.matrix[(i, j)].norm_sqr();
            }
        }
        s
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let n = self.dim();
        let evd = self
            .matrix
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::numeric(n, format!("Hermitian eigensolver failed: {e:?}")))?;
        Ok(evd.S().column_vector().iter().map(|z| z.re).fold(f64::INFINITY, f64::min))
    }
}

fn complexify(h: &Mat<f64>) -> Mat<C64> {
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| C64::new(h[(i, j)], 0.0))
}

/// `-i[H, rho] - Gamma o rho` with a precomputed damping matrix.
pub fn lindblad_rhs(rho: &Mat<C64>, h: &Mat<C64>, damping: &Mat<f64>) -> Mat<C64> {
    let hr = h * rho;
    let rh = rho * h;
    let n = rho.nrows();
    let minus_i = C64::new(0.0, -1.0);
    Mat::from_fn(n, n, |i, j| minus_i * (hr[(i, j)] - rh[(i, j)]) - rho[(i, j)] * damping[(i, j)])
}

/// The same right-hand side from `gamma sum_l (L rho L^dag - {L^dag L, rho}/2)`
/// with dense jump operators.
pub fn lindblad_rhs_full(rho: &Mat<C64>, h: &Mat<f64>, gamma: f64, diagonals: &[Vec<f64>]) -> Mat<C64> {
    let n = rho.nrows();
    let hc = complexify(h);
    let minus_i = C64::new(0.0, -1.0);
    let mut out = (&hc * rho - rho * &hc) * faer::Scale(minus_i);
    for d in diagonals {
        let l = Mat::from_fn(n, n, |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) });
        let ldl = l.adjoint() * &l;
        let term = &l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * faer::Scale(C64::new(0.5, 0.0));
        out += term * faer::Scale(C64::new(gamma, 0.0));
    }
    out
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Largest allowed step; `None` uses `min(0.01/J, 0.1/gamma)`.
    pub max_step: Option<f64>,
    pub hopping: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            max_step: None,
            hopping: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn step_limit(&self, gamma: f64) -> f64 {
        let mut dt = 0.01 / self.hopping;
        if gamma > 0.0 {
            dt = dt.min(0.1 / gamma);
        }
        match self.max_step {
            Some(s) => s.min(dt),
            None => dt,
        }
    }
}

/// Diagnostics of one output sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleHealth {
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

/// Classical RK4 on the master equation, sampled at `times` (ascending, from
/// 0). Returns each sample with its trace error (before renormalisation) and
/// smallest eigenvalue.
pub fn integrate_master(
    h: &Mat<f64>,
    diagonals: &[Vec<f64>],
    spec: &DephasingSpec,
    rho0: &DensityMatrix,
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<(DensityMatrix, SampleHealth)>> {
    let n = rho0.dim();
    if h.nrows() != n || diagonals.iter().any(|d| d.len() != n) {
        return Err(Error::domain("Hamiltonian, jump operators and state differ in dimension"));
    }
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("output times must be ascending and non-negative"));
    }
    let hc = complexify(h);
    let damping = damping_matrix(spec.gamma, diagonals);
    let dt_max = config.step_limit(spec.gamma);
    let half = faer::Scale(C64::new(0.5, 0.0));
    let mut rho = rho0.matrix.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - now;
        let steps = (span / dt_max).ceil() as usize;
        if steps > 0 {
            let dt = span / steps as f64;
            let s_dt = faer::Scale(C64::new(dt, 0.0));
            let s_half = faer::Scale(C64::new(0.5 * dt, 0.0));
            let s_sixth = faer::Scale(C64::new(dt / 6.0, 0.0));
            for _ in 0..steps {
                let k1 = lindblad_rhs(&rho, &hc, &damping);
                let k2 = lindblad_rhs(&(&rho + &k1 * s_half), &hc, &damping);
                let k3 = lindblad_rhs(&(&rho + &k2 * s_half), &hc, &damping);
                let k4 = lindblad_rhs(&(&rho + &k3 * s_dt), &hc, &damping);
                rho += (k1 + (k2 + k3) * faer::Scale(C64::new(2.0, 0.0)) + k4) * s_sixth;
            }
            // Restore exact Hermiticity; RK4 preserves it only to round-off.
            rho = (&rho + rho.adjoint()) * half;
        }
        now = target;
        let mut state = DensityMatrix {
            matrix: rho.clone(),
            time: target,
        };
        let trace_error = (state.trace() - 1.0).abs();
        if trace_error > TRACE_FAIL {
            return Err(Error::numeric(
                n,
                format!("trace drifted by {trace_error:e} at t={target}; reduce the integrator step"),
            ));
        }
        if trace_error > 0.0 && trace_error < TRACE_RENORMALISE {
            let tr = state.trace();
            rho *= faer::Scale(C64::new(1.0 / tr, 0.0));
            state.matrix = rho.clone();
        }
        let min_eigenvalue = state.min_eigenvalue()?;
        if min_eigenvalue < NEGATIVITY_FAIL {
            return Err(Error::numeric(
                n,
                format!("density matrix eigenvalue {min_eigenvalue:e} at t={target}; reduce the integrator step"),
            ));
        }
        out.push((
            state,
            SampleHealth {
                trace_error,
                min_eigenvalue,
            },
        ));
    }
    Ok(out)
}

/// One row of a dephasing trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingPoint {
    pub time: f64,
    pub gamma: f64,
    pub field: f64,
    pub qfi: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl DephasingPoint {
    pub fn qfi_over_t2(&self) -> f64 {
        if self.time > 0.0 {
            self.qfi / (self.time * self.time)
        } else {
            0.0
        }
    }
}

/// Mixed-state QFI along a dephasing trajectory, with `d rho / dh` from
/// central differences of trajectories at `h +- dh`.
pub fn dephasing_qfi_trajectory(
    probe: &StarkProbe,
    field: f64,
    spec: &DephasingSpec,
    times: &[f64],
    dh: f64,
    config: &IntegratorConfig,
) -> Result<Vec<DephasingPoint>> {
    if !(dh > 0.0) {
        return Err(Error::domain(format!("finite-difference step must be > 0, got {dh}")));
    }
    let diagonals = jump_diagonals(spec.form, probe)?;
    let rho0 = DensityMatrix::from_pure(&probe.initial_state(field).amplitudes, 0.0);
    let run = |h: f64| -> Result<Vec<(DensityMatrix, SampleHealth)>> {
        let ham = probe.hamiltonian(h)?;
        integrate_master(ham.matrix(), &diagonals, spec, &rho0, times, config)
    };
    let (centre, (minus, plus)) = rayon::join(|| run(field), || rayon::join(|| run(field - dh), || run(field + dh)));
    let (centre, minus, plus) = (centre?, minus?, plus?);
    let scale = faer::Scale(C64::new(0.5 / dh, 0.0));
    centre
        .iter()
        .zip(minus.iter().zip(&plus))
        .map(|((rho, health), ((lo, _), (hi, _)))| {
            let drho = (&hi.matrix - &lo.matrix) * scale;
            Ok(DephasingPoint {
                time: rho.time,
                gamma: spec.gamma,
                field,
                qfi: qfi_mixed(&rho.matrix, &drho)?,
                trace_error: health.trace_error,
                min_eigenvalue: health.min_eigenvalue,
            })
        })
        .collect()
}

pub const TRAJECTORY_CSV_HEADER: [&str; 7] = ["t", "gamma", "h", "qfi", "qfi_over_t2", "trace_err", "min_eig"];

pub fn write_trajectory_csv<W: Write>(mut out: W, points: &[DephasingPoint], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_CSV_HEADER)?;
    for p in points {
        w.write_record([
            csv_float(p.time),
            csv_float(p.gamma),
            csv_float(p.field),
            csv_float(p.qfi),
            csv_float(p.qfi_over_t2()),
            csv_float(p.trace_error),
            csv_float(p.min_eigenvalue),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{enumerate_sector, InitialState};
    use crate::dynamics::{diagonalize, evolve};
    use crate::probe::ProbeSpec;

    fn frob(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
        (a - b).norm_l2()
    }

    fn probe(sites: usize, n: Option<usize>) -> StarkProbe {
        let spec = match n {
            None => ProbeSpec::single_particle(sites, InitialState::Site { site: 1 }),
            Some(n) => ProbeSpec::many_body(sites, n, 0.4, InitialState::Centered { excitations: n }),
        };
        StarkProbe::new(spec).unwrap()
    }

    #[test]
    fn fast_and_full_rhs_agree() {
        let p = probe(5, Some(2));
        let h = p.hamiltonian(0.3).unwrap();
        let diags = jump_diagonals(DephasingForm::SigmaZ, &p).unwrap();
        let psi: Vec<C64> = (0..p.dim()).map(|k| C64::new((k as f64).sin(), (k as f64 * 0.7).cos())).collect();
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let psi: Vec<C64> = psi.iter().map(|a| a / norm).collect();
        let rho = DensityMatrix::from_pure(&psi, 0.0).matrix;
        let fast = lindblad_rhs(&rho, &complexify(h.matrix()), &damping_matrix(0.2, &diags));
        let full = lindblad_rhs_full(&rho, h.matrix(), 0.2, &diags);
        assert!(frob(&fast, &full) < 1e-13);
    }

    #[test]
    fn projector_and_sigma_z_agree_for_one_excitation() {
        let p = probe(4, None);
        let z = jump_diagonals(DephasingForm::SigmaZ, &p).unwrap();
        let pr = jump_diagonals(DephasingForm::Projector, &p).unwrap();
        let h = p.hamiltonian(0.2).unwrap();
        let psi = [0.5, 0.5, 0.5, 0.5].map(|x| C64::new(x, 0.1 * x));
        let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let rho = DensityMatrix::from_pure(&psi.map(|a| a / n), 0.0).matrix;
        let a = lindblad_rhs_full(&rho, h.matrix(), 0.3, &z);
        let b = lindblad_rhs_full(&rho, h.matrix(), 0.3, &pr);
        assert!(frob(&a, &b) < 1e-14);
        assert!(jump_diagonals(DephasingForm::Projector, &probe(5, Some(2))).is_err());
        let basis = enumerate_sector(4, 1).unwrap();
        assert_eq!(sector_jump_diagonals(DephasingForm::SigmaZ, &basis), z);
    }

    #[test]
    fn sigma_z_damping_is_two_gamma_per_differing_site() {
        let basis = enumerate_sector(4, 2).unwrap();
        let d = sector_jump_diagonals(DephasingForm::SigmaZ, &basis);
        let g = damping_matrix(0.1, &d);
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                let differ = (basis.configs()[i] ^ basis.configs()[j]).count_ones() as f64;
                assert!((g[(i, j)] - 2.0 * 0.1 * differ).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rhs_is_traceless_and_pure_dephasing_keeps_populations() {
        let d = jump_diagonals(DephasingForm::SigmaZ, &probe(4, None)).unwrap();
        let psi = [C64::new(0.5, 0.0); 4];
        let rho = DensityMatrix::from_pure(&psi, 0.0).matrix;
        let zero = Mat::<C64>::zeros(4, 4);
        let r = lindblad_rhs(&rho, &zero, &damping_matrix(0.7, &d));
        for i in 0..4 {
            assert_eq!(r[(i, i)], C64::new(0.0, 0.0));
            for j in 0..4 {
                if i != j {
                    assert!((r[(i, j)] + rho[(i, j)] * 2.8).norm() < 1e-15);
                }
            }
        }
        let h = complexify(probe(4, None).hamiltonian(0.5).unwrap().matrix());
        let r = lindblad_rhs(&rho, &h, &damping_matrix(0.0, &d));
        let tr: C64 = (0..4).map(|i| r[(i, i)]).sum();
        assert!(tr.norm() < 1e-15);
    }

    #[test]
    fn closed_system_limit() {
        let p = probe(6, None);
        let ham = p.hamiltonian(0.3).unwrap();
        let d = diagonalize(&ham).unwrap();
        let psi0 = p.initial_state(0.3);
        let diags = jump_diagonals(DephasingForm::SigmaZ, &p).unwrap();
        let spec = DephasingSpec::sigma_z(0.0).unwrap();
        let times = [0.0, 1.0, 7.5];
        let traj = integrate_master(
            ham.matrix(),
            &diags,
            &spec,
            &DensityMatrix::from_pure(&psi0.amplitudes, 0.0),
            &times,
            &IntegratorConfig {
                max_step: Some(0.0025),
                ..IntegratorConfig::default()
            },
        )
        .unwrap();
        for ((rho, health), &t) in traj.iter().zip(&times) {
            let exact = DensityMatrix::from_pure(&evolve(&d, &psi0, t).unwrap().amplitudes, t);
            assert!(frob(&rho.matrix, &exact.matrix) < 1e-8);
            assert!(health.trace_error < 1e-12);
            assert!(rho.hermiticity_error() < 1e-14);
        }
    }

    /// `exp(t Lsuper) vec(rho0)` with the Liouvillian assembled column by
    /// column from the full triple-product right-hand side and exponentiated
    /// by scaling and squaring of a Taylor series.
    fn superoperator_oracle(h: &Mat<f64>, gamma: f64, diags: &[Vec<f64>], rho0: &Mat<C64>, t: f64) -> Mat<C64> {
        let n = h.nrows();
        let nn = n * n;
        let mut lsup = Mat::<C64>::zeros(nn, nn);
        for col in 0..nn {
            let mut e = Mat::<C64>::zeros(n, n);
            e[(col % n, col / n)] = C64::new(1.0, 0.0);
            let r = lindblad_rhs_full(&e, h, gamma, diags);
            for row in 0..nn {
                lsup[(row, col)] = r[(row % n, row / n)];
            }
        }
        let norm = lsup.norm_l2() * t;
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let a = &lsup * faer::Scale(C64::new(t / 2f64.powi(squarings), 0.0));
        let mut exp = Mat::<C64>::identity(nn, nn);
        let mut term = Mat::<C64>::identity(nn, nn);
        for k in 1..30 {
            term = &term * &a * faer::Scale(C64::new(1.0 / k as f64, 0.0));
            exp += &term;
        }
        for _ in 0..squarings {
            exp = &exp * &exp;
        }
        let v = Mat::from_fn(nn, 1, |i, _| rho0[(i % n, i / n)]);
        let w = &exp * &v;
        Mat::from_fn(n, n, |i, j| w[(i + j * n, 0)])
    }

    #[test]
    fn matches_superoperator_exponential() {
        for (p, gamma) in [(probe(4, None), 0.3), (probe(5, Some(2)), 0.05)] {
            let ham = p.hamiltonian(0.4).unwrap();
            let diags = jump_diagonals(DephasingForm::SigmaZ, &p).unwrap();
            let rho0 = DensityMatrix::from_pure(&p.initial_state(0.4).amplitudes, 0.0);
            let spec = DephasingSpec::sigma_z(gamma).unwrap();
            let t = 3.0;
            let config = IntegratorConfig {
                max_step: Some(0.005),
                ..IntegratorConfig::default()
            };
            let traj = integrate_master(ham.matrix(), &diags, &spec, &rho0, &[t], &config).unwrap();
            let oracle = superoperator_oracle(ham.matrix(), gamma, &diags, &rho0.matrix, t);
            let err = frob(&traj[0].0.matrix, &oracle);
            assert!(err < 1e-7, "dim {}: {err:e}", p.dim());
        }
    }

    #[test]
    fn dephasing_destroys_coherence() {
        let p = probe(4, None);
        let spec = DephasingSpec::sigma_z(0.5).unwrap();
        let traj = dephasing_qfi_trajectory(&p, 0.3, &spec, &[0.0, 2.0, 60.0], 1e-6, &IntegratorConfig::default()).unwrap();
        assert_eq!(traj[0].qfi, 0.0);
        assert!(traj[2].qfi_over_t2() < 1e-3 * traj[1].qfi_over_t2());
        assert!(traj.iter().all(|x| x.min_eigenvalue > -1e-8));
    }

    #[test]
    fn negative_rate_is_rejected() {
        assert!(DephasingSpec::sigma_z(-0.1).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[], &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "t,gamma,h,qfi,qfi_over_t2,trace_err,min_eig");
    }
}
