//! Quantum and classical Fisher information.

use std::io::Write;

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::csv_float;
use crate::dynamics::{bloch_period, ParametricEvolution};
use crate::error::{Error, Result};

/// Probabilities at or below this are dropped from the CFI sum.
pub const CFI_CUTOFF: f64 = 1e-12;
/// Eigenvalue pairs of a density matrix summing below this are dropped from
/// the mixed-state QFI.
pub const MIXED_CUTOFF: f64 = 1e-10;
/// Relative slack of the seminorm bound `F_Q <= t^2 ||H2||^2`.
pub const BOUND_TOL: f64 = 1e-8;
/// `std / mean` above which a long-time average counts as unsaturated.
pub const SATURATION_SPREAD: f64 = 0.2;

const NORM_TOL: f64 = 1e-8;
const NEGATIVE_CLAMP: f64 = 1e-12;

fn clamp_negative(value: f64, scale: f64, dim: usize, what: &str) -> Result<f64> {
    if value >= 0.0 {
        return Ok(value);
    }
    if value >= -NEGATIVE_CLAMP * scale.max(1.0) {
        return Ok(0.0);
    }
    Err(Error::numeric(
        dim,
        format!("{what} came out negative ({value:e}); the state derivative is inconsistent"),
    ))
}

/// `4 (<dpsi|dpsi> - |<psi|dpsi>|^2)` for a normalised `psi`.
pub fn qfi_pure(psi: &[C64], dpsi: &[C64]) -> Result<f64> {
    if psi.len() != dpsi.len() {
        return Err(Error::domain(format!(
            "state has length {}, derivative {}",
            psi.len(),
            dpsi.len()
        )));
    }
    let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::domain(format!("state is not normalised (|psi|^2 = {norm})")));
    }
    let dd: f64 = dpsi.iter().map(|a| a.norm_sqr()).sum();
    let overlap = psi
        .iter()
        .zip(dpsi)
        .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b);
    let value = 4.0 * (dd - overlap.norm_sqr());
    clamp_negative(value, 4.0 * dd, psi.len(), "pure-state QFI")
}

/// Outcome distribution of the configuration measurement, optionally with
/// its derivative in `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    pub p: Vec<f64>,
    pub dp: Option<Vec<f64>>,
}

impl ProbabilityVector {
    /// `p_z = |psi_z|^2`, `dp_z = 2 Re(conj(psi_z) dpsi_z)`.
    pub fn from_state(psi: &[C64], dpsi: Option<&[C64]>) -> Self {
        let p = psi.iter().map(|a| a.norm_sqr()).collect();
        let dp = dpsi.map(|d| {
            psi.iter()
                .zip(d)
                .map(|(a, b)| 2.0 * (a.conj() * b).re)
                .collect()
        });
        Self { p, dp }
    }

    /// Validates and clamps tiny negatives to zero.
    pub fn new(mut p: Vec<f64>, dp: Option<Vec<f64>>) -> Result<Self> {
        if let Some(d) = &dp {
            if d.len() != p.len() {
                return Err(Error::domain("p and dp differ in length"));
            }
        }
        for x in p.iter_mut() {
            if !x.is_finite() || *x < -1e-14 {
                return Err(Error::domain(format!("invalid probability {x}")));
            }
            *x = x.max(0.0);
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!("probabilities sum to {total}")));
        }
        if let Some(d) = &dp {
            let drift: f64 = d.iter().sum();
            if drift.abs() > 1e-8 {
                return Err(Error::domain(format!("derivatives sum to {drift:e}")));
            }
        }
        Ok(Self { p, dp })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

pub fn configuration_probs(psi: &[C64], dpsi: Option<&[C64]>) -> ProbabilityVector {
    ProbabilityVector::from_state(psi, dpsi)
}

/// `sum_z dp_z^2 / p_z` over outcomes with `p_z > 1e-12`.
pub fn cfi(pv: &ProbabilityVector) -> Result<f64> {
    let dp = pv
        .dp
        .as_ref()
        .ok_or_else(|| Error::domain("CFI needs the probability derivative"))?;
    Ok(pv
        .p
        .iter()
        .zip(dp)
        .filter(|(&p, _)| p > CFI_CUTOFF)
        .map(|(&p, &d)| d * d / p)
        .sum())
}

/// `2 sum_{ij} |<i|drho|j>|^2 / (l_i + l_j)` over the eigenpairs of `rho`.
pub fn qfi_mixed(rho: &Mat<C64>, drho: &Mat<C64>) -> Result<f64> {
    let n = rho.nrows();
    if rho.ncols() != n || drho.nrows() != n || drho.ncols() != n {
        return Err(Error::domain("rho and drho must be square of equal size"));
    }
    let trace: f64 = (0..n).map(|i| rho[(i, i)].re).sum();
    if (trace - 1.0).abs() > 1e-8 {
        return Err(Error::domain(format!("density matrix has trace {trace}")));
    }
    let evd = rho
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numeric(n, format!("Hermitian eigensolver failed: {e:?}")))?;
    let lambda: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let v = evd.U();
    let rotated = v.adjoint() * drho * v;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = lambda[i] + lambda[j];
            if s > MIXED_CUTOFF {
                total += rotated[(i, j)].norm_sqr() / s;
            }
        }
    }
    clamp_negative(2.0 * total, total, n, "mixed-state QFI")
}

/// Where the long-time average samples, in multiples of `T_Bloch = 2 pi / h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTimeWindow {
    pub first: f64,
    pub last: f64,
    pub samples: usize,
}

impl Default for LongTimeWindow {
    fn default() -> Self {
        Self::bloch_multiples()
    }
}

impl LongTimeWindow {
    /// `t = k T_Bloch`, `k = 6..=10`.
    pub fn bloch_multiples() -> Self {
        Self {
            first: 6.0,
            last: 10.0,
            samples: 5,
        }
    }

    /// 81 evenly spaced samples over the same span, so the average runs over
    /// the Bloch phase instead of sitting on the revivals.
    pub fn phase_averaged() -> Self {
        Self {
            first: 6.0,
            last: 10.0,
            samples: 81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.first > 0.0) || !(self.last >= self.first) || self.samples == 0 {
            return Err(Error::domain(format!("invalid long-time window {self:?}")));
        }
        if self.samples == 1 && self.last != self.first {
            return Err(Error::domain("a one-sample window needs first == last"));
        }
        Ok(())
    }

    pub fn times(&self, field: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let period = bloch_period(field)?;
        if self.samples == 1 {
            return Ok(vec![self.first * period]);
        }
        let step = (self.last - self.first) / (self.samples - 1) as f64;
        Ok((0..self.samples)
            .map(|k| (self.first + step * k as f64) * period)
            .collect())
    }
}

/// Long-time `F/t^2` averages at one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTimeFisher {
    pub field: f64,
    /// Latest sampled time.
    pub time: f64,
    pub qfi_over_t2: f64,
    /// Sample standard deviation of `F_Q/t^2` over the window.
    pub qfi_spread: f64,
    pub cfi_over_t2: Option<f64>,
    pub saturated: bool,
    /// Largest `F_Q / (t^2 ||H2||^2)` seen in the window.
    pub bound_ratio: f64,
}

impl LongTimeFisher {
    pub fn relative_spread(&self) -> f64 {
        if self.qfi_over_t2 > 0.0 {
            self.qfi_spread / self.qfi_over_t2
        } else {
            0.0
        }
    }
}

pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Averages `F_Q/t^2` (and `F_C/t^2` when `with_cfi`) over the window.
pub fn long_time_fisher(
    evo: &ParametricEvolution,
    field: f64,
    seminorm: f64,
    window: &LongTimeWindow,
    with_cfi: bool,
) -> Result<LongTimeFisher> {
    let times = window.times(field)?;
    let mut q = Vec::with_capacity(times.len());
    let mut c = Vec::with_capacity(times.len());
    let mut bound_ratio: f64 = 0.0;
    for &t in &times {
        let t2 = t * t;
        let qfi = if with_cfi {
            let (qfi, pv) = evo.qfi_and_probabilities(t)?;
            c.push(cfi(&pv)? / t2);
            qfi
        } else {
            evo.qfi(t)?
        };
        q.push(qfi / t2);
        if seminorm > 0.0 {
            bound_ratio = bound_ratio.max(qfi / (t2 * seminorm * seminorm));
        }
    }
    let (mean, spread) = mean_and_sample_std(&q);
    let saturated = mean <= 0.0 || spread / mean <= SATURATION_SPREAD;
    Ok(LongTimeFisher {
        field,
        time: *times.last().expect("window has samples"),
        qfi_over_t2: mean,
        qfi_spread: spread,
        cfi_over_t2: with_cfi.then(|| mean_and_sample_std(&c).0),
        saturated,
        bound_ratio,
    })
}

/// Tally of `F_Q <= t^2 ||H2||^2` checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTally {
    pub points: usize,
    pub violations: usize,
    pub max_ratio: f64,
}

impl BoundTally {
    /// Records one ratio `F_Q / (t^2 ||H2||^2)`.
    pub fn record_ratio(&mut self, ratio: f64) {
        self.points += 1;
        self.max_ratio = self.max_ratio.max(ratio);
        if ratio > 1.0 + BOUND_TOL || ratio.is_nan() {
            self.violations += 1;
        }
    }

    pub fn record(&mut self, qfi: f64, t: f64, seminorm: f64) {
        self.record_ratio(qfi / (t * t * seminorm * seminorm));
    }

    pub fn merge(&mut self, other: &BoundTally) {
        self.points += other.points;
        self.violations += other.violations;
        self.max_ratio = self.max_ratio.max(other.max_ratio);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// One row of a Fisher sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherPoint {
    pub sites: usize,
    pub excitations: usize,
    pub anisotropy: f64,
    pub field: f64,
    pub time: f64,
    pub qfi: f64,
    pub cfi: Option<f64>,
    pub saturated: bool,
}

impl FisherPoint {
    pub fn from_long_time(
        sites: usize,
        excitations: usize,
        anisotropy: f64,
        lt: &LongTimeFisher,
    ) -> Self {
        let t2 = lt.time * lt.time;
        Self {
            sites,
            excitations,
            anisotropy,
            field: lt.field,
            time: lt.time,
            qfi: lt.qfi_over_t2 * t2,
            cfi: lt.cfi_over_t2.map(|c| c * t2),
            saturated: lt.saturated,
        }
    }
}

pub const FISHER_CSV_HEADER: [&str; 10] = [
    "L", "N", "Delta", "h", "t", "qfi", "qfi_over_t2", "cfi", "cfi_over_t2", "saturated",
];

/// Writes the sweep CSV; missing CFI values are left empty.
pub fn write_fisher_csv<W: Write>(mut out: W, points: &[FisherPoint], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FISHER_CSV_HEADER)?;
    for p in points {
        let t2 = p.time * p.time;
        let (cfi, cfi_t2) = match p.cfi {
            Some(c) => (csv_float(c), csv_float(c / t2)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            p.sites.to_string(),
            p.excitations.to_string(),
            csv_float(p.anisotropy),
            csv_float(p.field),
            csv_float(p.time),
            csv_float(p.qfi),
            csv_float(p.qfi / t2),
            cfi,
            cfi_t2,
            p.saturated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn zero_derivative() {
        let psi = [c(0.6, 0.0), c(0.0, 0.8)];
        assert_eq!(qfi_pure(&psi, &[c(0.0, 0.0); 2]).unwrap(), 0.0);
    }

    #[test]
    fn two_level_phase() {
        let (h, t) = (0.37, 4.2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ph = C64::from_polar(1.0, -h * t);
        let psi = [c(s, 0.0), ph * s];
        let dpsi = [c(0.0, 0.0), c(0.0, -t) * ph * s];
        assert!((qfi_pure(&psi, &dpsi).unwrap() - t * t).abs() < 1e-12);
    }

    #[test]
    fn unnormalised_state_is_rejected() {
        let psi = [c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(qfi_pure(&psi, &psi), Err(Error::Domain(_))));
    }

    #[test]
    fn binomial_phase_model() {
        let (h, t): (f64, f64) = (0.3, 2.5);
        let x = h * t / 2.0;
        let p = vec![x.cos().powi(2), x.sin().powi(2)];
        let dp = vec![-t * x.sin() * x.cos(), t * x.sin() * x.cos()];
        let pv = ProbabilityVector::new(p, Some(dp)).unwrap();
        assert!((cfi(&pv).unwrap() - t * t).abs() < 1e-12);
    }

    #[test]
    fn cfi_without_derivative_fails() {
        let pv = ProbabilityVector::new(vec![1.0], None).unwrap();
        assert!(cfi(&pv).is_err());
        let pv = ProbabilityVector::new(vec![0.5, 0.5], Some(vec![0.0, 0.0])).unwrap();
        assert_eq!(cfi(&pv).unwrap(), 0.0);
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.6], None).is_err());
        assert!(ProbabilityVector::new(vec![1.0, -1e-3], None).is_err());
        let pv = ProbabilityVector::new(vec![1.0, -1e-15], None).unwrap();
        assert_eq!(pv.p[1], 0.0);
        assert!(ProbabilityVector::new(vec![0.5, 0.5], Some(vec![0.1, 0.0])).is_err());
    }

    #[test]
    fn delta_distribution_from_basis_state() {
        let psi = [c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)];
        let pv = configuration_probs(&psi, None);
        assert_eq!(pv.p, vec![0.0, 1.0, 0.0]);
    }

    fn projector(psi: &[C64]) -> Mat<C64> {
        Mat::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    #[test]
    fn mixed_matches_pure() {
        let raw = [c(0.3, 0.1), c(-0.5, 0.4), c(0.2, -0.6), c(0.1, 0.2)];
        let n = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let psi: Vec<C64> = raw.iter().map(|a| a / n).collect();
        let mut dpsi = [c(0.1, -0.3), c(0.7, 0.2), c(-0.4, 0.1), c(0.05, 0.5)];
        // A derivative of a normalised family satisfies Re<psi|dpsi> = 0.
        let ov: C64 = psi.iter().zip(&dpsi).fold(c(0.0, 0.0), |s, (a, b)| s + a.conj() * b);
        for (d, a) in dpsi.iter_mut().zip(&psi) {
            *d -= a * ov.re;
        }
        let rho = projector(&psi);
        let drho = Mat::from_fn(4, 4, |i, j| dpsi[i] * psi[j].conj() + psi[i] * dpsi[j].conj());
        let pure = qfi_pure(&psi, &dpsi).unwrap();
        let mixed = qfi_mixed(&rho, &drho).unwrap();
        assert!((mixed - pure).abs() < 1e-8 * pure, "{mixed} vs {pure}");
    }

    #[test]
    fn maximally_mixed_without_derivative() {
        let rho = Mat::from_fn(3, 3, |i, j| if i == j { c(1.0 / 3.0, 0.0) } else { c(0.0, 0.0) });
        assert_eq!(qfi_mixed(&rho, &Mat::zeros(3, 3)).unwrap(), 0.0);
        let bad = Mat::from_fn(3, 3, |i, j| if i == j { c(0.5, 0.0) } else { c(0.0, 0.0) });
        assert!(qfi_mixed(&bad, &Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn window_times() {
        let w = LongTimeWindow::bloch_multiples();
        let t = w.times(0.5).unwrap();
        let period = 4.0 * std::f64::consts::PI;
        assert_eq!(t.len(), 5);
        for (k, tk) in t.iter().enumerate() {
            assert!((tk - (6 + k) as f64 * period).abs() < 1e-12);
        }
        assert_eq!(LongTimeWindow::phase_averaged().times(1.0).unwrap().len(), 81);
        assert!(w.times(0.0).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_and_sample_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bound_tally() {
        let mut b = BoundTally::default();
        b.record(8.0, 2.0, 1.5);
        b.record(9.0, 2.0, 1.5);
        assert!(b.passed());
        b.record(9.0 * (1.0 + 1e-6), 2.0, 1.5);
        assert!(!b.passed());
        assert_eq!(b.points, 3);
    }

    #[test]
    fn csv_header_and_empty_cfi() {
        let p = FisherPoint {
            sites: 4,
            excitations: 1,
            anisotropy: 0.0,
            field: 0.5,
            time: 2.0,
            qfi: 8.0,
            cfi: None,
            saturated: true,
        };
        let mut buf = Vec::new();
        write_fisher_csv(&mut buf, &[p], &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "L,N,Delta,h,t,qfi,qfi_over_t2,cfi,cfi_over_t2,saturated");
        assert_eq!(lines.next().unwrap(), "4,1,0,0.5,2,8,2,,,true");
    }

    proptest! {
        #[test]
        fn global_phase_invariance(
            re in prop::collection::vec(-1.0f64..1.0, 6),
            im in prop::collection::vec(-1.0f64..1.0, 6),
            dre in prop::collection::vec(-1.0f64..1.0, 6),
            phase in 0.0f64..6.3,
        ) {
            let raw: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            let n = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let psi: Vec<C64> = raw.iter().map(|a| a / n).collect();
            let dpsi: Vec<C64> = dre.iter().map(|&a| c(a, 0.5 * a)).collect();
            let u = C64::from_polar(1.0, phase);
            let rot: Vec<C64> = psi.iter().map(|a| a * u).collect();
            let drot: Vec<C64> = dpsi.iter().map(|a| a * u).collect();
            let f0 = qfi_pure(&psi, &dpsi).unwrap();
            let f1 = qfi_pure(&rot, &drot).unwrap();
            prop_assert!((f0 - f1).abs() <= 1e-12 * f0.max(1.0));
            prop_assert!(f0 >= 0.0);
        }

        #[test]
        fn cfi_never_exceeds_qfi(
            re in prop::collection::vec(-1.0f64..1.0, 5),
            im in prop::collection::vec(-1.0f64..1.0, 5),
            dre in prop::collection::vec(-1.0f64..1.0, 5),
            dim_ in prop::collection::vec(-1.0f64..1.0, 5),
        ) {
            let raw: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            let n = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            prop_assume!(n > 1e-3);
            let psi: Vec<C64> = raw.iter().map(|a| a / n).collect();
            let mut dpsi: Vec<C64> = dre.iter().zip(&dim_).map(|(&a, &b)| c(a, b)).collect();
            // Keep the derivative tangent to the unit sphere: Re<psi|dpsi> = 0.
            let ov: C64 = psi.iter().zip(&dpsi).fold(c(0.0, 0.0), |s, (a, b)| s + a.conj() * b);
            for (d, a) in dpsi.iter_mut().zip(&psi) {
                *d -= a * ov.re;
            }
            let q = qfi_pure(&psi, &dpsi).unwrap();
            let f = cfi(&configuration_probs(&psi, Some(&dpsi))).unwrap();
            prop_assert!(f <= q * (1.0 + 1e-8) + 1e-12, "cfi {} qfi {}", f, q);
        }
    }
}
