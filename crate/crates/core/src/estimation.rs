//! Synthetic configuration measurements and grid maximum-likelihood
//! estimation of the field.
//!
//! Randomness comes from ChaCha8 seeded with the master seed; repetition `r`
//! draws from stream `r` of that generator, so any single repetition can be
//! replayed without the others.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv_float;
use crate::error::{Error, Result};
use crate::fisher::{cfi, ProbabilityVector};
use crate::probe::StarkProbe;

/// Name of the generator recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), stream = repetition index";

/// Outcome counts of `samples` configuration measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub counts: Vec<u64>,
    pub samples: u64,
    pub seed: u64,
}

/// Generator for repetition `rep` under master seed `seed`.
pub fn repetition_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Multinomial draw as a chain of conditional binomials.
pub fn sample_with_rng(p: &[f64], samples: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if samples == 0 {
        return Err(Error::domain("at least one sample is required"));
    }
    // tail[k] = sum_{j > k} p_j, summed from the end so it is exactly zero
    // past the last possible outcome.
    let mut tail = vec![0.0f64; p.len()];
    for k in (0..p.len().saturating_sub(1)).rev() {
        tail[k] = tail[k + 1] + p[k + 1].max(0.0);
    }
    let mut counts = vec![0u64; p.len()];
    let mut left = samples;
    for (k, &pk) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        let pk = pk.max(0.0);
        let q = if tail[k] == 0.0 { 1.0 } else { pk / (pk + tail[k]) };
        let draw = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q)
                .map_err(|e| Error::domain(format!("binomial({left}, {q}): {e}")))?
                .sample(rng)
        };
        counts[k] = draw;
        left -= draw;
    }
    if left > 0 {
        return Err(Error::domain("distribution has no probability mass"));
    }
    Ok(counts)
}

pub fn sample_configurations(pv: &ProbabilityVector, samples: u64, seed: u64) -> Result<MeasurementRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(MeasurementRecord {
        counts: sample_with_rng(&pv.p, samples, &mut rng)?,
        samples,
        seed,
    })
}

/// `sum_z n_z ln p_z`; `-inf` if an observed outcome has zero probability.
pub fn log_likelihood(counts: &[u64], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&n, &pz) in counts.iter().zip(p) {
        if n == 0 {
            continue;
        }
        if pz <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += n as f64 * pz.ln();
    }
    total
}

/// Outcome distributions on an ascending field grid, computed once and
/// shared by every repetition.
#[derive(Debug, Clone)]
pub struct ModelCache {
    fields: Vec<f64>,
    probs: Vec<Vec<f64>>,
}

impl ModelCache {
    pub fn new(fields: Vec<f64>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::domain("field grid is empty"));
        }
        if fields.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("field grid must be strictly ascending"));
        }
        if probs.len() != fields.len() {
            return Err(Error::domain("one distribution per grid point is required"));
        }
        let k = probs[0].len();
        if probs.iter().any(|p| p.len() != k) {
            return Err(Error::domain("distributions differ in length"));
        }
        Ok(Self { fields, probs })
    }

    /// Evaluates `model` at every grid point in parallel.
    pub fn build<F>(fields: Vec<f64>, model: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<Vec<f64>> + Sync,
    {
        let probs = fields.par_iter().map(|&h| model(h)).collect::<Result<Vec<_>>>()?;
        Self::new(fields, probs)
    }

    /// Configuration-measurement distribution of `probe` at time `t`.
    pub fn from_probe(probe: &StarkProbe, fields: Vec<f64>, t: f64) -> Result<Self> {
        Self::build(fields, |h| Ok(probe.evolution(h)?.state(t).iter().map(|a| a.norm_sqr()).collect()))
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn probs(&self, k: usize) -> &[f64] {
        &self.probs[k]
    }

    /// Every grid point predicts the same distribution.
    pub fn is_uninformative(&self) -> bool {
        let first = &self.probs[0];
        self.probs
            .iter()
            .all(|p| p.iter().zip(first).all(|(a, b)| (a - b).abs() <= 1e-15))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodGrid {
    pub fields: Vec<f64>,
    pub loglik: Vec<f64>,
    pub argmax: usize,
}

pub fn likelihood_grid(counts: &[u64], model: &ModelCache) -> Result<LikelihoodGrid> {
    let loglik: Vec<f64> = model.probs.iter().map(|p| log_likelihood(counts, p)).collect();
    let mut argmax = None;
    let mut best = f64::NEG_INFINITY;
    for (k, &l) in loglik.iter().enumerate() {
        // Strict comparison keeps the smallest field among ties.
        if l > best {
            best = l;
            argmax = Some(k);
        }
    }
    let argmax = argmax.ok_or_else(|| {
        Error::Estimation("log-likelihood is -inf on the whole grid; the model cannot produce the data".into())
    })?;
    Ok(LikelihoodGrid {
        fields: model.fields.clone(),
        loglik,
        argmax,
    })
}

/// Grid argmax of the likelihood, optionally refined by the vertex of the
/// parabola through the argmax and its neighbours.
pub fn mle(counts: &[u64], model: &ModelCache, refine: bool) -> Result<f64> {
    let grid = likelihood_grid(counts, model)?;
    let k = grid.argmax;
    let h = grid.fields[k];
    if !refine || k == 0 || k + 1 == grid.fields.len() {
        return Ok(h);
    }
    let (x0, x1, x2) = (grid.fields[k - 1], h, grid.fields[k + 1]);
    let (y0, y1, y2) = (grid.loglik[k - 1], grid.loglik[k], grid.loglik[k + 1]);
    if !(y0.is_finite() && y2.is_finite()) {
        return Ok(h);
    }
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if !(curvature < 0.0) {
        return Ok(h);
    }
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
    Ok(vertex.clamp(x0, x2))
}

/// Spread of the estimator over repetitions, against the Cramer-Rao bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub h_true: f64,
    pub h_es_mean: f64,
    /// Population standard deviation of the estimates.
    pub delta_h: f64,
    /// `1 / sqrt(M F_C)` at `h_true`.
    pub crb: f64,
    pub samples: u64,
    pub repetitions: usize,
    pub seed: u64,
    /// The data carry no information on the grid (flat model or `F_C = 0`).
    pub degenerate: bool,
}

/// Runs `repetitions` sample-then-estimate rounds. `truth` carries the
/// distribution and its derivative at `h_true`.
pub fn estimator_statistics(
    h_true: f64,
    truth: &ProbabilityVector,
    model: &ModelCache,
    samples: u64,
    repetitions: usize,
    seed: u64,
    refine: bool,
) -> Result<EstimateResult> {
    if repetitions < 2 {
        return Err(Error::domain(format!("at least 2 repetitions are required, got {repetitions}")));
    }
    let fc = cfi(truth)?;
    let estimates = (0..repetitions as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = repetition_rng(seed, rep);
            let counts = sample_with_rng(&truth.p, samples, &mut rng)?;
            mle(&counts, model, refine)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let crb = if fc > 0.0 {
        1.0 / (samples as f64 * fc).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(EstimateResult {
        h_true,
        h_es_mean: mean,
        delta_h: var.sqrt(),
        crb,
        samples,
        repetitions,
        seed,
        degenerate: !(fc > 0.0) || model.is_uninformative(),
    })
}

/// Distribution and derivative of the configuration measurement of `probe`
/// at `(h, t)`.
pub fn probe_truth(probe: &StarkProbe, field: f64, t: f64) -> Result<ProbabilityVector> {
    let evo = probe.evolution(field)?;
    Ok(ProbabilityVector::from_state(&evo.state(t), Some(&evo.derivative(t))))
}

pub const ESTIMATION_CSV_HEADER: [&str; 7] = ["h_true", "h_es_mean", "delta_h", "crb", "M", "repetitions", "seed"];

pub fn write_estimation_csv<W: Write>(mut out: W, rows: &[EstimateResult], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATION_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            csv_float(r.h_true),
            csv_float(r.h_es_mean),
            csv_float(r.delta_h),
            csv_float(r.crb),
            r.samples.to_string(),
            r.repetitions.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
