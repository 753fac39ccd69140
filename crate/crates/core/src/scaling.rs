//! Power-law fits and the exponent-extraction protocols built on the
//! long-time Fisher information.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::InitialState;
use crate::error::{Error, Result};
use crate::fisher::{LongTimeFisher, LongTimeWindow};
use crate::probe::{ProbeSpec, StarkProbe};

/// Fits with `r^2` below this are flagged.
pub const MIN_R_SQUARED: f64 = 0.98;
/// Relative increment below which a size sweep counts as flat.
pub const PLATEAU_INCREMENT: f64 = 0.05;

/// `y = exp(log_prefactor) * x^exponent`, least squares in log-log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    /// Standard error of the slope from the residuals; 0 for two points.
    pub exponent_stderr: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub flagged: bool,
}

impl ScalingFit {
    pub fn points(&self) -> usize {
        self.x.len()
    }

    pub fn predict(&self, x: f64) -> f64 {
        (self.log_prefactor + self.exponent * x.ln()).exp()
    }
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let stderr = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, r2.clamp(0.0, 1.0), stderr)
}

/// Ordinary least squares on `(ln x, ln y)`. Needs at least three points.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<ScalingFit> {
    fit_power_law_min(x, y, 3)
}

fn fit_power_law_min(x: &[f64], y: &[f64], min_points: usize) -> Result<ScalingFit> {
    if x.len() != y.len() {
        return Err(Error::domain("x and y differ in length"));
    }
    if x.len() < min_points {
        return Err(Error::domain(format!("power-law fit needs {min_points} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::domain("power-law fit needs finite positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    if lx.iter().all(|v| *v == lx[0]) {
        return Err(Error::domain("power-law fit needs at least two distinct x"));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, intercept, r2, stderr) = least_squares(&lx, &ly);
    // A flat series has no variance to explain; it is a perfect fit.
    let flat = ly.iter().all(|v| (v - ly[0]).abs() <= 1e-14 * ly[0].abs().max(1.0));
    let r_squared = if flat { 1.0 } else { r2 };
    Ok(ScalingFit {
        exponent: slope,
        log_prefactor: intercept,
        r_squared,
        exponent_stderr: stderr,
        x: x.to_vec(),
        y: y.to_vec(),
        flagged: r_squared < MIN_R_SQUARED,
    })
}

/// Evaluates the long-time Fisher information on a field grid, in grid
/// order.
pub fn long_time_sweep(
    probe: &StarkProbe,
    fields: &[f64],
    window: &LongTimeWindow,
    with_cfi: bool,
) -> Result<Vec<LongTimeFisher>> {
    fields
        .par_iter()
        .map(|&h| probe.long_time(h, window, with_cfi))
        .collect()
}

/// Field grid for locating the transition, in units of `hL/J`: a coarse
/// pass over `[hl_min, hl_max]`, then a finer pass between the neighbours
/// of the coarse maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionGrid {
    pub hl_min: f64,
    pub hl_max: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
}

impl Default for TransitionGrid {
    /// Spans `[0.25, 2] * 8` with resolution `0.05 * 8`.
    fn default() -> Self {
        Self {
            hl_min: 2.0,
            hl_max: 16.0,
            coarse_step: 0.8,
            fine_step: 0.4,
        }
    }
}

/// `start, start + step, ...` up to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::domain(format!("invalid grid [{start}, {stop}] step {step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + step * k as f64).collect())
}

impl TransitionGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.hl_min > 0.0) || !(self.hl_max > self.hl_min) || !(self.coarse_step > 0.0) || !(self.fine_step > 0.0) {
            return Err(Error::domain(format!("invalid transition grid {self:?}")));
        }
        Ok(())
    }

    pub fn coarse_fields(&self, sites: usize, hopping: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let scale = hopping / sites as f64;
        Ok(linear_grid(self.hl_min, self.hl_max, self.coarse_step)?
            .into_iter()
            .map(|x| x * scale)
            .collect())
    }

    /// Fine points strictly between the coarse neighbours of `hl_peak`
    /// that are not already on the coarse grid.
    pub fn fine_fields(&self, sites: usize, hopping: f64, hl_peak: f64) -> Result<Vec<f64>> {
        if self.fine_step >= self.coarse_step {
            return Ok(Vec::new());
        }
        let scale = hopping / sites as f64;
        let lo = (hl_peak - self.coarse_step).max(self.hl_min);
        let hi = (hl_peak + self.coarse_step).min(self.hl_max);
        Ok(linear_grid(lo, hi, self.fine_step)?
            .into_iter()
            .filter(|x| {
                let k = (x - self.hl_min) / self.coarse_step;
                (k - k.round()).abs() > 1e-6
            })
            .map(|x| x * scale)
            .collect())
    }
}

/// Argmax of the long-time `F_Q/t^2` over a field grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub sites: usize,
    pub field: f64,
    /// `8J/L`.
    pub reference: f64,
    pub qfi_over_t2: f64,
    /// The maximum sits on an end of the scanned grid.
    pub at_boundary: bool,
    /// Every evaluated point, sorted by field.
    pub curve: Vec<LongTimeFisher>,
}

impl TransitionEstimate {
    pub fn scaled(&self, hopping: f64) -> f64 {
        self.field * self.sites as f64 / hopping
    }
}

fn argmax_by_qfi(curve: &[LongTimeFisher]) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    for (k, p) in curve.iter().enumerate() {
        // Strict: ties stay at the smaller field.
        if p.qfi_over_t2 > best {
            best = p.qfi_over_t2;
            arg = Some(k);
        }
    }
    arg
}

/// Grid argmax of a precomputed curve (sorted by field).
pub fn locate_transition(sites: usize, hopping: f64, curve: Vec<LongTimeFisher>) -> Result<TransitionEstimate> {
    let k = argmax_by_qfi(&curve).ok_or_else(|| Error::domain("empty or non-finite transition curve"))?;
    Ok(TransitionEstimate {
        sites,
        field: curve[k].field,
        reference: 8.0 * hopping / sites as f64,
        qfi_over_t2: curve[k].qfi_over_t2,
        at_boundary: k == 0 || k + 1 == curve.len(),
        curve,
    })
}

/// Coarse-then-fine grid search for the field maximising the long-time QFI.
pub fn find_transition(probe: &StarkProbe, grid: &TransitionGrid, window: &LongTimeWindow) -> Result<TransitionEstimate> {
    let sites = probe.sites();
    let hopping = probe.spec().hopping;
    let coarse = grid.coarse_fields(sites, hopping)?;
    let mut curve = long_time_sweep(probe, &coarse, window, false)?;
    let k = argmax_by_qfi(&curve).ok_or_else(|| Error::domain("non-finite transition curve"))?;
    let at_boundary = k == 0 || k + 1 == curve.len();
    let fine = grid.fine_fields(sites, hopping, coarse[k] * sites as f64 / hopping)?;
    curve.extend(long_time_sweep(probe, &fine, window, false)?);
    curve.sort_by(|a, b| a.field.total_cmp(&b.field));
    let mut est = locate_transition(sites, hopping, curve)?;
    est.at_boundary = at_boundary;
    Ok(est)
}

/// Field at which an exponent protocol evaluates each system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldChoice {
    Fixed { field: f64 },
    /// Each system at its own transition field.
    Transition { grid: TransitionGrid },
}

/// Long-time QFI of one system under a [`FieldChoice`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPoint {
    pub sites: usize,
    pub excitations: usize,
    pub value: LongTimeFisher,
    pub transition: Option<TransitionEstimate>,
}

pub fn evaluate_choice(probe: &StarkProbe, choice: &FieldChoice, window: &LongTimeWindow) -> Result<ProtocolPoint> {
    let (value, transition) = match choice {
        FieldChoice::Fixed { field } => (probe.long_time(*field, window, false)?, None),
        FieldChoice::Transition { grid } => {
            let est = find_transition(probe, grid, window)?;
            let value = est
                .curve
                .iter()
                .find(|p| p.field == est.field)
                .cloned()
                .expect("argmax lies on the curve");
            (value, Some(est))
        }
    };
    Ok(ProtocolPoint {
        sites: probe.sites(),
        excitations: probe.excitations(),
        value,
        transition,
    })
}

/// Exponent of long-time `F_Q/t^2` against chain length, each size built by
/// `make_probe` and evaluated under `choice`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeScaling {
    pub fit: ScalingFit,
    pub points: Vec<ProtocolPoint>,
}

pub fn size_scaling<F>(sizes: &[usize], make_probe: F, choice: &FieldChoice, window: &LongTimeWindow) -> Result<SizeScaling>
where
    F: Fn(usize) -> Result<StarkProbe>,
{
    let points = sizes
        .iter()
        .map(|&l| evaluate_choice(&make_probe(l)?, choice, window))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.sites as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value.qfi_over_t2).collect();
    Ok(SizeScaling {
        fit: fit_power_law(&x, &y)?,
        points,
    })
}

/// `N = 3` (or any fixed `N`) centred initial states on odd chains, each at
/// its own transition field.
pub fn fixed_n_beta(
    excitations: usize,
    sizes: &[usize],
    anisotropy: f64,
    grid: &TransitionGrid,
    window: &LongTimeWindow,
) -> Result<SizeScaling> {
    size_scaling(
        sizes,
        |l| StarkProbe::new(ProbeSpec::many_body(l, excitations, anisotropy, InitialState::Centered { excitations })),
        &FieldChoice::Transition { grid: *grid },
        window,
    )
}

/// Exponent of long-time `F_Q/t^2` against excitation number on a fixed
/// odd chain with centred initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub sites: usize,
    pub anisotropy: f64,
    pub fit: ScalingFit,
    pub points: Vec<ProtocolPoint>,
}

pub fn alpha_fit(
    sites: usize,
    excitations: &[usize],
    anisotropy: f64,
    choice: &FieldChoice,
    window: &LongTimeWindow,
) -> Result<AlphaFit> {
    let points = excitations
        .iter()
        .map(|&n| {
            let probe = StarkProbe::new(ProbeSpec::many_body(sites, n, anisotropy, InitialState::Centered { excitations: n }))?;
            evaluate_choice(&probe, choice, window)
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.excitations as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.value.qfi_over_t2).collect();
    Ok(AlphaFit {
        sites,
        anisotropy,
        fit: fit_power_law(&x, &y)?,
        points,
    })
}

/// Long-time `F_Q/t^2` on a (sizes x fields) table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSweep {
    pub sizes: Vec<usize>,
    pub fields: Vec<f64>,
    /// `values[i][j]` at `sizes[i]`, `fields[j]`.
    pub values: Vec<Vec<LongTimeFisher>>,
}

pub fn size_sweep<F>(sizes: &[usize], fields: &[f64], make_probe: F, window: &LongTimeWindow) -> Result<SizeSweep>
where
    F: Fn(usize) -> Result<StarkProbe>,
{
    let values = sizes
        .iter()
        .map(|&l| long_time_sweep(&make_probe(l)?, fields, window, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(SizeSweep {
        sizes: sizes.to_vec(),
        fields: fields.to_vec(),
        values,
    })
}

/// Local size exponent at fixed field, placed at `hL/J` with `L` the
/// geometric mean of the sizes in the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPoint {
    pub field: f64,
    pub scaled_field: f64,
    pub fit: ScalingFit,
}

/// `d ln(F_Q/t^2) / d ln L` at fixed `h`, fitted over every run of `span`
/// consecutive sizes. Sorted by `hL/J`.
pub fn beta_scan(sweep: &SizeSweep, span: usize, hopping: f64) -> Result<Vec<BetaPoint>> {
    if span < 2 || span > sweep.sizes.len() {
        return Err(Error::domain(format!("span {span} does not fit {} sizes", sweep.sizes.len())));
    }
    let mut out = Vec::new();
    for (j, &h) in sweep.fields.iter().enumerate() {
        for start in 0..=sweep.sizes.len() - span {
            let sizes = &sweep.sizes[start..start + span];
            let x: Vec<f64> = sizes.iter().map(|&l| l as f64).collect();
            let y: Vec<f64> = (start..start + span).map(|i| sweep.values[i][j].qfi_over_t2).collect();
            let fit = fit_power_law_min(&x, &y, 2)?;
            let geo = (x.iter().map(|v| v.ln()).sum::<f64>() / span as f64).exp();
            out.push(BetaPoint {
                field: h,
                scaled_field: h * geo / hopping,
                fit,
            });
        }
    }
    out.sort_by(|a, b| a.scaled_field.total_cmp(&b.scaled_field));
    Ok(out)
}

/// Long-time `F_Q/t^2` against size at one field, with the size beyond
/// which it stops growing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScan {
    pub field: f64,
    pub sizes: Vec<usize>,
    pub values: Vec<f64>,
    /// Smallest size after which every relative increment is below 5%;
    /// `None` if the curve is still growing at the end.
    pub onset: Option<usize>,
}

pub fn plateau_onset(sizes: &[usize], values: &[f64]) -> Option<usize> {
    let flat: Vec<bool> = values
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0] < PLATEAU_INCREMENT)
        .collect();
    if !flat.last().copied().unwrap_or(false) {
        return None;
    }
    let mut k = flat.len();
    while k > 0 && flat[k - 1] {
        k -= 1;
    }
    Some(sizes[k])
}

pub fn plateau_scan<F>(field: f64, sizes: &[usize], make_probe: F, window: &LongTimeWindow) -> Result<PlateauScan>
where
    F: Fn(usize) -> Result<StarkProbe> + Sync,
{
    if sizes.len() < 3 {
        return Err(Error::domain("plateau scan needs at least three sizes"));
    }
    let values = sizes
        .par_iter()
        .map(|&l| Ok(make_probe(l)?.long_time(field, window, false)?.qfi_over_t2))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PlateauScan {
        field,
        sizes: sizes.to_vec(),
        onset: plateau_onset(sizes, &values),
        values,
    })
}

/// One entry of a fit-report JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub name: String,
    pub inputs: serde_json::Value,
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub exponent_stderr: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub flags: Vec<String>,
}

impl FitReport {
    pub fn new(name: impl Into<String>, inputs: serde_json::Value, fit: &ScalingFit, mut flags: Vec<String>) -> Self {
        if fit.flagged {
            flags.push(format!("r_squared {:.4} below {MIN_R_SQUARED}", fit.r_squared));
        }
        Self {
            name: name.into(),
            inputs,
            exponent: fit.exponent,
            log_prefactor: fit.log_prefactor,
            r_squared: fit.r_squared,
            exponent_stderr: fit.exponent_stderr,
            x: fit.x.clone(),
            y: fit.y.clone(),
            flags,
        }
    }
}
