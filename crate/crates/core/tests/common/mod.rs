//! Reference constructions shared by the integration suites. None of these
//! go through the library's sector machinery or eigensolver paths.

#![allow(dead_code)]

use starkprobe::faer::Mat;
use starkprobe::num_complex::Complex64 as C64;

/// `sum_{l<L} -(J/2)(X X + Y Y + Delta Z Z) + h sum_l l n_l` on all `2^L`
/// states, built from single-site Pauli actions. Bit `l - 1` of a state index
/// is the occupation of site `l`; `Z = +1` on an occupied site.
pub fn full_space_xxz(sites: usize, hopping: f64, field: f64, anisotropy: f64) -> Vec<Vec<C64>> {
    let dim = 1usize << sites;
    let mut h = vec![vec![C64::new(0.0, 0.0); dim]; dim];
    let z = |s: usize, l: usize| if (s >> l) & 1 == 1 { 1.0 } else { -1.0 };
    for s in 0..dim {
        for l in 0..sites - 1 {
            let flipped = s ^ (0b11 << l);
            // X_l X_{l+1}
            h[flipped][s] += C64::new(-0.5 * hopping, 0.0);
            // Y|0> = -i|1>, Y|1> = i|0> in the (empty, occupied) basis.
            let y = |bit: f64| if bit > 0.0 { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) };
            h[flipped][s] += y(z(s, l)) * y(z(s, l + 1)) * (-0.5 * hopping);
            h[s][s] += C64::new(-0.5 * hopping * anisotropy * z(s, l) * z(s, l + 1), 0.0);
        }
        let weight: f64 = (0..sites).filter(|&l| (s >> l) & 1 == 1).map(|l| (l + 1) as f64).sum();
        h[s][s] += C64::new(field * weight, 0.0);
    }
    h
}

/// Restriction of a full-space operator to the states with `excitations`
/// set bits, in ascending order of the state index.
pub fn restrict(full: &[Vec<C64>], sites: usize, excitations: usize) -> (Vec<u64>, Vec<Vec<C64>>) {
    let states: Vec<usize> = (0..1usize << sites)
        .filter(|s| s.count_ones() as usize == excitations)
        .collect();
    let block = states
        .iter()
        .map(|&r| states.iter().map(|&c| full[r][c]).collect())
        .collect();
    (states.into_iter().map(|s| s as u64).collect(), block)
}

/// `J_n(x)` from its power series; accurate to ~1e-13 for `|x| <= 10`.
pub fn bessel_series(n: i32, x: f64) -> f64 {
    let m = n.unsigned_abs();
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=m {
        term *= half / k as f64;
    }
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= -half * half / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) && k > 5 {
            break;
        }
        if k > 500 {
            break;
        }
    }
    if n < 0 && m % 2 == 1 {
        -sum
    } else {
        sum
    }
}

/// `J_n(x) = (1/pi) int_0^pi cos(n tau - x sin tau) dtau` by the trapezoid
/// rule on the full period, which converges geometrically.
pub fn bessel_integral(n: i32, x: f64, nodes: usize) -> f64 {
    let step = 2.0 * std::f64::consts::PI / nodes as f64;
    (0..nodes)
        .map(|k| {
            let tau = k as f64 * step;
            (n as f64 * tau - x * tau.sin()).cos()
        })
        .sum::<f64>()
        / nodes as f64
}

/// `exp(A)` by Taylor series with scaling and squaring.
pub fn expm(a: &Mat<C64>) -> Mat<C64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a * starkprobe::faer::Scale(C64::new(0.5f64.powi(squarings as i32), 0.0));
    let mut result = Mat::<C64>::identity(n, n);
    let mut term = Mat::<C64>::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled * starkprobe::faer::Scale(C64::new(1.0 / k as f64, 0.0));
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Column-stacked Lindblad generator for diagonal jump operators with
/// entries `diagonals[l][z]`.
pub fn liouvillian(h: &Mat<f64>, gamma: f64, diagonals: &[Vec<f64>]) -> Mat<C64> {
    let n = h.nrows();
    let idx = |i: usize, j: usize| i + j * n;
    let mut out = Mat::<C64>::zeros(n * n, n * n);
    let minus_i = C64::new(0.0, -1.0);
    for j in 0..n {
        for i in 0..n {
            // -i (H rho)_{ij} = -i sum_k H_ik rho_kj
            for k in 0..n {
                out[(idx(i, j), idx(k, j))] += minus_i * h[(i, k)];
                out[(idx(i, j), idx(i, k))] -= minus_i * h[(k, j)];
            }
            for d in diagonals {
                // L rho L - (L^2 rho + rho L^2) / 2, L diagonal
                let c = d[i] * d[j] - 0.5 * (d[i] * d[i] + d[j] * d[j]);
                out[(idx(i, j), idx(i, j))] += C64::new(gamma * c, 0.0);
            }
        }
    }
    out
}

pub fn frobenius_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    s.sqrt()
}

/// Characteristic polynomial of a symmetric tridiagonal matrix at `x`,
/// with the number of sign changes of the Sturm sequence (eigenvalues
/// below `x`).
pub fn tridiagonal_charpoly(diag: &[f64], off: f64, x: f64) -> (f64, usize) {
    let mut prev = 1.0;
    let mut cur = diag[0] - x;
    let mut below = usize::from(cur < 0.0);
    for &d in &diag[1..] {
        let next = (d - x) * cur - off * off * prev;
        if (next < 0.0) != (cur < 0.0) {
            below += 1;
        }
        prev = cur;
        cur = next;
    }
    (cur, below)
}

/// Central finite difference with Richardson extrapolation:
/// `(8 (f(+d) - f(-d)) - (f(+2d) - f(-2d))) / 12d`.
pub fn five_point<F>(f: F, x: f64, step: f64) -> Vec<C64>
where
    F: Fn(f64) -> Vec<C64>,
{
    let p1 = f(x + step);
    let m1 = f(x - step);
    let p2 = f(x + 2.0 * step);
    let m2 = f(x - 2.0 * step);
    (0..p1.len())
        .map(|k| (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * step))
        .collect()
}

pub fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
