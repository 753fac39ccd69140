//! Bessel functions of the first kind for integer order.

/// Below this argument the power series converges in a handful of terms.
const SERIES_LIMIT: f64 = 1.0;
const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

/// `J_n(x)` for integer `n` and finite real `x`, absolute accuracy better
/// than `1e-10` for `|n| <= 10^4`.
///
/// Uses the power series for `|x| <= 1` and Miller's downward recurrence
/// normalised by `J_0 + 2 sum J_2k = 1` otherwise. Cost is linear in
/// `max(|n|, |x|)`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let order = n.unsigned_abs() as usize;
    // J_{-n} = (-1)^n J_n and J_n(-x) = (-1)^n J_n(x).
    let odd = order % 2 == 1;
    let mut sign = 1.0;
    if n < 0 && odd {
        sign = -sign;
    }
    if x < 0.0 && odd {
        sign = -sign;
    }
    let x = x.abs();
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let value = if x <= SERIES_LIMIT {
        series(order, x)
    } else {
        miller(order, x)
    };
    sign * value
}

fn series(order: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for k in 1..=order {
        lead *= half / k as f64;
        if lead == 0.0 {
            return 0.0;
        }
    }
    let q = -half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * (order + k) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

fn miller(order: usize, x: f64) -> f64 {
    let top = (order as f64).max(x);
    let mut start = top.ceil() as usize + 20 + (60.0 * top).sqrt().ceil() as usize;
    start += start % 2;

    let two_over_x = 2.0 / x;
    let mut next = 0.0; // f_{k+1}
    let mut current = 1.0; // f_k, starting at k = start
    let mut norm = 2.0 * current;
    let mut wanted = 0.0;
    if order == start {
        wanted = current;
    }
    for k in (1..=start).rev() {
        let prev = k as f64 * two_over_x * current - next;
        next = current;
        current = prev;
        // current now holds f_{k-1}.
        let idx = k - 1;
        if idx == order {
            wanted = current;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * current;
        }
        if current.abs() > RESCALE_ABOVE {
            current *= RESCALE_BY;
            next *= RESCALE_BY;
            norm *= RESCALE_BY;
            wanted *= RESCALE_BY;
        }
    }
    norm += current;
    wanted / norm
}
