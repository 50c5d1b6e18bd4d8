//! Integer-order Bessel functions of the first kind.
//!
//! All orders `J_0(x) ..= J_n(x)` are produced together by Miller's backward
//! recurrence, normalised with the identity `J_0 + 2 Σ_k J_{2k} = 1`. This is
//! the access pattern the sideband model needs (every order at one argument),
//! and it stays accurate far past the turning point `n ≈ x`, where the forward
//! recurrence loses all digits.

/// Rescaling threshold for the backward recurrence.
const BIG: f64 = 1.0e250;
const BIG_INV: f64 = 1.0e-250;

/// Fills `out[k] = J_k(x)` for `k = 0..out.len()`.
///
/// Negative arguments use `J_k(-x) = (-1)^k J_k(x)`.
pub fn bessel_j_orders_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let ax = x.abs();
    if ax == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    let n_max = out.len() - 1;
    let scale = (n_max as f64).max(ax);
    let mut start = (scale + 20.0 + 10.0 * scale.sqrt()).ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    let two_over_x = 2.0 / ax;
    let mut j_next = 0.0_f64;
    let mut j_cur = 1.0e-300_f64;
    let mut even_sum = 0.0_f64;
    out.fill(0.0);

    // j_cur holds the unnormalised J_k while k walks down from `start`.
    let mut k = start;
    while k > 0 {
        let j_prev = k as f64 * two_over_x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        k -= 1;
        if k <= n_max {
            out[k] = j_cur;
        }
        if k % 2 == 0 && k > 0 {
            even_sum += j_cur;
        }
        if j_cur.abs() > BIG {
            j_cur *= BIG_INV;
            j_next *= BIG_INV;
            even_sum *= BIG_INV;
            for v in out.iter_mut().skip(k) {
                *v *= BIG_INV;
            }
        }
    }
    let norm = 1.0 / (j_cur + 2.0 * even_sum);
    for v in out.iter_mut() {
        *v *= norm;
    }
    if x < 0.0 {
        for (k, v) in out.iter_mut().enumerate() {
            if k % 2 == 1 {
                *v = -*v;
            }
        }
    }
}

/// `J_k(x)` for `k = 0..=n_max`.
pub fn bessel_j_orders(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    bessel_j_orders_into(x, &mut out);
    out
}

/// `J_n(x)` for any integer order, using `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let order = n.unsigned_abs() as usize;
    let v = bessel_j_orders(x, order)[order];
    if n < 0 && order % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Truncation order for sideband sums at coupling `|β|_max`.
///
/// `Σ_{|ℓ| > l_max} J_ℓ(2|β|)² < 1e-9` for this choice: the Bessel tail decays
/// superexponentially once the order passes the argument.
pub fn sideband_truncation(beta_abs_max: f64) -> usize {
    (2.0 * beta_abs_max).ceil() as usize + 15
}

/// First zero of `J_0`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;
/// First zero of `J_1'` (position of the first maximum of `J_1`).
pub const J1_FIRST_MAX: f64 = 1.841_183_781_340_659_3;
