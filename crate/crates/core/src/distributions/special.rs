//! Special functions: log-gamma, Stirling remainders, regularized incomplete
//! beta and gamma functions, and the standard normal tail.
//!
//! Everything is written against [`Real`] so it instantiates for `f32` and
//! `f64`; accuracy figures in the docs refer to `f64`.

use crate::scalar::{lit, Real};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const CF_MAX_ITER: usize = 200_000;

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + lit::<T>(c) / (x + lit::<T>(i as f64));
    }
    let t = x + lit::<T>(LANCZOS_G) + half;
    lit::<T>(0.5) * (lit::<T>(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Remainder of Stirling's formula for Γ(z):
/// `ln Γ(z) - [(z - ½) ln z - z + ½ ln 2π]`.
pub fn stirling_remainder<T: Real>(z: T) -> T {
    if z < lit(15.0) {
        let half_ln_2pi = lit::<T>(0.5) * (lit::<T>(2.0) * T::PI()).ln();
        return ln_gamma(z) - ((z - lit(0.5)) * z.ln() - z + half_ln_2pi);
    }
    let zz = z * z;
    let s0 = lit::<T>(1.0 / 12.0);
    let s1 = lit::<T>(1.0 / 360.0);
    let s2 = lit::<T>(1.0 / 1260.0);
    let s3 = lit::<T>(1.0 / 1680.0);
    let s4 = lit::<T>(1.0 / 1188.0);
    (s0 - (s1 - (s2 - (s3 - s4 / zz) / zz) / zz) / zz) / z
}

/// Deviance term `x ln(x / np) + np - x`, evaluated without cancellation.
pub fn bd0<T: Real>(x: T, np: T) -> T {
    if x == T::zero() {
        return np;
    }
    let diff = x - np;
    if diff.abs() < lit::<T>(0.1) * (x + np) {
        let mut v = diff / (x + np);
        let mut s = diff * v;
        let mut ej = lit::<T>(2.0) * x * v;
        v = v * v;
        let mut j = 1u32;
        loop {
            ej = ej * v;
            let s1 = s + ej / lit::<T>(f64::from(2 * j + 1));
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1;
            if j > 1000 {
                return s;
            }
        }
    }
    x * (x / np).ln() + np - x
}

/// ln of the Beta(a, b) density kernel prefactor `x^a (1-x)^b / B(a, b)`,
/// written through deviance terms so that large shapes do not cancel.
fn ln_beta_front<T: Real>(x: T, a: T, b: T) -> T {
    let n = a + b;
    let two_pi = lit::<T>(2.0) * T::PI();
    -bd0(a, n * x) - bd0(b, n * (T::one() - x)) + lit::<T>(0.5) * (a * b / (two_pi * n)).ln()
        + stirling_remainder(n)
        - stirling_remainder(a)
        - stirling_remainder(b)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf<T: Real>(x: T, a: T, b: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::epsilon();
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = lit::<T>(m as f64);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` and its complement `1 - I_x(a, b)`,
/// each computed directly so that both tails keep full relative precision.
///
/// Shapes must be positive and `x` in `[0, 1]`; callers validate.
pub fn inc_beta_pair<T: Real>(x: T, a: T, b: T) -> (T, T) {
    let one = T::one();
    if x <= T::zero() {
        return (T::zero(), one);
    }
    if x >= one {
        return (one, T::zero());
    }
    let front = ln_beta_front(x, a, b).exp();
    if x < (a + one) / (a + b + lit(2.0)) {
        let lower = front * beta_cf(x, a, b) / a;
        (lower, one - lower)
    } else {
        let upper = front * beta_cf(one - x, b, a) / b;
        (one - upper, upper)
    }
}

/// Regularized lower incomplete gamma `P(s, z)` by its power series.
fn gamma_p_series<T: Real>(s: T, z: T) -> T {
    let mut ap = s;
    let mut del = s.recip();
    let mut sum = del;
    for _ in 0..CF_MAX_ITER {
        ap = ap + T::one();
        del = del * z / ap;
        sum = sum + del;
        if del.abs() < sum.abs() * T::epsilon() {
            break;
        }
    }
    sum * (-z + s * z.ln() - ln_gamma(s)).exp()
}

/// Regularized upper incomplete gamma `Q(s, z)` by continued fraction.
fn gamma_q_cf<T: Real>(s: T, z: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let one = T::one();
    let mut b = z + one - s;
    let mut c = tiny.recip();
    let mut d = b.recip();
    let mut h = d;
    for i in 1..=CF_MAX_ITER {
        let i = lit::<T>(i as f64);
        let an = -i * (i - s);
        b = b + lit(2.0);
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h = h * del;
        if (del - one).abs() <= T::epsilon() {
            break;
        }
    }
    (-z + s * z.ln() - ln_gamma(s)).exp() * h
}

/// Upper tail of the standard normal, `1 - Φ(x)`, accurate in both tails.
pub fn normal_sf<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < T::zero() {
        return T::one() - normal_sf(-x);
    }
    let z = x * x * half;
    if z < lit(1.5) {
        half * (T::one() - gamma_p_series(half, z))
    } else {
        half * gamma_q_cf(half, z)
    }
}

/// Standard normal CDF Φ(x).
pub fn normal_cdf<T: Real>(x: T) -> T {
    normal_sf(-x)
}

/// Standard normal density.
pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) * lit(0.5)).exp() / (lit::<T>(2.0) * T::PI()).sqrt()
}

/// Solves `1 - Φ(z) = tail` for `z` with `tail ∈ (0, ½]`, by Newton's method
/// on `ln(1 - Φ(z))`, which is concave, so iterates approach from above.
pub fn normal_upper_quantile<T: Real>(tail: T) -> T {
    let target = tail.ln();
    let mut z = T::zero();
    for _ in 0..200 {
        let sf = normal_sf(z);
        let g = sf.ln() - target;
        let slope = -normal_pdf(z) / sf;
        let step = g / slope;
        z = z - step;
        if step.abs() <= lit::<T>(4.0) * T::epsilon() * (T::one() + z.abs()) {
            break;
        }
    }
    z
}
