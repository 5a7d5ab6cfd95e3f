//! Elementary functions for `no_std`.

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `s * ln(s)` with the limit value 0 at `s = 0`.
#[inline]
pub fn xlogx(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        s * ln(s)
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter()
        .fold(0.0, |m, x| if abs(*x) > m { abs(*x) } else { m })
}
