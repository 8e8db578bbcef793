// Float helpers that `core` does not provide without std.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn hypot(a: f64, b: f64) -> f64 {
    libm::hypot(a, b)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// `tan(acos(pf))`, the reactive-to-active ratio of a lagging load.
#[inline]
pub(crate) fn q_over_p(power_factor: f64) -> f64 {
    sqrt(1.0 - power_factor * power_factor) / power_factor
}
