/// One classic fourth-order Runge-Kutta step of width `h` from `t`.
///
/// The derivative closure receives `(tau, state, open)`. The final stage is
/// evaluated at the right endpoint with `open = true` so that an input event
/// scheduled exactly at `t + h` is excluded from this interval — the step
/// then integrates a function that is smooth across its whole span, which is
/// what preserves the scheme's fourth-order accuracy in the presence of
/// grid-aligned discontinuities.
pub(crate) fn rk4_step<const S: usize>(
    t: f64,
    h: f64,
    x: &[f64; S],
    mut f: impl FnMut(f64, &[f64; S], bool) -> [f64; S],
) -> [f64; S] {
    let k1 = f(t, x, false);
    let k2 = f(t + 0.5 * h, &add_scaled(x, &k1, 0.5 * h), false);
    let k3 = f(t + 0.5 * h, &add_scaled(x, &k2, 0.5 * h), false);
    let k4 = f(t + h, &add_scaled(x, &k3, h), true);
    let mut next = *x;
    for i in 0..S {
        next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    next
}

fn add_scaled<const S: usize>(x: &[f64; S], k: &[f64; S], s: f64) -> [f64; S] {
    let mut out = *x;
    for i in 0..S {
        out[i] += s * k[i];
    }
    out
}
