use std::f64::consts::PI;

/// Learning-rate multiplier at continuous epoch `t`: linear warmup from 0,
/// then cosine annealing restarted every cycle. Cycle `k` lasts
/// `t0 * mult^k` epochs and the factor is back to 1 at every boundary.
pub fn lr_factor(t: f64, warmup: f64, t0: f64, mult: f64, eta_min_frac: f64) -> f64 {
    let t = t.max(0.0);
    if t < warmup {
        return t / warmup;
    }
    let mut s = t - warmup;
    let mut period = t0;
    if mult == 1.0 {
        s %= period;
    } else {
        while s >= period {
            s -= period;
            period *= mult;
        }
    }
    eta_min_frac + (1.0 - eta_min_frac) * 0.5 * (1.0 + (PI * s / period).cos())
}
