//! Brute-force reference implementations.
//!
//! Everything here is written as directly as possible (nested loops, f64,
//! no shared helpers with the main crate) so it can serve as an
//! independent check on the optimised code paths.

/// Direct sliding-window convolution. `x`: N×C×H×W, `k`: O×C×K×K.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: &[f64],
    o: usize,
    ks: usize,
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - ks) / stride + 1;
    let wo = (w + 2 * pad - ks) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias[oc];
                    for ic in 0..c {
                        for di in 0..ks {
                            for dj in 0..ks {
                                let r = (i * stride + di) as isize - pad as isize;
                                let s = (j * stride + dj) as isize - pad as isize;
                                if r < 0 || s < 0 || r >= h as isize || s >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + r as usize) * w + s as usize];
                                let kv = k[((oc * c + ic) * ks + di) * ks + dj];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((b * o + oc) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    (out, ho, wo)
}

/// Window maximum over each N×C plane.
pub fn maxpool2d(
    x: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    win: usize,
    stride: usize,
) -> Vec<f64> {
    let ho = (h - win) / stride + 1;
    let wo = (w - win) / stride + 1;
    let mut out = Vec::new();
    for p in 0..planes {
        for i in 0..ho {
            for j in 0..wo {
                let mut m = f64::NEG_INFINITY;
                for a in 0..win {
                    for b in 0..win {
                        m = m.max(x[p * h * w + (i * stride + a) * w + j * stride + b]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

/// Averages over explicit bins `[floor(i*L/g), floor((i+1)*L/g))`.
pub fn adaptive_avg_pool(x: &[f64], planes: usize, h: usize, w: usize, g: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for p in 0..planes {
        for bi in 0..g {
            let r0 = (bi as f64 * h as f64 / g as f64).floor() as usize;
            let r1 = ((bi + 1) as f64 * h as f64 / g as f64).floor() as usize;
            for bj in 0..g {
                let c0 = (bj as f64 * w as f64 / g as f64).floor() as usize;
                let c1 = ((bj + 1) as f64 * w as f64 / g as f64).floor() as usize;
                let mut s = 0.0;
                let mut cnt = 0usize;
                for r in r0..r1 {
                    for c in c0..c1 {
                        s += x[p * h * w + r * w + c];
                        cnt += 1;
                    }
                }
                out.push(s / cnt as f64);
            }
        }
    }
    out
}

/// Triple-loop `x·W + b`, x: n×d, W: d×m.
pub fn matmul_bias(x: &[f64], n: usize, d: usize, wt: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = b[j];
            for t in 0..d {
                acc += x[i * d + t] * wt[t * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}

/// O(P·N) Mann–Whitney AUC: wins count 1, ties count 1/2.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// F1 at threshold `tau` with the `score >= tau` rule, counted from scratch.
pub fn f1_at(scores: &[f64], labels: &[u8], tau: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= tau;
        match (pred, y == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Scans `tau = lo + i*step` and returns the first grid point with the
/// highest F1.
pub fn grid_scan_f1(scores: &[f64], labels: &[u8], lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let steps = ((hi - lo) / step).round() as usize;
    let mut best = (lo, -1.0);
    for i in 0..=steps {
        let tau = lo + i as f64 * step;
        let f = f1_at(scores, labels, tau);
        if f > best.1 {
            best = (tau, f);
        }
    }
    best
}

/// Percentile by linear interpolation between closest ranks on a sorted copy.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = pct / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Scalar AdamW recurrence with decoupled decay applied before the
/// moment update, returning the parameter after each step.
#[allow(clippy::too_many_arguments)]
pub fn adamw_scalar(
    mut p: f64,
    grads: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    wd: f64,
) -> Vec<f64> {
    let (mut m, mut v) = (0.0, 0.0);
    let mut out = Vec::new();
    for (t, &g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        p -= lr * wd * p;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let mh = m / (1.0 - beta1.powi(t));
        let vh = v / (1.0 - beta2.powi(t));
        p -= lr * mh / (vh.sqrt() + eps);
        out.push(p);
    }
    out
}

/// Smooth focal loss of one sample evaluated term by term in f64.
pub fn focal_scalar(p: f64, y: f64, alpha: f64, gamma: f64, eps: f64) -> f64 {
    let t = y * (1.0 - eps) + eps / 2.0;
    let pos = alpha * t * (1.0 - p).powf(gamma) * p.ln();
    let neg = (1.0 - alpha) * (1.0 - t) * p.powf(gamma) * (1.0 - p).ln();
    -(pos + neg)
}

/// Mean and population standard deviation.
pub fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Maximum along one axis of an X×Y×Z grid indexed `(z*Y + y)*X + x`.
/// Returns the image row-major with rows/cols as follows: axis 2 → (y, x),
/// axis 1 → (z, x), axis 0 → (z, y).
pub fn axis_max(v: &[f64], nx: usize, ny: usize, nz: usize, axis: usize) -> Vec<f64> {
    let at = |x: usize, y: usize, z: usize| v[(z * ny + y) * nx + x];
    let mut out = Vec::new();
    match axis {
        2 => {
            for y in 0..ny {
                for x in 0..nx {
                    let mut m = f64::NEG_INFINITY;
                    for z in 0..nz {
                        m = m.max(at(x, y, z));
                    }
                    out.push(m);
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    let mut m = f64::NEG_INFINITY;
                    for y in 0..ny {
                        m = m.max(at(x, y, z));
                    }
                    out.push(m);
                }
            }
        }
        _ => {
            for z in 0..nz {
                for y in 0..ny {
                    let mut m = f64::NEG_INFINITY;
                    for x in 0..nx {
                        m = m.max(at(x, y, z));
                    }
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Fraction of values strictly above `mean + k * std` (population std).
pub fn tail_fraction(values: &[f64], k: f64) -> f64 {
    let (mean, std) = moments(values);
    if std == 0.0 {
        return 0.0;
    }
    let mut count = 0usize;
    for &v in values {
        if v > mean + k * std {
            count += 1;
        }
    }
    count as f64 / values.len() as f64
}
