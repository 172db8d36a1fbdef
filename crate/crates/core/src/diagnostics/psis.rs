//! Pareto-smoothed importance sampling and PSIS-LOO.

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Zhang–Stephens estimate of the generalized Pareto `(k, sigma)` for
/// exceedances sorted ascending, with a weak prior pulling `k` toward 0.5.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    const PRIOR_BS: f64 = 3.0;
    const PRIOR_K: f64 = 10.0;
    let n = x.len();
    let nf = n as f64;
    let m = 30 + (nf.sqrt() as usize);
    let quartile = x[((nf / 4.0 + 0.5) as usize).max(1) - 1];
    let x_max = x[n - 1];
    let mut b: Vec<f64> =
        (1..=m).map(|j| (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / (PRIOR_BS * quartile) + 1.0 / x_max).collect();
    let k_of = |b: f64| x.iter().map(|v| (-b * v).ln_1p()).sum::<f64>() / nf;
    let len_scale: Vec<f64> = b
        .iter()
        .map(|&bj| {
            let k = k_of(bj);
            nf * ((-(bj / k)).ln() - k - 1.0)
        })
        .collect();
    let mut w: Vec<f64> =
        len_scale.iter().map(|li| 1.0 / len_scale.iter().map(|lj| (lj - li).exp()).sum::<f64>()).collect();
    let keep: Vec<bool> = w.iter().map(|&wi| wi >= 10.0 * f64::EPSILON).collect();
    if keep.iter().any(|k| !k) {
        let mut it = keep.iter();
        b.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        w.retain(|_| *it.next().unwrap());
    }
    let total: f64 = w.iter().sum();
    let b_post: f64 = b.iter().zip(&w).map(|(bi, wi)| bi * wi / total).sum();
    let k_post = k_of(b_post);
    let sigma = -k_post / b_post;
    let k = (nf * k_post + PRIOR_K * 0.5) / (nf + PRIOR_K);
    (k, sigma)
}

/// Shape estimate from sorted exceedances; fewer than five gives +∞.
pub fn gpd_fit_k(sorted_tail: &[f64]) -> f64 {
    if sorted_tail.len() < 5 {
        return f64::INFINITY;
    }
    gpd_fit(sorted_tail).0
}

/// Generalized Pareto quantile function.
pub fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return if k >= 0.0 { f64::INFINITY } else { -sigma / k };
    }
    if k.abs() < f64::EPSILON {
        -sigma * (-p).ln_1p()
    } else {
        (-k * (-p).ln_1p()).exp_m1() * sigma / k
    }
}

/// Number of tail draws smoothed out of `s`.
pub fn tail_len(s: usize) -> usize {
    let s = s as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Smooths one column of raw log-weights. Returns normalized log-weights
/// and the Pareto shape of the tail.
pub fn psis_smooth(log_weights: &[f64]) -> (Vec<f64>, f64) {
    let s = log_weights.len();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut x: Vec<f64> = log_weights.iter().map(|v| v - max).collect();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let m = tail_len(s);
    let cutoff_min = f64::MIN_POSITIVE.ln();
    let cutoff = if m < s { x[order[s - m - 1]].max(cutoff_min) } else { cutoff_min };
    let exp_cutoff = cutoff.exp();

    let mut tail: Vec<usize> = (0..s).filter(|&i| x[i] > cutoff).collect();
    let k = if tail.len() <= 4 {
        f64::INFINITY
    } else {
        tail.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let exceed: Vec<f64> = tail.iter().map(|&i| x[i].exp() - exp_cutoff).collect();
        let (k, sigma) = gpd_fit(&exceed);
        if k.is_finite() {
            let n = tail.len() as f64;
            for (j, &i) in tail.iter().enumerate() {
                let p = (j as f64 + 0.5) / n;
                x[i] = (gpd_quantile(p, k, sigma) + exp_cutoff).ln();
            }
            for v in x.iter_mut() {
                if *v > 0.0 {
                    *v = 0.0;
                }
            }
        }
        k
    };
    let norm = log_sum_exp(&x);
    x.iter_mut().for_each(|v| *v -= norm);
    (x, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loo {
    pub elpd: f64,
    pub se: f64,
    pub pointwise: Vec<f64>,
    pub pareto_k: Vec<f64>,
}

/// PSIS-LOO from a `[draw][observation]` log-likelihood matrix.
pub fn psis_loo(loglik: &[Vec<f64>]) -> Loo {
    let s = loglik.len();
    let n = loglik.first().map_or(0, Vec::len);
    let mut pointwise = Vec::with_capacity(n);
    let mut pareto_k = Vec::with_capacity(n);
    for i in 0..n {
        let ll: Vec<f64> = (0..s).map(|d| loglik[d][i]).collect();
        if ll.iter().any(|v| !v.is_finite()) {
            pointwise.push(f64::NAN);
            pareto_k.push(f64::INFINITY);
            continue;
        }
        let raw: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (lw, k) = psis_smooth(&raw);
        let terms: Vec<f64> = lw.iter().zip(&ll).map(|(w, l)| w + l).collect();
        pointwise.push(log_sum_exp(&terms));
        pareto_k.push(k);
    }
    let elpd: f64 = pointwise.iter().sum();
    let nf = n as f64;
    let mean = elpd / nf;
    let var = pointwise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let se = if elpd.is_finite() { (nf * var).sqrt() } else { f64::NAN };
    Loo { elpd, se, pointwise, pareto_k }
}
