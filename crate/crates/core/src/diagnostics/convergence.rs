//! Rank-normalized split R̂, bulk/tail ESS and E-BFMI.
//!
//! Inputs are `[chain][iteration]` traces of a single scalar.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64], ddof: f64) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - ddof)
}

/// True when every value in every chain is identical (or there are none).
pub fn is_constant(chains: &[Vec<f64>]) -> bool {
    let mut it = chains.iter().flatten();
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

/// Splits every chain into its first and last halves. A middle draw of an
/// odd-length chain is dropped.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Average ranks (1-based) of the pooled values.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Replaces draws by normal scores of their pooled fractional ranks.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.concat();
    let ranks = average_ranks(&pooled);
    let size = pooled.len() as f64;
    let normal = Normal::standard();
    let mut it = ranks.into_iter();
    chains
        .iter()
        .map(|c| c.iter().map(|_| normal.inverse_cdf((it.next().unwrap() - 0.375) / (size + 0.25))).collect())
        .collect()
}

/// Classic R̂ of already-split chains: `sqrt(var⁺ / W)`.
pub fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c, 1.0)).collect::<Vec<_>>());
    let b = n * var(&means, 1.0);
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Rank-normalized split R̂: the larger of the bulk and folded variants.
/// Constant input gives 1.0; callers flag it via [`is_constant`].
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return 1.0;
    }
    if chains.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return f64::NAN;
    }
    let bulk = rhat_basic(&rank_normalize(&split_chains(chains)));
    let med = median(&chains.concat());
    let folded: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_basic(&rank_normalize(&split_chains(&folded)));
    bulk.max(tail)
}

/// Biased autocovariance at every lag, via FFT.
pub fn autocov(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = (2 * n).next_power_of_two();
    let mu = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mu, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (m as f64 * n as f64)).collect()
}

/// ESS of (already split) chains with Geyer's initial monotone sequence.
pub fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    if is_constant(chains) {
        return total;
    }
    if n < 4 {
        return f64::NAN;
    }
    let nf = n as f64;
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocov(c)).collect();
    let mean_acov = |t: usize| acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&chain_means, 1.0);
    }

    let mut rho = vec![0.0; n];
    let mut rho_even = 1.0;
    rho[0] = rho_even;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t < n - 3 && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    // max_t is −1 when the loop never ran.
    let max_t = t as isize - 2;
    if rho_even > 0.0 {
        rho[(max_t + 1) as usize] = rho_even;
    }
    let mut t = 1;
    while t as isize + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let head: f64 = rho[..(max_t + 1) as usize].iter().sum();
    let tau = -1.0 + 2.0 * head + rho[(max_t + 1) as usize];
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

fn all_finite(chains: &[Vec<f64>]) -> bool {
    chains.iter().flatten().all(|v| v.is_finite())
}

/// Bulk ESS: rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    if !all_finite(chains) {
        return f64::NAN;
    }
    if is_constant(chains) {
        return chains.iter().map(Vec::len).sum::<usize>() as f64;
    }
    ess_raw(&rank_normalize(&split_chains(chains)))
}

/// ESS of the indicator `x ≤ q_p` on split chains.
pub fn ess_quantile(chains: &[Vec<f64>], p: f64) -> f64 {
    if !all_finite(chains) {
        return f64::NAN;
    }
    let q = quantile(&chains.concat(), p);
    let ind: Vec<Vec<f64>> =
        chains.iter().map(|c| c.iter().map(|&v| if v <= q { 1.0 } else { 0.0 }).collect()).collect();
    ess_raw(&split_chains(&ind))
}

/// Tail ESS: the smaller of the 5% and 95% quantile ESS.
pub fn ess_tail(chains: &[Vec<f64>]) -> f64 {
    ess_quantile(chains, 0.05).min(ess_quantile(chains, 0.95))
}

/// E-BFMI of one chain: `mean(ΔE²) / Var(E)`.
pub fn bfmi(energy: &[f64]) -> f64 {
    if energy.len() < 2 {
        return f64::NAN;
    }
    let num = energy.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / (energy.len() - 1) as f64;
    let v = var(energy, 0.0);
    if v > 0.0 {
        num / v
    } else {
        f64::NAN
    }
}
