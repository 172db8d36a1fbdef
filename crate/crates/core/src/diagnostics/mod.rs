//! Convergence and predictive diagnostics, and the seven-indicator
//! reliability score built from them.

pub mod convergence;
pub mod psis;

pub use convergence::{bfmi, ess_bulk, ess_tail, is_constant, split_rhat};
pub use psis::{gpd_fit, gpd_fit_k, psis_loo, Loo};

use crate::inference::PosteriorDraws;
use crate::json::{floats, reals, Real};
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "ppsynth.diagnostics/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alpha_r: f64,
    pub beta_bulk: f64,
    pub beta_tail: f64,
    pub gamma_bfmi: f64,
    pub k_threshold: f64,
    pub epsilon: f64,
    /// A model is valid when its score is at least `zeta`.
    pub zeta: u8,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            alpha_r: 1.05,
            beta_bulk: 400.0,
            beta_tail: 100.0,
            gamma_bfmi: 0.3,
            k_threshold: 0.7,
            epsilon: 0.2,
            zeta: 5,
        }
    }
}

/// The summary numbers the score is a function of.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub max_rhat: f64,
    pub min_bfmi: f64,
    pub min_ess_bulk: f64,
    pub divergences: usize,
    pub min_ess_tail: f64,
    pub elpd: f64,
    pub pareto_k: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Indicators {
    pub s1_rhat: bool,
    pub s2_bfmi: bool,
    pub s3_ess_bulk: bool,
    pub s4_divergences: bool,
    pub s5_ess_tail: bool,
    pub s6_elpd_finite: bool,
    pub s7_pareto_k: bool,
}

impl Indicators {
    pub fn as_array(&self) -> [bool; 7] {
        [
            self.s1_rhat,
            self.s2_bfmi,
            self.s3_ess_bulk,
            self.s4_divergences,
            self.s5_ess_tail,
            self.s6_elpd_finite,
            self.s7_pareto_k,
        ]
    }

    pub fn score(&self) -> u8 {
        self.as_array().iter().filter(|&&b| b).count() as u8
    }
}

/// Fraction of observations whose Pareto shape is at most `k_threshold`.
pub fn k_fraction(pareto_k: &[f64], k_threshold: f64) -> f64 {
    if pareto_k.is_empty() {
        return f64::NAN;
    }
    pareto_k.iter().filter(|&&k| k <= k_threshold).count() as f64 / pareto_k.len() as f64
}

/// NaN-propagating min/max, so an uncomputable metric fails its check.
fn nan_min(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.min(b) })
}

fn nan_max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

pub fn reliability_score(m: &Metrics, th: &Thresholds) -> (Indicators, u8) {
    let ind = Indicators {
        s1_rhat: m.max_rhat <= th.alpha_r,
        s2_bfmi: m.min_bfmi > th.gamma_bfmi,
        s3_ess_bulk: m.min_ess_bulk >= th.beta_bulk,
        s4_divergences: m.divergences == 0,
        s5_ess_tail: m.min_ess_tail >= th.beta_tail,
        s6_elpd_finite: m.elpd.is_finite(),
        s7_pareto_k: k_fraction(&m.pareto_k, th.k_threshold) >= 1.0 - th.epsilon,
    };
    (ind, ind.score())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema: String,
    pub rhat: IndexMap<String, Real>,
    pub ess_bulk: IndexMap<String, Real>,
    pub ess_tail: IndexMap<String, Real>,
    pub bfmi: Vec<Real>,
    pub divergences: usize,
    pub elpd: Real,
    pub elpd_se: Real,
    pub pareto_k: Vec<Real>,
    pub indicators: Indicators,
    pub score: u8,
    pub valid: bool,
    /// Conventions applied on degenerate input, e.g. constant draws.
    pub flags: Vec<String>,
}

impl DiagnosticsReport {
    pub fn metrics(&self) -> Metrics {
        let vals = |m: &IndexMap<String, Real>| m.values().map(|r| r.0).collect::<Vec<_>>();
        Metrics {
            max_rhat: nan_max(vals(&self.rhat)),
            min_bfmi: nan_min(floats(&self.bfmi)),
            min_ess_bulk: nan_min(vals(&self.ess_bulk)),
            divergences: self.divergences,
            min_ess_tail: nan_min(vals(&self.ess_tail)),
            elpd: self.elpd.0,
            pareto_k: floats(&self.pareto_k),
        }
    }

    pub fn max_rhat(&self) -> f64 {
        self.metrics().max_rhat
    }

    pub fn min_ess_bulk(&self) -> f64 {
        self.metrics().min_ess_bulk
    }

    pub fn min_ess_tail(&self) -> f64 {
        self.metrics().min_ess_tail
    }

    pub fn k_fraction(&self, th: &Thresholds) -> f64 {
        k_fraction(&floats(&self.pareto_k), th.k_threshold)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Computes every metric from the draws and scores them.
pub fn diagnose(draws: &PosteriorDraws, th: &Thresholds) -> DiagnosticsReport {
    let per_param: Vec<(f64, f64, f64, bool)> = (0..draws.n_params())
        .into_par_iter()
        .map(|i| {
            let trace = draws.param(i);
            (split_rhat(&trace), ess_bulk(&trace), ess_tail(&trace), is_constant(&trace))
        })
        .collect();
    let mut flags = Vec::new();
    let mut rhat = IndexMap::new();
    let mut eb = IndexMap::new();
    let mut et = IndexMap::new();
    for (name, (r, b, t, constant)) in draws.coordinates.iter().zip(per_param) {
        if constant {
            flags.push(format!("{name}: constant draws"));
        }
        rhat.insert(name.clone(), Real(r));
        eb.insert(name.clone(), Real(b));
        et.insert(name.clone(), Real(t));
    }
    let bfmi: Vec<f64> = draws.energy.iter().map(|e| bfmi(e)).collect();
    if bfmi.iter().any(|b| b.is_nan()) {
        flags.push("bfmi: zero energy variance in some chain".into());
    }
    let loo = psis_loo(&draws.loglik_matrix());
    if !loo.elpd.is_finite() {
        flags.push("elpd: not finite".into());
    }
    let mut report = DiagnosticsReport {
        schema: REPORT_SCHEMA.into(),
        rhat,
        ess_bulk: eb,
        ess_tail: et,
        bfmi: reals(&bfmi),
        divergences: draws.divergences(),
        elpd: Real(loo.elpd),
        elpd_se: Real(loo.se),
        pareto_k: reals(&loo.pareto_k),
        indicators: Indicators::default(),
        score: 0,
        valid: false,
        flags,
    };
    let (ind, score) = reliability_score(&report.metrics(), th);
    report.indicators = ind;
    report.score = score;
    report.valid = score >= th.zeta;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn passing() -> Metrics {
        Metrics {
            max_rhat: 1.00,
            min_bfmi: 1.2,
            min_ess_bulk: 2261.0,
            divergences: 0,
            min_ess_tail: 500.0,
            elpd: -31.7,
            pareto_k: vec![0.1; 8],
        }
    }

    #[test]
    fn all_passing_scores_seven() {
        let (ind, s) = reliability_score(&passing(), &Thresholds::default());
        assert_eq!(s, 7);
        assert!(ind.as_array().iter().all(|&b| b));
    }

    #[test]
    fn poorly_mixed_fit_scores_three() {
        let m = Metrics { max_rhat: 4.13, min_ess_bulk: 4.0, divergences: 1634, min_ess_tail: 3.0, ..passing() };
        let (ind, s) = reliability_score(&m, &Thresholds::default());
        assert_eq!(s, 3);
        assert!(!ind.s1_rhat && !ind.s3_ess_bulk && !ind.s4_divergences && !ind.s5_ess_tail);
        let only_two = Metrics { min_ess_bulk: 2000.0, min_ess_tail: 500.0, ..m };
        assert_eq!(reliability_score(&only_two, &Thresholds::default()).1, 5);
    }

    #[test]
    fn boundaries() {
        let th = Thresholds::default();
        let at = |m: Metrics| reliability_score(&m, &th).0;
        assert!(at(Metrics { max_rhat: 1.05, ..passing() }).s1_rhat);
        assert!(!at(Metrics { min_bfmi: 0.3, ..passing() }).s2_bfmi);
        assert!(at(Metrics { min_ess_bulk: 400.0, ..passing() }).s3_ess_bulk);
        assert!(at(Metrics { min_ess_tail: 100.0, ..passing() }).s5_ess_tail);
        assert!(!at(Metrics { elpd: f64::NEG_INFINITY, ..passing() }).s6_elpd_finite);
        let k = vec![0.1, 0.2, 0.3, 0.7, 0.9];
        assert!(at(Metrics { pareto_k: k, ..passing() }).s7_pareto_k);
        let k = vec![0.1, 0.2, 0.3, 0.8, 0.9];
        assert!(!at(Metrics { pareto_k: k, ..passing() }).s7_pareto_k);
        assert!(!at(Metrics { max_rhat: f64::NAN, ..passing() }).s1_rhat);
        assert!(!at(Metrics { pareto_k: vec![], ..passing() }).s7_pareto_k);
    }

    #[test]
    fn nan_aware_extrema() {
        assert!(nan_min([1.0, f64::NAN, 0.5]).is_nan());
        assert_eq!(nan_max([1.0, 3.0, 2.0]), 3.0);
    }

    proptest! {
        #[test]
        fn loosening_thresholds_never_lowers_score(
            rhat in 0.99f64..1.2, ess_b in 0.0f64..1000.0, ess_t in 0.0f64..500.0,
            bump_r in 0.0f64..0.2, drop_b in 0.0f64..400.0, drop_t in 0.0f64..100.0,
        ) {
            let m = Metrics { max_rhat: rhat, min_ess_bulk: ess_b, min_ess_tail: ess_t, ..passing() };
            let th = Thresholds::default();
            let loose = Thresholds {
                alpha_r: th.alpha_r + bump_r,
                beta_bulk: th.beta_bulk - drop_b,
                beta_tail: th.beta_tail - drop_t,
                ..th.clone()
            };
            let (a, sa) = reliability_score(&m, &th);
            let (b, sb) = reliability_score(&m, &loose);
            prop_assert!(sb >= sa);
            for (x, y) in a.as_array().iter().zip(b.as_array()) {
                prop_assert!(!x || y);
            }
            prop_assert_eq!(sa as usize, a.as_array().iter().filter(|&&v| v).count());
        }
    }
}
