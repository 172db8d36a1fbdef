//! Multinomial NUTS with a diagonal metric.

use super::LogDensity;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A point in phase space together with the cached log-density and its
/// gradient at `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

impl State {
    pub fn at<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> State {
        let lg = target.logp_grad(&q);
        State { p: vec![0.0; q.len()], q, logp: lg.logp, grad: lg.grad }
    }

    pub fn kinetic(&self, inv_metric: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    /// Total energy. NaN is reported as +∞ so it always counts as divergent.
    pub fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        let h = -self.logp + self.kinetic(inv_metric);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// Velocity `M⁻¹ p`.
    fn p_sharp(&self, inv_metric: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum(&mut self, inv_metric: &[f64], rng: &mut ChaCha8Rng) {
        for (p, m) in self.p.iter_mut().zip(inv_metric) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }
}

/// One velocity-Verlet step. A negative `step_size` integrates backwards.
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, state: &mut State, step_size: f64, inv_metric: &[f64]) {
    let half = 0.5 * step_size;
    for (p, g) in state.p.iter_mut().zip(&state.grad) {
        *p += half * g;
    }
    for ((q, p), m) in state.q.iter_mut().zip(&state.p).zip(inv_metric) {
        *q += step_size * m * p;
    }
    let lg = target.logp_grad(&state.q);
    state.logp = lg.logp;
    state.grad = lg.grad;
    for (p, g) in state.p.iter_mut().zip(&state.grad) {
        *p += half * g;
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generalized no-U-turn check on the summed momentum `rho`.
fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Statistics for one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub energy: f64,
}

/// Phase-space endpoint data of a subtree.
struct Edge {
    p: Vec<f64>,
    p_sharp: Vec<f64>,
}

pub struct Nuts<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub max_depth: usize,
    pub max_delta_h: f64,
    z: State,
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<'a, T: LogDensity + ?Sized> Nuts<'a, T> {
    pub fn new(target: &'a T, init: State, step_size: f64, max_depth: usize, max_delta_h: f64) -> Self {
        let d = init.q.len();
        Nuts {
            target,
            step_size,
            inv_metric: vec![1.0; d],
            max_depth,
            max_delta_h,
            z: init,
            h0: 0.0,
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
        }
    }

    pub fn position(&self) -> &[f64] {
        &self.z.q
    }

    pub fn state(&self) -> &State {
        &self.z
    }

    /// Step-size heuristic: double or halve until the one-step acceptance
    /// crosses 0.8.
    pub fn init_step_size(&mut self, rng: &mut ChaCha8Rng) -> Result<(), String> {
        if self.step_size == 0.0 || self.step_size > 1e7 || !self.step_size.is_finite() {
            return Ok(());
        }
        let start = self.z.clone();
        let threshold = 0.8f64.ln();
        let trial = |nuts: &mut Self, rng: &mut ChaCha8Rng| {
            nuts.z = start.clone();
            nuts.z.sample_momentum(&nuts.inv_metric, rng);
            let h0 = nuts.z.hamiltonian(&nuts.inv_metric);
            leapfrog(nuts.target, &mut nuts.z, nuts.step_size, &nuts.inv_metric);
            h0 - nuts.z.hamiltonian(&nuts.inv_metric)
        };
        let delta = trial(self, rng);
        let up = delta > threshold;
        loop {
            let delta = trial(self, rng);
            if (up && !(delta > threshold)) || (!up && !(delta < threshold)) {
                break;
            }
            self.step_size = if up { 2.0 * self.step_size } else { 0.5 * self.step_size };
            if self.step_size > 1e7 {
                self.z = start;
                return Err("step size grew without bound; the posterior may be improper".into());
            }
            if self.step_size == 0.0 {
                self.z = start;
                return Err("no acceptably small step size; the gradient may be wrong".into());
            }
        }
        self.z = start;
        Ok(())
    }

    pub fn transition(&mut self, rng: &mut ChaCha8Rng) -> Transition {
        self.z.sample_momentum(&self.inv_metric, rng);
        let inv_m = self.inv_metric.clone();
        let start = self.z.clone();

        let mut z_fwd = start.clone();
        let mut z_bck = start.clone();
        let mut z_sample = start.clone();
        let mut z_propose = start.clone();

        let p_sharp = start.p_sharp(&inv_m);
        let edge = || Edge { p: start.p.clone(), p_sharp: p_sharp.clone() };
        let (mut fwd_fwd, mut fwd_bck, mut bck_fwd, mut bck_bck) = (edge(), edge(), edge(), edge());

        let mut rho = start.p.clone();
        let mut log_sum_weight = 0.0;
        self.h0 = start.hamiltonian(&inv_m);
        self.n_leapfrog = 0;
        self.sum_metro_prob = 0.0;
        self.divergent = false;
        let mut depth = 0;

        while depth < self.max_depth {
            let d = rho.len();
            let mut rho_fwd = vec![0.0; d];
            let mut rho_bck = vec![0.0; d];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid;
            if rng.random::<f64>() > 0.5 {
                self.z = z_fwd.clone();
                rho_bck.clone_from(&rho);
                bck_fwd = Edge { p: fwd_bck.p.clone(), p_sharp: fwd_bck.p_sharp.clone() };
                valid = self.build_tree(
                    depth,
                    &mut z_propose,
                    &mut fwd_bck,
                    &mut fwd_fwd,
                    &mut rho_fwd,
                    1.0,
                    &mut lsw_subtree,
                    rng,
                );
                z_fwd = self.z.clone();
            } else {
                self.z = z_bck.clone();
                rho_fwd.clone_from(&rho);
                fwd_bck = Edge { p: bck_fwd.p.clone(), p_sharp: bck_fwd.p_sharp.clone() };
                valid = self.build_tree(
                    depth,
                    &mut z_propose,
                    &mut bck_fwd,
                    &mut bck_bck,
                    &mut rho_bck,
                    -1.0,
                    &mut lsw_subtree,
                    rng,
                );
                z_bck = self.z.clone();
            }
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample = z_propose.clone();
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&bck_bck.p_sharp, &fwd_fwd.p_sharp, &rho);
            let ext = add(&rho_bck, &fwd_bck.p);
            persist &= no_u_turn(&bck_bck.p_sharp, &fwd_bck.p_sharp, &ext);
            let ext = add(&rho_fwd, &bck_fwd.p);
            persist &= no_u_turn(&bck_fwd.p_sharp, &fwd_fwd.p_sharp, &ext);
            if !persist {
                break;
            }
        }

        self.z = z_sample;
        Transition {
            accept_stat: if self.n_leapfrog > 0 { self.sum_metro_prob / self.n_leapfrog as f64 } else { 0.0 },
            divergent: self.divergent,
            depth,
            n_leapfrog: self.n_leapfrog,
            energy: self.z.hamiltonian(&inv_m),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z_propose: &mut State,
        beg: &mut Edge,
        end: &mut Edge,
        rho: &mut [f64],
        sign: f64,
        log_sum_weight: &mut f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == 0 {
            leapfrog(self.target, &mut self.z, sign * self.step_size, &self.inv_metric);
            self.n_leapfrog += 1;
            let h = self.z.hamiltonian(&self.inv_metric);
            if h - self.h0 > self.max_delta_h {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 { 1.0 } else { (self.h0 - h).exp() };
            z_propose.clone_from(&self.z);
            let ps = self.z.p_sharp(&self.inv_metric);
            beg.p_sharp.clone_from(&ps);
            end.p_sharp = ps;
            add_assign(rho, &self.z.p);
            beg.p.clone_from(&self.z.p);
            end.p.clone_from(&self.z.p);
            return !self.divergent;
        }

        let d = rho.len();
        let mut init_end = Edge { p: vec![0.0; d], p_sharp: vec![0.0; d] };
        let mut rho_init = vec![0.0; d];
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build_tree(depth - 1, z_propose, beg, &mut init_end, &mut rho_init, sign, &mut lsw_init, rng) {
            return false;
        }

        let mut z_final = self.z.clone();
        let mut final_beg = Edge { p: vec![0.0; d], p_sharp: vec![0.0; d] };
        let mut rho_final = vec![0.0; d];
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build_tree(depth - 1, &mut z_final, &mut final_beg, end, &mut rho_final, sign, &mut lsw_final, rng) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *z_propose = z_final;
        }

        let rho_subtree = add(&rho_init, &rho_final);
        add_assign(rho, &rho_subtree);
        let mut persist = no_u_turn(&beg.p_sharp, &end.p_sharp, &rho_subtree);
        let ext = add(&rho_init, &final_beg.p);
        persist &= no_u_turn(&beg.p_sharp, &final_beg.p_sharp, &ext);
        let ext = add(&rho_final, &init_end.p);
        persist &= no_u_turn(&init_end.p_sharp, &end.p_sharp, &ext);
        persist
    }
}
