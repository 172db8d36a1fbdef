//! Tape-based reverse-mode automatic differentiation over `f64` scalars.
//!
//! Every operation appends a node holding its value and the local partial
//! derivatives with respect to its parents. A single reverse sweep from the
//! output accumulates adjoints for every node on the tape.
//!
//! Nodes that do not depend on any input are tracked as inactive. Their edges
//! are never recorded, so constants (observed data, literals) cost one slot
//! and nothing in the sweep.

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    active: Vec<bool>,
    starts: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            values: Vec::with_capacity(nodes),
            active: Vec::with_capacity(nodes),
            starts: Vec::with_capacity(nodes + 1),
            edges: Vec::with_capacity(nodes * 2),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.values.clear();
        self.active.clear();
        self.starts.clear();
        self.edges.clear();
    }

    fn push_node(&mut self, value: f64, active: bool) -> Var {
        if self.starts.is_empty() {
            self.starts.push(0);
        }
        let id = self.values.len() as u32;
        self.values.push(value);
        self.active.push(active);
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }

    /// An independent variable; gradients are reported with respect to these.
    pub fn input(&mut self, value: f64) -> Var {
        self.push_node(value, true)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push_node(value, false)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn is_active(&self, v: Var) -> bool {
        self.active[v.index()]
    }

    /// Records a node with explicit local partials `d value / d parent`.
    pub fn custom(&mut self, value: f64, partials: &[(Var, f64)]) -> Var {
        let active = partials.iter().any(|(p, _)| self.active[p.index()]);
        if !active {
            return self.push_node(value, false);
        }
        for &(p, d) in partials {
            if self.active[p.index()] {
                self.edges.push((p.0, d));
            }
        }
        self.push_node(value, true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.custom(v, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.custom(v, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.custom(x * y, &[(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let q = x / y;
        self.custom(q, &[(a, 1.0 / y), (b, -q / y)])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.custom(v, &[(a, -1.0)])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.custom(v, &[(a, v)])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.custom(x.ln(), &[(a, 1.0 / x)])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).sqrt();
        self.custom(v, &[(a, 0.5 / v)])
    }

    /// `a ^ b`. The exponent partial is only taken when `b` is active, so
    /// constant powers of negative bases stay differentiable.
    pub fn pow(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let v = x.powf(y);
        let dx = if y == 0.0 { 0.0 } else { y * x.powf(y - 1.0) };
        if self.is_active(b) {
            let dy = if v == 0.0 { 0.0 } else { v * x.ln() };
            self.custom(v, &[(a, dx), (b, dy)])
        } else {
            self.custom(v, &[(a, dx)])
        }
    }

    pub fn logit(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.custom((x / (1.0 - x)).ln(), &[(a, 1.0 / (x * (1.0 - x)))])
    }

    pub fn invlogit(&mut self, a: Var) -> Var {
        let s = sigmoid(self.value(a));
        self.custom(s, &[(a, s * (1.0 - s))])
    }

    /// `ln(invlogit(a))`, evaluated without forming the sigmoid.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.custom(log_sigmoid(x), &[(a, sigmoid(-x))])
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let v: f64 = terms.iter().map(|t| self.value(*t)).sum();
        let partials: Vec<(Var, f64)> = terms.iter().map(|t| (*t, 1.0)).collect();
        self.custom(v, &partials)
    }

    /// Adjoints of `output` with respect to every node on the tape.
    pub fn adjoints(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        adj[output.index()] = 1.0;
        for i in (0..=output.index()).rev() {
            let a = adj[i];
            if a == 0.0 || !self.active[i] {
                continue;
            }
            let (s, e) = (self.starts[i] as usize, self.starts[i + 1] as usize);
            for &(p, d) in &self.edges[s..e] {
                adj[p as usize] += a * d;
            }
        }
        adj
    }

    /// Gradient of `output` with respect to `inputs`, in order.
    pub fn gradient(&self, output: Var, inputs: &[Var]) -> Vec<f64> {
        let adj = self.adjoints(output);
        inputs.iter().map(|v| adj[v.index()]).collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x)) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
