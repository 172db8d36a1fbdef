//! Shared fixtures for the benchmarks.

use ppsynth::{bind, datasets, grammar, BoundModel, Registry};

pub const NONCENTERED: &str = "model {
  data { y: vector[8]; sigma: vector[8]; }
  prior {
    mu ~ Normal(0, 5);
    tau ~ HalfCauchy(5);
    theta_tilde[8] ~ Normal(0, 1);
    theta = mu + tau * theta_tilde;
  }
  likelihood { y ~ Normal(theta, sigma); }
}";

pub fn eight_schools() -> BoundModel {
    let ds = datasets::builtin("eight_schools").expect("builtin dataset");
    bind(&grammar::parse(NONCENTERED).expect("parses"), &ds, &Registry::default()).expect("binds")
}
