//! The five benchmark datasets, embedded so nothing needs the network.

use crate::model::Dataset;

pub const BUILTIN_NAMES: [&str; 5] = ["eight_schools", "dugongs", "surgical", "peregrine", "gp"];

/// Expert-model elpd-LOO for each benchmark, used as a reference point.
pub fn reference_elpd(name: &str) -> Option<f64> {
    Some(match name {
        "eight_schools" => -30.70,
        "dugongs" => 22.43,
        "peregrine" => -112.60,
        "surgical" => -39.73,
        "gp" => -26.53,
        _ => return None,
    })
}

fn ints(v: &[i64]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

pub fn builtin(name: &str) -> Option<Dataset> {
    let d = match name {
        "eight_schools" => Dataset::new(name, "Estimated coaching effects and their standard errors in eight schools.")
            .real("y", ints(&[28, 8, -3, 7, -1, 1, 18, 12]))
            .real("sigma", ints(&[15, 10, 16, 11, 9, 11, 10, 18])),
        "dugongs" => Dataset::new(name, "Length of 27 dugongs against their age; growth levels off with age.")
            .real(
                "X",
                vec![
                    1.0, 1.5, 1.5, 1.5, 2.5, 4.0, 5.0, 5.0, 7.0, 8.0, 8.5, 9.0, 9.5, 9.5, 10.0, 12.0, 12.0, 13.0, 13.0,
                    14.5, 15.5, 15.5, 16.5, 17.0, 22.5, 29.0, 31.5,
                ],
            )
            .real(
                "y",
                vec![
                    1.8, 1.85, 1.87, 1.77, 2.02, 2.27, 2.15, 2.26, 2.47, 2.19, 2.26, 2.4, 2.39, 2.41, 2.5, 2.32, 2.32,
                    2.43, 2.47, 2.56, 2.65, 2.47, 2.64, 2.56, 2.7, 2.72, 2.57,
                ],
            ),
        "surgical" => Dataset::new(name, "Deaths r out of n infant cardiac operations in each of 12 hospitals.")
            .int("n", ints(&[47, 148, 119, 810, 211, 196, 148, 215, 207, 97, 256, 360]))
            .int("r", ints(&[0, 18, 8, 46, 8, 13, 9, 31, 14, 8, 29, 24])),
        "peregrine" => Dataset::new(
            name,
            "Yearly counts of peregrine falcon pairs: C successful pairs out of N observed, over 40 standardized years.",
        )
        .real("year", (1..=40).map(|i| (-20 + i) as f64 / 20.0).collect())
        .int(
            "C",
            ints(&[
                27, 42, 35, 55, 61, 19, 41, 74, 43, 42, 73, 37, 48, 49, 19, 72, 30, 18, 31, 71, 63, 51, 48, 73, 49, 54,
                43, 59, 30, 24, 62, 55, 51, 47, 14, 27, 45, 20, 26, 19,
            ]),
        )
        .int(
            "N",
            ints(&[
                43, 83, 53, 91, 95, 24, 62, 91, 64, 57, 97, 56, 74, 66, 28, 92, 40, 23, 46, 96, 91, 75, 71, 100, 72,
                77, 64, 68, 43, 32, 97, 92, 75, 84, 22, 58, 81, 37, 45, 39,
            ]),
        ),
        "gp" => Dataset::new(name, "Counts k observed at 11 evenly spaced inputs x, with a real covariate y.")
            .real("x", ints(&[-10, -8, -6, -4, -2, 0, 2, 4, 6, 8, 10]))
            .real(
                "y",
                vec![4.75906, 1.59423, 2.99548, 5.27501, 1.66472, 2.24347, 2.8914, 4.08681, 4.60588, 0.802364, 3.92136],
            )
            .int("k", ints(&[40, 37, 29, 12, 4, 3, 9, 19, 77, 82, 33])),
        _ => return None,
    };
    Some(d)
}
