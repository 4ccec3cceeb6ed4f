//! Wigner 6j symbols via the Racah formula.
//!
//! Arguments are passed as twice their value so that half-integer angular
//! momenta stay exact.

fn factorial(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn triangle_ok(a: i64, b: i64, c: i64) -> bool {
    a + b >= c && a + c >= b && b + c >= a && (a + b + c) % 2 == 0
}

/// Δ(abc) with doubled arguments; caller guarantees the triangle condition.
fn delta(a: i64, b: i64, c: i64) -> f64 {
    (factorial((a + b - c) / 2) * factorial((a - b + c) / 2) * factorial((-a + b + c) / 2)
        / factorial((a + b + c) / 2 + 1))
    .sqrt()
}

/// `{j1 j2 j3; j4 j5 j6}` with every argument doubled.
pub fn wigner_6j(j1: i64, j2: i64, j3: i64, j4: i64, j5: i64, j6: i64) -> f64 {
    if [j1, j2, j3, j4, j5, j6].iter().any(|&j| j < 0) {
        return 0.0;
    }
    if !(triangle_ok(j1, j2, j3) && triangle_ok(j1, j5, j6) && triangle_ok(j4, j2, j6) && triangle_ok(j4, j5, j3)) {
        return 0.0;
    }
    let prefactor = delta(j1, j2, j3) * delta(j1, j5, j6) * delta(j4, j2, j6) * delta(j4, j5, j3);

    let a = [
        (j1 + j2 + j3) / 2,
        (j1 + j5 + j6) / 2,
        (j4 + j2 + j6) / 2,
        (j4 + j5 + j3) / 2,
    ];
    let b = [
        (j1 + j2 + j4 + j5) / 2,
        (j2 + j3 + j5 + j6) / 2,
        (j3 + j1 + j6 + j4) / 2,
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();

    let mut sum = 0.0;
    for t in t_min..=t_max {
        let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
        let denom = a.iter().map(|&ai| factorial(t - ai)).product::<f64>()
            * b.iter().map(|&bi| factorial(bi - t)).product::<f64>();
        sum += sign * factorial(t + 1) / denom;
    }
    prefactor * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from an exact symbolic evaluation.
    #[test]
    fn known_values() {
        let cases = [
            ((3, 2, 5, 2, 3, 4), -0.040_824_829_046_386_3),
            ((3, 2, 3, 2, 3, 4), -0.163_299_316_185_545_2),
            ((3, 2, 1, 2, 3, 4), -0.204_124_145_231_931_5),
            ((2, 2, 2, 2, 2, 2), 0.16666666666666667),
            ((4, 4, 4, 4, 4, 4), -0.042_857_142_857_142_86),
            ((6, 3, 3, 3, 6, 4), 0.13093073414159543),
            ((4, 3, 3, 3, 4, 4), 0.0),
        ];
        for ((a, b, c, d, e, f), expected) in cases {
            let got = wigner_6j(a, b, c, d, e, f);
            assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
        }
    }

    #[test]
    fn triangle_violation_vanishes() {
        assert_eq!(wigner_6j(2, 2, 10, 2, 2, 2), 0.0);
        assert_eq!(wigner_6j(1, 1, 1, 1, 1, 1), 0.0);
    }

    #[test]
    fn column_permutation_symmetry() {
        let a = wigner_6j(3, 2, 5, 2, 3, 4);
        let b = wigner_6j(2, 3, 5, 3, 2, 4);
        let c = wigner_6j(5, 2, 3, 4, 3, 2);
        assert!((a - b).abs() < 1e-14);
        assert!((a - c).abs() < 1e-14);
    }
}
