/// Probability generating function of the number of tokens one speculative
/// step emits with per-token acceptance `alpha` and `k` drafts:
/// `1 + (x - 1)(1 - (alpha x)^(k+1)) / (1 - alpha x)`.
pub fn gen_fn(alpha: f64, k: usize, x: f64) -> f64 {
    let ax = alpha * x;
    if (1.0 - ax).abs() < 1e-6 {
        // Removable singularity: x + (x - 1) * sum_{i=1..k} (alpha x)^i.
        let tail: f64 = (1..=k).map(|i| ax.powi(i as i32)).sum();
        return x + (x - 1.0) * tail;
    }
    1.0 + (x - 1.0) * (1.0 - ax.powi(k as i32 + 1)) / (1.0 - ax)
}

/// Coefficients of [`gen_fn`] in `x`: entry `i` is the probability of
/// emitting exactly `i` tokens, for `i` in `0..=k + 1`.
pub fn gen_fn_coefficients(alpha: f64, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; k + 2];
    for i in 1..=k {
        c[i] = alpha.powi(i as i32 - 1) * (1.0 - alpha);
    }
    c[k + 1] = alpha.powi(k as i32);
    c
}

pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_pow(coeffs: &[f64], n: usize) -> Vec<f64> {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, coeffs))
}

/// `T_alpha(f) = (1 - alpha f(alpha)) / (1 - alpha)`: the expected number of
/// tokens emitted when a reviewer with acceptance `alpha` checks a draft whose
/// length has generating function `f`. At `alpha = 1` this is the limit
/// `1 + f'(1)` (for a probability polynomial).
pub fn t_alpha_expectation(coeffs: &[f64], alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return coeffs.iter().enumerate().map(|(j, c)| c * (j + 1) as f64).sum();
    }
    (1.0 - alpha * poly_eval(coeffs, alpha)) / (1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Walks all 2^k accept/reject patterns and tallies emitted lengths.
    fn enumerate_lengths(alpha: f64, k: usize) -> Vec<f64> {
        let mut dist = vec![0.0; k + 2];
        for mask in 0u32..(1 << k) {
            let mut prob = 1.0;
            for i in 0..k {
                prob *= if mask & (1 << i) != 0 { alpha } else { 1.0 - alpha };
            }
            let leading = (0..k).take_while(|i| mask & (1 << i) != 0).count();
            dist[leading + 1] += prob;
        }
        dist
    }

    #[test]
    fn coefficients_match_enumeration() {
        for k in 1..=4 {
            for a in [0.0, 0.1, 0.35, 0.5, 0.8, 0.99] {
                let coeffs = gen_fn_coefficients(a, k);
                for (c, e) in coeffs.iter().zip(enumerate_lengths(a, k)) {
                    assert!((c - e).abs() <= 1e-12);
                }
            }
        }
        let half = gen_fn_coefficients(0.5, 1);
        assert_eq!(half, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn boundary_values() {
        for k in 1..=8 {
            for a in [0.0, 0.2, 0.5, 0.9, 0.999] {
                assert!((gen_fn(a, k, 1.0) - 1.0).abs() < 1e-12);
                assert!(gen_fn(a, k, 0.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_matches_polynomial() {
        for k in 1..=6 {
            for a in [0.1, 0.5, 0.9] {
                let coeffs = gen_fn_coefficients(a, k);
                for x in [-0.5, 0.3, 0.9, 1.5, 1.0 / a] {
                    let want = poly_eval(&coeffs, x);
                    assert!((gen_fn(a, k, x) - want).abs() < 1e-9 * want.abs().max(1.0), "a={a} k={k} x={x}");
                }
            }
        }
    }

    #[test]
    fn coefficients_are_distributions() {
        for k in 1..=16 {
            for step in 0..100 {
                let a = step as f64 / 100.0;
                let c = gen_fn_coefficients(a, k);
                assert!(c.iter().all(|v| *v >= 0.0));
                assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn t_alpha_examples() {
        for j in 0..6 {
            let mut mono = vec![0.0; j + 1];
            mono[j] = 1.0;
            for a in [0.2f64, 0.7] {
                let want = (1.0 - a.powi(j as i32 + 1)) / (1.0 - a);
                assert!((t_alpha_expectation(&mono, a) - want).abs() < 1e-12);
            }
        }
        let f = [0.2, 0.3, 0.5];
        let g = [0.6, 0.0, 0.1, 0.3];
        let mix: Vec<f64> = (0..4)
            .map(|i| 0.25 * f.get(i).copied().unwrap_or(0.0) + 0.75 * g[i])
            .collect();
        let a = 0.65;
        let lhs = t_alpha_expectation(&mix, a);
        let rhs = 0.25 * t_alpha_expectation(&f, a) + 0.75 * t_alpha_expectation(&g, a);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
