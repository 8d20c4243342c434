/// Violated precondition of [`pass_at_k`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("pass@k undefined for n={n}, c={c}, k={k} (need 0 <= c <= n and 1 <= k <= n)")]
pub struct DomainError {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

/// Unbiased Pass@K estimator `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as a product of ratios, `prod_{i<k} (n-c-i)/(n-i)` or
/// `prod_{i=n-c+1}^{n} (1 - k/i)` whichever has fewer factors, so the
/// binomial coefficients are never formed.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, DomainError> {
    if c > n || k == 0 || k > n {
        return Err(DomainError { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let prod: f64 = if k <= c {
        (0..k).map(|i| (n - c - i) as f64 / (n - i) as f64).product()
    } else {
        let kf = k as f64;
        (n - c + 1..=n).map(|i| 1.0 - kf / i as f64).product()
    };
    Ok(1.0 - prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_cases() {
        assert_eq!(pass_at_k(5, 2, 1).unwrap().to_string(), "0.4");
        assert_eq!(pass_at_k(1, 1, 1).unwrap(), 1.0);
        assert_eq!(pass_at_k(1, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(pass_at_k(3, 4, 1).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
        assert!(pass_at_k(3, 1, 4).is_err());
    }

    #[test]
    fn monotone_in_c_and_k() {
        for n in 1..=12u64 {
            for k in 1..=n {
                let mut prev = -1.0;
                for c in 0..=n {
                    let v = pass_at_k(n, c, k).unwrap();
                    assert!(v >= prev - 1e-15);
                    prev = v;
                }
            }
            for c in 0..=n {
                let mut prev = -1.0;
                for k in 1..=n {
                    let v = pass_at_k(n, c, k).unwrap();
                    assert!(v >= prev - 1e-15);
                    prev = v;
                }
            }
        }
    }
}
