use crate::scalar::Real;

/// Symmetric truncation `T_k(s) = max(-k, min(k, s))`.
#[inline]
pub fn truncate_tk<T: Real>(s: T, k: T) -> T {
    s.max(-k).min(k)
}

/// Odd dead-zone truncation: 0 on `[0, h]`, `s - h` on `(h, h + k)`, `k` beyond.
#[inline]
pub fn truncate_thk<T: Real>(s: T, h: T, k: T) -> T {
    let a = s.abs();
    let v = if a <= h {
        T::zero()
    } else if a < h + k {
        a - h
    } else {
        k
    };
    if s < T::zero() {
        -v
    } else {
        v
    }
}

/// Derivative of `T_k` away from the kinks.
#[inline]
pub fn truncate_tk_prime<T: Real>(s: T, k: T) -> T {
    if s.abs() < k {
        T::one()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tk_examples() {
        assert_eq!(truncate_tk(3.0, 2.0), 2.0);
        assert_eq!(truncate_tk(-3.0, 2.0), -2.0);
        assert_eq!(truncate_tk(1.2, 5.0), 1.2);
        assert_eq!(truncate_tk(2.0, 2.0), 2.0);
    }

    #[test]
    fn thk_examples() {
        assert_eq!(truncate_thk(1.5, 1.0, 2.0), 0.5);
        assert_eq!(truncate_thk(5.0, 1.0, 2.0), 2.0);
        assert_eq!(truncate_thk(-0.5, 1.0, 2.0), 0.0);
        assert_eq!(truncate_thk(-1.5, 1.0, 2.0), -0.5);
        // continuity at both kinks
        assert!((truncate_thk(3.0f64 - 1e-12, 1.0, 2.0) - 2.0).abs() < 1e-11);
        assert_eq!(truncate_thk(1.0, 1.0, 2.0), 0.0);
    }

    proptest! {
        #[test]
        fn truncations_odd_bounded_lipschitz(s in -50.0f64..50.0, t in -50.0f64..50.0,
                                             h in 0.0f64..10.0, k in 0.01f64..10.0) {
            prop_assert_eq!(truncate_tk(-s, k), -truncate_tk(s, k));
            prop_assert_eq!(truncate_thk(-s, h, k), -truncate_thk(s, h, k));
            prop_assert!(truncate_tk(s, k).abs() <= s.abs().min(k));
            prop_assert!(truncate_thk(s, h, k).abs() <= k);
            prop_assert!((truncate_tk(s, k) - truncate_tk(t, k)).abs() <= (s - t).abs() + 1e-12);
            prop_assert!((truncate_thk(s, h, k) - truncate_thk(t, h, k)).abs() <= (s - t).abs() + 1e-12);
        }
    }
}
