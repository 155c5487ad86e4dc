//! Terminating ₂F₁ against exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use scissor_qkd::channel::hyp2f1_terminating;

fn exact(a: i64, b: i64, c: i64, z: &BigRational) -> (BigRational, BigRational) {
    let one = BigRational::from_integer(BigInt::from(1));
    let mut term = one.clone();
    let mut sum = one.clone();
    let mut abs_sum = one;
    let mut k = 0i64;
    while a + k != 0 && b + k != 0 {
        let num = BigRational::from_integer(BigInt::from((a + k) * (b + k)));
        let den = BigRational::from_integer(BigInt::from((c + k) * (k + 1)));
        term = term * num / den * z;
        sum += &term;
        abs_sum += if term < BigRational::from_integer(BigInt::from(0)) {
            -term.clone()
        } else {
            term.clone()
        };
        k += 1;
    }
    (sum, abs_sum)
}

/// Scaled conversion that survives numerators beyond the f64 range.
fn to_f64(q: &BigRational) -> f64 {
    let (n, d) = (q.numer(), q.denom());
    let shift = n.bits() as i64 - d.bits() as i64 - 60;
    let scaled: BigInt = if shift >= 0 {
        n / (d << shift as usize)
    } else {
        (n << (-shift) as usize) / d
    };
    scaled.to_string().parse::<f64>().unwrap() * 2f64.powi(shift as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_rational_sum(a in 0i64..30, b in 0i64..30, c_off in 1i64..30, p in -1024i64..1024) {
        let (a, b, c) = (-a, -b, c_off);
        // z = p/256 is exactly representable
        let z = BigRational::new(BigInt::from(p), BigInt::from(256));
        let (sum, abs_sum) = exact(a, b, c, &z);
        let got = hyp2f1_terminating(a, b, c, p as f64 / 256.0).unwrap();
        let want = to_f64(&sum);
        let scale = to_f64(&abs_sum);
        prop_assert!((got - want).abs() <= 1e-13 * scale, "{got} vs {want} (scale {scale})");
    }
}

#[test]
fn chu_vandermonde() {
    // 2F1(-n, b; c; 1) = (c - b)_n / (c)_n
    let rising = |x: f64, n: i64| (0..n).map(|k| x + k as f64).product::<f64>();
    for n in 0..12 {
        let got = hyp2f1_terminating(-n, -20, 20, 1.0).unwrap();
        let want = rising(40.0, n) / rising(20.0, n);
        assert!((got - want).abs() < 1e-13 * want, "n={n}: {got} vs {want}");
    }
    assert_eq!(hyp2f1_terminating(0, -5, 3, 0.7).unwrap(), 1.0);
    assert!(hyp2f1_terminating(2, -5, 3, 0.7).is_err());
    assert!(hyp2f1_terminating(-2, -5, 0, 0.7).is_err());
}
