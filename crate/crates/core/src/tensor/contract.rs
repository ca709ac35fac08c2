use super::{matmul, DenseTensor, TensorError};
use crate::scalar::Scalar;

/// Contracts `a` and `b` over `leg_pairs` (`(leg of a, leg of b)`).
///
/// The result carries the free legs of `a` in their original order followed by
/// the free legs of `b`. With no pairs this is the outer product; when every leg
/// is paired the result is a one-element tensor of shape `[1]`.
pub fn contract<T: Scalar>(
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
    leg_pairs: &[(usize, usize)],
) -> Result<DenseTensor<T>, TensorError> {
    let mut used_a = vec![false; a.order()];
    let mut used_b = vec![false; b.order()];
    for &(la, lb) in leg_pairs {
        if la >= a.order() {
            return Err(TensorError::LegOutOfRange { leg: la, order: a.order() });
        }
        if lb >= b.order() {
            return Err(TensorError::LegOutOfRange { leg: lb, order: b.order() });
        }
        if used_a[la] {
            return Err(TensorError::RepeatedLeg(la));
        }
        if used_b[lb] {
            return Err(TensorError::RepeatedLeg(lb));
        }
        used_a[la] = true;
        used_b[lb] = true;
        if a.shape()[la] != b.shape()[lb] {
            return Err(TensorError::ExtentMismatch {
                left_leg: la,
                right_leg: lb,
                left: a.shape()[la],
                right: b.shape()[lb],
            });
        }
    }

    let free_a: Vec<usize> = (0..a.order()).filter(|&l| !used_a[l]).collect();
    let free_b: Vec<usize> = (0..b.order()).filter(|&l| !used_b[l]).collect();

    let perm_a: Vec<usize> = free_a.iter().copied().chain(leg_pairs.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = leg_pairs.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&l| a.shape()[l]).product();
    let k: usize = leg_pairs.iter().map(|p| a.shape()[p.0]).product();
    let n: usize = free_b.iter().map(|&l| b.shape()[l]).product();

    let data = matmul(pa.data(), pb.data(), m, k, n);
    let mut shape: Vec<usize> = free_a
        .iter()
        .map(|&l| a.shape()[l])
        .chain(free_b.iter().map(|&l| b.shape()[l]))
        .collect();
    if shape.is_empty() {
        shape.push(1);
    }
    DenseTensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_contraction_returns_vector() {
        let id = DenseTensor::<f64>::identity(3);
        let v = DenseTensor::new(vec![3], vec![1.5, -2.0, 0.25]).unwrap();
        let r = contract(&id, &v, &[(1, 0)]).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn outer_product_norm_is_product_of_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseTensor::<f64>::random_normal(&[3, 2], &mut rng);
        let b = DenseTensor::<f64>::random_normal(&[4], &mut rng);
        let r = contract(&a, &b, &[]).unwrap();
        assert_eq!(r.shape(), &[3, 2, 4]);
        let expected = a.frobenius_norm() * b.frobenius_norm();
        assert!((r.frobenius_norm() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn matrix_product_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DenseTensor::<f64>::random_normal(&[4, 5], &mut rng);
        let b = DenseTensor::<f64>::random_normal(&[5, 6], &mut rng);
        let c = contract(&a, &b, &[(1, 0)]).unwrap();
        assert_eq!(c.shape(), &[4, 6]);
        for i in 0..4 {
            for j in 0..6 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += a.get(&[i, k]) * b.get(&[k, j]);
                }
                assert!((c.get(&[i, j]) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn free_legs_keep_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseTensor::<f64>::random_normal(&[2, 3, 4], &mut rng);
        let b = DenseTensor::<f64>::random_normal(&[5, 3], &mut rng);
        let c = contract(&a, &b, &[(1, 1)]).unwrap();
        assert_eq!(c.shape(), &[2, 4, 5]);
        let s: f64 = (0..3).map(|k| a.get(&[1, k, 2]) * b.get(&[4, k])).sum();
        assert!((c.get(&[1, 2, 4]) - s).abs() < 1e-12);
    }

    #[test]
    fn full_contraction_is_scalar() {
        let a = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = contract(&a, &a, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(r.shape(), &[1]);
        assert_eq!(r.data()[0], 30.0);
    }

    #[test]
    fn errors_on_bad_pairs() {
        let a = DenseTensor::<f64>::zeros(&[2, 3]);
        let b = DenseTensor::<f64>::zeros(&[4, 3]);
        assert!(matches!(contract(&a, &b, &[(0, 0)]), Err(TensorError::ExtentMismatch { .. })));
        assert!(matches!(
            contract(&a, &b, &[(1, 1), (1, 0)]),
            Err(TensorError::RepeatedLeg(1))
        ));
        assert!(matches!(contract(&a, &b, &[(2, 0)]), Err(TensorError::LegOutOfRange { .. })));
    }
}
