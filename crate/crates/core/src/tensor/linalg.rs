//! QR and SVD across a leg bipartition.
//!
//! QR is Householder-based; SVD is one-sided (Hestenes) Jacobi, which keeps
//! small singular values accurate to high relative precision. Both work on
//! the row-major matricization `left legs x right legs`.

use super::{bipartition, DenseTensor, TensorError};
use crate::scalar::Scalar;

/// Default relative floor below which singular values count as zero.
pub const DEFAULT_CUTOFF: f64 = 1e-14;

/// Upper bound on the number of kept singular values; `None` is unbounded.
pub type RankLimit = Option<usize>;

#[derive(Debug, Clone)]
pub struct SvdResult<T> {
    /// Shape `[left extents.., k]`.
    pub left_isometry: DenseTensor<T>,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<T>,
    /// Shape `[k, right extents..]`, right legs in ascending original order.
    pub right_isometry: DenseTensor<T>,
    /// Root of the sum of squares of the discarded singular values.
    pub truncation_error: T,
    /// Every singular value before truncation (useful for entropies).
    pub full_spectrum: Vec<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `left . diag(s) . right`, shape `[left extents.., right extents..]`.
    pub fn recompose(&self) -> DenseTensor<T> {
        let k = self.rank();
        let mut left = self.left_isometry.clone();
        let m = left.len() / k;
        for i in 0..m {
            for (a, &s) in self.singular_values.iter().enumerate() {
                left.data_mut()[i * k + a] *= s;
            }
        }
        let order = left.order();
        super::contract(&left, &self.right_isometry, &[(order - 1, 0)]).expect("shapes agree by construction")
    }
}

/// Splits `t` as `Q . R` with `Q` an isometry over the `left_legs`.
///
/// `Q` has shape `[left extents.., k]` and `R` `[k, right extents..]` with
/// `k = min(prod left, prod right)`. The diagonal of `R` is non-negative.
pub fn qr_split<T: Scalar>(
    t: &DenseTensor<T>,
    left_legs: &[usize],
) -> Result<(DenseTensor<T>, DenseTensor<T>), TensorError> {
    let (mat, m, n, left_shape, right_shape) = matricize(t, left_legs)?;
    let (q, r, k) = householder_qr(&mat, m, n);
    let mut qs = left_shape;
    qs.push(k);
    let mut rs = vec![k];
    rs.extend(right_shape);
    Ok((DenseTensor::new(qs, q)?, DenseTensor::new(rs, r)?))
}

/// Truncated SVD across the bipartition `left_legs | rest`.
///
/// Keeps at most `max_rank` values and drops any value at or below
/// `cutoff * largest`. At least one value is always kept so the factors stay
/// well formed, even for an all-zero tensor.
pub fn svd_split<T: Scalar>(
    t: &DenseTensor<T>,
    left_legs: &[usize],
    max_rank: RankLimit,
    cutoff: T,
) -> Result<SvdResult<T>, TensorError> {
    let (mat, m, n, left_shape, right_shape) = matricize(t, left_legs)?;
    let (u, s, vt) = jacobi_svd(&mat, m, n);
    let r = s.len();
    let smax = s.first().copied().unwrap_or_else(T::zero);
    let above = s.iter().filter(|&&x| x > cutoff * smax && x > T::zero()).count().max(1);
    let keep = match max_rank {
        Some(cap) => above.min(cap.max(1)),
        None => above,
    };
    let truncation_error = s[keep..].iter().map(|&x| x * x).sum::<T>().sqrt();

    let mut left = Vec::with_capacity(m * keep);
    for i in 0..m {
        left.extend_from_slice(&u[i * r..i * r + keep]);
    }
    let right = vt[..keep * n].to_vec();

    let mut ls = left_shape;
    ls.push(keep);
    let mut rs = vec![keep];
    rs.extend(right_shape);
    Ok(SvdResult {
        left_isometry: DenseTensor::new(ls, left)?,
        singular_values: s[..keep].to_vec(),
        right_isometry: DenseTensor::new(rs, right)?,
        truncation_error,
        full_spectrum: s,
    })
}

type Matricized<T> = (Vec<T>, usize, usize, Vec<usize>, Vec<usize>);

fn matricize<T: Scalar>(t: &DenseTensor<T>, left_legs: &[usize]) -> Result<Matricized<T>, TensorError> {
    let (left, right) = bipartition(t.order(), left_legs)?;
    let perm: Vec<usize> = left.iter().chain(&right).copied().collect();
    let p = t.permute(&perm)?;
    let left_shape: Vec<usize> = left.iter().map(|&l| t.shape()[l]).collect();
    let right_shape: Vec<usize> = right.iter().map(|&l| t.shape()[l]).collect();
    let m = left_shape.iter().product();
    let n = right_shape.iter().product();
    Ok((p.into_data(), m, n, left_shape, right_shape))
}

/// Economy Householder QR of a row-major `m x n` matrix.
/// Returns `(Q [m x k], R [k x n], k)`.
pub(crate) fn householder_qr<T: Scalar>(a: &[T], m: usize, n: usize) -> (Vec<T>, Vec<T>, usize) {
    let k = m.min(n);
    let mut r = a.to_vec();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: Vec<T> = (j..m).map(|i| r[i * n + j]).collect();
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= T::zero() { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2 = v.iter().map(|&x| x * x).sum::<T>();
        if vnorm2 == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        for col in j..n {
            let dot: T = (j..m).map(|i| v[i - j] * r[i * n + col]).sum();
            let f = (dot + dot) / vnorm2;
            for i in j..m {
                r[i * n + col] -= f * v[i - j];
            }
        }
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of the identity.
    let mut q = vec![T::zero(); m * k];
    for i in 0..k {
        q[i * k + i] = T::one();
    }
    for j in (0..k).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        let vnorm2 = v.iter().map(|&x| x * x).sum::<T>();
        for col in 0..k {
            let dot: T = (j..m).map(|i| v[i - j] * q[i * k + col]).sum();
            let f = (dot + dot) / vnorm2;
            for i in j..m {
                q[i * k + col] -= f * v[i - j];
            }
        }
    }

    let mut rk = vec![T::zero(); k * n];
    for i in 0..k {
        for col in i..n {
            rk[i * n + col] = r[i * n + col];
        }
    }
    for i in 0..k {
        if rk[i * n + i] < T::zero() {
            for col in i..n {
                rk[i * n + col] = -rk[i * n + col];
            }
            for row in 0..m {
                q[row * k + i] = -q[row * k + i];
            }
        }
    }
    (q, rk, k)
}

/// Thin SVD of a row-major `m x n` matrix: `(U [m x r], s [r], Vt [r x n])`,
/// `r = min(m, n)`, singular values sorted non-increasing.
pub(crate) fn jacobi_svd<T: Scalar>(a: &[T], m: usize, n: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    if m < n {
        let at = transpose(a, m, n);
        let (u, s, vt) = jacobi_svd(&at, n, m);
        // A^T = U S Vt  =>  A = Vt^T S U^T
        let r = s.len();
        let new_u = transpose(&vt, r, m);
        let new_vt = transpose(&u, n, r);
        return (new_u, s, new_vt);
    }
    // m >= n: orthogonalize the n columns, stored column-major for locality.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| (0..m).map(|i| a[i * n + j]).collect()).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut al = T::zero();
                    let mut be = T::zero();
                    let mut ga = T::zero();
                    for i in 0..m {
                        al += cp[i] * cp[i];
                        be += cq[i] * cq[i];
                        ga += cp[i] * cq[i];
                    }
                    (al, be, ga)
                };
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<(T, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (c.iter().map(|&x| x * x).sum::<T>().sqrt(), j))
        .collect();
    sv.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));

    let smax = sv.first().map(|x| x.0).unwrap_or_else(T::zero);
    let tiny = smax * T::of(1e-8);
    let mut ucols: Vec<Vec<T>> = Vec::with_capacity(n);
    for &(s, j) in &sv {
        let mut u: Vec<T> = if s > T::zero() {
            cols[j].iter().map(|&x| x / s).collect()
        } else {
            vec![T::zero(); m]
        };
        if s <= tiny || s == T::zero() {
            // Directions of (numerically) zero weight: re-orthogonalize or complete.
            orthogonalize_against(&mut u, &ucols);
            let nrm = norm(&u);
            if nrm > T::of(0.5) {
                u.iter_mut().for_each(|x| *x /= nrm);
            } else {
                u = complete_basis(&ucols, m);
            }
        }
        ucols.push(u);
    }

    let mut u = vec![T::zero(); m * n];
    let mut vt = vec![T::zero(); n * n];
    let mut s = Vec::with_capacity(n);
    for (k, &(sval, j)) in sv.iter().enumerate() {
        s.push(sval);
        for i in 0..m {
            u[i * n + k] = ucols[k][i];
        }
        for i in 0..n {
            vt[k * n + i] = v[j][i];
        }
    }
    (u, s, vt)
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn orthogonalize_against<T: Scalar>(u: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for b in basis {
            let d: T = u.iter().zip(b).map(|(&x, &y)| x * y).sum();
            for (x, &y) in u.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
    }
}

fn complete_basis<T: Scalar>(basis: &[Vec<T>], m: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..m {
        let mut u = vec![T::zero(); m];
        u[e] = T::one();
        orthogonalize_against(&mut u, basis);
        let nrm = norm(&u);
        if best.as_ref().map_or(true, |(b, _)| nrm > *b) {
            best = Some((nrm, u));
        }
        if nrm > T::of(0.7) {
            break;
        }
    }
    let (nrm, mut u) = best.expect("m > 0");
    u.iter_mut().for_each(|x| *x /= nrm);
    u
}

fn transpose<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}
