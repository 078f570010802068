use alloc::vec::Vec;

use super::{axpy, Mat};

/// Sylvester inertia: counts of positive, negative and zero eigenvalues.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Clone, Copy, Debug)]
enum Pivot {
    One(f64),
    Two { a: f64, b: f64, c: f64 },
}

/// `P A Pᵀ = L D Lᵀ` with Bunch-Kaufman partial pivoting: `L` unit lower
/// triangular, `D` block diagonal with 1×1 and 2×2 blocks.
///
/// Works for any symmetric matrix, definite or not, and exposes the inertia
/// of `A` through `D`.
#[derive(Clone, Debug)]
pub struct SymmetricLdl {
    n: usize,
    factor: Mat,
    perm: Vec<usize>,
    pivots: Vec<(usize, Pivot)>,
}

const ALPHA: f64 = 0.640_388_203_202_207_6; // (1 + sqrt(17)) / 8

impl SymmetricLdl {
    /// Factorizes the symmetric matrix `a` (both triangles are read).
    pub fn factor(a: &Mat) -> Self {
        assert!(a.is_square(), "LDLᵀ needs a square matrix");
        let n = a.rows();
        let mut m = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        let mut k = 0;
        let mut c0 = Vec::with_capacity(n);
        let mut c1 = Vec::with_capacity(n);
        while k < n {
            let absakk = m[(k, k)].abs();
            let (imax, colmax) =
                ((k + 1)..n)
                    .map(|i| (i, m[(i, k)].abs()))
                    .fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

            if absakk.max(colmax) == 0.0 {
                pivots.push((k, Pivot::One(0.0)));
                k += 1;
                continue;
            }

            let mut two_by_two = false;
            let mut kp = k;
            if absakk < ALPHA * colmax {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| m[(imax, j)].abs())
                    .fold(0.0, f64::max);
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    // keep the 1×1 pivot at k
                } else if m[(imax, imax)].abs() >= ALPHA * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    two_by_two = true;
                }
            }

            let kk = if two_by_two { k + 1 } else { k };
            if kp != kk {
                swap_symmetric(&mut m, kk, kp);
                perm.swap(kk, kp);
            }

            if !two_by_two {
                let d = m[(k, k)];
                c0.clear();
                c0.extend(((k + 1)..n).map(|i| m[(i, k)]));
                for (off, &ci) in c0.iter().enumerate() {
                    let i = k + 1 + off;
                    let li = ci / d;
                    if li != 0.0 {
                        axpy(-li, &c0, &mut m.row_mut(i)[k + 1..]);
                    }
                    m[(i, k)] = li;
                }
                pivots.push((k, Pivot::One(d)));
                k += 1;
            } else {
                let a = m[(k, k)];
                let b = m[(k + 1, k)];
                let c = m[(k + 1, k + 1)];
                let det = a * c - b * b;
                c0.clear();
                c1.clear();
                c0.extend(((k + 2)..n).map(|i| m[(i, k)]));
                c1.extend(((k + 2)..n).map(|i| m[(i, k + 1)]));
                for off in 0..c0.len() {
                    let i = k + 2 + off;
                    let l0 = (c * c0[off] - b * c1[off]) / det;
                    let l1 = (a * c1[off] - b * c0[off]) / det;
                    let row = &mut m.row_mut(i)[k + 2..];
                    if l0 != 0.0 {
                        axpy(-l0, &c0, row);
                    }
                    if l1 != 0.0 {
                        axpy(-l1, &c1, row);
                    }
                    m[(i, k)] = l0;
                    m[(i, k + 1)] = l1;
                }
                m[(k + 1, k)] = 0.0;
                pivots.push((k, Pivot::Two { a, b, c }));
                k += 2;
            }
        }
        Self {
            n,
            factor: m,
            perm,
            pivots,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        let mut count = |v: f64| {
            if v > 0.0 {
                out.positive += 1;
            } else if v < 0.0 {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        };
        for (_, p) in &self.pivots {
            match *p {
                Pivot::One(d) => count(d),
                Pivot::Two { a, b, c } => {
                    let det = a * c - b * b;
                    let tr = a + c;
                    if det < 0.0 {
                        count(1.0);
                        count(-1.0);
                    } else if det > 0.0 {
                        count(tr);
                        count(tr);
                    } else {
                        count(tr);
                        count(0.0);
                    }
                }
            }
        }
        out
    }

    /// Smallest pivot magnitude; zero means the matrix is singular.
    pub fn min_pivot(&self) -> f64 {
        self.pivots
            .iter()
            .map(|(_, p)| match *p {
                Pivot::One(d) => d.abs(),
                Pivot::Two { a, b, c } => {
                    // smaller eigenvalue magnitude of the 2×2 block
                    let tr = a + c;
                    let det = a * c - b * b;
                    let disc = libm::sqrt(((a - c) * (a - c) + 4.0 * b * b).max(0.0));
                    let l1 = 0.5 * (tr + disc);
                    let l2 = 0.5 * (tr - disc);
                    if det == 0.0 {
                        0.0
                    } else {
                        l1.abs().min(l2.abs())
                    }
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Solves `A x = rhs`. Returns `None` if a pivot is exactly zero.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        assert_eq!(rhs.len(), n, "rhs dimension mismatch");
        let mut y: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        // L y = P b
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for i in (k + 1)..n {
                    y[i] -= self.factor[(i, k)] * yk;
                }
            }
        }
        // D z = y
        for (k, p) in &self.pivots {
            let k = *k;
            match *p {
                Pivot::One(d) => {
                    if d == 0.0 {
                        return None;
                    }
                    y[k] /= d;
                }
                Pivot::Two { a, b, c } => {
                    let det = a * c - b * b;
                    if det == 0.0 {
                        return None;
                    }
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (c * y0 - b * y1) / det;
                    y[k + 1] = (a * y1 - b * y0) / det;
                }
            }
        }
        // Lᵀ w = z
        for k in (0..n).rev() {
            let mut acc = y[k];
            for i in (k + 1)..n {
                acc -= self.factor[(i, k)] * y[i];
            }
            y[k] = acc;
        }
        let mut x = alloc::vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        Some(x)
    }
}

fn swap_symmetric(m: &mut Mat, r: usize, s: usize) {
    let n = m.rows();
    for j in 0..n {
        let tmp = m[(r, j)];
        m[(r, j)] = m[(s, j)];
        m[(s, j)] = tmp;
    }
    for i in 0..n {
        let tmp = m[(i, r)];
        m[(i, r)] = m[(i, s)];
        m[(i, s)] = tmp;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigenvalues;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn solves_indefinite_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 7, 20] {
            let a = random_symmetric(n, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = a.matvec(&x);
            let got = SymmetricLdl::factor(&a).solve(&b).unwrap();
            let err: f64 = got.iter().zip(&x).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n} err={err}");
        }
    }

    #[test]
    fn zero_diagonal_forces_two_by_two_pivot() {
        let a = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let ldl = SymmetricLdl::factor(&a);
        assert_eq!(
            ldl.inertia(),
            Inertia {
                positive: 1,
                negative: 1,
                zero: 0
            }
        );
        assert_eq!(ldl.solve(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn inertia_matches_eigenvalue_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..25 {
            let a = random_symmetric(n, &mut rng);
            let eig = jacobi_eigenvalues(&a).unwrap();
            let pos = eig.iter().filter(|v| **v > 0.0).count();
            let inertia = SymmetricLdl::factor(&a).inertia();
            assert_eq!(inertia.positive, pos);
            assert_eq!(inertia.negative, n - pos);
        }
    }

    #[test]
    fn singular_matrix_reports_zero_pivot() {
        let l = Mat::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        let ldl = SymmetricLdl::factor(&l);
        assert_eq!(ldl.inertia().zero, 1);
        assert!(ldl.solve(&[1.0, 0.0]).is_none());
    }
}
