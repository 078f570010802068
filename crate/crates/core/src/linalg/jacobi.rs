use alloc::vec;
use alloc::vec::Vec;

use super::Mat;

const MAX_SWEEPS: usize = 60;

/// Result of a cyclic Jacobi diagonalization. Eigenvalues are unsorted;
/// `vectors` (when requested) holds the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct JacobiOutput {
    pub values: Vec<f64>,
    pub vectors: Option<Mat>,
    pub sweeps: usize,
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Only the upper triangle of `a` is read. Returns `None` if the sweep budget
/// runs out, which for symmetric finite input does not happen in practice.
pub fn jacobi_eigh(a: &Mat) -> Option<JacobiOutput> {
    run(a, true)
}

/// Eigenvalues only (skips accumulating the rotations).
pub fn jacobi_eigenvalues(a: &Mat) -> Option<Vec<f64>> {
    run(a, false).map(|out| out.values)
}

#[inline]
fn rotate(a: &mut [f64], n: usize, (i, j): (usize, usize), (k, l): (usize, usize), s: f64, tau: f64) {
    let g = a[i * n + j];
    let h = a[k * n + l];
    a[i * n + j] = g - s * (h + g * tau);
    a[k * n + l] = h + s * (g - h * tau);
}

fn run(input: &Mat, want_vectors: bool) -> Option<JacobiOutput> {
    assert!(input.is_square(), "jacobi needs a square matrix");
    let n = input.rows();
    let mut a = input.as_slice().to_vec();
    // rows of `vt` are the eigenvectors, so rotations touch contiguous memory
    let mut vt = if want_vectors { Some(Mat::identity(n)) } else { None };
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 1..=MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        if off == 0.0 {
            return Some(JacobiOutput {
                values: d,
                vectors: vt.map(|m| m.transpose()),
                sweeps: sweep - 1,
            });
        }
        let thresh = if sweep < 4 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[p * n + q] = 0.0;
                } else if apq.abs() > thresh {
                    let h = d[q] - d[p];
                    let t = if h.abs() + g == h.abs() {
                        apq / h
                    } else {
                        let theta = 0.5 * h / apq;
                        let t = 1.0 / (theta.abs() + libm::sqrt(1.0 + theta * theta));
                        if theta < 0.0 {
                            -t
                        } else {
                            t
                        }
                    };
                    let c = 1.0 / libm::sqrt(1.0 + t * t);
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    let h = t * apq;
                    z[p] -= h;
                    z[q] += h;
                    d[p] -= h;
                    d[q] += h;
                    a[p * n + q] = 0.0;
                    for j in 0..p {
                        rotate(&mut a, n, (j, p), (j, q), s, tau);
                    }
                    for j in (p + 1)..q {
                        rotate(&mut a, n, (p, j), (j, q), s, tau);
                    }
                    for j in (q + 1)..n {
                        rotate(&mut a, n, (p, j), (q, j), s, tau);
                    }
                    if let Some(vt) = vt.as_mut() {
                        let data = vt.as_mut_slice();
                        let (head, tail) = data.split_at_mut(q * n);
                        let rp = &mut head[p * n..(p + 1) * n];
                        let rq = &mut tail[..n];
                        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                            let g = *x;
                            let h = *y;
                            *x = g - s * (h + g * tau);
                            *y = h + s * (g - h * tau);
                        }
                    }
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }
    None
}
