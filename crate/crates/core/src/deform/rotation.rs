//! Rotations in log form: an angle in 2D, an axis-angle vector in 3D.

use nalgebra::{DMatrix, SVD};

use crate::Real;

/// Row-major `d x d` matrix stored in a 3x3 array.
pub type Mat<T> = [[T; 3]; 3];

/// Number of log-rotation coordinates in dimension `dim`.
pub fn log_dim(dim: usize) -> usize {
    if dim == 2 {
        1
    } else {
        3
    }
}

fn skew<T: Real>(w: &[T]) -> Mat<T> {
    let z = T::zero();
    [[z, -w[2], w[1]], [w[2], z, -w[0]], [-w[1], w[0], z]]
}

fn matmul<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let mut c = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn identity<T: Real>() -> Mat<T> {
    let mut m = [[T::zero(); 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

/// `R = exp(w)`.
pub fn exp<T: Real>(dim: usize, w: &[T]) -> Mat<T> {
    if dim == 2 {
        let (s, c) = w[0].sin_cos();
        let mut m = identity();
        m[0] = [c, -s, T::zero()];
        m[1] = [s, c, T::zero()];
        return m;
    }
    let theta2: T = w.iter().map(|&x| x * x).sum();
    let theta = theta2.sqrt();
    let k = skew(w);
    let k2 = matmul(&k, &k);
    // Rodrigues with Taylor fallbacks near the identity
    let (a, b) = if theta < T::lit(1e-6) {
        (T::one() - theta2 / T::lit(6.0), T::lit(0.5) - theta2 / T::lit(24.0))
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    let mut m = identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    m
}

/// Inverse of [`exp`] for rotation matrices; angles are returned in `[-pi, pi]`.
pub fn log<T: Real>(dim: usize, r: &Mat<T>) -> Vec<T> {
    if dim == 2 {
        return vec![r[1][0].atan2(r[0][0])];
    }
    let tr = r[0][0] + r[1][1] + r[2][2];
    let cos = ((tr - T::one()) * T::lit(0.5)).max(-T::one()).min(T::one());
    let theta = cos.acos();
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    if theta < T::lit(1e-6) {
        return v.iter().map(|&x| x * T::lit(0.5)).collect();
    }
    if T::lit(std::f64::consts::PI) - theta < T::lit(1e-4) {
        // near pi the antisymmetric part vanishes; read the axis off R + I
        let mut best = 0;
        for i in 1..3 {
            if r[i][i] > r[best][best] {
                best = i;
            }
        }
        let mut axis = [T::zero(); 3];
        for (j, a) in axis.iter_mut().enumerate() {
            *a = (r[j][best] + r[best][j]) * T::lit(0.5);
        }
        axis[best] = ((r[best][best] + T::one()) * T::lit(0.5)).max(T::zero()).sqrt();
        let norm = axis.iter().map(|&x| x * x).sum::<T>().sqrt();
        let sign = if (0..3).map(|i| axis[i] * v[i]).sum::<T>() < T::zero() { -T::one() } else { T::one() };
        return axis.iter().map(|&x| sign * theta * x / norm).collect();
    }
    let f = theta / (T::lit(2.0) * theta.sin());
    v.iter().map(|&x| x * f).collect()
}

pub fn apply<T: Real>(dim: usize, r: &Mat<T>, x: &[T]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for i in 0..dim {
        out[i] = (0..dim).map(|j| r[i][j] * x[j]).sum();
    }
    out
}

/// Partial derivatives `dR/dw_k` for each log coordinate.
pub fn exp_derivatives<T: Real>(dim: usize, w: &[T]) -> Vec<Mat<T>> {
    if dim == 2 {
        let (s, c) = w[0].sin_cos();
        let mut m = [[T::zero(); 3]; 3];
        m[0] = [-s, -c, T::zero()];
        m[1] = [c, -s, T::zero()];
        return vec![m];
    }
    let r = exp(3, w);
    let theta2: T = w.iter().map(|&x| x * x).sum();
    let mut out = Vec::with_capacity(3);
    for k in 0..3 {
        let mut e = [T::zero(); 3];
        e[k] = T::one();
        let generator = if theta2 < T::lit(1e-12) {
            skew(&e)
        } else {
            // dR/dw_k = (w_k [w]x + [w x (I - R) e_k]x) R / |w|^2
            let col: Vec<T> = (0..3).map(|i| e[i] - r[i][k]).collect();
            let c = [w[1] * col[2] - w[2] * col[1], w[2] * col[0] - w[0] * col[2], w[0] * col[1] - w[1] * col[0]];
            let a = skew(w);
            let b = skew(&c);
            let mut g = [[T::zero(); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] = (w[k] * a[i][j] + b[i][j]) / theta2;
                }
            }
            g
        };
        out.push(matmul(&generator, &r));
    }
    out
}

/// Closest rotation to `m` (`d x d`) in the Frobenius sense, i.e. the
/// maximizer of `tr(R^T m)`. Returns `None` when `m` does not determine a
/// unique rotation (rank below `d - 1`).
pub fn closest_rotation(dim: usize, m: &Mat<f64>) -> Option<Mat<f64>> {
    let a = DMatrix::from_fn(dim, dim, |i, j| m[i][j]);
    let svd = SVD::new(a, true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if !(smax > 1e-300) {
        return None;
    }
    let mut sorted: Vec<f64> = sv.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if dim == 3 && sorted[1] < 1e-10 * smax {
        return None;
    }
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut ut = u.clone();
    let det = (&u * &vt).determinant();
    if det < 0.0 {
        // flip the axis of the smallest singular value
        let (imin, _) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        for r in 0..dim {
            ut[(r, imin)] = -ut[(r, imin)];
        }
    }
    let rot = ut * vt;
    let mut out = identity();
    for i in 0..dim {
        for j in 0..dim {
            out[i][j] = rot[(i, j)];
        }
    }
    Some(out)
}
