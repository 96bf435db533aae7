//! Dense complex matrix helpers.
//!
//! The Hermitian eigensolver is a cyclic complex Jacobi method. It never
//! rotates a pair whose off-diagonal entry is exactly zero, so matrices that
//! are block diagonal in some permutation of the basis stay block diagonal,
//! and small eigenvalues are computed to high relative accuracy. Spectral
//! splitting of `g*g` relies on that: the `d*d` block can sit many orders of
//! magnitude below the rest of the spectrum.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

const JACOBI_MAX_SWEEPS: usize = 80;

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn scale(m: &CMatrix, s: f64) -> CMatrix {
    m.map(|z| z * s)
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Largest singular value; infinite if any entry is not finite.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    // Entries this small only matter below rounding; they also trip NaNs
    // inside the bidiagonal SVD.
    let unit = m.map(|z| {
        let u = z / scale;
        if u.norm_sqr() < 1e-200 {
            Complex64::new(0.0, 0.0)
        } else {
            u
        }
    });
    let from_svd = unit
        .clone()
        .try_svd_unordered(false, false, f64::EPSILON, 2_000)
        .map(|svd| svd.singular_values.iter().fold(0.0_f64, |acc, s| acc.max(*s)))
        .filter(|s| s.is_finite());
    let largest = from_svd.unwrap_or_else(|| {
        hermitian_eigen(&(unit.adjoint() * &unit))
            .values
            .last()
            .map_or(0.0, |v| v.max(0.0).sqrt())
    });
    largest * scale
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Operator-norm distance between two matrices of equal shape.
pub fn distance(a: &CMatrix, b: &CMatrix) -> f64 {
    op_norm(&(a - b))
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

/// Residual of `p` as an orthogonal projection: max of `‖p² − p‖` and `‖p − p*‖`.
pub fn projection_defect(p: &CMatrix) -> f64 {
    op_norm(&(p * p - p)).max(op_norm(&(p - p.adjoint())))
}

/// Trace inner product `tr(x* y)`.
pub fn trace_inner(x: &CMatrix, y: &CMatrix) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: CMatrix,
}

/// One group of numerically equal eigenvalues and its spectral projection.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub value: f64,
    pub multiplicity: usize,
    pub columns: Vec<usize>,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Groups consecutive eigenvalues whose gap is at most `tol`.
    pub fn clusters(&self, tol: f64) -> Vec<EigenCluster> {
        let mut out: Vec<EigenCluster> = Vec::new();
        for (k, &v) in self.values.iter().enumerate() {
            match out.last_mut() {
                Some(last) if (v - self.values[*last.columns.last().unwrap()]).abs() <= tol => {
                    last.columns.push(k);
                    last.multiplicity += 1;
                    let m = last.multiplicity as f64;
                    last.value += (v - last.value) / m;
                }
                _ => out.push(EigenCluster {
                    value: v,
                    multiplicity: 1,
                    columns: vec![k],
                }),
            }
        }
        out
    }

    /// Projection onto the span of the given eigenvector columns.
    pub fn projection(&self, columns: &[usize]) -> CMatrix {
        let n = self.dim();
        let mut p = zeros(n);
        for &k in columns {
            let v = self.vectors.column(k);
            p += v * v.adjoint();
        }
        p
    }

    /// `Σ f(λ_k) v_k v_k*`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> CMatrix {
        let n = self.dim();
        let mut out = zeros(n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            out += (v * v.adjoint()) * c(w);
        }
        out
    }
}

/// Eigendecomposition of a Hermitian matrix (symmetrized first).
pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    assert!(m.is_square(), "hermitian_eigen: non-square input");
    let n = m.nrows();
    let mut a = (m + m.adjoint()) * c(0.5);
    let mut v = identity(n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Relative threshold: skip once the pair is decoupled to
                // working precision relative to its own diagonal.
                if r <= f64::EPSILON * 0.5 * (app.abs() * aqq.abs()).sqrt()
                    || r <= f64::MIN_POSITIVE
                {
                    a[(p, q)] = Complex64::new(0.0, 0.0);
                    a[(q, p)] = Complex64::new(0.0, 0.0);
                    continue;
                }
                rotated = true;
                let phase = apq / r;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // U = D R with D = diag(1, conj(phase)), R = [[c, s], [-s, c]].
                let u00 = c(cs);
                let u01 = c(sn);
                let u10 = -phase.conj() * sn;
                let u11 = phase.conj() * cs;
                rotate(&mut a, &mut v, p, q, u00, u01, u10, u11);
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = c(a[(p, p)].re);
                a[(q, q)] = c(a[(q, q)].re);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    HermitianEigen { values, vectors }
}

#[allow(clippy::too_many_arguments)]
fn rotate(
    a: &mut CMatrix,
    v: &mut CMatrix,
    p: usize,
    q: usize,
    u00: Complex64,
    u01: Complex64,
    u10: Complex64,
    u11: Complex64,
) {
    let n = a.nrows();
    // A <- A U (columns p, q)
    for i in 0..n {
        let x = a[(i, p)];
        let y = a[(i, q)];
        a[(i, p)] = x * u00 + y * u10;
        a[(i, q)] = x * u01 + y * u11;
    }
    // A <- U* A (rows p, q)
    for j in 0..n {
        let x = a[(p, j)];
        let y = a[(q, j)];
        a[(p, j)] = u00.conj() * x + u10.conj() * y;
        a[(q, j)] = u01.conj() * x + u11.conj() * y;
    }
    for i in 0..n {
        let x = v[(i, p)];
        let y = v[(i, q)];
        v[(i, p)] = x * u00 + y * u10;
        v[(i, q)] = x * u01 + y * u11;
    }
}

/// Square root of a positive semidefinite matrix; negative rounding noise is clamped.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    hermitian_eigen(m).apply(|x| x.max(0.0).sqrt())
}

/// Riesz projection `(1/2πi)∮ (ζ − m)⁻¹ dζ` on the circle of the given
/// center and radius, by the trapezoidal rule with `points` nodes.
///
/// Returns `None` if the resolvent is singular at some node.
pub fn riesz_projection(m: &CMatrix, center: f64, radius: f64, points: usize) -> Option<CMatrix> {
    let n = m.nrows();
    let mut acc = zeros(n);
    for k in 0..points {
        let angle = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / points as f64;
        let w = Complex64::from_polar(radius, angle);
        let zeta = c(center) + w;
        let shifted = identity(n) * zeta - m;
        let inv = shifted.try_inverse()?;
        acc += inv * w;
    }
    Some(acc * c(1.0 / points as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(rows, rows, &data.iter().map(|x| c(*x)).collect::<Vec<_>>())
    }

    #[test]
    fn jacobi_matches_closed_form_2x2() {
        // [[1/64, 3/32], [3/32, 9/16]] has eigenvalues 0 and 37/64.
        let m = real(2, &[1.0 / 64.0, 3.0 / 32.0, 3.0 / 32.0, 9.0 / 16.0]);
        let e = hermitian_eigen(&m);
        assert!(e.values[0].abs() < 1e-15);
        assert!((e.values[1] - 37.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_reconstructs_complex_hermitian() {
        let mut m = zeros(4);
        let entries = [
            (0, 0, c(2.0)),
            (1, 1, c(-1.0)),
            (2, 2, c(0.5)),
            (3, 3, c(3.0)),
            (0, 1, Complex64::new(0.3, -0.7)),
            (1, 3, Complex64::new(-0.2, 0.1)),
            (0, 2, Complex64::new(0.0, 1.1)),
        ];
        for (i, j, z) in entries {
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
        let e = hermitian_eigen(&m);
        let rebuilt = e.apply(|x| x);
        assert!(max_abs(&(rebuilt - &m)) < 1e-13);
        for w in e.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        let gram = e.vectors.adjoint() * &e.vectors;
        assert!(max_abs(&(gram - identity(4))) < 1e-13);
    }

    #[test]
    fn jacobi_keeps_tiny_decoupled_eigenvalues_exact() {
        let mut m = real(3, &[0.25, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
        m[(2, 2)] = c(1e-14);
        let e = hermitian_eigen(&m);
        let tiny = e.values.iter().find(|v| **v > 1e-15 && **v < 1e-13).unwrap();
        assert_eq!(*tiny, 1e-14);
    }

    #[test]
    fn op_norm_of_scaled_projection() {
        let p = real(2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((op_norm(&scale(&p, 0.21)) - 0.21).abs() < 1e-15);
        assert_eq!(op_norm(&zeros(3)), 0.0);
    }

    #[test]
    fn riesz_projection_isolates_dominant_block() {
        // Upper-triangular, eigenvalues 3/4 and 0: Riesz projection at 3/4 is m/(3/4).
        let m = real(2, &[0.0, 0.0, 1.0 / 8.0, 3.0 / 4.0]);
        let p = riesz_projection(&m, 0.75, 0.2, 32).unwrap();
        let expected = scale(&m, 4.0 / 3.0);
        assert!(max_abs(&(p - expected)) < 1e-12);
    }

    #[test]
    fn clusters_merge_close_values() {
        let m = real(3, &[1.0, 0.0, 0.0, 0.0, 1.0 + 1e-13, 0.0, 0.0, 0.0, 2.0]);
        let e = hermitian_eigen(&m);
        let cl = e.clusters(1e-10);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].multiplicity, 2);
        assert!(projection_defect(&e.projection(&cl[0].columns)) < 1e-14);
    }
}
