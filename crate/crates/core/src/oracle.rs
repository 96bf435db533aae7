//! Dimension of the *-algebra generated by a set of matrices.
//!
//! The span of all words in the generators and their adjoints is grown by
//! left multiplication with generators, and kept orthonormal in the trace
//! inner product `⟨x, y⟩ = tr(x* y)`.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, CMatrix};
use crate::representation::MatrixCkFamily;

pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("generators must be square matrices of one size")]
    Shape,
}

#[derive(Debug, Clone)]
pub struct SpanClosure {
    /// Orthonormal basis, one column per element (row-major flattening).
    pub basis: DMatrix<Complex64>,
    pub dim: usize,
    pub n: usize,
    /// The same basis when every generator was real.
    real: Option<DMatrix<f64>>,
}

/// Entry types the closure runs over; real inputs stay real, which is
/// about four times cheaper.
trait Entry: ComplexField<RealField = f64> + Copy {}
impl Entry for f64 {}
impl Entry for Complex64 {}

fn flatten<T: Entry>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_iterator(m.len(), m.transpose().iter().copied())
}

fn unflatten<T: Entry>(v: &DVector<T>, n: usize) -> DMatrix<T> {
    DMatrix::from_row_slice(n, n, v.as_slice())
}

/// Largest column norm of `x − B B* x`.
fn residual_columns<T: Entry>(basis: &DMatrix<T>, x: &DMatrix<T>) -> f64 {
    if x.ncols() == 0 {
        return 0.0;
    }
    let rest = x - basis * (basis.adjoint() * x);
    (0..x.ncols()).map(|k| rest.column(k).norm()).fold(0.0, f64::max)
}

impl SpanClosure {
    pub fn element(&self, k: usize) -> CMatrix {
        unflatten(&self.basis.column(k).into_owned(), self.n)
    }

    /// Norm of the component of `x` orthogonal to the span, relative to `‖x‖`.
    pub fn relative_residual(&self, x: &CMatrix) -> f64 {
        let v = flatten(x);
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        residual_columns(&self.basis, &DMatrix::from_column_slice(v.len(), 1, v.as_slice())) / norm
    }

    /// Largest residual of `other`'s (orthonormal) basis against this span.
    pub fn contains(&self, other: &SpanClosure) -> f64 {
        match (&self.real, &other.real) {
            (Some(a), Some(b)) => residual_columns(a, b),
            _ => residual_columns(&self.basis, &other.basis),
        }
    }
}

struct Builder<T: Entry> {
    n: usize,
    basis: Vec<DVector<T>>,
}

impl<T: Entry> Builder<T> {
    fn matrix(&self) -> DMatrix<T> {
        if self.basis.is_empty() {
            DMatrix::zeros(self.n * self.n, 0)
        } else {
            DMatrix::from_columns(&self.basis)
        }
    }

    /// Orthogonalizes a batch against the basis, then runs column-pivoted
    /// Gram-Schmidt on what is left: the column with the largest remaining
    /// norm is accepted while that norm clears `RANK_TOL · σ_max` of the
    /// normalized batch. Returns the accepted elements.
    fn add_batch(&mut self, cands: Vec<DMatrix<T>>) -> Vec<DMatrix<T>> {
        let full = self.n * self.n;
        let cols: Vec<DVector<T>> = cands
            .iter()
            .map(flatten)
            .filter_map(|v| {
                let norm = v.norm();
                (norm > 0.0 && norm.is_finite()).then(|| v.unscale(norm))
            })
            .collect();
        if cols.is_empty() || self.basis.len() >= full {
            return Vec::new();
        }
        let mut r = DMatrix::from_columns(&cols);
        let threshold = RANK_TOL * largest_singular_value(&r);
        if !self.basis.is_empty() {
            let b = self.matrix();
            for _ in 0..2 {
                let coeffs = b.adjoint() * &r;
                r -= &b * coeffs;
            }
        }
        let mut accepted = Vec::new();
        let mut remaining: Vec<usize> = (0..r.ncols()).collect();
        while self.basis.len() < full {
            let Some((pos, norm)) = remaining
                .iter()
                .enumerate()
                .map(|(pos, &k)| (pos, r.column(k).norm()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
            else {
                break;
            };
            if norm <= threshold {
                break;
            }
            let k = remaining.swap_remove(pos);
            let mut v = r.column(k).into_owned();
            // Second pass against everything accepted so far keeps the
            // basis orthonormal even for directions near the threshold.
            for q in &self.basis {
                let c = q.dotc(&v);
                v.axpy(-c, q, T::one());
            }
            let vn = v.norm();
            if vn <= threshold {
                continue;
            }
            v.unscale_mut(vn);
            for &j in &remaining {
                let c = v.dotc(&r.column(j));
                r.column_mut(j).axpy(-c, &v, T::one());
            }
            accepted.push(unflatten(&v, self.n));
            self.basis.push(v);
        }
        accepted
    }
}

/// `σ_max` from the Gram matrix of the narrower side.
fn largest_singular_value<T: Entry>(r: &DMatrix<T>) -> f64 {
    let gram = if r.ncols() <= r.nrows() {
        r.adjoint() * r
    } else {
        r * r.adjoint()
    };
    let as_complex = gram.map(|z| Complex64::new(z.real(), z.imaginary()));
    linalg::op_norm(&as_complex).sqrt()
}

fn closure<T: Entry>(generators: &[DMatrix<T>], n: usize) -> DMatrix<T> {
    let mut mult: Vec<DMatrix<T>> = Vec::new();
    for g in generators {
        mult.push(g.clone());
        if (g - g.adjoint()).norm() > 0.0 {
            mult.push(g.adjoint());
        }
    }
    let mut builder = Builder { n, basis: Vec::new() };
    let mut frontier = builder.add_batch(mult.clone());
    while !frontier.is_empty() {
        let cands: Vec<DMatrix<T>> = frontier
            .iter()
            .flat_map(|q| mult.iter().map(move |x| x * q))
            .collect();
        frontier = builder.add_batch(cands);
    }
    builder.matrix()
}

pub fn span_closure_dim(generators: &[CMatrix]) -> Result<SpanClosure, OracleError> {
    let n = generators.first().map_or(0, |g| g.nrows());
    if generators.iter().any(|g| g.nrows() != n || g.ncols() != n) {
        return Err(OracleError::Shape);
    }
    let real = generators.iter().all(|g| g.iter().all(|z| z.im == 0.0));
    let (basis, real) = if real {
        let gens: Vec<DMatrix<f64>> = generators.iter().map(|g| g.map(|z| z.re)).collect();
        let b = closure(&gens, n);
        (b.map(|x| Complex64::new(x, 0.0)), Some(b))
    } else {
        (closure(generators, n), None)
    };
    Ok(SpanClosure {
        dim: basis.ncols(),
        basis,
        n,
        real,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationCheck {
    pub generated_dim: usize,
    pub family_dim: usize,
    /// Largest residual of the family algebra's basis against `C*(g)`.
    pub family_in_generated: f64,
    /// Largest residual of `C*(g)`'s basis against the family algebra.
    pub generated_in_family: f64,
    pub pass: bool,
}

pub const CONTAINMENT_TOL: f64 = 1e-6;

/// Whether `g` alone generates the algebra of the whole family.
pub fn single_generation_check(g: &CMatrix, family: &MatrixCkFamily) -> Result<GenerationCheck, OracleError> {
    let generated = span_closure_dim(std::slice::from_ref(g))?;
    let full = span_closure_dim(&family.generators())?;
    let family_in_generated = generated.contains(&full);
    let generated_in_family = full.contains(&generated);
    Ok(GenerationCheck {
        generated_dim: generated.dim,
        family_dim: full.dim,
        family_in_generated,
        generated_in_family,
        pass: generated.dim == full.dim
            && family_in_generated <= CONTAINMENT_TOL
            && generated_in_family <= CONTAINMENT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures;
    use crate::representation::build_path_representation;

    #[test]
    fn small_examples() {
        let fam = build_path_representation(&fixtures::g2()).unwrap();
        assert_eq!(span_closure_dim(&fam.partial_isometries).unwrap().dim, 4);
        assert_eq!(span_closure_dim(&[linalg::identity(3)]).unwrap().dim, 1);
        let g3 = build_path_representation(&fixtures::g3()).unwrap();
        assert_eq!(span_closure_dim(&g3.generators()).unwrap().dim, 9);
    }

    #[test]
    fn vertex_projection_alone_is_not_enough() {
        let fam = build_path_representation(&fixtures::g3()).unwrap();
        let check = single_generation_check(&fam.projections[0], &fam).unwrap();
        assert!(!check.pass);
        assert_eq!((check.generated_dim, check.family_dim), (1, 9));
    }

    #[test]
    fn idempotent_on_own_basis() {
        let fam = build_path_representation(&fixtures::g6()).unwrap();
        let span = span_closure_dim(&fam.generators()).unwrap();
        let again: Vec<CMatrix> = (0..span.dim).map(|k| span.element(k)).collect();
        assert_eq!(span_closure_dim(&again).unwrap().dim, span.dim);
    }

    #[test]
    fn rejects_mixed_sizes() {
        assert!(span_closure_dim(&[linalg::identity(2), linalg::identity(3)]).is_err());
    }
}
