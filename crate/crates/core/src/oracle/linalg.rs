//! Dense solvers for the oracle.
//!
//! A base factorization gives a working-precision solution, which is then
//! refined with residuals evaluated in compensated arithmetic against the
//! implicit operator. Refined solutions are kept as unevaluated sums
//! `hi + lo`, so entries of size 1e9 still carry absolute accuracy far below
//! one unit in the last place of `hi`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated accumulator (Ogita, Rump and Oishi `Dot2`).
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct Dot2 {
    hi: f64,
    lo: f64,
}

impl Dot2 {
    pub fn new(v: f64) -> Self {
        Dot2 { hi: v, lo: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.hi, v);
        self.hi = s;
        self.lo += e;
    }

    #[inline]
    pub fn add_prod(&mut self, a: f64, b: f64) {
        let (p, pe) = two_prod(a, b);
        let (s, e) = two_sum(self.hi, p);
        self.hi = s;
        self.lo += e + pe;
    }

    pub fn add_dot2(&mut self, other: Dot2) {
        self.add(other.hi);
        self.add(other.lo);
    }

    /// Adds `w * other` for a double-length `other`.
    pub fn add_scaled(&mut self, w: f64, other: Dot2) {
        self.add_prod(w, other.hi);
        self.add_prod(w, other.lo);
    }

    pub fn neg(self) -> Dot2 {
        Dot2 { hi: -self.hi, lo: -self.lo }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

impl std::ops::Sub for Dot2 {
    type Output = Dot2;
    fn sub(mut self, rhs: Dot2) -> Dot2 {
        self.add_dot2(rhs.neg());
        self
    }
}

/// Vector stored as `hi + lo`.
#[derive(Clone, Debug, PartialEq)]
pub struct DdVector {
    pub hi: DVector<f64>,
    pub lo: DVector<f64>,
}

impl DdVector {
    pub fn get(&self, k: usize) -> Dot2 {
        Dot2 { hi: self.hi[k], lo: self.lo[k] }
    }

    pub fn len(&self) -> usize {
        self.hi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hi.is_empty()
    }
}

/// Stationary vector of a row-stochastic matrix by Grassmann-Taksar-Heyman
/// elimination, which involves no subtractions and keeps small entries
/// accurate to high relative precision.
pub fn gth_stationary(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik != 0.0 {
                for j in 0..k {
                    a[(i, j)] += aik * a[(k, j)];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    for k in 1..n {
        x[k] = (0..k).map(|i| x[i] * a[(i, k)]).sum();
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

/// Working-precision solver used inside refinement.
pub trait BaseSolver {
    fn base_solve(&self, b: &DVector<f64>) -> Option<DVector<f64>>;
}

/// Partial-pivoting LU.
pub struct DenseLu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>);

impl DenseLu {
    pub fn new(a: DMatrix<f64>) -> Self {
        DenseLu(a.lu())
    }
}

impl BaseSolver for DenseLu {
    fn base_solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        self.0.solve(b)
    }
}

/// Elimination for `I - Q` with `Q` substochastic, written in terms of the
/// off-diagonal magnitudes and row defects so that no pivot is formed by
/// subtraction. Solutions with non-negative right-hand sides are accurate
/// entrywise, even when they span many orders of magnitude.
pub struct MMatrixLu {
    n: usize,
    /// Row-major; upper part holds the eliminated off-diagonal magnitudes,
    /// lower part the multipliers.
    w: Vec<f64>,
    pivots: Vec<f64>,
}

impl MMatrixLu {
    /// `offdiag` holds `Q_rc` for `r != c` (row-major, diagonal ignored) and
    /// `defect[r] = 1 - sum_c Q_rc` including the diagonal.
    pub fn new(n: usize, mut offdiag: Vec<f64>, mut defect: Vec<f64>) -> Self {
        let mut pivots = vec![0.0; n];
        for p in 0..n {
            let d = defect[p] + ((p + 1)..n).map(|c| offdiag[p * n + c]).sum::<f64>();
            pivots[p] = d;
            for r in (p + 1)..n {
                let a = offdiag[r * n + p];
                if a == 0.0 {
                    continue;
                }
                let m = a / d;
                offdiag[r * n + p] = m;
                for c in (p + 1)..n {
                    if c != r {
                        offdiag[r * n + c] += m * offdiag[p * n + c];
                    }
                }
                defect[r] += m * defect[p];
            }
        }
        MMatrixLu { n, w: offdiag, pivots }
    }
}

impl BaseSolver for MMatrixLu {
    fn base_solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.n;
        let mut y = b.clone();
        for p in 0..n {
            for r in (p + 1)..n {
                let m = self.w[r * n + p];
                if m != 0.0 {
                    y[r] += m * y[p];
                }
            }
        }
        for p in (0..n).rev() {
            let mut acc = y[p];
            for c in (p + 1)..n {
                acc += self.w[p * n + c] * y[c];
            }
            if !(self.pivots[p] > 0.0) {
                return None;
            }
            y[p] = acc / self.pivots[p];
        }
        Some(y)
    }
}

/// Accurate `b - A x` for `x = hi + lo`.
pub type Residual<'a> = Box<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + 'a>;

/// A base solver paired with an accurate residual.
pub struct RefinedSolver<'a, S> {
    base: S,
    residual: Residual<'a>,
    context: &'static str,
}

pub const MAX_REFINE: usize = 10;

impl<'a, S: BaseSolver> RefinedSolver<'a, S> {
    pub fn new(
        base: S,
        residual: impl Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + 'a,
        context: &'static str,
    ) -> Self {
        RefinedSolver { base, residual: Box::new(residual), context }
    }

    fn raw_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.base.base_solve(b).ok_or_else(|| Error::Numerical {
            context: format!("{}: singular factorization", self.context),
            residual: f64::INFINITY,
        })?;
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Numerical {
                context: format!("{}: non-finite solution", self.context),
                residual: f64::INFINITY,
            })
        }
    }

    /// Solves `A x = b`, refining until corrections stop shrinking or fall
    /// below about `1e-30` relative to the solution.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DdVector> {
        let mut hi = self.raw_solve(b)?;
        let mut lo = DVector::zeros(hi.len());
        let scale = hi.amax().max(f64::MIN_POSITIVE);
        // A correction comparable to the solution itself means the residual
        // is dominated by rounding, so it is rejected.
        let mut last = 0.5;
        for _ in 0..MAX_REFINE {
            let r = (self.residual)(&hi, &lo, b);
            let d = self.raw_solve(&r)?;
            let size = d.amax() / scale;
            if size >= last {
                break;
            }
            for k in 0..hi.len() {
                let (s, e) = two_sum(hi[k], d[k]);
                let (h, l) = two_sum(s, e + lo[k]);
                hi[k] = h;
                lo[k] = l;
            }
            last = size;
            if size <= 1e-30 {
                break;
            }
        }
        Ok(DdVector { hi, lo })
    }
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
