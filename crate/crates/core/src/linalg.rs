//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

/// Rows buffered before a rank-k flush into the running sum.
const CHUNK: usize = 32;

/// Running sum of outer products `Σ uᵢ vᵢᵀ`.
///
/// Updates are staged in a fixed `CHUNK × p` buffer and folded in with one
/// matrix product per chunk, so storage stays `O(p²)` regardless of how many
/// terms are added.
#[derive(Debug, Clone)]
pub(crate) struct OuterSum {
    acc: DMatrix<f64>,
    lhs: DMatrix<f64>,
    rhs: Option<DMatrix<f64>>,
    filled: usize,
}

impl OuterSum {
    /// Sum of `u vᵀ` with independent left and right factors.
    pub fn general(p: usize) -> Self {
        Self {
            acc: DMatrix::zeros(p, p),
            lhs: DMatrix::zeros(CHUNK, p),
            rhs: Some(DMatrix::zeros(CHUNK, p)),
            filled: 0,
        }
    }

    /// Sum of `u uᵀ`.
    pub fn gram(p: usize) -> Self {
        Self {
            acc: DMatrix::zeros(p, p),
            lhs: DMatrix::zeros(CHUNK, p),
            rhs: None,
            filled: 0,
        }
    }

    pub fn push(&mut self, u: &DVector<f64>, v: Option<&DVector<f64>>) {
        let row = self.filled;
        for (j, &value) in u.iter().enumerate() {
            self.lhs[(row, j)] = value;
        }
        if let (Some(rhs), Some(v)) = (self.rhs.as_mut(), v) {
            for (j, &value) in v.iter().enumerate() {
                rhs[(row, j)] = value;
            }
        }
        self.filled += 1;
        if self.filled == CHUNK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.filled == 0 {
            return;
        }
        add_pending(&mut self.acc, &self.lhs, self.rhs.as_ref(), self.filled);
        self.filled = 0;
    }

    /// Applies `f` to the running sum after folding in staged terms.
    pub fn update_total(&mut self, f: impl FnOnce(&mut DMatrix<f64>)) {
        self.flush();
        f(&mut self.acc);
    }

    /// The complete sum, including terms still staged in the buffer.
    pub fn total(&self) -> DMatrix<f64> {
        let mut out = self.acc.clone();
        add_pending(&mut out, &self.lhs, self.rhs.as_ref(), self.filled);
        out
    }
}

fn add_pending(
    acc: &mut DMatrix<f64>,
    lhs: &DMatrix<f64>,
    rhs: Option<&DMatrix<f64>>,
    rows: usize,
) {
    if rows == 0 {
        return;
    }
    let p = lhs.ncols();
    let l = lhs.rows(0, rows);
    match rhs {
        Some(r) => acc.gemm_tr(1.0, &l, &r.rows(0, rows), 1.0),
        None => acc.gemm_tr(1.0, &l, &l, 1.0),
    }
    debug_assert_eq!(acc.ncols(), p);
}

/// `m ← m − a δᵀ − δ bᵀ + c δδᵀ`, the change of `Σ uᵢvᵢᵀ` when every
/// `uᵢ` moves by `−δ` and every `vᵢ` by `−wᵢδ` (`a = Σ wᵢuᵢ`, `b = Σ vᵢ`,
/// `c = Σ wᵢ` for the general case).
pub(crate) fn shift_outer(
    m: &mut DMatrix<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    delta: &DVector<f64>,
    c: f64,
) {
    let p = m.nrows();
    for k in 0..p {
        for j in 0..p {
            m[(j, k)] += -a[j] * delta[k] - delta[j] * b[k] + c * delta[j] * delta[k];
        }
    }
}

/// `(m + mᵀ) / 2`, exactly symmetric in floating point.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Which matrix norm to report estimation errors in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    #[default]
    Frobenius,
    /// Spectral norm of the (symmetric) difference.
    Operator,
}

impl ErrorNorm {
    pub fn distance(self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let diff = a - b;
        match self {
            ErrorNorm::Frobenius => diff.norm(),
            ErrorNorm::Operator => symmetrize(&diff)
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }
}

/// `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
