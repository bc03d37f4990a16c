//! Dense linear algebra used throughout the crate.
//!
//! Everything here is deliberately small: row-major [`DenseMatrix`], the
//! [`BlockLayout`] describing how the joint strategy vector is split among
//! players, and the two spectral quantities the diagnostics need (spectral
//! norm by power iteration, spectral radius via a dense eigensolver).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for [`spectral_norm`].
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-10;
/// Default iteration cap for [`spectral_norm`].
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 10_000;
/// Seed of the power-iteration start vector.
pub const POWER_ITERATION_SEED: u64 = 0x005E_ED0F_1A57;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries. Rejects a length mismatch and
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry ({}, {})", pos / cols.max(1), pos % cols.max(1))));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for
    /// literals in code and tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("operand shapes differ: {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!("cannot multiply {:?} by {:?}", self.shape(), other.shape())));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(r).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * v`. Panics if `v.len() != cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length mismatch");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `selfᵀ * v`. Panics if `v.len() != rows`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "vector length mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        out
    }

    /// Adds `alpha * u vᵀ` in place.
    pub fn rank_one_update(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows);
        assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let coef = alpha * ur;
            for (m, &vc) in self.row_mut(r).iter_mut().zip(v) {
                *m += coef * vc;
            }
        }
    }

    /// Copies the `rows × cols` window starting at (`r0`, `c0`).
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, block: &Self) {
        for r in 0..block.rows {
            let dst = &mut self.row_mut(r0 + r)[c0..c0 + block.cols];
            dst.copy_from_slice(block.row(r));
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Partition of the joint strategy vector into player blocks.
///
/// Player indices are zero-based throughout the API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one player".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("player {i} has dimension 0")));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in &dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Self { dims, offsets })
    }

    pub fn players(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, player: usize) -> usize {
        self.dims[player]
    }

    pub fn total(&self) -> usize {
        self.offsets[self.dims.len()]
    }

    pub fn offset(&self, player: usize) -> usize {
        self.offsets[player]
    }

    pub fn range(&self, player: usize) -> std::ops::Range<usize> {
        self.offsets[player]..self.offsets[player + 1]
    }

    pub fn check_player(&self, player: usize) -> Result<()> {
        if player < self.players() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: player, players: self.players() })
        }
    }
}

impl TryFrom<Vec<usize>> for BlockLayout {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<BlockLayout> for Vec<usize> {
    fn from(layout: BlockLayout) -> Self {
        layout.dims
    }
}

/// Extracts block (`i`, `j`).
///
/// For a square `d×d` matrix this is the `d_i×d_j` block. A `d_i×d` matrix
/// (one player's Jacobian rows) has all its rows returned, i.e. the block
/// column `[m]_j`.
pub fn block_get(m: &DenseMatrix, layout: &BlockLayout, i: usize, j: usize) -> Result<DenseMatrix> {
    layout.check_player(i)?;
    layout.check_player(j)?;
    if m.cols() != layout.total() {
        return Err(Error::Shape(format!("matrix has {} columns, layout expects {}", m.cols(), layout.total())));
    }
    let (r0, rows) = if m.rows() == layout.total() {
        (layout.offset(i), layout.dim(i))
    } else if m.rows() == layout.dim(i) {
        (0, m.rows())
    } else {
        return Err(Error::Shape(format!(
            "matrix has {} rows; expected {} (square) or {} (player {i} rows)",
            m.rows(),
            layout.total(),
            layout.dim(i)
        )));
    };
    Ok(m.submatrix(r0, layout.offset(j), rows, layout.dim(j)))
}

/// Block column `j` of a `rows × d` matrix.
pub fn block_column(m: &DenseMatrix, layout: &BlockLayout, j: usize) -> Result<DenseMatrix> {
    layout.check_player(j)?;
    if m.cols() != layout.total() {
        return Err(Error::Shape(format!("matrix has {} columns, layout expects {}", m.cols(), layout.total())));
    }
    Ok(m.submatrix(0, layout.offset(j), m.rows(), layout.dim(j)))
}

/// Places `blocks` into a zero `d×d` matrix.
pub fn assemble_block_matrix(
    layout: &BlockLayout,
    blocks: &BTreeMap<(usize, usize), DenseMatrix>,
) -> Result<DenseMatrix> {
    let d = layout.total();
    let mut out = DenseMatrix::zeros(d, d);
    for (&(i, j), block) in blocks {
        layout.check_player(i)?;
        layout.check_player(j)?;
        let expected = (layout.dim(i), layout.dim(j));
        if block.shape() != expected {
            return Err(Error::Shape(format!(
                "block ({i}, {j}) has shape {:?}, expected {:?}",
                block.shape(),
                expected
            )));
        }
        out.set_submatrix(layout.offset(i), layout.offset(j), block);
    }
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// The start vector is drawn from a ChaCha8 stream seeded with
/// [`POWER_ITERATION_SEED`], so the result is reproducible. Iteration stops
/// once the extrapolated distance to the limit is at most `tol · max(1, σ)`.
pub fn spectral_norm(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("spectral norm of an empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !scale.is_finite() {
        return Err(Error::NonFinite("spectral norm input".into()));
    }
    // Work on m / scale so the squared quantities cannot overflow.
    let a = m.scale(1.0 / scale);

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..a.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);

    let mut sigma = 0.0;
    let mut prev_change = f64::INFINITY;
    for _ in 0..max_iter {
        let av = a.mul_vec(&v);
        let mut w = a.tr_mul_vec(&av);
        let next = norm2(&av);
        let wn = norm2(&w);
        if wn == 0.0 {
            // v fell into the null space; restart on the heaviest column.
            let col = (0..a.cols()).max_by(|&x, &y| column_norm(&a, x).total_cmp(&column_norm(&a, y))).unwrap_or(0);
            v = vec![0.0; a.cols()];
            v[col] = 1.0;
            continue;
        }
        for x in &mut w {
            *x /= wn;
        }
        v = w;
        // The estimate converges geometrically; shrink the stopping threshold by the
        // observed contraction factor so slow convergence does not stop early.
        let change = (next - sigma).abs();
        let ratio = change / prev_change;
        let factor = if ratio < 1.0 { 1.0 - ratio } else { 1.0 };
        if sigma > 0.0 && change <= tol * factor * next.max(1.0 / scale) {
            return Ok(next.max(sigma) * scale);
        }
        prev_change = change;
        sigma = next;
    }
    Err(Error::NoConvergence {
        what: "spectral norm power iteration",
        iterations: max_iter,
        last_estimate: sigma * scale,
    })
}

/// [`spectral_norm`] with the default tolerance and iteration cap.
pub fn spectral_norm_default(m: &DenseMatrix) -> Result<f64> {
    spectral_norm(m, DEFAULT_SPECTRAL_TOL, DEFAULT_SPECTRAL_MAX_ITER)
}

fn column_norm(m: &DenseMatrix, c: usize) -> f64 {
    (0..m.rows()).map(|r| m[(r, c)] * m[(r, c)]).sum::<f64>()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DenseMatrix) -> Result<f64> {
    if m.rows() != m.cols() || m.is_empty() {
        return Err(Error::Shape(format!("spectral radius needs a nonempty square matrix, got {:?}", m.shape())));
    }
    let eig = m.to_nalgebra().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}
