//! Design matrices and orthonormal bases behind a single forward/adjoint
//! linear-map type.
//!
//! Designs use unit-variance entries without any `1/sqrt(n)` column scaling;
//! the `1/n` normalization lives in the loss. Bases are `p x p` orthonormal.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, DemixError, Result};
use crate::seeding::rng;
use crate::vecops::{dot, gaussian_vec, norm2};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub const DENSE_MAGIC: &[u8; 8] = b"DMXMAT01";

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
    }

    /// Writes the `DMXMAT01` binary layout: magic, u64 rows, u64 cols, then
    /// row-major little-endian f64.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(DENSE_MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| invalid(format!("malformed dense matrix file: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != DENSE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let cols = u64::from_le_bytes(word) as usize;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| bad("dimension overflow"))?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut word).map_err(|_| bad("truncated body"))?;
            data.push(f64::from_le_bytes(word));
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| DemixError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| DemixError::io(path, e))?;
        w.flush().map_err(|e| DemixError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| DemixError::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

/// Orthonormal type-II DCT. Row `k` of the matrix is
/// `a_k cos(pi k (2j+1) / 2p)` with `a_0 = sqrt(1/p)` and `a_k = sqrt(2/p)`.
#[derive(Clone)]
pub struct DctBasis {
    p: usize,
    plan: Arc<dyn TransformType2And3<f64>>,
}

impl fmt::Debug for DctBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DctBasis").field("p", &self.p).finish()
    }
}

impl DctBasis {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(invalid("DCT length must be positive"));
        }
        let plan = DctPlanner::new().plan_dct2(p);
        Ok(Self { p, plan })
    }

    fn scales(&self) -> (f64, f64) {
        let p = self.p as f64;
        ((1.0 / p).sqrt(), (2.0 / p).sqrt())
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        self.plan.process_dct2(out);
        let (a0, ak) = self.scales();
        out[0] *= a0;
        for v in &mut out[1..] {
            *v *= ak;
        }
    }

    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        let (a0, ak) = self.scales();
        out[0] = 2.0 * a0 * v[0];
        for (o, vi) in out[1..].iter_mut().zip(&v[1..]) {
            *o = ak * vi;
        }
        self.plan.process_dct3(out);
    }
}

/// `A = R C D`: column sign flips `D`, circular convolution `C` with a
/// generator vector, then row selection `R`. Applied through FFTs.
#[derive(Clone)]
pub struct PartialCirculant {
    p: usize,
    generator: Vec<f64>,
    rows: Vec<usize>,
    signs: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PartialCirculant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialCirculant")
            .field("p", &self.p)
            .field("rows", &self.rows.len())
            .finish()
    }
}

impl PartialCirculant {
    /// Builds the operator from explicit parts. `rows` must be strictly
    /// increasing indices into `0..p`; `signs` must have length `p`.
    pub fn from_parts(generator: Vec<f64>, rows: Vec<usize>, signs: Vec<f64>) -> Result<Self> {
        let p = generator.len();
        if p == 0 || rows.is_empty() {
            return Err(invalid("circulant dimensions must be positive"));
        }
        if signs.len() != p {
            return Err(invalid("sign vector length must equal generator length"));
        }
        if rows.windows(2).any(|w| w[0] >= w[1]) || rows.iter().any(|&r| r >= p) {
            return Err(invalid("row selection must be strictly increasing within 0..p"));
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(p);
        let ifft = planner.plan_fft_inverse(p);
        let mut spectrum: Vec<Complex<f64>> =
            generator.iter().map(|&g| Complex::new(g, 0.0)).collect();
        fft.process(&mut spectrum);
        Ok(Self {
            p,
            generator,
            rows,
            signs,
            spectrum,
            fft,
            ifft,
        })
    }

    pub fn generator(&self) -> &[f64] {
        &self.generator
    }

    pub fn selected_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    fn convolve(&self, buf: &mut [Complex<f64>], conjugate: bool) {
        self.fft.process(buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= if conjugate { s.conj() } else { *s };
        }
        self.ifft.process(buf);
        let scale = 1.0 / self.p as f64;
        for b in buf.iter_mut() {
            *b *= scale;
        }
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .zip(&self.signs)
            .map(|(xi, si)| Complex::new(xi * si, 0.0))
            .collect();
        self.convolve(&mut buf, false);
        for (o, &r) in out.iter_mut().zip(&self.rows) {
            *o = buf[r].re;
        }
    }

    fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.p];
        for (&r, &vi) in self.rows.iter().zip(v) {
            buf[r] = Complex::new(vi, 0.0);
        }
        self.convolve(&mut buf, true);
        for ((o, b), s) in out.iter_mut().zip(&buf).zip(&self.signs) {
            *o = b.re * s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Dense,
    Identity,
    Dct,
    CirculantSubsampled,
    RandomOrthonormal,
}

/// Orthonormal basis families available for `Phi` and `Psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Identity,
    Dct,
    RandomOrthonormal,
}

impl FromStr for BasisKind {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "dct" => Ok(Self::Dct),
            "random-orthonormal" => Ok(Self::RandomOrthonormal),
            other => Err(invalid(format!("unknown basis kind `{other}`"))),
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Dct => "dct",
            Self::RandomOrthonormal => "random-orthonormal",
        })
    }
}

/// Immutable linear map with forward and adjoint application.
#[derive(Debug, Clone)]
pub enum LinearMap {
    Dense { matrix: DenseMatrix, seed: u64 },
    Identity(usize),
    Dct(DctBasis),
    Circulant { op: PartialCirculant, seed: u64 },
    RandomOrthonormal { matrix: DenseMatrix, seed: u64 },
}

impl LinearMap {
    pub fn rows(&self) -> usize {
        match self {
            Self::Dense { matrix, .. } | Self::RandomOrthonormal { matrix, .. } => matrix.rows(),
            Self::Identity(p) => *p,
            Self::Dct(d) => d.p,
            Self::Circulant { op, .. } => op.rows.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Dense { matrix, .. } | Self::RandomOrthonormal { matrix, .. } => matrix.cols(),
            Self::Identity(p) => *p,
            Self::Dct(d) => d.p,
            Self::Circulant { op, .. } => op.p,
        }
    }

    pub fn kind(&self) -> MapKind {
        match self {
            Self::Dense { .. } => MapKind::Dense,
            Self::Identity(_) => MapKind::Identity,
            Self::Dct(_) => MapKind::Dct,
            Self::Circulant { .. } => MapKind::CirculantSubsampled,
            Self::RandomOrthonormal { .. } => MapKind::RandomOrthonormal,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Dense { seed, .. }
            | Self::RandomOrthonormal { seed, .. }
            | Self::Circulant { seed, .. } => Some(*seed),
            Self::Identity(_) | Self::Dct(_) => None,
        }
    }

    pub fn dense(matrix: DenseMatrix) -> Self {
        Self::Dense { matrix, seed: 0 }
    }

    /// `out = A x`. Panics on length mismatch.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols(), "apply: input length");
        assert_eq!(out.len(), self.rows(), "apply: output length");
        match self {
            Self::Dense { matrix, .. } | Self::RandomOrthonormal { matrix, .. } => {
                matrix.apply_into(x, out)
            }
            Self::Identity(_) => out.copy_from_slice(x),
            Self::Dct(d) => d.apply_into(x, out),
            Self::Circulant { op, .. } => op.apply_into(x, out),
        }
    }

    /// `out = A^T v`. Panics on length mismatch.
    pub fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.rows(), "adjoint: input length");
        assert_eq!(out.len(), self.cols(), "adjoint: output length");
        match self {
            Self::Dense { matrix, .. } | Self::RandomOrthonormal { matrix, .. } => {
                matrix.adjoint_into(v, out)
            }
            Self::Identity(_) => out.copy_from_slice(v),
            Self::Dct(d) => d.adjoint_into(v, out),
            Self::Circulant { op, .. } => op.adjoint_into(v, out),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.adjoint_into(v, &mut out);
        out
    }

    /// Materializes the map by applying it to every standard basis vector.
    pub fn to_dense(&self) -> DenseMatrix {
        if let Self::Dense { matrix, .. } | Self::RandomOrthonormal { matrix, .. } = self {
            return matrix.clone();
        }
        let (rows, cols) = (self.rows(), self.cols());
        let mut data = vec![0.0; rows * cols];
        let mut e = vec![0.0; cols];
        let mut col = vec![0.0; rows];
        for j in 0..cols {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            e[j] = 0.0;
            for (i, c) in col.iter().enumerate() {
                data[i * cols + j] = *c;
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Largest normalized adjoint mismatch
    /// `|<Au, v> - <u, A^T v>| / (|u| |v| + 1)` over random Gaussian pairs.
    pub fn adjoint_mismatch(&self, pairs: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..pairs)
            .map(|_| {
                let u = gaussian_vec(&mut r, self.cols());
                let v = gaussian_vec(&mut r, self.rows());
                let lhs = dot(&self.apply(&u), &v);
                let rhs = dot(&u, &self.adjoint(&v));
                (lhs - rhs).abs() / (norm2(&u) * norm2(&v) + 1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Largest relative defect `|Q^T Q u - u| / |u|` over random `u`.
    pub fn orthonormality_defect(&self, trials: usize, seed: u64) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        let mut r = rng(seed);
        (0..trials)
            .map(|_| {
                let u = gaussian_vec(&mut r, self.cols());
                let back = self.adjoint(&self.apply(&u));
                let err: f64 = back
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                err / norm2(&u)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormality_defect(3, 0x0A7B) <= ORTHONORMAL_TOL
    }
}

pub const ORTHONORMAL_TOL: f64 = 1e-8;

fn check_dims(n: usize, p: usize) -> Result<()> {
    if n == 0 || p == 0 {
        return Err(invalid(format!(
            "design dimensions must be positive (n={n}, p={p})"
        )));
    }
    Ok(())
}

/// Dense `n x p` design with i.i.d. standard normal entries.
pub fn make_gaussian_design(n: usize, p: usize, seed: u64) -> Result<LinearMap> {
    check_dims(n, p)?;
    let mut r = rng(seed);
    let data = gaussian_vec(&mut r, n * p);
    Ok(LinearMap::Dense {
        matrix: DenseMatrix::from_row_major(n, p, data)?,
        seed,
    })
}

/// Partial random circulant design: Gaussian generator, Rademacher column
/// flips, and `n` rows drawn uniformly without replacement.
pub fn make_partial_circulant_design(n: usize, p: usize, seed: u64) -> Result<LinearMap> {
    check_dims(n, p)?;
    if n > p {
        return Err(invalid(format!(
            "partial circulant design needs n <= p (n={n}, p={p})"
        )));
    }
    let mut r = rng(seed);
    let generator = gaussian_vec(&mut r, p);
    let signs: Vec<f64> = (0..p)
        .map(|_| if r.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut rows = index::sample(&mut r, p, n).into_vec();
    rows.sort_unstable();
    Ok(LinearMap::Circulant {
        op: PartialCirculant::from_parts(generator, rows, signs)?,
        seed,
    })
}

/// `n x p` design whose rows are orthonormal up to a `sqrt(p)` factor, so
/// entries have unit variance and `X^T X / n = I` when `n = p`.
pub fn make_orthogonal_design(n: usize, p: usize, seed: u64) -> Result<LinearMap> {
    check_dims(n, p)?;
    if n > p {
        return Err(invalid(format!(
            "orthogonal design needs n <= p (n={n}, p={p})"
        )));
    }
    let q = haar_orthonormal(p, seed);
    let scale = (p as f64).sqrt();
    let mut data = Vec::with_capacity(n * p);
    for i in 0..n {
        data.extend(q.row(i).iter().map(|v| v * scale));
    }
    Ok(LinearMap::Dense {
        matrix: DenseMatrix::from_row_major(n, p, data)?,
        seed,
    })
}

/// Orthonormal factor of a seeded Gaussian matrix, with column signs fixed
/// so the distribution is Haar.
fn haar_orthonormal(p: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let g = DMatrix::from_row_slice(p, p, &gaussian_vec(&mut r, p * p));
    let qr = g.qr();
    let rdiag = qr.r().diagonal();
    let mut q = qr.q();
    for (j, d) in rdiag.iter().enumerate() {
        if *d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut data = Vec::with_capacity(p * p);
    for i in 0..p {
        data.extend(q.row(i).iter().copied());
    }
    DenseMatrix {
        rows: p,
        cols: p,
        data,
    }
}

pub fn make_basis(kind: BasisKind, p: usize, seed: u64) -> Result<LinearMap> {
    if p == 0 {
        return Err(invalid("basis dimension must be positive"));
    }
    Ok(match kind {
        BasisKind::Identity => LinearMap::Identity(p),
        BasisKind::Dct => LinearMap::Dct(DctBasis::new(p)?),
        BasisKind::RandomOrthonormal => LinearMap::RandomOrthonormal {
            matrix: haar_orthonormal(p, seed),
            seed,
        },
    })
}

/// The pair `Gamma = [Phi Psi]` of `p x p` orthonormal maps.
#[derive(Debug, Clone)]
pub struct StackedBasis {
    phi: LinearMap,
    psi: LinearMap,
}

impl StackedBasis {
    pub fn new(phi: LinearMap, psi: LinearMap) -> Result<Self> {
        let p = phi.cols();
        for (name, m) in [("phi", &phi), ("psi", &psi)] {
            if m.rows() != p || m.cols() != p {
                return Err(invalid(format!(
                    "{name} must be {p}x{p}, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_orthonormal() {
                return Err(DemixError::PreconditionViolation(format!(
                    "{name} fails the orthonormality probe"
                )));
            }
        }
        Ok(Self { phi, psi })
    }

    pub fn from_kinds(phi: BasisKind, psi: BasisKind, p: usize, seed: u64) -> Result<Self> {
        Self::new(
            make_basis(phi, p, seed)?,
            make_basis(psi, p, seed.wrapping_add(1))?,
        )
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn phi(&self) -> &LinearMap {
        &self.phi
    }

    pub fn psi(&self) -> &LinearMap {
        &self.psi
    }

    /// `Phi t[..p] + Psi t[p..]`.
    pub fn apply_stacked(&self, t: &[f64]) -> Result<Vec<f64>> {
        let p = self.dim();
        if t.len() != 2 * p {
            return Err(invalid(format!(
                "stacked vector must have length {}, got {}",
                2 * p,
                t.len()
            )));
        }
        let mut out = self.phi.apply(&t[..p]);
        let second = self.psi.apply(&t[p..]);
        for (o, s) in out.iter_mut().zip(&second) {
            *o += s;
        }
        Ok(out)
    }

    /// `[Phi^T v; Psi^T v]`.
    pub fn adjoint_stacked(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = self.dim();
        if v.len() != p {
            return Err(invalid(format!(
                "adjoint input must have length {p}, got {}",
                v.len()
            )));
        }
        let mut out = vec![0.0; 2 * p];
        let (a, b) = out.split_at_mut(p);
        self.phi.adjoint_into(v, a);
        self.psi.adjoint_into(v, b);
        Ok(out)
    }
}
