//! Block-sparse vectors, the stacked block hard-thresholding projector, and
//! the identifiability/conditioning probes (incoherence between the two
//! bases, restricted Hessian spectrum).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;

use crate::error::{invalid, DemixError, Result};
use crate::model::DemixingModel;
use crate::operators::LinearMap;
use crate::par::Exec;
use crate::seeding::{derive_seed, rng, stable_hash_indices};
use crate::vecops::{dot, gaussian_vec, norm2};

/// Support pattern of an `(s, b)` block-sparse vector of length `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPattern {
    p: usize,
    b: usize,
    s: usize,
    active_blocks: Vec<usize>,
}

/// Checks the `(p, s, b)` divisibility rules of the block model.
pub fn validate_budget(p: usize, s: usize, b: usize) -> Result<()> {
    if b == 0 {
        return Err(invalid("block length must be positive"));
    }
    if p % b != 0 {
        return Err(invalid(format!("p={p} is not divisible by block length b={b}")));
    }
    if s % b != 0 {
        return Err(invalid(format!("s={s} is not divisible by block length b={b}")));
    }
    if s > p {
        return Err(invalid(format!("sparsity s={s} exceeds dimension p={p}")));
    }
    Ok(())
}

impl BlockPattern {
    pub fn new(p: usize, b: usize, s: usize, mut active_blocks: Vec<usize>) -> Result<Self> {
        validate_budget(p, s, b)?;
        active_blocks.sort_unstable();
        if active_blocks.len() != s / b {
            return Err(invalid(format!(
                "expected {} active blocks, got {}",
                s / b,
                active_blocks.len()
            )));
        }
        if active_blocks.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate active block"));
        }
        if active_blocks.iter().any(|&k| k >= p / b) {
            return Err(invalid("active block index out of range"));
        }
        Ok(Self {
            p,
            b,
            s,
            active_blocks,
        })
    }

    /// Uniformly random set of `s/b` active blocks.
    pub fn random(p: usize, b: usize, s: usize, seed: u64) -> Result<Self> {
        validate_budget(p, s, b)?;
        let mut r = rng(seed);
        let blocks = index::sample(&mut r, p / b, s / b).into_vec();
        Self::new(p, b, s, blocks)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn active_blocks(&self) -> &[usize] {
        &self.active_blocks
    }

    /// Coordinates covered by the active blocks, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.active_blocks
            .iter()
            .flat_map(|&k| k * self.b..(k + 1) * self.b)
            .collect()
    }

    pub fn support_hash(&self) -> u64 {
        stable_hash_indices(&self.active_blocks)
    }

    /// Comma-separated block index list used in result records.
    pub fn blocks_field(&self) -> String {
        self.active_blocks
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Length-`p` vector that is exactly zero outside its pattern's blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseVector {
    pattern: BlockPattern,
    values: Vec<f64>,
}

impl BlockSparseVector {
    pub fn new(pattern: BlockPattern, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.p {
            return Err(invalid("value length does not match pattern dimension"));
        }
        let b = pattern.b;
        let mut active = pattern.active_blocks.iter().peekable();
        for (k, chunk) in values.chunks(b).enumerate() {
            if active.peek() == Some(&&k) {
                active.next();
            } else if chunk.iter().any(|&v| v != 0.0) {
                return Err(invalid(format!("nonzero entry in inactive block {k}")));
            }
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(p: usize, b: usize) -> Result<Self> {
        let pattern = BlockPattern::new(p, b, 0, Vec::new())?;
        Ok(Self {
            pattern,
            values: vec![0.0; p],
        })
    }

    /// Random block-sparse vector: uniform active blocks, standard normal
    /// values, rescaled to unit l2 norm when nonzero.
    pub fn random_unit(p: usize, b: usize, s: usize, seed: u64) -> Result<Self> {
        let pattern = BlockPattern::random(p, b, s, seed)?;
        let mut r = rng(derive_seed(&[seed, 1]));
        let mut values = vec![0.0; p];
        for &k in &pattern.active_blocks {
            values[k * b..(k + 1) * b].copy_from_slice(&gaussian_vec(&mut r, b));
        }
        let nrm = norm2(&values);
        if nrm > 0.0 {
            values.iter_mut().for_each(|v| *v /= nrm);
        }
        Ok(Self { pattern, values })
    }

    pub fn pattern(&self) -> &BlockPattern {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Tie-breaking rule among blocks of equal energy.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    LowestIndex,
    /// Deliberately wrong rule, used only for fault injection in self-checks.
    HighestIndex,
}

/// Euclidean projection onto `(s, b)` block-sparse vectors: keeps the `s/b`
/// blocks of largest l2 norm (ties to the lowest block index) and copies
/// their entries unchanged.
pub fn block_project(v: &[f64], s: usize, b: usize) -> Result<BlockSparseVector> {
    block_project_with(v, s, b, TieBreak::LowestIndex)
}

#[doc(hidden)]
pub fn block_project_with(v: &[f64], s: usize, b: usize, tie: TieBreak) -> Result<BlockSparseVector> {
    let p = v.len();
    validate_budget(p, s, b)?;
    let keep = s / b;
    let nblocks = p / b;
    let energy: Vec<f64> = v.chunks(b).map(|c| dot(c, c)).collect();

    let mut order: Vec<usize> = (0..nblocks).collect();
    if keep > 0 && keep < nblocks {
        order.select_nth_unstable_by(keep - 1, |&x, &y| {
            energy[y].total_cmp(&energy[x]).then(match tie {
                TieBreak::LowestIndex => x.cmp(&y),
                TieBreak::HighestIndex => y.cmp(&x),
            })
        });
    }
    order.truncate(keep);
    order.sort_unstable();

    let mut values = vec![0.0; p];
    for &k in &order {
        values[k * b..(k + 1) * b].copy_from_slice(&v[k * b..(k + 1) * b]);
    }
    Ok(BlockSparseVector {
        pattern: BlockPattern {
            p,
            b,
            s,
            active_blocks: order,
        },
        values,
    })
}

/// The stacked iterate `t = [theta1; theta2]` with both halves in the
/// `(s, b)` block-sparse set.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedCoefficients {
    first: BlockSparseVector,
    second: BlockSparseVector,
}

impl StackedCoefficients {
    pub fn new(first: BlockSparseVector, second: BlockSparseVector) -> Result<Self> {
        let (a, b) = (first.pattern(), second.pattern());
        if a.p != b.p || a.b != b.b {
            return Err(invalid("stacked halves must share dimension and block length"));
        }
        Ok(Self { first, second })
    }

    pub fn zeros(p: usize, s: usize, b: usize) -> Result<Self> {
        validate_budget(p, s, b)?;
        let mut z = BlockSparseVector::zeros(p, b)?;
        z.pattern.s = s;
        z.pattern.active_blocks = (0..s / b).collect();
        Ok(Self {
            first: z.clone(),
            second: z,
        })
    }

    pub fn first(&self) -> &BlockSparseVector {
        &self.first
    }

    pub fn second(&self) -> &BlockSparseVector {
        &self.second
    }

    pub fn dim(&self) -> usize {
        self.first.pattern.p
    }

    /// `(s, b)` budget of each half.
    pub fn budget(&self) -> (usize, usize) {
        (self.first.pattern.s, self.first.pattern.b)
    }

    /// Concatenated length-`2p` vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim());
        out.extend_from_slice(&self.first.values);
        out.extend_from_slice(&self.second.values);
        out
    }

    pub fn into_halves(self) -> (BlockSparseVector, BlockSparseVector) {
        (self.first, self.second)
    }
}

/// Projects each half of a length-`2p` vector onto the `(s, b)` set
/// independently.
pub fn stacked_block_project(t: &[f64], s: usize, b: usize) -> Result<StackedCoefficients> {
    stacked_block_project_with(t, s, b, TieBreak::LowestIndex)
}

#[doc(hidden)]
pub fn stacked_block_project_with(
    t: &[f64],
    s: usize,
    b: usize,
    tie: TieBreak,
) -> Result<StackedCoefficients> {
    if t.len() % 2 != 0 {
        return Err(invalid("stacked vector must have even length"));
    }
    let p = t.len() / 2;
    Ok(StackedCoefficients {
        first: block_project_with(&t[..p], s, b, tie)?,
        second: block_project_with(&t[p..], s, b, tie)?,
    })
}

/// How probe vectors are drawn in [`incoherence_estimate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportSampler {
    /// Plain `s`-sparse supports, uniformly over coordinates.
    Entrywise,
    /// `(s, b)` block-sparse supports with the given block length.
    Block(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct IncoherenceOptions {
    pub sampler: SupportSampler,
    pub exec: Exec,
}

impl Default for IncoherenceOptions {
    fn default() -> Self {
        Self {
            sampler: SupportSampler::Entrywise,
            exec: Exec::Parallel,
        }
    }
}

fn random_sparse_unit(p: usize, s: usize, sampler: SupportSampler, seed: u64) -> Result<Vec<f64>> {
    let mut r = rng(seed);
    let support: Vec<usize> = match sampler {
        SupportSampler::Entrywise => index::sample(&mut r, p, s).into_vec(),
        SupportSampler::Block(b) => {
            validate_budget(p, s, b)?;
            index::sample(&mut r, p / b, s / b)
                .into_iter()
                .flat_map(|k| k * b..(k + 1) * b)
                .collect()
        }
    };
    let vals = gaussian_vec(&mut r, support.len());
    let nrm = norm2(&vals);
    let mut u = vec![0.0; p];
    for (&i, v) in support.iter().zip(&vals) {
        u[i] = v / nrm;
    }
    Ok(u)
}

/// Monte-Carlo lower estimate of the incoherence
/// `sup |<Phi u, Psi v>|` over `s`-sparse unit `u`, `v`.
///
/// The estimate is the max over `trials` random pairs, so it never exceeds the
/// true supremum. Trial 0 uses `v = u`, and trial `i` is seeded from
/// `(seed, i)`, which makes the result non-decreasing in `trials`.
pub fn incoherence_estimate(
    phi: &LinearMap,
    psi: &LinearMap,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    incoherence_estimate_with(phi, psi, s, trials, seed, IncoherenceOptions::default())
}

pub fn incoherence_estimate_with(
    phi: &LinearMap,
    psi: &LinearMap,
    s: usize,
    trials: usize,
    seed: u64,
    opts: IncoherenceOptions,
) -> Result<f64> {
    let p = phi.cols();
    check_basis_pair(phi, psi)?;
    if s == 0 || s > p {
        return Err(invalid(format!("sparsity must be in 1..={p}, got {s}")));
    }
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    if let SupportSampler::Block(b) = opts.sampler {
        validate_budget(p, s, b)?;
    }
    let values = opts.exec.map_indexed(trials, |trial| {
        let trial_seed = derive_seed(&[seed, trial as u64]);
        let u = random_sparse_unit(p, s, opts.sampler, trial_seed)?;
        let v = if trial == 0 {
            u.clone()
        } else {
            random_sparse_unit(p, s, opts.sampler, derive_seed(&[trial_seed, 1]))?
        };
        Ok(dot(&phi.apply(&u), &psi.apply(&v)).abs())
    });
    let mut best: f64 = 0.0;
    for v in values {
        best = best.max(v?);
    }
    Ok(best.min(1.0))
}

/// Exact incoherence for `s = 1`: the largest entry of `|Phi^T Psi|`.
pub fn incoherence_exact_single(phi: &LinearMap, psi: &LinearMap) -> Result<f64> {
    check_basis_pair(phi, psi)?;
    let p = phi.cols();
    let mut e = vec![0.0; p];
    let mut best: f64 = 0.0;
    for j in 0..p {
        e[j] = 1.0;
        let col = phi.adjoint(&psi.apply(&e));
        e[j] = 0.0;
        best = col.iter().fold(best, |m, v| m.max(v.abs()));
    }
    Ok(best)
}

fn check_basis_pair(phi: &LinearMap, psi: &LinearMap) -> Result<()> {
    let p = phi.cols();
    for (name, m) in [("phi", phi), ("psi", psi)] {
        if m.rows() != p || m.cols() != p || !m.is_orthonormal() {
            return Err(DemixError::PreconditionViolation(format!(
                "{name} must be a {p}x{p} orthonormal map"
            )));
        }
    }
    Ok(())
}

/// Largest restricted support the spectrum probe will materialize.
pub const MAX_PROBE_SUPPORT: usize = 2000;

/// Extremal eigenvalues of the Hessian restricted to sampled supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedSpectrum {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    /// Blocks per half in each probe support, in units of `s/b`. The default
    /// of 3 gives `6s`-sized unions across both halves.
    pub union_factor: usize,
    pub exec: Exec,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            union_factor: 3,
            exec: Exec::Parallel,
        }
    }
}

/// Restricted Hessian `H_xi` at `t` as a dense symmetric matrix, for a
/// support `xi` of indices into `0..2p`.
pub fn restricted_hessian(model: &DemixingModel, t: &[f64], support: &[usize]) -> Result<DMatrix<f64>> {
    let dim = 2 * model.dim();
    if support.len() > MAX_PROBE_SUPPORT {
        return Err(DemixError::ProbeTooLarge(support.len()));
    }
    if support.iter().any(|&i| i >= dim) {
        return Err(invalid("support index out of range"));
    }
    let weights = model.curvature_weights(t)?;
    let k = support.len();
    let mut h = DMatrix::zeros(k, k);
    let mut e = vec![0.0; dim];
    for (c, &j) in support.iter().enumerate() {
        e[j] = 1.0;
        let col = model.hessian_apply(&weights, &e)?;
        e[j] = 0.0;
        for (r, &i) in support.iter().enumerate() {
            h[(r, c)] = col[i];
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

fn eig_range(h: DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(h).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Extremal eigenvalues of `H_xi` for one explicit support.
pub fn restricted_spectrum_on(model: &DemixingModel, t: &[f64], support: &[usize]) -> Result<RestrictedSpectrum> {
    if support.is_empty() {
        return Err(invalid("empty probe support"));
    }
    let (lower, upper) = eig_range(restricted_hessian(model, t, support)?);
    Ok(RestrictedSpectrum { lower, upper })
}

/// Empirical restricted strong convexity/smoothness constants: over
/// `probe_supports` random unions of block supports, the smallest and
/// largest eigenvalues of the restricted Hessian at `t`.
pub fn restricted_spectrum(
    model: &DemixingModel,
    t: &StackedCoefficients,
    probe_supports: usize,
    seed: u64,
) -> Result<RestrictedSpectrum> {
    restricted_spectrum_with(model, t, probe_supports, seed, SpectrumOptions::default())
}

pub fn restricted_spectrum_with(
    model: &DemixingModel,
    t: &StackedCoefficients,
    probe_supports: usize,
    seed: u64,
    opts: SpectrumOptions,
) -> Result<RestrictedSpectrum> {
    let p = model.dim();
    if t.dim() != p {
        return Err(invalid("coefficient dimension does not match model"));
    }
    if probe_supports == 0 {
        return Err(invalid("at least one probe support is required"));
    }
    let (s, b) = t.budget();
    let blocks_per_half = (opts.union_factor * (s / b)).clamp(1, p / b);
    let size = 2 * blocks_per_half * b;
    if size > MAX_PROBE_SUPPORT {
        return Err(DemixError::ProbeTooLarge(size));
    }
    let tv = t.to_vec();
    let results = opts.exec.map_indexed(probe_supports, |i| {
        let mut r = rng(derive_seed(&[seed, i as u64]));
        let mut support = Vec::with_capacity(size);
        for half in 0..2 {
            let mut blocks = index::sample(&mut r, p / b, blocks_per_half).into_vec();
            blocks.sort_unstable();
            support.extend(
                blocks
                    .into_iter()
                    .flat_map(|k| half * p + k * b..half * p + (k + 1) * b),
            );
        }
        restricted_spectrum_on(model, &tv, &support)
    });
    let mut out = RestrictedSpectrum {
        lower: f64::INFINITY,
        upper: f64::NEG_INFINITY,
    };
    for r in results {
        let r = r?;
        out.lower = out.lower.min(r.lower);
        out.upper = out.upper.max(r.upper);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{make_basis, BasisKind};

    #[test]
    fn projection_keeps_largest_block() {
        let v = [1.0, 1.0, 3.0, 0.0, 1.0, 2.0];
        let out = block_project(&v, 2, 2).unwrap();
        assert_eq!(out.values(), &[0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.pattern().active_blocks(), &[1]);
    }

    #[test]
    fn projection_ties_go_to_lowest_block() {
        let v = [0.0, 1.0, 1.0, 0.0, 0.0, -1.0, 0.5, 0.5];
        let out = block_project(&v, 4, 2).unwrap();
        // blocks 0, 1, 2 all have energy 1; keep 0 and 1
        assert_eq!(out.pattern().active_blocks(), &[0, 1]);
        let wrong = block_project_with(&v, 4, 2, TieBreak::HighestIndex).unwrap();
        assert_eq!(wrong.pattern().active_blocks(), &[1, 2]);
    }

    #[test]
    fn projection_fixes_members_of_the_set() {
        let v = [0.0, 0.0, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let out = block_project(&v, 2, 2).unwrap();
        assert_eq!(out.values(), &v);
    }

    #[test]
    fn projection_rejects_bad_budgets() {
        assert!(block_project(&[0.0; 7], 2, 2).is_err());
        assert!(block_project(&[0.0; 8], 3, 2).is_err());
        assert!(block_project(&[0.0; 8], 10, 2).is_err());
        assert!(block_project(&[0.0; 8], 2, 0).is_err());
    }

    #[test]
    fn stacked_projection_treats_halves_independently() {
        let t = [0.0, 0.0, 1.0, 1.0, 5.0, 4.0, 3.0, 2.0];
        let out = stacked_block_project(&t, 2, 2).unwrap();
        assert_eq!(out.first().values(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(out.second().values(), &[5.0, 4.0, 0.0, 0.0]);
        let z = stacked_block_project(&[0.0; 8], 2, 2).unwrap();
        assert_eq!(z.to_vec(), vec![0.0; 8]);
    }

    #[test]
    fn block_sparse_vector_rejects_off_support_mass() {
        let pat = BlockPattern::new(4, 2, 2, vec![1]).unwrap();
        assert!(BlockSparseVector::new(pat.clone(), vec![0.0, 0.0, 1.0, 2.0]).is_ok());
        assert!(BlockSparseVector::new(pat, vec![1.0, 0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn pattern_fields() {
        let pat = BlockPattern::new(12, 3, 6, vec![3, 1]).unwrap();
        assert_eq!(pat.active_blocks(), &[1, 3]);
        assert_eq!(pat.support(), vec![3, 4, 5, 9, 10, 11]);
        assert_eq!(pat.blocks_field(), "1,3");
        assert!(BlockPattern::new(12, 3, 6, vec![1, 1]).is_err());
        assert!(BlockPattern::new(12, 3, 6, vec![1, 4]).is_err());
    }

    #[test]
    fn incoherence_of_identical_bases_is_one() {
        let d = make_basis(BasisKind::Dct, 32, 0).unwrap();
        let eps = incoherence_estimate(&d, &d, 4, 5, 1).unwrap();
        assert!(eps >= 1.0 - 1e-9 && eps <= 1.0);
    }

    #[test]
    fn incoherence_full_support_is_bounded() {
        let i = make_basis(BasisKind::Identity, 16, 0).unwrap();
        let r = make_basis(BasisKind::RandomOrthonormal, 16, 3).unwrap();
        let eps = incoherence_estimate(&i, &r, 16, 50, 2).unwrap();
        assert!((0.0..=1.0).contains(&eps));
    }

    #[test]
    fn incoherence_rejects_non_orthonormal() {
        let g = crate::operators::make_gaussian_design(8, 8, 0).unwrap();
        let i = make_basis(BasisKind::Identity, 8, 0).unwrap();
        assert!(matches!(
            incoherence_estimate(&i, &g, 2, 10, 0),
            Err(DemixError::PreconditionViolation(_))
        ));
    }

    #[test]
    fn incoherence_block_sampler_runs() {
        let i = make_basis(BasisKind::Identity, 16, 0).unwrap();
        let d = make_basis(BasisKind::Dct, 16, 0).unwrap();
        let opts = IncoherenceOptions {
            sampler: SupportSampler::Block(2),
            exec: Exec::Sequential,
        };
        let eps = incoherence_estimate_with(&i, &d, 4, 100, 0, opts).unwrap();
        assert!(eps > 0.0 && eps <= 1.0);
        let bad = IncoherenceOptions {
            sampler: SupportSampler::Block(3),
            ..opts
        };
        assert!(incoherence_estimate_with(&i, &d, 4, 100, 0, bad).is_err());
    }
}
