//! Embedded invariant suite behind `demix check`.
//!
//! Each check belongs to a family (adjoint probes, projection oracle,
//! gradient finite differences, contraction arithmetic, serialization) and
//! compares the production code path against an independent oracle.

use std::fmt;

use crate::error::Result;
use crate::model::{generate_observations, DemixingModel, LinkFunction, NoiseSpec};
use crate::operators::{
    make_basis, make_gaussian_design, make_orthogonal_design, make_partial_circulant_design,
    BasisKind, DenseMatrix, LinearMap, StackedBasis,
};
use crate::seeding::{derive_seed, rng};
use crate::solvers::contraction_factor;
use crate::sparsity::{block_project_with, incoherence_estimate, BlockSparseVector, TieBreak};
use crate::vecops::{dot, gaussian_vec, norm2};

/// Deliberate faults that the suite must detect.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Projection breaks energy ties towards the highest block index.
    TieBreak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub family: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn families(&self) -> Vec<&'static str> {
        let mut f: Vec<&'static str> = Vec::new();
        for o in &self.outcomes {
            if !f.contains(&o.family) {
                f.push(o.family);
            }
        }
        f
    }

    fn push(&mut self, family: &'static str, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.outcomes.push(CheckOutcome {
            family,
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fw = self.outcomes.iter().map(|o| o.family.len()).max().unwrap_or(6).max(6);
        let nw = self.outcomes.iter().map(|o| o.name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<fw$}  {:<nw$}  result  detail", "family", "check")?;
        for o in &self.outcomes {
            let status = if o.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{:<fw$}  {:<nw$}  {:<6}  {}", o.family, o.name, status, o.detail)?;
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        write!(f, "{passed}/{} checks passed", self.outcomes.len())
    }
}

/// Exhaustive `(s, b)` block projection: enumerates every choice of `s/b`
/// blocks and keeps the one retaining the most energy, ties going to the
/// lexicographically smallest block set.
///
/// Candidate sets are ranked by their block energies sorted in decreasing
/// order, compared lexicographically. That ranking has the same maximizer as
/// the summed energy but involves no floating-point additions, so the oracle
/// is exact.
pub fn brute_force_project(v: &[f64], s: usize, b: usize) -> (Vec<usize>, Vec<f64>) {
    let nblocks = v.len() / b;
    let keep = s / b;
    let energy: Vec<f64> = v.chunks(b).map(|c| dot(c, c)).collect();
    let key = |set: &[usize]| {
        let mut e: Vec<f64> = set.iter().map(|&k| energy[k]).collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    };
    let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
    let mut combo: Vec<usize> = (0..keep).collect();
    loop {
        let k = key(&combo);
        let better = match &best {
            None => true,
            Some((bk, _)) => {
                let ord = k
                    .iter()
                    .zip(bk)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal);
                // Combinations are visited in lexicographic order, so only a
                // strictly better energy profile replaces the incumbent.
                ord.is_gt()
            }
        };
        if better {
            best = Some((k, combo.clone()));
        }
        // Next combination in lexicographic order.
        let mut i = keep;
        loop {
            if i == 0 {
                let blocks = best.map(|(_, c)| c).unwrap_or_default();
                let mut values = vec![0.0; v.len()];
                for &k in &blocks {
                    values[k * b..(k + 1) * b].copy_from_slice(&v[k * b..(k + 1) * b]);
                }
                return (blocks, values);
            }
            i -= 1;
            if combo[i] < nblocks - keep + i {
                combo[i] += 1;
                for j in i + 1..keep {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Vector whose blocks repeat one template, so that block energies tie
/// exactly.
fn tied_vector(p: usize, b: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let template = gaussian_vec(&mut r, b);
    let mut v = vec![0.0; p];
    for k in 0..p / b {
        // Every other block carries the template; the rest are smaller.
        let scale = if k % 2 == 0 { 1.0 } else { 0.25 };
        for (dst, src) in v[k * b..(k + 1) * b].iter_mut().zip(&template) {
            *dst = scale * src;
        }
    }
    v
}

fn check_adjoints(report: &mut CheckReport) -> Result<()> {
    let maps: Vec<(String, LinearMap)> = vec![
        ("gaussian design 48x64".into(), make_gaussian_design(48, 64, 11)?),
        ("circulant design 40x64".into(), make_partial_circulant_design(40, 64, 12)?),
        ("orthogonal design 40x64".into(), make_orthogonal_design(40, 64, 13)?),
        ("dct basis 64".into(), make_basis(BasisKind::Dct, 64, 14)?),
        ("random orthonormal basis 64".into(), make_basis(BasisKind::RandomOrthonormal, 64, 15)?),
    ];
    for (name, map) in maps {
        let mismatch = map.adjoint_mismatch(8, 0xAD);
        report.push("adjoint", name, mismatch < 1e-10, format!("max mismatch {mismatch:.2e}"));
    }
    let basis = StackedBasis::from_kinds(BasisKind::Identity, BasisKind::Dct, 32, 16)?;
    let mut r = rng(17);
    let t = gaussian_vec(&mut r, 64);
    let v = gaussian_vec(&mut r, 32);
    let lhs = dot(&basis.apply_stacked(&t)?, &v);
    let rhs = dot(&t, &basis.adjoint_stacked(&v)?);
    let mismatch = (lhs - rhs).abs() / (norm2(&t) * norm2(&v));
    report.push("adjoint", "stacked basis [I, DCT]", mismatch < 1e-12, format!("mismatch {mismatch:.2e}"));
    Ok(())
}

fn check_projection(report: &mut CheckReport, fault: Fault) -> Result<()> {
    let tie = match fault {
        Fault::None => TieBreak::LowestIndex,
        Fault::TieBreak => TieBreak::HighestIndex,
    };
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    let mut r = rng(0x5E1F);
    for (p, b, s) in [(12, 1, 3), (12, 2, 4), (12, 3, 6), (10, 2, 6), (9, 3, 9)] {
        for _ in 0..20 {
            let v = gaussian_vec(&mut r, p);
            let got = block_project_with(&v, s, b, tie)?;
            let (blocks, values) = brute_force_project(&v, s, b);
            cases += 1;
            if got.pattern().active_blocks() != blocks.as_slice() || got.values() != values.as_slice() {
                mismatches += 1;
            }
        }
    }
    report.push(
        "projection",
        "random vectors vs exhaustive",
        mismatches == 0,
        format!("{mismatches}/{cases} mismatches"),
    );

    let mut tie_mismatches = 0usize;
    for (p, b, s) in [(12, 2, 4), (12, 3, 3), (8, 1, 2)] {
        let v = tied_vector(p, b, derive_seed(&[p as u64, b as u64]));
        let got = block_project_with(&v, s, b, tie)?;
        let (blocks, _) = brute_force_project(&v, s, b);
        if got.pattern().active_blocks() != blocks.as_slice() {
            tie_mismatches += 1;
        }
    }
    report.push(
        "projection",
        "energy ties go to lowest block",
        tie_mismatches == 0,
        format!("{tie_mismatches}/3 mismatches"),
    );

    let v = gaussian_vec(&mut r, 24);
    let once = block_project_with(&v, 8, 4, tie)?;
    let twice = block_project_with(once.values(), 8, 4, tie)?;
    report.push("projection", "idempotent", once == twice, String::new());
    Ok(())
}

fn fd_relative_error(model: &DemixingModel, t: &[f64]) -> Result<f64> {
    let grad = model.gradient(t)?;
    let mut fd = vec![0.0; t.len()];
    let mut tp = t.to_vec();
    for i in 0..t.len() {
        let h = 1e-5 * (1.0 + t[i].abs());
        tp[i] = t[i] + h;
        let up = model.loss(&tp)?;
        tp[i] = t[i] - h;
        let down = model.loss(&tp)?;
        tp[i] = t[i];
        fd[i] = (up - down) / (2.0 * h);
    }
    let diff: Vec<f64> = fd.iter().zip(&grad).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff) / norm2(&grad).max(1e-12))
}

/// Worst finite-difference relative gradient error over `points` random
/// points of a `p`-dimensional, `n`-sample instance.
pub fn gradient_fd_error(link: LinkFunction, p: usize, n: usize, points: usize, seed: u64) -> Result<f64> {
    let basis = StackedBasis::from_kinds(BasisKind::Identity, BasisKind::Dct, p, derive_seed(&[seed, 1]))?;
    let design = make_gaussian_design(n, p, derive_seed(&[seed, 2]))?;
    let b = if p % 4 == 0 { 4 } else { 1 };
    let s = (p / 8).max(b) / b * b;
    let t1 = BlockSparseVector::random_unit(p, b, s, derive_seed(&[seed, 3]))?;
    let t2 = BlockSparseVector::random_unit(p, b, s, derive_seed(&[seed, 4]))?;
    let y = generate_observations(&design, &basis, &t1, &t2, link, NoiseSpec::gaussian(0.05)?, derive_seed(&[seed, 5]))?;
    let model = DemixingModel::new(design, basis, link, y)?;
    let mut r = rng(derive_seed(&[seed, 6]));
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let t = gaussian_vec(&mut r, 2 * p);
        worst = worst.max(fd_relative_error(&model, &t)?);
    }
    Ok(worst)
}

fn check_gradients(report: &mut CheckReport) -> Result<()> {
    for link in [LinkFunction::Identity, LinkFunction::ShiftedSigmoid] {
        let err = gradient_fd_error(link, 16, 24, 10, 0x6AD)?;
        report.push(
            "gradient",
            format!("{} link central differences", link.name()),
            err < 1e-5,
            format!("max relative error {err:.2e}"),
        );
    }
    Ok(())
}

fn check_contraction(report: &mut CheckReport) -> Result<()> {
    let rho = |eta, m, big_m| contraction_factor(eta, m, big_m).map(|c| c.rho);
    let r1 = rho(1.0, 1.0, 1.0)?;
    report.push("contraction", "rho(1,1,1) = 0", r1.abs() < 1e-12, format!("{r1:e}"));
    let r2 = rho(0.8, 1.0, 1.0)?;
    report.push("contraction", "rho(0.8,1,1) = 0.4", (r2 - 0.4).abs() < 1e-12, format!("{r2}"));
    let big_m = 2.0 / 3f64.sqrt();
    let r3 = rho(1.0 / (big_m * big_m), 1.0, big_m)?;
    report.push(
        "contraction",
        "rho = 1 at the admissibility boundary",
        (r3 - 1.0).abs() < 1e-12,
        format!("{r3}"),
    );
    report.push(
        "contraction",
        "invalid constants rejected",
        contraction_factor(1.0, 0.0, 1.0).is_err() && contraction_factor(1.0, 2.0, 1.0).is_err(),
        String::new(),
    );
    Ok(())
}

fn check_serialization(report: &mut CheckReport) -> Result<()> {
    let m = make_gaussian_design(7, 5, 0x5E7)?.to_dense();
    let mut buf = Vec::new();
    m.write_to(&mut buf).map_err(|e| crate::error::DemixError::io("<memory>", e))?;
    let back = DenseMatrix::read_from(buf.as_slice())?;
    report.push("serialization", "dense matrix round trip", back == m, format!("{} bytes", buf.len()));
    let again = make_gaussian_design(7, 5, 0x5E7)?.to_dense();
    report.push("serialization", "seeded design regenerates", again == m, String::new());
    Ok(())
}

fn check_incoherence(report: &mut CheckReport) -> Result<()> {
    let dct = make_basis(BasisKind::Dct, 16, 0)?;
    let eps = incoherence_estimate(&dct, &dct, 2, 50, 0x1C)?;
    report.push(
        "incoherence",
        "identical bases give 1",
        eps >= 1.0 - 1e-9,
        format!("{eps}"),
    );
    Ok(())
}

/// Runs the whole suite, optionally with a deliberate fault.
pub fn run_checks(fault: Fault) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    check_adjoints(&mut report)?;
    check_projection(&mut report, fault)?;
    check_gradients(&mut report)?;
    check_contraction(&mut report)?;
    check_serialization(&mut report)?;
    check_incoherence(&mut report)?;
    Ok(report)
}
