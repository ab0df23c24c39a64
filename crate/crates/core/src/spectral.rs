//! Deterministic Hermitian eigendecomposition, eta invariants, spectral
//! projections with the `A + eps` kernel convention, and spectral flow.
//!
//! Eta convention: plain eta with `sign(0) = 0`. Zero modes never enter the
//! regularized sum; they are counted in `kernel_dim` and handled on the
//! boundary-condition side by the `A + eps` projection. Kernel cases are
//! flagged in every report that consumes an [`EtaResult`].

use crate::discretize::HermitianOperator;
use crate::error::{Error, Result};
use crate::util::hermitian_defect;
use crate::{CMat, CVec};
use num_complex::Complex64;
use serde::Serialize;

/// Eigenvalues below this magnitude are zero modes.
pub const KERNEL_FLOOR: f64 = 1e-10;
/// Eigenvalues in [KERNEL_FLOOR, AMBIGUITY_CEIL) are neither clearly zero
/// nor clearly nonzero; eta computations refuse them.
pub const AMBIGUITY_CEIL: f64 = 1e-8;
/// Heat-parameter grid for the regularized eta sum; each entry halves the
/// previous one so Richardson extrapolation in t^2 applies directly.
pub const DEFAULT_T_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Full eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues ascend; eigenvector columns align with them; only
/// eigenvalues with `|lambda| <= resolved_window` are certified against
/// truncation error.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: CMat,
    resolved_window: f64,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMat {
        &self.eigenvectors
    }

    pub fn resolved_window(&self) -> f64 {
        self.resolved_window
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues restricted to the resolved window.
    pub fn resolved_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|l| l.abs() <= self.resolved_window)
            .collect()
    }
}

/// Decompose a discretized operator, inheriting its resolved window.
pub fn eigendecompose(op: &HermitianOperator) -> Result<Spectrum> {
    eigendecompose_matrix(op.matrix(), op.resolved_window())
}

/// Decompose an explicit Hermitian matrix. Deterministic: ascending
/// eigenvalues, and each eigenvector's largest-magnitude component is made
/// real positive.
pub fn eigendecompose_matrix(m: &CMat, resolved_window: f64) -> Result<Spectrum> {
    if m.nrows() != m.ncols() {
        return Err(Error::Domain("eigendecompose: matrix must be square".into()));
    }
    let defect = hermitian_defect(m);
    if defect > 1e-12 {
        return Err(Error::Domain(format!(
            "eigendecompose: matrix is not Hermitian (relative defect {defect:.2e})"
        )));
    }
    let n = m.nrows();
    let decomp = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| decomp.eigenvalues[a].total_cmp(&decomp.eigenvalues[b]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| decomp.eigenvalues[i]).collect();
    let mut eigenvectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors
            .column_mut(dst)
            .copy_from(&decomp.eigenvectors.column(src));
    }

    // Re-orthonormalize inside degenerate clusters, then fix phases.
    let scale = eigenvalues.iter().fold(1.0f64, |s, l| s.max(l.abs()));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (eigenvalues[end] - eigenvalues[end - 1]).abs() <= 1e-9 * scale {
            end += 1;
        }
        if end - start > 1 {
            for j in start..end {
                let mut col = eigenvectors.column(j).into_owned();
                for i in start..j {
                    let prev = eigenvectors.column(i).into_owned();
                    let proj = prev.dotc(&col);
                    col -= prev * proj;
                }
                let norm = col.norm();
                if norm > 1e-12 {
                    col /= Complex64::new(norm, 0.0);
                }
                eigenvectors.column_mut(j).copy_from(&col);
            }
        }
        start = end;
    }
    for j in 0..n {
        let col = eigenvectors.column(j);
        let mut best = 0;
        let mut best_mag = 0.0;
        for (i, z) in col.iter().enumerate() {
            let mag = z.norm();
            if mag > best_mag + 1e-15 {
                best_mag = mag;
                best = i;
            }
        }
        let pivot = col[best];
        if pivot.norm() > 0.0 {
            let phase = pivot / Complex64::new(pivot.norm(), 0.0);
            let fixed = col.into_owned() * phase.conj();
            eigenvectors.column_mut(j).copy_from(&fixed);
        }
    }

    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        resolved_window,
    })
}

/// How an eta value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMethod {
    ClosedForm,
    HeatRegularized,
}

/// An eta invariant with its provenance and error estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EtaResult {
    pub value: f64,
    pub method: EtaMethod,
    pub estimated_error: f64,
    pub kernel_dim: usize,
}

/// Eta of the model operator `-i d/dx + a` on the circle, whose spectrum is
/// `{ k + a : k integer }`: zero for integer `a` (with a one-dimensional
/// kernel), otherwise `1 - 2 frac(a)`.
pub fn eta_closed_form(a: f64) -> EtaResult {
    let frac = a.rem_euclid(1.0);
    if !(1e-12..=1.0 - 1e-12).contains(&frac) {
        EtaResult {
            value: 0.0,
            method: EtaMethod::ClosedForm,
            estimated_error: 0.0,
            kernel_dim: 1,
        }
    } else {
        EtaResult {
            value: 1.0 - 2.0 * frac,
            method: EtaMethod::ClosedForm,
            estimated_error: 0.0,
            kernel_dim: 0,
        }
    }
}

/// Arithmetic-progression model for the unresolved part of a spectrum.
#[derive(Debug, Clone, Copy)]
struct TailModel {
    /// First extrapolated eigenvalue beyond the resolved window.
    start: f64,
    /// Fitted gap.
    gap: f64,
}

/// Fit an arithmetic progression to the top decile of a sorted positive
/// branch. Errors when the gaps deviate from a constant density by more
/// than 5 percent; returns `None` when there are too few eigenvalues to
/// support a fit (small finite models, where no tail exists).
fn fit_tail(branch: &[f64]) -> Result<Option<TailModel>> {
    if branch.len() < 8 {
        return Ok(None);
    }
    let take = (branch.len() / 10).max(4);
    let top = &branch[branch.len() - take - 1..];
    let gaps: Vec<f64> = top.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::UnresolvedTail(
            "degenerate eigenvalue gaps at the top of the resolved spectrum".into(),
        ));
    }
    for g in &gaps {
        if (g - mean).abs() > 0.05 * mean {
            return Err(Error::UnresolvedTail(format!(
                "top-decile gap {g:.6} deviates from fitted density {mean:.6} by more than 5%"
            )));
        }
    }
    Ok(Some(TailModel {
        start: branch[branch.len() - 1] + mean,
        gap: mean,
    }))
}

fn gauss_sum(branch: &[f64], t: f64) -> f64 {
    branch.iter().map(|l| (-(t * l).powi(2)).exp()).sum()
}

fn tail_sum(model: Option<TailModel>, t: f64) -> f64 {
    let Some(TailModel { start, gap }) = model else {
        return 0.0;
    };
    // Terms fall below 1e-22 once t*(start + m*gap) > 7.1.
    let m_max = (((7.1 / t) - start) / gap).ceil().max(0.0) as usize;
    (0..=m_max)
        .map(|m| (-(t * (start + m as f64 * gap)).powi(2)).exp())
        .sum()
}

/// Richardson extrapolation to t = 0 for a sequence sampled at a
/// step-halving t grid, assuming an expansion in t^2. Returns the final
/// extrapolant and the spread of the last two diagonal entries.
fn richardson_t2(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mut table = vec![vec![0.0f64; n]; n];
    for (i, &v) in values.iter().enumerate() {
        table[i][0] = v;
    }
    for j in 1..n {
        let factor = 4f64.powi(j as i32) - 1.0;
        for i in j..n {
            table[i][j] = table[i][j - 1] + (table[i][j - 1] - table[i - 1][j - 1]) / factor;
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| table[i][i]).collect();
    let value = diag[n - 1];
    let err = if n >= 2 {
        (diag[n - 1] - diag[n - 2]).abs()
    } else {
        f64::INFINITY
    };
    (value, err)
}

/// Heat-regularized eta over the resolved window with the default t grid.
pub fn eta_regularized(spec: &Spectrum) -> Result<EtaResult> {
    eta_regularized_with(spec, spec.resolved_window(), &DEFAULT_T_GRID)
}

/// Heat-regularized eta: `h(t) = sum sign(lambda) exp(-(t lambda)^2)` over
/// the resolved eigenvalues, an analytic correction for the
/// arithmetic-progression tails fitted from the top decile of each branch,
/// then Richardson extrapolation of `t -> 0`.
pub fn eta_regularized_with(spec: &Spectrum, window: f64, t_grid: &[f64]) -> Result<EtaResult> {
    eta_regularized_values(spec.eigenvalues(), window, t_grid)
}

/// The regularized eta sum on an explicit eigenvalue list. Used directly
/// for sector decompositions of diagonal operators.
pub fn eta_regularized_values(
    eigenvalues: &[f64],
    window: f64,
    t_grid: &[f64],
) -> Result<EtaResult> {
    if t_grid.len() < 2 {
        return Err(Error::Domain("eta needs at least two t samples".into()));
    }
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    let mut kernel_dim = 0usize;
    for &l in eigenvalues {
        let mag = l.abs();
        if mag < KERNEL_FLOOR {
            kernel_dim += 1;
        } else if mag < AMBIGUITY_CEIL {
            return Err(Error::KernelAmbiguity(format!(
                "eigenvalue {l:.3e} sits between the kernel floor {KERNEL_FLOOR:.0e} \
                 and the ambiguity ceiling {AMBIGUITY_CEIL:.0e}"
            )));
        } else if mag <= window {
            if l > 0.0 {
                pos.push(mag);
            } else {
                neg.push(mag);
            }
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let tail_pos = fit_tail(&pos)?;
    let tail_neg = fit_tail(&neg)?;

    let samples: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            gauss_sum(&pos, t) - gauss_sum(&neg, t) + tail_sum(tail_pos, t)
                - tail_sum(tail_neg, t)
        })
        .collect();
    let (value, err) = richardson_t2(&samples);
    Ok(EtaResult {
        value,
        method: EtaMethod::HeatRegularized,
        estimated_error: err,
        kernel_dim,
    })
}

/// Orthogonal spectral projection with the `A + eps` convention: the range
/// spans the eigenvectors with `lambda > -eps`, so the kernel is included.
///
/// `eps` must be positive and smaller than the magnitude of every genuinely
/// negative eigenvalue; an `eps` that would swallow one is rejected.
pub fn spectral_projection(spec: &Spectrum, eps: f64) -> Result<CMat> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if let Some(bad) = spec
        .eigenvalues()
        .iter()
        .find(|&&l| l <= -KERNEL_FLOOR && l > -eps)
    {
        return Err(Error::Precondition(format!(
            "eps = {eps} swallows the negative eigenvalue {bad}"
        )));
    }
    let n = spec.dim();
    let mut p = CMat::zeros(n, n);
    for (i, &l) in spec.eigenvalues().iter().enumerate() {
        if l > -eps {
            let v = spec.eigenvectors().column(i);
            let col: CVec = v.into_owned();
            p += &col * col.adjoint();
        }
    }
    Ok(p)
}

/// Rows spanning the range of the spectral projection: eigenvector columns
/// selected by `lambda > -eps`, conjugate-transposed. Convenient for
/// boundary-condition blocks.
pub fn spectral_projection_rows(spec: &Spectrum, eps: f64) -> Result<CMat> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let selected: Vec<usize> = spec
        .eigenvalues()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > -eps)
        .map(|(i, _)| i)
        .collect();
    let mut rows = CMat::zeros(selected.len(), spec.dim());
    for (r, &i) in selected.iter().enumerate() {
        rows.row_mut(r)
            .copy_from(&spec.eigenvectors().column(i).adjoint());
    }
    Ok(rows)
}

/// Count of eigenvalues strictly below the spectral-flow reference line
/// `-eps/2`; a value exactly on the line counts as above, matching the
/// `A + eps` convention.
fn count_below(eigs: &[f64], eps: f64) -> usize {
    eigs.iter().filter(|&&l| l < -eps / 2.0).count()
}

/// Straddle gap around the reference line: distance from the largest
/// eigenvalue below it to the smallest at-or-above it.
fn line_gap(eigs: &[f64], eps: f64) -> f64 {
    let line = -eps / 2.0;
    let below = eigs.iter().filter(|&&l| l < line).cloned().fold(f64::NEG_INFINITY, f64::max);
    let above = eigs.iter().filter(|&&l| l >= line).cloned().fold(f64::INFINITY, f64::min);
    if below.is_finite() && above.is_finite() {
        above - below
    } else {
        f64::INFINITY
    }
}

/// Signed count of eigenvalue crossings of the line `lambda = -eps/2` along
/// a path of Hermitian matrices, negative-to-positive counting +1.
///
/// Consecutive operators must be close enough that sorted-order matching is
/// unambiguous: the maximal eigenvalue motion per step must stay below half
/// the straddle gap at the reference line; otherwise the path is rejected
/// as too coarse and the caller must refine it.
pub fn spectral_flow(path: &[CMat], eps: f64) -> Result<i64> {
    if path.is_empty() {
        return Err(Error::Domain("spectral_flow: empty path".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain("spectral_flow: eps must be positive".into()));
    }
    let dim = path[0].nrows();
    let mut spectra: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    for (step, m) in path.iter().enumerate() {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Domain(format!(
                "spectral_flow: operator {step} has mismatched dimension"
            )));
        }
        if hermitian_defect(m) > 1e-12 {
            return Err(Error::Domain(format!(
                "spectral_flow: operator {step} is not Hermitian"
            )));
        }
        let mut eigs: Vec<f64> = m.clone().symmetric_eigenvalues().iter().cloned().collect();
        eigs.sort_by(f64::total_cmp);
        spectra.push(eigs);
    }
    for step in 0..spectra.len() - 1 {
        let a = &spectra[step];
        let b = &spectra[step + 1];
        let motion = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let gap = line_gap(a, eps).min(line_gap(b, eps));
        if motion >= 0.5 * gap {
            return Err(Error::PathTooCoarse(format!(
                "step {step}: eigenvalue motion {motion:.3e} is not below half the \
                 reference-line gap {gap:.3e}"
            )));
        }
    }
    let first = count_below(&spectra[0], eps) as i64;
    let last = count_below(spectra.last().unwrap(), eps) as i64;
    Ok(first - last)
}

/// Kernel count with ambiguity diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCount {
    pub dim: usize,
    /// Eigenvalues uncomfortably close to the threshold: within a factor of
    /// two on either side.
    pub ambiguous: Vec<f64>,
}

/// Count eigenvalues with `|lambda| < tol`, flagging any within
/// `[tol/2, 2 tol]` as ambiguous.
pub fn kernel_dim(spec: &Spectrum, tol: f64) -> KernelCount {
    let dim = spec.eigenvalues().iter().filter(|l| l.abs() < tol).count();
    let ambiguous = spec
        .eigenvalues()
        .iter()
        .filter(|l| {
            let m = l.abs();
            m >= tol / 2.0 && m <= 2.0 * tol
        })
        .cloned()
        .collect();
    KernelCount { dim, ambiguous }
}
