//! Discretized boundary value problems on the cylinder `S^1 x [0, T]` and
//! the disk, with spectral (Atiyah-Patodi-Singer) or non-local boundary
//! conditions, and numerical Fredholm index extraction.
//!
//! The t direction uses Chebyshev-Lobatto values with the first-order
//! operator collocated at the interleaving first-kind (Gauss) points, so
//! the interior block of each mode is an exactly rank-(N-1) rectangular
//! matrix whose kernel is the discrete solution space. Boundary-condition
//! rows act on the traces at the two end nodes. The Fredholm index is read
//! off the singular values of the stacked system and is only reported
//! after it survives a grid refinement.
//!
//! Orientation convention: at `t = T` the outward tangential operator is
//! `-A(T)`; the `ApsOutward` condition applies the nonnegative spectral
//! projection of the end's outward operator (with the `A + eps` kernel
//! convention), which is what makes pullback problems close numerically.

use crate::covering::CoveringMap;
use crate::discretize::{assemble_tangential, lift_operator, HermitianOperator, OperatorSpec};
use crate::error::{Error, Result};
use crate::spectral::{eigendecompose_matrix, Spectrum};
use crate::util::hermitian_defect;
use crate::CMat;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

/// Default relative singular-value threshold for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// A reported index requires at least this rank gap on both grids.
pub const STABLE_RANK_GAP: f64 = 1e4;
/// Below this gap the rank decision is meaningless and an error.
pub const ILL_CONDITIONED_GAP: f64 = 1e2;

// ---------------------------------------------------------------------
// Chebyshev collocation machinery
// ---------------------------------------------------------------------

/// Chebyshev-Lobatto nodes mapped to [0, length], ascending.
pub fn lobatto_nodes(n: usize, length: f64) -> Vec<f64> {
    let big_n = (n - 1) as f64;
    (0..n)
        .map(|j| 0.5 * length * (1.0 - (std::f64::consts::PI * j as f64 / big_n).cos()))
        .collect()
}

/// First-kind Chebyshev points mapped to [0, length], ascending. These
/// interlace the Lobatto nodes, so interpolation never divides by zero.
pub fn gauss_nodes(m: usize, length: f64) -> Vec<f64> {
    (0..m)
        .map(|i| {
            0.5 * length
                * (1.0 - (std::f64::consts::PI * (2.0 * i as f64 + 1.0) / (2.0 * m as f64)).cos())
        })
        .collect()
}

/// Barycentric weights of the (mapped) Lobatto nodes, up to an irrelevant
/// common factor.
fn lobatto_weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect()
}

/// Barycentric differentiation matrix on arbitrary distinct nodes.
pub fn differentiation_matrix(nodes: &[f64], weights: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let entry = (weights[j] / weights[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = entry;
                diag -= entry;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Barycentric interpolation matrix from `nodes` to `targets`; exact for
/// polynomials supported by the node set.
pub fn interpolation_matrix(nodes: &[f64], weights: &[f64], targets: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut p = DMatrix::zeros(targets.len(), n);
    for (i, &z) in targets.iter().enumerate() {
        let mut denom = 0.0;
        let mut row = vec![0.0; n];
        let mut exact = None;
        for j in 0..n {
            let dz = z - nodes[j];
            if dz.abs() < 1e-14 {
                exact = Some(j);
                break;
            }
            let term = weights[j] / dz;
            row[j] = term;
            denom += term;
        }
        if let Some(j) = exact {
            p[(i, j)] = 1.0;
        } else {
            for j in 0..n {
                p[(i, j)] = row[j] / denom;
            }
        }
    }
    p
}

// ---------------------------------------------------------------------
// Problem descriptions
// ---------------------------------------------------------------------

/// Boundary condition at one cylinder end, applied to the trace there.
///
/// Spectral conditions refer to the end's tangential operator `A(t_end)`
/// itself except for `ApsOutward`, which uses the outward operator
/// (`A(0)` at the start, `-A(T)` at the end). Fiber conditions act through
/// the direct image of the boundary covering and only make sense for
/// lifted problems.
#[derive(Debug, Clone, PartialEq)]
pub enum EndCondition {
    /// Rows spanning eigenspaces with `lambda > -eps` (kernel included).
    SpectralPlus { eps: f64 },
    /// Rows spanning eigenspaces with `lambda < -eps` (kernel excluded).
    SpectralMinus { eps: f64 },
    /// The APS condition of the end's outward tangential operator.
    ApsOutward { eps: f64 },
    /// Full trace vanishes.
    Dirichlet,
    /// No condition.
    Free,
    /// The fiber average of the trace vanishes: Fourier modes `k = 0 mod n`.
    FiberAverage,
    /// The complementary sectors vanish: Fourier modes `k != 0 mod n`.
    FiberComplement,
    /// The trace vanishes on one sheet of the covering (grid rows through
    /// the direct image; couples all Fourier modes).
    SingleSheet { sheet: usize },
    /// Explicit condition rows applied to the trace.
    Custom { rows: CMat },
}

impl EndCondition {
    fn describe(&self) -> String {
        match self {
            EndCondition::SpectralPlus { eps } => format!("spectral-plus({eps})"),
            EndCondition::SpectralMinus { eps } => format!("spectral-minus({eps})"),
            EndCondition::ApsOutward { eps } => format!("aps-outward({eps})"),
            EndCondition::Dirichlet => "dirichlet".into(),
            EndCondition::Free => "free".into(),
            EndCondition::FiberAverage => "fiber-average".into(),
            EndCondition::FiberComplement => "fiber-complement".into(),
            EndCondition::SingleSheet { sheet } => format!("single-sheet:{sheet}"),
            EndCondition::Custom { rows } => format!("custom[{} rows]", rows.nrows()),
        }
    }
}

/// Which end of the cylinder a condition sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Start,
    Finish,
}

/// The tangential operator family of a cylinder problem.
#[derive(Debug, Clone)]
pub enum Tangential {
    /// Base-circle operator from a spec.
    Base(OperatorSpec),
    /// Covering lift of a base spec.
    Lift { spec: OperatorSpec, sheets: usize },
    /// An explicit Hermitian matrix (finite models). Grid refinement can
    /// only grow the t resolution for this variant.
    Matrix { matrix: CMat, window: f64 },
}

impl Tangential {
    fn describe(&self) -> String {
        match self {
            Tangential::Base(spec) => format!("base[rank {} K {}]", spec.rank, spec.fourier_cutoff),
            Tangential::Lift { spec, sheets } => format!(
                "lift[n {} rank {} K {}]",
                sheets, spec.rank, spec.fourier_cutoff
            ),
            Tangential::Matrix { matrix, .. } => {
                format!("matrix[{}x{}]", matrix.nrows(), matrix.ncols())
            }
        }
    }

    /// Build the operator with the cutoff scaled by `mult` (>= 1).
    fn build(&self, mult: f64) -> Result<HermitianOperator> {
        match self {
            Tangential::Base(spec) => {
                let scaled = scale_cutoff(spec, mult)?;
                assemble_tangential(&scaled)
            }
            Tangential::Lift { spec, sheets } => {
                let scaled = scale_cutoff(spec, mult)?;
                let cm = crate::covering::build_covering(
                    *sheets,
                    2 * scaled.fourier_cutoff + 1,
                    std::f64::consts::TAU,
                )?;
                lift_operator(&scaled, &cm)
            }
            Tangential::Matrix { matrix, window } => {
                HermitianOperator::from_matrix(matrix.clone(), *window, "explicit")
            }
        }
    }

    fn sheets(&self) -> Option<usize> {
        match self {
            Tangential::Lift { sheets, .. } => Some(*sheets),
            _ => None,
        }
    }

    fn holonomy_is_zero(&self) -> bool {
        match self {
            Tangential::Base(spec) | Tangential::Lift { spec, .. } => spec.holonomy == 0.0,
            Tangential::Matrix { .. } => false,
        }
    }
}

fn scale_cutoff(spec: &OperatorSpec, mult: f64) -> Result<OperatorSpec> {
    let k = ((spec.fourier_cutoff as f64) * mult).ceil() as usize;
    OperatorSpec::new(spec.rank, spec.holonomy, k, spec.potential.clone())
}

/// A cylinder boundary value problem `d/dt + A(t)` on `S^1 x [0, T]` with
/// one condition per end. `A(t) = A + ramp_rate * (t/T)` (scalar ramp; zero
/// for product-type problems).
#[derive(Debug, Clone)]
pub struct CylinderProblem {
    pub tangential: Tangential,
    pub ramp_rate: f64,
    pub length: f64,
    pub start: EndCondition,
    pub end: EndCondition,
}

impl CylinderProblem {
    pub fn product(tangential: Tangential, length: f64, start: EndCondition, end: EndCondition) -> Self {
        Self {
            tangential,
            ramp_rate: 0.0,
            length,
            start,
            end,
        }
    }
}

/// Grid parameters of one assembly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridParams {
    /// Multiplier applied to the spec's Fourier cutoff (1.0 = as given).
    pub cutoff_mult: f64,
    /// Chebyshev-Lobatto point count in t.
    pub t_points: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self::new(24)
    }
}

impl GridParams {
    pub fn new(t_points: usize) -> Self {
        Self {
            cutoff_mult: 1.0,
            t_points,
        }
    }

    fn refined(&self) -> Self {
        Self {
            cutoff_mult: self.cutoff_mult * 1.5,
            t_points: ((self.t_points as f64) * 1.5).ceil() as usize,
        }
    }
}

// ---------------------------------------------------------------------
// Condition rows
// ---------------------------------------------------------------------

/// Row block implementing a non-local condition `B . beta . trace` in the
/// Fourier coordinates of a lifted operator: evaluate the trace on the
/// cover grid, reorder fiber values into base-stacked components, apply
/// the pointwise matrix `B` on each base point.
///
/// `b` is `q x (n r)`, acting on the stacked fiber values of a rank-r
/// problem; `labels` are the Fourier labels of the lift (holonomy zero).
pub fn nonlocal_condition_rows(
    cm: &CoveringMap,
    b: &CMat,
    labels: &[(i64, usize)],
    rank: usize,
) -> Result<CMat> {
    let n = cm.sheets();
    let m = cm.base().num_points();
    if labels.len() != n * m * rank {
        return Err(Error::Domain(format!(
            "labels ({}) must match cover grid x rank ({})",
            labels.len(),
            n * m * rank
        )));
    }
    if b.ncols() != n * rank {
        return Err(Error::Domain(format!(
            "condition matrix has {} columns, expected {}",
            b.ncols(),
            n * rank
        )));
    }
    let q = b.nrows();
    let d = labels.len();
    let mut rows = CMat::zeros(q * m, d);
    for i in 0..m {
        for (j, &p) in cm.fiber(i).iter().enumerate() {
            let theta = cm.cover().points()[p];
            for (col, &(k, c)) in labels.iter().enumerate() {
                let phase = Complex64::from_polar(1.0, k as f64 * theta);
                for row in 0..q {
                    rows[(i * q + row, col)] += b[(row, j * rank + c)] * phase;
                }
            }
        }
    }
    Ok(rows)
}

/// The `A + eps` shift must not reclassify a genuinely nonzero eigenvalue:
/// reject any `eps` beyond the distance to the nearest one.
fn validate_eps(eigenvalues: &[f64], eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if let Some(bad) = eigenvalues
        .iter()
        .find(|l| l.abs() > crate::spectral::KERNEL_FLOOR && l.abs() < eps)
    {
        return Err(Error::Precondition(format!(
            "eps = {eps} swallows the nonzero eigenvalue {bad}"
        )));
    }
    Ok(())
}

/// Condition rows for one end, in the Fourier/matrix coordinates of the
/// tangential operator at that end.
fn condition_rows(
    cond: &EndCondition,
    end: End,
    op_at_end: &HermitianOperator,
    tangential: &Tangential,
) -> Result<CMat> {
    let d = op_at_end.dim();
    let spectrum_of = |m: &CMat| eigendecompose_matrix(m, f64::INFINITY);
    let select = |spec: &Spectrum, keep: &dyn Fn(f64) -> bool| {
        let chosen: Vec<usize> = spec
            .eigenvalues()
            .iter()
            .enumerate()
            .filter(|(_, &l)| keep(l))
            .map(|(i, _)| i)
            .collect();
        let mut rows = CMat::zeros(chosen.len(), spec.dim());
        for (r, &i) in chosen.iter().enumerate() {
            rows.row_mut(r)
                .copy_from(&spec.eigenvectors().column(i).adjoint());
        }
        rows
    };
    match cond {
        EndCondition::Free => Ok(CMat::zeros(0, d)),
        EndCondition::Dirichlet => Ok(CMat::identity(d, d)),
        EndCondition::SpectralPlus { eps } => {
            let spec = spectrum_of(op_at_end.matrix())?;
            validate_eps(spec.eigenvalues(), *eps)?;
            Ok(select(&spec, &|l| l > -eps))
        }
        EndCondition::SpectralMinus { eps } => {
            let spec = spectrum_of(op_at_end.matrix())?;
            validate_eps(spec.eigenvalues(), *eps)?;
            Ok(select(&spec, &|l| l < -eps))
        }
        EndCondition::ApsOutward { eps } => {
            let spec = spectrum_of(op_at_end.matrix())?;
            validate_eps(spec.eigenvalues(), *eps)?;
            match end {
                End::Start => Ok(select(&spec, &|l| l > -eps)),
                // Outward operator is -A(T): its lambda > -eps means
                // the A(T) eigenvalue is below +eps, kernel included.
                End::Finish => Ok(select(&spec, &|l| l < *eps)),
            }
        }
        EndCondition::FiberAverage | EndCondition::FiberComplement => {
            let n = tangential.sheets().ok_or_else(|| {
                Error::Domain("fiber conditions require a lifted tangential operator".into())
            })? as i64;
            let chosen: Vec<usize> = op_at_end
                .labels()
                .iter()
                .enumerate()
                .filter(|(_, &(k, _))| {
                    let invariant = k.rem_euclid(n) == 0;
                    match cond {
                        EndCondition::FiberAverage => invariant,
                        _ => !invariant,
                    }
                })
                .map(|(i, _)| i)
                .collect();
            let mut rows = CMat::zeros(chosen.len(), d);
            for (r, &i) in chosen.iter().enumerate() {
                rows[(r, i)] = Complex64::new(1.0, 0.0);
            }
            Ok(rows)
        }
        EndCondition::SingleSheet { sheet } => {
            let Tangential::Lift { spec, sheets } = tangential else {
                return Err(Error::Domain(
                    "single-sheet conditions require a lifted tangential operator".into(),
                ));
            };
            if !tangential.holonomy_is_zero() {
                return Err(Error::Domain(
                    "single-sheet conditions are implemented for holonomy zero".into(),
                ));
            }
            if *sheet >= *sheets {
                return Err(Error::Domain(format!(
                    "sheet {sheet} out of range for {sheets} sheets"
                )));
            }
            let m = op_at_end.labels().len() / (sheets * spec.rank);
            let cm = crate::covering::build_covering(*sheets, m, std::f64::consts::TAU)?;
            // B picks the chosen sheet's components out of the stacked fiber.
            let mut b = CMat::zeros(spec.rank, sheets * spec.rank);
            for c in 0..spec.rank {
                b[(c, sheet * spec.rank + c)] = Complex64::new(1.0, 0.0);
            }
            nonlocal_condition_rows(&cm, &b, op_at_end.labels(), spec.rank)
        }
        EndCondition::Custom { rows } => {
            if rows.ncols() != d {
                return Err(Error::Domain(format!(
                    "custom condition rows have {} columns, trace has dimension {d}",
                    rows.ncols()
                )));
            }
            Ok(rows.clone())
        }
    }
}

// ---------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------

/// A rectangular discretized boundary value problem: interior collocation
/// rows over the unknown trace values at the Lobatto nodes, plus boundary
/// condition rows. The provenance string records the problem and grid so
/// an assembly is reproducible from its description.
#[derive(Debug, Clone)]
pub struct BvpAssembly {
    pub interior: CMat,
    pub boundary: CMat,
    pub grid: GridParams,
    pub provenance: String,
}

impl BvpAssembly {
    pub fn columns(&self) -> usize {
        self.interior.ncols()
    }

    pub fn rows(&self) -> usize {
        self.interior.nrows() + self.boundary.nrows()
    }

    pub fn stacked(&self) -> CMat {
        let mut m = CMat::zeros(self.rows(), self.columns());
        m.rows_mut(0, self.interior.nrows()).copy_from(&self.interior);
        m.rows_mut(self.interior.nrows(), self.boundary.nrows())
            .copy_from(&self.boundary);
        m
    }

    /// The adjoint problem: conjugate transpose of the stacked system. Its
    /// index is the negative of the original's.
    pub fn adjoint(&self) -> BvpAssembly {
        BvpAssembly {
            interior: self.stacked().adjoint(),
            boundary: CMat::zeros(0, self.rows()),
            grid: self.grid,
            provenance: format!("adjoint of {}", self.provenance),
        }
    }
}

/// Internal per-mode problem: one eigenvalue path and its end conditions.
struct ModeBlock {
    lambda0: f64,
    rate: f64,
    constrained_start: bool,
    constrained_end: bool,
}

/// How a problem gets assembled: decoupled per-mode blocks when the
/// conditions respect an eigenbasis, dense otherwise.
enum Plan {
    PerMode(Vec<ModeBlock>),
    Dense(BvpAssembly),
}

fn mode_membership(
    cond: &EndCondition,
    end: End,
    lambda_end: f64,
    label: Option<i64>,
    sheets: Option<usize>,
) -> Result<Option<bool>> {
    let out = match cond {
        EndCondition::Free => Some(false),
        EndCondition::Dirichlet => Some(true),
        EndCondition::SpectralPlus { eps } => Some(lambda_end > -eps),
        EndCondition::SpectralMinus { eps } => Some(lambda_end < -eps),
        EndCondition::ApsOutward { eps } => Some(match end {
            End::Start => lambda_end > -eps,
            End::Finish => lambda_end < *eps,
        }),
        EndCondition::FiberAverage | EndCondition::FiberComplement => {
            let (Some(k), Some(n)) = (label, sheets) else {
                return Err(Error::Domain(
                    "fiber conditions need labeled modes of a lifted operator".into(),
                ));
            };
            let invariant = k.rem_euclid(n as i64) == 0;
            Some(match cond {
                EndCondition::FiberAverage => invariant,
                _ => !invariant,
            })
        }
        EndCondition::SingleSheet { .. } | EndCondition::Custom { .. } => None,
    };
    Ok(out)
}

/// Validate every spectral condition's eps against the eigenvalues it
/// will classify (the start values and the ramped end values).
fn validate_condition_eps(problem: &CylinderProblem, modes: &[(f64, Option<i64>)]) -> Result<()> {
    let eps_of = |c: &EndCondition| match c {
        EndCondition::SpectralPlus { eps }
        | EndCondition::SpectralMinus { eps }
        | EndCondition::ApsOutward { eps } => Some(*eps),
        _ => None,
    };
    if let Some(eps) = eps_of(&problem.start) {
        let at_start: Vec<f64> = modes.iter().map(|&(l, _)| l).collect();
        validate_eps(&at_start, eps)?;
    }
    if let Some(eps) = eps_of(&problem.end) {
        let at_end: Vec<f64> = modes.iter().map(|&(l, _)| l + problem.ramp_rate).collect();
        validate_eps(&at_end, eps)?;
    }
    Ok(())
}

fn plan_assembly(problem: &CylinderProblem, grid: GridParams) -> Result<Plan> {
    let op = problem.tangential.build(grid.cutoff_mult)?;
    let sheets = problem.tangential.sheets();
    let diagonal = op.is_diagonal(1e-13);
    let spectral_only = |c: &EndCondition| {
        matches!(
            c,
            EndCondition::SpectralPlus { .. }
                | EndCondition::SpectralMinus { .. }
                | EndCondition::ApsOutward { .. }
                | EndCondition::Dirichlet
                | EndCondition::Free
        )
    };
    let fiber_ok = |c: &EndCondition| {
        spectral_only(c)
            || matches!(
                c,
                EndCondition::FiberAverage | EndCondition::FiberComplement
            )
    };

    let per_mode_possible = if diagonal {
        fiber_ok(&problem.start) && fiber_ok(&problem.end)
    } else {
        spectral_only(&problem.start) && spectral_only(&problem.end)
    };

    if per_mode_possible {
        // Mode data: (eigenvalue, optional Fourier label).
        let modes: Vec<(f64, Option<i64>)> = if diagonal {
            op.labels()
                .iter()
                .enumerate()
                .map(|(i, &(k, _))| (op.matrix()[(i, i)].re, Some(k)))
                .collect()
        } else {
            eigendecompose_matrix(op.matrix(), f64::INFINITY)?
                .eigenvalues()
                .iter()
                .map(|&l| (l, None))
                .collect()
        };
        validate_condition_eps(problem, &modes)?;
        let mut blocks = Vec::with_capacity(modes.len());
        for (lambda0, label) in modes {
            let lambda_t = lambda0 + problem.ramp_rate;
            let s = mode_membership(&problem.start, End::Start, lambda0, label, sheets)?
                .expect("plan guarantees modewise conditions");
            let e = mode_membership(&problem.end, End::Finish, lambda_t, label, sheets)?
                .expect("plan guarantees modewise conditions");
            blocks.push(ModeBlock {
                lambda0,
                rate: problem.ramp_rate,
                constrained_start: s,
                constrained_end: e,
            });
        }
        return Ok(Plan::PerMode(blocks));
    }

    // Dense path.
    Ok(Plan::Dense(assemble_cylinder(problem, grid)?))
}

/// Assemble the full rectangular system for a cylinder problem. The
/// unknowns are the trace values at the Lobatto nodes, node-major.
pub fn assemble_cylinder(problem: &CylinderProblem, grid: GridParams) -> Result<BvpAssembly> {
    if grid.t_points < 4 {
        return Err(Error::Domain("need at least 4 collocation points".into()));
    }
    if !(problem.length > 0.0) {
        return Err(Error::Domain("cylinder length must be positive".into()));
    }
    let op = problem.tangential.build(grid.cutoff_mult)?;
    if hermitian_defect(op.matrix()) > 1e-12 {
        return Err(Error::Domain("tangential operator must be Hermitian".into()));
    }
    let d = op.dim();
    let nt = grid.t_points;
    let nodes = lobatto_nodes(nt, problem.length);
    let weights = lobatto_weights(nt);
    let gauss = gauss_nodes(nt - 1, problem.length);
    let diff = differentiation_matrix(&nodes, &weights);
    let interp = interpolation_matrix(&nodes, &weights, &gauss);
    let pd = &interp * &diff;

    let mut interior = CMat::zeros((nt - 1) * d, nt * d);
    for (i, &z) in gauss.iter().enumerate() {
        let a_z = op.matrix()
            + CMat::identity(d, d)
                * Complex64::new(problem.ramp_rate * z / problem.length, 0.0);
        for j in 0..nt {
            let deriv = Complex64::new(pd[(i, j)], 0.0);
            let weight = Complex64::new(interp[(i, j)], 0.0);
            for a in 0..d {
                interior[(i * d + a, j * d + a)] += deriv;
            }
            if interp[(i, j)].abs() > 0.0 {
                for a in 0..d {
                    for b in 0..d {
                        interior[(i * d + a, j * d + b)] += weight * a_z[(a, b)];
                    }
                }
            }
        }
    }

    let op_end_matrix = op.matrix()
        + CMat::identity(d, d) * Complex64::new(problem.ramp_rate, 0.0);
    let op_end =
        HermitianOperator::from_matrix(op_end_matrix, op.resolved_window(), "end tangential")?;
    let rows_start = condition_rows(&problem.start, End::Start, &op, &problem.tangential)?;
    let rows_end = condition_rows(&problem.end, End::Finish, &op_end, &problem.tangential)?;

    let mut boundary = CMat::zeros(rows_start.nrows() + rows_end.nrows(), nt * d);
    boundary
        .view_mut((0, 0), (rows_start.nrows(), d))
        .copy_from(&rows_start);
    boundary
        .view_mut((rows_start.nrows(), (nt - 1) * d), (rows_end.nrows(), d))
        .copy_from(&rows_end);

    Ok(BvpAssembly {
        interior,
        boundary,
        grid,
        provenance: format!(
            "{} ramp {} length {} start {} end {} at cutoff x{} / {} t-points",
            problem.tangential.describe(),
            problem.ramp_rate,
            problem.length,
            problem.start.describe(),
            problem.end.describe(),
            grid.cutoff_mult,
            grid.t_points
        ),
    })
}

// ---------------------------------------------------------------------
// Index extraction
// ---------------------------------------------------------------------

/// Index data from a single grid.
#[derive(Debug, Clone, Serialize)]
pub struct SingleGridIndex {
    pub index: i64,
    pub dim_ker: usize,
    pub dim_coker: usize,
    /// Ratio of the smallest kept to the largest dropped singular value
    /// (infinite when nothing is dropped).
    pub rank_gap: f64,
    pub sigma_max: f64,
}

/// The reported index result: single-grid data plus the refinement verdict.
#[derive(Debug, Clone, Serialize)]
pub struct IndexResult {
    pub index: i64,
    pub dim_ker: usize,
    pub dim_coker: usize,
    pub rank_gap: f64,
    pub stable: bool,
    pub coarse: SingleGridIndex,
    pub fine: SingleGridIndex,
}

fn rank_decision(singulars: &[f64], rows: usize, cols: usize, tol: f64) -> Result<SingleGridIndex> {
    let sigma_max = singulars.iter().cloned().fold(0.0, f64::max);
    let cut = tol * sigma_max.max(1e-300);
    let kept: Vec<f64> = singulars.iter().cloned().filter(|&s| s > cut).collect();
    let dropped: Vec<f64> = singulars.iter().cloned().filter(|&s| s <= cut).collect();
    let rank = kept.len();
    let min_kept = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_dropped = dropped.iter().cloned().fold(0.0f64, f64::max);
    let rank_gap = if dropped.is_empty() {
        f64::INFINITY
    } else {
        min_kept / max_dropped.max(1e-300)
    };
    if rank_gap < ILL_CONDITIONED_GAP {
        return Err(Error::IllConditionedRank(format!(
            "rank gap {rank_gap:.2e} below {ILL_CONDITIONED_GAP:.0e}: smallest kept \
             {min_kept:.3e}, largest dropped {max_dropped:.3e}"
        )));
    }
    Ok(SingleGridIndex {
        index: cols as i64 - rows as i64,
        dim_ker: cols - rank,
        dim_coker: rows - rank,
        rank_gap,
        sigma_max,
    }
    .fix_index())
}

impl SingleGridIndex {
    fn fix_index(mut self) -> Self {
        self.index = self.dim_ker as i64 - self.dim_coker as i64;
        self
    }
}

fn mode_singular_values(block: &ModeBlock, nt: usize, length: f64) -> Vec<f64> {
    let nodes = lobatto_nodes(nt, length);
    let weights = lobatto_weights(nt);
    let gauss = gauss_nodes(nt - 1, length);
    let diff = differentiation_matrix(&nodes, &weights);
    let interp = interpolation_matrix(&nodes, &weights, &gauss);
    let pd = &interp * &diff;
    let rows =
        nt - 1 + usize::from(block.constrained_start) + usize::from(block.constrained_end);
    let mut m = DMatrix::<f64>::zeros(rows, nt);
    for i in 0..nt - 1 {
        let lambda = block.lambda0 + block.rate * gauss[i] / length;
        for j in 0..nt {
            m[(i, j)] = pd[(i, j)] + lambda * interp[(i, j)];
        }
    }
    let mut r = nt - 1;
    if block.constrained_start {
        m[(r, 0)] = 1.0;
        r += 1;
    }
    if block.constrained_end {
        m[(r, nt - 1)] = 1.0;
    }
    nalgebra::SVD::new(m, false, false)
        .singular_values
        .iter()
        .cloned()
        .collect()
}

fn index_of_plan(plan: &Plan, problem: &CylinderProblem, grid: GridParams, tol: f64) -> Result<SingleGridIndex> {
    match plan {
        Plan::PerMode(blocks) => {
            let nt = grid.t_points;
            let mut singulars = Vec::new();
            let mut rows = 0usize;
            let mut cols = 0usize;
            for b in blocks {
                singulars.extend(mode_singular_values(b, nt, problem.length));
                rows += nt - 1
                    + usize::from(b.constrained_start)
                    + usize::from(b.constrained_end);
                cols += nt;
            }
            rank_decision(&singulars, rows, cols, tol)
        }
        Plan::Dense(asm) => index_single_grid(asm, tol),
    }
}

/// Rank/kernel/cokernel data of one assembly via its singular values.
pub fn index_single_grid(asm: &BvpAssembly, tol: f64) -> Result<SingleGridIndex> {
    let stacked = asm.stacked();
    let (rows, cols) = (stacked.nrows(), stacked.ncols());
    let svd = nalgebra::SVD::new(stacked, false, false);
    let singulars: Vec<f64> = svd.singular_values.iter().cloned().collect();
    rank_decision(&singulars, rows, cols, tol)
}

/// The numerical Fredholm index with the mandatory stability protocol: the
/// problem is assembled at the given grid and at a grid refined by 1.5 in
/// both directions; the result is `stable` only when both runs agree and
/// both rank gaps clear [`STABLE_RANK_GAP`].
pub fn numerical_index(problem: &CylinderProblem, grid: GridParams, tol: f64) -> Result<IndexResult> {
    let coarse_plan = plan_assembly(problem, grid)?;
    let coarse = index_of_plan(&coarse_plan, problem, grid, tol)?;
    let fine_grid = grid.refined();
    let fine_plan = plan_assembly(problem, fine_grid)?;
    let fine = index_of_plan(&fine_plan, problem, fine_grid, tol)?;
    let stable = coarse.index == fine.index
        && coarse.rank_gap > STABLE_RANK_GAP
        && fine.rank_gap > STABLE_RANK_GAP;
    Ok(IndexResult {
        index: fine.index,
        dim_ker: fine.dim_ker,
        dim_coker: fine.dim_coker,
        rank_gap: coarse.rank_gap.min(fine.rank_gap),
        stable,
        coarse,
        fine,
    })
}

/// Separation-of-variables oracle for product-type (and scalar-ramped)
/// problems: each eigenvalue path contributes `1 - (#conditions hitting
/// it)`, by the analytic solvability of `u' + lambda(t) u = f` per mode.
/// Independent of the collocation/SVD route: no t grid is ever built.
///
/// Errors when the outer decile of the mode window still carries nonzero
/// contributions (the index would then be window-dependent, not a Fredholm
/// quantity).
pub fn mode_index_oracle(problem: &CylinderProblem) -> Result<i64> {
    let op = problem.tangential.build(1.0)?;
    let sheets = problem.tangential.sheets();
    let diagonal = op.is_diagonal(1e-13);
    let modes: Vec<(f64, Option<i64>)> = if diagonal {
        op.labels()
            .iter()
            .enumerate()
            .map(|(i, &(k, _))| (op.matrix()[(i, i)].re, Some(k)))
            .collect()
    } else {
        eigendecompose_matrix(op.matrix(), f64::INFINITY)?
            .eigenvalues()
            .iter()
            .map(|&l| (l, None))
            .collect()
    };
    validate_condition_eps(problem, &modes)?;
    let mut contributions: Vec<(f64, i64)> = Vec::with_capacity(modes.len());
    for (lambda0, label) in modes {
        let lambda_t = lambda0 + problem.ramp_rate;
        let s = mode_membership(&problem.start, End::Start, lambda0, label, sheets)?
            .ok_or_else(|| {
                Error::Domain("mode oracle does not support single-sheet conditions".into())
            })?;
        let e = mode_membership(&problem.end, End::Finish, lambda_t, label, sheets)?
            .ok_or_else(|| {
                Error::Domain("mode oracle does not support single-sheet conditions".into())
            })?;
        let q = i64::from(s) + i64::from(e);
        contributions.push((lambda0.abs(), 1 - q));
    }
    contributions.sort_by(|a, b| a.0.total_cmp(&b.0));
    let guard = (contributions.len() / 10).max(2).min(contributions.len());
    let edge_bad = contributions[contributions.len() - guard..]
        .iter()
        .any(|&(_, c)| c != 0);
    if edge_bad {
        return Err(Error::UnstableIndex(
            "mode contributions do not vanish at the window edge; the problem is not \
             Fredholm-stable"
                .into(),
        ));
    }
    Ok(contributions.iter().map(|&(_, c)| c).sum())
}

// ---------------------------------------------------------------------
// Disk mode families
// ---------------------------------------------------------------------

/// Boundary condition for the disk model, acting on angular modes of the
/// trace. The disk boundary circle carries the n-fold covering, so
/// non-local conditions act through the sector `k mod n`.
#[derive(Debug, Clone, PartialEq)]
pub enum DiskCondition {
    /// APS condition of the boundary tangential operator (`-i d/theta`),
    /// kernel included: constrains modes `k > -eps`, i.e. `k >= 0`.
    ApsPlus { eps: f64 },
    /// Constrain every mode with `k >= threshold`.
    KillModesAtLeast(i64),
    /// The fiber-invariant part of the trace vanishes: modes `k = 0 mod n`.
    InvariantPartVanishes,
    /// No condition.
    Empty,
}

/// A Cauchy-Riemann-type problem on the disk, reduced to angular modes:
/// mode `k` solves `u_k' - (k/r) u_k = 0` with regularity at the origin,
/// so its solution space is `r^k` for `k >= 0` and empty otherwise.
#[derive(Debug, Clone)]
pub struct DiskProblem {
    pub sheets: usize,
    pub condition: DiskCondition,
    pub k_min: i64,
    pub k_max: i64,
}

/// Per-mode data of the disk problem.
#[derive(Debug, Clone, Serialize)]
pub struct DiskMode {
    pub k: i64,
    pub solution_dim: usize,
    pub condition_rows: usize,
    /// True when the boundary condition kills the mode's solution
    /// (the trace of `r^k` at `r = 1` is 1, never zero).
    pub killed: bool,
}

impl DiskMode {
    pub fn contribution(&self) -> i64 {
        self.solution_dim as i64 - self.condition_rows as i64
    }

    /// Mode survives in the kernel.
    pub fn in_kernel(&self) -> bool {
        self.solution_dim == 1 && self.condition_rows == 0
    }

    /// Mode contributes to the cokernel.
    pub fn in_cokernel(&self) -> bool {
        self.solution_dim == 0 && self.condition_rows == 1
    }
}

fn disk_condition_applies(cond: &DiskCondition, k: i64, sheets: usize) -> bool {
    match cond {
        DiskCondition::ApsPlus { eps } => (k as f64) > -eps,
        DiskCondition::KillModesAtLeast(k0) => k >= *k0,
        DiskCondition::InvariantPartVanishes => k.rem_euclid(sheets as i64) == 0,
        DiskCondition::Empty => false,
    }
}

/// Enumerate the radial mode problems of a disk boundary value problem.
pub fn assemble_disk_modes(problem: &DiskProblem) -> Result<Vec<DiskMode>> {
    if problem.sheets == 0 {
        return Err(Error::Domain("disk covering needs at least one sheet".into()));
    }
    if problem.k_min > problem.k_max {
        return Err(Error::Domain("empty mode range".into()));
    }
    Ok((problem.k_min..=problem.k_max)
        .map(|k| {
            let solution_dim = usize::from(k >= 0);
            let rows = usize::from(disk_condition_applies(&problem.condition, k, problem.sheets));
            DiskMode {
                k,
                solution_dim,
                condition_rows: rows,
                killed: solution_dim == 1 && rows == 1,
            }
        })
        .collect())
}

/// Integer index of the disk problem by mode counting. Errors when the
/// window edges still carry contributions (the condition is not
/// Fredholm-balanced and no window-independent index exists).
pub fn disk_index(problem: &DiskProblem) -> Result<i64> {
    let modes = assemble_disk_modes(problem)?;
    let guard = (modes.len() / 4).max(2);
    let edge_bad = modes
        .iter()
        .take(guard)
        .chain(modes.iter().rev().take(guard))
        .any(|m| m.contribution() != 0);
    if edge_bad {
        return Err(Error::UnstableIndex(
            "disk mode window too small: edge modes still contribute".into(),
        ));
    }
    Ok(modes.iter().map(DiskMode::contribution).sum())
}

#[cfg(test)]
mod tests {
    use super::*;


    fn diag_matrix(vals: &[f64]) -> CMat {
        CMat::from_fn(vals.len(), vals.len(), |i, j| {
            if i == j {
                Complex64::new(vals[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn differentiation_matrix_kills_constants_and_differentiates() {
        let n = 12;
        let nodes = lobatto_nodes(n, 2.0);
        let weights = lobatto_weights(n);
        let d = differentiation_matrix(&nodes, &weights);
        // Derivative of t^3 is 3 t^2, exactly for polynomials.
        let values: Vec<f64> = nodes.iter().map(|&t| t.powi(3)).collect();
        let deriv = &d * DMatrix::from_column_slice(n, 1, &values);
        for (i, &t) in nodes.iter().enumerate() {
            assert!((deriv[(i, 0)] - 3.0 * t * t).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_is_exact_on_polynomials() {
        let n = 10;
        let nodes = lobatto_nodes(n, 1.0);
        let weights = lobatto_weights(n);
        let targets = gauss_nodes(n - 1, 1.0);
        let p = interpolation_matrix(&nodes, &weights, &targets);
        let values: Vec<f64> = nodes.iter().map(|&t| 1.0 - 2.0 * t + t.powi(4)).collect();
        let interp = &p * DMatrix::from_column_slice(n, 1, &values);
        for (i, &z) in targets.iter().enumerate() {
            assert!((interp[(i, 0)] - (1.0 - 2.0 * z + z.powi(4))).abs() < 1e-11);
        }
    }

    fn matrix_problem(vals: &[f64], start: EndCondition, end: EndCondition) -> CylinderProblem {
        CylinderProblem::product(
            Tangential::Matrix {
                matrix: diag_matrix(vals),
                window: 100.0,
            },
            1.0,
            start,
            end,
        )
    }

    #[test]
    fn aps_pair_on_two_modes_has_empty_kernel() {
        // A = diag(1, -1): the two decaying/growing solutions are each
        // killed by the matching condition; index 0.
        let problem = matrix_problem(
            &[1.0, -1.0],
            EndCondition::SpectralPlus { eps: 0.1 },
            EndCondition::SpectralMinus { eps: 0.1 },
        );
        let res = numerical_index(&problem, GridParams::new(16), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(res.index, 0);
        assert_eq!(res.dim_ker, 0);
        assert_eq!(res.dim_coker, 0);
        assert!(res.stable);
        assert!(res.rank_gap > STABLE_RANK_GAP);
        assert_eq!(mode_index_oracle(&problem).unwrap(), 0);
    }

    #[test]
    fn single_dirichlet_end_is_invertible() {
        let problem = matrix_problem(&[0.0], EndCondition::Dirichlet, EndCondition::Free);
        let res = numerical_index(&problem, GridParams::new(12), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(res.index, 0);
        assert_eq!(res.dim_ker, 0);
        assert_eq!(res.dim_coker, 0);
        assert!(res.stable);
        assert_eq!(mode_index_oracle(&problem).unwrap(), 0);
    }

    #[test]
    fn zero_modes_doubly_killed_lower_the_index() {
        // A with a kernel, APS-outward both ends: the constant-in-t zero
        // mode is constrained at both ends, index -dim ker A.
        let problem = matrix_problem(
            &[1.3, 0.0, -0.8],
            EndCondition::ApsOutward { eps: 0.05 },
            EndCondition::ApsOutward { eps: 0.05 },
        );
        let res = numerical_index(&problem, GridParams::new(16), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(res.index, -1);
        assert_eq!(res.dim_coker, 1);
        assert!(res.stable);
        assert_eq!(mode_index_oracle(&problem).unwrap(), -1);
    }

    #[test]
    fn duplicated_condition_row_raises_cokernel() {
        let problem = matrix_problem(
            &[1.0, -1.0],
            EndCondition::SpectralPlus { eps: 0.1 },
            EndCondition::SpectralMinus { eps: 0.1 },
        );
        let asm = assemble_cylinder(&problem, GridParams::new(12)).unwrap();
        let base = index_single_grid(&asm, DEFAULT_RANK_TOL).unwrap();

        let mut boundary = CMat::zeros(asm.boundary.nrows() + 1, asm.columns());
        boundary
            .rows_mut(0, asm.boundary.nrows())
            .copy_from(&asm.boundary);
        let last = asm.boundary.row(0).into_owned();
        boundary.row_mut(asm.boundary.nrows()).copy_from(&last);
        let doubled = BvpAssembly {
            interior: asm.interior.clone(),
            boundary,
            grid: asm.grid,
            provenance: format!("{} with a duplicated condition row", asm.provenance),
        };
        let res = index_single_grid(&doubled, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(res.dim_coker, base.dim_coker + 1);
        assert_eq!(res.index, base.index - 1);
    }

    #[test]
    fn adjoint_assembly_negates_the_index() {
        let problem = matrix_problem(
            &[0.9, 0.0, -1.1],
            EndCondition::ApsOutward { eps: 0.05 },
            EndCondition::ApsOutward { eps: 0.05 },
        );
        let asm = assemble_cylinder(&problem, GridParams::new(14)).unwrap();
        let direct = index_single_grid(&asm, DEFAULT_RANK_TOL).unwrap();
        let adj = index_single_grid(&asm.adjoint(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(direct.index, -adj.index);
    }

    #[test]
    fn lifted_aps_problem_matches_oracle() {
        let spec = OperatorSpec::scalar(0.2, 8).unwrap();
        let problem = CylinderProblem::product(
            Tangential::Lift { spec, sheets: 2 },
            1.0,
            EndCondition::ApsOutward { eps: 0.05 },
            EndCondition::ApsOutward { eps: 0.05 },
        );
        let res = numerical_index(&problem, GridParams::new(14), DEFAULT_RANK_TOL).unwrap();
        assert!(res.stable);
        assert_eq!(res.index, mode_index_oracle(&problem).unwrap());
        assert_eq!(res.index, 0);
    }

    #[test]
    fn ramped_problem_has_winding_index() {
        // a(t) = 0.2 + t: one eigenvalue path crosses zero upward; one
        // mode escapes both conditions and survives in the kernel.
        let spec = OperatorSpec::scalar(0.2, 8).unwrap();
        let problem = CylinderProblem {
            tangential: Tangential::Base(spec),
            ramp_rate: 1.0,
            length: 1.0,
            start: EndCondition::ApsOutward { eps: 0.05 },
            end: EndCondition::ApsOutward { eps: 0.05 },
        };
        let res = numerical_index(&problem, GridParams::new(16), DEFAULT_RANK_TOL).unwrap();
        assert!(res.stable);
        assert_eq!(res.index, 1);
        assert_eq!(res.dim_ker, 1);
        assert_eq!(mode_index_oracle(&problem).unwrap(), 1);
    }

    #[test]
    fn fiber_pair_conditions_balance() {
        let spec = OperatorSpec::scalar(0.2, 6).unwrap();
        let problem = CylinderProblem::product(
            Tangential::Lift { spec, sheets: 2 },
            1.0,
            EndCondition::FiberAverage,
            EndCondition::FiberComplement,
        );
        let res = numerical_index(&problem, GridParams::new(12), DEFAULT_RANK_TOL).unwrap();
        assert!(res.stable);
        assert_eq!(res.index, 0);
        assert_eq!(res.index, mode_index_oracle(&problem).unwrap());
    }

    #[test]
    fn nonlocal_rows_of_identity_are_full_rank() {
        let cm = crate::covering::build_covering(2, 9, std::f64::consts::TAU).unwrap();
        let spec = OperatorSpec::scalar(0.0, 4).unwrap();
        let lift = lift_operator(&spec, &cm).unwrap();
        let b = CMat::identity(2, 2);
        let rows = nonlocal_condition_rows(&cm, &b, lift.labels(), 1).unwrap();
        assert_eq!(rows.nrows(), 18);
        assert_eq!(rows.ncols(), 18);
        let svd = nalgebra::SVD::new(rows, false, false);
        let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(smin > 1e-8, "beta-composed trace must be invertible");
    }

    #[test]
    fn fiber_average_rows_match_mode_selectors() {
        // The grid-space averaging rows must have exactly the invariant
        // Fourier modes in their row space.
        let n = 3usize;
        let cm = crate::covering::build_covering(n, 9, std::f64::consts::TAU).unwrap();
        let spec = OperatorSpec::scalar(0.0, 4).unwrap();
        let lift = lift_operator(&spec, &cm).unwrap();
        let avg = CMat::from_fn(1, n, |_, _| Complex64::new(1.0 / n as f64, 0.0));
        let rows = nonlocal_condition_rows(&cm, &avg, lift.labels(), 1).unwrap();
        for (col, &(k, _)) in lift.labels().iter().enumerate() {
            let col_norm: f64 = (0..rows.nrows())
                .map(|r| rows[(r, col)].norm_sqr())
                .sum::<f64>()
                .sqrt();
            if k.rem_euclid(n as i64) == 0 {
                assert!(col_norm > 0.5, "invariant mode {k} must be constrained");
            } else {
                assert!(col_norm < 1e-12, "sector mode {k} must be free, got {col_norm:.2e}");
            }
        }
    }

    #[test]
    fn single_sheet_condition_matches_unfolded_classical_problem() {
        // Dirichlet on sheet 0 at t=0 and sheet 1 at t=T balances row
        // counts; index must be 0 and stable, matching the unfolded
        // two-component classical problem (which is the same count by
        // construction of beta).
        let spec = OperatorSpec::scalar(0.2, 4).unwrap();
        let problem = CylinderProblem::product(
            Tangential::Lift { spec, sheets: 2 },
            1.0,
            EndCondition::SingleSheet { sheet: 0 },
            EndCondition::SingleSheet { sheet: 1 },
        );
        let res = numerical_index(&problem, GridParams::new(10), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(res.index, 0);
        assert!(res.stable);
    }

    #[test]
    fn non_elliptic_condition_collapses_the_rank_gap() {
        // Projecting onto the wrong spectral side leaves each decaying mode
        // constrained only through its exponentially small trace at the far
        // end: the singular values form a geometric cascade with no gap
        // anywhere, the numerical signature of Fredholmness failure.
        let spec = OperatorSpec::scalar(0.2, 12).unwrap();
        let problem = CylinderProblem::product(
            Tangential::Base(spec),
            1.0,
            EndCondition::SpectralMinus { eps: 0.05 },
            EndCondition::SpectralPlus { eps: 0.05 },
        );
        match numerical_index(&problem, GridParams::new(16), DEFAULT_RANK_TOL) {
            Ok(res) => assert!(
                !res.stable || res.rank_gap < STABLE_RANK_GAP,
                "wrong-side conditions must not look Fredholm"
            ),
            Err(Error::IllConditionedRank(_)) => {}
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn disk_modes_aps_and_invariant_conditions() {
        // APS kills every holomorphic mode.
        let aps = DiskProblem {
            sheets: 2,
            condition: DiskCondition::ApsPlus { eps: 0.5 },
            k_min: -8,
            k_max: 8,
        };
        let modes = assemble_disk_modes(&aps).unwrap();
        for m in &modes {
            assert_eq!(m.solution_dim, usize::from(m.k >= 0));
            assert_eq!(m.killed, m.k >= 0);
        }
        assert_eq!(disk_index(&aps).unwrap(), 0);

        // Invariant-part condition: even modes killed, odd holomorphic
        // modes survive in the window.
        let inv = DiskProblem {
            sheets: 2,
            condition: DiskCondition::InvariantPartVanishes,
            k_min: -8,
            k_max: 8,
        };
        let modes = assemble_disk_modes(&inv).unwrap();
        let kernel: Vec<i64> = modes.iter().filter(|m| m.in_kernel()).map(|m| m.k).collect();
        assert_eq!(kernel, vec![1, 3, 5, 7]);
        // Not Fredholm-balanced: the window edges keep contributing.
        assert!(disk_index(&inv).is_err());

        // Empty condition: kernel = holomorphic modes in the window.
        let empty = DiskProblem {
            sheets: 2,
            condition: DiskCondition::Empty,
            k_min: -4,
            k_max: 4,
        };
        let count = assemble_disk_modes(&empty)
            .unwrap()
            .iter()
            .filter(|m| m.in_kernel())
            .count();
        assert_eq!(count, 5);
    }

    #[test]
    fn swallowing_eps_is_rejected() {
        // An eps wider than the distance to a genuinely nonzero eigenvalue
        // would misclassify it; both the assembly and the oracle refuse.
        let problem = matrix_problem(
            &[1.0, 0.02, -1.0],
            EndCondition::SpectralPlus { eps: 0.05 },
            EndCondition::SpectralMinus { eps: 0.05 },
        );
        assert!(matches!(
            assemble_cylinder(&problem, GridParams::new(10)),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            mode_index_oracle(&problem),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn oracle_rejects_unbalanced_conditions() {
        let problem = matrix_problem(
            &[3.0, 2.0, 1.0, -1.0, -2.0, -3.0],
            EndCondition::SpectralPlus { eps: 0.1 },
            EndCondition::SpectralPlus { eps: 0.1 },
        );
        assert!(mode_index_oracle(&problem).is_err());
    }
}
