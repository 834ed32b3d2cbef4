//! Contact forces from the SVD pseudo-inverse of the contact matrix.
//!
//! For the wheels in contact, the next-step gaps are affine in the contact
//! forces, `d = A f + b`, with
//!
//! ```text
//! A = Δt² · W_fᵀ M⁻¹ W_f
//! b = d_prev + Δt · W_fᵀ (v_prev + Δt · M⁻¹ g)
//! ```
//!
//! Rigid contact asks for `d = 0`, so `f = −A# b` where `A#` is the
//! pseudo-inverse with relatively small singular values discarded. `A` is
//! rank-deficient whenever more than three wheels touch, which is the normal
//! case rather than an exception.

use nalgebra::{DMatrix, DVector, MatrixXx3, Vector3};

use crate::error::{Error, Result};
use crate::vehicle::WrenchMatrices;

/// Relative singular-value cutoff: `σ_j / σ_max < epsilon` counts as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdThreshold(f64);

impl SvdThreshold {
    pub const DEFAULT: SvdThreshold = SvdThreshold(1e-10);

    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon < 1.0 {
            Ok(SvdThreshold(epsilon))
        } else {
            Err(Error::InvalidInput(format!(
                "svd threshold must lie in (0, 1), got {epsilon}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for SvdThreshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// One contact solve: `d = A f + b` over the wheels in `active`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Global wheel index of each row/column.
    pub active: Vec<usize>,
    /// Optional `B` with `A = Bᵀ B`; lets the solve take the SVD of `A`
    /// from the thin SVD of `B`.
    pub factor: Option<DMatrix<f64>>,
}

impl ContactProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, active: Vec<usize>) -> Result<Self> {
        let p = b.len();
        if a.nrows() != p || a.ncols() != p || active.len() != p {
            return Err(Error::InvalidInput(format!(
                "contact problem dimensions disagree: A is {}x{}, b has {}, {} active wheels",
                a.nrows(),
                a.ncols(),
                p,
                active.len()
            )));
        }
        Ok(ContactProblem {
            a,
            b,
            active,
            factor: None,
        })
    }

    /// Problem with `A = Bᵀ B`.
    pub fn from_factor(factor: DMatrix<f64>, b: DVector<f64>, active: Vec<usize>) -> Result<Self> {
        if factor.ncols() != b.len() {
            return Err(Error::InvalidInput(format!(
                "factor has {} columns for {} gaps",
                factor.ncols(),
                b.len()
            )));
        }
        let a = factor.transpose() * &factor;
        let mut prob = ContactProblem::new(a, b, active)?;
        prob.factor = Some(factor);
        Ok(prob)
    }

    /// The same problem without its factor, forcing dense SVD solves.
    pub fn dense(&self) -> Self {
        ContactProblem {
            factor: None,
            ..self.clone()
        }
    }

    pub fn empty() -> Self {
        ContactProblem {
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            active: Vec::new(),
            factor: None,
        }
    }

    pub fn size(&self) -> usize {
        self.b.len()
    }

    /// Predicted gaps `A f + b` for the given forces.
    pub fn gaps(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.a * f + &self.b
    }

    fn restricted(&self, keep: &[usize]) -> ContactProblem {
        ContactProblem {
            a: DMatrix::from_fn(keep.len(), keep.len(), |r, c| self.a[(keep[r], keep[c])]),
            b: DVector::from_fn(keep.len(), |r, _| self.b[keep[r]]),
            active: keep.iter().map(|&j| self.active[j]).collect(),
            factor: self.factor.as_ref().map(|f| f.select_columns(keep)),
        }
    }
}

/// Builds `A` and `b` for the active wheels in `w`.
pub fn assemble(
    w: &WrenchMatrices,
    mass_diagonal: &Vector3<f64>,
    v_prev: &Vector3<f64>,
    d_prev: &DVector<f64>,
    dt: f64,
) -> Result<ContactProblem> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let p = w.active.len();
    if w.wf.ncols() != p || d_prev.len() != p {
        return Err(Error::InvalidInput(format!(
            "wrench has {} columns and d_prev {} entries for {} active wheels",
            w.wf.ncols(),
            d_prev.len(),
            p
        )));
    }
    let inv_mass = mass_diagonal.map(|m| 1.0 / m);
    // M⁻¹ W_f, row-scaled.
    let mut scaled = w.wf.clone();
    for r in 0..3 {
        scaled.row_mut(r).scale_mut(inv_mass[r]);
    }
    let free = v_prev + inv_mass.component_mul(&w.gravity) * dt;
    let b = d_prev + (w.wf.transpose() * free) * dt;
    // B = Δt M^(-1/2) W_f, so A = Bᵀ B.
    let mut factor = w.wf.clone();
    for r in 0..3 {
        factor.row_mut(r).scale_mut(dt * inv_mass[r].sqrt());
    }
    ContactProblem::from_factor(factor, b, w.active.clone())
}

/// Thresholded pseudo-inverse `A# = V Σ# Sᵀ` from the SVD `A = S Σ Vᵀ`.
///
/// Reciprocals of zero singular values and of those below
/// `threshold · σ_max` are replaced by zero. Non-finite input gives a
/// matrix of NaN.
pub fn pseudo_inverse(a: &DMatrix<f64>, threshold: SvdThreshold) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let Ok(svd) = m.thin_svd() else {
        return DMatrix::from_element(cols, rows, f64::NAN);
    };
    let (s, sigma, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = sigma.nrows();
    let sigma_max = (0..k).map(|j| sigma[j]).fold(0.0, f64::max);
    let inv: Vec<f64> = (0..k)
        .map(|j| reciprocal(sigma[j], sigma_max, threshold))
        .collect();
    DMatrix::from_fn(cols, rows, |r, c| {
        (0..k)
            .filter(|&j| inv[j] != 0.0)
            .map(|j| v[(r, j)] * inv[j] * s[(c, j)])
            .sum()
    })
}

fn reciprocal(sigma: f64, sigma_max: f64, threshold: SvdThreshold) -> f64 {
    if sigma == 0.0 || sigma_max <= 0.0 || sigma / sigma_max < threshold.value() {
        0.0
    } else {
        1.0 / sigma
    }
}

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 30;

/// `−A# b` for `A = Bᵀ B` with `B` of shape `3×p`.
///
/// One-sided Jacobi rotations orthogonalise the three columns of `Bᵀ`,
/// giving `Bᵀ W = U Σ_B` with orthonormal `U` (p×3). Then
/// `A = U Σ_B² Uᵀ` is the SVD of `A`, and `W` is never needed.
fn factored_solve(
    factor: &DMatrix<f64>,
    b: &DVector<f64>,
    threshold: SvdThreshold,
) -> DVector<f64> {
    let mut cols = MatrixXx3::from_fn(factor.ncols(), |i, j| factor[(j, i)]);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let alpha = cols.column(i).norm_squared();
            let beta = cols.column(j).norm_squared();
            let gamma = cols.column(i).dot(&cols.column(j));
            if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for r in 0..cols.nrows() {
                let (x, y) = (cols[(r, i)], cols[(r, j)]);
                cols[(r, i)] = c * x - s * y;
                cols[(r, j)] = s * x + c * y;
            }
        }
        if !rotated {
            break;
        }
    }
    // Singular values of A are the squared column norms.
    let sigma_a = Vector3::from_fn(|k, _| cols.column(k).norm_squared());
    let sigma_max = sigma_a.max();
    let mut f = DVector::zeros(b.len());
    for k in 0..3 {
        let inv = reciprocal(sigma_a[k], sigma_max, threshold);
        if inv != 0.0 {
            let col = cols.column(k);
            // u_k u_kᵀ b / σ_A with u_k = col / ‖col‖.
            f.axpy(-col.dot(b) * inv * inv, &col, 1.0);
        }
    }
    f
}

fn solve_subset(prob: &ContactProblem, threshold: SvdThreshold) -> DVector<f64> {
    match &prob.factor {
        Some(factor) if factor.ncols() > 3 => factored_solve(factor, &prob.b, threshold),
        _ => -(pseudo_inverse(&prob.a, threshold) * &prob.b),
    }
}

/// Contact forces `f = −A# b`, clamped to be non-negative.
///
/// The returned vector has one entry per row of `prob`; wheels dropped by
/// the clamp carry zero force. Problems carrying their factor are solved
/// through the SVD of the factor, others by a dense SVD of `A`.
pub fn solve_forces(prob: &ContactProblem, threshold: SvdThreshold) -> Result<DVector<f64>> {
    if prob.size() == 0 {
        return Ok(DVector::zeros(0));
    }
    let f = solve_subset(prob, threshold);
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver(format!(
            "non-finite contact forces on a {}-wheel problem",
            prob.size()
        )));
    }
    if f.iter().all(|&x| x >= 0.0) {
        return Ok(f);
    }
    Ok(clamp_active_set(prob, &f, threshold)?.0)
}

/// Makes a pseudo-inverse force solution admissible.
///
/// While any force is negative, the wheel with the most negative force is
/// released and the remaining wheels are re-solved. If a released wheel
/// would then penetrate, the deepest one is taken back and the loaded set is
/// re-solved, stepping back along the segment to the trial solve whenever it
/// turns a force negative (a Lawson–Hanson active set), until no released
/// wheel penetrates. The forces are then redistributed by
/// [`least_norm_refine`]. Returns the forces (zero on released wheels) and
/// the global indices still loaded.
pub fn clamp_active_set(
    prob: &ContactProblem,
    f: &DVector<f64>,
    threshold: SvdThreshold,
) -> Result<(DVector<f64>, Vec<usize>)> {
    let p = prob.size();
    if f.len() != p {
        return Err(Error::InvalidInput(format!(
            "{} forces for a {p}-wheel contact problem",
            f.len()
        )));
    }
    let gap_tol = 1e-9 * prob.b.amax().max(f64::MIN_POSITIVE);
    let mut keep = vec![true; p];
    let mut forces = f.clone();
    let solve_kept = |keep: &[bool]| {
        let idx: Vec<usize> = (0..p).filter(|&j| keep[j]).collect();
        let sub = solve_subset(&prob.restricted(&idx), threshold);
        let mut full = DVector::zeros(p);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = sub[k];
        }
        full
    };

    while let Some(j) = (0..p)
        .filter(|&j| keep[j] && forces[j] < 0.0)
        .min_by(|&i, &j| forces[i].total_cmp(&forces[j]))
    {
        keep[j] = false;
        forces = solve_kept(&keep);
    }

    let max_rounds = 10 * p + 10;
    let mut rounds = 0;
    loop {
        let gaps = prob.gaps(&forces);
        let Some(j) = (0..p)
            .filter(|&j| !keep[j] && gaps[j] < -gap_tol)
            .min_by(|&i, &j| gaps[i].total_cmp(&gaps[j]))
        else {
            break;
        };
        keep[j] = true;
        loop {
            rounds += 1;
            if rounds > max_rounds {
                return Err(Error::Solver(format!(
                    "active-set clamp did not settle within {max_rounds} rounds on a {p}-wheel problem"
                )));
            }
            let trial = solve_kept(&keep);
            let blocking = (0..p)
                .filter(|&k| keep[k] && trial[k] < 0.0)
                .map(|k| (k, forces[k] / (forces[k] - trial[k])))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((k_min, alpha)) = blocking else {
                forces = trial;
                break;
            };
            for k in 0..p {
                if keep[k] {
                    forces[k] += alpha * (trial[k] - forces[k]);
                    if forces[k] <= 0.0 || k == k_min {
                        forces[k] = 0.0;
                        keep[k] = false;
                    }
                }
            }
        }
    }

    let forces = least_norm_refine(prob, &forces, gap_tol, threshold)?;
    let active = (0..p)
        .filter(|&j| forces[j] > 0.0)
        .map(|j| prob.active[j])
        .collect();
    Ok((forces, active))
}

/// Least-norm forces carrying the same contact wrench as `f0`.
///
/// All admissible solutions share the gaps `A f + b`, but with more than
/// three loaded wheels the forces are not unique. This picks the one of
/// least Euclidean norm among `f ≥ 0` supported on the closed wheels with
/// `E f = E f0`, where `E` is the factor `B` when present and `A` otherwise.
/// Primal active set: solve on the support, step back to feasibility when
/// the solve goes negative, and admit the closed wheel with the largest
/// positive multiplier once it does not.
fn least_norm_refine(
    prob: &ContactProblem,
    f0: &DVector<f64>,
    gap_tol: f64,
    threshold: SvdThreshold,
) -> Result<DVector<f64>> {
    let p = prob.size();
    let e = prob.factor.as_ref().unwrap_or(&prob.a);
    let gaps = prob.gaps(f0);
    let closed: Vec<bool> = gaps.iter().map(|&d| d <= gap_tol).collect();
    let target = e * f0;
    let mut f = f0.clone();
    let mut support: Vec<bool> = f0.iter().map(|&x| x > 0.0).collect();
    let max_rounds = 10 * p + 10;

    for _ in 0..max_rounds {
        let idx: Vec<usize> = (0..p).filter(|&j| support[j]).collect();
        if idx.is_empty() {
            return Ok(f);
        }
        let pinv = pseudo_inverse(&e.select_columns(&idx), threshold);
        let trial = &pinv * &target;
        let scale = trial.amax();
        let neg_tol = 1e-12 * scale;
        let blocking = (0..idx.len())
            .filter(|&k| trial[k] < -neg_tol)
            .map(|k| (k, f[idx[k]] / (f[idx[k]] - trial[k])))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((k_min, alpha)) = blocking {
            for (k, &j) in idx.iter().enumerate() {
                f[j] += alpha * (trial[k] - f[j]);
                if f[j] <= 0.0 || k == k_min {
                    f[j] = 0.0;
                    support[j] = false;
                }
            }
            continue;
        }
        for (k, &j) in idx.iter().enumerate() {
            f[j] = trial[k].max(0.0);
        }
        // Multipliers λ with f_S = E_Sᵀ λ.
        let lambda = pinv.transpose() * &trial;
        let entering = (0..p)
            .filter(|&j| closed[j] && !support[j])
            .map(|j| (j, e.column(j).dot(&lambda)))
            .filter(|&(_, mu)| mu > 1e-9 * scale)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match entering {
            Some((j, _)) => support[j] = true,
            None => return Ok(f),
        }
    }
    Err(Error::Solver(format!(
        "least-norm force refinement did not settle within {max_rounds} rounds on a {p}-wheel problem"
    )))
}
