//! Lemke's complementary pivoting method, used as the reference solver for
//! contact forces.
//!
//! Finds `z, w ≥ 0` with `w = M z + q` and `zᵀ w = 0`. The tableau carries an
//! artificial variable `z0` with covering vector `1`; ties in the ratio test
//! are broken lexicographically so degenerate problems (every wheel of a
//! flat contact patch hitting zero at once) cannot cycle.

use nalgebra::{DMatrix, DVector};

use crate::contact::ContactProblem;
use crate::error::{Error, Result};

/// Relative Tikhonov shift added to the contact matrix before the LCP solve.
///
/// `A` has rank at most three, so per-wheel forces are not unique once more
/// than three wheels touch. The shift selects the minimum-norm solution in
/// the limit, which is also what the pseudo-inverse returns.
pub const CONTACT_REGULARIZATION: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl LcpProblem {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if m.nrows() != q.len() || m.ncols() != q.len() {
            return Err(Error::InvalidInput(format!(
                "LCP matrix is {}x{} but q has {} entries",
                m.nrows(),
                m.ncols(),
                q.len()
            )));
        }
        if m.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("LCP data must be finite".into()));
        }
        Ok(LcpProblem { m, q })
    }

    pub fn size(&self) -> usize {
        self.q.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcpStatus {
    Solved,
    RayTermination,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub status: LcpStatus,
    pub pivots: usize,
}

impl LcpSolution {
    /// `zᵀ w`.
    pub fn complementarity(&self) -> f64 {
        self.z.dot(&self.w)
    }
}

/// Default pivot budget, `50 · p`.
pub fn default_max_pivots(p: usize) -> usize {
    50 * p.max(1)
}

struct Tableau {
    n: usize,
    cols: usize,
    data: Vec<f64>,
    /// Variable index held by each row: `w_i = i`, `z_i = n + i`, `z0 = 2n`.
    basis: Vec<usize>,
}

impl Tableau {
    fn new(m: &DMatrix<f64>, q: &DVector<f64>) -> Self {
        let n = q.len();
        let cols = 2 * n + 2;
        let mut data = vec![0.0; n * cols];
        for i in 0..n {
            let row = &mut data[i * cols..(i + 1) * cols];
            row[i] = 1.0;
            for j in 0..n {
                row[n + j] = -m[(i, j)];
            }
            row[2 * n] = -1.0;
            row[2 * n + 1] = q[i];
        }
        Tableau {
            n,
            cols,
            data,
            basis: (0..n).collect(),
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) -> usize {
        let cols = self.cols;
        let p = self.at(r, c);
        for k in 0..cols {
            self.data[r * cols + k] /= p;
        }
        let (before, rest) = self.data.split_at_mut(r * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        for row in before
            .chunks_exact_mut(cols)
            .chain(after.chunks_exact_mut(cols))
        {
            let factor = row[c];
            if factor != 0.0 {
                for (x, &pr) in row.iter_mut().zip(pivot_row.iter()) {
                    *x -= factor * pr;
                }
            }
        }
        std::mem::replace(&mut self.basis[r], c)
    }

    fn complement(&self, var: usize) -> usize {
        if var < self.n {
            var + self.n
        } else {
            var - self.n
        }
    }

    /// Minimum-ratio row for entering column `c`, lexicographic on ties.
    fn leaving_row(&self, c: usize) -> Option<usize> {
        let aux = 2 * self.n;
        let mut ties: Vec<usize> = Vec::new();
        let mut best = f64::INFINITY;
        for r in 0..self.n {
            let e = self.at(r, c);
            if e <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(r) / e;
            if ratio < best - TIE_TOL {
                best = ratio;
                ties.clear();
                ties.push(r);
            } else if ratio <= best + TIE_TOL {
                ties.push(r);
                best = best.min(ratio);
            }
        }
        ties.retain(|&r| self.rhs(r) / self.at(r, c) <= best + TIE_TOL);
        if ties.len() <= 1 {
            return ties.first().copied();
        }
        if let Some(&r) = ties.iter().find(|&&r| self.basis[r] == aux) {
            return Some(r);
        }
        for k in 0..self.n {
            let score = |r: usize| self.at(r, k) / self.at(r, c);
            let min = ties.iter().map(|&r| score(r)).fold(f64::INFINITY, f64::min);
            ties.retain(|&r| score(r) <= min + TIE_TOL);
            if ties.len() == 1 {
                break;
            }
        }
        ties.first().copied()
    }
}

/// Solves `prob` by Lemke's method with at most `max_pivots` pivots.
///
/// Ray termination and the pivot limit are reported through
/// [`LcpSolution::status`]; `z` and `w` then hold the last basic point.
pub fn lemke_solve(prob: &LcpProblem, max_pivots: usize) -> LcpSolution {
    let n = prob.size();
    if prob.q.iter().all(|&x| x >= 0.0) {
        return LcpSolution {
            z: DVector::zeros(n),
            w: prob.q.clone(),
            status: LcpStatus::Solved,
            pivots: 0,
        };
    }

    // Scale to unit magnitudes so fixed tolerances are meaningful.
    let m_scale = prob.m.amax().max(f64::MIN_POSITIVE);
    let q_scale = prob.q.amax();
    let m = &prob.m / m_scale;
    let q = &prob.q / q_scale;

    let mut t = Tableau::new(&m, &q);
    let aux = 2 * n;

    // z0 enters at the most negative q; among equal values the last row keeps
    // every row lexicographically positive.
    let q_min = q.min();
    let first = (0..n)
        .rev()
        .find(|&i| q[i] <= q_min + TIE_TOL)
        .expect("q has a minimum");
    let mut leaving = t.pivot(first, aux);
    let mut pivots = 1;
    let mut status = LcpStatus::IterationLimit;

    while pivots < max_pivots {
        let entering = t.complement(leaving);
        let Some(r) = t.leaving_row(entering) else {
            status = LcpStatus::RayTermination;
            break;
        };
        leaving = t.pivot(r, entering);
        pivots += 1;
        if leaving == aux {
            status = LcpStatus::Solved;
            break;
        }
    }

    let mut z = DVector::zeros(n);
    for (r, &var) in t.basis.iter().enumerate() {
        if (n..2 * n).contains(&var) {
            z[var - n] = t.rhs(r).max(0.0);
        }
    }
    z *= q_scale / m_scale;
    let w = &prob.m * &z + &prob.q;
    LcpSolution {
        z,
        w,
        status,
        pivots,
    }
}

/// The contact problem as an LCP: forces are `z`, next-step gaps are `w`.
pub fn contact_lcp(prob: &ContactProblem, regularization: f64) -> LcpProblem {
    let p = prob.size();
    let shift = regularization * prob.a.diagonal().amax();
    let m = &prob.a + DMatrix::<f64>::identity(p, p) * shift;
    LcpProblem {
        m,
        q: prob.b.clone(),
    }
}

/// Gap below which a wheel counts as closed, relative to `max |b|`.
const CLOSED_GAP_TOL: f64 = 1e-9;

/// LCP of the least-norm `z ≥ 0` with `E z = c`.
///
/// Variables are `(z, λ⁺, λ⁻)`; the rows are the stationarity condition
/// `z − Eᵀ(λ⁺ − λ⁻) ≥ 0` followed by `E z ≥ c` and `−E z ≥ −c`.
pub fn least_norm_lcp(e: &DMatrix<f64>, c: &DVector<f64>) -> LcpProblem {
    let (r, t) = e.shape();
    let n = t + 2 * r;
    let mut m = DMatrix::zeros(n, n);
    let mut q = DVector::zeros(n);
    for k in 0..t {
        m[(k, k)] = 1.0;
        for i in 0..r {
            m[(k, t + i)] = -e[(i, k)];
            m[(k, t + r + i)] = e[(i, k)];
            m[(t + i, k)] = e[(i, k)];
            m[(t + r + i, k)] = -e[(i, k)];
        }
    }
    for i in 0..r {
        q[t + i] = -c[i];
        q[t + r + i] = c[i];
    }
    LcpProblem { m, q }
}

fn solved(sol: LcpSolution, stage: &str) -> Result<DVector<f64>> {
    match sol.status {
        LcpStatus::Solved => Ok(sol.z),
        other => Err(Error::Solver(format!(
            "Lemke's method ({stage}) stopped with {other:?} after {} pivots",
            sol.pivots
        ))),
    }
}

/// One Lemke solve of the shifted contact LCP.
pub fn lemke_contact_forces(prob: &ContactProblem) -> Result<DVector<f64>> {
    if prob.size() == 0 {
        return Ok(DVector::zeros(0));
    }
    let lcp = contact_lcp(prob, CONTACT_REGULARIZATION);
    solved(
        lemke_solve(&lcp, default_max_pivots(prob.size())),
        "contact",
    )
}

/// Contact forces from Lemke's method.
///
/// The shifted solve fixes the contact wrench `E z`. A second Lemke solve
/// then picks the least-norm forces with that wrench over the closed wheels.
pub fn lcp_contact_forces(prob: &ContactProblem) -> Result<DVector<f64>> {
    let p = prob.size();
    let z1 = lemke_contact_forces(prob)?;
    if z1.iter().all(|&z| z == 0.0) {
        return Ok(z1);
    }
    let gaps = prob.gaps(&z1);
    let tol = CLOSED_GAP_TOL * prob.b.amax();
    let closed: Vec<usize> = (0..p).filter(|&j| gaps[j] <= tol || z1[j] > 0.0).collect();
    let e = prob.factor.as_ref().unwrap_or(&prob.a);
    let e = e.select_columns(&closed) / e.amax();
    let c = &e * DVector::from_iterator(closed.len(), closed.iter().map(|&j| z1[j]));
    let lcp = least_norm_lcp(&e, &c);
    let zs = solved(
        lemke_solve(&lcp, default_max_pivots(lcp.size())),
        "least-norm selection",
    )?;
    let mut z = DVector::zeros(p);
    for (k, &j) in closed.iter().enumerate() {
        z[j] = zs[k];
    }
    Ok(z)
}
