//! Exact small quadratic programs by active-set enumeration.
//!
//! Two closely related problems share one solver core over z = (u, δ) ∈ R⁴:
//!
//! * least-distance projection of a nominal command onto half-spaces ∩ box
//!   (the oracle the fixed-budget projector is verified against), and
//! * the classical CLF-CBF-QP step, where a slack δ relaxes the goal-tracking
//!   constraint while the barrier rows stay hard.
//!
//! Dimension 3 (+1 slack) and at most a dozen constraints make exhaustive
//! enumeration of candidate active sets cheaper and more robust than a
//! general-purpose solver: every subset of ≤ 4 rows is solved as an
//! equality-constrained least-distance system in closed form, and the best
//! feasible candidate is the global optimum.

use crate::acbf::HalfSpace;
use crate::Vec3;
use thiserror::Error;

/// Hard-constraint satisfaction tolerance at the reported solution.
pub const FEAS_TOL: f64 = 1e-9;

/// Pivot threshold below which a candidate active set is treated as linearly
/// dependent and skipped.
const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    /// No candidate satisfied all constraints: the half-space intersection
    /// with the box is empty (conflicting obstacle geometry).
    #[error("QP infeasible: no point satisfies all constraints")]
    Infeasible,
}

/// Goal-tracking (CLF) terms: L_fV + L_gV·u + c·V ≤ δ with slack weight W.
#[derive(Debug, Clone)]
pub struct ClfTerms {
    /// L_gV as a row vector.
    pub grad: Vec3,
    /// L_fV.
    pub drift: f64,
    /// Lyapunov decay rate c > 0.
    pub decay: f64,
    /// Current Lyapunov value V ≥ 0.
    pub value: f64,
    /// Slack weight W > 0 in the objective W·δ².
    pub slack_weight: f64,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Nominal command the objective pulls toward.
    pub nominal: Vec3,
    /// Hard half-space rows A·u ≤ b.
    pub halfspaces: Vec<HalfSpace>,
    /// Box half-width, |u_k| ≤ a_max.
    pub a_max: f64,
    /// Optional soft goal-tracking constraint.
    pub clf: Option<ClfTerms>,
}

/// Constraint indices in [`QpSolution::active_set`] follow the fixed layout:
/// half-spaces `0..m`, box faces `m..m+6` (x⁺ x⁻ y⁺ y⁻ z⁺ z⁻), then the CLF
/// row and `δ ≥ 0` when present.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u_star: Vec3,
    pub delta_star: f64,
    /// ½‖u−u_nom‖² (+ W·δ² when the CLF is present).
    pub objective: f64,
    pub active_set: Vec<usize>,
}

struct Row {
    g: [f64; 4],
    rhs: f64,
}

fn rows_for(p: &QpProblem) -> Vec<Row> {
    let mut rows = Vec::with_capacity(p.halfspaces.len() + 8);
    for hs in &p.halfspaces {
        rows.push(Row {
            g: [hs.normal.x, hs.normal.y, hs.normal.z, 0.0],
            rhs: hs.bound,
        });
    }
    for axis in 0..3 {
        let mut plus = [0.0; 4];
        plus[axis] = 1.0;
        rows.push(Row {
            g: plus,
            rhs: p.a_max,
        });
        let mut minus = [0.0; 4];
        minus[axis] = -1.0;
        rows.push(Row {
            g: minus,
            rhs: p.a_max,
        });
    }
    if let Some(clf) = &p.clf {
        // L_gV·u − δ ≤ −(L_fV + c·V)
        rows.push(Row {
            g: [clf.grad.x, clf.grad.y, clf.grad.z, -1.0],
            rhs: -(clf.drift + clf.decay * clf.value),
        });
        // δ ≥ 0
        rows.push(Row {
            g: [0.0, 0.0, 0.0, -1.0],
            rhs: 0.0,
        });
    }
    rows
}

/// Gaussian elimination with partial pivoting on a k×k system stored in
/// augmented form; returns None when a pivot falls below the singularity
/// threshold.
fn solve_small(k: usize, aug: &mut [[f64; 5]; 4]) -> Option<[f64; 4]> {
    for col in 0..k {
        let mut pivot = col;
        for r in col + 1..k {
            if aug[r][col].abs() > aug[pivot][col].abs() {
                pivot = r;
            }
        }
        if aug[pivot][col].abs() < SINGULAR_TOL {
            return None;
        }
        aug.swap(col, pivot);
        for r in col + 1..k {
            let f = aug[r][col] / aug[col][col];
            for c in col..=k {
                aug[r][c] -= f * aug[col][c];
            }
        }
    }
    let mut x = [0.0; 4];
    for row in (0..k).rev() {
        let mut acc = aug[row][k];
        for c in row + 1..k {
            acc -= aug[row][c] * x[c];
        }
        x[row] = acc / aug[row][row];
    }
    Some(x)
}

/// Minimize ½(z−z0)ᵀH(z−z0) subject to equality on the selected rows, with
/// H = diag(1,1,1,2W). Returns the candidate z.
fn equality_candidate(rows: &[Row], subset: &[usize], z0: [f64; 4], w2: f64) -> Option<[f64; 4]> {
    let k = subset.len();
    if k == 0 {
        return Some(z0);
    }
    let h_inv = [1.0, 1.0, 1.0, 1.0 / w2];
    // Gram = N H⁻¹ Nᵀ, rhs = N z0 − d
    let mut aug = [[0.0f64; 5]; 4];
    for (i, &ri) in subset.iter().enumerate() {
        for (j, &rj) in subset.iter().enumerate() {
            let mut s = 0.0;
            for c in 0..4 {
                s += rows[ri].g[c] * h_inv[c] * rows[rj].g[c];
            }
            aug[i][j] = s;
        }
        let mut s = 0.0;
        for c in 0..4 {
            s += rows[ri].g[c] * z0[c];
        }
        aug[i][k] = s - rows[ri].rhs;
    }
    let nu = solve_small(k, &mut aug)?;
    let mut z = z0;
    for c in 0..4 {
        let mut corr = 0.0;
        for (i, &ri) in subset.iter().enumerate() {
            corr += rows[ri].g[c] * nu[i];
        }
        z[c] -= h_inv[c] * corr;
    }
    Some(z)
}

fn feasible(rows: &[Row], z: &[f64; 4]) -> bool {
    rows.iter().all(|r| {
        let mut s = 0.0;
        for c in 0..4 {
            s += r.g[c] * z[c];
        }
        s <= r.rhs + FEAS_TOL
    })
}

fn objective(z: &[f64; 4], z0: &[f64; 4], w: f64) -> f64 {
    let du = [z[0] - z0[0], z[1] - z0[1], z[2] - z0[2]];
    0.5 * (du[0] * du[0] + du[1] * du[1] + du[2] * du[2]) + w * z[3] * z[3]
}

/// Visit all index subsets of size ≤ max_k.
fn for_each_subset(n: usize, max_k: usize, mut f: impl FnMut(&[usize])) {
    let mut stack = Vec::with_capacity(max_k);
    f(&stack);
    fn rec(
        start: usize,
        n: usize,
        max_k: usize,
        stack: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if stack.len() == max_k {
            return;
        }
        for i in start..n {
            stack.push(i);
            f(stack);
            rec(i + 1, n, max_k, stack, f);
            stack.pop();
        }
    }
    rec(0, n, max_k, &mut stack, &mut f);
}

fn solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    let rows = rows_for(p);
    let w = p.clf.as_ref().map_or(1.0, |c| c.slack_weight);
    let z0 = [p.nominal.x, p.nominal.y, p.nominal.z, 0.0];
    let mut best: Option<([f64; 4], f64)> = None;

    for_each_subset(rows.len(), 4, |subset| {
        if let Some(z) = equality_candidate(&rows, subset, z0, 2.0 * w) {
            if feasible(&rows, &z) {
                let obj = objective(&z, &z0, w);
                if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                    best = Some((z, obj));
                }
            }
        }
    });

    let (z, objective) = best.ok_or(QpError::Infeasible)?;
    let active_set = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let s: f64 = (0..4).map(|c| r.g[c] * z[c]).sum();
            (s - r.rhs).abs() <= 1e-7
        })
        .map(|(i, _)| i)
        .collect();
    Ok(QpSolution {
        u_star: Vec3::new(z[0], z[1], z[2]),
        delta_star: z[3].max(0.0),
        objective,
        active_set,
    })
}

/// Exact minimizer of ½‖u − u_nom‖² over the half-space intersection and box.
///
/// Errs with [`QpError::Infeasible`] when the feasible set is empty; the
/// enumeration itself is the feasibility check, since a nonempty set always
/// yields at least one feasible candidate.
pub fn solve_projection_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    debug_assert!(p.clf.is_none(), "use clf_cbf_qp_step for CLF problems");
    solve(p)
}

/// One CLF-CBF-QP step: minimize ½‖u−u_nom‖² + W·δ² with hard barrier rows,
/// the relaxed goal-tracking row, δ ≥ 0, and the box.
pub fn clf_cbf_qp_step(p: &QpProblem) -> Result<QpSolution, QpError> {
    debug_assert!(p.clf.is_some(), "CLF terms required");
    solve(p)
}
