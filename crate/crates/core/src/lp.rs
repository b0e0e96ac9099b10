//! Dense linear programming: a two-phase primal simplex with Bland's-rule
//! fallback, and the classical central-cut ellipsoid method driven by a
//! separation oracle.
//!
//! The simplex works on a dense tableau. Instances in this crate are small
//! (tens to a few hundred variables), so determinism and simplicity beat
//! sparse machinery: Dantzig pricing with a stall detector that switches to
//! Bland's rule guarantees termination, and the artificial columns are kept
//! through phase two so the inverse basis (and hence the duals and Farkas
//! certificates) can be read straight off the final tableau.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

/// A linear program over variables with (possibly infinite) box bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// Convenience constructor with all variables in `[0, +inf)`.
    pub fn nonneg(sense: Sense, objective: Vec<f64>, rows: Vec<Row>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Largest violation of rows and bounds at a point.
    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let gap = match row.rel {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

/// Result of a solve. Duals follow the Lagrangian convention for the
/// *original* orientation: for a minimization, `y_i >= 0` on `>=` rows,
/// `y_i <= 0` on `<=` rows, free on equalities, and the objective satisfies
/// `value = sum_i y_i b_i + bound terms`. For a maximization the signs flip.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal {
        value: f64,
        point: Vec<f64>,
        duals: Vec<f64>,
    },
    /// Infeasible, with row multipliers `y` proving it: aggregating the rows
    /// with these weights yields an inequality no point within the variable
    /// bounds can satisfy (see [`farkas_is_valid`]).
    Infeasible {
        farkas: Vec<f64>,
    },
    Unbounded {
        ray: Vec<f64>,
    },
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("inconsistent LP dimensions")]
    BadShape,
    #[error("numerical failure in LP solve: {0}")]
    Numerical(String),
}

const EPS_PIVOT: f64 = 1e-9;
const EPS_COST: f64 = 1e-9;
const EPS_FEAS: f64 = 1e-7;
/// Iterations of non-improvement before switching to Bland's rule.
const STALL_LIMIT: usize = 60;

/// Check a Farkas certificate: with multipliers `y` (respecting the row-sign
/// convention), the aggregated inequality must be violated by every point in
/// the variable box.
pub fn farkas_is_valid(lp: &LinearProgram, y: &[f64]) -> bool {
    if y.len() != lp.rows.len() {
        return false;
    }
    // Aggregate sum_i y_i (a_i' x) >= sum_i y_i b_i must hold for any feasible
    // x, which requires y_i >= 0 on >= rows and y_i <= 0 on <= rows.
    for (yi, row) in y.iter().zip(&lp.rows) {
        match row.rel {
            Relation::Ge if *yi < -EPS_FEAS => return false,
            Relation::Le if *yi > EPS_FEAS => return false,
            _ => {}
        }
    }
    let n = lp.num_vars();
    let mut sup = 0.0;
    for j in 0..n {
        let coeff: f64 = y.iter().zip(&lp.rows).map(|(yi, r)| yi * r.coeffs[j]).sum();
        // sup over x_j in [l_j, u_j] of coeff * x_j
        let term = if coeff > EPS_FEAS {
            if lp.upper[j].is_infinite() {
                return false;
            }
            coeff * lp.upper[j]
        } else if coeff < -EPS_FEAS {
            if lp.lower[j].is_infinite() {
                return false;
            }
            coeff * lp.lower[j]
        } else {
            0.0
        };
        sup += term;
    }
    let rhs: f64 = y.iter().zip(&lp.rows).map(|(yi, r)| yi * r.rhs).sum();
    sup < rhs - 1e-9
}

// ---------------------------------------------------------------------------
// Standard-form transformation
// ---------------------------------------------------------------------------

/// How an original variable maps to the standard-form column(s).
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lower + u  (column k)
    Shifted { col: usize, lower: f64 },
    /// x = upper - u  (column k)
    Flipped { col: usize, upper: f64 },
    /// x = u_plus - u_minus (columns k, k+1)
    Split { pos: usize, neg: usize },
}

struct Standard {
    ncols: usize,
    /// One entry per kept row: (original row index, scale +-1 applied).
    row_map: Vec<(usize, f64)>,
    /// a[r][c] coefficients of the equality system, rhs >= 0.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Standard-form objective (always minimization).
    c: Vec<f64>,
    /// Constant offset from variable shifting (original orientation).
    offset: f64,
    var_map: Vec<VarMap>,
    obj_scale: f64,
}

fn standardize(lp: &LinearProgram) -> Result<Standard, LpError> {
    let n = lp.num_vars();
    if lp.lower.len() != n || lp.upper.len() != n || lp.rows.iter().any(|r| r.coeffs.len() != n) {
        return Err(LpError::BadShape);
    }
    if lp
        .objective
        .iter()
        .chain(lp.rows.iter().flat_map(|r| r.coeffs.iter().chain([&r.rhs])))
        .any(|v| !v.is_finite())
    {
        return Err(LpError::Numerical("non-finite coefficient".into()));
    }

    let obj_scale = match lp.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };

    let mut var_map = Vec::with_capacity(n);
    let mut ncols = 0usize;
    // Extra rows produced by finite upper bounds on shifted variables.
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // (col, ub gap)
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            var_map.push(VarMap::Shifted {
                col: ncols,
                lower: l,
            });
            if u.is_finite() {
                extra_rows.push((ncols, u - l));
            }
            ncols += 1;
        } else if u.is_finite() {
            var_map.push(VarMap::Flipped {
                col: ncols,
                upper: u,
            });
            ncols += 1;
        } else {
            var_map.push(VarMap::Split {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }

    let mut c = vec![0.0; ncols];
    let mut offset = 0.0;
    for j in 0..n {
        let cj = lp.objective[j] * obj_scale;
        match var_map[j] {
            VarMap::Shifted { col, lower } => {
                c[col] += cj;
                offset += cj * lower;
            }
            VarMap::Flipped { col, upper } => {
                c[col] -= cj;
                offset += cj * upper;
            }
            VarMap::Split { pos, neg } => {
                c[pos] += cj;
                c[neg] -= cj;
            }
        }
    }

    // Build equality rows with slack columns appended later; first express
    // each original row over the standard columns and adjust the rhs.
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut row_map = Vec::new();
    let mut slack_specs: Vec<(usize, f64)> = Vec::new(); // (row index, sign)
    for (ri, row) in lp.rows.iter().enumerate() {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for j in 0..n {
            let aij = row.coeffs[j];
            if aij == 0.0 {
                continue;
            }
            match var_map[j] {
                VarMap::Shifted { col, lower } => {
                    coeffs[col] += aij;
                    rhs -= aij * lower;
                }
                VarMap::Flipped { col, upper } => {
                    coeffs[col] -= aij;
                    rhs -= aij * upper;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += aij;
                    coeffs[neg] -= aij;
                }
            }
        }
        let slack_sign = match row.rel {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => 0.0,
        };
        let scale = if rhs < 0.0 { -1.0 } else { 1.0 };
        if scale < 0.0 {
            for v in &mut coeffs {
                *v = -*v;
            }
            rhs = -rhs;
        }
        if slack_sign != 0.0 {
            slack_specs.push((a.len(), slack_sign * scale));
        }
        a.push(coeffs);
        b.push(rhs);
        row_map.push((ri, scale));
    }
    for (col, gap) in extra_rows {
        let mut coeffs = vec![0.0; ncols];
        coeffs[col] = 1.0;
        let (coeffs, rhs, scale) = if gap < 0.0 {
            let mut c2 = coeffs;
            c2[col] = -1.0;
            (c2, -gap, -1.0)
        } else {
            (coeffs, gap, 1.0)
        };
        slack_specs.push((a.len(), scale));
        a.push(coeffs);
        b.push(rhs);
        row_map.push((usize::MAX, scale)); // synthetic bound row
    }

    // Append slack columns.
    let nslack = slack_specs.len();
    for row in &mut a {
        row.extend(std::iter::repeat_n(0.0, nslack));
    }
    c.extend(std::iter::repeat_n(0.0, nslack));
    for (k, &(ri, sign)) in slack_specs.iter().enumerate() {
        a[ri][ncols + k] = sign;
    }

    Ok(Standard {
        ncols: ncols + nslack,
        row_map,
        a,
        b,
        c,
        offset,
        var_map,
        obj_scale,
    })
}

// ---------------------------------------------------------------------------
// Tableau simplex
// ---------------------------------------------------------------------------

struct Tableau {
    /// `rows x (ncols + nart + 1)`, last column is the rhs.
    t: Vec<Vec<f64>>,
    /// Reduced-cost row, same width.
    z: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    nart: usize,
    /// Columns that may never enter the basis (artificials in phase two).
    banned: Vec<bool>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.ncols + self.nart + 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let piv = self.t[row][col];
        let inv = 1.0 / piv;
        for v in &mut self.t[row] {
            *v *= inv;
        }
        self.t[row][col] = 1.0;
        for r in 0..self.t.len() {
            if r == row {
                continue;
            }
            let factor = self.t[r][col];
            if factor != 0.0 {
                for k in 0..w {
                    self.t[r][k] -= factor * self.t[row][k];
                }
                self.t[r][col] = 0.0;
            }
        }
        let factor = self.z[col];
        if factor != 0.0 {
            for k in 0..w {
                self.z[k] -= factor * self.t[row][k];
            }
            self.z[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Run the simplex loop on the current objective row. Returns the
    /// entering column on unboundedness.
    fn optimize(&mut self, iter_cap: usize) -> Result<Option<usize>, LpError> {
        let mut stall = 0usize;
        let mut best = f64::INFINITY;
        let mut bland = false;
        for _ in 0..iter_cap {
            let enter = self.choose_entering(bland);
            let Some(col) = enter else {
                return Ok(None);
            };
            let Some(row) = self.ratio_test(col) else {
                return Ok(Some(col));
            };
            self.pivot(row, col);
            let obj = -self.z[self.width() - 1];
            if obj < best - EPS_COST {
                best = obj;
                stall = 0;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            }
        }
        Err(LpError::Numerical(
            "simplex iteration cap exceeded (cycling?)".into(),
        ))
    }

    fn choose_entering(&self, bland: bool) -> Option<usize> {
        let w = self.width() - 1;
        if bland {
            (0..w).find(|&j| !self.banned[j] && self.z[j] < -EPS_COST)
        } else {
            let mut best = None;
            let mut best_val = -EPS_COST;
            for j in 0..w {
                if !self.banned[j] && self.z[j] < best_val {
                    best_val = self.z[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    fn ratio_test(&self, col: usize) -> Option<usize> {
        let rhs_col = self.width() - 1;
        let mut best: Option<(f64, usize, usize)> = None; // (ratio, basis var, row)
        for r in 0..self.t.len() {
            let a = self.t[r][col];
            if a > EPS_PIVOT {
                let ratio = self.t[r][rhs_col] / a;
                let key = (ratio, self.basis[r], r);
                match best {
                    None => best = Some(key),
                    Some((br, bv, _)) => {
                        if ratio < br - EPS_PIVOT || (ratio < br + EPS_PIVOT && self.basis[r] < bv)
                        {
                            best = Some(key);
                        }
                    }
                }
            }
        }
        best.map(|(_, _, r)| r)
    }

    fn solution(&self) -> Vec<f64> {
        let rhs_col = self.width() - 1;
        let mut x = vec![0.0; self.ncols];
        for (r, &bj) in self.basis.iter().enumerate() {
            if bj < self.ncols {
                x[bj] = self.t[r][rhs_col];
            }
        }
        x
    }

    /// `y_i = c_B B^{-1} e_i`, read from the reduced costs of the artificial
    /// columns (whose cost is zero in the current objective row).
    fn duals(&self) -> Vec<f64> {
        (0..self.nart).map(|i| -self.z[self.ncols + i]).collect()
    }
}

/// Solve a linear program with the two-phase dense simplex.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    let std_form = standardize(lp)?;
    let nrows = std_form.a.len();
    let ncols = std_form.ncols;
    let nart = nrows;

    // Phase-one tableau: [A | I | b], objective = sum of artificials.
    let mut t = Vec::with_capacity(nrows);
    for (r, row) in std_form.a.iter().enumerate() {
        let mut full = Vec::with_capacity(ncols + nart + 1);
        full.extend_from_slice(row);
        for k in 0..nart {
            full.push(if k == r { 1.0 } else { 0.0 });
        }
        full.push(std_form.b[r]);
        t.push(full);
    }
    // Reduced costs for phase one: c_j - sum over rows of a_rj.
    let mut z = vec![0.0; ncols + nart + 1];
    for j in 0..ncols {
        let col_sum: f64 = (0..nrows).map(|r| t[r][j]).sum();
        z[j] = -col_sum;
    }
    let rhs_sum: f64 = std_form.b.iter().sum();
    z[ncols + nart] = -rhs_sum;
    let mut tab = Tableau {
        t,
        z,
        basis: (ncols..ncols + nart).collect(),
        ncols,
        nart,
        banned: vec![false; ncols + nart],
    };

    let iter_cap = 5000 + 200 * (nrows + ncols);
    if tab.optimize(iter_cap)?.is_some() {
        return Err(LpError::Numerical("phase one unbounded".into()));
    }
    let phase1_obj = -tab.z[tab.width() - 1];
    if phase1_obj > EPS_FEAS {
        // Infeasible: the phase-one duals y_i = 1 - reduced_cost(artificial i)
        // satisfy y'A <= 0 and y'b > 0; undoing the row scaling gives
        // multipliers in the validator's aggregation convention.
        let mut farkas = vec![0.0; lp.rows.len()];
        for (k, &(orig, scale)) in std_form.row_map.iter().enumerate() {
            if orig != usize::MAX {
                let y_k = 1.0 - tab.z[ncols + k];
                farkas[orig] += scale * y_k;
            }
        }
        return Ok(LpOutcome::Infeasible { farkas });
    }

    // Drive any artificial still basic (at value ~0) out of the basis.
    for r in 0..nrows {
        if tab.basis[r] >= ncols {
            if let Some(col) = (0..ncols).find(|&j| tab.t[r][j].abs() > 1e-7) {
                tab.pivot(r, col);
            }
            // A row with no structural pivot is redundant; its artificial
            // stays basic at zero, which is harmless once banned below.
        }
    }

    // Phase two: swap in the real objective, ban artificials from entering.
    for k in 0..nart {
        tab.banned[ncols + k] = true;
    }
    let w = tab.width();
    let mut z = vec![0.0; w];
    z[..ncols].copy_from_slice(&std_form.c);
    // Make reduced costs consistent with the current basis.
    for r in 0..nrows {
        let bj = tab.basis[r];
        let cb = if bj < ncols { std_form.c[bj] } else { 0.0 };
        if cb != 0.0 {
            for k in 0..w {
                z[k] -= cb * tab.t[r][k];
            }
        }
    }
    for r in 0..nrows {
        z[tab.basis[r]] = 0.0;
    }
    tab.z = z;

    if let Some(enter_col) = tab.optimize(iter_cap)? {
        // Unbounded: build the improving ray in original coordinates.
        let mut dir_std = vec![0.0; ncols];
        if enter_col < ncols {
            dir_std[enter_col] = 1.0;
        }
        for r in 0..nrows {
            if tab.basis[r] < ncols {
                dir_std[tab.basis[r]] = -tab.t[r][enter_col];
            }
        }
        let mut ray = vec![0.0; lp.num_vars()];
        for (j, vm) in std_form.var_map.iter().enumerate() {
            ray[j] = match *vm {
                VarMap::Shifted { col, .. } => dir_std[col],
                VarMap::Flipped { col, .. } => -dir_std[col],
                VarMap::Split { pos, neg } => dir_std[pos] - dir_std[neg],
            };
        }
        return Ok(LpOutcome::Unbounded { ray });
    }

    let x_std = tab.solution();
    let mut point = vec![0.0; lp.num_vars()];
    for (j, vm) in std_form.var_map.iter().enumerate() {
        point[j] = match *vm {
            VarMap::Shifted { col, lower } => lower + x_std[col],
            VarMap::Flipped { col, upper } => upper - x_std[col],
            VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
        };
    }
    let value_std = -tab.z[tab.width() - 1] + std_form.offset;
    let value = value_std * std_form.obj_scale;

    let y_std = tab.duals();
    let mut duals = vec![0.0; lp.rows.len()];
    for (k, &(orig, scale)) in std_form.row_map.iter().enumerate() {
        if orig != usize::MAX {
            // Standard-form dual of the scaled equality row; undo the scale
            // and the min/max flip.
            duals[orig] += scale * y_std[k] * std_form.obj_scale;
        }
    }

    Ok(LpOutcome::Optimal {
        value,
        point,
        duals,
    })
}

// ---------------------------------------------------------------------------
// Ellipsoid method
// ---------------------------------------------------------------------------

/// A violated halfspace `normal' x <= rhs` returned by a separation oracle:
/// every feasible point satisfies it, the queried point does not.
#[derive(Debug, Clone)]
pub struct Cut {
    pub normal: Vec<f64>,
    pub rhs: f64,
}

pub enum Separation {
    Feasible,
    Violated(Cut),
}

/// The oracle contract of the ellipsoid method: either accept the point or
/// return a halfspace separating it from the feasible region.
pub trait SeparationOracle {
    fn separate(&mut self, x: &[f64]) -> Separation;
}

impl<F: FnMut(&[f64]) -> Separation> SeparationOracle for F {
    fn separate(&mut self, x: &[f64]) -> Separation {
        self(x)
    }
}

#[derive(Debug)]
pub enum EllipsoidOutcome {
    Point(Vec<f64>),
    /// Volume criterion met without an accepted point; carries every cut the
    /// oracle produced along the way.
    Empty {
        history: Vec<Cut>,
    },
}

#[derive(Debug, Error)]
pub enum EllipsoidError {
    #[error("ellipsoid method indeterminate after {iterations} iterations")]
    Indeterminate {
        iterations: usize,
        history: Vec<Cut>,
    },
    #[error("numerical failure in ellipsoid update: {0}")]
    Numerical(String),
}

/// Default iteration budget: `ceil(2 dim^2 ln(radius / tol)) + dim`.
pub fn ellipsoid_default_budget(dim: usize, radius: f64, tol: f64) -> usize {
    let d = dim as f64;
    (2.0 * d * d * (radius / tol).ln()).ceil() as usize + dim
}

/// Central-cut ellipsoid feasibility search inside a ball of the given
/// radius. Concludes `Empty` when the ellipsoid volume falls below that of a
/// ball of radius `tol`.
///
/// The shape matrix is kept in factored form `P = B B'`, so the cut width
/// `a' P a = ||B' a||^2` is a sum of squares: the update stays positive
/// semidefinite under extreme anisotropy, where a dense `P` update loses
/// definiteness to cancellation.
pub fn ellipsoid_feasibility(
    dim: usize,
    initial_radius: f64,
    oracle: &mut dyn SeparationOracle,
    max_iters: usize,
    tol: f64,
) -> Result<EllipsoidOutcome, EllipsoidError> {
    assert!(dim >= 1);
    let n = dim as f64;
    let mut center = vec![0.0; dim];
    let mut b = vec![0.0; dim * dim];
    for i in 0..dim {
        b[i * dim + i] = initial_radius;
    }
    let mut log_det = 2.0 * n * initial_radius.ln();
    let empty_threshold = 2.0 * n * tol.ln();
    let mut history = Vec::new();

    // Volume shrink per cut; in one dimension the interval halves.
    let (det_factor, dilate_sqrt, kappa) = if dim == 1 {
        (0.25f64.ln(), 0.5, 0.5)
    } else {
        let dilate = n * n / (n * n - 1.0);
        let kappa = 1.0 - ((n - 1.0) / (n + 1.0)).sqrt();
        (
            n * dilate.ln() + ((n - 1.0) / (n + 1.0)).ln(),
            dilate.sqrt(),
            kappa,
        )
    };

    for iter in 0..max_iters {
        match oracle.separate(&center) {
            Separation::Feasible => return Ok(EllipsoidOutcome::Point(center)),
            Separation::Violated(cut) => {
                debug_assert_eq!(cut.normal.len(), dim);
                let norm: f64 = cut.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= 0.0 || !norm.is_finite() {
                    return Err(EllipsoidError::Numerical(format!(
                        "zero cut normal at iteration {iter}"
                    )));
                }
                let a: Vec<f64> = cut.normal.iter().map(|v| v / norm).collect();
                let cut_rhs = cut.rhs / norm;
                history.push(cut);
                // u = B' a; the ellipsoid's width along the cut is ||u||.
                let mut u = vec![0.0; dim];
                for j in 0..dim {
                    let mut s = 0.0;
                    for i in 0..dim {
                        s += b[i * dim + j] * a[i];
                    }
                    u[j] = s;
                }
                let unorm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                // The ellipsoid always contains the remaining feasible
                // candidates. When its width along the cut normal is below
                // the center's violation, every candidate violates the cut:
                // the region is empty. This also ends runs whose width has
                // collapsed to the cancellation floor of the matrix scale.
                let violation: f64 =
                    a.iter().zip(&center).map(|(ai, ci)| ai * ci).sum::<f64>() - cut_rhs;
                if violation > 0.0 && unorm <= violation {
                    return Ok(EllipsoidOutcome::Empty { history });
                }
                if unorm <= 1e-280 || !unorm.is_finite() {
                    return Err(EllipsoidError::Indeterminate {
                        iterations: iter,
                        history,
                    });
                }
                for v in &mut u {
                    *v /= unorm;
                }
                // bu = B u (the cut direction in ambient coordinates).
                let mut bu = vec![0.0; dim];
                for i in 0..dim {
                    let mut s = 0.0;
                    for j in 0..dim {
                        s += b[i * dim + j] * u[j];
                    }
                    bu[i] = s;
                }
                let step = if dim == 1 { 0.5 } else { 1.0 / (n + 1.0) };
                for i in 0..dim {
                    center[i] -= step * bu[i];
                }
                // B <- sqrt(dilate) (B - kappa (B u) u')
                for i in 0..dim {
                    for j in 0..dim {
                        b[i * dim + j] = dilate_sqrt * (b[i * dim + j] - kappa * bu[i] * u[j]);
                    }
                }
                log_det += det_factor;
                if log_det < empty_threshold {
                    return Ok(EllipsoidOutcome::Empty { history });
                }
            }
        }
    }
    Err(EllipsoidError::Indeterminate {
        iterations: max_iters,
        history,
    })
}

/// Build a separation oracle from an explicit constraint list (used for
/// debugging and cross-validation).
pub fn oracle_from_rows(rows: Vec<Row>) -> impl FnMut(&[f64]) -> Separation {
    move |x: &[f64]| {
        for row in &rows {
            let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let violated = match row.rel {
                Relation::Le => lhs > row.rhs + 1e-9,
                Relation::Ge => lhs < row.rhs - 1e-9,
                Relation::Eq => (lhs - row.rhs).abs() > 1e-9,
            };
            if violated {
                let (normal, rhs) = match row.rel {
                    Relation::Le => (row.coeffs.clone(), row.rhs),
                    Relation::Ge => (row.coeffs.iter().map(|v| -v).collect(), -row.rhs),
                    Relation::Eq => {
                        if lhs > row.rhs {
                            (row.coeffs.clone(), row.rhs)
                        } else {
                            (row.coeffs.iter().map(|v| -v).collect(), -row.rhs)
                        }
                    }
                };
                return Separation::Violated(Cut { normal, rhs });
            }
        }
        Separation::Feasible
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Row {
        Row { coeffs, rel, rhs }
    }

    #[test]
    fn max_bounded_single_var() {
        let lp = LinearProgram::nonneg(
            Sense::Max,
            vec![1.0],
            vec![row(vec![1.0], Relation::Le, 3.0)],
        );
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal { value, point, .. } => {
                assert!((value - 3.0).abs() < 1e-9);
                assert!((point[0] - 3.0).abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn t1_min_payment_lp() {
        // min p1 s.t. p1 - 0.5 >= p0, p >= 0  ->  value 0.5
        let lp = LinearProgram::nonneg(
            Sense::Min,
            vec![0.0, 1.0],
            vec![row(vec![-1.0, 1.0], Relation::Ge, 0.5)],
        );
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal { value, point, .. } => {
                assert!((value - 0.5).abs() < 1e-9);
                assert!(point[0].abs() < 1e-9);
                assert!((point[1] - 0.5).abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn infeasible_yields_valid_farkas() {
        let lp = LinearProgram::nonneg(
            Sense::Max,
            vec![0.0],
            vec![
                row(vec![1.0], Relation::Le, 0.0),
                row(vec![1.0], Relation::Ge, 1.0),
            ],
        );
        match solve_lp(&lp).unwrap() {
            LpOutcome::Infeasible { farkas } => {
                assert!(farkas_is_valid(&lp, &farkas), "certificate {farkas:?}");
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn unbounded_detected_with_ray() {
        let lp = LinearProgram::nonneg(
            Sense::Max,
            vec![1.0, 0.0],
            vec![row(vec![0.0, 1.0], Relation::Le, 1.0)],
        );
        match solve_lp(&lp).unwrap() {
            LpOutcome::Unbounded { ray } => {
                assert!(ray[0] > 0.5);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x + y  s.t. x + y = 2, x - y = 0, x,y free -> x=y=1, value 2
        let lp = LinearProgram {
            sense: Sense::Min,
            objective: vec![1.0, 1.0],
            rows: vec![
                row(vec![1.0, 1.0], Relation::Eq, 2.0),
                row(vec![1.0, -1.0], Relation::Eq, 0.0),
            ],
            lower: vec![f64::NEG_INFINITY; 2],
            upper: vec![f64::INFINITY; 2],
        };
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal { value, point, .. } => {
                assert!((value - 2.0).abs() < 1e-9);
                assert!((point[0] - 1.0).abs() < 1e-9);
                assert!((point[1] - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn duals_satisfy_strong_duality_on_transport() {
        // A tiny transportation problem with known optimum 14:
        // supplies (2,3), demands (2,3), costs [[1,4],[2,3]] -> wait, solve
        // and check value == dual objective instead of pinning by hand.
        let lp = LinearProgram::nonneg(
            Sense::Min,
            vec![1.0, 4.0, 2.0, 3.0],
            vec![
                row(vec![1.0, 1.0, 0.0, 0.0], Relation::Eq, 2.0),
                row(vec![0.0, 0.0, 1.0, 1.0], Relation::Eq, 3.0),
                row(vec![1.0, 0.0, 1.0, 0.0], Relation::Eq, 2.0),
                row(vec![0.0, 1.0, 0.0, 1.0], Relation::Eq, 3.0),
            ],
        );
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal {
                value,
                duals,
                point,
            } => {
                assert!(lp.feasibility_residual(&point) <= 1e-7);
                let dual_obj: f64 = duals.iter().zip(&lp.rows).map(|(y, r)| y * r.rhs).sum();
                assert!(
                    (value - dual_obj).abs() < 1e-6,
                    "value {value} != dual objective {dual_obj}"
                );
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn ellipsoid_finds_point_in_box() {
        let rows: Vec<Row> = (0..2)
            .flat_map(|i| {
                let mut lo = vec![0.0, 0.0];
                let mut hi = vec![0.0, 0.0];
                lo[i] = 1.0;
                hi[i] = 1.0;
                [row(lo, Relation::Ge, -1.0), row(hi, Relation::Le, 1.0)]
            })
            .collect();
        let mut oracle = oracle_from_rows(rows);
        match ellipsoid_feasibility(2, 10.0, &mut oracle, 10_000, 1e-4).unwrap() {
            EllipsoidOutcome::Point(x) => {
                assert!(x.iter().all(|v| v.abs() <= 1.0 + 1e-9));
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn ellipsoid_reports_empty_with_history() {
        let rows = vec![
            row(vec![1.0], Relation::Ge, 1.0),
            row(vec![1.0], Relation::Le, 0.0),
        ];
        let mut oracle = oracle_from_rows(rows);
        match ellipsoid_feasibility(1, 10.0, &mut oracle, 10_000, 1e-6).unwrap() {
            EllipsoidOutcome::Empty { history } => {
                assert!(history.len() >= 2);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }
}
