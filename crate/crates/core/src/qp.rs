//! Dense convex QP solver for small problems.
//!
//! ```text
//!     minimize    ½ xᵀ H x + gᵀ x
//!     subject to  A_eq x  = b_eq
//!                 lb ≤ A_in x ≤ ub
//! ```
//!
//! Primal active-set method: the working set is eliminated with a QR
//! factorization of its constraint normals and each step minimizes over the
//! remaining null space. A feasible start comes from the equality-constrained
//! minimizer or, when that violates bounds, from an auxiliary QP that
//! minimizes the largest bound violation.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("Hessian is not symmetric (max asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("bounds of inequality row {0} are crossed")]
    CrossedBounds(usize),
    #[error("malformed problem dump: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Problem with zero cost and no constraints.
    pub fn new(n: usize) -> Self {
        QpProblem {
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            lb: DVector::zeros(0),
            ub: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_in(&self) -> usize {
        self.lb.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let dims = [
            ("H", self.h.nrows(), n),
            ("H columns", self.h.ncols(), n),
            ("A_eq columns", self.a_eq.ncols(), n),
            ("A_eq rows", self.a_eq.nrows(), self.num_eq()),
            ("A_in columns", self.a_in.ncols(), n),
            ("A_in rows", self.a_in.nrows(), self.num_in()),
            ("ub", self.ub.len(), self.num_in()),
        ];
        for (what, got, want) in dims {
            if got != want {
                return Err(QpError::Dimension(format!("{what}: {got} != {want}")));
            }
        }
        let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
        if !finite(self.h.as_slice()) {
            return Err(QpError::NonFinite("H"));
        }
        if !finite(self.g.as_slice()) {
            return Err(QpError::NonFinite("g"));
        }
        if !finite(self.a_eq.as_slice()) || !finite(self.b_eq.as_slice()) {
            return Err(QpError::NonFinite("equality constraints"));
        }
        if !finite(self.a_in.as_slice()) || self.lb.iter().chain(self.ub.iter()).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("inequality constraints"));
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-9 * self.h.amax().max(1.0) {
            return Err(QpError::Asymmetric(asym));
        }
        for i in 0..self.num_in() {
            if self.lb[i] > self.ub[i] {
                return Err(QpError::CrossedBounds(i));
            }
        }
        Ok(())
    }

    /// Plain-text dump: a header line with the dimensions followed by the
    /// blocks `H g A_eq b_eq A_in lb ub`, one matrix row per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qp n={} m_eq={} m_in={}", self.dim(), self.num_eq(), self.num_in());
        let mut block = |name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(out, "{name}");
            for r in 0..m.nrows() {
                let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        };
        block("H", &self.h);
        block("g", &DMatrix::from_row_slice(1, self.dim(), self.g.as_slice()));
        block("A_eq", &self.a_eq);
        block("b_eq", &DMatrix::from_row_slice(1, self.num_eq(), self.b_eq.as_slice()));
        block("A_in", &self.a_in);
        block("lb", &DMatrix::from_row_slice(1, self.num_in(), self.lb.as_slice()));
        block("ub", &DMatrix::from_row_slice(1, self.num_in(), self.ub.as_slice()));
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, QpError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| QpError::Parse("empty".into()))?;
        let mut dims = [0usize; 3];
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "qp" {
            return Err(QpError::Parse(format!("bad header {header:?}")));
        }
        for (slot, field) in dims.iter_mut().zip(&fields[1..]) {
            let (_, v) = field
                .split_once('=')
                .ok_or_else(|| QpError::Parse(format!("bad header field {field:?}")))?;
            *slot = v.parse().map_err(|_| QpError::Parse(format!("bad dimension {v:?}")))?;
        }
        let [n, me, mi] = dims;
        let mut read = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>, QpError> {
            match lines.next() {
                Some(l) if l == name => {}
                other => return Err(QpError::Parse(format!("expected {name}, got {other:?}"))),
            }
            let mut m = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                let line = lines
                    .next()
                    .ok_or_else(|| QpError::Parse(format!("{name}: missing row {r}")))?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| QpError::Parse(format!("{name}: {e}")))?;
                if vals.len() != cols {
                    return Err(QpError::Parse(format!("{name}: row {r} has {} entries", vals.len())));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    m[(r, c)] = v;
                }
            }
            Ok(m)
        };
        let h = read("H", n, n)?;
        let g = read("g", 1, n)?;
        let a_eq = read("A_eq", me, n)?;
        let b_eq = read("b_eq", 1, me)?;
        let a_in = read("A_in", mi, n)?;
        let lb = read("lb", 1, mi)?;
        let ub = read("ub", 1, mi)?;
        let row = |m: DMatrix<f64>| DVector::from_iterator(m.ncols(), m.iter().copied());
        Ok(QpProblem {
            h,
            g: row(g),
            a_eq,
            b_eq: row(b_eq),
            a_in,
            lb: row(lb),
            ub: row(ub),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Lower,
    Upper,
}

/// An inequality row held at one of its bounds. Rows with `lb == ub` are
/// reported as `Lower`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActiveConstraint {
    pub index: usize,
    pub side: Side,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub active_set: Vec<ActiveConstraint>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub active_set: Vec<ActiveConstraint>,
}

impl QpSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: self.x.clone(),
            active_set: self.active_set.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Shared stationarity / feasibility / complementarity tolerance.
    pub tol: f64,
    /// Multiple of the identity added to `H`, relative to its largest
    /// diagonal entry (floored at 1e-6) so that scaling the objective does
    /// not move the minimizer.
    pub regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iter: 200,
            tol: 1e-8,
            regularization: 1e-9,
        }
    }
}

pub fn solve(problem: &QpProblem, warm_start: Option<&WarmStart>) -> Result<QpSolution, QpError> {
    solve_with(problem, warm_start, &QpSettings::default())
}

/// One oriented constraint `c·x ≥ d`, or `c·x = d` for equalities.
#[derive(Clone, Debug)]
struct Row {
    c: DVector<f64>,
    d: f64,
    equality: bool,
    origin: Option<ActiveConstraint>,
}

fn oriented_rows(problem: &QpProblem) -> Vec<Row> {
    let mut rows = Vec::new();
    for i in 0..problem.num_eq() {
        rows.push(Row {
            c: problem.a_eq.row(i).transpose(),
            d: problem.b_eq[i],
            equality: true,
            origin: None,
        });
    }
    for i in 0..problem.num_in() {
        let a = problem.a_in.row(i).transpose();
        let (lb, ub) = (problem.lb[i], problem.ub[i]);
        if lb == ub {
            rows.push(Row {
                c: a,
                d: lb,
                equality: true,
                origin: Some(ActiveConstraint {
                    index: i,
                    side: Side::Lower,
                }),
            });
            continue;
        }
        if lb.is_finite() {
            rows.push(Row {
                c: a.clone(),
                d: lb,
                equality: false,
                origin: Some(ActiveConstraint {
                    index: i,
                    side: Side::Lower,
                }),
            });
        }
        if ub.is_finite() {
            rows.push(Row {
                c: -a,
                d: -ub,
                equality: false,
                origin: Some(ActiveConstraint {
                    index: i,
                    side: Side::Upper,
                }),
            });
        }
    }
    rows
}

/// QR of the working-set normals: `Y` spans them, `Z` their null space.
struct Basis {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn basis(rows: &[Row], working: &[usize], n: usize) -> Basis {
    let m = working.len();
    if m == 0 {
        return Basis {
            y: DMatrix::zeros(n, 0),
            z: DMatrix::identity(n, n),
            r: DMatrix::zeros(0, 0),
        };
    }
    let mut ct = DMatrix::zeros(n, n.max(m));
    for (j, &w) in working.iter().enumerate() {
        ct.set_column(j, &rows[w].c);
    }
    let qr = ct.qr();
    let q = qr.q();
    let r = qr.r();
    Basis {
        y: q.columns(0, m).into_owned(),
        z: q.columns(m, n - m).into_owned(),
        r: r.view((0, 0), (m, m)).into_owned(),
    }
}

fn independent(rows: &[Row], working: &[usize], candidate: &DVector<f64>, n: usize) -> bool {
    if working.len() >= n {
        return false;
    }
    let b = basis(rows, working, n);
    let norm = candidate.norm();
    norm > 0.0 && (b.z.transpose() * candidate).norm() > 1e-9 * norm
}

struct CoreOutcome {
    x: DVector<f64>,
    working: Vec<usize>,
    multipliers: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn multipliers_of(b: &Basis, grad: &DVector<f64>) -> DVector<f64> {
    if b.r.nrows() == 0 {
        return DVector::zeros(0);
    }
    let rhs = b.y.transpose() * grad;
    b.r.solve_upper_triangular(&rhs)
        .unwrap_or_else(|| DVector::zeros(rhs.len()))
}

/// Primal active-set iterations from a feasible `x` with working set `working`.
fn active_set_core(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    rows: &[Row],
    mut x: DVector<f64>,
    mut working: Vec<usize>,
    max_iter: usize,
    tol: f64,
) -> CoreOutcome {
    let n = x.len();
    let scale = g.amax().max(1.0);
    let mut at_minimizer = false;
    let mut iterations = 0;
    loop {
        let b = basis(rows, &working, n);
        let grad = h * &x + g;
        let zg = b.z.transpose() * &grad;
        let stationary = at_minimizer || zg.amax() <= 1e-13 * scale.max(grad.amax());
        if stationary {
            let mu = multipliers_of(&b, &grad);
            // Most negative multiplier among inequalities; ties go to the
            // lowest-index constraint.
            let mut drop: Option<(usize, f64)> = None;
            for (j, &w) in working.iter().enumerate() {
                if rows[w].equality {
                    continue;
                }
                let threshold = -tol * scale;
                if mu[j] < threshold {
                    let better = match drop {
                        None => true,
                        Some((k, v)) => mu[j] < v || (mu[j] == v && working[j] < working[k]),
                    };
                    if better {
                        drop = Some((j, mu[j]));
                    }
                }
            }
            match drop {
                None => {
                    return CoreOutcome {
                        x,
                        working,
                        multipliers: mu,
                        iterations,
                        converged: true,
                    }
                }
                Some((j, _)) => {
                    working.remove(j);
                    at_minimizer = false;
                }
            }
        }
        if iterations >= max_iter {
            let mu = multipliers_of(&basis(rows, &working, n), &(h * &x + g));
            return CoreOutcome {
                x,
                working,
                multipliers: mu,
                iterations,
                converged: false,
            };
        }
        iterations += 1;
        if stationary {
            continue;
        }

        let hz = h * &b.z;
        let reduced = b.z.transpose() * &hz;
        let step_z = match reduced.clone().cholesky() {
            Some(ch) => ch.solve(&zg),
            None => reduced.lu().solve(&zg).unwrap_or_else(|| DVector::zeros(zg.len())),
        };
        let p = -(&b.z * step_z);

        let mut alpha = 1.0;
        let mut blocking = None;
        for (k, row) in rows.iter().enumerate() {
            if row.equality || working.contains(&k) {
                continue;
            }
            let cp = row.c.dot(&p);
            if cp < -1e-14 * row.c.norm() * p.norm() {
                let ratio = ((row.d - row.c.dot(&x)) / cp).max(0.0);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(k);
                }
            }
        }
        x += alpha * &p;
        match blocking {
            Some(k) => {
                working.push(k);
                at_minimizer = false;
            }
            None => at_minimizer = true,
        }
    }
}

fn max_violation(rows: &[Row], x: &DVector<f64>) -> f64 {
    rows.iter()
        .map(|r| {
            let s = r.c.dot(x) - r.d;
            if r.equality {
                s.abs()
            } else {
                (-s).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Worst of scaled stationarity, primal infeasibility, dual infeasibility and
/// complementarity.
fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    rows: &[Row],
    x: &DVector<f64>,
    working: &[usize],
    mu: &DVector<f64>,
) -> f64 {
    let mut residual = h * x + g;
    let scale = residual.amax().max(g.amax()).max(1.0);
    let mut worst: f64 = 0.0;
    for (j, &w) in working.iter().enumerate() {
        residual -= mu[j] * &rows[w].c;
        if !rows[w].equality {
            worst = worst.max(-mu[j] / scale);
            worst = worst.max((mu[j] * (rows[w].c.dot(x) - rows[w].d)).abs() / scale);
        }
    }
    worst = worst.max(residual.amax() / scale);
    for r in rows {
        let s = r.c.dot(x) - r.d;
        let v = if r.equality { s.abs() } else { (-s).max(0.0) };
        worst = worst.max(v / (1.0 + r.d.abs()));
    }
    worst
}

pub fn solve_with(
    problem: &QpProblem,
    warm_start: Option<&WarmStart>,
    settings: &QpSettings,
) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.dim();
    let tol = settings.tol;
    let h_scale = problem.h.diagonal().amax().max(1e-6);
    let reg = settings.regularization * h_scale;
    let h = &problem.h + DMatrix::identity(n, n) * reg;
    let g = &problem.g;
    let rows = oriented_rows(problem);

    // Independent equality rows; dependent ones are only checked for consistency.
    let mut eq_working = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        if row.equality && independent(&rows, &eq_working, &row.c, n) {
            eq_working.push(k);
        }
    }
    let eq_basis = basis(&rows, &eq_working, n);
    let x_min_norm = if eq_working.is_empty() {
        DVector::zeros(n)
    } else {
        let d = DVector::from_iterator(eq_working.len(), eq_working.iter().map(|&k| rows[k].d));
        let s = eq_basis
            .r
            .transpose()
            .solve_lower_triangular(&d)
            .unwrap_or_else(|| DVector::zeros(d.len()));
        &eq_basis.y * s
    };

    let infeasible = |x: DVector<f64>, iterations: usize| QpSolution {
        x,
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        active_set: Vec::new(),
        iterations,
    };

    let eq_rows: Vec<Row> = rows.iter().filter(|r| r.equality).cloned().collect();
    if max_violation(&eq_rows, &x_min_norm) > tol * (1.0 + x_min_norm.amax()) {
        return Ok(infeasible(x_min_norm, 0));
    }

    let feasible = |x: &DVector<f64>| max_violation(&rows, x) <= tol;
    let mut phase_one_iterations = 0;

    let warm = warm_start.filter(|w| w.x.len() == n && w.x.iter().all(|v| v.is_finite()) && feasible(&w.x));
    let (x0, working0) = if let Some(w) = warm {
        let mut working = eq_working.clone();
        for ac in &w.active_set {
            if let Some(k) = rows.iter().position(|r| !r.equality && r.origin == Some(*ac)) {
                let slack = rows[k].c.dot(&w.x) - rows[k].d;
                if slack.abs() <= tol && independent(&rows, &working, &rows[k].c, n) {
                    working.push(k);
                }
            }
        }
        (w.x.clone(), working)
    } else {
        // Equality-constrained minimizer first; it is the answer whenever no
        // bound is active.
        let grad = &h * &x_min_norm + g;
        let zg = eq_basis.z.transpose() * &grad;
        let reduced = eq_basis.z.transpose() * &h * &eq_basis.z;
        let step = reduced
            .cholesky()
            .map(|ch| ch.solve(&zg))
            .unwrap_or_else(|| DVector::zeros(zg.len()));
        let x_eq = &x_min_norm - &eq_basis.z * step;
        if feasible(&x_eq) {
            (x_eq, eq_working.clone())
        } else {
            // Minimize the largest violation t over (x, t), lightly anchored at x_eq.
            let delta = reg;
            let m = n + 1;
            let mut h1 = DMatrix::identity(m, m) * delta;
            h1[(n, n)] = delta;
            let mut g1 = DVector::zeros(m);
            g1.rows_mut(0, n).copy_from(&(-delta * &x_eq));
            g1[n] = 1.0;
            let mut aux = Vec::new();
            let mut back = Vec::new();
            for (k, row) in rows.iter().enumerate() {
                let mut c = DVector::zeros(m);
                c.rows_mut(0, n).copy_from(&row.c);
                if row.equality && row.origin.is_none() {
                    aux.push(Row {
                        c,
                        d: row.d,
                        equality: true,
                        origin: None,
                    });
                    back.push(None);
                } else if row.equality {
                    // Fixed inequality row: both sides relaxed by t.
                    let mut lo = c.clone();
                    lo[n] = 1.0;
                    aux.push(Row {
                        c: lo,
                        d: row.d,
                        equality: false,
                        origin: None,
                    });
                    back.push(Some(k));
                    let mut hi = -c;
                    hi[n] = 1.0;
                    aux.push(Row {
                        c: hi,
                        d: -row.d,
                        equality: false,
                        origin: None,
                    });
                    back.push(Some(k));
                } else {
                    c[n] = 1.0;
                    aux.push(Row {
                        c,
                        d: row.d,
                        equality: false,
                        origin: None,
                    });
                    back.push(Some(k));
                }
            }
            let mut t_row = DVector::zeros(m);
            t_row[n] = 1.0;
            aux.push(Row {
                c: t_row,
                d: 0.0,
                equality: false,
                origin: None,
            });
            back.push(None);

            let mut start = DVector::zeros(m);
            start.rows_mut(0, n).copy_from(&x_eq);
            start[n] = max_violation(&rows, &x_eq);
            let aux_working: Vec<usize> = (0..aux.len()).filter(|&k| aux[k].equality).collect();
            let aux_working = {
                let mut w = Vec::new();
                for k in aux_working {
                    if independent(&aux, &w, &aux[k].c, m) {
                        w.push(k);
                    }
                }
                w
            };
            let out = active_set_core(&h1, &g1, &aux, start, aux_working, settings.max_iter, tol);
            phase_one_iterations = out.iterations;
            let x1 = out.x.rows(0, n).into_owned();
            if out.x[n] > tol || !feasible(&x1) {
                return Ok(infeasible(x1, phase_one_iterations));
            }
            let mut working = eq_working.clone();
            let mut candidates: Vec<usize> = out
                .working
                .iter()
                .filter_map(|&k| back[k])
                .filter(|&k| !rows[k].equality)
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            for k in candidates {
                if independent(&rows, &working, &rows[k].c, n) {
                    working.push(k);
                }
            }
            (x1, working)
        }
    };

    let remaining = settings.max_iter.saturating_sub(phase_one_iterations);
    let out = active_set_core(&h, g, &rows, x0, working0, remaining, tol);
    let kkt = kkt_residual(&h, g, &rows, &out.x, &out.working, &out.multipliers);
    let mut active_set: Vec<ActiveConstraint> = out.working.iter().filter_map(|&k| rows[k].origin).collect();
    active_set.sort_unstable();
    let status = if out.converged && kkt <= tol {
        QpStatus::Optimal
    } else {
        QpStatus::MaxIter
    };
    Ok(QpSolution {
        x: out.x,
        status,
        kkt_residual: kkt,
        active_set,
        iterations: out.iterations + phase_one_iterations,
    })
}
