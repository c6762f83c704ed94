//! Linear time-invariant systems `ẋ = A·x + B·u + C`.
//!
//! Three ways to form `e^{At}` are supported, chosen by [`classify_matrix`]:
//!
//! * nilpotent `A` (`A^k = 0`): the Taylor series terminates after `k` terms;
//! * diagonalizable `A`: `e^{At} = T·diag(e^{λt})·T⁻¹`;
//! * anything else: scaling-and-squaring with a degree-13 Padé approximant.
//!
//! The first two routes also give closed-form trajectories: every state
//! component is a finite sum of `c·t^p·e^{λt}` terms ([`Term`]). The general
//! route falls back to a propagator that is evaluated on demand.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Relative tolerance used to detect `A^k = 0`, applied per power: `‖A^k‖∞ ≤ tol·‖A‖∞^k`.
pub const NILPOTENT_TOL: f64 = 1e-12;
/// Largest condition number of the eigenvector matrix accepted for diagonalization.
pub const MAX_EIGENVECTOR_COND: f64 = 1e8;
/// Input rates closer than this to an eigenvalue use the resonant `t·e^{λt}` form.
pub const RESONANCE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("control schedule does not cover [0, {horizon}]")]
    Coverage { horizon: f64 },
    #[error("invalid control schedule: {0}")]
    Schedule(String),
}

/// A linear time-invariant model `ẋ = A·x + B·u + C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>) -> Result<Self, LtiError> {
        if !a.is_square() {
            return Err(LtiError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        if n == 0 || b.ncols() == 0 {
            return Err(LtiError::Dimension("n and m must be positive".into()));
        }
        if b.nrows() != n || c.len() != n {
            return Err(LtiError::Dimension(format!(
                "A is {n}x{n} but B is {}x{} and C has {} rows",
                b.nrows(),
                b.ncols(),
                c.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(LtiError::NonFinite("A"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(LtiError::NonFinite("B"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(LtiError::NonFinite("C"));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `A·x + B·u + C`.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.c
    }
}

/// How `e^{At}` is formed for a particular `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpPlan {
    /// `A^index = 0`; the Taylor series has `index` terms.
    Nilpotent {
        index: usize,
    },
    /// `A = T·Λ·T⁻¹`; `eigenvalues[i]` belongs to column `i` of `transform`.
    Diagonalizable {
        eigenvalues: Vec<Complex64>,
        transform: DMatrix<Complex64>,
        inverse: DMatrix<Complex64>,
    },
    General,
}

impl ExpPlan {
    pub fn name(&self) -> &'static str {
        match self {
            ExpPlan::Nilpotent { .. } => "nilpotent",
            ExpPlan::Diagonalizable { .. } => "diagonalizable",
            ExpPlan::General => "general",
        }
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn classify_matrix(a: &DMatrix<f64>) -> Result<ExpPlan, LtiError> {
    if !a.is_square() {
        return Err(LtiError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LtiError::NonFinite("A"));
    }
    let n = a.nrows();
    let norm = inf_norm(a);
    if norm == 0.0 {
        return Ok(ExpPlan::Nilpotent { index: 1 });
    }
    let mut power = a.clone();
    for k in 1..=n {
        if inf_norm(&power) <= NILPOTENT_TOL * norm.powi(k as i32) {
            return Ok(ExpPlan::Nilpotent { index: k });
        }
        power = &power * a;
    }
    Ok(diagonalize(a).unwrap_or(ExpPlan::General))
}

fn diagonalize(a: &DMatrix<f64>) -> Option<ExpPlan> {
    let n = a.nrows();
    let eig = a.clone().complex_eigenvalues();
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let mut used = vec![false; n];
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    for i in 0..n {
        if used[i] {
            continue;
        }
        let anchor = eig[i];
        let cluster: Vec<usize> = (i..n)
            .filter(|&j| !used[j] && (eig[j] - anchor).norm() <= 1e-8 * (1.0 + anchor.norm()))
            .collect();
        for &j in &cluster {
            used[j] = true;
        }
        let lambda = cluster.iter().map(|&j| eig[j]).sum::<Complex64>() / cluster.len() as f64;
        let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&p, &q| svd.singular_values[p].total_cmp(&svd.singular_values[q]));
        for &row in order.iter().take(cluster.len()) {
            let v: DVector<Complex64> = v_t.row(row).transpose().map(|z| z.conj());
            let len = v.norm();
            columns.push(v / Complex64::new(len, 0.0));
            lambdas.push(lambda);
        }
    }
    if columns.len() != n {
        return None;
    }
    let transform = DMatrix::from_columns(&columns);
    let sv = transform.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0 && smax / smin < MAX_EIGENVECTOR_COND) {
        return None;
    }
    let inverse = transform.clone().try_inverse()?;
    let lam = DMatrix::from_diagonal(&DVector::from_vec(lambdas.clone()));
    let residual = (&ac * &transform - &transform * lam).norm();
    if residual > 1e-9 * (1.0 + a.norm()) {
        return None;
    }
    Some(ExpPlan::Diagonalizable {
        eigenvalues: lambdas,
        transform,
        inverse,
    })
}

pub fn matrix_exponential(a: &DMatrix<f64>, t: f64, plan: &ExpPlan) -> DMatrix<f64> {
    let n = a.nrows();
    match plan {
        ExpPlan::Nilpotent { index } => {
            let mut out = DMatrix::identity(n, n);
            let mut term = DMatrix::identity(n, n);
            for j in 1..*index {
                term = &term * a * (t / j as f64);
                out += &term;
            }
            out
        }
        ExpPlan::Diagonalizable {
            eigenvalues,
            transform,
            inverse,
        } => {
            let diag = DVector::from_iterator(n, eigenvalues.iter().map(|l| (l * t).exp()));
            let full = transform * DMatrix::from_diagonal(&diag) * inverse;
            full.map(|z| z.re)
        }
        ExpPlan::General => expm_pade(&(a * t)),
    }
}

/// `e^M` by scaling and squaring with the [13/13] Padé approximant.
pub fn expm_pade(m: &DMatrix<f64>) -> DMatrix<f64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;
    let n = m.nrows();
    let norm = one_norm(m);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m / 2f64.powi(squarings);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9])
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8])
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &id * B[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// One `coef·t^power·e^{rate·t}` summand of a closed-form trajectory component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: Complex64,
    pub power: u32,
    pub rate: Complex64,
}

impl Term {
    pub fn new(coef: Complex64, power: u32, rate: Complex64) -> Self {
        Self { coef, power, rate }
    }

    pub fn real(coef: f64, power: u32, rate: f64) -> Self {
        Self::new(Complex64::new(coef, 0.0), power, Complex64::new(rate, 0.0))
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let poly = if self.power == 0 {
            1.0
        } else {
            t.powi(self.power as i32)
        };
        if self.rate == Complex64::new(0.0, 0.0) {
            self.coef * poly
        } else {
            self.coef * poly * (self.rate * t).exp()
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.rate.norm() == 0.0
    }
}

pub fn eval_terms(terms: &[Term], t: f64) -> Complex64 {
    terms.iter().map(|term| term.eval(t)).sum()
}

pub fn derivative_terms(terms: &[Term]) -> Vec<Term> {
    let mut out = Vec::with_capacity(terms.len() * 2);
    for term in terms {
        if term.power > 0 {
            out.push(Term::new(
                term.coef * term.power as f64,
                term.power - 1,
                term.rate,
            ));
        }
        if term.rate.norm() != 0.0 {
            out.push(Term::new(term.coef * term.rate, term.power, term.rate));
        }
    }
    simplify_terms(out)
}

fn same_rate(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= 1e-12 * (1.0 + a.norm())
}

/// Merge terms with equal `(power, rate)` and drop exact zeros.
pub fn simplify_terms(terms: Vec<Term>) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for term in terms {
        if term.coef.norm() == 0.0 {
            continue;
        }
        match out
            .iter_mut()
            .find(|t| t.power == term.power && same_rate(t.rate, term.rate))
        {
            Some(existing) => existing.coef += term.coef,
            None => out.push(term),
        }
    }
    out.retain(|t| t.coef.norm() != 0.0);
    out.sort_by(|a, b| {
        a.rate
            .re
            .total_cmp(&b.rate.re)
            .then(a.rate.im.total_cmp(&b.rate.im))
            .then(a.power.cmp(&b.power))
    });
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `∫₀^τ σ^n·e^{νσ} dσ` in the term basis.
fn power_exp_integral(n: u32, nu: Complex64) -> Vec<Term> {
    if nu.norm() <= RESONANCE_TOL {
        return vec![Term::real(1.0 / (n + 1) as f64, n + 1, 0.0)];
    }
    let nf = factorial(n);
    let mut out = Vec::with_capacity(n as usize + 2);
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let coef = Complex64::new(sign * nf / factorial(n - k), 0.0) / nu.powu(k + 1);
        out.push(Term::new(coef, n - k, nu));
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    out.push(Term::new(
        -Complex64::new(sign * nf, 0.0) / nu.powu(n + 1),
        0,
        Complex64::new(0.0, 0.0),
    ));
    out
}

/// `∫₀^τ (τ−σ)^j·σ^p·e^{μσ} dσ` in the term basis.
fn kernel_integral(j: u32, p: u32, mu: Complex64) -> Vec<Term> {
    if mu.norm() <= RESONANCE_TOL {
        // Beta integral
        let coef = factorial(j) * factorial(p) / factorial(j + p + 1);
        return vec![Term::real(coef, j + p + 1, 0.0)];
    }
    let mut out = Vec::new();
    for i in 0..=j {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let scale = sign * binomial(j, i);
        for term in power_exp_integral(p + i, mu) {
            out.push(Term::new(
                term.coef * scale,
                term.power + (j - i),
                term.rate,
            ));
        }
    }
    simplify_terms(out)
}

/// A forcing contribution `direction·t^power·e^{rate·t}` to `ẋ = A·x + f(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub direction: DVector<Complex64>,
    pub power: u32,
    pub rate: Complex64,
}

impl Forcing {
    pub fn constant(direction: &DVector<f64>) -> Self {
        Self {
            direction: direction.map(|v| Complex64::new(v, 0.0)),
            power: 0,
            rate: Complex64::new(0.0, 0.0),
        }
    }
}

/// Closed-form `x(τ) = e^{Aτ}x0 + ∫₀^τ e^{A(τ−σ)} f(σ) dσ`, one term list per state.
/// Returns `None` for the general plan, which has no term representation.
pub fn closed_form_terms(
    a: &DMatrix<f64>,
    plan: &ExpPlan,
    x0: &DVector<f64>,
    forcing: &[Forcing],
) -> Option<Vec<Vec<Term>>> {
    let n = a.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let mut comps: Vec<Vec<Term>> = vec![Vec::new(); n];
    match plan {
        ExpPlan::Nilpotent { index } => {
            let index = *index as u32;
            // A^j / j!
            let mut powers = Vec::with_capacity(index as usize);
            let mut pw = DMatrix::<f64>::identity(n, n);
            for j in 0..index {
                powers.push(pw.clone() / factorial(j));
                pw = &pw * a;
            }
            for (j, aj) in powers.iter().enumerate() {
                let free = aj * x0;
                for (k, comp) in comps.iter_mut().enumerate() {
                    comp.push(Term::real(free[k], j as u32, 0.0));
                }
            }
            for f in forcing {
                for (j, aj) in powers.iter().enumerate() {
                    let dir = aj.map(|v| Complex64::new(v, 0.0)) * &f.direction;
                    if dir.iter().all(|z| z.norm() == 0.0) {
                        continue;
                    }
                    let kernel = kernel_integral(j as u32, f.power, f.rate);
                    for (k, comp) in comps.iter_mut().enumerate() {
                        for term in &kernel {
                            comp.push(Term::new(term.coef * dir[k], term.power, term.rate));
                        }
                    }
                }
            }
        }
        ExpPlan::Diagonalizable {
            eigenvalues,
            transform,
            inverse,
        } => {
            let z0 = inverse * x0.map(|v| Complex64::new(v, 0.0));
            let modal: Vec<DVector<Complex64>> =
                forcing.iter().map(|f| inverse * &f.direction).collect();
            for (i, &lambda) in eigenvalues.iter().enumerate() {
                let mut mode = vec![Term::new(z0[i], 0, lambda)];
                for (f, g) in forcing.iter().zip(&modal) {
                    if g[i].norm() == 0.0 {
                        continue;
                    }
                    for term in power_exp_integral(f.power, f.rate - lambda) {
                        mode.push(Term::new(term.coef * g[i], term.power, term.rate + lambda));
                    }
                }
                for (k, comp) in comps.iter_mut().enumerate() {
                    let tk = transform[(k, i)];
                    if tk == zero {
                        continue;
                    }
                    for term in &mode {
                        comp.push(Term::new(term.coef * tk, term.power, term.rate));
                    }
                }
            }
        }
        ExpPlan::General => return None,
    }
    Some(comps.into_iter().map(simplify_terms).collect())
}

/// Piecewise-constant input signal; interval `k` is `[breaks[k], breaks[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    breaks: Vec<f64>,
    values: Vec<DVector<f64>>,
}

impl ControlSignal {
    /// `u(t) = value` for all `t ≥ 0`.
    pub fn constant(value: DVector<f64>) -> Self {
        Self {
            breaks: vec![0.0, f64::INFINITY],
            values: vec![value],
        }
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self, LtiError> {
        if values.is_empty() || breaks.len() != values.len() + 1 {
            return Err(LtiError::Schedule(format!(
                "{} breaks for {} values",
                breaks.len(),
                values.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks[0].is_nan() {
            return Err(LtiError::Schedule(
                "breaks must be strictly increasing".into(),
            ));
        }
        let m = values[0].len();
        if values.iter().any(|v| v.len() != m) {
            return Err(LtiError::Schedule("inconsistent input dimension".into()));
        }
        if values.iter().flat_map(|v| v.iter()).any(|v| !v.is_finite()) {
            return Err(LtiError::NonFinite("control"));
        }
        Ok(Self { breaks, values })
    }

    /// Schedule whose `k`-th value applies from `starts[k]`; the last value holds forever.
    pub fn from_switches(starts: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self, LtiError> {
        let mut breaks = starts;
        breaks.push(f64::INFINITY);
        Self::piecewise(breaks, values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn end(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// Interior switch times.
    pub fn switch_times(&self) -> &[f64] {
        &self.breaks[1..self.breaks.len() - 1]
    }

    /// Right-continuous value at `t`; `None` outside the covered interval.
    pub fn value_at(&self, t: f64) -> Option<&DVector<f64>> {
        if t < self.breaks[0] || t >= self.end() {
            return None;
        }
        let k = self.breaks.partition_point(|&b| b <= t) - 1;
        self.values.get(k)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64, &DVector<f64>)> {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, v)| (self.breaks[k], self.breaks[k + 1], v))
    }

    /// The schedule seen from absolute time `origin`, re-based so that `origin` becomes 0.
    pub fn rebased(&self, origin: f64) -> Option<Self> {
        let first = self.value_at(origin)?;
        let mut breaks = vec![0.0];
        let mut values = vec![first.clone()];
        for (start, end, v) in self.intervals() {
            if start > origin {
                breaks.push(start - origin);
                values.push(v.clone());
            }
            let _ = end;
        }
        breaks.push(self.end() - origin);
        Self::piecewise(breaks, values).ok()
    }
}

/// Evaluation data for segments without a term representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    a: DMatrix<f64>,
    x0: DVector<f64>,
    constant: DVector<f64>,
    b: DMatrix<f64>,
    channels: Vec<Vec<Term>>,
    /// Extra components known in closed form, stacked after the state.
    extra: Vec<Vec<Term>>,
}

impl Propagator {
    fn eval(&self, tau: f64) -> DVector<f64> {
        let x = self.eval_state(tau);
        if self.extra.is_empty() {
            return x;
        }
        let n = x.len();
        let mut out = x.resize_vertically(n + self.extra.len(), 0.0);
        for (k, c) in self.extra.iter().enumerate() {
            out[n + k] = eval_terms(c, tau).re;
        }
        out
    }

    fn eval_state(&self, tau: f64) -> DVector<f64> {
        let n = self.a.nrows();
        let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&self.a);
        aug.view_mut((0, n), (n, 1)).copy_from(&self.constant);
        let e = expm_pade(&(aug * tau));
        let mut x = e.view((0, 0), (n, n)) * &self.x0 + e.view((0, n), (n, 1));
        if !self.channels.is_empty() && tau > 0.0 {
            x += self.forced_by_quadrature(tau);
        }
        x
    }

    fn input(&self, sigma: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|c| eval_terms(c, sigma).re),
        )
    }

    /// `∫₀^τ e^{A(τ−σ)}·B·u(σ) dσ` with composite Gauss-Legendre, refined until stable to 1e-9.
    fn forced_by_quadrature(&self, tau: f64) -> DVector<f64> {
        let composite = |panels: usize| -> DVector<f64> {
            let width = tau / panels as f64;
            let mut acc = DVector::zeros(self.a.nrows());
            for p in 0..panels {
                let mid = (p as f64 + 0.5) * width;
                for (node, weight) in GAUSS_LEGENDRE_8 {
                    let sigma = mid + 0.5 * width * node;
                    let kernel = expm_pade(&(&self.a * (tau - sigma)));
                    acc += kernel * (&self.b * self.input(sigma)) * (0.5 * width * weight);
                }
            }
            acc
        };
        let mut panels = 4;
        let mut prev = composite(panels);
        loop {
            panels *= 2;
            let next = composite(panels);
            let diff = (&next - &prev).amax();
            if diff < 1e-9 || panels >= 1024 {
                return next;
            }
            prev = next;
        }
    }

    fn derivative(&self, tau: f64) -> DVector<f64> {
        let x = self.eval_state(tau);
        let mut dx = &self.a * x + &self.constant;
        if !self.channels.is_empty() {
            dx += &self.b * self.input(tau);
        }
        let n = dx.len();
        let mut out = dx.resize_vertically(n + self.extra.len(), 0.0);
        for (k, c) in self.extra.iter().enumerate() {
            out[n + k] = eval_terms(&derivative_terms(c), tau).re;
        }
        out
    }
}

const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.1012285362903763),
    (-0.7966664774136267, 0.2223810344533745),
    (-0.5255324099163290, 0.3137066458778873),
    (-0.1834346424956498, 0.3626837833783620),
    (0.1834346424956498, 0.3626837833783620),
    (0.5255324099163290, 0.3137066458778873),
    (0.7966664774136267, 0.2223810344533745),
    (0.9602898564975363, 0.1012285362903763),
];

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentForm {
    /// One term list per state component, in segment-local time.
    Terms(Vec<Vec<Term>>),
    Propagated(Box<Propagator>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub form: SegmentForm,
}

impl Segment {
    pub fn terms(&self) -> Option<&[Vec<Term>]> {
        match &self.form {
            SegmentForm::Terms(t) => Some(t),
            SegmentForm::Propagated(_) => None,
        }
    }

    fn eval(&self, t: f64) -> DVector<f64> {
        let tau = t - self.start;
        match &self.form {
            SegmentForm::Terms(comps) => {
                DVector::from_iterator(comps.len(), comps.iter().map(|c| eval_terms(c, tau).re))
            }
            SegmentForm::Propagated(p) => p.eval(tau),
        }
    }

    fn eval_component(&self, i: usize, t: f64) -> f64 {
        match &self.form {
            SegmentForm::Terms(comps) => eval_terms(&comps[i], t - self.start).re,
            SegmentForm::Propagated(p) => p.eval(t - self.start)[i],
        }
    }

    fn derivative(&self, t: f64) -> DVector<f64> {
        let tau = t - self.start;
        match &self.form {
            SegmentForm::Terms(comps) => DVector::from_iterator(
                comps.len(),
                comps
                    .iter()
                    .map(|c| eval_terms(&derivative_terms(c), tau).re),
            ),
            SegmentForm::Propagated(p) => p.derivative(tau),
        }
    }
}

/// A trajectory made of contiguous closed-form segments.
///
/// The last segment extends past its nominal end if evaluated there.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticTrajectory {
    dim: usize,
    segments: Vec<Segment>,
}

impl AnalyticTrajectory {
    pub fn new(dim: usize, segments: Vec<Segment>) -> Self {
        assert!(
            !segments.is_empty(),
            "trajectory needs at least one segment"
        );
        debug_assert!(segments.windows(2).all(|w| w[0].end == w[1].start));
        Self { dim, segments }
    }

    /// Constant trajectory on `[start, end)`.
    pub fn constant(values: &DVector<f64>, start: f64, end: f64) -> Self {
        let comps = values
            .iter()
            .map(|&v| vec![Term::real(v, 0, 0.0)])
            .collect();
        Self::new(
            values.len(),
            vec![Segment {
                start,
                end,
                form: SegmentForm::Terms(comps),
            }],
        )
    }

    /// Single term-based segment on `[0, end)`.
    pub fn from_terms(comps: Vec<Vec<Term>>, end: f64) -> Self {
        Self::new(
            comps.len(),
            vec![Segment {
                start: 0.0,
                end,
                form: SegmentForm::Terms(comps),
            }],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments.last().unwrap().end
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments
            .partition_point(|s| s.end <= t)
            .min(self.segments.len() - 1)
    }

    pub fn segment_at(&self, t: f64) -> &Segment {
        &self.segments[self.segment_index(t)]
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.segment_at(t).eval(t)
    }

    pub fn component(&self, i: usize, t: f64) -> f64 {
        self.segment_at(t).eval_component(i, t)
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        self.segment_at(t).derivative(t)
    }

    /// Largest imaginary part of any component at `t` (zero for propagated segments).
    pub fn imag_residue(&self, t: f64) -> f64 {
        let seg = self.segment_at(t);
        match &seg.form {
            SegmentForm::Terms(comps) => comps
                .iter()
                .map(|c| eval_terms(c, t - seg.start).im.abs())
                .fold(0.0, f64::max),
            SegmentForm::Propagated(_) => 0.0,
        }
    }

    /// True when every segment is a real polynomial in local time.
    pub fn is_polynomial(&self) -> bool {
        self.segments.iter().all(|s| match &s.form {
            SegmentForm::Terms(comps) => comps.iter().flatten().all(Term::is_polynomial),
            SegmentForm::Propagated(_) => false,
        })
    }

    /// Ascending real polynomial coefficients (local time) of component `i` on segment `seg`.
    pub fn polynomial(&self, seg: usize, i: usize) -> Option<Vec<f64>> {
        let terms = self.segments.get(seg)?.terms()?.get(i)?;
        let degree = terms.iter().map(|t| t.power).max().unwrap_or(0) as usize;
        let mut coeffs = vec![0.0; degree + 1];
        for term in terms {
            if !term.is_polynomial() {
                return None;
            }
            coeffs[term.power as usize] += term.coef.re;
        }
        Some(coeffs)
    }

    /// Trajectory restricted to `[start, t_end)`.
    pub fn truncated(&self, t_end: f64) -> Self {
        let mut segments: Vec<Segment> = self
            .segments
            .iter()
            .filter(|s| s.start < t_end)
            .cloned()
            .collect();
        if segments.is_empty() {
            segments.push(self.segments[0].clone());
        }
        segments.last_mut().unwrap().end = t_end;
        Self::new(self.dim, segments)
    }

    /// Stacks one more component, given as terms in local time, onto a
    /// single-segment trajectory.
    pub fn with_component(mut self, terms: Vec<Term>) -> Self {
        assert_eq!(
            self.segments.len(),
            1,
            "with_component needs a single segment"
        );
        match &mut self.segments[0].form {
            SegmentForm::Terms(comps) => comps.push(terms),
            SegmentForm::Propagated(p) => p.extra.push(terms),
        }
        self.dim += 1;
        self
    }

    /// Appends a segment starting at the current end.
    pub fn push(&mut self, segment: Segment) {
        assert_eq!(segment.start, self.end(), "segments must be contiguous");
        self.segments.push(segment);
    }
}

fn check_initial(sys: &LtiSystem, x0: &DVector<f64>, horizon: f64) -> Result<(), LtiError> {
    if !(horizon > 0.0) {
        return Err(LtiError::Horizon(horizon));
    }
    if x0.len() != sys.n() {
        return Err(LtiError::Dimension(format!(
            "initial state has {} entries, system has {} states",
            x0.len(),
            sys.n()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(LtiError::NonFinite("initial state"));
    }
    Ok(())
}

fn segment_for(
    sys: &LtiSystem,
    plan: &ExpPlan,
    x0: &DVector<f64>,
    forcing: &[Forcing],
    constant: &DVector<f64>,
    channels: &[Vec<Term>],
    start: f64,
    end: f64,
) -> Segment {
    let form = match closed_form_terms(sys.a(), plan, x0, forcing) {
        Some(comps) => SegmentForm::Terms(comps),
        None => SegmentForm::Propagated(Box::new(Propagator {
            a: sys.a().clone(),
            x0: x0.clone(),
            constant: constant.clone(),
            b: sys.b().clone(),
            channels: channels.to_vec(),
            extra: Vec::new(),
        })),
    };
    Segment { start, end, form }
}

/// Closed-form solution under a piecewise-constant input over `[0, horizon]`.
pub fn solve_lti(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    u: &ControlSignal,
    horizon: f64,
) -> Result<AnalyticTrajectory, LtiError> {
    check_initial(sys, x0, horizon)?;
    if u.dim() != sys.m() {
        return Err(LtiError::Dimension(format!(
            "control has {} channels, system expects {}",
            u.dim(),
            sys.m()
        )));
    }
    if u.start() > 0.0 || u.end() < horizon {
        return Err(LtiError::Coverage { horizon });
    }
    let plan = classify_matrix(sys.a())?;
    let mut segments: Vec<Segment> = Vec::new();
    let mut state = x0.clone();
    for (start, end, value) in u.intervals() {
        let (start, end) = (start.max(0.0), end.min(horizon));
        if end <= start {
            continue;
        }
        let constant = sys.b() * value + sys.c();
        let forcing = [Forcing::constant(&constant)];
        let seg = segment_for(sys, &plan, &state, &forcing, &constant, &[], start, end);
        state = seg.eval(end);
        segments.push(seg);
    }
    Ok(AnalyticTrajectory::new(sys.n(), segments))
}

/// Closed-form response to inputs given in the term basis (`u_k(t) = Σ c·t^p·e^{λt}`).
///
/// Rates that coincide with an eigenvalue of `A` (within [`RESONANCE_TOL`]) take the
/// resonant form. Matrices without a nilpotent or diagonal plan are integrated by
/// adaptive Gauss-Legendre quadrature at evaluation time.
pub fn convolve_exponential_input(
    sys: &LtiSystem,
    x0: &DVector<f64>,
    input: &[Vec<Term>],
    horizon: f64,
) -> Result<AnalyticTrajectory, LtiError> {
    check_initial(sys, x0, horizon)?;
    if input.len() != sys.m() {
        return Err(LtiError::Dimension(format!(
            "input has {} channels, system expects {}",
            input.len(),
            sys.m()
        )));
    }
    let plan = classify_matrix(sys.a())?;
    let mut forcing = vec![Forcing::constant(sys.c())];
    for (k, channel) in input.iter().enumerate() {
        let column = sys.b().column(k).map(|v| Complex64::new(v, 0.0));
        for term in channel {
            forcing.push(Forcing {
                direction: &column * term.coef,
                power: term.power,
                rate: term.rate,
            });
        }
    }
    let seg = segment_for(sys, &plan, x0, &forcing, sys.c(), input, 0.0, horizon);
    Ok(AnalyticTrajectory::new(sys.n(), vec![seg]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn classify_examples() {
        let a = mat(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            classify_matrix(&a).unwrap(),
            ExpPlan::Nilpotent { index: 2 }
        );
        for n in 1..5 {
            let z = DMatrix::zeros(n, n);
            assert_eq!(
                classify_matrix(&z).unwrap(),
                ExpPlan::Nilpotent { index: 1 }
            );
        }
        let rot = mat(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        match classify_matrix(&rot).unwrap() {
            ExpPlan::Diagonalizable { eigenvalues, .. } => {
                let mut ims: Vec<f64> = eigenvalues.iter().map(|l| l.im).collect();
                ims.sort_by(f64::total_cmp);
                assert!((ims[0] + 1.0).abs() < 1e-12 && (ims[1] - 1.0).abs() < 1e-12);
                assert!(eigenvalues.iter().all(|l| l.re.abs() < 1e-12));
            }
            other => panic!("unexpected plan {other:?}"),
        }
    }

    #[test]
    fn defective_matrix_falls_back_to_general() {
        let jordan = mat(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(classify_matrix(&jordan).unwrap(), ExpPlan::General);
        let e = matrix_exponential(&jordan, 1.0, &ExpPlan::General);
        let ee = std::f64::consts::E;
        assert!((e - mat(2, 2, &[ee, ee, 0.0, ee])).amax() < 1e-13);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(
            classify_matrix(&DMatrix::zeros(2, 3)),
            Err(LtiError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn exponential_examples() {
        let a = mat(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let plan = classify_matrix(&a).unwrap();
        let e = matrix_exponential(&a, 2.0, &plan);
        assert_eq!(e, mat(2, 2, &[1.0, 2.0, 0.0, 1.0]));

        let z = DMatrix::zeros(3, 3);
        let plan = classify_matrix(&z).unwrap();
        assert_eq!(matrix_exponential(&z, 7.5, &plan), DMatrix::identity(3, 3));

        let d = mat(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let plan = classify_matrix(&d).unwrap();
        let e = matrix_exponential(&d, 1.0, &plan);
        let expect = mat(2, 2, &[(-1f64).exp(), 0.0, 0.0, (-2f64).exp()]);
        assert!((e - expect).amax() < 1e-15);
    }

    #[test]
    fn constant_velocity_position() {
        let sys = LtiSystem::new(mat(1, 1, &[0.0]), mat(1, 1, &[1.0]), DVector::zeros(1)).unwrap();
        let traj = solve_lti(
            &sys,
            &DVector::from_vec(vec![0.0]),
            &ControlSignal::constant(DVector::from_vec(vec![5.0])),
            2.0,
        )
        .unwrap();
        assert!((traj.component(0, 2.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn delayed_braking_double_integrator() {
        let sys = LtiSystem::new(
            mat(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            mat(2, 1, &[0.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let u = ControlSignal::from_switches(
            vec![0.0, 1.0],
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![-5.0])],
        )
        .unwrap();
        let traj = solve_lti(&sys, &DVector::from_vec(vec![0.0, 20.0]), &u, 5.0).unwrap();
        // oracle: 20 m in the first second, then 20·4 − 2.5·16 = 40 m
        let x = traj.eval(5.0);
        assert!((x[0] - 60.0).abs() < 1e-12, "{x}");
        assert!(x[1].abs() < 1e-12);
        assert_eq!(traj.segments().len(), 2);
    }

    #[test]
    fn first_order_fixed_point() {
        let sys = LtiSystem::new(
            mat(1, 1, &[-1.0]),
            mat(1, 1, &[0.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let traj = solve_lti(
            &sys,
            &DVector::zeros(1),
            &ControlSignal::constant(DVector::zeros(1)),
            50.0,
        )
        .unwrap();
        assert!((traj.component(0, 50.0) - 1.0).abs() < 1e-12);
        assert!((traj.component(0, 1.0) - (1.0 - (-1f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn solve_rejects_bad_horizon_and_coverage() {
        let sys = LtiSystem::new(mat(1, 1, &[0.0]), mat(1, 1, &[1.0]), DVector::zeros(1)).unwrap();
        let u = ControlSignal::constant(DVector::from_vec(vec![1.0]));
        assert_eq!(
            solve_lti(&sys, &DVector::zeros(1), &u, 0.0),
            Err(LtiError::Horizon(0.0))
        );
        let short =
            ControlSignal::piecewise(vec![0.0, 1.0], vec![DVector::from_vec(vec![1.0])]).unwrap();
        assert_eq!(
            solve_lti(&sys, &DVector::zeros(1), &short, 2.0),
            Err(LtiError::Coverage { horizon: 2.0 })
        );
    }

    #[test]
    fn exponential_input_integrator() {
        let sys = LtiSystem::new(mat(1, 1, &[0.0]), mat(1, 1, &[1.0]), DVector::zeros(1)).unwrap();
        let input = vec![vec![Term::real(1.0, 0, -1.0)]];
        let traj = convolve_exponential_input(&sys, &DVector::zeros(1), &input, 10.0).unwrap();
        for t in [0.0, 0.5, 2.0, 7.0] {
            assert!((traj.component(0, t) - (1.0 - (-t as f64).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_input_resonance() {
        let sys = LtiSystem::new(mat(1, 1, &[-1.0]), mat(1, 1, &[1.0]), DVector::zeros(1)).unwrap();
        let input = vec![vec![Term::real(1.0, 0, -1.0)]];
        let traj = convolve_exponential_input(&sys, &DVector::zeros(1), &input, 10.0).unwrap();
        for t in [0.0, 0.5, 2.0, 7.0] {
            let expect = t * (-t as f64).exp();
            assert!((traj.component(0, t) - expect).abs() < 1e-14);
        }
        let terms = traj.segments()[0].terms().unwrap();
        assert!(terms[0]
            .iter()
            .all(|t| t.coef.re.is_finite() && t.coef.re.abs() < 10.0));
    }

    #[test]
    fn constant_exponential_input_matches_solve_lti() {
        let sys = LtiSystem::new(
            mat(2, 2, &[-0.5, 1.0, 0.0, -0.2]),
            mat(2, 1, &[0.0, 1.0]),
            DVector::from_vec(vec![0.3, -0.1]),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let a = solve_lti(
            &sys,
            &x0,
            &ControlSignal::constant(DVector::from_vec(vec![0.7])),
            8.0,
        )
        .unwrap();
        let b =
            convolve_exponential_input(&sys, &x0, &[vec![Term::real(0.7, 0, 0.0)]], 8.0).unwrap();
        for t in [0.0, 0.3, 1.0, 4.0, 8.0] {
            assert!((a.eval(t) - b.eval(t)).norm() < 1e-12);
        }
    }

    #[test]
    fn general_plan_propagates() {
        let sys = LtiSystem::new(
            mat(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            mat(2, 1, &[0.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let traj = solve_lti(
            &sys,
            &x0,
            &ControlSignal::constant(DVector::from_vec(vec![1.0])),
            2.0,
        )
        .unwrap();
        assert!(matches!(
            traj.segments()[0].form,
            SegmentForm::Propagated(_)
        ));
        // x2 = e^t − 1, x1 = e^t + t·e^t − e^t + 1 = t·e^t + 1 − ... solved by hand:
        // ẋ2 = x2 + 1 → x2 = e^t − 1;  ẋ1 = x1 + x2 → x1 = e^t + t·e^t − (e^t − 1)
        let t: f64 = 1.3;
        let x2 = t.exp() - 1.0;
        let x1 = t.exp() + t * t.exp() - (t.exp() - 1.0);
        let x = traj.eval(t);
        assert!(
            (x[0] - x1).abs() < 1e-12 && (x[1] - x2).abs() < 1e-12,
            "{x}"
        );
    }

    #[test]
    fn rebased_schedule() {
        let u = ControlSignal::from_switches(
            vec![0.0, 5.0, 10.0],
            vec![
                DVector::from_vec(vec![1.0]),
                DVector::from_vec(vec![2.0]),
                DVector::from_vec(vec![3.0]),
            ],
        )
        .unwrap();
        let r = u.rebased(6.0).unwrap();
        assert_eq!(r.value_at(0.0).unwrap()[0], 2.0);
        assert_eq!(r.switch_times(), &[4.0]);
        assert_eq!(r.value_at(4.0).unwrap()[0], 3.0);
        assert!(u.rebased(-1.0).is_none());
    }
}
