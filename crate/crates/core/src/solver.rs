//! Hierarchical information bottleneck solvers.
//!
//! A problem stacks `n` compressions `S_0 -> S_1 -> ... -> S_n`, where level
//! `k` keeps information about the task variable `T_k`. Each outer iteration
//! sweeps `k = 1..=n` bottom-up; after a level's encoder changes, marginals
//! and decoders for that level and every level above it are refreshed, so the
//! next level always sees the freshest values.
//!
//! Levels are 1-based in the public API, matching `S_1..S_n`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, argmax, invert_raw, kl, matvec, mi_raw, CondTable, Dist};

/// Orientation of the per-level distortion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `KL(p(t_i|s_{k-1}) || p(t_i|s_i))` plus the expected compression cost
    /// of the levels above. This is exact coordinate descent on the
    /// objective, so traces never increase, and it is classical IB at `n = 1`.
    #[default]
    SourceFirst,
    /// `KL(p(t_i|s_i) || p(t_i|s_{k-1}))` with no continuation cost. Follows
    /// the tutorial's hand-worked tables more closely; traces may increase
    /// slightly on some instances.
    ClusterFirst,
}

/// Encoder initialization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    /// Identity encoders; requires `|S_k| = |S_{k-1}|`.
    #[default]
    KroneckerDelta,
    /// Wrapped delta plus `0.01 * u`, `u ~ U[0, 1)`, renormalized.
    SeededPerturbation { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub beta: f64,
    /// H-DIB only; `1` recovers H-IB and `0` gives hard assignments.
    pub alpha: f64,
    pub min_iter: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub init: Init,
    pub rule: UpdateRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            beta: 10.0,
            alpha: 1.0,
            min_iter: 10,
            max_iter: 1000,
            tol: 1e-8,
            init: Init::KroneckerDelta,
            rule: UpdateRule::SourceFirst,
        }
    }
}

impl SolveOptions {
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid(
                "beta",
                format!("{} is not a nonnegative finite number", self.beta),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(
                "alpha",
                format!("{} is outside [0, 1]", self.alpha),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 || self.min_iter > self.max_iter {
            return Err(Error::invalid(
                "iteration bounds",
                format!(
                    "need 1 <= max_iter and min_iter <= max_iter, got {}..{}",
                    self.min_iter, self.max_iter
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective after each outer sweep.
    pub objective_trace: Vec<f64>,
    /// Largest absolute encoder change in each sweep.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

/// An H-IB instance: source prior and one task conditional per level.
#[derive(Clone, Debug, PartialEq)]
pub struct HibProblem {
    prior: Dist,
    task_conditionals: Vec<CondTable>,
    cluster_sizes: Vec<usize>,
}

impl HibProblem {
    /// `cluster_sizes` defaults to `|S_0|` at every level.
    pub fn new(
        prior: Dist,
        task_conditionals: Vec<CondTable>,
        cluster_sizes: Option<Vec<usize>>,
    ) -> Result<Self> {
        if task_conditionals.is_empty() {
            return Err(Error::invalid("problem", "needs at least one level"));
        }
        for (k, t) in task_conditionals.iter().enumerate() {
            if t.cols() != prior.len() {
                return Err(Error::dim(
                    format!("task conditional {}", k + 1),
                    prior.len(),
                    t.cols(),
                ));
            }
        }
        let n = task_conditionals.len();
        let cluster_sizes = cluster_sizes.unwrap_or_else(|| vec![prior.len(); n]);
        if cluster_sizes.len() != n {
            return Err(Error::dim("cluster sizes", n, cluster_sizes.len()));
        }
        if let Some(k) = cluster_sizes.iter().position(|&m| m == 0) {
            return Err(Error::invalid(
                "cluster sizes",
                format!("level {} has no clusters", k + 1),
            ));
        }
        Ok(Self {
            prior,
            task_conditionals,
            cluster_sizes,
        })
    }

    pub fn n(&self) -> usize {
        self.task_conditionals.len()
    }

    pub fn prior(&self) -> &Dist {
        &self.prior
    }

    pub fn task_conditionals(&self) -> &[CondTable] {
        &self.task_conditionals
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    /// Size of `S_k`, with `S_0` the source.
    fn size(&self, k: usize) -> usize {
        if k == 0 {
            self.prior.len()
        } else {
            self.cluster_sizes[k - 1]
        }
    }
}

/// Encoders `P(S_k|S_{k-1})`, marginals `p(S_k)` and decoders `P(T_k|S_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HibState {
    prior: Dist,
    encoders: Vec<CondTable>,
    marginals: Vec<Dist>,
    decoders: Vec<CondTable>,
}

impl HibState {
    /// Derives marginals and decoders from the given encoders.
    pub fn from_encoders(problem: &HibProblem, encoders: Vec<CondTable>) -> Result<Self> {
        if encoders.len() != problem.n() {
            return Err(Error::dim("encoders", problem.n(), encoders.len()));
        }
        for (k, e) in encoders.iter().enumerate() {
            if e.cols() != problem.size(k) || e.rows() != problem.size(k + 1) {
                return Err(Error::dim(
                    format!("encoder {}", k + 1),
                    problem.size(k) * problem.size(k + 1),
                    e.rows() * e.cols(),
                ));
            }
        }
        Ok(Work::new(problem, encoders).into_state())
    }

    /// Assembles a state from explicit parts, checking shapes only.
    pub fn from_parts(
        prior: Dist,
        encoders: Vec<CondTable>,
        marginals: Vec<Dist>,
        decoders: Vec<CondTable>,
    ) -> Result<Self> {
        let n = encoders.len();
        if marginals.len() != n || decoders.len() != n {
            return Err(Error::dim(
                "state levels",
                n,
                marginals.len().min(decoders.len()),
            ));
        }
        let mut below = prior.len();
        for k in 0..n {
            if encoders[k].cols() != below {
                return Err(Error::dim(
                    format!("encoder {} columns", k + 1),
                    below,
                    encoders[k].cols(),
                ));
            }
            let m = encoders[k].rows();
            if marginals[k].len() != m {
                return Err(Error::dim(
                    format!("marginal {}", k + 1),
                    m,
                    marginals[k].len(),
                ));
            }
            if decoders[k].cols() != m {
                return Err(Error::dim(
                    format!("decoder {} columns", k + 1),
                    m,
                    decoders[k].cols(),
                ));
            }
            below = m;
        }
        Ok(Self {
            prior,
            encoders,
            marginals,
            decoders,
        })
    }

    pub fn n(&self) -> usize {
        self.encoders.len()
    }

    pub fn prior(&self) -> &Dist {
        &self.prior
    }

    pub fn encoders(&self) -> &[CondTable] {
        &self.encoders
    }

    pub fn marginals(&self) -> &[Dist] {
        &self.marginals
    }

    pub fn decoders(&self) -> &[CondTable] {
        &self.decoders
    }

    /// Encoder `P(S_k|S_{k-1})`, 1-based.
    pub fn encoder(&self, k: usize) -> &CondTable {
        &self.encoders[k - 1]
    }

    pub fn marginal(&self, k: usize) -> &Dist {
        &self.marginals[k - 1]
    }

    pub fn decoder(&self, k: usize) -> &CondTable {
        &self.decoders[k - 1]
    }

    /// Composite encoder `P(S_k|S_0)`.
    pub fn composite(&self, k: usize) -> CondTable {
        let mut c = self.encoders[0].clone();
        for e in &self.encoders[1..k] {
            c = prob::chain(e, &c).expect("state shapes checked at construction");
        }
        c
    }

    fn lower_marginal(&self, k: usize) -> &Dist {
        if k == 1 {
            &self.prior
        } else {
            &self.marginals[k - 2]
        }
    }

    pub fn into_parts(self) -> (Dist, Vec<CondTable>, Vec<Dist>, Vec<CondTable>) {
        (self.prior, self.encoders, self.marginals, self.decoders)
    }
}

/// Mutable working copy used inside a solve.
struct Work<'a> {
    problem: &'a HibProblem,
    enc: Vec<CondTable>,
    marg: Vec<Vec<f64>>,
    /// `P(S_k|S_0)` per level.
    comp: Vec<CondTable>,
    dec: Vec<CondTable>,
}

impl<'a> Work<'a> {
    fn new(problem: &'a HibProblem, enc: Vec<CondTable>) -> Self {
        let n = problem.n();
        let mut w = Self {
            problem,
            marg: Vec::with_capacity(n),
            comp: Vec::with_capacity(n),
            dec: Vec::with_capacity(n),
            enc,
        };
        for k in 0..n {
            let (m, c, d) = w.derived(k);
            w.marg.push(m);
            w.comp.push(c);
            w.dec.push(d);
        }
        w
    }

    fn from_state(problem: &'a HibProblem, state: &HibState) -> Self {
        Self::new(problem, state.encoders.clone())
    }

    fn lower_marg(&self, k: usize) -> &[f64] {
        if k == 0 {
            self.problem.prior.values()
        } else {
            &self.marg[k - 1]
        }
    }

    /// Marginal, composite and decoder for 0-based level `k` given the levels below.
    fn derived(&self, k: usize) -> (Vec<f64>, CondTable, CondTable) {
        let marg = matvec(&self.enc[k], self.lower_marg(k));
        let comp = if k == 0 {
            self.enc[0].clone()
        } else {
            prob::chain(&self.enc[k], &self.comp[k - 1]).expect("shapes")
        };
        let task = &self.problem.task_conditionals[k];
        let inv = invert_raw(&comp, self.problem.prior.values(), &marg);
        let columns = (0..marg.len())
            .map(|s| {
                if marg[s] > 0.0 {
                    matvec(task, &inv.column(s))
                } else {
                    vec![1.0 / task.rows() as f64; task.rows()]
                }
            })
            .collect();
        let dec = CondTable::from_computed_columns(task.rows(), columns);
        (marg, comp, dec)
    }

    fn refresh_from(&mut self, k: usize) {
        for j in k..self.problem.n() {
            let (m, c, d) = self.derived(j);
            self.marg[j] = m;
            self.comp[j] = c;
            self.dec[j] = d;
        }
    }

    /// `P(T_i|S_{k})` for 0-based `i` and source level `k` (`k = 0` is `S_0`).
    fn lifted(&self, i: usize, k: usize) -> CondTable {
        let task = &self.problem.task_conditionals[i];
        if k == 0 {
            return task.clone();
        }
        let inv = invert_raw(
            &self.comp[k - 1],
            self.problem.prior.values(),
            &self.marg[k - 1],
        );
        prob::chain(task, &inv).expect("shapes")
    }

    /// `P(S_i|S_{k+1})` for 0-based levels `i >= k`, as weights `w[s_i][s_k]`.
    fn upward(&self, k: usize, i: usize) -> CondTable {
        let mut w = CondTable::identity(self.enc[k].rows());
        for e in &self.enc[k + 1..=i] {
            w = prob::chain(e, &w).expect("shapes");
        }
        w
    }

    /// Distortion matrix for 0-based level `k`: rows `s_k`, columns `s_{k-1}`.
    fn distortion(&self, k: usize, rule: UpdateRule) -> Vec<Vec<f64>> {
        let rows = self.enc[k].rows();
        let cols = self.enc[k].cols();
        let mut d = vec![vec![0.0; cols]; rows];
        for i in k..self.problem.n() {
            let lower = self.lifted(i, k);
            let dec = &self.dec[i];
            let w = self.upward(k, i);
            // kl_table[s_i][s_{k-1}]
            let dec_cols: Vec<Vec<f64>> = (0..dec.cols()).map(|s| dec.column(s)).collect();
            let low_cols: Vec<Vec<f64>> = (0..cols).map(|b| lower.column(b)).collect();
            let kl_table: Vec<Vec<f64>> = dec_cols
                .iter()
                .map(|dc| {
                    low_cols
                        .iter()
                        .map(|lc| match rule {
                            UpdateRule::SourceFirst => kl(lc, dc),
                            UpdateRule::ClusterFirst => kl(dc, lc),
                        })
                        .collect()
                })
                .collect();
            for (a, row) in d.iter_mut().enumerate() {
                for (si, kl_row) in kl_table.iter().enumerate() {
                    let weight = w.get(si, a);
                    if weight == 0.0 {
                        continue;
                    }
                    for (cell, v) in row.iter_mut().zip(kl_row) {
                        *cell += weight * v;
                    }
                }
            }
        }
        d
    }

    /// Expected compression cost of the levels above `k`, starting from each `s_k`.
    fn continuation(&self, k: usize) -> Vec<f64> {
        let m = self.enc[k].rows();
        let mut c = vec![0.0; m];
        // p(s_{i-1}|s_k), starting at the identity
        let mut w = CondTable::identity(m);
        for i in k + 1..self.problem.n() {
            let e = &self.enc[i];
            let q = &self.marg[i];
            let per: Vec<f64> = (0..e.cols()).map(|a| kl(&e.column(a), q)).collect();
            for (s, cs) in c.iter_mut().enumerate() {
                // unreachable clusters can carry an infinite cost; they weigh nothing
                *cs += (0..e.cols())
                    .filter(|&a| w.get(a, s) > 0.0)
                    .map(|a| per[a] * w.get(a, s))
                    .sum::<f64>();
            }
            w = prob::chain(e, &w).expect("shapes");
        }
        c
    }

    /// Per-cluster log-weight added to `-beta * d`.
    fn log_weights(&self, k: usize, opts: &SolveOptions, alpha: f64) -> Vec<f64> {
        let cont = match opts.rule {
            UpdateRule::SourceFirst => self.continuation(k),
            UpdateRule::ClusterFirst => vec![0.0; self.enc[k].rows()],
        };
        self.marg[k]
            .iter()
            .zip(cont)
            .map(|(&q, c)| {
                if q > 0.0 {
                    let lq = q.ln();
                    let lq = if alpha > 0.0 { lq / alpha } else { lq };
                    lq - c
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// New encoder for 0-based level `k` from the current values.
    fn closed_form(&self, k: usize, opts: &SolveOptions, alpha: f64) -> Result<CondTable> {
        let d = self.distortion(k, opts.rule);
        let lw = self.log_weights(k, opts, alpha);
        let rows = lw.len();
        let cols = self.enc[k].cols();
        let mut columns = Vec::with_capacity(cols);
        for b in 0..cols {
            let mut logits: Vec<f64> = (0..rows)
                .map(|a| {
                    let cost = if d[a][b].is_infinite() {
                        if opts.beta > 0.0 {
                            f64::INFINITY
                        } else {
                            0.0
                        }
                    } else {
                        opts.beta * d[a][b]
                    };
                    lw[a] - cost
                })
                .collect();
            let mut peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if peak == f64::NEG_INFINITY && self.lower_marg(k)[b] == 0.0 {
                // a massless source column never enters the objective; park it by weight alone
                logits = lw.clone();
                peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            if peak == f64::NEG_INFINITY {
                return Err(Error::DegenerateColumn {
                    level: k + 1,
                    column: b,
                });
            }
            if alpha == 0.0 {
                let mut col = vec![0.0; rows];
                col[argmax(&logits)] = 1.0;
                columns.push(col);
            } else {
                let mut col: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
                let z: f64 = col.iter().sum();
                col.iter_mut().for_each(|v| *v /= z);
                columns.push(col);
            }
        }
        Ok(CondTable::from_computed_columns(rows, columns))
    }

    /// Updates level `k` in place and returns the largest encoder change.
    fn update(&mut self, k: usize, opts: &SolveOptions, alpha: f64) -> Result<f64> {
        let next = self.closed_form(k, opts, alpha)?;
        let change = next.max_abs_diff(&self.enc[k]);
        self.enc[k] = next;
        self.refresh_from(k);
        Ok(change)
    }

    fn objective(&self, beta: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..self.problem.n() {
            total += mi_raw(&self.enc[k], self.lower_marg(k));
            total -= beta * mi_raw(&self.dec[k], &self.marg[k]);
        }
        total
    }

    fn into_state(self) -> HibState {
        let mut labels = self
            .problem
            .task_conditionals
            .iter()
            .map(|t| t.row_labels().map(<[String]>::to_vec));
        let mut dec = self.dec;
        for d in &mut dec {
            d.set_labels(labels.next().flatten(), None);
        }
        HibState {
            prior: self.problem.prior.clone(),
            encoders: self.enc,
            marginals: self.marg.into_iter().map(Dist::from_computed).collect(),
            decoders: dec,
        }
    }
}

fn check_state(problem: &HibProblem, state: &HibState) -> Result<()> {
    if state.n() != problem.n() {
        return Err(Error::dim("state levels", problem.n(), state.n()));
    }
    for k in 0..problem.n() {
        let e = &state.encoders[k];
        if e.cols() != problem.size(k) {
            return Err(Error::dim(
                format!("encoder {} columns", k + 1),
                problem.size(k),
                e.cols(),
            ));
        }
        if e.rows() != problem.size(k + 1) {
            return Err(Error::dim(
                format!("encoder {} rows", k + 1),
                problem.size(k + 1),
                e.rows(),
            ));
        }
        if state.decoders[k].rows() != problem.task_conditionals[k].rows() {
            return Err(Error::dim(
                format!("decoder {} rows", k + 1),
                problem.task_conditionals[k].rows(),
                state.decoders[k].rows(),
            ));
        }
    }
    Ok(())
}

fn check_level(problem: &HibProblem, k: usize) -> Result<()> {
    if k == 0 || k > problem.n() {
        return Err(Error::invalid(
            "level",
            format!("{k} is outside 1..={}", problem.n()),
        ));
    }
    Ok(())
}

/// `Σ_k I(S_{k-1};S_k) - β Σ_k I(T_k;S_k)` using the state's marginals and decoders.
pub fn objective(problem: &HibProblem, state: &HibState, beta: f64) -> Result<f64> {
    check_state(problem, state)?;
    let mut total = 0.0;
    for k in 1..=problem.n() {
        total += prob::mutual_information(state.encoder(k), state.lower_marginal(k))?;
        total -= beta * prob::mutual_information(state.decoder(k), state.marginal(k))?;
    }
    Ok(total)
}

/// Distortion `d(s_k, s_{k-1})` at 1-based level `k`; rows are `s_k`.
///
/// Conditionals are lifted from the state's encoders, so marginals and
/// decoders are recomputed from them rather than trusted.
pub fn distortion(
    problem: &HibProblem,
    state: &HibState,
    k: usize,
    rule: UpdateRule,
) -> Result<Vec<Vec<f64>>> {
    check_state(problem, state)?;
    check_level(problem, k)?;
    Ok(Work::from_state(problem, state).distortion(k - 1, rule))
}

/// One encoder update at 1-based level `k`, followed by the marginal and
/// decoder refresh for that level and the levels above.
pub fn update_level(
    problem: &HibProblem,
    state: &HibState,
    k: usize,
    opts: &SolveOptions,
) -> Result<HibState> {
    opts.validate()?;
    check_state(problem, state)?;
    check_level(problem, k)?;
    let mut w = Work::from_state(problem, state);
    w.update(k - 1, opts, 1.0)?;
    Ok(w.into_state())
}

/// Largest change any encoder entry would see if its closed-form update were
/// recomputed from `state` as is.
pub fn fixed_point_residual(
    problem: &HibProblem,
    state: &HibState,
    opts: &SolveOptions,
) -> Result<f64> {
    check_state(problem, state)?;
    let w = Work::from_state(problem, state);
    let mut worst = 0.0f64;
    for k in 0..problem.n() {
        let next = w.closed_form(k, opts, 1.0)?;
        worst = worst.max(next.max_abs_diff(&w.enc[k]));
    }
    Ok(worst)
}

/// Initial encoders for `problem` under `init`.
pub fn initial_state(problem: &HibProblem, init: Init) -> Result<HibState> {
    Ok(Work::new(problem, initial_encoders(problem, init)?).into_state())
}

fn initial_encoders(problem: &HibProblem, init: Init) -> Result<Vec<CondTable>> {
    match init {
        Init::KroneckerDelta => (1..=problem.n())
            .map(|k| {
                let (rows, cols) = (problem.size(k), problem.size(k - 1));
                if rows != cols {
                    return Err(Error::invalid(
                        "initialization",
                        format!(
                            "delta init needs |S_{k}| = |S_{}|, got {rows} and {cols}",
                            k - 1
                        ),
                    ));
                }
                Ok(CondTable::identity(rows))
            })
            .collect(),
        Init::SeededPerturbation { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((1..=problem.n())
                .map(|k| {
                    let (rows, cols) = (problem.size(k), problem.size(k - 1));
                    let columns = (0..cols)
                        .map(|j| {
                            (0..rows)
                                .map(|i| {
                                    let base = if i == j % rows { 1.0 } else { 0.0 };
                                    base + 0.01 * rng.random::<f64>()
                                })
                                .collect::<Vec<f64>>()
                        })
                        .map(|c| {
                            let z: f64 = c.iter().sum();
                            c.into_iter().map(|v| v / z).collect()
                        })
                        .collect();
                    CondTable::from_computed_columns(rows, columns)
                })
                .collect())
        }
    }
}

fn run<F>(
    problem: &HibProblem,
    opts: &SolveOptions,
    alpha: f64,
    mut observer: F,
) -> Result<(HibState, SolveReport)>
where
    F: FnMut(usize, &HibState),
{
    opts.validate()?;
    let mut w = Work::new(problem, initial_encoders(problem, opts.init)?);
    let mut prev = w.objective(opts.beta);
    let mut report = SolveReport {
        objective_trace: Vec::new(),
        residual_trace: Vec::new(),
        iterations: 0,
        converged: false,
        final_residual: f64::INFINITY,
    };
    while report.iterations < opts.max_iter {
        let mut residual = 0.0f64;
        for k in 0..problem.n() {
            residual = residual.max(w.update(k, opts, alpha)?);
        }
        let cur = w.objective(opts.beta);
        report.iterations += 1;
        report.objective_trace.push(cur);
        report.residual_trace.push(residual);
        report.final_residual = residual;
        observer(report.iterations, &HibState::snapshot(&w));
        if report.iterations >= opts.min_iter && (prev - cur).abs() < opts.tol {
            report.converged = true;
            break;
        }
        prev = cur;
    }
    Ok((w.into_state(), report))
}

impl HibState {
    fn snapshot(w: &Work<'_>) -> Self {
        Work {
            problem: w.problem,
            enc: w.enc.clone(),
            marg: w.marg.clone(),
            comp: Vec::new(),
            dec: w.dec.clone(),
        }
        .into_state()
    }
}

/// Runs bottom-up sweeps until the objective settles or `max_iter` is hit.
pub fn solve_hib(problem: &HibProblem, opts: &SolveOptions) -> Result<(HibState, SolveReport)> {
    run(problem, opts, 1.0, |_, _| {})
}

/// [`solve_hib`] with a callback receiving the state after every sweep.
pub fn solve_hib_observed<F>(
    problem: &HibProblem,
    opts: &SolveOptions,
    observer: F,
) -> Result<(HibState, SolveReport)>
where
    F: FnMut(usize, &HibState),
{
    run(problem, opts, 1.0, observer)
}

/// Single-level IB: compress the source while keeping information about `task`.
pub fn solve_ib(
    prior: &Dist,
    task: &CondTable,
    clusters: Option<usize>,
    opts: &SolveOptions,
) -> Result<(HibState, SolveReport)> {
    let problem = HibProblem::new(prior.clone(), vec![task.clone()], clusters.map(|m| vec![m]))?;
    solve_hib(&problem, opts)
}

/// Deterministic variant weighted by `opts.alpha`. `alpha = 1` is H-IB and
/// `alpha = 0` assigns each column to its best cluster outright.
pub fn solve_hdib(problem: &HibProblem, opts: &SolveOptions) -> Result<(HibState, SolveReport)> {
    run(problem, opts, opts.alpha, |_, _| {})
}

pub fn solve_hdib_observed<F>(
    problem: &HibProblem,
    opts: &SolveOptions,
    observer: F,
) -> Result<(HibState, SolveReport)>
where
    F: FnMut(usize, &HibState),
{
    run(problem, opts, opts.alpha, observer)
}

/// Solves each level as an independent IB problem, feeding the previous
/// level's clusters in as the source. Returns one solution per level.
pub fn solve_sequential_ib(
    problem: &HibProblem,
    opts: &SolveOptions,
) -> Result<Vec<(HibState, SolveReport)>> {
    let mut out: Vec<(HibState, SolveReport)> = Vec::with_capacity(problem.n());
    let mut source_prior = problem.prior.clone();
    // P(S_{k-1}|S_0) for lifting the raw task conditionals
    let mut composite: Option<CondTable> = None;
    for k in 0..problem.n() {
        let raw = &problem.task_conditionals[k];
        let task = match &composite {
            None => raw.clone(),
            Some(c) => {
                let inv = invert_raw(c, problem.prior.values(), source_prior.values());
                prob::chain(raw, &inv)?
            }
        };
        let (state, report) = solve_ib(&source_prior, &task, Some(problem.cluster_sizes[k]), opts)?;
        let enc = state.encoder(1).clone();
        composite = Some(match composite {
            None => enc,
            Some(c) => prob::chain(&enc, &c)?,
        });
        source_prior = state.marginal(1).clone();
        out.push((state, report));
    }
    Ok(out)
}

/// Number of clusters at 1-based level `k` whose mass exceeds `mass_threshold`.
pub fn effective_cluster_count(state: &HibState, k: usize, mass_threshold: f64) -> usize {
    state
        .marginal(k)
        .values()
        .iter()
        .filter(|&&m| m > mass_threshold)
        .count()
}
