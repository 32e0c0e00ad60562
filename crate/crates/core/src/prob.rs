//! Discrete probability primitives.
//!
//! Two value types carry everything the solver touches: [`Dist`], a
//! probability vector, and [`CondTable`], a column-stochastic table whose
//! entry `(i, j)` is `P(row_i | col_j)`. All logarithms are natural.
//!
//! | Function | Computes |
//! |----------|----------|
//! | [`kl_divergence`] | `Σ p log(p/q)`, `+inf` on support mismatch |
//! | [`entropy`] | `-Σ p log p` |
//! | [`mutual_information`] | `Σ p(x|y) p(y) log(p(x|y)/p(x))` |
//! | [`chain`] | `P(z|x) = Σ_y P(z|y) P(y|x)` |
//! | [`marginal`] | `p(x) = Σ_y P(x|y) p(y)` |
//! | [`bayes_invert`] | `P(y|x) = P(x|y) p(y) / p(x)` |

use crate::error::{Error, Result};

/// Tolerance used when validating that masses sum to one.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Columns are only renormalized when accumulated drift exceeds this.
const RENORM_DRIFT: f64 = 1e-12;

/// A probability vector over a finite alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Dist {
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl Dist {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_mass(&values, "distribution")?;
        Ok(Self {
            values,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.len() {
            return Err(Error::dim(
                "distribution labels",
                self.values.len(),
                labels.len(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty alphabet");
        Self {
            values: vec![1.0 / n as f64; n],
            labels: None,
        }
    }

    /// Point mass on `index`.
    pub fn delta(n: usize, index: usize) -> Self {
        assert!(index < n);
        let mut values = vec![0.0; n];
        values[index] = 1.0;
        Self {
            values,
            labels: None,
        }
    }

    /// Builds from values produced by arithmetic on valid inputs, absorbing
    /// float drift.
    pub(crate) fn from_computed(mut values: Vec<f64>) -> Self {
        renormalize(&mut values);
        Self {
            values,
            labels: None,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Column-stochastic conditional probability table, stored row-major.
///
/// Entry `(i, j)` is `P(row = i | col = j)`; every column sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct CondTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl CondTable {
    /// Validating constructor over row-major `data`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(
                "conditional table",
                "needs at least one row and column",
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "conditional table data",
                rows * cols,
                data.len(),
            ));
        }
        let table = Self {
            rows,
            cols,
            data,
            row_labels: None,
            col_labels: None,
        };
        for j in 0..cols {
            validate_mass(&table.column(j), &format!("conditional table column {j}"))?;
        }
        Ok(table)
    }

    /// Builds from a list of rows, as tables are usually written down.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::dim(
                format!("conditional table row {i}"),
                cols,
                r.len(),
            ));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds from a list of columns, each a distribution over the rows.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::dim(
                    format!("conditional table column {j}"),
                    rows,
                    c.len(),
                ));
            }
            for (i, &v) in c.iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Self::new(rows, cols, data)
    }

    pub(crate) fn from_computed_columns(rows: usize, columns: Vec<Vec<f64>>) -> Self {
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, mut c) in columns.into_iter().enumerate() {
            debug_assert_eq!(c.len(), rows);
            renormalize(&mut c);
            for (i, v) in c.into_iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Self {
            rows,
            cols,
            data,
            row_labels: None,
            col_labels: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
            row_labels: None,
            col_labels: None,
        }
    }

    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0 / rows as f64; rows * cols],
            row_labels: None,
            col_labels: None,
        }
    }

    pub fn with_row_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::dim("row labels", self.rows, labels.len()));
        }
        self.row_labels = Some(labels);
        Ok(self)
    }

    pub fn with_col_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.cols {
            return Err(Error::dim("column labels", self.cols, labels.len()));
        }
        self.col_labels = Some(labels);
        Ok(self)
    }

    pub(crate) fn set_labels(&mut self, rows: Option<Vec<String>>, cols: Option<Vec<String>>) {
        if rows.as_ref().is_none_or(|r| r.len() == self.rows) {
            self.row_labels = rows;
        }
        if cols.as_ref().is_none_or(|c| c.len() == self.cols) {
            self.col_labels = cols;
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    /// Row-major copy of the entries.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Row index of the largest entry in `col`; ties go to the lowest index.
    pub fn argmax_column(&self, col: usize) -> usize {
        argmax(&self.column(col))
    }

    /// Largest absolute entrywise difference against a table of equal shape.
    pub fn max_abs_diff(&self, other: &CondTable) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn validate_mass(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(what, "empty"));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::invalid(
            what,
            format!("entry {i} = {v} is not a nonnegative finite number"),
        ));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(
            what,
            format!("entries sum to {total}, not 1"),
        ));
    }
    Ok(())
}

fn renormalize(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 && (total - 1.0).abs() > RENORM_DRIFT {
        values.iter_mut().for_each(|v| *v /= total);
    }
}

/// KL divergence over raw slices, natural log. `0 log(0/q) = 0`.
pub(crate) fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            total += pi * (pi / qi).ln();
        }
    }
    total.max(0.0)
}

/// `KL(p || q)` in nats; `+inf` when `p` has mass where `q` has none.
pub fn kl_divergence(p: &Dist, q: &Dist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("kl_divergence", p.len(), q.len()));
    }
    Ok(kl(p.values(), q.values()))
}

pub(crate) fn entropy_of(values: &[f64]) -> f64 {
    -values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Shannon entropy in nats.
pub fn entropy(p: &Dist) -> f64 {
    entropy_of(p.values()).max(0.0)
}

/// `I(X;Y)` for the joint `P(x|y) p(y)`.
pub fn mutual_information(cond: &CondTable, py: &Dist) -> Result<f64> {
    if cond.cols() != py.len() {
        return Err(Error::dim("mutual_information", cond.cols(), py.len()));
    }
    Ok(mi_raw(cond, py.values()))
}

pub(crate) fn mi_raw(cond: &CondTable, py: &[f64]) -> f64 {
    let px = matvec(cond, py);
    let mut total = 0.0;
    for (j, &pj) in py.iter().enumerate() {
        if pj <= 0.0 {
            continue;
        }
        for (i, &pxi) in px.iter().enumerate() {
            let c = cond.get(i, j);
            if c > 0.0 {
                total += pj * c * (c / pxi).ln();
            }
        }
    }
    total.max(0.0)
}

pub(crate) fn matvec(cond: &CondTable, v: &[f64]) -> Vec<f64> {
    (0..cond.rows())
        .map(|i| cond.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Markov composition `P(z|x) = Σ_y P(z|y) P(y|x)`.
pub fn chain(outer: &CondTable, inner: &CondTable) -> Result<CondTable> {
    if outer.cols() != inner.rows() {
        return Err(Error::dim("chain", outer.cols(), inner.rows()));
    }
    let columns = (0..inner.cols())
        .map(|x| matvec(outer, &inner.column(x)))
        .collect();
    let mut out = CondTable::from_computed_columns(outer.rows(), columns);
    out.set_labels(
        outer.row_labels().map(<[String]>::to_vec),
        inner.col_labels().map(<[String]>::to_vec),
    );
    Ok(out)
}

/// Marginal `p(x) = Σ_y P(x|y) p(y)`.
pub fn marginal(cond: &CondTable, py: &Dist) -> Result<Dist> {
    if cond.cols() != py.len() {
        return Err(Error::dim("marginal", cond.cols(), py.len()));
    }
    let mut out = Dist::from_computed(matvec(cond, py.values()));
    out.labels = cond.row_labels().map(<[String]>::to_vec);
    Ok(out)
}

/// Bayes inversion of `P(x|y)` into `P(y|x)` given both marginals.
///
/// Columns for outcomes with `p(x) = 0` are set uniform.
pub fn bayes_invert(cond: &CondTable, py: &Dist, px: &Dist) -> Result<CondTable> {
    if cond.cols() != py.len() {
        return Err(Error::dim("bayes_invert prior", cond.cols(), py.len()));
    }
    if cond.rows() != px.len() {
        return Err(Error::dim("bayes_invert marginal", cond.rows(), px.len()));
    }
    let implied = matvec(cond, py.values());
    if let Some((i, (a, b))) = implied
        .iter()
        .zip(px.values())
        .enumerate()
        .find(|(_, (a, b))| (*a - *b).abs() > STOCHASTIC_TOL)
    {
        return Err(Error::invalid(
            "bayes_invert marginal",
            format!("p(x_{i}) = {b} but the table implies {a}"),
        ));
    }
    let mut out = invert_raw(cond, py.values(), px.values());
    out.set_labels(
        cond.col_labels().map(<[String]>::to_vec),
        cond.row_labels().map(<[String]>::to_vec),
    );
    Ok(out)
}

pub(crate) fn invert_raw(cond: &CondTable, py: &[f64], px: &[f64]) -> CondTable {
    let ny = cond.cols();
    let columns = (0..cond.rows())
        .map(|i| {
            if px[i] > 0.0 {
                (0..ny).map(|j| cond.get(i, j) * py[j] / px[i]).collect()
            } else {
                vec![1.0 / ny as f64; ny]
            }
        })
        .collect();
    CondTable::from_computed_columns(ny, columns)
}
