//! Per-node regression problems built from a sampled trajectory.
//!
//! For node `i` the columns are node-major, function-minor, with the constant
//! last:
//!
//! ```text
//! [ f_1(x_0 - x_i) .. f_F(x_0 - x_i) | ... | f_1(x_{n-1} - x_i) .. f_F(x_{n-1} - x_i) | 1 ]
//! ```
//!
//! Row `k` is evaluated at `t_k` and paired with the forward difference
//! `y_k = (phi_i(t_{k+1}) - phi_i(t_k)) / dt`. The self block `j = i` is kept,
//! so `cos(x_i - x_i)` duplicates the constant column.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kuramoto::{KuramotoModel, TimeSeries};
use crate::problem::{validate_problem, RegressionProblem};

/// Label of the unit column.
pub const CONSTANT_LABEL: &str = "const";

/// Pairwise candidate `f(x_j, x_i)`.
#[derive(Clone, Copy)]
pub struct CandidateFunction {
    pub label: &'static str,
    pub eval: fn(f64, f64) -> f64,
}

impl std::fmt::Debug for CandidateFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("CandidateFunction").field(&self.label).finish()
    }
}

impl PartialEq for CandidateFunction {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
    }
}

impl CandidateFunction {
    pub fn sine() -> Self {
        Self {
            label: "sin",
            eval: |xj, xi| (xj - xi).sin(),
        }
    }

    pub fn cosine() -> Self {
        Self {
            label: "cos",
            eval: |xj, xi| (xj - xi).cos(),
        }
    }

    /// Parses `sin` or `cos`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim() {
            "sin" => Ok(Self::sine()),
            "cos" => Ok(Self::cosine()),
            other => Err(Error::InvalidConfig(format!("unknown candidate function `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionarySpec {
    pub pairwise_functions: Vec<CandidateFunction>,
    pub include_constant: bool,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            pairwise_functions: vec![CandidateFunction::sine(), CandidateFunction::cosine()],
            include_constant: true,
        }
    }
}

impl DictionarySpec {
    pub fn validate(&self) -> Result<()> {
        if self.pairwise_functions.is_empty() && !self.include_constant {
            return Err(Error::InvalidConfig("dictionary has no functions".into()));
        }
        for (k, f) in self.pairwise_functions.iter().enumerate() {
            if self.pairwise_functions[..k].iter().any(|g| g.label == f.label) {
                return Err(Error::InvalidLabels(format!("duplicate function `{}`", f.label)));
            }
        }
        Ok(())
    }

    /// Number of columns for an `n`-node network.
    pub fn width(&self, n: usize) -> usize {
        n * self.pairwise_functions.len() + usize::from(self.include_constant)
    }

    /// Column index of function `f` applied to source node `j`.
    pub fn column(&self, j: usize, f: usize) -> usize {
        j * self.pairwise_functions.len() + f
    }

    /// `"sin:3"`, `"cos:3"`, ..., `"const"`.
    pub fn labels(&self, n: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width(n));
        for j in 0..n {
            for f in &self.pairwise_functions {
                out.push(format!("{}:{j}", f.label));
            }
        }
        if self.include_constant {
            out.push(CONSTANT_LABEL.to_string());
        }
        out
    }
}

/// Dictionary rows for every sample but the last.
pub fn dictionary_matrix(series: &TimeSeries, node: usize, spec: &DictionarySpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = series.nodes();
    if node >= n {
        return Err(Error::DimensionMismatch {
            field: "node",
            expected: n,
            found: node,
        });
    }
    if series.phases.nrows() < 2 {
        return Err(Error::DimensionMismatch {
            field: "time points",
            expected: 2,
            found: series.phases.nrows(),
        });
    }
    let m = series.steps();
    let nf = spec.pairwise_functions.len();
    let mut a = DMatrix::zeros(m, spec.width(n));
    for k in 0..m {
        let xi = series.phases[(k, node)];
        for j in 0..n {
            let xj = series.phases[(k, j)];
            for (f, func) in spec.pairwise_functions.iter().enumerate() {
                a[(k, j * nf + f)] = (func.eval)(xj, xi);
            }
        }
        if spec.include_constant {
            a[(k, n * nf)] = 1.0;
        }
    }
    Ok(a)
}

/// Finite-difference increments of `node`.
pub fn increments(series: &TimeSeries, node: usize) -> DVector<f64> {
    let m = series.steps();
    DVector::from_fn(m, |k, _| {
        (series.phases[(k + 1, node)] - series.phases[(k, node)]) / series.dt
    })
}

pub fn build_node_problem(
    series: &TimeSeries,
    node: usize,
    spec: &DictionarySpec,
    sigma2: f64,
) -> Result<RegressionProblem> {
    let a = dictionary_matrix(series, node, spec)?;
    let y = increments(series, node);
    validate_problem(RegressionProblem {
        y,
        a,
        sigma2,
        column_labels: spec.labels(series.nodes()),
    })
}

/// Embeds node `node` of `model`: `w_ij` on the sine columns, `omega_i` on
/// the constant column, zero elsewhere.
pub fn true_weight_vector(model: &KuramotoModel, node: usize, spec: &DictionarySpec) -> Result<DVector<f64>> {
    let n = model.nodes();
    if node >= n {
        return Err(Error::DimensionMismatch {
            field: "node",
            expected: n,
            found: node,
        });
    }
    let sin = spec
        .pairwise_functions
        .iter()
        .position(|f| f.label == "sin")
        .ok_or_else(|| Error::UnrepresentableTruth("no sine coupling column".into()))?;
    if !spec.include_constant && model.omega[node] != 0.0 {
        return Err(Error::UnrepresentableTruth("no constant column for omega".into()));
    }
    let mut w = DVector::zeros(spec.width(n));
    for j in 0..n {
        if j != node {
            w[spec.column(j, sin)] = model.coupling[(node, j)];
        }
    }
    if spec.include_constant {
        w[n * spec.pairwise_functions.len()] = model.omega[node];
    }
    Ok(w)
}

/// Half-width of the moving average used by [`estimate_sigma2`].
pub const TREND_HALF_WIDTH: usize = 4;

/// Sample variance of `y` around its centred moving average (window
/// `2 * TREND_HALF_WIDTH + 1`, truncated at the ends). Each squared residual
/// is divided by `1 - 1/L` for its window length `L`.
pub fn estimate_sigma2(y: &DVector<f64>) -> f64 {
    let m = y.len();
    if m < 2 {
        return 0.0;
    }
    let h = TREND_HALF_WIDTH;
    let mut ss = 0.0;
    for k in 0..m {
        let lo = k.saturating_sub(h);
        let hi = (k + h + 1).min(m);
        let len = (hi - lo) as f64;
        let mean = y.rows(lo, hi - lo).sum() / len;
        let r = y[k] - mean;
        ss += r * r / (1.0 - 1.0 / len).max(f64::EPSILON);
    }
    ss / m as f64
}

/// Groups of identical columns (at least two members each), in ascending
/// order of their first member.
pub fn duplicate_column_groups(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = a.ncols();
    let mut assigned = vec![false; n];
    let mut groups = Vec::new();
    for j in 0..n {
        if assigned[j] {
            continue;
        }
        let mut group = vec![j];
        for k in j + 1..n {
            if !assigned[k] && a.column(j) == a.column(k) {
                group.push(k);
                assigned[k] = true;
            }
        }
        if group.len() > 1 {
            groups.push(group);
        }
    }
    groups
}

/// Moves the weight of every duplicate group onto its last member. The
/// prediction `A w` is unchanged; for the Kuramoto dictionary this credits
/// the self-cosine column to the constant column.
pub fn fold_duplicates(w: &DVector<f64>, groups: &[Vec<usize>]) -> DVector<f64> {
    let mut out = w.clone();
    for g in groups {
        let Some((&last, rest)) = g.split_last() else { continue };
        let total: f64 = g.iter().map(|&j| w[j]).sum();
        for &j in rest {
            out[j] = 0.0;
        }
        out[last] = total;
    }
    out
}
