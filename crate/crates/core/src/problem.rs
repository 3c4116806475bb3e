//! Regression problems, column partitions and solver configuration.
//!
//! Every node of a network gives an independent regression `y = A w + noise`
//! where the columns of `A` are candidate functions evaluated along the
//! measured trajectory. The distributed solver splits the columns into
//! contiguous blocks; [`BlockPartition`] describes that split.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stacked per-node regression `y = A w + xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    /// Response, length `M`.
    pub y: DVector<f64>,
    /// Dictionary, `M x N`.
    pub a: DMatrix<f64>,
    /// Noise variance.
    pub sigma2: f64,
    /// One identifier per column of `a`.
    pub column_labels: Vec<String>,
}

impl RegressionProblem {
    /// Builds and validates a problem.
    pub fn new(
        a: DMatrix<f64>,
        y: DVector<f64>,
        sigma2: f64,
        column_labels: Vec<String>,
    ) -> Result<Self> {
        validate_problem(RegressionProblem {
            y,
            a,
            sigma2,
            column_labels,
        })
    }

    /// Builds a problem with generated labels `c0, c1, ...`.
    pub fn with_default_labels(a: DMatrix<f64>, y: DVector<f64>, sigma2: f64) -> Result<Self> {
        let labels = default_labels(a.ncols());
        Self::new(a, y, sigma2, labels)
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// `||A^T y||_inf`, the smallest lasso penalty that zeroes every weight.
    pub fn lambda_max(&self) -> f64 {
        self.a.tr_mul(&self.y).amax()
    }

    /// Copy of the columns in `range`.
    pub fn block(&self, range: &Range<usize>) -> DMatrix<f64> {
        self.a.columns(range.start, range.len()).into_owned()
    }
}

pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("c{j}")).collect()
}

/// Checks every [`RegressionProblem`] invariant and hands the problem back.
pub fn validate_problem(p: RegressionProblem) -> Result<RegressionProblem> {
    let (m, n) = p.a.shape();
    if m == 0 {
        return Err(Error::DimensionMismatch {
            field: "A rows",
            expected: 1,
            found: 0,
        });
    }
    if n == 0 {
        return Err(Error::DimensionMismatch {
            field: "A cols",
            expected: 1,
            found: 0,
        });
    }
    if p.y.len() != m {
        return Err(Error::DimensionMismatch {
            field: "y",
            expected: m,
            found: p.y.len(),
        });
    }
    if p.column_labels.len() != n {
        return Err(Error::DimensionMismatch {
            field: "column_labels",
            expected: n,
            found: p.column_labels.len(),
        });
    }
    if !(p.sigma2.is_finite() && p.sigma2 >= 0.0) {
        return Err(Error::NonFinite {
            field: "sigma2",
            row: 0,
            col: 0,
        });
    }
    for col in 0..n {
        for row in 0..m {
            if !p.a[(row, col)].is_finite() {
                return Err(Error::NonFinite {
                    field: "A",
                    row,
                    col,
                });
            }
        }
    }
    if let Some(row) = p.y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "y",
            row,
            col: 0,
        });
    }
    let mut seen = HashSet::with_capacity(n);
    for label in &p.column_labels {
        if !seen.insert(label.as_str()) {
            return Err(Error::InvalidLabels(format!("duplicate label `{label}`")));
        }
    }
    Ok(p)
}

/// Ordered, contiguous, disjoint column ranges covering `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    ranges: Vec<Range<usize>>,
}

impl BlockPartition {
    /// Validates externally supplied ranges.
    pub fn from_ranges(ranges: Vec<Range<usize>>, n: usize) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        let mut next = 0;
        for (i, r) in ranges.iter().enumerate() {
            if r.start != next {
                return Err(Error::InvalidPartition(format!(
                    "block {i} starts at {} but {next} was expected",
                    r.start
                )));
            }
            if r.is_empty() {
                return Err(Error::InvalidPartition(format!("block {i} is empty")));
            }
            next = r.end;
        }
        if next != n {
            return Err(Error::InvalidPartition(format!(
                "blocks cover 0..{next}, expected 0..{n}"
            )));
        }
        Ok(Self { ranges })
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Total number of columns covered.
    pub fn width(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }
}

/// Splits `n` columns into `p` contiguous blocks whose sizes differ by at most
/// one, larger blocks first.
pub fn partition_columns(n: usize, p: usize) -> Result<BlockPartition> {
    if p == 0 || p > n {
        return Err(Error::InvalidPartition(format!(
            "cannot split {n} columns into {p} blocks"
        )));
    }
    let base = n / p;
    let extra = n % p;
    let mut ranges = Vec::with_capacity(p);
    let mut start = 0;
    for i in 0..p {
        let size = base + usize::from(i < extra);
        ranges.push(start..start + size);
        start += size;
    }
    Ok(BlockPartition { ranges })
}

/// Scalar knobs shared by every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Penalty of the sharing ADMM.
    pub rho: f64,
    /// Penalty of the per-block weighted-lasso ADMM.
    pub rho_hat: f64,
    /// `lambda = lambda_scale * ||A^T y||_inf`.
    pub lambda_scale: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_admm_iters: usize,
    pub max_reweight_iters: usize,
    /// Columns with `|w_j| < prune_rel * ||w||_2` are dropped for good.
    pub prune_rel: f64,
    pub workers: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            rho_hat: 1.0,
            lambda_scale: 0.05,
            eps_abs: 1e-4,
            eps_rel: 1e-2,
            max_admm_iters: 200,
            max_reweight_iters: 10,
            prune_rel: 1e-4,
            workers: 1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub const FIELDS: [&'static str; 10] = [
        "rho",
        "rho_hat",
        "lambda_scale",
        "eps_abs",
        "eps_rel",
        "max_admm_iters",
        "max_reweight_iters",
        "prune_rel",
        "workers",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("rho_hat", self.rho_hat),
            ("lambda_scale", self.lambda_scale),
            ("eps_abs", self.eps_abs),
            ("eps_rel", self.eps_rel),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.prune_rel.is_finite() && self.prune_rel >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "prune_rel must be nonnegative, got {}",
                self.prune_rel
            )));
        }
        for (name, v) in [
            ("max_admm_iters", self.max_admm_iters),
            ("max_reweight_iters", self.max_reweight_iters),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Resolves the regularization weight for a concrete problem.
    pub fn lambda_for(&self, problem: &RegressionProblem) -> f64 {
        self.lambda_scale * problem.lambda_max()
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "rho" => self.rho = num(key, value)?,
            "rho_hat" => self.rho_hat = num(key, value)?,
            "lambda_scale" => self.lambda_scale = num(key, value)?,
            "eps_abs" => self.eps_abs = num(key, value)?,
            "eps_rel" => self.eps_rel = num(key, value)?,
            "max_admm_iters" => self.max_admm_iters = num(key, value)?,
            "max_reweight_iters" => self.max_reweight_iters = num(key, value)?,
            "prune_rel" => self.prune_rel = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

/// Flat `key=value` text, one field per line.
impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rho={}", self.rho)?;
        writeln!(f, "rho_hat={}", self.rho_hat)?;
        writeln!(f, "lambda_scale={}", self.lambda_scale)?;
        writeln!(f, "eps_abs={}", self.eps_abs)?;
        writeln!(f, "eps_rel={}", self.eps_rel)?;
        writeln!(f, "max_admm_iters={}", self.max_admm_iters)?;
        writeln!(f, "max_reweight_iters={}", self.max_reweight_iters)?;
        writeln!(f, "prune_rel={}", self.prune_rel)?;
        writeln!(f, "workers={}", self.workers)?;
        writeln!(f, "seed={}", self.seed)
    }
}

/// Parses the `key=value` format; missing keys keep their defaults, blank
/// lines and `#` comments are ignored.
impl FromStr for SolverConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = SolverConfig::default();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Output of the reweighted solvers.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub w_hat: DVector<f64>,
    /// Indices `j` with `w_hat[j] != 0`, ascending.
    pub support: Vec<usize>,
    /// Cost value after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

impl Estimate {
    pub fn new(
        w_hat: DVector<f64>,
        objective_trace: Vec<f64>,
        outer_iterations: usize,
        inner_iterations: usize,
    ) -> Self {
        let support = support_of(&w_hat);
        Self {
            w_hat,
            support,
            objective_trace,
            outer_iterations,
            inner_iterations,
        }
    }
}

pub fn support_of(w: &DVector<f64>) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> (DMatrix<f64>, DVector<f64>) {
        (
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            DVector::from_vec(vec![1.0, 0.0, -1.0]),
        )
    }

    #[test]
    fn consistent_problem_validates() {
        let (a, y) = small();
        let p = RegressionProblem::with_default_labels(a.clone(), y.clone(), 0.1).unwrap();
        assert_eq!(p.a, a);
        assert_eq!(p.y, y);
        assert_eq!((p.rows(), p.cols()), (3, 2));
    }

    #[test]
    fn wrong_response_length_is_reported() {
        let (a, _) = small();
        let y = DVector::zeros(4);
        match RegressionProblem::with_default_labels(a, y, 0.0) {
            Err(Error::DimensionMismatch {
                field,
                expected,
                found,
            }) => {
                assert_eq!(field, "y");
                assert_eq!((expected, found), (3, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_entry_is_located() {
        let (mut a, y) = small();
        a[(2, 1)] = f64::NAN;
        match RegressionProblem::with_default_labels(a, y, 0.0) {
            Err(Error::NonFinite { field, row, col }) => {
                assert_eq!((field, row, col), ("A", 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_labels_rejected() {
        let (a, y) = small();
        let err = RegressionProblem::new(a, y, 0.0, vec!["x".into(), "x".into()]).unwrap_err();
        assert!(matches!(err, Error::InvalidLabels(_)));
    }

    #[test]
    fn negative_sigma2_rejected() {
        let (a, y) = small();
        assert!(RegressionProblem::with_default_labels(a, y, -1.0).is_err());
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_columns(5, 2).unwrap().ranges(), &[0..3, 3..5]);
        assert_eq!(
            partition_columns(4, 4).unwrap().ranges(),
            &[0..1, 1..2, 2..3, 3..4]
        );
        let big = partition_columns(2001, 1000).unwrap();
        let sizes: Vec<usize> = big.ranges().iter().map(|r| r.len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 3).count(), 1);
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 999);
        assert_eq!(sizes.iter().sum::<usize>(), 2001);
    }

    #[test]
    fn partition_rejects_bad_block_counts() {
        assert!(partition_columns(3, 0).is_err());
        assert!(partition_columns(3, 4).is_err());
    }

    #[test]
    fn from_ranges_checks_coverage() {
        assert!(BlockPartition::from_ranges(vec![0..2, 2..5], 5).is_ok());
        assert!(BlockPartition::from_ranges(vec![0..2, 3..5], 5).is_err());
        assert!(BlockPartition::from_ranges(vec![0..2, 2..2, 2..5], 5).is_err());
        assert!(BlockPartition::from_ranges(vec![0..2], 5).is_err());
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = SolverConfig {
            rho: 2.5,
            workers: 4,
            seed: 17,
            ..SolverConfig::default()
        };
        let parsed: SolverConfig = cfg.to_string().parse().unwrap();
        assert_eq!(parsed, cfg);
        let text = cfg.to_string();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(keys, SolverConfig::FIELDS);
    }

    #[test]
    fn config_rejects_unknown_and_invalid() {
        assert!("foo=1".parse::<SolverConfig>().is_err());
        assert!("rho=0".parse::<SolverConfig>().is_err());
        assert!("max_admm_iters=0".parse::<SolverConfig>().is_err());
        assert!("rho".parse::<SolverConfig>().is_err());
    }

    #[test]
    fn default_config_values() {
        let c = SolverConfig::default();
        assert_eq!(c.rho, 1.0);
        assert_eq!(c.lambda_scale, 0.05);
        assert_eq!(c.eps_abs, 1e-4);
        assert_eq!(c.eps_rel, 1e-2);
        assert_eq!((c.max_admm_iters, c.max_reweight_iters), (200, 10));
    }

    proptest! {
        #[test]
        fn partition_invariants(n in 1usize..500, frac in 0.0f64..1.0) {
            let p = 1 + ((n - 1) as f64 * frac) as usize;
            let part = partition_columns(n, p).unwrap();
            prop_assert_eq!(part.len(), p);
            prop_assert!(BlockPartition::from_ranges(part.ranges().to_vec(), n).is_ok());
            let sizes: Vec<usize> = part.ranges().iter().map(|r| r.len()).collect();
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn blocks_reassemble_matrix(m in 1usize..6, n in 1usize..12, p_raw in 1usize..12, seed in 0u64..1000) {
            let p = 1 + (p_raw - 1) % n;
            let a = DMatrix::from_fn(m, n, |i, j| ((i * 31 + j * 7) as u64 ^ seed) as f64);
            let prob = RegressionProblem::with_default_labels(a.clone(), DVector::zeros(m), 0.0).unwrap();
            let part = partition_columns(n, p).unwrap();
            let mut rebuilt = DMatrix::zeros(m, 0);
            for r in part.ranges() {
                let blk = prob.block(r);
                let c = rebuilt.ncols();
                rebuilt = rebuilt.insert_columns(c, blk.ncols(), 0.0);
                rebuilt.columns_mut(c, blk.ncols()).copy_from(&blk);
            }
            prop_assert_eq!(rebuilt, a);
        }
    }
}
