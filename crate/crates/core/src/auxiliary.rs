//! Subgroup auxiliary information.
//!
//! A partition `Ω_1..Ω_K` of covariate space together with known subgroup
//! response means `φ_k = E(Y | X ∈ Ω_k)` gives the extra moment conditions
//! `E[I(X ∈ Ω_k){E(Y|X) − φ_k}] = 0`.
//!
//! Subgroups are written as conjunctions of atomic predicates on single
//! covariate entries, one subgroup per line:
//!
//! ```text
//! # X11 >= 0 and X2 = 1
//! col[1,1] >= 0 & col[1,2] == 1  => -0.1, -0.4, -0.4
//! col[1,1] < 0  & col[1,2] == 1
//! ```
//!
//! `col[j,k]` is row `j` (time point) and column `k` (covariate) of the
//! subject's covariate matrix, both 1-based. The optional `=> …` tail gives
//! the subgroup mean φ_k, one value per time point.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{QifError, Result};
use crate::model::{mean_vector, LongitudinalDataset, MarginalModelSpec, Subject};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl Comparison {
    fn holds(&self, lhs: f64, rhs: f64) -> bool {
        match self {
            Self::Ge => lhs >= rhs,
            Self::Gt => lhs > rhs,
            Self::Le => lhs <= rhs,
            Self::Lt => lhs < rhs,
            Self::Eq => lhs == rhs,
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Self::Ge => ">=",
            Self::Gt => ">",
            Self::Le => "<=",
            Self::Lt => "<",
            Self::Eq => "==",
        }
    }
}

/// `col[row, col] <op> value`, with 0-based indices internally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predicate {
    pub row: usize,
    pub col: usize,
    pub op: Comparison,
    pub value: f64,
}

impl Predicate {
    pub fn new(row: usize, col: usize, op: Comparison, value: f64) -> Self {
        Self { row, col, op, value }
    }

    pub fn holds(&self, subject: &Subject) -> bool {
        self.op.holds(subject.covariates[(self.row, self.col)], self.value)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "col[{},{}] {} {}",
            self.row + 1,
            self.col + 1,
            self.op.symbol(),
            self.value
        )
    }
}

impl FromStr for Predicate {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| QifError::InvalidSubgroup(format!("'{}': {why}", s.trim()));
        let s = s.trim();
        let rest = s.strip_prefix("col[").ok_or_else(|| bad("expected col[j,k]"))?;
        let close = rest.find(']').ok_or_else(|| bad("missing ']'"))?;
        let (idx, tail) = rest.split_at(close);
        let tail = tail[1..].trim();
        let mut parts = idx.split(',');
        let mut index = || -> Result<usize> {
            let v: usize = parts
                .next()
                .ok_or_else(|| bad("expected two indices"))?
                .trim()
                .parse()
                .map_err(|_| bad("indices must be positive integers"))?;
            v.checked_sub(1).ok_or_else(|| bad("indices are 1-based"))
        };
        let row = index()?;
        let col = index()?;
        if parts.next().is_some() {
            return Err(bad("expected two indices"));
        }
        let (op, value) = [
            (">=", Comparison::Ge),
            ("<=", Comparison::Le),
            ("==", Comparison::Eq),
            (">", Comparison::Gt),
            ("<", Comparison::Lt),
        ]
        .iter()
        .find_map(|(sym, op)| tail.strip_prefix(sym).map(|v| (*op, v)))
        .ok_or_else(|| bad("expected one of >=, <, ==, <=, >"))?;
        let value: f64 = value.trim().parse().map_err(|_| bad("threshold is not a number"))?;
        Ok(Self::new(row, col, op, value))
    }
}

/// One subgroup: every predicate must hold.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Subgroup {
    pub predicates: Vec<Predicate>,
}

impl Subgroup {
    pub fn new(predicates: Vec<Predicate>) -> Self {
        Self { predicates }
    }

    pub fn contains(&self, subject: &Subject) -> bool {
        self.predicates.iter().all(|p| p.holds(subject))
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.predicates.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join(" & "))
    }
}

impl FromStr for Subgroup {
    type Err = QifError;

    fn from_str(s: &str) -> Result<Self> {
        let predicates = s
            .replace(" and ", "&")
            .split('&')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Predicate>>>()?;
        if predicates.is_empty() {
            return Err(QifError::InvalidSubgroup(format!("'{s}': empty subgroup")));
        }
        Ok(Self { predicates })
    }
}

/// Subgroups that must cover every subject exactly once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubgroupPartition {
    groups: Vec<Subgroup>,
}

impl SubgroupPartition {
    pub fn new(groups: Vec<Subgroup>) -> Self {
        Self { groups }
    }

    /// Whole covariate space as a single group.
    pub fn whole_space() -> Self {
        Self {
            groups: vec![Subgroup::default()],
        }
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Subgroup] {
        &self.groups
    }

    fn match_count(&self, subject: &Subject) -> (usize, Option<usize>) {
        let mut count = 0;
        let mut first = None;
        for (k, g) in self.groups.iter().enumerate() {
            if g.contains(subject) {
                count += 1;
                first.get_or_insert(k);
            }
        }
        (count, first)
    }

    /// 0-based group index of `subject`. `subject_index` is only used for the error.
    pub fn group_of(&self, subject: &Subject, subject_index: usize) -> Result<usize> {
        match self.match_count(subject) {
            (1, Some(k)) => Ok(k),
            (matches, _) => Err(QifError::NotAPartition {
                subject: subject_index,
                matches,
            }),
        }
    }

    /// Checks every predicate index against the dataset shape and that every
    /// subject falls in exactly one group.
    pub fn validate(&self, dataset: &LongitudinalDataset) -> Result<()> {
        for g in &self.groups {
            for p in &g.predicates {
                if p.row >= dataset.q() || p.col >= dataset.p() {
                    return Err(QifError::InvalidSubgroup(format!(
                        "{p} is outside the {}x{} covariate matrix",
                        dataset.q(),
                        dataset.p()
                    )));
                }
            }
        }
        for (i, s) in dataset.subjects().iter().enumerate() {
            self.group_of(s, i)?;
        }
        Ok(())
    }

    /// Group index for every subject.
    pub fn assign(&self, dataset: &LongitudinalDataset) -> Result<Vec<usize>> {
        dataset
            .subjects()
            .iter()
            .enumerate()
            .map(|(i, s)| self.group_of(s, i))
            .collect()
    }
}

/// Subgroup partition with a target mean vector per group.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryInfo {
    partition: SubgroupPartition,
    phi: Vec<DVector<f64>>,
}

impl AuxiliaryInfo {
    pub fn new(partition: SubgroupPartition, phi: Vec<DVector<f64>>) -> Result<Self> {
        if phi.len() != partition.k() {
            return Err(QifError::DimensionMismatch(format!(
                "{} subgroups but {} mean vectors",
                partition.k(),
                phi.len()
            )));
        }
        if let Some(q) = phi.first().map(|v| v.len()) {
            if phi.iter().any(|v| v.len() != q) {
                return Err(QifError::DimensionMismatch("mean vectors differ in length".into()));
            }
        }
        if phi.iter().flat_map(|v| v.iter()).any(|v| !v.is_finite()) {
            return Err(QifError::InvalidSubgroup("subgroup means must be finite".into()));
        }
        Ok(Self { partition, phi })
    }

    /// No auxiliary groups at all; contributes zero moment rows.
    pub fn empty() -> Self {
        Self {
            partition: SubgroupPartition::default(),
            phi: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    pub fn partition(&self) -> &SubgroupPartition {
        &self.partition
    }

    pub fn phi(&self) -> &[DVector<f64>] {
        &self.phi
    }

    /// Keeps only the listed groups (0-based). The result is no longer a
    /// partition of the full space.
    pub fn retain_groups(&self, keep: &[usize]) -> Self {
        Self {
            partition: SubgroupPartition::new(keep.iter().map(|&k| self.partition.groups[k].clone()).collect()),
            phi: keep.iter().map(|&k| self.phi[k].clone()).collect(),
        }
    }

    /// Group index of `subject` if it lies in one of the groups. Unlike
    /// [`SubgroupPartition::group_of`] this tolerates subjects outside every group.
    pub(crate) fn locate(&self, subject: &Subject) -> Option<usize> {
        self.partition.groups.iter().position(|g| g.contains(subject))
    }

    /// Parses a subgroup file. Mean vectors are optional but must be present
    /// on either all lines or none; when absent `phi()` is empty and
    /// [`AuxiliaryInfo::with_phi`] must be used before estimation.
    pub fn parse(text: &str) -> Result<(SubgroupPartition, Option<Vec<DVector<f64>>>)> {
        let mut groups = Vec::new();
        let mut phis = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (cond, phi) = match line.split_once("=>") {
                Some((c, v)) => (c, Some(v)),
                None => (line, None),
            };
            groups.push(cond.parse::<Subgroup>()?);
            if let Some(v) = phi {
                let vals = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| QifError::InvalidSubgroup(format!("bad mean value '{t}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                phis.push(DVector::from_vec(vals));
            }
        }
        if groups.is_empty() {
            return Err(QifError::InvalidSubgroup("no subgroups defined".into()));
        }
        let phi = match phis.len() {
            0 => None,
            n if n == groups.len() => Some(phis),
            _ => {
                return Err(QifError::InvalidSubgroup(
                    "subgroup means must be given on every line or on none".into(),
                ))
            }
        };
        Ok((SubgroupPartition::new(groups), phi))
    }

    pub fn with_phi(partition: SubgroupPartition, phi: Vec<DVector<f64>>) -> Result<Self> {
        Self::new(partition, phi)
    }
}

/// Stack of `Ψ_k(β, X_i) = I(X_i ∈ Ω_k){μ_i(β) − φ_k}` over `k`, length `K·q`.
pub fn psi(aux: &AuxiliaryInfo, spec: &MarginalModelSpec, subject: &Subject, beta: &DVector<f64>) -> DVector<f64> {
    let q = subject.q();
    let mut out = DVector::zeros(aux.k() * q);
    if let Some(k) = aux.locate(subject) {
        let mu = mean_vector(spec, subject, beta);
        out.rows_mut(k * q, q).copy_from(&(mu - &aux.phi[k]));
    }
    out
}

/// Per-group response means and subject counts.
pub fn estimate_phi(
    dataset: &LongitudinalDataset,
    partition: &SubgroupPartition,
) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
    let q = dataset.q();
    let mut sums = vec![DVector::zeros(q); partition.k()];
    let mut counts = vec![0usize; partition.k()];
    for (i, s) in dataset.subjects().iter().enumerate() {
        let k = partition.group_of(s, i)?;
        sums[k] += &s.response;
        counts[k] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(QifError::EmptySubgroup(k + 1));
    }
    let phi = sums.into_iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    Ok((phi, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn subject(x1: [f64; 3], x2: f64, y: [f64; 3]) -> Subject {
        let x = DMatrix::from_fn(3, 2, |j, k| if k == 0 { x1[j] } else { x2 });
        Subject::new(DVector::from_row_slice(&y), x)
    }

    fn two_group() -> AuxiliaryInfo {
        let (partition, phi) =
            AuxiliaryInfo::parse("col[1,2] == 1 => -0.5, -0.5, -0.5\ncol[1,2] == 0 => 0, 0, 0\n").unwrap();
        AuxiliaryInfo::new(partition, phi.unwrap()).unwrap()
    }

    #[test]
    fn parse_predicates() {
        let p: Predicate = "col[1,2] == 1".parse().unwrap();
        assert_eq!(p, Predicate::new(0, 1, Comparison::Eq, 1.0));
        let p: Predicate = " col[ 2 , 3 ]<-0.25".parse().unwrap();
        assert_eq!(p, Predicate::new(1, 2, Comparison::Lt, -0.25));
        assert!("col[0,1] >= 0".parse::<Predicate>().is_err());
        assert!("x[1,1] >= 0".parse::<Predicate>().is_err());
        assert!("col[1,1] ~ 0".parse::<Predicate>().is_err());
        assert!("col[1,1,1] >= 0".parse::<Predicate>().is_err());
        let g: Subgroup = "col[1,1] >= 0 & col[1,2] == 1".parse().unwrap();
        assert_eq!(g.predicates.len(), 2);
        let g: Subgroup = "col[1,1] >= 0 and col[1,2] == 1".parse().unwrap();
        assert_eq!(g.predicates.len(), 2);
        assert_eq!(g.to_string(), "col[1,1] >= 0 & col[1,2] == 1");
    }

    #[test]
    fn parse_file_with_and_without_means() {
        let (p, phi) = AuxiliaryInfo::parse("# two groups\ncol[1,2] == 1\n\ncol[1,2] == 0 # rest\n").unwrap();
        assert_eq!(p.k(), 2);
        assert!(phi.is_none());
        assert!(AuxiliaryInfo::parse("col[1,2] == 1 => 1,2,3\ncol[1,2] == 0\n").is_err());
        assert!(AuxiliaryInfo::parse("# nothing\n").is_err());
    }

    #[test]
    fn psi_exact_match_is_zero() {
        let aux = two_group();
        let s = subject([1.0, 1.0, 1.0], 1.0, [0.0; 3]);
        let beta = DVector::from_vec(vec![0.0, -0.5]);
        let v = psi(&aux, &MarginalModelSpec::gaussian(), &s, &beta);
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn psi_two_group_design() {
        let aux = two_group();
        let s = subject([0.0; 3], 1.0, [0.0; 3]);
        let v = psi(
            &aux,
            &MarginalModelSpec::gaussian(),
            &s,
            &DVector::from_vec(vec![0.5, -0.5]),
        );
        assert_eq!(v.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // μ = 0 for x_j1 = 0 when β₂ = 0
        let v = psi(
            &aux,
            &MarginalModelSpec::gaussian(),
            &s,
            &DVector::from_vec(vec![0.5, 0.0]),
        );
        assert_eq!(v.as_slice(), &[0.5, 0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn psi_whole_space() {
        let aux = AuxiliaryInfo::new(
            SubgroupPartition::whole_space(),
            vec![DVector::from_vec(vec![1.0, 2.0, 3.0])],
        )
        .unwrap();
        let s = subject([1.0, 2.0, 3.0], 0.0, [0.0; 3]);
        let v = psi(
            &aux,
            &MarginalModelSpec::gaussian(),
            &s,
            &DVector::from_vec(vec![1.0, 9.0]),
        );
        assert_eq!(v.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn estimate_phi_means_and_counts() {
        let ds = LongitudinalDataset::new(vec![
            subject([0.0; 3], 1.0, [1.0; 3]),
            subject([0.0; 3], 1.0, [3.0; 3]),
            subject([0.0; 3], 0.0, [5.0; 3]),
        ])
        .unwrap();
        let aux = two_group();
        let (phi, counts) = estimate_phi(&ds, aux.partition()).unwrap();
        assert_eq!(phi[0].as_slice(), &[2.0; 3]);
        assert_eq!(phi[1].as_slice(), &[5.0; 3]);
        assert_eq!(counts, vec![2, 1]);

        let (grand, c) = estimate_phi(&ds, &SubgroupPartition::whole_space()).unwrap();
        assert_eq!(grand[0].as_slice(), &[3.0; 3]);
        assert_eq!(c, vec![3]);

        let ones = ds.select(&[0, 1]).unwrap();
        assert_eq!(estimate_phi(&ones, aux.partition()), Err(QifError::EmptySubgroup(2)));
    }

    #[test]
    fn sample_means_solve_moment_conditions() {
        let ds = LongitudinalDataset::new(
            (0..40)
                .map(|i| {
                    let t = i as f64;
                    subject(
                        [t.sin(), t.cos(), 0.3 * t],
                        (i % 3 == 0) as u8 as f64,
                        [t.sin() * 2.0, t * 0.1, -t],
                    )
                })
                .collect(),
        )
        .unwrap();
        let partition = two_group().partition().clone();
        let (phi, _) = estimate_phi(&ds, &partition).unwrap();
        let aux = AuxiliaryInfo::new(partition, phi).unwrap();
        let mut total = DVector::zeros(6);
        for s in ds.subjects() {
            let k = aux.locate(s).unwrap();
            let mut rows = total.rows_mut(3 * k, 3);
            rows += &s.response - &aux.phi()[k];
        }
        total /= ds.n() as f64;
        assert!(total.amax() < 1e-12);
    }

    #[test]
    fn partition_validation() {
        let ds = LongitudinalDataset::new(vec![subject([0.0; 3], 2.0, [0.0; 3])]).unwrap();
        let aux = two_group();
        assert!(matches!(
            aux.partition().validate(&ds),
            Err(QifError::NotAPartition { subject: 0, matches: 0 })
        ));
        let overlap = SubgroupPartition::new(vec!["col[1,2] >= 0".parse().unwrap(), "col[1,2] >= 1".parse().unwrap()]);
        assert!(matches!(
            overlap.validate(&ds),
            Err(QifError::NotAPartition { matches: 2, .. })
        ));
        let out_of_range = SubgroupPartition::new(vec!["col[4,1] >= 0".parse().unwrap()]);
        assert!(matches!(out_of_range.validate(&ds), Err(QifError::InvalidSubgroup(_))));
    }

    #[test]
    fn aux_info_shape_checks() {
        let p = SubgroupPartition::whole_space();
        assert!(AuxiliaryInfo::new(p.clone(), vec![]).is_err());
        assert!(AuxiliaryInfo::new(p, vec![DVector::from_vec(vec![f64::NAN])]).is_err());
        assert_eq!(AuxiliaryInfo::empty().k(), 0);
    }
}
