use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use crate::auxiliary::{estimate_phi, AuxiliaryInfo, Comparison, Predicate, Subgroup, SubgroupPartition};
use crate::error::{QifError, Result};

use super::generate::generate_subjects;
use super::{PhiSource, SimulationDesign, MIN_HELD_OUT_M, TIME_POINTS};

fn x2_is(v: f64) -> Predicate {
    Predicate::new(0, 1, Comparison::Eq, v)
}

fn two_group_partition() -> SubgroupPartition {
    SubgroupPartition::new(vec![Subgroup::new(vec![x2_is(1.0)]), Subgroup::new(vec![x2_is(0.0)])])
}

/// `Ω*₁ = {X₂ = 1}`, `Ω*₂ = {X₂ = 0}` with means `(−0.5, −0.5, −0.5)` and zero.
pub fn build_two_group_aux() -> AuxiliaryInfo {
    two_group_aux(&SimulationDesign::default())
}

/// Two-group information at the design's true `β₂`: `E(Y | X₂ = x) = β₂ x`.
pub fn two_group_aux(design: &SimulationDesign) -> AuxiliaryInfo {
    let b2 = design.beta_true[1];
    let phi = vec![DVector::from_element(TIME_POINTS, b2), DVector::zeros(TIME_POINTS)];
    AuxiliaryInfo::new(two_group_partition(), phi).expect("two groups, two means")
}

/// `Ω₁..Ω₄`: the sign of `X₁₁` crossed with `X₂ ∈ {1, 0}`.
pub fn four_group_partition() -> SubgroupPartition {
    let pos = Predicate::new(0, 0, Comparison::Ge, 0.0);
    let neg = Predicate::new(0, 0, Comparison::Lt, 0.0);
    SubgroupPartition::new(vec![
        Subgroup::new(vec![pos, x2_is(1.0)]),
        Subgroup::new(vec![neg, x2_is(1.0)]),
        Subgroup::new(vec![pos, x2_is(0.0)]),
        Subgroup::new(vec![neg, x2_is(0.0)]),
    ])
}

/// Four-group information. With `TrueValues`,
/// `E(Y_j | ±X₁₁ ≥ 0, X₂ = x) = ±β₁ Σ_X[j,1] √(2/π) + β₂ x` (half-normal
/// mean of `X₁₁` projected onto `X_j1`). With `HeldOutEstimate(m)` the means
/// are computed from `m` fresh subjects drawn from `rng`.
pub fn build_four_group_aux<R: Rng + ?Sized>(
    phi_source: PhiSource,
    design: &SimulationDesign,
    rng: &mut R,
) -> Result<AuxiliaryInfo> {
    let partition = four_group_partition();
    let phi = match phi_source {
        PhiSource::TrueValues => {
            let sx = design.sigma_x.matrix(TIME_POINTS);
            let [b1, b2] = design.beta_true;
            let h = (2.0 / PI).sqrt();
            [(1.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (-1.0, 0.0)]
                .iter()
                .map(|&(sign, x2)| DVector::from_fn(TIME_POINTS, |j, _| sign * b1 * sx[(j, 0)] * h + b2 * x2))
                .collect()
        }
        PhiSource::HeldOutEstimate(m) => {
            if m < MIN_HELD_OUT_M {
                return Err(QifError::Config(format!(
                    "held-out sample size {m} is below {MIN_HELD_OUT_M}"
                )));
            }
            let held_out = generate_subjects(design, m, rng)?;
            estimate_phi(&held_out, &partition)?.0
        }
    };
    AuxiliaryInfo::new(partition, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Subject;
    use crate::simulation::{generate_dataset, replication_rng, StreamRole};
    use nalgebra::DMatrix;

    fn subject(x11: f64, x2: f64) -> Subject {
        let x = DMatrix::from_fn(3, 2, |j, k| {
            if k == 1 {
                x2
            } else if j == 0 {
                x11
            } else {
                0.7
            }
        });
        Subject::new(DVector::zeros(3), x)
    }

    #[test]
    fn two_group_membership_and_means() {
        let aux = build_two_group_aux();
        assert_eq!(aux.partition().group_of(&subject(0.1, 1.0), 0).unwrap(), 0);
        assert_eq!(aux.partition().group_of(&subject(0.1, 0.0), 0).unwrap(), 1);
        assert_eq!(aux.phi()[0], DVector::from_element(3, -0.5));
        assert_eq!(aux.phi()[1], DVector::zeros(3));
    }

    #[test]
    fn four_group_membership() {
        let p = four_group_partition();
        assert_eq!(p.group_of(&subject(0.3, 1.0), 0).unwrap(), 0);
        assert_eq!(p.group_of(&subject(-0.3, 1.0), 0).unwrap(), 1);
        assert_eq!(p.group_of(&subject(0.0, 0.0), 0).unwrap(), 2);
        assert_eq!(p.group_of(&subject(-2.0, 0.0), 0).unwrap(), 3);
    }

    #[test]
    fn merging_four_groups_gives_two() {
        let d = SimulationDesign {
            n: 2000,
            ..Default::default()
        };
        let ds = generate_dataset(&d, &mut replication_rng(4, 0, StreamRole::Data)).unwrap();
        let four = four_group_partition().assign(&ds).unwrap();
        let two = two_group_partition().assign(&ds).unwrap();
        for (a, b) in four.iter().zip(&two) {
            assert_eq!(a / 2, *b);
        }
    }

    #[test]
    fn analytic_means() {
        let d = SimulationDesign::default();
        let aux = build_four_group_aux(
            PhiSource::TrueValues,
            &d,
            &mut replication_rng(0, 0, StreamRole::HeldOut),
        )
        .unwrap();
        let half_normal = (2.0 / PI).sqrt();
        assert!((aux.phi()[0][0] - (0.5 * half_normal - 0.5)).abs() < 1e-15);
        assert!((aux.phi()[0][0] + 0.10106).abs() < 1e-5);
        // ρ_X = 0.5 halves the shift for later time points
        assert!((aux.phi()[1][2] - (-0.25 * half_normal - 0.5)).abs() < 1e-15);
        assert!((aux.phi()[2][1] - 0.25 * half_normal).abs() < 1e-15);
    }

    #[test]
    fn held_out_means_agree_with_analytic() {
        let d = SimulationDesign::default();
        let exact = build_four_group_aux(
            PhiSource::TrueValues,
            &d,
            &mut replication_rng(0, 0, StreamRole::HeldOut),
        )
        .unwrap();
        let mut rng = replication_rng(8, 0, StreamRole::HeldOut);
        let est = build_four_group_aux(PhiSource::HeldOutEstimate(400_000), &d, &mut rng).unwrap();
        for (e, a) in exact.phi().iter().zip(est.phi()) {
            // each cell has about 100 000 subjects, Var(Y_j | cell) ≤ 1.25
            assert!((e - a).amax() < 4.0 * (1.25f64 / 1e5).sqrt());
        }
        assert!(build_four_group_aux(PhiSource::HeldOutEstimate(399), &d, &mut rng).is_err());
    }
}
