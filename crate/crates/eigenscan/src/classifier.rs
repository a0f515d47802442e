//! Threshold calibration and the four-case classification decision.
//!
//! A trained model stores, per family, the weight vectors of its training
//! replicates plus two thresholds: θ bounds the class distance ε (how far the
//! sample's projection sits from the nearest stored replicate) and β bounds
//! the space distance α (how much of the sample the eigenbasis fails to
//! express). Only a sample that is near a class *and* near that class's space
//! is reported as a match; the remaining three near/far combinations are
//! clean, with the case tag preserved for analysts.

use thiserror::Error;

use crate::eigencore::{
    self, gram, lift_eigenvectors, select_top, sym_eigen, Eigenbasis, EigenError, TrainingMatrix,
    WeightVector, DEFAULT_RANK_TOL,
};
use crate::sample_prep::SampleVector;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("model has no classes or no stored training weights")]
    EmptyModel,
    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("calibration label {0:?} does not exist in the model")]
    UnknownLabel(String),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// One family: its label, the training replicates' weight vectors, and the
/// calibrated class/space thresholds (zero until calibration).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub label: String,
    pub training_weights: Vec<WeightVector>,
    pub class_threshold: f64,
    pub space_threshold: f64,
}

/// The complete trained system: eigenbasis plus per-class profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    pub basis: Eigenbasis,
    pub classes: Vec<ClassProfile>,
}

impl EigenModel {
    /// Vector length every classified sample must be padded/truncated to.
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn m_prime(&self) -> usize {
        self.basis.m_prime()
    }

    fn has_weights(&self) -> bool {
        self.classes.iter().any(|c| !c.training_weights.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionCase {
    /// Near class, near space: recognized as a member of the class.
    A,
    /// Near class, far space: projection lost too much of the file.
    B,
    /// Far class, near space: shares features but belongs to no class.
    C,
    /// Far class, far space: unrelated to anything trained.
    D,
}

impl DecisionCase {
    pub fn letter(self) -> char {
        match self {
            DecisionCase::A => 'a',
            DecisionCase::B => 'b',
            DecisionCase::C => 'c',
            DecisionCase::D => 'd',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Match(String),
    Clean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub verdict: Verdict,
    pub nearest_label: String,
    pub class_distance: f64,
    pub space_distance: f64,
    pub case: DecisionCase,
}

/// Summary of one model build, for operator reporting.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EigenModel,
    /// Full eigenvalue spectrum of the Gram matrix, descending.
    pub spectrum: Vec<f64>,
    /// Directions that survived the rank tolerance.
    pub retained_rank: usize,
    /// Actual basis width: requested m′ clamped to the retained rank.
    pub effective_m_prime: usize,
}

/// Build an uncalibrated model from a labeled training matrix.
///
/// Runs the Gram trick, keeps the top `m_prime` directions (clamped to the
/// retained rank so that low-rank training sets still train), and stores each
/// replicate's projection under its class label. Classes appear in
/// first-occurrence order of the labels.
pub fn train_model(matrix: &TrainingMatrix, m_prime: usize) -> Result<TrainOutcome, ClassifierError> {
    if m_prime == 0 {
        return Err(EigenError::InvalidMPrime { requested: 0, max: matrix.column_count() }.into());
    }
    let l = gram(matrix);
    let (eigenvalues, eigenvectors) = sym_eigen(&l)?;
    let full = lift_eigenvectors(matrix, &eigenvectors, &eigenvalues, DEFAULT_RANK_TOL)?;
    let retained_rank = full.m_prime();
    let effective_m_prime = m_prime.min(retained_rank);
    let basis = select_top(&full, effective_m_prime)?;

    let mut classes: Vec<ClassProfile> = Vec::new();
    for (column, label) in matrix.columns().iter().zip(matrix.labels()) {
        let weights = eigencore::project(column, &basis)?;
        match classes.iter_mut().find(|c| &c.label == label) {
            Some(class) => class.training_weights.push(weights),
            None => classes.push(ClassProfile {
                label: label.clone(),
                training_weights: vec![weights],
                class_threshold: 0.0,
                space_threshold: 0.0,
            }),
        }
    }

    Ok(TrainOutcome {
        model: EigenModel { basis, classes },
        spectrum: eigenvalues,
        retained_rank,
        effective_m_prime,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// Nearest stored training weight across every class: returns the owning
/// class index, ε, and the replicate index within that class.
///
/// Ties go to the earliest class in declaration order, then the earliest
/// replicate.
pub fn class_distance(
    omega: &WeightVector,
    model: &EigenModel,
) -> Result<(usize, f64, usize), ClassifierError> {
    if model.classes.is_empty() || !model.has_weights() {
        return Err(ClassifierError::EmptyModel);
    }
    let mut best: Option<(usize, f64, usize)> = None;
    for (ci, class) in model.classes.iter().enumerate() {
        for (ri, stored) in class.training_weights.iter().enumerate() {
            if stored.len() != omega.len() {
                return Err(ClassifierError::LengthMismatch {
                    expected: stored.len(),
                    got: omega.len(),
                });
            }
            let d2 = squared_distance(omega.weights(), stored.weights());
            if best.is_none_or(|(_, b, _)| d2 < b) {
                best = Some((ci, d2, ri));
            }
        }
    }
    let (ci, d2, ri) = best.unwrap();
    Ok((ci, d2.sqrt(), ri))
}

/// Space distance α = ‖Φ − Φ_v‖₂ where Φ_v is the reconstruction of Ω.
pub fn space_distance(
    phi: &SampleVector,
    omega: &WeightVector,
    basis: &Eigenbasis,
) -> Result<f64, ClassifierError> {
    if phi.len() != basis.n() {
        return Err(ClassifierError::LengthMismatch { expected: basis.n(), got: phi.len() });
    }
    let reconstructed = eigencore::reconstruct(omega, basis)?;
    Ok(squared_distance(phi.values(), &reconstructed).sqrt())
}

/// Per-class calibration summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub label: String,
    /// Calibration samples whose nearest stored weight belonged to their own
    /// class. Zero means the class kept θ = β = 0.
    pub matched: usize,
    pub class_threshold: f64,
    pub space_threshold: f64,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: EigenModel,
    pub rows: Vec<CalibrationRow>,
}

/// Max-rule threshold calibration.
///
/// For every class k, θₖ = margin · max ε and βₖ = margin · max α over the
/// calibration samples of class k that were correctly matched (their nearest
/// stored weight belongs to class k). Classes with no correctly matched
/// sample keep θ = β = 0 and are visible in the returned rows.
///
/// Panics if margin is below 1 or not finite; that is a caller bug.
pub fn calibrate(
    model: &EigenModel,
    samples: &[(SampleVector, String)],
    margin: f64,
) -> Result<Calibration, ClassifierError> {
    assert!(margin.is_finite() && margin >= 1.0, "margin must be finite and >= 1");
    for (_, label) in samples {
        if !model.classes.iter().any(|c| &c.label == label) {
            return Err(ClassifierError::UnknownLabel(label.clone()));
        }
    }

    let mut max_eps = vec![0.0f64; model.classes.len()];
    let mut max_alpha = vec![0.0f64; model.classes.len()];
    let mut matched = vec![0usize; model.classes.len()];

    for (phi, label) in samples {
        let omega = eigencore::project(phi, &model.basis)?;
        let (nearest, eps, _) = class_distance(&omega, model)?;
        if &model.classes[nearest].label != label {
            continue;
        }
        let alpha = space_distance(phi, &omega, &model.basis)?;
        matched[nearest] += 1;
        max_eps[nearest] = max_eps[nearest].max(eps);
        max_alpha[nearest] = max_alpha[nearest].max(alpha);
    }

    let mut calibrated = model.clone();
    let mut rows = Vec::with_capacity(model.classes.len());
    for (i, class) in calibrated.classes.iter_mut().enumerate() {
        if matched[i] > 0 {
            class.class_threshold = margin * max_eps[i];
            class.space_threshold = margin * max_alpha[i];
        } else {
            class.class_threshold = 0.0;
            class.space_threshold = 0.0;
        }
        rows.push(CalibrationRow {
            label: class.label.clone(),
            matched: matched[i],
            class_threshold: class.class_threshold,
            space_threshold: class.space_threshold,
        });
    }
    Ok(Calibration { model: calibrated, rows })
}

/// Classify a prepared sample against the model.
///
/// Projects, finds the nearest class by ε, measures α, then applies the
/// four-case rule against that class's thresholds: only near-class and
/// near-space (case a) is a match.
pub fn classify(phi: &SampleVector, model: &EigenModel) -> Result<Decision, ClassifierError> {
    if phi.len() != model.n() {
        return Err(ClassifierError::LengthMismatch { expected: model.n(), got: phi.len() });
    }
    let omega = eigencore::project(phi, &model.basis)?;
    let (nearest, eps, _) = class_distance(&omega, model)?;
    let alpha = space_distance(phi, &omega, &model.basis)?;

    let class = &model.classes[nearest];
    let near_class = eps <= class.class_threshold;
    let near_space = alpha <= class.space_threshold;
    let (case, verdict) = match (near_class, near_space) {
        (true, true) => (DecisionCase::A, Verdict::Match(class.label.clone())),
        (true, false) => (DecisionCase::B, Verdict::Clean),
        (false, true) => (DecisionCase::C, Verdict::Clean),
        (false, false) => (DecisionCase::D, Verdict::Clean),
    };
    Ok(Decision {
        verdict,
        nearest_label: class.label.clone(),
        class_distance: eps,
        space_distance: alpha,
        case,
    })
}

/// Per-class, per-dimension population standard deviation of the stored
/// training weights. Classes with a single replicate report exact zeros.
///
/// Computed with Welford's online recurrence; divide-by-count (population),
/// because the stored replicates are the whole population of the class.
pub fn class_stats(model: &EigenModel) -> Vec<(String, Vec<f64>)> {
    let dims = model.m_prime();
    model
        .classes
        .iter()
        .map(|class| {
            let mut mean = vec![0.0f64; dims];
            let mut m2 = vec![0.0f64; dims];
            for (count, w) in class.training_weights.iter().enumerate() {
                let k = (count + 1) as f64;
                for (d, &x) in w.weights().iter().enumerate() {
                    let delta = x - mean[d];
                    mean[d] += delta / k;
                    m2[d] += delta * (x - mean[d]);
                }
            }
            let n = class.training_weights.len() as f64;
            let sigma = m2.iter().map(|&s| (s / n).sqrt()).collect();
            (class.label.clone(), sigma)
        })
        .collect()
}

/// Ceiling-rounded presentation form of a σ row, as reports print it.
pub fn ceil_sigma(sigma: &[f64]) -> Vec<u64> {
    sigma.iter().map(|&s| s.ceil() as u64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sv(values: &[f64]) -> SampleVector {
        SampleVector::from_values(values.to_vec())
    }

    fn w(values: &[f64]) -> WeightVector {
        WeightVector::new(values.to_vec())
    }

    /// 2-D basis embedded in 3-space: weights are just the first two
    /// coordinates, the third is invisible to the basis.
    fn flat_basis() -> Eigenbasis {
        Eigenbasis::from_parts(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            vec![2.0, 1.0],
            3,
        )
    }

    fn model_with(classes: Vec<ClassProfile>) -> EigenModel {
        EigenModel { basis: flat_basis(), classes }
    }

    fn profile(label: &str, weights: &[&[f64]], theta: f64, beta: f64) -> ClassProfile {
        ClassProfile {
            label: label.to_string(),
            training_weights: weights.iter().map(|v| w(v)).collect(),
            class_threshold: theta,
            space_threshold: beta,
        }
    }

    #[test]
    fn stored_weight_has_zero_distance() {
        let model = model_with(vec![
            profile("one", &[&[3.0, 4.0]], 0.0, 0.0),
            profile("two", &[&[9.0, 9.0]], 0.0, 0.0),
        ]);
        let (ci, eps, ri) = class_distance(&w(&[3.0, 4.0]), &model).unwrap();
        assert_eq!((ci, ri), (0, 0));
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn unit_axes_are_sqrt_two_apart() {
        let model = model_with(vec![profile("one", &[&[0.0, 1.0]], 0.0, 0.0)]);
        let (_, eps, _) = class_distance(&w(&[1.0, 0.0]), &model).unwrap();
        assert!((eps - 2.0f64.sqrt()).abs() <= 1e-15);
    }

    #[test]
    fn class_distance_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let classes: Vec<ClassProfile> = (0..3)
            .map(|c| {
                let weights: Vec<Vec<f64>> = (0..4)
                    .map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect();
                profile(
                    &format!("c{c}"),
                    &weights.iter().map(|v| v.as_slice()).collect::<Vec<_>>(),
                    0.0,
                    0.0,
                )
            })
            .collect();
        let model = model_with(classes);
        for _ in 0..50 {
            let probe = w(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
            let (ci, eps, ri) = class_distance(&probe, &model).unwrap();
            // Exhaustive oracle over every stored weight, first minimum wins.
            let mut best = (0usize, f64::INFINITY, 0usize);
            for (c, class) in model.classes.iter().enumerate() {
                for (r, stored) in class.training_weights.iter().enumerate() {
                    let d: f64 = probe
                        .weights()
                        .iter()
                        .zip(stored.weights())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d < best.1 {
                        best = (c, d, r);
                    }
                }
            }
            assert_eq!((ci, ri), (best.0, best.2));
            assert_eq!(eps, best.1.sqrt());
        }
    }

    #[test]
    fn ties_break_by_declaration_order() {
        let model = model_with(vec![
            profile("first", &[&[1.0, 0.0]], 0.0, 0.0),
            profile("second", &[&[-1.0, 0.0]], 0.0, 0.0),
        ]);
        // Equidistant probe: the earlier class wins.
        let (ci, _, _) = class_distance(&w(&[0.0, 0.0]), &model).unwrap();
        assert_eq!(ci, 0);
    }

    #[test]
    fn empty_model_is_rejected() {
        let model = model_with(vec![]);
        assert_eq!(
            class_distance(&w(&[0.0, 0.0]), &model),
            Err(ClassifierError::EmptyModel)
        );
    }

    #[test]
    fn in_span_sample_has_negligible_space_distance() {
        let basis = flat_basis();
        let phi = sv(&[1.5, -2.0, 0.0]);
        let omega = eigencore::project(&phi, &basis).unwrap();
        let alpha = space_distance(&phi, &omega, &basis).unwrap();
        assert!(alpha <= 1e-6 * 2.5);
    }

    #[test]
    fn orthogonal_sample_keeps_its_full_norm() {
        let basis = flat_basis();
        let phi = sv(&[0.0, 0.0, 7.0]);
        let omega = eigencore::project(&phi, &basis).unwrap();
        let alpha = space_distance(&phi, &omega, &basis).unwrap();
        assert!((alpha - 7.0).abs() <= 1e-9);
    }

    #[test]
    fn space_distance_matches_direct_subtraction() {
        let basis = flat_basis();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..20 {
            let phi = sv(&[
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
            ]);
            let omega = eigencore::project(&phi, &basis).unwrap();
            let alpha = space_distance(&phi, &omega, &basis).unwrap();
            let rec = eigencore::reconstruct(&omega, &basis).unwrap();
            let direct: f64 = phi
                .values()
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!((alpha - direct).abs() <= 1e-10 * direct.max(1.0));
        }
    }

    /// ε = {1, 5, 3} and α = {10, 2, 7} via samples (a, 0, z): the projection
    /// is (a, 0), distance a from the stored origin weight, and z survives
    /// only in the space distance.
    fn calibration_fixture() -> (EigenModel, Vec<(SampleVector, String)>) {
        let model = model_with(vec![profile("fam", &[&[0.0, 0.0]], 0.0, 0.0)]);
        let samples = vec![
            (sv(&[1.0, 0.0, 10.0]), "fam".to_string()),
            (sv(&[5.0, 0.0, 2.0]), "fam".to_string()),
            (sv(&[3.0, 0.0, 7.0]), "fam".to_string()),
        ];
        (model, samples)
    }

    #[test]
    fn max_rule_by_hand() {
        let (model, samples) = calibration_fixture();
        let cal = calibrate(&model, &samples, 1.0).unwrap();
        assert_eq!(cal.model.classes[0].class_threshold, 5.0);
        assert_eq!(cal.model.classes[0].space_threshold, 10.0);
        assert_eq!(cal.rows[0].matched, 3);
    }

    #[test]
    fn margin_scales_thresholds() {
        let (model, samples) = calibration_fixture();
        let cal = calibrate(&model, &samples, 1.2).unwrap();
        assert!((cal.model.classes[0].class_threshold - 6.0).abs() <= 1e-12);
        assert!((cal.model.classes[0].space_threshold - 12.0).abs() <= 1e-12);
    }

    #[test]
    fn calibrating_on_training_samples_gives_zero_class_threshold() {
        let model = model_with(vec![
            profile("a", &[&[1.0, 2.0]], 0.0, 0.0),
            profile("b", &[&[8.0, -1.0]], 0.0, 0.0),
        ]);
        // Samples identical to training vectors, in-span so α ≈ 0 too.
        let samples = vec![
            (sv(&[1.0, 2.0, 0.0]), "a".to_string()),
            (sv(&[8.0, -1.0, 0.0]), "b".to_string()),
        ];
        let cal = calibrate(&model, &samples, 1.0).unwrap();
        for class in &cal.model.classes {
            assert_eq!(class.class_threshold, 0.0);
            assert!(class.space_threshold <= 1e-6 * 10.0);
        }
    }

    #[test]
    fn unmatched_class_keeps_zero_thresholds_and_is_reported() {
        // Class "far" never wins a nearest-neighbor contest for its sample.
        let model = model_with(vec![
            profile("near", &[&[0.0, 0.0]], 0.0, 0.0),
            profile("far", &[&[100.0, 100.0]], 0.0, 0.0),
        ]);
        let samples = vec![(sv(&[1.0, 1.0, 0.0]), "far".to_string())];
        let cal = calibrate(&model, &samples, 1.0).unwrap();
        let far = &cal.rows[1];
        assert_eq!(far.matched, 0);
        assert_eq!(cal.model.classes[1].class_threshold, 0.0);
        assert_eq!(cal.model.classes[1].space_threshold, 0.0);
    }

    #[test]
    fn unknown_calibration_label_is_an_error() {
        let (model, _) = calibration_fixture();
        let samples = vec![(sv(&[0.0, 0.0, 0.0]), "ghost".to_string())];
        let err = calibrate(&model, &samples, 1.0).unwrap_err();
        assert_eq!(err, ClassifierError::UnknownLabel("ghost".into()));
    }

    #[test]
    fn calibration_samples_reclassify_as_match() {
        let (model, samples) = calibration_fixture();
        let cal = calibrate(&model, &samples, 1.0).unwrap();
        for (phi, label) in &samples {
            let d = classify(phi, &cal.model).unwrap();
            assert_eq!(d.verdict, Verdict::Match(label.clone()));
            assert_eq!(d.case, DecisionCase::A);
        }
    }

    #[test]
    fn zero_vector_against_tight_model_is_case_d() {
        let model = model_with(vec![profile("fam", &[&[50.0, 0.0]], 0.5, 0.5)]);
        let d = classify(&sv(&[0.0, 0.0, 99.0]), &model).unwrap();
        assert_eq!(d.verdict, Verdict::Clean);
        assert_eq!(d.case, DecisionCase::D);
        assert_eq!(d.nearest_label, "fam");
    }

    #[test]
    fn all_four_cases_are_reachable() {
        let model = model_with(vec![profile("fam", &[&[0.0, 0.0]], 1.0, 1.0)]);
        let cases = [
            (sv(&[0.5, 0.0, 0.5]), DecisionCase::A),
            (sv(&[0.5, 0.0, 9.0]), DecisionCase::B),
            (sv(&[5.0, 0.0, 0.5]), DecisionCase::C),
            (sv(&[5.0, 0.0, 9.0]), DecisionCase::D),
        ];
        for (phi, expected) in cases {
            let d = classify(&phi, &model).unwrap();
            assert_eq!(d.case, expected);
            assert_eq!(matches!(d.verdict, Verdict::Match(_)), expected == DecisionCase::A);
        }
    }

    #[test]
    fn classify_is_deterministic() {
        let model = model_with(vec![profile("fam", &[&[1.0, 1.0]], 2.0, 2.0)]);
        let phi = sv(&[1.3, 0.7, 0.2]);
        let a = classify(&phi, &model).unwrap();
        let b = classify(&phi, &model).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_distance.to_bits(), b.class_distance.to_bits());
        assert_eq!(a.space_distance.to_bits(), b.space_distance.to_bits());
    }

    #[test]
    fn raising_thresholds_never_unmatches() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let theta = rng.random_range(0.0..3.0);
            let beta = rng.random_range(0.0..3.0);
            let model = model_with(vec![profile("fam", &[&[0.0, 0.0]], theta, beta)]);
            let phi = sv(&[
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
                rng.random_range(0.0..4.0),
            ]);
            let before = classify(&phi, &model).unwrap();
            let mut wider = model.clone();
            wider.classes[0].class_threshold += rng.random_range(0.0..2.0);
            wider.classes[0].space_threshold += rng.random_range(0.0..2.0);
            let after = classify(&phi, &wider).unwrap();
            if matches!(before.verdict, Verdict::Match(_)) {
                assert!(matches!(after.verdict, Verdict::Match(_)));
            }
        }
    }

    #[test]
    fn single_replicate_class_has_zero_sigma() {
        let model = model_with(vec![profile("solo", &[&[42.0, -7.0]], 0.0, 0.0)]);
        let stats = class_stats(&model);
        assert_eq!(stats[0].1, vec![0.0, 0.0]);
        assert_eq!(ceil_sigma(&stats[0].1), vec![0, 0]);
    }

    #[test]
    fn two_point_population_sigma_is_half_range() {
        let basis = Eigenbasis::from_parts(vec![vec![1.0]], vec![1.0], 1);
        let model = EigenModel {
            basis,
            classes: vec![profile("pair", &[&[0.0], &[2.0]], 0.0, 0.0)],
        };
        let stats = class_stats(&model);
        assert_eq!(stats[0].1, vec![1.0]);
    }

    #[test]
    fn class_stats_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let weights: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..2).map(|_| rng.random_range(-100.0..100.0)).collect())
            .collect();
        let model = model_with(vec![profile(
            "c",
            &weights.iter().map(|v| v.as_slice()).collect::<Vec<_>>(),
            0.0,
            0.0,
        )]);
        let stats = class_stats(&model);
        for d in 0..2 {
            // Two-pass oracle: mean first, then averaged squared deviations.
            let mean: f64 = weights.iter().map(|w| w[d]).sum::<f64>() / 9.0;
            let var: f64 = weights.iter().map(|w| (w[d] - mean).powi(2)).sum::<f64>() / 9.0;
            let expect = var.sqrt();
            assert!((stats[0].1[d] - expect).abs() <= 1e-9 * expect.max(1.0));
        }
    }

    #[test]
    fn train_model_groups_replicates_by_label() {
        let columns = vec![
            sv(&[255.0, 0.0, 0.0, 0.0]),
            sv(&[250.0, 5.0, 0.0, 0.0]),
            sv(&[0.0, 0.0, 200.0, 0.0]),
        ];
        let labels = vec!["a".to_string(), "a".to_string(), "b".to_string()];
        let out = train_model(&TrainingMatrix::new(columns, labels), 2).unwrap();
        assert_eq!(out.model.classes.len(), 2);
        assert_eq!(out.model.classes[0].label, "a");
        assert_eq!(out.model.classes[0].training_weights.len(), 2);
        assert_eq!(out.model.classes[1].training_weights.len(), 1);
        assert_eq!(out.spectrum.len(), 3);
    }

    #[test]
    fn train_model_clamps_m_prime_to_rank() {
        // One file, one class: rank 1 even though three directions were asked.
        let out = train_model(
            &TrainingMatrix::new(vec![sv(&[1.0, 2.0, 2.0])], vec!["solo".into()]),
            3,
        )
        .unwrap();
        assert_eq!(out.effective_m_prime, 1);
        assert_eq!(out.retained_rank, 1);
        assert_eq!(out.model.m_prime(), 1);
    }
}
