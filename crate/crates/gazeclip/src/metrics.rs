//! Benchmark metrics: open-set attribution accuracy with threshold
//! rejection, detection ACC/AUC (AUC as the Mann-Whitney statistic computed
//! by sorting with average ranks), and mean cosine matching of gaze pairs.

use crate::error::{Error, Result};
use crate::gaze::GazeVector;
use indexmap::IndexMap;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Per-sample evaluation record.
#[derive(Debug, Clone)]
pub struct SampleScore {
    pub id: String,
    pub generator: String,
    /// True attribution label; -1 marks unseen generators.
    pub attribution_label: i64,
    /// True detection label; 0 real, 1 fake.
    pub detection_label: u8,
    /// Full attribution simplex.
    pub probs: Vec<f64>,
    /// Probability of the fake detection class.
    pub fake_prob: f64,
}

impl SampleScore {
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct ScoreSet {
    pub scores: Vec<SampleScore>,
}

impl ScoreSet {
    pub fn new(scores: Vec<SampleScore>) -> Result<Self> {
        for s in &scores {
            for p in s.probs.iter().chain(std::iter::once(&s.fake_prob)) {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Data(format!(
                        "sample `{}`: probability {p} outside [0,1]",
                        s.id
                    )));
                }
            }
        }
        Ok(ScoreSet { scores })
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorAccuracy {
    pub generator: String,
    pub correct: usize,
    pub total: usize,
}

impl GeneratorAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone)]
pub struct AttributionReport {
    pub threshold: f64,
    pub per_generator: Vec<GeneratorAccuracy>,
    /// Macro average over generators.
    pub average: f64,
}

impl AttributionReport {
    pub fn generator(&self, name: &str) -> Option<&GeneratorAccuracy> {
        self.per_generator.iter().find(|g| g.generator == name)
    }

    /// Macro average restricted to generators whose samples carry the given
    /// seen/unseen status.
    pub fn average_where(&self, scores: &ScoreSet, unseen: bool) -> f64 {
        let mut accs = Vec::new();
        for row in &self.per_generator {
            let is_unseen = scores
                .scores
                .iter()
                .find(|s| s.generator == row.generator)
                .map(|s| s.attribution_label < 0)
                .unwrap_or(false);
            if is_unseen == unseen {
                accs.push(row.accuracy());
            }
        }
        if accs.is_empty() {
            return f64::NAN;
        }
        accs.iter().sum::<f64>() / accs.len() as f64
    }
}

/// One sample is correct iff: unseen-labeled and rejected (max probability
/// below the threshold), or seen-labeled and argmax equals the label.
/// Accuracy is computed per generator, then macro-averaged.
pub fn eval_attribution(scores: &ScoreSet, threshold: f64) -> AttributionReport {
    let mut groups: IndexMap<String, GeneratorAccuracy> = IndexMap::new();
    for s in &scores.scores {
        let correct = if s.attribution_label < 0 {
            s.max_prob() < threshold
        } else {
            s.argmax() as i64 == s.attribution_label
        };
        let entry = groups
            .entry(s.generator.clone())
            .or_insert_with(|| GeneratorAccuracy {
                generator: s.generator.clone(),
                correct: 0,
                total: 0,
            });
        entry.total += 1;
        entry.correct += usize::from(correct);
    }
    let per_generator: Vec<GeneratorAccuracy> = groups.into_values().collect();
    let average = if per_generator.is_empty() {
        f64::NAN
    } else {
        per_generator.iter().map(|g| g.accuracy()).sum::<f64>() / per_generator.len() as f64
    };
    AttributionReport {
        threshold,
        per_generator,
        average,
    }
}

/// AUC via the Mann-Whitney U statistic: sort once, assign average ranks to
/// tie groups (ties credited 0.5), then normalize the positive rank sum.
/// Equals exhaustive pairwise counting exactly.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::Data(
            "AUC undefined: both classes must be present".into(),
        ));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let n = all.len();
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based average rank over the tie group [i, j).
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = positive.len() as f64;
    let nn = negative.len() as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

/// Detection accuracy at the 0.5 operating point on the fake-class
/// probability, pooled over both classes.
pub fn detection_accuracy(fake_probs_fake: &[f64], fake_probs_real: &[f64]) -> f64 {
    let correct = fake_probs_fake.iter().filter(|p| **p >= 0.5).count()
        + fake_probs_real.iter().filter(|p| **p < 0.5).count();
    correct as f64 / (fake_probs_fake.len() + fake_probs_real.len()) as f64
}

#[derive(Debug, Clone)]
pub struct DetectionRow {
    pub generator: String,
    pub unseen: bool,
    pub acc: f64,
    pub auc: f64,
}

#[derive(Debug, Clone)]
pub struct DetectionReport {
    pub per_generator: Vec<DetectionRow>,
    /// Macro averages over unseen generators vs. the real pool.
    pub unseen_acc: f64,
    pub unseen_auc: f64,
    /// Macro averages over seen generators vs. the real pool.
    pub seen_acc: f64,
    pub seen_auc: f64,
}

/// Per-generator detection against the pooled real test samples, plus macro
/// averages over the unseen and seen generator groups.
pub fn eval_detection(scores: &ScoreSet) -> Result<DetectionReport> {
    let real_pool: Vec<f64> = scores
        .scores
        .iter()
        .filter(|s| s.detection_label == 0)
        .map(|s| s.fake_prob)
        .collect();
    if real_pool.is_empty() {
        return Err(Error::Data("no real samples in the score set".into()));
    }
    let mut groups: IndexMap<String, (bool, Vec<f64>)> = IndexMap::new();
    for s in &scores.scores {
        if s.detection_label == 1 {
            let entry = groups
                .entry(s.generator.clone())
                .or_insert_with(|| (s.attribution_label < 0, Vec::new()));
            entry.1.push(s.fake_prob);
        }
    }
    if groups.is_empty() {
        return Err(Error::Data("no fake samples in the score set".into()));
    }
    let mut per_generator = Vec::new();
    for (name, (unseen, fakes)) in groups {
        per_generator.push(DetectionRow {
            generator: name,
            unseen,
            acc: detection_accuracy(&fakes, &real_pool),
            auc: auc(&fakes, &real_pool)?,
        });
    }
    let macro_over = |unseen: bool, f: &dyn Fn(&DetectionRow) -> f64| -> f64 {
        let rows: Vec<f64> = per_generator
            .iter()
            .filter(|r| r.unseen == unseen)
            .map(f)
            .collect();
        if rows.is_empty() {
            f64::NAN
        } else {
            rows.iter().sum::<f64>() / rows.len() as f64
        }
    };
    Ok(DetectionReport {
        unseen_acc: macro_over(true, &|r| r.acc),
        unseen_auc: macro_over(true, &|r| r.auc),
        seen_acc: macro_over(false, &|r| r.acc),
        seen_auc: macro_over(false, &|r| r.auc),
        per_generator,
    })
}

/// Mean cosine similarity over gaze-vector pairs.
pub fn cosine_match(pairs: &[(GazeVector, GazeVector)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("cosine_match: no pairs".into()));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        let na = a.norm();
        let nb = b.norm();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Data("cosine_match: zero-norm gaze vector".into()));
        }
        total += (a.yaw * b.yaw + a.pitch * b.pitch) / (na * nb);
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
pub(crate) mod oracle {
    /// O(n^2) pairwise counting: wins 1, ties 0.5.
    pub fn auc_pairwise(positive: &[f64], negative: &[f64]) -> f64 {
        let mut score = 0.0;
        for p in positive {
            for n in negative {
                if p > n {
                    score += 1.0;
                } else if p == n {
                    score += 0.5;
                }
            }
        }
        score / (positive.len() * negative.len()) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(id: &str, generator: &str, label: i64, det: u8, probs: Vec<f64>, fake: f64) -> SampleScore {
        SampleScore {
            id: id.into(),
            generator: generator.into(),
            attribution_label: label,
            detection_label: det,
            probs,
            fake_prob: fake,
        }
    }

    #[test]
    fn confident_unseen_samples_score_zero() {
        let scores = ScoreSet::new(vec![
            sample("a", "g1", -1, 1, vec![0.95, 0.05], 0.9),
            sample("b", "g1", -1, 1, vec![0.97, 0.03], 0.9),
        ])
        .unwrap();
        let report = eval_attribution(&scores, 0.9);
        assert_eq!(report.average, 0.0);
    }

    #[test]
    fn hesitant_unseen_samples_are_rejected_correctly() {
        let scores = ScoreSet::new(vec![
            sample("a", "g1", -1, 1, vec![0.5, 0.5], 0.9),
            sample("b", "g1", -1, 1, vec![0.4, 0.6], 0.9),
        ])
        .unwrap();
        let report = eval_attribution(&scores, 0.9);
        assert_eq!(report.average, 1.0);
    }

    #[test]
    fn crafted_six_sample_set_matches_hand_enumerated_rules() {
        // Hand enumeration:
        //  g-seen: [0.2,0.8] label 1 -> argmax 1, correct
        //          [0.7,0.3] label 1 -> argmax 0, wrong        => 1/2
        //  g-uns:  max 0.95 >= 0.9 -> wrong
        //          max 0.85 "accepted"? 0.85 < 0.9 -> correct => 1/2
        //  real:   [0.99,0.01] label 0 -> argmax 0, correct
        //          [0.45,0.55] label 0 -> argmax 1, wrong      => 1/2
        // macro = (0.5 + 0.5 + 0.5)/3 = 0.5
        let scores = ScoreSet::new(vec![
            sample("a", "g-seen", 1, 1, vec![0.2, 0.8], 0.8),
            sample("b", "g-seen", 1, 1, vec![0.7, 0.3], 0.8),
            sample("c", "g-uns", -1, 1, vec![0.95, 0.05], 0.8),
            sample("d", "g-uns", -1, 1, vec![0.85, 0.15], 0.8),
            sample("e", "real", 0, 0, vec![0.99, 0.01], 0.1),
            sample("f", "real", 0, 0, vec![0.45, 0.55], 0.1),
        ])
        .unwrap();
        let report = eval_attribution(&scores, 0.9);
        assert_eq!(report.per_generator.len(), 3);
        for row in &report.per_generator {
            assert_eq!(row.correct, 1, "{}", row.generator);
            assert_eq!(row.total, 2);
        }
        assert!((report.average - 0.5).abs() < 1e-12);
        // Macro average equals the mean of the per-generator values exactly.
        let mean: f64 = report
            .per_generator
            .iter()
            .map(|g| g.accuracy())
            .sum::<f64>()
            / report.per_generator.len() as f64;
        assert_eq!(report.average, mean);
    }

    #[test]
    fn auc_perfect_and_tied() {
        assert_eq!(auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn auc_matches_three_of_four_pairs_example() {
        // pos = [0.9, 0.4], neg = [0.8, 0.2]: pairs won = 3 of 4.
        let value = auc(&[0.9, 0.4], &[0.8, 0.2]).unwrap();
        assert_eq!(value, 0.75);
        assert_eq!(oracle::auc_pairwise(&[0.9, 0.4], &[0.8, 0.2]), 0.75);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(matches!(auc(&[0.5], &[]), Err(Error::Data(_))));
    }

    #[test]
    fn sorting_auc_equals_pairwise_counting_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let np = rng.gen_range(1..=120);
            let nn = rng.gen_range(1..=80);
            // Quantized scores force plenty of ties.
            let pos: Vec<f64> = (0..np)
                .map(|_| (rng.gen_range(0..20) as f64) / 20.0)
                .collect();
            let neg: Vec<f64> = (0..nn)
                .map(|_| (rng.gen_range(0..20) as f64) / 20.0)
                .collect();
            let fast = auc(&pos, &neg).unwrap();
            let slow = oracle::auc_pairwise(&pos, &neg);
            assert_eq!(fast.to_bits(), slow.to_bits(), "{fast} vs {slow}");
        }
    }

    #[test]
    fn detection_report_macroaverages_against_the_real_pool() {
        let scores = ScoreSet::new(vec![
            sample("r1", "real", 0, 0, vec![1.0, 0.0], 0.1),
            sample("r2", "real", 0, 0, vec![1.0, 0.0], 0.2),
            sample("f1", "gen-a", -1, 1, vec![0.5, 0.5], 0.9),
            sample("f2", "gen-a", -1, 1, vec![0.5, 0.5], 0.8),
            sample("f3", "gen-b", 1, 1, vec![0.5, 0.5], 0.05),
        ])
        .unwrap();
        let report = eval_detection(&scores).unwrap();
        let a = report
            .per_generator
            .iter()
            .find(|r| r.generator == "gen-a")
            .unwrap();
        assert_eq!(a.auc, 1.0);
        assert_eq!(a.acc, 1.0);
        assert!(a.unseen);
        let b = report
            .per_generator
            .iter()
            .find(|r| r.generator == "gen-b")
            .unwrap();
        assert_eq!(b.auc, 0.0);
        assert!((report.unseen_auc - 1.0).abs() < 1e-12);
        assert!((report.seen_auc - 0.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_match_identity_orthogonal_and_oracle() {
        let same = [
            (GazeVector { yaw: 0.3, pitch: 0.4 }, GazeVector { yaw: 0.3, pitch: 0.4 }),
            (GazeVector { yaw: -0.1, pitch: 0.2 }, GazeVector { yaw: -0.2, pitch: 0.4 }),
        ];
        assert!((cosine_match(&same[..1]).unwrap() - 1.0).abs() < 1e-12);

        let orth = vec![(
            GazeVector { yaw: 1.0, pitch: 0.0 },
            GazeVector { yaw: 0.0, pitch: 1.0 },
        )];
        assert!(cosine_match(&orth).unwrap().abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(GazeVector, GazeVector)> = (0..3)
            .map(|_| {
                (
                    GazeVector { yaw: rng.gen_range(-1.0..1.0), pitch: rng.gen_range(-1.0..1.0) },
                    GazeVector { yaw: rng.gen_range(-1.0..1.0), pitch: rng.gen_range(-1.0..1.0) },
                )
            })
            .collect();
        let got = cosine_match(&pairs).unwrap();
        let expect: f64 = pairs
            .iter()
            .map(|(a, b)| {
                (a.yaw * b.yaw + a.pitch * b.pitch)
                    / ((a.yaw.powi(2) + a.pitch.powi(2)).sqrt()
                        * (b.yaw.powi(2) + b.pitch.powi(2)).sqrt())
            })
            .sum::<f64>()
            / 3.0;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_gaze_is_data_error() {
        let pairs = vec![(
            GazeVector { yaw: 0.0, pitch: 0.0 },
            GazeVector { yaw: 0.1, pitch: 0.1 },
        )];
        assert!(matches!(cosine_match(&pairs), Err(Error::Data(_))));
    }
}
