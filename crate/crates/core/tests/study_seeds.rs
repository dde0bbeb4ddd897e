use ppgbp_core::study::{run_study, synthetic_cohort, StudyConfig};
use ppgbp_core::{ErrorType, IntervalKind, ProtocolConfig};

/// Prediction error exceeds model error in at least 90% of table cells on
/// each of 20 seeded 15-subject cohorts.
#[test]
fn prediction_exceeds_model_error_over_20_seeds() {
    let mut worst = 1.0f64;
    for seed in 1..=20 {
        let base = ProtocolConfig {
            rng_seed: seed,
            ..ProtocolConfig::default()
        };
        let sessions: Vec<_> = synthetic_cohort(&base, 15).unwrap().into_iter().map(|(s, _)| s).collect();
        let out = run_study(&sessions, &StudyConfig::default()).unwrap();
        let (mut n, mut above) = (0, 0);
        for kind in [IntervalKind::NormalBreathing, IntervalKind::BreathHold] {
            let model = out.report.table(kind, ErrorType::Model).unwrap();
            let pred = out.report.table(kind, ErrorType::Prediction).unwrap();
            for c in &model.cells {
                let p = pred.cell(c.feature, &c.interval_label).unwrap();
                n += 1;
                if p.summary.rmse >= c.summary.rmse {
                    above += 1;
                }
            }
        }
        let frac = above as f64 / n as f64;
        worst = worst.min(frac);
        assert!(frac >= 0.9, "seed {seed}: {above}/{n}");
    }
    eprintln!("worst seed fraction {worst:.3}");
}
