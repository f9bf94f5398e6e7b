//! Statistical checks of cross-validation on synthetic data.

use lsmi_sinkhorn::data::{generate, SyntheticKind, SyntheticSpec};
use lsmi_sinkhorn::model_selection::{cross_validate, CvGrid};
use lsmi_sinkhorn::EstimatorConfig;

#[test]
fn cv_prefers_unpaired_information_on_linear_data() {
    let mut below_one = 0;
    for seed in 0..10 {
        let data = generate(&SyntheticSpec::new(SyntheticKind::Linear, 50, 500, 500, seed)).unwrap();
        let cfg = EstimatorConfig { seed, ..Default::default() };
        let report = cross_validate(&data, &cfg, &CvGrid { seed, ..Default::default() }).unwrap();
        below_one += usize::from(report.best_beta < 1.0);
    }
    assert!(below_one > 5, "beta < 1 selected in only {below_one}/10 runs");
}
