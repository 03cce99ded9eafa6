//! Split a synthetic campaign, tune each estimator by cross-validation and
//! compare test errors against the uncorrected baseline.
//!
//! cargo run --release --example train_models

use ftmkit::channel::{generate_dataset, preset};
use ftmkit::correction::distance_from_rtt;
use ftmkit::eval::{compare, ErrorRecord};
use ftmkit::ml::{
    cross_validate, split, train, CvConfig, HyperSpace, Hyperparams, SearchStrategy, SplitSpec,
    TrainOptions, Variant,
};
use ftmkit::{Bandwidth, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 11;
    let ds = generate_dataset(&preset("indoor-40")?.with_seed(seed).spec)?;
    let parts = split(&[ds.labeled_samples()], &SplitSpec { rng_seed: seed, ..SplitSpec::default() })?;
    let (train_set, test_set) = (parts.merged_train(), parts.merged_test());
    println!("train {} / test {}", train_set.len(), test_set.len());

    let mut records = Vec::new();
    for s in &test_set {
        records.push(ErrorRecord::new("raw", s.true_distance, distance_from_rtt(s.rtt_raw), Scenario::Indoor, Bandwidth::Mhz40));
    }
    for v in Variant::ALL {
        let base = TrainOptions::new(Hyperparams::default_for(v).with_seed(seed));
        let cv = CvConfig { budget: 4, strategy: SearchStrategy::Surrogate, seed, ..CvConfig::default() };
        let outcome = cross_validate(&train_set, &base, &HyperSpace::default_for(v), &cv)?;
        println!("{v}: best {:?} cv rmse {:.3} m", outcome.best_candidate, outcome.best_score);
        let model = train(&train_set, &outcome.best)?;
        for s in &test_set {
            let est = model.predict(s.rtt_raw, s.mean_rssi);
            records.push(ErrorRecord::new(v.as_str(), s.true_distance, est, Scenario::Indoor, Bandwidth::Mhz40));
        }
    }
    print!("{}", compare(&records)?.summary_tsv());
    Ok(())
}
