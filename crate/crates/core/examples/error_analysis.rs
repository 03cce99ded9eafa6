//! ECDF statistics, RSSI-versus-distance profiles and rank correlation for
//! indoor and outdoor campaigns.

use ftmkit::channel::{generate_dataset, preset};
use ftmkit::correction::distance_from_rtt;
use ftmkit::eval::{distance_rssi_correlation, ecdf, percentile_below, rssi_profile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["indoor-40", "outdoor-20"] {
        let ds = generate_dataset(&preset(name)?.with_seed(5).spec)?;
        let errors = |f: &dyn Fn(&ftmkit::FtmMeasurement) -> Option<f64>| -> Vec<f64> {
            ds.measurements
                .iter()
                .filter_map(|m| Some((f(m)? - m.true_distance?).abs()))
                .collect()
        };
        let raw = ecdf(&errors(&|m| Some(distance_from_rtt(m.rtt_raw))))?;
        let vendor = ecdf(&errors(&|m| m.dist_est))?;
        println!("{name}");
        println!(
            "  raw:    median {:.2} m, P90 {:.2} m, {:.0}% below 2.5 m",
            raw.median(),
            raw.quantile(0.9),
            100.0 * percentile_below(&raw, 2.5)
        );
        println!(
            "  vendor: median {:.2} m, P90 {:.2} m, {:.0}% below 2.5 m",
            vendor.median(),
            vendor.quantile(0.9),
            100.0 * percentile_below(&vendor, 2.5)
        );
        if let Some(rho) = distance_rssi_correlation(&ds) {
            println!("  spearman(distance, rssi) = {rho:.3}");
        }
        for row in rssi_profile(&ds, 2.0)?.iter().take(6) {
            println!(
                "  {:>5.1} m: {:>4} samples, {:.1} +- {:.1} dBm",
                row.distance, row.count, row.mean_rssi, row.std_rssi
            );
        }
    }
    Ok(())
}
