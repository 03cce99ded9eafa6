//! Recover the firmware's piecewise-linear RTT correction from logged
//! `(rtt_raw, rtt_est)` pairs.

use ftmkit::channel::{generate_dataset, preset};
use ftmkit::correction::{detect_breakpoints, fit_global_linear, fit_segmented};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = preset("outdoor-40")?.with_seed(1);
    let ds = generate_dataset(&p.spec)?;
    let pairs: Vec<(f64, f64)> = ds
        .measurements
        .iter()
        .filter_map(|m| m.rtt_est.map(|e| (m.rtt_raw, e)))
        .collect();
    println!("{} pairs, rtt_raw {:.1}..{:.1} ns", pairs.len(),
        pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));

    let bps = detect_breakpoints(&pairs, 3)?;
    println!("detected breakpoints: {bps:.2?} ns");
    let fit = fit_segmented(&pairs, &bps)?;
    for (i, s) in fit.map.segments().iter().enumerate() {
        println!(
            "  segment {i}: slope {:.4} intercept {:.3} ns ({} points, rmse {:.4})",
            s.slope, s.intercept, fit.counts[i], fit.rmse[i]
        );
    }
    if let Some(truth) = &p.spec.vendor_map {
        println!("generating map: {:?}", truth.segments());
    }
    let line = fit_global_linear(&pairs).expect("spread in rtt_raw");
    let rmse = (pairs.iter().map(|&(x, y)| (y - line.eval(x)).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
    println!("single line for comparison: rmse {rmse:.3} ns vs {:.3} ns", fit.total_rmse());
    Ok(())
}
