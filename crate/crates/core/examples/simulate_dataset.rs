//! Generate the built-in indoor scenario and write it as a dataset file.
//!
//! cargo run --example simulate_dataset -- [seed] [out.ftm]

use ftmkit::channel::{generate_dataset, preset, preset_names};
use ftmkit::io::write_dataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let out = args.next().unwrap_or_else(|| "indoor-40.ftm".into());

    println!("built-in presets: {}", preset_names().collect::<Vec<_>>().join(", "));
    let p = preset("indoor-40")?.with_seed(seed);
    let ds = generate_dataset(&p.spec)?;
    let frames: usize = ds.measurements.iter().map(|m| m.frames.len()).sum();
    println!(
        "{}: {} measurements, {} frames, {} anchors",
        ds.name,
        ds.len(),
        frames,
        p.spec.anchor_positions.len()
    );
    for m in ds.measurements.iter().take(3) {
        println!(
            "  {} truth {:.3} m  rtt_raw {:.3} ns  rssi {:.1} dBm",
            m.anchor_id,
            m.true_distance.unwrap_or(f64::NAN),
            m.rtt_raw,
            m.mean_rssi().unwrap_or(f64::NAN)
        );
    }
    write_dataset(&ds, std::path::Path::new(&out))?;
    println!("wrote {out}");
    Ok(())
}
