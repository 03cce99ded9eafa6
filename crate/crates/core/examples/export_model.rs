//! Train a regression tree and round-trip it through the compact binary
//! model format.

use ftmkit::channel::{generate_dataset, preset};
use ftmkit::ml::{export_compact, import_compact, train_tree};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_dataset(&preset("indoor-40")?.with_seed(2).spec)?;
    let samples = ds.labeled_samples();
    let model = train_tree(&samples, 8)?;
    let bytes = export_compact(&model);
    println!("tree with {} samples -> {} bytes", samples.len(), bytes.len());
    println!("header: {:02x?}", &bytes[..12]);

    let back = import_compact(&bytes)?;
    let same = samples
        .iter()
        .all(|s| back.predict(s.rtt_raw, s.mean_rssi) == model.predict(s.rtt_raw, s.mean_rssi));
    println!("predictions identical after import: {same}");
    let s = samples[0];
    println!(
        "rtt_raw {:.3} ns, rssi {:.1} dBm -> {:.3} m (truth {:.3} m)",
        s.rtt_raw,
        s.mean_rssi,
        back.predict(s.rtt_raw, s.mean_rssi),
        s.true_distance
    );
    Ok(())
}
