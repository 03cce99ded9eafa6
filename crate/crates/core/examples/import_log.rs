//! Import a foreign CSV log through a column mapping.

use ftmkit::io::external::import_reader;
use ftmkit::io::{format_dataset, MappingSpec, ReadOptions};

const LOG: &str = "\
burst;ap;rtt_us;frame_rtt_us;rssi;truth_mm
1;ap-1;0.0335;0.0331;-47;5000
1;ap-1;0.0335;0.0339;-48;5000
2;ap-2;0.0802;0.0802;-63;12000
";

const MAPPING: &str = r#"
name = "hallway"
scenario = "indoor"
delimiter = ";"
bandwidth = 20
measurement_key = "burst"

[columns]
anchor_id = "ap"
rtt_raw = "rtt_us"
rtt = "frame_rtt_us"
rssi = "rssi"
true_distance = "truth_mm"

[units]
rtt_raw = "us"
rtt = "us"
true_distance = "mm"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MappingSpec::from_toml_str(MAPPING)?;
    let outcome = import_reader(LOG.as_bytes(), &spec, ReadOptions::default())?;
    for w in &outcome.warnings {
        println!("warning: line {}: {}", w.line, w.message);
    }
    print!("{}", format_dataset(&outcome.dataset)?);
    Ok(())
}
