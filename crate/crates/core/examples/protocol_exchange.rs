//! One FTM burst between devices with unsynchronized clocks.

use ftmkit::correction::distance_from_rtt;
use ftmkit::protocol::{rtt_from_timestamps, simulate_exchange, ExchangeConfig, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExchangeConfig {
        clock_resolution_ps: 100,
        rng_seed: 3,
        ..ExchangeConfig::default()
    };
    let distance = 12.5;
    let m = simulate_exchange(distance, &cfg, &NoiseModel::zero(-55.0))?;
    for (k, f) in m.frames.iter().enumerate() {
        let t = f.timestamps.expect("simulated frames carry timestamps");
        let rtt = rtt_from_timestamps(t.t1, t.t2, t.t3, t.t4)?;
        println!("frame {k}: t1 {} t2 {} t3 {} t4 {} -> {rtt:.3} ns", t.t1, t.t2, t.t3, t.t4);
    }
    let d = distance_from_rtt(m.rtt_raw);
    println!("rtt_raw {:.3} ns -> {d:.4} m (truth {distance} m)", m.rtt_raw);

    // the same burst with a noisy channel and a fixed multipath delay
    let noisy = NoiseModel {
        frame_rtt_sigma_ns: 3.0,
        excess_delay_ns: 15.0,
        rssi_dbm: -55.0,
        rssi_frame_sigma_db: 1.0,
    };
    let m = simulate_exchange(distance, &cfg, &noisy)?;
    println!("noisy: rtt_raw {:.3} ns -> {:.3} m", m.rtt_raw, distance_from_rtt(m.rtt_raw));
    Ok(())
}
