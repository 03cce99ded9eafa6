//! Average current and battery lifetime of a periodically ranging tag.

use ftmkit::energy::{daily_budget, lifetime_table, lifetime_table_tsv, EnergyProfile, REFERENCE_PERIODS_S};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = EnergyProfile::default();
    let rows = lifetime_table(&p, &[("regression-tree", None), ("vendor", None)], &REFERENCE_PERIODS_S)?;
    print!("{}", lifetime_table_tsv(&rows));

    for period in [60.0, 600.0] {
        let b = daily_budget(&p, period)?;
        println!(
            "period {period} s: idle {:.3}% of the time, {:.2} mAh/day asleep, {:.2} mAh/day ranging",
            100.0 * b.idle_time_fraction,
            b.e_idle,
            b.e_ftm
        );
    }

    // a bigger battery with a chip that sleeps deeper
    let alt = EnergyProfile { i_sleep: 0.05, battery_capacity: 3400.0, ..p };
    let rows = lifetime_table(&alt, &[("low-sleep", None)], &REFERENCE_PERIODS_S)?;
    print!("{}", lifetime_table_tsv(&rows));
    Ok(())
}
