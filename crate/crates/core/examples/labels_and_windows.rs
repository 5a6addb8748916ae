//! Change-from-baseline labels and horizon windows.
//!
//! cargo run --example labels_and_windows

use chrono::NaiveDate;
use wearmil::cohort::{compute_delta, days_from_baseline, discretize_delta, HorizonWindows, Margins, Task};

fn main() -> anyhow::Result<()> {
    let margins = Margins::default();
    for task in Task::ALL {
        let r = margins.for_task(task);
        println!("{task} (margin {r}):");
        for (baseline, followup) in [(30.0, 24.0), (30.0, 30.0 - r), (30.0, 31.5), (30.0, 30.0 + r), (30.0, 38.0)] {
            let delta = compute_delta(followup, baseline)?;
            println!("  {baseline} -> {followup}: delta {delta:+.1} is {}", discretize_delta(delta, r)?.name());
        }
    }

    let windows = HorizonWindows::default();
    let baseline = NaiveDate::from_ymd_opt(2024, 1, 15).unwrap();
    println!("horizon assignment for baseline {baseline}:");
    for offset in [10u64, 46, 90, 135, 136, 200, 225, 260] {
        let date = baseline + chrono::Days::new(offset);
        let tau = days_from_baseline(date, baseline);
        let h = windows.assign(tau).map(|h| h.to_string()).unwrap_or_else(|| "none".into());
        println!("  {date} (day {tau:>3}): {h}");
    }
    Ok(())
}
