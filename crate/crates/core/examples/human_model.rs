//! Tabulates the human classification probability over working time and
//! queue length for a mid and a top operator.

use atahrl::agents::{phc, Difficulty, ModelConstants};

fn main() -> anyhow::Result<()> {
    let c = ModelConstants::default();
    for (label, eta, lambda) in [("mid", 0.35, 0.35), ("top", 0.7, 0.7)] {
        println!("{label} operator (eta {eta}, lambda {lambda}), high difficulty");
        println!("{:>8} {:>8} {:>8} {:>8}", "minutes", "queue 0", "queue 3", "queue 8");
        let fd = c.difficulty_factor(Difficulty::High);
        for minutes in [0.0, 30.0, 60.0, 120.0, 240.0] {
            let ff = c.fatigue_factor(minutes)?;
            let row: Vec<String> =
                [0, 3, 8].iter().map(|&q| format!("{:>8.4}", phc(eta, lambda, ff, c.workload_factor(q), fd))).collect();
            println!("{minutes:>8} {}", row.join(" "));
        }
    }
    Ok(())
}
