//! Pairwise two-proportion tests for four cells, as a TSV table.
//!
//! cargo run --example compare_table -- 596 608 620 501

use llm_interop::stats::{compare_proportions, format_p_value, pass_at_k, Proportion};

fn main() -> llm_interop::Result<()> {
    let counts: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let counts = if counts.len() == 4 { counts } else { vec![596, 608, 620, 501] };
    let n = 666;
    println!("comparison\tz\tp_value\th\tpower\treject_H0");
    for i in 0..counts.len() {
        for j in i + 1..counts.len() {
            let r = compare_proportions(Proportion::new(counts[i], n)?, Proportion::new(counts[j], n)?, 0.05, true)?;
            println!(
                "v{} vs v{}\t{:.4}\t{}\t{:.4}\t{:.4}\t{}",
                i + 1,
                j + 1,
                r.z,
                format_p_value(r.p_value),
                r.h,
                r.power,
                r.reject_null()
            );
        }
    }
    println!("pass@5 with 10 samples, 3 correct: {:.4}", pass_at_k(10, 3, 5)?);
    Ok(())
}
