//! Writes the seeded candidate pool and its schema.
//!
//! `cargo run -p fairrank-core --example gen_credit -- data/credit250 [seed]`

use fairrank_core::scenario::{credit_csv, credit_schema, CREDIT_SEED};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let stem = args.next().unwrap_or_else(|| "data/credit250".into());
    let seed = args.next().map_or(CREDIT_SEED, |s| s.parse().expect("seed must be an integer"));
    std::fs::write(format!("{stem}.csv"), credit_csv(seed))?;
    let schema = serde_json::to_string_pretty(&credit_schema()).expect("schema serializes");
    std::fs::write(format!("{stem}.json"), schema + "\n")?;
    Ok(())
}
