//! Semantic JSON comparison: key order, whitespace and number spelling are
//! ignored; value changes are reported with their path.

use bigdecimal::BigDecimal;
use llm_interop::equivalence::texts_equivalent;

fn main() -> llm_interop::Result<()> {
    let a = r#"{"type": "Feature", "properties": {"area_ha": 12.50}, "bbox": [1e2, 0.1]}"#;
    let b = r#"{"bbox":[100,0.10],"properties":{"area_ha":12.5},"type":"Feature"}"#;
    let c = r#"{"bbox":[100,0.1],"properties":{"area_ha":12.51},"type":"Feature"}"#;
    println!("a vs b: {:?}", texts_equivalent(a, b, None)?.is_ok());
    match texts_equivalent(a, c, None)? {
        Ok(()) => println!("a vs c: equivalent"),
        Err(d) => println!("a vs c: {d}"),
    }
    let tol: BigDecimal = "0.01".parse().expect("literal");
    println!("a vs c within 0.01: {:?}", texts_equivalent(a, c, Some(&tol))?.is_ok());
    Ok(())
}
