//! Reading and writing operators as JSON, including a Kraus description.

use dobrushin::io::{parse_operator, to_json};

fn main() -> dobrushin::Result<()> {
    let t = parse_operator(r#"{"space": {"kind": "classical", "n": 2}, "matrix": [[0.9, 0.2], [0.1, 0.8]]}"#)?;
    let text = to_json(&t)?;
    println!("{text}");
    assert_eq!(parse_operator(&text)?.matrix(), t.matrix());

    let dephasing = parse_operator(
        r#"{"space": {"kind": "quantum", "d": 2},
            "kraus": [{"re": [[0.8, 0], [0, 0.8]]}, {"re": [[0.6, 0], [0, -0.6]]}]}"#,
    )?;
    println!("dephasing channel: validated {}, cp_certified {}", dephasing.validated(), dephasing.cp_certified());

    let bad = parse_operator(r#"{"space": {"kind": "classical", "n": 2}, "matrix": [[1.2, 0], [-0.2, 1]]}"#)?;
    println!("not Markov: {}", serde_json::to_string(bad.validation_report())?);
    Ok(())
}
