//! The acceptance suite: each criterion runs at its pinned tolerance and
//! prints one pass/fail line (visible with `--nocapture`, or through
//! `ellinc selftest`).

#[test]
fn acceptance_criteria() {
    let results = ellinc_cli::acceptance::run_all();
    let mut all = true;
    for r in &results {
        println!("{}", r.line());
        all &= r.pass;
    }
    assert!(
        all,
        "acceptance criteria failed:\n{}",
        results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.line())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
