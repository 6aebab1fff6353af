use nclab_core::verify::{format_table, run_suite, Faults, Level};

#[test]
fn fast_suite_passes() {
    let res = run_suite(Level::Fast, &Faults::default());
    let table = format_table(&res);
    println!("{table}");
    assert!(res.iter().all(|r| r.passed), "{table}");
}

#[test]
fn flipped_gradient_sign_is_caught_by_finite_differences() {
    let res = run_suite(
        Level::Fast,
        &Faults {
            flip_gradient_sign: true,
        },
    );
    let failed: Vec<_> = res.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    assert_eq!(failed, vec!["gradient_finite_difference"]);
    let cx = res[0].counterexample.as_ref().unwrap();
    assert_eq!(cx["property"], "gradient_finite_difference");
    assert!(cx["case"]["params"].is_object());
}
