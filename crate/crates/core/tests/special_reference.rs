use catalytic_bbm::special::{erf, erfc, erfcx, norm_cdf, norm_quantile};

const REFERENCE: &str = include_str!("fixtures/special_reference.txt");
const TOLERANCE: f64 = 1e-12;

fn entries() -> impl Iterator<Item = (&'static str, f64, f64)> {
    REFERENCE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let name = it.next().unwrap();
            let x: f64 = it.next().unwrap().parse().unwrap();
            let v: f64 = it.next().unwrap().parse().unwrap();
            (name, x, v)
        })
}

fn relative_error(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

#[test]
fn every_reference_value_within_tolerance() {
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut checked = 0;
    for (name, x, want) in entries() {
        let got = match name {
            "erf" => erf(x),
            "erfc" => erfc(x),
            "erfcx" => erfcx(x),
            "norm_cdf" => norm_cdf(x),
            "norm_quantile" => norm_quantile(x),
            other => panic!("unknown function {other} in fixture"),
        };
        let err = relative_error(got, want);
        if err.is_nan() || err > TOLERANCE {
            worst.push((format!("{name}({x}) = {got:e}, want {want:e}"), err));
        }
        checked += 1;
    }
    assert!(checked >= 90, "fixture has only {checked} rows");
    assert!(worst.is_empty(), "out of tolerance: {worst:#?}");
}
