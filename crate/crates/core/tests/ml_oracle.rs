use fracwave::mlf::MittagLeffler;
use num_complex::Complex64;

struct Row {
    alpha: f64,
    beta: f64,
    z: Complex64,
    value: Complex64,
}

fn rows() -> Vec<Row> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ml_oracle.csv");
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let f = |i: usize| r[i].parse::<f64>().unwrap();
            Row {
                alpha: f(0),
                beta: f(1),
                z: Complex64::new(f(2), f(3)),
                value: Complex64::new(f(4), f(5)),
            }
        })
        .collect()
}

#[test]
fn matches_high_precision_series() {
    let mut worst = (0.0, String::new());
    let mut failures = Vec::new();
    for row in rows() {
        let m = MittagLeffler::new(row.alpha, row.beta).unwrap();
        let got = m.eval(row.z, 1e-13).unwrap();
        let scale = row.value.norm().max(1e-300);
        let err = (got.value - row.value).norm() / scale;
        let label = format!(
            "E_{{{},{}}}({}) = {} got {} via {:?} (est {:e})",
            row.alpha, row.beta, row.z, row.value, got.value, got.branch, got.est_error
        );
        if err > worst.0 {
            worst = (err, label.clone());
        }
        if err > 1e-10 {
            failures.push(format!("{err:e}: {label}"));
        }
    }
    println!("worst relative error {:e}: {}", worst.0, worst.1);
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
