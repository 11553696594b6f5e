use prem_core::io::{load_csv, parse_csv, qq_envelope, write_mixing_csv, write_weights_csv, BUNDLED};
use prem_core::rng::{self, Purpose};
use prem_core::{bundled_dataset, prem_fit, PremConfig};

#[test]
fn bundled_datasets_round_trip_through_csv() {
    for name in BUNDLED {
        let ds = bundled_dataset(name).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("{name}.csv"));
        ds.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
        let back = load_csv(&path, &ds.response, &[], true).unwrap();
        assert_eq!(back.data, ds.data, "{name}");
    }
}

#[test]
fn predictor_selection_and_no_intercept() {
    let text = "a,b,y\n1,0.5,2\n2,0.25,3\n3,1,5\n4,2,4\n";
    let ds = parse_csv(text.as_bytes(), "t", "inline", "y", &["b".to_string()], false).unwrap();
    assert_eq!(ds.data.column_names(), ["b"]);
    assert!(!ds.data.has_intercept());
    assert_eq!(ds.data.x()[(3, 0)], 2.0);
}

#[test]
fn weights_and_mixing_files_parse_back_exactly() {
    let ds = bundled_dataset("phones").unwrap();
    let fit = prem_fit(&ds.data, &PremConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_weights_csv(&mut buf, &fit.obs_weights).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let parsed: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(parsed, fit.obs_weights);

    let mut buf = Vec::new();
    write_mixing_csv(&mut buf, &fit.psi_hat).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), fit.psi_hat.values().len() + 1);
    assert!(text.starts_with("u,psi\n"));
}

#[test]
fn envelope_brackets_most_gaussian_residuals() {
    let mut rng = rng::stream(3, Purpose::Data, 0);
    let r: Vec<f64> = prem_core::simulation::sample_errors(prem_core::ErrorDistribution::Normal, 60, &mut rng);
    let bands = qq_envelope(&r, 99, &mut rng::stream(3, Purpose::Envelope, 0)).unwrap();
    assert_eq!(bands.theoretical.len(), 60);
    assert!(bands.lower.iter().zip(&bands.upper).all(|(l, u)| l <= u));
    assert!(bands.exceedances() <= 6);
}
