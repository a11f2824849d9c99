use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<R>(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> R) -> R {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "mlcl").unwrap();
        mlcl::mlcl(&m).unwrap();
        f(py, &m)
    })
}

#[test]
fn rule_spaces_and_instances() {
    with_module(|_, m| {
        let pair: Vec<String> = m.getattr("rule_space").unwrap().call1(("pair",)).unwrap().extract().unwrap();
        assert_eq!(pair.len(), 38);
        assert!(m.getattr("rule_space").unwrap().call1(("quad",)).is_err());
        let inst = m.getattr("generate_instance").unwrap().call1(("center", 4u64, 16u16)).unwrap();
        let inst = inst.cast::<PyDict>().unwrap();
        let correct: usize = inst.get_item("correct_index").unwrap().unwrap().extract().unwrap();
        let satisfying: Vec<usize> = inst.get_item("satisfying").unwrap().unwrap().extract().unwrap();
        assert_eq!(satisfying, vec![correct]);
    });
}

#[test]
fn losses_agree_on_singletons() {
    with_module(|_, m| {
        let z = vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]];
        let a: f64 = m.getattr("supcon_loss").unwrap().call1((z.clone(), vec![0usize, 0, 1], 0.5)).unwrap().extract().unwrap();
        let labels = vec![vec![0usize], vec![0], vec![1]];
        let b: f64 = m.getattr("mlc_loss").unwrap().call1((z.clone(), labels.clone(), 0.5)).unwrap().extract().unwrap();
        assert!((a - b).abs() < 1e-12);
        let odd = vec![vec![1.0, 0.0]; 4];
        let kw = PyDict::new(m.py());
        kw.set_item("zneg", odd).unwrap();
        assert!(m.getattr("mlc_loss").unwrap().call((z, labels, 0.5), Some(&kw)).is_err());
    });
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mlds");
    with_module(|_, m| {
        let cfg = [("count", "12"), ("panel_size", "12")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<std::collections::HashMap<_, _>>();
        let (count, digest): (usize, String) =
            m.getattr("generate_dataset").unwrap().call1((path.clone(), cfg)).unwrap().extract().unwrap();
        assert_eq!((count, digest.len()), (12, 64));
        let (n, bad): (usize, Vec<usize>) = m.getattr("verify_dataset").unwrap().call1((path,)).unwrap().extract().unwrap();
        assert_eq!((n, bad.len()), (12, 0));
    });
}
