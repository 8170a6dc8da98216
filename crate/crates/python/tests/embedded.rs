use std::ffi::CString;

use pymixem::pymixem as module;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(code: &str) {
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals
            .set_item("pymixem", py.import("pymixem").unwrap())
            .unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

fn init() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        pyo3::append_to_inittab!(module);
        Python::initialize();
    });
}

#[test]
fn population_functions() {
    init();
    run(r#"
q = pymixem.em_map_quadrature(0.5, 1.0)
assert abs(pymixem.em_map_closed(0.5, 1.0) - q) < 1e-8
t = pymixem.run_population_em(0.2, 1.5)
assert t["converged"] and t["target"] == 1.5
try:
    pymixem.dm_dlambda_closed(-1.0, 1.0)
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#);
}

#[test]
fn model_fit_and_match() {
    init();
    run(r#"
m = pymixem.MixtureModel([[-2.0, 0.0], [2.0, 1.0]])
s = m.sample(500, seed=3)
assert s.n == 500 and s.d == 2
c, shift = s.center()
assert c.centered and len(shift) == 2
r = pymixem.fit([[-1.0, 0.0], [1.0, 0.0]], s, algorithm="regularized", m=0.1)
rep = pymixem.match_components(r.means, m.means)
assert sorted(rep["permutation"]) == [0, 1]
assert pymixem.is_success(r.means, m.means, 0.5)
objs = [x["objective"] for x in r.trace]
assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))
try:
    pymixem.fit([[0.0, 0.0]], s, algorithm="bogus")
    raise AssertionError("expected ValueError")
except ValueError:
    pass
back = pymixem.MixtureModel.from_json(m.to_json())
assert back.means == m.means
"#);
}

#[test]
fn experiment_from_dict() {
    init();
    run(r#"
spec = pymixem.default_spec()
spec.update(K_values=[2], d_values=[1], n_samples=300, n_inits=2, max_iters=30)
out = pymixem.run_experiment(spec, threads=1)
assert out["table_csv"].startswith("K,d,algorithm,")
assert len(out["table"]) == 2
"#);
}
