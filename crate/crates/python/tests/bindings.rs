use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::ffi::CString;

fn run(code: &str) {
    use rmcam_tmr_py::rmcam_tmr_py as module;
    pyo3::append_to_inittab!(module);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.display(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn module_round_trip() {
    run(r#"
import json
import rmcam_tmr as rt
assert rt.vote(True, True, False)
assert all(rt.bit_serial_compare(a, b, 4, "lower") == (a >= b) for a in range(16) for b in range(16))
m = rt.DefectMap.from_defects(8, 8, [(1, 1), (1, 2), (2, 1)])
assert m.count_in_rect(0, 0, 3, 3) == 3 and len(m) == 64
assert rt.find_max_mask(m, 2, 2) == ((1, 1, 2, 2), 3)
report, plan = rt.run_trial("rows = 64\ncols = 64\nmask_height = 8\nmask_width = 8\ndensity_threshold = 40\n", uniform_rate=0.02, seed=3)
assert report["rows"] == 64 and report["seed"] == 3
assert rt.resolve(plan, 0, 0)["physical_row"] < 64
try:
    rt.bit_serial_compare(1, 2, 4, "sideways")
    raise SystemExit(1)
except ValueError:
    pass
"#);
}
