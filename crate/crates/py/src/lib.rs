//! Python bindings: parse a program, then analyze, instrument, run, or verify it.
//! Structured results come back as plain dicts and lists.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use intermit_core::analysis::{analyze, CallPolicy};
use intermit_core::bench;
use intermit_core::inputs::{ChannelSource, InputStreams};
use intermit_core::lang::{self, print_program, Word};
use intermit_core::oracle::{verify_result, EquivalenceOptions};
use intermit_core::power::{fuzz, run_exhaustive, FuzzConfig, PowerModel};
use intermit_core::runtime::{run, RunConfig};
use intermit_core::transform::{instrument, InstrumentedProgram, Mode};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn mode(name: &str) -> PyResult<Mode> {
    name.parse().map_err(PyValueError::new_err)
}

/// A parsed task program together with the inputs its `sample` statements read.
#[pyclass(name = "Program", module = "intermit")]
struct PyProgram {
    program: lang::Program,
    cfg: RunConfig,
}

impl PyProgram {
    fn instrumented(&self, mode: Mode) -> InstrumentedProgram {
        instrument(&self.program, &analyze(&self.program, CallPolicy::OnDemand), mode)
    }
}

#[pymethods]
impl PyProgram {
    /// Sets `channel` to repeat `values` forever.
    fn set_input(&mut self, channel: &str, values: Vec<Word>) -> PyResult<()> {
        if values.is_empty() {
            return Err(PyValueError::new_err("an input channel needs at least one value"));
        }
        let inputs = std::mem::take(&mut self.cfg.inputs);
        self.cfg.inputs = inputs.with(channel, ChannelSource::Sequence(values));
        Ok(())
    }

    /// Task names, in declaration order.
    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.program.tasks.iter().map(|t| t.name.clone()).collect()
    }

    fn source(&self) -> String {
        print_program(&self.program)
    }

    #[pyo3(signature = (strict_calls=false))]
    fn analyze<'py>(&self, py: Python<'py>, strict_calls: bool) -> PyResult<Bound<'py, PyAny>> {
        let policy = if strict_calls { CallPolicy::Strict } else { CallPolicy::OnDemand };
        to_py(py, &analyze(&self.program, policy).to_json(&self.program))
    }

    /// `(instrumented source, manifest)`.
    fn transform<'py>(&self, py: Python<'py>, mode: &str) -> PyResult<(String, Bound<'py, PyAny>)> {
        let ip = self.instrumented(self::mode(mode)?);
        Ok((print_program(&ip.program), to_py(py, &ip.manifest())?))
    }

    /// One simulated run. `power` is `continuous`, `budget=N`, or `schedule=FILE`;
    /// `schedule` (a list of step indices) takes precedence when given.
    #[pyo3(signature = (mode="redo", power="continuous", schedule=None, seed=0))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        mode: &str,
        power: &str,
        schedule: Option<Vec<u64>>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ip = self.instrumented(self::mode(mode)?);
        let power = match schedule {
            Some(s) => PowerModel::Schedule(s),
            None => PowerModel::parse_spec(power).map_err(value_error)?,
        };
        power.validate().map_err(value_error)?;
        if power == PowerModel::Exhaustive {
            return Err(PyValueError::new_err("use verify(exhaustive=True) for the exhaustive sweep"));
        }
        let cfg = RunConfig {
            power,
            inputs: self.cfg.inputs.reseeded(seed),
            ..self.cfg.clone()
        };
        let r = py.detach(|| run(&ip, &cfg));
        let d = PyDict::new(py);
        d.set_item("outcome", r.outcome.to_string())?;
        d.set_item("halted", r.observation.halted)?;
        d.set_item("observation", to_py(py, &serde_json::to_value(&r.observation).map_err(value_error)?)?)?;
        d.set_item("stats", to_py(py, &serde_json::to_value(&r.stats).map_err(value_error)?)?)?;
        d.set_item(
            "divergence",
            verify_result(&ip.base, &r, EquivalenceOptions::default()).err().map(|d| d.to_string()),
        )?;
        Ok(d)
    }

    /// Exhaustive single-failure sweep and/or `fuzz_runs` random budget runs.
    /// Returns `{"passed": bool, "divergences": [str], "failure_points": int}`.
    #[pyo3(signature = (mode="redo", exhaustive=true, fuzz_runs=0, seed=0))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        mode: &str,
        exhaustive: bool,
        fuzz_runs: u64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ip = self.instrumented(self::mode(mode)?);
        let opts = EquivalenceOptions::default();
        let (points, mut problems) = py.detach(|| {
            let mut problems = Vec::new();
            let mut points = 0;
            if exhaustive {
                let rep = run_exhaustive(&ip, &self.cfg, opts);
                points = rep.steps;
                problems.extend(rep.divergent.iter().map(|(k, d)| format!("step {k}: {d}")));
                problems.extend(rep.errors.iter().map(|(k, e)| format!("step {k}: {e}")));
            }
            if fuzz_runs > 0 {
                let fc = FuzzConfig {
                    runs: fuzz_runs,
                    seed,
                    ..FuzzConfig::default()
                };
                let rep = fuzz(&ip, &self.cfg, &fc, opts);
                problems.extend(
                    rep.failures
                        .iter()
                        .map(|f| format!("fuzz run {} (capacity {}): {}", f.run, f.capacity, f.reason)),
                );
            }
            (points, problems)
        });
        problems.truncate(100);
        let d = PyDict::new(py);
        d.set_item("passed", problems.is_empty())?;
        d.set_item("failure_points", points)?;
        d.set_item("divergences", problems)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Program(tasks={:?})", self.tasks())
    }
}

/// Parses task-language source; unsampled channels get seeded random inputs.
#[pyfunction]
#[pyo3(signature = (source, seed=0))]
fn parse(source: &str, seed: u64) -> PyResult<PyProgram> {
    let program = lang::parse_program(source).map_err(value_error)?;
    let cfg = RunConfig {
        inputs: InputStreams::new().fill_random(&program, seed),
        ..RunConfig::default()
    };
    Ok(PyProgram { program, cfg })
}

/// Names of the bundled corpus programs.
#[pyfunction]
fn corpus() -> Vec<String> {
    bench::corpus().into_iter().map(|b| b.name).collect()
}

/// A bundled corpus program with its inputs.
#[pyfunction]
fn load(name: &str) -> PyResult<PyProgram> {
    let b = bench::find(name).ok_or_else(|| PyKeyError::new_err(name.to_string()))?;
    Ok(PyProgram {
        program: b.program(),
        cfg: b.config(),
    })
}

#[pymodule]
fn intermit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyProgram>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    Ok(())
}
