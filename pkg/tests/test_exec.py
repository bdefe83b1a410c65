import re
import threading

import numpy as np
import pytest
from numba import njit

from oracles import gauss_jordan_inverse, well_conditioned
from formulac.demos import count_steady_state_allocations
from formulac.errors import BindingError, NonFiniteError, SingularMatrixError
from formulac.interp import (coerce_bindings, detect_discontinuity, eval_ast, format_value,
                             parse_binding, random_bindings)
from formulac.parser import parse_formula
from formulac.pipeline import compile_formula, compile_project
from formulac.runtime import eval_tape, execute
from formulac.semtypes import REAL, matrix, parse_type, vector
from formulac.typecheck import TypeEnv, infer


def typed(text, **types):
    return infer(parse_formula(text), TypeEnv({k: parse_type(v) for k, v in types.items()}))


def _outcome(fn):
    try:
        return np.asarray(fn(), dtype=float)
    except SingularMatrixError:
        return "singular"


# -------------------------------------------------------------- examples
def test_identity_tape():
    c = compile_formula("v", {"v": vector(3)})
    assert c.tape.instrs == ()
    assert np.array_equal(c.run({"v": [1.0, 2.0, 3.0]})["result"], [1.0, 2.0, 3.0])


def test_identity_product():
    c = compile_formula("a * b", {"a": matrix(2, 2), "b": matrix(2, 2)})
    out = c.run({"a": np.eye(2), "b": [[5.0, 6.0], [7.0, 8.0]]})["result"]
    assert np.array_equal(out, [[5.0, 6.0], [7.0, 8.0]])


def test_information_form_core():
    c = compile_formula("(q^-1 + h)^-1", {"q": matrix(2, 2), "h": matrix(2, 2)})
    out = c.run({"q": 2 * np.eye(2), "h": 0.5 * np.eye(2)})["result"]
    assert np.array_equal(out, np.eye(2))


def test_oracle_examples():
    assert eval_ast(typed("sin(v)", v="vector[2]"), {"v": [0.0, np.pi / 2]}).tolist() == [0.0, 1.0]
    q = eval_ast(typed("f^T * a * f", f="vector[2]", a="matrix[2,2]"), {"f": [1, 1], "a": np.eye(2)})
    assert q.shape == (1, 1) and q[0, 0] == 2.0
    assert eval_ast(typed("delta(t)", t="real"), {"t": 0.5}) == 0.0


def test_detect_discontinuity():
    assert detect_discontinuity(parse_formula("f(t)*delta(t)"))
    assert not detect_discontinuity(parse_formula("sin(t)"))
    assert detect_discontinuity(parse_formula("cond(t > 0, delta(t - 1), 0)"))


# ------------------------------------------------------- core properties
def test_oracle_equivalence(corpus500):
    rng = np.random.default_rng(1)
    for p in corpus500:
        c = compile_project(p)
        for _ in range(5):
            b = random_bindings(p.inputs, rng)
            tape = _outcome(lambda: c.run(b)["r"])
            ast = _outcome(lambda: c.run_ast(b)["r"])
            if isinstance(tape, str) or isinstance(ast, str):
                assert isinstance(tape, str) and isinstance(ast, str)
                continue
            with np.errstate(invalid="ignore"):
                assert np.allclose(tape, ast, rtol=1e-12, atol=0, equal_nan=True)


def test_optimizer_is_bitwise_neutral(corpus500):
    rng = np.random.default_rng(2)
    for p in corpus500:
        c = compile_project(p)
        for _ in range(5):
            b = random_bindings(p.inputs, rng)
            opt = _outcome(lambda: c.run(b)["r"])
            raw = _outcome(lambda: eval_tape(c.raw_tape, b)["r"])
            if isinstance(opt, str) or isinstance(raw, str):
                assert isinstance(opt, str) and isinstance(raw, str)
                continue
            assert np.array_equal(opt, raw, equal_nan=True)
            assert np.array_equal(np.signbit(opt), np.signbit(raw))


def test_deterministic_across_threads(projects):
    c = compile_project((projects / "kalman.flc").read_text())
    rng = np.random.default_rng(4)
    pool = [random_bindings(c.project.inputs, rng) for _ in range(16)]
    want = [c.run(b) for b in pool]
    results = {}

    def work(k):
        runner = c.runner()
        outs = []
        for b in pool:
            runner.load(b)
            try:
                runner.run()
                outs.append(runner.out_buffer.copy())
            except SingularMatrixError:
                outs.append(None)
        results[k] = outs

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for k in range(1, 4):
        for a, b in zip(results[0], results[k]):
            assert (a is None and b is None) or a.tobytes() == b.tobytes()
    assert len(want) == 16


# -------------------------------------------------------------- inverse
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_inverse_accuracy(n):
    c = compile_formula("a^-1", {"a": matrix(n, n)})
    rng = np.random.default_rng(n)
    for _ in range(100):
        a = well_conditioned(n, rng) * 10.0 ** rng.uniform(-3, 3)
        inv = c.run({"a": a})["result"]
        assert np.max(np.abs(a @ inv - np.eye(n))) <= 1e-9
        assert np.allclose(inv, gauss_jordan_inverse(a), rtol=1e-9, atol=0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_singular_inputs_trip_the_guard(n):
    c = compile_formula("a^-1", {"a": matrix(n, n)})
    rng = np.random.default_rng(10 + n)
    cases = [np.zeros((n, n)), np.ones((n, n))]
    for _ in range(20):
        a = rng.normal(size=(n, n))
        a[-1] = a[0] * rng.uniform(-3, 3)  # dependent rows
        cases.append(a)
    for a in cases:
        with pytest.raises(SingularMatrixError):
            c.run({"a": a})
        with pytest.raises(SingularMatrixError):
            c.run_ast({"a": a})


def test_scalar_reciprocal_has_no_guard():
    c = compile_formula("x^-1", {"x": REAL})
    assert c.run({"x": 0.0})["result"] == np.inf


# -------------------------------------------------------------- bindings
def test_binding_specs(tmp_path):
    (tmp_path / "a.csv").write_text("1,2\n3,4\n")
    (tmp_path / "v.csv").write_text("1\n2\n3\n")
    assert parse_binding("t=2.5") == ("t", 2.5)
    assert parse_binding("p=true") == ("p", True)
    name, a = parse_binding("a=@a.csv", tmp_path)
    assert name == "a" and a.tolist() == [[1, 2], [3, 4]]
    raw = dict([parse_binding("v=@v.csv", tmp_path), ("a", a)])
    b = coerce_bindings(raw, {"v": vector(3), "a": matrix(2, 2)})
    assert b["v"].tolist() == [1, 2, 3]
    with pytest.raises(BindingError):
        parse_binding("t")
    with pytest.raises(BindingError):
        parse_binding("t=abc")
    with pytest.raises(BindingError):
        parse_binding("a=@missing.csv", tmp_path)


def test_binding_shape_errors():
    c = compile_formula("a * 2", {"a": matrix(2, 2)})
    with pytest.raises(BindingError, match=r"matrix\[2,2\]"):
        c.run({"a": np.ones((2, 3))})
    with pytest.raises(BindingError, match="input 'a' unbound"):
        c.run({})
    i = compile_formula("n + 1", {"n": parse_type("int")})
    with pytest.raises(BindingError):
        i.run({"n": 1.5})
    assert i.run({"n": 2})["result"] == 3


def test_scratch_buffer_checks():
    c = compile_formula("a + b", {"a": REAL, "b": REAL})
    with pytest.raises(BindingError):
        eval_tape(c.tape, {"a": 1.0, "b": 2.0}, scratch=np.zeros(1))
    runner = c.runner()
    assert eval_tape(c.tape, {"a": 1.0, "b": 2.0}, scratch=runner) == {"result": 3.0}


def test_check_finite():
    c = compile_formula("1 / x", {"x": REAL})
    assert c.run({"x": 0.0})["result"] == np.inf
    with pytest.raises(NonFiniteError):
        c.run({"x": 0.0}, check_finite=True)


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(True) == "true"
    assert format_value(np.array([[1.0, 2.5]])) == "[[1, 2.5]]"


# ----------------------------------------------------------- allocations
def test_kernel_ir_has_no_heap_allocation():
    c = compile_formula("a^-1 * b", {"a": matrix(2, 2), "b": matrix(2, 2)})
    r = c.runner()
    r.load({"a": np.eye(2), "b": np.eye(2)})
    # cached dispatchers cannot be inspected, so compile a fresh copy
    fresh = njit(nogil=True)(execute.py_func)
    fresh(*r.arrays, r.packed, r.scratch)
    ir = "".join(fresh.inspect_llvm().values())
    assert not re.search(r"@NRT_(MemInfo_alloc|Allocate)", ir)
    control = njit(lambda n: np.zeros(n))
    control(3)
    assert re.search(r"@NRT_MemInfo_alloc", "".join(control.inspect_llvm().values()))


def test_runner_steady_state_allocations(projects):
    c = compile_project((projects / "matmul4.flc").read_text())
    rng = np.random.default_rng(0)
    runner = c.runner()
    packed = []
    for _ in range(8):
        runner.load(random_bindings(c.project.inputs, rng))
        packed.append(runner.packed.copy())
    assert count_steady_state_allocations(runner, packed, 20000) == 0.0


def test_allocation_counter_detects_leaks():
    class Leaky:
        def __init__(self):
            self.kept = []

        def run(self, packed):
            self.kept.append([packed])

    assert count_steady_state_allocations(Leaky(), [np.zeros(1)], 2000) >= 1.0
