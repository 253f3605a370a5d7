import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from splinenet.backend import available_backends
from splinenet.benchmark import benchmark_kernels, benchmark_table
from splinenet.splines import make_knot_vector

needs_cython = pytest.mark.skipif(
    "cython" not in available_backends(), reason="compiled extension not built"
)


@needs_cython
class TestBackendParity:
    """The compiled kernels and the numpy fallback must agree."""

    @pytest.fixture(autouse=True)
    def setup(self, rng):
        self.py = available_backends()["python"]
        self.cy = available_backends()["cython"]
        self.kv = make_knot_vector(-1.0, 1.0, 10, 3)
        self.rng = rng

    def test_find_span_and_basis(self):
        x = np.concatenate([self.rng.uniform(-1, 1, 3000), [-1.0, 1.0], self.kv.knots[4:-4]])
        npt.assert_array_equal(
            self.py.find_span_batch(self.kv.knots, 3, x),
            self.cy.find_span_batch(self.kv.knots, 3, x),
        )
        f1, v1 = self.py.basis_batch(self.kv.knots, 3, x)
        f2, v2 = self.cy.basis_batch(self.kv.knots, 3, x)
        npt.assert_array_equal(f1, f2)
        npt.assert_array_equal(v1, v2)

    def test_basis_derivative(self):
        x = self.rng.uniform(-1, 1, 2000)
        r1 = self.py.basis_deriv_batch(self.kv.knots, 3, x)
        r2 = self.cy.basis_deriv_batch(self.kv.knots, 3, x)
        for a, b in zip(r1, r2):
            npt.assert_array_equal(a, b)

    def test_lcn_kernels(self):
        coeffs = self.rng.normal(size=(6, 10))
        z = self.rng.uniform(-1, 1, (32, 6))
        h1, f1, v1 = self.py.lcn_apply(self.kv.knots, 3, coeffs, z)
        h2, f2, v2 = self.cy.lcn_apply(self.kv.knots, 3, coeffs, z)
        npt.assert_array_equal(h1, h2)
        npt.assert_array_equal(f1, f2)
        npt.assert_array_equal(v1, v2)
        npt.assert_array_equal(
            self.py.lcn_dh_dz(self.kv.knots, 3, coeffs, z),
            self.cy.lcn_dh_dz(self.kv.knots, 3, coeffs, z),
        )
        dh = self.rng.normal(size=(32, 6))
        npt.assert_array_equal(
            self.py.coeff_grad(f1, v1, dh, 10), self.cy.coeff_grad(f2, v2, dh, 10)
        )

    def test_kan_kernels(self):
        coeffs = self.rng.normal(size=(4, 6, 10))
        base_w = self.rng.normal(size=(4, 6))
        x_raw = self.rng.uniform(-1.4, 1.4, (16, 6))
        x_spl = np.clip(x_raw, -1, 1)
        live = ((x_raw >= -1) & (x_raw <= 1)).astype(float)
        h1, f1, v1 = self.py.kan_apply(self.kv.knots, 3, coeffs, base_w, x_spl, x_raw)
        h2, f2, v2 = self.cy.kan_apply(self.kv.knots, 3, coeffs, base_w, x_spl, x_raw)
        npt.assert_allclose(h1, h2, atol=1e-12)
        npt.assert_array_equal(f1, f2)
        npt.assert_array_equal(v1, v2)
        dh = self.rng.normal(size=(16, 4))
        r1 = self.py.kan_backward(self.kv.knots, 3, coeffs, base_w, x_spl, x_raw, f1, v1, live, dh)
        r2 = self.cy.kan_backward(self.kv.knots, 3, coeffs, base_w, x_spl, x_raw, f2, v2, live, dh)
        for a, b in zip(r1, r2):
            npt.assert_allclose(a, b, atol=1e-12)

    @pytest.mark.parametrize("degree", [0, 1, 2, 4, 5])
    def test_all_degrees(self, degree):
        kv = make_knot_vector(-2.0, 3.0, max(degree + 1, 7), degree)
        x = self.rng.uniform(-2, 3, 500)
        f1, v1 = self.py.basis_batch(kv.knots, degree, x)
        f2, v2 = self.cy.basis_batch(kv.knots, degree, x)
        npt.assert_array_equal(f1, f2)
        npt.assert_array_equal(v1, v2)


def test_env_var_selects_backend():
    auto_resolves_to = "cython" if "cython" in available_backends() else "python"
    for choice, expected in (("python", "python"), ("auto", auto_resolves_to)):
        out = subprocess.run(
            [sys.executable, "-c", "from splinenet.backend import backend_name; print(backend_name())"],
            capture_output=True,
            text=True,
            env={"SPLINENET_BACKEND": choice, "PATH": "/usr/bin:/bin:/usr/local/bin"},
            timeout=120,
        )
        assert out.stdout.strip() == expected, out.stderr


def test_unknown_backend_rejected():
    out = subprocess.run(
        [sys.executable, "-c", "import splinenet.backend"],
        capture_output=True,
        text=True,
        env={"SPLINENET_BACKEND": "fortran", "PATH": "/usr/bin:/bin:/usr/local/bin"},
        timeout=120,
    )
    assert out.returncode != 0
    assert "SPLINENET_BACKEND" in out.stderr


def test_benchmark_rows_cover_backends():
    rows = benchmark_kernels(batch=8, width=4, repeats=1)
    backends = {row["backend"] for row in rows}
    assert "python" in backends
    kernels_per_backend = len({row["kernel"] for row in rows})
    assert kernels_per_backend == 5
    for row in rows:
        assert row["seconds"] > 0


def test_benchmark_table_renders():
    table = benchmark_table(batch=8, width=4, repeats=1)
    assert "kernel" in table and "speedup" in table
