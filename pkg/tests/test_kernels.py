import os
import subprocess
import sys

import numpy as np
import pytest

from stochsol import _backend
from stochsol.laws import alpha_law, kpp_law

try:
    from stochsol import _ckernels  # noqa: F401
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled kernel not built")

CASES = {
    "kpp-full": dict(x0=0.0, horizon=1.0, rate=1.0, table=kpp_law().sampling_table(),
                     lo=0.0, hi=0.0, bounded=False, dt=1e-3),
    "kpp-interval": dict(x0=0.3, horizon=0.7, rate=1.0, table=kpp_law().sampling_table(),
                         lo=-1.0, hi=1.0, bounded=True, dt=1e-2),
    "alpha-full": dict(x0=0.0, horizon=0.5, rate=3.0, table=alpha_law(1.5, 0.5).sampling_table(),
                       lo=0.0, hi=0.0, bounded=False, dt=1e-3),
    "alpha-interval": dict(x0=-0.2, horizon=1.0, rate=2.0,
                           table=alpha_law(2.0).sampling_table(), lo=-0.5, hi=0.5,
                           bounded=True, dt=5e-3),
    "brownian": dict(x0=1.0, horizon=2.0, rate=0.0, table=kpp_law().sampling_table(),
                     lo=0.0, hi=0.0, bounded=False, dt=1e-3),
}


def run(kernel, case, seed=42, start=10, stop=410, max_particles=10**6, diffuse=True):
    c = CASES[case]
    return kernel(seed, start, stop, c["x0"], c["horizon"], c["rate"], c["table"], c["lo"],
                  c["hi"], c["bounded"], c["dt"], max_particles, diffuse)


@needs_ext
@pytest.mark.parametrize("case", sorted(CASES))
@pytest.mark.parametrize("diffuse", [True, False])
def test_compiled_kernel_is_bit_identical(case, diffuse):
    py = run(_backend.get_kernel("python"), case, diffuse=diffuse)
    cy = run(_backend.get_kernel("cython"), case, diffuse=diffuse)
    for a, b in zip(py, cy):
        assert a.dtype == b.dtype
        assert np.array_equal(a, b)


@needs_ext
def test_compiled_kernel_explosion_flags_match():
    py = run(_backend.get_kernel("python"), "kpp-full", max_particles=3, stop=200)
    cy = run(_backend.get_kernel("cython"), "kpp-full", max_particles=3, stop=200)
    assert py[4].any()
    assert np.array_equal(py[4], cy[4])
    assert np.array_equal(py[0], cy[0])


@pytest.mark.parametrize("case", sorted(CASES))
def test_kernel_output_layout(case):
    counts, xs, ts, kinds, exploded = run(_backend.get_kernel(), case, stop=60)
    assert counts.shape == (50,) and exploded.shape == (50,)
    assert counts.sum() == xs.size == ts.size == kinds.size
    c = CASES[case]
    assert np.all((ts > 0) & (ts <= c["horizon"]))
    time_exit = kinds == 0
    assert np.all(ts[time_exit] == c["horizon"])
    if c["bounded"]:
        assert np.all(np.isin(xs[~time_exit], [c["lo"], c["hi"]]))
    else:
        assert np.all(time_exit)


def test_subranges_concatenate():
    kernel = _backend.get_kernel()
    whole = run(kernel, "alpha-full", start=0, stop=100)
    parts = [run(kernel, "alpha-full", start=a, stop=a + 25) for a in range(0, 100, 25)]
    assert np.array_equal(whole[0], np.concatenate([p[0] for p in parts]))
    assert np.array_equal(whole[1], np.concatenate([p[1] for p in parts]))


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get_kernel("fortran")


def test_fallback_selected_by_environment():
    env = dict(os.environ, STOCHSOL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c",
                          "from stochsol import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_extension_selected_by_default():
    env = {k: v for k, v in os.environ.items() if k != "STOCHSOL_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c",
                          "from stochsol import _backend; print(_backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
