"""The numba kernels and the numpy fallback give the same numbers."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

SCRIPT = r"""
import json, numpy as np
from derreg._jit import backend
from derreg.graph import ring
from derreg.problem import random_problem
from derreg.solvers import run_solver
from derreg.measure import clean
from derreg.fleet import ResponseModel, respond
from derreg.signal import SignalTrace

rng = np.random.default_rng(99)
out = {"backend": backend()}
for alg in ("rc", "pd", "dana"):
    rows = []
    for n in (3, 9, 17):
        prob = random_problem(rng, n)
        run = run_solver(alg, prob, ring(n), 400)
        rows.append([run.allocation.p.tolist(), run.residuals.tolist()])
    out[alg] = rows
x = np.cumsum(rng.normal(size=500)) + 20.0
x[100] += 40.0
out["clean"] = clean(x).tolist()
u = SignalTrace(np.sin(np.arange(300) / 20.0))
out["respond"] = respond(u, ResponseModel(pure_delay=3, settle_time=2.0, ramp_limit=0.05), seed=1).values.tolist()
print(json.dumps(out))
"""


def _run(disable):
    env = dict(os.environ)
    env.pop("DERREG_DISABLE_JIT", None)
    if disable:
        env["DERREG_DISABLE_JIT"] = "1"
    res = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


@pytest.fixture(scope="module")
def both():
    return _run(False), _run(True)


def test_backend_flag(both):
    jit, plain = both
    assert jit["backend"] == "numba"
    assert plain["backend"] == "numpy"


@pytest.mark.parametrize("alg", ["rc", "pd", "dana"])
def test_solver_kernels_agree(both, alg):
    jit, plain = both
    for (p1, r1), (p2, r2) in zip(jit[alg], plain[alg]):
        np.testing.assert_allclose(p1, p2, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(r1, r2, rtol=1e-6, atol=1e-9)


def test_filter_and_response_agree(both):
    jit, plain = both
    # these loops are the same Python source with or without compilation
    np.testing.assert_allclose(jit["clean"], plain["clean"], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(jit["respond"], plain["respond"], rtol=1e-12, atol=1e-12)
