"""Acceptance criteria 1-14 on the standard runs (about six minutes on one core).

Each criterion prints a ``[PASS]`` or ``[FAIL]`` line with its measured values.
"""
import pytest

from atl.acceptance import StandardRuns, Suite

CRITERIA = {
    1: "oracle exactness",
    2: "2D solver convergence",
    3: "3D sphere",
    4: "spherical critical point",
    5: "cylindrical critical point",
    6: "critical-set geometry",
    7: "classical-equation residual",
    8: "critical-point equation",
    9: "game convergence",
    10: "tangent-flow profile",
    11: "axis decay",
    12: "C11 stability",
    13: "viscosity suite",
    14: "blow-up exponent",
}


@pytest.fixture(scope="session")
def suite():
    return Suite(StandardRuns(seed=0))


@pytest.mark.slow
@pytest.mark.parametrize("cid", sorted(CRITERIA), ids=[f"c{c:02d}" for c in sorted(CRITERIA)])
def test_criterion(suite, cid, capsys):
    result = suite.run([cid]).criteria[0]
    with capsys.disabled():
        print(f"\n{result.line()} ({result.runtime_s:.1f}s)")
    assert result.name == CRITERIA[cid]
    assert result.passed, result.details
