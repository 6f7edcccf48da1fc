from __future__ import annotations

import functools

import pytest
from hypothesis import settings

settings.register_profile("desk", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("desk")

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")


@functools.lru_cache(maxsize=None)
def quad_for(alpha: float, n_nodes: int = 64):
    from fracevol.subordination import SubordinationQuadrature
    return SubordinationQuadrature(alpha, n_nodes)


@pytest.fixture
def quad():
    return quad_for


@functools.lru_cache(maxsize=None)
def laplace_decay_setup(n: int = 63, alpha: float = 0.5, K: int = 48, r: float = 2.0):
    """Operators of the 1D Laplacian over the gap window where the decay laws hold.

    The horizon is the upper end of the decay window, so every node lies in
    the small-time regime.  Returns ``(family, ops, window, lambda_A)``.
    """
    from fracevol.generator import build_family
    from fracevol.ultra import decay_window, measure_semigroup_lambda
    from fracevol.volterra import TimeGrid, build_operators

    probe = build_family("laplace-1d", n, 1.0)
    lo, hi = decay_window(probe, alpha)
    fam = build_family("laplace-1d", n, hi)
    _, _, ops = build_operators(fam, TimeGrid(hi, K, r), quad_for(alpha))
    return fam, ops, (lo, hi), measure_semigroup_lambda(fam)
