from __future__ import annotations

import pytest

from ndmanifold import GRADCHECK_COMPONENTS, CheckResult, exit_code, run_gradcheck, run_oracles


def test_oracles_pass() -> None:
    results = run_oracles()
    failed = [str(result) for result in results if not result.passed]

    assert not failed, '\n'.join(failed)
    assert {'ricci sphere', 'christoffel polar', 'cg vs dense solve', 'coupling inverse'} <= {r.name for r in results}


def test_small_gradcheck() -> None:
    results = run_gradcheck(seed=3, draws=3)

    assert [result.name for result in results] == [f'gradient {name}' for name in GRADCHECK_COMPONENTS]
    assert all(result.passed for result in results), '\n'.join(map(str, results))


@pytest.mark.slow
def test_full_gradcheck() -> None:
    assert exit_code(run_gradcheck()) == 0


def test_exit_code() -> None:
    ok = CheckResult('a', True, 0.0, 1.0)
    failed = CheckResult('b', False, 2.0, 1.0, 'detail')

    assert exit_code([ok]) == 0
    assert exit_code([ok, failed]) == 1
    assert exit_code([]) == 0
    assert str(failed) == '[FAIL] b: error 2.000e+00 (tolerance 1e+00) detail'
