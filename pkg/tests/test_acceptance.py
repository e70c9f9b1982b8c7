"""Acceptance criteria at full size and stated tolerances.

Each criterion prints one ``PASS`` or ``FAIL`` line with the measured value
and its bound. Run directly with ``python3 tests/test_acceptance.py`` or
through pytest.
"""

import json
import sys

import pytest

from clustergibbs.verify import CRITERIA, run_criterion


def _line(res) -> str:
    status = "PASS" if res.passed else "FAIL"
    return (f"{status} criterion {res.number:2d} {res.name}: measured={res.measured:.6g} "
            f"bound={res.bound:.6g} ({res.seconds:.1f}s)")


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = run_criterion(number)
    with capsys.disabled():
        print("\n" + _line(res))
    assert res.passed, json.dumps(res.detail, default=str)


if __name__ == "__main__":
    results = [run_criterion(k) for k in sorted(CRITERIA)]
    for res in results:
        print(_line(res))
    sys.exit(0 if all(r.passed for r in results) else 1)
