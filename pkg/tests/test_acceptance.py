"""One test per acceptance criterion; each prints a PASS/FAIL line with its figures."""

import pytest

from ensemble_interface.acceptance import CHECKS, run_check


@pytest.mark.parametrize("key", [key for key, _, _ in CHECKS], ids=[f"criterion_{key}" for key, _, _ in CHECKS])
def test_criterion(key, capsys):
    res = run_check(key)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.detail
