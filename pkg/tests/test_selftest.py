from src.cli.selftest import CHECKS, run_selftest


def test_every_check_passes():
    results = run_selftest()
    assert len(results) == len(CHECKS)
    failed = [f"{r.name}: {r.detail}" for r in results if not r.passed]
    assert not failed


def test_failures_are_reported(monkeypatch):
    def broken():
        raise ArithmeticError("overflow")

    monkeypatch.setattr("src.cli.selftest.CHECKS", [("broken", broken)])
    (result,) = run_selftest()
    assert not result.passed
    assert result.detail == "ArithmeticError: overflow"
