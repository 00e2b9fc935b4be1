import numpy as np
import pytest

from czdg.verification import (SUITES, cohesive_limit_sweep, convergence_study, run_suite,
                               single_face_dissipation)


@pytest.mark.parametrize("name", SUITES)
def test_suite_passes(name):
    report = run_suite(name)
    assert report["suite"] == name
    assert report["checks"]
    assert report["passed"], report


def test_unknown_suite():
    with pytest.raises(KeyError, match="unknown suite"):
        run_suite("nope")


def test_limit_errors_shrink_monotonically():
    r = cohesive_limit_sweep()
    assert np.all(np.diff(r["err"]) < 0)


def test_convergence_errors_decrease():
    r = convergence_study(levels=(2, 4, 8))
    assert np.all(np.diff(r["l2"]) < 0) and np.all(np.diff(r["energy"]) < 0)


def test_single_face_dissipation_coarse():
    r = single_face_dissipation(steps=60)
    assert r["failed"]
    assert r["tally"] == pytest.approx(r["expected"], rel=1e-9)
    assert r["work"] == pytest.approx(r["expected"], rel=0.05)
