import math

import numpy as np
import pytest

from onebitcs.core import RngSeed
from onebitcs.diagnostics import (METHOD_NOTE, PropertyReport, check_rip, check_spep,
                                  check_tessellation, format_real, quotient_witness)
from onebitcs.errors import InvalidArgument
from onebitcs.measure import make_ensemble


def test_rip_oversampled_and_undersampled():
    r = check_rip(make_ensemble(RngSeed(70, 0), 2000, 100), 5, 0.5, 1000, RngSeed(70, 1))
    assert r.violation_rate == 0 and r.trials == 1000
    r = check_rip(make_ensemble(RngSeed(70, 2), 10, 100), 100, 0.01, 200, RngSeed(70, 3))
    assert r.violation_rate > 0
    with pytest.raises(InvalidArgument):
        check_rip(make_ensemble(RngSeed(70, 2), 10, 100), 5, 0.5, 0, RngSeed(70, 3))


def test_spep_cases():
    ens = make_ensemble(RngSeed(71, 0), 5000, 100)
    r = check_spep(ens, 5, 0.2, 200, RngSeed(71, 1), same=True)
    assert r.violation_rate == 0
    r = check_spep(make_ensemble(RngSeed(71, 2), 10, 100), 5, 0.01, 200, RngSeed(71, 3))
    assert r.violation_rate > 0.9
    for bad in (0.0, -0.1):
        with pytest.raises(InvalidArgument):
            check_spep(ens, 5, bad, 10, RngSeed(71, 1))


def test_tessellation_cases():
    ens = make_ensemble(RngSeed(72, 0), 3000, 50)
    tau = make_ensemble(RngSeed(72, 1), 3000, 1).matrix[:, 0]
    r = check_tessellation(ens, tau, 3, 1.0, 200, RngSeed(72, 2), same=True)
    assert r.trials == 200 and r.violations == 0 and r.worst_ratio == 0
    r = check_tessellation(ens, tau, 3, 1.0, 10 ** 4, RngSeed(72, 3))
    assert r.trials > 0 and r.violation_rate == 0
    one = make_ensemble(RngSeed(72, 4), 1, 50)
    r = check_tessellation(one, np.zeros(1), 3, 1.0, 2000, RngSeed(72, 5))
    assert r.violations > 0
    with pytest.raises(InvalidArgument):
        check_tessellation(ens, tau[:-1], 3, 1.0, 10, RngSeed(72, 2))


def test_reports_deterministic():
    ens = make_ensemble(RngSeed(73, 0), 200, 40)
    a = check_rip(ens, 4, 0.3, 100, RngSeed(73, 1)).csv_row()
    assert a == check_rip(ens, 4, 0.3, 100, RngSeed(73, 1)).csv_row()
    assert a[-1] == METHOD_NOTE


def test_violation_rate_nonincreasing_in_q():
    meds = []
    for q in (25, 50, 100, 200, 400):
        rates = [check_rip(make_ensemble(RngSeed(74, k), q, 100), 5, 0.3, 200, RngSeed(75, k)).violation_rate
                 for k in range(5)]
        meds.append(np.median(rates))
    assert all(a >= b for a, b in zip(meds, meds[1:]))


def test_report_rate_is_violations_over_trials():
    r = PropertyReport("rip", 10, 20, 2, 0.1, 8, 2, 1.5)
    assert r.violation_rate == 0.25
    assert format_real(0.1) == "0.10000000000000001"


def test_quotient_witness_cases():
    ens = make_ensemble(RngSeed(76, 0), 20, 40)
    assert quotient_witness(ens, np.zeros(20)).tolist() == [0.0] * 40
    u, rep = quotient_witness(ens, ens.matrix[:, 0], l1_budget=1.0, return_report=True)
    assert rep["l1"] <= 1.0 + 1e-12
    assert np.linalg.norm(ens.matrix @ u - ens.matrix[:, 0]) <= 1e-6 * np.linalg.norm(ens.matrix[:, 0])
    with pytest.raises(InvalidArgument):
        quotient_witness(make_ensemble(RngSeed(76, 1), 40, 40), np.zeros(40))


def test_quotient_ratio_stable():
    q, n = 40, 80
    ratios = []
    for k in range(20):
        ens = make_ensemble(RngSeed(77, k), q, n)
        e = make_ensemble(RngSeed(78, k), q, 1).matrix[:, 0]
        u, rep = quotient_witness(ens, e, return_report=True)
        assert np.linalg.norm(ens.matrix @ u - e) <= 1e-6 * np.linalg.norm(e)
        ratios.append(rep["ratio"])
    ratios = np.array(ratios)
    assert ratios.max() <= 2 and ratios.max() / ratios.min() <= 3
    assert math.isfinite(ratios.sum())
