"""Driver loop bookkeeping: configs, rates, extrapolation, CSV."""

import math
import os

import numpy as np
import pytest

from fracafem.errors import InputError, NumericalError
from fracafem.harness import (AfemConfig, LevelRecord, energy_error,
                              exact_energy_disc, extrapolate_energy,
                              fit_rate, run, write_records)
from fracafem.mesh import DomainSpec


def _rec(level, dofs, energy_sq, error=None, estimator=0.1):
    return LevelRecord(level=level, dofs=dofs, n_elements=2 * dofs,
                       energy_sq=energy_sq, estimator=estimator,
                       error=error, n_marked=1)


def test_exact_energy_disc_closed_forms():
    assert exact_energy_disc(0.5) == pytest.approx(math.pi ** 2 / 3.0,
                                                   rel=1e-14)
    expect = 2.0 ** 0.5 * math.gamma(1.25) ** 2 * 2.0 * math.pi / 2.5
    assert exact_energy_disc(0.25) == pytest.approx(expect, rel=1e-14)
    with pytest.raises(InputError):
        exact_energy_disc(0.0)
    with pytest.raises(InputError):
        exact_energy_disc(1.0)


def test_exact_energy_disc_continuous_in_s():
    grid = np.linspace(0.1, 0.9, 81)
    vals = np.array([exact_energy_disc(s) for s in grid])
    assert np.all(np.abs(np.diff(vals)) < 0.1)


def test_energy_error_basics():
    r = _rec(0, 10, 2.0)
    assert energy_error(r, 2.0) == 0.0
    assert energy_error(r, 2.25) == pytest.approx(0.5)
    # tiny negative radicand clamps, larger one fails
    assert energy_error(r, 2.0 - 5e-11) == 0.0
    with pytest.raises(NumericalError):
        energy_error(r, 2.0 - 1e-6)


def test_fit_rate_synthetic_exact():
    recs = [_rec(k, n, 1.0, error=n ** -0.5)
            for k, n in enumerate([10, 40, 160, 640])]
    assert fit_rate(recs, window=4) == pytest.approx(-0.5, abs=1e-12)
    recs = [_rec(k, n, 1.0, error=3.7 * n ** -0.25)
            for k, n in enumerate([10, 40, 160, 640, 2560])]
    assert fit_rate(recs, window=4) == pytest.approx(-0.25, abs=1e-12)


def test_fit_rate_needs_two_points():
    recs = [_rec(0, 10, 1.0, error=0.5), _rec(1, 20, 1.0, error=None)]
    with pytest.raises(InputError):
        fit_rate(recs, window=4)


def test_extrapolate_energy_geometric_exact():
    L, c, q = 3.0, 0.7, 0.55
    recs = [_rec(k, 10 * 2 ** k, L - c * q ** k) for k in range(6)]
    limit, unc = extrapolate_energy(recs)
    assert limit == pytest.approx(L, rel=1e-12)
    assert unc == pytest.approx(abs(recs[-1].energy_sq
                                    - recs[-2].energy_sq))


def test_extrapolate_energy_constant_sequence():
    recs = [_rec(k, 10 * 2 ** k, 1.25) for k in range(4)]
    limit, unc = extrapolate_energy(recs)
    assert limit == 1.25
    assert unc == 0.0


def test_extrapolate_energy_errors():
    with pytest.raises(InputError):
        extrapolate_energy([_rec(0, 1, 1.0), _rec(1, 2, 2.0)])
    bumpy = [_rec(0, 1, 1.0), _rec(1, 2, 2.0), _rec(2, 4, 1.5),
             _rec(3, 8, 2.2)]
    with pytest.raises(NumericalError):
        extrapolate_energy(bumpy)


def test_config_validation():
    dom = DomainSpec("unit_circle")
    AfemConfig(dom, s=0.5).validate()
    with pytest.raises(InputError):
        AfemConfig(dom, s=0.5, theta=0.0).validate()
    with pytest.raises(InputError):
        AfemConfig(dom, s=0.5, strategy="greedy").validate()
    with pytest.raises(InputError):
        AfemConfig(dom, s=0.5, max_dofs=7000).validate()
    with pytest.raises(InputError):
        AfemConfig(dom, s=0.5, rhs="constant:abc").validate()
    cfg = AfemConfig(dom, s=0.5, rhs="constant:2.5")
    assert cfg.rhs_value() == 2.5
    cfg = AfemConfig(dom, s=0.25)
    assert cfg.rhs_value() == pytest.approx(
        2.0 ** 0.5 * math.gamma(1.25) ** 2)
    lcfg = AfemConfig(DomainSpec("l_shape"), s=0.5)
    assert lcfg.rhs_value() == 1.0


def test_write_records_format(tmp_path):
    recs = [
        LevelRecord(0, 5, 16, 1.5, 0.25, 0.125, 3),
        LevelRecord(1, 11, 30, 1.75, 0.2, None, 7),
    ]
    path = tmp_path / "out.csv"
    write_records(recs, path)
    text = path.read_text()
    assert text == (
        "level,dofs,n_elements,energy_sq,estimator,error,n_marked\n"
        "0,5,16,1.5,0.25,0.125,3\n"
        "1,11,30,1.75,0.20000000000000001,,7\n"
    )


@pytest.fixture(scope="module")
def tiny_circle_run():
    cfg = AfemConfig(DomainSpec("unit_circle"), s=0.5, theta=0.4,
                     max_dofs=40)
    return cfg, run(cfg)


def test_run_records_are_monotone(tiny_circle_run):
    _, res = tiny_circle_run
    dofs = [r.dofs for r in res.records]
    energies = [r.energy_sq for r in res.records]
    assert dofs == sorted(dofs)
    assert all(b >= a - 1e-12 for a, b in zip(energies, energies[1:]))
    assert all(r.error is not None and r.error > 0 for r in res.records)
    assert res.records[-1].dofs <= 40


def test_run_is_deterministic(tiny_circle_run, tmp_path):
    cfg, res = tiny_circle_run
    res2 = run(cfg)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_records(res.records, p1)
    write_records(res2.records, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_run_identity_deviation_small(tiny_circle_run):
    _, res = tiny_circle_run
    assert max(res.identity_deviations) <= 1e-9


def test_run_theorem1_ratios_finite(tiny_circle_run):
    _, res = tiny_circle_run
    assert len(res.efficiency_ratios) == len(res.records) - 1
    assert all(0.0 < v <= 50.0 for v in res.efficiency_ratios)
    assert all(0.0 < v <= 50.0 for v in res.reliability_ratios)


def test_run_stops_before_initial_when_cap_tiny():
    cfg = AfemConfig(DomainSpec("l_shape"), s=0.5, max_dofs=2)
    res = run(cfg, collect=False)
    assert len(res.records) == 1
    assert res.records[0].dofs == 0
    assert res.records[0].error is None


def test_run_dumps_meshes(tmp_path):
    cfg = AfemConfig(DomainSpec("unit_circle"), s=0.5, max_dofs=8)
    res = run(cfg, collect=False, dump_dir=tmp_path)
    files = sorted(os.listdir(tmp_path))
    assert files == ["mesh_level_%03d.txt" % r.level for r in res.records]


def test_cli_exit_codes(tmp_path):
    from fracafem.cli import main
    out = str(tmp_path / "r.csv")
    assert main(["run", "--domain", "circle", "--s", "1.7",
                 "--out", out]) == 2
    assert main(["run", "--domain", "circle", "--s", "0.5",
                 "--theta", "0", "--out", out]) == 2
    assert main(["bogus"]) == 2
    assert main(["run", "--domain", "circle", "--s", "0.5",
                 "--max-dofs", "6", "--out", out]) == 0
    assert os.path.exists(out)
