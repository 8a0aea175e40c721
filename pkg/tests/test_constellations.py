import math

import numpy as np
import pytest

from imlab.constellations import (Constellation, load_constellation, make_pam,
                                  make_psk, make_qam, save_constellation)


def test_psk_geometry():
    c = make_psk(8)
    assert len(c.points) == 8
    assert np.allclose(np.abs(c.points), 1.0, atol=1e-15)
    assert abs(c.mean_energy - 1.0) < 1e-15
    # rotating by one step permutes the set
    rot = c.points * np.exp(2j * math.pi / 8)
    assert np.allclose(np.sort_complex(rot), np.sort_complex(c.points), atol=1e-12)


def test_qam_square_and_cross():
    for M in (4, 16, 64, 256, 8, 32, 128):
        c = make_qam(M)
        assert len(c.points) == M
        assert abs(c.mean_energy - 1.0) < 1e-12, M
    # 16-QAM min distance at unit energy is 2/sqrt(10)
    assert abs(make_qam(16).min_distance() - 2.0 / math.sqrt(10.0)) < 1e-12
    with pytest.raises(ValueError):
        make_qam(12)


def test_pam_levels():
    c = make_pam(4)
    assert np.allclose(c.points.imag, 0.0)
    assert abs(c.mean_energy - 1.0) < 1e-12
    assert np.allclose(np.sort(c.points.real),
                       np.array([-3, -1, 1, 3]) / math.sqrt(5.0), atol=1e-12)


def test_constellation_invariants():
    with pytest.raises(ValueError):
        Constellation(points=np.array([1.0 + 0j]))          # too few
    with pytest.raises(ValueError):
        Constellation(points=np.array([1 + 0j, 1 + 0j]))    # duplicate
    with pytest.raises(ValueError):
        Constellation(points=np.array([1 + 0j, math.inf + 0j]))
    c = make_psk(4)
    with pytest.raises(ValueError):
        c.points[0] = 0.0   # write-locked


def test_csv_round_trip_exact(tmp_path):
    c = make_qam(32)
    path = tmp_path / "c.csv"
    save_constellation(c, path)
    back = load_constellation(path)
    assert np.array_equal(back.points, c.points)   # bitwise via repr round-trip
    assert not back.energy_warning


def test_load_rejects_duplicates_and_flags_energy(tmp_path):
    bad = tmp_path / "dup.csv"
    bad.write_text("index,re,im\n0,1.0,0.0\n1,1.0,0.0\n")
    with pytest.raises(ValueError):
        load_constellation(bad)
    hot = tmp_path / "hot.csv"
    hot.write_text("index,re,im\n0,2.0,0.0\n1,-2.0,0.0\n")
    c = load_constellation(hot)
    assert c.energy_warning
    assert abs(c.mean_energy - 4.0) < 1e-15


def test_load_rejects_bad_index_sequence(tmp_path):
    f = tmp_path / "seq.csv"
    f.write_text("index,re,im\n0,1.0,0.0\n2,-1.0,0.0\n")
    with pytest.raises(ValueError):
        load_constellation(f)
