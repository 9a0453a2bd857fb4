import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmpnn.basis import (
    AngularBasisConfig,
    RadialBasisConfig,
    expand_angle_cosine,
    expand_distance,
    legendre_first_kind,
    legendre_rational,
    legendre_rational_recurrence,
    legendre_table,
    normalization_grid,
    orthogonality_residual,
    radial_basis,
    rational_table,
)

import oracles

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())


def test_degree_zero_is_one():
    assert legendre_first_kind(0, 0.3) == 1.0
    assert np.all(legendre_first_kind(0, np.linspace(-1, 1, 5)) == 1.0)


def test_value_at_one():
    for n in range(13):
        assert legendre_first_kind(n, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_p2_at_half():
    assert legendre_first_kind(2, 0.5) == pytest.approx(-0.125, abs=1e-15)


@pytest.mark.parametrize("n", range(13))
def test_recurrence_matches_rodrigues(n):
    xs = [-0.9, -0.4, 0.0, 0.35, 0.8]
    ref = [float(oracles.legendre_rodrigues(n, x)) for x in xs]
    assert np.allclose(legendre_first_kind(n, np.array(xs)), ref, rtol=1e-12, atol=1e-14)


def test_recurrence_matches_frozen_explicit_sum():
    xs = np.array(FROZEN["legendre_x"])
    for n, ref in FROZEN["legendre"].items():
        assert np.allclose(legendre_first_kind(int(n), xs), ref, rtol=1e-12, atol=1e-14)


def test_frozen_values_still_match_live_oracle():
    x = FROZEN["legendre_x"][5]
    assert float(oracles.legendre_explicit(7, x)) == FROZEN["legendre"]["7"][5]


def test_out_of_range_and_negative_degree():
    with pytest.raises(ValueError):
        legendre_first_kind(2, 1.1)
    with pytest.raises(ValueError):
        legendre_first_kind(-1, 0.0)
    # tiny overshoot is clamped, not rejected
    assert legendre_first_kind(3, 1 + 1e-13) == pytest.approx(1.0)


def test_derivative_table_matches_finite_difference():
    x = np.linspace(-0.95, 0.95, 41)
    _, dp = legendre_table(12, x, with_derivative=True)
    h = 1e-6
    fd = (legendre_table(12, x + h) - legendre_table(12, x - h)) / (2 * h)
    assert np.allclose(dp, fd, atol=1e-6)


def test_rational_special_values():
    assert legendre_rational(0, 1.0) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    for n in range(13):
        assert legendre_rational(n, 0.0) == pytest.approx(math.sqrt(2) * (-1) ** n, abs=1e-12)


def test_rational_errors():
    with pytest.raises(ValueError):
        legendre_rational(2, -0.1)
    with pytest.raises(ValueError):
        legendre_rational(-2, 1.0)
    with pytest.raises(ValueError):
        rational_table(3, np.array([1.0, np.nan]))


def test_rational_recurrence_matches_direct_form():
    x = np.linspace(1e-3, 8.0, 800)
    direct = np.stack([legendre_rational(n, x) for n in range(13)], axis=-1)
    assert np.max(np.abs(rational_table(12, x) - direct)) < 1e-9
    for n in (2, 7, 12):
        assert np.max(np.abs(legendre_rational_recurrence(n, x) - direct[:, n])) < 1e-9


def test_rational_matches_frozen_oracle():
    xs = np.array(FROZEN["rational_x"])
    for n, ref in FROZEN["rational"].items():
        assert np.allclose(legendre_rational_recurrence(int(n), xs), ref, rtol=1e-12, atol=1e-14)


def test_rational_derivative():
    x = np.linspace(0.05, 6.0, 60)
    _, dr = rational_table(12, x, with_derivative=True)
    h = 1e-6
    fd = (rational_table(12, x + h) - rational_table(12, x - h)) / (2 * h)
    assert np.allclose(dr, fd, atol=1e-6)


def test_expand_distance_bounded_and_finite():
    cfg = RadialBasisConfig()
    d = np.linspace(normalization_grid(cfg)[0], cfg.cutoff, 2000)
    r = expand_distance(d, cfg)
    assert r.shape == (2000, 12)
    assert np.all(np.abs(r) <= 1.0 + 1e-12)
    edge = expand_distance(4.0, cfg)
    assert edge.shape == (12,) and np.all(np.isfinite(edge))


def test_expand_distance_attains_one_at_grid_argmax():
    cfg = RadialBasisConfig()
    grid = normalization_grid(cfg)
    assert grid[0] > 0 and grid[-1] == cfg.cutoff and len(grid) == 4096
    # independent recomputation of the degree-1 maximum on the grid
    vals = np.array([oracles.legendre_rational_oracle(1, float(x)) for x in grid[::64]])
    fine = np.array([legendre_rational(1, x) for x in grid])
    k = int(np.argmax(np.abs(fine)))
    assert np.max(np.abs(vals)) <= np.abs(fine[k]) + 1e-12
    assert abs(expand_distance(grid[k], cfg)[0]) == pytest.approx(1.0, abs=1e-6)
    for deg in range(12):
        assert np.max(np.abs(expand_distance(grid, cfg)[:, deg])) == pytest.approx(1.0, abs=1e-12)


def test_expand_distance_below_first_grid_point():
    # |R_k| keeps rising towards sqrt(2) as d -> 0+, so sub-grid distances
    # (far shorter than any bond) may overshoot 1 by the ratio to the grid peak
    cfg = RadialBasisConfig()
    rb = radial_basis(cfg)
    d = np.geomspace(1e-12, normalization_grid(cfg)[0], 50)
    r = expand_distance(d, cfg)
    assert np.all(np.abs(r) <= np.sqrt(2) / rb.scale + 1e-12)


def test_expand_distance_rejects_out_of_range():
    with pytest.raises(ValueError):
        expand_distance(0.0)
    with pytest.raises(ValueError):
        expand_distance(4.01)


def test_scale_table_is_read_only():
    rb = radial_basis(RadialBasisConfig())
    with pytest.raises(ValueError):
        rb.scale[0] = 2.0


def test_config_validation():
    with pytest.raises(ValueError):
        RadialBasisConfig(num_functions=0)
    with pytest.raises(ValueError):
        RadialBasisConfig(cutoff=0.0)
    with pytest.raises(ValueError):
        AngularBasisConfig(0)


def test_angle_expansion_identities():
    cfg = AngularBasisConfig()
    assert np.allclose(expand_angle_cosine(1.0, cfg), 1.0)
    assert np.allclose(expand_angle_cosine(-1.0, cfg), [(-1) ** k for k in range(1, 13)])
    at_zero = expand_angle_cosine(0.0, cfg)
    assert np.allclose(at_zero[0::2], 0.0)  # degrees 1, 3, 5, ...
    with pytest.raises(ValueError):
        expand_angle_cosine(1.5, cfg)


def test_orthogonality_examples():
    assert abs(orthogonality_residual(3, 5, 64)) < 1e-12
    assert orthogonality_residual(0, 0, 64) == pytest.approx(2.0, abs=1e-12)
    assert orthogonality_residual(4, 4, 64) == pytest.approx(2 / 9, abs=1e-12)
    with pytest.raises(ValueError):
        orthogonality_residual(6, 6, 12)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=4.0), st.floats(min_value=0.0, max_value=1.0))
def test_radial_components_bounded_property(d, _):
    assert np.all(np.abs(expand_distance(d)) <= 1.0 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 12), st.fractions(min_value=-1, max_value=1, max_denominator=997))
def test_recurrence_vs_explicit_sum_property(n, x):
    exact = float(oracles.legendre_explicit(n, x))
    got = legendre_first_kind(n, float(x))
    assert got == pytest.approx(exact, rel=1e-10, abs=1e-13)
