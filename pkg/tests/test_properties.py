import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zeronoise import build_catalog_map, make_kernel, parse_config
from zeronoise.domain import wrap_unit
from zeronoise.errors import ConfigError
from zeronoise.ergodic import entropy_formula_rhs, lyapunov_spectrum, restricted_norms
from zeronoise.grid import GridMeasure, circle_grid, solid_torus_grid, torus_grid
from zeronoise.maps import g_alpha_prime, sample_domain
from zeronoise.noise import NoiseKernel
from zeronoise.report import fmt
from zeronoise.rng import CounterStream
from zeronoise.transfer import UlamOperator, build_ulam, measure_distance

FAST = settings(max_examples=25, deadline=None,
                suppress_health_check=[HealthCheck.function_scoped_fixture])
SLOW = settings(max_examples=5, deadline=None)

eps_st = st.floats(1e-3, 0.2)
positive_weights = lambda n: arrays(np.float64, n, elements=st.floats(0, 1)).filter(
    lambda w: w.sum() > 1e-3)


@st.composite
def circle_maps(draw):
    if draw(st.booleans()):
        return build_catalog_map("doubling_d", d=draw(st.integers(2, 5)))
    return build_catalog_map("g_alpha", alpha=draw(st.floats(0.2, 2.0)))


# random streams and wrapping -------------------------------------------------

@FAST
@given(st.integers(0, 2 ** 63), st.integers(0, 10_000), st.integers(1, 50), st.integers(1, 9))
def test_stream_slices_agree(seed, start, count, width):
    s = CounterStream(seed, 17)
    full = s.uniforms(0, start + count, width)
    assert np.array_equal(full[start:], s.uniforms(start, count, width))


@FAST
@given(arrays(np.float64, 20, elements=st.floats(-1e6, 1e6)))
def test_wrap_lands_in_unit_interval(x):
    y = wrap_unit(x)
    assert np.all((y >= 0) & (y < 1))


# kernels -------------------------------------------------------------------

@FAST
@given(eps_st, st.integers(1, 4), st.sampled_from(["ball", "cube"]), st.integers(0, 1000))
def test_offsets_stay_in_support(eps, dim, shape, seed):
    k = NoiseKernel(eps, dim, shape)
    v = k.offsets(CounterStream(seed).uniforms(0, 500, k.words_per_draw))
    if shape == "ball":
        assert np.all(np.linalg.norm(v, axis=1) <= eps * (1 + 1e-12))
    else:
        assert np.all(np.abs(v) <= eps)


# Ulam matrices ---------------------------------------------------------------

@FAST
@given(circle_maps(), eps_st, st.sampled_from([64, 128, 500]), st.integers(1, 16),
       st.integers(0, 99))
def test_circle_ulam_is_column_stochastic(fmap, eps, cells, spc, seed):
    op = build_ulam(fmap, make_kernel(fmap, eps), circle_grid(cells), spc, seed)
    assert np.all(np.abs(op.column_sums() - 1) < 1e-10)
    assert op.matrix.data.min() >= 0


@SLOW
@given(eps_st, st.integers(0, 99))
def test_sampled_ulam_is_column_stochastic(eps, seed):
    fmap = build_catalog_map("solenoid_alpha", alpha=0.5)
    op = build_ulam(fmap, make_kernel(fmap, min(eps, 0.3)), solid_torus_grid(8, 8), 4, seed)
    assert np.all(np.abs(op.column_sums() - 1) < 1e-10)
    assert op.matrix.data.min() >= 0


@FAST
@given(circle_maps(), eps_st, st.integers(0, 99))
def test_ulam_file_round_trip(tmp_path, fmap, eps, seed):
    op = build_ulam(fmap, make_kernel(fmap, eps), circle_grid(64), 4, seed)
    op.save(tmp_path / "op.bin")
    back = UlamOperator.load(tmp_path / "op.bin")
    assert (back.matrix != op.matrix).nnz == 0
    assert back.kernel == op.kernel and back.grid == op.grid


# measures and distances ------------------------------------------------------

@FAST
@given(positive_weights(64))
def test_measures_normalise(w):
    m = GridMeasure(circle_grid(64), w)
    assert abs(m.weights.sum() - 1) <= 1e-12
    assert abs(m.coarsen(8).weights.sum() - 1) <= 1e-12


@FAST
@given(positive_weights(64), positive_weights(64), positive_weights(64))
def test_w1_circle_is_a_metric(a, b, c):
    g = circle_grid(64)
    ma, mb, mc = (GridMeasure(g, w) for w in (a, b, c))
    dab = measure_distance(ma, mb, "W1_circle")
    assert dab >= 0
    assert dab == pytest.approx(measure_distance(mb, ma, "W1_circle"), abs=1e-14)
    assert dab <= measure_distance(ma, mc, "W1_circle") + measure_distance(mc, mb, "W1_circle") + 1e-12
    assert dab <= 0.25 * measure_distance(ma, mb) + 1e-12  # W1 <= diameter * TV = L1 / 4


@FAST
@given(st.integers(0, 255), st.integers(0, 255))
def test_w1_between_point_masses_is_arc_length(i, j):
    g = circle_grid(256)
    d = measure_distance(GridMeasure.point_mass(g, [(i + 0.5) / 256]),
                         GridMeasure.point_mass(g, [(j + 0.5) / 256]), "W1_circle")
    k = abs(i - j)
    assert d == pytest.approx(min(k, 256 - k) / 256, abs=1e-12)


@FAST
@given(positive_weights(64), positive_weights(64), st.integers(0, 63))
def test_w1_rotation_invariant(a, b, shift):
    g = circle_grid(64)
    d0 = measure_distance(GridMeasure(g, a), GridMeasure(g, b), "W1_circle")
    d1 = measure_distance(GridMeasure(g, np.roll(a, shift)), GridMeasure(g, np.roll(b, shift)),
                          "W1_circle")
    assert d0 == pytest.approx(d1, abs=1e-12)


@FAST
@given(st.integers(2, 40), st.integers(2, 40))
def test_cell_of_centre_is_identity(n1, n2):
    g = torus_grid(n1, n2)
    assert np.array_equal(g.cell_of(g.centers()), np.arange(g.total_cells))


# entropy formula ---------------------------------------------------------------

@FAST
@given(positive_weights(512), positive_weights(512), st.floats(0, 1))
def test_entropy_rhs_is_linear_in_the_measure(w1, w2, a):
    fmap = build_catalog_map("g_alpha", alpha=0.5)
    g = circle_grid(512)
    m1, m2 = GridMeasure(g, w1), GridMeasure(g, w2)
    mix = GridMeasure(g, a * m1.weights + (1 - a) * m2.weights)
    lhs = entropy_formula_rhs(fmap, mix)
    rhs = a * entropy_formula_rhs(fmap, m1) + (1 - a) * entropy_formula_rhs(fmap, m2)
    assert lhs == pytest.approx(rhs, abs=1e-12)


@FAST
@given(positive_weights(512))
def test_entropy_rhs_positive_for_expanding_f(w):
    fmap = build_catalog_map("g_alpha", alpha=1.5)
    assert entropy_formula_rhs(fmap, GridMeasure(circle_grid(512), w)) >= 0


# domination -----------------------------------------------------------------

@FAST
@given(st.floats(0.2, 2.0), st.integers(0, 10_000))
def test_solenoid_product_respects_analytic_bound(alpha, seed):
    fmap = build_catalog_map("solenoid_alpha", alpha=alpha)
    x = sample_domain(fmap.domain, 200, seed)
    e, f_inv, _ = restricted_norms(fmap, x)
    assert np.all(e * f_inv <= 0.1 / g_alpha_prime(x[:, 0], alpha) * (1 + 1e-12))
    assert np.all(e * f_inv <= 0.1 * (1 + 1e-12))


# Lyapunov bookkeeping ------------------------------------------------------------

@SLOW
@given(st.sampled_from(["cat", "solenoid_alpha", "skew_torus", "da_torus"]),
       st.integers(0, 1000), st.floats(1e-3, 0.05))
def test_exponent_sum_identity(name, seed, eps):
    fmap = build_catalog_map(name)
    x0 = sample_domain(fmap.domain, 1, seed)[0]
    est = lyapunov_spectrum(fmap, make_kernel(fmap, eps), x0, 10_000, seed=seed)
    assert est.sum_identity_z() < 5
    assert est.chi_plus > 0


# config and CSV ----------------------------------------------------------------

@FAST
@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=8, unique=True))
def test_epsilon_lists(values):
    text = f"[map]\nname = cat\n[sweep]\nepsilon_list = {values!r}\n"
    if all(b < a for a, b in zip(values, values[1:])):
        assert parse_config(text).epsilon_list == tuple(values)
    else:
        with pytest.raises(ConfigError, match="not decreasing"):
            parse_config(text)


@FAST
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_floats_round_trip(x):
    assert float(fmt(x)) == x
