import numpy as np
import pytest
from scipy import stats

import oracles
from mmtail import fixtures, kernels, montecarlo as mc, structure
from mmtail.errors import AssumptionViolation, DivergenceSuspected
from mmtail.model import MmpModel


def test_deterministic_geometric_series():
    m = fixtures.contractive_single(1.0, 0.5)
    R, xi0, rho0, terms = mc.sample_r_backward(m, 0, seed=1)
    assert abs(R - 2.0) < 1e-11 and xi0 == 1.0 and rho0 == 0.5
    assert terms >= mc.MIN_TERMS


def test_single_sample_matches_batch():
    m = fixtures.model_b()
    b = mc.simulate_batch(m, 50, seed=9)
    for x in range(2):
        for i in (0, 17, 49):
            R, xi0, rho0, terms = mc.sample_r_backward(m, x, seed=9, index=i)
            s = b.by_state[x]
            assert (R, xi0, rho0, terms) == (s.R[i], s.xi0[i], s.rho0[i], s.terms[i])


def test_degenerate_samples_equal_gamma():
    m = fixtures.model_d()
    b = mc.simulate_batch(m, 20_000, seed=2)
    gamma = structure.check_degeneracy(m)[1]
    assert np.max(np.abs(b.by_state[0].R - gamma[0])) < 1e-6


def test_records_are_atoms_of_leaving_edges(any_fixture):
    _, m = any_fixture
    b = mc.simulate_batch(m, 2000, seed=4)
    for x, s in enumerate(b.by_state):
        allowed = {(xi, rho) for i, j, xi, rho, w in m.iter_atoms() if i == x}
        assert set(zip(s.xi0.tolist(), s.rho0.tolist())) <= allowed


def test_workers_bit_identical():
    m = fixtures.model_b()
    n = 3 * mc.CHUNK + 11
    a = mc.simulate_batch(m, n, seed=42, workers=1)
    b = mc.simulate_batch(m, n, seed=42, workers=8)
    for sa, sb in zip(a.by_state, b.by_state):
        for f in ("R", "xi0", "rho0", "terms", "flags"):
            assert np.array_equal(getattr(sa, f), getattr(sb, f))


def test_python_backend_batch_identical():
    if "cython" not in kernels.BACKENDS:
        pytest.skip("compiled core not built")
    m = fixtures.model_a_prime()
    a = mc.simulate_batch(m, 5000, seed=1, backend="cython")
    b = mc.simulate_batch(m, 5000, seed=1, backend="python")
    assert np.array_equal(a.by_state[0].R, b.by_state[0].R)


def test_empty_batch():
    b = mc.simulate_batch(fixtures.model_b(), 0, seed=1)
    assert [len(s) for s in b.by_state] == [0, 0]
    assert b.max_terms_hits == 0


def test_seed_changes_samples():
    m = fixtures.model_a()
    a = mc.simulate_batch(m, 100, seed=1).by_state[0].R
    b = mc.simulate_batch(m, 100, seed=2).by_state[0].R
    assert not np.array_equal(a, b)


def test_contractive_variant_conditional_means():
    # two-state model with every |rho| <= 0.9: E_x R solves a linear system
    edges = {
        (0, 0): (0.7, [(1.0, 0.9, 0.5), (-0.5, -0.6, 0.5)]),
        (0, 1): (0.3, [(2.0, 0.4, 1.0)]),
        (1, 0): (0.5, [(0.5, -0.8, 1.0)]),
        (1, 1): (0.5, [(1.0, 0.5, 0.3), (0.2, 0.7, 0.7)]),
    }
    m = MmpModel.build(["a", "b"], edges, 3.0, 4.0)
    b = mc.simulate_batch(m, 200_000, seed=3)
    means = oracles.conditional_means(m)
    for x, s in enumerate(b.by_state):
        se = s.R.std() / np.sqrt(len(s))
        assert abs(s.R.mean() - means[x]) < 3 * se


def test_model_b_truncation_report():
    b = mc.simulate_batch(fixtures.model_b(), 10**6, seed=1, eps_trunc=1e-12, max_terms=10**4)
    assert b.max_terms_hits == 0
    t = b.truncation()
    assert t["overflow"] == 0 and t["divergent_flagged"] == 0


def test_max_terms_fraction_small(any_fixture):
    name, m = any_fixture
    if name == "D":
        return
    b = mc.simulate_batch(m, 100_000, seed=8)
    n = sum(len(s) for s in b.by_state)
    assert b.max_terms_hits / n < 1e-4


def test_precondition_and_divergence():
    grow = MmpModel.build(["s"], {(0, 0): (1.0, [(1.0, 2.0, 0.5), (1.0, 0.75, 0.5)])}, 2.0, 4.0)
    with pytest.raises(AssumptionViolation):
        mc.simulate_batch(grow, 10, seed=1)
    with pytest.raises(DivergenceSuspected):
        mc.simulate_batch(grow, 1000, seed=1, eps_trunc=1e-3, check_drift=False)


def test_forward_fixed_point():
    m = fixtures.contractive_single(1.0, 0.5)
    S, flags = mc.sample_r_forward(m, 0, seed=1, count=3, burn_in=50, s0=10.0)
    assert np.all(np.abs(S - 2.0) <= 0.5**50 * 8.0 + 1e-15)
    assert not flags.any()


def test_forward_matches_backward_model_a():
    m = fixtures.model_a()
    n = 100_000
    fwd, _ = mc.sample_r_forward(m, 0, seed=5, count=n, burn_in=2000)
    bwd = mc.simulate_batch(m, n, seed=5).by_state[0].R
    d = stats.ks_2samp(fwd, bwd).statistic
    assert d < oracles.ks_critical(n, n)


def test_forward_initial_value_insensitive():
    m = fixtures.model_b()
    n = 50_000
    a, _ = mc.sample_r_forward(m, 1, seed=5, count=n, burn_in=2000, s0=0.0)
    b, _ = mc.sample_r_forward(m, 1, seed=6, count=n, burn_in=2000, s0=100.0)
    assert stats.ks_2samp(a, b).statistic < oracles.ks_critical(n, n)


def test_eps_for_kappa():
    assert mc.eps_for_kappa(1.0) == 1e-12
    e = mc.eps_for_kappa(0.1)
    assert abs(e ** 0.1 - 1e-4) < 1e-12


@pytest.mark.parametrize("suffix", [".csv", ".npy"])
def test_sample_io_roundtrip(tmp_path, suffix):
    b = mc.simulate_batch(fixtures.model_b(), 300, seed=1)
    path = tmp_path / ("s" + suffix)
    mc.save_samples(b, path)
    c = mc.load_samples(path, 2)
    for sa, sc in zip(b.by_state, c.by_state):
        for f in ("R", "xi0", "rho0", "terms"):
            assert np.array_equal(getattr(sa, f), getattr(sc, f))


def test_csv_header(tmp_path):
    b = mc.simulate_batch(fixtures.model_a(), 3, seed=1)
    path = tmp_path / "s.csv"
    mc.write_csv(b, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "state,index,R,xi0,rho0,terms"
    assert len(lines) == 4 and lines[1].startswith("0,0,")


def test_binary_layout(tmp_path):
    b = mc.simulate_batch(fixtures.model_a(), 5, seed=1)
    path = tmp_path / "s.npy"
    mc.write_binary(b, path)
    rec = np.load(path)
    assert rec.dtype == mc.BINARY_DTYPE and rec.dtype.itemsize == 49
    bad = tmp_path / "bad.npy"
    np.save(bad, np.zeros(3))
    with pytest.raises(ValueError):
        mc.read_binary(bad)
