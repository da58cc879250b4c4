import io
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendlab import cmaes
from trendlab.cmaes import (
    Candidate,
    CmaConfig,
    CmaState,
    default_config,
    expected_norm,
    log_weights,
    optimize,
    penalized_objective,
    rank_and_recombine,
    rank_candidates,
    recondition,
    sample_population,
    update_paths_and_covariance,
    update_step_size,
    weighted_mean,
)
from trendlab.errors import InvalidDimension


def sphere(x):
    return -float(np.dot(x, x))


# default_config

@pytest.mark.parametrize("n,lam,mu", [(18, 12, 6), (1, 4, 2), (5, 8, 4), (10, 10, 5)])
def test_population_sizes(n, lam, mu):
    cfg = default_config(n, np.zeros(n), 1.0)
    assert (cfg.lam, cfg.mu) == (lam, mu)


def test_two_parent_weights_follow_log_formula():
    # oracle: normalize ln(2.5) - ln(1), ln(2.5) - ln(2)
    a, b = math.log(2.5), math.log(2.5) - math.log(2)
    w = log_weights(2)
    assert w.tolist() == pytest.approx([a / (a + b), b / (a + b)], abs=1e-15)
    assert w.tolist() == pytest.approx([0.804163, 0.195837], abs=1e-6)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 18, 100])
def test_default_config_invariants(n):
    cfg = default_config(n, np.zeros(n), 0.5)
    w = cfg.weights
    assert abs(w.sum() - 1) <= 1e-12
    assert np.all(w > 0) and np.all(np.diff(w) <= 0)
    for rate in (cfg.c_sigma, cfg.c_c, cfg.c_1, cfg.c_mu):
        assert 0 <= rate <= 1
    assert cfg.c_1 + cfg.c_mu <= 1
    assert cfg.d_sigma >= 1


def test_default_config_rates_for_18():
    # independent arithmetic for n = 18, mu = 6
    raw = [math.log(6.5) - math.log(i + 1) for i in range(6)]
    w = [r / sum(raw) for r in raw]
    mu_eff = 1 / sum(v * v for v in w)
    cfg = default_config(18, np.zeros(18), 1.0)
    assert cfg.mu_eff == pytest.approx(mu_eff, rel=1e-12)
    assert cfg.c_sigma == pytest.approx((mu_eff + 2) / (18 + mu_eff + 5), rel=1e-12)
    assert cfg.c_1 == pytest.approx(2 / (19.3 ** 2 + mu_eff), rel=1e-12)
    assert cfg.c_c == pytest.approx((4 + mu_eff / 18) / (22 + 2 * mu_eff / 18), rel=1e-12)


def test_default_config_errors():
    with pytest.raises(InvalidDimension):
        default_config(0, [], 1.0)
    with pytest.raises(ValueError):
        default_config(2, [0, 0], 0.0)
    with pytest.raises(InvalidDimension):
        default_config(3, [0, 0], 1.0)


def test_popsize_override_recomputes_dependents():
    cfg = default_config(18, np.zeros(18), 1.0, lam=32)
    assert (cfg.lam, cfg.mu, len(cfg.weights)) == (32, 16, 16)


# expected norm and step size

def test_expected_norm_for_18():
    oracle = math.sqrt(18) * (1 - 1 / 72 + 1 / 6804)
    assert expected_norm(18) == pytest.approx(oracle, rel=1e-15)
    assert expected_norm(18) == pytest.approx(4.18434, abs=1e-5)


def test_expected_norm_close_to_monte_carlo():
    rng = np.random.default_rng(0)
    for n in (2, 10, 18):
        mc = np.linalg.norm(rng.standard_normal((200_000, n)), axis=1).mean()
        assert expected_norm(n) == pytest.approx(mc, rel=5e-3)


def test_step_size_neutral_path():
    cfg = default_config(18, np.zeros(18), 2.0)
    st_ = CmaState.initial(cfg)
    st_.p_sigma = np.zeros(18)
    st_.p_sigma[0] = expected_norm(18)
    assert update_step_size(st_, cfg).sigma == 2.0


def test_step_size_zero_path():
    cfg = default_config(18, np.zeros(18), 2.0)
    st_ = CmaState.initial(cfg)
    out = update_step_size(st_, cfg).sigma
    assert out == pytest.approx(2.0 * math.exp(-cfg.c_sigma / cfg.d_sigma), rel=1e-15)


# sampling

def test_sampling_is_deterministic():
    cfg = default_config(5, np.ones(5), 0.7, seed=42)
    a = sample_population(CmaState.initial(cfg), cfg)
    b = sample_population(CmaState.initial(cfg), cfg)
    assert all(np.array_equal(x.x, y.x) for x, y in zip(a, b))
    later = CmaState.initial(cfg)
    later.generation = 1
    c = sample_population(later, cfg)
    assert not np.array_equal(a[0].x, c[0].x)


def test_degenerate_step_size_samples_at_mean():
    cfg = default_config(4, np.array([1.0, -2.0, 3.0, 0.5]), 1e-300)
    st_ = CmaState.initial(cfg)
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    st_.C = A @ A.T + np.eye(4)
    for c in sample_population(st_, cfg):
        assert np.max(np.abs(c.x - st_.mean)) <= 1e-12


def test_sample_covariance_matches_identity():
    cfg = default_config(3, np.zeros(3), 1.0, lam=100_000)
    xs = np.array([c.x for c in sample_population(CmaState.initial(cfg), cfg)])
    emp = np.cov(xs.T)
    assert np.linalg.norm(emp - np.eye(3)) <= 0.05 * np.linalg.norm(np.eye(3))


def test_sample_covariance_matches_general_c():
    cfg = default_config(2, np.zeros(2), 0.5, lam=100_000)
    st_ = CmaState.initial(cfg)
    st_.C = np.array([[4.0, 1.2], [1.2, 1.0]])
    xs = np.array([c.x for c in sample_population(st_, cfg)])
    target = 0.25 * st_.C
    assert np.linalg.norm(np.cov(xs.T) - target) <= 0.05 * np.linalg.norm(target)


# ranking and recombination

def cands(xs, fits):
    return [Candidate(x=np.asarray(x, float), fitness=f, index=i)
            for i, (x, f) in enumerate(zip(xs, fits))]


def test_ranking_puts_non_finite_last_and_breaks_ties_by_index():
    ranked = rank_candidates(cands([[0]] * 5, [1.0, float("nan"), 3.0, 1.0, -float("inf")]))
    assert [c.index for c in ranked] == [2, 0, 3, 1, 4]
    assert [c.rank for c in ranked] == [0, 1, 2, 3, 4]


def test_single_parent_takes_best_sample():
    cfg = default_config(2, np.zeros(2), 1.0, mu=1, weights=np.array([1.0]))
    new = rank_and_recombine(None, cfg, cands([[1, 1], [5, 5], [2, 2], [0, 0]], [1, 4, 2, 0]))
    assert new.tolist() == [5.0, 5.0]


def test_identical_population_keeps_point():
    cfg = default_config(3, np.zeros(3), 1.0)
    x = [0.1, 0.2, 0.3]
    new = rank_and_recombine(None, cfg, cands([x] * cfg.lam, list(range(cfg.lam))))
    assert np.allclose(new, x, rtol=0, atol=1e-15)


def test_two_parent_recombination_example():
    cfg = default_config(2, np.zeros(2), 1.0, lam=4, mu=2, weights=np.array([0.75, 0.25]))
    new = rank_and_recombine(None, cfg, cands([[0, 0], [1, 0], [0, 1], [9, 9]], [-5, 3, 2, -1]))
    assert new.tolist() == [0.75, 0.25]


def test_mean_is_exact_weighted_sum():
    rng = np.random.default_rng(3)
    cfg = default_config(6, np.zeros(6), 1.0)
    xs = rng.normal(size=(cfg.lam, 6))
    fits = rng.normal(size=cfg.lam)
    new = rank_and_recombine(None, cfg, cands(xs, fits))
    order = np.argsort(-fits, kind="stable")[: cfg.mu]
    # independent summation, same left-to-right order
    expect = np.zeros(6)
    for w, i in zip(cfg.weights, order):
        expect = expect + w * xs[i]
    assert np.array_equal(new, expect)
    assert np.allclose(new, (cfg.weights[:, None] * xs[order]).sum(axis=0), atol=1e-14)


# paths and covariance

def test_zero_learning_rates_leave_covariance_untouched():
    cfg = default_config(3, np.zeros(3), 1.0, c_1=0.0, c_mu=0.0)
    st_ = CmaState.initial(cfg)
    st_.C = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]])
    before = st_.C.copy()
    pop = sample_population(st_, cfg)
    for c in pop:
        c.fitness = sphere(c.x)
    sel = rank_candidates(pop)[: cfg.mu]
    old = st_.mean
    st_.mean = weighted_mean([c.x for c in sel], cfg.weights)
    out = update_paths_and_covariance(st_, cfg, old, sel)
    assert np.array_equal(out.C, before)


def test_path_aligns_with_whitened_repeated_step():
    cfg = default_config(4, np.zeros(4), 1.0, c_1=0.0, c_mu=0.0)
    st_ = CmaState.initial(cfg)
    st_.C = np.diag([4.0, 1.0, 0.25, 9.0])
    d = np.array([1.0, -2.0, 0.5, 3.0])
    for _ in range(60):
        old = st_.mean.copy()
        st_.mean = old + st_.sigma * d
        st_ = update_paths_and_covariance(st_, cfg, old, [])
        st_.generation += 1
    target = d / np.sqrt(np.diag(st_.C))
    cos = st_.p_sigma @ target / (np.linalg.norm(st_.p_sigma) * np.linalg.norm(target))
    assert cos >= 0.99


def test_covariance_update_matches_formula():
    rng = np.random.default_rng(9)
    cfg = default_config(3, np.zeros(3), 0.8)
    st_ = CmaState.initial(cfg)
    pop = sample_population(st_, cfg)
    for c in pop:
        c.fitness = float(rng.normal())
    sel = rank_candidates(pop)[: cfg.mu]
    old = st_.mean.copy()
    st_.mean = weighted_mean([c.x for c in sel], cfg.weights)
    out = update_paths_and_covariance(st_, cfg, old, sel)

    y = [(c.x - old) / 0.8 for c in sel]
    step = (st_.mean - old) / 0.8
    cs, cc = cfg.c_sigma, cfg.c_c
    ps = math.sqrt(cs * (2 - cs) * cfg.mu_eff) * step  # C = I initially
    pc = math.sqrt(cc * (2 - cc) * cfg.mu_eff) * step  # gate open on the first step
    C = (1 - cfg.c_1 - cfg.c_mu) * np.eye(3) + cfg.c_1 * np.outer(pc, pc)
    C = C + cfg.c_mu * sum(w * np.outer(v, v) for w, v in zip(cfg.weights, y))
    assert np.allclose(out.p_sigma, ps, atol=1e-14)
    assert np.allclose(out.p_c, pc, atol=1e-14)
    assert np.allclose(out.C, C, atol=1e-14)
    assert np.abs(out.C - out.C.T).max() <= 1e-12 * np.abs(out.C).max()


def test_recondition_floors_spectrum():
    C = np.diag([1.0, 1e-20])
    out = recondition(C)
    eig = np.linalg.eigvalsh(out)
    assert eig.min() >= 1e-14 * eig.max() * (1 - 1e-9)
    assert recondition(np.eye(3)) is not None
    assert np.array_equal(recondition(np.diag([2.0, 1.0])), np.diag([2.0, 1.0]))


def test_covariance_stays_spd_on_random_objective():
    rng = np.random.default_rng(0)
    cfg = default_config(5, np.zeros(5), 1.0, max_generations=2000, stagnation_generations=None,
                         max_evals=10**9)
    eigmins = []

    def check(state, record):
        eig = np.linalg.eigvalsh(state.C)
        eigmins.append(eig.min())
        assert np.abs(state.C - state.C.T).max() <= 1e-9 * np.abs(state.C).max()

    optimize(lambda x: float(rng.normal()), cfg, callback=check)
    assert len(eigmins) == 2000
    assert min(eigmins) > 0


# penalized objective

def test_penalty_disabled_inside_box():
    f = penalized_objective(sphere, 0.0, None, [-5, -5], [5, 5])
    assert f(np.array([1.0, 2.0])) == -5.0


def test_pure_l1_penalty():
    f = penalized_objective(lambda x: 0.0, 1.0, [0, 1])
    assert f(np.array([3.0, -4.0])) == -7.0


def test_l1_mask_limits_coordinates():
    f = penalized_objective(lambda x: 0.0, 0.5, [1])
    assert f(np.array([100.0, -4.0])) == -2.0


def test_boundary_penalty_one_unit_outside():
    seen = []

    def raw(x):
        seen.append(x.copy())
        return 10.0

    f = penalized_objective(raw, 0.0, None, [0.0, 0.0], [1.0, 1.0])
    assert f(np.array([2.0, 0.5])) == 9.0
    assert seen[-1].tolist() == [1.0, 0.5]


def test_negative_l1_weight_rejected():
    with pytest.raises(ValueError):
        penalized_objective(sphere, -0.1)


# optimize

def test_sphere_converges():
    cfg = default_config(10, np.full(10, 3 / math.sqrt(10)), 1.0, seed=1, max_evals=5000)
    res = optimize(sphere, cfg)
    assert res.fitness > -1e-10
    assert res.state.eval_count <= 5000


def test_constant_objective_stops_by_stagnation():
    cfg = default_config(4, np.zeros(4), 1.0)
    res = optimize(lambda x: 1.0, cfg)
    assert res.history.termination == "stagnation"
    # the first generation sets the reference, then 50 without improvement
    assert len(res.history.records) == 51
    assert np.all(np.isfinite(res.state.mean))


def test_all_non_finite_objective_terminates():
    cfg = default_config(3, np.zeros(3), 1.0)
    res = optimize(lambda x: float("nan"), cfg)
    assert res.history.termination == "stagnation"
    assert res.x is not None and np.all(np.isfinite(res.state.mean))


def test_eval_budget_respected():
    cfg = default_config(10, np.ones(10), 1.0, max_evals=105, stagnation_generations=None)
    res = optimize(sphere, cfg)
    assert res.history.termination == "max_evals"
    assert res.state.eval_count == 100


def test_tolfun_termination():
    cfg = default_config(2, np.ones(2), 1.0, target_tol=1e-8, max_evals=100_000)
    res = optimize(sphere, cfg)
    assert res.history.termination == "tolfun"


def test_best_so_far_is_monotone():
    cfg = default_config(5, np.ones(5), 1.0, seed=3, max_evals=600)
    res = optimize(sphere, cfg)
    bests = [r.best for r in res.history.records]
    assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
    assert res.fitness == bests[-1] == sphere(res.x)


def test_full_history_is_deterministic():
    cfg = default_config(6, np.ones(6), 0.5, seed=77, max_evals=1200)
    a = optimize(sphere, cfg, record_trajectory=True)
    b = optimize(sphere, cfg, record_trajectory=True)
    assert a.history.records == b.history.records
    for (m1, s1, c1), (m2, s2, c2) in zip(a.history.trajectory, b.history.trajectory):
        assert np.array_equal(m1, m2) and s1 == s2 and np.array_equal(c1, c2)


def test_executor_gives_same_result():
    cfg = default_config(4, np.ones(4), 0.5, seed=5, max_evals=400)
    a = optimize(sphere, cfg)
    with ThreadPoolExecutor(max_workers=2) as ex:
        b = optimize(sphere, cfg, executor=ex)
    assert a.history.records == b.history.records


def test_history_csv():
    cfg = default_config(2, np.ones(2), 0.5, max_evals=30)
    res = optimize(sphere, cfg)
    buf = io.StringIO()
    res.history.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "generation,evals,best,median,sigma"
    assert len(lines) == 1 + len(res.history.records)


def test_sphere_gap_shrinks_linearly_in_log_scale():
    slopes = []
    for seed in range(20):
        cfg = default_config(10, np.full(10, 1.0), 1.0, seed=seed, max_generations=120,
                             target_tol=0.0, stagnation_generations=None, max_evals=10**9)
        res = optimize(sphere, cfg)
        gaps = np.log10(-np.array([r.best for r in res.history.records]))
        slopes.append(np.polyfit(np.arange(len(gaps)), gaps, 1)[0])
    assert np.mean(slopes) < 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_any_seed_runs(seed):
    cfg = default_config(3, np.ones(3), 1.0, seed=seed, max_evals=70)
    res = optimize(sphere, cfg)
    assert res.fitness <= 0
