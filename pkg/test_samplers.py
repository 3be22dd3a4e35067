"""Tests des échantillonneurs NUTS et DE-MC snooker et des diagnostics"""
import math
import logging

import numpy as np
from scipy import stats

from errors import SamplerError
from kernels import MaternParams, build_covariance
from samplers import (
    DemcConfig, NutsConfig, NutsSampler, PosteriorSamples, acf_table, autocorrelation, clt_band,
    demc_snooker_sample, effective_sample_size, nuts_sample, rhat, run_chains, summarize, trace_table,
)


def _std_normal(theta):
    return -0.5 * float(theta @ theta), -theta


def test_nuts_normale_standard():
    samples = nuts_sample(_std_normal, np.array([1.0]), NutsConfig(tuning_iters=500, draw_iters=4000, seed=1))
    x = samples.param(samples.names[0])
    ess = effective_sample_size(x)
    assert abs(x.mean()) < 3.0 / math.sqrt(ess)
    assert abs(x.var() - 1.0) < 0.1
    assert samples.divergences == 0


def test_nuts_gaussienne_correlee():
    xy = np.random.default_rng(2).uniform(0, 20, size=(10, 2))
    cov = build_covariance(xy, MaternParams(8.0))

    def logp(theta):
        z = cov.whiten(theta)
        grad = -np.linalg.solve(cov.entries, theta)
        return -0.5 * float(z @ z), grad

    samples = nuts_sample(logp, np.zeros(10), NutsConfig(tuning_iters=500, draw_iters=1500, seed=3))
    flat = samples.flat()
    for j in range(10):
        ess = effective_sample_size(flat[:, j])
        assert abs(flat[:, j].mean()) < 4.0 * math.sqrt(cov.entries[j, j] / ess)


def test_nuts_deterministe():
    cfg = NutsConfig(tuning_iters=50, draw_iters=50, seed=11)
    a = nuts_sample(_std_normal, np.array([0.5, -0.5]), cfg)
    b = nuts_sample(_std_normal, np.array([0.5, -0.5]), cfg)
    assert np.array_equal(a.draws, b.draws)


def test_nuts_configuration_invalide():
    for kwargs in ({'tuning_iters': 0}, {'target_accept': 1.0}, {'max_tree_depth': -1}):
        try:
            NutsConfig(**kwargs)
            assert False, f"{kwargs} doit être refusé"
        except ValueError:
            pass


def test_plusieurs_chaines():
    def one(chain, seed):
        return nuts_sample(_std_normal, np.array([0.1 * chain]), NutsConfig(tuning_iters=100, draw_iters=200, seed=seed))

    samples = run_chains(one, 3, seed=5)
    assert samples.n_chains == 3 and samples.n_iter == 200
    r = rhat(samples.draws[:, 0, :])
    assert 0.9 < r < 1.1


def _gauss2(theta):
    return -0.5 * float(theta[0] ** 2 + (theta[1] / 2.0) ** 2)


def test_demc_gaussienne():
    rng = np.random.default_rng(6)
    cfg = DemcConfig(n_chains=8, tuning_iters=500, draw_iters=3000, seed=7)
    samples = demc_snooker_sample(_gauss2, rng.normal(size=(8, 2)), cfg)
    flat = samples.flat()
    assert abs(flat[:, 0].mean()) < 0.15 and abs(flat[:, 1].mean()) < 0.3
    assert abs(flat[:, 0].std() - 1.0) < 0.1
    assert abs(flat[:, 1].std() - 2.0) < 0.2
    assert 0.05 < samples.meta['acceptance_rate'] < 0.9


def test_demc_bimodale():
    # Mélange symétrique de N(-3, 1) et N(3, 1): masses égales
    def logp(theta):
        return float(np.logaddexp(-0.5 * (theta[0] - 3) ** 2, -0.5 * (theta[0] + 3) ** 2))

    rng = np.random.default_rng(8)
    cfg = DemcConfig(n_chains=10, tuning_iters=500, draw_iters=4000, seed=9)
    samples = demc_snooker_sample(logp, rng.uniform(-5, 5, size=(10, 1)), cfg)
    x = samples.flat()[:, 0]
    share = np.mean(x > 0)
    assert np.any(x > 2) and np.any(x < -2)
    assert abs(share - 0.5) < 0.1


def test_demc_deterministe_et_inits():
    inits = np.random.default_rng(10).normal(size=(4, 2))
    cfg = DemcConfig(n_chains=4, tuning_iters=20, draw_iters=30, seed=12)
    a = demc_snooker_sample(_gauss2, inits, cfg)
    b = demc_snooker_sample(_gauss2, inits, cfg)
    assert np.array_equal(a.draws, b.draws)
    try:
        demc_snooker_sample(_gauss2, np.zeros((4, 2)), cfg)
        assert False, "inits identiques doivent être refusés"
    except ValueError:
        pass
    try:
        DemcConfig(n_chains=2)
        assert False, "2 chaînes doivent être refusées"
    except ValueError:
        pass


def test_demc_sans_etat_fini():
    cfg = DemcConfig(n_chains=3, tuning_iters=1, draw_iters=1, seed=0)
    try:
        demc_snooker_sample(lambda t: -math.inf, np.arange(6.0).reshape(3, 2), cfg)
        assert False, "SamplerError attendue"
    except SamplerError:
        pass


def _chi2_normal(draws, ess):
    """Test du chi² sur 20 classes équiprobables de N(0, 1), tirages éclaircis à l'ESS"""
    thin = max(1, int(math.ceil(draws.shape[0] / ess)))
    x = draws[::thin].ravel()
    edges = stats.norm.ppf(np.linspace(0.0, 1.0, 21)[1:-1])
    observed = np.bincount(np.searchsorted(edges, x), minlength=20)
    return stats.chisquare(observed, np.full(20, x.size / 20.0)).pvalue


def test_equilibre_detaille_nuts():
    samples = nuts_sample(_std_normal, np.array([0.3]), NutsConfig(tuning_iters=500, draw_iters=100000, seed=31))
    x = samples.draws[:, 0, 0]
    assert _chi2_normal(x, effective_sample_size(x)) > 0.001


def test_equilibre_detaille_demc():
    rng = np.random.default_rng(32)
    cfg = DemcConfig(n_chains=10, tuning_iters=500, draw_iters=10000, seed=33)
    samples = demc_snooker_sample(lambda t: -0.5 * float(t @ t), rng.normal(size=(10, 1)), cfg)
    draws = samples.draws[:, 0, :]
    assert draws.size == 100000
    assert _chi2_normal(draws, effective_sample_size(draws)) > 0.001


def test_profondeur_zero_metropolis():
    # un seul saut de grenouille puis acceptation de Metropolis sur le hamiltonien
    eps, accepted = 0.9, 0
    for seed in range(200):
        sampler = NutsSampler(_std_normal, NutsConfig(max_tree_depth=0, seed=seed))
        sampler.inv_mass = np.ones(1)
        theta = np.array([1.3])
        logp, grad = _std_normal(theta)
        new, _, _, info = sampler.transition(theta, logp, grad, eps)

        rng = np.random.default_rng(seed)
        r = rng.standard_normal(1)
        step = eps if rng.random() < 0.5 else -eps
        r_half = r - 0.5 * step * theta
        theta_new = theta + step * r_half
        r_new = r_half - 0.5 * step * theta_new
        delta_h = 0.5 * (theta_new @ theta_new + r_new @ r_new) - 0.5 * (theta @ theta + r @ r)
        moved = math.log(rng.random()) < -delta_h

        np.testing.assert_allclose(info['accept_stat'], min(1.0, math.exp(-delta_h)), rtol=1e-12)
        assert info['n_leapfrog'] == 1 and info['tree_depth'] == 0
        np.testing.assert_array_equal(new, theta_new if moved else theta)
        accepted += moved
    assert 0 < accepted < 200


def test_reglage_exclu_des_tirages():
    cfg = NutsConfig(tuning_iters=300, draw_iters=200, seed=34)
    samples = nuts_sample(_std_normal, np.array([60.0]), cfg)
    assert samples.n_iter == 200 and samples.accept_stats.shape[0] == 200
    assert np.all(np.abs(samples.draws) < 6.0)

    rng = np.random.default_rng(35)
    demc = demc_snooker_sample(_gauss2, 15.0 + rng.normal(size=(6, 2)),
                               DemcConfig(n_chains=6, tuning_iters=1000, draw_iters=100, seed=36))
    assert demc.n_iter == 100
    assert np.all(np.abs(demc.draws[:, 0, :]) < 6.0)


def test_nuts_gaussienne_matern_50d():
    xy = np.random.default_rng(37).uniform(0, 20, size=(50, 2))
    cov = build_covariance(xy, MaternParams(4.0))
    precision = np.linalg.inv(cov.entries)

    def logp(theta):
        g = -precision @ theta
        return 0.5 * float(theta @ g), g

    samples = nuts_sample(logp, np.zeros(50), NutsConfig(tuning_iters=1000, draw_iters=8000, seed=38))
    x = samples.draws[:, :, 0]
    var = np.diag(cov.entries)
    se = np.array([math.sqrt(var[j] / effective_sample_size(x[:, j])) for j in range(50)])
    z = np.abs(x.mean(axis=0)) / se
    assert np.mean(z < 3.0) >= 0.96 and np.all(z < 4.5)
    np.testing.assert_allclose(x.var(axis=0), var, rtol=0.1)


def _banana(theta):
    # x0 ~ N(0, 2²), x1 | x0 ~ N(2 + 0.1 x0², 1)
    resid = theta[1] - 2.0 - 0.1 * theta[0] ** 2
    logp = -0.125 * theta[0] ** 2 - 0.5 * resid ** 2
    grad = np.array([-0.25 * theta[0] + 0.2 * theta[0] * resid, -resid])
    return float(logp), grad


def test_demc_banane_contre_nuts_long():
    reference = nuts_sample(_banana, np.array([0.0, 2.0]), NutsConfig(tuning_iters=1000, draw_iters=40000, seed=39))
    ref = reference.flat()
    rng = np.random.default_rng(40)
    cfg = DemcConfig(n_chains=10, tuning_iters=2000, draw_iters=40000, seed=41)
    demc = demc_snooker_sample(lambda t: _banana(t)[0], rng.normal([0.0, 2.0], 1.0, size=(10, 2)), cfg).flat()
    for moments in (lambda s: s[:, 1].mean(), lambda s: s[:, 0].var(), lambda s: s[:, 1].var()):
        np.testing.assert_allclose(moments(demc), moments(ref), rtol=0.05)
    # valeurs exactes: E[x1] = 2.4, Var[x0] = 4, Var[x1] = 1 + 0.01 * 32
    np.testing.assert_allclose([ref[:, 1].mean(), ref[:, 0].var(), ref[:, 1].var()], [2.4, 4.0, 1.32], rtol=0.05)


def test_acf_bruit_blanc_et_ar1():
    rng = np.random.default_rng(13)
    white = rng.normal(size=5000)
    acf = autocorrelation(white, 40).iloc[1:, 0].to_numpy()
    assert np.mean(np.abs(acf) <= clt_band(5000)) >= 0.9

    ar = np.empty(20000)
    ar[0] = 0.0
    for t in range(1, ar.size):
        ar[t] = 0.9 * ar[t - 1] + rng.normal()
    assert abs(autocorrelation(ar, 5).iloc[1, 0] - 0.9) < 0.05


def test_acf_egale_somme_directe():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(301, 2)).cumsum(axis=0)
    got = autocorrelation(x, 300).to_numpy()
    c = x - x.mean(axis=0)
    for j in range(2):
        direct = [np.dot(c[:301 - k, j], c[k:, j]) / np.dot(c[:, j], c[:, j]) for k in range(301)]
        np.testing.assert_allclose(got[:, j], direct, atol=1e-10)


def test_ess_longue_serie():
    rng = np.random.default_rng(22)
    # 4 x 50000 tirages: le calcul quadratique serait prohibitif
    white = rng.normal(size=(50000, 4))
    ess = effective_sample_size(white)
    assert 0.8 * 200000 < ess < 1.2 * 200000


def test_acf_serie_constante():
    acf = autocorrelation(np.ones(50), 5)
    assert acf.iloc[:, 0].isna().all()
    assert math.isnan(effective_sample_size(np.ones(50)))


def test_bande_tcl():
    np.testing.assert_allclose(clt_band(400), 1.96 / 20.0)


def test_tables_de_diagnostic():
    rng = np.random.default_rng(14)
    samples = PosteriorSamples(names=['a', 'b[0]'], draws=rng.normal(size=(100, 2, 2)))
    summary = summarize(samples)
    assert list(summary['parameter']) == ['a', 'b[0]']
    assert {'mean', 'sd', 'q2.5', 'q97.5', 'ess', 'rhat'} <= set(summary.columns)
    acf = acf_table(samples, 10, ['a'])
    assert len(acf) == 11 and 'clt_band' in acf.columns
    trace = trace_table(samples, ['a'])
    assert len(trace) == 200 and 'a' in trace.columns


def test_tirages_format_long():
    draws = np.arange(12.0).reshape(3, 2, 2)
    samples = PosteriorSamples(names=['x', 'y'], draws=draws)
    back = PosteriorSamples.from_frame(samples.to_frame())
    assert back.names == ['x', 'y']
    assert np.array_equal(back.draws, draws)
    np.testing.assert_allclose(samples.param('y'), [2.0, 6.0, 10.0, 3.0, 7.0, 11.0])


def test_tirages_non_finis():
    try:
        PosteriorSamples(names=['x'], draws=np.array([[1.0], [np.nan]]))
        assert False, "SamplerError attendue"
    except SamplerError:
        pass


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith('test_') and callable(fn)]
    failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
        except Exception as e:
            failed += 1
            print(f"❌ {name}: {e!r}")
    print(f"\n📊 {len(tests) - failed}/{len(tests)} test(s) réussi(s)")
