"""
Échantillonneurs MCMC: No-U-Turn Sampler (arbres multinomiaux, dual averaging,
matrice de masse diagonale), DE-MC avec mise à jour snooker, et diagnostics
de convergence (ACF, bande TCL, R-hat, ESS)
"""

import math
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import SamplerError

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)


def _cfg(name: str, default):
    return getattr(config, name, default) if config else default


LogPosteriorGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]
LogPosterior = Callable[[np.ndarray], float]


# ============================================================================
# CONFIGURATIONS ET RÉSULTATS
# ============================================================================

@dataclass
class NutsConfig:
    tuning_iters: int = field(default_factory=lambda: _cfg('NUTS_TUNING_ITERS', 500))
    draw_iters: int = field(default_factory=lambda: _cfg('NUTS_DRAW_ITERS', 1000))
    target_accept: float = field(default_factory=lambda: _cfg('NUTS_TARGET_ACCEPT', 0.8))
    max_tree_depth: int = field(default_factory=lambda: _cfg('NUTS_MAX_TREE_DEPTH', 10))
    seed: Optional[int] = None
    adapt_mass: bool = True
    initial_step_size: Optional[float] = None

    def __post_init__(self):
        if self.tuning_iters < 1:
            raise ValueError("tuning_iters doit être >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept doit être dans (0, 1)")
        if self.max_tree_depth < 0:
            raise ValueError("max_tree_depth doit être >= 0")


@dataclass
class DemcConfig:
    n_chains: int = field(default_factory=lambda: _cfg('DEMC_N_CHAINS', 8))
    snooker_prob: float = field(default_factory=lambda: _cfg('DEMC_SNOOKER_PROB', 0.1))
    gamma: Optional[float] = None  # None -> 2.38 / sqrt(2 d)
    tuning_iters: int = field(default_factory=lambda: _cfg('DEMC_TUNING_ITERS', 500))
    draw_iters: int = field(default_factory=lambda: _cfg('DEMC_DRAW_ITERS', 2000))
    seed: Optional[int] = None
    jitter: float = field(default_factory=lambda: _cfg('DEMC_JITTER', 1e-4))
    archive_every: int = 10  # ajout des états courants à l'archive toutes les K itérations
    mode_jump_every: int = 10  # gamma = 1 une itération sur K

    def __post_init__(self):
        if self.n_chains < 3:
            raise ValueError("DE-MC snooker exige au moins 3 chaînes")
        if not 0.0 <= self.snooker_prob <= 1.0:
            raise ValueError("snooker_prob hors de [0, 1]")


@dataclass
class PosteriorSamples:
    """Tirages a posteriori (itération x paramètre x chaîne), réglage exclu"""
    names: List[str]
    draws: np.ndarray
    accept_stats: np.ndarray = None  # (itération, chaîne)
    divergences: int = 0
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim == 2:
            self.draws = self.draws[:, :, None]
        if self.draws.shape[1] != len(self.names):
            raise ValueError(f"{self.draws.shape[1]} colonnes pour {len(self.names)} noms")
        if not np.all(np.isfinite(self.draws)):
            raise SamplerError("Tirages non finis")

    @property
    def n_iter(self) -> int:
        return self.draws.shape[0]

    @property
    def n_chains(self) -> int:
        return self.draws.shape[2]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def param(self, name: str) -> np.ndarray:
        """Tirages d'un paramètre, chaînes concaténées"""
        return self.draws[:, self.index(name), :].T.reshape(-1)

    def flat(self) -> np.ndarray:
        """(tirages, paramètres), chaînes concaténées"""
        return np.concatenate([self.draws[:, :, c] for c in range(self.n_chains)], axis=0)

    def mean(self) -> pd.Series:
        return pd.Series(self.flat().mean(axis=0), index=self.names)

    def interval(self, level: float = 0.95) -> pd.DataFrame:
        lo, hi = 50 * (1 - level), 100 - 50 * (1 - level)
        q = np.percentile(self.flat(), [lo, hi], axis=0)
        return pd.DataFrame({'lower': q[0], 'upper': q[1]}, index=self.names)

    def thin_to(self, n_draws: int, rng: np.random.Generator) -> np.ndarray:
        """Sélection de n_draws vecteurs de paramètres (sans remise si possible)"""
        flat = self.flat()
        replace = n_draws > flat.shape[0]
        idx = rng.choice(flat.shape[0], size=n_draws, replace=replace)
        return flat[np.sort(idx)]

    def to_frame(self) -> pd.DataFrame:
        """Format long (chain, iteration, parameter, value)"""
        it, par, ch = np.meshgrid(np.arange(self.n_iter), np.arange(len(self.names)),
                                  np.arange(self.n_chains), indexing='ij')
        return pd.DataFrame({
            'chain': ch.ravel(),
            'iteration': it.ravel(),
            'parameter': np.asarray(self.names, dtype=object)[par.ravel()],
            'value': self.draws.ravel(),
        })

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, meta: Optional[Dict] = None) -> 'PosteriorSamples':
        names = list(dict.fromkeys(frame['parameter']))
        n_iter = int(frame['iteration'].max()) + 1
        n_chains = int(frame['chain'].max()) + 1
        draws = np.full((n_iter, len(names), n_chains), np.nan)
        col = {n: i for i, n in enumerate(names)}
        draws[frame['iteration'].to_numpy(), frame['parameter'].map(col).to_numpy(),
              frame['chain'].to_numpy()] = frame['value'].to_numpy(dtype=float)
        return cls(names=names, draws=draws, meta=meta or {})

    @staticmethod
    def merge_chains(parts: Sequence['PosteriorSamples']) -> 'PosteriorSamples':
        names = parts[0].names
        n_iter = min(p.n_iter for p in parts)
        draws = np.concatenate([p.draws[:n_iter] for p in parts], axis=2)
        accept = None
        if all(p.accept_stats is not None for p in parts):
            accept = np.concatenate([p.accept_stats[:n_iter] for p in parts], axis=1)
        meta = dict(parts[0].meta)
        meta['chains'] = [p.meta for p in parts]
        return PosteriorSamples(names=names, draws=draws, accept_stats=accept,
                                divergences=sum(p.divergences for p in parts), meta=meta)


# ============================================================================
# NO-U-TURN SAMPLER
# ============================================================================

@dataclass
class _Tree:
    theta_minus: np.ndarray
    r_minus: np.ndarray
    grad_minus: np.ndarray
    theta_plus: np.ndarray
    r_plus: np.ndarray
    grad_plus: np.ndarray
    sample: np.ndarray
    sample_logp: float
    sample_grad: np.ndarray
    log_weight: float
    sum_accept: float
    n_leapfrog: int
    turning: bool = False
    divergent: bool = False


class NutsSampler:
    """NUTS à échantillonnage multinomial (Hoffman & Gelman, variante multinomiale)"""

    def __init__(self, log_posterior_with_gradient: LogPosteriorGrad, nuts_config: NutsConfig):
        self.fn = log_posterior_with_gradient
        self.config = nuts_config
        self.rng = np.random.default_rng(nuts_config.seed)
        self.inv_mass = None
        self.divergence_energy = _cfg('DIVERGENCE_ENERGY', 1000.0)

    def _evaluate(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        try:
            logp, grad = self.fn(theta)
        except (FloatingPointError, ValueError, OverflowError, ZeroDivisionError):
            return -math.inf, np.zeros_like(theta)
        if not np.isfinite(logp) or not np.all(np.isfinite(grad)):
            return -math.inf, np.zeros_like(theta)
        return float(logp), np.asarray(grad, dtype=float)

    def _kinetic(self, r: np.ndarray) -> float:
        return 0.5 * float(np.dot(r, self.inv_mass * r))

    def _leapfrog(self, theta, r, grad, eps):
        r_half = r + 0.5 * eps * grad
        theta_new = theta + eps * self.inv_mass * r_half
        logp_new, grad_new = self._evaluate(theta_new)
        r_new = r_half + 0.5 * eps * grad_new
        return theta_new, r_new, grad_new, logp_new

    def _is_turning(self, theta_minus, theta_plus, r_minus, r_plus) -> bool:
        delta = theta_plus - theta_minus
        return (np.dot(delta, self.inv_mass * r_minus) < 0) or (np.dot(delta, self.inv_mass * r_plus) < 0)

    def _build_tree(self, theta, r, grad, direction: int, depth: int, eps: float, h0: float) -> _Tree:
        if depth == 0:
            theta_new, r_new, grad_new, logp_new = self._leapfrog(theta, r, grad, direction * eps)
            h = -logp_new + self._kinetic(r_new) if np.isfinite(logp_new) else math.inf
            energy_error = h - h0
            if not np.isfinite(energy_error):
                energy_error = math.inf
            return _Tree(theta_new, r_new, grad_new, theta_new, r_new, grad_new,
                         sample=theta_new, sample_logp=logp_new, sample_grad=grad_new,
                         log_weight=-energy_error,
                         sum_accept=min(1.0, math.exp(min(0.0, -energy_error))),
                         n_leapfrog=1,
                         divergent=energy_error > self.divergence_energy)

        inner = self._build_tree(theta, r, grad, direction, depth - 1, eps, h0)
        if inner.turning or inner.divergent:
            return inner
        if direction > 0:
            outer = self._build_tree(inner.theta_plus, inner.r_plus, inner.grad_plus, direction, depth - 1, eps, h0)
        else:
            outer = self._build_tree(inner.theta_minus, inner.r_minus, inner.grad_minus, direction, depth - 1, eps, h0)

        merged = _Tree(inner.theta_minus, inner.r_minus, inner.grad_minus,
                       inner.theta_plus, inner.r_plus, inner.grad_plus,
                       sample=inner.sample, sample_logp=inner.sample_logp, sample_grad=inner.sample_grad,
                       log_weight=np.logaddexp(inner.log_weight, outer.log_weight),
                       sum_accept=inner.sum_accept + outer.sum_accept,
                       n_leapfrog=inner.n_leapfrog + outer.n_leapfrog,
                       turning=outer.turning, divergent=outer.divergent)
        if outer.turning or outer.divergent:
            return merged
        if direction > 0:
            merged.theta_plus, merged.r_plus, merged.grad_plus = outer.theta_plus, outer.r_plus, outer.grad_plus
        else:
            merged.theta_minus, merged.r_minus, merged.grad_minus = outer.theta_minus, outer.r_minus, outer.grad_minus

        # Tirage multinomial uniforme au sein du sous-arbre
        if np.log(self.rng.random()) < outer.log_weight - merged.log_weight:
            merged.sample, merged.sample_logp, merged.sample_grad = outer.sample, outer.sample_logp, outer.sample_grad
        merged.turning = self._is_turning(merged.theta_minus, merged.theta_plus, merged.r_minus, merged.r_plus)
        return merged

    def transition(self, theta, logp, grad, eps) -> Tuple[np.ndarray, float, np.ndarray, Dict]:
        """Une itération NUTS depuis theta"""
        r0 = self.rng.standard_normal(theta.size) / np.sqrt(self.inv_mass)
        h0 = -logp + self._kinetic(r0)
        tree = _Tree(theta, r0, grad, theta, r0, grad, sample=theta, sample_logp=logp, sample_grad=grad,
                     log_weight=0.0, sum_accept=0.0, n_leapfrog=0)
        divergent = False
        depth = 0
        for depth in range(self.config.max_tree_depth + 1):
            direction = 1 if self.rng.random() < 0.5 else -1
            if direction > 0:
                sub = self._build_tree(tree.theta_plus, tree.r_plus, tree.grad_plus, 1, depth, eps, h0)
            else:
                sub = self._build_tree(tree.theta_minus, tree.r_minus, tree.grad_minus, -1, depth, eps, h0)
            tree.sum_accept += sub.sum_accept
            tree.n_leapfrog += sub.n_leapfrog
            if sub.divergent:
                divergent = True
                break
            if sub.turning:
                break
            # Échantillonnage progressif biaisé vers le nouveau sous-arbre
            if np.log(self.rng.random()) < sub.log_weight - tree.log_weight:
                tree.sample, tree.sample_logp, tree.sample_grad = sub.sample, sub.sample_logp, sub.sample_grad
            tree.log_weight = np.logaddexp(tree.log_weight, sub.log_weight)
            if direction > 0:
                tree.theta_plus, tree.r_plus, tree.grad_plus = sub.theta_plus, sub.r_plus, sub.grad_plus
            else:
                tree.theta_minus, tree.r_minus, tree.grad_minus = sub.theta_minus, sub.r_minus, sub.grad_minus
            if self._is_turning(tree.theta_minus, tree.theta_plus, tree.r_minus, tree.r_plus):
                break
        stats = {
            'accept_stat': tree.sum_accept / max(tree.n_leapfrog, 1),
            'n_leapfrog': tree.n_leapfrog,
            'tree_depth': depth,
            'divergent': divergent,
        }
        return tree.sample, tree.sample_logp, tree.sample_grad, stats

    def find_reasonable_step_size(self, theta, logp, grad) -> float:
        """Heuristique de départ du pas de saut"""
        eps = 1.0
        r = self.rng.standard_normal(theta.size) / np.sqrt(self.inv_mass)
        h0 = -logp + self._kinetic(r)

        def log_ratio(step):
            _, r_new, _, logp_new = self._leapfrog(theta, r, grad, step)
            if not np.isfinite(logp_new):
                return -math.inf
            return h0 - (-logp_new + self._kinetic(r_new))

        ratio = log_ratio(eps)
        a = 1.0 if ratio > math.log(0.5) else -1.0
        for _ in range(100):
            if a * ratio <= -a * math.log(2.0):
                break
            eps *= 2.0 ** a
            ratio = log_ratio(eps)
        return float(np.clip(eps, 1e-10, 1e3))

    def run(self, init: np.ndarray) -> PosteriorSamples:
        cfg = self.config
        theta = np.asarray(init, dtype=float).copy()
        d = theta.size
        self.inv_mass = np.ones(d)
        logp, grad = self._evaluate(theta)
        if not np.isfinite(logp):
            raise SamplerError("Log-postérieure non finie au point initial")

        eps = cfg.initial_step_size or self.find_reasonable_step_size(theta, logp, grad)
        mu, log_eps_bar, h_bar, gamma, t0, kappa = math.log(10 * eps), 0.0, 0.0, 0.05, 10.0, 0.75
        adapt_count = 0
        window_start = max(int(0.15 * cfg.tuning_iters), 1)
        window_end = int(0.75 * cfg.tuning_iters)
        mass_window = cfg.adapt_mass and (window_end - window_start) >= 20
        window_draws = []

        tuning_divergent = 0
        draws = np.empty((cfg.draw_iters, d))
        accept = np.empty(cfg.draw_iters)
        divergences = 0
        log_every = _cfg('SAMPLER_LOG_EVERY', 100)
        started = time.time()

        for it in range(cfg.tuning_iters + cfg.draw_iters):
            theta, logp, grad, stats = self.transition(theta, logp, grad, eps)
            tuning = it < cfg.tuning_iters
            if tuning:
                tuning_divergent += int(stats['divergent'])
                adapt_count += 1
                eta = 1.0 / (adapt_count + t0)
                h_bar = (1 - eta) * h_bar + eta * (cfg.target_accept - stats['accept_stat'])
                log_eps = mu - math.sqrt(adapt_count) / gamma * h_bar
                w = adapt_count ** (-kappa)
                log_eps_bar = w * log_eps + (1 - w) * log_eps_bar
                eps = math.exp(log_eps)

                if mass_window and window_start <= it < window_end:
                    window_draws.append(theta.copy())
                if mass_window and it == window_end - 1 and len(window_draws) > 2:
                    n = len(window_draws)
                    var = np.var(np.asarray(window_draws), axis=0, ddof=1)
                    self.inv_mass = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                    eps = self.find_reasonable_step_size(theta, logp, grad)
                    mu, log_eps_bar, h_bar, adapt_count = math.log(10 * eps), 0.0, 0.0, 0
                    logger.debug(f"📊 Matrice de masse adaptée (moyenne inv_mass={self.inv_mass.mean():.3g})")

                if it == cfg.tuning_iters - 1:
                    if tuning_divergent == cfg.tuning_iters:
                        raise SamplerError("Toutes les itérations de réglage sont divergentes")
                    eps = math.exp(log_eps_bar) if adapt_count > 0 else eps
            else:
                k = it - cfg.tuning_iters
                draws[k] = theta
                accept[k] = stats['accept_stat']
                divergences += int(stats['divergent'])

            if log_every and (it + 1) % log_every == 0:
                phase = "réglage" if tuning else "tirage"
                logger.info(f"⏳ NUTS {phase} {it + 1}/{cfg.tuning_iters + cfg.draw_iters} "
                            f"pas={eps:.3g} acc={stats['accept_stat']:.2f} prof={stats['tree_depth']}")

        logger.info(f"✅ NUTS terminé en {time.time() - started:.1f}s: {divergences} divergence(s), "
                    f"pas final {eps:.3g}")
        return PosteriorSamples(
            names=[f"theta[{i}]" for i in range(d)],
            draws=draws,
            accept_stats=accept[:, None],
            divergences=divergences,
            meta={'sampler': 'nuts', 'step_size': eps, 'inv_mass': self.inv_mass.tolist(),
                  'seed': cfg.seed, 'tuning_iters': cfg.tuning_iters},
        )


def nuts_sample(
    log_posterior_with_gradient: LogPosteriorGrad,
    init: np.ndarray,
    nuts_config: NutsConfig,
    names: Optional[List[str]] = None
) -> PosteriorSamples:
    """
    Tire une chaîne NUTS; les itérations de réglage sont exclues du résultat

    Args:
        log_posterior_with_gradient: theta -> (logp, grad)
        init: point initial
        nuts_config: configuration
        names: noms des paramètres (optionnel)
    """
    samples = NutsSampler(log_posterior_with_gradient, nuts_config).run(init)
    if names is not None:
        samples.names = list(names)
    return samples


def run_chains(
    sample_one: Callable[[int, int], PosteriorSamples],
    n_chains: int,
    seed: Optional[int],
    max_workers: Optional[int] = None
) -> PosteriorSamples:
    """
    Lance n_chains chaînes indépendantes en parallèle

    Args:
        sample_one: (indice de chaîne, graine) -> PosteriorSamples
        n_chains: nombre de chaînes
        seed: graine maîtresse, découpée en sous-flux déterministes
    """
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_chains)]
    if n_chains == 1:
        return sample_one(0, seeds[0])
    with ThreadPoolExecutor(max_workers=max_workers or n_chains) as pool:
        parts = list(pool.map(lambda args: sample_one(*args), enumerate(seeds)))
    return PosteriorSamples.merge_chains(parts)


# ============================================================================
# DE-MC AVEC MISE À JOUR SNOOKER
# ============================================================================

def demc_snooker_sample(
    log_posterior: LogPosterior,
    inits: np.ndarray,
    demc_config: DemcConfig,
    names: Optional[List[str]] = None,
    initial_archive: Optional[np.ndarray] = None
) -> PosteriorSamples:
    """
    DE-MC à archive d'états passés (variante ZS) avec mise à jour snooker

    Args:
        log_posterior: theta -> logp
        inits: états initiaux (n_chains, d), distincts
        demc_config: configuration
        names: noms des paramètres
        initial_archive: états (m, d) initialisant l'archive; par défaut les inits
    """
    cfg = demc_config
    rng = np.random.default_rng(cfg.seed)
    x = np.array(inits, dtype=float)
    if x.ndim != 2 or x.shape[0] != cfg.n_chains:
        raise ValueError(f"inits doit être de forme ({cfg.n_chains}, d)")
    n_chains, d = x.shape
    if len({tuple(row) for row in x}) < n_chains:
        raise ValueError("Les états initiaux doivent être distincts")
    gamma = cfg.gamma if cfg.gamma is not None else 2.38 / math.sqrt(2 * d)

    archive = [row.copy() for row in x]
    if initial_archive is not None:
        archive.extend(np.array(row, dtype=float) for row in initial_archive)
    logp = np.array([log_posterior(row) for row in x], dtype=float)
    if not np.any(np.isfinite(logp)):
        raise SamplerError("Aucun état initial de log-postérieure finie")

    total = cfg.tuning_iters + cfg.draw_iters
    draws = np.empty((cfg.draw_iters, d, n_chains))
    accept = np.empty((cfg.draw_iters, n_chains))
    collapse_tol = _cfg('CHAIN_COLLAPSE_TOL', 1e-12)
    log_every = _cfg('SAMPLER_LOG_EVERY', 100)
    n_accepted = 0

    for it in range(total):
        accepted_now = np.zeros(n_chains)
        jump = gamma if (cfg.mode_jump_every <= 0 or (it + 1) % cfg.mode_jump_every) else 1.0
        z_all = np.asarray(archive)
        m = z_all.shape[0]
        for i in range(n_chains):
            if rng.random() < cfg.snooker_prob and m >= 3:
                idx = rng.choice(m, size=3, replace=False)
                z, z1, z2 = z_all[idx[0]], z_all[idx[1]], z_all[idx[2]]
                axis = x[i] - z
                norm2 = float(axis @ axis)
                if norm2 <= 0:
                    continue
                proj = ((z1 - z2) @ axis) / norm2 * axis
                proposal = x[i] + rng.uniform(1.2, 2.2) * proj
                correction = (d - 1) * (math.log(max(np.linalg.norm(proposal - z), 1e-300))
                                        - math.log(math.sqrt(norm2)))
            else:
                if m >= 3:
                    r1, r2 = rng.choice(m, size=2, replace=False)
                    diff = z_all[r1] - z_all[r2]
                else:
                    others = [k for k in range(n_chains) if k != i]
                    r1, r2 = rng.choice(others, size=2, replace=False)
                    diff = x[r1] - x[r2]
                proposal = x[i] + jump * diff + rng.uniform(-cfg.jitter, cfg.jitter, size=d)
                correction = 0.0
            logp_new = log_posterior(proposal)
            if np.isfinite(logp_new) and math.log(rng.random()) < logp_new - logp[i] + correction:
                x[i], logp[i] = proposal, logp_new
                accepted_now[i] = 1.0

        if cfg.archive_every > 0 and (it + 1) % cfg.archive_every == 0:
            archive.extend(row.copy() for row in x)
        if np.max(np.ptp(x, axis=0)) < collapse_tol:
            raise SamplerError(f"Effondrement des chaînes à l'itération {it + 1}")

        if it >= cfg.tuning_iters:
            k = it - cfg.tuning_iters
            draws[k] = x.T
            accept[k] = accepted_now
            n_accepted += int(accepted_now.sum())
        if log_every and (it + 1) % log_every == 0:
            logger.info(f"⏳ DE-MC {it + 1}/{total} acceptation={accepted_now.mean():.2f} archive={len(archive)}")

    rate = n_accepted / max(cfg.draw_iters * n_chains, 1)
    logger.info(f"✅ DE-MC terminé: taux d'acceptation {rate:.2%}")
    return PosteriorSamples(
        names=list(names) if names is not None else [f"theta[{i}]" for i in range(d)],
        draws=draws,
        accept_stats=accept,
        meta={'sampler': 'demc_snooker', 'gamma': gamma, 'acceptance_rate': rate,
              'seed': cfg.seed, 'tuning_iters': cfg.tuning_iters},
    )


# ============================================================================
# DIAGNOSTICS
# ============================================================================

def autocorrelation(draws: np.ndarray, max_lag: int, names: Optional[List[str]] = None) -> pd.DataFrame:
    """
    ACF empirique (estimateur biaisé) par paramètre, lags 0..max_lag

    Les séries constantes sont dégénérées: colonne NaN et avertissement.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ValueError("Au moins 2 tirages sont requis")
    max_lag = min(max_lag, n - 1)
    centered = x - x.mean(axis=0)
    denom = np.sum(centered ** 2, axis=0)
    # produit croisé par FFT, zéro-padding à 2n pour éviter le repliement circulaire
    size = 1 << int(2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, n=size, axis=0)
    cross = np.fft.irfft(spectrum * np.conj(spectrum), n=size, axis=0)[:max_lag + 1]
    acf = np.full((max_lag + 1, x.shape[1]), np.nan)
    for j in range(x.shape[1]):
        if denom[j] <= 0:
            logger.warning(f"⚠️ ACF indéfinie: série constante ({names[j] if names else j})")
            continue
        acf[:, j] = cross[:, j] / denom[j]
    frame = pd.DataFrame(acf, columns=names if names is not None else range(x.shape[1]))
    frame.index.name = 'lag'
    return frame


def clt_band(n_draws: int) -> float:
    """Demi-largeur de la bande +-1.96/sqrt(n)"""
    return 1.96 / math.sqrt(n_draws)


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS par séquence initiale monotone (Geyer) sur une ou plusieurs chaînes (itération, chaîne)"""
    x = np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if n < 4 or np.all(np.var(x, axis=0) == 0):
        return float('nan')
    acf = np.nanmean(autocorrelation(x, n - 1).to_numpy(), axis=1)
    acf = np.nan_to_num(acf)
    tau = -1.0
    prev = math.inf
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    return float(n * m / max(tau, 1.0 / math.log10(n * m)))


def rhat(chains: np.ndarray) -> float:
    """R-hat scindé (itération, chaîne)"""
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    half = x.shape[0] // 2
    if half < 2:
        return float('nan')
    split = np.concatenate([x[:half], x[half:2 * half]], axis=1)
    n = split.shape[0]
    means = split.mean(axis=0)
    within = split.var(axis=0, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within <= 0:
        return float('nan')
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def summarize(samples: PosteriorSamples) -> pd.DataFrame:
    """Moyenne, écart-type, intervalle 95%, ESS et R-hat (informatifs)"""
    flat = samples.flat()
    q = np.percentile(flat, [2.5, 97.5], axis=0)
    rows = []
    for j, name in enumerate(samples.names):
        per_chain = samples.draws[:, j, :]
        rows.append({
            'parameter': name,
            'mean': flat[:, j].mean(),
            'sd': flat[:, j].std(ddof=1) if flat.shape[0] > 1 else float('nan'),
            'q2.5': q[0, j],
            'q97.5': q[1, j],
            'ess': effective_sample_size(per_chain),
            'rhat': rhat(per_chain),
        })
    return pd.DataFrame(rows)


def trace_table(samples: PosteriorSamples, parameters: Optional[List[str]] = None) -> pd.DataFrame:
    """Trace en format large: (chain, iteration) x paramètres"""
    frame = samples.to_frame()
    if parameters is not None:
        frame = frame[frame['parameter'].isin(parameters)]
    table = frame.pivot_table(index=['chain', 'iteration'], columns='parameter', values='value', sort=False)
    return table.reset_index()


def acf_table(samples: PosteriorSamples, max_lag: Optional[int] = None,
              parameters: Optional[List[str]] = None) -> pd.DataFrame:
    """ACF par paramètre (chaîne 0) avec la bande TCL, prête à tracer"""
    max_lag = max_lag or _cfg('ACF_MAX_LAG', 50)
    names = parameters or samples.names
    cols = [samples.index(n) for n in names]
    acf = autocorrelation(samples.draws[:, cols, 0], max_lag, names=names)
    acf = acf.reset_index()
    acf['clt_band'] = clt_band(samples.n_iter)
    return acf
