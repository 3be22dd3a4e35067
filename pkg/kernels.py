"""
Noyaux de corrélation (Matérn 3/2, rationnel quadratique), distance cordale
et construction des matrices de covariance factorisées (Cholesky)
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from errors import SingularCovarianceError

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = getattr(config, 'EARTH_RADIUS_KM', 6371.0) if config else 6371.0
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class MaternParams:
    length_scale: float
    nu: float = 1.5

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale doit être > 0 (reçu {self.length_scale})")
        if self.nu != 1.5:
            raise ValueError("Seul nu = 1.5 est supporté")


@dataclass(frozen=True)
class RationalQuadParams:
    length_scale: float
    squared_distance: Optional[bool] = None  # None -> config.RATQUAD_SQUARED_DISTANCE

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale doit être > 0 (reçu {self.length_scale})")

    @property
    def uses_squared(self) -> bool:
        if self.squared_distance is None:
            return bool(getattr(config, 'RATQUAD_SQUARED_DISTANCE', False)) if config else False
        return self.squared_distance


KernelParams = Union[MaternParams, RationalQuadParams]


def _check_distance(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("Distance négative")
    return w


def matern32(w, p: MaternParams):
    """(1 + sqrt(3) w / l) exp(-sqrt(3) w / l)"""
    a = SQRT3 * _check_distance(w) / p.length_scale
    rho = (1.0 + a) * np.exp(-a)
    return float(rho) if np.ndim(rho) == 0 else rho


def matern32_dl(w, p: MaternParams) -> np.ndarray:
    """Dérivée de matern32 par rapport à la longueur l"""
    a = SQRT3 * _check_distance(w) / p.length_scale
    return a ** 2 * np.exp(-a) / p.length_scale


def rational_quadratic(w, p: RationalQuadParams):
    """(1 + w / (4 l²))^-2, ou w² au numérateur si la variante est activée"""
    w = _check_distance(w)
    num = w ** 2 if p.uses_squared else w
    rho = (1.0 + num / (4.0 * p.length_scale ** 2)) ** -2
    return float(rho) if np.ndim(rho) == 0 else rho


def rational_quadratic_dl(w, p: RationalQuadParams) -> np.ndarray:
    w = _check_distance(w)
    num = w ** 2 if p.uses_squared else w
    q = num / (4.0 * p.length_scale ** 2)
    return 4.0 * q / (p.length_scale * (1.0 + q) ** 3)


def correlation(w, p: KernelParams):
    if isinstance(p, MaternParams):
        return matern32(w, p)
    return rational_quadratic(w, p)


def correlation_dl(w, p: KernelParams) -> np.ndarray:
    if isinstance(p, MaternParams):
        return matern32_dl(w, p)
    return rational_quadratic_dl(w, p)


def chordal_distance(s1: Tuple[float, float], s2: Tuple[float, float], radius: float = EARTH_RADIUS_KM):
    """
    Longueur de la corde traversant la Terre entre deux points (lon, lat) en degrés

    Fonctionne aussi avec des tableaux (diffusion numpy).
    """
    x1, y1 = (np.asarray(v, dtype=float) for v in s1)
    x2, y2 = (np.asarray(v, dtype=float) for v in s2)
    cos_p = lambda z: np.cos(np.pi * z / 180.0)
    h = 0.5 * (1.0 - cos_p(y2 - y1) + cos_p(y1) * cos_p(y2) * (1.0 - cos_p(x2 - x1)))
    c = 2.0 * radius * np.sqrt(np.clip(h, 0.0, 1.0))
    return float(c) if np.ndim(c) == 0 else c


def chordal_distance_matrix(lonlat: np.ndarray, radius: float = EARTH_RADIUS_KM) -> np.ndarray:
    lonlat = np.asarray(lonlat, dtype=float)
    lon, lat = lonlat[:, 0], lonlat[:, 1]
    d = chordal_distance((lon[:, None], lat[:, None]), (lon[None, :], lat[None, :]), radius)
    np.fill_diagonal(d, 0.0)
    return d


def distance_matrix(locations: np.ndarray, distance: str = 'planar') -> np.ndarray:
    """
    Matrice des distances deux à deux

    Args:
        locations: tableau (n, 2), km planaires ou (lon, lat) en degrés
        distance: 'planar' ou 'chordal'
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if distance == 'planar':
        return cdist(locations, locations)
    if distance == 'chordal':
        return chordal_distance_matrix(locations)
    raise ValueError(f"Distance inconnue: {distance}")


@dataclass(frozen=True)
class CovarianceMatrix:
    """Matrice de corrélation SPD avec facteur de Cholesky inférieur en cache"""
    entries: np.ndarray
    jitter: float
    chol: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    kernel: KernelParams = None

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def sample(self, rng: np.random.Generator, mean=0.0, size: Optional[int] = None) -> np.ndarray:
        """Tirage gaussien mean + L z"""
        if size is None:
            z = rng.standard_normal(self.size)
            return mean + self.chol @ z
        z = rng.standard_normal((self.size, size))
        return (np.asarray(mean)[..., None] if np.ndim(mean) else mean) + self.chol @ z

    def whiten(self, values: np.ndarray, mean=0.0) -> np.ndarray:
        """L^-1 (values - mean)"""
        return linalg.solve_triangular(self.chol, np.asarray(values) - mean, lower=True)

    def log_density(self, values: np.ndarray, mean=0.0) -> float:
        """Log-densité gaussienne N(mean, entries)"""
        z = self.whiten(values, mean)
        log_det = 2.0 * np.sum(np.log(np.diag(self.chol)))
        return float(-0.5 * (z @ z) - 0.5 * log_det - 0.5 * self.size * math.log(2 * math.pi))

    def derivative_dl(self) -> np.ndarray:
        """dK/dl (la pépite ne dépend pas de l)"""
        return correlation_dl(self.distances, self.kernel)

    def chol_derivative(self, d_entries: np.ndarray) -> np.ndarray:
        """dL pour une variation dK de la matrice: dL = L Phi(L^-1 dK L^-T)"""
        half = linalg.solve_triangular(self.chol, d_entries, lower=True)
        inner = linalg.solve_triangular(self.chol, half.T, lower=True).T
        phi = np.tril(inner)
        phi[np.diag_indices_from(phi)] *= 0.5
        return self.chol @ phi


def build_covariance(
    locations: Sequence,
    kernel: KernelParams,
    distance: str = 'planar',
    distances: Optional[np.ndarray] = None
) -> CovarianceMatrix:
    """
    Construit et factorise la matrice de corrélation d'un champ gaussien

    La pépite démarre à JITTER_START et est multipliée par JITTER_FACTOR
    jusqu'à JITTER_MAX avant de déclarer la matrice singulière.

    Args:
        locations: points (n, 2)
        kernel: MaternParams ou RationalQuadParams
        distance: 'planar' (km) ou 'chordal' (lon/lat en degrés)
        distances: matrice des distances déjà calculée (optionnelle)
    """
    if distances is None:
        locations = np.atleast_2d(np.asarray(locations, dtype=float))
        if locations.shape[0] < 1:
            raise ValueError("Au moins une localisation est requise")
        distances = distance_matrix(locations, distance)
    base = np.asarray(correlation(distances, kernel), dtype=float)
    base = 0.5 * (base + base.T)

    jitter = getattr(config, 'JITTER_START', 1e-8) if config else 1e-8
    jitter_max = getattr(config, 'JITTER_MAX', 1e-4) if config else 1e-4
    factor = getattr(config, 'JITTER_FACTOR', 10.0) if config else 10.0
    n = base.shape[0]
    while jitter <= jitter_max * (1 + 1e-9):
        entries = base + jitter * np.eye(n)
        try:
            chol = linalg.cholesky(entries, lower=True)
            if np.all(np.diag(chol) > 0):
                return CovarianceMatrix(entries=entries, jitter=jitter, chol=chol,
                                        distances=distances, kernel=kernel)
        except linalg.LinAlgError:
            pass
        logger.debug(f"⚠️ Cholesky échoué avec pépite {jitter:.1e}, escalade")
        jitter *= factor
    raise SingularCovarianceError(
        f"Matrice de covariance singulière ({n}x{n}) malgré une pépite de {jitter_max:.0e}"
    )
