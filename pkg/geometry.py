"""
Géométrie du processus de lignes aléatoires
Projection locale, rotation dans le repère de la ligne, distance point-ligne
et fonction moyenne m_t
"""

import math
import logging
from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np

try:
    import config
except ImportError:
    config = None

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

EARTH_RADIUS_KM = getattr(config, 'EARTH_RADIUS_KM', 6371.0) if config else 6371.0


def _scalar_or_array(value):
    if np.ndim(value) == 0:
        return float(value)
    return value


def normalize_angle(theta: ArrayLike) -> ArrayLike:
    """Ramène un angle de ligne dans (-pi/2, pi/2] (une ligne est invariante par theta + pi)"""
    wrapped = np.pi / 2 - np.mod(np.pi / 2 - np.asarray(theta, dtype=float), np.pi)
    return _scalar_or_array(wrapped)


def wind_to_line_angle(wind_direction_deg: ArrayLike) -> ArrayLike:
    """
    Convertit une direction de vent (degrés, sens horaire depuis le nord)
    en angle de ligne mesuré depuis l'axe est, dans (-pi/2, pi/2]
    """
    return normalize_angle(np.pi / 2 - np.radians(wind_direction_deg))


@dataclass(frozen=True)
class PlanarPoint:
    """Point en km relatif à l'origine s_0 (x vers l'est, y vers le nord)"""
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Coordonnées non finies: ({self.x}, {self.y})")


@dataclass(frozen=True)
class LineState:
    """Paramètres journaliers de la ligne: angle theta, décalage alpha (km), dispersion sigma_m"""
    theta: float
    alpha: float
    sigma_m: float

    def __post_init__(self):
        if not self.sigma_m > 0:
            raise ValueError(f"sigma_m doit être > 0 (reçu {self.sigma_m})")
        object.__setattr__(self, 'theta', normalize_angle(self.theta))


# ============================================================================
# FORMES VECTORISÉES (tableaux de coordonnées)
# ============================================================================

def rotate_coords(x: ArrayLike, y: ArrayLike, theta: float, alpha: float) -> Tuple[ArrayLike, ArrayLike]:
    """
    Exprime (x, y) dans le repère où la ligne est l'axe horizontal

    Returns:
        (x', y') avec x' = cos.x + sin.(y-alpha), y' = -sin.x + cos.(y-alpha)
    """
    c, s = math.cos(theta), math.sin(theta)
    dy = np.asarray(y, dtype=float) - alpha
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(c * x + s * dy), _scalar_or_array(-s * x + c * dy)


def signed_offset(x: ArrayLike, y: ArrayLike, theta: float, alpha: float) -> ArrayLike:
    """(y - alpha).cos(theta) - x.sin(theta): forme sans tangente, valable pour les lignes verticales"""
    return (np.asarray(y, dtype=float) - alpha) * math.cos(theta) - np.asarray(x, dtype=float) * math.sin(theta)


def distance_coords(x: ArrayLike, y: ArrayLike, theta: float, alpha: float) -> ArrayLike:
    """Distance euclidienne (km) entre des points et la ligne"""
    return _scalar_or_array(np.abs(signed_offset(x, y, theta, alpha)))


def mean_from_distance(distance: ArrayLike, sigma_m: float) -> ArrayLike:
    """m = sigma_m / (1 + d) - 1"""
    if not sigma_m > 0:
        raise ValueError(f"sigma_m doit être > 0 (reçu {sigma_m})")
    return _scalar_or_array(sigma_m / (1.0 + np.asarray(distance, dtype=float)) - 1.0)


def line_mean_coords(x: ArrayLike, y: ArrayLike, line: LineState) -> ArrayLike:
    return mean_from_distance(distance_coords(x, y, line.theta, line.alpha), line.sigma_m)


def line_mean_with_gradient(
    x: np.ndarray,
    y: np.ndarray,
    theta: float,
    alpha: float,
    sigma_m: float
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    m_t aux points (x, y) et ses dérivées partielles

    Returns:
        (m, {'theta': dm/dtheta, 'alpha': dm/dalpha, 'sigma_m': dm/dsigma_m})
    """
    c, s = math.cos(theta), math.sin(theta)
    dy = np.asarray(y, dtype=float) - alpha
    x = np.asarray(x, dtype=float)
    g = dy * c - x * s
    sign = np.sign(g)
    inv = 1.0 / (1.0 + np.abs(g))
    m = sigma_m * inv - 1.0
    dm_dd = -sigma_m * inv ** 2
    grads = {
        'theta': dm_dd * sign * (-dy * s - x * c),
        'alpha': dm_dd * sign * (-c),
        'sigma_m': inv,
    }
    return m, grads


# ============================================================================
# OPÉRATIONS SUR POINTS
# ============================================================================

def rotate_to_line(s: PlanarPoint, line: LineState) -> PlanarPoint:
    x_rot, y_rot = rotate_coords(s.x, s.y, line.theta, line.alpha)
    return PlanarPoint(x_rot, y_rot)


def distance_to_line(s: PlanarPoint, line: LineState) -> float:
    return distance_coords(s.x, s.y, line.theta, line.alpha)


def line_mean(s: PlanarPoint, line: LineState) -> float:
    """Moyenne du champ latent au point s: maximum sigma_m - 1 sur la ligne"""
    return mean_from_distance(distance_to_line(s, line), line.sigma_m)


def project_lonlat(
    lon: ArrayLike,
    lat: ArrayLike,
    origin_lon: float,
    origin_lat: float,
    radius: float = EARTH_RADIUS_KM
) -> Tuple[ArrayLike, ArrayLike]:
    """
    Projection équirectangulaire locale ancrée en (origin_lon, origin_lat)

    Returns:
        (x, y) en km
    """
    lat_arr = np.asarray(lat, dtype=float)
    if np.any(np.abs(lat_arr) >= 90) or abs(origin_lat) >= 90:
        raise ValueError("Projection impossible aux pôles")
    x = radius * math.cos(math.radians(origin_lat)) * np.radians(np.asarray(lon, dtype=float) - origin_lon)
    y = radius * np.radians(lat_arr - origin_lat)
    return _scalar_or_array(x), _scalar_or_array(y)


def project_point(lon: float, lat: float, origin_lon: float, origin_lat: float) -> PlanarPoint:
    x, y = project_lonlat(lon, lat, origin_lon, origin_lat)
    return PlanarPoint(x, y)


def unproject_lonlat(
    x: ArrayLike,
    y: ArrayLike,
    origin_lon: float,
    origin_lat: float,
    radius: float = EARTH_RADIUS_KM
) -> Tuple[ArrayLike, ArrayLike]:
    """Inverse de project_lonlat"""
    lon = origin_lon + np.degrees(np.asarray(x, dtype=float) / (radius * math.cos(math.radians(origin_lat))))
    lat = origin_lat + np.degrees(np.asarray(y, dtype=float) / radius)
    return _scalar_or_array(lon), _scalar_or_array(lat)
