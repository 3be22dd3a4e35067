"""
Configuration centralisée pour le modèle de dommages grêle
(processus de lignes aléatoires + valeurs extrêmes)
"""
import os

# ============================================================================
# GÉOMÉTRIE / GRILLE
# ============================================================================
EARTH_RADIUS_KM = 6371.0  # Rayon terrestre (km)
CELL_SIZE_KM = 2.0  # Grille des comptages: cellules de 2 km
COARSE_BLOCK = 5  # Grille grossière: blocs 5x5 de cellules 2 km (~10 km)
MIN_CLAIMS_PER_COARSE_CELL = 100  # Minimum de sinistres d'entraînement par cellule grossière
VERTICAL_LINE_TOL = 1e-6  # rad, lignes quasi verticales

# ============================================================================
# NOYAUX DE COVARIANCE
# ============================================================================
MATERN_NU = 1.5  # Lissage fixé
JITTER_START = 1e-8  # Pépite initiale sur la diagonale
JITTER_MAX = 1e-4  # Pépite maximale avant erreur
JITTER_FACTOR = 10.0  # Escalade x10
RATQUAD_SQUARED_DISTANCE = False  # True: w² au numérateur du noyau rationnel quadratique

# ============================================================================
# DISTRIBUTIONS
# ============================================================================
GPD_XI_EPS = 1e-6  # |xi| < eps -> limite exponentielle
BETA_NUDGE_CHF = 0.005  # Décalage des observations au bord du support Beta
EXPIT_CLIP = 700.0  # Stabilité numérique de expit

# ============================================================================
# MODÈLE DE COMPTAGE
# ============================================================================
COEF_PRIOR_SD = 10.0  # Normal(0, 10²) sur les coefficients
XI_PRIOR_SD = 0.5  # Normal(0, 0.5²) sur les indices de forme GPD xi1, xi2
SCALE_PRIOR_SD = 5.0  # Half-Normal(0, 5²) sur les échelles
LENGTH_SCALE_PRIOR_SD_KM = 20.0  # Half-Normal sur les longueurs de corrélation (km)
THETA_PRIOR_SD_DEG = 15.0  # Écart-type de l'angle autour du vent moyen
ALPHA_MARGIN_KM = 20.0  # Marge du prior uniforme de alpha_t
LINEAR_PREDICTOR_CLAMP = 30.0  # Bornes du prédicteur linéaire de log(mu)

# ============================================================================
# SAISONS / DÉCOUPAGE TEMPOREL
# ============================================================================
HAIL_SEASON_MONTHS = (5, 6, 7, 8)  # Saison de grêle: mai-août
CLAIM_SEASON_MONTHS = (4, 5, 6, 7, 8, 9)  # Sinistres retenus: avril-septembre
TRAIN_LAST_YEAR = 2015
VALIDATION_YEARS = (2016, 2017)
DATE_WINDOW_DAYS = 2  # Fenêtre +-2 jours pour le regroupement des dates
POH_RATIO = 0.5  # Seuil relatif de POH pour déplacer la date

# ============================================================================
# SEUIL GPD
# ============================================================================
DEFAULT_THRESHOLD_U = 8.06  # Seuil retenu sur l'échelle log(1+x)
THRESHOLD_GRID_SIZE = 81
THRESHOLD_QUANTILE_RANGE = (0.50, 0.99)
MIN_EXCEEDANCES = 10
THRESHOLD_FALLBACK_QUANTILE = 0.9  # Repli: quantile des f(Z) si le seuil retenu laisse trop peu d'excès
GPD_START_XI = (-0.4, 0.0, 0.4)  # Multi-start du maximum de vraisemblance

# ============================================================================
# ÉCHANTILLONNEURS MCMC
# ============================================================================
NUTS_TUNING_ITERS = 500  # Échantillons de réglage exclus
NUTS_DRAW_ITERS = 1000
NUTS_TARGET_ACCEPT = 0.8
NUTS_MAX_TREE_DEPTH = 10
DIVERGENCE_ENERGY = 1000.0  # Erreur d'énergie déclarant une divergence
MAX_DIVERGENCE_RATE = 0.10  # Au-delà: échec de qualité de l'ajustement

DEMC_N_CHAINS = 8
DEMC_SNOOKER_PROB = 0.1
DEMC_JITTER = 1e-4
DEMC_TUNING_ITERS = 500
DEMC_DRAW_ITERS = 2000
CHAIN_COLLAPSE_TOL = 1e-12

SAMPLER_LOG_EVERY = 100  # Fréquence des logs de progression
ACF_MAX_LAG = 50

# ============================================================================
# ÉVALUATION
# ============================================================================
SKSS_PATCH = 10  # Patchs 10x10
LSD_FLOOR = 1e-12  # Plancher relatif du spectre de puissance
PREDICTION_DRAWS = 32  # n = m, soit ~1000 échantillons composites
PREDICTION_PERCENTILES = (2.5, 97.5)
CORRELOGRAM_ENVELOPE = (5.0, 95.0)  # Enveloppe 90%

# ============================================================================
# EXÉCUTION
# ============================================================================
DEFAULT_SEED = 7
DEFAULT_OUTPUT_DIR = "outputs"
DEFAULT_CHAINS = 1

# ============================================================================
# TESTS
# ============================================================================
RUN_SLOW_TESTS = os.getenv('HAIL_SLOW_TESTS', '0') == '1'  # Études de recouvrement (20 réplicats)

# Configuration du logging
LOG_LEVEL = 'INFO'  # DEBUG, INFO, WARNING, ERROR
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
