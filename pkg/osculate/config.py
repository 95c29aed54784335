"""
Tunable numerical settings for osculate.

Config path: $OSCULATE_CONFIG, else ~/.config/osculate/config.ini
"""

import configparser
import functools
import logging
import os

from .constants import MAX_GRID_EXPONENT

log = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.expanduser("~"), ".config", "osculate")
CONFIG_PATH = os.environ.get("OSCULATE_CONFIG", os.path.join(CONFIG_DIR, "config.ini"))

DEFAULTS = {
    "flows": {
        "steps": "256",
        "max_abs_t": "1.0",
    },
    "richardson": {
        "h0": "0.01",
        "levels": "4",
        "arrow_grid": "3..10",
        "depth": "3",
    },
    "tolerances": {
        "degenerate_condition": "1e8",
        "h_chart":              "1e-8",
        "centered":             "1e-10",
        "generator_in_h":       "1e-8",
        "tangent_to_h":         "1e-6",
        "skew":                 "1e-12",
        "oracle":               "1e-6",
        "noise_floor":          "1e-10",
        "middle_point":         "1e-12",
    },
    "newton": {
        "damping": "0.5",
        "max_iter": "50",
        "residual": "1e-10",
        "fd_step": "1e-6",
    },
    "expmap": {
        "domain_radius": "1.0",
        "blowup": "1e6",
    },
    "verify": {
        "samples": "50",
        "seed": "7",
        "pairs": "20",
    },
}


@functools.lru_cache(maxsize=1)
def load_config():
    """Load config from disk, falling back to defaults if file is missing or malformed."""
    config = configparser.ConfigParser()
    for section, values in DEFAULTS.items():
        config[section] = dict(values)

    path = os.environ.get("OSCULATE_CONFIG", CONFIG_PATH)
    if os.path.isfile(path):
        try:
            config.read(path)
            log.debug("Loaded config from %s", path)
        except configparser.Error as e:
            log.warning("Malformed config at %s, using defaults: %s", path, e)
            config = configparser.ConfigParser()
            for section, values in DEFAULTS.items():
                config[section] = dict(values)
    else:
        log.debug("No config file at %s, using defaults", path)

    return config


def reload_config():
    """Drop the cached config so the next accessor re-reads the file."""
    load_config.cache_clear()


def _get_float(section: str, key: str, lo: float, hi: float) -> float:
    default = float(DEFAULTS[section][key])
    try:
        v = float(load_config().get(section, key, fallback=DEFAULTS[section][key]))
    except ValueError:
        log.warning("Invalid %s.%s, using %g", section, key, default)
        return default
    return max(lo, min(hi, v))


def _get_int(section: str, key: str, lo: int, hi: int) -> int:
    default = int(DEFAULTS[section][key])
    try:
        v = int(load_config().get(section, key, fallback=DEFAULTS[section][key]))
    except ValueError:
        log.warning("Invalid %s.%s, using %d", section, key, default)
        return default
    return max(lo, min(hi, v))


# --- Flows ---

def flow_steps() -> int:
    """Return the fixed RK4 step count (16-65536)."""
    return _get_int("flows", "steps", 16, 65536)


def max_abs_t() -> float:
    """Return the largest |t| a flow may be integrated to."""
    return _get_float("flows", "max_abs_t", 1e-6, 10.0)


# --- Richardson ---

def richardson_h0() -> float:
    """Return the first finite-difference step of black-box curve sampling."""
    return _get_float("richardson", "h0", 1e-6, 1.0)


def richardson_levels() -> int:
    return _get_int("richardson", "levels", 2, 12)


def richardson_depth() -> int:
    """Return the number of eliminations per sliding window on dyadic grids."""
    return _get_int("richardson", "depth", 1, 6)


def arrow_grid() -> list[float]:
    """Return the dyadic t-grid, largest t first.

    Written as "a..b" for the exponents a through b (t = 2^-k), or as an
    explicit comma-separated exponent list.
    """
    raw = load_config().get("richardson", "arrow_grid", fallback="3..10").strip()
    try:
        if ".." in raw:
            lo, hi = (int(x) for x in raw.split("..", 1))
            exponents = list(range(lo, hi + 1))
        else:
            exponents = [int(x.strip()) for x in raw.split(",") if x.strip()]
    except ValueError:
        log.warning("Invalid richardson.arrow_grid %r, using defaults", raw)
        exponents = list(range(3, 11))
    exponents = sorted(set(k for k in exponents if 1 <= k <= MAX_GRID_EXPONENT))
    if len(exponents) < richardson_depth() + 2:
        log.warning("richardson.arrow_grid %r too short, using defaults", raw)
        exponents = list(range(3, 11))
    return [2.0 ** -k for k in exponents]


# --- Tolerances ---

def tolerance(name: str) -> float:
    """Return a positive tolerance from the [tolerances] section."""
    if name not in DEFAULTS["tolerances"]:
        raise KeyError(f"unknown tolerance {name!r}")
    return _get_float("tolerances", name, 0.0, 1e12)


# --- Newton ---

def newton_params() -> dict:
    """Return damped-Newton settings for groupoid chart inversion."""
    return {
        "damping":  _get_float("newton", "damping", 0.05, 0.95),
        "max_iter": _get_int("newton", "max_iter", 1, 1000),
        "residual": _get_float("newton", "residual", 1e-15, 1e-3),
        "fd_step":  _get_float("newton", "fd_step", 1e-10, 1e-2),
    }


# --- Exponential maps ---

def domain_radius() -> float:
    """Return the radius of the arrow box on which handles evaluate."""
    return _get_float("expmap", "domain_radius", 1e-3, 100.0)


def blowup_limit() -> float:
    return _get_float("expmap", "blowup", 1.0, 1e300)


# --- Verify ---

def verify_samples() -> int:
    return _get_int("verify", "samples", 1, 100000)


def verify_seed() -> int:
    return _get_int("verify", "seed", 0, 2 ** 32 - 1)


def verify_pairs() -> int:
    return _get_int("verify", "pairs", 1, 10000)
