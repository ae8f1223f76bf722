from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DEFAULTS = {
    "DEFAULT_TIMESTEP_S": 0.005,
    "DEFAULT_CARRIER_HZ": 60e9,
    "DEFAULT_BANDWIDTH_HZ": 400e6,
    "DEFAULT_NOISE_FIGURE_DB": 9.0,
    "NOISE_PSD_DBM_HZ": -174.0,
    "OUTAGE_FLOOR_DB": -40.0,
    "NRMSE_ACCEPTABLE": 0.05,
    "NS_REPETITIONS": 1000,
    "DEFAULT_JOBS": 1,
    "RL_CLAMP_DB": (7.0, 25.0),
}


def get_setting(name: str):
    """
    Значение из settings.MMWRT, если проект сконфигурирован, иначе встроенное значение по умолчанию.
    """
    if name not in DEFAULTS:
        raise KeyError(name)
    try:
        overrides = getattr(settings, "MMWRT", {})
    except ImproperlyConfigured:
        overrides = {}
    return overrides.get(name, DEFAULTS[name])
