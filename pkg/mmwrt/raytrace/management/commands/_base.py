import argparse
import logging
import math

from django.core.management.base import BaseCommand, CommandError

from raytrace.exceptions import ConfigError, RayTracingError

LEVELS = {0: logging.WARNING, 1: logging.INFO}


def threshold_db(value):
    """Порог в dB: число или -inf. Из командной строки пишется как --rel-threshold-db=-inf."""
    if value is None or isinstance(value, (int, float)):
        return value
    text = str(value).strip().lower()
    if text in ("-inf", "-infinity"):
        return -math.inf
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"not a threshold in dB: {value!r}") from exc


def threshold_arg(value):
    """threshold_db для argparse: ошибка разбора превращается в сообщение об использовании."""
    try:
        return threshold_db(value)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def on_off(value):
    if value is None or isinstance(value, bool):
        return value
    if value in ("on", "off"):
        return value == "on"
    raise ConfigError(f"expected on/off, got {value!r}")


class RaytraceCommand(BaseCommand):
    """Общая часть команд: уровень логов из --verbosity и перевод ошибок в CommandError."""

    def execute(self, *args, **options):
        level = LEVELS.get(options.get("verbosity", 1), logging.DEBUG)
        logging.getLogger("raytrace").setLevel(level)
        try:
            return super().execute(*args, **options)
        except RayTracingError as exc:
            raise CommandError(str(exc).splitlines()[0] if str(exc) else type(exc).__name__) from exc
