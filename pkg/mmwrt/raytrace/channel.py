"""
MIMO-канал по списку MPC, SVD-beamforming и SNR/SINR.

    H = sum_m sqrt(PG_m) * exp(j * Phi_m) * conj(a_rx(AoA_m)) * a_tx(AoD_m)^H

Член -2*pi*tau_m*f_c не добавляется: фаза распространения D-лучей уже лежит
в Phi_m, у диффузных компонент фаза равномерная и тоже включает задержку.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .exceptions import LinkOutageError
from .qd import Mpc
from .schemas import ArrayConfig, LinkBudget

logger = logging.getLogger(__name__)


def rotation_matrix(cfg: ArrayConfig) -> np.ndarray:
    """Поворот локальных координат решётки в глобальные: yaw (bearing), pitch (downtilt), roll (slant)."""
    if not (cfg.yaw or cfg.pitch or cfg.roll):
        return np.eye(3)
    sin_a, sin_b, sin_g = np.sin([cfg.yaw, cfg.pitch, cfg.roll])
    cos_a, cos_b, cos_g = np.cos([cfg.yaw, cfg.pitch, cfg.roll])
    return np.array([
        [cos_a * cos_b, cos_a * sin_b * sin_g - sin_a * cos_g, cos_a * sin_b * cos_g + sin_a * sin_g],
        [sin_a * cos_b, sin_a * sin_b * sin_g + cos_a * cos_g, sin_a * sin_b * cos_g - cos_a * sin_g],
        [-sin_b, cos_b * sin_g, cos_b * cos_g],
    ])


def element_positions(cfg: ArrayConfig) -> np.ndarray:
    """Позиции элементов в длинах волн, (rows*cols, 3), порядок row-major: индекс m*cols + n."""
    m, n = np.meshgrid(np.arange(cfg.rows), np.arange(cfg.cols), indexing="ij")
    local = np.stack([np.zeros(cfg.size), n.reshape(-1), m.reshape(-1)], axis=1) * cfg.spacing
    return local @ rotation_matrix(cfg).T


def unit_directions(angles: np.ndarray) -> np.ndarray:
    azimuth, elevation = angles[..., 0], angles[..., 1]
    return np.stack([
        np.cos(elevation) * np.cos(azimuth),
        np.cos(elevation) * np.sin(azimuth),
        np.sin(elevation),
    ], axis=-1)


def steering_vector(cfg: ArrayConfig, angle: Tuple[float, float]) -> np.ndarray:
    return _steering_matrix(cfg, np.asarray([angle], dtype=float))[0]


def _steering_matrix(cfg: ArrayConfig, angles: np.ndarray) -> np.ndarray:
    phases = unit_directions(angles) @ element_positions(cfg).T
    return np.exp(2j * math.pi * phases)


def assemble_H(mpcs: Sequence[Mpc], tx_cfg: ArrayConfig, rx_cfg: ArrayConfig, f_c: float) -> np.ndarray:
    """Матрица U x S. f_c оставлен в сигнатуре: частота уже учтена в фазах MPC."""
    if not mpcs:
        return np.zeros((rx_cfg.size, tx_cfg.size), dtype=complex)
    gains = np.array([m.gain_db for m in mpcs])
    phases = np.array([m.phase for m in mpcs])
    coefficients = np.sqrt(10.0 ** (gains / 10.0)) * np.exp(1j * phases)
    a_rx = _steering_matrix(rx_cfg, np.array([m.aoa for m in mpcs]))   # (M, U)
    a_tx = _steering_matrix(tx_cfg, np.array([m.aod for m in mpcs]))   # (M, S)
    return (coefficients[:, None] * a_rx.conj()).T @ a_tx.conj()


def svd_beamforming(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(w_tx, w_rx) - старшие правый и левый сингулярные векторы, |w_rx^H H w_tx| = sigma_max."""
    if not np.any(H):
        raise LinkOutageError("channel matrix is zero: no beamforming direction exists")
    u, _, vh = np.linalg.svd(H)
    return vh[0].conj(), u[:, 0]


def beamforming_gain(H: np.ndarray, w_tx: Optional[np.ndarray], w_rx: np.ndarray) -> float:
    """|w_rx^H H w_tx|^2; нулевой или отсутствующий w_tx - передатчик молчит."""
    if w_tx is None:
        return 0.0
    return float(abs(w_rx.conj() @ H @ w_tx) ** 2)


@dataclass(frozen=True)
class Link:
    p_tx_dbm: float
    H: np.ndarray
    w_tx: np.ndarray
    w_rx: np.ndarray


@dataclass(frozen=True)
class Interferer:
    p_tx_dbm: float
    H: np.ndarray
    w_tx: Optional[np.ndarray] = None


def dbm_to_mw(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0)


def rx_power_dbm(link: Link) -> float:
    gain = beamforming_gain(link.H, link.w_tx, link.w_rx)
    if gain <= 0.0:
        return -math.inf
    return link.p_tx_dbm + 10.0 * math.log10(gain)


def sinr_db(link: Link, interferers: Sequence[Interferer], budget: LinkBudget) -> float:
    signal = dbm_to_mw(link.p_tx_dbm) * beamforming_gain(link.H, link.w_tx, link.w_rx)
    interference = sum(
        dbm_to_mw(i.p_tx_dbm) * beamforming_gain(i.H, i.w_tx, link.w_rx) for i in interferers
    )
    noise = dbm_to_mw(budget.noise_floor_dbm)
    if signal <= 0.0:
        return -math.inf
    return 10.0 * math.log10(signal / (interference + noise))


def snr_db(link: Link, budget: LinkBudget) -> float:
    return sinr_db(link, (), budget)
