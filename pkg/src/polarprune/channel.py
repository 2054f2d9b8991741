"""BPSK over BIAWGN (and BEC) with counter-based per-frame random streams."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

BEC_LLR = 300.0


@dataclass(frozen=True)
class BIAWGN:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")


@dataclass(frozen=True)
class BEC:
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigurationError("epsilon must lie in [0, 1]")


@dataclass
class ChannelObservation:
    llr: np.ndarray
    y: np.ndarray | None = None
    erased: np.ndarray | None = None


def ebn0_to_sigma(ebn0_db, code_rate):
    if not 0.0 < code_rate < 1.0:
        raise ConfigurationError("code_rate must lie in (0, 1)")
    return (2.0 * code_rate * 10.0 ** (ebn0_db / 10.0)) ** -0.5


def frame_streams(master_seed, frame_index):
    """Independent (payload, noise) generators for one frame.

    Philox is counter based, and the SeedSequence spawn key pins each frame
    to its own stream, so results never depend on scheduling.
    """
    def gen(sub):
        ss = np.random.SeedSequence(master_seed, spawn_key=(int(frame_index), sub))
        return np.random.Generator(np.random.Philox(ss))
    return gen(0), gen(1)


def awgn_llr(y, sigma):
    return 2.0 * np.asarray(y, dtype=np.float64) / (sigma * sigma)


def gaussian_llr(y, sigma):
    """LLR from the Gaussian likelihoods themselves; equals awgn_llr analytically."""
    y = np.asarray(y, dtype=np.float64)
    s2 = 2.0 * sigma * sigma
    return (-(y - 1.0) ** 2 + (y + 1.0) ** 2) / s2


def transmit(x, model, rng):
    x = np.asarray(x, dtype=np.uint8)
    if isinstance(model, BIAWGN):
        y = (1.0 - 2.0 * x) + model.sigma * rng.standard_normal(x.shape)
        return ChannelObservation(llr=awgn_llr(y, model.sigma), y=y)
    if isinstance(model, BEC):
        erased = rng.random(x.shape) < model.epsilon
        llr = np.where(erased, 0.0, BEC_LLR * (1.0 - 2.0 * x))
        return ChannelObservation(llr=llr, erased=erased)
    raise ConfigurationError(f"unknown channel model {model!r}")
