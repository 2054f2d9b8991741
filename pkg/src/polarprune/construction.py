"""Polarized-channel reliability evaluation and information-set selection.

Indices are kept in natural order: splitting channel ``i`` of length ``N``
yields channels ``2i-1`` (the "minus" channel) and ``2i`` (the "plus"
channel) of length ``2N``.  No bit-reversal permutation is used anywhere in
the package.
"""
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MAX_N_EXP = 20


class ReliabilityKind(str, enum.Enum):
    BHATTACHARYYA_BEC = "BhattacharyyaBEC"
    GA_MEAN_LLR = "GaussianApproxMeanLLR"


@dataclass(frozen=True)
class ReliabilityProfile:
    n: int
    values: np.ndarray
    kind: ReliabilityKind
    design_param: float

    def __post_init__(self):
        if len(self.values) != 1 << self.n:
            raise ConfigurationError("profile length must be 2**n")

    def order(self):
        """Indices (0-based) from most to least reliable, ties to lower index."""
        keys = self.values if self.kind is ReliabilityKind.BHATTACHARYYA_BEC else -self.values
        return np.argsort(keys, kind="stable")


@dataclass(frozen=True)
class CRCDef:
    poly: int
    width: int
    init: int
    xor_out: int

    def to_json(self):
        digits = (self.width + 3) // 4
        return {
            "poly_hex": f"{self.poly:0{digits}x}",
            "width": self.width,
            "init_hex": f"{self.init:0{digits}x}",
            "xorout_hex": f"{self.xor_out:0{digits}x}",
        }

    @classmethod
    def from_json(cls, doc):
        return cls(int(doc["poly_hex"], 16), int(doc["width"]),
                   int(doc["init_hex"], 16), int(doc["xorout_hex"], 16))


CRC16_CCITT_FALSE = CRCDef(poly=0x1021, width=16, init=0xFFFF, xor_out=0x0000)


@dataclass(frozen=True)
class CodeSpec:
    n: int
    K: int
    info_set: np.ndarray          # 0-based, ascending
    frozen_values: np.ndarray     # one bit per frozen index, ascending order
    crc: CRCDef | None = None
    construction_kind: str = ""
    design_param: float = float("nan")
    info_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        N = 1 << self.n
        info = np.asarray(self.info_set, dtype=np.int64)
        if len(info) != self.K or not 1 <= self.K <= N:
            raise ConfigurationError(f"information set must have K={self.K} indices in [1, {N}]")
        if len(np.unique(info)) != self.K or info.min() < 0 or info.max() >= N:
            raise ConfigurationError("information set indices must be distinct and within range")
        frozen = np.asarray(self.frozen_values, dtype=np.uint8)
        if len(frozen) != N - self.K:
            raise ConfigurationError("frozen_values must have N-K bits")
        if self.crc is not None and self.crc.width >= self.K:
            raise ConfigurationError("CRC width must be smaller than K")
        mask = np.zeros(N, dtype=np.bool_)
        mask[info] = True
        object.__setattr__(self, "info_set", np.sort(info))
        object.__setattr__(self, "frozen_values", frozen)
        object.__setattr__(self, "info_mask", mask)

    @property
    def N(self):
        return 1 << self.n

    @property
    def rate(self):
        return self.K / self.N

    @property
    def crc_width(self):
        return 0 if self.crc is None else self.crc.width

    @property
    def payload_length(self):
        return self.K - self.crc_width

    @property
    def frozen_set(self):
        return np.flatnonzero(~self.info_mask)

    def frozen_word(self):
        """Length-N array holding frozen values at frozen indices, 0 elsewhere."""
        u = np.zeros(self.N, dtype=np.uint8)
        u[~self.info_mask] = self.frozen_values
        return u

    def to_json(self):
        return {
            "n": self.n,
            "K": self.K,
            "info_set": [int(i) + 1 for i in self.info_set],
            "frozen_values": bits_to_hex(self.frozen_values),
            "crc": None if self.crc is None else self.crc.to_json(),
            "construction": {"kind": self.construction_kind,
                             "design_param": self.design_param},
        }

    @classmethod
    def from_json(cls, doc):
        N = 1 << int(doc["n"])
        K = int(doc["K"])
        cons = doc.get("construction") or {}
        return cls(
            n=int(doc["n"]),
            K=K,
            info_set=np.array(doc["info_set"], dtype=np.int64) - 1,
            frozen_values=hex_to_bits(doc["frozen_values"], N - K),
            crc=None if doc.get("crc") is None else CRCDef.from_json(doc["crc"]),
            construction_kind=cons.get("kind", ""),
            design_param=float(cons.get("design_param", float("nan"))),
        )

    def digest(self):
        """Short stable hash of the canonical JSON form."""
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def bits_to_hex(bits):
    """Pack bits MSB-first into hex, zero-padding the tail to whole nibbles."""
    bits = [int(b) & 1 for b in bits]
    if not bits:
        return ""
    bits += [0] * (-len(bits) % 4)
    return "".join(f"{int(''.join(map(str, bits[i:i + 4])), 2):x}" for i in range(0, len(bits), 4))


def hex_to_bits(text, length):
    bits = []
    for ch in text:
        v = int(ch, 16)
        bits.extend((v >> s) & 1 for s in (3, 2, 1, 0))
    if len(bits) < length:
        raise ConfigurationError("hex string too short for requested bit length")
    return np.array(bits[:length], dtype=np.uint8)


def _check_n(n):
    if not 0 <= n <= MAX_N_EXP:
        raise ConfigurationError(f"n must be in [0, {MAX_N_EXP}], got {n}")


def evaluate_reliability_bec(n, epsilon):
    """Bhattacharyya parameters of the polarized BECs, natural index order."""
    _check_n(n)
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError("epsilon must lie in [0, 1]")
    z = np.array([float(epsilon)])
    for _ in range(n):
        nxt = np.empty(2 * len(z))
        nxt[0::2] = 2.0 * z - z * z
        nxt[1::2] = z * z
        z = nxt
    return ReliabilityProfile(n, z, ReliabilityKind.BHATTACHARYYA_BEC, float(epsilon))


# Two-piece approximation of the GA phi function.
_PHI_A, _PHI_B, _PHI_C = 0.4527, 0.86, 0.0218


def log_phi(x):
    if x <= 0.0:
        return 0.0
    if x <= 10.0:
        return -_PHI_A * x ** _PHI_B + _PHI_C
    return 0.5 * math.log(math.pi / x) - x / 4.0 + math.log1p(-10.0 / (7.0 * x))


def phi(x):
    return math.exp(log_phi(x))


def phi_inverse_log(log_target, hi, rtol=1e-10):
    """Solve log_phi(x) = log_target for x in [0, hi] by bisection.

    Works on log values so that targets far below the double-precision
    range (very reliable channels) stay representable.
    """
    if hi <= 0.0 or log_target >= 0.0:
        return 0.0
    if log_phi(hi) >= log_target:
        return hi
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if log_phi(mid) > log_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ga_minus(m):
    """Mean LLR of the check-node ("minus") combination of two mean-m channels."""
    if m <= 0.0:
        return 0.0
    lp = log_phi(m)
    p = math.exp(lp)
    # 1 - (1 - p)^2 = p (2 - p), evaluated in log form
    target = lp + math.log(2.0 - p)
    return phi_inverse_log(min(target, 0.0), m)


def evaluate_reliability_ga(n, code_rate, design_ebn0_db):
    """Mean LLRs of the polarized channels under the Gaussian approximation."""
    _check_n(n)
    if not 0.0 < code_rate < 1.0:
        raise ConfigurationError("code_rate must lie in (0, 1)")
    sigma2 = 1.0 / (2.0 * code_rate * 10.0 ** (design_ebn0_db / 10.0))
    m = [2.0 / sigma2]
    for _ in range(n):
        nxt = []
        for v in m:
            nxt.append(ga_minus(v))
            nxt.append(2.0 * v)
        m = nxt
    return ReliabilityProfile(n, np.array(m), ReliabilityKind.GA_MEAN_LLR, float(design_ebn0_db))


def select_information_set(profile, K, crc_width=0, frozen_values=None, crc_def=None):
    """Build a CodeSpec from the ``K`` most reliable indices of ``profile``.

    ``K`` counts CRC bits; the payload is ``K - crc_width`` bits long.
    """
    N = 1 << profile.n
    if not 1 <= K <= N:
        raise ConfigurationError(f"K must be in [1, {N}], got {K}")
    if crc_def is not None and crc_width == 0:
        crc_width = crc_def.width
    if crc_def is not None and crc_width != crc_def.width:
        raise ConfigurationError("crc_width disagrees with crc_def")
    if crc_width and crc_width >= K:
        raise ConfigurationError("CRC width must be smaller than K")
    info = np.sort(profile.order()[:K])
    if frozen_values is None:
        frozen_values = np.zeros(N - K, dtype=np.uint8)
    return CodeSpec(
        n=profile.n, K=K, info_set=info, frozen_values=np.asarray(frozen_values, dtype=np.uint8),
        crc=crc_def, construction_kind=profile.kind.value, design_param=profile.design_param,
    )


def construct(n, K, *, design_ebn0_db=1.5, crc=CRC16_CCITT_FALSE, method="ga", epsilon=0.5):
    """Convenience wrapper: GA (or BEC) profile plus information-set selection."""
    if method == "ga":
        profile = evaluate_reliability_ga(n, K / (1 << n), design_ebn0_db)
    elif method == "bec":
        profile = evaluate_reliability_bec(n, epsilon)
    else:
        raise ConfigurationError(f"unknown construction method {method!r}")
    return select_information_set(profile, K, crc_def=crc), profile


def profile_for(spec):
    """Recompute the reliability profile recorded in a CodeSpec's construction field."""
    if spec.construction_kind == ReliabilityKind.GA_MEAN_LLR.value:
        return evaluate_reliability_ga(spec.n, spec.rate, spec.design_param)
    if spec.construction_kind == ReliabilityKind.BHATTACHARYYA_BEC.value:
        return evaluate_reliability_bec(spec.n, spec.design_param)
    raise ConfigurationError("CodeSpec carries no recognised construction")
