"""Polar encoding, CRC attach/verify and source-word scatter/gather."""
import numpy as np
from numba import njit

from .errors import ConfigurationError


def _log2_exact(N):
    n = int(N).bit_length() - 1
    if N < 1 or (1 << n) != N:
        raise ConfigurationError(f"length {N} is not a power of two")
    return n


def bit_reversal_permutation(n):
    idx = np.arange(1 << n)
    rev = np.zeros_like(idx)
    for b in range(n):
        rev |= ((idx >> b) & 1) << (n - 1 - b)
    return rev


def polar_encode(u):
    """Encode ``u`` with x = (enc(u_odd ^ u_even), enc(u_even)).

    Works on the last axis, so a batch of source words may be passed as a
    2-D array.  The map is its own inverse.
    """
    u = np.asarray(u, dtype=np.uint8)
    N = u.shape[-1]
    n = _log2_exact(N)
    x = u.copy()
    lead = x.shape[:-1]
    for s in range(n):
        view = x.reshape(lead + (N >> (s + 1), 2, 1 << s))
        view[..., 0, :] ^= view[..., 1, :]
    return x[..., bit_reversal_permutation(n)]


@njit(cache=True)
def encode_inplace(x):
    """Same transform as :func:`polar_encode` for one word, jitted."""
    N = x.shape[0]
    half = 1
    while half < N:
        for start in range(0, N, 2 * half):
            for k in range(start, start + half):
                x[k] ^= x[k + half]
        half *= 2
    # bit reversal
    n = 0
    while (1 << n) < N:
        n += 1
    for i in range(N):
        r = 0
        v = i
        for _ in range(n):
            r = (r << 1) | (v & 1)
            v >>= 1
        if r > i:
            t = x[i]
            x[i] = x[r]
            x[r] = t


@njit(cache=True)
def crc_register(bits, poly, width, init, xor_out):
    """Bitwise MSB-first CRC of a 0/1 array, no reflection."""
    top = 1 << (width - 1)
    mask = (1 << width) - 1
    reg = init
    for b in bits:
        fb = ((reg & top) != 0) ^ (b != 0)
        reg = (reg << 1) & mask
        if fb:
            reg ^= poly
    return reg ^ xor_out


def crc_value(bits, crc_def):
    return int(crc_register(np.asarray(bits, dtype=np.uint8), crc_def.poly, crc_def.width,
                            crc_def.init, crc_def.xor_out))


def int_to_bits(value, width):
    return np.array([(value >> (width - 1 - k)) & 1 for k in range(width)], dtype=np.uint8)


def crc_append(payload, crc_def):
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.size == 0:
        raise ConfigurationError("payload must be non-empty")
    return np.concatenate([payload, int_to_bits(crc_value(payload, crc_def), crc_def.width)])


@njit(cache=True)
def _crc_ok(bits, poly, width, init, xor_out):
    k = bits.shape[0] - width
    reg = crc_register(bits[:k], poly, width, init, xor_out)
    for j in range(width):
        if ((reg >> (width - 1 - j)) & 1) != bits[k + j]:
            return False
    return True


def crc_verify(bits, crc_def):
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size <= crc_def.width:
        raise ConfigurationError("bit sequence must be longer than the CRC")
    return bool(_crc_ok(bits, crc_def.poly, crc_def.width, crc_def.init, crc_def.xor_out))


def assemble_source(spec, info_bits):
    """Scatter ``K`` information bits (payload then CRC) onto the information set."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape[-1] != spec.K:
        raise ConfigurationError(f"expected {spec.K} information bits, got {info_bits.shape[-1]}")
    u = np.broadcast_to(spec.frozen_word(), info_bits.shape[:-1] + (spec.N,)).copy()
    u[..., spec.info_set] = info_bits
    return u


def extract_info(spec, u_hat):
    u_hat = np.asarray(u_hat, dtype=np.uint8)
    if u_hat.shape[-1] != spec.N:
        raise ConfigurationError(f"expected a length-{spec.N} source word")
    return u_hat[..., spec.info_set]


def make_info_bits(spec, payload):
    """Payload plus CRC (if the code carries one) as the ``K`` information bits."""
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape[-1] != spec.payload_length:
        raise ConfigurationError(f"payload must have {spec.payload_length} bits")
    return payload if spec.crc is None else crc_append(payload, spec.crc)
