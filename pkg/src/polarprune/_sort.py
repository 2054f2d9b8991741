"""Stable argsort for the jitted kernels.

numba's own mergesort passes arrays between helpers inside its loops, and the
resulting reference counting dominated the list decoder's run time.
"""
from numba import njit


@njit(cache=True)
def stable_argsort(keys, n, out, tmp):
    """Write into out[:n] the ascending stable order of keys[:n]."""
    for i in range(n):
        out[i] = i
    if n < 2:
        return
    # short runs by insertion, then bottom-up merging
    run = 16
    for lo in range(0, n, run):
        hi = min(lo + run, n)
        for i in range(lo + 1, hi):
            v = out[i]
            kv = keys[v]
            j = i - 1
            while j >= lo and keys[out[j]] > kv:
                out[j + 1] = out[j]
                j -= 1
            out[j + 1] = v
    width = run
    src_is_out = True
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i = lo
            j = mid
            k = lo
            if src_is_out:
                while i < mid and j < hi:
                    if keys[out[j]] < keys[out[i]]:
                        tmp[k] = out[j]
                        j += 1
                    else:
                        tmp[k] = out[i]
                        i += 1
                    k += 1
                while i < mid:
                    tmp[k] = out[i]
                    i += 1
                    k += 1
                while j < hi:
                    tmp[k] = out[j]
                    j += 1
                    k += 1
            else:
                while i < mid and j < hi:
                    if keys[tmp[j]] < keys[tmp[i]]:
                        out[k] = tmp[j]
                        j += 1
                    else:
                        out[k] = tmp[i]
                        i += 1
                    k += 1
                while i < mid:
                    out[k] = tmp[i]
                    i += 1
                    k += 1
                while j < hi:
                    out[k] = tmp[j]
                    j += 1
                    k += 1
        src_is_out = not src_is_out
        width *= 2
    if not src_is_out:
        for i in range(n):
            out[i] = tmp[i]
