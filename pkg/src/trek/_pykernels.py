"""Pure-NumPy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and buffer conventions; used when the extension is not
built or when ``TREK_PURE_PYTHON`` is set.
"""

import numpy as np


def khatri_apply(K, b, offsets, boffsets, eta, out, scratch, symmetrize):
    """out_i = eta * b_i + sum_{i'} K_{ii'} b_{i'} K_{ii'}^T for every block i."""
    n = len(offsets) - 1
    R = int(offsets[n])
    if b.shape[0] != boffsets[n] or out.shape[0] != boffsets[n]:
        raise ValueError("buffer length does not match the layout")
    if K.shape != (R, R):
        raise ValueError("Gram matrix does not match the layout")
    for i in range(n):
        lo, hi = offsets[i], offsets[i + 1]
        ri = hi - lo
        if scratch.shape[0] < ri * R:
            raise ValueError("scratch buffer too small")
        rows = K[lo:hi]
        # r_i x R slab holding K_{ii'} B_{i'} side by side
        slab = scratch[: ri * R].reshape((ri, R), order="F")
        for ip in range(n):
            plo, phi = offsets[ip], offsets[ip + 1]
            rip = phi - plo
            bblk = b[boffsets[ip]: boffsets[ip + 1]].reshape((rip, rip), order="F")
            np.matmul(rows[:, plo:phi], bblk, out=slab[:, plo:phi])
        oblk = out[boffsets[i]: boffsets[i + 1]].reshape((ri, ri), order="F")
        ob = b[boffsets[i]: boffsets[i + 1]].reshape((ri, ri), order="F")
        np.matmul(slab, rows.T, out=oblk)
        oblk += eta * ob
        if symmetrize:
            oblk += oblk.T
            oblk *= 0.5


def zero_diagonals(data, diag_index):
    """Set the listed flat positions (block diagonals) to zero in place."""
    data[diag_index] = 0.0
