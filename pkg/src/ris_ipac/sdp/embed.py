"""Complex Hermitian <-> real symmetric embedding."""
import numpy as np

from ..errors import InvalidArgumentError


def hermitian_embed(H, tol=1e-12):
    """Real symmetric ``[[Re H, -Im H], [Im H, Re H]]`` of a Hermitian ``H``.

    The embedding is PSD iff ``H`` is, every eigenvalue of ``H`` appears
    twice, and ``Re tr(H W) = tr(embed(H) embed(W)) / 2``.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidArgumentError("hermitian_embed needs a square matrix")
    scale = max(1.0, float(np.abs(H).max())) if H.size else 1.0
    if H.size and np.abs(H - H.conj().T).max() > tol * scale:
        raise InvalidArgumentError("matrix is not Hermitian")
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def hermitian_unembed(X):
    """Hermitian matrix recovered from any real symmetric ``2d x 2d`` matrix.

    Averages the two diagonal blocks and the two off-diagonal blocks, so a
    PSD ``X`` maps to a PSD result and structured inputs round-trip.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[-1] // 2
    a = 0.5 * (X[..., :d, :d] + X[..., d:, d:])
    b = 0.5 * (X[..., d:, :d] - X[..., :d, d:])
    return a + 1j * b


def real_functional(H):
    """Coefficient matrix ``embed(H) / 2`` so ``<C, X> = Re tr(H W)``."""
    return 0.5 * hermitian_embed(0.5 * (H + np.conj(H).T))
