"""Linear-dispersion codebooks for distributed space-time coding.

Relay i applies a fixed unitary T x T matrix A_i to its received block,
so the destination sees the codeword matrix S(s) = [A_1 s, ..., A_M s]
for the BPSK source vector s. This construction needs exactly M = T
dispersion matrices. The diversity-governing constant of a codebook is

    lambda_min = min_{k != l} eigmin((S_k - S_l)^H (S_k - S_l)),

the worst-case pairwise Gram eigenvalue over all 2^T (2^T - 1) / 2
codeword pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import STREAM_CODEBOOK, derive_rng

# Exhaustive ML decoding scans all 2^T codewords; past this block length
# the enumeration (and the pairwise lambda_min scan) is intractable.
MAX_BLOCK = 12

_UNITARY_TOL = 1e-10
_REGEN_ATTEMPTS = 8


def codeword_signs(T: int) -> np.ndarray:
    """All 2^T BPSK vectors, row k holding the signs for codeword index k.

    Bit t of k (most significant first) maps to symbol 1 - 2*bit, so
    index 0 is the all-plus-one vector and the enumeration is
    lexicographic in the symbol sequence.
    """
    if not 1 <= T <= MAX_BLOCK:
        raise ValueError(f"T must be in [1, {MAX_BLOCK}]")
    k = np.arange(2**T)[:, None]
    bits = (k >> np.arange(T - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype(np.float64)


def _difference_patterns(T: int) -> np.ndarray:
    """Nonzero rows of {-1,0,1}^T with positive leading entry.

    Every codeword difference s_k - s_l equals 2e for one such e (up to
    global sign, which leaves the Gram matrix unchanged), so scanning
    these (3^T - 1)/2 patterns covers all codeword pairs exactly.
    """
    grids = np.stack(np.meshgrid(*([[-1, 0, 1]] * T), indexing="ij"), axis=-1)
    e = grids.reshape(-1, T)
    nonzero = np.any(e != 0, axis=1)
    e = e[nonzero]
    first = np.argmax(e != 0, axis=1)
    return e[e[np.arange(e.shape[0]), first] > 0]


def min_pairwise_eigenvalue(matrices: np.ndarray) -> float:
    """lambda_min of the codebook built from the given dispersion stack."""
    m, t, t2 = matrices.shape
    if t != t2 or m != t:
        raise ValueError("dispersion stack must have shape (T, T, T)")
    d = 2.0 * _difference_patterns(t).astype(np.float64)
    smallest = np.inf
    chunk = 8192
    for lo in range(0, d.shape[0], chunk):
        dc = d[lo:lo + chunk]
        # w[i, :, k] = A_i d_k; Gram G_k[i, j] = (A_i d_k)^H (A_j d_k)
        w = matrices @ dc.T.astype(np.complex128)
        gram = np.einsum("itk,jtk->kij", w.conj(), w)
        eigs = np.linalg.eigvalsh(gram)
        smallest = min(smallest, float(eigs[:, 0].min()))
    return smallest


@dataclass(frozen=True)
class LdCodebook:
    """Unitary dispersion stack with its cached worst-pair eigenvalue."""

    matrices: np.ndarray
    lambda_min: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.matrices, dtype=np.complex128).copy()
        if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[0] != a.shape[1]:
            raise ValueError("matrices must be a stack of shape (T, T, T)")
        t = a.shape[1]
        if t > MAX_BLOCK:
            raise ValueError(f"block length {t} exceeds the supported maximum {MAX_BLOCK}")
        eye = np.eye(t)
        for i, mat in enumerate(a):
            if np.max(np.abs(mat.conj().T @ mat - eye)) > _UNITARY_TOL:
                raise ValueError(f"dispersion matrix {i} is not unitary")
        a.setflags(write=False)
        object.__setattr__(self, "matrices", a)
        object.__setattr__(self, "lambda_min", min_pairwise_eigenvalue(a))

    @property
    def T(self) -> int:
        return self.matrices.shape[1]

    @property
    def M(self) -> int:
        return self.matrices.shape[0]

    @property
    def n_codewords(self) -> int:
        return 2**self.T

    def eta(self, p_s: float, N0: float) -> float:
        """Chernoff exponent scale lambda_min * p_s / (4 N0)."""
        return self.lambda_min * p_s / (4.0 * N0)


def generate_codebook(T: int, seed: int) -> LdCodebook:
    """Draw T Haar-random unitary dispersion matrices.

    Each matrix is the Q factor of a complex Gaussian sample with the R
    diagonal's phases divided out, which makes the distribution exactly
    Haar. A rank-deficient codebook (measure zero) is redrawn from a
    fresh derived stream.
    """
    if not 1 <= T <= MAX_BLOCK:
        raise ValueError(f"T must be in [1, {MAX_BLOCK}]")
    for attempt in range(_REGEN_ATTEMPTS):
        rng = derive_rng(seed, STREAM_CODEBOOK, attempt)
        mats = np.empty((T, T, T), dtype=np.complex128)
        for i in range(T):
            z = (rng.standard_normal((T, T)) + 1j * rng.standard_normal((T, T))) / np.sqrt(2.0)
            q, r = np.linalg.qr(z)
            phases = np.diagonal(r) / np.abs(np.diagonal(r))
            mats[i] = q * phases
        code = LdCodebook(matrices=mats)
        if code.lambda_min > 1e-9:
            return code
    raise RuntimeError("failed to draw a full-diversity codebook")


def save_codebook(path, code: LdCodebook) -> None:
    """Write the dispersion stack as plain text for exact replay.

    First line is "T"; each matrix follows as T rows of interleaved
    real/imaginary pairs with 17 significant digits, which round-trips
    IEEE doubles exactly. lambda_min is recomputed on load, never stored.
    """
    lines = [str(code.T)]
    for mat in code.matrices:
        for row in mat:
            parts = []
            for z in row:
                parts.append(f"{z.real:.17g}")
                parts.append(f"{z.imag:.17g}")
            lines.append(" ".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_codebook(path) -> LdCodebook:
    """Inverse of save_codebook; validates shape and unitarity."""
    with open(path) as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    try:
        t = int(lines[0])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed codebook header") from exc
    expected = 1 + t * t
    if len(lines) != expected:
        raise ValueError(f"{path}: expected {expected} lines, found {len(lines)}")
    mats = np.empty((t, t, t), dtype=np.complex128)
    for i in range(t):
        for row in range(t):
            vals = np.array([float(x) for x in lines[1 + i * t + row].split()])
            if vals.shape[0] != 2 * t:
                raise ValueError(f"{path}: matrix {i} row {row} has wrong width")
            mats[i, row] = vals[0::2] + 1j * vals[1::2]
    return LdCodebook(matrices=mats)
