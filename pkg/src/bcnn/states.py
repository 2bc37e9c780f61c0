"""Two-qubit state families, PPT labelling and datasets."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .linalg import (
    HERMITIAN_TOL,
    hermiticity_error,
    jacobi_eigenvalues,
    partial_transpose_batch,
)

TRACE_TOL = 1e-9
PSD_TOL = 1e-9
DEGENERATE_TRACE = 1e-12

BELL = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


class StateFamily(str, enum.Enum):
    WERNER = "Werner"
    G1_WERNER = "G1Werner"
    G2_WERNER = "G2Werner"
    GENERAL = "General"

    @classmethod
    def parse(cls, name: str) -> "StateFamily":
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "werner": cls.WERNER,
            "g1werner": cls.G1_WERNER,
            "g1": cls.G1_WERNER,
            "giwerner": cls.G1_WERNER,
            "g2werner": cls.G2_WERNER,
            "g2": cls.G2_WERNER,
            "giiwerner": cls.G2_WERNER,
            "general": cls.GENERAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown state family {name!r}") from None


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    family: StateFamily
    p: float | None
    theta: float | None
    phi: float | None
    lambda_min: float
    entangled: bool


def validate_density(rho: np.ndarray) -> None:
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 density matrix, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateError("density matrix has non-finite entries")
    if hermiticity_error(rho) > HERMITIAN_TOL:
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"density matrix trace is {tr}, not 1")
    if jacobi_eigenvalues(rho[None])[0, 0] < -PSD_TOL:
        raise InvalidStateError("density matrix has a negative eigenvalue")


def ppt_min_eigenvalues(rhos: np.ndarray) -> np.ndarray:
    """Minimum eigenvalue of the partial transpose (on qubit B) of each state in a stack."""
    pt = partial_transpose_batch(np.asarray(rhos, dtype=complex), site=1)
    pt = 0.5 * (pt + np.swapaxes(pt, 1, 2).conj())
    return jacobi_eigenvalues(pt)[:, 0]


def label_ppt(rho: np.ndarray) -> tuple[float, bool]:
    """Return ``(lambda_min, entangled)`` for a two-qubit density matrix.

    ``lambda_min >= 0`` counts as separable.
    """
    rho = np.asarray(rho, dtype=complex)
    validate_density(rho)
    lam = float(ppt_min_eigenvalues(rho[None])[0])
    return lam, lam < 0.0


def analytic_label(family: StateFamily, p: float, theta: float | None = None) -> bool:
    family = StateFamily(family)
    if family is StateFamily.GENERAL:
        raise ValueError("no closed-form entanglement threshold for general states")
    if family is StateFamily.G2_WERNER:
        if theta is None:
            raise ValueError("G2Werner threshold needs theta")
        return p > 1.0 / (1.0 + 2.0 * math.sin(theta))
    return p > 1.0 / 3.0


def _check_open(name: str, value: float, lo: float, hi: float) -> None:
    if not lo < value < hi:
        raise ValueError(f"{name}={value} outside the open interval ({lo}, {hi})")


# -- matrix constructors; these take arrays so datasets build in one shot --


def werner_matrices(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)[:, None, None]
    bell = np.outer(BELL, BELL.conj())
    return p * bell + (1.0 - p) * np.eye(4) / 4.0


def g1_werner_matrices(p: np.ndarray, theta: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    psi = np.zeros((len(p), 4), dtype=complex)
    psi[:, 0] = c
    psi[:, 3] = s
    pure = psi[:, :, None] * psi[:, None, :].conj()
    # (I_A / 2) (x) diag(c^2, s^2)
    mixed = np.zeros((len(p), 4, 4), dtype=complex)
    diag = np.stack([c * c, s * s, c * c, s * s], axis=1) / 2.0
    mixed[:, range(4), range(4)] = diag
    pp = p[:, None, None]
    return pp * pure + (1.0 - pp) * mixed


def g2_werner_matrices(p: np.ndarray, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    psi = np.zeros((len(p), 4), dtype=complex)
    psi[:, 0] = np.cos(theta / 2.0)
    psi[:, 3] = np.exp(1j * phi) * np.sin(theta / 2.0)
    pure = psi[:, :, None] * psi[:, None, :].conj()
    pp = p[:, None, None]
    return pp * pure + (1.0 - pp) * np.eye(4) / 4.0


def general_matrix(rng: np.random.Generator) -> np.ndarray:
    """``sigma sigma^H / tr(sigma sigma^H)`` with Ginibre ``sigma``."""
    while True:
        sigma = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        rho = sigma @ sigma.conj().T
        tr = np.trace(rho).real
        if tr > DEGENERATE_TRACE:
            rho = rho / tr
            return 0.5 * (rho + rho.conj().T)


def _make_state(matrix, family, p=None, theta=None, phi=None) -> DensityMatrix:
    lam, ent = label_ppt(matrix)
    return DensityMatrix(matrix, family, p, theta, phi, lam, ent)


def gen_werner(p: float) -> DensityMatrix:
    _check_open("p", p, 0.0, 1.0)
    return _make_state(werner_matrices([p])[0], StateFamily.WERNER, p=p)


def gen_g1_werner(p: float, theta: float) -> DensityMatrix:
    _check_open("p", p, 0.0, 1.0)
    _check_open("theta", theta, 0.0, 2.0 * math.pi)
    return _make_state(g1_werner_matrices([p], [theta])[0], StateFamily.G1_WERNER, p=p, theta=theta)


def gen_g2_werner(p: float, theta: float, phi: float) -> DensityMatrix:
    _check_open("p", p, 0.0, 1.0)
    _check_open("theta", theta, 0.0, math.pi)
    _check_open("phi", phi, 0.0, 2.0 * math.pi)
    return _make_state(
        g2_werner_matrices([p], [theta], [phi])[0], StateFamily.G2_WERNER, p=p, theta=theta, phi=phi
    )


def gen_general(rng: np.random.Generator) -> DensityMatrix:
    return _make_state(general_matrix(rng), StateFamily.GENERAL)


# -- datasets --


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for record ``index`` of a dataset drawn with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _open_uniform(rng: np.random.Generator, hi: float) -> float:
    while True:
        x = rng.uniform(0.0, hi)
        if x > 0.0:
            return x


@dataclass
class Dataset:
    """Column-oriented store of labelled states.

    Absent parameters are stored as NaN. Iterating or indexing yields
    ``DensityMatrix`` records.
    """

    family: StateFamily
    seed: int
    split: str
    matrices: np.ndarray  # (n, 4, 4) complex
    p: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    lambda_min: np.ndarray
    labels: np.ndarray  # 1 = entangled

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> DensityMatrix:
        def opt(x):
            return None if math.isnan(x) else float(x)

        return DensityMatrix(
            self.matrices[i],
            self.family,
            opt(self.p[i]),
            opt(self.theta[i]),
            opt(self.phi[i]),
            float(self.lambda_min[i]),
            bool(self.labels[i]),
        )

    def __iter__(self) -> Iterator[DensityMatrix]:
        for i in range(len(self)):
            yield self[i]

    @property
    def records(self) -> list[DensityMatrix]:
        return list(self)

    def subset(self, index) -> "Dataset":
        return Dataset(
            self.family,
            self.seed,
            self.split,
            self.matrices[index],
            self.p[index],
            self.theta[index],
            self.phi[index],
            self.lambda_min[index],
            self.labels[index],
        )

    def with_labels(self, labels) -> "Dataset":
        out = self.subset(slice(None))
        out.labels = np.asarray(labels, dtype=np.int8).copy()
        return out

    def validate(self) -> None:
        m = self.matrices
        if hermiticity_error(m) > HERMITIAN_TOL:
            raise InvalidStateError("dataset contains a non-Hermitian matrix")
        tr = np.einsum("nii->n", m)
        if np.max(np.abs(tr - 1.0), initial=0.0) > TRACE_TOL:
            raise InvalidStateError("dataset contains a matrix without unit trace")
        if len(m) and np.min(jacobi_eigenvalues(0.5 * (m + np.swapaxes(m, 1, 2).conj()))[:, 0]) < -PSD_TOL:
            raise InvalidStateError("dataset contains a matrix with a negative eigenvalue")


def _labelled(family, seed, split, matrices, p, theta, phi) -> Dataset:
    lam = ppt_min_eigenvalues(matrices)
    n = len(matrices)
    nan = np.full(n, np.nan)
    ds = Dataset(
        family=family,
        seed=seed,
        split=split,
        matrices=matrices,
        p=nan.copy() if p is None else np.asarray(p, dtype=float),
        theta=nan.copy() if theta is None else np.asarray(theta, dtype=float),
        phi=nan.copy() if phi is None else np.asarray(phi, dtype=float),
        lambda_min=lam,
        labels=(lam < 0.0).astype(np.int8),
    )
    ds.validate()
    return ds


def sample_dataset(
    family: StateFamily | str,
    size: int,
    seed: int,
    balance: bool = False,
    split: str = "train",
) -> Dataset:
    """Draw ``size`` labelled states of one family.

    Record ``i`` uses its own generator seeded by ``(seed, i)``. Parametric
    families draw their parameters uniformly over the open ranges. With
    ``balance`` (general family only) candidates are accepted in index order
    until there are ``size // 2`` entangled and ``size - size // 2``
    separable states.
    """
    family = StateFamily.parse(family) if isinstance(family, str) else StateFamily(family)
    if size < 1:
        raise ValueError("size must be >= 1")
    two_pi = 2.0 * math.pi

    if family is StateFamily.GENERAL:
        if not balance:
            mats = np.array([general_matrix(record_rng(seed, i)) for i in range(size)])
            return _labelled(family, seed, split, mats, None, None, None)
        want_ent, want_sep = size // 2, size - size // 2
        kept: list[np.ndarray] = []
        n_ent = n_sep = 0
        start = 0
        chunk = max(64, size)
        while n_ent < want_ent or n_sep < want_sep:
            mats = np.array([general_matrix(record_rng(seed, i)) for i in range(start, start + chunk)])
            ent = ppt_min_eigenvalues(mats) < 0.0
            for m, e in zip(mats, ent):
                if e and n_ent < want_ent:
                    kept.append(m)
                    n_ent += 1
                elif not e and n_sep < want_sep:
                    kept.append(m)
                    n_sep += 1
            start += chunk
        return _labelled(family, seed, split, np.array(kept), None, None, None)

    rngs = [record_rng(seed, i) for i in range(size)]
    p = np.array([_open_uniform(r, 1.0) for r in rngs])
    if family is StateFamily.WERNER:
        return _labelled(family, seed, split, werner_matrices(p), p, None, None)
    if family is StateFamily.G1_WERNER:
        theta = np.array([_open_uniform(r, two_pi) for r in rngs])
        return _labelled(family, seed, split, g1_werner_matrices(p, theta), p, theta, None)
    theta = np.array([_open_uniform(r, math.pi) for r in rngs])
    phi = np.array([_open_uniform(r, two_pi) for r in rngs])
    return _labelled(family, seed, split, g2_werner_matrices(p, theta, phi), p, theta, phi)


# -- persistence --

DATASET_MAGIC = "# bcnn-dataset v1"
_COLUMNS = ["family", "p", "theta", "phi", "lambda_min", "label"] + [
    f"{part}{i}{j}" for i in range(4) for j in range(4) for part in ("re", "im")
]


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else format(float(x), ".17g")


def write_dataset(ds: Dataset, path: str | Path) -> None:
    """CSV, one record per line: family, p, theta, phi, lambda_min, label, then the
    4x4 matrix row-major with real and imaginary parts interleaved."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"{DATASET_MAGIC} family={ds.family.value} seed={ds.seed} split={ds.split} size={len(ds)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_COLUMNS)
        flat = ds.matrices.reshape(len(ds), 16)
        inter = np.empty((len(ds), 32))
        inter[:, 0::2] = flat.real
        inter[:, 1::2] = flat.imag
        for i in range(len(ds)):
            w.writerow(
                [ds.family.value, _fmt(ds.p[i]), _fmt(ds.theta[i]), _fmt(ds.phi[i]),
                 _fmt(ds.lambda_min[i]), str(int(ds.labels[i]))]
                + [_fmt(v) for v in inter[i]]
            )


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith(DATASET_MAGIC):
            raise ValueError(f"{path}: not a dataset file")
        meta = dict(kv.split("=", 1) for kv in first[len(DATASET_MAGIC):].split())
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _COLUMNS:
        raise ValueError(f"{path}: unexpected column header")
    rows = rows[1:]
    n = len(rows)

    def col(k):
        return np.array([float(r[k]) if r[k] else np.nan for r in rows])

    vals = np.array([[float(v) for v in r[6:]] for r in rows]).reshape(n, 32)
    mats = (vals[:, 0::2] + 1j * vals[:, 1::2]).reshape(n, 4, 4)
    family = StateFamily(meta["family"])
    if any(r[0] != family.value for r in rows):
        raise ValueError(f"{path}: mixed families are not supported")
    return Dataset(
        family=family,
        seed=int(meta["seed"]),
        split=meta["split"],
        matrices=mats,
        p=col(1),
        theta=col(2),
        phi=col(3),
        lambda_min=col(4),
        labels=np.array([int(r[5]) for r in rows], dtype=np.int8),
    )
