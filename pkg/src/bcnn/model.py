"""Branching convolutional network over two-qubit density matrices.

A convolution with stride equal to the kernel size, applied to a density
matrix with the transpose of an observable as kernel, returns the partial
expectation of that observable. Two stacked layers therefore compute
``<M1 (x) M2>`` exactly. Kernels are stored as real Pauli coefficients
``(cx, cy, cz, ci)`` so they are Hermitian by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import HERMITIAN_TOL, PAULI_BASIS, as_matrix, hermiticity_error, kron, NotHermitianError

EPS_CLIP = 1e-12
IDENTITY_COEFFS = np.array([0.0, 0.0, 0.0, 1.0])
PAULI_NAMES = ("X", "Y", "Z", "I")


# -- kernels --


@dataclass
class PauliKernel:
    cx: float
    cy: float
    cz: float
    ci: float
    fixed_identity: bool = False

    @classmethod
    def identity(cls) -> "PauliKernel":
        return cls(0.0, 0.0, 0.0, 1.0, fixed_identity=True)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz, self.ci])


def kernel_to_matrix(k: PauliKernel | Sequence[float]) -> np.ndarray:
    c = k.coeffs if isinstance(k, PauliKernel) else np.asarray(k, dtype=float)
    return np.einsum("a,aij->ij", c, PAULI_BASIS)


def pauli_decompose(m) -> tuple[float, float, float, float]:
    """Coefficients ``tr(m sigma) / 2`` for sigma in (X, Y, Z, I)."""
    m = as_matrix(m)
    if m.shape != (2, 2):
        raise ValueError("pauli_decompose expects a 2x2 matrix")
    if hermiticity_error(m) > HERMITIAN_TOL:
        raise NotHermitianError("cannot decompose a non-Hermitian matrix into real Pauli coefficients")
    c = np.einsum("ij,aji->a", m, PAULI_BASIS).real / 2.0
    return tuple(float(x) for x in c)


# -- convolution as partial expectation --


def conv_layer(inp, kernel, kernel_dim: int | None = None) -> np.ndarray:
    """Non-overlapping convolution: stride equals the kernel size.

    ``out[i, j] = sum_{a,b} inp[i*k + a, j*k + b] * kernel[a, b]``. With
    ``kernel = M.T`` this is ``tr_last(inp @ (I (x) M))``.
    """
    inp = as_matrix(inp)
    kernel = as_matrix(kernel)
    k = kernel.shape[0] if kernel_dim is None else kernel_dim
    if kernel.shape != (k, k):
        raise ValueError(f"kernel shape {kernel.shape} does not match kernel_dim {k}")
    d = inp.shape[0]
    if d % k:
        raise ValueError(f"input dimension {d} is not divisible by kernel dimension {k}")
    n = d // k
    return np.einsum("iajb,ab->ij", inp.reshape(n, k, n, k), kernel)


def _real(z: complex, what: str) -> float:
    if abs(z.imag) > 1e-10:
        raise ValueError(f"{what} has imaginary part {z.imag:.3g}")
    return float(z.real)


def global_expectation(rho, m) -> float:
    rho = as_matrix(rho)
    m = as_matrix(m)
    if rho.shape != m.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {m.shape}")
    return _real(complex(np.einsum("ij,ji->", rho, m)), "expectation value")


def multi_site_expectation(rho, factors: Sequence[np.ndarray], dims: Sequence[int]) -> float:
    """``<M1 (x) ... (x) MN>`` by convolving with ``MN.T`` first and ``M1.T`` last."""
    rho = as_matrix(rho)
    if len(factors) != len(dims):
        raise ValueError("need one factor per subsystem")
    if int(np.prod(dims)) != rho.shape[0]:
        raise ValueError(f"dims {list(dims)} do not match state dimension {rho.shape[0]}")
    out = rho
    for f, d in zip(reversed(factors), reversed(dims)):
        f = as_matrix(f)
        if f.shape[0] != d:
            raise ValueError(f"factor of dimension {f.shape[0]} for a subsystem of dimension {d}")
        out = conv_layer(out, f.T, d)
    return _real(complex(out[0, 0]), "expectation value")


def kernel_gradient(o_prev, delta, dims: tuple[int, int]) -> np.ndarray:
    """Kernel gradient of a stride-``d_M`` convolution layer, complex-kernel form.

    ``o_prev`` (dimension ``d_O * d_M``) is the layer input and ``delta``
    (dimension ``d_O``) the error arriving at its output. The input's two
    factors are swapped, ``|i><j| (x) |k><l| -> |k><l| (x) |i><j|``, and the
    result is convolved with ``delta``. For Hermitian inputs the gradient is
    Hermitian; that is checked before returning.
    """
    o_prev = as_matrix(o_prev)
    delta = as_matrix(delta)
    d_o, d_m = dims
    if o_prev.shape[0] != d_o * d_m:
        raise ValueError(f"input dimension {o_prev.shape[0]} != {d_o} * {d_m}")
    if delta.shape[0] != d_o:
        raise ValueError(f"error dimension {delta.shape[0]} != {d_o}")
    swapped = o_prev.reshape(d_o, d_m, d_o, d_m).transpose(1, 0, 3, 2).reshape(d_o * d_m, d_o * d_m)
    grad = conv_layer(swapped, delta, d_o)
    err = hermiticity_error(grad)
    if err > 1e-10 * max(1.0, float(np.abs(grad).max(initial=0.0))):
        raise ArithmeticError(f"kernel gradient lost Hermiticity ({err:.3g})")
    return grad


# -- architecture and parameters --


@dataclass(frozen=True)
class Architecture:
    """``(m; n1, n2)`` convolutional paths followed by a fully connected head.

    ``fc_widths`` lists node-layer widths from ``alpha = m * n1 * n2`` down
    to 1. The input node layer is the raw path output (no bias, no
    activation); hidden node layers use bias + ReLU; the output node uses
    bias + sigmoid. ``linear_first_layer`` instead makes the first weight
    layer bias-free and activation-free.
    """

    m: int
    n1: int
    n2: int
    hidden: tuple[int, ...] = (1024,)
    fix_identity: bool = False
    linear_first_layer: bool = False

    def __post_init__(self):
        if min(self.m, self.n1, self.n2) < 1:
            raise ValueError("m, n1 and n2 must be positive")
        if self.fix_identity and (self.n1 < 2 or self.n2 < 2):
            raise ValueError("fixing an identity kernel needs at least two kernels per layer")
        if self.linear_first_layer and not self.hidden:
            raise ValueError("linear_first_layer needs at least one hidden layer")

    @property
    def alpha(self) -> int:
        return self.m * self.n1 * self.n2

    @property
    def fc_widths(self) -> tuple[int, ...]:
        return (self.alpha, *self.hidden, 1)

    def has_bias(self, layer: int) -> bool:
        return not (self.linear_first_layer and layer == 0)

    def activation(self, layer: int) -> str:
        n = len(self.fc_widths) - 1
        if layer == n - 1:
            return "sigmoid"
        if self.linear_first_layer and layer == 0:
            return "linear"
        return "relu"

    def describe(self) -> str:
        fc = ",".join(map(str, self.fc_widths))
        return (
            f"m={self.m} n1={self.n1} n2={self.n2} fc={fc} "
            f"fix_identity={int(self.fix_identity)} linear_first_layer={int(self.linear_first_layer)}"
        )

    @classmethod
    def parse(cls, text: str) -> "Architecture":
        kv = dict(item.split("=", 1) for item in text.split())
        fc = tuple(int(x) for x in kv["fc"].split(","))
        arch = cls(
            m=int(kv["m"]),
            n1=int(kv["n1"]),
            n2=int(kv["n2"]),
            hidden=fc[1:-1],
            fix_identity=bool(int(kv.get("fix_identity", "0"))),
            linear_first_layer=bool(int(kv.get("linear_first_layer", "0"))),
        )
        if arch.fc_widths != fc:
            raise ValueError(f"fc widths {fc} inconsistent with paths ({arch.alpha} features)")
        return arch


@dataclass
class ConvPath:
    layer1_kernels: list[PauliKernel]  # applied first, act on qubit B (M2)
    layer2_kernels: list[PauliKernel]  # applied second, act on qubit A (M1)


@dataclass
class ModelParams:
    """All trainable state.

    ``kernels1[path, i]`` are the layer-1 kernels (qubit B operators) and
    ``kernels2[path, j]`` the layer-2 kernels (qubit A operators), each a row
    of Pauli coefficients ``(cx, cy, cz, ci)``. ``weights[l]`` has shape
    ``(fan_in, fan_out)``; ``biases[l]`` is ``None`` for a bias-free layer.
    """

    arch: Architecture
    kernels1: np.ndarray
    kernels2: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray | None]
    family: str = ""

    def __post_init__(self):
        a = self.arch
        if self.kernels1.shape != (a.m, a.n1, 4) or self.kernels2.shape != (a.m, a.n2, 4):
            raise ValueError("kernel arrays do not match the architecture")
        widths = a.fc_widths
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise ValueError("wrong number of fully connected layers")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[l], widths[l + 1]):
                raise ValueError(f"weight {l} has shape {w.shape}, expected {(widths[l], widths[l + 1])}")
            if a.has_bias(l) != (b is not None) or (b is not None and b.shape != (widths[l + 1],)):
                raise ValueError(f"bias {l} inconsistent with the architecture")

    @property
    def fixed_mask1(self) -> np.ndarray:
        return _fixed_mask(self.arch.m, self.arch.n1, self.arch.fix_identity)

    @property
    def fixed_mask2(self) -> np.ndarray:
        return _fixed_mask(self.arch.m, self.arch.n2, self.arch.fix_identity)

    def path(self, k: int) -> ConvPath:
        f1, f2 = self.fixed_mask1[k], self.fixed_mask2[k]
        return ConvPath(
            [PauliKernel(*map(float, c), fixed_identity=bool(f)) for c, f in zip(self.kernels1[k], f1)],
            [PauliKernel(*map(float, c), fixed_identity=bool(f)) for c, f in zip(self.kernels2[k], f2)],
        )

    @property
    def paths(self) -> list[ConvPath]:
        return [self.path(k) for k in range(self.arch.m)]

    def arrays(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order (kernels, weights, present biases)."""
        return [self.kernels1, self.kernels2, *self.weights, *(b for b in self.biases if b is not None)]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            self.kernels1.copy(),
            self.kernels2.copy(),
            [w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
            self.family,
        )


def _fixed_mask(m: int, n: int, fix_identity: bool) -> np.ndarray:
    mask = np.zeros((m, n), dtype=bool)
    if fix_identity:
        mask[:, 0] = True
    return mask


def init_params(arch: Architecture, rng: np.random.Generator, family: str = "") -> ModelParams:
    """Random Hermitian kernels (Pauli coefficients uniform on [-1, 1]) and
    Glorot-uniform weights with zero biases."""
    k1 = rng.uniform(-1.0, 1.0, size=(arch.m, arch.n1, 4))
    k2 = rng.uniform(-1.0, 1.0, size=(arch.m, arch.n2, 4))
    if arch.fix_identity:
        k1[:, 0] = IDENTITY_COEFFS
        k2[:, 0] = IDENTITY_COEFFS
    widths = arch.fc_widths
    weights, biases = [], []
    for l in range(len(widths) - 1):
        limit = np.sqrt(6.0 / (widths[l] + widths[l + 1]))
        weights.append(rng.uniform(-limit, limit, size=(widths[l], widths[l + 1])))
        biases.append(np.zeros(widths[l + 1]) if arch.has_bias(l) else None)
    return ModelParams(arch, k1, k2, weights, biases, family)


# -- forward / backward --


_PAULI_PRODUCTS = np.einsum("aij,bkl->abikjl", PAULI_BASIS, PAULI_BASIS).reshape(4, 4, 4, 4)


def pauli_tensor(rhos: np.ndarray) -> np.ndarray:
    """``T[n, a, b] = tr(rho_n (sigma_a (x) sigma_b))`` for a stack of 4x4 states."""
    rhos = np.asarray(rhos, dtype=complex).reshape(-1, 4, 4)
    return np.einsum("nij,abji->nab", rhos, _PAULI_PRODUCTS).real


def path_forward(rho, path: ConvPath) -> np.ndarray:
    """Path output of length ``n1 * n2``; entry ``j * n1 + i`` is ``<M2_j (x) M1_i>``
    where ``M1_i`` is a layer-1 kernel and ``M2_j`` a layer-2 kernel."""
    rho = as_matrix(rho)
    out = np.empty(len(path.layer2_kernels) * len(path.layer1_kernels))
    for i, k1 in enumerate(path.layer1_kernels):
        first = conv_layer(rho, kernel_to_matrix(k1).T, 2)
        for j, k2 in enumerate(path.layer2_kernels):
            z = complex(conv_layer(first, kernel_to_matrix(k2).T, 2)[0, 0])
            out[j * len(path.layer1_kernels) + i] = _real(z, "path output")
    return out


def batch_features(T: np.ndarray, params: ModelParams) -> np.ndarray:
    """Path outputs for a batch of Pauli tensors, shape ``(batch, alpha)``."""
    f = np.einsum("pja,nab,pib->npji", params.kernels2, T, params.kernels1, optimize=True)
    return f.reshape(len(T), -1)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def head_forward(features: np.ndarray, params: ModelParams):
    """Run the fully connected head; returns probabilities and the layer inputs."""
    arch = params.arch
    acts = [features]
    x = features
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = x @ w
        if b is not None:
            z = z + b
        kind = arch.activation(l)
        if kind == "relu":
            x = np.maximum(z, 0.0)
        elif kind == "sigmoid":
            x = _sigmoid(z)
        else:
            x = z
        acts.append(x)
    return x[:, 0], acts


def predict_proba(T: np.ndarray, params: ModelParams) -> np.ndarray:
    prob, _ = head_forward(batch_features(T, params), params)
    return prob


def model_forward(rho, params: ModelParams) -> float:
    """Entanglement probability for one state, computing features by convolution."""
    feats = np.concatenate([path_forward(rho, p) for p in params.paths])
    prob, _ = head_forward(feats[None, :], params)
    return float(prob[0])


def bce_loss(prediction, label) -> np.ndarray | float:
    p = np.clip(prediction, EPS_CLIP, 1.0 - EPS_CLIP)
    y = np.asarray(label, dtype=float)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(loss) if np.ndim(loss) == 0 else loss


@dataclass
class Gradients:
    kernels1: np.ndarray
    kernels2: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray | None]
    loss: float = 0.0
    prob: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        return [self.kernels1, self.kernels2, *self.weights, *(b for b in self.biases if b is not None)]


def batch_backward(T: np.ndarray, labels: np.ndarray, params: ModelParams) -> Gradients:
    """Gradients of the batch-mean cross entropy.

    Each feature is bilinear in the two kernels of its combination, so its
    derivative w.r.t. a layer-2 coefficient ``a`` is ``<sigma_a (x) M1_i>``
    and w.r.t. a layer-1 coefficient ``b`` is ``<M2_j (x) sigma_b>``.
    """
    arch = params.arch
    n = len(T)
    y = np.asarray(labels, dtype=float)
    feats = batch_features(T, params)
    prob, acts = head_forward(feats, params)
    loss = float(np.mean(bce_loss(prob, y)))

    weights_g: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    biases_g: list[np.ndarray | None] = [None] * len(params.biases)
    # d(mean loss)/d(logit) for sigmoid + cross entropy
    delta = ((prob - y) / n)[:, None]
    for l in range(len(params.weights) - 1, -1, -1):
        if l < len(params.weights) - 1 and arch.activation(l) == "relu":
            delta = delta * (acts[l + 1] > 0.0)
        weights_g[l] = acts[l].T @ delta
        if params.biases[l] is not None:
            biases_g[l] = delta.sum(axis=0)
        delta = delta @ params.weights[l].T

    dfeat = delta.reshape(n, arch.m, arch.n2, arch.n1)
    g2 = np.einsum("npji,nab,pib->pja", dfeat, T, params.kernels1, optimize=True)
    g1 = np.einsum("npji,pja,nab->pib", dfeat, params.kernels2, T, optimize=True)
    g1[params.fixed_mask1] = 0.0
    g2[params.fixed_mask2] = 0.0
    return Gradients(g1, g2, weights_g, biases_g, loss, prob)


def model_backward(rho, params: ModelParams, label: int) -> Gradients:
    return batch_backward(pauli_tensor(as_matrix(rho)[None]), np.array([label]), params)


# -- persistence --

MODEL_MAGIC = "# bcnn-model v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_model(params: ModelParams, path: str | Path) -> None:
    """Plain-text model file: header, architecture line, Pauli coefficients,
    then each weight matrix row-major and each bias vector."""
    lines = [MODEL_MAGIC, f"family {params.family or '-'}", f"arch {params.arch.describe()}"]
    for k in range(params.arch.m):
        for layer, arr, mask in ((1, params.kernels1, params.fixed_mask1), (2, params.kernels2, params.fixed_mask2)):
            for i, c in enumerate(arr[k]):
                lines.append(f"kernel {k} {layer} {i} {int(mask[k, i])} " + " ".join(_fmt(v) for v in c))
    for l, w in enumerate(params.weights):
        lines.append(f"weight {l} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in w)
    for l, b in enumerate(params.biases):
        if b is not None:
            lines.append(f"bias {l} {b.shape[0]}")
            lines.append(" ".join(_fmt(v) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> ModelParams:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    family = lines[1].split(maxsplit=1)[1]
    arch = Architecture.parse(lines[2].split(maxsplit=1)[1])
    k1 = np.zeros((arch.m, arch.n1, 4))
    k2 = np.zeros((arch.m, arch.n2, 4))
    weights: list[np.ndarray | None] = [None] * (len(arch.fc_widths) - 1)
    biases: list[np.ndarray | None] = [None] * (len(arch.fc_widths) - 1)
    pos = 3
    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        if head[0] == "kernel":
            k, layer, i = int(head[1]), int(head[2]), int(head[3])
            (k1 if layer == 1 else k2)[k, i] = [float(v) for v in head[5:9]]
        elif head[0] == "weight":
            l, rows = int(head[1]), int(head[2])
            weights[l] = np.array([[float(v) for v in lines[pos + r].split()] for r in range(rows)])
            pos += rows
        elif head[0] == "bias":
            biases[int(head[1])] = np.array([float(v) for v in lines[pos].split()])
            pos += 1
        else:
            raise ValueError(f"{path}: unexpected line {lines[pos - 1]!r}")
    if any(w is None for w in weights):
        raise ValueError(f"{path}: missing weight matrices")
    return ModelParams(arch, k1, k2, weights, biases, "" if family == "-" else family)  # type: ignore[arg-type]
