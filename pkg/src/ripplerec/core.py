"""Minimal dense numeric kernel.

Everything the model needs from a tensor library, and nothing more:
stable softmax/sigmoid, a named-parameter store with gradient slots,
Adam (and plain SGD) updates, Xavier initialization, a central
finite-difference gradient checker, and bit-exact snapshot IO.

Gradients are hand-derived in :mod:`ripplerec.model`; this module only
owns the buffers and the update rules.  A frozen ``ParamStore`` is safe
for concurrent reads; updates assume a single writer.
"""

from __future__ import annotations

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

SNAPSHOT_MAGIC = "ripplerec-params-v1"


def softmax(scores):
    """Softmax over the last axis, computed with a max shift for stability.

    Accepts any nonempty array of finite scores.  Output entries are
    positive and sum to 1 along the last axis.
    """
    scores = np.asarray(scores)
    if scores.size == 0:
        raise ValueError("softmax of an empty score array is undefined")
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    """Logistic function, overflow-safe for arbitrarily large |x|."""
    arr = np.asarray(x)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[neg])
    out[neg] = ex / (1.0 + ex)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def xavier_uniform(shape, rng, dtype=np.float64):
    """Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).

    fan_in/fan_out are the last two axes for matrices and embedding
    tables; a 1-d shape uses its single axis for both.
    """
    shape = tuple(shape)
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in, fan_out = shape[-2], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def xavier_bound(shape):
    """The Xavier-uniform bound used by :func:`xavier_uniform` for ``shape``."""
    shape = tuple(shape)
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in, fan_out = shape[-2], shape[-1]
    return np.sqrt(6.0 / (fan_in + fan_out))


class ParamStore:
    """Named tensors, each with a value buffer and a same-shape gradient slot.

    Shapes are fixed at creation.  Gradient buffers are zeroed at batch
    start (``zero_grads``) and again after every optimizer step.  Adam
    moment buffers are created lazily on the first ``adam_step``.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._adam_m: dict[str, np.ndarray] = {}
        self._adam_v: dict[str, np.ndarray] = {}
        self._adam_t = 0

    def add(self, name, value):
        if name in self.values:
            raise ValueError(f"parameter {name!r} already exists")
        arr = np.array(value, dtype=self.dtype)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def names(self):
        return list(self.values)

    def zero_grads(self):
        for g in self.grads.values():
            g.fill(0.0)

    def num_params(self):
        return sum(v.size for v in self.values.values())

    def l2_penalty(self):
        """Sum of squared values over every tensor."""
        return float(sum(np.sum(v * v) for v in self.values.values()))

    def add_l2_grads(self, weight):
        """Accumulate d(weight * ||params||^2)/dtheta = 2 * weight * theta."""
        if weight == 0.0:
            return
        for name, v in self.values.items():
            self.grads[name] += (2.0 * weight) * v

    def copy(self):
        """Deep copy of values only (optimizer state is not carried over)."""
        out = ParamStore(dtype=self.dtype)
        for name, v in self.values.items():
            out.add(name, v.copy())
        return out

    def load_values(self, other):
        """Overwrite values in place from another store with identical shapes."""
        for name, v in self.values.items():
            v[...] = other.values[name]

    def check_finite(self, what="values"):
        source = self.values if what == "values" else self.grads
        for name, arr in source.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite {what} in tensor {name!r}")

    # -- optimizers ---------------------------------------------------------

    def adam_step(self, lr, betas=(ADAM_BETA1, ADAM_BETA2), eps=ADAM_EPS):
        """Bias-corrected Adam update from the current gradient buffers.

        Gradients are zeroed afterwards.  Raises if any gradient is
        non-finite, naming the offending tensor.
        """
        self.check_finite("grads")
        b1, b2 = betas
        self._adam_t += 1
        t = self._adam_t
        for name, v in self.values.items():
            g = self.grads[name]
            if name not in self._adam_m:
                self._adam_m[name] = np.zeros_like(v)
                self._adam_v[name] = np.zeros_like(v)
            m = self._adam_m[name]
            s = self._adam_v[name]
            m *= b1
            m += (1.0 - b1) * g
            s *= b2
            s += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1 ** t)
            s_hat = s / (1.0 - b2 ** t)
            v -= lr * m_hat / (np.sqrt(s_hat) + eps)
        self.zero_grads()

    def sgd_step(self, lr):
        """Plain gradient descent; provided as an alternative to Adam."""
        self.check_finite("grads")
        for name, v in self.values.items():
            v -= lr * self.grads[name]
        self.zero_grads()


def finite_diff_check(f, params, analytic=None, h=1e-5, max_coords=16, rng=None):
    """Max relative error between analytic gradients and central differences.

    ``f`` is a scalar function of ``params`` that must not touch the
    gradient buffers.  ``analytic`` maps tensor name to gradient array;
    by default a copy of the store's current gradient buffers is used.
    Up to ``max_coords`` coordinates are sampled per tensor.  The
    relative error denominator is floored at 1e-3 so that coordinates
    with (near-)zero true gradient compare absolutely.

    Meaningful in 64-bit mode only; float32 round-off swamps h = 1e-5.
    """
    if analytic is None:
        analytic = {name: g.copy() for name, g in params.grads.items()}
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name, value in params.values.items():
        grad = analytic[name]
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = f(params)
            flat[idx] = orig - h
            f_minus = f(params)
            flat[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(fd - gflat[idx]) / max(abs(fd), abs(gflat[idx]), 1e-3)
            worst = max(worst, err)
    return worst


# -- snapshot IO -------------------------------------------------------------


def save_params(path, params):
    """Write a parameter snapshot.

    Layout: an uncompressed NumPy ``.npz`` archive; one array per tensor
    keyed by its name (name and shape in the embedded ``.npy`` headers,
    values row-major), plus a ``__magic__`` format marker.  Round trips
    are bit-exact in both 32- and 64-bit modes.
    """
    arrays = {name: v for name, v in params.values.items()}
    arrays["__magic__"] = np.array(SNAPSHOT_MAGIC)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path):
    """Load a snapshot written by :func:`save_params` into a new ParamStore."""
    with np.load(path, allow_pickle=False) as data:
        if "__magic__" not in data or str(data["__magic__"]) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a ripplerec parameter snapshot")
        names = [k for k in data.files if k != "__magic__"]
        first = data[names[0]] if names else np.zeros(0)
        store = ParamStore(dtype=first.dtype if names else np.float64)
        for name in names:
            store.add(name, data[name])
    return store
