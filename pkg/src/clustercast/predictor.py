"""Small recurrent forecasters trained from scratch.

Three cell kinds (Elman RNN, LSTM, GRU) share the same univariate shape:
the cell consumes one value per 30-minute step, a sigmoid head reads the
hidden state, and multi-step forecasts are produced autoregressively by
feeding each prediction back in as the next input. Gradients are exact
backpropagation through time, including through that feedback path, and
training is mini-batch Adam on mean squared error.

Weight matrices act on the concatenation [h_prev, x], so a gate matrix has
shape (H, H+1) for hidden size H; the head is (1, H). Parameter sets
flatten to a single vector in a fixed, documented tensor order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CELL_KINDS = ("rnn", "lstm", "gru")

# Flattening order per kind: weights first, then biases, names as listed.
TENSOR_ORDER = {
    "lstm": ("W_f", "W_i", "W_C", "W_o", "W_y", "b_f", "b_i", "b_C", "b_o", "b_y"),
    "rnn": ("W_h", "W_y", "b_h", "b_y"),
    "gru": ("W_z", "W_r", "W_h", "W_y", "b_z", "b_r", "b_h", "b_y"),
}


class TrainingDiverged(RuntimeError):
    """Raised when training produces a non-finite loss."""


def _check_kind(kind: str) -> None:
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")


def tensor_shapes(kind: str, hidden: int) -> dict[str, tuple[int, ...]]:
    """Shapes of every named tensor for (kind, hidden)."""
    _check_kind(kind)
    gate = (hidden, hidden + 1)
    shapes: dict[str, tuple[int, ...]] = {}
    for name in TENSOR_ORDER[kind]:
        if name == "W_y":
            shapes[name] = (1, hidden)
        elif name == "b_y":
            shapes[name] = (1,)
        elif name.startswith("W_"):
            shapes[name] = gate
        else:
            shapes[name] = (hidden,)
    return shapes


@dataclass
class ParameterSet:
    """Named weight matrices and bias vectors of one predictor."""

    kind: str
    hidden: int
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        expected = tensor_shapes(self.kind, self.hidden)
        if tuple(self.tensors) != TENSOR_ORDER[self.kind]:
            raise ValueError(
                f"tensor names/order {tuple(self.tensors)} do not match "
                f"{TENSOR_ORDER[self.kind]}"
            )
        for name, shape in expected.items():
            arr = np.asarray(self.tensors[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.tensors[n].ravel() for n in TENSOR_ORDER[self.kind]])

    @classmethod
    def from_flat(cls, kind: str, hidden: int, flat: np.ndarray) -> "ParameterSet":
        shapes = tensor_shapes(kind, hidden)
        flat = np.asarray(flat, dtype=np.float64)
        total = sum(int(np.prod(s)) for s in shapes.values())
        if flat.shape != (total,):
            raise ValueError(f"expected a flat vector of length {total}, got {flat.shape}")
        tensors, at = {}, 0
        for name in TENSOR_ORDER[kind]:
            size = int(np.prod(shapes[name]))
            tensors[name] = flat[at:at + size].reshape(shapes[name]).copy()
            at += size
        return cls(kind, hidden, tensors)

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.kind, self.hidden,
                            {n: t.copy() for n, t in self.tensors.items()})

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet(self.kind, self.hidden,
                            {n: np.zeros_like(t) for n, t in self.tensors.items()})


def init_params(kind: str, hidden: int, seed: int) -> ParameterSet:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    _check_kind(kind)
    if hidden < 1:
        raise ValueError("hidden size must be >= 1")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(kind, hidden).items():
        if name.startswith("b_"):
            tensors[name] = np.zeros(shape)
        else:
            fan_out, fan_in = shape
            r = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-r, r, size=shape)
    return ParameterSet(kind, hidden, tensors)


def save_params(params: ParameterSet, path: str) -> None:
    """Text checkpoint; float repr makes the round-trip bit-exact."""
    doc = {
        "kind": params.kind,
        "hidden": params.hidden,
        "tensors": {
            name: {"shape": list(t.shape), "data": [float(v) for v in t.ravel()]}
            for name, t in params.tensors.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path: str) -> ParameterSet:
    with open(path) as fh:
        doc = json.load(fh)
    tensors = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["tensors"].items()
    }
    return ParameterSet(doc["kind"], int(doc["hidden"]), tensors)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # callers guard with errstate(over="ignore"): exp overflow saturates to 0
    return 1.0 / (1.0 + np.exp(-x))


def _gate_stack(params: ParameterSet) -> tuple[np.ndarray, np.ndarray]:
    # stacking the gate tensors lets one matmul per step feed every gate
    p, kind = params.tensors, params.kind
    if kind == "lstm":
        names = ("W_f", "W_i", "W_C", "W_o")
    elif kind == "gru":
        names = ("W_z", "W_r")
    else:
        names = ("W_h",)
    return (np.vstack([p[n] for n in names]).T.copy(),
            np.concatenate([p["b" + n[1:]] for n in names]))


def _forward_cached(params: ParameterSet, X: np.ndarray, t_out: int,
                    teacher: np.ndarray | None):
    """Run the recurrence and keep every intermediate needed for BPTT.

    Steps 0..T_in-1 consume the input sequence; from step T_in-1 onward a
    sigmoid head emits one prediction per step, and each prediction (or the
    ground-truth value, under teacher forcing) becomes the next step's input.
    """
    kind, h_size = params.kind, params.hidden
    p = params.tensors
    B, t_in = X.shape
    if t_in < 1 or t_out < 1:
        raise ValueError("need at least one input and one output step")
    Wg, bg = _gate_stack(params)
    Wy_t = p["W_y"].T
    h = np.zeros((B, h_size))
    c = np.zeros((B, h_size)) if kind == "lstm" else None
    outputs = np.empty((B, t_out))
    steps, heads = [], []
    # overflow saturates the activations; invalid (nan) is caught by the
    # finiteness checks at the forward/gradient boundaries
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(t_in + t_out - 1):
            if k < t_in:
                x = X[:, k:k + 1]
            elif teacher is not None:
                x = teacher[:, k - t_in:k - t_in + 1]
            else:
                x = outputs[:, k - t_in:k - t_in + 1].copy()
            a = np.concatenate([h, x], axis=1)
            zs = a @ Wg + bg
            if kind == "lstm":
                f = _sigmoid(zs[:, :h_size])
                i = _sigmoid(zs[:, h_size:2 * h_size])
                cand = np.tanh(zs[:, 2 * h_size:3 * h_size])
                o = _sigmoid(zs[:, 3 * h_size:])
                c_new = f * c + i * cand
                tc = np.tanh(c_new)
                h_new = o * tc
                steps.append((a, f, i, cand, o, c, tc))
                c = c_new
            elif kind == "gru":
                z = _sigmoid(zs[:, :h_size])
                r = _sigmoid(zs[:, h_size:])
                ah = np.concatenate([r * h, x], axis=1)
                cand = np.tanh(ah @ p["W_h"].T + p["b_h"])
                h_new = z * h + (1.0 - z) * cand
                steps.append((a, z, r, ah, cand, h))
            else:  # rnn
                h_new = np.tanh(zs)
                steps.append((a, h_new))
            h = h_new
            if k >= t_in - 1:
                y = _sigmoid(h @ Wy_t + p["b_y"])
                outputs[:, k - (t_in - 1)] = y[:, 0]
                heads.append((h, y))
    cache = (steps, heads, t_in, t_out, teacher is not None, B)
    return outputs, cache


def forward(kind: str, params: ParameterSet, inputs: np.ndarray, t_out: int,
            teacher: np.ndarray | None = None) -> np.ndarray:
    """Predict t_out steps from an input sequence (or a batch of them).

    Outputs live in (0, 1) because the head is a sigmoid; callers are
    expected to feed scaled data. 1-D input gives a 1-D prediction.
    """
    _check_kind(kind)
    if kind != params.kind:
        raise ValueError(f"parameter set is for {params.kind!r}, not {kind!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 1
    X = inputs[None, :] if single else inputs
    T = np.asarray(teacher, dtype=np.float64) if teacher is not None else None
    if T is not None and T.ndim == 1:
        T = T[None, :]
    out, _ = _forward_cached(params, X, t_out, T)
    if not np.isfinite(out).all():
        raise FloatingPointError("non-finite predictor output (diverged parameters)")
    return out[0] if single else out


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Root of the mean squared elementwise error."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def _backward(params: ParameterSet, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Exact BPTT for d(loss)/d(params) given d(loss)/d(outputs).

    Walks the unrolled graph in reverse. The gradient of a decoder step's
    input is routed back into the previous step's prediction (the
    autoregressive feedback path) unless teacher forcing was on.
    """
    kind = params.kind
    p = params.tensors
    steps, heads, t_in, t_out, forced, B = cache
    h_size = params.hidden
    Wg, _ = _gate_stack(params)
    gWg = np.zeros((Wg.shape[1], Wg.shape[0]))   # stacked cell-weight gradient
    gbg = np.zeros(Wg.shape[1])
    gWy = np.zeros_like(p["W_y"])
    gby = np.zeros_like(p["b_y"])
    gWh = np.zeros_like(p["W_h"]) if kind == "gru" else None
    gbh = np.zeros_like(p["b_h"]) if kind == "gru" else None
    dh = np.zeros((B, h_size))
    dc = np.zeros((B, h_size)) if kind == "lstm" else None
    dy_feedback = None
    for k in range(t_in + t_out - 2, -1, -1):
        if k >= t_in - 1:
            j = k - (t_in - 1)
            h_k, y_k = heads[j]
            dy = d_out[:, j:j + 1].copy()
            if dy_feedback is not None:
                dy += dy_feedback
            dzy = dy * y_k * (1.0 - y_k)
            gWy += dzy.T @ h_k
            gby += dzy.sum(axis=0)
            dh = dh + dzy @ p["W_y"]
        if kind == "lstm":
            a, f, i, cand, o, c_prev, tc = steps[k]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            dzs = np.concatenate([
                dc * c_prev * f * (1.0 - f),          # forget gate
                dc * cand * i * (1.0 - i),            # input gate
                dc * i * (1.0 - cand * cand),         # candidate
                do * o * (1.0 - o),                   # output gate
            ], axis=1)
            dc = dc * f
        elif kind == "gru":
            a, z, r, ah, cand, h_prev = steps[k]
            dcand = dh * (1.0 - z)
            dzh = dcand * (1.0 - cand * cand)
            gWh += dzh.T @ ah
            gbh += dzh.sum(axis=0)
            dah = dzh @ p["W_h"]
            drh = dah[:, :h_size]
            dzs = np.concatenate([
                dh * (h_prev - cand) * z * (1.0 - z),  # update gate
                drh * h_prev * r * (1.0 - r),          # reset gate
            ], axis=1)
        else:  # rnn
            a, h_k = steps[k]
            dzs = dh * (1.0 - h_k * h_k)
        gWg += dzs.T @ a
        gbg += dzs.sum(axis=0)
        da = dzs @ Wg.T
        if kind == "gru":
            da[:, :h_size] += dh * z + drh * r
            da[:, h_size:] += dah[:, h_size:]
        dh = da[:, :h_size]
        dx = da[:, h_size:]
        dy_feedback = dx if (k >= t_in and not forced) else None

    g = {"W_y": gWy, "b_y": gby}
    if kind == "lstm":
        for idx, name in enumerate(("f", "i", "C", "o")):
            g[f"W_{name}"] = gWg[idx * h_size:(idx + 1) * h_size]
            g[f"b_{name}"] = gbg[idx * h_size:(idx + 1) * h_size]
    elif kind == "gru":
        g["W_z"], g["W_r"] = gWg[:h_size], gWg[h_size:]
        g["b_z"], g["b_r"] = gbg[:h_size], gbg[h_size:]
        g["W_h"], g["b_h"] = gWh, gbh
    else:
        g["W_h"], g["b_h"] = gWg, gbg
    return {name: g[name] for name in TENSOR_ORDER[kind]}


def gradient(kind: str, params: ParameterSet, inputs: np.ndarray,
             targets: np.ndarray,
             teacher_forcing: bool = False) -> dict[str, np.ndarray]:
    """Gradient of mean squared error over the batch, by BPTT.

    The loss is (1 / (S*T)) * sum (y_hat - y)^2, the squared form of the
    reported RMSE; both have the same minimizers.
    """
    _check_kind(kind)
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape[0] != targets.shape[0] or inputs.shape[0] == 0:
        raise ValueError("need a nonempty batch with matching row counts")
    t_out = targets.shape[1]
    teacher = targets if teacher_forcing else None
    out, cache = _forward_cached(params, inputs, t_out, teacher)
    d_out = 2.0 * (out - targets) / targets.size
    grads = _backward(params, cache, d_out)
    for name, arr in grads.items():
        if not np.isfinite(arr).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators plus step counter for Adam."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: ParameterSet, learning_rate: float = 1e-2) -> "AdamState":
        return cls(
            m={n: np.zeros_like(t) for n, t in params.tensors.items()},
            v={n: np.zeros_like(t) for n, t in params.tensors.items()},
            learning_rate=learning_rate,
        )


def adam_step(state: AdamState, params: ParameterSet,
              grads: dict[str, np.ndarray]) -> tuple[ParameterSet, AdamState]:
    """One bias-corrected Adam update; the state is advanced in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    new = {}
    for name, theta in params.tensors.items():
        gr = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * gr
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * gr * gr
        m_hat = state.m[name] / corr1
        v_hat = state.v[name] / corr2
        new[name] = theta - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return ParameterSet(params.kind, params.hidden, new), state


@dataclass
class TrainConfig:
    hidden: int = 10
    max_iterations: int = 3000
    learning_rate: float = 1e-2
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 10
    teacher_forcing: bool = False

    def __post_init__(self):
        if min(self.hidden, self.batch_size, self.eval_every) < 1:
            raise ValueError("hidden, batch_size and eval_every must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def train(kind: str, inputs: np.ndarray, targets: np.ndarray,
          cfg: TrainConfig) -> tuple[ParameterSet, list[tuple[int, float]]]:
    """Mini-batch Adam; returns the best-by-training-RMSE iterate.

    The full training set is scored every cfg.eval_every steps (and at step
    0 and the final step); the parameters with the lowest recorded RMSE win,
    so the result is never worse than the initial draw. Evaluation always
    runs in autoregressive mode, whatever the teacher_forcing setting used
    for the gradient batches.
    """
    _check_kind(kind)
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    s = inputs.shape[0]
    if s == 0:
        raise ValueError("cannot train on an empty dataset")
    t_out = targets.shape[1]
    rng = np.random.default_rng(cfg.seed)
    params = init_params(kind, cfg.hidden, cfg.seed)
    state = AdamState.fresh(params, cfg.learning_rate)

    def evaluate(ps: ParameterSet) -> float:
        out, _ = _forward_cached(ps, inputs, t_out, None)
        return rmse(targets, out)

    loss = evaluate(params)
    trace = [(0, loss)]
    best_loss, best_params = loss, params.copy()
    batch = min(cfg.batch_size, s)
    for step in range(1, cfg.max_iterations + 1):
        idx = rng.choice(s, size=batch, replace=False)
        grads = gradient(kind, params, inputs[idx], targets[idx],
                         teacher_forcing=cfg.teacher_forcing)
        params, state = adam_step(state, params, grads)
        if step % cfg.eval_every == 0 or step == cfg.max_iterations:
            loss = evaluate(params)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"{kind}: non-finite training loss at step {step}"
                )
            trace.append((step, loss))
            if loss < best_loss:
                best_loss, best_params = loss, params.copy()
    return best_params, trace
