"""Policy networks mapping channel gains to relaxed offloading vectors in (0, 1)^N.

Variants: ``dnn`` (feed-forward), ``rnn`` (two stacked GRU layers),
``quantum_dnn`` and ``quantum_attention`` (classical reduction, 8-qubit
circuit, then a dense or self-attention block before the output head).
All variants share the same forward / backward / training interface.
"""
from __future__ import annotations

import numpy as np

from . import qsim
from .nn import (
    GRU,
    AdamState,
    BatchNorm,
    Dropout,
    Linear,
    Module,
    MultiHeadAttention,
    ReLU,
    Sigmoid,
    adam_step,
    bce_loss,
    load_checkpoint,
    save_checkpoint,
)

# channel gains are ~1e-6; unscaled inputs leave the sigmoid head nearly constant
INPUT_SCALE = 1e6

VARIANTS = ("dnn", "rnn", "quantum_dnn", "quantum_attention")


def scale_input(gains) -> np.ndarray:
    return np.asarray(gains, dtype=float) * INPUT_SCALE


class QuantumLayer(Module):
    """Circuit expectations ``q = <Z_i>`` as a differentiable layer (parameter-shift backward)."""

    def __init__(self, n_qubits: int, rng: np.random.Generator, variational_axis: str = "Y"):
        super().__init__()
        self.n_qubits = n_qubits
        self.variational_axis = variational_axis
        self.params["theta"] = rng.uniform(-np.pi, np.pi, size=n_qubits)
        self.zero_grad()

    def config(self) -> qsim.CircuitConfig:
        return qsim.CircuitConfig(self.n_qubits, variational_axis=self.variational_axis,
                                  theta=self.params["theta"])

    def forward(self, x, train=False):
        self._x = x
        _, q = qsim.encode_forward(x, self.config())
        return q

    def backward(self, dq):
        d_theta, d_x = qsim.gradients(self._x, self.config())
        self._acc("theta", np.einsum("bi,bij->j", dq, d_theta))
        return np.einsum("bi,bij->bj", dq, d_x)


class Policy:
    variant = ""
    window = 1

    def __init__(self, n_devices: int, seed: int = 0):
        self.n_devices = n_devices
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.layers: list[tuple[str, Module]] = []

    def _add(self, name: str, layer: Module) -> Module:
        self.layers.append((name, layer))
        return layer

    # parameter plumbing -------------------------------------------------
    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{n}.{k}": v for n, layer in self.layers for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{n}.{k}": layer.grads[k] for n, layer in self.layers for k in layer.params}

    def zero_grad(self):
        for _, layer in self.layers:
            layer.zero_grad()

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {k: v.copy() for k, v in self.parameters().items()}
        for n, layer in self.layers:
            for k, v in layer.buffers.items():
                out[f"{n}.{k}"] = v.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for n, layer in self.layers:
            for store in (layer.params, layer.buffers):
                for k in store:
                    src = np.asarray(state[f"{n}.{k}"], dtype=float)
                    if src.shape != store[k].shape:
                        raise ValueError(f"shape mismatch for {n}.{k}")
                    store[k][...] = src

    def save(self, path) -> None:
        save_checkpoint(path, self.variant, self.state_dict())

    def load(self, path) -> None:
        variant, tensors = load_checkpoint(path)
        if variant != self.variant:
            raise ValueError(f"checkpoint holds a {variant!r} policy, not {self.variant!r}")
        self.load_state_dict(tensors)

    # interface ----------------------------------------------------------
    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dm):
        raise NotImplementedError

    def act(self, state) -> np.ndarray:
        """Inference on a single (scaled) state; returns the relaxed decision for one frame."""
        return self.forward(np.asarray(state)[None], train=False)[0]

    def reset_state(self):
        pass


class _Sequential(Policy):
    def _stack(self):
        return [layer for _, layer in self.layers]

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_devices:
            raise ValueError(f"expected input of shape (B, {self.n_devices})")
        for layer in self._stack():
            x = layer.forward(x, train)
        return x

    def backward(self, dm):
        for layer in reversed(self._stack()):
            dm = layer.backward(dm)
        return dm


class DNNPolicy(_Sequential):
    variant = "dnn"

    def __init__(self, n_devices: int, seed: int = 0, hidden=(120, 80)):
        super().__init__(n_devices, seed)
        sizes = (n_devices, *hidden)
        for i in range(len(hidden)):
            self._add(f"fc{i + 1}", Linear(sizes[i], sizes[i + 1], self.rng))
            self._add(f"relu{i + 1}", ReLU())
        self._add("head", Linear(sizes[-1], n_devices, self.rng))
        self._add("sigmoid", Sigmoid())


class QuantumPolicy(_Sequential):
    """Reduction FFN -> circuit -> attention (or dense) block -> two-layer head."""

    def __init__(self, n_devices: int, seed: int = 0, attention: bool = True, n_qubits: int = 8,
                 heads: int = 4, reduce_hidden: int = 64, head_hidden: int = 64,
                 variational_axis: str = "Y"):
        super().__init__(n_devices, seed)
        self.variant = "quantum_attention" if attention else "quantum_dnn"
        self.n_qubits = n_qubits
        self._add("reduce1", Linear(n_devices, reduce_hidden, self.rng))
        self._add("reduce_relu1", ReLU())
        self._add("reduce2", Linear(reduce_hidden, n_qubits, self.rng))
        self._add("reduce_relu2", ReLU())
        self.quantum = self._add("quantum", QuantumLayer(n_qubits, self.rng, variational_axis))
        if attention:
            self.mixer = self._add("attention", MultiHeadAttention(n_qubits, heads, self.rng))
        else:
            self.mixer = self._add("dense", Linear(n_qubits, n_qubits, self.rng))
        self._add("head1", Linear(n_qubits, head_hidden, self.rng))
        self._add("head_relu", ReLU())
        self._add("head2", Linear(head_hidden, n_devices, self.rng))
        self._add("sigmoid", Sigmoid())

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_devices:
            raise ValueError(f"expected input of shape (B, {self.n_devices})")
        for name, layer in self.layers:
            if layer is self.mixer and isinstance(layer, MultiHeadAttention):
                # quantum features form a length-1 sequence
                x = layer.forward(x[:, None, :], train)[:, 0, :]
            else:
                x = layer.forward(x, train)
        return x

    def backward(self, dm):
        for name, layer in reversed(self.layers):
            if layer is self.mixer and isinstance(layer, MultiHeadAttention):
                dm = layer.backward(dm[:, None, :])[:, 0, :]
            else:
                dm = layer.backward(dm)
        return dm


class RNNPolicy(Policy):
    """GRU -> batch norm -> dropout -> GRU -> dropout -> dense sigmoid head on the last step."""

    variant = "rnn"

    def __init__(self, n_devices: int, seed: int = 0, hidden: int = 128, window: int = 10,
                 dropout: float = 0.1, stateful: bool = False):
        super().__init__(n_devices, seed)
        self.hidden = hidden
        self.window = window
        self.stateful = stateful
        self.gru1 = self._add("gru1", GRU(n_devices, hidden, self.rng))
        self.norm = self._add("norm", BatchNorm(hidden))
        self.drop1 = self._add("drop1", Dropout(dropout, self.rng))
        self.gru2 = self._add("gru2", GRU(hidden, hidden, self.rng))
        self.drop2 = self._add("drop2", Dropout(dropout, self.rng))
        self.head = self._add("head", Linear(hidden, n_devices, self.rng))
        self.sigmoid = self._add("sigmoid", Sigmoid())
        self._state = None

    def forward(self, x, train=False, hidden=None):
        x = np.asarray(x, dtype=float)
        if x.ndim != 3 or x.shape[2] != self.n_devices or x.shape[1] < 1:
            raise ValueError(f"expected input of shape (B, L>=1, {self.n_devices})")
        h1, h2 = (None, None) if hidden is None else hidden
        s1 = self.gru1.forward(x, h1, train)
        y = self.drop1.forward(self.norm.forward(s1, train), train)
        s2 = self.gru2.forward(y, h2, train)
        out = self.drop2.forward(s2, train)
        self._seq_len = x.shape[1]
        self.last_hidden = (s1[:, -1].copy(), s2[:, -1].copy())
        return self.sigmoid.forward(self.head.forward(out[:, -1], train), train)

    def backward(self, dm):
        dlast = self.head.backward(self.sigmoid.backward(dm))
        B = dm.shape[0]
        dout = np.zeros((B, self._seq_len, self.hidden))
        dout[:, -1] = dlast
        ds2 = self.drop2.backward(dout)
        dy, _ = self.gru2.backward(ds2)
        ds1 = self.norm.backward(self.drop1.backward(dy))
        dx, _ = self.gru1.backward(ds1)
        return dx

    def rnn_forward(self, window, hidden_in=None):
        """Inference on one ``(L, N)`` window starting from ``hidden_in``; returns ``(m, hidden_out)``."""
        w = np.asarray(window, dtype=float)
        hid = None if hidden_in is None else tuple(np.asarray(h)[None] for h in hidden_in)
        m = self.forward(w[None], train=False, hidden=hid)[0]
        return m, (self.last_hidden[0][0], self.last_hidden[1][0])

    def act(self, state):
        """Inference on one ``(L, N)`` window from a zero hidden state, exactly as in training.

        With ``stateful=True`` only the newest frame is fed and the hidden
        state is carried between calls (until :meth:`reset_state`).
        """
        st = np.asarray(state, dtype=float)
        if not self.stateful:
            return self.forward(st[None] if st.ndim == 2 else st[None, None], train=False)[0]
        frame = st[-1] if st.ndim == 2 else st
        m, self._state = self.rnn_forward(frame[None], self._state)
        return m

    def reset_state(self):
        self._state = None


def make_policy(variant: str, n_devices: int, seed: int = 0, **kwargs) -> Policy:
    if variant == "dnn":
        return DNNPolicy(n_devices, seed, **kwargs)
    if variant == "rnn":
        return RNNPolicy(n_devices, seed, **kwargs)
    if variant == "quantum_dnn":
        return QuantumPolicy(n_devices, seed, attention=False, **kwargs)
    if variant == "quantum_attention":
        return QuantumPolicy(n_devices, seed, attention=True, **kwargs)
    raise ValueError(f"unknown policy variant {variant!r}; expected one of {VARIANTS}")


def train_step(model: Policy, inputs, targets, optimizer: AdamState) -> float:
    """One Adam update on the mean BCE of ``model(inputs)`` against ``targets``; returns the pre-update loss."""
    inputs = np.asarray(inputs, dtype=float)
    if len(inputs) == 0:
        raise ValueError("training batch is empty")
    model.zero_grad()
    m = model.forward(inputs, train=True)
    loss, dm = bce_loss(m, targets)
    model.backward(dm)
    adam_step(model.parameters(), model.gradients(), optimizer)
    return loss
