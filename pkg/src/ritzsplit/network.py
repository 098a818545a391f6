"""Feedforward and input-convex networks on a flat parameter vector.

Both kinds are stored as a list of affine layers.  Layer 0 always maps the
input ``x`` (``W0`` for an MLP, the passthrough ``L0`` for an ICNN).  Layer
``l >= 1`` maps the previous hidden state through ``W_l`` and, for ICNNs,
adds a passthrough ``L_l x``.  ICNN hidden-to-hidden weights ``W_l`` are the
constrained (nonnegative) block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MLP = "mlp"
ICNN = "icnn"

DEFAULT_WIDTHS = (2, 10, 10, 10, 10, 1)


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    kind: str = ICNN
    widths: tuple = DEFAULT_WIDTHS
    activation: str = "softplus"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if self.kind not in (MLP, ICNN):
            raise StructureError(f"unknown network kind {self.kind!r}")
        if len(widths) < 3 or widths[0] != 2 or widths[-1] != 1:
            raise StructureError(f"widths must read (2, N1, ..., NL, 1), got {widths}")
        if min(widths) < 1:
            raise StructureError("layer widths must be positive")
        if self.activation != "softplus":
            raise StructureError("only softplus is supported")

    @property
    def depth(self):
        """Number of hidden layers ``L``."""
        return len(self.widths) - 2


def build_layout(arch):
    """Integer layout table and constraint mask for ``arch``.

    Rows are ``(n_in, n_out, w_offset, l_offset, b_offset)``; ``l_offset`` is
    -1 when the layer has no passthrough.  Parameters of a layer are stored
    as ``W`` (row-major), then ``L``, then ``b``.
    """
    rows = []
    off = 0
    nonneg = []
    w = arch.widths
    for li in range(len(w) - 1):
        nin, nout = w[li], w[li + 1]
        wo = off
        off += nin * nout
        if li > 0 and arch.kind == ICNN:
            nonneg.append((wo, off))
            lo = off
            off += 2 * nout
        else:
            lo = -1
        bo = off
        off += nout
        rows.append((nin, nout, wo, lo, bo))
    lay = np.array(rows, dtype=np.int64)
    mask = np.zeros(off, dtype=bool)
    for a, b in nonneg:
        mask[a:b] = True
    return lay, mask


@dataclass
class NetworkParams:
    arch: Architecture
    theta: np.ndarray
    layout: np.ndarray = field(init=False, repr=False)
    nonneg_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.layout, self.nonneg_mask = build_layout(self.arch)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.nonneg_mask.size,):
            raise StructureError(
                f"parameter vector has shape {self.theta.shape}, "
                f"architecture needs ({self.nonneg_mask.size},)"
            )

    @property
    def size(self):
        return self.theta.size

    def copy(self):
        return NetworkParams(self.arch, self.theta.copy())

    def with_theta(self, theta):
        return NetworkParams(self.arch, theta)

    # block views -----------------------------------------------------------

    def _block(self, off, nout, nin):
        return self.theta[off:off + nout * nin].reshape(nout, nin)

    @property
    def W(self):
        """Hidden-to-hidden (or input, for an MLP's first layer) weight matrices.

        ``W[0]`` is ``None`` for an ICNN, whose first layer is a passthrough.
        """
        out = []
        for li, (nin, nout, wo, lo, bo) in enumerate(self.layout):
            if li == 0 and self.arch.kind == ICNN:
                out.append(None)
            else:
                out.append(self._block(wo, nout, nin))
        return out

    @property
    def L(self):
        """Passthrough matrices ``L[l]`` (ICNN only; ``None`` elsewhere)."""
        out = []
        for li, (nin, nout, wo, lo, bo) in enumerate(self.layout):
            if self.arch.kind != ICNN:
                out.append(None)
            elif li == 0:
                out.append(self._block(wo, nout, 2))
            else:
                out.append(self._block(lo, nout, 2))
        return out

    @property
    def b(self):
        return [self.theta[bo:bo + nout] for (nin, nout, wo, lo, bo) in self.layout]

    def check_invariants(self, tol=0.0):
        if self.arch.kind == ICNN and np.any(self.theta[self.nonneg_mask] < -tol):
            return False
        return bool(np.all(np.isfinite(self.theta)))


def init(arch, rng):
    """Random draw with ``N(0, 1/fan_in)`` weights and zero biases.

    ICNN hidden-to-hidden weights are squared after drawing, so they start
    nonnegative.
    """
    lay, mask = build_layout(arch)
    theta = np.zeros(mask.size)
    for li, (nin, nout, wo, lo, bo) in enumerate(lay):
        theta[wo:wo + nin * nout] = rng.standard_normal(nin * nout) / np.sqrt(nin)
        if lo >= 0:
            theta[lo:lo + 2 * nout] = rng.standard_normal(2 * nout) / np.sqrt(2.0)
    theta[mask] = theta[mask] ** 2
    return NetworkParams(arch, theta)


def enforce_nonneg(net):
    """Clamp constrained ICNN weights to zero from below.

    Unconstrained entries (passthroughs, biases, the first layer) are left
    alone.  For an MLP this is a no-op and returns ``net`` itself.
    """
    if net.arch.kind != ICNN:
        return net
    neg = net.nonneg_mask & (net.theta < 0.0)
    if not neg.any():
        return net
    theta = net.theta.copy()
    theta[neg] = 0.0
    return net.with_theta(theta)


def forward(net, x):
    """Network output at points ``x`` of shape (n, 2) or (2,)."""
    from . import tensor_ad

    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    v = tensor_ad.eval_jet(net, np.atleast_2d(x), order=0).val
    return float(v[0]) if single else v


# ----------------------------------------------------------------------------
# checkpoint: JSON header + flat little-endian float64 payload


def save(net, path):
    """Write ``<path>.json`` (architecture) and ``<path>.bin`` (parameters)."""
    path = Path(path)
    header = {
        "kind": net.arch.kind,
        "L": net.arch.depth,
        "widths": list(net.arch.widths),
        "activation": net.arch.activation,
        "n_params": int(net.size),
        "dtype": "<f8",
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=1) + "\n")
    path.with_suffix(".bin").write_bytes(net.theta.astype("<f8").tobytes())


def load(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    arch = Architecture(header["kind"], tuple(header["widths"]), header.get("activation", "softplus"))
    if len(arch.widths) - 2 != header["L"]:
        raise StructureError("checkpoint header depth disagrees with widths")
    theta = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    return NetworkParams(arch, theta)
