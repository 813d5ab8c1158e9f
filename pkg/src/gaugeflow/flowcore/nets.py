"""Networks on the tape: a plain MLP vector field for low-dimensional toys and
CanonLite, a three-stream message-passing net over canonicalized molecules.

CanonLite keeps separate node (H), coordinate-set (CS) and rank (R) streams.
Every layer builds pairwise messages from projected node and rank features,
coordinate-set Gram entries and edge features, aggregates them by mean (no
attention), and applies residual updates to all streams. Heads: coordinate
velocity (mix of coordinate sets), atom/charge logits, bond logits for all N^2
ordered pairs (diagonal masked downstream), and a rank head min-max normalized
to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape
from .tape import Tensor


def canonical_pe(ranks: np.ndarray, d_pe: int, scale: float = 10000.0) -> np.ndarray:
    """Sinusoidal encoding of normalized ranks.

    PE(r, 2k) = sin(r * scale / scale^(2k/d_pe)), PE(r, 2k+1) = cos(same).
    Distinct ranks on grids i/N stay collision-free for d_pe >= 4 up to N=256.
    """
    if d_pe % 2 != 0 or d_pe < 2:
        raise ValueError("d_pe must be even and >= 2")
    ranks = np.asarray(ranks, dtype=np.float64)
    out = np.zeros((ranks.shape[0], d_pe))
    for k in range(d_pe // 2):
        arg = ranks * scale / scale ** (2 * k / d_pe)
        out[:, 2 * k] = np.sin(arg)
        out[:, 2 * k + 1] = np.cos(arg)
    return out


class Module:
    """Minimal parameter container; named_parameters walks attributes in
    insertion order so optimizer state is deterministic."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for name, value in self.__dict__.items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{full}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{full}.{i}", item))
        return out

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = Tensor(rng.standard_normal((n_in, n_out)) / np.sqrt(n_in), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return tape.add(tape.matmul(x, self.weight), self.bias)


class MLP(Module):
    """Linear stack with SiLU between layers."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = tape.silu(x)
        return x


# ---------------------------------------------------------------------------
# Toy vector field


class VectorFieldMLP(Module):
    """Velocity field on R^d: input [z, t, sin(2 pi t), cos(2 pi t)]."""

    def __init__(self, dim: int, width: int = 64, depth: int = 2,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.width = width
        self.depth = depth
        sizes = [dim + 3] + [width] * depth + [dim]
        self.net = MLP(sizes, rng)

    def __call__(self, z: np.ndarray, t: np.ndarray) -> Tensor:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (z.shape[0],))
        feats = np.concatenate(
            [z, t[:, None], np.sin(2 * np.pi * t)[:, None], np.cos(2 * np.pi * t)[:, None]],
            axis=1,
        )
        return self.net(Tensor(feats))

    def config_dict(self) -> dict:
        return {"dim": self.dim, "width": self.width, "depth": self.depth}


# ---------------------------------------------------------------------------
# CanonLite


@dataclass
class CanonLiteConfig:
    n_atom_classes: int
    n_charge_classes: int
    n_bond_classes: int = 5
    d_model: int = 64
    n_coord_sets: int = 8
    d_rank: int = 16
    n_layers: int = 3
    d_pe: int = 16
    pe_scale: float = 10000.0
    d_proj: int = 32
    d_msg_hidden: int = 96
    d_edge: int = 16

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LatentMolecule:
    """Mid-path molecular state: continuous coords, categorical class indices."""

    coords: np.ndarray       # (N, 3)
    type_idx: np.ndarray     # (N,)
    charge_idx: np.ndarray   # (N,)
    bond_idx: np.ndarray     # (N, N) symmetric, zero diagonal

    @property
    def n_atoms(self) -> int:
        return self.coords.shape[0]


@dataclass
class Predictions:
    velocity: Tensor        # (N, 3)
    atom_logits: Tensor     # (N, Ca)
    charge_logits: Tensor   # (N, Cc)
    bond_logits: Tensor     # (N^2, Cb), i-major pairs, symmetrized
    rank_pred: Tensor       # (N,) min-max normalized
    rank_raw: Tensor        # (N,) head output before normalization


def _one_hot(idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((len(idx), n))
    out[np.arange(len(idx)), idx] = 1.0
    return out


class _CanonLiteLayer(Module):
    def __init__(self, cfg: CanonLiteConfig, rng: np.random.Generator):
        c = cfg
        self.node_proj = Linear(c.d_model, c.d_proj, rng)
        self.rank_proj = Linear(c.d_rank, c.d_proj, rng)
        msg_in = 4 * c.d_proj + c.n_coord_sets + c.d_edge
        msg_out = c.d_model + c.n_coord_sets + c.d_rank + c.d_edge
        self.msg_mlp = MLP([msg_in, c.d_msg_hidden, msg_out], rng)
        self.node_update = MLP([c.d_model, c.d_model, c.d_model], rng)
        self.rank_update = Linear(c.d_rank, c.d_rank, rng)
        self.edge_update = Linear(c.d_edge, c.d_edge, rng)


class CanonLiteNet(Module):
    def __init__(self, cfg: CanonLiteConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        c = cfg
        d_in = c.n_atom_classes + c.n_charge_classes + 1 + c.d_pe
        self.input_mlp = MLP([d_in, c.d_model, c.d_model], rng)
        self.rank_mlp = MLP([c.d_pe, c.d_rank, c.d_rank], rng)
        self.cs_weights = Tensor(rng.standard_normal(c.n_coord_sets), requires_grad=True)
        self.edge_in = Linear(c.n_bond_classes, c.d_edge, rng)
        self.layers = [_CanonLiteLayer(c, rng) for _ in range(c.n_layers)]
        # learned stand-ins for dropped positional information
        self.fake_pe = Tensor(rng.standard_normal((1, c.d_pe)) * 0.1, requires_grad=True)
        self.head_vel = Tensor(rng.standard_normal(c.n_coord_sets) / np.sqrt(c.n_coord_sets),
                               requires_grad=True)
        self.head_atom = Linear(c.d_model, c.n_atom_classes, rng)
        self.head_charge = Linear(c.d_model, c.n_charge_classes, rng)
        self.head_bond = Linear(c.d_edge, c.n_bond_classes, rng)
        self.head_rank = Linear(c.d_model, 1, rng)

    def __call__(self, z_t: LatentMolecule, t: float, ranks: np.ndarray,
                 pe_dropped: bool = False) -> Predictions:
        c = self.cfg
        n = z_t.n_atoms
        if pe_dropped:
            pe = tape.tile_rows(self.fake_pe, n)
        else:
            pe = Tensor(canonical_pe(np.asarray(ranks, dtype=np.float64), c.d_pe, c.pe_scale))

        node_feats = Tensor(np.concatenate([
            _one_hot(z_t.type_idx, c.n_atom_classes),
            _one_hot(z_t.charge_idx, c.n_charge_classes),
            np.full((n, 1), float(t)),
        ], axis=1))
        h = self.input_mlp(tape.concat([node_feats, pe], axis=1))
        r = self.rank_mlp(pe)
        cs = tape.stack_scale(Tensor(z_t.coords), self.cs_weights)
        e = self.edge_in(Tensor(_one_hot(z_t.bond_idx.ravel(), c.n_bond_classes)))

        for layer in self.layers:
            p = layer.node_proj(h)
            q = layer.rank_proj(r)
            msg_in = tape.concat([
                tape.repeat_rows(p, n), tape.tile_rows(p, n),
                tape.repeat_rows(q, n), tape.tile_rows(q, n),
                tape.pairwise_dot(cs), e,
            ], axis=1)
            msg = layer.msg_mlp(msg_in)
            m_node = tape.slice_cols(msg, 0, c.d_model)
            m_coord = tape.slice_cols(msg, c.d_model, c.n_coord_sets)
            m_rank = tape.slice_cols(msg, c.d_model + c.n_coord_sets, c.d_rank)
            m_edge = tape.slice_cols(msg, c.d_model + c.n_coord_sets + c.d_rank, c.d_edge)
            h = tape.add(h, layer.node_update(tape.block_mean_rows(m_node, n)))
            cs = tape.add(cs, tape.coord_mix(cs, m_coord))
            r = tape.add(r, layer.rank_update(tape.block_mean_rows(m_rank, n)))
            e = tape.add(e, layer.edge_update(m_edge))

        velocity = tape.stack_mix(cs, self.head_vel)
        e_sym = tape.mul(tape.add(e, tape.transpose_pairs(e, n)), Tensor(0.5))
        bond_logits = self.head_bond(e_sym)
        rank_raw = tape.reshape(self.head_rank(h), (n,))
        lo = tape.reduce_min(rank_raw)
        hi = tape.reduce_max(rank_raw)
        span = tape.maximum_const(tape.sub(hi, lo), 1e-6)
        rank_pred = tape.div(tape.sub(rank_raw, lo), span)
        return Predictions(
            velocity=velocity,
            atom_logits=self.head_atom(h),
            charge_logits=self.head_charge(h),
            bond_logits=bond_logits,
            rank_pred=rank_pred,
            rank_raw=rank_raw,
        )
