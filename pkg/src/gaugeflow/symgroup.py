"""Group actions on molecular and point-cloud states.

The ambient group is S_N x SO(3) with translations carried along so that
recentering composes cleanly; translation components are zero after centering.
Permutation convention: an element with permutation p maps row i of the output
to row p[i] of the input, i.e. X_out = X_in[p].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .molecule import MoleculeState


@dataclass
class GroupElement:
    """One element of S_N x SO(3) x R^3."""

    perm: np.ndarray
    rot: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.int64)
        self.rot = np.asarray(self.rot, dtype=np.float64)
        self.trans = np.asarray(self.trans, dtype=np.float64)
        n = self.perm.shape[0]
        if sorted(self.perm.tolist()) != list(range(n)):
            raise ValueError("perm must be a permutation of 0..N-1")
        if self.rot.shape != (3, 3):
            raise ValueError("rot must be 3x3")
        if not np.allclose(self.rot @ self.rot.T, np.eye(3), atol=1e-8):
            raise ValueError("rot must be orthogonal")
        if np.linalg.det(self.rot) < 0:
            raise ValueError("rot must have determinant +1")
        if self.trans.shape != (3,):
            raise ValueError("trans must be a 3-vector")

    @property
    def n_atoms(self) -> int:
        return self.perm.shape[0]


def identity(n_atoms: int) -> GroupElement:
    return GroupElement(np.arange(n_atoms), np.eye(3), np.zeros(3))


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """g after h: act(compose(g, h), z) == act(g, act(h, z))."""
    if g.n_atoms != h.n_atoms:
        raise ValueError("size mismatch")
    return GroupElement(h.perm[g.perm], g.rot @ h.rot, g.rot @ h.trans + g.trans)


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(np.argsort(g.perm), g.rot.T, -g.rot.T @ g.trans)


def act_coords(g: GroupElement, coords: np.ndarray) -> np.ndarray:
    return coords[g.perm] @ g.rot.T + g.trans


def act(g: GroupElement, z: MoleculeState) -> MoleculeState:
    """Apply g: permute atoms, rotate coordinates, translate."""
    if g.n_atoms != z.n_atoms:
        raise ValueError(f"group element is for {g.n_atoms} atoms, molecule has {z.n_atoms}")
    p = g.perm
    return MoleculeState(
        act_coords(g, z.coords),
        z.atom_types[p],
        z.charges[p],
        z.bonds[np.ix_(p, p)],
    )


def centroid(z: MoleculeState) -> np.ndarray:
    return z.coords.mean(axis=0)


def center(z: MoleculeState) -> MoleculeState:
    """Subtract the coordinate centroid; features untouched. Idempotent."""
    return z.with_coords(z.coords - centroid(z))


def rotation_from_quaternion(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def haar_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation: angle for SO(2), unit quaternion for SO(3), QR otherwise."""
    if d == 2:
        theta = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s], [s, c]])
    if d == 3:
        return rotation_from_quaternion(rng.standard_normal(4))
    # Mezzadri construction: QR of a Gaussian matrix with sign-fixed R diagonal
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def haar_sample(n_atoms: int, rng: np.random.Generator) -> GroupElement:
    """Uniform permutation x uniform rotation, zero translation."""
    return GroupElement(rng.permutation(n_atoms), haar_rotation(3, rng), np.zeros(3))


# ---------------------------------------------------------------------------
# Finite matrix groups acting on R^d point states (theory-lab side)


@dataclass
class PointCloudState:
    """Bare d-dimensional point state used by the finite-group checks."""

    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)


@dataclass
class FiniteGroupSpec:
    """A finite group of orthogonal d x d matrices, listed explicitly."""

    elements: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=np.float64)
        if self.elements.ndim != 3 or self.elements.shape[1] != self.elements.shape[2]:
            raise ValueError("elements must be (M, d, d)")
        m, d, _ = self.elements.shape
        for i, g in enumerate(self.elements):
            if not np.allclose(g @ g.T, np.eye(d), atol=1e-8):
                raise ValueError(f"element {i} is not orthogonal")
        if not any(np.allclose(g, np.eye(d), atol=1e-8) for g in self.elements):
            raise ValueError("group must contain the identity")
        for gi in self.elements:
            for gj in self.elements:
                prod = gi @ gj
                if not any(np.allclose(prod, gk, atol=1e-8) for gk in self.elements):
                    raise ValueError("group is not closed under composition")

    @property
    def order(self) -> int:
        return self.elements.shape[0]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def inverse_index(self, index: int) -> int:
        inv = self.elements[index].T
        for k, g in enumerate(self.elements):
            if np.allclose(g, inv, atol=1e-8):
                return k
        raise ValueError("inverse not found; group is not closed")


def finite_act(spec: FiniteGroupSpec, index: int, v: np.ndarray) -> np.ndarray:
    """Apply element `index` to a vector (d,) or a batch (n, d)."""
    v = np.asarray(v, dtype=np.float64)
    return v @ spec.elements[index].T


def sign_flip_group() -> FiniteGroupSpec:
    return FiniteGroupSpec(np.array([[[1.0]], [[-1.0]]]), name="signflip")


def cyclic_rotation_group(m: int) -> FiniteGroupSpec:
    """C_m acting on R^2 by rotations of 2*pi/m."""
    mats = []
    for k in range(m):
        t = 2.0 * np.pi * k / m
        mats.append([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return FiniteGroupSpec(np.array(mats), name=f"c{m}")


def c4_group() -> FiniteGroupSpec:
    return cyclic_rotation_group(4)


def permutation_matrix_group(n: int) -> FiniteGroupSpec:
    """S_n as n x n permutation matrices acting on coordinates of R^n."""
    from itertools import permutations

    mats = []
    for p in permutations(range(n)):
        mat = np.zeros((n, n))
        mat[np.arange(n), list(p)] = 1.0
        mats.append(mat)
    return FiniteGroupSpec(np.array(mats), name=f"s{n}")
