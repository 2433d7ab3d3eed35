"""Cone-program intermediate representation.

Decision variables are real scalars. Affine expressions are stored densely as a
coefficient array of shape ``(*shape, n)`` plus a constant of shape ``shape``,
where ``n`` is the number of variables declared when the expression was formed.
Variables are only ever appended, so an older expression is widened by padding
zero columns.

Complex quantities are carried as a pair of real expressions (:class:`CExpr`).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np


class Expr:
    """Real affine expression ``coef @ x + const`` with array shape."""

    __array_ufunc__ = None

    def __init__(self, coef, const):
        self.coef = np.asarray(coef, dtype=float)
        self.const = np.asarray(const, dtype=float)
        if self.coef.shape[:-1] != self.const.shape:
            raise ValueError(f"coef shape {self.coef.shape} does not match const {self.const.shape}")

    @classmethod
    def constant(cls, value, width=0):
        value = np.asarray(value, dtype=float)
        return cls(np.zeros(value.shape + (width,)), value)

    @property
    def shape(self):
        return self.const.shape

    @property
    def ndim(self):
        return self.const.ndim

    @property
    def width(self):
        return self.coef.shape[-1]

    def __len__(self):
        return self.shape[0]

    def padded(self, n):
        if n == self.width:
            return self
        if n < self.width:
            raise ValueError("cannot narrow an expression")
        pad = np.zeros(self.shape + (n - self.width,))
        return Expr(np.concatenate([self.coef, pad], axis=-1), self.const)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.coef @ x[: self.width] + self.const

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, CExpr) or (not isinstance(other, Expr) and np.iscomplexobj(other)):
            return CExpr(self) + other
        other = as_expr(other)
        n = max(self.width, other.width)
        a, b = self.padded(n), other.padded(n)
        shape = np.broadcast_shapes(a.shape, b.shape)
        coef = np.broadcast_to(a.coef, shape + (n,)) + np.broadcast_to(b.coef, shape + (n,))
        return Expr(coef, a.const + b.const)

    __radd__ = __add__

    def __neg__(self):
        return Expr(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (Expr, CExpr)):
            return NotImplemented
        other = np.asarray(other)
        if np.iscomplexobj(other):
            return CExpr(self, None) * other
        return Expr(self.coef * other[..., None], self.const * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / np.asarray(other, dtype=float))

    def __matmul__(self, other):
        other = np.asarray(other)
        if np.iscomplexobj(other):
            return CExpr(self, None) @ other
        coef = np.moveaxis(np.moveaxis(self.coef, -1, 0) @ other, 0, -1)
        return Expr(coef, self.const @ other)

    def __rmatmul__(self, other):
        other = np.asarray(other)
        if np.iscomplexobj(other):
            return other @ CExpr(self, None)
        coef = np.tensordot(other, self.coef, axes=([-1], [0]))
        return Expr(coef, other @ self.const)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        cidx = idx + (slice(None),) if any(i is Ellipsis for i in idx) else idx
        return Expr(self.coef[cidx], self.const[idx])

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(self.ndim))
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(a % self.ndim for a in axes)
        return Expr(self.coef.sum(axis=axes), self.const.sum(axis=axes))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        const = self.const.reshape(shape)
        return Expr(self.coef.reshape(const.shape + (self.width,)), const)

    def ravel(self):
        return self.reshape(-1)

    @property
    def T(self):
        if self.ndim != 2:
            raise ValueError("transpose needs a 2-d expression")
        return Expr(self.coef.transpose(1, 0, 2), self.const.T)

    def __repr__(self):
        return f"Expr(shape={self.shape}, width={self.width})"


class CExpr:
    """Complex affine expression held as real and imaginary :class:`Expr` parts."""

    __array_ufunc__ = None

    def __init__(self, re, im=None):
        re = as_expr(re)
        if im is None:
            im = Expr.constant(np.zeros(re.shape), re.width)
        im = as_expr(im)
        n = max(re.width, im.width)
        self.re, self.im = re.padded(n), im.padded(n)
        if self.re.shape != self.im.shape:
            raise ValueError("real and imaginary parts differ in shape")

    @classmethod
    def constant(cls, value, width=0):
        value = np.asarray(value)
        return cls(Expr.constant(value.real, width), Expr.constant(value.imag, width))

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    @property
    def width(self):
        return self.re.width

    def value(self, x):
        return self.re.value(x) + 1j * self.im.value(x)

    def __add__(self, other):
        other = as_cexpr(other)
        return CExpr(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return CExpr(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-as_cexpr(other))

    def __rsub__(self, other):
        return as_cexpr(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (Expr, CExpr)):
            return NotImplemented
        other = np.asarray(other)
        a, b = other.real, other.imag
        return CExpr(self.re * a - self.im * b, self.re * b + self.im * a)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = np.asarray(other)
        a, b = other.real, other.imag
        return CExpr(self.re @ a - self.im @ b, self.re @ b + self.im @ a)

    def __rmatmul__(self, other):
        other = np.asarray(other)
        a, b = other.real, other.imag
        return CExpr(a @ self.re - b @ self.im, b @ self.re + a @ self.im)

    def __getitem__(self, idx):
        return CExpr(self.re[idx], self.im[idx])

    def sum(self, axis=None):
        return CExpr(self.re.sum(axis), self.im.sum(axis))

    def reshape(self, *shape):
        return CExpr(self.re.reshape(*shape), self.im.reshape(*shape))

    def conj(self):
        return CExpr(self.re, -self.im)

    @property
    def T(self):
        return CExpr(self.re.T, self.im.T)

    @property
    def H(self):
        """Conjugate transpose (vectors are treated as columns -> rows unchanged in shape)."""
        if self.ndim == 1:
            return self.conj()
        return CExpr(self.re.T, -self.im.T)

    @property
    def real(self):
        return self.re

    @property
    def imag(self):
        return self.im

    def __repr__(self):
        return f"CExpr(shape={self.shape}, width={self.width})"


def as_expr(value):
    if isinstance(value, Expr):
        return value
    if isinstance(value, CExpr):
        raise TypeError("complex expression where a real one is required")
    value = np.asarray(value)
    if np.iscomplexobj(value):
        raise TypeError("complex constant where a real one is required")
    return Expr.constant(value)


def as_cexpr(value):
    if isinstance(value, CExpr):
        return value
    if isinstance(value, Expr):
        return CExpr(value)
    return CExpr.constant(np.asarray(value))


def _widen(items):
    n = max((it.width for it in items), default=0)
    return [it.padded(n) for it in items], n


def concat(items, axis=0):
    """Concatenate real expressions (or constants) along an axis."""
    exprs, _ = _widen([as_expr(it) for it in items])
    exprs = [e.reshape(1) if e.ndim == 0 else e for e in exprs]
    ax = axis % exprs[0].ndim
    return Expr(np.concatenate([e.coef for e in exprs], axis=ax),
                np.concatenate([e.const for e in exprs], axis=ax))


def stack(items, axis=0):
    exprs, _ = _widen([as_expr(it) for it in items])
    ax = axis % (exprs[0].ndim + 1)
    return Expr(np.stack([e.coef for e in exprs], axis=ax),
                np.stack([e.const for e in exprs], axis=ax))


def bmat(blocks):
    """Assemble a 2-d block matrix; ``None`` entries become zero blocks.

    Block sizes are inferred from the non-``None`` entries of each row/column.
    Entries may be real ``Expr``, ``CExpr`` or numeric arrays; the result is
    complex when any entry is complex.
    """
    nr, nc = len(blocks), len(blocks[0])
    rows = [None] * nr
    cols = [None] * nc

    def dims(b):
        shape = b.shape if isinstance(b, (Expr, CExpr)) else np.shape(b)
        if len(shape) == 0:
            return 1, 1
        if len(shape) == 1:
            return shape[0], 1
        return shape

    for i in range(nr):
        for j in range(nc):
            b = blocks[i][j]
            if b is None:
                continue
            r, c = dims(b)
            rows[i] = r if rows[i] is None else rows[i]
            cols[j] = c if cols[j] is None else cols[j]
            if rows[i] != r or cols[j] != c:
                raise ValueError(f"inconsistent block size at ({i},{j})")
    if None in rows or None in cols:
        raise ValueError("every block row and column needs at least one sized entry")

    is_complex = any(
        isinstance(b, CExpr) or (not isinstance(b, (Expr, CExpr)) and b is not None and np.iscomplexobj(b))
        for row in blocks for b in row
    )
    width = max((b.width for row in blocks for b in row if isinstance(b, (Expr, CExpr))), default=0)

    def block(i, j):
        b = blocks[i][j]
        shape = (rows[i], cols[j])
        if b is None:
            b = np.zeros(shape)
        if is_complex:
            b = as_cexpr(b)
            return CExpr(b.re.padded(width).reshape(shape), b.im.padded(width).reshape(shape))
        return as_expr(b).padded(width).reshape(shape)

    grid = [[block(i, j) for j in range(nc)] for i in range(nr)]
    if is_complex:
        re = concat([concat([g.re for g in row], axis=1) for row in grid], axis=0)
        im = concat([concat([g.im for g in row], axis=1) for row in grid], axis=0)
        return CExpr(re, im)
    return concat([concat(row, axis=1) for row in grid], axis=0)


def squared_norm_soc(vec, bound):
    """Rotated cone for ``||vec||^2 <= bound``: ``||(2 vec, bound-1)|| <= bound+1``.

    Returns the SOC argument ``(bound+1, 2 vec, bound-1)`` as a flat expression.
    """
    vec = as_expr(vec).ravel()
    bound = as_expr(bound).reshape(())
    return concat([bound + 1.0, 2.0 * vec, bound - 1.0])


@dataclass
class Block:
    kind: str  # "eq", "nonneg", "soc", "psd"
    expr: Expr  # flat for eq/nonneg/soc, square symmetric for psd
    name: str = ""

    @property
    def rows(self):
        if self.kind == "psd":
            m = self.expr.shape[0]
            return m * (m + 1) // 2
        return self.expr.shape[0]


@dataclass
class ConicProgram:
    """Maximize a linear objective subject to equality, nonnegativity, SOC and PSD blocks."""

    n: int = 0
    names: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    objective: Expr | None = None

    # variables ------------------------------------------------------------
    def variable(self, shape=(), name="x"):
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        size = int(np.prod(shape)) if shape else 1
        start = self.n
        self.n += size
        if size == 1 and not shape:
            self.names.append(name)
        else:
            self.names.extend(f"{name}[{i}]" for i in range(size))
        coef = np.zeros((size, self.n))
        coef[:, start:] = np.eye(size)
        return Expr(coef.reshape(shape + (self.n,)), np.zeros(shape))

    def complex_variable(self, shape, name="z"):
        re = self.variable(shape, name + ".re")
        im = self.variable(shape, name + ".im")
        return CExpr(re, im)

    def hermitian_variable(self, m, name="W"):
        """Hermitian m-by-m matrix built from m^2 real parameters."""
        iu = np.triu_indices(m)
        il = np.triu_indices(m, 1)
        diag_off = self.variable(len(iu[0]), name + ".re")
        imag = self.variable(len(il[0]), name + ".im") if len(il[0]) else None
        n = self.n
        re_coef = np.zeros((m, m, n))
        im_coef = np.zeros((m, m, n))
        d = diag_off.padded(n).coef
        for k, (i, j) in enumerate(zip(*iu)):
            re_coef[i, j] = d[k]
            re_coef[j, i] = d[k]
        if imag is not None:
            c = imag.padded(n).coef
            for k, (i, j) in enumerate(zip(*il)):
                im_coef[i, j] = c[k]
                im_coef[j, i] = -c[k]
        return CExpr(Expr(re_coef, np.zeros((m, m))), Expr(im_coef, np.zeros((m, m))))

    # constraints ----------------------------------------------------------
    def add_eq(self, expr, name=""):
        """Constrain ``expr == 0`` elementwise."""
        expr = as_expr(expr).ravel()
        if expr.shape[0]:
            self.blocks.append(Block("eq", expr, name))

    def add_nonneg(self, expr, name=""):
        """Constrain ``expr >= 0`` elementwise."""
        expr = as_expr(expr).ravel()
        if expr.shape[0]:
            self.blocks.append(Block("nonneg", expr, name))

    def add_soc(self, t, x=None, name=""):
        """Constrain ``||x||_2 <= t``; with ``x=None`` ``t`` is the stacked cone argument."""
        arg = as_expr(t).ravel() if x is None else concat([as_expr(t).reshape(1), as_expr(x).ravel()])
        self.blocks.append(Block("soc", arg, name))

    def add_psd(self, mat, name=""):
        """Constrain a real symmetric matrix expression to be PSD."""
        mat = as_expr(mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("PSD block needs a square matrix expression")
        if not (np.allclose(mat.coef, mat.coef.transpose(1, 0, 2)) and np.allclose(mat.const, mat.const.T)):
            raise ValueError("PSD block is not symmetric")
        self.blocks.append(Block("psd", mat, name))

    def add_hermitian_psd(self, mat, name=""):
        """Constrain a Hermitian matrix expression to be PSD via its real embedding."""
        self.add_psd(complex_lmi_embed(mat), name)

    def maximize(self, expr):
        self.objective = as_expr(expr).reshape(())

    # inspection -----------------------------------------------------------
    def counts(self):
        out = {"eq": 0, "nonneg": 0, "soc": 0, "psd": 0}
        for b in self.blocks:
            out[b.kind] += 1
        return out

    def dump(self, stream=None):
        """Plain-text listing of the cones and their coefficient matrices."""
        own = stream is None
        stream = io.StringIO() if own else stream
        n = self.n
        stream.write(f"variables {n}\n")
        for i, name in enumerate(self.names):
            stream.write(f"  {i} {name}\n")
        obj = self.objective.padded(n) if self.objective is not None else Expr.constant(0.0, n)
        stream.write("maximize\n")
        stream.write("  c " + " ".join(f"{v:.17g}" for v in obj.coef) + f" | {obj.const:.17g}\n")
        for k, b in enumerate(self.blocks):
            e = b.expr.padded(n)
            if b.kind == "psd":
                m = e.shape[0]
                stream.write(f"block {k} psd {m} {b.name}\n")
                e = e.reshape(m * m)
            else:
                stream.write(f"block {k} {b.kind} {e.shape[0]} {b.name}\n")
            for row, c0 in zip(e.coef, e.const):
                stream.write("  " + " ".join(f"{v:.17g}" for v in row) + f" | {c0:.17g}\n")
        if own:
            return stream.getvalue()
        return None


# reformulation helpers ----------------------------------------------------

def hyperbolic_to_soc(z, x, y):
    """SOC argument equivalent to ``z^2 <= x*y`` with ``x, y >= 0``.

    Returns the stacked cone argument ``(x+y, 2z, x-y)``; membership of the
    second-order cone is exactly the hyperbolic constraint.
    """
    z, x, y = (as_expr(v).reshape(()) for v in (z, x, y))
    return concat([x + y, 2.0 * z, x - y])


def hyperbolic_feasible(z, x, y, tol=0.0):
    """Numeric check of the SOC form of ``z^2 <= x*y`` (used by tests and dumps)."""
    return math.hypot(2.0 * z, x - y) <= x + y + tol


def geometric_mean_objective(prog, leaves, name="g"):
    """Balanced binary tree of hyperbolic constraints bounding the geometric mean.

    Adds a variable ``g`` and SOC blocks such that every feasible point has
    ``g <= (prod leaves)^(1/K)``, with equality attainable. The tree is padded
    to ``2^L`` leaves with ``g`` itself, which keeps the argmax of the product.
    Returns ``g``.
    """
    leaves = [as_expr(v).reshape(()) for v in leaves]
    k = len(leaves)
    if k == 0:
        raise ValueError("need at least one leaf")
    g = prog.variable((), name)
    if k == 1:
        prog.add_nonneg(leaves[0] - g, name + ".leaf")
        return g
    depth = math.ceil(math.log2(k))
    level = leaves + [g] * (2 ** depth - k)
    tier = 0
    while len(level) > 1:
        nxt = []
        zs = prog.variable(len(level) // 2, f"{name}.z{tier}")
        for i in range(0, len(level), 2):
            z = zs[i // 2]
            prog.add_soc(hyperbolic_to_soc(z, level[i], level[i + 1]), name=f"{name}.tree{tier}")
            nxt.append(z)
        level = nxt
        tier += 1
    prog.add_nonneg(level[0] - g, name + ".root")
    return g


def complex_lmi_embed(mat):
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]`` of a Hermitian map.

    ``H >= 0`` iff the embedding is PSD; each eigenvalue of ``H`` appears twice.
    Accepts a :class:`CExpr` or a numeric Hermitian array.
    """
    if not isinstance(mat, CExpr):
        arr = np.asarray(mat)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("need a square matrix")
        if not np.allclose(arr, arr.conj().T):
            raise ValueError("matrix is not Hermitian")
        return np.block([[arr.real, -arr.imag], [arr.imag, arr.real]])
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("need a square matrix expression")
    re, im = mat.re, mat.im
    if not (np.allclose(re.coef, re.coef.transpose(1, 0, 2)) and np.allclose(im.coef, -im.coef.transpose(1, 0, 2))
            and np.allclose(re.const, re.const.T) and np.allclose(im.const, -im.const.T)):
        raise ValueError("matrix expression is not Hermitian")
    return bmat([[re, -im], [im, re]])
