"""Canonical conic programs.

A :class:`ConicProgram` is ``min c^T x`` subject to a list of blocks, each
requiring ``h - G x`` to lie in a cone: the zero cone (equalities), the
nonnegative orthant, or a second-order cone ``{s : s[0] >= ||s[1:]||}``.
This is the same convention as Clarabel and CVXOPT.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
KINDS = (ZERO, NONNEG, SOC)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-limit"


def lift_complex(z) -> np.ndarray:
    """Interleave real and imaginary parts: (Re z0, Im z0, Re z1, ...)."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def unlift_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[0::2] + 1j * x[1::2]


def lift_functional(h) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``(re, im)`` with ``Re{h^H z} = re @ lift(z)`` and ``Im{h^H z} = im @ lift(z)``."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    re = np.empty(2 * h.size)
    im = np.empty(2 * h.size)
    re[0::2], re[1::2] = h.real, h.imag
    im[0::2], im[1::2] = -h.imag, h.real
    return re, im


@dataclass
class Block:
    kind: str
    G: sp.csr_matrix
    h: np.ndarray
    label: str = ""

    @property
    def rows(self) -> int:
        return len(self.h)


@dataclass
class ConicProgram:
    """``min c^T x + offset`` s.t. ``h - G x`` in the product of ``cones``.

    ``cones`` lists ``(kind, rows, label)`` in row order; :attr:`blocks`
    gives per-cone views for inspection.
    """

    c: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cones: list[tuple[str, int, str]]
    layout: dict[str, slice]
    offset: float = 0.0  # constant added to c^T x when reporting objectives

    @classmethod
    def from_blocks(cls, c, blocks: list[Block], layout: dict[str, slice], offset: float = 0.0):
        n = len(c)
        mats = [b.G for b in blocks]
        G = sp.vstack(mats, format="csr") if mats else sp.csr_matrix((0, n))
        h = np.concatenate([b.h for b in blocks]) if blocks else np.zeros(0)
        return cls(np.asarray(c, dtype=float), G, h, [(b.kind, b.rows, b.label) for b in blocks],
                   layout, offset)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    def _offsets(self) -> np.ndarray:
        return np.r_[0, np.cumsum([r for _, r, _ in self.cones], dtype=int)]

    @property
    def blocks(self) -> list[Block]:
        off = self._offsets()
        return [Block(kind, self.G[off[i]:off[i + 1]], self.h[off[i]:off[i + 1]], label)
                for i, (kind, _, label) in enumerate(self.cones)]

    def check(self) -> None:
        """Raise ``ValueError`` if the layout or block dimensions are inconsistent."""
        n = self.num_vars
        covered = np.zeros(n, dtype=int)
        for sl in self.layout.values():
            covered[sl] += 1
        if np.any(covered != 1):
            raise ValueError("layout slices must cover every variable exactly once")
        if self.G.shape != (len(self.h), n):
            raise ValueError(f"G has shape {self.G.shape}, expected ({len(self.h)}, {n})")
        if sum(r for _, r, _ in self.cones) != len(self.h):
            raise ValueError("cone dimensions do not add up to the number of rows")
        for kind, rows, label in self.cones:
            if kind not in KINDS:
                raise ValueError(f"unknown cone kind {kind!r}")
            if kind == SOC and rows < 1:
                raise ValueError(f"empty second-order cone {label!r}")

    def stacked(self) -> tuple[sp.csc_matrix, np.ndarray, list[tuple[str, int]]]:
        """Solver form; consecutive linear cones of one kind are merged."""
        cones: list[tuple[str, int]] = []
        for kind, rows, _ in self.cones:
            if rows == 0:
                continue
            if cones and kind != SOC and cones[-1][0] == kind:
                cones[-1] = (kind, cones[-1][1] + rows)
            else:
                cones.append((kind, rows))
        return self.G.tocsc(), self.h, cones

    def slack(self, x: np.ndarray) -> list[np.ndarray]:
        s = self.h - self.G @ x
        off = self._offsets()
        return [s[off[i]:off[i + 1]] for i in range(len(self.cones))]

    def violation(self, x: np.ndarray) -> float:
        """Largest violation of any cone membership at ``x``, unscaled."""
        s = self.h - self.G @ x
        off = self._offsets()
        kinds = np.array([k for k, _, _ in self.cones], dtype=object)
        rows = np.diff(off)
        worst = 0.0
        lin = np.repeat(kinds, rows)
        if np.any(lin == ZERO):
            worst = max(worst, float(np.abs(s[lin == ZERO]).max()))
        if np.any(lin == NONNEG):
            worst = max(worst, float(-s[lin == NONNEG].min()))
        soc = np.flatnonzero((kinds == SOC) & (rows > 0))
        if soc.size:
            heads = off[soc]
            tail = (lin == SOC)
            tail[heads] = False
            seg = np.repeat(np.arange(len(self.cones)), rows)
            sq = np.bincount(seg[tail], weights=s[tail] ** 2, minlength=len(self.cones))
            worst = max(worst, float(np.max(np.sqrt(sq[soc]) - s[heads])))
        return worst

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def dump(self, path: str | Path) -> None:
        """Write a plain-text canonical form for cross-validation fixtures.

        Format: a header line ``n m offset``; ``var name start stop`` lines;
        the objective as ``c i value`` lines; one ``cone kind rows label``
        line per block followed by ``G r j value`` triplets and ``h r value``
        lines (row indices local to the block).
        """
        lines = [f"{self.num_vars} {len(self.h)} {float(self.offset)!r}"]
        for name, sl in self.layout.items():
            lines.append(f"var {name} {sl.start} {sl.stop}")
        for i in np.flatnonzero(self.c):
            lines.append(f"c {i} {float(self.c[i])!r}")
        for blk in self.blocks:
            lines.append(f"cone {blk.kind} {blk.rows} {blk.label or '-'}")
            coo = blk.G.tocoo()
            order = np.lexsort((coo.col, coo.row))
            for r, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                lines.append(f"G {r} {j} {float(v)!r}")
            for r, v in enumerate(blk.h):
                if v != 0:
                    lines.append(f"h {r} {float(v)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ConicProgram":
        lines = Path(path).read_text().splitlines()
        n, _, offset = lines[0].split()
        n = int(n)
        c = np.zeros(n)
        layout: dict[str, slice] = {}
        blocks: list[dict] = []
        cur = None
        for line in lines[1:]:
            tag, *rest = line.split()
            if tag == "var":
                layout[rest[0]] = slice(int(rest[1]), int(rest[2]))
            elif tag == "c":
                c[int(rest[0])] = float(rest[1])
            elif tag == "cone":
                cur = {"kind": rest[0], "rows": int(rest[1]), "label": "" if rest[2] == "-" else rest[2],
                       "G": [], "h": np.zeros(int(rest[1]))}
                blocks.append(cur)
            elif tag == "G":
                cur["G"].append((int(rest[0]), int(rest[1]), float(rest[2])))
            elif tag == "h":
                cur["h"][int(rest[0])] = float(rest[1])
        out = []
        for b in blocks:
            trip = np.array(b["G"], dtype=float).reshape(-1, 3)
            G = sp.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))),
                              shape=(b["rows"], n))
            out.append(Block(b["kind"], G, b["h"], b["label"]))
        return cls.from_blocks(c, out, layout, float(offset))


@dataclass
class ConicSolution:
    x: np.ndarray
    objective: float
    status: str
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    gap: float = np.nan
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class ProgramBuilder:
    """Incremental construction of a :class:`ConicProgram` from sparse rows."""

    def __init__(self):
        self.layout: dict[str, slice] = {}
        self.n = 0
        self.m = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._h: list[np.ndarray] = []
        self._cones: list[tuple[str, int, str]] = []
        self._cost: list[tuple[np.ndarray, np.ndarray]] = []
        self.offset = 0.0

    def add_var(self, name: str, size: int) -> slice:
        sl = slice(self.n, self.n + size)
        self.layout[name] = sl
        self.n += size
        return sl

    def cost(self, cols, values) -> None:
        self._cost.append((np.atleast_1d(np.asarray(cols, dtype=int)),
                           np.atleast_1d(np.asarray(values, dtype=float))))

    def block(self, kind: str, rows: int, triplets, h, label: str = "") -> None:
        """Append ``h - G x in K``; ``triplets`` is an iterable of (rows, cols, vals) arrays."""
        for r, j, v in triplets:
            v = np.asarray(v, dtype=float).ravel()
            r = np.asarray(r, dtype=int).ravel()
            j = np.asarray(j, dtype=int).ravel()
            if r.size != v.size:
                r = np.full(v.size, r[0])
            if j.size != v.size:
                j = np.full(v.size, j[0])
            self._rows.append(r + self.m)
            self._cols.append(j)
            self._vals.append(v)
        self._h.append(np.asarray(h, dtype=float).reshape(rows))
        self._cones.append((kind, rows, label))
        self.m += rows

    def blocks(self, kind: str, dims, r, j, v, h, labels) -> None:
        """Append several cones of one kind at once.

        ``r`` indexes rows from the start of the first new cone, ``h`` is
        the concatenated right-hand side and ``dims`` the cone sizes.
        """
        dims = [int(d) for d in dims]
        v = np.asarray(v, dtype=float).ravel()
        self._rows.append(np.asarray(r, dtype=int).ravel() + self.m)
        self._cols.append(np.asarray(j, dtype=int).ravel())
        self._vals.append(v)
        self._h.append(np.asarray(h, dtype=float).reshape(sum(dims)))
        self._cones.extend((kind, d, lab) for d, lab in zip(dims, labels))
        self.m += sum(dims)

    def build(self) -> ConicProgram:
        c = np.zeros(self.n)
        for cols, vals in self._cost:
            np.add.at(c, cols, vals)
        if self._vals:
            r, j, v = (np.concatenate(a) for a in (self._rows, self._cols, self._vals))
        else:
            r = j = np.zeros(0, dtype=int)
            v = np.zeros(0)
        G = sp.csr_matrix((v, (r, j)), shape=(self.m, self.n))
        h = np.concatenate(self._h) if self._h else np.zeros(0)
        return ConicProgram(c, G, h, list(self._cones), dict(self.layout), self.offset)
