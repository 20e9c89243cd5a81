"""Panel data container, CSV ingestion, and raw-covariance construction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from fdacov.errors import DomainError, InconsistentZ, ParseError, RaggedPanel

LONG_CSV_COLUMNS = ("curve_id", "u", "z", "y")


@dataclass(frozen=True)
class PanelSample:
    """Observed triples ``(Y_ij, U_ij, Z_i)`` for ``n`` curves of ``m`` points.

    Parameters
    ----------
    y, u : ndarray of shape (n, m)
        Responses and within-curve design points.
    z : ndarray of shape (n,)
        Curve covariates.
    """

    y: np.ndarray
    u: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        u = np.array(self.u, dtype=float)
        z = np.array(self.z, dtype=float).reshape(-1)
        if y.ndim != 2 or u.shape != y.shape or z.shape[0] != y.shape[0]:
            raise DomainError(
                f"inconsistent shapes y{y.shape}, u{u.shape}, z{z.shape}"
            )
        if y.shape[1] < 2:
            raise DomainError("each curve needs m >= 2 points")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
            raise DomainError("non-finite values in panel")
        if u.min() < 0 or u.max() > 1 or z.min() < 0 or z.max() > 1:
            raise DomainError("u and z must lie in [0, 1]")
        for arr in (y, u, z):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    def flat(self):
        """Return flattened ``(u, z, y)`` vectors of length ``n*m`` in row order."""
        zz = np.repeat(self.z, self.m)
        return self.u.reshape(-1), zz, self.y.reshape(-1)


def load_panel(path, format: str = "long_csv") -> PanelSample:
    """Read a panel from a long-format CSV with header ``curve_id,u,z,y``.

    Rows may come in any order. Curves are kept in order of first appearance
    and points within a curve in file order.
    """
    if format != "long_csv":
        raise ParseError(f"unsupported format {format!r}")
    curves: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file") from None
        header = [h.strip() for h in header]
        if sorted(header) != sorted(LONG_CSV_COLUMNS):
            raise ParseError(f"expected columns {','.join(LONG_CSV_COLUMNS)}, got {header}")
        pos = {name: header.index(name) for name in LONG_CSV_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                u = float(row[pos["u"]])
                z = float(row[pos["z"]])
                y = float(row[pos["y"]])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in (u, z, y)):
                raise ParseError(f"line {lineno}: non-finite value")
            if not (0.0 <= u <= 1.0 and 0.0 <= z <= 1.0):
                raise DomainError(f"line {lineno}: u={u}, z={z} outside [0, 1]")
            curves.setdefault(row[pos["curve_id"]].strip(), []).append((u, z, y))
    if not curves:
        raise ParseError("no data rows")
    sizes = {len(v) for v in curves.values()}
    if len(sizes) != 1:
        raise RaggedPanel(f"curves have differing numbers of points: {sorted(sizes)}")
    ys, us, zs = [], [], []
    for cid, rows in curves.items():
        arr = np.array(rows)
        if np.ptp(arr[:, 1]) != 0:
            raise InconsistentZ(f"curve {cid!r} has non-constant z")
        us.append(arr[:, 0])
        zs.append(arr[0, 1])
        ys.append(arr[:, 2])
    return PanelSample(y=np.array(ys), u=np.array(us), z=np.array(zs))


def write_panel(sample: PanelSample, path) -> None:
    """Write ``sample`` in long_csv format (curve ids ``0..n-1``)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_CSV_COLUMNS)
        for i in range(sample.n):
            for j in range(sample.m):
                w.writerow([i, repr(float(sample.u[i, j])), repr(float(sample.z[i])), repr(float(sample.y[i, j]))])


@dataclass(frozen=True)
class RawCovariancePanel:
    """Off-diagonal raw covariances ``C_ijk`` (j != k) and diagonal squares.

    All fields are flat arrays. ``i, j, k`` are curve and point indices of the
    off-diagonal entries, both orders ``(j, k)`` and ``(k, j)`` are stored.
    """

    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    z: np.ndarray
    c: np.ndarray
    diag_i: np.ndarray
    diag_j: np.ndarray
    diag_u: np.ndarray
    diag_z: np.ndarray
    diag_c: np.ndarray
    n: int
    m: int

    @property
    def bigM(self) -> int:
        return self.m * self.m - self.m

    def __len__(self) -> int:
        return self.c.shape[0]


def _pair_index(m: int):
    jj, kk = np.nonzero(~np.eye(m, dtype=bool))
    return jj, kk


def raw_covariances(
    sample: PanelSample, mean_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
) -> RawCovariancePanel:
    """Build ``C_ijk = (Y_ij - mu(U_ij, Z_i)) (Y_ik - mu(U_ik, Z_i))`` for all ordered j != k.

    ``mean_fn`` must accept broadcastable arrays ``(u, z)``.
    """
    n, m = sample.n, sample.m
    zz = np.broadcast_to(sample.z[:, None], (n, m))
    resid = sample.y - np.asarray(mean_fn(sample.u, zz), dtype=float).reshape(n, m)
    jj, kk = _pair_index(m)
    ii = np.repeat(np.arange(n), jj.size)
    jt = np.tile(jj, n)
    kt = np.tile(kk, n)
    c = (resid[:, jj] * resid[:, kk]).reshape(-1)
    di = np.repeat(np.arange(n), m)
    dj = np.tile(np.arange(m), n)
    return RawCovariancePanel(
        i=ii,
        j=jt,
        k=kt,
        u1=sample.u[ii, jt],
        u2=sample.u[ii, kt],
        z=sample.z[ii],
        c=c,
        diag_i=di,
        diag_j=dj,
        diag_u=sample.u.reshape(-1),
        diag_z=sample.z[di],
        diag_c=(resid**2).reshape(-1),
        n=n,
        m=m,
    )


@dataclass(frozen=True)
class QuadrupleProducts:
    """Products of centered raw covariances over index quadruples of one curve.

    ``u1, u2`` are the design points of the first pair ``(j, k)``, ``u3, u4``
    those of the second pair ``(l, m)``.
    """

    curve: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    u4: np.ndarray
    z: np.ndarray
    value: np.ndarray

    def __len__(self) -> int:
        return self.value.shape[0]


def valid_quadruples(m: int):
    """Entry-index pairs ``(a, b)`` of one curve with ``j != l`` and ``k != m``.

    Entry ``a`` refers to position in the per-curve ordered-pair list of
    :func:`raw_covariances`.
    """
    jj, kk = _pair_index(m)
    a, b = np.meshgrid(np.arange(jj.size), np.arange(jj.size), indexing="ij")
    a, b = a.reshape(-1), b.reshape(-1)
    keep = (jj[a] != jj[b]) & (kk[a] != kk[b])
    return a[keep], b[keep]


def quadruple_products(
    raw: RawCovariancePanel,
    cov_fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    max_per_curve: int = 2000,
    seed: int = 0,
) -> QuadrupleProducts:
    """Products ``(C_ijk - g_ijk)(C_ilm - g_ilm)`` with ``g`` from ``cov_fn``.

    When a curve has more admissible quadruples than ``max_per_curve`` a
    seeded uniform subsample without replacement is drawn for it.
    """
    if max_per_curve < 1:
        raise ValueError("max_per_curve must be >= 1")
    n, big_m = raw.n, raw.bigM
    centered = (raw.c - np.asarray(cov_fn(raw.u1, raw.u2, raw.z), dtype=float)).reshape(n, big_m)
    a, b = valid_quadruples(raw.m)
    rng = np.random.Generator(np.random.Philox(key=seed))
    if a.size > max_per_curve:
        picks = np.stack([np.sort(rng.choice(a.size, size=max_per_curve, replace=False)) for _ in range(n)])
    else:
        picks = np.broadcast_to(np.arange(a.size), (n, a.size))
    rows = np.arange(n)[:, None]
    ea, eb = a[picks], b[picks]
    u1 = raw.u1.reshape(n, big_m)
    u2 = raw.u2.reshape(n, big_m)
    zc = raw.z.reshape(n, big_m)[:, :1]
    return QuadrupleProducts(
        curve=np.broadcast_to(rows, ea.shape).reshape(-1),
        u1=u1[rows, ea].reshape(-1),
        u2=u2[rows, ea].reshape(-1),
        u3=u1[rows, eb].reshape(-1),
        u4=u2[rows, eb].reshape(-1),
        z=np.broadcast_to(zc, ea.shape).reshape(-1),
        value=(centered[rows, ea] * centered[rows, eb]).reshape(-1),
    )
