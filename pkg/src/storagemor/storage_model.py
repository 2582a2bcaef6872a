"""Grid construction and matrix assembly for the 2D storage heat equation.

The storage cross-section ``(0, l_x) x (0, l_y)`` holds ``n_P`` horizontal
pipe heat exchangers (PHXs) in which water flows in ``+x``.  Temperatures
are carried on the nodes ``(x_i, y_j) = (i h_x, j h_y)``; boundary and
interface nodes are eliminated, so the state vector holds the
``(N_x - 1)(N_y - 2 n_P - 1)`` remaining interior nodes ordered column by
column (all rows of ``i = 1`` first).

Discretization used for a state node with diffusivity ``a``::

    dQ/dt = a (Q_W - 2Q + Q_E) / h_x**2 + a (Q_S - 2Q + Q_N) / h_y**2
            - v (Q - Q_W) / h_x            (fluid rows, pump on)

Neighbour values that are not states are replaced as follows:

* top, left, right and outlet nodes copy the adjacent interior node
  (homogeneous Neumann, one-sided difference);
* inlet nodes equal the inlet temperature (input 1) when the pump runs and
  copy the adjacent node otherwise;
* bottom nodes satisfy ``kappa_M (Q_1 - Q_0) / h_y = lambda_G (Q_0 - Q_G)``,
  giving ``Q_0 = (kappa_M Q_1 + lambda_G h_y Q_G) / (kappa_M + lambda_G h_y)``
  with ``Q_G`` as input 2;
* interface nodes satisfy flux continuity with one-sided differences, so
  ``Q_I = (kappa_F Q_F + kappa_M Q_M) / (kappa_F + kappa_M)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import AlignmentError, ConfigError, DomainError, GridError, NumericalError

__all__ = [
    "MaterialParams",
    "StorageGeometry",
    "GridSpec",
    "DiscretizedSystem",
    "DRY_SOIL",
    "WATER",
    "CHARACTERISTICS",
    "thermal_diffusivity",
    "build_grid",
    "assemble_system",
    "assemble_input",
    "assemble_outputs",
    "average_row",
    "build_storage_system",
    "verify_stability",
    "write_triplets",
    "read_triplets",
]

_STEP_RTOL = 1e-9


@dataclass(frozen=True)
class MaterialParams:
    """Density (kg/m^3), specific heat (J/(kg K)) and conductivity (W/(m K))."""

    rho: float
    cp: float
    kappa: float

    def __post_init__(self):
        for name in ("rho", "cp", "kappa"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"material parameter {name} must be positive, got {value!r}")

    @property
    def diffusivity(self) -> float:
        return self.kappa / (self.rho * self.cp)


DRY_SOIL = MaterialParams(rho=2000.0, cp=800.0, kappa=1.59)
WATER = MaterialParams(rho=998.0, cp=4182.0, kappa=0.60)


def thermal_diffusivity(m) -> float:
    """Return ``kappa / (rho * cp)`` in m^2/s.

    Accepts a :class:`MaterialParams` or any object with ``rho``, ``cp`` and
    ``kappa`` attributes; non-positive values raise :class:`DomainError`.
    """
    rho, cp, kappa = float(m.rho), float(m.cp), float(m.kappa)
    if not (rho > 0 and cp > 0 and kappa > 0):
        raise DomainError("rho, cp and kappa must all be positive")
    return kappa / (rho * cp)


@dataclass(frozen=True)
class StorageGeometry:
    """Storage extents and PHX layout.

    ``phx_rows`` are the vertical centerline positions (m) of the PHXs; when
    omitted the ``n_P`` pipes are spread evenly at ``l_y k / (n_P + 1)``.
    """

    l_x: float = 10.0
    l_y: float = 1.0
    l_z: float = 1.0
    d_P: float = 0.02
    n_P: int = 1
    phx_rows: tuple[float, ...] | None = None
    lambda_G: float = 10.0

    def __post_init__(self):
        for name in ("l_x", "l_y", "l_z", "d_P"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.lambda_G < 0:
            raise DomainError("lambda_G must be non-negative")
        if int(self.n_P) != self.n_P or self.n_P < 1:
            raise DomainError("n_P must be a positive integer")
        if self.phx_rows is not None:
            object.__setattr__(self, "phx_rows", tuple(float(c) for c in self.phx_rows))
            if len(self.phx_rows) != self.n_P:
                raise DomainError("phx_rows must list one centerline per PHX")

    def centers(self) -> tuple[float, ...]:
        if self.phx_rows is not None:
            return self.phx_rows
        return tuple(self.l_y * k / (self.n_P + 1) for k in range(1, self.n_P + 1))


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with node classification and the state index map.

    ``strips`` holds ``(j_bottom_interface, j_top_interface)`` per PHX.
    ``index(i, j)`` maps an interior non-interface node to its 0-based
    position in the state vector.
    """

    N_x: int
    N_y: int
    h_x: float
    h_y: float
    strips: tuple[tuple[int, int], ...]
    row_kind: tuple[str, ...] = field(repr=False)
    state_rows: tuple[int, ...] = field(repr=False)

    @property
    def n_P(self) -> int:
        return len(self.strips)

    @property
    def q(self) -> int:
        """Block size: number of state rows per grid column."""
        return len(self.state_rows)

    @property
    def n(self) -> int:
        return (self.N_x - 1) * self.q

    @property
    def fluid_rows(self) -> tuple[int, ...]:
        return tuple(j for j in self.state_rows if self.row_kind[j] == "fluid")

    @property
    def _row_rank(self) -> dict[int, int]:
        return {j: r for r, j in enumerate(self.state_rows)}

    def is_state(self, i: int, j: int) -> bool:
        return 1 <= i <= self.N_x - 1 and self.row_kind[j] in ("medium", "fluid")

    def index(self, i: int, j: int) -> int:
        if not self.is_state(i, j):
            raise KeyError(f"node ({i}, {j}) is not a state node")
        return (i - 1) * self.q + self.state_rows.index(j)

    @property
    def index_map(self) -> dict[tuple[int, int], int]:
        rank = self._row_rank
        return {
            (i, j): (i - 1) * self.q + rank[j]
            for i in range(1, self.N_x)
            for j in self.state_rows
        }

    def node_kind(self, i: int, j: int) -> str:
        """Classify a node as medium, fluid, interface or a boundary part."""
        if not (0 <= i <= self.N_x and 0 <= j <= self.N_y):
            raise KeyError(f"node ({i}, {j}) outside the grid")
        kind = self.row_kind[j]
        if kind in ("bottom", "top"):
            return kind
        if kind == "interface":
            return "interface"
        if i == 0:
            return "inlet" if kind == "fluid" else "left"
        if i == self.N_x:
            return "outlet" if kind == "fluid" else "right"
        return kind


def _steps(extent: float, h: float, name: str) -> int:
    if not h > 0:
        raise GridError(f"step {name} must be positive")
    ratio = extent / h
    N = int(round(ratio))
    if N < 2 or abs(ratio - N) > _STEP_RTOL * max(1.0, ratio):
        raise GridError(f"step {name}={h} does not divide extent {extent}")
    return N


def build_grid(geom: StorageGeometry, h_x: float, h_y: float) -> GridSpec:
    """Lay out the grid and snap every PHX strip onto grid rows.

    A PHX of diameter ``d_P`` occupies ``w = d_P / h_y`` row spacings; its two
    bounding rows are interface rows and the ``w - 1`` rows between them are
    fluid rows.  Strips must be separated from each other and from the top
    and bottom boundary by at least one medium row.
    """
    N_x = _steps(geom.l_x, h_x, "h_x")
    N_y = _steps(geom.l_y, h_y, "h_y")
    w_ratio = geom.d_P / h_y
    w = int(round(w_ratio))
    if abs(w_ratio - w) > 1e-6 * max(1.0, w_ratio) or w < 2:
        raise AlignmentError(
            f"PHX diameter {geom.d_P} must span an integer number >= 2 of steps h_y={h_y}"
        )
    strips = []
    for c in sorted(geom.centers()):
        jb = int(math.floor((c - geom.d_P / 2) / h_y + 0.5))
        strips.append((jb, jb + w))
    previous_top = 0
    for jb, jt in strips:
        if jb < previous_top + 2:
            raise AlignmentError(
                f"PHX strip rows {jb}..{jt} leave no medium row below it (previous boundary row {previous_top})"
            )
        previous_top = jt
    if previous_top > N_y - 2:
        raise AlignmentError("top PHX strip leaves no medium row below the top boundary")

    kinds = ["medium"] * (N_y + 1)
    kinds[0], kinds[N_y] = "bottom", "top"
    for jb, jt in strips:
        kinds[jb] = kinds[jt] = "interface"
        for j in range(jb + 1, jt):
            kinds[j] = "fluid"
    state_rows = tuple(j for j in range(1, N_y) if kinds[j] in ("medium", "fluid"))
    grid = GridSpec(
        N_x=N_x,
        N_y=N_y,
        h_x=geom.l_x / N_x,
        h_y=geom.l_y / N_y,
        strips=tuple(strips),
        row_kind=tuple(kinds),
        state_rows=state_rows,
    )
    assert grid.n == (N_x - 1) * (N_y - 2 * grid.n_P - 1)
    return grid


@dataclass(frozen=True)
class DiscretizedSystem:
    """Assembled matrices of the semi-discretized storage model.

    ``B`` and ``C`` are ``None`` until the corresponding assembly step ran.
    """

    A: sp.csr_matrix
    grid: GridSpec
    velocity: float
    a_M: float
    a_F: float
    B: np.ndarray | None = None
    C: np.ndarray | None = None
    output_names: tuple[str, ...] = ()

    @property
    def beta_M(self) -> float:
        return self.a_M / self.grid.h_y**2

    @property
    def n(self) -> int:
        return self.grid.n

    def to_realization(self):
        from .lti import LtiRealization

        if self.B is None or self.C is None:
            raise ConfigError("input and output matrices must be assembled first")
        return LtiRealization(self.A, self.B, self.C)


def _assemble(grid, mat_M, mat_F, lambda_G, v0, pump_on):
    """Return ``(A, B)`` in COO triplets for one pump regime."""
    if v0 < 0:
        raise DomainError("pump velocity must be non-negative")
    kM, kF = mat_M.kappa, mat_F.kappa
    aM, aF = mat_M.diffusivity, mat_F.diffusivity
    hx2, hy2 = grid.h_x**2, grid.h_y**2
    robin_keep = kM / (kM + lambda_G * grid.h_y)
    robin_in = lambda_G * grid.h_y / (kM + lambda_G * grid.h_y)
    conv = v0 / grid.h_x if pump_on else 0.0
    rows, cols, vals = [], [], []
    b_rows, b_cols, b_vals = [], [], []
    idx = grid.index_map
    kinds = grid.row_kind

    for (i, j), l in idx.items():
        fluid = kinds[j] == "fluid"
        a = aF if fluid else aM
        cx, cy = a / hx2, a / hy2
        c_west = cx + (conv if fluid else 0.0)
        diag = -2.0 * cx - 2.0 * cy - (conv if fluid else 0.0)
        k_self = kF if fluid else kM
        k_other = kM if fluid else kF
        neighbours = ((i - 1, j, c_west), (i + 1, j, cx), (i, j - 1, cy), (i, j + 1, cy))
        for ni, nj, c in neighbours:
            if (ni, nj) in idx:
                rows.append(l); cols.append(idx[ni, nj]); vals.append(c)
            elif ni == 0:
                if fluid and pump_on:
                    b_rows.append(l); b_cols.append(0); b_vals.append(c)
                else:
                    diag += c
            elif ni == grid.N_x or nj == grid.N_y:
                diag += c
            elif nj == 0:
                diag += c * robin_keep
                if robin_in:
                    b_rows.append(l); b_cols.append(1); b_vals.append(c * robin_in)
            else:
                # interface row: Q_I = (k_self Q + k_other Q_across) / (k_self + k_other)
                across = 2 * nj - j
                wt = 1.0 / (k_self + k_other)
                diag += c * k_self * wt
                rows.append(l); cols.append(idx[i, across]); vals.append(c * k_other * wt)
        rows.append(l); cols.append(l); vals.append(diag)

    n = grid.n
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    B = sp.coo_matrix((b_vals, (b_rows, b_cols)), shape=(n, 2)).toarray()
    return A, B


def assemble_system(
    grid: GridSpec,
    mat_M: MaterialParams,
    mat_F: MaterialParams,
    geom: StorageGeometry,
    v0: float,
) -> DiscretizedSystem:
    """Assemble the sparse system matrix ``A``.

    ``v0 > 0`` assembles the pump-on regime (upwind convection, Dirichlet
    inlet); ``v0 == 0`` assembles the pump-off regime with an insulated inlet.
    """
    if v0 < 0:
        raise DomainError("pump velocity must be non-negative")
    A, _ = _assemble(grid, mat_M, mat_F, geom.lambda_G, v0, pump_on=v0 > 0)
    return DiscretizedSystem(A=A, grid=grid, velocity=float(v0), a_M=mat_M.diffusivity, a_F=mat_F.diffusivity)


def assemble_input(
    grid: GridSpec,
    mat_M: MaterialParams,
    mat_F: MaterialParams,
    geom: StorageGeometry,
    v0: float,
    mode: str = "on",
    analogous: bool = True,
) -> np.ndarray:
    """Assemble the ``n x 2`` input matrix for inputs ``(Q_inlet, Q_G)``.

    In the analogous model the pump always runs, so column 1 carries
    ``a_F / h_x**2 + v0 / h_x`` at the inlet-adjacent fluid rows whatever
    ``mode`` says.
    """
    if mode not in ("on", "off"):
        raise ConfigError("mode must be 'on' or 'off'")
    pump_on = analogous or mode == "on"
    _, B = _assemble(grid, mat_M, mat_F, geom.lambda_G, v0, pump_on=pump_on and v0 > 0)
    return B


CHARACTERISTICS = {
    "M": "M", "medium": "M", "Q_M": "M",
    "F": "F", "fluid": "F", "Q_F": "F",
    "O": "O", "outlet": "O", "Q_O": "O",
    "B": "B", "bottom": "B", "Q_B": "B",
}


def _canonical(name: str) -> str:
    try:
        return CHARACTERISTICS[name.strip()]
    except (KeyError, AttributeError):
        raise ConfigError(f"unknown aggregated characteristic {name!r}") from None


def _value_weights(grid: GridSpec, i: int, j: int, kM: float, kF: float) -> dict[int, float]:
    """Express a node temperature as a convex combination of state entries.

    Boundary nodes take the value of their interior neighbour; for the
    Dirichlet inlet and the Robin bottom this drops the input-dependent
    part so every average stays a convex combination of the state.
    """
    if grid.is_state(i, j):
        return {grid.index(i, j): 1.0}
    if i == 0:
        return _value_weights(grid, 1, j, kM, kF)
    if i == grid.N_x:
        return _value_weights(grid, grid.N_x - 1, j, kM, kF)
    if j == 0:
        return _value_weights(grid, i, 1, kM, kF)
    if j == grid.N_y:
        return _value_weights(grid, i, grid.N_y - 1, kM, kF)
    # interface row
    below, above = j - 1, j + 1
    k_below = kF if grid.row_kind[below] == "fluid" else kM
    k_above = kF if grid.row_kind[above] == "fluid" else kM
    out: dict[int, float] = {}
    for jj, k in ((below, k_below), (above, k_above)):
        for l, w in _value_weights(grid, i, jj, kM, kF).items():
            out[l] = out.get(l, 0.0) + w * k / (k_below + k_above)
    return out


def average_row(
    grid: GridSpec,
    node_weights: Mapping[tuple[int, int], float],
    mat_M: MaterialParams = DRY_SOIL,
    mat_F: MaterialParams = WATER,
) -> np.ndarray:
    """Normalized output row for a weighted average over grid nodes."""
    total = float(sum(node_weights.values()))
    if not total > 0:
        raise DomainError("node weights must have a positive sum")
    row = np.zeros(grid.n)
    for (i, j), w in node_weights.items():
        for l, c in _value_weights(grid, i, j, mat_M.kappa, mat_F.kappa).items():
            row[l] += w * c
    return row / total


def _trapezoid(npts: int, h: float) -> np.ndarray:
    w = np.full(npts, h)
    w[0] = w[-1] = h / 2
    return w


def _rectangles_weights(grid, row_ranges):
    wx = _trapezoid(grid.N_x + 1, grid.h_x)
    weights: dict[tuple[int, int], float] = {}
    for j0, j1 in row_ranges:
        wy = _trapezoid(j1 - j0 + 1, grid.h_y)
        for jj, wj in zip(range(j0, j1 + 1), wy):
            for i in range(grid.N_x + 1):
                weights[i, jj] = weights.get((i, jj), 0.0) + wx[i] * wj
    return weights


def characteristic_nodes(grid: GridSpec, name: str) -> dict[tuple[int, int], float]:
    """Quadrature weights over the node set of one aggregated characteristic."""
    key = _canonical(name)
    if key == "M":
        edges = [0]
        for jb, jt in grid.strips:
            edges += [jb, jt]
        edges.append(grid.N_y)
        return _rectangles_weights(grid, list(zip(edges[::2], edges[1::2])))
    if key == "F":
        return _rectangles_weights(grid, list(grid.strips))
    if key == "O":
        return {(grid.N_x, j): grid.h_y for j in grid.fluid_rows}
    wx = _trapezoid(grid.N_x + 1, grid.h_x)
    return {(i, 0): wx[i] for i in range(grid.N_x + 1)}


def assemble_outputs(
    grid: GridSpec,
    characteristics: Sequence[str],
    mat_M: MaterialParams = DRY_SOIL,
    mat_F: MaterialParams = WATER,
) -> np.ndarray:
    """Stack one averaging row per characteristic (``M``, ``F``, ``O``, ``B``).

    * ``M``/``F``: trapezoidal average over the medium / fluid subdomain,
      interface lines included.
    * ``O``: mean over the fluid rows of the outlet column.
    * ``B``: trapezoidal average along the bottom boundary; the bottom
      nodes are represented by the first interior row.
    """
    if isinstance(characteristics, str):
        characteristics = [characteristics]
    characteristics = list(characteristics)
    if not characteristics:
        raise ConfigError("at least one characteristic is required")
    rows = [average_row(grid, characteristic_nodes(grid, c), mat_M, mat_F) for c in characteristics]
    return np.vstack(rows)


def build_storage_system(
    geom: StorageGeometry,
    h_x: float,
    h_y: float,
    mat_M: MaterialParams = DRY_SOIL,
    mat_F: MaterialParams = WATER,
    v0: float = 0.01,
    outputs: Iterable[str] = ("M",),
    analogous: bool = True,
) -> DiscretizedSystem:
    """Grid, ``A``, ``B`` and ``C`` in one call (analogous pump-on model by default)."""
    grid = build_grid(geom, h_x, h_y)
    sys = assemble_system(grid, mat_M, mat_F, geom, v0)
    B = assemble_input(grid, mat_M, mat_F, geom, v0, mode="on" if v0 > 0 else "off", analogous=analogous)
    names = tuple(_canonical(o) for o in outputs)
    C = assemble_outputs(grid, names, mat_M, mat_F)
    return DiscretizedSystem(
        A=sys.A, grid=grid, velocity=sys.velocity, a_M=sys.a_M, a_F=sys.a_F, B=B, C=C, output_names=names
    )


def verify_stability(A, dense_limit: int = 4000) -> float:
    """Largest real part of the spectrum of ``A``.

    Dense eigenvalues up to ``dense_limit`` unknowns, ARPACK beyond.  The
    caller decides what to do with a non-negative result.
    """
    shape = A.shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DomainError("A must be square")
    n = shape[0]
    try:
        if n <= dense_limit:
            M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            if not np.all(np.isfinite(M)):
                raise DomainError("A has non-finite entries")
            return float(np.max(scipy.linalg.eigvals(M).real))
        vals = spla.eigs(sp.csr_matrix(A), k=6, which="LR", return_eigenvectors=False, maxiter=20 * n)
        return float(np.max(vals.real))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, spla.ArpackNoConvergence) as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc


def write_triplets(path, M) -> None:
    """Write ``row col value`` lines (0-based indices, 17 significant digits)."""
    coo = sp.coo_matrix(M)
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
        shape = (int(header[0]), int(header[1]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape).tocsr()
