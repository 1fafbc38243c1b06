"""Radio environment maps: ground-truth SINR generation, GPR estimation, bitrate.

A map ties a quantized 2-D location to the average uplink SINR experienced
there. Ground truth combines log-distance path loss, per-base-station
correlated shadowing and co-channel interference; estimates are built by
Gaussian-process regression on sparse measurements of the true map.
"""

import numpy as np
from dataclasses import dataclass
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

THERMAL_NOISE_DBM_PER_HZ = -174.0

# Truncated-Shannon defaults for the SINR -> spectral efficiency map.
SHANNON_FLOOR_DB = -5.0
SHANNON_FACTOR = 0.75
SHANNON_CAP_BITS_PER_HZ = 7.4


class ShadowingResourceError(RuntimeError):
    """Exact covariance factorization would exceed the memory budget."""


class OutOfBoundsError(ValueError):
    """Queried position falls outside the map area."""


@dataclass(frozen=True)
class LinkBudget:
    """Static radio parameters shared by all vehicles."""

    carrier_freq_hz: float = 3.5e9
    bandwidth_hz: float = 3.6e6
    tx_power_dbm: float = 23.0
    noise_figure_db: float = 6.0
    bs_antenna_height_m: float = 25.0
    vehicle_antenna_height_m: float = 1.5
    shadowing_std_db: float = 6.0
    decorrelation_m: float = 25.0

    def __post_init__(self):
        for name in ("carrier_freq_hz", "bandwidth_hz", "bs_antenna_height_m",
                     "vehicle_antenna_height_m", "decorrelation_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be >= 0")

    @property
    def noise_power_dbm(self):
        return (THERMAL_NOISE_DBM_PER_HZ
                + 10.0 * np.log10(self.bandwidth_hz)
                + self.noise_figure_db)

    @property
    def antenna_height_delta_m(self):
        return self.bs_antenna_height_m - self.vehicle_antenna_height_m


@dataclass(frozen=True)
class BsLayout:
    """Base-station positions (m) on the map plane."""

    positions: tuple
    inter_site_distance_m: float = 600.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2 or len(pos) == 0:
            raise ValueError("positions must be a non-empty list of 2-D points")
        if len(pos) > 1:
            d = cdist(pos, pos)
            np.fill_diagonal(d, np.inf)
            if d.min() <= 0:
                raise ValueError("base station positions must be pairwise distinct")

    @classmethod
    def lattice(cls, origin, extent_m, inter_site_m=600.0, offset_m=150.0):
        """Square lattice with the given spacing covering a rectangular area.

        ``offset_m`` shifts sites off the corner/street alignment (masts sit
        mid-block rather than on the road grid); sites may fall outside the
        mapped area as long as they contribute coverage near its edge.
        """
        ox, oy = origin
        w, h = extent_m

        def axis(o, length):
            start = offset_m % inter_site_m
            lo, hi = o - inter_site_m / 2, o + length + inter_site_m / 2
            k = int(np.floor((lo - o - start) / inter_site_m))
            vals = []
            while o + start + k * inter_site_m <= hi:
                v = o + start + k * inter_site_m
                if v >= lo:
                    vals.append(v)
                k += 1
            return vals

        pts = [(x, y) for y in axis(oy, h) for x in axis(ox, w)]
        return cls(positions=tuple(pts), inter_site_distance_m=inter_site_m)

    def as_array(self):
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular raster: origin corner, square cells, cell counts."""

    origin: tuple = (0.0, 0.0)
    cell_size_m: float = 10.0
    width: int = 60
    height: int = 60

    def __post_init__(self):
        if self.cell_size_m <= 0:
            raise ValueError("cell_size_m must be > 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must have at least one cell per axis")

    @property
    def n_cells(self):
        return self.width * self.height

    @property
    def extent_m(self):
        return (self.width * self.cell_size_m, self.height * self.cell_size_m)

    def cell_centers(self):
        """Centers of all cells, shape (height*width, 2), row-major."""
        ox, oy = self.origin
        xs = ox + (np.arange(self.width) + 0.5) * self.cell_size_m
        ys = oy + (np.arange(self.height) + 0.5) * self.cell_size_m
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


class SinrGrid:
    """Rasterized location -> average SINR map (dB).

    Point lookup maps any position in the closed map rectangle to exactly one
    cell; the far edges fold into the last row/column.
    """

    KINDS = ("ground_truth", "estimated")

    def __init__(self, origin, cell_size_m, sinr, kind):
        sinr = np.asarray(sinr, dtype=float)
        if sinr.ndim != 2:
            raise ValueError("sinr must be a 2-D array (height, width)")
        if not np.all(np.isfinite(sinr)):
            raise ValueError("sinr must be finite in every cell")
        if cell_size_m <= 0:
            raise ValueError("cell_size_m must be > 0")
        if kind not in self.KINDS:
            raise ValueError(f"kind must be one of {self.KINDS}")
        self.origin = (float(origin[0]), float(origin[1]))
        self.cell_size_m = float(cell_size_m)
        self.sinr = sinr
        self.kind = kind

    @property
    def height(self):
        return self.sinr.shape[0]

    @property
    def width(self):
        return self.sinr.shape[1]

    @property
    def spec(self):
        return GridSpec(self.origin, self.cell_size_m, self.width, self.height)

    def cell_index(self, position):
        """(col, row) of the cell containing `position`; raises when outside."""
        i, j = self._indices(np.asarray(position, dtype=float).reshape(1, 2))
        return int(i[0]), int(j[0])

    def _indices(self, positions):
        ox, oy = self.origin
        s = self.cell_size_m
        x = positions[:, 0] - ox
        y = positions[:, 1] - oy
        if np.any(x < 0) or np.any(y < 0) or \
                np.any(x > self.width * s) or np.any(y > self.height * s):
            raise OutOfBoundsError("position outside map bounds")
        i = np.minimum((x / s).astype(int), self.width - 1)
        j = np.minimum((y / s).astype(int), self.height - 1)
        return i, j

    def lookup(self, position):
        """SINR (dB) of the cell containing a single position."""
        i, j = self.cell_index(position)
        return float(self.sinr[j, i])

    def lookup_many(self, positions):
        """Vectorized lookup for an (N, 2) position array."""
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        i, j = self._indices(positions)
        return self.sinr[j, i]

    def save(self, path):
        """Write the raster as text: header lines, then row-major dB values."""
        with open(path, "w") as f:
            f.write("rem v1\n")
            f.write(f"origin {self.origin[0]!r} {self.origin[1]!r}\n")
            f.write(f"cell_size {self.cell_size_m!r}\n")
            f.write(f"size {self.width} {self.height}\n")
            f.write(f"kind {self.kind}\n")
            for row in self.sinr:
                f.write(" ".join(f"{v:.6f}" for v in row) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            magic = f.readline().split()
            if magic[:2] != ["rem", "v1"]:
                raise ValueError(f"{path}: not a REM raster file")
            header = {}
            for _ in range(4):
                parts = f.readline().split()
                header[parts[0]] = parts[1:]
            width, height = int(header["size"][0]), int(header["size"][1])
            sinr = np.loadtxt(f, dtype=float, ndmin=2)
        if sinr.shape != (height, width):
            raise ValueError(f"{path}: raster shape {sinr.shape} does not match header")
        return cls(origin=(float(header["origin"][0]), float(header["origin"][1])),
                   cell_size_m=float(header["cell_size"][0]),
                   sinr=sinr, kind=header["kind"][0])


class BitrateTable:
    """Monotone SINR (dB) -> spectral efficiency (bit/s/Hz) breakpoint table.

    Efficiency is 0 below the lowest breakpoint, linearly interpolated between
    breakpoints, and clamped to the top value above the highest one.
    """

    def __init__(self, sinr_db, efficiency):
        sinr_db = np.asarray(sinr_db, dtype=float)
        efficiency = np.asarray(efficiency, dtype=float)
        if sinr_db.ndim != 1 or sinr_db.shape != efficiency.shape or len(sinr_db) == 0:
            raise ValueError("breakpoints must be two equal-length 1-D arrays")
        if np.any(np.diff(sinr_db) <= 0):
            raise ValueError("breakpoint SINRs must be strictly increasing")
        if np.any(np.diff(efficiency) < 0) or np.any(efficiency < 0):
            raise ValueError("spectral efficiency must be non-negative and non-decreasing")
        self.sinr_db = sinr_db
        self.efficiency = efficiency

    @classmethod
    def truncated_shannon(cls, floor_db=SHANNON_FLOOR_DB, factor=SHANNON_FACTOR,
                          cap=SHANNON_CAP_BITS_PER_HZ, top_db=35.0, step_db=0.25):
        """Default table: factor*log2(1+SINR) above the floor, capped."""
        s = np.arange(floor_db, top_db + step_db / 2, step_db)
        eff = np.minimum(factor * np.log2(1.0 + 10.0 ** (s / 10.0)), cap)
        return cls(s, eff)

    def efficiency_at(self, sinr_db):
        sinr_db = np.asarray(sinr_db, dtype=float)
        eff = np.interp(sinr_db, self.sinr_db, self.efficiency)
        eff = np.where(sinr_db < self.sinr_db[0], 0.0, eff)
        return eff if eff.ndim else float(eff)

    def save(self, path):
        with open(path, "w") as f:
            f.write("# sinr_db spectral_efficiency_bit_per_s_per_hz\n")
            for s, e in zip(self.sinr_db, self.efficiency):
                f.write(f"{float(s)!r} {float(e)!r}\n")

    @classmethod
    def load(cls, path):
        data = np.loadtxt(path, dtype=float, ndmin=2)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class Measurement:
    """A single SINR sample of the true map at a known position."""

    position: tuple
    sinr_db: float


def path_loss_db(distance_3d_m, budget: LinkBudget):
    """Log-distance path loss PL = A + 10*n*log10(d), d clamped to 1 m.

    A = 32.4 + 20*log10(f_GHz), exponent n = 2.1 (urban-microcell-like).
    """
    d = np.maximum(np.asarray(distance_3d_m, dtype=float), 1.0)
    a = 32.4 + 20.0 * np.log10(budget.carrier_freq_hz / 1e9)
    pl = a + 21.0 * np.log10(d)
    return pl if pl.ndim else float(pl)


class _ShadowingSampler:
    """Draws zero-mean Gaussian fields with correlation exp(-d/d_c) on a grid.

    Exact dense factorization below the memory budget, FFT circulant
    embedding above (exact in distribution, O(N log N) memory/time).
    """

    MAX_EXACT_CELLS = 200 * 200
    MEMORY_BUDGET_BYTES = 2_000_000_000

    def __init__(self, grid: GridSpec, std_db, decorrelation_m, method="auto"):
        if std_db < 0:
            raise ValueError("std_db must be >= 0")
        if decorrelation_m <= 0:
            raise ValueError("decorrelation_m must be > 0")
        self.grid = grid
        self.std_db = float(std_db)
        self.dc = float(decorrelation_m)
        n = grid.n_cells
        mem = 8 * n * n
        if method == "auto":
            method = "exact" if (n <= self.MAX_EXACT_CELLS
                                 and mem <= self.MEMORY_BUDGET_BYTES) else "fft"
        if method == "exact":
            if mem > self.MEMORY_BUDGET_BYTES:
                raise ShadowingResourceError(
                    f"exact covariance needs {mem / 1e9:.1f} GB for {n} cells; "
                    f"budget is {self.MEMORY_BUDGET_BYTES / 1e9:.1f} GB")
            self._prepare_exact()
        elif method == "fft":
            self._prepare_fft()
        else:
            raise ValueError(f"unknown shadowing method {method!r}")
        self.method = method

    def _prepare_exact(self):
        if self.std_db == 0:
            self._chol = None
            return
        centers = self.grid.cell_centers()
        cov = self.std_db ** 2 * np.exp(-cdist(centers, centers) / self.dc)
        cov[np.diag_indices_from(cov)] += 1e-10 * self.std_db ** 2
        self._chol = np.linalg.cholesky(cov)

    def _prepare_fft(self):
        # Torus kernel on a padded extended grid; padding of several
        # decorrelation lengths keeps the circulant eigenvalues non-negative.
        g = self.grid
        pad = int(np.ceil(5.0 * self.dc / g.cell_size_m))
        ew = 1 << int(np.ceil(np.log2(max(2 * g.width, g.width + pad, 2))))
        eh = 1 << int(np.ceil(np.log2(max(2 * g.height, g.height + pad, 2))))
        ix = np.minimum(np.arange(ew), ew - np.arange(ew)) * g.cell_size_m
        iy = np.minimum(np.arange(eh), eh - np.arange(eh)) * g.cell_size_m
        dist = np.hypot(ix[None, :], iy[:, None])
        base = self.std_db ** 2 * np.exp(-dist / self.dc)
        ev = np.fft.fft2(base).real
        self._fft_shape = (eh, ew)
        self._sqrt_ev = np.sqrt(np.maximum(ev, 0.0))

    def sample(self, seed):
        """One field, shape (height, width); deterministic per seed."""
        g = self.grid
        if self.std_db == 0:
            return np.zeros((g.height, g.width))
        rng = np.random.default_rng(seed)
        if self.method == "exact":
            z = rng.normal(size=g.n_cells)
            return (self._chol @ z).reshape(g.height, g.width)
        eh, ew = self._fft_shape
        xi = rng.normal(size=(eh, ew)) + 1j * rng.normal(size=(eh, ew))
        f = np.fft.ifft2(self._sqrt_ev * xi) * np.sqrt(ew * eh)
        return f.real[:g.height, :g.width]


def generate_shadowing(grid: GridSpec, std_db, decorrelation_m, seed, method="auto"):
    """Zero-mean correlated shadowing field (dB) over the grid cells."""
    return _ShadowingSampler(grid, std_db, decorrelation_m, method).sample(seed)


def _rx_power_dbm(grid, layout, budget, shadowing_fields):
    """Received power (dBm) from every BS at every cell, shape (cells, n_bs)."""
    centers = grid.cell_centers()
    bs = layout.as_array()
    d2 = cdist(centers, bs)
    d3 = np.hypot(d2, budget.antenna_height_delta_m)
    rx = budget.tx_power_dbm - path_loss_db(d3, budget)
    if shadowing_fields is not None:
        rx = rx - shadowing_fields
    return rx, d2


def ground_truth_rem(layout: BsLayout, budget: LinkBudget, grid: GridSpec,
                     seed, interference=True, shadowing_method="auto"):
    """True SINR map from path loss, per-BS shadowing and interference.

    Each cell is served by its nearest BS; interference is the sum of the
    powers received from all other BSs at full activity. Every BS carries an
    independent shadowing field drawn from a seed spawned off `seed`.
    """
    n_bs = len(layout.positions)
    if budget.shadowing_std_db > 0:
        sampler = _ShadowingSampler(grid, budget.shadowing_std_db,
                                    budget.decorrelation_m, shadowing_method)
        children = np.random.SeedSequence(seed).spawn(n_bs)
        fields = np.column_stack([sampler.sample(c).ravel() for c in children])
    else:
        fields = None
    rx_dbm, d2 = _rx_power_dbm(grid, layout, budget, fields)
    serving = np.argmin(d2, axis=1)
    rows = np.arange(rx_dbm.shape[0])
    signal_dbm = rx_dbm[rows, serving]
    noise_mw = 10.0 ** (budget.noise_power_dbm / 10.0)
    if interference and n_bs > 1:
        rx_mw = 10.0 ** (rx_dbm / 10.0)
        interf_mw = rx_mw.sum(axis=1) - rx_mw[rows, serving]
    else:
        interf_mw = 0.0
    sinr = signal_dbm - 10.0 * np.log10(noise_mw + interf_mw)
    return SinrGrid(grid.origin, grid.cell_size_m,
                    sinr.reshape(grid.height, grid.width), kind="ground_truth")


def path_loss_prior_rem(layout: BsLayout, budget: LinkBudget, grid: GridSpec,
                        interference=True):
    """Deterministic SINR map with shadowing disabled (the GPR prior mean)."""
    rx_dbm, d2 = _rx_power_dbm(grid, layout, budget, None)
    serving = np.argmin(d2, axis=1)
    rows = np.arange(rx_dbm.shape[0])
    signal_dbm = rx_dbm[rows, serving]
    noise_mw = 10.0 ** (budget.noise_power_dbm / 10.0)
    if interference and len(layout.positions) > 1:
        rx_mw = 10.0 ** (rx_dbm / 10.0)
        interf_mw = rx_mw.sum(axis=1) - rx_mw[rows, serving]
    else:
        interf_mw = 0.0
    sinr = signal_dbm - 10.0 * np.log10(noise_mw + interf_mw)
    return SinrGrid(grid.origin, grid.cell_size_m,
                    sinr.reshape(grid.height, grid.width), kind="ground_truth")


def sample_measurements(truth: SinrGrid, layout: BsLayout, n_per_sector, seed):
    """Uniform random measurement cells, `n_per_sector` per 120-degree sector.

    Cells are assigned to their nearest BS; each BS area splits into three
    sectors by bearing. Sampling is without replacement at cell centers, so
    measurement positions are always distinct.
    """
    grid = truth.spec
    centers = grid.cell_centers()
    bs = layout.as_array()
    d2 = cdist(centers, bs)
    serving = np.argmin(d2, axis=1)
    rel = centers - bs[serving]
    bearing = np.degrees(np.arctan2(rel[:, 1], rel[:, 0])) % 360.0
    sector = (bearing // 120.0).astype(int)
    rng = np.random.default_rng(seed)
    picks = []
    for b in range(len(bs)):
        for s in range(3):
            candidates = np.flatnonzero((serving == b) & (sector == s))
            if len(candidates) == 0:
                continue
            k = min(int(n_per_sector), len(candidates))
            # prefix of a per-sector permutation: sets for different counts
            # nest under the same seed, which makes sample-count studies
            # monotone rather than re-rolling locations per count
            picks.extend(rng.permutation(candidates)[:k])
    values = truth.sinr.ravel()
    return [Measurement(position=(centers[i, 0], centers[i, 1]),
                        sinr_db=float(values[i])) for i in sorted(picks)]


def estimate_rem_gpr(prior: SinrGrid, measurements, std_db, decorrelation_m):
    """GP posterior mean of the SINR map from sparse measurements.

    The GP models the residual between measured SINR and the deterministic
    path-loss-only prior, using the exponential shadowing kernel
    sigma^2 * exp(-d/d_c); the prior is added back after regression. With no
    measurements the estimate is the prior itself.
    """
    if decorrelation_m <= 0 or std_db <= 0:
        raise ValueError("kernel parameters must be strictly positive")
    if len(measurements) == 0:
        return SinrGrid(prior.origin, prior.cell_size_m, prior.sinr.copy(),
                        kind="estimated")
    pos = np.asarray([m.position for m in measurements], dtype=float)
    obs = np.asarray([m.sinr_db for m in measurements], dtype=float)
    d = cdist(pos, pos)
    off_diag = d[~np.eye(len(pos), dtype=bool)]
    if len(off_diag) and off_diag.min() == 0.0:
        raise ValueError("duplicate measurement positions make the kernel singular")
    residual = obs - prior.lookup_many(pos)
    k = std_db ** 2 * np.exp(-d / decorrelation_m)
    try:
        factor = cho_factor(k)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular GPR kernel matrix: {exc}") from exc
    weights = cho_solve(factor, residual)
    k_star = std_db ** 2 * np.exp(-cdist(prior.spec.cell_centers(), pos) / decorrelation_m)
    post = prior.sinr + (k_star @ weights).reshape(prior.height, prior.width)
    return SinrGrid(prior.origin, prior.cell_size_m, post, kind="estimated")


def sinr_to_bitrate(sinr_db, bandwidth_hz, table: BitrateTable):
    """Bitrate (bit/s) = bandwidth * interpolated spectral efficiency."""
    return bandwidth_hz * table.efficiency_at(sinr_db)


def bitrate_at(rem: SinrGrid, position, bandwidth_hz, table: BitrateTable):
    """Bitrate at a map position; raises OutOfBoundsError outside the map."""
    return sinr_to_bitrate(rem.lookup(position), bandwidth_hz, table)


def bitrate_along(rem: SinrGrid, positions, bandwidth_hz, table: BitrateTable):
    """Vectorized bitrate forecast along a sequence of positions."""
    return sinr_to_bitrate(rem.lookup_many(positions), bandwidth_hz, table)
