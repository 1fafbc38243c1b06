"""Least-squares federated learning task.

Synthetic non-iid data generation, local full-batch gradient descent on the
regularized quadratic loss, weighted server-side aggregation, the closed-form
optimum used as the accuracy reference, and the two convergence proxies that
drive the co-design (a global round-count proxy and a per-client gradient
norm bound).
"""

import numpy as np
from dataclasses import dataclass

KAPPA_FLOOR = 1.0 + 1e-12


class AggregationEmptyError(ValueError):
    """No local models were received; the global model carries over."""


@dataclass(frozen=True)
class LsDataset:
    """One vehicle's share of the regression data."""

    features: np.ndarray  # (S, n)
    responses: np.ndarray  # (S,)
    vehicle_id: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or y.shape != (x.shape[0],):
            raise ValueError("features must be (S, n) with matching responses")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "responses", y)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


class LsTask:
    """Local regularized quadratic loss sum((x.theta - y)^2) + lam*|theta|^2.

    The fixed step size 2/(lambda_1 + lambda_n) from the Hessian eigenvalue
    extremes gives the optimal contraction of the gradient norm, with
    condition number kappa = lambda_1 / lambda_n.
    """

    def __init__(self, dataset: LsDataset, lam):
        if lam < 0:
            raise ValueError("regularization weight must be >= 0")
        self.dataset = dataset
        self.lam = float(lam)
        x = dataset.features
        hessian = 2.0 * (x.T @ x) + 2.0 * lam * np.eye(dataset.dim)
        eigs = np.linalg.eigvalsh(hessian)
        self.lambda_min = float(eigs[0])
        self.lambda_max = float(eigs[-1])
        if self.lambda_min <= 0 and lam > 0:
            # numerically guarded; 2*lam is a hard floor for the spectrum
            self.lambda_min = 2.0 * lam
        self.kappa = self.lambda_max / max(self.lambda_min, 1e-300)
        self.alpha = 2.0 / (self.lambda_max + self.lambda_min)
        self.theta = np.zeros(dataset.dim)

    def loss(self, theta):
        r = self.dataset.features @ theta - self.dataset.responses
        return float(r @ r + self.lam * theta @ theta)

    def gradient(self, theta):
        x, y = self.dataset.features, self.dataset.responses
        return 2.0 * (x.T @ (x @ theta - y)) + 2.0 * self.lam * theta


@dataclass
class GlobalModel:
    """Server-side parameter with its round index and wire size."""

    theta: np.ndarray
    round_t: int = 0
    size_bits: int = 3200

    def __post_init__(self):
        if self.size_bits <= 0:
            raise ValueError("model size in bits must be > 0")


@dataclass(frozen=True)
class ProxyConstants:
    """Weights of the convergence proxies used by the co-design."""

    c: float = 200.0
    rho1: float = 0.001
    rho2: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("proxy constant c must be > 0")
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValueError("rho1 and rho2 must be >= 0")


def gen_synthetic(n, s_total, spectrum, n_vehicles, seed):
    """Synthetic regression data split contiguously across vehicles.

    Samples are x = sum_j z_j * sigma_j * u_j with i.i.d. standard-normal z
    and a random orthonormal basis {u_j}; responses are y = x.theta_star with
    theta_star drawn as the same kind of random combination, so the data are
    noise-free by construction. Returns (datasets, theta_star).
    """
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != (n,) or np.any(spectrum <= 0):
        raise ValueError("spectrum must be n strictly positive scale factors")
    if s_total < n_vehicles or n_vehicles < 1:
        raise ValueError("need at least one sample per vehicle")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(n, n)))  # columns orthonormal
    scaled = basis * spectrum[None, :]
    theta_star = scaled @ rng.normal(size=n)
    z = rng.normal(size=(s_total, n))
    x = z @ scaled.T
    y = x @ theta_star
    sizes = np.full(n_vehicles, s_total // n_vehicles)
    sizes[: s_total % n_vehicles] += 1
    datasets = []
    offset = 0
    for vid, size in enumerate(sizes):
        datasets.append(LsDataset(features=x[offset:offset + size],
                                  responses=y[offset:offset + size],
                                  vehicle_id=vid))
        offset += size
    return datasets, theta_star


def local_gd(theta_start, h, task: LsTask):
    """h exact gradient steps on the task's regularized loss."""
    if h < 0:
        raise ValueError("step count must be >= 0")
    theta = np.array(theta_start, dtype=float)
    for _ in range(int(h)):
        theta -= task.alpha * task.gradient(theta)
    return theta


def aggregate(models):
    """Weighted average of (theta, weight) pairs, weights renormalized to 1."""
    if not models:
        raise AggregationEmptyError("no local models to aggregate")
    thetas = np.asarray([m[0] for m in models], dtype=float)
    weights = np.asarray([m[1] for m in models], dtype=float)
    if np.any(weights < 0):
        raise ValueError("aggregation weights must be >= 0")
    total = weights.sum()
    if total <= 0:
        raise AggregationEmptyError("aggregation weights sum to zero")
    return (weights / total) @ thetas


def local_proxy(grad_norm, kappa, h):
    """Bound on the gradient norm after h local GD steps:
    grad_norm * (1 - 1/kappa)^(h-1). Accepts scalar or array h."""
    h = np.asarray(h)
    if np.any(h < 1):
        raise ValueError("h must be >= 1")
    kappa = max(kappa, KAPPA_FLOOR)
    out = grad_norm * (1.0 - 1.0 / kappa) ** (h - 1)
    return out if out.ndim else float(out)


def global_proxy(h, m, c):
    """Round-count proxy C/H + (1 + 1/M) * H for M clients doing H steps."""
    if h < 1 or m < 1:
        raise ValueError("h and m must be >= 1")
    return c / h + (1.0 + 1.0 / m) * h


def closed_form_optimum(datasets, lam):
    """Exact regularized minimizer over the pooled data.

    Solves (sum X'X + lam * S_total * I) theta = sum X'y; raises ValueError
    when the system is singular.
    """
    dim = datasets[0].dim
    a = np.zeros((dim, dim))
    b = np.zeros(dim)
    s_total = 0
    for ds in datasets:
        a += ds.features.T @ ds.features
        b += ds.features.T @ ds.responses
        s_total += ds.n_samples
    a += lam * s_total * np.eye(dim)
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate task: {exc}") from exc


def save_dataset(dataset: LsDataset, path):
    """Textual dump with header (vehicle_id, n, S); exact float round trip."""
    with open(path, "w") as f:
        f.write("lsdata v1\n")
        f.write(f"vehicle_id {dataset.vehicle_id}\n")
        f.write(f"shape {dataset.dim} {dataset.n_samples}\n")
        for row, resp in zip(dataset.features, dataset.responses):
            cells = " ".join(f"{float(v)!r}" for v in row)
            f.write(f"{cells} {float(resp)!r}\n")


def load_dataset(path):
    with open(path) as f:
        if f.readline().split()[:2] != ["lsdata", "v1"]:
            raise ValueError(f"{path}: not a dataset file")
        vid = int(f.readline().split()[1])
        _, dim, n = f.readline().split()
        data = np.loadtxt(f, dtype=float, ndmin=2)
    if data.shape != (int(n), int(dim) + 1):
        raise ValueError(f"{path}: data shape {data.shape} does not match header")
    return LsDataset(features=data[:, :-1], responses=data[:, -1], vehicle_id=vid)
