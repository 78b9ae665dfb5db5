"""Synthetic linear-representation instances and per-task sampling.

An instance is a ground truth (B_star, W_star, w_target_star, sigma_z):
source task t has regression vector B_star @ W_star[:, t], the target task
has B_star @ w_target_star, inputs are N(0, I_d) (or a fixed diagonal
covariance) and labels carry N(0, sigma_z^2) noise.

Task indices are 0-based: 0..T-1 are source tasks, index T is the target.
"""

import dataclasses
import math

import numpy as np
import scipy.linalg

from . import jsonio

# spawn-key namespaces so generator draws never collide with sampling draws
_GEN_KEY = 0x6765
_SAMPLE_KEY = 0x7361

_ORTHO_TOL = 1e-10


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclasses.dataclass(frozen=True)
class GroundTruth:
    """Immutable instance description.

    B_star is d x k with orthonormal columns, W_star is k x T,
    w_target_star is the target head in the k-dimensional latent space.
    covariance_kind is "identity" or "diagonal-bounded"; the latter stores
    the input-variance diagonal in sigma_diag (shared across tasks).
    """

    d: int
    k: int
    T: int
    B_star: np.ndarray
    W_star: np.ndarray
    w_target_star: np.ndarray
    sigma_z: float
    covariance_kind: str = "identity"
    sigma_diag: np.ndarray | None = None
    meta: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        d, k, T = self.d, self.k, self.T
        if not (isinstance(d, int) and isinstance(k, int) and isinstance(T, int)):
            raise ValueError("d, k, T must be integers")
        if not (1 <= k <= d):
            raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
        if not (k <= T):
            raise ValueError(f"need k <= T, got k={k}, T={T}")
        B = _readonly(self.B_star)
        W = _readonly(self.W_star)
        w = _readonly(self.w_target_star)
        if B.shape != (d, k):
            raise ValueError(f"B_star must be {(d, k)}, got {B.shape}")
        if W.shape != (k, T):
            raise ValueError(f"W_star must be {(k, T)}, got {W.shape}")
        if w.shape != (k,):
            raise ValueError(f"w_target_star must be {(k,)}, got {w.shape}")
        gram_err = np.max(np.abs(B.T @ B - np.eye(k)))
        if gram_err > _ORTHO_TOL:
            raise ValueError(
                f"B_star columns not orthonormal (max Gram deviation {gram_err:.3e})"
            )
        if not (float(self.sigma_z) >= 0.0):
            raise ValueError("sigma_z must be >= 0")
        if self.covariance_kind not in ("identity", "diagonal-bounded"):
            raise ValueError(f"unknown covariance_kind {self.covariance_kind!r}")
        if self.covariance_kind == "diagonal-bounded":
            if self.sigma_diag is None:
                raise ValueError("diagonal-bounded covariance needs sigma_diag")
            sd = _readonly(self.sigma_diag)
            if sd.shape != (d,) or np.any(sd <= 0):
                raise ValueError("sigma_diag must be a positive length-d vector")
            object.__setattr__(self, "sigma_diag", sd)
        elif self.sigma_diag is not None:
            raise ValueError("sigma_diag only valid for diagonal-bounded covariance")
        object.__setattr__(self, "B_star", B)
        object.__setattr__(self, "W_star", W)
        object.__setattr__(self, "w_target_star", w)
        object.__setattr__(self, "sigma_z", float(self.sigma_z))
        if self.meta.get("diverse"):
            if self.sigma_min_w() <= 1e-12 * max(1.0, self.sigma_max_w()):
                raise ValueError("instance flagged diverse but W_star is rank-deficient")

    def sigma_min_w(self):
        return float(scipy.linalg.svdvals(self.W_star)[-1])

    def sigma_max_w(self):
        return float(scipy.linalg.svdvals(self.W_star)[0])

    def regression_vector(self, task_index):
        """Full d-dimensional regression vector of a task (target = index T)."""
        if task_index == self.T:
            return self.B_star @ self.w_target_star
        if 0 <= task_index < self.T:
            return self.B_star @ self.W_star[:, task_index]
        raise IndexError(f"task_index {task_index} outside 0..{self.T}")


@dataclasses.dataclass(frozen=True)
class TaskDataset:
    """One task's sampled data: X is n x d, Y is length n."""

    task_index: int
    X: np.ndarray
    Y: np.ndarray
    n: int
    seed: int
    draw: int = 0

    def __post_init__(self):
        X = _readonly(self.X)
        Y = _readonly(self.Y)
        if X.ndim != 2 or Y.ndim != 1 or X.shape[0] != Y.shape[0]:
            raise ValueError(f"inconsistent shapes X{X.shape}, Y{Y.shape}")
        if self.n != X.shape[0]:
            raise ValueError(f"n={self.n} but X has {X.shape[0]} rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)


def sample_task(gt, task_index, n, seed, draw=0):
    """Draw n i.i.d. samples for one task.

    Deterministic in (seed, task_index, draw); distinct draw indices give
    independent streams, so incremental sampling never replays data.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    theta = gt.regression_vector(task_index)  # validates task_index
    rng = _rng(seed, _SAMPLE_KEY, task_index, draw)
    X = rng.standard_normal((n, gt.d))
    if gt.covariance_kind == "diagonal-bounded":
        X = X * np.sqrt(gt.sigma_diag)
    Y = X @ theta + gt.sigma_z * rng.standard_normal(n)
    return TaskDataset(task_index=task_index, X=X, Y=Y, n=n, seed=seed, draw=draw)


def _orthonormal_columns(rng, rows, cols):
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    # sign convention: first entry of nonnegligible magnitude made positive
    for j in range(cols):
        col = q[:, j]
        lead = col[np.argmax(np.abs(col) > 1e-12)]
        if lead < 0:
            q[:, j] = -col
    return q


def _complete_orthonormal(first_column, rng, cols):
    """Orthonormal basis whose first column is the given unit vector."""
    rows = first_column.shape[0]
    m = np.column_stack([first_column, rng.standard_normal((rows, cols - 1))])
    q, r = np.linalg.qr(m)
    if r[0, 0] < 0:
        q[:, 0] = -q[:, 0]
    return q


def make_random_instance(d, k, T, sigma_z, sigma_min_floor=0.0, seed=0):
    """Generic instance: B_star random orthonormal, W_star i.i.d. Gaussian
    rescaled so sigma_min(W_star) >= sigma_min_floor, target a random unit
    mixture of the source columns (stored in meta["mixing_nu"]).
    """
    if not (1 <= k <= d and k <= T):
        raise ValueError(f"need 1 <= k <= d and k <= T, got d={d}, k={k}, T={T}")
    rng = _rng(seed, _GEN_KEY, 0)
    B = _orthonormal_columns(rng, d, k)
    for _ in range(50):
        W = rng.standard_normal((k, T))
        svals = scipy.linalg.svdvals(W)
        if svals[-1] > 1e-12 * max(1.0, svals[0]):
            break
    else:
        raise RuntimeError("could not draw a full-rank W_star")
    if svals[-1] < sigma_min_floor:
        W = W * (sigma_min_floor / svals[-1])
    nu_mix = rng.standard_normal(T)
    nu_mix = nu_mix / np.linalg.norm(nu_mix)
    w_target = W @ nu_mix
    meta = {
        "kind": "random",
        "seed": seed,
        "diverse": True,
        "highdim_regime": bool(d > T >= k),
        "sigma_min_floor": float(sigma_min_floor),
        "mixing_nu": nu_mix.tolist(),
    }
    return GroundTruth(d=d, k=k, T=T, B_star=B, W_star=W, w_target_star=w_target,
                       sigma_z=sigma_z, meta=meta)


def almost_sparse_nu(T):
    """The almost-1-sparse relevance vector: one dominant task plus T-1 small
    equal entries; unit L2 norm, L1 norm below 2 for every T >= 2."""
    if T < 2:
        raise ValueError("need T >= 2")
    nu = np.full(T, 1.0 / (T - 1))
    nu[0] = math.sqrt(1.0 - 1.0 / (T - 1))
    return nu


def make_almost_sparse_instance(d, k, T, sigma_z, seed=0, spectrum=None):
    """Instance whose target is reachable through an almost-1-sparse mixture.

    Returns (gt, reference_nu). reference_nu is placed in the row space of
    W_star, so it is also the minimum-L2-norm solution of
    W_star @ nu = w_target_star; L1-minimization finds a genuinely sparser
    one. reference_nu is stored in meta["reference_nu"].
    """
    if not (1 <= k <= d and k <= T and T >= 2):
        raise ValueError(f"need 1 <= k <= d, k <= T, T >= 2; got d={d}, k={k}, T={T}")
    nu_ref = almost_sparse_nu(T)
    rng = _rng(seed, _GEN_KEY, 1)
    B = _orthonormal_columns(rng, d, k)
    V = _complete_orthonormal(nu_ref / np.linalg.norm(nu_ref), rng, k)
    U = np.linalg.qr(rng.standard_normal((k, k)))[0]
    if spectrum is None:
        spectrum = np.linspace(2.0, 1.0, k)
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != (k,) or np.any(spectrum <= 0):
        raise ValueError("spectrum must be k positive singular values")
    W = (U * spectrum) @ V.T
    w_target = W @ nu_ref
    meta = {
        "kind": "almost_sparse",
        "seed": seed,
        "diverse": True,
        "highdim_regime": bool(d > T >= k),
        "reference_nu": nu_ref.tolist(),
    }
    gt = GroundTruth(d=d, k=k, T=T, B_star=B, W_star=W, w_target_star=w_target,
                     sigma_z=sigma_z, meta=meta)
    return gt, nu_ref


def make_aligned_worstcase_instance(d, k, T, c_w, seed=0, sigma_z=0.0):
    """Adversarial instance for L2-driven sampling.

    The target direction is aligned with the dominant left singular vector of
    W_star while the minimum-L2-norm mixture is the all-ones vector, so an
    L2-proportional allocation spreads budget uniformly over all T tasks.
    sigma_min(W_star) = c_w / (2 sqrt((k-1) T)) and ||w_target_star|| = c_w.
    """
    if not (2 <= k <= d and k <= T):
        raise ValueError(f"need 2 <= k <= d and k <= T, got d={d}, k={k}, T={T}")
    if not c_w > 0:
        raise ValueError("c_w must be > 0")
    rng = _rng(seed, _GEN_KEY, 2)
    B = _orthonormal_columns(rng, d, k)
    U = np.linalg.qr(rng.standard_normal((k, k)))[0]
    ones_dir = np.full(T, 1.0 / math.sqrt(T))
    V = _complete_orthonormal(ones_dir, rng, k)
    sigma_top = c_w / math.sqrt(T)
    sigma_rest = c_w / (2.0 * math.sqrt((k - 1) * T))
    spectrum = np.full(k, sigma_rest)
    spectrum[0] = sigma_top
    W = (U * spectrum) @ V.T
    w_target = c_w * U[:, 0]
    meta = {
        "kind": "aligned_worstcase",
        "seed": seed,
        "c_w": float(c_w),
        "diverse": True,
        "highdim_regime": bool(d > T >= k),
        "min_l2_direction": "all_ones",
    }
    return GroundTruth(d=d, k=k, T=T, B_star=B, W_star=W, w_target_star=w_target,
                       sigma_z=sigma_z, meta=meta)


def save_instance(gt, path):
    """Write an instance as JSON; matrices are flat row-major float lists."""
    meta = dict(gt.meta)
    meta["covariance_kind"] = gt.covariance_kind
    if gt.sigma_diag is not None:
        meta["sigma_diag"] = gt.sigma_diag.tolist()
    doc = {
        "d": gt.d,
        "k": gt.k,
        "T": gt.T,
        "sigma_z": gt.sigma_z,
        "B_star": gt.B_star.ravel(order="C").tolist(),
        "W_star": gt.W_star.ravel(order="C").tolist(),
        "w_target_star": gt.w_target_star.tolist(),
        "meta": meta,
    }
    jsonio.dump(doc, path)


def load_instance(path):
    doc = jsonio.load(path)
    try:
        d, k, T = int(doc["d"]), int(doc["k"]), int(doc["T"])
        meta = dict(doc.get("meta", {}))
        covariance_kind = meta.pop("covariance_kind", "identity")
        sigma_diag = meta.pop("sigma_diag", None)
        gt = GroundTruth(
            d=d, k=k, T=T,
            B_star=np.asarray(doc["B_star"], dtype=float).reshape(d, k),
            W_star=np.asarray(doc["W_star"], dtype=float).reshape(k, T),
            w_target_star=np.asarray(doc["w_target_star"], dtype=float),
            sigma_z=float(doc["sigma_z"]),
            covariance_kind=covariance_kind,
            sigma_diag=None if sigma_diag is None else np.asarray(sigma_diag, float),
            meta=meta,
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed instance file {path}: {exc}") from exc
    return gt
