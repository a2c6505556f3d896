"""Closed-form kernel families over categorical product spaces.

All families here evaluate in O(n) per pair, in contrast to the numeric
eigendecomposition oracle in :mod:`heatbo.spectral`.  The core family is the
diffusion (heat) kernel on the space's Hamming graph,

    k(x, y) = sigma2 * prod_i rho_i ** [x_i != y_i],
    rho_i = (1 - exp(-beta_i g_i)) / (1 + (g_i - 1) exp(-beta_i g_i)),

which the exponentiated-delta kernel, the per-factor spectral product and
the one-hot RBF kernel all reproduce up to scale.  On top of these sit
generic distance-profile kernels (RBF / Matern-5/2 / rational quadratic of
the square-root Hamming distance), the direct compound-symmetry
parameterization with per-dimension correlations, additive variants, and
wrappers that make any inner kernel invariant to a group acting on the
dimensions.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass
from math import exp, log, sqrt

import numpy as np

from .space import InvalidInputError, SearchSpace

__all__ = [
    "KernelSpec",
    "Decomposition",
    "PaddedVector",
    "heat_rho",
    "heat_eval",
    "casmo_eval",
    "beta_to_gamma",
    "heat_betas_to_casmo_lengthscales",
    "combo_closed_gram",
    "hamming_family_eval",
    "rho_eval",
    "additive_sum_eval",
    "random_decomposition_eval",
    "explainable_additive_eval",
    "elementary_symmetric",
    "pad_sort",
    "padded_hamming_distance",
    "invariant_eval",
    "gram",
    "cross_gram",
    "default_spec",
    "sample_decomposition",
    "count_multiplies",
    "FAMILY_NAMES",
]


# ---------------------------------------------------------------------------
# Scalar building blocks.
# ---------------------------------------------------------------------------

_op_counter: list | None = None


@contextmanager
def count_multiplies():
    """Collect per-call multiply-accumulate counts from ``heat_eval``."""
    global _op_counter
    _op_counter = []
    try:
        yield _op_counter
    finally:
        _op_counter = None


def heat_rho(beta: float, g: int) -> float:
    """Per-dimension correlation induced by diffusion time ``beta`` on g categories."""
    if beta < 0:
        raise InvalidInputError(f"beta must be >= 0, got {beta}")
    e = exp(-beta * g)
    return (1.0 - e) / (1.0 + (g - 1.0) * e)


def _heat_rho_grad(beta: float, g: int) -> float:
    """d rho / d beta in closed form."""
    e = exp(-beta * g)
    return (g * g * e) / (1.0 + (g - 1.0) * e) ** 2


def beta_to_gamma(beta: float, g: int) -> float:
    """Map a diffusion time to the exponentiated-delta rate with the same correlation.

    gamma = -ln rho(beta); dividing the exponentiated-delta lengthscale by the
    dimension count, l_i = n * gamma_i, makes the two families coincide after
    diagonal normalization.  Strictly decreasing in beta.
    """
    if g < 2:
        raise InvalidInputError(f"need g >= 2, got {g}")
    if beta <= 0:
        raise InvalidInputError("beta must be positive; rho -> 0 gives infinite gamma")
    return -log(heat_rho(beta, g))


def heat_betas_to_casmo_lengthscales(space: SearchSpace, betas) -> np.ndarray:
    betas = _spread(space, betas)
    return np.array(
        [space.n * beta_to_gamma(b, g) for b, g in zip(betas, space.cardinalities)]
    )


def _spread(space: SearchSpace, values) -> np.ndarray:
    """Broadcast a shared hyperparameter to one value per dimension."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.shape == (1,):
        return np.full(space.n, values[0])
    if values.shape != (space.n,):
        raise InvalidInputError(
            f"need 1 or {space.n} values, got shape {values.shape}"
        )
    return values


def heat_eval(space: SearchSpace, betas, x, y, sigma2: float = 1.0) -> float:
    """Diffusion-kernel value; exactly one multiply-accumulate per dimension."""
    betas = _spread(space, betas)
    if np.any(betas < 0):
        raise InvalidInputError("betas must be >= 0")
    x = space.validate_point(x)
    y = space.validate_point(y)
    ops = 0
    value = sigma2
    for i, g in enumerate(space.cardinalities):
        if x[i] != y[i]:
            value *= heat_rho(float(betas[i]), g)
        ops += 1
    if _op_counter is not None:
        _op_counter.append(ops)
    return value


def casmo_eval(space: SearchSpace, lengthscales, x, y, sigma2: float = 1.0) -> float:
    """Exponentiated-delta kernel, normalized so the diagonal equals ``sigma2``."""
    ells = _spread(space, lengthscales)
    if np.any(ells <= 0):
        raise InvalidInputError("lengthscales must be > 0")
    x = space.validate_point(x)
    y = space.validate_point(y)
    mism = (x != y).astype(float)
    return sigma2 * exp(-float(np.dot(ells, mism)) / space.n)


def rho_eval(space: SearchSpace, rhos, x, y, sigma2: float = 1.0) -> float:
    """Compound-symmetry product kernel with explicit per-dimension correlations."""
    rhos = np.asarray(rhos, dtype=float)
    if rhos.shape != (space.n,):
        raise InvalidInputError(f"need {space.n} correlations")
    _validate_rhos(space, rhos)
    x = space.validate_point(x)
    y = space.validate_point(y)
    value = sigma2
    for i in range(space.n):
        if x[i] != y[i]:
            value *= rhos[i]
    return value


def _validate_rhos(space: SearchSpace, rhos) -> None:
    for g, r in zip(space.cardinalities, rhos):
        lo = -1.0 / (g - 1.0)
        if not (lo < r < 1.0):
            raise InvalidInputError(
                f"correlation {r} outside ({lo}, 1) for {g} categories"
            )


def combo_closed_gram(space: SearchSpace, betas, points) -> np.ndarray:
    """Unnormalized per-factor spectral product in closed form.

    Matches the numeric per-factor eigendecomposition exactly (not just up to
    scale): matching coordinates contribute (1 + (g-1)e^{-beta g})/g and
    mismatching ones (1 - e^{-beta g})/g.
    """
    betas = _spread(space, betas)
    if np.any(betas <= 0):
        raise InvalidInputError("betas must be positive")
    X = space.validate_points(points)
    m = X.shape[0]
    gram_ = np.ones((m, m))
    for i, g in enumerate(space.cardinalities):
        e = exp(-betas[i] * g)
        same = X[:, i][:, None] == X[:, i][None, :]
        gram_ *= np.where(same, (1.0 + (g - 1.0) * e) / g, (1.0 - e) / g)
    return gram_


_PROFILE_FAMILIES = ("rbf", "matern52", "rq")


def _profile(family: str, params: dict, h: np.ndarray) -> np.ndarray:
    """Isotropic profile evaluated at integer squared distance ``h = d**2``."""
    h = np.asarray(h, dtype=float)
    ell = float(params["lengthscale"])
    if ell <= 0:
        raise InvalidInputError("lengthscale must be > 0")
    if family == "rbf":
        return np.exp(-h / ell**2)
    if family == "matern52":
        t = np.sqrt(5.0 * h) / ell
        return (1.0 + t + t**2 / 3.0) * np.exp(-t)
    if family == "rq":
        alpha = float(params["alpha"])
        if alpha <= 0:
            raise InvalidInputError("rq shape alpha must be > 0")
        return (1.0 + h / (2.0 * alpha * ell**2)) ** (-alpha)
    raise InvalidInputError(f"unknown profile family {family!r}")


def hamming_family_eval(
    space: SearchSpace, family: str, params: dict, x, y, sigma2: float = 1.0
) -> float:
    """Distance-profile kernel value at the square-root Hamming distance."""
    if family not in _PROFILE_FAMILIES:
        raise InvalidInputError(f"family must be one of {_PROFILE_FAMILIES}")
    x = space.validate_point(x)
    y = space.validate_point(y)
    h = int(np.count_nonzero(x != y))
    return sigma2 * float(_profile(family, params, np.array(h)))


# ---------------------------------------------------------------------------
# Additive structures over compound-symmetry base kernels.
# ---------------------------------------------------------------------------


def _base_values(space: SearchSpace, vs, cs, x, y) -> np.ndarray:
    vs = np.asarray(vs, dtype=float)
    cs = np.asarray(cs, dtype=float)
    if vs.shape != (space.n,) or cs.shape != (space.n,):
        raise InvalidInputError(f"need {space.n} base-kernel (v, c) pairs")
    if np.any(vs <= 0):
        raise InvalidInputError("base variances must be > 0")
    _validate_rhos(space, cs / vs)
    x = space.validate_point(x)
    y = space.validate_point(y)
    return np.where(x == y, vs, cs)


def additive_sum_eval(space: SearchSpace, vs, cs, x, y) -> float:
    """First-order sum of per-dimension base kernels."""
    return float(np.sum(_base_values(space, vs, cs, x, y)))


def random_decomposition_eval(
    space: SearchSpace, decomposition: "Decomposition", vs, cs, x, y
) -> float:
    """Sum over components of products of base kernels inside each component."""
    base = _base_values(space, vs, cs, x, y)
    return float(
        sum(np.prod([base[i] for i in comp]) for comp in decomposition.components)
    )


def elementary_symmetric(values) -> np.ndarray:
    """All elementary symmetric polynomials e_0..e_n of the inputs.

    Newton-Girard recurrence from power sums: d * e_d = sum_{k=1}^{d}
    (-1)^{k-1} e_{d-k} p_k, costing O(n^2).
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    powers = np.array([np.sum(values**k) for k in range(n + 1)])
    es = np.zeros(n + 1)
    es[0] = 1.0
    for d in range(1, n + 1):
        total = 0.0
        for k in range(1, d + 1):
            total += (-1.0) ** (k - 1) * es[d - k] * powers[k]
        es[d] = total / d
    return es


def explainable_additive_eval(
    space: SearchSpace, degree_weights, vs, cs, x, y
) -> float:
    """Weighted sum over interaction degrees of base-kernel products."""
    weights = np.asarray(degree_weights, dtype=float)
    if weights.shape != (space.n,):
        raise InvalidInputError(f"need {space.n} degree weights")
    if np.any(weights < 0):
        raise InvalidInputError("degree weights must be >= 0")
    base = _base_values(space, vs, cs, x, y)
    es = elementary_symmetric(base)
    return float(np.dot(weights, es[1:]))


@dataclass(frozen=True)
class Decomposition:
    """Collection of dimension subsets defining which interactions are modeled."""

    components: tuple[tuple[int, ...], ...]
    seed: int | None = None

    def __post_init__(self):
        comps = tuple(tuple(sorted(int(i) for i in c)) for c in self.components)
        if not comps or any(len(c) == 0 for c in comps):
            raise InvalidInputError("decomposition needs nonempty components")
        object.__setattr__(self, "components", comps)

    def covers(self, n: int) -> bool:
        seen = {i for c in self.components for i in c}
        return seen == set(range(n))


def sample_decomposition(space: SearchSpace, seed: int, max_size: int = 3) -> Decomposition:
    """Uniform random partition of the dimensions into components of bounded size."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(space.n)
    comps = []
    i = 0
    while i < space.n:
        size = int(rng.integers(1, max_size + 1))
        comps.append(tuple(int(j) for j in order[i : i + size]))
        i += size
    return Decomposition(tuple(comps), seed=seed)


# ---------------------------------------------------------------------------
# Permutation-invariant encodings and wrappers.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PaddedVector:
    """Per-category blocks of repeated symbols padded with -1 (the '*' symbol)."""

    symbols: tuple[int, ...]
    block_length: int

    def __post_init__(self):
        non_pad = [s for s in self.symbols if s >= 0]
        if len(non_pad) != self.block_length:
            raise InvalidInputError("non-padding symbol count must equal block length")


def _require_equal_alphabet(space: SearchSpace) -> int:
    if not space.equal_sized():
        raise InvalidInputError("pooled dimensions must share one category alphabet")
    return space.cardinalities[0]


def _category_counts(space: SearchSpace, x) -> np.ndarray:
    g = _require_equal_alphabet(space)
    x = space.validate_point(x)
    return np.bincount(x, minlength=g)


def pad_sort(space: SearchSpace, x) -> PaddedVector:
    """Canonical permutation-invariant encoding via per-category count blocks."""
    g = _require_equal_alphabet(space)
    counts = _category_counts(space, x)
    symbols: list[int] = []
    for c in range(g):
        symbols.extend([c] * int(counts[c]))
        symbols.extend([-1] * (space.n - int(counts[c])))
    return PaddedVector(tuple(symbols), block_length=space.n)


def padded_hamming_distance(space: SearchSpace, x, y) -> int:
    """Hamming distance between padded encodings, from count differences alone."""
    cx = _category_counts(space, x)
    cy = _category_counts(space, y)
    return int(np.sum(np.abs(cx - cy)))


def _dimension_permutations(n: int, samples: int | None, seed: int):
    """Sampled (or exhaustive, when samples is None) dimension permutations."""
    if samples is None:
        return [np.array(p) for p in itertools.permutations(range(n))]
    if samples < 1:
        raise InvalidInputError("need at least one sampled group element")
    rng = np.random.default_rng(seed)
    return [rng.permutation(n) for _ in range(samples)]


def invariant_eval(
    space: SearchSpace,
    inner,
    mode: str,
    x,
    y,
    samples: int | None = 200,
    seed: int = 0,
) -> float:
    """Make a kernel invariant to dimension permutations.

    ``inner`` is a callable ``inner(x, y) -> float`` for the sum/proj/prod
    modes, or a ``(family, params)`` profile pair for ``padded_proj``.
    Modes: ``sum`` averages the inner kernel over sampled pairs of group
    elements, ``proj`` canonicalizes both inputs by sorting, ``padded_proj``
    applies a distance profile to the padded-encoding distance, and ``prod``
    multiplies over sampled pairs.
    """
    x = space.validate_point(x)
    y = space.validate_point(y)
    if mode == "proj":
        return float(inner(np.sort(x), np.sort(y)))
    if mode == "padded_proj":
        family, params = inner
        h_pad = padded_hamming_distance(space, x, y)
        sigma2 = float(params.get("sigma2", 1.0))
        return sigma2 * float(_profile(family, params, np.array(h_pad)))
    if mode in ("sum", "prod"):
        perms = _dimension_permutations(space.n, samples, seed)
        terms = [
            float(inner(x[p], y[q])) for p in perms for q in perms
        ]
        if mode == "sum":
            return float(np.mean(terms))
        return float(np.prod(terms))
    raise InvalidInputError(f"unknown invariance mode {mode!r}")


# ---------------------------------------------------------------------------
# KernelSpec: one validated hyperparameter bundle per family, plus the
# vectorized Gram builders and unconstrained packing used by the GP fitter.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family tag plus its constrained hyperparameters."""

    family: str
    params: dict
    ard: bool = True

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidInputError(
                f"unknown family {self.family!r}; known: {sorted(_FAMILIES)}"
            )

    def replace_params(self, **updates) -> "KernelSpec":
        merged = dict(self.params)
        merged.update(updates)
        return KernelSpec(self.family, merged, self.ard)

    @property
    def sigma2(self) -> float:
        return float(self.params.get("sigma2", 1.0))


def _match_tensor(X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Boolean (n, m1, m2): coordinate-wise agreement between two point sets."""
    return X1.T[:, :, None] == X2.T[:, None, :]


def _one_hot_matrix(space: SearchSpace, X: np.ndarray) -> np.ndarray:
    """(m, sum g_i) float encoding with one block per dimension."""
    offsets = np.concatenate([[0], np.cumsum(space.cardinalities)[:-1]])
    Z = np.zeros((X.shape[0], space.one_hot_width))
    cols = X + offsets  # (m, n) global column index of each coordinate
    Z[np.arange(X.shape[0])[:, None], cols] = 1.0
    return Z


_ONE_HOT_WIDTH_LIMIT = 512  # beyond this the flat per-dimension loop wins


def weighted_match_matrix(space: SearchSpace, X1, X2, weights) -> np.ndarray:
    """sum_i w_i * [x_i == y_i] for every pair of rows.

    All product-form and distance-profile kernels reduce to an affine
    function of this matrix, which is why one-hot encoding plus a standard
    continuous kernel reproduces them.  Narrow encodings go through a single
    one-hot BLAS product; wide ones use a per-dimension accumulation whose
    cost is independent of the category counts.
    """
    weights = np.asarray(weights, dtype=float)
    if space.one_hot_width <= _ONE_HOT_WIDTH_LIMIT:
        Z1 = _one_hot_matrix(space, X1)
        Z2 = Z1 if X2 is X1 else _one_hot_matrix(space, X2)
        scale = np.repeat(weights, space.cardinalities)
        return (Z1 * scale) @ Z2.T
    total = np.zeros((X1.shape[0], X2.shape[0]))
    cols1, cols2 = X1.T, X2.T
    for i in range(space.n):
        total += weights[i] * (cols1[i][:, None] == cols2[i][None, :])
    return total


def _symmetrize(K: np.ndarray) -> np.ndarray:
    """Exact symmetry regardless of BLAS summation order.

    Averaging with the transpose is bit-symmetric because IEEE addition is
    commutative, and costs two passes instead of the triangular mirror's
    mask construction.
    """
    return 0.5 * (K + K.T)


def _mismatch_counts(M: np.ndarray) -> np.ndarray:
    return np.sum(~M, axis=0)


def _logistic(t):
    return 1.0 / (1.0 + np.exp(-np.asarray(t, dtype=float)))


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def _rho_bounds(space: SearchSpace) -> np.ndarray:
    return np.array([-1.0 / (g - 1.0) for g in space.cardinalities])


class _HeatFamily:
    """Diffusion kernel; also covers the normalized per-factor spectral product."""

    name = "heat"

    def validate(self, space, spec):
        betas = _spread(space, spec.params["betas"])
        if np.any(betas < 0):
            raise InvalidInputError("betas must be >= 0")
        if spec.sigma2 <= 0:
            raise InvalidInputError("sigma2 must be > 0")
        expected = space.n if spec.ard else 1
        if np.atleast_1d(np.asarray(spec.params["betas"])).size != expected:
            raise InvalidInputError("beta count does not match the ard flag")

    def default_spec(self, space, ard=True):
        betas = np.full(space.n if ard else 1, 1.0 / space.n)
        return KernelSpec(self.name, {"betas": betas, "sigma2": 1.0}, ard)

    def _rhos(self, space, spec) -> np.ndarray:
        betas = _spread(space, spec.params["betas"])
        return np.array(
            [heat_rho(b, g) for b, g in zip(betas, space.cardinalities)]
        )

    def build(self, space, spec, M):
        rhos = self._rhos(space, spec)
        K = np.full(M.shape[1:], spec.sigma2)
        for i in range(space.n):
            K = K * np.where(M[i], 1.0, rhos[i])
        return K

    def build_pairs(self, space, spec, X1, X2):
        rhos = self._rhos(space, spec)
        if np.any(rhos <= 0):
            return None  # log-space shortcut needs strictly positive factors
        log_rho = np.log(rhos)
        match_sum = weighted_match_matrix(space, X1, X2, log_rho)
        return spec.sigma2 * np.exp(np.sum(log_rho) - match_sum)

    def pack(self, space, spec):
        betas = np.atleast_1d(np.asarray(spec.params["betas"], dtype=float))
        return np.concatenate([np.log(betas), [np.log(spec.sigma2)]])

    def unpack(self, space, spec, theta):
        k = theta.size - 1
        return spec.replace_params(
            betas=np.exp(theta[:k]), sigma2=float(np.exp(theta[-1]))
        )

    def build_with_grads(self, space, spec, M):
        betas = _spread(space, spec.params["betas"])
        rhos = self._rhos(space, spec)
        K = self.build(space, spec, M)
        ratio = np.array(
            [
                _heat_rho_grad(b, g) / r if r > 0 else 0.0
                for b, g, r in zip(betas, space.cardinalities, rhos)
            ]
        )
        per_dim = [K * np.where(M[i], 0.0, ratio[i] * betas[i]) for i in range(space.n)]
        if spec.ard:
            grads = per_dim
        else:
            grads = [sum(per_dim)]
        grads.append(K.copy())  # d/d log sigma2
        return K, grads


class _ComboClosedFamily(_HeatFamily):
    """Alias family: identical correlations, selectable by name in configs."""

    name = "combo"

    def validate(self, space, spec):
        super().validate(space, spec)
        if np.any(_spread(space, spec.params["betas"]) <= 0):
            raise InvalidInputError("spectral product needs strictly positive betas")


class _CasmoFamily:
    name = "casmopolitan"

    def validate(self, space, spec):
        ells = _spread(space, spec.params["lengthscales"])
        if np.any(ells <= 0):
            raise InvalidInputError("lengthscales must be > 0")
        if spec.sigma2 <= 0:
            raise InvalidInputError("sigma2 must be > 0")
        expected = space.n if spec.ard else 1
        if np.atleast_1d(np.asarray(spec.params["lengthscales"])).size != expected:
            raise InvalidInputError("lengthscale count does not match the ard flag")

    def default_spec(self, space, ard=True):
        ells = heat_betas_to_casmo_lengthscales(space, np.full(space.n, 1.0 / space.n))
        if not ard:
            ells = np.array([float(np.mean(ells))])
        return KernelSpec(self.name, {"lengthscales": ells, "sigma2": 1.0}, ard)

    def build(self, space, spec, M):
        ells = _spread(space, spec.params["lengthscales"])
        expo = np.zeros(M.shape[1:])
        for i in range(space.n):
            expo += np.where(M[i], 0.0, ells[i])
        return spec.sigma2 * np.exp(-expo / space.n)

    def build_pairs(self, space, spec, X1, X2):
        ells = _spread(space, spec.params["lengthscales"])
        match_sum = weighted_match_matrix(space, X1, X2, ells)
        return spec.sigma2 * np.exp(-(np.sum(ells) - match_sum) / space.n)

    def pack(self, space, spec):
        ells = np.atleast_1d(np.asarray(spec.params["lengthscales"], dtype=float))
        return np.concatenate([np.log(ells), [np.log(spec.sigma2)]])

    def unpack(self, space, spec, theta):
        k = theta.size - 1
        return spec.replace_params(
            lengthscales=np.exp(theta[:k]), sigma2=float(np.exp(theta[-1]))
        )

    def build_with_grads(self, space, spec, M):
        ells = _spread(space, spec.params["lengthscales"])
        K = self.build(space, spec, M)
        per_dim = [
            K * np.where(M[i], 0.0, -ells[i] / space.n) for i in range(space.n)
        ]
        grads = per_dim if spec.ard else [sum(per_dim)]
        grads.append(K.copy())
        return K, grads


class _RhoFamily:
    name = "rho"

    def validate(self, space, spec):
        rhos = np.asarray(spec.params["rhos"], dtype=float)
        if rhos.shape != (space.n,):
            raise InvalidInputError(f"need {space.n} correlations")
        _validate_rhos(space, rhos)
        if spec.sigma2 <= 0:
            raise InvalidInputError("sigma2 must be > 0")

    def default_spec(self, space, ard=True):
        rhos = np.array(
            [heat_rho(1.0 / space.n, g) for g in space.cardinalities]
        )
        return KernelSpec(self.name, {"rhos": rhos, "sigma2": 1.0}, True)

    def build(self, space, spec, M):
        rhos = np.asarray(spec.params["rhos"], dtype=float)
        K = np.full(M.shape[1:], spec.sigma2)
        for i in range(space.n):
            K = K * np.where(M[i], 1.0, rhos[i])
        return K

    def build_pairs(self, space, spec, X1, X2):
        rhos = np.asarray(spec.params["rhos"], dtype=float)
        if np.any(rhos <= 0):
            return None  # negative correlations need the sign-aware path
        log_rho = np.log(rhos)
        match_sum = weighted_match_matrix(space, X1, X2, log_rho)
        return spec.sigma2 * np.exp(np.sum(log_rho) - match_sum)

    def pack(self, space, spec):
        rhos = np.asarray(spec.params["rhos"], dtype=float)
        lo = _rho_bounds(space)
        return np.concatenate(
            [_logit((rhos - lo) / (1.0 - lo)), [np.log(spec.sigma2)]]
        )

    def unpack(self, space, spec, theta):
        lo = _rho_bounds(space)
        rhos = lo + (1.0 - lo) * _logistic(theta[:-1])
        return spec.replace_params(rhos=rhos, sigma2=float(np.exp(theta[-1])))

    def build_with_grads(self, space, spec, M):
        rhos = np.asarray(spec.params["rhos"], dtype=float)
        lo = _rho_bounds(space)
        m1, m2 = M.shape[1], M.shape[2]
        factors = [np.where(M[i], 1.0, rhos[i]) for i in range(space.n)]
        # prefix/suffix products allow rho_i == 0 without 0/0 division
        prefix = [np.ones((m1, m2))]
        for f in factors:
            prefix.append(prefix[-1] * f)
        suffix = [np.ones((m1, m2))]
        for f in reversed(factors):
            suffix.append(suffix[-1] * f)
        suffix.reverse()
        K = spec.sigma2 * prefix[-1]
        s = (rhos - lo) / (1.0 - lo)
        drho_dtheta = (1.0 - lo) * s * (1.0 - s)
        grads = []
        for i in range(space.n):
            leave_one_out = prefix[i] * suffix[i + 1]
            dK_drho = spec.sigma2 * np.where(M[i], 0.0, leave_one_out)
            grads.append(dK_drho * drho_dtheta[i])
        grads.append(K.copy())
        return K, grads


class _ProfileFamily:
    """Shared machinery for the distance-profile kernels."""

    profile_name: str

    def validate(self, space, spec):
        if float(spec.params["lengthscale"]) <= 0:
            raise InvalidInputError("lengthscale must be > 0")
        if spec.sigma2 <= 0:
            raise InvalidInputError("sigma2 must be > 0")

    def default_spec(self, space, ard=True):
        return KernelSpec(
            self.name, {"lengthscale": sqrt(space.n), "sigma2": 1.0}, False
        )

    def build(self, space, spec, M):
        h = _mismatch_counts(M).astype(float)
        return spec.sigma2 * _profile(self.profile_name, spec.params, h)

    def build_pairs(self, space, spec, X1, X2):
        h = space.n - weighted_match_matrix(space, X1, X2, np.ones(space.n))
        return spec.sigma2 * _profile(self.profile_name, spec.params, h)

    def pack(self, space, spec):
        return np.array(
            [np.log(float(spec.params["lengthscale"])), np.log(spec.sigma2)]
        )

    def unpack(self, space, spec, theta):
        return spec.replace_params(
            lengthscale=float(np.exp(theta[0])), sigma2=float(np.exp(theta[-1]))
        )


class _HammingRbfFamily(_ProfileFamily):
    name = "hamming_rbf"
    profile_name = "rbf"

    def build_with_grads(self, space, spec, M):
        K = self.build(space, spec, M)
        h = _mismatch_counts(M).astype(float)
        ell = float(spec.params["lengthscale"])
        return K, [K * (2.0 * h / ell**2), K.copy()]


class _HammingMatern52Family(_ProfileFamily):
    name = "hamming_matern52"
    profile_name = "matern52"

    def build_with_grads(self, space, spec, M):
        h = _mismatch_counts(M).astype(float)
        ell = float(spec.params["lengthscale"])
        t = np.sqrt(5.0 * h) / ell
        K = spec.sigma2 * (1.0 + t + t**2 / 3.0) * np.exp(-t)
        dK_dlogell = spec.sigma2 * np.exp(-t) * t**2 * (1.0 + t) / 3.0
        return K, [dK_dlogell, K.copy()]


class _HammingRqFamily(_ProfileFamily):
    name = "hamming_rq"
    profile_name = "rq"

    def validate(self, space, spec):
        super().validate(space, spec)
        if float(spec.params["alpha"]) <= 0:
            raise InvalidInputError("rq shape alpha must be > 0")

    def default_spec(self, space, ard=True):
        return KernelSpec(
            self.name,
            {"lengthscale": sqrt(space.n), "alpha": 1.0, "sigma2": 1.0},
            False,
        )

    def pack(self, space, spec):
        return np.array(
            [
                np.log(float(spec.params["lengthscale"])),
                np.log(float(spec.params["alpha"])),
                np.log(spec.sigma2),
            ]
        )

    def unpack(self, space, spec, theta):
        return spec.replace_params(
            lengthscale=float(np.exp(theta[0])),
            alpha=float(np.exp(theta[1])),
            sigma2=float(np.exp(theta[-1])),
        )

    def build_with_grads(self, space, spec, M):
        h = _mismatch_counts(M).astype(float)
        ell = float(spec.params["lengthscale"])
        alpha = float(spec.params["alpha"])
        u = 1.0 + h / (2.0 * alpha * ell**2)
        K = spec.sigma2 * u ** (-alpha)
        dK_dlogell = spec.sigma2 * u ** (-alpha - 1.0) * h / ell**2
        dK_dlogalpha = K * alpha * (-np.log(u) + h / (2.0 * alpha * ell**2 * u))
        return K, [dK_dlogell, dK_dlogalpha, K.copy()]


class _AdditiveBase:
    """Common validation and packing for the compound-symmetry additive families."""

    def _vs_cs(self, spec):
        return (
            np.asarray(spec.params["vs"], dtype=float),
            np.asarray(spec.params["cs"], dtype=float),
        )

    def validate(self, space, spec):
        vs, cs = self._vs_cs(spec)
        if vs.shape != (space.n,) or cs.shape != (space.n,):
            raise InvalidInputError(f"need {space.n} base-kernel (v, c) pairs")
        if np.any(vs <= 0):
            raise InvalidInputError("base variances must be > 0")
        _validate_rhos(space, cs / vs)

    def _base_matrices(self, space, spec, M):
        vs, cs = self._vs_cs(spec)
        return [np.where(M[i], vs[i], cs[i]) for i in range(space.n)]

    def _pack_base(self, space, spec):
        vs, cs = self._vs_cs(spec)
        lo = _rho_bounds(space)
        ratio = cs / vs
        return np.concatenate([np.log(vs), _logit((ratio - lo) / (1.0 - lo))])

    def _unpack_base(self, space, theta):
        n = theta.size // 2
        vs = np.exp(theta[:n])
        lo = _rho_bounds(space)
        ratio = lo + (1.0 - lo) * _logistic(theta[n : 2 * n])
        return vs, vs * ratio

    def default_base(self, space):
        vs = np.full(space.n, 1.0 / space.n)
        rhos = np.array([heat_rho(1.0 / space.n, g) for g in space.cardinalities])
        return vs, vs * rhos


class _AdditiveSumFamily(_AdditiveBase):
    name = "additive_sum"

    def default_spec(self, space, ard=True):
        vs, cs = self.default_base(space)
        return KernelSpec(self.name, {"vs": vs, "cs": cs}, True)

    def build(self, space, spec, M):
        return sum(self._base_matrices(space, spec, M))

    def build_pairs(self, space, spec, X1, X2):
        vs, cs = self._vs_cs(spec)
        return float(np.sum(cs)) + weighted_match_matrix(space, X1, X2, vs - cs)

    def pack(self, space, spec):
        return self._pack_base(space, spec)

    def unpack(self, space, spec, theta):
        vs, cs = self._unpack_base(space, theta)
        return spec.replace_params(vs=vs, cs=cs)


class _RandomDecompositionFamily(_AdditiveBase):
    name = "random_decomposition"

    def validate(self, space, spec):
        super().validate(space, spec)
        decomp = spec.params["decomposition"]
        if not isinstance(decomp, Decomposition) or not decomp.covers(space.n):
            raise InvalidInputError("decomposition must cover every dimension")

    def default_spec(self, space, ard=True, seed: int = 0):
        vs, cs = self.default_base(space)
        return KernelSpec(
            self.name,
            {"vs": vs, "cs": cs, "decomposition": sample_decomposition(space, seed)},
            True,
        )

    def build(self, space, spec, M):
        base = self._base_matrices(space, spec, M)
        out = np.zeros(M.shape[1:])
        for comp in spec.params["decomposition"].components:
            term = np.ones(M.shape[1:])
            for i in comp:
                term = term * base[i]
            out += term
        return out

    def pack(self, space, spec):
        return self._pack_base(space, spec)

    def unpack(self, space, spec, theta):
        vs, cs = self._unpack_base(space, theta)
        return spec.replace_params(vs=vs, cs=cs)


class _ExplainableAdditiveFamily(_AdditiveBase):
    name = "explainable_additive"

    def validate(self, space, spec):
        super().validate(space, spec)
        w = np.asarray(spec.params["degree_weights"], dtype=float)
        if w.shape != (space.n,) or np.any(w < 0):
            raise InvalidInputError("need nonnegative degree weights, one per degree")

    def default_spec(self, space, ard=True):
        vs, cs = self.default_base(space)
        return KernelSpec(
            self.name,
            {"vs": vs, "cs": cs, "degree_weights": np.full(space.n, 1.0 / space.n)},
            True,
        )

    def build(self, space, spec, M):
        base = self._base_matrices(space, spec, M)
        weights = np.asarray(spec.params["degree_weights"], dtype=float)
        n = space.n
        # Newton-Girard on matrices: power sums then degree recurrence
        powers = [np.ones(M.shape[1:])]
        for k in range(1, n + 1):
            powers.append(sum(b**k for b in base))
        es = [np.ones(M.shape[1:])]
        for d in range(1, n + 1):
            total = np.zeros(M.shape[1:])
            for k in range(1, d + 1):
                total += (-1.0) ** (k - 1) * es[d - k] * powers[k]
            es.append(total / d)
        out = np.zeros(M.shape[1:])
        for d in range(1, n + 1):
            if weights[d - 1] != 0.0:
                out += weights[d - 1] * es[d]
        return out

    def pack(self, space, spec):
        w = np.asarray(spec.params["degree_weights"], dtype=float)
        return np.concatenate(
            [self._pack_base(space, spec), np.log(np.maximum(w, 1e-300))]
        )

    def unpack(self, space, spec, theta):
        n = space.n
        vs, cs = self._unpack_base(space, theta[: 2 * n])
        return spec.replace_params(
            vs=vs, cs=cs, degree_weights=np.exp(theta[2 * n :])
        )


class _InvariantFamily:
    """Wrapper making an inner family invariant to dimension permutations."""

    name = "invariant"

    def validate(self, space, spec):
        inner = spec.params["inner"]
        mode = spec.params["mode"]
        if mode not in ("sum", "proj", "padded_proj", "prod"):
            raise InvalidInputError(f"unknown invariance mode {mode!r}")
        if not isinstance(inner, KernelSpec):
            raise InvalidInputError("inner kernel must be a KernelSpec")
        _FAMILIES[inner.family].validate(space, inner)
        if mode == "padded_proj" and inner.family not in (
            "hamming_rbf",
            "hamming_matern52",
            "hamming_rq",
        ):
            raise InvalidInputError("padded projection needs a distance-profile inner")
        if mode in ("sum", "prod") and spec.params.get("samples", 200) is not None:
            if int(spec.params.get("samples", 200)) < 1:
                raise InvalidInputError("need at least one sampled group element")

    def default_spec(self, space, ard=True):
        inner = default_spec(space, "hamming_rbf")
        return KernelSpec(
            self.name,
            {"inner": inner, "mode": "padded_proj", "samples": 200, "seed": 0},
            False,
        )

    def value(self, space, spec, x, y):
        inner = spec.params["inner"]
        mode = spec.params["mode"]
        if mode == "padded_proj":
            params = dict(inner.params)
            params["sigma2"] = inner.sigma2
            profile_name = _FAMILIES[inner.family].profile_name
            return invariant_eval(space, (profile_name, params), mode, x, y)
        inner_fn = lambda a, b: value(space, inner, a, b)
        return invariant_eval(
            space,
            inner_fn,
            mode,
            x,
            y,
            samples=spec.params.get("samples", 200),
            seed=int(spec.params.get("seed", 0)),
        )

    def pack(self, space, spec):
        inner = spec.params["inner"]
        return _FAMILIES[inner.family].pack(space, inner)

    def unpack(self, space, spec, theta):
        inner = spec.params["inner"]
        new_inner = _FAMILIES[inner.family].unpack(space, inner, theta)
        return spec.replace_params(inner=new_inner)


_FAMILIES = {
    fam.name: fam
    for fam in [
        _HeatFamily(),
        _ComboClosedFamily(),
        _CasmoFamily(),
        _RhoFamily(),
        _HammingRbfFamily(),
        _HammingMatern52Family(),
        _HammingRqFamily(),
        _AdditiveSumFamily(),
        _RandomDecompositionFamily(),
        _ExplainableAdditiveFamily(),
        _InvariantFamily(),
    ]
}

FAMILY_NAMES = tuple(sorted(_FAMILIES))

_MATCH_BASED = {
    "heat",
    "combo",
    "casmopolitan",
    "rho",
    "hamming_rbf",
    "hamming_matern52",
    "hamming_rq",
    "additive_sum",
    "random_decomposition",
    "explainable_additive",
}


def default_spec(space: SearchSpace, family: str, ard: bool = True, **overrides) -> KernelSpec:
    if family not in _FAMILIES:
        raise InvalidInputError(f"unknown family {family!r}")
    spec = _FAMILIES[family].default_spec(space, ard)
    if overrides:
        spec = spec.replace_params(**overrides)
    _FAMILIES[family].validate(space, spec)
    return spec


def validate_spec(space: SearchSpace, spec: KernelSpec) -> None:
    _FAMILIES[spec.family].validate(space, spec)


def value(space: SearchSpace, spec: KernelSpec, x, y) -> float:
    """Single kernel evaluation; the Gram builders are preferred in bulk."""
    fam = _FAMILIES[spec.family]
    if spec.family in _MATCH_BASED:
        X1 = space.validate_points([x])
        X2 = space.validate_points([y])
        return float(fam.build(space, spec, _match_tensor(X1, X2))[0, 0])
    return float(fam.value(space, spec, x, y))


def cross_gram(space: SearchSpace, spec: KernelSpec, points1, points2) -> np.ndarray:
    fam = _FAMILIES[spec.family]
    fam.validate(space, spec)
    X1 = space.validate_points(points1)
    X2 = space.validate_points(points2)
    fast = getattr(fam, "build_pairs", None)
    if fast is not None:
        K = fast(space, spec, X1, X2)
        if K is not None:
            return K
    if spec.family in _MATCH_BASED:
        return fam.build(space, spec, _match_tensor(X1, X2))
    out = np.empty((X1.shape[0], X2.shape[0]))
    for a, x in enumerate(X1):
        for b, y in enumerate(X2):
            out[a, b] = fam.value(space, spec, x, y)
    return out


def gram(space: SearchSpace, spec: KernelSpec, points) -> np.ndarray:
    """Pairwise kernel matrix; exactly symmetric by construction."""
    fam = _FAMILIES[spec.family]
    fam.validate(space, spec)
    X = space.validate_points(points)
    fast = getattr(fam, "build_pairs", None)
    if fast is not None:
        K = fast(space, spec, X, X)
        if K is not None:
            return _symmetrize(K)
    if spec.family in _MATCH_BASED:
        return fam.build(space, spec, _match_tensor(X, X))
    m = X.shape[0]
    out = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            out[a, b] = fam.value(space, spec, X[a], X[b])
            out[b, a] = out[a, b]
    return out


def diag_values(space: SearchSpace, spec: KernelSpec, points) -> np.ndarray:
    """k(x, x) per point; constant for every coordinate-match-based family."""
    X = space.validate_points(points)
    fam = _FAMILIES[spec.family]
    if spec.family in _MATCH_BASED:
        all_match = np.ones((space.n, 1, 1), dtype=bool)
        return np.full(X.shape[0], float(fam.build(space, spec, all_match)[0, 0]))
    return np.array([fam.value(space, spec, x, x) for x in X])


# Internal hooks for the GP fitter: cached match tensors and analytic grads.


def match_tensor(space: SearchSpace, points) -> np.ndarray:
    X = space.validate_points(points)
    return _match_tensor(X, X)


def gram_from_match(space: SearchSpace, spec: KernelSpec, M: np.ndarray) -> np.ndarray:
    return _FAMILIES[spec.family].build(space, spec, M)


def supports_match(spec: KernelSpec) -> bool:
    return spec.family in _MATCH_BASED


def has_analytic_grads(spec: KernelSpec) -> bool:
    return hasattr(_FAMILIES[spec.family], "build_with_grads")


def gram_with_grads(space: SearchSpace, spec: KernelSpec, M: np.ndarray):
    """Gram plus derivatives w.r.t. each unconstrained parameter, pack order."""
    return _FAMILIES[spec.family].build_with_grads(space, spec, M)


def pack_spec(space: SearchSpace, spec: KernelSpec) -> np.ndarray:
    return np.asarray(_FAMILIES[spec.family].pack(space, spec), dtype=float)


def unpack_spec(space: SearchSpace, spec: KernelSpec, theta: np.ndarray) -> KernelSpec:
    return _FAMILIES[spec.family].unpack(space, spec, np.asarray(theta, dtype=float))
