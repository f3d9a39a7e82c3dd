"""Rotation codes: construction from primitives and closed forms, diagnostics.

A code of order ``N`` is stored by its Fock-grid coefficients ``f[k]`` (the
amplitude on ``|kN>``), with the even-``k`` and odd-``k`` sectors each
normalized to one so that ``|0_N>`` and ``|1_N>`` are unit vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
from scipy import optimize, special

from .fock import ModeSpace, rotation_diag

FAMILIES = ("cat", "squeezed_cat", "binomial", "pegg_barnett", "zero_n", "trivial", "custom")


class CodeError(ValueError):
    pass


class Primitive(NamedTuple):
    """Seed state whose rotated superpositions give the codewords."""

    state: np.ndarray
    label: str = "custom"

    def check_support(self, N: int) -> None:
        c = np.asarray(self.state)
        grid = c[::N]
        even, odd = grid[0::2], grid[1::2]
        missing = []
        if not np.any(np.abs(even) > 0):
            missing.append("even (|2kN>)")
        if not np.any(np.abs(odd) > 0):
            missing.append("odd (|(2k+1)N>)")
        if missing:
            raise CodeError(f"primitive has no support on the {' or '.join(missing)} "
                            f"Fock grid for N={N}")


class CodeDiagnostics(NamedTuple):
    nbar: float
    mean_modular_phase: complex
    delta_canonical: float
    delta_heterodyne: float


@dataclass(frozen=True, eq=False)
class RotationCode:
    """An order-``N`` bosonic rotation code on a truncated Fock space."""

    N: int
    f: np.ndarray
    space: ModeSpace
    family: str = "custom"
    params: tuple = ()
    norms: tuple[float, float] | None = None
    diagnostics: CodeDiagnostics = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise CodeError(f"rotation order must be >= 1, got {self.N}")
        if self.family not in FAMILIES:
            raise CodeError(f"unknown family {self.family!r}")
        f = np.asarray(self.f, dtype=complex)
        if (len(f) - 1) * self.N >= self.space.dim:
            raise CodeError("Fock-grid coefficients exceed the mode space")
        object.__setattr__(self, "f", f)
        for name, sector in (("even", f[0::2]), ("odd", f[1::2])):
            s = float(np.sum(np.abs(sector) ** 2))
            if abs(s - 1.0) > 1e-12:
                raise CodeError(f"{name} sector of f is not normalized (sum |f|^2 = {s})")
        object.__setattr__(self, "diagnostics", diagnostics(self))

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def param_dict(self) -> dict[str, Any]:
        return dict(self.params)

    @property
    def nbar(self) -> float:
        return self.diagnostics.nbar

    def _grid_vector(self, coeffs: np.ndarray) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[: len(coeffs) * self.N : self.N] = coeffs
        return v

    def zero(self) -> np.ndarray:
        c = self.f.copy()
        c[1::2] = 0
        return self._grid_vector(c)

    def one(self) -> np.ndarray:
        c = self.f.copy()
        c[0::2] = 0
        return self._grid_vector(c)

    def plus(self) -> np.ndarray:
        return self._grid_vector(self.f) / math.sqrt(2)

    def minus(self) -> np.ndarray:
        sign = (-1.0) ** np.arange(len(self.f))
        return self._grid_vector(sign * self.f) / math.sqrt(2)

    def basis_matrix(self) -> np.ndarray:
        """Isometry ``|0><0| + |1><1|`` from a qubit into the mode, shape (dim, 2)."""
        return np.stack([self.zero(), self.one()], axis=1)

    def logical_state(self, a: complex, b: complex) -> np.ndarray:
        return logical_state(self, (a, b))

    def code_projector(self) -> np.ndarray:
        S = self.basis_matrix()
        return S @ S.conj().T

    def with_dim(self, dim: int) -> "RotationCode":
        """Same code embedded in a larger Fock space."""
        if dim < self.dim:
            raise CodeError(f"cannot shrink code space from {self.dim} to {dim}")
        return RotationCode(self.N, self.f, ModeSpace(dim, self.space.tail_tol),
                            self.family, self.params, self.norms)

    def to_record(self) -> str:
        lines = [f"family = {self.family}", f"N = {self.N}",
                 f"params = {' '.join(f'{k}={_plain(v)!r}' for k, v in self.params)}",
                 f"dim = {self.dim}", f"tail_tol = {self.space.tail_tol!r}"]
        lines += [f"f[{k}] = {float(c.real)!r} {float(c.imag)!r}" for k, c in enumerate(self.f)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "RotationCode":
        fields: dict[str, str] = {}
        coeffs: dict[int, complex] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key.startswith("f["):
                re_, im_ = value.split()
                coeffs[int(key[2:-1])] = complex(float(re_), float(im_))
            else:
                fields[key] = value
        params = []
        for item in fields.get("params", "").split():
            k, _, v = item.partition("=")
            params.append((k, _literal(v)))
        f = np.array([coeffs[k] for k in range(len(coeffs))])
        space = ModeSpace(int(fields["dim"]), float(fields["tail_tol"]))
        return cls(int(fields["N"]), f, space, fields["family"], tuple(params))


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def _literal(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text.strip("'\"")


# --------------------------------------------------------------------------
# construction


def _normalize_sectors(f: np.ndarray) -> tuple[np.ndarray, float, float]:
    f = np.array(f, dtype=complex)
    n0 = float(np.sum(np.abs(f[0::2]) ** 2))
    n1 = float(np.sum(np.abs(f[1::2]) ** 2))
    f[0::2] /= math.sqrt(n0)
    f[1::2] /= math.sqrt(n1)
    return f, n0, n1


def _trim_dim(grid: np.ndarray, N: int, tail_tol: float) -> int:
    """Smallest multiple of 2N holding each sector up to ``tail_tol``."""
    last = 0
    for start in (0, 1):
        w = np.abs(grid[start::2]) ** 2
        beyond = np.append(np.cumsum(w[::-1])[::-1][1:], 0.0) / w.sum()
        count = int(np.argmax(beyond <= tail_tol)) + 1
        last = max(last, start + 2 * (count - 1))
    last_fock = last * N
    return 2 * N * math.ceil((last_fock + 1) / (2 * N))


def _code_from_grid(N: int, grid: np.ndarray, family: str, params: tuple,
                    tail_tol: float, dim: int | None = None,
                    norms: tuple[float, float] | None = None) -> RotationCode:
    grid = np.asarray(grid, dtype=complex)
    if not np.any(np.abs(grid[0::2]) > 0):
        raise CodeError(f"no support on the even (|2kN>) Fock grid for N={N}")
    if not np.any(np.abs(grid[1::2]) > 0):
        raise CodeError(f"no support on the odd (|(2k+1)N>) Fock grid for N={N}")
    need = _trim_dim(grid, N, tail_tol)
    if dim is None:
        dim = need
    elif dim < need:
        raise CodeError(f"dim={dim} cannot reach tail_tol={tail_tol:g} (needs {need})")
    n_k = (dim - 1) // N + 1
    kept = np.zeros(n_k, dtype=complex)
    kept[: min(n_k, len(grid))] = grid[:n_k]
    f, _, _ = _normalize_sectors(kept)
    return RotationCode(N, f, ModeSpace(dim, tail_tol), family, params, norms)


def code_from_primitive(primitive: Primitive | np.ndarray, N: int, *,
                        tail_tol: float = 1e-12, dim: int | None = None,
                        family: str = "custom", params: tuple = ()) -> RotationCode:
    """Project a primitive onto the two order-``N`` codeword sectors.

    ``|0_N> = P^0_{2N}|Theta>/sqrt(N0*)`` and ``|1_N> = P^N_{2N}|Theta>/sqrt(N1*)``;
    the two projected weights are returned as ``code.norms``.
    """
    if not isinstance(primitive, Primitive):
        primitive = Primitive(np.asarray(primitive, dtype=complex))
    primitive.check_support(N)
    c = np.asarray(primitive.state, dtype=complex)
    grid = c[::N]
    norms = (float(np.sum(np.abs(grid[0::2]) ** 2)), float(np.sum(np.abs(grid[1::2]) ** 2)))
    return _code_from_grid(N, grid, family, params, tail_tol, dim, norms)


def _grid_extent(nbar: float) -> int:
    return int(nbar + 14.0 * math.sqrt(nbar + 1.0) + 60)


def cat_grid(N: int, alpha: float, n_max: int | None = None) -> np.ndarray:
    n_max = _grid_extent(alpha**2) if n_max is None else n_max
    k = np.arange(n_max // N + 2)
    n = k * N
    return np.exp(n * math.log(alpha) - 0.5 * special.gammaln(n + 1) - 0.5 * alpha**2)


def laguerre_table(j_max: int, k_max: int, x: float) -> np.ndarray:
    """``L[j, k] = L_j^{(k)}(x)`` via the upward three-term recurrence in ``j``."""
    k = np.arange(k_max + 1, dtype=float)
    L = np.empty((j_max + 1, k_max + 1))
    L[0] = 1.0
    if j_max >= 1:
        L[1] = 1.0 + k - x
    for j in range(1, j_max):
        L[j + 1] = ((2 * j + 1 + k - x) * L[j] - (j + k) * L[j - 1]) / (j + 1)
        if not np.all(np.isfinite(L[j + 1])) or np.max(np.abs(L[j + 1])) > 1e280:
            raise OverflowError("Laguerre recurrence left the double-precision range")
    return L


def squeezed_vacuum_amplitudes(r: float, guard: float = 1e-18) -> np.ndarray:
    """Fock amplitudes of ``S(r)|0>`` (zero squeezing angle), trimmed by ``guard``."""
    if r == 0:
        return np.array([1.0])
    t = math.tanh(r)
    out = []
    best = -np.inf
    ell = 0
    while True:
        log_mag = (0.5 * math.log(1 / math.cosh(r)) + (ell / 2) * math.log(0.5 * t)
                   + 0.5 * special.gammaln(ell + 1) - special.gammaln(ell // 2 + 1))
        best = max(best, log_mag)
        out.append((-1) ** (ell // 2) * math.exp(log_mag))
        out.append(0.0)
        if log_mag < best + math.log(guard) and ell > 4:
            break
        ell += 2
    return np.array(out[:-1])


def displaced_squeezed_amplitudes(alpha: float, r: float, n_max: int,
                                  guard: float = 1e-18) -> np.ndarray:
    """Fock amplitudes ``c_n = sum_l D_{n,l}(alpha) S_{l,0}(r)`` for ``n <= n_max``.

    Displacement matrix elements are assembled from associated Laguerre
    polynomials in log space; squeezed-vacuum terms below ``guard`` times
    the largest one are dropped.
    """
    if alpha < 0:
        raise CodeError("alpha must be real and nonnegative")
    s = squeezed_vacuum_amplitudes(r, guard)
    ells = np.nonzero(s)[0]
    l_max = int(ells.max())
    x = alpha * alpha
    n = np.arange(n_max + 1)
    L = laguerre_table(min(n_max, l_max), max(n_max, l_max), x)
    lg = special.gammaln(np.arange(max(n_max, l_max) + 1) + 1)
    c = np.zeros(n_max + 1)
    for ell in ells:
        if alpha == 0:
            if ell <= n_max:
                c[ell] += s[ell]
            continue
        hi = n >= ell
        d = np.zeros(n_max + 1)
        nh = n[hi]
        logpre = -0.5 * x + 0.5 * (lg[ell] - lg[nh]) + (nh - ell) * math.log(alpha)
        d[hi] = np.exp(logpre) * L[ell, nh - ell]
        nl = n[~hi]
        logpre = -0.5 * x + 0.5 * (lg[nl] - lg[ell]) + (ell - nl) * math.log(alpha)
        d[~hi] = (-1.0) ** (ell - nl) * np.exp(logpre) * L[nl, ell - nl]
        c += d * s[ell]
    return c


def binomial_grid(K: int) -> np.ndarray:
    k = np.arange(K + 1)
    return np.sqrt(special.comb(K, k) / 2.0 ** (K - 1))


def pegg_barnett_grid(N: int, s: int) -> np.ndarray:
    return np.ones(math.ceil(s / N)) / math.sqrt(s)


def standard_code(family: str, N: int, *, alpha: float | None = None,
                  r: float = 0.0, K: int | None = None, s: int | None = None,
                  tail_tol: float = 1e-12, dim: int | None = None) -> RotationCode:
    """Build a code from one of the standard families.

    ``cat`` and ``squeezed_cat`` take ``alpha`` (and ``r``), ``binomial``
    takes ``K >= 1``, ``pegg_barnett`` takes ``s >= N + 1``; ``zero_n`` and
    ``trivial`` take nothing.
    """
    if N < 1 or int(N) != N:
        raise CodeError(f"N must be a positive integer, got {N!r}")
    if family == "cat":
        if alpha is None or alpha <= 0:
            raise CodeError("cat codes need alpha > 0")
        grid = cat_grid(N, alpha)
        return _code_from_grid(N, grid, "cat", (("alpha", alpha),), tail_tol, dim)
    if family == "squeezed_cat":
        alpha = 0.0 if alpha is None else alpha
        if alpha < 0 or r < 0 or (alpha == 0 and r == 0):
            raise CodeError("squeezed cat needs alpha >= 0, r >= 0, not both zero")
        nbar_est = alpha**2 + math.sinh(r) ** 2
        c = displaced_squeezed_amplitudes(alpha, r, _grid_extent(nbar_est) + 4 * int(math.exp(2 * r)))
        return _code_from_grid(N, c[::N], "squeezed_cat", (("alpha", alpha), ("r", r)), tail_tol, dim)
    if family == "binomial":
        if K is None or int(K) != K or K < 1:
            raise CodeError(f"binomial codes need an integer K >= 1, got {K!r}")
        return _code_from_grid(N, binomial_grid(int(K)), "binomial", (("K", int(K)),), tail_tol, dim)
    if family == "pegg_barnett":
        if s is None or int(s) != s or s < N + 1:
            raise CodeError(f"Pegg-Barnett codes need an integer s >= N+1, got {s!r}")
        return _code_from_grid(N, pegg_barnett_grid(N, int(s)), "pegg_barnett",
                               (("s", int(s)),), tail_tol, dim)
    if family == "zero_n":
        return _code_from_grid(N, np.array([1.0, 1.0]), "zero_n", (), tail_tol, dim)
    if family == "trivial":
        if N != 1:
            raise CodeError("the trivial encoding has N = 1")
        return _code_from_grid(1, np.array([1.0, 1.0]), "trivial", (), tail_tol, dim)
    raise CodeError(f"unknown family {family!r}")


def code_for_nbar(family: str, N: int, nbar: float, **kwargs) -> RotationCode:
    """Code from ``family`` whose mean excitation is closest to ``nbar``.

    Discrete families round to the nearest admissible parameter, ties going
    down; cat amplitudes are solved for continuously.
    """
    if family == "binomial":
        K = max(1, _round_half_down(2.0 * nbar / N))
        return standard_code("binomial", N, K=K, **kwargs)
    if family == "pegg_barnett":
        q = max(2, _round_half_down(2.0 * nbar / N + 1.0))
        return standard_code("pegg_barnett", N, s=q * N, **kwargs)
    if family == "cat":
        def gap(a):
            return standard_code("cat", N, alpha=a, **kwargs).nbar - nbar
        lo, hi = 1e-3, math.sqrt(nbar) + 2.0
        if gap(lo) >= 0:
            return standard_code("cat", N, alpha=lo, **kwargs)
        a = optimize.brentq(gap, lo, hi, xtol=1e-12)
        return standard_code("cat", N, alpha=a, **kwargs)
    raise CodeError(f"nbar targeting not supported for family {family!r}")


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def logical_state(code: RotationCode, bloch: tuple[complex, complex]) -> np.ndarray:
    a, b = bloch
    norm = abs(a) ** 2 + abs(b) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise CodeError(f"Bloch pair is not normalized: |a|^2+|b|^2 = {norm}")
    return a * code.zero() + b * code.one()


# --------------------------------------------------------------------------
# diagnostics


def _heterodyne_modular_phase(plus: np.ndarray, N: int, n_radial: int,
                              n_angle: int) -> complex:
    x, w = np.polynomial.legendre.leggauss(n_radial)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    radius = np.tan(0.5 * np.pi * x)
    jac = 0.5 * np.pi / np.cos(0.5 * np.pi * x) ** 2
    n = np.arange(len(plus))
    with np.errstate(divide="ignore"):
        logr = np.log(radius)
    log_amp = (-0.5 * radius[:, None] ** 2 + n[None, :] * logr[:, None]
               - 0.5 * special.gammaln(n + 1)[None, :])
    amp = np.exp(log_amp) * plus[None, :]
    phi = 2 * np.pi * np.arange(n_angle) / n_angle
    # <alpha|psi> = sum_n conj(alpha)^n c_n ... -> phase e^{-i n phi}
    overlap = amp @ np.exp(-1j * np.outer(n, phi))
    density = np.abs(overlap) ** 2
    ang = density @ np.exp(1j * N * phi) * (2 * np.pi / n_angle)
    return complex(np.sum(w * jac * radius * ang) / np.pi)


def heterodyne_modular_phase(code: RotationCode, n_radial: int = 200,
                             n_angle: int = 512, check: bool = True) -> complex:
    """``<e^{iN theta}>`` for heterodyne phase estimates on ``|+_N>``.

    With ``check`` the node counts are doubled until two successive values
    agree within 1e-8 (large codes need more than the defaults); the finer
    value is returned.
    """
    plus = code.plus()
    value = _heterodyne_modular_phase(plus, code.N, n_radial, n_angle)
    if not check:
        return value
    for _ in range(4):
        n_radial, n_angle = 2 * n_radial, 2 * n_angle
        ref = _heterodyne_modular_phase(plus, code.N, n_radial, n_angle)
        if abs(ref - value) <= 1e-8:
            return ref
        value = ref
    raise ArithmeticError(f"heterodyne quadrature not converged at {n_radial} radial nodes")


def diagnostics(code: RotationCode) -> CodeDiagnostics:
    f = code.f
    k = np.arange(len(f))
    nbar = 0.5 * float(np.sum(np.abs(f) ** 2 * k * code.N))
    mmp = 0.5 * complex(np.sum(np.abs(f[:-1] * f[1:])))
    delta = 1.0 / abs(mmp) ** 2 - 1.0 if mmp != 0 else math.inf
    het = heterodyne_modular_phase(code)
    delta_het = 1.0 / abs(het) ** 2 - 1.0 if het != 0 else math.inf
    return CodeDiagnostics(nbar, mmp, delta, delta_het)


# --------------------------------------------------------------------------
# structure helpers


def rotation_projector(space: ModeSpace | int, N2: int, ell: int) -> np.ndarray:
    """Diagonal of the projector onto Fock states ``n = ell (mod N2)``."""
    dim = space.dim if isinstance(space, ModeSpace) else int(space)
    if not 0 <= ell < N2:
        raise ValueError(f"need 0 <= ell < N2, got ell={ell}, N2={N2}")
    return (np.arange(dim) % N2 == ell).astype(float)


def dual_primitive(primitive: Primitive | np.ndarray, N: int) -> Primitive:
    """Primitive whose ``N`` rotations by ``2 pi m / N`` superpose to ``|+_N>``."""
    if not isinstance(primitive, Primitive):
        primitive = Primitive(np.asarray(primitive, dtype=complex))
    primitive.check_support(N)
    theta = np.asarray(primitive.state, dtype=complex)
    dim = len(theta)
    p0 = rotation_projector(dim, 2 * N, 0)
    p1 = rotation_projector(dim, 2 * N, N % (2 * N))
    scale = (2 * N) ** 2
    n0 = scale * float(np.real(np.vdot(theta, p0 * theta)))
    n1 = scale * float(np.real(np.vdot(theta, p1 * theta)))
    c_plus = math.sqrt(n1) + math.sqrt(n0)
    c_minus = math.sqrt(n1) - math.sqrt(n0)
    out = c_plus * theta + c_minus * rotation_diag(dim, math.pi / N) * theta
    norm2 = float(np.real(np.vdot(out, out)))
    if norm2 < 1e-14:
        raise CodeError("degenerate dual-primitive normalization")
    return Primitive(out / math.sqrt(norm2), primitive.label + "'")


class BreedResult(NamedTuple):
    state: np.ndarray
    probability: float


def breed(zero_state: np.ndarray, N: int, ancilla: RotationCode) -> BreedResult:
    """One round of rotation-symmetry breeding, ``|0_N> -> |0_{2N}>`` on outcome "+".

    The data couples to an ancilla ``|+_M>`` through ``exp(i pi n n / 2NM)``
    and the ancilla is projected onto ``|+_M>``.
    """
    psi = np.asarray(zero_state, dtype=complex)
    M = ancilla.N
    n_d = np.arange(len(psi))
    n_a = np.arange(ancilla.dim)
    phase = np.exp(1j * np.pi * np.outer(n_d, n_a) / (2 * N * M))
    plus = ancilla.plus()
    joint = phase * np.outer(psi, plus)
    out = joint @ plus.conj()
    prob = float(np.real(np.vdot(out, out)))
    if prob < 1e-14:
        raise CodeError(f"breeding outcome probability {prob:.2e} is degenerate")
    return BreedResult(out / math.sqrt(prob), prob)
