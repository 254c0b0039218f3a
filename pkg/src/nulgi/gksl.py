"""GKSL (Lindblad) dynamics of small density matrices and dichotomic measurements.

Density matrices are vectorised row-major (``rho.ravel()``), so a product
``A @ rho @ B`` becomes ``kron(A, B.T) @ vec(rho)``.  hbar = 1 and time is
the oscillation parameter t = L/E (km/GeV), so rates and Hamiltonians are
per km/GeV.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import DataError, DomainError
from .oscillation import build_pmns, flavor_hamiltonian

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = 1e-10

# Looser bounds for states produced by long exponentials.
EVOLVED_TRACE_TOL = 1e-10
EVOLVED_EIGEN_TOL = 1e-8


def _as_square(a, name):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def _hermitian_part(a):
    return 0.5 * (a + a.conj().T)


def _check_density(rho, trace_tol, eigen_tol):
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(rho))):
        raise DomainError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise DomainError(f"density matrix trace {tr.real:.15g} differs from 1")
    lowest = np.linalg.eigvalsh(_hermitian_part(rho))[0]
    if lowest < -eigen_tol:
        raise DomainError(f"density matrix has negative eigenvalue {lowest:.3g}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    rho: np.ndarray

    def __post_init__(self):
        rho = _as_square(self.rho, "rho")
        _check_density(rho, TRACE_TOL, EIGEN_TOL)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def _evolved(cls, rho):
        _check_density(rho, EVOLVED_TRACE_TOL, EVOLVED_EIGEN_TOL)
        obj = object.__new__(cls)
        object.__setattr__(obj, "rho", rho)
        return obj

    @classmethod
    def pure(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self):
        return self.rho.shape[0]


@dataclass(frozen=True, eq=False)
class DichotomicPvm:
    """Projector pair for a +/-1 valued measurement; ``m + n`` is the Hilbert space dimension."""

    pi_plus: np.ndarray
    pi_minus: np.ndarray
    m: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        pp = _as_square(self.pi_plus, "pi_plus")
        pm = _as_square(self.pi_minus, "pi_minus")
        if pp.shape != pm.shape:
            raise DomainError("projectors have different shapes")
        dim = pp.shape[0]
        tol = 1e-10
        if np.max(np.abs(pp + pm - np.eye(dim))) > tol:
            raise DomainError("projectors do not sum to the identity")
        for name, p in (("pi_plus", pp), ("pi_minus", pm)):
            if np.max(np.abs(p - p.conj().T)) > tol or np.max(np.abs(p @ p - p)) > tol:
                raise DomainError(f"{name} is not a Hermitian projector")
        if np.max(np.abs(pp @ pm)) > tol:
            raise DomainError("projectors are not orthogonal")
        m = int(round(np.trace(pp).real))
        if m < 1 or m > dim - 1:
            raise DomainError(f"both blocks must be non-empty (rank of pi_plus = {m}, dim = {dim})")
        object.__setattr__(self, "pi_plus", pp)
        object.__setattr__(self, "pi_minus", pm)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", dim - m)

    @classmethod
    def from_plus_projector(cls, pi_plus):
        pi_plus = _as_square(pi_plus, "pi_plus")
        return cls(pi_plus, np.eye(pi_plus.shape[0]) - pi_plus)

    @classmethod
    def from_indices(cls, dim, plus):
        """Measurement diagonal in the computational basis with ``plus`` spanning H+."""
        diag = np.zeros(dim)
        diag[list(plus)] = 1.0
        return cls.from_plus_projector(np.diag(diag))

    @classmethod
    def from_state(cls, psi):
        """H+ spanned by the single state ``psi`` (e.g. the initial flavour)."""
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls.from_plus_projector(np.outer(psi, psi.conj()))

    @property
    def dim(self):
        return self.m + self.n

    @property
    def observable(self):
        return self.pi_plus - self.pi_minus

    def block_bases(self):
        """Orthonormal bases (as matrix columns) of H+ and H-."""
        w, vecs = np.linalg.eigh(_hermitian_part(self.pi_plus))
        order = np.argsort(-w)
        vecs = vecs[:, order]
        return vecs[:, : self.m], vecs[:, self.m :]


@dataclass(frozen=True, eq=False)
class Dissipator:
    """Traceless jump operator ``v`` with rate ``gamma``."""

    v: np.ndarray
    gamma: float

    def __post_init__(self):
        v = _as_square(self.v, "v")
        if abs(np.trace(v)) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise DomainError("dissipator must be traceless")
        if not (self.gamma >= 0.0 and np.isfinite(self.gamma)):
            raise DomainError(f"dissipation rate must be non-negative, got {self.gamma!r}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True, eq=False)
class EvolutionMap:
    """Superoperator ``exp(L t)`` acting on row-major vectorised density matrices."""

    superoperator: np.ndarray
    t: float

    @property
    def dim(self):
        return int(round(np.sqrt(self.superoperator.shape[0])))

    def apply_matrix(self, a):
        """Image of an arbitrary (not necessarily physical) matrix."""
        a = np.asarray(a, dtype=complex)
        d = self.dim
        return (self.superoperator @ a.ravel()).reshape(d, d)

    def apply(self, rho):
        if isinstance(rho, DensityMatrix):
            rho = rho.rho
        return DensityMatrix._evolved(self.apply_matrix(rho))

    def compose(self, other):
        """``self`` after ``other``."""
        return EvolutionMap(self.superoperator @ other.superoperator, self.t + other.t)


def _left(a):
    return np.kron(a, np.eye(a.shape[0]))


def _right(a):
    return np.kron(np.eye(a.shape[0]), a.T)


def build_liouvillian(h, dissipators=()):
    """Generator ``L`` with ``d vec(rho)/dt = L @ vec(rho)``.

    Each dissipator contributes ``gamma (V rho V^+ - {V^+ V, rho}/2)``, which
    is the same as ``gamma/2 ([V, rho V^+] + [V rho, V^+])``.
    """
    h = _as_square(h, "h")
    if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(h))):
        raise DomainError("Hamiltonian must be Hermitian")
    gen = -1j * (_left(h) - _right(h))
    for d in dissipators:
        if d.v.shape != h.shape:
            raise DomainError("dissipator and Hamiltonian dimensions differ")
        if d.gamma == 0.0:
            continue
        vdv = d.v.conj().T @ d.v
        gen = gen + d.gamma * (np.kron(d.v, d.v.conj()) - 0.5 * _left(vdv) - 0.5 * _right(vdv))
    return gen


def evolution_map(generator, t):
    if t < 0:
        raise DomainError("evolution time must be non-negative")
    generator = np.asarray(generator, dtype=complex)
    if t == 0:
        return EvolutionMap(np.eye(generator.shape[0], dtype=complex), 0.0)
    return EvolutionMap(expm(generator * t), float(t))


def evolution_maps(generator, times):
    """Stack of superoperators ``exp(L t)`` for every entry of ``times``."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("evolution time must be non-negative")
    generator = np.asarray(generator, dtype=complex)
    return expm(generator[None, :, :] * times.reshape(-1, 1, 1)).reshape(times.shape + generator.shape)


def evolve(map_or_generator, rho0, t=None):
    """State after time ``t`` under a generator, or the image under an ``EvolutionMap``."""
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    if isinstance(map_or_generator, EvolutionMap):
        if t is not None and t != map_or_generator.t:
            raise DomainError("t does not match the evolution map's time")
        return map_or_generator.apply(rho0)
    if t is None:
        raise DomainError("t is required when evolving with a generator")
    if t < 0:
        raise DomainError("evolution time must be non-negative")
    if t == 0:
        return rho0
    return evolution_map(map_or_generator, t).apply(rho0)


def _check_dims(pvm, rho):
    if rho.shape[0] != pvm.dim:
        raise DomainError(f"state dimension {rho.shape[0]} does not match measurement dimension {pvm.dim}")


def measure(pvm, rho):
    """``(P+, P-, <Q>)`` for state ``rho``."""
    if isinstance(rho, DensityMatrix):
        rho = rho.rho
    rho = np.asarray(rho, dtype=complex)
    _check_dims(pvm, rho)
    p_plus = float(np.real(np.trace(pvm.pi_plus @ rho)))
    p_minus = float(np.real(np.trace(pvm.pi_minus @ rho)))
    return p_plus, p_minus, 2.0 * p_plus - 1.0


def is_incoherent(pvm, rho, tol=1e-10):
    if isinstance(rho, DensityMatrix):
        rho = rho.rho
    rho = np.asarray(rho, dtype=complex)
    _check_dims(pvm, rho)
    return bool(np.max(np.abs(pvm.pi_plus @ rho @ pvm.pi_minus)) < tol)


def preserves_incoherence(evo_map, pvm, tol=1e-10):
    """True if every block-diagonal matrix stays block-diagonal under ``evo_map``.

    Checking the ``m**2 + n**2`` matrix units of the two diagonal blocks is
    enough because the map is linear.
    """
    if evo_map.dim != pvm.dim:
        raise DomainError("map and measurement dimensions differ")
    for basis in pvm.block_bases():
        for a in basis.T:
            for b in basis.T:
                img = evo_map.apply_matrix(np.outer(a, b.conj()))
                leak = max(
                    np.max(np.abs(pvm.pi_plus @ img @ pvm.pi_minus)),
                    np.max(np.abs(pvm.pi_minus @ img @ pvm.pi_plus)),
                )
                if leak >= tol:
                    return False
    return True


def equiprobable_plus_state(pvm):
    """Uniform mixture over H+: ``pi_plus / m``."""
    return DensityMatrix(pvm.pi_plus / pvm.m)


def plus_probabilities(generator, pvm, rho0, times):
    """``Tr[pi_plus rho(t)]`` for each entry of ``times`` (batched exponentials)."""
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.rho
    times = np.asarray(times, dtype=float)
    flat = times.ravel()
    maps = evolution_maps(generator, flat)
    states = maps @ np.asarray(rho0, dtype=complex).ravel()
    # Tr[A B] = sum_ij A_ij B_ji = vec(A^T) . vec(B)
    p = (states @ pvm.pi_plus.T.ravel()).real
    return p.reshape(times.shape)


def correlation(generator, pvm, rho0, t1, t2):
    """Two-time correlation ``<Q(t1) Q(t2)>`` for a two-level system.

    Stationarity is assumed, so this is ``C(0, t2 - t1)``: the state is
    projected onto each outcome ``q`` at time 0, evolved for ``t2 - t1``, and
    ``q * <Q>`` is summed over outcomes.
    """
    if pvm.m != 1 or pvm.n != 1:
        raise DomainError("correlation is only defined for two-level (m = n = 1) measurements")
    if not (t2 >= t1 >= 0):
        raise DomainError("require t2 >= t1 >= 0")
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.rho
    rho0 = np.asarray(rho0, dtype=complex)
    _check_dims(pvm, rho0)
    tau = t2 - t1
    emap = evolution_map(generator, tau)
    q = pvm.observable
    total = 0.0
    for sign, proj in ((1.0, pvm.pi_plus), (-1.0, pvm.pi_minus)):
        branch = emap.apply_matrix(proj @ rho0 @ proj)
        total += sign * np.real(np.trace(q @ branch))
    return float(total)


def _random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


def random_incoherent_generator(rng, pvm, n_dissipators=3, *, hermitian=True, ham_scale=1.0, rate_scale=1.0):
    """Random GKSL generator whose flow maps block-diagonal states to block-diagonal states.

    The Hamiltonian is block-diagonal with respect to ``pvm``.  Each jump
    operator is either block-diagonal or purely block-off-diagonal; both
    kinds keep the incoherent set invariant.  With ``hermitian=True`` the
    jump operators are Hermitian (dephasing type), making the flow unital.

    Returns ``(generator, hamiltonian, dissipators)``.
    """
    plus, minus = pvm.block_bases()
    w = np.hstack([plus, minus])
    m, n = pvm.m, pvm.n
    dim = m + n

    h = np.zeros((dim, dim), dtype=complex)
    h[:m, :m] = _random_hermitian(rng, m)
    h[m:, m:] = _random_hermitian(rng, n)
    h = ham_scale * (w @ h @ w.conj().T)

    dissipators = []
    for k in range(n_dissipators):
        x = np.zeros((dim, dim), dtype=complex)
        if k % 2 == 0:
            block = rng.normal(size=(m, n)) + 1j * rng.normal(size=(m, n))
            x[:m, m:] = block
            x[m:, :m] = block.conj().T if hermitian else rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))
        else:
            if hermitian:
                x[:m, :m] = _random_hermitian(rng, m)
                x[m:, m:] = _random_hermitian(rng, n)
            else:
                x[:m, :m] = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
                x[m:, m:] = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            x -= np.trace(x) / dim * np.eye(dim)
        v = w @ x @ w.conj().T
        v -= np.trace(v) / dim * np.eye(dim)
        dissipators.append(Dissipator(v, rate_scale * rng.uniform(0.1, 1.0)))
    return build_liouvillian(_hermitian_part(h), dissipators), h, dissipators


def random_generator(rng, dim, n_dissipators=3, *, ham_scale=1.0, rate_scale=1.0):
    """Unstructured random GKSL generator (Hermitian part and arbitrary traceless jumps)."""
    h = ham_scale * _random_hermitian(rng, dim)
    dissipators = []
    for _ in range(n_dissipators):
        v = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        v -= np.trace(v) / dim * np.eye(dim)
        dissipators.append(Dissipator(v, rate_scale * rng.uniform(0.0, 1.0)))
    return build_liouvillian(h, dissipators), h, dissipators


def mass_basis_dephasers(params, antineutrino=False):
    """Two traceless operators, diagonal in the mass basis, whose summed dissipators
    damp every mass-basis coherence at rate ``2 * gamma``."""
    u = build_pmns(params, antineutrino)
    lam3 = np.diag([1.0, -1.0, 0.0])
    lam8 = np.diag([1.0, 1.0, -2.0]) / np.sqrt(3.0)
    return [u @ lam @ u.conj().T for lam in (lam3, lam8)]


def oscillation_generator(params, antineutrino=False, dephasing_rate=0.0):
    """Three-flavour vacuum generator in the flavour basis.

    ``dephasing_rate`` is the decay rate (per km/GeV) of each mass-basis
    off-diagonal element; populations of mass states are untouched.
    """
    h = flavor_hamiltonian(params, antineutrino)
    dissipators = [Dissipator(v, 0.5 * dephasing_rate) for v in mass_basis_dephasers(params, antineutrino)]
    return build_liouvillian(_hermitian_part(h), dissipators)


def flavor_pvm(flavor, dim=3):
    """Measurement with H+ = the single flavour state ``flavor``."""
    e = np.zeros(dim)
    e[flavor] = 1.0
    return DichotomicPvm.from_state(e)


@dataclass(frozen=True, eq=False)
class GkslModel:
    hamiltonian: np.ndarray
    dissipators: tuple
    pvm: DichotomicPvm
    initial: Optional[DensityMatrix] = None

    @property
    def generator(self):
        return build_liouvillian(self.hamiltonian, self.dissipators)

    def initial_state(self):
        return self.initial if self.initial is not None else equiprobable_plus_state(self.pvm)


def load_model(path):
    """Read a plain-text model description.

    Blocks start with a ``[name]`` line followed by the matrix rows, entries
    separated by whitespace or commas and written as Python complex
    literals (``1``, ``-0.5j``, ``0.3+0.1j``)::

        [hamiltonian]
        0 0.5
        0.5 0
        [dissipator 0.2]     # rate follows the block name
        1 0
        0 -1
        [plus]               # projector onto H+
        1 0
        0 0
        [initial]            # optional; defaults to the uniform H+ state
        1 0
        0 0
    """
    blocks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise DataError(f"{path}: unterminated block header", line=lineno)
                words = line[1:-1].split()
                if not words:
                    raise DataError(f"{path}: empty block header", line=lineno)
                blocks.append((words[0].lower(), words[1:], lineno, []))
                continue
            if not blocks:
                raise DataError(f"{path}: matrix row before any [block] header", line=lineno)
            try:
                row = [complex(tok.replace(" ", "")) for tok in line.replace(",", " ").split()]
            except ValueError:
                raise DataError(f"{path}: cannot parse matrix row {line!r}", line=lineno) from None
            blocks[-1][3].append(row)

    h = None
    dissipators = []
    plus = None
    initial = None
    for name, args, lineno, rows in blocks:
        if not rows or any(len(r) != len(rows) for r in rows):
            raise DataError(f"{path}: block [{name}] is not a square matrix", line=lineno)
        mat = np.array(rows, dtype=complex)
        try:
            if name == "hamiltonian":
                h = mat
            elif name == "dissipator":
                if len(args) != 1:
                    raise DataError(f"{path}: [dissipator RATE] needs exactly one rate", line=lineno)
                dissipators.append(Dissipator(mat, float(args[0])))
            elif name == "plus":
                plus = mat
            elif name == "initial":
                initial = mat
            else:
                raise DataError(f"{path}: unknown block [{name}]", line=lineno)
        except (DomainError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: block [{name}]: {exc}", line=lineno) from exc
    if h is None or plus is None:
        raise DataError(f"{path}: [hamiltonian] and [plus] blocks are required")
    dims = {h.shape[0], plus.shape[0], *(d.v.shape[0] for d in dissipators)}
    if initial is not None:
        dims.add(initial.shape[0])
    if len(dims) != 1:
        raise DataError(f"{path}: blocks have inconsistent dimensions {sorted(dims)}")
    try:
        build_liouvillian(h)
        model = GkslModel(
            h,
            tuple(dissipators),
            DichotomicPvm.from_plus_projector(plus),
            DensityMatrix(initial) if initial is not None else None,
        )
    except DomainError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return model
