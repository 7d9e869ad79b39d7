"""Process tensor of a Gaussian bath as a matrix product operator.

The bath influence on ``N`` time steps is represented as a chain of site
tensors ``A[n]`` with legs ``(past bond, Liouville index, future bond)``.
The system propagators are *not* part of the network: they are supplied as
control superoperators between the sites, so one process tensor serves any
(time-dependent) system Hamiltonian.

Because the coupling operator is diagonal in its eigenbasis, the influence
weights are diagonal in the Liouville index and each site's input and output
control legs coincide.  Only that diagonal is stored; ``mpo_tensor`` expands
it to the four-leg form.

Step ``n`` covers ``[n dt, (n+1) dt]``.  Control slot ``j`` sits at time
``t_j = j dt`` between sites ``j - 1`` and ``j``; a plain propagation step is
``U_half . U_half`` around the influence of that step (symmetric Trotter
splitting).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .bath_kernels import BathKernel, InfluenceCoefficients
from .liouville import S_Z, check_hermitian, conjugation_superoperator, trace_cap

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
# The zip-up pass truncates against a non-canonical environment, so it keeps
# a margin below the requested cutoff; the canonical sweep applies the cutoff.
_ZIP_FACTOR = 1e-2


class BondDimensionError(RuntimeError):
    """Raised when truncation cannot keep the bond dimension below ``max_bond``."""

    def __init__(self, message: str, bond_dims):
        super().__init__(f"{message}; bond profile: {list(bond_dims)}")
        self.bond_dims = list(bond_dims)


@dataclass(frozen=True)
class PTConfig:
    """Numerical parameters of a process-tensor build.

    ``coupling`` is the system operator ``s`` in ``H_I = s B``; it must be
    Hermitian.  ``memory`` is the cutoff ``K`` in time steps.
    """

    dt: float
    n_steps: int
    memory: int
    svd_rel_cutoff: float = 1e-8
    max_bond: int | None = None
    coupling: np.ndarray = field(default_factory=lambda: S_Z.copy())

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.memory < 1:
            raise ValueError("memory cutoff K must be >= 1")
        if not 0 < self.svd_rel_cutoff < 1:
            raise ValueError("svd_rel_cutoff must lie in (0, 1)")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be positive")
        object.__setattr__(self, "coupling", check_hermitian(self.coupling, "coupling operator"))

    @property
    def dim(self) -> int:
        return self.coupling.shape[0]

    def coupling_basis(self):
        """Eigenvalues of the coupling operator and the unitary diagonalising it."""
        s = self.coupling
        if np.allclose(s, np.diag(np.diag(s)), atol=0, rtol=0):
            return np.real(np.diag(s)).copy(), np.eye(self.dim, dtype=complex)
        evals, vecs = np.linalg.eigh(s)
        return evals, vecs

    def to_dict(self) -> dict:
        d = asdict(self)
        c = np.asarray(self.coupling)
        d["coupling"] = {"re": c.real.tolist(), "im": c.imag.tolist()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PTConfig":
        d = dict(d)
        c = d.pop("coupling")
        coupling = np.array(c["re"]) + 1j * np.array(c["im"])
        return cls(coupling=coupling, **d)


def influence_matrix(eta: complex, eigvals) -> np.ndarray:
    """Weights ``I[m, mu]`` coupling the current Liouville index ``m`` to an earlier ``mu``.

    ``I[(a, b), (c, d)] = exp(-(s_a - s_b) (eta s_c - conj(eta) s_d))``
    with ``s`` the coupling eigenvalues and ``(a, b)`` a row-major pair.
    """
    s = np.asarray(eigvals, dtype=float)
    d = s.size
    diff = (s[:, None] - s[None, :]).reshape(d * d)
    earlier = (eta * s[:, None] - np.conj(eta) * s[None, :]).reshape(d * d)
    return np.exp(-np.outer(diff, earlier))


def self_influence(eta0: complex, eigvals) -> np.ndarray:
    """Same-step weights ``exp(-(s_a - s_b)(eta0 s_a - conj(eta0) s_b))``."""
    return np.diag(influence_matrix(eta0, eigvals)).copy()


def _difference_classes(eigvals):
    """Distinct values of ``s_a - s_b`` and the class of each Liouville index."""
    s = np.asarray(eigvals, dtype=float)
    diff = (s[:, None] - s[None, :]).reshape(-1)
    values, classes = np.unique(np.round(diff, 12), return_inverse=True)
    return values, classes.reshape(-1)


def build_influence_row(k: int, eta: InfluenceCoefficients, eigvals) -> list[np.ndarray]:
    """MPO for the influence row of step ``k``.

    Returns tensors for sites ``max(0, k - K) .. k`` with legs
    ``(left bond, Liouville index, right bond)``.  The weight linking step
    ``k`` to an earlier step depends on the current Liouville index only
    through ``s_a - s_b``, so the bond carries that difference class back to
    the earlier sites (dimension 3 for a spin-1/2 coupling, 1 at both ends).
    """
    eigvals = np.asarray(eigvals, dtype=float)
    dd = eigvals.size**2
    values, classes = _difference_classes(eigvals)
    nc = values.size
    rep = np.array([np.flatnonzero(classes == c)[0] for c in range(nc)])
    first = max(0, k - eta.memory)
    idx = np.arange(nc)
    row = []
    for j in range(first, k):
        inf = influence_matrix(eta[k - j], eigvals)[rep]  # [class, mu_j]
        if j == first:
            t = inf.T[None, :, :]
        else:
            t = np.zeros((nc, dd, nc), dtype=complex)
            t[idx, :, idx] = inf
        row.append(t)
    last = self_influence(eta[0], eigvals)
    if k == first:
        row.append(last[None, :, None])
    else:
        t = np.zeros((nc, dd, 1), dtype=complex)
        t[classes, np.arange(dd), 0] = last
        row.append(t)
    return row


def _svd(m: np.ndarray):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def _truncate(s: np.ndarray, rel_cutoff: float) -> int:
    if s.size == 0 or s[0] == 0:
        return 1
    keep = int(np.count_nonzero(s >= rel_cutoff * s[0]))
    return max(1, keep)


class ProcessTensor:
    """Process tensor MPO built from a bath kernel.

    Attributes
    ----------
    sites : list of ndarray
        Site ``n`` has shape ``(chi_n, d**2, chi_{n+1})``; entries are the
        influence weights as a function of the Liouville index in the
        coupling eigenbasis.
    config : PTConfig
    """

    def __init__(self, sites, config: PTConfig, eta: InfluenceCoefficients | None = None,
                 metadata: dict | None = None):
        self.sites = [np.asarray(s, dtype=complex) for s in sites]
        self.config = config
        self.eta = eta
        self.metadata = dict(metadata or {})
        self.eigvals, self.basis = config.coupling_basis()
        d = config.dim
        self._identity_basis = np.allclose(self.basis, np.eye(d))
        self._to_eig = conjugation_superoperator(self.basis.conj().T)
        self._from_eig = conjugation_superoperator(self.basis)
        self._caps = None
        if len(self.sites) != config.n_steps:
            raise ValueError("number of sites does not match n_steps")

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def bond_dims(self) -> list[int]:
        return [s.shape[0] for s in self.sites] + [self.sites[-1].shape[2]]

    def mpo_tensor(self, n: int) -> np.ndarray:
        """Four-leg site tensor ``(past bond, future bond, input, output)``."""
        a = self.sites[n]
        dd = a.shape[1]
        t = np.zeros((a.shape[0], a.shape[2], dd, dd), dtype=complex)
        idx = np.arange(dd)
        t[:, :, idx, idx] = a.transpose(0, 2, 1)
        return t

    # -- basis handling ----------------------------------------------------

    def to_internal(self, superop) -> np.ndarray:
        """Express a superoperator in the coupling eigenbasis."""
        superop = np.asarray(superop, dtype=complex)
        if self._identity_basis:
            return superop
        return self._to_eig @ superop @ self._from_eig

    def state_to_internal(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        return v if self._identity_basis else self._to_eig @ v

    def state_from_internal(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        return v if self._identity_basis else self._from_eig @ v

    # -- caps --------------------------------------------------------------

    @property
    def caps(self) -> list[np.ndarray]:
        """Bond vectors closing the future with identity controls and a trace.

        ``caps[j]`` closes the bond entering site ``j`` (``caps[N] == [1]``).
        """
        if self._caps is None:
            d = self.dim
            diag = np.arange(d) * (d + 1)
            f = np.ones((1, d), dtype=complex)  # [bond, diagonal Liouville index]
            caps = [np.ones(1, dtype=complex)]
            for a in reversed(self.sites):
                f = np.einsum("bmc,cm->bm", a[:, diag, :], f)
                caps.append(f.mean(axis=1))
            self._caps = caps[::-1]
        return self._caps

    # -- contraction -------------------------------------------------------

    def apply_controls(self, controls, rho0, final=None) -> complex:
        """Contract the network with one control per slot and a closing trace.

        ``controls[n]`` acts before site ``n``; ``final`` (default identity)
        acts after the last site, just before the trace cap.
        """
        if len(controls) != len(self):
            raise ValueError(f"expected {len(self)} controls, got {len(controls)}")
        d = self.dim
        e = self.to_internal(controls[0]) @ self.state_to_internal(rho0)
        e = e[None, :]
        for n, a in enumerate(self.sites):
            if n > 0:
                e = e @ self.to_internal(controls[n]).T
            e = np.einsum("bm,bmc->cm", e, a)
        cap = trace_cap(d)
        if final is not None:
            cap = cap @ self.to_internal(final)
        return complex(e[0] @ cap)

    # -- serialisation -----------------------------------------------------

    def save(self, path) -> Path:
        """Write an ``.npz`` archive with config, bond dims, eta and the site tensors.

        Sites that are the same array object (the reused stationary site) are
        stored once.
        """
        path = Path(path)
        meta = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "bond_dims": self.bond_dims,
            "metadata": self.metadata,
        }
        slot: dict[int, int] = {}
        arrays = {}
        index = np.empty(len(self.sites), dtype=np.int64)
        for n, a in enumerate(self.sites):
            if id(a) not in slot:
                slot[id(a)] = len(slot)
                arrays[f"site_{slot[id(a)]:06d}"] = a
            index[n] = slot[id(a)]
        arrays["site_index"] = index
        if self.eta is not None:
            arrays["eta"] = self.eta.eta
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)
        return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")

    @classmethod
    def load(cls, path) -> "ProcessTensor":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported process tensor format {meta.get('format_version')}")
            config = PTConfig.from_dict(meta["config"])
            index = z["site_index"]
            unique = {int(i): z[f"site_{int(i):06d}"] for i in np.unique(index)}
            sites = [unique[int(i)] for i in index]
            eta = InfluenceCoefficients(z["eta"], config.dt, config.memory) if "eta" in z else None
        return cls(sites, config, eta=eta, metadata=meta.get("metadata"))


def _check_bond(k: int, max_bond: int | None, bond: int, mps) -> None:
    if max_bond is not None and k > max_bond:
        dims = [m.shape[0] for m in mps] + [1]
        raise BondDimensionError(f"bond {bond} needs dimension {k} > max_bond={max_bond}", dims)


def _absorb_row(mps, row, first: int, cfg: PTConfig) -> None:
    """Multiply a row MPO into sites ``first..k`` and recompress.

    A right-to-left zip-up applies the row and truncates as it goes; a
    left-to-right sweep then retruncates in canonical form.  On entry every
    site left of ``first`` is left-canonical; on exit all sites but the last
    are, and the last carries the norm.
    """
    cut, max_bond = cfg.svd_rel_cutoff, cfg.max_bond
    k = first + len(row) - 1
    carry = None
    for j in range(k, first - 1, -1):
        a, r = mps[j], row[j - first]
        b = np.einsum("amb,xmy->axmby", a, r)
        b = b.reshape(a.shape[0] * r.shape[0], a.shape[1], a.shape[2] * r.shape[2])
        if carry is not None:
            b = np.tensordot(b, carry, axes=(2, 0))
        if j == first:
            mps[j] = b
            break
        u, s, vh = _svd(b.reshape(b.shape[0], -1))
        n = _truncate(s, cut * _ZIP_FACTOR)
        mps[j] = vh[:n].reshape(n, b.shape[1], b.shape[2])
        carry = u[:, :n] * s[:n]
    for j in range(first, k):
        a = mps[j]
        u, s, vh = _svd(a.reshape(-1, a.shape[2]))
        n = _truncate(s, cut)
        _check_bond(n, max_bond, j + 1, mps)
        mps[j] = u[:, :n].reshape(a.shape[0], a.shape[1], n)
        mps[j + 1] = np.tensordot(s[:n, None] * vh[:n], mps[j + 1], axes=(1, 0))


# bond vectors closer than this to a repeated site's fixed point share its correction
_FIXED_POINT_TOL = 1e-13


def _polar(m: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition."""
    u, _, vh = _svd(m)
    return u @ vh


class _Aligner:
    """Fixes the gauge of finished sites so a stationary bulk repeats exactly.

    Each site leaving the active window gets a unitary on its right bond
    chosen to bring it as close as possible to the previous finished site
    (orthogonal Procrustes).  Once consecutive sites agree to ``tol`` the
    chain has become translation invariant.

    The active window is then stationary only up to a phase per step, which
    the real normalisation does not remove.  It is measured from the window
    closed with a trace, seen from the aligned bond.
    """

    def __init__(self, tol: float, patience: int, diag: np.ndarray):
        self.tol, self.patience = tol, patience
        self.diag = diag
        self.prev = None
        self.closure = None
        self.phase = 0.0
        self.change = math.inf
        self.streak = 0

    def _close(self, window) -> np.ndarray:
        f = np.ones((1, self.diag.size), dtype=complex)
        for a in reversed(window):
            f = np.einsum("bmc,cm->bm", a[:, self.diag, :], f)
        return f

    def finish(self, mps, e: int) -> None:
        a = mps[e]
        if self.prev is not None and self.prev.shape == a.shape:
            w = _polar(a.reshape(-1, a.shape[2]).conj().T @ self.prev.reshape(-1, a.shape[2]))
            a = np.tensordot(a, w, axes=(2, 0))
            mps[e] = a
            mps[e + 1] = np.tensordot(w.conj().T, mps[e + 1], axes=(1, 0))
            self.change = float(np.max(np.abs(a - self.prev)) / np.max(np.abs(a)))
        else:
            self.change = math.inf
        closure = self._close(mps[e + 1:])
        if self.closure is not None and self.closure.shape == closure.shape:
            self.phase = float(np.angle(np.vdot(self.closure, closure)))
        self.closure = closure
        self.streak = self.streak + 1 if self.change < self.tol else 0
        self.prev = a

    @property
    def converged(self) -> bool:
        return self.streak >= self.patience


def _impose_causality(mps, diag) -> float:
    """Make every site close the future identically from each population.

    The exact influence functional is causal: once the future is traced out
    with identity controls, the bond vector it leaves behind does not depend
    on which population the site was entered from.  That is what keeps the
    trace fixed under any trace-preserving control.  Truncation breaks it at
    the cutoff level, and the defect accumulates step by step.  Sweeping from
    the right, each site gets the smallest (rank one) change that restores
    it.  A repeated site is corrected once, against the fixed point of its
    transfer matrix; copies are corrected individually until the incoming
    bond vector has converged to that fixed point.  Returns the largest
    relative correction.
    """
    def corrected(a, r):
        x = np.einsum("bmc,c->bm", a[:, diag, :], r)
        fix = (x.mean(axis=1, keepdims=True) - x)[:, :, None] * (r.conj() / np.vdot(r, r))
        b = a.copy()
        b[:, diag, :] += fix
        return b, float(np.max(np.abs(fix)) / np.max(np.abs(a)))

    r = np.ones(1, dtype=complex)
    fixed_points: dict[int, np.ndarray] = {}
    done: dict[int, np.ndarray] = {}
    worst = 0.0
    for j in range(len(mps) - 1, -1, -1):
        a = mps[j]
        key = id(a)
        if j > 0 and mps[j - 1] is a and key not in fixed_points:
            vals, vecs = np.linalg.eig(a[:, diag, :].mean(axis=1))
            fixed_points[key] = vecs[:, np.argmax(np.abs(vals))]
        if key in fixed_points:
            rs = fixed_points[key]
            dev = np.linalg.norm(r - (np.vdot(rs, r) / np.vdot(rs, rs)) * rs) / np.linalg.norm(r)
            if dev < _FIXED_POINT_TOL:
                if key not in done:
                    done[key], err = corrected(a, rs)
                    worst = max(worst, err)
                mps[j] = done[key]
            else:
                mps[j], err = corrected(a, r)
                worst = max(worst, err)
        else:
            mps[j], err = corrected(a, r)
            worst = max(worst, err)
        r = mps[j][:, diag, :].mean(axis=1) @ r
        r /= np.max(np.abs(r))
    return worst


def _log_closure(mps, diag):
    """Identity-control closure from each population, as ``(values / scale, log scale)``."""
    f = np.ones((1, diag.size), dtype=complex)
    log_f = 0.0
    for a in reversed(mps):
        f = np.einsum("bmc,cm->bm", a[:, diag, :], f)
        s = float(np.max(np.abs(f)))
        f /= s
        log_f += math.log(s)
    return f[0], log_f


def contract_process_tensor(kernel: BathKernel, cfg: PTConfig, progress=None,
                            stationary_tol: float | None = 1e-8,
                            patience: int = 3) -> ProcessTensor:
    """Build the process tensor for ``cfg.n_steps`` steps of the given bath.

    Each step's influence row is absorbed into the growing chain and the
    affected window (the last ``K + 1`` sites) is recompressed by SVD,
    discarding singular values below ``svd_rel_cutoff`` times the largest.

    The bath is stationary, so once the start-up transient has passed every
    new row produces the same finished site up to a gauge.  Finished sites
    are gauge-aligned; when ``patience`` consecutive ones agree to a relative
    ``stationary_tol`` the remaining steps reuse that site and the final
    window instead of being contracted.  ``stationary_tol=None`` disables
    this and contracts every row.

    The finished chain is made causal and normalised (see
    ``_impose_causality``), so the trace survives any trace-preserving
    controls.  The size of both corrections is kept in ``metadata``.
    """
    eta = kernel.influence_eta(cfg.dt, cfg.memory)
    eigvals, _ = cfg.coupling_basis()
    dd = eigvals.size**2
    n_steps, memory = cfg.n_steps, cfg.memory
    mps: list[np.ndarray] = []
    log_scale = 0.0
    max_seen = 1
    diag = np.arange(eigvals.size) * (eigvals.size + 1)
    aligner = _Aligner(stationary_tol, patience, diag) if stationary_tol else None
    repeat_from = None
    for k in range(n_steps):
        mps.append(np.ones((1, dd, 1), dtype=complex))
        first = max(0, k - memory)
        _absorb_row(mps, build_influence_row(k, eta, eigvals), first, cfg)
        norm = np.linalg.norm(mps[k])
        mps[k] /= norm
        step_log = math.log(norm)
        log_scale += step_log
        max_seen = max(max_seen, max(m.shape[0] for m in mps[first:]))
        if progress is not None:
            progress(k, mps)
        if aligner is None or k < memory or k == n_steps - 1:
            continue
        aligner.finish(mps, k - memory)
        if aligner.converged:
            e = k - memory
            remaining = n_steps - 1 - k
            window = mps[e + 1:]
            window[-1] = window[-1] * np.exp(1j * remaining * aligner.phase)
            mps = mps[: e + 1] + [mps[e]] * remaining + window
            log_scale += remaining * step_log
            repeat_from = e
            break
    # Under identity controls the exact influence functional closes to one
    # from either population.  Truncation (and, with reuse, the per-step
    # phase known only to the alignment tolerance) leaves a small global
    # factor; divide it out and record how large it was.
    f, log_f = _log_closure(mps, diag)
    closure_spread = float(np.max(np.abs(f - f.mean())) / abs(f.mean()))
    causality_fix = _impose_causality(mps, diag)
    f, log_f = _log_closure(mps, diag)
    z = f.mean()
    log_z = log_f + math.log(abs(z))
    closure_error = abs(np.expm1(complex(log_scale + log_z, np.angle(z))))
    mps[-1] = mps[-1] * (abs(z) / z)
    factor = math.exp(-log_z / n_steps)
    scaled: dict[int, np.ndarray] = {}
    sites = []
    for m in mps:
        if id(m) not in scaled:
            scaled[id(m)] = m * factor
        sites.append(scaled[id(m)])
    meta = {"max_bond_seen": max_seen, "log_scale": log_scale, "stationary_from": repeat_from,
            "closure_error": float(closure_error), "closure_spread": closure_spread,
            "causality_correction": causality_fix,
            "rows_contracted": n_steps if repeat_from is None else repeat_from + memory + 1}
    if aligner is not None:
        meta["stationary_change"] = aligner.change if math.isfinite(aligner.change) else None
    log.debug("process tensor built: %d steps, max bond %d", n_steps, max_seen)
    return ProcessTensor(sites, cfg, eta=eta, metadata=meta)
