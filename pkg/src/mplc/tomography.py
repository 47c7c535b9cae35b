"""Quantum process tomography of a simulated converter.

The channel is probed with all states of all unbiased bases (or, for
non-prime dimensions, an informationally complete pairwise family).  The
probabilities are fitted, in the least-squares sense, to the process
matrix expansion ``E(rho) = sum_ij chi_ij  s_i rho s_j^+`` over the
generalized Gell-Mann basis, constrained to Hermitian ``chi``.  If the
fit leaves negative eigenvalues beyond tolerance, the matrix is
projected onto the completely positive cone by eigenvalue clipping and
trace renormalization.  Purity and fidelity are evaluated on the Choi
state, the channel's image of half a maximally entangled pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import inner_product, superpose
from .gates import GateMatrix, LabeledState
from .wfm import ConverterDesign

__all__ = [
    "OperatorBasis",
    "ProcessMatrix",
    "ChoiMatrix",
    "ChannelTransfer",
    "ProbeRecord",
    "ProbeResult",
    "gell_mann_basis",
    "channel_transfer",
    "probe_channel",
    "reconstruct_chi",
    "chi_from_transfer",
    "chi_from_kraus",
    "ideal_chi",
    "choi_from_chi",
    "process_purity",
    "process_fidelity",
]

BASIS_CONVENTION = "gell-mann/identity-first/tr2"
_CP_EIG_TOL = -1e-8


@dataclass(frozen=True)
class OperatorBasis:
    """Hermitian operator basis with uniform normalization Tr[s_i s_j] = 2 d_ij."""

    d: int
    ops: np.ndarray  # (d*d, d, d)

    def __post_init__(self) -> None:
        ops = np.asarray(self.ops, dtype=np.complex128)
        if ops.shape != (self.d * self.d, self.d, self.d):
            raise ValueError("operator stack has the wrong shape")
        ops.setflags(write=False)


def gell_mann_basis(d: int) -> OperatorBasis:
    """Generalized Gell-Mann basis, identity first.

    Ordering: scaled identity ``sqrt(2/d) I``, then the symmetric pair
    operators ``E_jk + E_kj``, the antisymmetric ``-i(E_jk - E_kj)``
    (both families in lexicographic (j, k), j < k), then the diagonal
    traceless operators.  For ``d = 2`` this is exactly the Pauli set.
    The uniform scaling keeps ``Tr[s_i s_j] = 2 delta_ij`` for every
    pair, identity included.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    ops = [np.sqrt(2.0 / d) * np.eye(d, dtype=np.complex128)]
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=np.complex128)
            m[j, k] = m[k, j] = 1.0
            ops.append(m)
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=np.complex128)
            m[j, k] = -1.0j
            m[k, j] = 1.0j
            ops.append(m)
    for l in range(1, d):
        diag = np.zeros(d, dtype=np.complex128)
        diag[:l] = 1.0
        diag[l] = -l
        ops.append(np.sqrt(2.0 / (l * (l + 1))) * np.diag(diag))
    return OperatorBasis(d=d, ops=np.stack(ops))


@dataclass(frozen=True)
class ProcessMatrix:
    """Channel expansion coefficients over the Gell-Mann basis."""

    chi: np.ndarray
    d: int
    basis_convention: str = BASIS_CONVENTION

    def __post_init__(self) -> None:
        chi = np.asarray(self.chi, dtype=np.complex128)
        if chi.shape != (self.d**2, self.d**2):
            raise ValueError("chi must be d^2 x d^2")
        if np.max(np.abs(chi - chi.conj().T)) > 1e-8:
            raise ValueError("chi must be Hermitian")
        chi.setflags(write=False)


@dataclass(frozen=True)
class ChoiMatrix:
    """Channel image of half a maximally entangled state."""

    rho: np.ndarray
    d: int

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=np.complex128)
        if rho.shape != (self.d**2, self.d**2):
            raise ValueError("Choi matrix must be d^2 x d^2")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
            raise ValueError("Choi matrix must be Hermitian")
        if abs(np.trace(rho).real - 1.0) > 1e-8:
            raise ValueError("Choi matrix must have unit trace")
        rho.setflags(write=False)


@dataclass(frozen=True)
class ChannelTransfer:
    """Mode-to-mode transfer amplitudes of the simulated device."""

    T: np.ndarray
    capture: float

    def __post_init__(self) -> None:
        T = np.asarray(self.T, dtype=np.complex128)
        smax = float(np.linalg.svd(T, compute_uv=False)[0])
        if smax > 1.0 + 1e-6:
            raise ValueError(f"transfer matrix has singular value {smax} > 1")
        T.setflags(write=False)

    @property
    def d(self) -> int:
        return self.T.shape[0]


@dataclass(frozen=True)
class ProbeRecord:
    """One renormalized projection probability of the probe campaign."""

    input: LabeledState
    analysis: LabeledState
    probability: float


@dataclass(frozen=True)
class ProbeResult:
    records: tuple[ProbeRecord, ...]
    capture: np.ndarray  # raw captured power per (input, analysis block)


def _converter_parts(converter):
    gate = converter.gate
    basis = converter.basis
    if basis is None:
        raise ValueError("converter carries no basis metadata")
    grid = converter.config.grid if isinstance(converter, ConverterDesign) else converter.grid
    return converter.simulate, gate, basis, grid


def channel_transfer(converter) -> ChannelTransfer:
    """Transfer matrix ``T[j, i] = <out mode j | device | in mode i>``."""
    simulate, _, basis, grid = _converter_parts(converter)
    in_modes = basis.input_fields(grid)
    out_modes = basis.output_fields(grid)
    d = basis.d
    T = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        out = simulate(in_modes[i])
        for j in range(d):
            T[j, i] = inner_product(out_modes[j], out)
    capture = float(np.mean(np.sum(np.abs(T) ** 2, axis=0)))
    return ChannelTransfer(T=T, capture=capture)


def probe_channel(converter, states: list[LabeledState] | None = None) -> ProbeResult:
    """Projection probabilities of all probe states onto all probe states.

    Unlike the gate-expected crosstalk, analyses here are the raw probe
    states on the output-waist modes, which is what a channel
    reconstruction needs.  Probabilities are renormalized per analysis
    basis block, so each block row sums to one.
    """
    from .evaluate import probe_states

    simulate, _, basis, grid = _converter_parts(converter)
    if states is None:
        states = probe_states(basis.d, "mubs")
    in_modes = basis.input_fields(grid)
    out_modes = basis.output_fields(grid)
    ana_fields = [superpose(out_modes, s.coeffs) for s in states]

    block_labels: list[str] = []
    for s in states:
        if s.basis not in block_labels:
            block_labels.append(s.basis)
    ids = np.array([block_labels.index(s.basis) for s in states])

    n = len(states)
    raw = np.zeros((n, n))
    for i, s in enumerate(states):
        out = simulate(superpose(in_modes, s.coeffs))
        for j, ana in enumerate(ana_fields):
            raw[i, j] = abs(inner_product(ana, out)) ** 2

    records = []
    capture = np.zeros((n, len(block_labels)))
    for b in range(len(block_labels)):
        cols = np.flatnonzero(ids == b)
        sums = raw[:, cols].sum(axis=1)
        if np.any(sums <= 0):
            raise ValueError("a probe captured no power in an analysis basis block")
        capture[:, b] = sums
        for i in range(n):
            for j in cols:
                records.append(
                    ProbeRecord(states[i], states[j], float(raw[i, j] / sums[i]))
                )
    return ProbeResult(records=tuple(records), capture=capture)


def reconstruct_chi(records, d: int) -> ProcessMatrix:
    """Least-squares fit of the process matrix to probe probabilities.

    The fit runs over the real parametrization of Hermitian ``chi``;
    a rank-deficient system (informationally incomplete probes) is
    rejected.  Negative eigenvalues beyond tolerance are clipped and the
    result rescaled to a unit-trace Choi state.
    """
    basis = gell_mann_basis(d)
    n_ops = d * d
    iu = np.triu_indices(n_ops, k=1)
    rows = []
    rhs = []
    for rec in records:
        a = rec.input.coeffs
        b = rec.analysis.coeffs
        v = np.einsum("k,ikl,l->i", np.conj(b), basis.ops, a)  # v_i = <b| s_i |a>
        outer = v[:, None] * np.conj(v)[None, :]
        rows.append(
            np.concatenate(
                [np.abs(v) ** 2, 2.0 * outer[iu].real, -2.0 * outer[iu].imag]
            )
        )
        rhs.append(rec.probability)
    A = np.asarray(rows)
    y = np.asarray(rhs)
    n_par = n_ops + 2 * iu[0].size
    if A.shape[0] < n_par:
        raise ValueError(
            f"probe set is informationally incomplete: {A.shape[0]} records "
            f"for {n_par} parameters"
        )
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise ValueError(
            "probe set is informationally incomplete: the design matrix is "
            f"rank-deficient (condition {sv[0] / max(sv[-1], 1e-300):.2e})"
        )
    theta, *_ = np.linalg.lstsq(A, y, rcond=None)

    chi = np.zeros((n_ops, n_ops), dtype=np.complex128)
    chi[np.diag_indices(n_ops)] = theta[:n_ops]
    n_off = iu[0].size
    chi[iu] = theta[n_ops : n_ops + n_off] + 1j * theta[n_ops + n_off :]
    chi[(iu[1], iu[0])] = np.conj(chi[iu])

    eigvals, eigvecs = np.linalg.eigh(chi)
    if eigvals.min() < _CP_EIG_TOL:
        eigvals = np.clip(eigvals, 0.0, None)
        chi = (eigvecs * eigvals) @ eigvecs.conj().T
    trace = np.trace(chi).real
    if trace <= 1e-12:
        raise ValueError("reconstructed process matrix has vanishing trace")
    # unit-trace Choi state <=> Tr[chi] = d / 2 in this basis normalization
    chi *= (d / 2.0) / trace
    return ProcessMatrix(chi=chi, d=d)


def chi_from_kraus(kraus: list[np.ndarray], d: int) -> ProcessMatrix:
    """Process matrix of a channel given by explicit Kraus operators."""
    basis = gell_mann_basis(d)
    chi = np.zeros((d * d, d * d), dtype=np.complex128)
    for K in kraus:
        mat = np.asarray(K, dtype=np.complex128)
        c = np.einsum("ikl,kl->i", basis.ops.conj(), mat) / 2.0
        chi += c[:, None] * np.conj(c)[None, :]
    trace = np.trace(chi).real
    if trace <= 1e-300:
        raise ValueError("Kraus set describes a vanishing channel")
    chi *= (d / 2.0) / trace
    return ProcessMatrix(chi=chi, d=d)


def chi_from_transfer(transfer: np.ndarray | ChannelTransfer) -> ProcessMatrix:
    """Rank-1 process matrix of the single transfer operator (debug path)."""
    mat = np.asarray(
        transfer.T if isinstance(transfer, ChannelTransfer) else transfer,
        dtype=np.complex128,
    )
    return chi_from_kraus([mat], mat.shape[0])


def ideal_chi(gate: GateMatrix) -> ProcessMatrix:
    """Process matrix of the exact gate action."""
    return chi_from_kraus([gate.mat.T.copy()], gate.d)


def choi_from_chi(chi: ProcessMatrix) -> ChoiMatrix:
    """Apply the expansion to half of a maximally entangled state."""
    d = chi.d
    basis = gell_mann_basis(d)
    # w_i = sum_k |k> ⊗ s_i|k>, flattened; Choi = (1/d) sum_ij chi_ij w_i w_j^+
    w = np.stack([op.T.reshape(-1) for op in basis.ops])
    rho = np.einsum("ij,ia,jb->ab", chi.chi, w, np.conj(w)) / d
    rho = (rho + rho.conj().T) / 2.0
    return ChoiMatrix(rho=rho, d=d)


def process_purity(rho: ChoiMatrix) -> float:
    """``Tr[rho^2]``: 1 for a unitary channel, ``1/d^2`` when depolarizing."""
    return float(np.trace(rho.rho @ rho.rho).real)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def process_fidelity(chi_a: ProcessMatrix, chi_b: ProcessMatrix) -> float:
    """Choi-state fidelity ``(Tr sqrt(sqrt(A) B sqrt(A)))**2`` of two channels."""
    if chi_a.d != chi_b.d:
        raise ValueError("process matrices have different dimensions")
    if chi_a.basis_convention != chi_b.basis_convention:
        raise ValueError("process matrices use different operator bases")
    rho_a = choi_from_chi(chi_a).rho
    rho_b = choi_from_chi(chi_b).rho
    s = _psd_sqrt(rho_a)
    inner = _psd_sqrt(s @ rho_b @ s)
    val = float(np.trace(inner).real ** 2)
    return min(max(val, 0.0), 1.0)
