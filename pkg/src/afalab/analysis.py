"""Mode analysis: how well does the frozen-wall product picture hold?

Given exact wedge eigenmodes this module measures, per mode,

* the channel content: overlaps with the local box modes sin(n pi y / (x tan
  theta)) column by column, giving weights w_n, the dominant channel and the
  participation ratio;
* the wall wavefunction extracted from the dominant channel and its overlap
  with the 1D adiabatic prediction;
* a boundary Husimi distribution built from the normal derivative along the
  wedge edge, compared against the classical section to label each mode
  regular or chaotic;
* the textbook adiabaticity ratio hbar |<n|d/dt m>| / |eps_n - eps_m| and the
  Planck-cell verdict on the chaotic-region area.

Chart note: Husimi grids live on (q, p) = (x, p_s * sqrt(1+eta)) where p_s is
the momentum conjugate to wedge-edge arclength.  At a wall collision this
chart equals (R, P + p) exactly and is area preserving, so classical section
points map onto it with no free constants; densities from real eigenfunctions
are symmetric under p -> -p, and classical masks are symmetrized to match.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from .bo import BOEigenPair, channel_energy
from .classical import SectionPoint
from .core import PhysParams
from .fem import EigenPair, FESpace, gradient_at_midpoints
from .mesh import NodeTag


class TruncationWarning(UserWarning):
    """n_max too small to capture the mode's channel content."""


class ZeroNormError(ValueError):
    """Channel extraction produced (numerically) nothing: wrong channel index."""


class GridMismatchError(ValueError):
    """Profiles live on incompatible grids/charts."""


# Gauss-Legendre nodes/weights on [0, 1], order 6.
_GL_T, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


class ColumnSampler:
    """Vertical line restrictions of an FE function on the structured wedge mesh.

    Works column by column: along x = x_i the FE function is piecewise linear
    (order 1) or piecewise quadratic (order 2, using the vertical edge
    midpoint dofs), which makes the transverse channel integrals cheap and
    accurate.
    """

    def __init__(self, space: FESpace):
        mesh = space.mesh
        if mesh.has_apex:
            raise ValueError("column analysis needs an apex-excised mesh (x_cut > 0)")
        self.space = space
        self.xs = mesh.xs
        self.slope = mesh.slope
        n_rows = len(mesh.taus)
        self.paths = []
        for i in range(len(self.xs)):
            vids = mesh.column_vertex_ids(i)
            if space.order == 1:
                self.paths.append((mesh.nodes[vids, 1], vids))
            else:
                mids = np.array(
                    [space.edge_mid_dof(vids[j], vids[j + 1]) for j in range(n_rows - 1)]
                )
                self.paths.append((mesh.nodes[vids, 1], vids, mids))

    def channel_overlaps(self, coeffs: np.ndarray, n_list: np.ndarray):
        """psi_n(x_i) = integral of Psi(x_i, y) * sqrt(2/w) sin(n pi y / w) dy.

        Returns (psi_nx, raw_nx) with shapes (len(n_list), n_columns); raw_nx
        omits the sqrt(2/w) normalization (the bare double-integral kernel).
        """
        n_list = np.asarray(n_list)
        tq, wq = _GL_T, _GL_W
        out = np.zeros((len(n_list), len(self.xs)))
        raw = np.zeros_like(out)
        for i, x in enumerate(self.xs):
            width = self.slope * x
            if self.space.order == 1:
                ys, vids = self.paths[i]
                fa, fb = coeffs[vids[:-1]], coeffs[vids[1:]]
                fq = fa[:, None] * (1.0 - tq) + fb[:, None] * tq
            else:
                ys, vids, mids = self.paths[i]
                fa, fb = coeffs[vids[:-1]], coeffs[vids[1:]]
                fm = coeffs[mids]
                la = (1.0 - tq) * (1.0 - 2.0 * tq)
                lm = 4.0 * tq * (1.0 - tq)
                lb = tq * (2.0 * tq - 1.0)
                fq = fa[:, None] * la + fm[:, None] * lm + fb[:, None] * lb
            dy = np.diff(ys)
            yq = ys[:-1, None] + dy[:, None] * tq
            phase = np.sin(n_list[:, None, None] * np.pi * yq[None] / width)
            kern = np.einsum("sq,q,s,nsq->n", fq, wq, dy, phase)
            raw[:, i] = kern
            out[:, i] = math.sqrt(2.0 / width) * kern
        return out, raw


@dataclass
class ChannelSpectrum:
    E: float
    n: np.ndarray          # channel indices 1..n_max
    F: np.ndarray          # bare double integrals, one per channel
    w: np.ndarray          # weights integral |psi_n(x)|^2 dx
    x: np.ndarray          # column stations
    psi_nx: np.ndarray     # per-channel wall profiles (n_max, n_columns)
    n_bar: int             # dominant channel
    pr: float              # participation ratio
    captured: float        # sum of weights

    def weights_normalized(self) -> np.ndarray:
        return self.w / self.w.sum()


def channel_decomposition(
    pair: EigenPair,
    space: FESpace,
    params: PhysParams,
    n_max: int = 20,
    sampler: ColumnSampler | None = None,
) -> ChannelSpectrum:
    """Channel content of one exact mode (column quadrature, all channels <= n_max)."""
    if sampler is None:
        sampler = ColumnSampler(space)
    ns = np.arange(1, n_max + 1)
    psi_nx, raw_nx = sampler.channel_overlaps(pair.coeffs, ns)
    x = sampler.xs
    w = np.trapezoid(psi_nx**2, x, axis=1)
    f_raw = np.trapezoid(raw_nx, x, axis=1)
    captured = float(w.sum())
    if captured < 0.99:
        warnings.warn(
            f"channels 1..{n_max} capture only {captured:.4f} of the mode",
            TruncationWarning,
        )
    wsum = w.sum()
    pr = float(wsum**2 / np.sum(w**2))
    n_bar = int(ns[np.argmax(w)])
    return ChannelSpectrum(
        E=pair.E, n=ns, F=f_raw, w=w, x=x, psi_nx=psi_nx, n_bar=n_bar, pr=pr,
        captured=captured,
    )


def extract_wall_wavefunction(
    pair: EigenPair,
    space: FESpace,
    params: PhysParams,
    n_bar: int,
    sampler: ColumnSampler | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Wall profile psi(x) projected on channel n_bar, L2-normalized."""
    if sampler is None:
        sampler = ColumnSampler(space)
    psi_nx, _ = sampler.channel_overlaps(pair.coeffs, np.array([n_bar]))
    x = sampler.xs
    psi = psi_nx[0]
    norm2 = float(np.trapezoid(psi**2, x))
    if norm2 < 1e-12:
        raise ZeroNormError(f"channel {n_bar} holds no weight (norm^2 = {norm2:.2e})")
    psi = psi / math.sqrt(norm2)
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    return x, psi


def compare_bo(
    x_exact: np.ndarray,
    psi_exact: np.ndarray,
    x_bo: np.ndarray,
    xi_bo: np.ndarray,
) -> dict:
    """Overlap |<psi|xi>|^2 and phase-minimized L2 error of two wall profiles.

    Profiles are resampled onto the exact grid by linear interpolation and
    L2-normalized there; a sign flip is the only phase freedom for real data.
    """
    mass_out = np.trapezoid(
        np.where((x_exact < x_bo[0]) | (x_exact > x_bo[-1]), psi_exact**2, 0.0), x_exact
    )
    total = np.trapezoid(psi_exact**2, x_exact)
    if total <= 0.0:
        raise ZeroNormError("empty exact profile")
    if mass_out > 1e-3 * total:
        raise GridMismatchError(
            f"profile carries {mass_out / total:.2%} of its mass outside the resampling range"
        )
    xi = np.interp(x_exact, x_bo, xi_bo, left=0.0, right=0.0)
    a = psi_exact / math.sqrt(total)
    nb = np.trapezoid(xi**2, x_exact)
    if nb <= 0.0:
        raise ZeroNormError("empty reference profile")
    b = xi / math.sqrt(nb)
    inner = abs(float(np.trapezoid(a * b, x_exact)))
    overlap = min(inner**2, 1.0)
    l2 = math.sqrt(max(2.0 - 2.0 * inner, 0.0))
    return {"overlap": overlap, "l2_error": l2}


def best_bo_match(
    x_exact: np.ndarray,
    psi_exact: np.ndarray,
    ladder: list[BOEigenPair],
) -> tuple[BOEigenPair, dict]:
    """The ladder level whose xi best overlaps the extracted wall profile."""
    best, best_cmp = None, {"overlap": -1.0}
    for pair in ladder:
        cmp = compare_bo(x_exact, psi_exact, pair.R_grid, pair.xi)
        if cmp["overlap"] > best_cmp["overlap"]:
            best, best_cmp = pair, cmp
    if best is None:
        raise ValueError("empty ladder")
    return best, best_cmp


# ---------------------------------------------------------------------------
# Boundary Husimi distributions and phase-space classification


@dataclass
class HusimiGrid:
    q: np.ndarray        # wedge-edge position in x (= R) units
    p: np.ndarray        # chart momentum (matches P + p of the classical section)
    H: np.ndarray        # (n_q, n_p), >= 0, unit mass
    sigma: float

    def total_mass(self) -> float:
        dq = self.q[1] - self.q[0]
        dp = self.p[1] - self.p[0]
        return float(self.H.sum() * dq * dp)


@dataclass
class IslandMask:
    q: np.ndarray
    p: np.ndarray
    mask: np.ndarray     # True on the regular island (symmetrized in p)


class UndersampledBoundary(ValueError):
    """Coherent-state width too small for the boundary mesh spacing."""


def wedge_edge_samples(space: FESpace, coeffs: np.ndarray):
    """(x_mid, u, ds) of the normal derivative along the wedge edge.

    u is read from the owning element's gradient at each boundary segment
    midpoint; Psi vanishes along the edge, so the gradient is normal there.
    """
    mesh = space.mesh
    from collections import defaultdict

    owners: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for t, tri in enumerate(mesh.triangles):
        for k in range(3):
            a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
            owners[(min(a, b), max(a, b))].append((t, k))
    tags = mesh.node_tags
    segs = []
    for (a, b), lst in owners.items():
        if len(lst) != 1:
            continue
        if tags[a] == NodeTag.WEDGE_EDGE and tags[b] == NodeTag.WEDGE_EDGE:
            segs.append((a, b, lst[0][0], lst[0][1]))
    if not segs:
        raise ValueError("mesh has no wedge-edge boundary segments")
    segs.sort(key=lambda s: mesh.nodes[s[0], 0] + mesh.nodes[s[1], 0])
    tri_ids = np.array([s[2] for s in segs])
    bary = np.zeros((len(segs), 3))
    for row, (_, _, _, k) in enumerate(segs):
        bary[row, (k + 1) % 3] = 0.5
        bary[row, (k + 2) % 3] = 0.5
    grads = gradient_at_midpoints(space, coeffs, tri_ids, bary)
    s = mesh.slope
    normal = np.array([s, -1.0]) / math.sqrt(1.0 + s * s)
    u = grads @ normal
    pa = mesh.nodes[[sg[0] for sg in segs]]
    pb = mesh.nodes[[sg[1] for sg in segs]]
    x_mid = 0.5 * (pa[:, 0] + pb[:, 0])
    ds = np.linalg.norm(pb - pa, axis=1)
    return x_mid, u, ds


def husimi_boundary(
    pair_or_coeffs,
    space: FESpace,
    params: PhysParams,
    sigma: float | None = None,
    qs: np.ndarray | None = None,
    ps: np.ndarray | None = None,
    e_target: float = 12.0,
) -> HusimiGrid:
    """Coherent-state transform of the wedge-edge normal derivative.

    H(q, p) = |sum_i u_i g_sigma(s_i - s_q) exp(-i p_s s_i / hbar) ds_i|^2 on
    the (q, p) chart described in the module docstring; sigma defaults to the
    wall oscillator length sqrt(hbar / (M omega)).
    """
    coeffs = pair_or_coeffs.coeffs if isinstance(pair_or_coeffs, EigenPair) else pair_or_coeffs
    if sigma is None:
        sigma = math.sqrt(params.hbar / (params.M * params.omega))
    x_mid, u, ds = wedge_edge_samples(space, coeffs)
    if sigma < 2.0 * ds.max() / math.sqrt(1.0 + params.eta):
        raise UndersampledBoundary(
            f"sigma={sigma:.3e} below twice the boundary spacing {ds.max():.3e}"
        )
    mesh = space.mesh
    if qs is None:
        qs = np.linspace(mesh.x_cut, mesh.x_max, 160)
    if ps is None:
        p_max = 1.05 * math.sqrt(2.0 * params.M * (1.0 + params.eta) * (e_target + params.hbar))
        ps = np.linspace(-p_max, p_max, 161)
    # In chart variables the arclength factors cancel: s = x sqrt(1+eta),
    # p_s = p / sqrt(1+eta), so p_s * s / hbar = p * x / hbar and the window
    # acts on x with width sigma.
    window = np.exp(-((x_mid[None, :] - qs[:, None]) ** 2) / (4.0 * sigma**2))
    phase = np.exp(-1j * np.outer(x_mid, ps) / params.hbar)
    amp = (window * (u * ds)[None, :]) @ phase  # (n_q, n_s) @ (n_s, n_p)
    H = np.abs(amp) ** 2
    dq = qs[1] - qs[0]
    dp = ps[1] - ps[0]
    total = H.sum() * dq * dp
    if total > 0:
        H = H / total
    return HusimiGrid(q=qs, p=ps, H=H, sigma=sigma)


def build_island_mask(
    points: list[SectionPoint],
    params: PhysParams,
    energy: float,
    qs: np.ndarray,
    ps: np.ndarray,
    dilate: int = 2,
) -> IslandMask:
    """Regular-island mask on the Husimi chart from chaotic section data.

    Chaotic section points (R, P, p) land on the chart at (R, P + p); cells
    they visit, dilated and symmetrized in p, are carved out of the
    energetically accessible region.  What remains is the island.
    """
    dq = qs[1] - qs[0]
    dp = ps[1] - ps[0]
    sea = np.zeros((len(qs), len(ps)), dtype=bool)
    for pt in points:
        qi = int(round((pt.R - qs[0]) / dq))
        pi = int(round((pt.P + pt.p - ps[0]) / dp))
        if 0 <= qi < len(qs) and 0 <= pi < len(ps):
            sea[qi, pi] = True
    sea |= sea[:, ::-1]  # real modes double symmetrically in p
    if dilate > 0:
        sea = binary_dilation(sea, iterations=dilate)
    u = 0.5 * params.k * (qs - params.R0) ** 2
    cap = 2.0 * params.M * (1.0 + params.eta) * np.maximum(energy - u, 0.0)
    accessible = ps[None, :] ** 2 <= cap[:, None]
    return IslandMask(q=qs, p=ps, mask=accessible & ~sea)


def classify_mode(husimi: HusimiGrid, island: IslandMask, threshold: float = 0.7) -> dict:
    """Label a mode Regular/Chaotic by its Husimi mass on the island."""
    if husimi.H.shape != island.mask.shape or not (
        np.allclose(husimi.q, island.q) and np.allclose(husimi.p, island.p)
    ):
        raise GridMismatchError("Husimi grid and island mask use different charts")
    total = husimi.H.sum()
    if total <= 0:
        raise ValueError("empty Husimi distribution")
    fraction = float(husimi.H[island.mask].sum() / total)
    label = "Regular" if fraction >= threshold else "Chaotic"
    return {"label": label, "fraction": fraction}


# ---------------------------------------------------------------------------
# Adiabaticity and the Planck-cell verdict

_GL128_T, _GL128_W = np.polynomial.legendre.leggauss(128)


def channel_coupling(n: int, m: int, R: float, params: PhysParams) -> float:
    """<phi_n | d/dR phi_m> at wall position R, by Gauss-Legendre quadrature.

    Closed form for cross-checks: |2 n m / ((m^2 - n^2) R)| for n != m.
    """
    if n == m:
        raise ValueError("diagonal coupling handled separately (it vanishes)")
    r = 0.5 * R * (_GL128_T + 1.0)
    w = 0.5 * R * _GL128_W
    from .bo import ChannelBasis

    phi_n = ChannelBasis(n, params).phi(r, R)
    dphi_m = ChannelBasis(m, params).dphi_dR(r, R)
    return float(np.sum(w * phi_n * dphi_m))


def channel_coupling_closed_form(n: int, m: int, R: float) -> float:
    return abs(2.0 * n * m / ((m * m - n * n) * R))


def natural_wall_speed(params: PhysParams) -> float:
    """Quantum velocity scale of the wall oscillator, omega * sqrt(hbar/(M omega))."""
    return math.sqrt(params.hbar * params.omega / params.M)


def energy_share_wall_speed(params: PhysParams, e_target: float, n_bar: int) -> float:
    """Classical RMS speed from the wall's energy share E - eps_nbar(R0).

    Only meaningful while the dominant channel leaves the wall some energy;
    raises otherwise (high channels near the target violate that at R0).
    """
    e_wall = e_target - float(channel_energy(n_bar, params.R0, params))
    if e_wall <= 0.0:
        raise ValueError(f"channel {n_bar} leaves the wall no energy at R0")
    return math.sqrt(2.0 * e_wall / params.M)


def adiabaticity_ratio(
    params: PhysParams,
    n: int,
    m: int,
    R_eval: float | None = None,
    rdot: float | None = None,
) -> float:
    """hbar |<n| d/dt |m>| / |eps_n - eps_m| with d/dt = rdot * d/dR.

    rdot defaults to the wall's natural quantum speed sqrt(hbar omega / M);
    the ratio is exactly linear in rdot, so other conventions are a rescale.
    """
    if n == m:
        raise ValueError("need two distinct channels")
    if R_eval is None:
        R_eval = params.R0
    if R_eval <= 0.0:
        raise ValueError("R_eval must be positive")
    if rdot is None:
        rdot = natural_wall_speed(params)
    coupling = abs(channel_coupling(n, m, R_eval, params))
    gap = abs(
        float(channel_energy(n, R_eval, params)) - float(channel_energy(m, R_eval, params))
    )
    return params.hbar * coupling * rdot / gap


def adiabaticity_table(
    params: PhysParams,
    channels: list[int],
    R_eval: float | None = None,
    rdot: float | None = None,
) -> dict:
    """Full ratio matrix over the given channels (diagonal left as 0)."""
    size = len(channels)
    mat = np.zeros((size, size))
    for i, n in enumerate(channels):
        for j, m in enumerate(channels):
            if n != m:
                mat[i, j] = adiabaticity_ratio(params, n, m, R_eval=R_eval, rdot=rdot)
    return {"channels": list(channels), "matrix": mat}


@dataclass
class PlanckVerdict:
    cells: float
    threshold: float
    verdict: str


def planck_cell_comparison(
    area: float, params: PhysParams, cell_threshold: float = 10.0
) -> PlanckVerdict:
    """Chaotic-region area in units of hbar, with a resolvability verdict.

    Unresolvable below the threshold: too few Planck cells for a second mode
    to live in the chaotic region, so no level transitions can happen there.
    The default threshold of 10 hbar approximates two full phase cells
    (2 * 2 pi hbar = 4 pi hbar ~ 12.6 hbar) while staying consistent with the
    convention that 10 hbar of area is already resolvable.
    """
    cells = area / params.hbar
    verdict = "Unresolvable" if cells < cell_threshold else "Resolvable"
    return PlanckVerdict(cells=cells, threshold=cell_threshold, verdict=verdict)
