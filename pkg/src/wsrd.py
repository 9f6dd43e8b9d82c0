"""
Weighted state redistribution for small cut control volumes.

Neighborhood topology, weights and the linear parts of the reconstruction
(weighted averages and least-squares gradients) are built once per grid
variant; redistribution is then a few sparse products and a gather.
"""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from .errors import WSRDError
from .fields import StaggeredState
from .geometry import EBGeometry
from .models import GridVariant

logger = logging.getLogger(__name__)

Index = Tuple[int, int, int]

_UNIT = np.eye(3, dtype=int)


@dataclass
class NeighborhoodMap:
    """Merging neighborhoods and WSRD weights of one grid variant.

    Arrays are on the extended grid. `centroid_shift` is the neighborhood
    centroid minus the owner's own centroid. Member displacements are stored
    relative to the owner centroid, so neighborhoods may wrap periodic axes.
    """

    variant: GridVariant
    geom: EBGeometry
    v_target: float
    cells: np.ndarray  # flat indices of the control volumes taking part
    members: Dict[Index, List[Index]]  # owner -> M minus owner
    count: np.ndarray  # N
    kappa: np.ndarray
    omega: np.ndarray
    vhat: np.ndarray
    centroid_shift: np.ndarray  # (..., 3)
    pair_owner: np.ndarray  # flat owner of each (owner, member) pair
    pair_member: np.ndarray
    pair_disp: np.ndarray  # (P, 3) member centroid minus owner centroid
    average: sparse.csr_matrix = None
    gradient: List[sparse.csr_matrix] = field(default_factory=list)
    limited: np.ndarray = None  # flat owners carrying a gradient
    stencil: np.ndarray = None  # (R, K) flat stencil entries, -1 padded
    probes: np.ndarray = None  # (R, P, 3) member points relative to the neighborhood centroid
    probe_valid: np.ndarray = None
    isolated: int = 0

    @property
    def small(self) -> np.ndarray:
        mask = np.zeros(self.geom.alpha.shape, dtype=bool)
        mask.flat[self.cells] = self.geom.volume.flat[self.cells] < self.v_target
        return mask

    def neighborhood(self, index: Index) -> List[Index]:
        """M for the neighborhood owned by `index`, the owner first"""
        return [tuple(index)] + list(self.members.get(tuple(index), []))

    def dump(self, path: Union[str, Path]) -> Path:
        """One line per merged neighborhood: owner, kappa, omega, N and the members"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(f"# variant={self.variant.value} v_target={self.v_target!r}\n")
            handle.write("# i j k kappa omega N members\n")
            for owner in sorted(self.members):
                others = " ".join(f"({m[0]},{m[1]},{m[2]})" for m in self.members[owner])
                handle.write(
                    f"{owner[0]} {owner[1]} {owner[2]} {self.kappa[owner]:.12e} "
                    f"{self.omega[owner]:.12e} {int(self.count[owner])} {others}\n"
                )
        return path


class _IndexSpace:
    """Neighbor stepping inside the update region, wrapping periodic axes"""

    def __init__(self, geom: EBGeometry):
        self.grid = geom.grid
        region = geom.interior()
        self.lo = [s.start for s in region]
        self.hi = [s.stop for s in region]
        self.wet = geom.update_mask()

    def active(self, axis: int) -> bool:
        return self.hi[axis] - self.lo[axis] > 1

    def step(self, index: Index, delta) -> Optional[Index]:
        out = []
        for a in range(3):
            i = index[a] + int(delta[a])
            if delta[a] and not self.active(a):
                return None
            if self.grid.periodic[a]:
                span = self.hi[a] - self.lo[a]
                i = self.lo[a] + (i - self.lo[a]) % span
            elif i < self.lo[a] or i >= self.hi[a]:
                return None
            out.append(i)
        target = tuple(out)
        return target if self.wet[target] else None


def _merge_order(geom: EBGeometry, index: Index) -> List[Tuple[int, int]]:
    """(axis, step) pairs toward the fluid, largest normal component first"""
    normal = geom.eb_normal[index]
    if np.any(normal != 0.0):
        toward = -np.sign(normal)
        weight = np.abs(normal)
    else:
        toward = np.sign(geom.vol_centroid[index])
        weight = np.abs(geom.vol_centroid[index])
    order = np.argsort(-weight, kind="stable")
    return [(int(a), int(toward[a])) for a in order if toward[a] != 0]


def _merge(space: _IndexSpace, geom: EBGeometry, owner: Index, volume: np.ndarray,
           v_target: float) -> Dict[Index, np.ndarray]:
    """Members of M minus owner, each with its index-space step from the owner"""
    found: Dict[Index, np.ndarray] = {}
    total = float(volume[owner])

    def add(delta: np.ndarray) -> bool:
        nonlocal total
        target = space.step(owner, delta)
        if target is None or target == owner or target in found:
            return False
        found[target] = delta
        total += float(volume[target])
        return True

    order = _merge_order(geom, owner)
    chosen: List[np.ndarray] = []
    for a, s in order:
        if add(s * _UNIT[a]):
            chosen.append(s * _UNIT[a])
            break
    if chosen and total < v_target:
        used = {int(np.flatnonzero(chosen[0])[0])}
        for a, s in order:
            if a in used:
                continue
            if add(s * _UNIT[a]):
                chosen.append(s * _UNIT[a])
                # in-plane completion of the L shape
                add(chosen[0] + chosen[1])
                break
    if len(chosen) == 2 and total < v_target:
        used = {int(np.flatnonzero(c)[0]) for c in chosen}
        for a, s in order:
            if a in used:
                continue
            third = s * _UNIT[a]
            for mask in itertools.product((0, 1), repeat=3):
                if any(mask):
                    add(mask[0] * chosen[0] + mask[1] * chosen[1] + mask[2] * third)
            break
    return found


def build_neighborhoods(geom: EBGeometry, v_target: Optional[float] = None) -> NeighborhoodMap:
    """Merge small control volumes with their neighbors and compute the WSRD weights"""
    grid = geom.grid
    d = np.asarray(grid.spacing, dtype=float)
    if v_target is None:
        v_target = 0.5 * grid.cell_volume
    space = _IndexSpace(geom)
    volume = geom.volume
    shape = grid.shape
    cells = np.flatnonzero(space.wet)
    offsets = geom.centroid_offsets_physical()

    members: Dict[Index, List[Index]] = {}
    steps: Dict[Index, List[np.ndarray]] = {}
    isolated = 0
    small = space.wet & (volume < v_target)
    for owner in map(tuple, np.argwhere(small)):
        found = _merge(space, geom, owner, volume, v_target)
        if not found:
            isolated += 1
            continue
        members[owner] = list(found.keys())
        steps[owner] = list(found.values())
    if isolated:
        logger.warning(f"{geom.variant.value}: {isolated} small control volumes found no neighbor to merge with")

    count = np.zeros(shape)
    count[space.wet] = 1.0
    for owner, group in members.items():
        for m in group:
            count[m] += 1.0

    kappa = np.zeros(shape)
    for owner, group in members.items():
        pool = sum(float(volume[m]) for m in group)
        kappa[owner] = min(1.0, (v_target - float(volume[owner])) / pool)

    omega = np.zeros(shape)
    omega[space.wet] = 1.0
    for owner, group in members.items():
        for m in group:
            omega[m] -= kappa[owner] / count[m]

    pair_owner, pair_member, pair_disp = [], [], []
    for owner, group in members.items():
        for m, delta in zip(group, steps[owner]):
            pair_owner.append(np.ravel_multi_index(owner, shape))
            pair_member.append(np.ravel_multi_index(m, shape))
            pair_disp.append(delta * d + offsets[m] - offsets[owner])
    pair_owner = np.asarray(pair_owner, dtype=np.int64)
    pair_member = np.asarray(pair_member, dtype=np.int64)
    pair_disp = np.asarray(pair_disp, dtype=float).reshape(-1, 3)

    flat_vol = volume.ravel()
    flat_count = count.ravel()
    flat_kappa = kappa.ravel()
    share = flat_kappa[pair_owner] * flat_vol[pair_member] / flat_count[pair_member]
    vhat = np.zeros(shape)
    vhat.flat[cells] = omega.flat[cells] * flat_vol[cells]
    vflat = vhat.ravel()
    np.add.at(vflat, pair_owner, share)

    shift = np.zeros(shape + (3,))
    sflat = shift.reshape(-1, 3)
    np.add.at(sflat, pair_owner, share[:, None] * pair_disp)
    sflat[cells] /= vflat[cells, None]

    nmap = NeighborhoodMap(
        variant=geom.variant, geom=geom, v_target=float(v_target), cells=cells, members=members,
        count=count, kappa=kappa, omega=omega, vhat=vhat, centroid_shift=shift,
        pair_owner=pair_owner, pair_member=pair_member, pair_disp=pair_disp, isolated=isolated,
    )
    _check_weights(nmap)
    nmap.average = _average_operator(nmap)
    _gradient_operators(nmap, space, steps)
    logger.info(
        f"{geom.variant.value} WSRD: {int(small.sum())} small volumes, {len(members)} merged neighborhoods"
    )
    return nmap


def _check_weights(nmap: NeighborhoodMap) -> None:
    cells = nmap.cells
    tol = 1e-12
    kappa = nmap.kappa.flat[cells]
    omega = nmap.omega.flat[cells]
    if np.any(kappa < -tol) or np.any(kappa > 1.0 + tol) or np.any(omega < -tol) or np.any(omega > 1.0 + tol):
        raise WSRDError(f"{nmap.variant.value}: WSRD weights outside [0, 1]")


def _average_operator(nmap: NeighborhoodMap) -> sparse.csr_matrix:
    """Q_hat = A @ U_hat over the flattened extended grid"""
    size = nmap.omega.size
    cells = nmap.cells
    vol = nmap.geom.volume.ravel()
    vhat = nmap.vhat.ravel()
    rows = [cells, nmap.pair_owner]
    cols = [cells, nmap.pair_member]
    vals = [
        nmap.omega.flat[cells] * vol[cells] / vhat[cells],
        nmap.kappa.flat[nmap.pair_owner] * vol[nmap.pair_member]
        / (nmap.count.flat[nmap.pair_member] * vhat[nmap.pair_owner]),
    ]
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def _stencil(space: _IndexSpace, nmap: NeighborhoodMap, owner: Index, width: List[int],
             offsets: np.ndarray, d: np.ndarray) -> Tuple[List[int], np.ndarray]:
    """Stencil neighborhoods around `owner` and their centroid displacements"""
    shape = nmap.geom.alpha.shape
    base = offsets[owner] + nmap.centroid_shift[owner]
    flat, disp = [], []
    ranges = [range(-w, w + 1) for w in width]
    for delta in itertools.product(*ranges):
        target = space.step(owner, delta) if any(delta) else owner
        if target is None:
            continue
        flat.append(int(np.ravel_multi_index(target, shape)))
        disp.append(np.asarray(delta) * d + offsets[target] + nmap.centroid_shift[target] - base)
    return flat, np.asarray(disp, dtype=float)


def _gradient_operators(nmap: NeighborhoodMap, space: _IndexSpace, steps: Dict[Index, List[np.ndarray]]) -> None:
    """Least-squares gradients of Q_hat over neighborhood centroids, as sparse rows"""
    geom = nmap.geom
    grid = geom.grid
    shape = grid.shape
    size = int(np.prod(shape))
    d = np.asarray(grid.spacing, dtype=float)
    offsets = geom.centroid_offsets_physical()
    active = [a for a in range(3) if space.active(a)]

    rows: List[List[int]] = [[], [], []]
    cols: List[List[int]] = [[], [], []]
    vals: List[List[float]] = [[], [], []]
    limited, stencils, probes = [], [], []
    zeroed = 0
    for owner in sorted(nmap.members):
        width = [1 if a in active else 0 for a in range(3)]
        flat, disp = _stencil(space, nmap, owner, width, offsets, d)
        spread = np.ptp(disp, axis=0)
        narrow = [a for a in active if spread[a] < 0.5 * d[a]]
        if narrow:
            for a in narrow:
                width[a] = 2
            flat, disp = _stencil(space, nmap, owner, width, offsets, d)
            spread = np.ptp(disp, axis=0)
        D = disp[:, active]
        if any(spread[a] < 0.5 * d[a] for a in active) or len(flat) - 1 < len(active) \
                or np.linalg.matrix_rank(D) < len(active):
            zeroed += 1
            continue
        G = np.linalg.pinv(D)
        r = int(np.ravel_multi_index(owner, shape))
        for row, a in enumerate(active):
            rows[a].extend([r] * len(flat) + [r])
            cols[a].extend(flat + [r])
            vals[a].extend(G[row].tolist() + [-float(G[row].sum())])
        limited.append(r)
        stencils.append(flat)
        points = [-nmap.centroid_shift[owner]]
        for m, delta in zip(nmap.members[owner], steps[owner]):
            points.append(delta * d + offsets[m] - offsets[owner] - nmap.centroid_shift[owner])
        probes.append(points)
    if zeroed:
        logger.info(f"{nmap.variant.value} WSRD: {zeroed} neighborhoods use a zero gradient")

    nmap.gradient = [
        sparse.csr_matrix((vals[a], (rows[a], cols[a])), shape=(size, size)) for a in range(3)
    ]
    nmap.limited = np.asarray(limited, dtype=np.int64)
    width = max((len(s) for s in stencils), default=1)
    nmap.stencil = np.full((len(stencils), width), -1, dtype=np.int64)
    for n, s in enumerate(stencils):
        nmap.stencil[n, :len(s)] = s
    depth = max((len(p) for p in probes), default=1)
    nmap.probes = np.zeros((len(probes), depth, 3))
    nmap.probe_valid = np.zeros((len(probes), depth), dtype=bool)
    for n, p in enumerate(probes):
        nmap.probes[n, :len(p)] = p
        nmap.probe_valid[n, :len(p)] = True


def _limit(nmap: NeighborhoodMap, qhat: np.ndarray, sigma: np.ndarray) -> None:
    """Barth-Jespersen: one factor per neighborhood over all member points"""
    if len(nmap.limited) == 0:
        return
    owners = nmap.limited
    valid = nmap.stencil >= 0
    values = qhat[np.where(valid, nmap.stencil, 0)]
    qmax = np.where(valid, values, -np.inf).max(axis=1)
    qmin = np.where(valid, values, np.inf).min(axis=1)
    q0 = qhat[owners]
    delta = np.einsum("rpk,rk->rp", nmap.probes, sigma[owners])
    ratio = np.ones_like(delta)
    up = nmap.probe_valid & (delta > 0.0)
    down = nmap.probe_valid & (delta < 0.0)
    np.divide((qmax - q0)[:, None] * np.ones_like(delta), delta, out=ratio, where=up)
    np.divide((qmin - q0)[:, None] * np.ones_like(delta), delta, out=ratio, where=down)
    phi = np.clip(ratio.min(axis=1), 0.0, 1.0)
    sigma[owners] *= phi[:, None]


def reconstruct(values: np.ndarray, nmap: NeighborhoodMap, limiter: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Q_hat and the (limited) gradient for every neighborhood, flattened"""
    flat = np.asarray(values, dtype=float).ravel()
    qhat = nmap.average @ flat
    sigma = np.stack([g @ qhat for g in nmap.gradient], axis=1)
    if limiter:
        _limit(nmap, qhat, sigma)
    return qhat, sigma


def redistribute(values: np.ndarray, nmap: NeighborhoodMap, limiter: bool = True) -> np.ndarray:
    """Redistribute one field; control volumes outside the map are returned untouched"""
    qhat, sigma = reconstruct(values, nmap, limiter)
    shift = nmap.centroid_shift.reshape(-1, 3)
    cells = nmap.cells
    out = np.asarray(values, dtype=float).ravel().copy()
    out[cells] = nmap.omega.flat[cells] * (qhat[cells] - np.sum(sigma[cells] * shift[cells], axis=1))
    if len(nmap.pair_owner):
        owner, member = nmap.pair_owner, nmap.pair_member
        at_member = qhat[owner] + np.sum(sigma[owner] * (nmap.pair_disp - shift[owner]), axis=1)
        weight = nmap.kappa.flat[owner] / nmap.count.flat[member]
        np.add.at(out, member, weight * at_member)
    return out.reshape(np.shape(values))


def build_all_neighborhoods(geoms, v_target: Optional[float] = None) -> Dict[GridVariant, NeighborhoodMap]:
    return {geom.variant: build_neighborhoods(geom, v_target) for geom in geoms.variants}


def redistribute_state(state: StaggeredState, maps: Dict[GridVariant, NeighborhoodMap],
                       limiter: bool = True) -> StaggeredState:
    """Apply WSRD to every prognostic variable with the map of its grid variant.

    The deviation from the hydrostatic background is redistributed and the
    background added back, so a stratified fluid at rest stays untouched.
    The operator is linear and conservative, so totals are unchanged.
    """
    for name, (variant, arr) in state.prognostic().items():
        nmap = maps.get(variant)
        if nmap is None:
            raise WSRDError(f"no neighborhood map for variant {variant.value} (needed by {name})")
        ref = state.reference(name)
        out = redistribute(arr - ref, nmap, limiter) + ref
        arr.flat[nmap.cells] = out.flat[nmap.cells]
    return state
