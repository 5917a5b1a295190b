"""Per-pair Renyi-DP accounting with propagation delay and degradation.

The central quantity is eps_{n,i}(t): an RDP bound on what honest-but-curious
worker i can learn about targeted worker n's data from the group models it
observes through epoch t.  Leakage from a source group reaches an observer
only after enough inter-group epochs have passed to cover the group distance,
so bounds grow with t in delivered S-epoch blocks.

Two delay-count variants are provided.  ``examples_consistent`` (default)
counts ``floor((t-1)/S) - rho + 1`` delivered blocks gated by ``>=`` and
reproduces the worked golden examples; ``as_printed`` uses the strict gate
and one fewer block.  An independent propagation oracle (explicit epoch-
unrolled reachability) is exposed for cross-validation of the closed forms.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .topology import GroupStructure, build_adjacency, distance_matrix, is_string
from .trainer import HyperParams, is_intergroup_epoch

# Spaced so consecutive (alpha - 1) ratios stay below ~1.46: the conversion
# optimum then lands within 2% of the continuous minimum for any linear curve.
DEFAULT_ALPHA_GRID = (
    1.25, 1.375, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0,
    10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0, 112.0, 160.0, 224.0, 256.0,
)

VARIANTS = ("examples_consistent", "as_printed")


def _check_alpha(alpha: float) -> None:
    if not alpha > 1:
        raise ValueError("RDP order alpha must exceed 1")


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")


def per_step_rdp(alpha: float, sigma: float, participation: float = 1.0,
                 mode: str = "sampled") -> float:
    """Per-epoch RDP budget of one group mechanism.

    ``sampled``: Poisson-sampled Gaussian closed form 2 * pi^2 * alpha / sigma^2.
    ``full``: plain Gaussian alpha / (2 * sigma^2); requires participation 1.
    """
    _check_alpha(alpha)
    if not sigma > 0:
        raise ValueError("accounting requires a positive noise multiplier")
    if mode == "sampled":
        if not 0 < participation <= 1:
            raise ValueError("participation must lie in (0, 1]")
        return 2.0 * participation ** 2 * alpha / sigma ** 2
    if mode == "full":
        if participation != 1.0:
            raise ValueError("full-participation budget requires participation == 1")
        return alpha / (2.0 * sigma ** 2)
    raise ValueError("mode must be 'sampled' or 'full'")


def delivered_block_count(t: int, period: int, rho: float, variant: str) -> int:
    """How many S-epoch blocks from a source at group distance rho >= 1 have
    been delivered to the observer by epoch t."""
    _check_variant(variant)
    if t < 1 or period < 1:
        raise ValueError("t and period must be >= 1")
    if math.isinf(rho):
        return 0
    if rho < 1:
        raise ValueError("delivered_block_count is for cross-group sources (rho >= 1)")
    k = (t - 1) // period
    if variant == "examples_consistent":
        return max(0, k - int(rho) + 1)
    return max(0, k - int(rho))


# ---------------------------------------------------------------------------
# closed-form pair bounds (Gaussian-mechanism composition with delay)

def _gtoh_row(structure: GroupStructure, dist: np.ndarray) -> np.ndarray:
    """(M, N) distances from each group to each worker's nearest group."""
    M, N = structure.num_groups, structure.num_workers
    out = np.full((M, N), math.inf)
    for i in range(N):
        for m_src in range(M):
            out[m_src, i] = min(dist[m_src, m] for m in structure.groups_of_worker[i])
    return out


def thm1_pair_counts(structure: GroupStructure, period: int, n: int, i: int,
                     t: int, variant: str = "examples_consistent",
                     algorithm: str = "dpogl") -> dict[int, int]:
    """Delivered per-source-group mechanism counts for the pair (n, i).

    For ``dpogl`` a shared source group contributes t-1 mechanisms and a
    cross source group S mechanisms per delivered block; ``dpogl_plus``
    fires one interval mechanism per block and has no shared-group bound
    (shared sources raise).
    """
    if n == i:
        raise ValueError("a worker is trusted with its own data; need n != i")
    dist = distance_matrix(build_adjacency(structure))
    counts: dict[int, int] = {}
    groups_i = structure.groups_of_worker[i]
    for m_src in structure.groups_of_worker[n]:
        rho = min(dist[m_src, m] for m in groups_i)
        if rho == 0:
            if algorithm == "dpogl_plus":
                raise ValueError("dpogl_plus defines no bound for in-group pairs")
            counts[m_src] = t - 1
        else:
            blocks = delivered_block_count(t, period, rho, variant)
            counts[m_src] = blocks * (period if algorithm == "dpogl" else 1)
    return counts


def thm1_pair_bound(structure: GroupStructure, hp: HyperParams, alpha: float,
                    n: int, i: int, t: int,
                    variant: str = "examples_consistent") -> float:
    """DP-OGL pairwise RDP bound at order alpha through epoch t."""
    counts = thm1_pair_counts(structure, hp.inter_group_period, n, i, t, variant,
                              algorithm="dpogl")
    total = 0.0
    for m_src, count in counts.items():
        eps = per_step_rdp(alpha, float(hp.sigma[m_src]),
                           float(hp.participation[m_src]), mode="sampled")
        total += eps * count
    return total


def thm1_plus_pair_bound(structure: GroupStructure, hp: HyperParams, alpha: float,
                         n: int, i: int, t: int,
                         variant: str = "examples_consistent") -> float | None:
    """DP-OGL+ pairwise bound; None marks a trusted (in-group) pair."""
    if n == i:
        raise ValueError("a worker is trusted with its own data; need n != i")
    if set(structure.groups_of_worker[n]) & set(structure.groups_of_worker[i]):
        return None
    counts = thm1_pair_counts(structure, hp.inter_group_period, n, i, t, variant,
                              algorithm="dpogl_plus")
    total = 0.0
    for m_src, count in counts.items():
        eps = per_step_rdp(alpha, float(hp.sigma[m_src]),
                           float(hp.participation[m_src]), mode="sampled")
        total += eps * count
    return total


# ---------------------------------------------------------------------------
# independent propagation oracle (epoch-unrolled reachability)

def _influence_sets(structure: GroupStructure, period: int, t: int,
                    algorithm: str) -> list[int]:
    """Bitmask influence sets after sweeping epochs 1..t.

    Bit (tau - 1) * M + m marks the mechanism group m fired at epoch tau.
    The mechanism enters its group's model at epoch tau + 1; models carry
    influence forward; at an inter-group epoch each group's model picks up
    adjacent groups' influence with zero lag, one hop per inter-group epoch
    (snapshots prevent chained hops inside one epoch).
    """
    M = structure.num_groups
    adj = build_adjacency(structure)
    neighbors = [[v for v in np.nonzero(adj[m])[0] if v != m] for m in range(M)]
    influence = [0] * M
    for e in range(1, t + 1):
        tau = e - 1
        if tau >= 1:
            fires = (algorithm == "dpogl") or (tau % period == 0)
            if fires:
                for m in range(M):
                    influence[m] |= 1 << ((tau - 1) * M + m)
        if is_intergroup_epoch(e, period):
            snapshot = list(influence)
            for m in range(M):
                for m_adj in neighbors[m]:
                    influence[m] |= snapshot[m_adj]
    return influence


def propagation_oracle_counts(structure: GroupStructure, period: int, t: int,
                              n: int, i: int, algorithm: str = "dpogl"
                              ) -> dict[int, int]:
    """Per-source-group counts of mechanisms whose influence reaches any model
    observed by worker i through epoch t, restricted to groups of worker n."""
    if algorithm not in ("dpogl", "dpogl_plus"):
        raise ValueError("algorithm must be 'dpogl' or 'dpogl_plus'")
    if t < 1:
        raise ValueError("t must be >= 1")
    if n == i:
        raise ValueError("need n != i")
    M = structure.num_groups
    influence = _influence_sets(structure, period, t, algorithm)
    delivered = 0
    for m in structure.groups_of_worker[i]:
        delivered |= influence[m]
    counts = {}
    for m_src in structure.groups_of_worker[n]:
        group_mask = 0
        for tau in range(1, t):
            group_mask |= 1 << ((tau - 1) * M + m_src)
        counts[m_src] = (delivered & group_mask).bit_count()
    return counts


def propagation_oracle(structure: GroupStructure, period: int, t: int,
                       n: int, i: int, algorithm: str = "dpogl") -> int:
    """Total delivered mechanism count, in units of the per-group budget."""
    return sum(propagation_oracle_counts(structure, period, t, n, i, algorithm).values())


# ---------------------------------------------------------------------------
# log-Sobolev recursion (full participation) and degradation factors

@dataclass(frozen=True, eq=False)
class LsiState:
    """Reciprocals of the LSI constants tracked across epochs.

    All arrays store reciprocals (0 encodes a deterministic point mass), so
    every recursion step is a plain addition.  ``inv_b[t]`` refers to the
    model at epoch t; per-epoch arrays are indexed 1..horizon with slot 0
    unused.  For ``dpogl_plus`` the mechanism quantities ``inv_e``/``inv_hbar``
    are per completed S-epoch window (window q covers epochs q*S+1 .. (q+1)*S).
    """

    algorithm: str
    horizon: int
    inter_group_period: int
    inv_b: np.ndarray     # (horizon + 2, M)
    inv_a: np.ndarray     # (horizon + 1, M, N), nonzero only for members
    inv_h: np.ndarray     # (horizon + 1, M, N)
    inv_e: np.ndarray     # dpogl: (horizon + 1, M); plus: (windows, M)
    inv_hbar: np.ndarray  # dpogl: (horizon + 1, M); plus: (windows, M)


def _lsi_preconditions(hp: HyperParams) -> None:
    if not np.all(hp.participation == 1.0):
        raise ValueError("the LSI recursion is defined for full participation only")
    if not np.all(np.isfinite(hp.clip)):
        raise ValueError("the LSI recursion needs finite clip norms")
    if not np.all(hp.sigma > 0):
        raise ValueError("the LSI recursion needs positive noise multipliers")


def _member_mask(structure: GroupStructure) -> np.ndarray:
    mask = np.zeros((structure.num_groups, structure.num_workers), dtype=bool)
    for m, members in enumerate(structure.members_of_group):
        mask[m, list(members)] = True
    return mask


def _merge_inv_a(structure: GroupStructure, inv_b_t: np.ndarray, epoch: int,
                 period: int, mask: np.ndarray) -> np.ndarray:
    M, N = mask.shape
    inv_a = np.zeros((M, N))
    if is_intergroup_epoch(epoch, period):
        per_worker = np.array([sum(inv_b_t[m] for m in groups)
                               for groups in structure.groups_of_worker])
        inv_a[:] = per_worker[None, :]
    else:
        inv_a[:] = inv_b_t[:, None]
    inv_a[~mask] = 0.0
    return inv_a


def lsi_recursion_dpogl(structure: GroupStructure, hp: HyperParams, beta: float,
                        horizon: int) -> LsiState:
    """Track per-epoch LSI reciprocals for DP-OGL up to ``horizon`` epochs."""
    _lsi_preconditions(hp)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    M, N = structure.num_groups, structure.num_workers
    S = hp.inter_group_period
    mask = _member_mask(structure)
    sizes = np.array([len(g) for g in structure.members_of_group], dtype=float)
    noise_var = (hp.clip * hp.sigma) ** 2
    spread = (1.0 + (1.0 + hp.learning_rate * beta) ** hp.local_iterations) ** 2
    inv_b = np.zeros((horizon + 2, M))
    inv_a = np.zeros((horizon + 1, M, N))
    inv_h = np.zeros((horizon + 1, M, N))
    inv_e = np.zeros((horizon + 1, M))
    inv_hbar = np.zeros((horizon + 1, M))
    for t in range(1, horizon + 1):
        inv_b[t] = inv_b[t - 1] + sizes ** 2 * inv_e[t - 1]  # pi = 1
        inv_a[t] = _merge_inv_a(structure, inv_b[t], t, S, mask)
        inv_h[t] = spread * inv_a[t]
        member_sum = inv_h[t].sum(axis=1)  # non-members hold zeros
        inv_e[t] = noise_var + member_sum
        inv_hbar[t] = inv_b[t] + sizes ** 2 * member_sum
    inv_b[horizon + 1] = inv_b[horizon] + sizes ** 2 * inv_e[horizon]
    return LsiState("dpogl", horizon, S, inv_b, inv_a, inv_h, inv_e, inv_hbar)


def lsi_recursion_dpoglplus(structure: GroupStructure, hp: HyperParams, beta: float,
                            horizon: int) -> LsiState:
    """LSI reciprocals for dpogl_plus; mechanism terms are per S-epoch window."""
    _lsi_preconditions(hp)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    M, N = structure.num_groups, structure.num_workers
    S = hp.inter_group_period
    mask = _member_mask(structure)
    sizes = np.array([len(g) for g in structure.members_of_group], dtype=float)
    interval_var = S * (hp.clip * hp.sigma) ** 2
    spread = (1.0 + (1.0 + hp.learning_rate * beta) ** hp.local_iterations) ** 2
    windows = horizon // S
    inv_b = np.zeros((horizon + 2, M))
    inv_a = np.zeros((horizon + 1, M, N))
    inv_h = np.zeros((horizon + 1, M, N))
    inv_e = np.zeros((max(windows, 1), M)) if windows else np.zeros((0, M))
    inv_hbar = np.zeros_like(inv_e)
    window_h_sum = np.zeros(M)  # running sum of member inv_h over the open window
    for t in range(1, horizon + 2):
        if t == 1:
            inv_b[t] = 0.0
        elif is_intergroup_epoch(t, S):
            q = (t - 1) // S  # window q-1 just completed
            inv_b[t] = inv_b[t - S] + sizes ** 2 * inv_e[q - 1]
        else:
            inv_b[t] = inv_b[t - 1] + sizes ** 2 * inv_h[t - 1].sum(axis=1)
        if t > horizon:
            break
        if is_intergroup_epoch(t, S):
            window_h_sum = np.zeros(M)
        inv_a[t] = _merge_inv_a(structure, inv_b[t], t, S, mask)
        inv_h[t] = spread * inv_a[t]
        window_h_sum = window_h_sum + inv_h[t].sum(axis=1)
        if t % S == 0:  # window (t//S - 1) completes at this epoch
            q = t // S - 1
            inv_e[q] = interval_var + window_h_sum
            inv_hbar[q] = inv_b[t - S + 1] + sizes ** 2 * window_h_sum
    return LsiState("dpogl_plus", horizon, S, inv_b, inv_a, inv_h, inv_e, inv_hbar)


def lsi_recursion(structure: GroupStructure, hp: HyperParams, beta: float,
                  horizon: int) -> LsiState:
    if hp.algorithm == "dpogl":
        return lsi_recursion_dpogl(structure, hp, beta, horizon)
    return lsi_recursion_dpoglplus(structure, hp, beta, horizon)


def degradation_mu(lsi: LsiState, hp: HyperParams, alpha, group: int, epoch: int,
                   targeted_groups) -> float | np.ndarray:
    """Degradation factor mu = alpha / (alpha + hbar * c^2 sigma^2) for
    leakage transiting ``group``'s mechanism at ``epoch``.

    ``hbar`` is the accumulated constant of the pre-noise aggregate (0 while
    the model is still deterministic, so early crossings are undegraded).
    Groups of the targeted worker pass information through unattenuated
    (factor 1).  Accepts a scalar or array alpha.
    """
    if group in set(targeted_groups):
        return np.ones_like(np.asarray(alpha, dtype=float)) if np.ndim(alpha) else 1.0
    S = lsi.inter_group_period
    if lsi.algorithm == "dpogl":
        if not 1 <= epoch <= lsi.horizon:
            raise ValueError("epoch outside the computed LSI horizon")
        hbar = float(lsi.inv_hbar[epoch, group])
        var = float((hp.clip[group] * hp.sigma[group]) ** 2)
    else:
        if epoch <= S or not is_intergroup_epoch(epoch, S):
            raise ValueError("dpogl_plus degradation is defined at mechanism-model "
                             "epochs w*S + 1 with w >= 1")
        window = (epoch - 1) // S - 1
        if window >= lsi.inv_hbar.shape[0]:
            raise ValueError("epoch outside the computed LSI horizon")
        hbar = float(lsi.inv_hbar[window, group])
        var = float(S * (hp.clip[group] * hp.sigma[group]) ** 2)
    alpha_arr = np.asarray(alpha, dtype=float)
    if np.any(alpha_arr <= 1):
        raise ValueError("RDP order alpha must exceed 1")
    mu = alpha_arr / (alpha_arr + hbar * var)
    return mu if alpha_arr.ndim else float(mu)


# ---------------------------------------------------------------------------
# string-topology bound with degradation

def _string_path(adj: np.ndarray, src: int, dst: int) -> list[int]:
    parent: dict[int, int | None] = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in np.nonzero(adj[u])[0]:
            if v != u and v not in parent:
                parent[int(v)] = u
                queue.append(int(v))
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def thm2_pair_curve(structure: GroupStructure, hp: HyperParams, beta: float,
                    n: int, i: int, t: int, alphas,
                    variant: str = "examples_consistent",
                    lsi: LsiState | None = None) -> np.ndarray | None:
    """Degradation-aware RDP bound over an array of orders; strings only.

    Per delivered block w from source group m', the contribution is the
    full-participation budget (times S for dpogl) attenuated by one mu factor
    per path group past the source, each evaluated at its crossing epoch
    S*(w + j - 1) + 1.  Returns None for trusted pairs under dpogl_plus.
    """
    _check_variant(variant)
    if n == i:
        raise ValueError("need n != i")
    if t < 1:
        raise ValueError("t must be >= 1")
    if not is_string(structure):
        raise ValueError("the degradation bound requires a string structure")
    _lsi_preconditions(hp)
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 1):
        raise ValueError("RDP order alpha must exceed 1")
    S = hp.inter_group_period
    plus = hp.algorithm == "dpogl_plus"
    groups_n = set(structure.groups_of_worker[n])
    groups_i = list(structure.groups_of_worker[i])
    shared = groups_n & set(groups_i)
    if plus and shared:
        return None
    adj = build_adjacency(structure)
    dist = distance_matrix(adj)
    if lsi is None:
        lsi = lsi_recursion(structure, hp, beta, t)
    elif (lsi.algorithm != hp.algorithm or lsi.horizon < t
          or lsi.inter_group_period != hp.inter_group_period):
        raise ValueError("precomputed smoothing state does not cover this query")
    total = np.zeros_like(alphas)
    for m_src in sorted(groups_n):
        eps = alphas / (2.0 * float(hp.sigma[m_src]) ** 2)  # full-participation budget
        if m_src in shared:
            total += eps * (t - 1)
            continue
        rho = min(dist[m_src, m] for m in groups_i)
        if math.isinf(rho):
            continue
        rho = int(rho)
        m_dst = min((m for m in groups_i if dist[m_src, m] == rho))
        path = _string_path(adj, m_src, m_dst)
        blocks = delivered_block_count(t, S, rho, variant)
        for w in range(1, blocks + 1):
            factor = np.ones_like(alphas)
            for j in range(1, rho + 1):
                crossing_epoch = S * (w + j - 1) + 1
                factor = factor * degradation_mu(lsi, hp, alphas, path[j],
                                                 crossing_epoch, groups_n)
            total = total + (1 if plus else S) * eps * factor
    return total


def thm2_pair_bound(structure: GroupStructure, hp: HyperParams, beta: float,
                    alpha: float, n: int, i: int, t: int,
                    variant: str = "examples_consistent") -> float | None:
    curve = thm2_pair_curve(structure, hp, beta, n, i, t, np.array([alpha]), variant)
    return None if curve is None else float(curve[0])


# ---------------------------------------------------------------------------
# RDP -> (eps, delta)-DP conversion

def _check_delta(delta: float) -> None:
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")


def _check_grid(alpha_grid) -> list[float]:
    grid = [float(a) for a in alpha_grid]
    if not grid or any(a <= 1 for a in grid):
        raise ValueError("alpha grid entries must exceed 1")
    return grid


def rdp_to_dp(curve, delta: float, alpha_grid=DEFAULT_ALPHA_GRID
              ) -> tuple[float, float]:
    """Minimize eps_rdp(alpha) + log(1/delta)/(alpha - 1) over the grid.

    ``curve`` is a callable on alpha or a sequence aligned with the grid.
    Ties break toward the smaller order.
    """
    _check_delta(delta)
    grid = _check_grid(alpha_grid)
    if callable(curve):
        values = [float(curve(a)) for a in grid]
    else:
        values = [float(v) for v in curve]
        if len(values) != len(grid):
            raise ValueError("curve values must align with the alpha grid")
    if any(v < 0 or not math.isfinite(v) for v in values):
        raise ValueError("RDP curve values must be finite and nonnegative")
    penalty = math.log(1.0 / delta)
    best_eps, best_alpha = math.inf, None
    for a, v in zip(grid, values):
        candidate = v + penalty / (a - 1.0)
        if candidate < best_eps:
            best_eps, best_alpha = candidate, a
    return best_eps, float(best_alpha)


# ---------------------------------------------------------------------------
# matrix / per-worker assembly

def admissible_adversaries(structure: GroupStructure, threat_model: str,
                           n: int) -> list[int]:
    """Workers allowed to act as the honest-but-curious observer against n."""
    if threat_model == "tm1":
        return [i for i in range(structure.num_workers) if i != n]
    if threat_model == "tm2":
        trusted = structure.neighborhood(n)
        return [i for i in range(structure.num_workers) if i not in trusted]
    raise ValueError("threat_model must be 'tm1' or 'tm2'")


def _count_and_masks(structure: GroupStructure, hp: HyperParams, t: int,
                     variant: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (M, N) delivered counts plus membership/trust masks."""
    _check_variant(variant)
    S = hp.inter_group_period
    dist = distance_matrix(build_adjacency(structure))
    rt = _gtoh_row(structure, dist)  # (M, N) source-group -> worker distance
    k = (t - 1) // S
    with np.errstate(invalid="ignore"):
        if variant == "examples_consistent":
            blocks = np.maximum(0.0, k - rt + 1.0)
        else:
            blocks = np.maximum(0.0, k - rt)
    blocks[np.isinf(rt)] = 0.0
    if hp.algorithm == "dpogl":
        counts = S * blocks
        counts[rt == 0] = t - 1
    else:
        counts = blocks
        counts[rt == 0] = 0.0  # masked out as trusted below
    members = _member_mask(structure)
    shared_pair = (members.T.astype(int) @ (rt == 0).astype(int)) > 0  # (N, N)
    return counts, members, shared_pair


def privacy_matrix(structure: GroupStructure, hp: HyperParams, alpha: float,
                   t: int, variant: str = "examples_consistent") -> np.ndarray:
    """(N, N) RDP bounds at order alpha; NaN marks trusted/undefined cells.

    Row n is the targeted worker, column i the observer.  Cells are undefined
    on the diagonal, for in-group pairs under tm2, and for in-group pairs
    under dpogl_plus always.
    """
    _check_alpha(alpha)
    weights = np.array([per_step_rdp(alpha, float(s), float(p), "sampled")
                        for s, p in zip(hp.sigma, hp.participation)])
    counts, members, shared_pair = _count_and_masks(structure, hp, t, variant)
    matrix = (members.T * weights) @ counts
    if hp.threat_model == "tm2" or hp.algorithm == "dpogl_plus":
        matrix[shared_pair] = np.nan
    np.fill_diagonal(matrix, np.nan)
    return matrix


def pair_alpha_coefficients(structure: GroupStructure, hp: HyperParams, t: int,
                            variant: str = "examples_consistent") -> np.ndarray:
    """(N, N) coefficients K with eps_rdp(alpha) = alpha * K; NaN undefined."""
    weights = np.array([per_step_rdp(2.0, float(s), float(p), "sampled") / 2.0
                        for s, p in zip(hp.sigma, hp.participation)])
    counts, members, shared_pair = _count_and_masks(structure, hp, t, variant)
    matrix = (members.T * weights) @ counts
    if hp.threat_model == "tm2" or hp.algorithm == "dpogl_plus":
        matrix[shared_pair] = np.nan
    np.fill_diagonal(matrix, np.nan)
    return matrix


def privacy_matrix_dp(structure: GroupStructure, hp: HyperParams, t: int,
                      delta: float, alpha_grid=DEFAULT_ALPHA_GRID,
                      variant: str = "examples_consistent") -> np.ndarray:
    """(N, N) converted (eps, delta)-DP bounds; exact 0 where no path exists.

    Pairs with zero delivered leakage have identical output distributions, so
    they are reported as 0 rather than fed through the penalty formula.
    """
    _check_delta(delta)
    grid = _check_grid(alpha_grid)
    K = pair_alpha_coefficients(structure, hp, t, variant)
    penalty = math.log(1.0 / delta)
    best = np.full_like(K, np.inf)
    for a in grid:
        candidate = a * K + penalty / (a - 1.0)
        better = candidate < best
        best[better] = candidate[better]
    best[K == 0] = 0.0
    best[np.isnan(K)] = np.nan
    return best


def pwp_alpha_coefficient(structure: GroupStructure, hp: HyperParams, t: int,
                          variant: str = "examples_consistent"
                          ) -> list[float | None]:
    """Per-worker worst-case coefficient K_n = max over admissible observers.

    None where the threat model leaves no admissible observer.
    """
    K = pair_alpha_coefficients(structure, hp, t, variant)
    out: list[float | None] = []
    for n in range(structure.num_workers):
        adversaries = admissible_adversaries(structure, hp.threat_model, n)
        if not adversaries:
            out.append(None)
            continue
        out.append(float(max(K[n, i] for i in adversaries)))
    return out


def pwp_bounds(structure: GroupStructure, hp: HyperParams, t: int, delta: float,
               alpha_grid=DEFAULT_ALPHA_GRID,
               variant: str = "examples_consistent"
               ) -> list[tuple[int, float, float, float]]:
    """Per-worker (worker, eps_rdp, alpha_star, eps_dp) rows at epoch t.

    Workers without an admissible observer are omitted.  Workers whose
    leakage coefficient is exactly 0 report 0 for both epsilons (identical
    distributions); alpha_star is then the penalty minimizer.
    """
    grid = [float(a) for a in alpha_grid]
    rows = []
    for n, coeff in enumerate(pwp_alpha_coefficient(structure, hp, t, variant)):
        if coeff is None:
            continue
        eps_dp, alpha_star = rdp_to_dp([a * coeff for a in grid], delta, grid)
        if coeff == 0.0:
            rows.append((n, 0.0, alpha_star, 0.0))
        else:
            rows.append((n, alpha_star * coeff, alpha_star, eps_dp))
    return rows


# ---------------------------------------------------------------------------
# curve-tensor assembly (shared by the delay and degradation reports)

def thm2_curve_matrix(structure: GroupStructure, hp: HyperParams, beta: float,
                      t: int, alpha_grid=DEFAULT_ALPHA_GRID,
                      variant: str = "examples_consistent",
                      lsi: LsiState | None = None) -> np.ndarray:
    """(N, N, G) degradation-aware curves over the grid; NaN marks trusted.

    Cells are NaN on the diagonal, for in-group pairs under tm2, and for
    in-group pairs under dpogl_plus regardless of the threat model.
    """
    alphas = np.array(_check_grid(alpha_grid))
    if lsi is None:
        lsi = lsi_recursion(structure, hp, beta, t)
    N = structure.num_workers
    members = _member_mask(structure)
    shared_pair = (members.T.astype(int) @ members.astype(int)) > 0
    curves = np.full((N, N, alphas.size), np.nan)
    for n in range(N):
        for i in range(N):
            if i == n:
                continue
            if hp.threat_model == "tm2" and shared_pair[n, i]:
                continue
            curve = thm2_pair_curve(structure, hp, beta, n, i, t, alphas,
                                    variant, lsi)
            if curve is not None:
                curves[n, i] = curve
    return curves


def delay_curve_matrix(structure: GroupStructure, hp: HyperParams, t: int,
                       alpha_grid=DEFAULT_ALPHA_GRID,
                       variant: str = "examples_consistent") -> np.ndarray:
    """(N, N, G) delay-only curves alpha * K over the grid; NaN marks trusted."""
    alphas = np.array(_check_grid(alpha_grid))
    K = pair_alpha_coefficients(structure, hp, t, variant)
    return K[:, :, None] * alphas[None, None, :]


def dp_matrix_from_curves(curves: np.ndarray, delta: float,
                          alpha_grid=DEFAULT_ALPHA_GRID) -> np.ndarray:
    """(N, N) DP conversion of a per-pair curve tensor.

    Identically-zero curves convert to an exact 0 (the pair's views are
    identically distributed); NaN cells stay NaN.
    """
    _check_delta(delta)
    grid = np.array(_check_grid(alpha_grid))
    if curves.shape[-1] != grid.size:
        raise ValueError("curve tensor must align with the alpha grid")
    defined = ~np.isnan(curves)
    if np.any(defined & ~np.isfinite(curves)) or np.any(curves[defined] < 0):
        raise ValueError("RDP curve values must be finite and nonnegative")
    penalty = math.log(1.0 / delta) / (grid - 1.0)
    best = np.min(curves + penalty[None, None, :], axis=2)
    best[np.all(curves == 0.0, axis=2)] = 0.0
    return best


def pwp_rows_from_curves(curves: np.ndarray, structure: GroupStructure,
                         threat_model: str, delta: float,
                         alpha_grid=DEFAULT_ALPHA_GRID
                         ) -> list[tuple[int, float, float, float]]:
    """Per-worker (worker, eps_rdp, alpha_star, eps_dp) from a curve tensor.

    Each worker's curve is the pointwise envelope over its admissible
    observers; workers with no admissible observer are omitted.
    """
    _check_delta(delta)
    grid = np.array(_check_grid(alpha_grid))
    penalty = math.log(1.0 / delta) / (grid - 1.0)
    rows = []
    for n in range(structure.num_workers):
        adversaries = admissible_adversaries(structure, threat_model, n)
        if not adversaries:
            continue
        envelope = np.max(curves[n, adversaries, :], axis=0)
        if np.isnan(envelope).any():
            raise ValueError("undefined pair among admissible observers")
        candidate = envelope + penalty
        j = int(np.argmin(candidate))
        if np.all(envelope == 0.0):
            rows.append((n, 0.0, float(grid[j]), 0.0))
        else:
            rows.append((n, float(envelope[j]), float(grid[j]),
                         float(candidate[j])))
    return rows
