# fivestar/strata.py
"""
Risk stratification on blinded data.

ctree_grow() grows a conditional inference tree on pooled logrank scores:
each node tests every candidate covariate for association with the scores
(recomputed on the node's subjects), Sidak-adjusts the smallest p-value, and
splits on the winner when the adjusted p-value is below alpha.
order_strata() ranks the leaves by restricted KM area and pool_strata() grows
a second tree on the ordinal rank variable so that only consecutive ranks
can be pooled.
"""

import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from fivestar.models import BlindedDataset, CovariateSpec
from fivestar.nonparam import km, logrank_score_array
from fivestar.result_models.tree import RiskTree, SplitRule, StratumAssignment, TreeNode
from fivestar.utils.config_loader import PValueMethod

logger: logging.Logger = logging.getLogger(__name__)

MAX_EXHAUSTIVE_LEVELS: int = 10
PERMUTATION_CHUNK: int = 1000
RANK_COVARIATE: str = 'prelim_rank'


def sidak(p_min: float, m: int) -> float:
    """Sidak adjustment of the smallest of m p-values."""
    return 1.0 - (1.0 - p_min) ** m


# =============================================================================
# Node tests
# =============================================================================


@dataclass(frozen=True)
class _Candidate:
    """One candidate covariate as seen by the tree."""

    name: str
    nominal: bool
    levels: tuple[str, ...] | None
    codes: np.ndarray


class _TreeGrower:
    """
    Grows one conditional inference tree.

    Node seeds are derived from (seed, node id), so a node's permutations do
    not depend on the order in which other nodes were visited.
    """

    def __init__(
        self,
        times: np.ndarray,
        events: np.ndarray,
        candidates: list[_Candidate],
        alpha: float,
        min_node: int,
        perm_reps: int,
        seed: int,
        pvalue_method: PValueMethod,
        max_depth: int | None,
    ) -> None:
        self.times: np.ndarray = times
        self.events: np.ndarray = events
        self.candidates: list[_Candidate] = candidates
        self.alpha: float = alpha
        self.min_node: int = min_node
        self.perm_reps: int = perm_reps
        self.seed: int = seed
        self.pvalue_method: PValueMethod = pvalue_method
        self.max_depth: int | None = max_depth
        self.leaf_of: np.ndarray = np.full(times.size, -1, dtype=int)
        self._next_leaf: int = 0

    # -------------------------------------------------------------------------
    # Linear statistics
    # -------------------------------------------------------------------------

    @staticmethod
    def _indicators(candidate: _Candidate, rows: np.ndarray) -> np.ndarray:
        """n x q transformation of the covariate: the code itself or level dummies."""
        codes: np.ndarray = candidate.codes[rows]
        if not candidate.nominal:
            return codes[:, None]
        present: np.ndarray = np.unique(codes)
        return (codes[:, None] == present[None, :]).astype(float)

    @staticmethod
    def _moments(x: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Permutation mean and covariance of T = x' a."""
        n: int = scores.size
        score_var: float = float(np.mean((scores - scores.mean()) ** 2))
        column_sum: np.ndarray = x.sum(axis=0)
        expectation: np.ndarray = column_sum * scores.mean()
        covariance: np.ndarray = score_var / (n - 1) * (
            n * (x.T @ x) - np.outer(column_sum, column_sum)
        )
        return expectation, covariance

    def _node_pvalues(self, rows: np.ndarray, scores: np.ndarray, node_id: int) -> np.ndarray:
        """Unadjusted p-value of every candidate at one node."""
        n_candidates: int = len(self.candidates)
        observed: np.ndarray = np.zeros(n_candidates)
        transforms: list[tuple[np.ndarray, np.ndarray, np.ndarray] | None] = []
        p_values: np.ndarray = np.ones(n_candidates)

        for j, candidate in enumerate(self.candidates):
            x: np.ndarray = self._indicators(candidate, rows)
            expectation, covariance = self._moments(x, scores)
            if candidate.nominal:
                inverse: np.ndarray = np.linalg.pinv(covariance, rcond=1e-10, hermitian=True)
                df: int = int(np.linalg.matrix_rank(covariance, tol=1e-10, hermitian=True))
            else:
                variance: float = float(covariance[0, 0])
                inverse = np.array([[1.0 / variance]]) if variance > 1e-12 else np.zeros((1, 1))
                df = 1 if variance > 1e-12 else 0
            if df == 0:
                transforms.append(None)
                continue
            centered: np.ndarray = x.T @ scores - expectation
            observed[j] = float(centered @ inverse @ centered)
            transforms.append((x, expectation, inverse))
            if self.pvalue_method == 'asymptotic':
                p_values[j] = float(stats.chi2.sf(observed[j], df=df))

        if self.pvalue_method == 'montecarlo' and any(t is not None for t in transforms):
            rng: np.random.Generator = np.random.default_rng([self.seed, node_id])
            exceed: np.ndarray = np.zeros(n_candidates)
            tolerance: np.ndarray = 1e-10 * np.maximum(1.0, np.abs(observed))
            done: int = 0
            while done < self.perm_reps:
                size: int = min(PERMUTATION_CHUNK, self.perm_reps - done)
                permuted: np.ndarray = rng.permuted(np.tile(scores, (size, 1)), axis=1)
                for j, transform in enumerate(transforms):
                    if transform is None:
                        continue
                    x, expectation, inverse = transform
                    centered_perm: np.ndarray = permuted @ x - expectation
                    quad: np.ndarray = np.einsum('bi,ij,bj->b', centered_perm, inverse, centered_perm)
                    exceed[j] += np.sum(quad >= observed[j] - tolerance[j])
                done += size
            for j, transform in enumerate(transforms):
                if transform is not None:
                    p_values[j] = (exceed[j] + 1.0) / (self.perm_reps + 1.0)
        return p_values

    # -------------------------------------------------------------------------
    # Split search
    # -------------------------------------------------------------------------

    def _two_sample(self, left_sums: np.ndarray, left_sizes: np.ndarray, scores: np.ndarray) -> np.ndarray:
        """Standardized two-sample score statistics for candidate left children."""
        n: int = scores.size
        score_var: float = float(np.mean((scores - scores.mean()) ** 2))
        variance: np.ndarray = score_var * n / (n - 1) * left_sizes * (1.0 - left_sizes / n)
        statistic: np.ndarray = np.divide(
            np.abs(left_sums - left_sizes * scores.mean()),
            np.sqrt(variance),
            out=np.zeros_like(variance),
            where=variance > 0,
        )
        admissible: np.ndarray = (left_sizes >= self.min_node) & (n - left_sizes >= self.min_node)
        return np.where(admissible, statistic, -np.inf)

    def _ordered_split(
        self, codes: np.ndarray, scores: np.ndarray
    ) -> tuple[float, float] | None:
        """Best midpoint threshold as (threshold, statistic)."""
        values: np.ndarray = np.unique(codes)
        if values.size < 2:
            return None
        cuts: np.ndarray = values[:-1]
        left_sizes: np.ndarray = np.array([np.sum(codes <= cut) for cut in cuts], dtype=float)
        left_sums: np.ndarray = np.array([scores[codes <= cut].sum() for cut in cuts])
        statistic: np.ndarray = self._two_sample(left_sums, left_sizes, scores)
        best: int = int(np.argmax(statistic))
        if not np.isfinite(statistic[best]):
            return None
        return float((values[best] + values[best + 1]) / 2.0), float(statistic[best])

    def _split(self, candidate: _Candidate, rows: np.ndarray, scores: np.ndarray) -> SplitRule | None:
        codes: np.ndarray = candidate.codes[rows]
        if not candidate.nominal:
            found: tuple[float, float] | None = self._ordered_split(codes, scores)
            if found is None:
                return None
            return SplitRule(covariate=candidate.name, kind='ordered', threshold=found[0])

        assert candidate.levels is not None
        present: np.ndarray = np.unique(codes)
        if present.size < 2:
            return None
        if present.size <= MAX_EXHAUSTIVE_LEVELS:
            # subsets holding the first present level cover every partition once
            subsets: list[tuple[float, ...]] = [
                (float(present[0]),) + rest
                for size in range(0, present.size - 1)
                for rest in itertools.combinations(present[1:].tolist(), size)
            ]
        else:
            means: np.ndarray = np.array([scores[codes == level].mean() for level in present])
            ordered: np.ndarray = present[np.argsort(means, kind='stable')]
            subsets = [tuple(ordered[: size + 1].tolist()) for size in range(present.size - 1)]

        masks: list[np.ndarray] = [np.isin(codes, subset) for subset in subsets]
        left_sizes: np.ndarray = np.array([mask.sum() for mask in masks], dtype=float)
        left_sums: np.ndarray = np.array([scores[mask].sum() for mask in masks])
        statistic: np.ndarray = self._two_sample(left_sums, left_sizes, scores)
        best: int = int(np.argmax(statistic))
        if not np.isfinite(statistic[best]):
            return None
        left_codes: list[int] = sorted(int(code) for code in subsets[best])
        return SplitRule(
            covariate=candidate.name,
            kind='subset',
            left_codes=left_codes,
            left_levels=[candidate.levels[code] for code in left_codes],
        )

    # -------------------------------------------------------------------------
    # Recursion
    # -------------------------------------------------------------------------

    def _leaf(self, rows: np.ndarray, node_id: int, depth: int, **tested: object) -> TreeNode:
        index: int = self._next_leaf
        self._next_leaf += 1
        self.leaf_of[rows] = index
        return TreeNode(
            node_id=node_id,
            depth=depth,
            n=int(rows.size),
            n_events=int(self.events[rows].sum()),
            leaf_index=index,
            **tested,  # type: ignore[arg-type]
        )

    def grow(self, rows: np.ndarray, node_id: int = 1, depth: int = 0) -> TreeNode:
        n_events: int = int(self.events[rows].sum())
        too_deep: bool = self.max_depth is not None and depth >= self.max_depth
        if not self.candidates or rows.size < 2 * self.min_node or n_events == 0 or too_deep:
            return self._leaf(rows, node_id, depth)

        scores: np.ndarray = logrank_score_array(self.times[rows], self.events[rows])
        if np.ptp(scores) <= 1e-12:
            return self._leaf(rows, node_id, depth)

        p_values: np.ndarray = self._node_pvalues(rows, scores, node_id)
        best: int = int(np.argmin(p_values))
        p_min: float = float(p_values[best])
        p_adjusted: float = sidak(p_min, len(self.candidates))
        candidate: _Candidate = self.candidates[best]
        tested: dict[str, object] = {
            'tested_covariate': candidate.name,
            'p_value': p_min,
            'p_adjusted': p_adjusted,
        }
        logger.debug(
            'Node %d (n=%d): best %s p=%.4g adjusted=%.4g',
            node_id,
            rows.size,
            candidate.name,
            p_min,
            p_adjusted,
        )
        if p_adjusted >= self.alpha:
            return self._leaf(rows, node_id, depth, **tested)

        rule: SplitRule | None = self._split(candidate, rows, scores)
        if rule is None:
            return self._leaf(rows, node_id, depth, **tested)

        left_mask: np.ndarray = rule.goes_left(candidate.codes[rows])
        left: TreeNode = self.grow(rows[left_mask], 2 * node_id, depth + 1)
        right: TreeNode = self.grow(rows[~left_mask], 2 * node_id + 1, depth + 1)
        return TreeNode(
            node_id=node_id,
            depth=depth,
            n=int(rows.size),
            n_events=n_events,
            split=rule,
            left=left,
            right=right,
            **tested,  # type: ignore[arg-type]
        )


def _grow_tree(
    times: np.ndarray,
    events: np.ndarray,
    candidates: list[_Candidate],
    alpha: float,
    min_node: int,
    perm_reps: int,
    seed: int,
    pvalue_method: PValueMethod,
    max_depth: int | None,
) -> RiskTree:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f'alpha must lie in (0, 1), got {alpha}')
    if min_node < 1:
        raise ValueError(f'min_node must be >= 1, got {min_node}')
    grower: _TreeGrower = _TreeGrower(
        times, events, candidates, alpha, min_node, perm_reps, seed, pvalue_method, max_depth
    )
    root: TreeNode = grower.grow(np.arange(times.size))
    return RiskTree(
        root=root,
        covariates=[candidate.name for candidate in candidates],
        alpha=alpha,
        min_node=min_node,
        pvalue_method=pvalue_method,
        perm_reps=perm_reps,
        leaf_of=grower.leaf_of.tolist(),
    )


def ctree_grow(
    blinded: BlindedDataset,
    covariates: Sequence[str] | None = None,
    alpha: float = 0.10,
    min_node: int = 40,
    perm_reps: int = 9999,
    seed: int = 0,
    pvalue_method: PValueMethod = 'montecarlo',
    max_depth: int | None = None,
) -> RiskTree:
    """
    Grow a conditional inference tree on pooled logrank scores.

    Args:
        blinded: Arm-free dataset.
        covariates: Candidate covariates (default: all). An empty list gives
            a single-leaf tree.
        alpha: Split when the Sidak-adjusted smallest p-value is below alpha.
        min_node: Minimum subjects in each child of a split.
        perm_reps: Monte Carlo permutations per node.
        seed: Root seed of the node permutations.
        pvalue_method: 'montecarlo' ((b + 1) / (B + 1) over shared score
            permutations) or 'asymptotic' (chi-square on the conditional
            moments).
        max_depth: Optional depth limit (root depth 0).

    Returns:
        The fitted RiskTree; leaf_of follows the dataset record order.
    """
    names: list[str] = list(covariates) if covariates is not None else blinded.covariate_names
    candidates: list[_Candidate] = []
    for name in names:
        spec: CovariateSpec = blinded.spec(name)
        candidates.append(
            _Candidate(
                name=name,
                nominal=spec.kind == 'nominal',
                levels=spec.levels,
                codes=blinded.covariate_codes(name),
            )
        )
    if not candidates:
        logger.warning('No candidate covariates; the tree is a single leaf')

    tree: RiskTree = _grow_tree(
        blinded.times,
        blinded.events,
        candidates,
        alpha,
        min_node,
        perm_reps,
        seed,
        pvalue_method,
        max_depth,
    )
    logger.info(
        'Risk tree: %d leaves (sizes %s) splitting on %s',
        tree.n_leaves,
        tree.leaf_sizes(),
        tree.split_covariates(),
    )
    return tree


# =============================================================================
# Ordering and pooling
# =============================================================================


def _restricted_area(times: np.ndarray, events: np.ndarray, tau: float) -> float:
    if not events.any():
        return tau
    return km(times, events).restricted_area(tau)


def order_strata(blinded: BlindedDataset, tree: RiskTree) -> StratumAssignment:
    """
    Rank tree leaves from highest to lowest risk.

    Each leaf's pooled KM curve is integrated up to the minimax time (the
    smallest of the leaves' largest observed times); the smallest area gets
    rank 1. Equal areas keep leaf order.
    """
    leaf_of: np.ndarray = np.asarray(tree.leaf_of)
    if leaf_of.size != blinded.n:
        leaf_of = tree.route(blinded)
    n_leaves: int = int(leaf_of.max()) + 1
    times: np.ndarray = blinded.times
    events: np.ndarray = blinded.events

    minimax: float = float(min(times[leaf_of == leaf].max() for leaf in range(n_leaves)))
    areas: np.ndarray = np.array(
        [
            _restricted_area(times[leaf_of == leaf], events[leaf_of == leaf], minimax)
            for leaf in range(n_leaves)
        ]
    )
    order: np.ndarray = np.lexsort((np.arange(n_leaves), areas))
    rank_of_leaf: np.ndarray = np.empty(n_leaves, dtype=int)
    rank_of_leaf[order] = np.arange(1, n_leaves + 1)
    prelim_rank: np.ndarray = rank_of_leaf[leaf_of]

    logger.info('Preliminary strata by restricted area (tau=%.4g): %s', minimax, areas[order].round(4))
    return StratumAssignment(
        rank_of_leaf=rank_of_leaf.tolist(),
        prelim_rank=prelim_rank.tolist(),
        restricted_areas=areas[order].tolist(),
        minimax_time=minimax,
        final_stratum=prelim_rank.tolist(),
        final_groups=[[rank] for rank in range(1, n_leaves + 1)],
        final_areas=areas[order].tolist(),
    )


def pooling_tree(
    blinded: BlindedDataset,
    prelim: StratumAssignment,
    alpha: float = 0.20,
    min_node: int = 40,
    perm_reps: int = 9999,
    seed: int = 0,
    pvalue_method: PValueMethod = 'montecarlo',
) -> RiskTree | None:
    """
    Grow the second tree on the ordinal preliminary rank.

    Returns:
        The pooling tree, or None when there is a single preliminary stratum.
    """
    if prelim.k == 1:
        return None
    rank: np.ndarray = np.asarray(prelim.prelim_rank, dtype=float)
    candidate: _Candidate = _Candidate(
        name=RANK_COVARIATE,
        nominal=False,
        levels=tuple(str(level) for level in range(1, prelim.k + 1)),
        codes=rank - 1.0,
    )
    return _grow_tree(
        blinded.times,
        blinded.events,
        [candidate],
        alpha,
        min_node,
        perm_reps,
        seed,
        pvalue_method,
        None,
    )


def apply_pooling(
    blinded: BlindedDataset, prelim: StratumAssignment, tree: RiskTree | None
) -> StratumAssignment:
    """
    Turn the leaves of a pooling tree into final strata.

    Leaves of a tree on the ordinal rank are runs of consecutive ranks; they
    are numbered by their smallest rank. Without a tree the preliminary
    strata are final.
    """
    if tree is None:
        return prelim
    ranks: np.ndarray = np.asarray(prelim.prelim_rank)
    leaf_of: np.ndarray = np.asarray(tree.leaf_of)
    groups: list[list[int]] = sorted(
        (sorted(set(ranks[leaf_of == leaf].tolist())) for leaf in range(tree.n_leaves)),
        key=lambda group: group[0],
    )
    stratum_of_rank: dict[int, int] = {
        rank: index for index, group in enumerate(groups, start=1) for rank in group
    }
    final_stratum: list[int] = [stratum_of_rank[int(rank)] for rank in ranks]
    final_array: np.ndarray = np.asarray(final_stratum)
    final_areas: list[float] = [
        _restricted_area(
            blinded.times[final_array == stratum],
            blinded.events[final_array == stratum],
            prelim.minimax_time,
        )
        for stratum in range(1, len(groups) + 1)
    ]
    logger.info('Final strata (c=%d) pool preliminary ranks %s', len(groups), groups)
    return prelim.model_copy(
        update={
            'final_stratum': final_stratum,
            'final_groups': groups,
            'final_areas': final_areas,
        }
    )


def pool_strata(
    blinded: BlindedDataset,
    prelim: StratumAssignment,
    alpha: float = 0.20,
    min_node: int = 40,
    perm_reps: int = 9999,
    seed: int = 0,
    pvalue_method: PValueMethod = 'montecarlo',
) -> StratumAssignment:
    """
    Pool preliminary strata into final strata (consecutive ranks only).

    If the rank tree does not split, c = 1; if it separates every rank, the
    final strata equal the preliminary ones.
    """
    tree: RiskTree | None = pooling_tree(
        blinded, prelim, alpha, min_node, perm_reps, seed, pvalue_method
    )
    return apply_pooling(blinded, prelim, tree)
