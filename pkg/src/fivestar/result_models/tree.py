# fivestar/result_models/tree.py
"""
Result models for risk stratification.

A RiskTree is a binary tree of SplitRule objects grown on blinded data. It is
serializable to JSON and can be re-applied (route) to any dataset that shares
the covariate specs, which is how strata found on blinded data are carried
over to the unblinded data.
"""

from collections.abc import Iterator
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from fivestar.models import BlindedDataset, TrialDataset


class SplitRule(BaseModel):
    """
    Binary split of a node on one covariate.

    Ordered covariates (continuous, ordinal, binary) go left when their code is
    <= threshold. Nominal covariates go left when their level is in left_levels.
    """

    model_config = ConfigDict(frozen=True)

    covariate: str
    kind: Literal['ordered', 'subset']
    threshold: float | None = None
    left_levels: list[str] | None = None
    left_codes: list[int] | None = None

    @model_validator(mode='after')
    def validate_predicate(self) -> Self:
        if self.kind == 'ordered' and self.threshold is None:
            raise ValueError('ordered split needs a threshold')
        if self.kind == 'subset' and not self.left_codes:
            raise ValueError('subset split needs a nonempty left level set')
        return self

    def goes_left(self, codes: np.ndarray) -> np.ndarray:
        """Boolean mask of subjects sent to the left child."""
        if self.kind == 'ordered':
            assert self.threshold is not None
            return codes <= self.threshold
        return np.isin(codes, np.asarray(self.left_codes, dtype=float))

    def describe(self) -> str:
        if self.kind == 'ordered':
            return f'{self.covariate} <= {self.threshold:g}'
        return f'{self.covariate} in {{{", ".join(self.left_levels or [])}}}'


class TreeNode(BaseModel):
    """
    One node of a RiskTree.

    Node ids use heap numbering (root 1, children 2k and 2k + 1). Terminal
    nodes carry a 0-based leaf index in left-to-right order.
    """

    model_config = ConfigDict(frozen=True)

    node_id: int = Field(..., ge=1)
    depth: int = Field(..., ge=0)
    n: int
    n_events: int
    tested_covariate: str | None = None
    p_value: float | None = None
    p_adjusted: float | None = None
    split: SplitRule | None = None
    left: 'TreeNode | None' = None
    right: 'TreeNode | None' = None
    leaf_index: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


class RiskTree(BaseModel):
    """
    Fitted partition of the subjects into terminal nodes.

    Attributes:
        root: Root node.
        covariates: Candidate covariates tested at every node.
        alpha: Significance level for splitting (after Sidak adjustment).
        min_node: Minimum subjects per terminal node.
        pvalue_method: 'montecarlo' or 'asymptotic'.
        perm_reps: Monte Carlo permutations per node.
        leaf_of: Leaf index per subject, in dataset order.
    """

    model_config = ConfigDict(frozen=True)

    root: TreeNode
    covariates: list[str]
    alpha: float
    min_node: int
    pvalue_method: Literal['montecarlo', 'asymptotic']
    perm_reps: int
    leaf_of: list[int]

    @property
    def n_leaves(self) -> int:
        return sum(1 for _ in self.leaves())

    def nodes(self) -> Iterator[TreeNode]:
        """Depth-first, left-first traversal."""
        stack: list[TreeNode] = [self.root]
        while stack:
            node: TreeNode = stack.pop()
            yield node
            if node.right is not None:
                stack.append(node.right)
            if node.left is not None:
                stack.append(node.left)

    def leaves(self) -> Iterator[TreeNode]:
        return (node for node in self.nodes() if node.is_leaf)

    def leaf_sizes(self) -> list[int]:
        counts: np.ndarray = np.bincount(np.asarray(self.leaf_of), minlength=self.n_leaves)
        return counts.astype(int).tolist()

    def split_covariates(self) -> list[str]:
        """Covariates used by at least one split, in traversal order."""
        used: list[str] = []
        for node in self.nodes():
            if node.split is not None and node.split.covariate not in used:
                used.append(node.split.covariate)
        return used

    def route(self, data: TrialDataset | BlindedDataset) -> np.ndarray:
        """
        Send every subject of a dataset down the tree.

        Returns:
            Leaf index per subject, in dataset order.
        """
        leaf: np.ndarray = np.full(data.n, -1, dtype=int)
        pending: list[tuple[TreeNode, np.ndarray]] = [(self.root, np.arange(data.n))]
        while pending:
            node, members = pending.pop()
            if node.split is None:
                assert node.leaf_index is not None
                leaf[members] = node.leaf_index
                continue
            assert node.left is not None and node.right is not None
            codes: np.ndarray = data.covariate_codes(node.split.covariate)[members]
            left_mask: np.ndarray = node.split.goes_left(codes)
            pending.append((node.left, members[left_mask]))
            pending.append((node.right, members[~left_mask]))
        return leaf


class StratumAssignment(BaseModel):
    """
    Ordering of tree leaves into risk ranks and, after pooling, final strata.

    Attributes:
        rank_of_leaf: Preliminary rank per leaf (1 = highest risk).
        prelim_rank: Preliminary rank per subject.
        restricted_areas: Pooled KM area on [0, minimax_time] per rank.
        minimax_time: Minimum over leaves of the maximum observed time.
        final_stratum: Final stratum per subject (1 = highest risk).
        final_groups: Preliminary ranks making up each final stratum.
        final_areas: Pooled KM area on [0, minimax_time] per final stratum.
    """

    model_config = ConfigDict(frozen=True)

    rank_of_leaf: list[int]
    prelim_rank: list[int]
    restricted_areas: list[float]
    minimax_time: float
    final_stratum: list[int]
    final_groups: list[list[int]]
    final_areas: list[float] = Field(default_factory=list)

    @property
    def k(self) -> int:
        """Number of preliminary strata."""
        return len(self.rank_of_leaf)

    @property
    def c(self) -> int:
        """Number of final strata."""
        return len(self.final_groups)

    @model_validator(mode='after')
    def validate_order(self) -> Self:
        if sorted(self.rank_of_leaf) != list(range(1, len(self.rank_of_leaf) + 1)):
            raise ValueError('ranks must be 1..k without gaps')
        if np.any(np.diff(self.restricted_areas) < -1e-12):
            raise ValueError('restricted areas must be nondecreasing with rank')
        flattened: list[int] = [rank for group in self.final_groups for rank in group]
        if flattened != list(range(1, len(self.rank_of_leaf) + 1)):
            raise ValueError('final strata must be unions of consecutive ranks')
        return self
