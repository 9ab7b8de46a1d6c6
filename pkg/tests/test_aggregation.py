"""Weight normalization, mass assignment, combination and tree aggregation."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import max_mass_deviation, random_belief, random_mass
from relfuse.aggregation import (
    aggregate_tree,
    assign_masses,
    combine_pair,
    finalize,
    fold_attributes,
    normalize_weights,
)
from relfuse.beliefs import (
    AggregationConfig,
    AggregationMode,
    AttributeNode,
    BeliefDistribution,
    MassFunction,
    make_frame,
)
from relfuse.errors import TotalConflictError, ValidationError
from relfuse.oracles import aggregate_tree_powerset

unit_floats = st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def mass_functions(draw, n=None, min_n=2, max_n=5):
    """Valid mass functions: non-negative entries normalized to sum 1."""
    if n is None:
        n = draw(st.integers(min_n, max_n))
    raw = draw(
        st.lists(
            st.floats(0.0, 1.0, allow_nan=False, exclude_min=False),
            min_size=n + 1,
            max_size=n + 1,
        ).filter(lambda vs: math.fsum(vs) > 0)
    )
    total = math.fsum(raw)
    values = [v / total for v in raw]
    return MassFunction(tuple(values[:n]), values[n])


class TestNormalizeWeights:
    def test_proportional_scaling(self):
        assert normalize_weights((2, 3, 5)) == pytest.approx((0.2, 0.3, 0.5), abs=1e-15)

    def test_single_weight(self):
        assert normalize_weights((7,)) == (1.0,)

    def test_all_zero_rejected(self):
        with pytest.raises(ValidationError, match="all weights are zero"):
            normalize_weights((0.0, 0.0))

    def test_negative_rejected(self):
        with pytest.raises(ValidationError, match="non-negative"):
            normalize_weights((1.0, -0.5))

    @given(st.lists(st.floats(0.0, 1e6, allow_nan=False), min_size=1, max_size=8))
    def test_output_sums_to_one(self, raw):
        if math.fsum(raw) <= 0:
            return
        assert math.fsum(normalize_weights(raw)) == pytest.approx(1.0, abs=1e-12)


class TestAssignMasses:
    def test_partial_weight(self):
        mass = assign_masses(0.4, BeliefDistribution((0, 0.1, 0.3, 0.5, 0.1)))
        assert mass.singleton_masses == pytest.approx(
            (0, 0.04, 0.12, 0.20, 0.04), abs=1e-15
        )
        assert mass.frame_mass == pytest.approx(0.6, abs=1e-15)

    def test_full_weight_complete_belief_has_no_frame_mass(self):
        mass = assign_masses(1.0, BeliefDistribution((0.2, 0.8)))
        assert mass.singleton_masses == (0.2, 0.8)
        assert mass.frame_mass == 0.0

    def test_zero_weight_is_vacuous(self):
        mass = assign_masses(0.0, BeliefDistribution((0.9, 0.05)))
        assert mass.singleton_masses == (0.0, 0.0)
        assert mass.frame_mass == 1.0

    def test_weight_out_of_range_rejected(self):
        with pytest.raises(ValidationError, match="outside"):
            assign_masses(1.5, BeliefDistribution((1.0, 0.0)))


class TestCombinePair:
    def test_agreeing_halves(self):
        a = assign_masses(0.5, BeliefDistribution((1.0, 0.0)))
        combined, diag = combine_pair(a, a)
        assert combined.singleton_masses == pytest.approx((0.75, 0.0), abs=1e-15)
        assert combined.frame_mass == pytest.approx(0.25, abs=1e-15)
        assert diag.conflict_mass == 0.0
        assert diag.normalizer == 1.0

    def test_opposing_halves(self):
        a = assign_masses(0.5, BeliefDistribution((1.0, 0.0)))
        b = assign_masses(0.5, BeliefDistribution((0.0, 1.0)))
        combined, diag = combine_pair(a, b)
        assert diag.conflict_mass == pytest.approx(0.25, abs=1e-15)
        assert diag.normalizer == pytest.approx(4 / 3, abs=1e-15)
        assert combined.singleton_masses == pytest.approx((1 / 3, 1 / 3), abs=1e-15)
        assert combined.frame_mass == pytest.approx(1 / 3, abs=1e-15)

    def test_vacuous_operand_is_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = random_mass(rng, 4)
            vacuous = MassFunction((0.0,) * 4, 1.0)
            combined, diag = combine_pair(a, vacuous)
            assert max_mass_deviation(combined, a) < 1e-12
            assert diag.conflict_mass == 0.0

    def test_total_conflict_raises(self):
        a = MassFunction((1.0, 0.0), 0.0)
        b = MassFunction((0.0, 1.0), 0.0)
        with pytest.raises(TotalConflictError, match="total conflict"):
            combine_pair(a, b)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValidationError, match="mismatch"):
            combine_pair(MassFunction((1.0,), 0.0), MassFunction((0.5, 0.5), 0.0))

    @given(mass_functions(n=4), mass_functions(n=4))
    def test_commutative_exactly(self, a, b):
        try:
            ab, dab = combine_pair(a, b)
        except TotalConflictError:
            with pytest.raises(TotalConflictError):
                combine_pair(b, a)
            return
        ba, dba = combine_pair(b, a)
        assert ab.singleton_masses == ba.singleton_masses
        assert ab.frame_mass == ba.frame_mass
        assert dab.conflict_mass == dba.conflict_mass

    @given(mass_functions())
    def test_mass_conservation(self, a):
        combined, _ = combine_pair(a, a)
        total = math.fsum((*combined.singleton_masses, combined.frame_mass))
        assert abs(total - 1.0) <= 1e-12

    def test_zero_frame_mass_reduces_to_product_rule(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(2, 6))
            a = random_mass(rng, n, vacuous_share=False)
            b = random_mass(rng, n, vacuous_share=False)
            products = [
                x * y for x, y in zip(a.singleton_masses, b.singleton_masses)
            ]
            agree = math.fsum(products)
            if agree == 0.0:
                continue
            combined, _ = combine_pair(a, b)
            expected = [p / agree for p in products]
            assert combined.frame_mass == 0.0
            assert max(
                abs(x - y) for x, y in zip(combined.singleton_masses, expected)
            ) < 1e-12

    def test_associative_within_tolerance(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(2, 6))
            a, b, c = (random_mass(rng, n) for _ in range(3))
            left = combine_pair(combine_pair(a, b)[0], c)[0]
            right = combine_pair(a, combine_pair(b, c)[0])[0]
            assert max_mass_deviation(left, right) < 1e-12


class TestFoldAttributes:
    def test_single_mass_unchanged(self):
        mass = MassFunction((0.3, 0.2), 0.5)
        folded, diags = fold_attributes([mass])
        assert folded is mass
        assert diags == []

    def test_two_masses_match_combine_pair(self):
        rng = np.random.default_rng(23)
        a, b = random_mass(rng, 3), random_mass(rng, 3)
        folded, diags = fold_attributes([a, b])
        combined, diag = combine_pair(a, b)
        assert folded == combined
        assert diags == [diag]

    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="at least one"):
            fold_attributes([])

    def test_conflict_error_carries_fold_index(self):
        rng = np.random.default_rng(29)
        disjoint = [MassFunction((1.0, 0.0), 0.0), MassFunction((0.0, 1.0), 0.0)]
        with pytest.raises(TotalConflictError) as err:
            fold_attributes(disjoint + [random_mass(rng, 2)])
        assert err.value.fold_index == 1
        with pytest.raises(TotalConflictError) as err:
            fold_attributes([MassFunction((0.0, 0.0), 1.0)] + disjoint)
        assert err.value.fold_index == 2

    def test_permutation_invariance(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            count = int(rng.integers(2, 7))
            masses = [random_mass(rng, n) for _ in range(count)]
            reference, _ = fold_attributes(masses)
            order = rng.permutation(count)
            shuffled, _ = fold_attributes([masses[i] for i in order])
            assert max_mass_deviation(reference, shuffled) < 1e-12


class TestFinalize:
    def test_raw_keeps_frame_mass_as_unassigned(self):
        beliefs, unassigned = finalize(MassFunction((0.75, 0.0), 0.25))
        assert beliefs.beliefs == (0.75, 0.0)
        assert unassigned == 0.25

    def test_proportional_renormalizes(self):
        config = AggregationConfig(AggregationMode.PROPORTIONAL)
        beliefs, unassigned = finalize(MassFunction((0.75, 0.0), 0.25), config)
        assert beliefs.beliefs == (1.0, 0.0)
        assert unassigned == 0.0

    def test_raw_vacuous_is_total_ignorance(self):
        beliefs, unassigned = finalize(MassFunction((0.0, 0.0, 0.0), 1.0))
        assert beliefs.beliefs == (0.0, 0.0, 0.0)
        assert unassigned == 1.0

    def test_proportional_vacuous_rejected(self):
        config = AggregationConfig(AggregationMode.PROPORTIONAL)
        with pytest.raises(ValidationError, match="vacuous"):
            finalize(MassFunction((0.0, 0.0), 1.0), config)


def leaf(node_id, weight, beliefs):
    return AttributeNode(node_id, weight, belief=BeliefDistribution(beliefs))


class TestAggregateTree:
    def setup_method(self):
        self.frame = make_frame(["poor", "average", "good"])

    def test_single_leaf_is_identity(self):
        belief = (0.2, 0.5, 0.3)
        result = aggregate_tree(leaf("only", 1.0, belief), self.frame)
        assert result.combined_beliefs.beliefs == belief
        assert result.unassigned == 0.0
        assert result.per_node == {}

    def test_single_child_equals_its_belief(self):
        belief = (0.1, 0.2, 0.6)
        root = AttributeNode("root", 1.0, children=(leaf("a", 3.0, belief),))
        result = aggregate_tree(root, self.frame)
        assert result.combined_beliefs.beliefs == belief
        assert result.unassigned == pytest.approx(0.1, abs=1e-15)

    def test_matches_powerset_oracle_on_random_trees(self):
        rng = np.random.default_rng(37)
        for _ in range(30):
            root = self._random_tree(rng, depth=2)
            mine = aggregate_tree(root, self.frame)
            reference = aggregate_tree_powerset(root, self.frame)
            self._assert_close(mine, reference)

    def _random_tree(self, rng, depth):
        counter = iter(range(10_000))

        def build(level):
            children = []
            for _ in range(int(rng.integers(2, 5))):
                weight = float(rng.random())
                node_id = f"n{next(counter)}"
                if level > 0 and rng.random() < 0.4:
                    children.append(
                        AttributeNode(node_id, weight, children=build(level - 1).children)
                    )
                else:
                    children.append(
                        AttributeNode(node_id, weight, belief=random_belief(rng, 3))
                    )
            return AttributeNode(f"n{next(counter)}", 1.0, children=tuple(children))

        return build(depth)

    def _assert_close(self, a, b):
        dev = max(
            abs(x - y)
            for x, y in zip(a.combined_beliefs.beliefs, b.combined_beliefs.beliefs)
        )
        assert dev < 1e-12
        assert abs(a.unassigned - b.unassigned) < 1e-12
        assert a.per_node.keys() == b.per_node.keys()
        for key in a.per_node:
            self._assert_close(a.per_node[key], b.per_node[key])

    def test_zero_weight_sibling_equals_deleted_sibling(self):
        rng = np.random.default_rng(41)
        for _ in range(30):
            kept = [
                leaf(f"k{i}", float(rng.random()) + 0.1, random_belief(rng, 3).beliefs)
                for i in range(3)
            ]
            dropped = leaf("zero", 0.0, random_belief(rng, 3).beliefs)
            with_zero = AttributeNode("root", 1.0, children=(kept[0], dropped, kept[1], kept[2]))
            without = AttributeNode("root", 1.0, children=tuple(kept))
            a = aggregate_tree(with_zero, self.frame)
            b = aggregate_tree(without, self.frame)
            dev = max(
                abs(x - y)
                for x, y in zip(a.combined_beliefs.beliefs, b.combined_beliefs.beliefs)
            )
            assert dev < 1e-12
            assert abs(a.unassigned - b.unassigned) < 1e-12

    def test_consensus_concentrates_on_the_agreed_grade(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            grade = int(rng.integers(0, 3))
            point = tuple(1.0 if i == grade else 0.0 for i in range(3))
            children = tuple(
                leaf(f"c{i}", float(rng.random()) + 0.05, point) for i in range(4)
            )
            root = AttributeNode("root", 1.0, children=children)
            raw = aggregate_tree(root, self.frame)
            for i, value in enumerate(raw.combined_beliefs.beliefs):
                if i != grade:
                    assert value == 0.0
            prop = aggregate_tree(
                root, self.frame, AggregationConfig(AggregationMode.PROPORTIONAL)
            )
            assert abs(prop.combined_beliefs.beliefs[grade] - 1.0) <= 1e-12
            assert prop.unassigned == 0.0

    def test_intermediate_nodes_reported(self):
        root = AttributeNode(
            "root", 1.0,
            children=(
                leaf("a", 1.0, (0.2, 0.3, 0.5)),
                AttributeNode(
                    "sub", 2.0,
                    children=(leaf("b", 1.0, (0.1, 0.1, 0.8)),
                              leaf("c", 1.0, (0.0, 0.5, 0.4))),
                ),
            ),
        )
        result = aggregate_tree(root, self.frame)
        assert set(result.per_node) == {"sub"}
        sub = result.per_node["sub"]
        total = math.fsum((*sub.combined_beliefs.beliefs, sub.unassigned))
        assert abs(total - 1.0) <= 1e-12

    def test_proportional_root_with_vacuous_leaf_names_path(self):
        root = AttributeNode("root", 1.0, children=(leaf("a", 1.0, (0.0, 0.0, 0.0)),))
        config = AggregationConfig(AggregationMode.PROPORTIONAL)
        with pytest.raises(ValidationError, match="root"):
            aggregate_tree(root, self.frame, config)
