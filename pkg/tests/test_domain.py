import math

import pytest
from hypothesis import given, strategies as st

from orsim.domain import (
    DEFAULT_REGISTRY,
    DEFAULT_TAXONOMY,
    AdaptationPath,
    AdaptationStep,
    Case,
    Provenance,
    Quadruplet,
    ResolutionError,
    Solution,
    State,
    Taxonomy,
    lowest_common_ancestor,
    validate_case,
)

LEAVES = sorted(DEFAULT_TAXONOMY.leaves)


def normal():
    return Solution(State.NORMAL, "Normal")


@pytest.mark.parametrize(
    "a, b, expected",
    [("surgeon", "surgeon", "surgeon"), ("surgeon", "nurse", "personal"), ("surgeon", "staphy", "root")],
)
def test_lca_examples(a, b, expected):
    assert lowest_common_ancestor(a, b, DEFAULT_TAXONOMY) == expected


def test_lca_unknown_label_names_it():
    with pytest.raises(ResolutionError, match="scalpel"):
        lowest_common_ancestor("scalpel", "nurse", DEFAULT_TAXONOMY)


@given(st.sampled_from(LEAVES), st.sampled_from(LEAVES))
def test_lca_symmetric(a, b):
    assert lowest_common_ancestor(a, b, DEFAULT_TAXONOMY) == lowest_common_ancestor(b, a, DEFAULT_TAXONOMY)


@given(st.sampled_from(sorted(DEFAULT_TAXONOMY.nodes)))
def test_lca_with_itself(a):
    assert lowest_common_ancestor(a, a, DEFAULT_TAXONOMY) == a


def test_default_taxonomy_shape():
    assert DEFAULT_TAXONOMY.root == "root"
    assert DEFAULT_TAXONOMY.leaves == {"surgeon", "nurse", "bistoury", "staphy", "patient"}
    assert DEFAULT_TAXONOMY.parent("nurse") == "personal"


def test_taxonomy_rejects_two_roots_and_two_parents():
    with pytest.raises(ValueError, match="one root"):
        Taxonomy.from_pairs([("a", "x"), ("b", "y")])
    with pytest.raises(ValueError, match="more than one parent"):
        Taxonomy.from_pairs([("r", "a"), ("r", "b"), ("a", "x"), ("b", "x")])


def test_taxonomy_round_trips_through_pairs():
    assert Taxonomy.from_pairs(DEFAULT_TAXONOMY.pairs()) == DEFAULT_TAXONOMY


def test_validate_case_accepts_worked_example():
    case = Case((Quadruplet("nurse", "fatigue", 1.5, 1200),), normal())
    assert validate_case(case) == []


def test_validate_case_empty_problem():
    assert validate_case(Case((), normal())) == ["empty problem"]


def test_validate_case_out_of_scale():
    case = Case((Quadruplet("nurse", "fatigue", 9.0, 10),), normal())
    assert validate_case(case) == ["fatigue out of scale [0,5]"]


def test_validate_case_collects_every_violation():
    case = Case(
        (
            Quadruplet("scalpel", "fatigue", 1.0, 0),
            Quadruplet("nurse", "mood", 1.0, 0),
            Quadruplet("nurse", "fatigue", math.nan, 0),
            Quadruplet("nurse", "fatigue", 1.0, -3),
            Quadruplet("personal", "fatigue", 1.0, 0),
        ),
        normal(),
    )
    found = validate_case(case)
    assert any("unknown entity 'scalpel'" in v for v in found)
    assert any("unknown attribute 'mood'" in v for v in found)
    assert any("non-finite" in v for v in found)
    assert any("cycle must be a non-negative" in v for v in found)
    assert any("is a class" in v for v in found)


def test_infection_count_has_no_upper_bound():
    case = Case((Quadruplet("staphy", "infection", 270.0, 400),), normal())
    assert validate_case(case) == []
    assert not DEFAULT_REGISTRY["infection"].contains(-1)


def test_adapted_case_needs_trace():
    problem = (Quadruplet("surgeon", "fatigue", 2.0, 1),)
    bare = Case(problem, normal(), Provenance.ADAPTED)
    assert validate_case(bare) == ["adapted case without adaptation trace"]
    src = (Quadruplet("nurse", "fatigue", 2.0, 1),)
    path = AdaptationPath((src, problem), (AdaptationStep("nurse", "surgeon", "personal"),))
    assert validate_case(Case(problem, normal(), Provenance.ADAPTED, adaptation=path)) == []


def test_solution_needs_recommendation():
    with pytest.raises(ValueError):
        Solution(State.ALERT, "")
