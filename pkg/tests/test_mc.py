"""Multiple-choice autograding: exact-match and per-option credit."""

from fractions import Fraction
from itertools import chain, combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradeloop.mc import McResponse, MsmcPolicy, grade_msmc, grade_ssmc


def resp(*labels: str) -> McResponse:
    return McResponse(question_id="q-mc", chosen=frozenset(labels))


def subsets(options: str):
    return chain.from_iterable(combinations(options, r) for r in range(len(options) + 1))


class TestSsmc:
    def test_correct_choice_gets_full_points(self):
        assert grade_ssmc(frozenset({"B"}), resp("B"), Fraction(2)) == Fraction(2)

    def test_wrong_choice_gets_zero(self):
        assert grade_ssmc(frozenset({"B"}), resp("C"), Fraction(2)) == Fraction(0)

    def test_blank_gets_zero(self):
        assert grade_ssmc(frozenset({"B"}), resp(), Fraction(2)) == Fraction(0)

    def test_multiple_marks_get_zero(self):
        # bubbling the key plus another option is not a correct answer
        assert grade_ssmc(frozenset({"B"}), resp("A", "B"), Fraction(2)) == Fraction(0)

    def test_key_must_be_single(self):
        with pytest.raises(ValueError):
            grade_ssmc(frozenset({"A", "B"}), resp("A"), Fraction(2))


class TestMsmcExactMatch:
    def test_exact_set_gets_full_points(self):
        assert grade_msmc(
            frozenset({"A", "C"}), "ABCD", resp("A", "C"), Fraction(4)
        ) == Fraction(4)

    def test_any_difference_gets_zero(self):
        for chosen in (resp("A"), resp("A", "C", "D"), resp("B", "D"), resp()):
            assert grade_msmc(frozenset({"A", "C"}), "ABCD", chosen, Fraction(4)) == Fraction(0)

    def test_empty_key_rejected(self):
        with pytest.raises(ValueError):
            grade_msmc(frozenset(), "ABCD", resp("A"), Fraction(4))


class TestMsmcPerOption:
    # key {A, C} over options ABCD at 4 points; oracle counts hand-checked:
    # each option scores iff its chosen/not-chosen state matches the key
    @pytest.mark.parametrize(
        "chosen,expected",
        [
            ((), Fraction(2)),
            (("A",), Fraction(3)),
            (("A", "C"), Fraction(4)),
            (("A", "B"), Fraction(2)),
            (("B", "D"), Fraction(0)),
            (("A", "C", "D"), Fraction(3)),
        ],
    )
    def test_known_values(self, chosen, expected):
        score = grade_msmc(
            frozenset({"A", "C"}), "ABCD", resp(*chosen), Fraction(4), MsmcPolicy.PER_OPTION
        )
        assert score == expected

    def test_requires_declared_options(self):
        with pytest.raises(ValueError):
            grade_msmc(frozenset({"A"}), "", resp("A"), Fraction(4), MsmcPolicy.PER_OPTION)

    def test_fractional_points_stay_exact(self):
        score = grade_msmc(
            frozenset({"A"}), "ABC", resp("A", "B"), Fraction(1), MsmcPolicy.PER_OPTION
        )
        assert score == Fraction(2, 3)


class TestPolicyOrdering:
    def test_exact_never_exceeds_per_option_brute_force(self):
        # every option universe up to 5 options, every key, every response
        for n in range(1, 6):
            options = "ABCDE"[:n]
            for key in subsets(options):
                if not key:
                    continue
                for chosen in subsets(options):
                    response = resp(*chosen)
                    exact = grade_msmc(
                        frozenset(key), options, response, Fraction(7, 3)
                    )
                    partial = grade_msmc(
                        frozenset(key), options, response, Fraction(7, 3), MsmcPolicy.PER_OPTION
                    )
                    assert exact <= partial

    @given(
        st.integers(min_value=1, max_value=5),
        st.data(),
        st.fractions(min_value=Fraction(1, 4), max_value=10, max_denominator=8),
    )
    def test_per_option_full_marks_iff_exact_match(self, n, data, points):
        options = "ABCDE"[:n]
        key = frozenset(data.draw(st.sets(st.sampled_from(options), min_size=1)))
        chosen = frozenset(data.draw(st.sets(st.sampled_from(options))))
        score = grade_msmc(key, options, resp(*chosen), points, MsmcPolicy.PER_OPTION)
        assert (score == points) == (chosen == key)
