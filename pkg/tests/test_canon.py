"""Canonical serialization and exact-rational helpers."""

import json
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradeloop.canon import canonical_bytes, canonical_json, ceil_mul, frac_from_str, frac_to_str, payload_hash


class TestCanonicalJson:
    def test_keys_sorted_and_compact(self):
        doc = {"b": [1, 2], "a": "x", "nested": {"z": None, "y": "π"}}
        assert canonical_json(doc) == '{"a":"x","b":[1,2],"nested":{"y":"π","z":null}}'

    def test_bytes_are_utf8(self):
        assert canonical_bytes({"k": "π"}) == '{"k":"π"}'.encode("utf-8")

    def test_insertion_order_does_not_matter(self):
        a = {"x": 1, "y": 2}
        b = {"y": 2, "x": 1}
        assert canonical_bytes(a) == canonical_bytes(b)

    def test_payload_hash_frozen_value(self):
        # sha256 computed independently over the canonical byte form
        doc = {"b": [1, 2], "a": "x", "nested": {"z": None, "y": "π"}}
        assert payload_hash(doc) == (
            "4344edf8e0ee25174c61a6295ebb20ef65a7ae2f2613ce761bf957f4e17dcad5"
        )

    def test_hash_differs_when_content_differs(self):
        assert payload_hash({"a": 1}) != payload_hash({"a": 2})


class TestFractionStrings:
    @pytest.mark.parametrize(
        "value,rendered",
        [
            (Fraction(3), "3"),
            (Fraction(-7), "-7"),
            (Fraction(0), "0"),
            (Fraction(1, 2), "1/2"),
            (Fraction(-9, 4), "-9/4"),
            (Fraction(10, 5), "2"),
        ],
    )
    def test_known_renderings(self, value, rendered):
        assert frac_to_str(value) == rendered
        assert frac_from_str(rendered) == value

    def test_accepts_plain_int(self):
        assert frac_from_str(4) == Fraction(4)

    @given(st.fractions())
    def test_round_trip(self, value):
        assert frac_from_str(frac_to_str(value)) == value

    def test_canonical_json_never_needed_for_fractions(self):
        # scores travel as strings; json must not see Fraction objects
        with pytest.raises(TypeError):
            json.dumps(Fraction(1, 3))


class TestCeilMul:
    @pytest.mark.parametrize(
        "fraction,count,expected",
        [
            (Fraction(1, 20), 41, 3),
            (Fraction(1, 20), 40, 2),
            (Fraction(1, 3), 7, 3),
            (Fraction(0), 9, 0),
            (Fraction(1), 9, 9),
        ],
    )
    def test_known_values(self, fraction, count, expected):
        assert ceil_mul(fraction, count) == expected

    @given(
        st.fractions(min_value=0, max_value=1),
        st.integers(min_value=0, max_value=100_000),
    )
    def test_matches_math_ceil(self, fraction, count):
        assert ceil_mul(fraction, count) == math.ceil(fraction * count)
