"""SplitMix64 generator: frozen reference values and distribution checks."""

import math

import numpy as np
import pytest

from eddyinv.rng import MASK64, Rng, derive_stream

# First three outputs of the published SplitMix64 algorithm from state 0,
# recomputed with an independent transcription before being frozen here.
SM64_FROM_ZERO = (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F)


def test_next_u64_reference_values():
    rng = Rng(0)
    assert tuple(rng.next_u64() for _ in range(3)) == SM64_FROM_ZERO


def test_equal_states_equal_streams():
    a, b = Rng(123456789), Rng(123456789)
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]


def test_clone_does_not_disturb_original():
    a = Rng(5)
    a.next_u64()
    b = a.clone()
    expected = a.clone().next_u64()
    assert b.next_u64() == expected
    assert a.next_u64() == expected


def test_next_unit_first_value_and_range():
    assert Rng(0).next_unit() == 0.8833108082136426
    rng = Rng(987)
    values = [rng.next_unit() for _ in range(10_000)]
    assert all(0.0 <= v < 1.0 for v in values)


def test_next_unit_extremes():
    # (2^64-1 >> 11) * 2^-53 is the largest representable output.
    assert ((2**64 - 1) >> 11) * 2.0**-53 == 0.9999999999999999


def test_gaussian_first_value():
    assert Rng(0).next_gaussian() == -0.4527577402174582


def test_gaussian_moments():
    rng = Rng(2023)
    samples = np.array([rng.next_gaussian() for _ in range(100_000)])
    assert abs(samples.mean()) < 0.02
    assert 0.95 < samples.var() < 1.05


def test_derive_stream_states():
    assert derive_stream(0, 0).state == 0xE220A8397B1DCDAF
    assert derive_stream(42, 0).state == 0xBDD732262FEB6E95
    assert derive_stream(42, 1).state == 0x0FC1BC4C9CEF205D
    assert derive_stream(42, 0).state != derive_stream(42, 1).state


def test_derive_stream_repeatable():
    assert derive_stream(7, 3).state == derive_stream(7, 3).state == 0xD6522DE5292A26EA


def test_derive_stream_no_collisions_up_to_a_million():
    seen = {derive_stream(42, i).state for i in range(1_000_000)}
    assert len(seen) == 1_000_000


def test_state_masked_to_64_bits():
    assert Rng(1 << 70).state == 0
    assert Rng(-1).state == MASK64
