import random

import pytest

from dfeagg.field import FieldMatrix, random_matrix
from dfeagg.groups import mat_vec_group, pairing_row, params_for_curve_id, toy_params

from oracles import matvec_mod


def _backends():
    return ["toy101", "toy", "bls"]


@pytest.fixture(params=_backends())
def params(request):
    return request.getfixturevalue(request.param)


def test_invariants(params):
    import gmpy2
    assert gmpy2.is_prime(params.order_q)
    g1, g2, gt = params.g1, params.g2, params.gt
    assert not g1.eq(params.gen_1, g1.identity())
    assert not g2.eq(params.gen_2, g2.identity())
    assert not gt.eq(params.pairing(params.gen_1, params.gen_2), gt.identity())
    assert params.element_size_bytes == 56


def test_toy_transparent_values(toy101):
    assert toy101.gen_1 == 3 and toy101.gen_2 == 5
    assert toy101.pairing(toy101.gen_1, toy101.gen_2) == 15
    assert toy101.g2.exponent(toy101.g2.encode(42)) == 42


def test_bilinearity(params):
    rng = random.Random(11)
    trials = 100 if params.is_toy else 10
    gt = params.gt
    base = params.pairing(params.gen_1, params.gen_2)
    for _ in range(trials):
        a, b = rng.randrange(1, params.order_q), rng.randrange(1, params.order_q)
        lhs = params.pairing(params.g1.encode(a), params.g2.encode(b))
        assert gt.eq(lhs, gt.scale(base, a * b % params.order_q))


def test_encode_is_homomorphic(params):
    g2 = params.g2
    a, b = 123456789, 987654321
    assert g2.eq(g2.op(g2.encode(a), g2.encode(b)), g2.encode(a + b))
    assert g2.eq(g2.encode(a), g2.scale(params.gen_2, a))
    assert g2.eq(g2.op(g2.encode(a), g2.neg(g2.encode(a))), g2.identity())
    assert g2.eq(g2.encode(params.order_q), g2.identity())


def test_serialization_round_trip(params):
    for grp in (params.g1, params.g2):
        p = grp.encode(31337)
        data = grp.to_bytes(p)
        assert len(data) == grp.wire_size
        assert grp.eq(grp.from_bytes(data), p)


def test_bls_wire_sizes(bls):
    assert (bls.g1.wire_size, bls.g2.wire_size) == (48, 96)


def test_mat_vec_identity_and_zero(params):
    g2 = params.g2
    v = [g2.encode(3), g2.encode(8)]
    out = mat_vec_group(g2, FieldMatrix.identity(2, params.order_q), v)
    assert all(g2.eq(a, b) for a, b in zip(out, v))
    zero = mat_vec_group(g2, FieldMatrix.zeros(2, 2, params.order_q), v)
    assert all(g2.eq(z, g2.identity()) for z in zero)


def test_mat_vec_commutes_with_encoding(params):
    q = params.order_q
    m = random_matrix(3, 3, q, "mv")
    x = [11, 22, 33] if params.is_toy else [random.Random(2).randrange(q) for _ in range(3)]
    encoded = mat_vec_group(params.g2, m, [params.g2.encode(e) for e in x])
    expect = matvec_mod(m.to_rows(), x, q)
    assert all(params.g2.eq(a, params.g2.encode(e)) for a, e in zip(encoded, expect))


def test_pairing_row_examples(params):
    gt = params.gt
    base = params.pairing(params.gen_1, params.gen_2)
    assert gt.eq(pairing_row(params, [1], [params.gen_2]), base)
    assert gt.eq(pairing_row(params, [0, 0], [params.gen_2, params.g2.encode(9)]), gt.identity())
    v = [params.g2.encode(5), params.g2.encode(7)]
    # 2*5 + 3*7 = 31
    assert gt.eq(pairing_row(params, [2, 3], v), gt.scale(base, 31))


def test_curve_id_round_trip(toy101):
    assert params_for_curve_id(toy101.curve_id).order_q == 101
    assert params_for_curve_id("bls12_381").order_q.bit_length() == 255
    assert toy_params(101).fingerprint() == toy101.fingerprint()
