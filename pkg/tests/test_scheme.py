import random

import pytest
from hypothesis import given, settings, strategies as st

from dfeagg.errors import (
    DimensionMismatchError,
    DlogNotFoundError,
    DuplicateClientError,
    ParticipantMismatchError,
    QuantizationRangeError,
    UnknownClientError,
    UnsupportedSecurityLevel,
)
from dfeagg.field import FieldMatrix
from dfeagg.groups import toy_params
from dfeagg.quantizer import QuantScheme, quantize
from dfeagg.scheme import (
    ClientKey,
    MasterSecret,
    aggregate_decrypt,
    apply_aggregation_key,
    derive_lambda,
    derive_round_unmask,
    encrypt,
    keygen_aggregator,
    keygen_client,
    padded_length,
    setup,
)

from oracles import matmul_mod, matvec_mod


def identity_master(n, params):
    q = params.order_q
    eye = FieldMatrix.identity(n, q)
    return MasterSecret(eye, eye, eye, n, b"mask-seed", b"key-seed", params.curve_id)


def issue(ms, k):
    return [keygen_client(ms, f"msms-{i + 1}") for i in range(k)]


def test_setup_invertible_and_deterministic(toy):
    _, ms = setup(128, 4, "s", params=toy)
    assert all(m.is_invertible() for m in (ms.b_mat, ms.a1_mat, ms.a2_mat))
    _, again = setup(128, 4, "s", params=toy)
    assert (ms.b_mat, ms.a1_mat, ms.a2_mat, ms.round_mask_seed) == (
        again.b_mat, again.a1_mat, again.a2_mat, again.round_mask_seed)
    _, other = setup(128, 4, "t", params=toy)
    assert other.b_mat != ms.b_mat


def test_security_level_above_curve_rejected():
    with pytest.raises(UnsupportedSecurityLevel):
        setup(192, 4)
    with pytest.raises(DimensionMismatchError):
        setup(128, 0)


def test_cancellation_identity_real_curve_n16(bls):
    _, ms = setup(128, 16, "n16", params=bls)
    ak = keygen_aggregator(ms)
    eye = FieldMatrix.identity(16, ms.q)
    for ck in issue(ms, 5):
        assert ak.ak1 @ ck.sk1 + ak.ak2 @ ck.sk2 == eye
        assert ms.a1_mat @ ck.sk1 + ms.a2_mat @ ck.sk2 == ms.b_inv


def test_toy_q101_key_oracle(toy101):
    q = 101
    _, ms = setup(128, 2, "toy", params=toy101)
    ck = keygen_client(ms, "msms-1")
    b_p = matmul_mod(ms.a1_mat.to_rows(), ck.sk1.to_rows(), q)
    b_pp = matmul_mod(ms.a2_mat.to_rows(), ck.sk2.to_rows(), q)
    b_inv_sum = [[(x + y) % q for x, y in zip(r1, r2)] for r1, r2 in zip(b_p, b_pp)]
    assert matmul_mod(ms.b_mat.to_rows(), b_inv_sum, q) == [[1, 0], [0, 1]]
    ak = keygen_aggregator(ms)
    lhs = [[(x + y) % q for x, y in zip(r1, r2)] for r1, r2 in zip(
        matmul_mod(ak.ak1.to_rows(), ck.sk1.to_rows(), q), matmul_mod(ak.ak2.to_rows(), ck.sk2.to_rows(), q))]
    assert lhs == [[1, 0], [0, 1]]


def test_identity_master_gives_identity_aggregation_key(toy101):
    ms = identity_master(3, toy101)
    ak = keygen_aggregator(ms)
    assert ak.ak1 == ak.ak2 == FieldMatrix.identity(3, 101)


def test_client_keys_fresh_and_unique(toy):
    _, ms = setup(128, 4, "u", params=toy)
    a, b = issue(ms, 2)
    assert a.sk1 != b.sk1 and a.mask_seed != b.mask_seed
    with pytest.raises(DuplicateClientError):
        keygen_client(ms, "msms-1")


def test_lambda_determinism_and_freshness(toy):
    _, ms = setup(128, 4, "l", params=toy)
    ck = keygen_client(ms, "msms-1")
    assert derive_lambda(ck, 3, 32) == derive_lambda(ck, 3, 32)
    assert derive_lambda(ck, 3, 32) != derive_lambda(ck, 4, 32)
    # the KDC derives the same vector the client does
    assert derive_lambda(ms, 3, 32, client_id="msms-1") == derive_lambda(ck, 3, 32)


def test_round_unmask_is_sum_of_client_masks(toy101):
    _, ms = setup(128, 2, "m", params=toy101)
    cks = issue(ms, 3)
    lams = [derive_lambda(ck, 1, 8) for ck in cks]
    u12 = derive_round_unmask(ms, 1, ["msms-1", "msms-2"], 8)
    assert list(u12.lambda_sum) == [(a + b) % 101 for a, b in zip(lams[0], lams[1])]
    u_all = derive_round_unmask(ms, 1, [ck.client_id for ck in cks], 8)
    assert list(u_all.lambda_sum) == [sum(col) % 101 for col in zip(*lams)]
    single = derive_round_unmask(ms, 1, ["msms-3"], 8)
    assert list(single.lambda_sum) == lams[2]
    u3 = derive_round_unmask(ms, 1, ["msms-3"], 8)
    assert list(u_all.lambda_sum) == [(a + b) % 101 for a, b in zip(u12.lambda_sum, u3.lambda_sum)]
    with pytest.raises(UnknownClientError):
        derive_round_unmask(ms, 1, ["msms-9"], 8)


def test_encrypt_identity_key_exponents(toy101):
    eye = FieldMatrix.identity(2, 101)
    ck = ClientKey("c", eye, eye, b"seed", toy101.curve_id)
    cv = encrypt(toy101, ck, [5, 7], 1)
    lam = derive_lambda(ck, 1, 2)
    half1 = [toy101.g2.exponent(e) for e in cv.chunks[0][0]]
    assert [(h - l) % 101 for h, l in zip(half1, lam)] == [5, 7]


def test_encrypt_matches_matrix_oracle(toy101):
    _, ms = setup(128, 4, "enc", params=toy101)
    ck = keygen_client(ms, "msms-1")
    values = [3, 1, 4, 1, 5, 9]
    cv = encrypt(toy101, ck, values, 2)
    assert cv.n_chunks == 2 and cv.padded_len == 6 and cv.total_len == 8
    lam = derive_lambda(ck, 2, 8)
    w_hat = [(v + l) % 101 for v, l in zip(values + [0, 0], lam)]
    for c in range(2):
        chunk = w_hat[4 * c:4 * c + 4]
        h1, h2 = cv.chunks[c]
        assert [toy101.g2.exponent(e) for e in h1] == matvec_mod(ck.sk1.to_rows(), chunk, 101)
        assert [toy101.g2.exponent(e) for e in h2] == matvec_mod(ck.sk2.to_rows(), chunk, 101)


def test_encrypt_rejects_out_of_range(toy):
    _, ms = setup(128, 2, "r", params=toy)
    ck = keygen_client(ms, "msms-1")
    with pytest.raises(QuantizationRangeError):
        encrypt(toy, ck, [-1, 2], 1)
    with pytest.raises(DimensionMismatchError):
        encrypt(toy, ck, [], 1)


def _round(params, n, k, values_per_client, t=1, seed="agg"):
    _, ms = setup(128, n, seed, params=params)
    cks = issue(ms, k)
    ak = keygen_aggregator(ms)
    d = len(values_per_client[0])
    ciphers = [encrypt(params, ck, v, t) for ck, v in zip(cks, values_per_client)]
    unmask = derive_round_unmask(ms, t, [ck.client_id for ck in cks], padded_length(d, n))
    return ms, cks, ak, ciphers, unmask


@pytest.mark.parametrize("path", ["pairing", "fast"])
def test_single_client_identity_master(toy, path):
    ms = identity_master(4, toy)
    ck = keygen_client(ms, "msms-1")
    ak = keygen_aggregator(ms)
    cv = encrypt(toy, ck, [9, 8, 7], 1)
    out = aggregate_decrypt(toy, ak, derive_round_unmask(ms, 1, ["msms-1"], 4), [cv], 2 ** 8, path=path)
    assert out.values == (9, 8, 7)


@pytest.mark.parametrize("path", ["pairing", "fast"])
def test_three_clients_n4(toy, path):
    rng = random.Random(3)
    values = [[rng.randrange(2 ** 8) for _ in range(10)] for _ in range(3)]
    _, _, ak, ciphers, unmask = _round(toy, 4, 3, values)
    out = aggregate_decrypt(toy, ak, unmask, ciphers, 3 * 2 ** 8, path=path)
    assert list(out.values) == [sum(col) for col in zip(*values)]


def test_real_curve_two_clients_both_paths(bls):
    values = [[1, 2, 3, 250], [255, 0, 17, 4]]
    _, _, ak, ciphers, unmask = _round(bls, 2, 2, values, seed="bls")
    expect = tuple(sum(col) for col in zip(*values))
    assert aggregate_decrypt(bls, ak, unmask, ciphers, 2 ** 9, path="pairing").values == expect
    assert aggregate_decrypt(bls, ak, unmask, ciphers, 2 ** 9, path="fast").values == expect


def test_participant_mismatch_refused(toy):
    values = [[1, 2], [3, 4], [5, 6]]
    ms, cks, ak, ciphers, _ = _round(toy, 2, 3, values)
    wrong = derive_round_unmask(ms, 1, ["msms-1", "msms-2"], 2)
    sent = [ciphers[0], ciphers[2]]
    with pytest.raises(ParticipantMismatchError):
        aggregate_decrypt(toy, ak, wrong, sent, 2 ** 9)
    # with the guard off the masks do not cancel and the search runs off the end
    with pytest.raises(DlogNotFoundError):
        aggregate_decrypt(toy, ak, wrong, sent, 2 ** 9, check_participants=False)
    with pytest.raises(ParticipantMismatchError):
        aggregate_decrypt(toy, ak, derive_round_unmask(ms, 1, ["msms-1"], 2), [ciphers[0], ciphers[0]], 2 ** 9)
    with pytest.raises(ParticipantMismatchError):
        aggregate_decrypt(toy, ak, derive_round_unmask(ms, 2, ["msms-1"], 2), [ciphers[0]], 2 ** 9)


def test_mixed_rounds_rejected(toy):
    _, ms = setup(128, 2, "mr", params=toy)
    a, b = issue(ms, 2)
    ak = keygen_aggregator(ms)
    ciphers = [encrypt(toy, a, [1, 2], 1), encrypt(toy, b, [1, 2], 2)]
    with pytest.raises(DimensionMismatchError):
        aggregate_decrypt(toy, ak, derive_round_unmask(ms, 1, ["msms-1", "msms-2"], 2), ciphers, 2 ** 9)


def test_aggregate_independent_of_mask_seeds(toy):
    values = [[10, 20, 30], [1, 2, 3]]
    outs = []
    for seed in ("mask-a", "mask-b"):
        _, _, ak, ciphers, unmask = _round(toy, 2, 2, values, seed=seed)
        outs.append(aggregate_decrypt(toy, ak, unmask, ciphers, 2 ** 9).values)
    assert outs[0] == outs[1] == (11, 22, 33)


def test_single_ciphertext_under_aggregation_key_stays_masked(toy):
    # key isolation: ak on one ciphertext yields w + lambda, never w
    values = [[5, 6, 7, 8]]
    _, cks, ak, ciphers, _ = _round(toy, 4, 1, values)
    recovered = [toy.g2.exponent(e) for e in apply_aggregation_key(toy, ak, ciphers)]
    lam = derive_lambda(cks[0], 1, 4)
    assert recovered == [(v + l) % toy.order_q for v, l in zip(values[0], lam)]
    assert recovered != values[0]


def test_collusion_residual_identity(toy):
    # with every other client's input known, the victim's input follows from the aggregate
    rng = random.Random(9)
    values = [[rng.randrange(256) for _ in range(5)] for _ in range(4)]
    _, _, ak, ciphers, unmask = _round(toy, 2, 4, values)
    agg = aggregate_decrypt(toy, ak, unmask, ciphers, 4 * 256).values
    known = [sum(col) for col in zip(*values[1:])]
    assert [a - k for a, k in zip(agg, known)] == values[0]


def test_quantized_vector_input(toy):
    s = QuantScheme(bits_b=8, delta=0.1)
    qs = [quantize([0.5, -0.5, 1.0], s), quantize([0.2, 0.3, -1.0], s)]
    _, _, ak, ciphers, unmask = _round(toy, 2, 2, [q.values for q in qs])
    out = aggregate_decrypt(toy, ak, unmask, ciphers, s.bound_for(2), scheme=s)
    assert out.values == tuple(a + b for a, b in zip(qs[0].values, qs[1].values))
    assert out.participant_count_at_encode == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 9), st.integers(0, 2 ** 30))
def test_property_exact_sum_both_paths(n, k, d, seed):
    params = toy_params()
    rng = random.Random(seed)
    values = [[rng.randrange(2 ** 8) for _ in range(d)] for _ in range(k)]
    _, _, ak, ciphers, unmask = _round(params, n, k, values, seed=seed)
    want = tuple(sum(col) for col in zip(*values))
    bound = k * 2 ** 8
    assert aggregate_decrypt(params, ak, unmask, ciphers, bound, path="pairing").values == want
    assert aggregate_decrypt(params, ak, unmask, ciphers, bound, path="fast").values == want
