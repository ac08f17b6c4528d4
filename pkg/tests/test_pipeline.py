import inspect
from functools import partial

import numpy as np
import pytest

from fheede import circuits as C, de, homomorphic as H, lwe, pipeline as P
from fheede.pipeline import EncryptedHL, EncryptedPixelPair


def _pair(keys, x, y, rng):
    return EncryptedPixelPair(C.encrypt_byte(keys.pk, x, rng), C.encrypt_byte(keys.pk, y, rng))


def _dec_pair(keys, pair):
    return C.decrypt_byte(keys.sk, pair.cx), C.decrypt_byte(keys.sk, pair.cy)


def _random_available(rng, n, h_max=127):
    out = []
    while len(out) < n:
        x, y = sorted(rng.integers(0, 256, 2).tolist(), reverse=True)
        if de.is_available(x, y, h_max):
            out.append((x, y))
    return out


def test_scramble():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        p, k = rng.integers(0, 2, n), rng.integers(0, 2, n)
        assert np.array_equal(P.descramble(P.scramble(p, k), k), p)
    assert np.array_equal(P.scramble([1, 0, 1], [0, 0, 0]), [1, 0, 1])
    with pytest.raises(ValueError):
        P.scramble([1, 0], [1])


def test_universal_hide_example(toy_keys, ctx):
    rng = np.random.default_rng(1)
    marked = P.fheede_hide_universal(_pair(toy_keys, 7, 5, rng), ctx.encrypt(1), ctx)
    assert _dec_pair(toy_keys, marked) == (9, 4)
    assert _dec_pair(toy_keys, P.fheede_recover_universal(marked, ctx)) == (7, 5)
    assert lwe.dec(toy_keys.sk, P.fheede_extract(marked, ctx)) == 1


def test_universal_hide_zero_on_equal_pixels(toy_keys, ctx):
    rng = np.random.default_rng(2)
    marked = P.fheede_hide_universal(_pair(toy_keys, 90, 90, rng), ctx.encrypt(0), ctx)
    assert _dec_pair(toy_keys, marked) == (90, 90)
    assert _dec_pair(toy_keys, P.fheede_recover_universal(marked, ctx)) == (90, 90)
    assert lwe.dec(toy_keys.sk, P.fheede_extract(marked, ctx)) == 0


def test_literal_sum_overflows_for_bright_pairs(toy_keys, ctx):
    # l = floor((X + Y) / 2) via an 8-bit Add* loses the carry once X + Y > 255
    rng = np.random.default_rng(3)
    x, y = 200, 190
    assert de.is_available(x, y)
    pair = _pair(toy_keys, x, y, rng)
    literal = C.shr1(C.add8(pair.cx, pair.cy, ctx), ctx.encrypt(0))
    assert C.decrypt_byte(toy_keys.sk, literal) == ((x + y) % 256) // 2 != (x + y) // 2
    ch = C.sub8(pair.cx, pair.cy, ctx)
    safe = C.add8(pair.cy, C.shr1(ch, ctx.encrypt(0)), ctx)
    assert C.decrypt_byte(toy_keys.sk, safe) == (x + y) // 2
    marked = P.fheede_hide_universal(pair, ctx.encrypt(1), ctx)
    assert _dec_pair(toy_keys, marked) == de.de_embed(x, y, 1)


def test_universal_commuting_square(toy_keys, ctx):
    rng = np.random.default_rng(4)
    for x, y in _random_available(rng, 50):
        b = int(rng.integers(0, 2))
        marked = P.fheede_hide_universal(_pair(toy_keys, x, y, rng), ctx.encrypt(b), ctx)
        assert _dec_pair(toy_keys, marked) == de.de_embed(x, y, b)
        bit = P.fheede_extract(marked, ctx)
        assert lwe.dec(toy_keys.sk, bit) == b
        assert _dec_pair(toy_keys, P.fheede_recover_universal(marked, ctx)) == (x, y)


def test_universal_circuit_budget(toy_keys, ctx):
    rng = np.random.default_rng(5)
    pair = _pair(toy_keys, 7, 5, rng)
    before = ctx.counters.copy()
    marked = P.fheede_hide_universal(pair, ctx.encrypt(1), ctx)
    hide = ctx.counters - before
    before = ctx.counters.copy()
    P.fheede_recover_universal(marked, ctx)
    recover = ctx.counters - before
    # four Add* and two Sub* to hide, three Add* and two Sub* to recover
    assert (hide.mults, hide.refresh_events) == (6 * 84, 6 * 9)
    assert (recover.mults, recover.refresh_events) == (5 * 84, 5 * 9)


def test_efficient_hide(toy_keys, ctx):
    rng = np.random.default_rng(6)
    for _ in range(50):
        h, l = int(rng.integers(0, 11)), int(rng.integers(20, 230))
        b = int(rng.integers(0, 2))
        hl = EncryptedHL(C.encrypt_byte(toy_keys.pk, h, rng), C.encrypt_byte(toy_keys.pk, l, rng))
        before = ctx.counters.copy()
        out = P.fheede_hide_efficient(hl, ctx.encrypt(b), ctx)
        assert (ctx.counters - before).mults == 84
        assert C.decrypt_byte(toy_keys.sk, out.ch) == 2 * h + b
        assert C.decrypt_byte(toy_keys.sk, out.cl) == l
        assert lwe.dec(toy_keys.sk, P.fheede_extract_efficient(out)) == b
        before = ctx.counters.copy()
        rec = P.fheede_recover_efficient(out, ctx.encrypt(0))
        assert (ctx.counters - before).mults == 0
        assert (C.decrypt_byte(toy_keys.sk, rec.ch), C.decrypt_byte(toy_keys.sk, rec.cl)) == (h, l)


def test_variants_agree(toy_keys, ctx):
    rng = np.random.default_rng(7)
    for x, y in _random_available(rng, 10, h_max=20):
        b = int(rng.integers(0, 2))
        uni = P.fheede_hide_universal(_pair(toy_keys, x, y, rng), ctx.encrypt(b), ctx)
        h, l = de.diff_avg(x, y)
        hl = EncryptedHL(C.encrypt_byte(toy_keys.pk, h, rng), C.encrypt_byte(toy_keys.pk, l, rng))
        eff = P.fheede_hide_efficient(hl, ctx.encrypt(b), ctx)
        via_eff = de.inv_diff_avg(C.decrypt_byte(toy_keys.sk, eff.ch),
                                  C.decrypt_byte(toy_keys.sk, eff.cl))
        assert via_eff == _dec_pair(toy_keys, uni)


def test_kslsb_embed_extract(toy_keys):
    rng = np.random.default_rng(8)
    stats = P.KsLsbStats()
    counters = H.OpCounters()
    for i in range(1000):
        m, b_r = i & 1, int(rng.integers(0, 2))
        c = lwe.enc(toy_keys.pk, m, rng)
        out = P.kslsb_embed(c, b_r, toy_keys.lsb_key, stats=stats, counters=counters)
        assert P.kslsb_extract(out) == b_r == int(out.c[-1]) % 2
        assert lwe.dec(toy_keys.sk, out) == m
    assert counters.keyswitches == sum(stats.counts)
    assert 0.85 <= stats.mean <= 1.15
    assert max(stats.counts) <= P.DEFAULT_CAP


def test_kslsb_cap_on_broken_key(toy_keys, toy):
    dead = H.SwitchingKey(np.zeros_like(toy_keys.lsb_key.B), toy.n, toy.n, toy)
    c = lwe.enc(toy_keys.pk, 1, np.random.default_rng(9))
    target = 1 - P.kslsb_extract(c)
    if target == 0:
        c = H.key_switch(c, toy_keys.lsb_key)
        target = 1
        while P.kslsb_extract(c) != 0:
            c = H.key_switch(c, toy_keys.lsb_key)
    with pytest.raises(P.KsLsbCapError):
        P.kslsb_embed(c, target, dead, cap=5)


def test_server_functions_take_no_secret_key():
    for fn in (P.embed_image, P.extract_ct, P.recover_ct, P.extract_enc,
               P.fheede_hide_universal, P.fheede_recover_universal, P.fheede_extract,
               P.fheede_hide_efficient, P.fheede_recover_efficient, P.kslsb_embed):
        for prm in inspect.signature(fn).parameters.values():
            assert "SecretKey" not in str(prm.annotation), (fn.__name__, prm.name)
            assert prm.name not in ("sk", "secret_key")


@pytest.fixture
def small_store(toy_keys, small_image):
    mask = de.build_map(small_image, 10, target_ec=8)
    rng = np.random.default_rng(10)
    return P.encrypt_image(small_image, mask, P.EFFICIENT, toy_keys.pk, rng), mask


def test_store_roundtrip_and_validation(toy_keys, small_image, small_store):
    store, mask = small_store
    assert store.pair_count == 128 and len(store.marked_indices()) == 8
    assert np.array_equal(P.decrypt_image(store, toy_keys.sk), small_image)
    with pytest.raises(ValueError):
        P.encrypt_image(small_image, mask[:, :4], P.EFFICIENT, toy_keys.pk, None)
    with pytest.raises(ValueError):
        P.encrypt_image(small_image, mask, "fast", toy_keys.pk, None)


def test_empty_payload_and_capacity(toy_keys, ctx, small_store):
    store, _ = small_store
    same = P.embed_image(store, [], [], ctx)
    assert same.embedded == 0 and all(a is b for a, b in zip(same.blocks, store.blocks))
    with pytest.raises(ValueError):
        P.embed_image(store, np.ones(9, np.uint8), np.ones(9, np.uint8), ctx)


def test_odd_width_image(toy_keys, ctx):
    rng = np.random.default_rng(11)
    img = rng.integers(40, 200, (3, 5)).astype(np.uint8)
    mask = de.build_map(img, 127)
    store = P.encrypt_image(img, mask, P.UNIVERSAL, toy_keys.pk, rng)
    assert len(store.extras) == 3
    assert np.array_equal(P.decrypt_image(store, toy_keys.sk), img)


def _factory(keys, seed):
    return H.client_context(keys, np.random.default_rng(seed))


def test_parallel_embedding_matches_serial(toy_keys, small_image, small_store):
    store, mask = small_store
    payload = np.array([1, 0, 1, 1, 0, 0, 1, 0], np.uint8)
    dh = np.array([0, 1, 1, 0, 1, 0, 0, 1], np.uint8)
    serial_ctx = _factory(toy_keys, 1)
    serial = P.embed_image(store, payload, dh, serial_ctx)
    par_ctx = _factory(toy_keys, 1)
    par = P.embed_image(store, payload, dh, par_ctx, jobs=2,
                        ctx_factory=partial(_factory, toy_keys), seed=3)
    expect = de.embed_plain(small_image, mask, payload)
    assert np.array_equal(P.decrypt_image(serial, toy_keys.sk), expect)
    assert np.array_equal(P.decrypt_image(par, toy_keys.sk), expect)
    assert np.array_equal(P.extract_ct(par, dh), payload)
    assert par_ctx.counters.mults == serial_ctx.counters.mults == 8 * 84
    with pytest.raises(ValueError):
        P.embed_image(store, payload, dh, par_ctx, jobs=2)
