"""``fheede`` command-line driver for the client and server roles.

Key directory layout written by ``keygen --out DIR``::

    DIR/client/secret.key      stays with the image owner
    DIR/server/public.key      handed to the server
    DIR/server/tensor.swk
    DIR/server/lsb.swk

Client commands take ``--keys DIR``; server commands take
``--switch-keys DIR/server`` and refuse any secret-key file.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import circuits, de, homomorphic as H, io_serde as io, lwe, params, pipeline
from .refresh_service import PipeRefresher, serve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ROLE = 3
EXIT_FORMAT = 4

SECRET = "secret.key"
PUBLIC = "public.key"
TENSOR = "tensor.swk"
LSB = "lsb.swk"


@dataclass
class RunReport:
    ec: int = 0
    psnr1: float = math.nan
    psnr2: float = math.nan
    psnr3: float = math.nan
    elapsed: dict[str, float] = field(default_factory=dict)
    counters: H.OpCounters = field(default_factory=H.OpCounters)
    lambda_mean: float = math.nan
    lambda_freq: list[float] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"ec={self.ec}", f"psnr1={self.psnr1:.4f}",
               f"psnr2={self.psnr2:.4f}", f"psnr3={self.psnr3:.4f}"]
        out += [f"time.{k}={v:.6f}" for k, v in self.elapsed.items()]
        out += self.counters.report().splitlines()
        out.append(f"lambda_mean={self.lambda_mean:.4f}")
        out += [f"lambda_p{j}={f:.4f}" for j, f in enumerate(self.lambda_freq)]
        return out


def _profile_arg(value: str | None) -> params.ParamProfile:
    return params.resolve_profile(value or os.environ.get("FHEDE_PROFILE", "toy"))


def _find(base: Path, name: str, sub: str) -> Path:
    for cand in (base / name, base / sub / name):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"{name} not found under {base}")


def _client_keys(base) -> tuple[lwe.SecretKey, lwe.PublicKey]:
    base = Path(base)
    sk = io.read_secret_key(_find(base, SECRET, "client"))
    pk = io.read_public_key(_find(base, PUBLIC, "server"), expect=sk.profile)
    return sk, pk


def _refuse_secret(*paths):
    for p in paths:
        p = Path(p)
        files = sorted(p.iterdir()) if p.is_dir() else [p]
        for f in files:
            if f.is_file() and io.peek_magic(f) == io.MAGIC_SK:
                raise io.RoleViolation(f"{f} is a secret-key file; server commands refuse it")


def _server_material(keydir):
    _refuse_secret(keydir)
    keydir = Path(keydir)
    pk = io.read_public_key(keydir / PUBLIC, server_side=True)
    tkey = None
    if (keydir / TENSOR).is_file():
        tkey = io.read_switching_key(keydir / TENSOR, pk.profile, server_side=True)
    lkey = io.read_switching_key(keydir / LSB, pk.profile, server_side=True)
    return pk, tkey, lkey


def _server_ctx_factory(keydir, bootstrapper, seed):
    """Picklable context builder; one bootstrapping service per context."""
    pk, tkey, lkey = _server_material(keydir)
    refresher = PipeRefresher(bootstrapper, pk.profile) if bootstrapper else None
    return H.server_context(pk, tkey, lkey, np.random.default_rng(seed), refresher)


def _close(ctx):
    close = getattr(ctx.refresher, "close", None)
    if close:
        close()


def _write(path, data: bytes):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(data)


def _print_kv(pairs):
    for k, v in pairs:
        print(f"{k}={v}")


# --- client ----------------------------------------------------------------

def cmd_keygen(a):
    p = _profile_arg(a.profile)
    params.check_profile(p)
    rng = np.random.default_rng(a.seed)
    keys = H.generate_keys(p, rng, with_tensor=not a.no_tensor)
    out = Path(a.out)
    _write(out / "client" / SECRET, io.dump_secret_key(keys.sk))
    _write(out / "server" / PUBLIC, io.dump_public_key(keys.pk))
    if keys.tensor_key is not None:
        _write(out / "server" / TENSOR, io.dump_switching_key(keys.tensor_key))
    _write(out / "server" / LSB, io.dump_switching_key(keys.lsb_key))
    for role in ("client", "server"):
        (out / role / "profile.cfg").write_text(params.dumps_profile(p))
    print(f"keys for profile {p.name} written to {out}")


def cmd_de_analyze(a):
    img = io.read_pgm(a.image)
    res = de.analyze(img, a.hfid, a.target_ec, np.random.default_rng(a.seed))
    if a.map_out:
        _write(a.map_out, io.dump_map(res["map"]))
    _print_kv([("h_fid", a.hfid), ("ec", res["ec"]), ("er", f"{res['er']:.4f}"),
               ("psnr1", f"{res['psnr1']:.4f}"), ("psnr2", f"{res['psnr2']:.4f}"),
               ("extracted_ok", res["extracted_ok"])])


def cmd_make_payload(a):
    if a.text is not None:
        bits = np.unpackbits(np.frombuffer(a.text.encode(), np.uint8), bitorder="little")
    else:
        if a.length is None:
            raise ValueError("give --length or --text")
        bits = np.random.default_rng(a.seed).integers(0, 2, a.length, dtype=np.uint8)
    _write(a.out, io.dump_bits(bits))
    print(f"{len(bits)} payload bits written to {a.out}")


def cmd_encrypt(a):
    sk, pk = _client_keys(a.keys)
    img = io.read_pgm(a.image)
    mask = io.read_map(a.map)
    store = pipeline.encrypt_image(img, mask, a.mode, pk, np.random.default_rng(a.seed))
    _write(a.out, io.dump_store(store))
    print(f"encrypted {store.pair_count} pairs ({len(store.marked_indices())} marked)")


def cmd_decrypt(a):
    sk, _ = _client_keys(a.keys)
    store = io.read_store(a.store, expect=sk.profile)
    io.write_pgm(pipeline.decrypt_image(store, sk), a.out)
    print(f"decrypted image written to {a.out}")


def cmd_decrypt_bits(a):
    sk, _ = _client_keys(a.keys)
    cts, _ = io.load_bits_ct(Path(a.encbits).read_bytes(), expect=sk.profile)
    _write(a.out, io.dump_bits([lwe.dec(sk, c) for c in cts]))
    print(f"{len(cts)} bits written to {a.out}")


def cmd_de_extract(a):
    img = io.read_pgm(a.image)
    _write(a.out, io.dump_bits(de.extract_plain(img, io.read_map(a.map), a.count)))


def cmd_de_recover(a):
    img = io.read_pgm(a.image)
    io.write_pgm(de.recover_plain(img, io.read_map(a.map), a.count), a.out)


def cmd_bootstrap_serve(a):
    sk, pk = _client_keys(a.keys)
    refresher = H.TrustedRefresher(sk, pk, np.random.default_rng(a.seed))
    serve(refresher, sk.profile)


# --- server ----------------------------------------------------------------

def cmd_dh_keygen(a):
    key = pipeline.generate_dh_key(a.length, np.random.default_rng(a.seed))
    _write(a.out, io.dump_bits(key))
    print(f"{a.length}-bit data-hiding key written to {a.out}")


def _run_server(a, inputs, body):
    _refuse_secret(*inputs)
    factory = partial(_server_ctx_factory, a.switch_keys, a.bootstrapper)
    ctx = factory(a.seed)
    try:
        return body(ctx, factory)
    finally:
        _close(ctx)
        if a.counters:
            sys.stdout.write(ctx.counters.report())


def cmd_embed(a):
    _refuse_secret(a.payload, a.dh_key)
    payload = io.read_bits(a.payload)
    dh_key = io.read_bits(a.dh_key)
    if len(dh_key) < len(payload):
        raise ValueError(f"data-hiding key has {len(dh_key)} bits, payload {len(payload)}")

    def body(ctx, factory):
        store = io.read_store(a.store, expect=ctx.profile, server_side=True)
        stats = pipeline.KsLsbStats()
        marked = pipeline.embed_image(store, payload, dh_key[:len(payload)], ctx,
                                      a.cap, stats, a.jobs, factory, a.seed)
        _write(a.out, io.dump_store(marked))
        print(f"embedded {len(payload)} bits; mean key switches per bit {stats.mean:.3f}")

    _run_server(a, [a.store, a.payload, a.dh_key], body)


def cmd_extract_ct(a):
    _refuse_secret(a.marked, a.dh_key)
    store = io.read_store(a.marked, server_side=True)
    dh_key = io.read_bits(a.dh_key)
    if len(dh_key) < store.embedded:
        raise ValueError(f"data-hiding key has {len(dh_key)} bits, store carries {store.embedded}")
    bits = pipeline.extract_ct(store, dh_key[:store.embedded])
    _write(a.out, io.dump_bits(bits))
    print(f"extracted {len(bits)} bits")


def cmd_recover_ct(a):
    def body(ctx, factory):
        store = io.read_store(a.marked, expect=ctx.profile, server_side=True)
        _write(a.out, io.dump_store(pipeline.recover_ct(store, ctx, a.jobs, factory, a.seed)))
        print(f"recovered {store.embedded} pairs")

    _run_server(a, [a.marked], body)


def cmd_extract_enc(a):
    def body(ctx, factory):
        store = io.read_store(a.marked, expect=ctx.profile, server_side=True)
        cts = pipeline.extract_enc(store, ctx, a.jobs, factory, a.seed)
        _write(a.out, io.dump_bits_ct(cts, ctx.profile))
        print(f"{len(cts)} encrypted bits written to {a.out}")

    _run_server(a, [a.marked], body)


# --- measurement -----------------------------------------------------------

def _timed(fn, repeat: int) -> float:
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def cmd_bench(a):
    p = _profile_arg(a.profile)
    rng = np.random.default_rng(a.seed)
    t0 = time.perf_counter()
    sk = lwe.skgen(p, rng)
    pk = lwe.pkgen(p, sk, rng)
    lkey = H.switch_kgen(sk.s, sk, p, rng)
    keygen = time.perf_counter() - t0
    ct = lwe.enc(pk, 1, rng)
    ref = H.TrustedRefresher(sk, pk, rng)
    rows = [
        ("keygen_pk_and_lsb_key", keygen),
        ("encrypt_bit", _timed(lambda: lwe.enc(pk, 1, rng), a.repeat)),
        ("decrypt_bit", _timed(lambda: lwe.dec(sk, ct), a.repeat)),
        ("key_switch", _timed(lambda: H.key_switch(ct, lkey), a.repeat)),
        ("refresh", _timed(lambda: ref.refresh(ct), a.repeat)),
    ]
    print(f"profile={p.name} n={p.n} q={p.q} d={p.d}")
    for name, secs in rows:
        print(f"{name:24s} {secs * 1e3:12.3f} ms")


def cmd_report(a):
    p = _profile_arg(a.profile)
    rng = np.random.default_rng(a.seed)
    keys = H.generate_keys(p, rng)
    ctx = H.client_context(keys, rng)
    x, y = sorted(rng.integers(0, 256, 2).tolist(), reverse=True)
    cx = circuits.encrypt_byte(keys.pk, x, rng)
    cy = circuits.encrypt_byte(keys.pk, y, rng)
    expected = {"mults": 84, "keyswitches": 84, "refresh_events": 9, "pk_consumed": 93}
    for name, fn, want in (("add8", circuits.add8, (x + y) % 256),
                           ("sub8", circuits.sub8, x - y)):
        before = ctx.counters.copy()
        got = circuits.decrypt_byte(keys.sk, fn(cx, cy, ctx))
        delta = ctx.counters - before
        print(f"{name}.result_ok={int(got == want)}")
        for k, v in vars(delta).items():
            tail = f" expected={expected[k]}" if k in expected else ""
            print(f"{name}.{k}={v}{tail}")
        print(f"{name}.adds_table_formula={circuits.table_addition_count(name)}")
    print(f"security_dimension={params.security_dimension_estimate(p):.1f}")


def cmd_run(a):
    """Whole pipeline in one process, simulated refresher; prints a RunReport."""
    p = _profile_arg(a.profile)
    rng = np.random.default_rng(a.seed)
    img = io.read_pgm(a.image)
    rep = RunReport()
    t = time.perf_counter()
    keys = H.generate_keys(p, rng)
    rep.elapsed["keygen"] = time.perf_counter() - t
    mask = de.build_map(img, a.hfid, a.target_ec)
    rep.ec = int(mask.sum())
    payload = rng.integers(0, 2, rep.ec, dtype=np.uint8)
    dh_key = pipeline.generate_dh_key(rep.ec, rng)
    ctx = H.client_context(keys, rng)
    t = time.perf_counter()
    store = pipeline.encrypt_image(img, mask, a.mode, keys.pk, rng)
    rep.elapsed["encrypt"] = time.perf_counter() - t
    stats = pipeline.KsLsbStats()
    t = time.perf_counter()
    marked = pipeline.embed_image(store, payload, dh_key, ctx, stats=stats)
    rep.elapsed["embed"] = time.perf_counter() - t
    ok = np.array_equal(pipeline.extract_ct(marked, dh_key), payload)
    t = time.perf_counter()
    rec = pipeline.recover_ct(marked, ctx)
    rep.elapsed["recover"] = time.perf_counter() - t
    marked_img = pipeline.decrypt_image(marked, keys.sk)
    rep.psnr1 = de.psnr(img, marked_img)
    rep.psnr2 = de.psnr(img, de.recover_plain(marked_img, mask))
    rep.psnr3 = de.psnr(img, pipeline.decrypt_image(rec, keys.sk))
    rep.counters = ctx.counters
    rep.lambda_mean = stats.mean
    rep.lambda_freq = stats.frequencies(5).tolist()
    print("\n".join(rep.lines()))
    print(f"extraction_ok={int(ok)}")


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fheede", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--seed", type=int, default=0)
        return sp

    def server(sp):
        sp.add_argument("--switch-keys", required=True, metavar="DIR")
        sp.add_argument("--bootstrapper", metavar="CMD",
                        help="command that starts the external refresh service")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--counters", action="store_true", help="print operation counters")

    sp = cmd("keygen", cmd_keygen, "generate all keys")
    sp.add_argument("--profile")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-tensor", action="store_true",
                    help="skip the s(x)s switching key (no homomorphic AND)")

    sp = cmd("de-analyze", cmd_de_analyze, "plaintext DE capacity and PSNR")
    sp.add_argument("image")
    sp.add_argument("--hfid", type=int, required=True)
    sp.add_argument("--target-ec", type=int)
    sp.add_argument("--map-out")

    sp = cmd("make-payload", cmd_make_payload, "write a payload bit file")
    sp.add_argument("--length", type=int)
    sp.add_argument("--text")
    sp.add_argument("--out", required=True)

    sp = cmd("encrypt", cmd_encrypt, "client: encrypt an image")
    sp.add_argument("image")
    sp.add_argument("--mode", choices=pipeline.MODES, default=pipeline.UNIVERSAL)
    sp.add_argument("--keys", required=True)
    sp.add_argument("--map", required=True)
    sp.add_argument("--out", required=True)

    sp = cmd("decrypt", cmd_decrypt, "client: decrypt a ciphertext store")
    sp.add_argument("store")
    sp.add_argument("--keys", required=True)
    sp.add_argument("--out", required=True)

    sp = cmd("decrypt-bits", cmd_decrypt_bits, "client: decrypt extracted bit ciphertexts")
    sp.add_argument("encbits")
    sp.add_argument("--keys", required=True)
    sp.add_argument("--out", required=True)

    for name, fn in (("de-extract", cmd_de_extract), ("de-recover", cmd_de_recover)):
        sp = cmd(name, fn, f"client: plaintext {name[3:]}")
        sp.add_argument("image")
        sp.add_argument("--map", required=True)
        sp.add_argument("--count", type=int)
        sp.add_argument("--out", required=True)

    sp = cmd("bootstrap-serve", cmd_bootstrap_serve,
             "simulated refresh service over stdin/stdout (holds the secret key)")
    sp.add_argument("--keys", required=True)

    sp = cmd("dh-keygen", cmd_dh_keygen, "server: random data-hiding key")
    sp.add_argument("--length", type=int, required=True)
    sp.add_argument("--out", required=True)

    sp = cmd("embed", cmd_embed, "server: hide a payload in a ciphertext store")
    sp.add_argument("store")
    sp.add_argument("--payload", required=True)
    sp.add_argument("--dh-key", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--cap", type=int, default=pipeline.DEFAULT_CAP)
    server(sp)

    sp = cmd("extract-ct", cmd_extract_ct, "server: read the payload without keys")
    sp.add_argument("marked")
    sp.add_argument("--dh-key", required=True)
    sp.add_argument("--out", required=True)

    sp = cmd("recover-ct", cmd_recover_ct, "server: ciphertexts of the original image")
    sp.add_argument("marked")
    sp.add_argument("--out", required=True)
    server(sp)

    sp = cmd("extract-enc", cmd_extract_enc, "server: encryptions of the payload bits")
    sp.add_argument("marked")
    sp.add_argument("--out", required=True)
    server(sp)

    sp = cmd("bench", cmd_bench, "per-operation timings")
    sp.add_argument("--profile")
    sp.add_argument("--repeat", type=int, default=20)

    sp = cmd("report", cmd_report, "operation counters of one Add* and one Sub*")
    sp.add_argument("--profile")

    sp = cmd("run", cmd_run, "whole pipeline in one process with a RunReport")
    sp.add_argument("image")
    sp.add_argument("--profile")
    sp.add_argument("--mode", choices=pipeline.MODES, default=pipeline.UNIVERSAL)
    sp.add_argument("--hfid", type=int, default=10)
    sp.add_argument("--target-ec", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except io.RoleViolation as exc:
        print(f"role violation: {exc}", file=sys.stderr)
        return EXIT_ROLE
    except (io.FormatError, de.MapFormatError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
